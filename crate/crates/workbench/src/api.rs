//! JSON HTTP API used by the annotation UI.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use emocap_core::caption::{CaptionEngine, CaptionVariant, Sentence};
use emocap_core::gateway::{BackendConfig, MockTranscript};
use emocap_core::scene::{Judgment, Resolution, SceneAnnotation, Violation};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::error::WorkbenchError;
use crate::experiment::{run_experiment, ExperimentOptions};
use crate::store::ProjectStore;

pub type AppState = Arc<ProjectStore>;

impl IntoResponse for WorkbenchError {
    fn into_response(self) -> Response {
        let status = match &self {
            WorkbenchError::InvalidScene(_) => StatusCode::UNPROCESSABLE_ENTITY,
            WorkbenchError::RevisionConflict { .. } => StatusCode::CONFLICT,
            WorkbenchError::NotFound(_) => StatusCode::NOT_FOUND,
            WorkbenchError::BadRequest(_)
            | WorkbenchError::AmbiguousPrompt { .. }
            | WorkbenchError::Resolve(_)
            | WorkbenchError::Caption(_)
            | WorkbenchError::Prompt(_) => StatusCode::BAD_REQUEST,
            WorkbenchError::Gateway(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let violations: &[Violation] = match &self {
            WorkbenchError::InvalidScene(v) => v,
            WorkbenchError::Caption(emocap_core::caption::CaptionError::InvalidScene(v)) => v,
            _ => &[],
        };
        let status = if violations.is_empty() { status } else { StatusCode::UNPROCESSABLE_ENTITY };
        if status.is_server_error() {
            log::error!("{self}");
        }
        let body = json!({ "error": self.to_string(), "violations": violations });
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Deserialize)]
pub struct PreviewQuery {
    #[serde(default)]
    pub variant: Option<String>,
    #[serde(default)]
    pub person: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PreviewResponse {
    pub scene_id: String,
    pub person_key: String,
    pub variant: CaptionVariant,
    pub text: String,
    pub sentences: Vec<Sentence>,
    pub name_assignment: std::collections::BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
pub struct JudgmentPair {
    pub judgments: [Judgment; 2],
}

#[derive(Debug, Deserialize)]
pub struct ExperimentRequest {
    pub variant: CaptionVariant,
    #[serde(default)]
    pub backend: Option<BackendConfig>,
    #[serde(default)]
    pub repeats: Option<u32>,
    #[serde(default)]
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub mock: Option<MockTranscript>,
}

fn variant_param(raw: Option<&str>) -> Result<CaptionVariant, WorkbenchError> {
    match raw {
        None | Some("") => Ok(CaptionVariant::Full),
        Some(v) => v.parse().map_err(WorkbenchError::BadRequest),
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, WorkbenchError> + Send + 'static,
) -> Result<T, WorkbenchError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| WorkbenchError::BadRequest(format!("worker failed: {e}")))?
}

async fn list_scenes(State(store): State<AppState>) -> Result<Json<Vec<SceneAnnotation>>, WorkbenchError> {
    Ok(Json(blocking(move || store.scenes()).await?))
}

async fn get_scene(
    State(store): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SceneAnnotation>, WorkbenchError> {
    let scene = blocking(move || store.scene(&id).map(|s| (s, id))).await?;
    match scene {
        (Some(s), _) => Ok(Json(s)),
        (None, id) => Err(WorkbenchError::NotFound(format!("scene `{id}`"))),
    }
}

async fn put_scene(
    State(store): State<AppState>,
    Json(scene): Json<SceneAnnotation>,
) -> Result<Json<SceneAnnotation>, WorkbenchError> {
    Ok(Json(blocking(move || store.put_scene(scene)).await?))
}

/// Renders an unsaved form state through the same engine as batch rendering.
async fn preview(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<PreviewQuery>,
    Json(mut scene): Json<SceneAnnotation>,
) -> Result<Json<PreviewResponse>, WorkbenchError> {
    let variant = variant_param(query.variant.as_deref())?;
    scene.scene_id = id;
    let person_key = match query.person {
        Some(p) if !p.is_empty() => p,
        _ => scene
            .persons
            .first()
            .map(|p| p.person_key.clone())
            .ok_or_else(|| WorkbenchError::BadRequest("scene has no persons".into()))?,
    };
    let engine = CaptionEngine::new(store.lexicon(), &store.manifest().name_pool);
    let (sentences, names) = engine.sentences(&scene, &person_key, variant)?;
    let caption = engine.render(&scene, &person_key, variant)?;
    Ok(Json(PreviewResponse {
        scene_id: scene.scene_id,
        person_key,
        variant,
        text: caption.text,
        sentences,
        name_assignment: names.persons,
    }))
}

async fn ground_truth(
    State(store): State<AppState>,
    Json(pair): Json<JudgmentPair>,
) -> Result<Json<Resolution>, WorkbenchError> {
    let [a, b] = pair.judgments;
    Ok(Json(blocking(move || store.record_judgments(&a, &b)).await?))
}

async fn experiments(
    State(store): State<AppState>,
    Json(req): Json<ExperimentRequest>,
) -> Result<Json<serde_json::Value>, WorkbenchError> {
    let outcome = blocking(move || {
        let mut options = ExperimentOptions::from_manifest(&store, req.variant);
        if let Some(b) = req.backend {
            options.backend = b;
        }
        if let Some(r) = req.repeats {
            options.repeats = r;
        }
        if let Some(p) = req.parallelism {
            options.parallelism = p;
        }
        options.mock = req.mock;
        run_experiment(&store, &options)
    })
    .await?;
    Ok(Json(json!({
        "report": outcome.report,
        "baselines": outcome.baselines,
        "completions_consumed": outcome.completions_consumed,
    })))
}

async fn report(
    State(store): State<AppState>,
    Path(variant): Path<String>,
) -> Result<Json<emocap_core::evaluation::EvaluationReport>, WorkbenchError> {
    let variant = variant_param(Some(&variant))?;
    blocking(move || store.report(variant))
        .await?
        .map(Json)
        .ok_or_else(|| WorkbenchError::NotFound(format!("report for {variant}")))
}

async fn lexicon(State(store): State<AppState>) -> Json<serde_json::Value> {
    Json(store.lexicon().to_json_value())
}

async fn statistics(State(store): State<AppState>) -> Result<Json<serde_json::Value>, WorkbenchError> {
    let stats = blocking(move || store.statistics()).await?;
    Ok(Json(serde_json::to_value(stats)?))
}

pub fn router(store: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/scenes", get(list_scenes).post(put_scene))
        .route("/api/scenes/{id}", get(get_scene))
        .route("/api/scenes/{id}/preview", post(preview))
        .route("/api/ground-truth", post(ground_truth))
        .route("/api/experiments", post(experiments))
        .route("/api/reports/{variant}", get(report))
        .route("/api/lexicon", get(lexicon))
        .route("/api/statistics", get(statistics))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until ctrl-c.
pub async fn serve(store: ProjectStore, bind: SocketAddr, ui_dir: Option<PathBuf>) -> Result<(), WorkbenchError> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|source| WorkbenchError::Io {
            path: PathBuf::from(bind.to_string()),
            source,
        })?;
    let local = listener.local_addr().map_err(|source| WorkbenchError::Io {
        path: PathBuf::from(bind.to_string()),
        source,
    })?;
    log::info!("serving {} on http://{local}", store.root().display());
    axum::serve(listener, router(Arc::new(store), ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|source| WorkbenchError::Io {
            path: PathBuf::from(local.to_string()),
            source,
        })
}
