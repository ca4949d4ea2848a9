//! Render, prompt, query, vote, score and persist one caption variant.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use emocap_core::aggregation::{aggregate, PredictionRecord};
use emocap_core::caption::{Caption, CaptionEngine, CaptionVariant};
use emocap_core::evaluation::{chance_baseline, score, ChanceBaselines, EvaluationReport};
use emocap_core::gateway::{
    build_prompt, BackendConfig, BackendKind, Gateway, MockBackend, MockFallback, MockTranscript, PromptSpec,
    RetryPolicy,
};
use emocap_core::scene::{GroundTruthSample, SceneAnnotation};
use serde::{Deserialize, Serialize};

use crate::error::WorkbenchError;
use crate::store::ProjectStore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub variant: CaptionVariant,
    pub backend: BackendConfig,
    pub repeats: u32,
    /// Samples queried concurrently; repeats within a sample stay sequential.
    pub parallelism: usize,
    /// Transcript for the mock backend; falls back to the project's mock.json.
    #[serde(default)]
    pub mock: Option<MockTranscript>,
    #[serde(skip)]
    pub retry: Option<RetryPolicy>,
}

impl ExperimentOptions {
    /// The project's configured backend and repeat count.
    pub fn from_manifest(store: &ProjectStore, variant: CaptionVariant) -> Self {
        Self {
            variant,
            backend: store.manifest().backend.clone(),
            repeats: store.manifest().repeats,
            parallelism: 1,
            mock: None,
            retry: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub report: EvaluationReport,
    pub baselines: ChanceBaselines,
    pub predictions: Vec<PredictionRecord>,
    pub completions_consumed: u64,
}

/// One ground-truth sample with its caption and prompt.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSample {
    pub sample: GroundTruthSample,
    pub caption: Caption,
    pub prompt: PromptSpec,
}

/// Captions for every annotated person, in scene then person order.
pub fn render_variant(store: &ProjectStore, variant: CaptionVariant) -> Result<Vec<Caption>, WorkbenchError> {
    let engine = CaptionEngine::new(store.lexicon(), &store.manifest().name_pool);
    let mut out = Vec::new();
    for scene in store.scenes()? {
        for person in &scene.persons {
            out.push(engine.render(&scene, &person.person_key, variant)?);
        }
    }
    Ok(out)
}

/// Caption and prompt for every ground-truth sample, in ground-truth order.
pub fn prepare_samples(store: &ProjectStore, variant: CaptionVariant) -> Result<Vec<PreparedSample>, WorkbenchError> {
    let scenes: BTreeMap<String, SceneAnnotation> =
        store.scenes()?.into_iter().map(|s| (s.scene_id.clone(), s)).collect();
    let engine = CaptionEngine::new(store.lexicon(), &store.manifest().name_pool);
    let labels = store.lexicon().labels();
    let placeholder = store.manifest().placeholder;
    store
        .ground_truth()?
        .into_iter()
        .map(|sample| {
            let scene = scenes
                .get(&sample.scene_id)
                .ok_or_else(|| WorkbenchError::NotFound(format!("scene `{}`", sample.scene_id)))?;
            let caption = engine.render(scene, &sample.person_key, variant)?;
            let prompt = build_prompt(&caption, &labels)?.with_placeholder(placeholder);
            Ok(PreparedSample { sample, caption, prompt })
        })
        .collect()
}

/// A mock transcript that answers every sample's prompt with its own
/// ground-truth label.
pub fn echo_truth_transcript(
    store: &ProjectStore,
    variant: CaptionVariant,
    backend: &BackendConfig,
) -> Result<MockTranscript, WorkbenchError> {
    let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut owner: BTreeMap<String, String> = BTreeMap::new();
    for p in prepare_samples(store, variant)? {
        let hash = p.prompt.hash(&backend.model_name, backend.temperature);
        let id = format!("{}/{}", p.sample.scene_id, p.sample.person_key);
        let label = p.sample.label.to_string();
        match entries.get(&hash) {
            Some(existing) if existing[0] != label => {
                return Err(WorkbenchError::AmbiguousPrompt {
                    first: owner[&hash].clone(),
                    second: id,
                })
            }
            Some(_) => {}
            None => {
                entries.insert(hash.clone(), vec![label]);
                owner.insert(hash, id);
            }
        }
    }
    Ok(MockTranscript {
        entries,
        fallback: MockFallback::Error,
    })
}

/// The gateway for `options.backend`, wired to the project cache.
pub fn build_gateway(store: &ProjectStore, options: &ExperimentOptions) -> Result<Gateway, WorkbenchError> {
    let cache = store.cache()?;
    let gateway = match options.backend.kind {
        BackendKind::Live => Gateway::live(options.backend.clone(), cache)?,
        BackendKind::Replay => Gateway::replay(options.backend.clone(), cache)?,
        BackendKind::Mock => {
            let transcript = match &options.mock {
                Some(t) => t.clone(),
                None => store.mock_transcript()?.ok_or_else(|| {
                    WorkbenchError::BadRequest("mock backend needs a transcript (mock.json or request body)".into())
                })?,
            };
            Gateway::with_backend(options.backend.clone(), Arc::new(MockBackend::new(transcript)), None)?
        }
    };
    Ok(match options.retry {
        Some(retry) => gateway.with_retry(retry),
        None => gateway,
    })
}

fn predict_one(
    store: &ProjectStore,
    gateway: &Gateway,
    item: &PreparedSample,
    variant: CaptionVariant,
    repeats: u32,
) -> Result<PredictionRecord, WorkbenchError> {
    let batch = gateway.complete_n(&item.prompt, repeats)?;
    Ok(aggregate(
        &item.sample.scene_id,
        &item.sample.person_key,
        variant,
        &batch,
        store.lexicon(),
    )?)
}

/// Queries every prepared sample. Results keep the input order whatever the
/// parallelism; the first failure (in input order) aborts the run.
pub fn predict_samples(
    store: &ProjectStore,
    gateway: &Gateway,
    items: &[PreparedSample],
    options: &ExperimentOptions,
) -> Result<Vec<PredictionRecord>, WorkbenchError> {
    let workers = options.parallelism.clamp(1, items.len().max(1));
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let done = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<PredictionRecord, WorkbenchError>>>> =
        items.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() || failed.load(Ordering::SeqCst) {
                    break;
                }
                let result = predict_one(store, gateway, &items[i], options.variant, options.repeats);
                if result.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(result);
                let n = done.fetch_add(1, Ordering::SeqCst) + 1;
                if n.is_multiple_of(50) || n == items.len() {
                    log::info!("{}: {n}/{} samples", options.variant, items.len());
                }
            });
        }
    });

    let mut out = Vec::with_capacity(items.len());
    for slot in slots {
        match slot.into_inner().unwrap_or_else(|e| e.into_inner()) {
            Some(Ok(record)) => out.push(record),
            Some(Err(e)) => return Err(e),
            // skipped after an earlier failure
            None => {}
        }
    }
    Ok(out)
}

/// Renders captions for every ground-truth sample, queries the backend
/// `repeats` times per caption, votes, scores and persists captions,
/// predictions and reports. Responses already cached survive a failed run.
pub fn run_experiment(store: &ProjectStore, options: &ExperimentOptions) -> Result<ExperimentOutcome, WorkbenchError> {
    let _run = store.run_guard()?;
    let truth = store.ground_truth()?;
    if truth.is_empty() {
        return Err(WorkbenchError::BadRequest("project has no agreed ground truth".into()));
    }
    let items = prepare_samples(store, options.variant)?;
    let captions: Vec<Caption> = items.iter().map(|p| p.caption.clone()).collect();
    store.write_captions(options.variant, &captions)?;

    let gateway = build_gateway(store, options)?;
    let predictions = predict_samples(store, &gateway, &items, options)?;
    store.write_predictions(options.variant, &predictions)?;

    let labels = store.lexicon().labels();
    let report = score(&predictions, &truth, options.variant, &labels)?;
    let baselines = chance_baseline(&truth, &labels)?;
    store.write_report(&report, &baselines)?;
    log::info!(
        "{}: accuracy {:.4} over {} samples, {} completions",
        options.variant,
        report.accuracy,
        report.total,
        gateway.completions_consumed()
    );
    Ok(ExperimentOutcome {
        report,
        baselines,
        predictions,
        completions_consumed: gateway.completions_consumed(),
    })
}
