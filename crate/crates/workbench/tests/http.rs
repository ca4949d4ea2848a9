mod common;

use common::*;
use emocap_core::caption::{CaptionEngine, CaptionVariant};
use emocap_core::evaluation::EvaluationReport;
use emocap_core::scene::{DatasetStatistics, Resolution, SceneAnnotation, SignalRef, Violation, ViolationCode};
use emocap_workbench::api::PreviewResponse;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

const FULL: &str = include_str!("../../core/tests/golden/airplane_full.txt");
const MINUS_INTERACTIONS: &str = include_str!("../../core/tests/golden/airplane_minus_interactions.txt");

fn server_with(dir: &std::path::Path, n: usize) -> ApiServer {
    ApiServer::start(small_store(dir, n))
}

#[test]
fn lexicon_endpoint_serves_the_project_lexicon() {
    let dir = tempfile::tempdir().unwrap();
    let store = new_store(dir.path());
    let expected = store.lexicon().to_json_value();
    let server = ApiServer::start(store);
    let body: Value = reqwest::blocking::get(server.url("/api/lexicon")).unwrap().json().unwrap();
    assert_eq!(body, expected);
}

#[test]
fn preview_matches_golden_and_batch_rendering() {
    let dir = tempfile::tempdir().unwrap();
    let store = new_store(dir.path());
    let engine_store = ProjectStoreView::from(&store);
    let server = ApiServer::start(store);
    let client = Client::new();
    let scene = airplane_scene();
    for (variant, golden) in [("full", FULL), ("minus-interactions", MINUS_INTERACTIONS)] {
        let resp = client
            .post(server.url(&format!("/api/scenes/airplane/preview?variant={variant}")))
            .json(&scene)
            .send()
            .unwrap();
        assert_eq!(resp.status(), StatusCode::OK);
        let preview: PreviewResponse = resp.json().unwrap();
        assert_eq!(preview.text, golden.trim_end());
        assert_eq!(preview.person_key, "green");
        let batch = engine_store.render(&scene, preview.variant);
        assert_eq!(preview.text, batch);
        let joined: Vec<_> = preview.sentences.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(joined.join(" "), preview.text);
    }
    let resp = client
        .post(server.url("/api/scenes/airplane/preview?variant=sideways"))
        .json(&scene)
        .send()
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

/// Renders through the library directly, as batch rendering does.
struct ProjectStoreView {
    lexicon: emocap_core::taxonomy::SignalLexicon,
    names: emocap_core::caption::NamePool,
}

impl From<&emocap_workbench::ProjectStore> for ProjectStoreView {
    fn from(store: &emocap_workbench::ProjectStore) -> Self {
        Self {
            lexicon: store.lexicon().clone(),
            names: store.manifest().name_pool.clone(),
        }
    }
}

impl ProjectStoreView {
    fn render(&self, scene: &SceneAnnotation, variant: CaptionVariant) -> String {
        CaptionEngine::new(&self.lexicon, &self.names)
            .render(scene, &scene.persons[0].person_key, variant)
            .unwrap()
            .text
    }
}

#[test]
fn invalid_scene_is_rejected_with_field_violations() {
    let dir = tempfile::tempdir().unwrap();
    let server = ApiServer::start(new_store(dir.path()));
    let client = Client::new();
    let mut scene = airplane_scene();
    scene.persons[0].signals.push(SignalRef {
        category: emocap_core::taxonomy::Category::Eyes,
        phrase: "Wiggling ears".into(),
    });
    for url in ["/api/scenes", "/api/scenes/airplane/preview"] {
        let resp = client.post(server.url(url)).json(&scene).send().unwrap();
        assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY, "{url}");
        let body: Value = resp.json().unwrap();
        let violations: Vec<Violation> = serde_json::from_value(body["violations"].clone()).unwrap();
        assert_eq!(violations.len(), 1);
        assert!(matches!(
            violations[0].code,
            ViolationCode::UnknownSignal | ViolationCode::SignalNotInCategory
        ));
        assert_eq!(violations[0].field, "persons[0].signals[2]");
    }
    let listed: Vec<SceneAnnotation> = client.get(server.url("/api/scenes")).send().unwrap().json().unwrap();
    assert!(listed.is_empty());
}

#[test]
fn scene_saves_use_optimistic_revisions() {
    let dir = tempfile::tempdir().unwrap();
    let server = ApiServer::start(new_store(dir.path()));
    let client = Client::new();
    let scene = airplane_scene();
    let resp = client.post(server.url("/api/scenes")).json(&scene).send().unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let saved: SceneAnnotation = resp.json().unwrap();
    assert_eq!(saved.revision, 1);

    // a second editor still holding revision 0 loses
    let resp = client.post(server.url("/api/scenes")).json(&scene).send().unwrap();
    assert_eq!(resp.status(), StatusCode::CONFLICT);

    let mut edited = saved.clone();
    edited.persons[0].environment = Some("on a train".into());
    let resp = client.post(server.url("/api/scenes")).json(&edited).send().unwrap();
    assert_eq!(resp.status(), StatusCode::OK);

    let fetched: SceneAnnotation = client.get(server.url("/api/scenes/airplane")).send().unwrap().json().unwrap();
    assert_eq!(fetched.revision, 2);
    assert_eq!(fetched.persons[0].environment.as_deref(), Some("on a train"));
    let resp = client.get(server.url("/api/scenes/nowhere")).send().unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
}

#[test]
fn ground_truth_endpoint_resolves_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let store = new_store(dir.path());
    store.put_scene(airplane_scene()).unwrap();
    let server = ApiServer::start(store);
    let client = Client::new();
    let judgment = |annotator: &str, label: &str| {
        json!({ "scene_id": "airplane", "person_key": "green", "annotator_id": annotator, "label": label })
    };

    let resp = client
        .post(server.url("/api/ground-truth"))
        .json(&json!({ "judgments": [judgment("a1", "Annoyance"), judgment("a2", "Anger")] }))
        .send()
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(matches!(resp.json::<Resolution>().unwrap(), Resolution::Excluded(_)));
    let stats: DatasetStatistics = client.get(server.url("/api/statistics")).send().unwrap().json().unwrap();
    assert_eq!(stats.total, 0);

    let resp = client
        .post(server.url("/api/ground-truth"))
        .json(&json!({ "judgments": [judgment("a1", "Annoyance"), judgment("a2", "Annoyance")] }))
        .send()
        .unwrap();
    match resp.json::<Resolution>().unwrap() {
        Resolution::Agreed(sample) => assert_eq!(sample.label.as_str(), "Annoyance"),
        other => panic!("expected agreement, got {other:?}"),
    }
    let stats: DatasetStatistics = client.get(server.url("/api/statistics")).send().unwrap().json().unwrap();
    assert_eq!((stats.total, stats.one_person, stats.multiple_people), (1, 0, 1));

    let resp = client
        .post(server.url("/api/ground-truth"))
        .json(&json!({ "judgments": [judgment("a1", "Joy"), judgment("a2", "Joy")] }))
        .send()
        .unwrap();
    assert!(resp.status().is_client_error());
}

#[test]
fn experiment_endpoint_runs_and_publishes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let server = server_with(dir.path(), 20);
    let client = Client::new();

    let resp = client.get(server.url("/api/reports/full")).send().unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);

    let request = json!({
        "variant": "full",
        "backend": { "kind": "mock", "model_name": "text-davinci-003" },
        "repeats": 4,
        "parallelism": 3,
        "mock": { "entries": {}, "fallback": { "kind": "constant", "text": "\n\nFatigue" } },
    });
    let resp = client.post(server.url("/api/experiments")).json(&request).send().unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body: Value = resp.json().unwrap();
    assert_eq!(body["completions_consumed"], 80);
    let posted: EvaluationReport = serde_json::from_value(body["report"].clone()).unwrap();
    assert_eq!(posted.total, 20);

    let fetched: EvaluationReport = client.get(server.url("/api/reports/full")).send().unwrap().json().unwrap();
    assert_eq!(fetched, posted);
    let fatigue = fetched.per_label.iter().find(|m| m.label.as_str() == "Fatigue").unwrap();
    assert_eq!(fatigue.predicted, 20);

    let mut replay = request.clone();
    replay["backend"]["kind"] = json!("replay");
    let resp = client.post(server.url("/api/experiments")).json(&replay).send().unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_GATEWAY);
}
