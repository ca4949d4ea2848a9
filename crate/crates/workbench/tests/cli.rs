use std::path::Path;
use std::process::{Command, Output};

use emocap_workbench::stub::{StubPolicy, StubServer};
use serde_json::json;

const AIRPLANE: &str = include_str!("../../core/tests/golden/airplane_scene.json");
const FULL: &str = include_str!("../../core/tests/golden/airplane_full.txt");

fn emocap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emocap"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env("EMOCAP_CLI_TEST_KEY", "sk-local")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = emocap(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A project holding the airplane scene and a second person scene, both
/// with agreed labels.
fn seeded_project(root: &Path) -> std::path::PathBuf {
    let project = root.join("project");
    ok(&["init", s(&project)]);
    let mut second: serde_json::Value = serde_json::from_str(AIRPLANE).unwrap();
    second["scene_id"] = json!("park");
    second["persons"][0]["environment"] = json!("in a park");
    second["persons"][0]["interactions"] = json!([]);
    let scenes = root.join("scenes.json");
    let airplane: serde_json::Value = serde_json::from_str(AIRPLANE).unwrap();
    std::fs::write(&scenes, json!([airplane, second]).to_string()).unwrap();
    assert!(ok(&["validate", "-p", s(&project), s(&scenes)]).contains("2 scene(s) checked, all valid"));

    let store = emocap_workbench::ProjectStore::open(&project).unwrap();
    for scene in [airplane, second] {
        store.put_scene(serde_json::from_value(scene).unwrap()).unwrap();
    }
    drop(store);

    let judgments = root.join("judgments.json");
    let j = |scene: &str, annotator: &str, label: &str| {
        json!({ "scene_id": scene, "person_key": "green", "annotator_id": annotator, "label": label })
    };
    std::fs::write(
        &judgments,
        json!([
            j("airplane", "a1", "Annoyance"),
            j("airplane", "a2", "Annoyance"),
            j("park", "a1", "Fatigue"),
            j("park", "a2", "Fatigue"),
        ])
        .to_string(),
    )
    .unwrap();
    assert_eq!(ok(&["resolve", "-p", s(&project), s(&judgments)]).trim(), "2 agreed, 0 excluded");
    project
}

#[test]
fn init_twice_fails() {
    let dir = tempfile::tempdir().unwrap();
    let project = dir.path().join("p");
    ok(&["init", s(&project)]);
    assert!(!emocap(&["init", s(&project)]).status.success());
}

#[test]
fn validate_reports_violations_with_failure_status() {
    let dir = tempfile::tempdir().unwrap();
    let mut scene: serde_json::Value = serde_json::from_str(AIRPLANE).unwrap();
    scene["persons"][0]["signals"][0]["phrase"] = json!("Wiggling ears");
    let file = dir.path().join("bad.json");
    std::fs::write(&file, scene.to_string()).unwrap();
    let project = dir.path().join("p");
    ok(&["init", s(&project)]);
    let out = emocap(&["validate", "-p", s(&project), s(&file)]);
    assert!(!out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("persons[0].signals[0]"), "{stdout}");
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let project = seeded_project(dir.path());

    let stats = ok(&["stats", "-p", s(&project)]);
    assert!(stats.contains("unique images: 2"), "{stats}");

    ok(&["render", "-p", s(&project), "--variant", "full"]);
    let captions = std::fs::read_to_string(project.join("captions/full.txt")).unwrap();
    assert!(captions.lines().any(|l| l.rsplit('\t').next() == Some(FULL.trim_end())), "{captions}");

    let table = ok(&["predict", "-p", s(&project), "--echo-truth", "--repeats", "3"]);
    assert!(table.contains("Total Accuracy,1.00,,,1.00,,,1.00,,"), "{table}");

    let report_dir = dir.path().join("eval");
    let printed = ok(&[
        "evaluate",
        "--predictions",
        s(&project.join("predictions/minus-environments.jsonl")),
        "--truth",
        s(&project.join("ground_truth.jsonl")),
        "--variant",
        "minus-environments",
        "--out",
        s(&report_dir),
    ]);
    assert!(printed.contains("chance: uniform 0.0769"), "{printed}");
    let stored = std::fs::read_to_string(project.join("reports/minus-environments.json")).unwrap();
    let recomputed = std::fs::read_to_string(report_dir.join("minus-environments.json")).unwrap();
    assert_eq!(stored, recomputed);

    let bundle = dir.path().join("bundle");
    ok(&["export", "-p", s(&project), "--out", s(&bundle)]);
    let other = dir.path().join("other");
    ok(&["init", s(&other)]);
    assert_eq!(
        ok(&["import", "-p", s(&other), s(&bundle)]).trim(),
        "imported 2 samples from 2 images"
    );
    assert_eq!(ok(&["stats", "-p", s(&other)]), stats);
}

#[test]
fn live_predict_against_a_local_stub_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let project = seeded_project(dir.path());
    let stub = StubServer::start(StubPolicy::PickFromList { seed: 11 }).unwrap();
    let endpoint = stub.endpoint();
    let live = [
        "predict",
        "-p",
        s(&project),
        "--variant",
        "full",
        "--backend",
        "live",
        "--endpoint",
        &endpoint,
        "--api-key-env",
        "EMOCAP_CLI_TEST_KEY",
        "--repeats",
        "5",
    ];
    let first = ok(&live);
    assert_eq!(stub.requests(), 10);
    let predictions = std::fs::read(project.join("predictions/full.jsonl")).unwrap();

    let mut replay = live;
    replay[6] = "replay";
    assert_eq!(ok(&replay), first);
    assert_eq!(stub.requests(), 10);
    assert_eq!(std::fs::read(project.join("predictions/full.jsonl")).unwrap(), predictions);
}

#[test]
fn concurrent_writer_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let project = seeded_project(dir.path());
    let _held = emocap_workbench::ProjectStore::open(&project).unwrap();
    let out = emocap(&["render", "-p", s(&project)]);
    assert!(!out.status.success());
    assert!(ok(&["stats", "-p", s(&project)]).contains("unique images: 2"));
}
