#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use emocap_core::gateway::BackendConfig;
use emocap_core::scene::{
    AgeGroup, GroundTruthSample, Interaction, OtherDescriptor, PersonAnnotation, SceneAnnotation, Sex, SignalRef,
};
use emocap_core::taxonomy::{EmotionLabel, SignalLexicon};
use emocap_workbench::ProjectStore;

/// Per-emotion sample counts: (label, one person, multiple people).
pub const PUBLISHED_COUNTS: [(&str, usize, usize); 13] = [
    ("Anger", 14, 16),
    ("Annoyance", 16, 14),
    ("Aversion", 16, 14),
    ("Confusion", 12, 4),
    ("Disapproval", 18, 12),
    ("Disconnection", 18, 12),
    ("Disquietment", 15, 15),
    ("Embarrassment", 0, 14),
    ("Fatigue", 23, 7),
    ("Fear", 15, 15),
    ("Pain/Suffering (emotional)", 15, 15),
    ("Pain/Suffering (physical)", 15, 15),
    ("Sadness", 15, 15),
];

pub const TOTAL_SAMPLES: usize = 360;
pub const UNIQUE_IMAGES: usize = 331;
/// Images in which two people carry the same emotion: 360 - 331.
pub const DOUBLED_IMAGES: usize = 29;

const ENVIRONMENTS: [&str; 4] = ["in a hospital", "at a wedding", "on a street", "at home"];

fn all_signals() -> Vec<SignalRef> {
    SignalLexicon::default_lexicon()
        .categories()
        .iter()
        .flat_map(|c| {
            let cat = c.name;
            c.signals.iter().map(move |s| SignalRef::new(cat, s.clone()))
        })
        .collect()
}

/// A person whose caption is unique to sample index `i`.
fn person(key: &str, i: usize, interacting: bool, signals: &[SignalRef]) -> PersonAnnotation {
    let n = signals.len();
    let a = i % n;
    let b = (a + 1 + i / n) % n;
    PersonAnnotation {
        person_key: key.into(),
        display_name: String::new(),
        perceived_sex: if i.is_multiple_of(2) { Sex::Female } else { Sex::Male },
        perceived_age: AgeGroup::Adult,
        social_identity: None,
        signals: vec![signals[a].clone(), signals[b].clone()],
        interactions: if interacting {
            vec![Interaction {
                other_name: String::new(),
                other: OtherDescriptor::Demographic {
                    text: String::new(),
                    age: AgeGroup::Child,
                    sex: Sex::Male,
                },
                action: "standing next to {subj}".into(),
                actor: Default::default(),
            }]
        } else {
            vec![]
        },
        environment: Some(ENVIRONMENTS[i % ENVIRONMENTS.len()].into()),
    }
}

fn scene(n: usize, persons: Vec<PersonAnnotation>) -> SceneAnnotation {
    SceneAnnotation {
        scene_id: format!("img{n:03}"),
        image_uri: format!("emotic://img{n:03}.jpg"),
        persons,
        annotator_id: String::new(),
        emotion_judgment: Default::default(),
        revision: 0,
    }
}

/// Scenes and agreed samples with the published per-emotion structure:
/// 29 images hold two people with the same emotion, every other image
/// contributes one sample.
pub fn published_dataset() -> (Vec<SceneAnnotation>, Vec<GroundTruthSample>) {
    let signals = all_signals();
    let mut multi_left: Vec<usize> = PUBLISHED_COUNTS.iter().map(|r| r.2).collect();
    let mut pairs = vec![0usize; PUBLISHED_COUNTS.len()];
    let mut allotted = 0;
    while allotted < DOUBLED_IMAGES {
        for (k, left) in multi_left.iter_mut().enumerate() {
            if allotted < DOUBLED_IMAGES && *left >= 2 {
                *left -= 2;
                pairs[k] += 1;
                allotted += 1;
            }
        }
    }

    let mut scenes = Vec::new();
    let mut truth = Vec::new();
    let mut i = 0;
    let mut push = |scenes: &mut Vec<SceneAnnotation>, persons: Vec<PersonAnnotation>, label: &str| {
        let s = scene(scenes.len(), persons);
        for p in &s.persons {
            truth.push(GroundTruthSample {
                scene_id: s.scene_id.clone(),
                person_key: p.person_key.clone(),
                label: EmotionLabel::new(label),
            });
        }
        scenes.push(s);
    };
    for (k, (label, one, _)) in PUBLISHED_COUNTS.iter().enumerate() {
        for _ in 0..*one {
            push(&mut scenes, vec![person("red", i, false, &signals)], label);
            i += 1;
        }
        for _ in 0..pairs[k] {
            let persons = vec![person("red", i, false, &signals), person("blue", i + 1, false, &signals)];
            push(&mut scenes, persons, label);
            i += 2;
        }
        for _ in 0..multi_left[k] {
            push(&mut scenes, vec![person("red", i, true, &signals)], label);
            i += 1;
        }
    }
    (scenes, truth)
}

/// The airplane scene from the golden fixtures.
pub fn airplane_scene() -> SceneAnnotation {
    serde_json::from_str(include_str!("../../../core/tests/golden/airplane_scene.json")).unwrap()
}

pub fn new_store(dir: &Path) -> ProjectStore {
    ProjectStore::init(dir, SignalLexicon::default_lexicon(), BackendConfig::default()).unwrap()
}

pub fn published_store(dir: &Path) -> ProjectStore {
    let store = new_store(dir);
    let (scenes, truth) = published_dataset();
    store.replace_dataset(&scenes, &truth).unwrap();
    store
}

/// Small dataset: the first `n` samples of the published-counts fixture.
pub fn small_store(dir: &Path, n: usize) -> ProjectStore {
    let store = new_store(dir);
    let (scenes, truth) = published_dataset();
    let truth: Vec<_> = truth.into_iter().take(n).collect();
    let keep: std::collections::HashSet<_> = truth.iter().map(|t| t.scene_id.clone()).collect();
    let scenes: Vec<_> = scenes.into_iter().filter(|s| keep.contains(&s.scene_id)).collect();
    store.replace_dataset(&scenes, &truth).unwrap();
    store
}

/// The HTTP API on an ephemeral port, served from a background runtime.
pub struct ApiServer {
    pub base: String,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ApiServer {
    pub fn start(store: ProjectStore) -> Self {
        let listener = std::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0))).unwrap();
        listener.set_nonblocking(true).unwrap();
        let addr = listener.local_addr().unwrap();
        let app = emocap_workbench::api::router(Arc::new(store), None);
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).unwrap();
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .unwrap();
            });
        });
        Self {
            base: format!("http://{addr}"),
            shutdown: Some(tx),
            thread: Some(thread),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }
}

impl Drop for ApiServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
