//! On-disk project layout.
//!
//! ```text
//! <root>/
//!   manifest.json            schema version, lexicon version, backend config
//!   lexicon.json
//!   scenes.jsonl
//!   ground_truth.jsonl       agreed samples
//!   disagreements.jsonl      excluded samples, kept for audit
//!   mock.json                optional mock transcript
//!   captions/<variant>.jsonl and .txt
//!   cache/completions.jsonl  live responses, replayable
//!   predictions/<variant>.jsonl
//!   reports/<variant>.json, .csv, .txt, table.csv, baselines.json
//! ```
//!
//! Every whole-file write is temp-then-rename; the cache is append-only.
//! A `.lock` file marks the single writer.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};

use emocap_core::aggregation::PredictionRecord;
use emocap_core::caption::{to_plain_text, Caption, CaptionVariant, NamePool};
use emocap_core::evaluation::{matrix_to_text, reports_to_csv, ChanceBaselines, EvaluationReport};
use emocap_core::gateway::{BackendConfig, MockTranscript, PlaceholderMode, ResponseCache, DEFAULT_REPEATS};
use emocap_core::jsonl::{self, Header};
use emocap_core::scene::{
    dataset_statistics, resolve_ground_truth, validate_scene, DatasetStatistics, Disagreement,
    GroundTruthSample, Judgment, Resolution, SceneAnnotation,
};
use emocap_core::taxonomy::SignalLexicon;
use serde::{Deserialize, Serialize};

use crate::error::WorkbenchError;

pub const MANIFEST_SCHEMA: &str = "emocap/project";
pub const MANIFEST_VERSION: u32 = 1;

pub fn scenes_header() -> Header {
    Header::new("emocap/scenes", 1)
}

pub fn truth_header() -> Header {
    Header::new("emocap/ground-truth", 1)
}

pub fn disagreements_header() -> Header {
    Header::new("emocap/disagreements", 1)
}

pub fn captions_header() -> Header {
    Header::new("emocap/captions", 1)
}

pub fn predictions_header() -> Header {
    Header::new("emocap/predictions", 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub version: u32,
    pub lexicon_version: String,
    pub backend: BackendConfig,
    #[serde(default = "default_repeats")]
    pub repeats: u32,
    #[serde(default)]
    pub placeholder: PlaceholderMode,
    #[serde(default)]
    pub name_pool: NamePool,
}

fn default_repeats() -> u32 {
    DEFAULT_REPEATS
}

impl Manifest {
    pub fn new(lexicon: &SignalLexicon, backend: BackendConfig) -> Self {
        Self {
            schema: MANIFEST_SCHEMA.into(),
            version: MANIFEST_VERSION,
            lexicon_version: lexicon.version().to_string(),
            backend,
            repeats: DEFAULT_REPEATS,
            placeholder: PlaceholderMode::Literal,
            name_pool: NamePool::default(),
        }
    }
}

/// Exclusive writer marker, removed on drop.
#[derive(Debug)]
struct LockFile {
    path: PathBuf,
}

impl LockFile {
    fn acquire(path: PathBuf) -> Result<Self, WorkbenchError> {
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                let holder = fs::read_to_string(&path).unwrap_or_default().trim().to_string();
                Err(WorkbenchError::Locked { path, holder })
            }
            Err(source) => Err(WorkbenchError::Io { path, source }),
        }
    }
}

impl Drop for LockFile {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), WorkbenchError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    jsonl::write_bytes_atomic(path, text.as_bytes())?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, WorkbenchError> {
    let text = fs::read_to_string(path).map_err(|source| WorkbenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| WorkbenchError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug)]
pub struct ProjectStore {
    root: PathBuf,
    manifest: Manifest,
    lexicon: SignalLexicon,
    lock: Option<LockFile>,
    writes: Mutex<()>,
    runs: Mutex<()>,
    cache: OnceLock<Arc<ResponseCache>>,
    cache_override: Option<PathBuf>,
}

impl ProjectStore {
    /// Creates a new project at `root`, which must not already hold one.
    pub fn init(root: &Path, lexicon: SignalLexicon, backend: BackendConfig) -> Result<Self, WorkbenchError> {
        let manifest = Manifest::new(&lexicon, backend);
        Self::init_with_manifest(root, lexicon, manifest)
    }

    pub fn init_with_manifest(
        root: &Path,
        lexicon: SignalLexicon,
        manifest: Manifest,
    ) -> Result<Self, WorkbenchError> {
        let manifest_path = root.join("manifest.json");
        if manifest_path.exists() {
            return Err(WorkbenchError::AlreadyInitialized(root.to_path_buf()));
        }
        manifest.backend.validate().map_err(|e| WorkbenchError::BadRequest(e.to_string()))?;
        if manifest.repeats == 0 {
            return Err(WorkbenchError::BadRequest("repeats must be at least 1".into()));
        }
        fs::create_dir_all(root).map_err(|source| WorkbenchError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        lexicon.save(&root.join("lexicon.json"))?;
        jsonl::write_all::<SceneAnnotation>(&root.join("scenes.jsonl"), &scenes_header(), &[])?;
        jsonl::write_all::<GroundTruthSample>(&root.join("ground_truth.jsonl"), &truth_header(), &[])?;
        jsonl::write_all::<Disagreement>(&root.join("disagreements.jsonl"), &disagreements_header(), &[])?;
        write_json(&manifest_path, &manifest)?;
        Self::open(root)
    }

    /// Opens an existing project as its single writer.
    pub fn open(root: &Path) -> Result<Self, WorkbenchError> {
        let mut store = Self::open_read_only(root)?;
        store.lock = Some(LockFile::acquire(root.join(".lock"))?);
        Ok(store)
    }

    /// Opens without taking the writer lock; every mutation fails.
    pub fn open_read_only(root: &Path) -> Result<Self, WorkbenchError> {
        let manifest_path = root.join("manifest.json");
        if !manifest_path.exists() {
            return Err(WorkbenchError::NotInitialized(root.to_path_buf()));
        }
        let manifest: Manifest = read_json(&manifest_path)?;
        if manifest.schema != MANIFEST_SCHEMA || manifest.version != MANIFEST_VERSION {
            return Err(WorkbenchError::UnsupportedManifest {
                schema: manifest.schema,
                version: manifest.version,
            });
        }
        let lexicon = SignalLexicon::load(&root.join("lexicon.json"))?;
        if lexicon.version() != manifest.lexicon_version {
            return Err(WorkbenchError::LexiconVersionMismatch {
                manifest: manifest.lexicon_version,
                lexicon: lexicon.version().to_string(),
            });
        }
        manifest
            .name_pool
            .validate()
            .map_err(|e| WorkbenchError::BadRequest(format!("manifest name pool: {e}")))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            lexicon,
            lock: None,
            writes: Mutex::new(()),
            runs: Mutex::new(()),
            cache: OnceLock::new(),
            cache_override: None,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn lexicon(&self) -> &SignalLexicon {
        &self.lexicon
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn captions_path(&self, variant: CaptionVariant) -> PathBuf {
        self.root.join("captions").join(format!("{variant}.jsonl"))
    }

    pub fn predictions_path(&self, variant: CaptionVariant) -> PathBuf {
        self.root.join("predictions").join(format!("{variant}.jsonl"))
    }

    pub fn report_path(&self, variant: CaptionVariant, extension: &str) -> PathBuf {
        self.root.join("reports").join(format!("{variant}.{extension}"))
    }

    pub fn cache_path(&self) -> PathBuf {
        match &self.cache_override {
            Some(path) => path.clone(),
            None => self.root.join("cache").join("completions.jsonl"),
        }
    }

    /// Uses another response cache file; takes effect before the first run.
    pub fn set_cache_path(&mut self, path: PathBuf) {
        self.cache_override = Some(path);
        self.cache = OnceLock::new();
    }

    fn write_guard(&self) -> Result<MutexGuard<'_, ()>, WorkbenchError> {
        if self.lock.is_none() {
            return Err(WorkbenchError::ReadOnly(self.root.clone()));
        }
        Ok(self.writes.lock().unwrap_or_else(|e| e.into_inner()))
    }

    /// Serializes experiment runs, which share the response cache.
    pub(crate) fn run_guard(&self) -> Result<MutexGuard<'_, ()>, WorkbenchError> {
        if self.lock.is_none() {
            return Err(WorkbenchError::ReadOnly(self.root.clone()));
        }
        Ok(self.runs.lock().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn scenes(&self) -> Result<Vec<SceneAnnotation>, WorkbenchError> {
        Ok(jsonl::read_all(&self.path("scenes.jsonl"), &scenes_header())?)
    }

    pub fn scene(&self, scene_id: &str) -> Result<Option<SceneAnnotation>, WorkbenchError> {
        Ok(self.scenes()?.into_iter().find(|s| s.scene_id == scene_id))
    }

    /// Inserts or replaces a scene after validation. A replacement must carry
    /// the stored revision; the stored copy gets the next one.
    pub fn put_scene(&self, mut scene: SceneAnnotation) -> Result<SceneAnnotation, WorkbenchError> {
        let violations = validate_scene(&scene, &self.lexicon);
        if !violations.is_empty() {
            return Err(WorkbenchError::InvalidScene(violations));
        }
        let _guard = self.write_guard()?;
        let mut scenes = self.scenes()?;
        match scenes.iter_mut().find(|s| s.scene_id == scene.scene_id) {
            Some(existing) => {
                if existing.revision != scene.revision {
                    return Err(WorkbenchError::RevisionConflict {
                        scene_id: scene.scene_id,
                        expected: existing.revision,
                        found: scene.revision,
                    });
                }
                scene.revision += 1;
                *existing = scene.clone();
            }
            None => {
                if scene.revision != 0 {
                    return Err(WorkbenchError::RevisionConflict {
                        scene_id: scene.scene_id,
                        expected: 0,
                        found: scene.revision,
                    });
                }
                scene.revision = 1;
                scenes.push(scene.clone());
            }
        }
        jsonl::write_all(&self.path("scenes.jsonl"), &scenes_header(), &scenes)?;
        Ok(scene)
    }

    pub fn ground_truth(&self) -> Result<Vec<GroundTruthSample>, WorkbenchError> {
        Ok(jsonl::read_all(&self.path("ground_truth.jsonl"), &truth_header())?)
    }

    pub fn disagreements(&self) -> Result<Vec<Disagreement>, WorkbenchError> {
        Ok(jsonl::read_all(&self.path("disagreements.jsonl"), &disagreements_header())?)
    }

    /// Resolves two annotators' labels for one person and files the result.
    /// A later pair for the same person replaces the earlier outcome.
    pub fn record_judgments(&self, a: &Judgment, b: &Judgment) -> Result<Resolution, WorkbenchError> {
        let resolution = resolve_ground_truth(a, b)?;
        for j in [a, b] {
            if !self.lexicon.is_canonical(&j.label) {
                return Err(WorkbenchError::BadRequest(format!("`{}` is not in the label set", j.label)));
            }
        }
        let _guard = self.write_guard()?;
        let scene = self
            .scene(&a.scene_id)?
            .ok_or_else(|| WorkbenchError::NotFound(format!("scene `{}`", a.scene_id)))?;
        if scene.person(&a.person_key).is_none() {
            return Err(WorkbenchError::NotFound(format!("person `{}` in scene `{}`", a.person_key, a.scene_id)));
        }
        let same = |s: &str, p: &str| s == a.scene_id && p == a.person_key;
        let mut truth = self.ground_truth()?;
        truth.retain(|t| !same(&t.scene_id, &t.person_key));
        let mut excluded = self.disagreements()?;
        excluded.retain(|d| !same(&d.scene_id, &d.person_key));
        match &resolution {
            Resolution::Agreed(sample) => truth.push(sample.clone()),
            Resolution::Excluded(d) => excluded.push(d.clone()),
        }
        jsonl::write_all(&self.path("ground_truth.jsonl"), &truth_header(), &truth)?;
        jsonl::write_all(&self.path("disagreements.jsonl"), &disagreements_header(), &excluded)?;
        Ok(resolution)
    }

    /// Replaces scenes and ground truth wholesale, as when importing a bundle.
    pub fn replace_dataset(
        &self,
        scenes: &[SceneAnnotation],
        truth: &[GroundTruthSample],
    ) -> Result<(), WorkbenchError> {
        for scene in scenes {
            let violations = validate_scene(scene, &self.lexicon);
            if !violations.is_empty() {
                return Err(WorkbenchError::InvalidScene(violations));
            }
        }
        // fails on dangling scenes or unknown labels
        dataset_statistics(truth, scenes, &self.lexicon.labels())?;
        for t in truth {
            let known = scenes
                .iter()
                .any(|s| s.scene_id == t.scene_id && s.person(&t.person_key).is_some());
            if !known {
                return Err(WorkbenchError::NotFound(format!("person `{}` in scene `{}`", t.person_key, t.scene_id)));
            }
        }
        let _guard = self.write_guard()?;
        jsonl::write_all(&self.path("scenes.jsonl"), &scenes_header(), scenes)?;
        jsonl::write_all(&self.path("ground_truth.jsonl"), &truth_header(), truth)?;
        Ok(())
    }

    pub fn statistics(&self) -> Result<DatasetStatistics, WorkbenchError> {
        Ok(dataset_statistics(&self.ground_truth()?, &self.scenes()?, &self.lexicon.labels())?)
    }

    /// The project response cache, shared by every run in this process.
    pub fn cache(&self) -> Result<Arc<ResponseCache>, WorkbenchError> {
        if let Some(cache) = self.cache.get() {
            return Ok(Arc::clone(cache));
        }
        let opened = Arc::new(ResponseCache::open(&self.cache_path())?);
        Ok(Arc::clone(self.cache.get_or_init(|| opened)))
    }

    pub fn mock_transcript(&self) -> Result<Option<MockTranscript>, WorkbenchError> {
        let path = self.path("mock.json");
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(read_json(&path)?))
    }

    pub fn write_mock_transcript(&self, transcript: &MockTranscript) -> Result<(), WorkbenchError> {
        let _guard = self.write_guard()?;
        write_json(&self.path("mock.json"), transcript)
    }

    pub fn write_captions(&self, variant: CaptionVariant, captions: &[Caption]) -> Result<(), WorkbenchError> {
        let _guard = self.write_guard()?;
        let path = self.captions_path(variant);
        jsonl::write_all(&path, &captions_header(), captions)?;
        jsonl::write_bytes_atomic(&path.with_extension("txt"), to_plain_text(captions).as_bytes())?;
        Ok(())
    }

    pub fn captions(&self, variant: CaptionVariant) -> Result<Vec<Caption>, WorkbenchError> {
        Ok(jsonl::read_all(&self.captions_path(variant), &captions_header())?)
    }

    pub fn write_predictions(
        &self,
        variant: CaptionVariant,
        predictions: &[PredictionRecord],
    ) -> Result<(), WorkbenchError> {
        let _guard = self.write_guard()?;
        jsonl::write_all(&self.predictions_path(variant), &predictions_header(), predictions)?;
        Ok(())
    }

    pub fn predictions(&self, variant: CaptionVariant) -> Result<Vec<PredictionRecord>, WorkbenchError> {
        Ok(jsonl::read_all(&self.predictions_path(variant), &predictions_header())?)
    }

    /// Writes the JSON, CSV and matrix forms of `report`, then refreshes the
    /// combined table over every variant reported so far.
    pub fn write_report(&self, report: &EvaluationReport, baselines: &ChanceBaselines) -> Result<(), WorkbenchError> {
        let _guard = self.write_guard()?;
        let variant = report.variant;
        write_json(&self.report_path(variant, "json"), report)?;
        jsonl::write_bytes_atomic(&self.report_path(variant, "csv"), reports_to_csv(&[report]).as_bytes())?;
        jsonl::write_bytes_atomic(&self.report_path(variant, "txt"), matrix_to_text(&report.matrix).as_bytes())?;
        write_json(&self.path("reports/baselines.json"), baselines)?;
        let mut all = Vec::new();
        for v in CaptionVariant::ALL {
            if let Some(r) = self.report(v)? {
                all.push(r);
            }
        }
        let refs: Vec<&EvaluationReport> = all.iter().collect();
        jsonl::write_bytes_atomic(&self.path("reports/table.csv"), reports_to_csv(&refs).as_bytes())?;
        Ok(())
    }

    pub fn report(&self, variant: CaptionVariant) -> Result<Option<EvaluationReport>, WorkbenchError> {
        let path = self.report_path(variant, "json");
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(read_json(&path)?))
    }
}
