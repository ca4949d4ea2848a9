//! Redistributable dataset bundles: annotations, agreed labels and captions.
//! Images are referenced by URI only.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use emocap_core::caption::CaptionVariant;
use emocap_core::jsonl;
use emocap_core::scene::{DatasetStatistics, GroundTruthSample, SceneAnnotation, SceneKind};
use serde::{Deserialize, Serialize};

use crate::error::WorkbenchError;
use crate::experiment::prepare_samples;
use crate::store::{captions_header, scenes_header, truth_header, ProjectStore};

pub const BUNDLE_SCHEMA: &str = "emocap/bundle";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    /// JSON-lines files that `import_dataset` reads back.
    #[default]
    Jsonl,
    /// One flat `samples.csv` row per sample with all caption variants.
    Csv,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(Self::Jsonl),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown export format `{other}` (expected jsonl or csv)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub schema: String,
    pub version: u32,
    pub format: ExportFormat,
    pub lexicon_version: String,
    pub scenes: usize,
    pub samples: usize,
    pub statistics: DatasetStatistics,
}

fn kind_name(kind: SceneKind) -> &'static str {
    match kind {
        SceneKind::OnePerson => "one-person",
        SceneKind::MultiplePeople => "multiple-people",
    }
}

/// Writes the bundle into `out`, returning the files written.
pub fn export_dataset(store: &ProjectStore, out: &Path, format: ExportFormat) -> Result<Vec<PathBuf>, WorkbenchError> {
    let scenes = store.scenes()?;
    let truth = store.ground_truth()?;
    let statistics = store.statistics()?;
    let mut written = Vec::new();

    let manifest = BundleManifest {
        schema: BUNDLE_SCHEMA.into(),
        version: BUNDLE_VERSION,
        format,
        lexicon_version: store.lexicon().version().to_string(),
        scenes: scenes.len(),
        samples: truth.len(),
        statistics,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    let path = out.join("bundle.json");
    jsonl::write_bytes_atomic(&path, text.as_bytes())?;
    written.push(path);

    let path = out.join("lexicon.json");
    store.lexicon().save(&path)?;
    written.push(path);

    let prepared = CaptionVariant::ALL
        .iter()
        .map(|v| prepare_samples(store, *v))
        .collect::<Result<Vec<_>, _>>()?;

    match format {
        ExportFormat::Jsonl => {
            let path = out.join("scenes.jsonl");
            jsonl::write_all(&path, &scenes_header(), &scenes)?;
            written.push(path);
            let path = out.join("ground_truth.jsonl");
            jsonl::write_all(&path, &truth_header(), &truth)?;
            written.push(path);
            for (variant, items) in CaptionVariant::ALL.iter().zip(&prepared) {
                let captions: Vec<_> = items.iter().map(|p| p.caption.clone()).collect();
                let path = out.join("captions").join(format!("{variant}.jsonl"));
                jsonl::write_all(&path, &captions_header(), &captions)?;
                written.push(path);
            }
        }
        ExportFormat::Csv => {
            let path = out.join("samples.csv");
            let mut buf = Vec::new();
            {
                let mut w = csv::Writer::from_writer(&mut buf);
                let mut header = vec!["scene_id", "person_key", "image_uri", "scene_kind", "label"];
                header.extend(CaptionVariant::ALL.iter().map(|v| v.as_str()));
                w.write_record(&header)?;
                for (i, sample) in truth.iter().enumerate() {
                    let scene = scenes
                        .iter()
                        .find(|s| s.scene_id == sample.scene_id)
                        .ok_or_else(|| WorkbenchError::NotFound(format!("scene `{}`", sample.scene_id)))?;
                    let mut row = vec![
                        sample.scene_id.clone(),
                        sample.person_key.clone(),
                        scene.image_uri.clone(),
                        kind_name(scene.kind()).to_string(),
                        sample.label.to_string(),
                    ];
                    row.extend(prepared.iter().map(|items| items[i].caption.text.clone()));
                    w.write_record(&row)?;
                }
                w.flush().map_err(|source| WorkbenchError::Io {
                    path: path.clone(),
                    source,
                })?;
            }
            jsonl::write_bytes_atomic(&path, &buf)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Replaces the project's scenes and ground truth with a JSON-lines bundle.
pub fn import_dataset(store: &ProjectStore, dir: &Path) -> Result<DatasetStatistics, WorkbenchError> {
    let path = dir.join("bundle.json");
    let text = std::fs::read_to_string(&path).map_err(|source| WorkbenchError::Io {
        path: path.clone(),
        source,
    })?;
    let manifest: BundleManifest =
        serde_json::from_str(&text).map_err(|source| WorkbenchError::Parse { path, source })?;
    if manifest.schema != BUNDLE_SCHEMA || manifest.version != BUNDLE_VERSION {
        return Err(WorkbenchError::BadRequest(format!(
            "unsupported bundle `{}` version {}",
            manifest.schema, manifest.version
        )));
    }
    if manifest.format != ExportFormat::Jsonl {
        return Err(WorkbenchError::BadRequest("only jsonl bundles can be imported".into()));
    }
    if manifest.lexicon_version != store.lexicon().version() {
        return Err(WorkbenchError::LexiconVersionMismatch {
            manifest: manifest.lexicon_version,
            lexicon: store.lexicon().version().to_string(),
        });
    }
    let scenes: Vec<SceneAnnotation> = jsonl::read_all(&dir.join("scenes.jsonl"), &scenes_header())?;
    let truth: Vec<GroundTruthSample> = jsonl::read_all(&dir.join("ground_truth.jsonl"), &truth_header())?;
    store.replace_dataset(&scenes, &truth)?;
    store.statistics()
}
