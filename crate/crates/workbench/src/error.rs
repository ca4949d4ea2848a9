use std::path::PathBuf;

use emocap_core::aggregation::AggregateError;
use emocap_core::caption::CaptionError;
use emocap_core::evaluation::ScoreError;
use emocap_core::gateway::{GatewayError, PromptError};
use emocap_core::jsonl::JsonlError;
use emocap_core::scene::{ResolveError, StatsError, Violation};
use emocap_core::taxonomy::LexiconError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("project at {path} is locked by process {holder}; remove the .lock file if that process is gone")]
    Locked { path: PathBuf, holder: String },
    #[error("project at {0} was opened read-only")]
    ReadOnly(PathBuf),
    #[error("no project at {0}; run `emocap init` first")]
    NotInitialized(PathBuf),
    #[error("a project already exists at {0}")]
    AlreadyInitialized(PathBuf),
    #[error("unsupported project manifest `{schema}` version {version}")]
    UnsupportedManifest { schema: String, version: u32 },
    #[error("manifest expects lexicon version {manifest} but lexicon.json is {lexicon}")]
    LexiconVersionMismatch { manifest: String, lexicon: String },
    #[error("scene failed validation: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidScene(Vec<Violation>),
    #[error("scene `{scene_id}` is at revision {expected}, request was based on {found}")]
    RevisionConflict {
        scene_id: String,
        expected: u64,
        found: u64,
    },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("samples {first} and {second} render the same prompt but carry different labels")]
    AmbiguousPrompt { first: String, second: String },
    #[error(transparent)]
    Caption(#[from] CaptionError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
}
