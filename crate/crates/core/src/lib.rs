//! Contextual emotion estimation from structured image captions.
//!
//! People in an image are annotated with physical signals, interactions and
//! environment ([`scene`]); annotations render to deterministic captions and
//! ablated variants ([`caption`]); captions are sent to a completion model
//! repeatedly ([`gateway`]) and reduced by majority vote ([`aggregation`]);
//! predictions are scored against agreed ground truth ([`evaluation`]).

pub mod aggregation;
pub mod caption;
pub mod evaluation;
pub mod gateway;
pub mod jsonl;
pub mod scene;
pub mod taxonomy;

pub use aggregation::{aggregate, majority_vote, PredictionRecord};
pub use caption::{assign_names, possessive, render, Caption, CaptionEngine, CaptionVariant, NamePool};
pub use evaluation::{chance_baseline, compare_reports, score, EvaluationReport};
pub use gateway::{build_prompt, BackendConfig, BackendKind, CompletionBatch, Gateway, PromptSpec};
pub use scene::{dataset_statistics, resolve_ground_truth, validate_scene, GroundTruthSample, SceneAnnotation};
pub use taxonomy::{normalize_label, EmotionLabel, NormalizedLabel, SignalLexicon};
