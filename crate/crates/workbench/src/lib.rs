//! Project store, experiment runner, HTTP API and CLI support for emocap.
//!
//! A project directory holds annotated scenes, agreed ground truth, the
//! response cache and every generated artifact ([`store`]). Experiments
//! render one caption variant for every sample and score the voted
//! predictions ([`experiment`]); [`api`] exposes the same operations over
//! HTTP for the annotation UI.

pub mod api;
pub mod bundle;
pub mod error;
pub mod experiment;
pub mod store;
pub mod stub;

pub use bundle::{export_dataset, import_dataset, ExportFormat};
pub use error::WorkbenchError;
pub use experiment::{echo_truth_transcript, render_variant, run_experiment, ExperimentOptions, ExperimentOutcome};
pub use store::ProjectStore;
