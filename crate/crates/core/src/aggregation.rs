//! Majority vote over repeated completions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::caption::CaptionVariant;
use crate::gateway::CompletionBatch;
use crate::taxonomy::{NormalizedLabel, SignalLexicon};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub scene_id: String,
    pub person_key: String,
    pub variant: CaptionVariant,
    pub raw: Vec<String>,
    pub normalized: Vec<NormalizedLabel>,
    #[serde(rename = "final")]
    pub final_label: NormalizedLabel,
    pub tie_broken: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AggregateError {
    #[error("completion batch is empty")]
    EmptyBatch,
}

/// The label candidate in a completion: its first non-empty line.
pub fn first_line(raw: &str) -> &str {
    raw.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("")
}

/// Most frequent label. Among tied labels the one occurring first wins and
/// the second value is `true`.
pub fn majority_vote(labels: &[NormalizedLabel]) -> Option<(NormalizedLabel, bool)> {
    let mut counts: HashMap<&NormalizedLabel, (usize, usize)> = HashMap::new();
    for (i, label) in labels.iter().enumerate() {
        counts.entry(label).or_insert((0, i)).0 += 1;
    }
    let max = counts.values().map(|(c, _)| *c).max()?;
    let mut tied: Vec<(usize, &NormalizedLabel)> = counts
        .iter()
        .filter(|(_, (c, _))| *c == max)
        .map(|(label, (_, first))| (*first, *label))
        .collect();
    tied.sort_by_key(|(first, _)| *first);
    Some((tied[0].1.clone(), tied.len() > 1))
}

pub fn aggregate(
    scene_id: &str,
    person_key: &str,
    variant: CaptionVariant,
    batch: &CompletionBatch,
    lexicon: &SignalLexicon,
) -> Result<PredictionRecord, AggregateError> {
    let normalized: Vec<NormalizedLabel> = batch
        .raw_completions
        .iter()
        .map(|raw| lexicon.normalize(first_line(raw)))
        .collect();
    let (final_label, tie_broken) = majority_vote(&normalized).ok_or(AggregateError::EmptyBatch)?;
    Ok(PredictionRecord {
        scene_id: scene_id.to_string(),
        person_key: person_key.to_string(),
        variant,
        raw: batch.raw_completions.clone(),
        normalized,
        final_label,
        tie_broken,
    })
}
