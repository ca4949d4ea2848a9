//! Per-label precision/recall/F1, accuracy and confusion matrices.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::PredictionRecord;
use crate::caption::CaptionVariant;
use crate::scene::GroundTruthSample;
use crate::taxonomy::{EmotionLabel, NormalizedLabel};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("label set is empty")]
    EmptyLabelSet,
    #[error("ground truth is empty")]
    EmptyTruth,
    #[error("more than one {variant} prediction for {scene_id}/{person_key}")]
    DuplicatePrediction {
        scene_id: String,
        person_key: String,
        variant: CaptionVariant,
    },
    #[error("more than one ground-truth sample for {scene_id}/{person_key}")]
    DuplicateTruth { scene_id: String, person_key: String },
    #[error("prediction for {scene_id}/{person_key} has no ground truth")]
    MissingTruth { scene_id: String, person_key: String },
    #[error("ground truth {scene_id}/{person_key} has no {variant} prediction")]
    MissingPrediction {
        scene_id: String,
        person_key: String,
        variant: CaptionVariant,
    },
    #[error("label `{0}` is not in the label set")]
    UnknownLabel(String),
}

/// Rows are ground-truth labels; columns are the same labels followed by any
/// observed out-of-list predictions, sorted alphabetically.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub rows: Vec<EmotionLabel>,
    pub columns: Vec<NormalizedLabel>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn get(&self, truth: &EmotionLabel, predicted: &NormalizedLabel) -> u64 {
        let row = self.rows.iter().position(|r| r == truth);
        let col = self.columns.iter().position(|c| c == predicted);
        match (row, col) {
            (Some(r), Some(c)) => self.counts[r][c],
            _ => 0,
        }
    }

    pub fn row_sum(&self, row: usize) -> u64 {
        self.counts[row].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Sum over the canonical diagonal.
    pub fn trace(&self) -> u64 {
        (0..self.rows.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn out_of_list_columns(&self) -> &[NormalizedLabel] {
        &self.columns[self.rows.len()..]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: EmotionLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub true_positives: u64,
    pub predicted: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub variant: CaptionVariant,
    pub per_label: Vec<LabelMetrics>,
    pub accuracy: f64,
    pub correct: u64,
    pub total: u64,
    pub matrix: ConfusionMatrix,
}

impl EvaluationReport {
    pub fn label(&self, label: &EmotionLabel) -> Option<&LabelMetrics> {
        self.per_label.iter().find(|m| &m.label == label)
    }
}

/// `tp / denominator`, or 0 when the denominator is 0.
pub fn safe_ratio(tp: u64, denominator: u64) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        tp as f64 / denominator as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Rounds half away from zero at `decimals` places, tolerating binary
/// representation error (0.665 rounds to 0.67).
pub fn round_half_up(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = value * scale;
    let rounded = (scaled.abs() + 0.5 + 1e-9).floor().copysign(scaled);
    rounded / scale
}

type SampleKey<'a> = (&'a str, &'a str);

pub fn score(
    predictions: &[PredictionRecord],
    truth: &[GroundTruthSample],
    variant: CaptionVariant,
    labels: &[EmotionLabel],
) -> Result<EvaluationReport, ScoreError> {
    if labels.is_empty() {
        return Err(ScoreError::EmptyLabelSet);
    }
    let label_index: HashMap<&EmotionLabel, usize> = labels.iter().enumerate().map(|(i, l)| (l, i)).collect();

    let mut truth_by_key: HashMap<SampleKey, usize> = HashMap::new();
    for t in truth {
        let idx = *label_index
            .get(&t.label)
            .ok_or_else(|| ScoreError::UnknownLabel(t.label.to_string()))?;
        if truth_by_key.insert((&t.scene_id, &t.person_key), idx).is_some() {
            return Err(ScoreError::DuplicateTruth {
                scene_id: t.scene_id.clone(),
                person_key: t.person_key.clone(),
            });
        }
    }

    // (truth row, predicted label) per scored sample
    let mut pairs: Vec<(usize, &NormalizedLabel)> = Vec::new();
    let mut predicted_keys: HashSet<SampleKey> = HashSet::new();
    for p in predictions.iter().filter(|p| p.variant == variant) {
        let key = (p.scene_id.as_str(), p.person_key.as_str());
        if !predicted_keys.insert(key) {
            return Err(ScoreError::DuplicatePrediction {
                scene_id: p.scene_id.clone(),
                person_key: p.person_key.clone(),
                variant,
            });
        }
        let row = *truth_by_key.get(&key).ok_or_else(|| ScoreError::MissingTruth {
            scene_id: p.scene_id.clone(),
            person_key: p.person_key.clone(),
        })?;
        if let NormalizedLabel::Canonical(l) = &p.final_label {
            if !label_index.contains_key(l) {
                return Err(ScoreError::UnknownLabel(l.to_string()));
            }
        }
        pairs.push((row, &p.final_label));
    }
    if let Some(t) = truth
        .iter()
        .find(|t| !predicted_keys.contains(&(t.scene_id.as_str(), t.person_key.as_str())))
    {
        return Err(ScoreError::MissingPrediction {
            scene_id: t.scene_id.clone(),
            person_key: t.person_key.clone(),
            variant,
        });
    }

    let extra: BTreeSet<&str> = pairs
        .iter()
        .filter_map(|(_, p)| match p {
            NormalizedLabel::OutOfList(s) => Some(s.as_str()),
            NormalizedLabel::Canonical(_) => None,
        })
        .collect();
    let mut columns: Vec<NormalizedLabel> = labels.iter().cloned().map(NormalizedLabel::Canonical).collect();
    columns.extend(extra.iter().map(|s| NormalizedLabel::OutOfList(s.to_string())));
    let column_index: HashMap<&NormalizedLabel, usize> = columns.iter().enumerate().map(|(i, c)| (c, i)).collect();

    let mut counts = vec![vec![0u64; columns.len()]; labels.len()];
    for (row, predicted) in &pairs {
        counts[*row][column_index[predicted]] += 1;
    }

    let per_label = labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let tp = counts[i][i];
            let support: u64 = counts[i].iter().sum();
            let predicted: u64 = counts.iter().map(|r| r[i]).sum();
            let precision = safe_ratio(tp, predicted);
            let recall = safe_ratio(tp, support);
            LabelMetrics {
                label: label.clone(),
                precision,
                recall,
                f1: f1_score(precision, recall),
                support,
                true_positives: tp,
                predicted,
            }
        })
        .collect();

    let matrix = ConfusionMatrix {
        rows: labels.to_vec(),
        columns,
        counts,
    };
    let correct = matrix.trace();
    let total = pairs.len() as u64;
    Ok(EvaluationReport {
        variant,
        per_label,
        accuracy: safe_ratio(correct, total),
        correct,
        total,
        matrix,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChanceBaselines {
    /// Expected accuracy of a uniform guess over the label set.
    pub uniform: f64,
    /// Accuracy of always predicting the most frequent ground-truth label.
    pub majority_class: f64,
}

pub fn chance_baseline(truth: &[GroundTruthSample], labels: &[EmotionLabel]) -> Result<ChanceBaselines, ScoreError> {
    if truth.is_empty() {
        return Err(ScoreError::EmptyTruth);
    }
    if labels.is_empty() {
        return Err(ScoreError::EmptyLabelSet);
    }
    let mut counts: HashMap<&EmotionLabel, u64> = HashMap::new();
    for t in truth {
        *counts.entry(&t.label).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    Ok(ChanceBaselines {
        uniform: 1.0 / labels.len() as f64,
        majority_class: safe_ratio(top, truth.len() as u64),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelDelta {
    pub label: EmotionLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// `to - from` for every metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDelta {
    pub from: CaptionVariant,
    pub to: CaptionVariant,
    pub per_label: Vec<LabelDelta>,
    pub accuracy: f64,
}

impl ReportDelta {
    pub fn label(&self, label: &EmotionLabel) -> Option<&LabelDelta> {
        self.per_label.iter().find(|d| &d.label == label)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("reports cover different label sets")]
pub struct LabelSetMismatch;

pub fn compare_reports(from: &EvaluationReport, to: &EvaluationReport) -> Result<ReportDelta, LabelSetMismatch> {
    let a: Vec<&EmotionLabel> = from.per_label.iter().map(|m| &m.label).collect();
    let b: Vec<&EmotionLabel> = to.per_label.iter().map(|m| &m.label).collect();
    if a != b {
        return Err(LabelSetMismatch);
    }
    let per_label = from
        .per_label
        .iter()
        .zip(&to.per_label)
        .map(|(x, y)| LabelDelta {
            label: x.label.clone(),
            precision: y.precision - x.precision,
            recall: y.recall - x.recall,
            f1: y.f1 - x.f1,
        })
        .collect();
    Ok(ReportDelta {
        from: from.variant,
        to: to.variant,
        per_label,
        accuracy: to.accuracy - from.accuracy,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn two(x: f64) -> String {
    format!("{:.2}", round_half_up(x, 2))
}

fn variant_title(v: CaptionVariant) -> &'static str {
    match v {
        CaptionVariant::Full => "Full Caption",
        CaptionVariant::MinusInteractions => "Minus Interactions",
        CaptionVariant::MinusEnvironments => "Minus Environments",
    }
}

/// Rounded results table: one row per label with precision, recall and F1
/// for each report side by side, then a total-accuracy row.
pub fn reports_to_csv(reports: &[&EvaluationReport]) -> String {
    let mut out = String::from("Emotions");
    for r in reports {
        let t = variant_title(r.variant);
        let _ = write!(out, ",{t} Precision,{t} Recall,{t} F1 Score");
    }
    out.push('\n');
    if let Some(first) = reports.first() {
        for (i, m) in first.per_label.iter().enumerate() {
            out.push_str(&csv_field(m.label.as_str()));
            for r in reports {
                let m = &r.per_label[i];
                let _ = write!(out, ",{},{},{}", two(m.precision), two(m.recall), two(m.f1));
            }
            out.push('\n');
        }
    }
    out.push_str("Total Accuracy");
    for r in reports {
        let _ = write!(out, ",{},,", two(r.accuracy));
    }
    out.push('\n');
    out
}

/// Fixed-width text grid of the confusion matrix.
pub fn matrix_to_text(matrix: &ConfusionMatrix) -> String {
    let corner = "truth \\ predicted";
    let row_width = matrix
        .rows
        .iter()
        .map(|r| r.as_str().chars().count())
        .chain([corner.len(), "total".len()])
        .max()
        .unwrap_or(0);
    let widths: Vec<usize> = matrix
        .columns
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let max_count = matrix.counts.iter().map(|r| r[c].to_string().len()).max().unwrap_or(1);
            name.as_str().chars().count().max(max_count)
        })
        .collect();

    let mut out = format!("{corner:<row_width$}");
    for (name, w) in matrix.columns.iter().zip(&widths) {
        let _ = write!(out, " | {:>w$}", name.as_str());
    }
    out.push_str(" | total\n");
    for (r, label) in matrix.rows.iter().enumerate() {
        let _ = write!(out, "{:<row_width$}", label.as_str());
        for (c, w) in widths.iter().enumerate() {
            let _ = write!(out, " | {:>w$}", matrix.counts[r][c]);
        }
        let _ = writeln!(out, " | {}", matrix.row_sum(r));
    }
    out
}
