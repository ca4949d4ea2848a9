use std::collections::BTreeMap;

use emocap_core::aggregation::PredictionRecord;
use emocap_core::caption::CaptionVariant;
use emocap_core::evaluation::{chance_baseline, compare_reports, round_half_up, score, EvaluationReport};
use emocap_core::scene::GroundTruthSample;
use emocap_core::taxonomy::{EmotionLabel, NormalizedLabel, SignalLexicon};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

struct Tally {
    precision: f64,
    recall: f64,
    f1: f64,
}

/// Counts directly from the pairs, one label at a time.
fn brute_force(pairs: &[(String, String)], labels: &[String]) -> (BTreeMap<String, Tally>, f64) {
    let mut out = BTreeMap::new();
    for label in labels {
        let mut tp = 0u32;
        let mut fp = 0u32;
        let mut fn_ = 0u32;
        for (truth, pred) in pairs {
            match (truth == label, pred == label) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
        out.insert(label.clone(), Tally { precision: p, recall: r, f1: f });
    }
    let correct = pairs.iter().filter(|(t, p)| t == p).count();
    (out, correct as f64 / pairs.len() as f64)
}

fn build_for(
    pairs: &[(String, String)],
    lexicon: &SignalLexicon,
    variant: CaptionVariant,
) -> (Vec<PredictionRecord>, Vec<GroundTruthSample>) {
    let mut preds = Vec::new();
    let mut truth = Vec::new();
    for (i, (t, p)) in pairs.iter().enumerate() {
        let scene_id = format!("scene-{}", i / 2);
        let person_key = format!("p{}", i % 2);
        truth.push(GroundTruthSample {
            scene_id: scene_id.clone(),
            person_key: person_key.clone(),
            label: EmotionLabel::new(t.clone()),
        });
        let normalized = lexicon.normalize(p);
        preds.push(PredictionRecord {
            scene_id,
            person_key,
            variant,
            raw: vec![p.clone()],
            normalized: vec![normalized.clone()],
            final_label: normalized,
            tie_broken: false,
        });
    }
    (preds, truth)
}

fn build(pairs: &[(String, String)], lexicon: &SignalLexicon) -> (Vec<PredictionRecord>, Vec<GroundTruthSample>) {
    build_for(pairs, lexicon, CaptionVariant::Full)
}

fn dataset() -> impl Strategy<Value = Vec<(String, String)>> {
    let labels: Vec<String> = SignalLexicon::default_lexicon().labels().iter().map(|l| l.to_string()).collect();
    let mut predicted = labels.clone();
    predicted.extend(["Happiness".to_string(), "Boredom".to_string()]);
    prop::collection::vec((prop::sample::select(labels), prop::sample::select(predicted)), 1..=50)
}

#[test]
fn score_matches_brute_force_on_random_datasets() {
    let lexicon = SignalLexicon::default_lexicon();
    let labels = lexicon.labels();
    let names: Vec<String> = labels.iter().map(|l| l.to_string()).collect();
    let mut runner = TestRunner::new(Config { cases: 100, ..Config::default() });
    runner
        .run(&dataset(), |pairs| {
            let (preds, truth) = build(&pairs, &lexicon);
            let report = score(&preds, &truth, CaptionVariant::Full, &labels).unwrap();
            let (oracle, accuracy) = brute_force(&pairs, &names);
            prop_assert!((report.accuracy - accuracy).abs() < 1e-12);
            for m in &report.per_label {
                let o = &oracle[m.label.as_str()];
                prop_assert!((m.precision - o.precision).abs() < 1e-12);
                prop_assert!((m.recall - o.recall).abs() < 1e-12);
                prop_assert!((m.f1 - o.f1).abs() < 1e-12);
            }
            prop_assert_eq!(report.matrix.total(), pairs.len() as u64);
            prop_assert_eq!(report.matrix.trace(), report.correct);
            Ok(())
        })
        .unwrap();
}

proptest! {
    #[test]
    fn matrix_rows_sum_to_support(pairs in dataset()) {
        let lexicon = SignalLexicon::default_lexicon();
        let labels = lexicon.labels();
        let (preds, truth) = build(&pairs, &lexicon);
        let report = score(&preds, &truth, CaptionVariant::Full, &labels).unwrap();
        for (i, m) in report.per_label.iter().enumerate() {
            prop_assert_eq!(report.matrix.row_sum(i), m.support);
            prop_assert!(m.precision >= 0.0 && m.precision <= 1.0);
            prop_assert!(m.recall >= 0.0 && m.recall <= 1.0);
            prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
            prop_assert!(m.f1 >= m.precision.min(m.recall) - 1e-12 || m.f1 == 0.0);
        }
        for col in report.matrix.out_of_list_columns() {
            prop_assert!(matches!(col, NormalizedLabel::OutOfList(_)));
        }
    }

    #[test]
    fn perfect_predictions_score_one(labels_idx in prop::collection::vec(0usize..13, 1..40)) {
        let lexicon = SignalLexicon::default_lexicon();
        let labels = lexicon.labels();
        let pairs: Vec<_> = labels_idx
            .iter()
            .map(|&i| (labels[i].to_string(), labels[i].to_string()))
            .collect();
        let (preds, truth) = build(&pairs, &lexicon);
        let report = score(&preds, &truth, CaptionVariant::Full, &labels).unwrap();
        prop_assert_eq!(report.accuracy, 1.0);
        for m in report.per_label.iter().filter(|m| m.support > 0) {
            prop_assert_eq!(m.f1, 1.0);
        }
    }
}

fn report_with(variant: CaptionVariant, rows: &[(&str, f64, f64, f64)]) -> EvaluationReport {
    let lexicon = SignalLexicon::default_lexicon();
    let labels = lexicon.labels();
    let pairs: Vec<_> = labels.iter().map(|l| (l.to_string(), l.to_string())).collect();
    let (preds, truth) = build_for(&pairs, &lexicon, variant);
    let mut report = score(&preds, &truth, variant, &labels).unwrap();
    for (name, p, r, f) in rows {
        let m = report.per_label.iter_mut().find(|m| m.label.as_str() == *name).unwrap();
        m.precision = *p;
        m.recall = *r;
        m.f1 = *f;
    }
    report
}

#[test]
fn ablation_deltas_on_published_rows() {
    let phys = "Pain/Suffering (physical)";
    let full = report_with(CaptionVariant::Full, &[(phys, 0.86, 0.63, 0.73), ("Fear", 0.39, 0.77, 0.52)]);
    let minus_i = report_with(CaptionVariant::MinusInteractions, &[(phys, 0.75, 0.40, 0.52)]);
    let minus_e = report_with(CaptionVariant::MinusEnvironments, &[("Fear", 0.26, 0.50, 0.34)]);

    let d = compare_reports(&full, &minus_i).unwrap();
    assert_eq!(round_half_up(d.label(&EmotionLabel::new(phys)).unwrap().f1, 2), -0.21);
    let d = compare_reports(&full, &minus_e).unwrap();
    assert_eq!(round_half_up(d.label(&EmotionLabel::new("Fear")).unwrap().f1, 2), -0.18);
    assert_eq!(d.from, CaptionVariant::Full);
    assert_eq!(d.to, CaptionVariant::MinusEnvironments);
}

#[test]
fn chance_baselines_for_published_distribution() {
    // per-label totals of the evaluated dataset
    let totals = [
        ("Anger", 30), ("Annoyance", 30), ("Aversion", 30), ("Confusion", 16), ("Disapproval", 30),
        ("Disconnection", 30), ("Disquietment", 30), ("Embarrassment", 14), ("Fatigue", 30), ("Fear", 30),
        ("Pain/Suffering (emotional)", 30), ("Pain/Suffering (physical)", 30), ("Sadness", 30),
    ];
    let lexicon = SignalLexicon::default_lexicon();
    let labels = lexicon.labels();
    let mut truth = Vec::new();
    for (label, n) in totals {
        for i in 0..n {
            truth.push(GroundTruthSample {
                scene_id: format!("{label}-{i}"),
                person_key: "p".into(),
                label: EmotionLabel::new(label),
            });
        }
    }
    let b = chance_baseline(&truth, &labels).unwrap();
    assert!((b.uniform - 1.0 / 13.0).abs() < 1e-12);
    assert_eq!(round_half_up(b.uniform, 2), 0.08);
    assert!((b.majority_class - 30.0 / 360.0).abs() < 1e-12);
}
