use emocap_core::evaluation::{f1_score, round_half_up};
use emocap_core::taxonomy::{NormalizedLabel, SignalLexicon};

const RESULTS: &str = include_str!("fixtures/published_results.csv");
const COUNTS: &str = include_str!("fixtures/published_counts.csv");

fn rows(csv: &str) -> Vec<(String, Vec<f64>)> {
    csv.lines()
        .skip(1)
        .map(|line| {
            let mut cells = line.split(',');
            let label = cells.next().unwrap().to_string();
            (label, cells.map(|c| c.parse().unwrap()).collect())
        })
        .collect()
}

fn hundredths(x: f64) -> i64 {
    (round_half_up(x, 2) * 100.0).round() as i64
}

#[test]
fn every_published_f1_follows_from_its_precision_and_recall() {
    let mut checked = 0;
    for (label, v) in rows(RESULTS) {
        for triple in v.chunks(3) {
            let (p, r, f) = (triple[0], triple[1], triple[2]);
            let computed = f1_score(p, r);
            // oracle: harmonic mean written out longhand
            let longhand = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            assert!((computed - longhand).abs() < 1e-12);
            let diff = (hundredths(computed) - hundredths(f)).abs();
            assert!(diff <= 1, "{label}: P={p} R={r} F1={f} computed {computed:.4}");
            checked += 1;
        }
    }
    assert_eq!(checked, 39);
}

#[test]
fn published_rows_use_the_default_label_set() {
    let lexicon = SignalLexicon::default_lexicon();
    let labels: Vec<String> = lexicon.labels().iter().map(|l| l.to_string()).collect();
    for csv in [RESULTS, COUNTS] {
        let names: Vec<String> = rows(csv).into_iter().map(|(l, _)| l).collect();
        assert_eq!(names, labels);
    }
    // the printed spellings normalize to the same labels
    for printed in ["Pain/Suffering - Emotional", "Pain/Suffering - Physical"] {
        assert!(matches!(lexicon.normalize(printed), NormalizedLabel::Canonical(_)));
    }
}

#[test]
fn published_counts_add_up() {
    let rows = rows(COUNTS);
    let one: f64 = rows.iter().map(|(_, v)| v[0]).sum();
    let multi: f64 = rows.iter().map(|(_, v)| v[1]).sum();
    let total: f64 = rows.iter().map(|(_, v)| v[2]).sum();
    for (label, v) in &rows {
        assert_eq!(v[0] + v[1], v[2], "{label}");
    }
    assert_eq!((one, multi, total), (192.0, 168.0, 360.0));
}
