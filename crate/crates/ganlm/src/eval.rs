//! Classification metrics and CSV report emission.
//!
//! Precision, recall, and F1 follow the binary positive-class convention;
//! a zero denominator makes the metric absent ("N/A" in reports) rather
//! than zero, so degenerate collapse is distinguishable from a true zero
//! score. Numbers print with 5 decimal places.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Confusion counts plus derived metrics for one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub positive_class: String,
    pub n_test: usize,
}

/// Confusion-matrix metrics of predictions against gold labels, with
/// `positive_class` defining the tp/fp/fn/tn convention.
pub fn compute_metrics(
    predictions: &[String],
    gold_labels: &[String],
    positive_class: &str,
) -> Result<MetricsReport> {
    if predictions.len() != gold_labels.len() {
        return Err(Error::Contract(format!(
            "compute_metrics: {} predictions vs {} gold labels",
            predictions.len(),
            gold_labels.len()
        )));
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut tn = 0;
    for (pred, gold) in predictions.iter().zip(gold_labels.iter()) {
        match (pred == positive_class, gold == positive_class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let n_test = predictions.len();
    let correct = predictions
        .iter()
        .zip(gold_labels.iter())
        .filter(|(p, g)| p == g)
        .count();
    let accuracy = if n_test == 0 {
        0.0
    } else {
        correct as f64 / n_test as f64
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(MetricsReport {
        tp,
        fp,
        fn_,
        tn,
        accuracy,
        precision,
        recall,
        f1,
        positive_class: positive_class.to_string(),
        n_test,
    })
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Render an optional metric, `N/A` when absent.
pub fn format_metric(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.5}"),
        None => "N/A".to_string(),
    }
}

/// One row of a results table.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub model: String,
    pub n_labeled: usize,
    pub report: MetricsReport,
}

/// CSV with columns `model,n_labeled,accuracy,precision,recall,f1`, rows in
/// ascending labeled-count order.
pub fn emit_results_table(path: &Path, runs: &[RunResult]) -> Result<()> {
    if runs.is_empty() {
        return Err(Error::Contract(
            "emit_results_table: need at least one run".into(),
        ));
    }
    let mut sorted: Vec<&RunResult> = runs.iter().collect();
    sorted.sort_by(|a, b| a.n_labeled.cmp(&b.n_labeled).then(a.model.cmp(&b.model)));
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "model,n_labeled,accuracy,precision,recall,f1")?;
    for run in sorted {
        writeln!(
            out,
            "{},{},{:.5},{},{},{}",
            run.model,
            run.n_labeled,
            run.report.accuracy,
            format_metric(run.report.precision),
            format_metric(run.report.recall),
            format_metric(run.report.f1),
        )?;
    }
    Ok(())
}

/// Two-column CSV of test accuracy against epoch number (1-based).
pub fn emit_curves(path: &Path, accuracies: &[f64]) -> Result<()> {
    if accuracies.is_empty() {
        return Err(Error::Contract("emit_curves: empty training log".into()));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,test_accuracy")?;
    for (i, acc) in accuracies.iter().enumerate() {
        writeln!(out, "{},{acc:.5}", i + 1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    fn labels(spec: &[(&str, usize)]) -> Vec<String> {
        spec.iter()
            .flat_map(|&(name, n)| std::iter::repeat_n(name.to_string(), n))
            .collect()
    }

    #[test]
    fn perfect_classifier_scores_one() {
        let gold = labels(&[("fake", 3), ("authentic", 5)]);
        let report = compute_metrics(&gold, &gold, "fake").unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.precision, Some(1.0));
        assert_eq!(report.recall, Some(1.0));
        assert_eq!(report.f1, Some(1.0));
    }

    #[test]
    fn hand_computed_confusion_matrix() {
        // tp=3 fp=1 fn=1 tn=5
        let gold = labels(&[("fake", 3), ("authentic", 1), ("fake", 1), ("authentic", 5)]);
        let pred = labels(&[("fake", 3), ("fake", 1), ("authentic", 1), ("authentic", 5)]);
        let report = compute_metrics(&pred, &gold, "fake").unwrap();
        assert_eq!((report.tp, report.fp, report.fn_, report.tn), (3, 1, 1, 5));
        assert_eq!(report.accuracy, 0.8);
        assert_eq!(report.precision, Some(0.75));
        assert_eq!(report.recall, Some(0.75));
        assert_eq!(report.f1, Some(0.75));
    }

    #[test]
    fn absent_metrics_when_no_positives_anywhere() {
        let gold = labels(&[("authentic", 4)]);
        let report = compute_metrics(&gold, &gold, "fake").unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.precision, None);
        assert_eq!(report.recall, None);
        assert_eq!(report.f1, None);
    }

    #[test]
    fn f1_absent_when_precision_and_recall_both_zero() {
        // one false positive, one false negative, zero true positives
        let gold = labels(&[("fake", 1), ("authentic", 1)]);
        let pred = labels(&[("authentic", 1), ("fake", 1)]);
        let report = compute_metrics(&pred, &gold, "fake").unwrap();
        assert_eq!(report.precision, Some(0.0));
        assert_eq!(report.recall, Some(0.0));
        assert_eq!(report.f1, None);
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        let gold = labels(&[("fake", 2)]);
        let pred = labels(&[("fake", 3)]);
        assert!(compute_metrics(&pred, &gold, "fake").is_err());
    }

    /// Brute-force oracle: count every cell by scanning all pairs.
    fn oracle(pred: &[String], gold: &[String], pos: &str) -> (usize, usize, usize, usize) {
        let tp = pred
            .iter()
            .zip(gold)
            .filter(|(p, g)| p.as_str() == pos && g.as_str() == pos)
            .count();
        let fp = pred
            .iter()
            .zip(gold)
            .filter(|(p, g)| p.as_str() == pos && g.as_str() != pos)
            .count();
        let fn_ = pred
            .iter()
            .zip(gold)
            .filter(|(p, g)| p.as_str() != pos && g.as_str() == pos)
            .count();
        let tn = pred
            .iter()
            .zip(gold)
            .filter(|(p, g)| p.as_str() != pos && g.as_str() != pos)
            .count();
        (tp, fp, fn_, tn)
    }

    #[test]
    fn matches_brute_force_oracle_on_random_cases() {
        let classes = ["fake", "authentic"];
        let mut rng = Rng::new(77);
        for _ in 0..200 {
            let n = 1 + rng.next_below(30);
            let pred: Vec<String> = (0..n)
                .map(|_| classes[rng.next_below(2)].to_string())
                .collect();
            let gold: Vec<String> = (0..n)
                .map(|_| classes[rng.next_below(2)].to_string())
                .collect();
            let report = compute_metrics(&pred, &gold, "fake").unwrap();
            let (tp, fp, fn_, tn) = oracle(&pred, &gold, "fake");
            assert_eq!((report.tp, report.fp, report.fn_, report.tn), (tp, fp, fn_, tn));
            assert_eq!(tp + fp + fn_ + tn, report.n_test);
        }
    }

    #[test]
    fn swapping_positive_class_transposes_roles() {
        let mut rng = Rng::new(88);
        let classes = ["fake", "authentic"];
        let pred: Vec<String> = (0..50)
            .map(|_| classes[rng.next_below(2)].to_string())
            .collect();
        let gold: Vec<String> = (0..50)
            .map(|_| classes[rng.next_below(2)].to_string())
            .collect();
        let as_fake = compute_metrics(&pred, &gold, "fake").unwrap();
        let as_auth = compute_metrics(&pred, &gold, "authentic").unwrap();
        // swapping the positive class maps tp<->tn and fp<->fn
        assert_eq!(as_fake.tp, as_auth.tn);
        assert_eq!(as_fake.fp, as_auth.fn_);
        assert_eq!(as_fake.accuracy, as_auth.accuracy);
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let gold = labels(&[("fake", 5), ("authentic", 7)]);
        let pred = labels(&[("fake", 3), ("authentic", 2), ("fake", 4), ("authentic", 3)]);
        let base = compute_metrics(&pred, &gold, "fake").unwrap();
        let mut rng = Rng::new(99);
        let mut order: Vec<usize> = (0..gold.len()).collect();
        rng.shuffle(&mut order);
        let pred_p: Vec<String> = order.iter().map(|&i| pred[i].clone()).collect();
        let gold_p: Vec<String> = order.iter().map(|&i| gold[i].clone()).collect();
        let shuffled = compute_metrics(&pred_p, &gold_p, "fake").unwrap();
        assert_eq!(base, shuffled);
    }

    #[test]
    fn results_table_roundtrip_and_order() {
        let make = |n_labeled: usize, acc: f64| RunResult {
            model: "mini".into(),
            n_labeled,
            report: MetricsReport {
                tp: 1,
                fp: 1,
                fn_: 1,
                tn: 1,
                accuracy: acc,
                precision: Some(acc * 0.9),
                recall: Some(acc * 0.8),
                f1: Some(acc * 0.85),
                positive_class: "fake".into(),
                n_test: 4,
            },
        };
        let runs: Vec<RunResult> = [1024, 32, 64, 512, 128, 256]
            .iter()
            .enumerate()
            .map(|(i, &n)| make(n, 0.5 + i as f64 * 0.05))
            .collect();
        let f = tempfile::NamedTempFile::new().unwrap();
        emit_results_table(f.path(), &runs).unwrap();
        let content = std::fs::read_to_string(f.path()).unwrap();
        let lines: Vec<&str> = content.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "model,n_labeled,accuracy,precision,recall,f1");
        let ns: Vec<usize> = lines[1..]
            .iter()
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(ns, vec![32, 64, 128, 256, 512, 1024]);
        // parse back to 5 decimals
        for (line, run) in lines[1..].iter().zip(
            runs.iter()
                .map(|r| (r.n_labeled, r.report.accuracy))
                .collect::<std::collections::BTreeMap<_, _>>()
                .values(),
        ) {
            let acc: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
            assert!((acc - run).abs() < 5e-6);
        }
    }

    #[test]
    fn results_table_renders_na() {
        let runs = vec![RunResult {
            model: "mini".into(),
            n_labeled: 1024,
            report: MetricsReport {
                tp: 0,
                fp: 0,
                fn_: 2,
                tn: 2,
                accuracy: 0.46094,
                precision: None,
                recall: Some(0.0),
                f1: None,
                positive_class: "fake".into(),
                n_test: 4,
            },
        }];
        let f = tempfile::NamedTempFile::new().unwrap();
        emit_results_table(f.path(), &runs).unwrap();
        let content = std::fs::read_to_string(f.path()).unwrap();
        assert!(content.contains("0.46094,N/A,0.00000,N/A"), "{content}");
    }

    #[test]
    fn curves_emit_one_row_per_epoch() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let accs = [0.5, 0.6, 0.62, 0.7, 0.71, 0.72, 0.75];
        emit_curves(f.path(), &accs).unwrap();
        let content = std::fs::read_to_string(f.path()).unwrap();
        let lines: Vec<&str> = content.lines().collect();
        assert_eq!(lines.len(), 8);
        assert_eq!(lines[1], "1,0.50000");
        assert_eq!(lines[7], "7,0.75000");
        let epochs: Vec<usize> = lines[1..]
            .iter()
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert!(epochs.windows(2).all(|w| w[1] == w[0] + 1) && epochs[0] == 1);
        for l in &lines[1..] {
            let acc: f64 = l.split(',').nth(1).unwrap().parse().unwrap();
            assert!((0.0..=1.0).contains(&acc));
        }
    }
}
