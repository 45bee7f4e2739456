//! Classification metrics from confusion counts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("empty total: no samples counted")]
    EmptyTotal,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub loss: f64,
}

/// accuracy = (tp+tn)/total, precision = tp/(tp+fp), recall = tp/(tp+fn),
/// f1 = 2PR/(P+R); each ratio is 0 when its denominator is 0.
pub fn metrics_from_confusion(c: &Confusion) -> Result<Metrics, MetricsError> {
    let total = c.total();
    if total == 0 {
        return Err(MetricsError::EmptyTotal);
    }
    let accuracy = (c.tp + c.tn) as f64 / total as f64;
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Metrics { accuracy, precision, recall, f1, loss: 0.0 })
}

/// F1 directly from precision/recall values, for report tables built from
/// published numbers rather than raw counts.
pub fn f1_from_pr(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let m = metrics_from_confusion(&Confusion { tp: 5, fp: 0, fn_: 0, tn: 5 }).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn degenerate_all_negative() {
        let m = metrics_from_confusion(&Confusion { tp: 0, fp: 0, fn_: 0, tn: 10 }).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_total_is_error() {
        assert_eq!(
            metrics_from_confusion(&Confusion::default()),
            Err(MetricsError::EmptyTotal)
        );
    }

    #[test]
    fn f1_reproduces_published_pr_pairs() {
        // 50-epoch table
        assert!((f1_from_pr(0.9945, 0.9955) - 0.9950).abs() < 5e-4);
        assert!((f1_from_pr(0.9955, 0.9965) - 0.9960).abs() < 5e-4);
        assert!((f1_from_pr(0.9964, 0.9984) - 0.9974).abs() < 5e-4);
        // 100-epoch table
        assert!((f1_from_pr(0.9949, 0.9904) - 0.9927).abs() < 5e-4);
        assert!((f1_from_pr(0.9945, 0.9950) - 0.9947).abs() < 5e-4);
        assert!((f1_from_pr(0.9946, 0.9963) - 0.9954).abs() < 5e-4);
    }

    #[test]
    fn f1_invariant_holds_when_pr_positive() {
        let m = metrics_from_confusion(&Confusion { tp: 7, fp: 3, fn_: 2, tn: 8 }).unwrap();
        let expect = 2.0 * m.precision * m.recall / (m.precision + m.recall);
        assert!((m.f1 - expect).abs() < 1e-15);
    }
}
