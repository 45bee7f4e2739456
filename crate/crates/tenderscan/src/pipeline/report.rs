//! Model-comparison report over completed training runs.

use crate::neuralnet::{Arch, EpochRow, Metrics};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no completed runs to compare")]
    MissingRun,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Final metrics of one (architecture, epoch budget) training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub arch: Arch,
    pub epochs: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub rows: Vec<RunMetrics>,
    pub selected: RunMetrics,
}

/// Sort key implementing the selection rule: best F1, ties broken by recall
/// then accuracy; a final (arch, epochs) key makes the result independent of
/// input order even for fully identical metrics.
fn rank_key(r: &RunMetrics) -> (f64, f64, f64, std::cmp::Reverse<u8>, std::cmp::Reverse<usize>) {
    (
        r.metrics.f1,
        r.metrics.recall,
        r.metrics.accuracy,
        std::cmp::Reverse(r.arch.id()),
        std::cmp::Reverse(r.epochs),
    )
}

pub fn compare_models_report(runs: &[RunMetrics]) -> Result<ComparisonReport, ReportError> {
    if runs.is_empty() {
        return Err(ReportError::MissingRun);
    }
    let selected = runs
        .iter()
        .max_by(|a, b| {
            let (f1a, ra, aa, ia, ea) = rank_key(a);
            let (f1b, rb, ab, ib, eb) = rank_key(b);
            f1a.total_cmp(&f1b)
                .then(ra.total_cmp(&rb))
                .then(aa.total_cmp(&ab))
                .then(ia.cmp(&ib))
                .then(ea.cmp(&eb))
        })
        .expect("non-empty")
        .clone();
    let mut rows = runs.to_vec();
    rows.sort_by(|a, b| (a.epochs, a.arch.id()).cmp(&(b.epochs, b.arch.id())));
    Ok(ComparisonReport { rows, selected })
}

impl ComparisonReport {
    /// Plain-text table, one row per run, plus the selection line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:>7} {:>10} {:>10} {:>8} {:>8}\n",
            "model", "epochs", "accuracy", "precision", "recall", "f1"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<12} {:>7} {:>10.4} {:>10.4} {:>8.4} {:>8.4}\n",
                r.arch.name(),
                r.epochs,
                r.metrics.accuracy,
                r.metrics.precision,
                r.metrics.recall,
                r.metrics.f1
            ));
        }
        out.push_str(&format!(
            "selected: {} @ {} epochs (f1 {:.4}, recall {:.4})\n",
            self.selected.arch.name(),
            self.selected.epochs,
            self.selected.metrics.f1,
            self.selected.metrics.recall
        ));
        out
    }
}

/// Per-epoch loss/accuracy curves, one CSV per run, named `{label}.csv`.
pub fn write_curves(dir: &Path, curves: &[(String, Vec<EpochRow>)]) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir)?;
    for (label, history) in curves {
        crate::neuralnet::write_history_csv(&dir.join(format!("{label}.csv")), history)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(arch: Arch, epochs: usize, acc: f64, p: f64, r: f64, f1: f64) -> RunMetrics {
        RunMetrics {
            arch,
            epochs,
            metrics: Metrics { accuracy: acc, precision: p, recall: r, f1, loss: 0.0 },
        }
    }

    /// The published six-run comparison grid.
    fn published_runs() -> Vec<RunMetrics> {
        vec![
            run(Arch::Resnet, 50, 0.9949, 0.9945, 0.9955, 0.9950),
            run(Arch::Googlenet, 50, 0.9959, 0.9955, 0.9965, 0.9960),
            run(Arch::Xception, 50, 0.9926, 0.9964, 0.9984, 0.9974),
            run(Arch::Resnet, 100, 0.9926, 0.9949, 0.9904, 0.9927),
            run(Arch::Googlenet, 100, 0.9947, 0.9945, 0.9950, 0.9947),
            run(Arch::Xception, 100, 0.9919, 0.9946, 0.9963, 0.9954),
        ]
    }

    #[test]
    fn published_grid_selects_xception_at_50() {
        let report = compare_models_report(&published_runs()).unwrap();
        assert_eq!(report.selected.arch, Arch::Xception);
        assert_eq!(report.selected.epochs, 50);
    }

    #[test]
    fn selection_invariant_under_row_reordering() {
        let mut runs = published_runs();
        let baseline = compare_models_report(&runs).unwrap();
        runs.reverse();
        let reversed = compare_models_report(&runs).unwrap();
        assert_eq!(baseline.selected, reversed.selected);
        assert_eq!(baseline.rows, reversed.rows);
        runs.swap(0, 3);
        let swapped = compare_models_report(&runs).unwrap();
        assert_eq!(baseline.selected, swapped.selected);
    }

    #[test]
    fn single_run_is_selected() {
        let only = vec![run(Arch::Resnet, 100, 0.9, 0.9, 0.9, 0.9)];
        let report = compare_models_report(&only).unwrap();
        assert_eq!(report.selected, only[0]);
    }

    #[test]
    fn equal_f1_breaks_tie_by_recall_then_accuracy() {
        let runs = vec![
            run(Arch::Resnet, 50, 0.99, 0.98, 0.90, 0.95),
            run(Arch::Googlenet, 50, 0.91, 0.92, 0.97, 0.95),
        ];
        assert_eq!(compare_models_report(&runs).unwrap().selected.arch, Arch::Googlenet);

        let runs = vec![
            run(Arch::Resnet, 50, 0.99, 0.98, 0.95, 0.95),
            run(Arch::Googlenet, 50, 0.91, 0.92, 0.95, 0.95),
        ];
        assert_eq!(compare_models_report(&runs).unwrap().selected.arch, Arch::Resnet);
    }

    #[test]
    fn empty_input_is_missing_run() {
        assert!(matches!(compare_models_report(&[]), Err(ReportError::MissingRun)));
    }

    #[test]
    fn render_mentions_every_run_and_the_selection() {
        let text = compare_models_report(&published_runs()).unwrap().render();
        assert_eq!(text.lines().count(), 8); // header + 6 rows + selection
        assert!(text.contains("selected: xception @ 50 epochs"));
    }
}
