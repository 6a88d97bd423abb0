//! Side-by-side summaries of two metrics CSVs.

use std::fmt;

use crate::harness::metrics::MetricsRow;

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub epochs: usize,
    /// First epoch with train error at or below the threshold; `None` if never.
    pub epochs_to_threshold: Option<usize>,
    pub final_train_error: Option<f64>,
    pub final_val_error: Option<f64>,
    pub total_update_passes: u64,
    pub total_remedial_epochs: u64,
}

impl RunSummary {
    pub fn from_rows(rows: &[MetricsRow], threshold: f64) -> Self {
        let last = rows.last();
        Self {
            epochs: rows.len(),
            epochs_to_threshold: rows.iter().find(|r| r.train_error <= threshold).map(|r| r.epoch),
            final_train_error: last.map(|r| r.train_error),
            final_val_error: last.and_then(|r| r.val_error),
            total_update_passes: last.map_or(0, |r| r.update_passes),
            total_remedial_epochs: last.map_or(0, |r| r.remedial_epochs_total),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub threshold: f64,
    pub a: RunSummary,
    pub b: RunSummary,
}

impl Comparison {
    /// `b − a` epochs to threshold, when both runs reached it.
    pub fn epoch_delta(&self) -> Option<i64> {
        Some(self.b.epochs_to_threshold? as i64 - self.a.epochs_to_threshold? as i64)
    }
}

pub fn compare_runs(a: &[MetricsRow], b: &[MetricsRow], threshold: f64) -> Comparison {
    Comparison {
        threshold,
        a: RunSummary::from_rows(a, threshold),
        b: RunSummary::from_rows(b, threshold),
    }
}

pub const NOT_REACHED: &str = "not reached";

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| NOT_REACHED.to_string(), |v| v.to_string())
}

fn opt_err(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<28}{:>14}{:>14}", "", "A", "B")?;
        let th = format!("epochs to train <= {}", self.threshold);
        writeln!(f, "{th:<28}{:>14}{:>14}", opt(self.a.epochs_to_threshold), opt(self.b.epochs_to_threshold))?;
        writeln!(f, "{:<28}{:>14}{:>14}", "epochs run", self.a.epochs, self.b.epochs)?;
        writeln!(
            f,
            "{:<28}{:>14}{:>14}",
            "final train error",
            opt_err(self.a.final_train_error),
            opt_err(self.b.final_train_error)
        )?;
        writeln!(
            f,
            "{:<28}{:>14}{:>14}",
            "final val error",
            opt_err(self.a.final_val_error),
            opt_err(self.b.final_val_error)
        )?;
        writeln!(
            f,
            "{:<28}{:>14}{:>14}",
            "total update passes", self.a.total_update_passes, self.b.total_update_passes
        )?;
        writeln!(
            f,
            "{:<28}{:>14}{:>14}",
            "total remedial epochs", self.a.total_remedial_epochs, self.b.total_remedial_epochs
        )?;
        write!(f, "epoch delta (B - A): {}", opt(self.epoch_delta()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(errors: &[f64]) -> Vec<MetricsRow> {
        errors
            .iter()
            .enumerate()
            .map(|(i, &e)| MetricsRow {
                epoch: i + 1,
                train_error: e,
                val_error: Some(e + 0.1),
                remedial_epochs_total: 0,
                update_passes: 4 * (i as u64 + 1),
                wall_clock_s: 0.0,
            })
            .collect()
    }

    #[test]
    fn identical_runs() {
        let rows = curve(&[0.5, 0.3, 0.1]);
        let c = compare_runs(&rows, &rows, 0.2);
        assert_eq!(c.a, c.b);
        assert_eq!(c.epoch_delta(), Some(0));
    }

    #[test]
    fn first_crossing_epochs() {
        let mut a = vec![0.5; 39];
        a.push(0.2);
        let mut b = vec![0.5; 59];
        b.extend([0.19, 0.3]);
        let c = compare_runs(&curve(&a), &curve(&b), 0.20);
        assert_eq!(c.a.epochs_to_threshold, Some(40));
        assert_eq!(c.b.epochs_to_threshold, Some(60));
        assert_eq!(c.epoch_delta(), Some(20));
        assert_eq!(c.b.total_update_passes, 4 * 61);
    }

    #[test]
    fn never_reached_is_a_sentinel() {
        let c = compare_runs(&curve(&[0.5, 0.4]), &curve(&[0.1]), 0.2);
        assert_eq!(c.a.epochs_to_threshold, None);
        assert_eq!(c.epoch_delta(), None);
        let text = c.to_string();
        assert!(text.contains(NOT_REACHED), "{text}");
    }
}
