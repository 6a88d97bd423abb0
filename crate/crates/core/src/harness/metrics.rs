//! Per-epoch metrics CSV.
//!
//! Header `epoch,train_error,val_error,remedial_epochs_total,update_passes,wall_clock_s`,
//! one row per epoch, LF line endings. Counters are cumulative. Errors use
//! Rust's shortest round-trip float formatting; `val_error` is empty when
//! the run has no validation split.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rsl::EpochRecord;

pub const METRICS_HEADER: &str = "epoch,train_error,val_error,remedial_epochs_total,update_passes,wall_clock_s";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_error: f64,
    pub val_error: Option<f64>,
    pub remedial_epochs_total: u64,
    pub update_passes: u64,
    pub wall_clock_s: f64,
}

impl MetricsRow {
    pub fn from_record(record: &EpochRecord, wall_clock_s: f64) -> Self {
        Self {
            epoch: record.epoch,
            train_error: record.train_error,
            val_error: record.validation_error,
            remedial_epochs_total: record.cumulative_remedial_epochs,
            update_passes: record.cumulative_update_passes,
            wall_clock_s,
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3}",
            self.epoch,
            self.train_error,
            self.val_error.map(|v| v.to_string()).unwrap_or_default(),
            self.remedial_epochs_total,
            self.update_passes,
            self.wall_clock_s
        )
    }
}

/// Writes the header on creation and flushes after every row.
pub struct MetricsWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl MetricsWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut writer = Self {
            out: BufWriter::new(file),
            path,
        };
        writer.write_line(METRICS_HEADER)?;
        Ok(writer)
    }

    pub fn write_row(&mut self, row: &MetricsRow) -> Result<()> {
        self.write_line(&row.to_line())
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text, path)
}

/// Parses metrics CSV text; `origin` names it in errors.
pub fn parse_metrics(text: &str, origin: &Path) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == METRICS_HEADER => {}
        other => {
            return Err(Error::parse(
                origin,
                Some(1),
                format!("expected header {METRICS_HEADER:?}, got {:?}", other.map_or("", |(_, h)| h)),
            ))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let err = |msg: String| Error::parse(origin, Some(i + 1), msg);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(err(format!("expected 6 fields, got {}", fields.len())));
        }
        let num = |idx: usize| -> Result<f64> {
            fields[idx]
                .parse()
                .map_err(|_| err(format!("field {} is not a number: {:?}", idx + 1, fields[idx])))
        };
        let int = |idx: usize| -> Result<u64> {
            fields[idx]
                .parse()
                .map_err(|_| err(format!("field {} is not an integer: {:?}", idx + 1, fields[idx])))
        };
        let row = MetricsRow {
            epoch: int(0)? as usize,
            train_error: num(1)?,
            val_error: if fields[2].is_empty() { None } else { Some(num(2)?) },
            remedial_epochs_total: int(3)?,
            update_passes: int(4)?,
            wall_clock_s: num(5)?,
        };
        let in_unit = |e: f64| (0.0..=1.0).contains(&e);
        if !in_unit(row.train_error) || !row.val_error.is_none_or(in_unit) {
            return Err(err("error rates must lie in [0, 1]".into()));
        }
        if row.epoch != rows.len() + 1 {
            return Err(err(format!("expected epoch {}, got {}", rows.len() + 1, row.epoch)));
        }
        if let Some(prev) = rows.last() {
            let prev: &MetricsRow = prev;
            if row.update_passes < prev.update_passes || row.remedial_epochs_total < prev.remedial_epochs_total {
                return Err(err("cumulative counters decreased".into()));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}
