//! The RSL outer loop and the conventional epoch-training baseline.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::network::Model;
use crate::rsl::schedule::{
    compute_threshold, remedial_epochs, BatchErrorReport, BatchPartition, MeanErrorThreshold, PiecewiseEpochMap,
};

/// Early stop when training error has not improved on its best value by at
/// least `min_delta` for `patience` consecutive epochs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plateau {
    pub min_delta: f64,
    pub patience: usize,
}

impl Default for Plateau {
    fn default() -> Self {
        Self {
            min_delta: 0.001,
            patience: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Termination {
    pub max_epochs: usize,
    pub plateau: Option<Plateau>,
    /// Stop as soon as the post-epoch training error is at or below this.
    pub target_train_error: Option<f64>,
}

impl Default for Termination {
    fn default() -> Self {
        Self {
            max_epochs: 150,
            plateau: None,
            target_train_error: None,
        }
    }
}

impl Termination {
    pub fn epochs(max_epochs: usize) -> Self {
        Self {
            max_epochs,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::Domain("max_epochs must be at least 1".into()));
        }
        if let Some(p) = self.plateau {
            if p.patience == 0 || !(p.min_delta >= 0.0 && p.min_delta.is_finite()) {
                return Err(Error::Domain(format!("invalid plateau rule {p:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    Plateau,
    TargetReached,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RemedialAssignment {
    pub batch: usize,
    pub epochs: u32,
}

/// Everything that happened in one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Batch errors from the main pass, measured before each batch's update.
    pub report: BatchErrorReport,
    pub threshold: MeanErrorThreshold,
    /// One entry per batch with error strictly above the threshold whose
    /// excess maps to a non-zero epoch count.
    pub remedial: Vec<RemedialAssignment>,
    /// Remedial steps taken this epoch.
    pub remedial_epochs: u64,
    /// Parameter updates this epoch: one per batch plus the remedial steps.
    pub update_passes: u64,
    pub cumulative_remedial_epochs: u64,
    pub cumulative_update_passes: u64,
    /// Mean training loss over the main pass.
    pub mean_loss: f64,
    /// Error on the full training set after the epoch (remedial steps included).
    pub train_error: f64,
    pub validation_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RslRunLog {
    pub records: Vec<EpochRecord>,
    pub stop_reason: StopReason,
}

impl RslRunLog {
    pub fn epochs_run(&self) -> usize {
        self.records.len()
    }

    pub fn total_update_passes(&self) -> u64 {
        self.records.last().map_or(0, |r| r.cumulative_update_passes)
    }

    pub fn total_remedial_epochs(&self) -> u64 {
        self.records.last().map_or(0, |r| r.cumulative_remedial_epochs)
    }

    pub fn final_train_error(&self) -> Option<f64> {
        self.records.last().map(|r| r.train_error)
    }

    pub fn final_validation_error(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.validation_error)
    }

    /// First epoch whose training error is at or below `threshold`.
    pub fn epochs_to_train_error(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.train_error <= threshold).map(|r| r.epoch)
    }
}

/// Called after every epoch; returning an error aborts training.
pub type EpochObserver<'a> = dyn FnMut(&EpochRecord) -> Result<()> + 'a;

/// Reinforcement sample learning.
///
/// Each epoch trains once on every batch of the fixed `partition`, takes the
/// mean batch error `C`, then gives each batch whose error exceeds `C`
/// `map(Er − C)` extra steps on that batch alone before the next epoch.
#[allow(clippy::too_many_arguments)]
pub fn rsl_train(
    model: &mut Model,
    train: &Dataset,
    validation: Option<&Dataset>,
    partition: &BatchPartition,
    map: &PiecewiseEpochMap,
    learning_rate: f64,
    termination: &Termination,
    observer: &mut EpochObserver<'_>,
) -> Result<RslRunLog> {
    run_loop(model, train, validation, partition, learning_rate, termination, observer, |model, epoch, report| {
        let threshold = compute_threshold(report)?;
        let mut remedial = Vec::new();
        for (batch, &er) in report.errors.iter().enumerate() {
            if er <= threshold.c {
                continue;
            }
            let epochs = remedial_epochs(er, threshold.c, map);
            if epochs == 0 {
                continue;
            }
            remedial.push(RemedialAssignment { batch, epochs });
            let (images, labels) = train.gather(&partition.batches()[batch]);
            for step in 1..=epochs {
                model
                    .train_step(&images, &labels, learning_rate)
                    .map_err(|e| e.context(format!("epoch {epoch}, batch {}, remedial step {step}", batch + 1)))?;
            }
        }
        Ok((threshold, remedial))
    })
}

/// Plain epoch training over the same fixed partition. The mean batch
/// error is still recorded; no batch receives extra steps.
pub fn conventional_train(
    model: &mut Model,
    train: &Dataset,
    validation: Option<&Dataset>,
    partition: &BatchPartition,
    learning_rate: f64,
    termination: &Termination,
    observer: &mut EpochObserver<'_>,
) -> Result<RslRunLog> {
    run_loop(model, train, validation, partition, learning_rate, termination, observer, |_, _, report| {
        Ok((compute_threshold(report)?, Vec::new()))
    })
}

#[allow(clippy::too_many_arguments)]
fn run_loop(
    model: &mut Model,
    train: &Dataset,
    validation: Option<&Dataset>,
    partition: &BatchPartition,
    learning_rate: f64,
    termination: &Termination,
    observer: &mut EpochObserver<'_>,
    mut remediate: impl FnMut(&mut Model, usize, &BatchErrorReport) -> Result<(MeanErrorThreshold, Vec<RemedialAssignment>)>,
) -> Result<RslRunLog> {
    termination.validate()?;
    if partition.sample_count() != train.len() || partition.batches().iter().flatten().any(|&i| i >= train.len()) {
        return Err(Error::Domain(format!(
            "partition covers {} samples but the training set has {}",
            partition.sample_count(),
            train.len()
        )));
    }

    let mut records: Vec<EpochRecord> = Vec::new();
    let (mut total_remedial, mut total_passes) = (0u64, 0u64);
    let mut best_train_error = f64::INFINITY;
    let mut stale_epochs = 0;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=termination.max_epochs {
        let mut errors = Vec::with_capacity(partition.len());
        let mut loss_sum = 0.0;
        for (b, batch) in partition.batches().iter().enumerate() {
            let (images, labels) = train.gather(batch);
            let stats = model
                .train_step(&images, &labels, learning_rate)
                .map_err(|e| e.context(format!("epoch {epoch}, batch {}", b + 1)))?;
            errors.push(stats.error_rate);
            loss_sum += stats.mean_loss * batch.len() as f64;
        }
        let report = BatchErrorReport { epoch, errors };
        let (threshold, remedial) = remediate(model, epoch, &report)?;

        let remedial_epochs: u64 = remedial.iter().map(|a| u64::from(a.epochs)).sum();
        let update_passes = partition.len() as u64 + remedial_epochs;
        total_remedial += remedial_epochs;
        total_passes += update_passes;

        let train_error = train.error_rate(model).map_err(|e| e.context(format!("epoch {epoch} evaluation")))?;
        let validation_error = validation
            .map(|v| v.error_rate(model))
            .transpose()
            .map_err(|e| e.context(format!("epoch {epoch} validation")))?;

        let record = EpochRecord {
            epoch,
            report,
            threshold,
            remedial,
            remedial_epochs,
            update_passes,
            cumulative_remedial_epochs: total_remedial,
            cumulative_update_passes: total_passes,
            mean_loss: loss_sum / train.len() as f64,
            train_error,
            validation_error,
        };
        log::debug!(
            "epoch {epoch}: C={:.4} remedial={} train_error={:.4} val_error={:?}",
            record.threshold.c,
            record.remedial_epochs,
            record.train_error,
            record.validation_error
        );
        observer(&record)?;
        records.push(record);

        if termination.target_train_error.is_some_and(|t| train_error <= t) {
            stop_reason = StopReason::TargetReached;
            break;
        }
        if let Some(p) = termination.plateau {
            if train_error < best_train_error - p.min_delta {
                best_train_error = train_error;
                stale_epochs = 0;
            } else {
                best_train_error = best_train_error.min(train_error);
                stale_epochs += 1;
                if stale_epochs >= p.patience {
                    stop_reason = StopReason::Plateau;
                    break;
                }
            }
        }
    }
    Ok(RslRunLog { records, stop_reason })
}
