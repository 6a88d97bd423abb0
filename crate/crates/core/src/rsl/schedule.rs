//! Batch partitions, per-epoch batch error reports, the mean-error threshold,
//! and the piecewise map from error excess to remedial epochs.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Disjoint batches of sample indices covering `0..dataset_size`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchPartition {
    batches: Vec<Vec<usize>>,
    seed: u64,
}

impl BatchPartition {
    /// A hand-made partition; the batches must be non-empty and cover
    /// `0..n` exactly once.
    pub fn from_batches(batches: Vec<Vec<usize>>, seed: u64) -> Result<Self> {
        let n: usize = batches.iter().map(Vec::len).sum();
        let mut seen = vec![false; n];
        for batch in &batches {
            if batch.is_empty() {
                return Err(Error::Domain("partition contains an empty batch".into()));
            }
            for &i in batch {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Domain(format!("batches do not cover 0..{n} exactly once")));
                }
            }
        }
        if n == 0 {
            return Err(Error::Domain("partition has no samples".into()));
        }
        Ok(Self { batches, seed })
    }

    pub fn batches(&self) -> &[Vec<usize>] {
        &self.batches
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sample_count(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }
}

/// Shuffles `0..dataset_size` with a ChaCha8 stream seeded by `seed`, then
/// cuts it into consecutive chunks of `batch_size`; the last may be shorter.
pub fn partition_batches(dataset_size: usize, batch_size: usize, seed: u64) -> Result<BatchPartition> {
    if dataset_size == 0 || batch_size == 0 {
        return Err(Error::Domain(format!(
            "cannot partition {dataset_size} samples into batches of {batch_size}"
        )));
    }
    if batch_size > dataset_size {
        log::info!("batch size {batch_size} exceeds dataset size {dataset_size}; using a single batch");
    }
    let mut order: Vec<usize> = (0..dataset_size).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(BatchPartition {
        batches: order.chunks(batch_size).map(<[usize]>::to_vec).collect(),
        seed,
    })
}

/// Error rate of every batch during one epoch's main pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchErrorReport {
    pub epoch: usize,
    pub errors: Vec<f64>,
}

impl BatchErrorReport {
    pub fn batch_count(&self) -> usize {
        self.errors.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanErrorThreshold {
    pub c: f64,
}

/// Arithmetic mean of the batch error rates.
pub fn compute_threshold(report: &BatchErrorReport) -> Result<MeanErrorThreshold> {
    if report.errors.is_empty() {
        return Err(Error::Domain(format!("epoch {} has no batch errors", report.epoch)));
    }
    let c = report.errors.iter().sum::<f64>() / report.errors.len() as f64;
    // The rounded mean can land an ulp outside [min, max] when all errors are equal.
    let (lo, hi) = report
        .errors
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    Ok(MeanErrorThreshold { c: c.clamp(lo, hi) })
}

/// Step function from error excess `d = Er − C` to remedial epoch counts.
///
/// With breakpoints `d1 < d2 < … < dk`, the intervals are `(0, d1]`,
/// `(d1, d2]`, …, `(dk, ∞)`, so `counts` holds `k + 1` entries. Any `d <= 0`
/// maps to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseEpochMap {
    breakpoints: Vec<f64>,
    counts: Vec<u32>,
}

impl PiecewiseEpochMap {
    pub fn new(breakpoints: Vec<f64>, counts: Vec<u32>) -> Result<Self> {
        if counts.len() != breakpoints.len() + 1 {
            return Err(Error::Domain(format!(
                "{} breakpoints need {} epoch counts, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                counts.len()
            )));
        }
        if breakpoints.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::Domain(format!(
                "breakpoints must be finite and positive: {breakpoints:?}"
            )));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(format!(
                "breakpoints must be strictly ascending: {breakpoints:?}"
            )));
        }
        if counts.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Domain(format!("epoch counts must be non-decreasing: {counts:?}")));
        }
        Ok(Self { breakpoints, counts })
    }

    /// 1 epoch up to 0.05 excess, 2 up to 0.15, 3 beyond.
    pub fn default_map() -> Self {
        Self::new(vec![0.05, 0.15], vec![1, 2, 3]).expect("valid default")
    }

    /// Maps every excess to zero, which turns RSL into conventional training.
    pub fn zero() -> Self {
        Self::new(vec![], vec![0]).expect("valid zero map")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    pub fn epochs_for(&self, excess: f64) -> u32 {
        if excess.is_nan() || excess <= 0.0 {
            return 0;
        }
        let interval = self.breakpoints.partition_point(|&b| b < excess);
        self.counts[interval]
    }
}

impl Default for PiecewiseEpochMap {
    fn default() -> Self {
        Self::default_map()
    }
}

/// Text form used in run configurations: comma-separated `upper:count`
/// pairs with the unbounded last interval written `inf:count`, e.g.
/// `0.05:1, 0.15:2, inf:3`.
impl FromStr for PiecewiseEpochMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut breakpoints = Vec::new();
        let mut counts = Vec::new();
        let pieces: Vec<&str> = s.split(',').map(str::trim).collect();
        for (i, piece) in pieces.iter().enumerate() {
            let (upper, count) = piece
                .split_once(':')
                .ok_or_else(|| Error::Domain(format!("epoch map entry {piece:?} is not upper:count")))?;
            let count: u32 = count
                .trim()
                .parse()
                .map_err(|_| Error::Domain(format!("epoch count {count:?} is not a non-negative integer")))?;
            let upper = upper.trim();
            let last = i + 1 == pieces.len();
            match (upper, last) {
                ("inf", true) => {}
                ("inf", false) => return Err(Error::Domain("only the last epoch map entry may be inf".into())),
                (_, true) => return Err(Error::Domain("the last epoch map entry must be inf:count".into())),
                (u, false) => breakpoints.push(
                    u.parse()
                        .map_err(|_| Error::Domain(format!("breakpoint {u:?} is not a number")))?,
                ),
            }
            counts.push(count);
        }
        Self::new(breakpoints, counts)
    }
}

impl fmt::Display for PiecewiseEpochMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (b, c) in self.breakpoints.iter().zip(&self.counts) {
            write!(f, "{b}:{c}, ")?;
        }
        write!(f, "inf:{}", self.counts.last().expect("at least one count"))
    }
}

/// Extra training passes for a batch with error `er` in an epoch whose mean
/// batch error is `c`. Only strictly positive excess earns any.
pub fn remedial_epochs(er: f64, c: f64, map: &PiecewiseEpochMap) -> u32 {
    map.epochs_for(er - c)
}
