//! Reinforcement sample learning: batches whose error exceeds the epoch's
//! mean batch error get extra training steps.
//!
//! Despite the name this is a deterministic scheduler, not a reinforcement
//! learning agent.

mod schedule;
mod train;

pub use schedule::{
    compute_threshold, partition_batches, remedial_epochs, BatchErrorReport, BatchPartition, MeanErrorThreshold,
    PiecewiseEpochMap,
};
pub use train::{
    conventional_train, rsl_train, EpochObserver, EpochRecord, Plateau, RemedialAssignment, RslRunLog, StopReason,
    Termination,
};
