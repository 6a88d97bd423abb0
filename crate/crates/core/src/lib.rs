//! Mammogram classification with a from-scratch CNN and a
//! reinforcement-sample-learning (RSL) batch scheduler.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`] and [`ops`]: dense tensors and the hand-written forward and
//!   backward kernels (convolution, max pooling, ReLU, fully-connected,
//!   softmax cross-entropy, SGD).
//! - [`network`]: the ten-row C/S/F/L layer stack, training steps, and
//!   binary checkpoints.
//! - [`preprocess`]: breast-region segmentation (Otsu threshold plus largest
//!   8-connected component), right-breast mirroring, crop and resize.
//! - [`rsl`]: fixed batch partitions, the mean-batch-error threshold, the
//!   piecewise remedial-epoch map, and the RSL and conventional training loops.
//! - [`harness`]: manifests, synthetic mammogram-like data, run configuration,
//!   metrics CSV, and run comparison used by the `rslcad` binary.

pub mod dataset;
pub mod error;
pub mod harness;
pub mod network;
pub mod ops;
pub mod preprocess;
pub mod rsl;
pub mod tensor;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use network::{build_table1_network, Model, NetworkSpec};
pub use tensor::Tensor;
