//! The layer stack, whole-image passes, training steps, and checkpoints.

pub mod checkpoint;
mod model;
mod spec;

pub use model::{argmax_class, ActivationPattern, Gradients, LayerParams, Model, StepStats};
pub use spec::{
    build_table1_network, LayerSpec, NetworkSpec, Padding, StageShape, DEFAULT_INPUT_SIZE, NUM_CLASSES,
    TABLE1_LAYERS,
};
