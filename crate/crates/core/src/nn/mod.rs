//! Minimal deterministic neural-network kernel in double precision.

pub mod gradcheck;
mod lstm;
pub mod network;
pub mod ops;
pub mod optim;
pub mod params;
pub mod spec;
pub mod tensor;
pub mod train;

pub use gradcheck::{grad_check, GradCheckReport};
pub use network::{backward, forward, loss, predict, Activations, Mode};
pub use ops::{argmax, cross_entropy, relu, softmax};
pub use optim::{clip_global_norm, Algorithm, OptimizerState};
pub use params::Parameters;
pub use spec::{Activation, LayerKind, LayerSpec, LayerSummary, NetworkSpec};
pub use tensor::Tensor;
pub use train::{evaluate, fit, predict_classes, Dataset, EpochMetrics, TrainConfig, TrainingCurve};
