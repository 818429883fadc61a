//! From-scratch tensors, layers and training for the two-channel 1-D CNN.
//!
//! Everything is generic over [`Real`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference gradient checks.

mod adam;
mod checkpoint;
mod layers;
mod model;
mod tensor;
mod train;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};
use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, maxpool1d, softmax,
    softmax_cross_entropy, Activation, ConvLayerSpec, DenseLayerSpec, LossOutput,
};
pub use model::{
    model_backward, model_forward, ConvStage, Example, Gradients, ModelParams, ModelSpec,
    ParamSlot,
};
pub use tensor::Tensor;
pub use train::{evaluate, predict_probabilities, train, train_with, EpochRecord, TrainConfig, TrainRun};

/// Floating-point element type of tensors.
pub trait Real:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 converts")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    Shape {
        context: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("kernel length {kernel} exceeds input length {input}")]
    KernelTooLong { kernel: usize, input: usize },
    #[error("invalid layer configuration: {0}")]
    Config(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("not a model checkpoint (bad magic {0:?})")]
    BadMagic([u8; 8]),
    #[error("unsupported checkpoint format version {found} (this build reads {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },
    #[error("checkpoint is missing tensor {0:?}")]
    MissingTensor(String),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Features(#[from] crate::features::FeatureError),
}
