//! Inertial human-activity recognition from spectral features.
//!
//! The pipeline has five stages, each in its own module:
//!
//! * [`dsp`]: radix-2 FFT, window functions, windowed periodograms and the
//!   Welch averaged PSD estimate.
//! * [`dataset`]: reader for the UCI HAR "Inertial Signals" layout, with
//!   validation against the published per-class counts.
//! * [`features`]: per-stream FFT magnitudes and Welch PSD values, z-score
//!   normalization and the `HARFEAT1` feature cache.
//! * [`nn`]: a from-scratch two-channel 1-D CNN with exact backpropagation,
//!   Adam, a deterministic training loop and the `HARMCNN1` checkpoint.
//! * [`metrics`]: confusion matrix, macro precision/recall/F1 and
//!   one-vs-rest ROC curves.
//!
//! [`synthetic`] writes datasets in the same on-disk layout for testing
//! without the real recordings.

pub mod dataset;
pub mod dsp;
pub mod features;
pub mod metrics;
pub mod nn;
pub mod synthetic;

mod error;

pub use dataset::{ActivityClass, InertialWindow, LabeledSample, Split, SplitManifest};
pub use dsp::{PsdEstimate, RealSignal, WelchConfig, WindowKind};
pub use error::Error;
pub use features::{FeatureExtractor, FeatureMatrix, FeatureTensor, NormStats};
pub use metrics::{ConfusionMatrix, EvalReport};
pub use nn::{ModelParams, ModelSpec, TrainConfig, TrainRun};

/// Number of activity classes.
pub const NUM_CLASSES: usize = 6;
/// Inertial streams per window (3 sensors x 3 axes).
pub const NUM_STREAMS: usize = 9;
/// Readings per stream in one window (2.56 s at 50 Hz).
pub const WINDOW_LEN: usize = 128;
/// Sensor sample rate of the recordings.
pub const SAMPLE_RATE_HZ: f64 = 50.0;
