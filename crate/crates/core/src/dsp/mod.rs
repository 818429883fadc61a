//! Spectral primitives: FFT, windows, periodograms and Welch PSD.
//!
//! All functions are pure. FFT plans and windows are immutable once built and
//! can be shared between threads.

mod fft;
mod welch;
mod window;

use thiserror::Error;

pub use fft::{fft_real, magnitude_onesided, ComplexSpectrum, FftPlan};
pub use welch::{welch_psd, windowed_periodogram, PsdEstimate, WelchConfig, WelchEstimator};
pub use window::{make_window, window_power, WindowKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("FFT length {0} is not a power of two >= 2")]
    NotPowerOfTwo(usize),
    #[error("one-sided spectrum needs an even length, got {0}")]
    OddLength(usize),
    #[error("non-finite sample {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("signal is empty")]
    Empty,
    #[error("sample rate must be positive and finite, got {0}")]
    BadSampleRate(f64),
    #[error("window length must be >= 2, got {0}")]
    WindowTooShort(usize),
    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("segment length {segment_len} exceeds signal length {signal_len}")]
    SegmentTooLong { segment_len: usize, signal_len: usize },
    #[error("overlap {overlap} must be smaller than segment length {segment_len}")]
    BadOverlap { overlap: usize, segment_len: usize },
}

/// A finite, non-empty sampled signal.
#[derive(Debug, Clone, Copy)]
pub struct RealSignal<'a> {
    samples: &'a [f64],
    sample_rate_hz: f64,
}

impl<'a> RealSignal<'a> {
    pub fn new(samples: &'a [f64], sample_rate_hz: f64) -> Result<Self, DspError> {
        if samples.is_empty() {
            return Err(DspError::Empty);
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(DspError::BadSampleRate(sample_rate_hz));
        }
        check_finite(samples)?;
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &'a [f64] {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub(crate) fn check_finite(samples: &[f64]) -> Result<(), DspError> {
    match samples.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(DspError::NonFinite {
            index,
            value: samples[index],
        }),
        None => Ok(()),
    }
}
