//! Two-channel spectral features per window, their normalization and the
//! `HARFEAT1` cache format.
//!
//! Each of the 9 streams contributes one row to each channel: the one-sided
//! FFT magnitude (65 bins for 128 readings) and the Welch PSD (33 bins with
//! the default 64-sample segments). The channels stay separate matrices
//! because the network routes them to separate convolution stacks.

use std::io::{self, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ActivityClass, InertialWindow, LabeledSample};
use crate::dsp::{magnitude_onesided, DspError, FftPlan, WelchConfig, WelchEstimator};
use crate::{NUM_STREAMS, WINDOW_LEN};

pub const CACHE_MAGIC: &[u8; 8] = b"HARFEAT1";
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("feature shape mismatch: expected {expected:?}, found {found:?}")]
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("cannot fit normalization statistics on an empty set")]
    Empty,
    #[error("not a feature cache (bad magic {0:?})")]
    BadMagic([u8; 8]),
    #[error("feature cache record {record}: unknown class id {id}")]
    BadClass { record: usize, id: u8 },
    #[error("feature cache I/O: {0}")]
    Io(#[from] io::Error),
}

/// Row-major `rows x cols` matrix of reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn check_shape(&self, other: &Self) -> Result<(), FeatureError> {
        if self.shape() == other.shape() {
            Ok(())
        } else {
            Err(FeatureError::Shape {
                expected: self.shape(),
                found: other.shape(),
            })
        }
    }

    fn round_to_f32(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v as f32 as f64).collect(),
        }
    }
}

/// Frequency and power channels of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    /// Per-stream one-sided FFT magnitudes, `9 x (N/2 + 1)`.
    pub freq: FeatureMatrix,
    /// Per-stream Welch PSD values, `9 x (O/2 + 1)`.
    pub power: FeatureMatrix,
}

impl FeatureTensor {
    pub fn zeros(freq_bins: usize, power_bins: usize) -> Self {
        Self {
            freq: FeatureMatrix::zeros(NUM_STREAMS, freq_bins),
            power: FeatureMatrix::zeros(NUM_STREAMS, power_bins),
        }
    }

    /// Copy with every value rounded through `f32`, the precision stored in
    /// the feature cache.
    pub fn round_to_f32(&self) -> Self {
        Self {
            freq: self.freq.round_to_f32(),
            power: self.power.round_to_f32(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.freq.data.iter().chain(&self.power.data).all(|v| v.is_finite())
    }
}

/// Computes [`FeatureTensor`]s with FFT plans and window built once.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    fft: FftPlan,
    welch: WelchEstimator,
}

impl FeatureExtractor {
    pub fn new(config: WelchConfig) -> Result<Self, FeatureError> {
        config.check_for(WINDOW_LEN)?;
        Ok(Self {
            fft: FftPlan::new(WINDOW_LEN)?,
            welch: WelchEstimator::new(config)?,
        })
    }

    pub fn config(&self) -> &WelchConfig {
        self.welch.config()
    }

    pub fn freq_bins(&self) -> usize {
        WINDOW_LEN / 2 + 1
    }

    pub fn power_bins(&self) -> usize {
        self.welch.config().bins()
    }

    pub fn extract(&self, window: &InertialWindow) -> Result<FeatureTensor, FeatureError> {
        let mut out = FeatureTensor::zeros(self.freq_bins(), self.power_bins());
        for (s, stream) in window.streams().enumerate() {
            let mag = magnitude_onesided(&self.fft.forward(stream)?)?;
            out.freq.row_mut(s).copy_from_slice(&mag);
            let psd = self.welch.estimate_values(stream)?;
            out.power.row_mut(s).copy_from_slice(&psd);
        }
        Ok(out)
    }

    /// Extracts every sample in parallel; output order matches input order.
    pub fn extract_all(&self, samples: &[LabeledSample]) -> Result<Vec<FeatureTensor>, FeatureError> {
        samples.par_iter().map(|s| self.extract(&s.window)).collect()
    }
}

pub fn extract_features(
    window: &InertialWindow,
    config: &WelchConfig,
) -> Result<FeatureTensor, FeatureError> {
    FeatureExtractor::new(*config)?.extract(window)
}

/// Per-position z-score statistics fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub freq_mean: FeatureMatrix,
    pub freq_std: FeatureMatrix,
    pub power_mean: FeatureMatrix,
    pub power_std: FeatureMatrix,
    pub epsilon: f64,
}

impl NormStats {
    /// Copy with means and deviations rounded through `f32`, matching what a
    /// checkpoint stores.
    pub fn round_to_f32(&self) -> Self {
        Self {
            freq_mean: self.freq_mean.round_to_f32(),
            freq_std: self.freq_std.round_to_f32(),
            power_mean: self.power_mean.round_to_f32(),
            power_std: self.power_std.round_to_f32(),
            epsilon: self.epsilon,
        }
    }

    /// Undoes [`apply_normalizer`]: `z * (std + eps) + mean`.
    pub fn invert(&self, t: &FeatureTensor) -> Result<FeatureTensor, FeatureError> {
        let eps = self.epsilon;
        Ok(FeatureTensor {
            freq: zip3(&t.freq, &self.freq_mean, &self.freq_std, |z, m, s| z * (s + eps) + m)?,
            power: zip3(&t.power, &self.power_mean, &self.power_std, |z, m, s| z * (s + eps) + m)?,
        })
    }
}

fn zip3(
    x: &FeatureMatrix,
    mean: &FeatureMatrix,
    std: &FeatureMatrix,
    f: impl Fn(f64, f64, f64) -> f64,
) -> Result<FeatureMatrix, FeatureError> {
    mean.check_shape(x)?;
    mean.check_shape(std)?;
    Ok(FeatureMatrix {
        rows: x.rows,
        cols: x.cols,
        data: x
            .data
            .iter()
            .zip(&mean.data)
            .zip(&std.data)
            .map(|((&v, &m), &s)| f(v, m, s))
            .collect(),
    })
}

// Two-pass population mean/std in a fixed sequential order.
fn moments<'a>(
    items: impl Iterator<Item = &'a FeatureMatrix> + Clone,
    shape: (usize, usize),
) -> Result<(FeatureMatrix, FeatureMatrix), FeatureError> {
    let mut mean = FeatureMatrix::zeros(shape.0, shape.1);
    let mut count = 0usize;
    for m in items.clone() {
        mean.check_shape(m)?;
        for (a, v) in mean.data.iter_mut().zip(&m.data) {
            *a += v;
        }
        count += 1;
    }
    let n = count as f64;
    mean.data.iter_mut().for_each(|a| *a /= n);
    let mut std = FeatureMatrix::zeros(shape.0, shape.1);
    for m in items {
        for ((a, v), mu) in std.data.iter_mut().zip(&m.data).zip(&mean.data) {
            let d = v - mu;
            *a += d * d;
        }
    }
    std.data.iter_mut().for_each(|a| *a = (*a / n).sqrt());
    Ok((mean, std))
}

pub fn fit_normalizer(tensors: &[FeatureTensor], epsilon: f64) -> Result<NormStats, FeatureError> {
    let first = tensors.first().ok_or(FeatureError::Empty)?;
    let (freq_mean, freq_std) = moments(tensors.iter().map(|t| &t.freq), first.freq.shape())?;
    let (power_mean, power_std) = moments(tensors.iter().map(|t| &t.power), first.power.shape())?;
    Ok(NormStats {
        freq_mean,
        freq_std,
        power_mean,
        power_std,
        epsilon,
    })
}

/// `(t - mean) / (std + eps)`, elementwise.
pub fn apply_normalizer(t: &FeatureTensor, stats: &NormStats) -> Result<FeatureTensor, FeatureError> {
    let eps = stats.epsilon;
    Ok(FeatureTensor {
        freq: zip3(&t.freq, &stats.freq_mean, &stats.freq_std, |v, m, s| (v - m) / (s + eps))?,
        power: zip3(&t.power, &stats.power_mean, &stats.power_std, |v, m, s| (v - m) / (s + eps))?,
    })
}

/// Contents of a `HARFEAT1` file: raw (unnormalized) features with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub freq_bins: usize,
    pub power_bins: usize,
    pub records: Vec<(ActivityClass, FeatureTensor)>,
}

impl FeatureCache {
    pub fn new(freq_bins: usize, power_bins: usize) -> Self {
        Self {
            freq_bins,
            power_bins,
            records: Vec::new(),
        }
    }

    /// Layout, little-endian: magic, u32 count, u32 freq bins, u32 power bins,
    /// then per record a u8 class id followed by the freq and power matrices
    /// as row-major f32.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), FeatureError> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&(self.records.len() as u32).to_le_bytes())?;
        w.write_all(&(self.freq_bins as u32).to_le_bytes())?;
        w.write_all(&(self.power_bins as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(4 * NUM_STREAMS * (self.freq_bins + self.power_bins) + 1);
        for (class, t) in &self.records {
            let want = (NUM_STREAMS, self.freq_bins);
            if t.freq.shape() != want {
                return Err(FeatureError::Shape { expected: want, found: t.freq.shape() });
            }
            let want = (NUM_STREAMS, self.power_bins);
            if t.power.shape() != want {
                return Err(FeatureError::Shape { expected: want, found: t.power.shape() });
            }
            buf.clear();
            buf.push(class.id());
            for v in t.freq.data.iter().chain(&t.power.data) {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, FeatureError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(FeatureError::BadMagic(magic));
        }
        let count = read_u32(&mut r)? as usize;
        let freq_bins = read_u32(&mut r)? as usize;
        let power_bins = read_u32(&mut r)? as usize;
        let mut cache = Self::new(freq_bins, power_bins);
        let floats = NUM_STREAMS * (freq_bins + power_bins);
        let mut buf = vec![0u8; 1 + 4 * floats];
        for record in 0..count {
            r.read_exact(&mut buf)?;
            let class = ActivityClass::from_id(buf[0] as i64)
                .map_err(|_| FeatureError::BadClass { record, id: buf[0] })?;
            let values: Vec<f64> = buf[1..]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let split = NUM_STREAMS * freq_bins;
            cache.records.push((
                class,
                FeatureTensor {
                    freq: FeatureMatrix {
                        rows: NUM_STREAMS,
                        cols: freq_bins,
                        data: values[..split].to_vec(),
                    },
                    power: FeatureMatrix {
                        rows: NUM_STREAMS,
                        cols: power_bins,
                        data: values[split..].to_vec(),
                    },
                },
            ));
        }
        Ok(cache)
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
