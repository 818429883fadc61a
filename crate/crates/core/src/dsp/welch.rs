use serde::{Deserialize, Serialize};

use super::fft::FftPlan;
use super::window::{make_window, window_power, WindowKind};
use super::{check_finite, DspError, RealSignal};

/// Segmenting and tapering parameters for [`welch_psd`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WelchConfig {
    pub segment_len: usize,
    pub overlap: usize,
    pub window: WindowKind,
}

impl Default for WelchConfig {
    /// 64-sample Hamming segments with 50% overlap: three segments and 33
    /// one-sided bins for a 128-sample window.
    fn default() -> Self {
        Self {
            segment_len: 64,
            overlap: 32,
            window: WindowKind::Hamming,
        }
    }
}

impl WelchConfig {
    /// Checks the config on its own (power-of-two segment, overlap < segment).
    pub fn check(&self) -> Result<(), DspError> {
        if self.segment_len < 2 || !self.segment_len.is_power_of_two() {
            return Err(DspError::NotPowerOfTwo(self.segment_len));
        }
        if self.overlap >= self.segment_len {
            return Err(DspError::BadOverlap {
                overlap: self.overlap,
                segment_len: self.segment_len,
            });
        }
        Ok(())
    }

    /// Checks the config against a signal length.
    pub fn check_for(&self, signal_len: usize) -> Result<(), DspError> {
        self.check()?;
        if self.segment_len > signal_len {
            return Err(DspError::SegmentTooLong {
                segment_len: self.segment_len,
                signal_len,
            });
        }
        Ok(())
    }

    pub fn step(&self) -> usize {
        self.segment_len - self.overlap
    }

    /// Number of one-sided PSD bins, `O/2 + 1`.
    pub fn bins(&self) -> usize {
        self.segment_len / 2 + 1
    }

    /// Number of full segments in a signal; a trailing partial segment is
    /// dropped.
    pub fn segment_count(&self, signal_len: usize) -> usize {
        if signal_len < self.segment_len {
            0
        } else {
            (signal_len - self.segment_len) / self.step() + 1
        }
    }
}

/// One-sided Welch power spectral density estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub values: Vec<f64>,
    pub bin_width_hz: f64,
    pub segment_len: usize,
    pub segment_count: usize,
}

/// Reusable Welch estimator with its FFT plan and window precomputed.
#[derive(Debug, Clone)]
pub struct WelchEstimator {
    config: WelchConfig,
    plan: FftPlan,
    window: Vec<f64>,
    norm: f64,
}

impl WelchEstimator {
    pub fn new(config: WelchConfig) -> Result<Self, DspError> {
        config.check()?;
        let plan = FftPlan::new(config.segment_len)?;
        let window = make_window(config.window, config.segment_len)?;
        let norm = 1.0 / (config.segment_len as f64 * window_power(&window));
        Ok(Self {
            config,
            plan,
            window,
            norm,
        })
    }

    pub fn config(&self) -> &WelchConfig {
        &self.config
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn estimate(&self, signal: &RealSignal<'_>) -> Result<PsdEstimate, DspError> {
        let values = self.estimate_values(signal.samples())?;
        Ok(PsdEstimate {
            values,
            bin_width_hz: signal.sample_rate_hz() / self.config.segment_len as f64,
            segment_len: self.config.segment_len,
            segment_count: self.config.segment_count(signal.len()),
        })
    }

    /// PSD values only, for callers that do not need the metadata.
    pub fn estimate_values(&self, samples: &[f64]) -> Result<Vec<f64>, DspError> {
        self.config.check_for(samples.len())?;
        check_finite(samples)?;
        let o = self.config.segment_len;
        let count = self.config.segment_count(samples.len());
        // Running mean: exact when every segment has the same periodogram.
        let mut mean = vec![0.0; self.config.bins()];
        for i in 0..count {
            let start = i * self.config.step();
            let seg = self.periodogram_unchecked(&samples[start..start + o]);
            let n = (i + 1) as f64;
            for (m, v) in mean.iter_mut().zip(seg) {
                *m += (v - *m) / n;
            }
        }
        Ok(mean)
    }

    fn periodogram_unchecked(&self, segment: &[f64]) -> Vec<f64> {
        onesided_power(&self.plan.forward_windowed(segment, &self.window), self.norm)
    }
}

// |X(k)|^2 * norm for k = 0..=O/2, interior bins doubled.
fn onesided_power(bins: &[num_complex::Complex64], norm: f64) -> Vec<f64> {
    let half = bins.len() / 2;
    bins[..=half]
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let p = c.norm_sqr() * norm;
            if k == 0 || k == half {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

/// One-sided periodogram of a single tapered segment,
/// `(1 / (O P)) |FFT(u * y)|^2` with interior bins doubled.
pub fn windowed_periodogram(segment: &[f64], window: &[f64]) -> Result<Vec<f64>, DspError> {
    if segment.len() != window.len() {
        return Err(DspError::LengthMismatch {
            expected: window.len(),
            found: segment.len(),
        });
    }
    check_finite(segment)?;
    let plan = FftPlan::new(segment.len())?;
    let norm = 1.0 / (segment.len() as f64 * window_power(window));
    Ok(onesided_power(
        &plan.forward_windowed(segment, window),
        norm,
    ))
}

/// Welch PSD: mean of the windowed periodograms of overlapping segments.
pub fn welch_psd(signal: &RealSignal<'_>, config: &WelchConfig) -> Result<PsdEstimate, DspError> {
    config.check_for(signal.len())?;
    WelchEstimator::new(*config)?.estimate(signal)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::dsp::fft::tests::naive_dft;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr_free::standard_normal;

    // Box-Muller, so the noise test does not depend on rand_distr.
    mod rand_distr_free {
        use rand::Rng;
        pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
    }

    fn signal(x: &[f64]) -> RealSignal<'_> {
        RealSignal::new(x, 50.0).unwrap()
    }

    #[test]
    fn zero_segment() {
        let w = make_window(WindowKind::Hamming, 64).unwrap();
        let p = windowed_periodogram(&[0.0; 64], &w).unwrap();
        assert_eq!(p.len(), 33);
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rectangular_is_plain_periodogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = make_window(WindowKind::Rectangular, 64).unwrap();
        let p = windowed_periodogram(&x, &w).unwrap();
        let dft = naive_dft(&x);
        for k in 0..=32 {
            let plain = dft[k].norm_sqr() / 64.0;
            let want = if k == 0 || k == 32 { plain } else { 2.0 * plain };
            assert!((p[k] - want).abs() <= 1e-10 * want.max(1.0));
        }
    }

    #[test]
    fn exact_bin_sinusoid_peak() {
        // Oracle: naive DFT of the segment, then the periodogram arithmetic
        // by hand.
        let (amp, bin, o) = (1.7, 5usize, 64usize);
        let x: Vec<f64> = (0..o)
            .map(|t| amp * (2.0 * PI * bin as f64 * t as f64 / o as f64).cos())
            .collect();
        let oracle = 2.0 * naive_dft(&x)[bin].norm_sqr() / o as f64;
        let analytic = amp * amp * o as f64 / 2.0;
        assert!((oracle - analytic).abs() <= 1e-9 * analytic);

        let w = make_window(WindowKind::Rectangular, o).unwrap();
        let p = windowed_periodogram(&x, &w).unwrap();
        let peak = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, bin);
        assert!((p[bin] - analytic).abs() <= 1e-6 * analytic);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(
            windowed_periodogram(&[0.0; 32], &[1.0; 64]),
            Err(DspError::LengthMismatch {
                expected: 64,
                found: 32
            })
        );
    }

    #[test]
    fn single_segment_equals_periodogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..64).map(|_| rng.gen_range(-2.0..2.0)).collect();
        for window in [WindowKind::Rectangular, WindowKind::Hamming] {
            let cfg = WelchConfig {
                segment_len: 64,
                overlap: 0,
                window,
            };
            let psd = welch_psd(&signal(&x), &cfg).unwrap();
            assert_eq!(psd.segment_count, 1);
            let w = make_window(window, 64).unwrap();
            assert_eq!(psd.values, windowed_periodogram(&x, &w).unwrap());
        }
    }

    #[test]
    fn default_config_uses_three_segments() {
        let cfg = WelchConfig::default();
        assert_eq!(cfg.segment_count(128), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let psd = welch_psd(&signal(&x), &cfg).unwrap();
        assert_eq!(psd.segment_count, 3);
        assert_eq!(psd.values.len(), 33);
        assert_eq!(psd.bin_width_hz, 50.0 / 64.0);
        let w = make_window(WindowKind::Hamming, 64).unwrap();
        let parts: Vec<Vec<f64>> = [0, 32, 64]
            .iter()
            .map(|&s| windowed_periodogram(&x[s..s + 64], &w).unwrap())
            .collect();
        for (k, v) in psd.values.iter().enumerate() {
            let mean = (parts[0][k] + parts[1][k] + parts[2][k]) / 3.0;
            assert!((v - mean).abs() <= 1e-12 * mean.max(1e-12));
        }
    }

    #[test]
    fn trailing_partial_segment_dropped() {
        let cfg = WelchConfig {
            segment_len: 64,
            overlap: 32,
            window: WindowKind::Hamming,
        };
        assert_eq!(cfg.segment_count(127), 2);
        assert_eq!(cfg.segment_count(160), 4);
    }

    #[test]
    fn rejects_bad_configs() {
        let x = [0.0; 32];
        let cfg = WelchConfig::default();
        assert_eq!(
            welch_psd(&signal(&x), &cfg),
            Err(DspError::SegmentTooLong {
                segment_len: 64,
                signal_len: 32
            })
        );
        let bad = WelchConfig {
            segment_len: 16,
            overlap: 16,
            window: WindowKind::Hamming,
        };
        assert!(matches!(bad.check(), Err(DspError::BadOverlap { .. })));
        let odd = WelchConfig {
            segment_len: 15,
            overlap: 0,
            window: WindowKind::Hamming,
        };
        assert!(odd.check().is_err());
    }

    #[test]
    fn white_noise_total_power_tracks_variance() {
        let cfg = WelchConfig::default();
        let est = WelchEstimator::new(cfg).unwrap();
        let mut total = 0.0;
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..4096).map(|_| standard_normal(&mut rng)).collect();
            let psd = est.estimate_values(&x).unwrap();
            total += psd.iter().sum::<f64>() / cfg.segment_len as f64;
        }
        let mean = total / 50.0;
        assert!((mean - 1.0).abs() < 0.1, "mean total power {mean}");
    }

    proptest! {
        #[test]
        fn psd_is_nonnegative(xs in prop::collection::vec(-1e3f64..1e3, 64..300), hamming in any::<bool>()) {
            let cfg = WelchConfig {
                segment_len: 64,
                overlap: 16,
                window: if hamming { WindowKind::Hamming } else { WindowKind::Rectangular },
            };
            let psd = welch_psd(&signal(&xs), &cfg).unwrap();
            prop_assert!(psd.values.iter().all(|v| *v >= 0.0 && v.is_finite()));
        }

        #[test]
        fn tiled_signal_averages_to_one_periodogram(
            seg in prop::collection::vec(-10.0f64..10.0, 32),
            tiles in 1usize..=8,
        ) {
            let x: Vec<f64> = seg.iter().copied().cycle().take(32 * tiles).collect();
            let cfg = WelchConfig { segment_len: 32, overlap: 0, window: WindowKind::Hamming };
            let psd = welch_psd(&signal(&x), &cfg).unwrap();
            prop_assert_eq!(psd.segment_count, tiles);
            let w = make_window(WindowKind::Hamming, 32).unwrap();
            prop_assert_eq!(psd.values, windowed_periodogram(&seg, &w).unwrap());
        }
    }
}
