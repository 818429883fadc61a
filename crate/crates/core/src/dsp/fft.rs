use std::f64::consts::PI;

use num_complex::Complex64;

use super::{check_finite, DspError};

/// Full N-point DFT of a real signal, `X(k) = sum_n x_n e^{-i 2 pi k n / N}`,
/// unnormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub bins: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Precomputed twiddle factors and bit-reversal permutation for one
/// power-of-two length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    len: usize,
    twiddles: Vec<Complex64>,
    bit_reverse: Vec<usize>,
}

impl FftPlan {
    pub fn new(len: usize) -> Result<Self, DspError> {
        if len < 2 || !len.is_power_of_two() {
            return Err(DspError::NotPowerOfTwo(len));
        }
        let bits = len.trailing_zeros();
        let bit_reverse = (0..len)
            .map(|i| i.reverse_bits() >> (usize::BITS - bits))
            .collect();
        // Computed directly rather than by repeated multiplication so every
        // factor carries only one rounding.
        let twiddles = (0..len / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / len as f64))
            .collect();
        Ok(Self {
            len,
            twiddles,
            bit_reverse,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Forward transform of a real input.
    pub fn forward(&self, input: &[f64]) -> Result<ComplexSpectrum, DspError> {
        if input.len() != self.len {
            return Err(DspError::LengthMismatch {
                expected: self.len,
                found: input.len(),
            });
        }
        check_finite(input)?;
        let mut bins: Vec<Complex64> = self
            .bit_reverse
            .iter()
            .map(|&j| Complex64::new(input[j], 0.0))
            .collect();
        self.butterflies(&mut bins);
        Ok(ComplexSpectrum { bins })
    }

    /// Forward transform of the elementwise product `window * input`, without
    /// allocating the product.
    pub(crate) fn forward_windowed(&self, input: &[f64], window: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(input.len(), self.len);
        debug_assert_eq!(window.len(), self.len);
        let mut bins: Vec<Complex64> = self
            .bit_reverse
            .iter()
            .map(|&j| Complex64::new(input[j] * window[j], 0.0))
            .collect();
        self.butterflies(&mut bins);
        bins
    }

    // Iterative decimation-in-time, input already in bit-reversed order.
    fn butterflies(&self, data: &mut [Complex64]) {
        let n = self.len;
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let stride = n / size;
            for block in data.chunks_exact_mut(size) {
                let (lo, hi) = block.split_at_mut(half);
                for (j, (a, b)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                    let t = self.twiddles[j * stride] * *b;
                    *b = *a - t;
                    *a += t;
                }
            }
            size *= 2;
        }
    }
}

/// N-point DFT of a real signal. N must be a power of two.
pub fn fft_real(signal: &[f64]) -> Result<ComplexSpectrum, DspError> {
    FftPlan::new(signal.len())?.forward(signal)
}

/// Raw magnitudes `|X(k)|` for `k = 0..=N/2`.
pub fn magnitude_onesided(spectrum: &ComplexSpectrum) -> Result<Vec<f64>, DspError> {
    let n = spectrum.len();
    if n == 0 || !n.is_multiple_of(2) {
        return Err(DspError::OddLength(n));
    }
    Ok(spectrum.bins[..=n / 2].iter().map(|c| c.norm()).collect())
}
