use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::DspError;

/// Taper applied to each Welch segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Rectangular,
    /// Symmetric Hamming, `0.54 - 0.46 cos(2 pi t / (O - 1))`.
    Hamming,
}

pub fn make_window(kind: WindowKind, len: usize) -> Result<Vec<f64>, DspError> {
    if len < 2 {
        return Err(DspError::WindowTooShort(len));
    }
    Ok(match kind {
        WindowKind::Rectangular => vec![1.0; len],
        WindowKind::Hamming => {
            let denom = (len - 1) as f64;
            (0..len)
                .map(|t| 0.54 - 0.46 * (2.0 * PI * t as f64 / denom).cos())
                .collect()
        }
    })
}

/// Mean squared window value, `P = (1/O) sum |u(t)|^2`.
pub fn window_power(window: &[f64]) -> f64 {
    window.iter().map(|u| u * u).sum::<f64>() / window.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hamming_endpoints_and_symmetry() {
        let w = make_window(WindowKind::Hamming, 64).unwrap();
        assert!((w[0] - 0.08).abs() < 1e-15);
        assert!((w[63] - 0.08).abs() < 1e-15);
        for len in [2, 3, 17, 64, 65, 128] {
            let w = make_window(WindowKind::Hamming, len).unwrap();
            for t in 0..len {
                assert!((w[t] - w[len - 1 - t]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rectangular_is_ones_with_unit_power() {
        let w = make_window(WindowKind::Rectangular, 32).unwrap();
        assert!(w.iter().all(|&u| u == 1.0));
        assert_eq!(window_power(&w), 1.0);
    }

    #[test]
    fn too_short() {
        assert_eq!(
            make_window(WindowKind::Hamming, 1),
            Err(DspError::WindowTooShort(1))
        );
    }
}
