use serde::{Deserialize, Serialize};

use super::{Gradients, ModelParams, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected first and second moments.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    config: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, params: &ModelParams<T>) -> Self {
        Self::for_tensors(config, params.tensors())
    }

    pub fn for_tensors(config: AdamConfig, tensors: &[Tensor<T>]) -> Self {
        let zeros = || tensors.iter().map(|t| vec![T::zero(); t.len()]).collect();
        Self {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &Gradients<T>) {
        self.step_tensors(params.tensors_mut(), &grads.tensors);
    }

    pub fn step_tensors(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) {
        self.t += 1;
        let c = self.config;
        // Bias corrections are computed in f64 so they stay accurate for
        // large step counts even when T is f32.
        let t = self.t as i32;
        let alpha = c.learning_rate * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t));
        let bc2 = (1.0 - c.beta2.powi(t)).sqrt();
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let (one_b1, one_b2) = (T::from_f64_lossy(1.0 - c.beta1), T::from_f64_lossy(1.0 - c.beta2));
        let alpha = T::from_f64_lossy(alpha);
        let eps_hat = T::from_f64_lossy(c.eps * bc2);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                *w -= alpha * *m / (v.sqrt() + eps_hat);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(values: Vec<f64>) -> Vec<Tensor<f64>> {
        vec![Tensor::from_vec(values)]
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = single(vec![1.5, -2.0, 0.25]);
        let g = single(vec![0.0; 3]);
        let mut adam = Adam::for_tensors(AdamConfig::default(), &p);
        for _ in 0..10 {
            adam.step_tensors(&mut p, &g);
        }
        assert_eq!(p[0].data(), &[1.5, -2.0, 0.25]);
        assert_eq!(adam.steps_taken(), 10);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // After one step m_hat = g and v_hat = g^2, so the update is
        // lr * g / (|g| + eps), which is lr * sign(g) up to eps.
        let mut p = single(vec![0.0, 0.0, 0.0]);
        let g = single(vec![3.0, -0.01, 250.0]);
        let mut adam = Adam::for_tensors(AdamConfig::default(), &p);
        adam.step_tensors(&mut p, &g);
        for (&w, &gv) in p[0].data().iter().zip(g[0].data()) {
            let expected = -1e-3 * gv / (gv.abs() + 1e-8);
            assert!((w - expected).abs() < 1e-12, "{w} vs {expected}");
        }
    }

    #[test]
    fn reference_trajectory() {
        // Oracle: the textbook form with explicit m_hat and v_hat.
        let cfg = AdamConfig { learning_rate: 0.01, ..AdamConfig::default() };
        let grads = [0.5, -1.0, 2.0, 0.1, -0.3];
        let mut p = single(vec![1.0]);
        let mut adam = Adam::for_tensors(cfg, &p);
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for (t, &g) in grads.iter().enumerate() {
            let t = t as i32 + 1;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let m_hat = m / (1.0 - cfg.beta1.powi(t));
            let v_hat = v / (1.0 - cfg.beta2.powi(t));
            w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
            adam.step_tensors(&mut p, &single(vec![g]));
            assert!((p[0].data()[0] - w).abs() < 1e-9);
        }
    }

    #[test]
    fn minimizes_quadratic_bowl() {
        let target = [0.0; 4];
        let mut p = single(vec![1.0, -2.0, 3.0, 0.5]);
        let cfg = AdamConfig { learning_rate: 0.05, ..AdamConfig::default() };
        let mut adam = Adam::for_tensors(cfg, &p);
        for _ in 0..500 {
            let g: Vec<f64> = p[0].data().iter().zip(&target).map(|(x, t)| 2.0 * (x - t)).collect();
            adam.step_tensors(&mut p, &single(g));
        }
        let norm = p[0].data().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-2, "{norm}");
    }
}
