use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Adam, AdamConfig, Example, ModelParams, ModelSpec, NnError, Real};
use crate::metrics::{evaluate_scores, EvalReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Drives both weight initialization and the per-epoch shuffles.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 40,
            batch_size: 64,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn check(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::Config(m.to_owned()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad("Adam epsilon must be positive");
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean cross-entropy over the whole training split after the epoch.
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub test_precision: f64,
    pub test_recall: f64,
    pub test_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun<T> {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights are kept: the first one reaching the
    /// highest test accuracy.
    pub best_epoch: usize,
    pub best_params: ModelParams<T>,
    pub best_report: EvalReport,
}

impl<T> TrainRun<T> {
    pub fn best_record(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }
}

/// Class probabilities for every example, in input order.
pub fn predict_probabilities<T: Real>(params: &ModelParams<T>, examples: &[Example<T>]) -> Result<Vec<Vec<f64>>, NnError> {
    examples
        .par_iter()
        .map(|x| Ok(params.predict(x)?.into_iter().map(Real::as_f64).collect()))
        .collect()
}

pub fn evaluate<T: Real>(params: &ModelParams<T>, examples: &[Example<T>]) -> Result<EvalReport, NnError> {
    Ok(evaluate_with_loss(params, examples)?.0)
}

/// Metrics plus mean cross-entropy over `examples`.
fn evaluate_with_loss<T: Real>(params: &ModelParams<T>, examples: &[Example<T>]) -> Result<(EvalReport, f64), NnError> {
    if examples.is_empty() {
        return Err(NnError::EmptySplit("evaluation"));
    }
    let scores = predict_probabilities(params, examples)?;
    let truth: Vec<usize> = examples.iter().map(|x| x.label).collect();
    let loss = scores
        .iter()
        .zip(&truth)
        .map(|(p, &t)| -p[t].max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / truth.len() as f64;
    Ok((evaluate_scores(&scores, &truth, params.spec().classes)?, loss))
}

pub fn train<T: Real>(
    spec: &ModelSpec,
    config: &TrainConfig,
    train_set: &[Example<T>],
    test_set: &[Example<T>],
) -> Result<TrainRun<T>, NnError> {
    train_with(spec, config, train_set, test_set, |_| {})
}

/// Mini-batch Adam training with a test evaluation after every epoch.
///
/// `on_epoch` sees each record as soon as it is complete. Results are
/// bit-identical for a given seed regardless of the rayon thread count.
pub fn train_with<T: Real>(
    spec: &ModelSpec,
    config: &TrainConfig,
    train_set: &[Example<T>],
    test_set: &[Example<T>],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainRun<T>, NnError> {
    config.check()?;
    if train_set.is_empty() {
        return Err(NnError::EmptySplit("train"));
    }
    if test_set.is_empty() {
        return Err(NnError::EmptySplit("test"));
    }
    let mut params = ModelParams::<T>::init(spec, config.seed)?;
    let mut adam = Adam::new(config.adam(), &params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, ModelParams<T>, EvalReport)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<&Example<T>> = idx.iter().map(|&i| &train_set[i]).collect();
            let (_, grads) = params.batch_gradient(&batch)?;
            adam.step(&mut params, &grads);
        }
        let (train_report, train_loss) = evaluate_with_loss(&params, train_set)?;
        let report = evaluate(&params, test_set)?;
        let record = EpochRecord {
            epoch,
            train_loss,
            train_acc: train_report.accuracy,
            test_acc: report.accuracy,
            test_precision: report.macro_scores.precision,
            test_recall: report.macro_scores.recall,
            test_f1: report.macro_scores.f1,
        };
        on_epoch(&record);
        if best.as_ref().is_none_or(|(_, _, r)| report.accuracy > r.accuracy) {
            best = Some((epoch, params.clone(), report));
        }
        epochs.push(record);
    }
    let (best_epoch, best_params, best_report) = best.expect("at least one epoch ran");
    Ok(TrainRun {
        epochs,
        best_epoch,
        best_params,
        best_report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, ConvStage};
    use rand::Rng;

    fn small_spec() -> ModelSpec {
        ModelSpec {
            streams: 3,
            freq_bins: 16,
            power_bins: 12,
            classes: 6,
            conv: vec![ConvStage {
                filters: 8,
                kernel_len: 3,
                stride: 1,
                activation: Activation::Relu,
                pool_width: 2,
            }],
            dense_units: 32,
            dense_activation: Activation::Relu,
        }
    }

    fn random_set(spec: &ModelSpec, n: usize, seed: u64) -> Vec<Example<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| Example {
                freq: (0..spec.streams * spec.freq_bins).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                power: (0..spec.streams * spec.power_bins).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                label: i % spec.classes,
            })
            .collect()
    }

    #[test]
    fn memorizes_fifty_random_samples() {
        let spec = small_spec();
        let data = random_set(&spec, 50, 3);
        let config = TrainConfig {
            epochs: 150,
            batch_size: 10,
            learning_rate: 1e-2,
            seed: 1,
            ..TrainConfig::default()
        };
        let run = train(&spec, &config, &data, &data).unwrap();
        assert_eq!(run.best_record().train_acc, 1.0, "best {:?}", run.best_record());
        let first = run.epochs.first().unwrap().train_loss;
        let last = run.epochs.last().unwrap().train_loss;
        assert!(last < first / 10.0, "{first} -> {last}");
    }

    #[test]
    fn identical_across_thread_counts() {
        let spec = small_spec();
        let train_set = random_set(&spec, 45, 8);
        let test_set = random_set(&spec, 12, 9);
        let config = TrainConfig { epochs: 3, batch_size: 16, seed: 5, ..TrainConfig::default() };
        let run_in = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| train(&spec, &config, &train_set, &test_set).unwrap())
        };
        let a = run_in(1);
        let b = run_in(3);
        assert_eq!(a.epochs, b.epochs);
        assert_eq!(a.best_params, b.best_params);
        let c = train(&spec, &TrainConfig { seed: 6, ..config }, &train_set, &test_set).unwrap();
        assert_ne!(a.best_params, c.best_params);
    }

    #[test]
    fn keeps_first_best_epoch() {
        let spec = small_spec();
        let data = random_set(&spec, 24, 2);
        let config = TrainConfig { epochs: 6, batch_size: 8, seed: 4, ..TrainConfig::default() };
        let mut seen = Vec::new();
        let run = train_with(&spec, &config, &data, &data, |r| seen.push(r.clone())).unwrap();
        assert_eq!(seen, run.epochs);
        let max = run.epochs.iter().map(|r| r.test_acc).fold(f64::MIN, f64::max);
        let first = run.epochs.iter().position(|r| r.test_acc == max).unwrap() + 1;
        assert_eq!(run.best_epoch, first);
        assert_eq!(evaluate(&run.best_params, &data).unwrap().accuracy, max);
    }

    #[test]
    fn rejects_empty_splits_and_bad_config() {
        let spec = small_spec();
        let data = random_set(&spec, 4, 0);
        let cfg = TrainConfig::default();
        assert!(matches!(train(&spec, &cfg, &[], &data), Err(NnError::EmptySplit("train"))));
        assert!(matches!(train(&spec, &cfg, &data, &[]), Err(NnError::EmptySplit("test"))));
        let zero = TrainConfig { batch_size: 0, ..cfg };
        assert!(matches!(train(&spec, &zero, &data, &data), Err(NnError::Config(_))));
    }
}
