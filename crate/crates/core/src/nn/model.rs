use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{conv_back, conv_pre, dense_back, dense_pre, pool_fwd, softmax, softmax_cross_entropy};
use super::{Activation, ConvLayerSpec, DenseLayerSpec, LossOutput, NnError, Real, Tensor};
use crate::features::FeatureTensor;

/// One convolution stage of a channel: convolution, activation, max pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub filters: usize,
    pub kernel_len: usize,
    pub stride: usize,
    pub activation: Activation,
    /// Max-pool width after the activation; 1 disables pooling.
    pub pool_width: usize,
}

/// Architecture of the two-channel network.
///
/// Both channels (frequency and power) use the same `conv` stages and dense
/// width; only their input lengths differ. Their dense outputs are
/// concatenated and fed to a linear output layer with `classes` logits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub streams: usize,
    pub freq_bins: usize,
    pub power_bins: usize,
    pub classes: usize,
    pub conv: Vec<ConvStage>,
    pub dense_units: usize,
    pub dense_activation: Activation,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            streams: crate::NUM_STREAMS,
            freq_bins: crate::WINDOW_LEN / 2 + 1,
            power_bins: 33,
            classes: crate::NUM_CLASSES,
            conv: vec![
                ConvStage {
                    filters: 32,
                    kernel_len: 7,
                    stride: 1,
                    activation: Activation::Relu,
                    pool_width: 2,
                },
                ConvStage {
                    filters: 64,
                    kernel_len: 5,
                    stride: 1,
                    activation: Activation::Relu,
                    pool_width: 2,
                },
            ],
            dense_units: 128,
            dense_activation: Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvPlan {
    pub spec: ConvLayerSpec,
    pub in_len: usize,
    pub out_len: usize,
    pub pool_width: usize,
    pub pooled_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ChannelPlan {
    pub input_len: usize,
    pub convs: Vec<ConvPlan>,
    pub dense: DenseLayerSpec,
}

/// Identifies one parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSlot {
    ConvWeight { channel: usize, stage: usize },
    ConvBias { channel: usize, stage: usize },
    DenseWeight { channel: usize },
    DenseBias { channel: usize },
    FusionWeight,
    FusionBias,
}

pub(crate) const CHANNEL_NAMES: [&str; 2] = ["freq", "power"];

impl ParamSlot {
    pub fn name(self) -> String {
        match self {
            ParamSlot::ConvWeight { channel, stage } => format!("{}.conv{stage}.weight", CHANNEL_NAMES[channel]),
            ParamSlot::ConvBias { channel, stage } => format!("{}.conv{stage}.bias", CHANNEL_NAMES[channel]),
            ParamSlot::DenseWeight { channel } => format!("{}.dense.weight", CHANNEL_NAMES[channel]),
            ParamSlot::DenseBias { channel } => format!("{}.dense.bias", CHANNEL_NAMES[channel]),
            ParamSlot::FusionWeight => "fusion.weight".into(),
            ParamSlot::FusionBias => "fusion.bias".into(),
        }
    }
}

impl ModelSpec {
    pub(crate) fn channel_plan(&self, input_len: usize) -> Result<ChannelPlan, NnError> {
        if self.conv.is_empty() {
            return Err(NnError::Config("at least one conv stage is required".into()));
        }
        let mut convs = Vec::with_capacity(self.conv.len());
        let (mut streams, mut len) = (self.streams, input_len);
        for stage in &self.conv {
            let spec = ConvLayerSpec {
                in_streams: streams,
                filters: stage.filters,
                kernel_len: stage.kernel_len,
                stride: stage.stride,
                activation: stage.activation,
            };
            let out_len = spec.output_len(len)?;
            if stage.pool_width == 0 || out_len / stage.pool_width == 0 {
                return Err(NnError::Config(format!(
                    "pool width {} does not fit conv output length {out_len}",
                    stage.pool_width
                )));
            }
            let pooled_len = out_len / stage.pool_width;
            convs.push(ConvPlan {
                spec,
                in_len: len,
                out_len,
                pool_width: stage.pool_width,
                pooled_len,
            });
            streams = stage.filters;
            len = pooled_len;
        }
        if self.dense_units == 0 {
            return Err(NnError::Config("dense width must be >= 1".into()));
        }
        Ok(ChannelPlan {
            input_len,
            convs,
            dense: DenseLayerSpec {
                in_dim: streams * len,
                out_nodes: self.dense_units,
                activation: self.dense_activation,
            },
        })
    }

    pub(crate) fn plans(&self) -> Result<[ChannelPlan; 2], NnError> {
        if self.streams == 0 || self.classes < 2 {
            return Err(NnError::Config("need >= 1 stream and >= 2 classes".into()));
        }
        Ok([self.channel_plan(self.freq_bins)?, self.channel_plan(self.power_bins)?])
    }

    pub(crate) fn fusion(&self) -> DenseLayerSpec {
        DenseLayerSpec {
            in_dim: 2 * self.dense_units,
            out_nodes: self.classes,
            activation: Activation::Identity,
        }
    }

    /// Checks that both channels can be built for the configured input sizes.
    pub fn validate(&self) -> Result<(), NnError> {
        self.plans().map(|_| ())
    }

    /// Every parameter tensor in storage order with its shape.
    pub fn param_layout(&self) -> Result<Vec<(ParamSlot, Vec<usize>)>, NnError> {
        let plans = self.plans()?;
        let mut out = Vec::new();
        for (channel, plan) in plans.iter().enumerate() {
            for (stage, c) in plan.convs.iter().enumerate() {
                out.push((ParamSlot::ConvWeight { channel, stage }, c.spec.weight_shape().to_vec()));
                out.push((ParamSlot::ConvBias { channel, stage }, vec![c.spec.filters]));
            }
            out.push((ParamSlot::DenseWeight { channel }, plan.dense.weight_shape().to_vec()));
            out.push((ParamSlot::DenseBias { channel }, vec![plan.dense.out_nodes]));
        }
        let fusion = self.fusion();
        out.push((ParamSlot::FusionWeight, fusion.weight_shape().to_vec()));
        out.push((ParamSlot::FusionBias, vec![fusion.out_nodes]));
        Ok(out)
    }

    fn channel_base(&self, channel: usize) -> usize {
        channel * (2 * self.conv.len() + 2)
    }
}

/// One network input: normalized channel features, row-major
/// `streams x bins`, plus the class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub freq: Vec<T>,
    pub power: Vec<T>,
    pub label: usize,
}

impl<T: Real> Example<T> {
    pub fn from_features(features: &FeatureTensor, label: usize) -> Self {
        Self {
            freq: features.freq.data.iter().map(|&v| T::from_f64_lossy(v)).collect(),
            power: features.power.data.iter().map(|&v| T::from_f64_lossy(v)).collect(),
            label,
        }
    }

    fn channel(&self, channel: usize) -> &[T] {
        if channel == 0 {
            &self.freq
        } else {
            &self.power
        }
    }
}

/// Weights and biases of the two-channel network, stored as a flat list of
/// tensors in [`ModelSpec::param_layout`] order.
///
/// Both channels are built from the one [`ModelSpec`], so their layer
/// hyperparameters are identical by construction; [`ModelParams::from_tensors`]
/// rejects tensors whose shapes disagree with that layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    spec: ModelSpec,
    seed: u64,
    tensors: Vec<Tensor<T>>,
    plans: [ChannelPlan; 2],
}

/// Parameter gradients, laid out like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(params: &ModelParams<T>) -> Self {
        Self {
            tensors: params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    fn pair_mut(&mut self, weight: usize) -> (&mut [T], &mut [T]) {
        let (lo, hi) = self.tensors.split_at_mut(weight + 1);
        (lo[weight].data_mut(), hi[0].data_mut())
    }
}

struct StageCache<T> {
    input: Vec<T>,
    pre: Vec<T>,
    act: Vec<T>,
    argmax: Vec<usize>,
}

struct ChannelCache<T> {
    stages: Vec<StageCache<T>>,
    flat: Vec<T>,
    dense_pre: Vec<T>,
    dense_out: Vec<T>,
}

pub(crate) struct ForwardCache<T> {
    channels: Vec<ChannelCache<T>>,
    fused: Vec<T>,
    pub logits: Vec<T>,
}

impl<T: Real> ModelParams<T> {
    /// Fresh parameters: He-uniform weights (`limit = sqrt(6 / fan_in)`) for
    /// ReLU layers, Glorot-uniform (`sqrt(6 / (fan_in + fan_out))`) for the
    /// rest, zero biases. Values are drawn in `f64` from ChaCha8 seeded with
    /// `seed`, so the same seed gives the same network in any precision.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self, NnError> {
        let plans = spec.plans()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = Vec::new();
        let mut draw = |shape: &[usize], fan_in: usize, fan_out: usize, act: Activation| {
            let limit = match act {
                Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            };
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| T::from_f64_lossy(rng.gen_range(-limit..limit))).collect();
            Tensor::new(shape.to_vec(), data)
        };
        for plan in &plans {
            for c in &plan.convs {
                let s = c.spec;
                tensors.push(draw(&s.weight_shape(), s.kernel_len * s.in_streams, s.kernel_len * s.filters, s.activation)?);
                tensors.push(Tensor::zeros(&[s.filters]));
            }
            let d = plan.dense;
            tensors.push(draw(&d.weight_shape(), d.in_dim, d.out_nodes, d.activation)?);
            tensors.push(Tensor::zeros(&[d.out_nodes]));
        }
        let f = spec.fusion();
        tensors.push(draw(&f.weight_shape(), f.in_dim, f.out_nodes, f.activation)?);
        tensors.push(Tensor::zeros(&[f.out_nodes]));
        Ok(Self {
            spec: spec.clone(),
            seed,
            tensors,
            plans,
        })
    }

    pub fn from_tensors(spec: &ModelSpec, seed: u64, tensors: Vec<Tensor<T>>) -> Result<Self, NnError> {
        let layout = spec.param_layout()?;
        if layout.len() != tensors.len() {
            return Err(NnError::Shape {
                context: "parameter count".into(),
                expected: vec![layout.len()],
                found: vec![tensors.len()],
            });
        }
        for ((slot, shape), t) in layout.iter().zip(&tensors) {
            t.expect_shape(shape, &slot.name())?;
        }
        Ok(Self {
            spec: spec.clone(),
            seed,
            tensors,
            plans: spec.plans()?,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        self.spec
            .param_layout()
            .expect("layout validated at construction")
            .into_iter()
            .zip(&self.tensors)
            .map(|((slot, _), t)| (slot.name(), t))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            spec: self.spec.clone(),
            seed: self.seed,
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            plans: self.plans.clone(),
        }
    }

    fn check_example(&self, x: &Example<T>) -> Result<(), NnError> {
        for (channel, plan) in self.plans.iter().enumerate() {
            let want = self.spec.streams * plan.input_len;
            let got = x.channel(channel).len();
            if got != want {
                return Err(NnError::Shape {
                    context: format!("{} channel input", CHANNEL_NAMES[channel]),
                    expected: vec![self.spec.streams, plan.input_len],
                    found: vec![got],
                });
            }
        }
        if x.label >= self.spec.classes {
            return Err(NnError::Shape {
                context: "label".into(),
                expected: vec![self.spec.classes],
                found: vec![x.label],
            });
        }
        Ok(())
    }

    fn forward_channel(&self, channel: usize, input: &[T]) -> ChannelCache<T> {
        let plan = &self.plans[channel];
        let base = self.spec.channel_base(channel);
        let mut stages = Vec::with_capacity(plan.convs.len());
        let mut x = input.to_vec();
        for (k, c) in plan.convs.iter().enumerate() {
            let (w, b) = (&self.tensors[base + 2 * k], &self.tensors[base + 2 * k + 1]);
            let mut pre = vec![T::zero(); c.spec.filters * c.out_len];
            conv_pre(&c.spec, &x, c.in_len, w.data(), b.data(), &mut pre);
            let act: Vec<T> = pre.iter().map(|&z| c.spec.activation.apply(z)).collect();
            let mut pooled = vec![T::zero(); c.spec.filters * c.pooled_len];
            let mut argmax = vec![0; pooled.len()];
            pool_fwd(&act, c.out_len, c.pool_width, &mut pooled, &mut argmax);
            stages.push(StageCache {
                input: std::mem::replace(&mut x, pooled),
                pre,
                act,
                argmax,
            });
        }
        let k = plan.convs.len();
        let (w, b) = (&self.tensors[base + 2 * k], &self.tensors[base + 2 * k + 1]);
        let mut dense_pre_v = vec![T::zero(); plan.dense.out_nodes];
        dense_pre(&x, w.data(), b.data(), &mut dense_pre_v);
        let dense_out = dense_pre_v.iter().map(|&z| plan.dense.activation.apply(z)).collect();
        ChannelCache {
            stages,
            flat: x,
            dense_pre: dense_pre_v,
            dense_out,
        }
    }

    pub(crate) fn forward_cached(&self, x: &Example<T>) -> Result<ForwardCache<T>, NnError> {
        self.check_example(x)?;
        let channels: Vec<ChannelCache<T>> = (0..2).map(|c| self.forward_channel(c, x.channel(c))).collect();
        let fused: Vec<T> = channels.iter().flat_map(|c| c.dense_out.iter().copied()).collect();
        let n = self.tensors.len();
        let mut logits = vec![T::zero(); self.spec.classes];
        dense_pre(&fused, self.tensors[n - 2].data(), self.tensors[n - 1].data(), &mut logits);
        Ok(ForwardCache {
            channels,
            fused,
            logits,
        })
    }

    pub fn logits(&self, x: &Example<T>) -> Result<Vec<T>, NnError> {
        Ok(self.forward_cached(x)?.logits)
    }

    /// Class probabilities for one example.
    pub fn predict(&self, x: &Example<T>) -> Result<Vec<T>, NnError> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Adds the gradient for upstream logit gradient `dlogits` into `grads`.
    pub(crate) fn backward(&self, cache: &ForwardCache<T>, dlogits: &[T], grads: &mut Gradients<T>) {
        let n = self.tensors.len();
        let mut dfused = vec![T::zero(); cache.fused.len()];
        {
            let (dw, db) = grads.pair_mut(n - 2);
            dense_back(&cache.fused, dlogits, self.tensors[n - 2].data(), dw, db, Some(&mut dfused));
        }
        let units = self.spec.dense_units;
        for (channel, cc) in cache.channels.iter().enumerate() {
            let plan = &self.plans[channel];
            let base = self.spec.channel_base(channel);
            let k = plan.convs.len();
            let act = plan.dense.activation;
            let dz: Vec<T> = dfused[channel * units..(channel + 1) * units]
                .iter()
                .zip(cc.dense_pre.iter().zip(&cc.dense_out))
                .map(|(&g, (&z, &a))| g * act.derivative(z, a))
                .collect();
            let mut dx = vec![T::zero(); cc.flat.len()];
            {
                let (dw, db) = grads.pair_mut(base + 2 * k);
                dense_back(&cc.flat, &dz, self.tensors[base + 2 * k].data(), dw, db, Some(&mut dx));
            }
            for (stage, (c, sc)) in plan.convs.iter().zip(&cc.stages).enumerate().rev() {
                let mut dz = vec![T::zero(); sc.pre.len()];
                for (&g, &j) in dx.iter().zip(&sc.argmax) {
                    dz[j] += g;
                }
                let a = c.spec.activation;
                for ((d, &z), &av) in dz.iter_mut().zip(&sc.pre).zip(&sc.act) {
                    *d *= a.derivative(z, av);
                }
                let w = self.tensors[base + 2 * stage].data();
                let (dw, db) = grads.pair_mut(base + 2 * stage);
                if stage > 0 {
                    let mut dprev = vec![T::zero(); sc.input.len()];
                    conv_back(&c.spec, &sc.input, c.in_len, &dz, w, dw, db, Some(&mut dprev));
                    dx = dprev;
                } else {
                    conv_back(&c.spec, &sc.input, c.in_len, &dz, w, dw, db, None);
                }
            }
        }
    }

    /// Loss and gradient of one example, added into `grads`.
    fn accumulate(&self, x: &Example<T>, grads: &mut Gradients<T>) -> Result<LossOutput<T>, NnError> {
        let cache = self.forward_cached(x)?;
        let out = softmax_cross_entropy(&cache.logits, x.label);
        self.backward(&cache, &out.grad, grads);
        Ok(out)
    }

    /// Mean loss and mean gradient over a batch.
    ///
    /// The batch is cut into fixed chunks that are processed in parallel and
    /// summed in chunk order, so the result does not depend on the number of
    /// worker threads.
    pub fn batch_gradient(&self, batch: &[&Example<T>]) -> Result<(T, Gradients<T>), NnError> {
        const CHUNK: usize = 8;
        let partials: Vec<(T, Gradients<T>)> = batch
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = Gradients::zeros_like(self);
                let mut loss = T::zero();
                for x in chunk {
                    loss += self.accumulate(x, &mut g)?.loss;
                }
                Ok((loss, g))
            })
            .collect::<Result<_, NnError>>()?;
        let mut total = Gradients::zeros_like(self);
        let mut loss = T::zero();
        for (l, g) in &partials {
            loss += *l;
            total.add_assign(g);
        }
        let inv = T::one() / T::from_f64_lossy(batch.len().max(1) as f64);
        total.scale(inv);
        Ok((loss * inv, total))
    }
}

/// Class probabilities of `x` under `params`.
pub fn model_forward<T: Real>(x: &Example<T>, params: &ModelParams<T>) -> Result<Vec<T>, NnError> {
    params.predict(x)
}

/// Cross-entropy loss and its gradient with respect to every parameter.
pub fn model_backward<T: Real>(x: &Example<T>, params: &ModelParams<T>) -> Result<(LossOutput<T>, Gradients<T>), NnError> {
    let mut grads = Gradients::zeros_like(params);
    let out = params.accumulate(x, &mut grads)?;
    Ok((out, grads))
}
