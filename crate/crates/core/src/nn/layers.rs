use serde::{Deserialize, Serialize};

use super::{NnError, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative given the pre-activation `z` and the output `a`.
    #[inline]
    pub fn derivative<T: Real>(self, z: T, a: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => a * (T::one() - a),
            Activation::Identity => T::one(),
        }
    }
}

/// Fully connected layer `h_n = act(sum_i w[n][i] x_i + b_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseLayerSpec {
    pub in_dim: usize,
    pub out_nodes: usize,
    pub activation: Activation,
}

impl DenseLayerSpec {
    pub fn weight_shape(&self) -> [usize; 2] {
        [self.out_nodes, self.in_dim]
    }
}

/// Valid (unpadded) multi-stream 1-D convolution with stride.
///
/// `h[n][s] = act(sum_r sum_i w[n][i][r] x[r][s*stride + i] + b[n])`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub in_streams: usize,
    pub filters: usize,
    pub kernel_len: usize,
    pub stride: usize,
    pub activation: Activation,
}

impl ConvLayerSpec {
    pub fn weight_shape(&self) -> [usize; 3] {
        [self.filters, self.kernel_len, self.in_streams]
    }

    pub fn output_len(&self, input_len: usize) -> Result<usize, NnError> {
        if self.stride == 0 || self.kernel_len == 0 || self.filters == 0 || self.in_streams == 0 {
            return Err(NnError::Config(
                "filters, streams, kernel length and stride must be >= 1".into(),
            ));
        }
        if self.kernel_len > input_len {
            return Err(NnError::KernelTooLong {
                kernel: self.kernel_len,
                input: input_len,
            });
        }
        Ok((input_len - self.kernel_len) / self.stride + 1)
    }
}

// Slice kernels shared by the tensor-level functions and the model. Shapes
// are checked by the callers.

/// `out[n] = sum_i w[n][i] x[i] + b[n]` (pre-activation).
pub(crate) fn dense_pre<T: Real>(x: &[T], w: &[T], b: &[T], out: &mut [T]) {
    let in_dim = x.len();
    for ((o, row), &bias) in out.iter_mut().zip(w.chunks_exact(in_dim)).zip(b) {
        let mut acc = bias;
        for (&wi, &xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *o = acc;
    }
}

/// Accumulates weight/bias gradients for upstream gradient `dz` on the
/// pre-activation; writes the input gradient into `dx` when given.
pub(crate) fn dense_back<T: Real>(
    x: &[T],
    dz: &[T],
    w: &[T],
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
) {
    let in_dim = x.len();
    for ((&g, dw_row), dbn) in dz.iter().zip(dw.chunks_exact_mut(in_dim)).zip(db.iter_mut()) {
        *dbn += g;
        if g != T::zero() {
            for (d, &xi) in dw_row.iter_mut().zip(x) {
                *d += g * xi;
            }
        }
    }
    if let Some(dx) = dx {
        dx.iter_mut().for_each(|v| *v = T::zero());
        for (&g, row) in dz.iter().zip(w.chunks_exact(in_dim)) {
            if g != T::zero() {
                for (d, &wi) in dx.iter_mut().zip(row) {
                    *d += g * wi;
                }
            }
        }
    }
}

/// Convolution pre-activation. `x` is `[R][lin]`, `out` is `[F][lout]`.
pub(crate) fn conv_pre<T: Real>(spec: &ConvLayerSpec, x: &[T], lin: usize, w: &[T], b: &[T], out: &mut [T]) {
    let (r_n, m, z) = (spec.in_streams, spec.kernel_len, spec.stride);
    let lout = out.len() / spec.filters;
    for (n, out_row) in out.chunks_exact_mut(lout).enumerate() {
        out_row.iter_mut().for_each(|v| *v = b[n]);
        for r in 0..r_n {
            let x_row = &x[r * lin..(r + 1) * lin];
            for i in 0..m {
                let wv = w[(n * m + i) * r_n + r];
                if z == 1 {
                    for (o, &xv) in out_row.iter_mut().zip(&x_row[i..i + lout]) {
                        *o += wv * xv;
                    }
                } else {
                    for (s, o) in out_row.iter_mut().enumerate() {
                        *o += wv * x_row[s * z + i];
                    }
                }
            }
        }
    }
}

/// Convolution backward for upstream gradient `dz` (`[F][lout]`) on the
/// pre-activation.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_back<T: Real>(
    spec: &ConvLayerSpec,
    x: &[T],
    lin: usize,
    dz: &[T],
    w: &[T],
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
) {
    let (r_n, m, z) = (spec.in_streams, spec.kernel_len, spec.stride);
    let lout = dz.len() / spec.filters;
    for (n, dz_row) in dz.chunks_exact(lout).enumerate() {
        db[n] += dz_row.iter().copied().sum::<T>();
        for r in 0..r_n {
            let x_row = &x[r * lin..(r + 1) * lin];
            for i in 0..m {
                let mut acc = T::zero();
                for (s, &g) in dz_row.iter().enumerate() {
                    acc += g * x_row[s * z + i];
                }
                dw[(n * m + i) * r_n + r] += acc;
            }
        }
    }
    if let Some(dx) = dx {
        dx.iter_mut().for_each(|v| *v = T::zero());
        for (n, dz_row) in dz.chunks_exact(lout).enumerate() {
            for r in 0..r_n {
                let dx_row = &mut dx[r * lin..(r + 1) * lin];
                for i in 0..m {
                    let wv = w[(n * m + i) * r_n + r];
                    for (s, &g) in dz_row.iter().enumerate() {
                        dx_row[s * z + i] += wv * g;
                    }
                }
            }
        }
    }
}

/// Non-overlapping max pooling over each row of `[F][lin]`; records the
/// input index of every maximum (first one on ties).
pub(crate) fn pool_fwd<T: Real>(x: &[T], lin: usize, width: usize, out: &mut [T], argmax: &mut [usize]) {
    let lout = lin / width;
    let rows = x.len() / lin;
    for f in 0..rows {
        for s in 0..lout {
            let base = f * lin + s * width;
            let mut best = base;
            for j in base + 1..base + width {
                if x[j] > x[best] {
                    best = j;
                }
            }
            out[f * lout + s] = x[best];
            argmax[f * lout + s] = best;
        }
    }
}

pub fn dense_forward<T: Real>(
    x: &Tensor<T>,
    spec: &DenseLayerSpec,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    x.expect_shape(&[spec.in_dim], "dense input")?;
    weights.expect_shape(&spec.weight_shape(), "dense weights")?;
    bias.expect_shape(&[spec.out_nodes], "dense bias")?;
    let mut out = vec![T::zero(); spec.out_nodes];
    dense_pre(x.data(), weights.data(), bias.data(), &mut out);
    out.iter_mut().for_each(|v| *v = spec.activation.apply(*v));
    Ok(Tensor::from_vec(out))
}

/// Gradients `(dx, dw, db)` of a dense layer given `dout`, the gradient with
/// respect to its activated output.
pub fn dense_backward<T: Real>(
    x: &Tensor<T>,
    spec: &DenseLayerSpec,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    dout: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), NnError> {
    x.expect_shape(&[spec.in_dim], "dense input")?;
    weights.expect_shape(&spec.weight_shape(), "dense weights")?;
    bias.expect_shape(&[spec.out_nodes], "dense bias")?;
    dout.expect_shape(&[spec.out_nodes], "dense output gradient")?;
    let mut z = vec![T::zero(); spec.out_nodes];
    dense_pre(x.data(), weights.data(), bias.data(), &mut z);
    let dz: Vec<T> = z
        .iter()
        .zip(dout.data())
        .map(|(&zv, &g)| g * spec.activation.derivative(zv, spec.activation.apply(zv)))
        .collect();
    let mut dw = Tensor::zeros(&spec.weight_shape());
    let mut db = Tensor::zeros(&[spec.out_nodes]);
    let mut dx = Tensor::zeros(&[spec.in_dim]);
    dense_back(x.data(), &dz, weights.data(), dw.data_mut(), db.data_mut(), Some(dx.data_mut()));
    Ok((dx, dw, db))
}

fn check_conv<T: Real>(
    x: &Tensor<T>,
    spec: &ConvLayerSpec,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize), NnError> {
    if x.shape().len() != 2 || x.shape()[0] != spec.in_streams {
        return Err(NnError::Shape {
            context: "conv input".into(),
            expected: vec![spec.in_streams, 0],
            found: x.shape().to_vec(),
        });
    }
    let lin = x.shape()[1];
    let lout = spec.output_len(lin)?;
    weights.expect_shape(&spec.weight_shape(), "conv weights")?;
    bias.expect_shape(&[spec.filters], "conv bias")?;
    Ok((lin, lout))
}

/// Forward pass of a strided multi-stream convolution; `x` is
/// `[in_streams, L_in]`, the result `[filters, (L_in - m) / stride + 1]`.
pub fn conv1d_forward<T: Real>(
    x: &Tensor<T>,
    spec: &ConvLayerSpec,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    let (lin, lout) = check_conv(x, spec, weights, bias)?;
    let mut out = vec![T::zero(); spec.filters * lout];
    conv_pre(spec, x.data(), lin, weights.data(), bias.data(), &mut out);
    out.iter_mut().for_each(|v| *v = spec.activation.apply(*v));
    Tensor::new(vec![spec.filters, lout], out)
}

/// Gradients `(dx, dw, db)` of a convolution given `dout`, the gradient with
/// respect to its activated output.
pub fn conv1d_backward<T: Real>(
    x: &Tensor<T>,
    spec: &ConvLayerSpec,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    dout: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), NnError> {
    let (lin, lout) = check_conv(x, spec, weights, bias)?;
    dout.expect_shape(&[spec.filters, lout], "conv output gradient")?;
    let mut z = vec![T::zero(); spec.filters * lout];
    conv_pre(spec, x.data(), lin, weights.data(), bias.data(), &mut z);
    let dz: Vec<T> = z
        .iter()
        .zip(dout.data())
        .map(|(&zv, &g)| g * spec.activation.derivative(zv, spec.activation.apply(zv)))
        .collect();
    let mut dw = Tensor::zeros(&spec.weight_shape());
    let mut db = Tensor::zeros(&[spec.filters]);
    let mut dx = Tensor::zeros(x.shape());
    conv_back(spec, x.data(), lin, &dz, weights.data(), dw.data_mut(), db.data_mut(), Some(dx.data_mut()));
    Ok((dx, dw, db))
}

/// Max pooling of `[F, L]` with non-overlapping windows of `width`; trailing
/// positions that do not fill a window are dropped. Returns the pooled
/// tensor and the flat input index of each maximum.
pub fn maxpool1d<T: Real>(x: &Tensor<T>, width: usize) -> Result<(Tensor<T>, Vec<usize>), NnError> {
    if width == 0 {
        return Err(NnError::Config("pool width must be >= 1".into()));
    }
    let (rows, lin) = match *x.shape() {
        [rows, lin] => (rows, lin),
        [lin] => (1, lin),
        _ => {
            return Err(NnError::Shape {
                context: "pool input".into(),
                expected: vec![0, 0],
                found: x.shape().to_vec(),
            })
        }
    };
    let lout = lin / width;
    if lout == 0 {
        return Err(NnError::KernelTooLong { kernel: width, input: lin });
    }
    let mut out = vec![T::zero(); rows * lout];
    let mut argmax = vec![0; rows * lout];
    pool_fwd(x.data(), lin, width, &mut out, &mut argmax);
    let shape = if x.shape().len() == 1 { vec![lout] } else { vec![rows, lout] };
    Ok((Tensor::new(shape, out)?, argmax))
}

/// Max-shifted softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    pub loss: T,
    /// Gradient of the loss with respect to the logits, `probs - onehot`.
    pub grad: Vec<T>,
    pub probs: Vec<T>,
}

pub fn softmax_cross_entropy<T: Real>(logits: &[T], class: usize) -> LossOutput<T> {
    let probs = softmax(logits);
    // log-softmax directly, so a confident correct prediction gives 0
    // instead of -ln(0) underflow on the wrong classes.
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln() + max;
    let loss = lse - logits[class];
    let grad = probs
        .iter()
        .enumerate()
        .map(|(k, &p)| if k == class { p - T::one() } else { p })
        .collect();
    LossOutput { loss, grad, probs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
    }

    #[test]
    fn dense_zero_weights_give_activated_bias() {
        let spec = DenseLayerSpec { in_dim: 4, out_nodes: 3, activation: Activation::Sigmoid };
        let x = Tensor::from_vec(vec![1.0f64, -2.0, 3.0, 0.5]);
        let b = Tensor::from_vec(vec![0.3, -1.0, 2.0]);
        let out = dense_forward(&x, &spec, &Tensor::zeros(&[3, 4]), &b).unwrap();
        for (o, bv) in out.data().iter().zip(b.data()) {
            assert_eq!(*o, 1.0 / (1.0 + (-bv).exp()));
        }
    }

    #[test]
    fn dense_identity_layer() {
        let spec = DenseLayerSpec { in_dim: 3, out_nodes: 3, activation: Activation::Identity };
        let mut w = Tensor::<f64>::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let x = Tensor::from_vec(vec![0.25, -7.0, 3.5]);
        assert_eq!(dense_forward(&x, &spec, &w, &Tensor::zeros(&[3])).unwrap(), x);
    }

    #[test]
    fn dense_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = DenseLayerSpec { in_dim: 7, out_nodes: 5, activation: Activation::Relu };
        let x = rand_tensor(&mut rng, &[7]);
        let w = rand_tensor(&mut rng, &[5, 7]);
        let b = rand_tensor(&mut rng, &[5]);
        let got = dense_forward(&x, &spec, &w, &b).unwrap();
        for n in 0..5 {
            let mut acc = b.data()[n];
            for i in 0..7 {
                acc += w.data()[n * 7 + i] * x.data()[i];
            }
            assert!(rel(got.data()[n], acc.max(0.0)) <= 1e-6 || (acc.max(0.0) == 0.0 && got.data()[n] == 0.0));
        }
    }

    #[test]
    fn dense_shape_mismatch() {
        let spec = DenseLayerSpec { in_dim: 3, out_nodes: 2, activation: Activation::Identity };
        let err = dense_forward(&Tensor::<f64>::zeros(&[4]), &spec, &Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2]));
        assert!(matches!(err, Err(NnError::Shape { .. })));
    }

    #[test]
    fn conv_identity_kernel() {
        let spec = ConvLayerSpec { in_streams: 1, filters: 1, kernel_len: 1, stride: 1, activation: Activation::Identity };
        let x = Tensor::new(vec![1, 5], vec![1.0f64, -2.0, 3.0, 4.5, 0.0]).unwrap();
        let w = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let out = conv1d_forward(&x, &spec, &w, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn conv_hand_example_with_stride() {
        let spec = ConvLayerSpec { in_streams: 1, filters: 1, kernel_len: 2, stride: 2, activation: Activation::Identity };
        let x = Tensor::new(vec![1, 4], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::new(vec![1, 2, 1], vec![1.0, 1.0]).unwrap();
        let out = conv1d_forward(&x, &spec, &w, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(out.shape(), &[1, 2]);
        assert_eq!(out.data(), &[3.0, 7.0]);
    }

    #[test]
    fn conv_kernel_too_long() {
        let spec = ConvLayerSpec { in_streams: 1, filters: 1, kernel_len: 5, stride: 1, activation: Activation::Relu };
        let err = conv1d_forward(&Tensor::<f64>::zeros(&[1, 4]), &spec, &Tensor::zeros(&[1, 5, 1]), &Tensor::zeros(&[1]));
        assert!(matches!(err, Err(NnError::KernelTooLong { kernel: 5, input: 4 })));
    }

    /// Straight evaluation of the multi-stream sum.
    fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, spec: &ConvLayerSpec) -> Vec<f64> {
        let lin = x.shape()[1];
        let lout = (lin - spec.kernel_len) / spec.stride + 1;
        let mut out = Vec::new();
        for n in 0..spec.filters {
            for s in 0..lout {
                let mut acc = b.data()[n];
                for r in 0..spec.in_streams {
                    for i in 0..spec.kernel_len {
                        acc += w.data()[(n * spec.kernel_len + i) * spec.in_streams + r]
                            * x.data()[r * lin + s * spec.stride + i];
                    }
                }
                out.push(spec.activation.apply(acc));
            }
        }
        out
    }

    #[test]
    fn conv_matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for stride in [1, 2, 3] {
            let spec = ConvLayerSpec { in_streams: 3, filters: 4, kernel_len: 5, stride, activation: Activation::Identity };
            let x = rand_tensor(&mut rng, &[3, 20]);
            let w = rand_tensor(&mut rng, &[4, 5, 3]);
            let b = rand_tensor(&mut rng, &[4]);
            let got = conv1d_forward(&x, &spec, &w, &b).unwrap();
            let want = conv_oracle(&x, &w, &b, &spec);
            assert_eq!(got.len(), want.len());
            for (g, o) in got.data().iter().zip(&want) {
                assert!(rel(*g, *o) <= 1e-6);
            }
        }
    }

    #[test]
    fn pool_examples() {
        let x = Tensor::from_vec(vec![1.0f64, 3.0, 2.0, 5.0]);
        let (out, arg) = maxpool1d(&x, 2).unwrap();
        assert_eq!(out.data(), &[3.0, 5.0]);
        assert_eq!(arg, vec![1, 3]);
        let (same, _) = maxpool1d(&x, 1).unwrap();
        assert_eq!(same, x);
        // Remainder dropped, first maximum wins on ties.
        let (out, arg) = maxpool1d(&Tensor::from_vec(vec![4.0f64, 4.0, 1.0, 9.0, 9.0]), 2).unwrap();
        assert_eq!(out.data(), &[4.0, 9.0]);
        assert_eq!(arg, vec![0, 3]);
    }

    #[test]
    fn pool_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_tensor(&mut rng, &[4, 23]);
        for width in 1..6 {
            let (out, _) = maxpool1d(&x, width).unwrap();
            let lout = 23 / width;
            assert_eq!(out.shape(), &[4, lout]);
            for f in 0..4 {
                for s in 0..lout {
                    let window = &x.data()[f * 23 + s * width..f * 23 + (s + 1) * width];
                    let m = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    assert_eq!(out.data()[f * lout + s], m);
                }
            }
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let out = softmax_cross_entropy(&[0.3f64; 6], 2);
        assert!((out.loss - 6f64.ln()).abs() < 1e-12);
        assert!((6f64.ln() - 1.7918).abs() < 1e-4);
        assert!(out.probs.iter().all(|p| (p - 1.0 / 6.0).abs() < 1e-12));
        let mut logits = [0.0f64; 6];
        logits[4] = 1e4;
        let out = softmax_cross_entropy(&logits, 4);
        assert!(out.loss.abs() < 1e-12);
        assert!(out.loss.is_finite());
        let f32_out = softmax_cross_entropy(&[0.0f32, 1e4, 0.0, 0.0, 0.0, 0.0], 1);
        assert_eq!(f32_out.loss, 0.0);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 1e-3;
        for _ in 0..50 {
            let logits: Vec<f64> = (0..6).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let class = rng.gen_range(0..6);
            let out = softmax_cross_entropy(&logits, class);
            assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            for k in 0..6 {
                let mut up = logits.clone();
                let mut dn = logits.clone();
                up[k] += h;
                dn[k] -= h;
                let fd = (softmax_cross_entropy(&up, class).loss - softmax_cross_entropy(&dn, class).loss) / (2.0 * h);
                assert!((fd - out.grad[k]).abs() <= 1e-6, "k={k} fd={fd} an={}", out.grad[k]);
            }
        }
    }

    // Scalar loss sum_j c_j * out_j with fixed random c, so dout = c.
    fn fd_check_layer(
        f: &dyn Fn(&Tensor<f64>, &Tensor<f64>, &Tensor<f64>) -> Tensor<f64>,
        x: &Tensor<f64>,
        w: &Tensor<f64>,
        b: &Tensor<f64>,
        c: &Tensor<f64>,
        grads: (Tensor<f64>, Tensor<f64>, Tensor<f64>),
    ) {
        let h = 1e-3;
        let loss = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
            f(x, w, b).data().iter().zip(c.data()).map(|(o, c)| o * c).sum()
        };
        let check = |which: usize, analytic: &Tensor<f64>| {
            let base = [x.clone(), w.clone(), b.clone()];
            for j in 0..base[which].len() {
                let mut up = base.clone();
                let mut dn = base.clone();
                up[which].data_mut()[j] += h;
                dn[which].data_mut()[j] -= h;
                let fd = (loss(&up[0], &up[1], &up[2]) - loss(&dn[0], &dn[1], &dn[2])) / (2.0 * h);
                let a = analytic.data()[j];
                assert!((fd - a).abs() <= 1e-4 * fd.abs().max(a.abs()).max(1e-2), "tensor {which} index {j}: fd {fd} analytic {a}");
            }
        };
        check(0, &grads.0);
        check(1, &grads.1);
        check(2, &grads.2);
    }

    #[test]
    fn dense_and_conv_backward_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for act in [Activation::Sigmoid, Activation::Identity] {
            let spec = DenseLayerSpec { in_dim: 6, out_nodes: 4, activation: act };
            let (x, w, b, c) = (rand_tensor(&mut rng, &[6]), rand_tensor(&mut rng, &[4, 6]), rand_tensor(&mut rng, &[4]), rand_tensor(&mut rng, &[4]));
            let grads = dense_backward(&x, &spec, &w, &b, &c).unwrap();
            fd_check_layer(&|x, w, b| dense_forward(x, &spec, w, b).unwrap(), &x, &w, &b, &c, grads);

            let spec = ConvLayerSpec { in_streams: 2, filters: 3, kernel_len: 3, stride: 2, activation: act };
            let (x, w, b) = (rand_tensor(&mut rng, &[2, 11]), rand_tensor(&mut rng, &[3, 3, 2]), rand_tensor(&mut rng, &[3]));
            let c = rand_tensor(&mut rng, &[3, 5]);
            let grads = conv1d_backward(&x, &spec, &w, &b, &c).unwrap();
            fd_check_layer(&|x, w, b| conv1d_forward(x, &spec, w, b).unwrap(), &x, &w, &b, &c, grads);
        }
    }

    proptest! {
        #[test]
        fn conv_output_length(lin in 1usize..80, m in 1usize..12, z in 1usize..6) {
            prop_assume!(m <= lin);
            let spec = ConvLayerSpec { in_streams: 2, filters: 3, kernel_len: m, stride: z, activation: Activation::Relu };
            let out = conv1d_forward(&Tensor::<f32>::zeros(&[2, lin]), &spec, &Tensor::zeros(&[3, m, 2]), &Tensor::zeros(&[3])).unwrap();
            prop_assert_eq!(out.shape(), &[3, (lin - m) / z + 1]);
            prop_assert_eq!(spec.output_len(lin).unwrap(), (lin - m) / z + 1);
        }

        #[test]
        fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f32..50.0, 6)) {
            let p = softmax(&logits);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f32>() - 1.0).abs() <= 1e-6);
        }
    }
}
