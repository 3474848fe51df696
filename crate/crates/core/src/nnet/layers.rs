//! Layer kernels with hand-derived backward passes.
//!
//! Tensors are flat row-major slices: sequence activations are
//! `len x channels`, batch matrices are `batch x features`. Convolution
//! weights use the `kernel x in_channels x filters` layout.

use rand::Rng;

use super::spec::{same_padding, Activation};
use super::Real;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;
/// Clamp applied to probabilities before taking logs in the loss.
pub const LOSS_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Shape of a 1D convolution call.
#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub len_in: usize,
    pub c_in: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn len_out(&self) -> usize {
        self.len_in.div_ceil(self.stride)
    }

    fn pad_left(&self) -> usize {
        same_padding(self.len_in, self.kernel, self.stride).0
    }

    /// Input row feeding kernel tap `k` of output `t`, if inside the sequence.
    #[inline]
    fn source(&self, t: usize, k: usize) -> Option<usize> {
        (t * self.stride + k).checked_sub(self.pad_left()).filter(|&p| p < self.len_in)
    }
}

/// "Same"-padded strided cross-correlation plus bias. Returns the
/// pre-activation `len_out x filters`.
pub fn conv1d_forward<F: Real>(input: &[F], weights: &[F], bias: &[F], g: &ConvGeometry) -> Vec<F> {
    debug_assert_eq!(input.len(), g.len_in * g.c_in);
    debug_assert_eq!(weights.len(), g.kernel * g.c_in * g.filters);
    let len_out = g.len_out();
    let mut out = Vec::with_capacity(len_out * g.filters);
    for t in 0..len_out {
        out.extend_from_slice(bias);
        let row = &mut out[t * g.filters..(t + 1) * g.filters];
        for k in 0..g.kernel {
            let Some(p) = g.source(t, k) else { continue };
            let x_row = &input[p * g.c_in..(p + 1) * g.c_in];
            for (c, &x) in x_row.iter().enumerate() {
                if x == F::zero() {
                    continue;
                }
                let w = &weights[(k * g.c_in + c) * g.filters..(k * g.c_in + c + 1) * g.filters];
                for (o, &wf) in row.iter_mut().zip(w) {
                    *o += wf * x;
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `want_input` is set.
pub fn conv1d_backward<F: Real>(
    input: &[F],
    weights: &[F],
    d_out: &[F],
    g: &ConvGeometry,
    d_weights: &mut [F],
    d_bias: &mut [F],
    want_input: bool,
) -> Option<Vec<F>> {
    let mut d_input = want_input.then(|| vec![F::zero(); g.len_in * g.c_in]);
    for t in 0..g.len_out() {
        let dz = &d_out[t * g.filters..(t + 1) * g.filters];
        for (db, &d) in d_bias.iter_mut().zip(dz) {
            *db += d;
        }
        for k in 0..g.kernel {
            let Some(p) = g.source(t, k) else { continue };
            for c in 0..g.c_in {
                let at = (k * g.c_in + c) * g.filters;
                let x = input[p * g.c_in + c];
                if x != F::zero() {
                    for (dw, &d) in d_weights[at..at + g.filters].iter_mut().zip(dz) {
                        *dw += d * x;
                    }
                }
                if let Some(di) = d_input.as_mut() {
                    let w = &weights[at..at + g.filters];
                    di[p * g.c_in + c] += w.iter().zip(dz).fold(F::zero(), |acc, (&w, &d)| acc + w * d);
                }
            }
        }
    }
    d_input
}

pub fn activate<F: Real>(z: &[F], act: Activation) -> Vec<F> {
    match act {
        Activation::Relu => z.iter().map(|&v| v.max(F::zero())).collect(),
        Activation::Linear => z.to_vec(),
    }
}

/// Multiplies `grad` by the activation derivative at pre-activation `z`.
pub fn activation_backward<F: Real>(z: &[F], grad: &mut [F], act: Activation) {
    if act == Activation::Relu {
        for (g, &v) in grad.iter_mut().zip(z) {
            if v <= F::zero() {
                *g = F::zero();
            }
        }
    }
}

/// Valid max pooling over `len x channels`. The argmax of each window is the
/// first position holding the maximum; it alone receives the gradient.
pub fn maxpool1d_forward<F: Real>(
    input: &[F],
    len: usize,
    channels: usize,
    size: usize,
    stride: usize,
) -> (Vec<F>, Vec<u32>) {
    let len_out = (len - size) / stride + 1;
    let mut out = Vec::with_capacity(len_out * channels);
    let mut argmax = Vec::with_capacity(len_out * channels);
    for t in 0..len_out {
        for c in 0..channels {
            let mut best = t * stride;
            for p in t * stride + 1..t * stride + size {
                if input[p * channels + c] > input[best * channels + c] {
                    best = p;
                }
            }
            out.push(input[best * channels + c]);
            argmax.push(best as u32);
        }
    }
    (out, argmax)
}

pub fn maxpool1d_backward<F: Real>(d_out: &[F], argmax: &[u32], len: usize, channels: usize) -> Vec<F> {
    let mut d_in = vec![F::zero(); len * channels];
    for (i, (&d, &p)) in d_out.iter().zip(argmax).enumerate() {
        d_in[p as usize * channels + i % channels] += d;
    }
    d_in
}

/// Inverted-dropout mask: 0 with probability `rate`, else `1 / (1 - rate)`.
pub fn dropout_mask<F: Real, R: Rng>(len: usize, rate: f64, rng: &mut R) -> Vec<F> {
    let keep = F::of(1.0 / (1.0 - rate));
    (0..len).map(|_| if rng.gen::<f64>() < rate { F::zero() } else { keep }).collect()
}

/// Applies dropout in place. Inference, and a zero rate, leave values untouched.
pub fn dropout_forward<F: Real, R: Rng>(values: &mut [F], rate: f64, mode: Mode, rng: &mut R) -> Option<Vec<F>> {
    if mode == Mode::Infer || rate == 0.0 {
        return None;
    }
    let mask = dropout_mask(values.len(), rate, rng);
    for (v, &m) in values.iter_mut().zip(&mask) {
        *v *= m;
    }
    Some(mask)
}

/// Cached quantities for the batchnorm backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormTrace<F> {
    pub features: usize,
    /// Normalized input, `batch x features`.
    pub xhat: Vec<F>,
    pub inv_std: Vec<F>,
    /// Batch statistics (biased variance); empty in inference mode.
    pub batch_mean: Vec<F>,
    pub batch_var: Vec<F>,
}

/// Feature-wise batch normalization over `batch x features`. Train mode
/// uses batch statistics (batch must have at least two rows); inference
/// uses the running estimates.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm_forward<F: Real>(
    input: &[F],
    batch: usize,
    gamma: &[F],
    beta: &[F],
    running_mean: &[F],
    running_var: &[F],
    mode: Mode,
) -> (Vec<F>, BatchNormTrace<F>) {
    let d = gamma.len();
    let eps = F::of(BN_EPSILON);
    let (mean, var, batch_mean, batch_var) = match mode {
        Mode::Train => {
            let nb = F::of(batch as f64);
            let mut mean = vec![F::zero(); d];
            for row in input.chunks_exact(d) {
                for (m, &x) in mean.iter_mut().zip(row) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / nb);
            let mut var = vec![F::zero(); d];
            for row in input.chunks_exact(d) {
                for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
                    *v += (x - m) * (x - m);
                }
            }
            var.iter_mut().for_each(|v| *v = *v / nb);
            (mean.clone(), var.clone(), mean, var)
        }
        Mode::Infer => (running_mean.to_vec(), running_var.to_vec(), Vec::new(), Vec::new()),
    };
    let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();
    let mut xhat = Vec::with_capacity(input.len());
    let mut out = Vec::with_capacity(input.len());
    for row in input.chunks_exact(d) {
        for j in 0..d {
            let h = (row[j] - mean[j]) * inv_std[j];
            xhat.push(h);
            out.push(gamma[j] * h + beta[j]);
        }
    }
    (out, BatchNormTrace { features: d, xhat, inv_std, batch_mean, batch_var })
}

/// Backward through train-mode batchnorm:
/// `dx = inv_std / B * (B dxhat - sum dxhat - xhat * sum(dxhat xhat))`.
pub fn batchnorm_backward<F: Real>(
    d_out: &[F],
    trace: &BatchNormTrace<F>,
    gamma: &[F],
    d_gamma: &mut [F],
    d_beta: &mut [F],
) -> Vec<F> {
    let d = trace.features;
    let batch = d_out.len() / d;
    let nb = F::of(batch as f64);
    let mut sum_dxhat = vec![F::zero(); d];
    let mut sum_dxhat_xhat = vec![F::zero(); d];
    for (dy_row, xh_row) in d_out.chunks_exact(d).zip(trace.xhat.chunks_exact(d)) {
        for j in 0..d {
            d_beta[j] += dy_row[j];
            d_gamma[j] += dy_row[j] * xh_row[j];
            let dxhat = dy_row[j] * gamma[j];
            sum_dxhat[j] += dxhat;
            sum_dxhat_xhat[j] += dxhat * xh_row[j];
        }
    }
    let mut d_in = Vec::with_capacity(d_out.len());
    for (dy_row, xh_row) in d_out.chunks_exact(d).zip(trace.xhat.chunks_exact(d)) {
        for j in 0..d {
            let dxhat = dy_row[j] * gamma[j];
            d_in.push(trace.inv_std[j] / nb * (nb * dxhat - sum_dxhat[j] - xh_row[j] * sum_dxhat_xhat[j]));
        }
    }
    d_in
}

/// Logistic function, split by sign so neither branch overflows, then
/// clamped to the open interval (0, 1).
pub fn sigmoid<F: Real>(z: F) -> F {
    if z.is_nan() {
        return z;
    }
    let p = if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    };
    let lo = F::min_positive_value();
    let hi = F::one() - F::epsilon() / F::of(2.0);
    p.max(lo).min(hi)
}

/// `sigmoid(w . x + b)`; returns (logit, probability).
pub fn dense_sigmoid_forward<F: Real>(x: &[F], w: &[F], b: F) -> (F, F) {
    debug_assert_eq!(x.len(), w.len());
    let logit = x.iter().zip(w).fold(b, |acc, (&xi, &wi)| acc + xi * wi);
    (logit, sigmoid(logit))
}

/// Weighted binary cross-entropy on a probability. The probability is
/// clamped to `[1e-7, 1 - 1e-7]` for the logarithms; the returned gradient
/// is with respect to the pre-sigmoid logit:
/// `pos_weight * y * (p - 1) + (1 - y) * p`, i.e. `p - y` at unit weight.
pub fn bce_loss<F: Real>(p: F, y: u8, pos_weight: F) -> (F, F) {
    let c = F::of(LOSS_CLAMP);
    let pc = p.max(c).min(F::one() - c);
    if y == 1 {
        (-pos_weight * pc.ln(), pos_weight * (p - F::one()))
    } else {
        (-(F::one() - pc).ln(), p)
    }
}
