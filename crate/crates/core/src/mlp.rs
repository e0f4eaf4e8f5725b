//! A small fully-connected threshold network with manual backpropagation.
//!
//! The network maps a (standardized) feature vector to `cap * sigmoid(z)`, so
//! every output lies strictly inside `(0, cap)`. Hidden layers use LeakyReLU.
//! Parameters live in one flat vector, layer by layer, each layer storing its
//! weight matrix row-major (`out x in`) followed by its bias. That layout is
//! also the serialization format.
//!
//! Batched passes work on feature-major blocks of samples. Every output
//! element is accumulated in the same order regardless of batch size, so a
//! batched evaluation is bit-identical to evaluating samples one at a time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, invalid, Result};
use crate::kernel::{leaky_grad, leaky_into, outer_dots, panel, sum};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;
pub const DEFAULT_HIDDEN_LAYERS: usize = 10;
pub const DEFAULT_HIDDEN_WIDTH: usize = 10;

/// Widths `[d, h, h, ..., h, 1]` with `depth` hidden layers of `width` units.
pub fn default_widths(input_dim: usize, depth: usize, width: usize) -> Vec<usize> {
    let mut w = Vec::with_capacity(depth + 2);
    w.push(input_dim);
    w.extend(std::iter::repeat_n(width, depth));
    w.push(1);
    w
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mlp {
    widths: Vec<usize>,
    params: Vec<f64>,
    leaky_slope: f64,
    output_cap: f64,
    #[serde(default)]
    clip_bound: Option<f64>,
}

/// Samples per cache block in batched passes.
const BLOCK: usize = 256;

thread_local! {
    static SCRATCH: std::cell::RefCell<Scratch> = std::cell::RefCell::default();
}

/// Runs `f` with this thread's scratch buffers, or fresh ones when they are
/// already borrowed.
fn with_scratch<R>(f: impl FnOnce(&mut Scratch) -> R) -> R {
    SCRATCH.with(|cell| match cell.try_borrow_mut() {
        Ok(mut s) => f(&mut s),
        Err(_) => f(&mut Scratch::default()),
    })
}

/// Per-block activations, reused from block to block.
#[derive(Debug, Default)]
struct Scratch {
    /// `inputs[l]` is the input to layer `l`, feature-major (`widths[l] x len`).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of every layer; the last holds the output logits.
    pre: Vec<Vec<f64>>,
    delta: Vec<f64>,
    da: Vec<f64>,
}

impl Mlp {
    /// Network with every weight and bias set to zero; it outputs `cap / 2`
    /// everywhere.
    pub fn zeros(widths: Vec<usize>, output_cap: f64) -> Result<Self> {
        validate_shape(&widths, output_cap)?;
        let n = param_count(&widths);
        Ok(Self {
            widths,
            params: vec![0.0; n],
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            output_cap,
            clip_bound: None,
        })
    }

    /// Kaiming-uniform weights (LeakyReLU gain) and zero biases.
    pub fn new(widths: Vec<usize>, output_cap: f64, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(widths, output_cap)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = (2.0 / (1.0 + net.leaky_slope * net.leaky_slope)).sqrt();
        let mut off = 0;
        for l in 0..net.layers() {
            let (fan_in, fan_out) = (net.widths[l], net.widths[l + 1]);
            let bound = gain * (3.0 / fan_in as f64).sqrt();
            for w in &mut net.params[off..off + fan_in * fan_out] {
                *w = rng.random_range(-bound..bound);
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_params(
        widths: Vec<usize>,
        params: Vec<f64>,
        leaky_slope: f64,
        output_cap: f64,
        clip_bound: Option<f64>,
    ) -> Result<Self> {
        validate_shape(&widths, output_cap)?;
        if params.len() != param_count(&widths) {
            return Err(config(format!(
                "expected {} parameters for widths {:?}, got {}",
                param_count(&widths),
                widths,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(invalid("non-finite network parameter"));
        }
        let mut net = Self {
            widths,
            params,
            leaky_slope,
            output_cap,
            clip_bound: None,
        };
        net.set_clip_bound(clip_bound)?;
        Ok(net)
    }

    pub fn with_leaky_slope(mut self, slope: f64) -> Self {
        self.leaky_slope = slope;
        self
    }

    /// Sets the clip bound and clamps the current parameters into it.
    pub fn set_clip_bound(&mut self, bound: Option<f64>) -> Result<()> {
        if let Some(c) = bound {
            if !(c > 0.0 && c.is_finite()) {
                return Err(config(format!("clip bound must be positive, got {c}")));
            }
            self.params.iter_mut().for_each(|p| *p = p.clamp(-c, c));
        }
        self.clip_bound = bound;
        Ok(())
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn output_cap(&self) -> f64 {
        self.output_cap
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    pub fn clip_bound(&self) -> Option<f64> {
        self.clip_bound
    }

    /// Offset of the output layer's bias in the flat parameter vector.
    fn output_bias_offset(&self) -> usize {
        self.params.len() - 1
    }

    /// Evaluates the network at one point.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(config(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite network input"));
        }
        Ok(self.eval_unchecked(x))
    }

    /// Single-point evaluation without validation.
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.output_from_logit(self.logit(x))
    }

    /// `cap * sigmoid(z)`, kept strictly inside `(0, cap)` even where the
    /// logistic rounds to 0 or 1.
    fn output_from_logit(&self, z: f64) -> f64 {
        let cap = self.output_cap;
        (cap * sigmoid(z)).clamp(f64::MIN_POSITIVE, cap.next_down())
    }

    /// Pre-activation of the output unit. Mirrors the batched kernel's
    /// accumulation order exactly.
    fn logit(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let mut off = 0;
        let last = self.layers() - 1;
        for l in 0..self.layers() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            next.clear();
            for j in 0..fan_out {
                let mut acc = b[j];
                for k in 0..fan_in {
                    acc += w[j * fan_in + k] * cur[k];
                }
                if l != last && acc < 0.0 {
                    acc *= self.leaky_slope;
                }
                next.push(acc);
            }
            std::mem::swap(&mut cur, &mut next);
            off += fan_in * fan_out + fan_out;
        }
        cur[0]
    }

    /// Evaluates the network on a batch of rows.
    pub fn outputs<X: AsRef<[f64]>>(&self, xs: &[X]) -> Vec<f64> {
        let mut out = Vec::with_capacity(xs.len());
        with_scratch(|scratch| {
            for chunk in xs.chunks(BLOCK) {
                self.forward_block(chunk, scratch);
                let logits = scratch.pre.last().expect("network has layers");
                out.extend(logits.iter().map(|&z| self.output_from_logit(z)));
            }
        });
        out
    }

    /// Feeds one block of rows through the network, filling `scratch`.
    fn forward_block<X: AsRef<[f64]>>(&self, chunk: &[X], scratch: &mut Scratch) {
        let layers = self.layers();
        let len = chunk.len();
        scratch.inputs.resize_with(layers, Vec::new);
        scratch.pre.resize_with(layers, Vec::new);
        let d = self.input_dim();
        let input = &mut scratch.inputs[0];
        input.clear();
        input.resize(d * len, 0.0);
        for (b, x) in chunk.iter().enumerate() {
            let x = x.as_ref();
            debug_assert_eq!(x.len(), d);
            for k in 0..d {
                input[k * len + b] = x[k];
            }
        }
        let slope = self.leaky_slope;
        let mut off = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[off..off + fan_in * fan_out];
            let bias = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            off += fan_in * fan_out + fan_out;
            let z = &mut scratch.pre[l];
            z.clear();
            panel(z, bias, w, &scratch.inputs[l], len);
            if l + 1 < layers {
                leaky_into(&mut scratch.inputs[l + 1], z, slope);
            }
        }
    }

    /// Gradient of `sum_b upstream[b] * t(x_b)` with respect to every
    /// parameter, in the flat parameter layout.
    pub fn backward<X: AsRef<[f64]>>(&self, xs: &[X], upstream: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        self.backward_into(xs, upstream, &mut grad);
        grad
    }

    /// Like [`Mlp::backward`] but accumulates into `grad`. Activations are
    /// recomputed block by block rather than stored for the whole batch.
    pub fn backward_into<X: AsRef<[f64]>>(&self, xs: &[X], upstream: &[f64], grad: &mut [f64]) {
        assert_eq!(upstream.len(), xs.len(), "upstream gradient length");
        assert_eq!(grad.len(), self.params.len(), "gradient buffer length");
        let offsets = layer_offsets(&self.widths);
        // W_l^T, row-major `in x out`, for propagating deltas to layer inputs
        let transposed: Vec<Vec<f64>> = (0..self.layers())
            .map(|l| {
                let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
                let w = &self.params[offsets[l]..offsets[l] + fan_in * fan_out];
                let mut wt = vec![0.0; fan_in * fan_out];
                for j in 0..fan_out {
                    for k in 0..fan_in {
                        wt[k * fan_out + j] = w[j * fan_in + k];
                    }
                }
                wt
            })
            .collect();
        let zeros = vec![0.0; self.widths.iter().copied().max().unwrap_or(0)];
        with_scratch(|scratch| {
            for (chunk, up) in xs.chunks(BLOCK).zip(upstream.chunks(BLOCK)) {
                self.forward_block(chunk, scratch);
                self.backward_block(chunk.len(), up, &offsets, &transposed, &zeros, scratch, grad);
            }
        });
    }

    #[allow(clippy::too_many_arguments)]
    fn backward_block(
        &self,
        len: usize,
        upstream: &[f64],
        offsets: &[usize],
        transposed: &[Vec<f64>],
        zeros: &[f64],
        scratch: &mut Scratch,
        grad: &mut [f64],
    ) {
        let cap = self.output_cap;
        let Scratch {
            inputs,
            pre,
            delta,
            da,
        } = scratch;
        // d t / d z = cap * s (1 - s) = t (1 - t / cap)
        delta.clear();
        delta.extend(pre.last().expect("network has layers").iter().zip(upstream).map(|(&z, &g)| {
            let t = self.output_from_logit(z);
            g * t * (1.0 - t / cap)
        }));
        let slope = self.leaky_slope;
        for l in (0..self.layers()).rev() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let off = offsets[l];
            let a = &inputs[l];
            let (gw, gb) = grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            for j in 0..fan_out {
                let dz = &delta[j * len..(j + 1) * len];
                gb[j] += sum(dz);
                outer_dots(&mut gw[j * fan_in..(j + 1) * fan_in], dz, a, len);
            }
            if l == 0 {
                break;
            }
            da.clear();
            panel(da, &zeros[..fan_in], &transposed[l], delta, len);
            leaky_grad(da, &pre[l - 1], slope);
            std::mem::swap(delta, da);
        }
    }

    /// Upper bound on the Lipschitz constant of `x -> t(x)` (Euclidean norms):
    /// `cap / 4 * prod_l ||W_l||_F`. LeakyReLU with slope <= 1 is 1-Lipschitz and
    /// the scaled logistic has slope at most `cap / 4`.
    pub fn lipschitz_bound(&self) -> f64 {
        let offsets = layer_offsets(&self.widths);
        let mut k = self.output_cap / 4.0;
        for l in 0..self.layers() {
            let n = self.widths[l] * self.widths[l + 1];
            let fro: f64 = self.params[offsets[l]..offsets[l] + n]
                .iter()
                .map(|w| w * w)
                .sum::<f64>()
                .sqrt();
            k *= fro;
        }
        k
    }
}

fn validate_shape(widths: &[usize], output_cap: f64) -> Result<()> {
    if widths.len() < 2 {
        return Err(config("network needs at least an input and an output width"));
    }
    if widths.contains(&0) {
        return Err(config(format!("zero layer width in {widths:?}")));
    }
    if *widths.last().unwrap() != 1 {
        return Err(config("output layer must have width 1"));
    }
    if !(output_cap > 0.0 && output_cap <= 0.5) {
        return Err(config(format!("output cap must lie in (0, 0.5], got {output_cap}")));
    }
    Ok(())
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn layer_offsets(widths: &[usize]) -> Vec<usize> {
    let mut offs = Vec::with_capacity(widths.len() - 1);
    let mut off = 0;
    for w in widths.windows(2) {
        offs.push(off);
        off += w[0] * w[1] + w[1];
    }
    offs
}

/// Adagrad: `acc += g^2; theta -= lr * g / (sqrt(acc) + eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adagrad {
    pub learning_rate: f64,
    pub epsilon: f64,
    accum: Vec<f64>,
}

impl Adagrad {
    pub const DEFAULT_LR: f64 = 0.01;
    pub const DEFAULT_EPS: f64 = 1e-8;

    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            epsilon: Self::DEFAULT_EPS,
            accum: vec![0.0; n_params],
        }
    }

    pub fn accumulators(&self) -> &[f64] {
        &self.accum
    }

    /// Applies one update, then clamps to `[-c, c]` when `clip` is set.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], clip: Option<f64>) {
        assert_eq!(params.len(), self.accum.len(), "parameter count");
        assert_eq!(grad.len(), self.accum.len(), "gradient length");
        let (lr, eps) = (self.learning_rate, self.epsilon);
        for ((p, a), &g) in params.iter_mut().zip(&mut self.accum).zip(grad) {
            *a += g * g;
            *p -= lr * g / (a.sqrt() + eps);
            if let Some(c) = clip {
                *p = p.clamp(-c, c);
            }
        }
    }

    /// Convenience wrapper that honours the network's clip bound.
    pub fn step_network(&mut self, net: &mut Mlp, grad: &[f64]) {
        let clip = net.clip_bound;
        self.step(&mut net.params, grad, clip);
    }
}

/// Options for [`fit_regression`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub iters: usize,
    /// Mini-batch size; the full set is used when it has at most this many rows.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            iters: 6000,
            batch_size: 1000,
            learning_rate: Adagrad::DEFAULT_LR,
            seed: 0,
        }
    }
}

/// Fits the network to `targets` by mean-squared error with Adagrad.
///
/// Before iterating, the output bias is shifted so that the mean output logit
/// matches the logit of the mean target; the rest of the fit then only has to
/// shape the function. Returns the final mean-squared error over all targets.
pub fn fit_regression<X: AsRef<[f64]> + Sync>(
    net: &mut Mlp,
    xs: &[X],
    targets: &[f64],
    opts: &FitOptions,
) -> Result<f64> {
    if xs.len() != targets.len() {
        return Err(config("inputs and targets differ in length"));
    }
    if xs.is_empty() {
        return Err(config("cannot fit an empty target set"));
    }
    let cap = net.output_cap;
    if let Some(t) = targets.iter().find(|&&t| !(t > 0.0 && t < cap)) {
        return Err(invalid(format!("regression target {t} outside (0, {cap})")));
    }
    if let Some(x) = xs.iter().find(|x| x.as_ref().len() != net.input_dim()) {
        return Err(config(format!(
            "input has dimension {}, network expects {}",
            x.as_ref().len(),
            net.input_dim()
        )));
    }

    let n = xs.len();
    let mean_target = targets.iter().sum::<f64>() / n as f64;
    let ratio = mean_target / cap;
    let wanted = (ratio / (1.0 - ratio)).ln();
    let mean_logit = xs.iter().map(|x| net.logit(x.as_ref())).sum::<f64>() / n as f64;
    let ob = net.output_bias_offset();
    net.params[ob] += wanted - mean_logit;
    if let Some(c) = net.clip_bound {
        net.params[ob] = net.params[ob].clamp(-c, c);
    }

    let mut opt = Adagrad::new(net.params.len(), opts.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let full = n <= opts.batch_size;
    let mut bx: Vec<&[f64]> = Vec::with_capacity(opts.batch_size.min(n));
    let mut bt: Vec<f64> = Vec::with_capacity(opts.batch_size.min(n));
    for _ in 0..opts.iters {
        bx.clear();
        bt.clear();
        if full {
            bx.extend(xs.iter().map(|x| x.as_ref()));
            bt.extend_from_slice(targets);
        } else {
            for _ in 0..opts.batch_size {
                let i = rng.random_range(0..n);
                bx.push(xs[i].as_ref());
                bt.push(targets[i]);
            }
        }
        let out = net.outputs(&bx);
        let scale = 2.0 / bx.len() as f64;
        let upstream: Vec<f64> = out
            .iter()
            .zip(&bt)
            .map(|(&t, &y)| scale * (t - y))
            .collect();
        let grad = net.backward(&bx, &upstream);
        opt.step_network(net, &grad);
    }
    let mse = net
        .outputs(xs)
        .iter()
        .zip(targets)
        .map(|(t, y)| (t - y) * (t - y))
        .sum::<f64>()
        / n as f64;
    Ok(mse)
}
