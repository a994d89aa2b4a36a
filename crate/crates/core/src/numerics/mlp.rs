//! Fully connected networks with exact first and second derivatives.
//!
//! Every derivative here is hand-derived for the fixed layer family:
//! backprop for gradients, Pearlmutter's R-operator for Hessian-vector
//! products, and an R-forward / backprop pair for Gauss-Newton products.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{Batch, Targets};
use super::dense::DenseMatrix;
use super::vector::{dot, ParamVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    // Subgradient convention for relu: derivative 0 at exactly 0.
    fn d1(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }

    fn d2(self, z: f64) -> f64 {
        match self {
            Activation::Relu => 0.0,
            Activation::Tanh => {
                let t = z.tanh();
                -2.0 * t * (1.0 - t * t)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Softmax cross-entropy on the logits.
    CrossEntropy,
    /// `½‖f(x) − y‖²`; class labels are one-hot encoded.
    Mse,
}

#[derive(Debug, Clone, Copy)]
struct LayerShape {
    n_in: usize,
    n_out: usize,
    w: usize,
    b: usize,
}

/// A multilayer perceptron `D → h₁ → … → K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    activation: Activation,
    loss: LossKind,
}

/// Mean loss and accuracy of a model on a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

struct Trace {
    /// `acts[l]` is the input of layer `l`; `acts[0]` is the sample.
    acts: Vec<Vec<f64>>,
    /// `pre[l]` is the pre-activation output of layer `l`.
    pre: Vec<Vec<f64>>,
    /// Inverted-dropout multipliers applied after hidden layer `l`.
    masks: Option<Vec<Vec<f64>>>,
}

struct LossDerivs {
    loss: f64,
    grad: Vec<f64>,
    /// softmax probabilities for cross-entropy
    probs: Option<Vec<f64>>,
}

impl LossDerivs {
    /// `∇²_f ℓ · u`
    fn hess_apply(&self, u: &[f64]) -> Vec<f64> {
        match &self.probs {
            Some(p) => {
                let pu: f64 = p.iter().zip(u).map(|(a, b)| a * b).sum();
                p.iter().zip(u).map(|(pk, uk)| pk * uk - pk * pu).collect()
            }
            None => u.to_vec(),
        }
    }
}

impl MlpModel {
    /// Builds a model from `[D, h₁, …, K]`. At least one hidden layer is
    /// required, and cross-entropy needs `K ≥ 2`.
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, loss: LossKind) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(Error::InvalidModel(format!(
                "need input, at least one hidden layer and output; got sizes {layer_sizes:?}"
            )));
        }
        Self::checked(layer_sizes, activation, loss)
    }

    /// A single affine layer `f(x) = Wx + b`. Outside the MLP family proper;
    /// used as a reference model where the functional Hessian vanishes.
    pub fn linear(input_dim: usize, output_dim: usize, loss: LossKind) -> Result<Self> {
        Self::checked(vec![input_dim, output_dim], Activation::Relu, loss)
    }

    fn checked(layer_sizes: Vec<usize>, activation: Activation, loss: LossKind) -> Result<Self> {
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidModel(format!(
                "layer sizes must be positive: {layer_sizes:?}"
            )));
        }
        let k = *layer_sizes.last().unwrap();
        if loss == LossKind::CrossEntropy && k < 2 {
            return Err(Error::InvalidModel(
                "cross-entropy needs at least two outputs".into(),
            ));
        }
        Ok(MlpModel {
            layer_sizes,
            activation,
            loss,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Width of the representation fed to the output layer.
    pub fn feature_dim(&self) -> usize {
        self.layer_sizes[self.layer_sizes.len() - 2]
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn layers(&self) -> Vec<LayerShape> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let shape = LayerShape {
                    n_in: w[0],
                    n_out: w[1],
                    w: offset,
                    b: offset + w[0] * w[1],
                };
                offset += w[0] * w[1] + w[1];
                shape
            })
            .collect()
    }

    /// Offsets `(weights, biases)` of layer `l` inside the flat vector.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let s = self.layers()[l];
        (s.w, s.b)
    }

    /// Uniform `±1/√fan_in` initialization for weights and biases.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(self.param_count());
        for shape in self.layers() {
            let bound = 1.0 / (shape.n_in as f64).sqrt();
            for _ in 0..(shape.n_in * shape.n_out + shape.n_out) {
                out.push(rng.random_range(-bound..bound));
            }
        }
        ParamVector::from_vec(out)
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "input vector",
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if batch.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "batch input dim",
                expected: self.input_dim(),
                actual: batch.dim(),
            });
        }
        match batch.targets() {
            Targets::Classes(labels) => {
                if let Some(&bad) = labels.iter().find(|&&y| y >= self.output_dim()) {
                    return Err(Error::InvalidArgument(format!(
                        "label {bad} out of range for {} outputs",
                        self.output_dim()
                    )));
                }
            }
            Targets::Values { dim, .. } => {
                if self.loss == LossKind::CrossEntropy {
                    return Err(Error::InvalidArgument(
                        "cross-entropy needs class labels".into(),
                    ));
                }
                if *dim != self.output_dim() {
                    return Err(Error::DimensionMismatch {
                        what: "target dim",
                        expected: self.output_dim(),
                        actual: *dim,
                    });
                }
            }
        }
        Ok(())
    }

    fn trace(&self, params: &[f64], input: &[f64], masks: Option<Vec<Vec<f64>>>) -> Trace {
        let layers = self.layers();
        let mut acts = Vec::with_capacity(layers.len());
        let mut pre = Vec::with_capacity(layers.len());
        acts.push(input.to_vec());
        for (l, shape) in layers.iter().enumerate() {
            let a = &acts[l];
            let w = &params[shape.w..shape.b];
            let b = &params[shape.b..shape.b + shape.n_out];
            let z: Vec<f64> = (0..shape.n_out)
                .map(|i| {
                    let row = &w[i * shape.n_in..(i + 1) * shape.n_in];
                    dot(row, a) + b[i]
                })
                .collect();
            if l + 1 < layers.len() {
                let mut next: Vec<f64> = z.iter().map(|&v| self.activation.apply(v)).collect();
                if let Some(m) = &masks {
                    next.iter_mut().zip(&m[l]).for_each(|(v, s)| *v *= s);
                }
                acts.push(next);
            }
            pre.push(z);
        }
        Trace { acts, pre, masks }
    }

    fn loss_derivs(&self, out: &[f64], batch: &Batch, i: usize) -> LossDerivs {
        match (self.loss, batch.targets()) {
            (LossKind::CrossEntropy, Targets::Classes(labels)) => {
                let y = labels[i];
                let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = out.iter().map(|v| (v - max).exp()).sum();
                let probs = softmax(out);
                let loss = max + sum.ln() - out[y];
                let mut grad = probs.clone();
                grad[y] -= 1.0;
                LossDerivs {
                    loss,
                    grad,
                    probs: Some(probs),
                }
            }
            (LossKind::Mse, targets) => {
                let grad: Vec<f64> = match targets {
                    Targets::Classes(labels) => out
                        .iter()
                        .enumerate()
                        .map(|(k, v)| v - if k == labels[i] { 1.0 } else { 0.0 })
                        .collect(),
                    Targets::Values { dim, data } => out
                        .iter()
                        .zip(&data[i * dim..(i + 1) * dim])
                        .map(|(v, t)| v - t)
                        .collect(),
                };
                let loss = 0.5 * grad.iter().map(|r| r * r).sum::<f64>();
                LossDerivs {
                    loss,
                    grad,
                    probs: None,
                }
            }
            (LossKind::CrossEntropy, Targets::Values { .. }) => unreachable!("rejected by check_batch"),
        }
    }

    /// Backprop of an output-space vector `delta_out` through `trace`,
    /// accumulating `scale · Jᵀ delta_out` into `grad`.
    fn backward(&self, params: &[f64], trace: &Trace, delta_out: Vec<f64>, scale: f64, grad: &mut [f64]) {
        let layers = self.layers();
        let mut delta = delta_out;
        for l in (0..layers.len()).rev() {
            let shape = layers[l];
            let a = &trace.acts[l];
            for i in 0..shape.n_out {
                let d = scale * delta[i];
                if d != 0.0 {
                    let row = &mut grad[shape.w + i * shape.n_in..shape.w + (i + 1) * shape.n_in];
                    row.iter_mut().zip(a).for_each(|(g, x)| *g += d * x);
                }
                grad[shape.b + i] += d;
            }
            if l > 0 {
                let s = self.transpose_apply(params, shape, &delta);
                let z = &trace.pre[l - 1];
                delta = s
                    .iter()
                    .zip(z)
                    .enumerate()
                    .map(|(j, (sj, &zj))| {
                        let m = trace.masks.as_ref().map_or(1.0, |m| m[l - 1][j]);
                        sj * self.activation.d1(zj) * m
                    })
                    .collect();
            }
        }
    }

    /// `Wᵀ v` for layer `shape`.
    fn transpose_apply(&self, params: &[f64], shape: LayerShape, v: &[f64]) -> Vec<f64> {
        let w = &params[shape.w..shape.b];
        let mut s = vec![0.0; shape.n_in];
        for i in 0..shape.n_out {
            let vi = v[i];
            if vi != 0.0 {
                let row = &w[i * shape.n_in..(i + 1) * shape.n_in];
                s.iter_mut().zip(row).for_each(|(acc, wij)| *acc += wij * vi);
            }
        }
        s
    }

    /// Pre-softmax outputs for one input.
    pub fn forward(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        self.check_input(input)?;
        let trace = self.trace(params, input, None);
        Ok(trace.pre.into_iter().last().unwrap())
    }

    /// Activations of the last hidden layer (the input itself for a linear model).
    pub fn features(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        self.check_input(input)?;
        let trace = self.trace(params, input, None);
        Ok(trace.acts.into_iter().last().unwrap())
    }

    /// Index of the largest output, restricted to `allowed` classes when given.
    /// Ties go to the lowest index.
    pub fn predict(&self, params: &[f64], input: &[f64], allowed: Option<&[usize]>) -> Result<usize> {
        let out = self.forward(params, input)?;
        Ok(argmax_restricted(&out, allowed))
    }

    /// Batch-mean loss.
    pub fn loss(&self, params: &[f64], batch: &Batch) -> Result<f64> {
        self.check_params(params)?;
        self.check_batch(batch)?;
        let mut total = 0.0;
        for i in 0..batch.len() {
            let trace = self.trace(params, batch.input(i), None);
            let l = self.loss_derivs(trace.pre.last().unwrap(), batch, i).loss;
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { sample: i });
            }
            total += l;
        }
        Ok(total / batch.len() as f64)
    }

    /// Batch-mean loss and its gradient.
    pub fn loss_and_grad(&self, params: &[f64], batch: &Batch) -> Result<(f64, ParamVector)> {
        self.loss_and_grad_impl(params, batch, None::<(&mut ChaCha8Rng, f64)>)
    }

    /// Like [`loss_and_grad`](Self::loss_and_grad), with inverted dropout on
    /// every hidden layer. Masks are drawn from `rng`, one per sample.
    pub fn loss_and_grad_dropout<R: Rng>(
        &self,
        params: &[f64],
        batch: &Batch,
        rate: f64,
        rng: &mut R,
    ) -> Result<(f64, ParamVector)> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} not in [0, 1)")));
        }
        if rate == 0.0 {
            return self.loss_and_grad(params, batch);
        }
        self.loss_and_grad_impl(params, batch, Some((rng, rate)))
    }

    fn loss_and_grad_impl<R: Rng>(
        &self,
        params: &[f64],
        batch: &Batch,
        mut dropout: Option<(&mut R, f64)>,
    ) -> Result<(f64, ParamVector)> {
        self.check_params(params)?;
        self.check_batch(batch)?;
        let n = batch.len() as f64;
        let hidden = &self.layer_sizes[1..self.layer_sizes.len() - 1];
        let mut grad = vec![0.0; self.param_count()];
        let mut total = 0.0;
        for i in 0..batch.len() {
            let masks = dropout.as_mut().map(|(rng, rate)| {
                let keep = 1.0 / (1.0 - *rate);
                hidden
                    .iter()
                    .map(|&h| {
                        (0..h)
                            .map(|_| if rng.random::<f64>() < *rate { 0.0 } else { keep })
                            .collect()
                    })
                    .collect()
            });
            let trace = self.trace(params, batch.input(i), masks);
            let d = self.loss_derivs(trace.pre.last().unwrap(), batch, i);
            if !d.loss.is_finite() {
                return Err(Error::NonFiniteLoss { sample: i });
            }
            total += d.loss;
            self.backward(params, &trace, d.grad, 1.0 / n, &mut grad);
        }
        Ok((total / n, ParamVector::from_vec(grad)))
    }

    /// Forward R-pass: returns `(R{z_l})_l` for direction `dir`, i.e. the
    /// directional derivatives of every pre-activation.
    fn r_forward(&self, params: &[f64], dir: &[f64], trace: &Trace) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let layers = self.layers();
        let mut r_acts = vec![vec![0.0; self.input_dim()]];
        let mut r_pre = Vec::with_capacity(layers.len());
        for (l, shape) in layers.iter().enumerate() {
            let a = &trace.acts[l];
            let ra = &r_acts[l];
            let w = &params[shape.w..shape.b];
            let vw = &dir[shape.w..shape.b];
            let vb = &dir[shape.b..shape.b + shape.n_out];
            let rz: Vec<f64> = (0..shape.n_out)
                .map(|i| {
                    let r = i * shape.n_in..(i + 1) * shape.n_in;
                    let s1 = dot(&vw[r.clone()], a);
                    let s2 = dot(&w[r], ra);
                    s1 + s2 + vb[i]
                })
                .collect();
            if l + 1 < layers.len() {
                let z = &trace.pre[l];
                r_acts.push(
                    rz.iter()
                        .zip(z)
                        .map(|(r, &zv)| r * self.activation.d1(zv))
                        .collect(),
                );
            }
            r_pre.push(rz);
        }
        (r_acts, r_pre)
    }

    /// Exact Hessian-vector product `H · dir` of the batch-mean loss.
    pub fn hvp(&self, params: &[f64], batch: &Batch, dir: &[f64]) -> Result<ParamVector> {
        self.check_params(params)?;
        self.check_batch(batch)?;
        self.check_dir(dir)?;
        let layers = self.layers();
        let n = batch.len() as f64;
        let mut out = vec![0.0; self.param_count()];
        for i in 0..batch.len() {
            let trace = self.trace(params, batch.input(i), None);
            let d = self.loss_derivs(trace.pre.last().unwrap(), batch, i);
            if !d.loss.is_finite() {
                return Err(Error::NonFiniteLoss { sample: i });
            }
            let (r_acts, r_pre) = self.r_forward(params, dir, &trace);
            let mut delta = d.grad.clone();
            let mut r_delta = d.hess_apply(r_pre.last().unwrap());
            for l in (0..layers.len()).rev() {
                let shape = layers[l];
                let a = &trace.acts[l];
                let ra = &r_acts[l];
                for o in 0..shape.n_out {
                    let (dl, rdl) = (delta[o] / n, r_delta[o] / n);
                    let row = &mut out[shape.w + o * shape.n_in..shape.w + (o + 1) * shape.n_in];
                    for ((g, x), rx) in row.iter_mut().zip(a).zip(ra) {
                        *g += rdl * x + dl * rx;
                    }
                    out[shape.b + o] += rdl;
                }
                if l > 0 {
                    let s = self.transpose_apply(params, shape, &delta);
                    let vs = self.transpose_apply(dir, shape, &delta);
                    let ws = self.transpose_apply(params, shape, &r_delta);
                    let z = &trace.pre[l - 1];
                    let rz = &r_pre[l - 1];
                    let mut next = Vec::with_capacity(shape.n_in);
                    let mut r_next = Vec::with_capacity(shape.n_in);
                    for j in 0..shape.n_in {
                        let d1 = self.activation.d1(z[j]);
                        let d2 = self.activation.d2(z[j]);
                        next.push(d1 * s[j]);
                        r_next.push(d2 * rz[j] * s[j] + d1 * (vs[j] + ws[j]));
                    }
                    delta = next;
                    r_delta = r_next;
                }
            }
        }
        Ok(ParamVector::from_vec(out))
    }

    /// Outer-product (Gauss-Newton) part of the Hessian applied to `dir`:
    /// `(1/n) Σ_i J_iᵀ [∇²_f ℓ_i] J_i · dir`.
    pub fn gauss_newton_vp(&self, params: &[f64], batch: &Batch, dir: &[f64]) -> Result<ParamVector> {
        self.check_params(params)?;
        self.check_batch(batch)?;
        self.check_dir(dir)?;
        let n = batch.len() as f64;
        let mut out = vec![0.0; self.param_count()];
        for i in 0..batch.len() {
            let trace = self.trace(params, batch.input(i), None);
            let d = self.loss_derivs(trace.pre.last().unwrap(), batch, i);
            if !d.loss.is_finite() {
                return Err(Error::NonFiniteLoss { sample: i });
            }
            let (_, r_pre) = self.r_forward(params, dir, &trace);
            let u = d.hess_apply(r_pre.last().unwrap());
            self.backward(params, &trace, u, 1.0 / n, &mut out);
        }
        Ok(ParamVector::from_vec(out))
    }

    /// `∇_θ f^k(x)` for every output `k`, returned as `K` columns of length `P`.
    pub fn output_jacobian(&self, params: &[f64], input: &[f64]) -> Result<Vec<ParamVector>> {
        self.check_params(params)?;
        self.check_input(input)?;
        let trace = self.trace(params, input, None);
        Ok((0..self.output_dim())
            .map(|k| self.output_gradient_from_trace(params, &trace, k))
            .collect())
    }

    /// A single Jacobian column `∇_θ f^k(x)`.
    pub fn output_gradient(&self, params: &[f64], input: &[f64], k: usize) -> Result<ParamVector> {
        self.check_params(params)?;
        self.check_input(input)?;
        if k >= self.output_dim() {
            return Err(Error::InvalidArgument(format!("output index {k} out of range")));
        }
        let trace = self.trace(params, input, None);
        Ok(self.output_gradient_from_trace(params, &trace, k))
    }

    fn output_gradient_from_trace(&self, params: &[f64], trace: &Trace, k: usize) -> ParamVector {
        let mut e = vec![0.0; self.output_dim()];
        e[k] = 1.0;
        let mut col = vec![0.0; self.param_count()];
        self.backward(params, trace, e, 1.0, &mut col);
        ParamVector::from_vec(col)
    }

    fn check_dir(&self, dir: &[f64]) -> Result<()> {
        if dir.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                what: "direction vector",
                expected: self.param_count(),
                actual: dir.len(),
            });
        }
        Ok(())
    }

    /// `∇²_f ℓ` at the given outputs: `diag(p) − ppᵀ` for cross-entropy
    /// (independent of the label), the identity for squared error.
    pub fn output_loss_hessian(&self, logits: &[f64]) -> Result<DenseMatrix> {
        if logits.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                what: "logits",
                expected: self.output_dim(),
                actual: logits.len(),
            });
        }
        let k = logits.len();
        Ok(match self.loss {
            LossKind::CrossEntropy => {
                let p = softmax(logits);
                let mut m = DenseMatrix::zeros(k);
                for i in 0..k {
                    for j in 0..k {
                        let d = if i == j { p[i] } else { 0.0 };
                        m.set(i, j, d - p[i] * p[j]);
                    }
                }
                m
            }
            LossKind::Mse => DenseMatrix::identity(k),
        })
    }

    /// Mean loss and accuracy. For regression targets, accuracy compares the
    /// argmax of output and target.
    pub fn evaluate(&self, params: &[f64], batch: &Batch, allowed: Option<&[usize]>) -> Result<Evaluation> {
        self.check_params(params)?;
        self.check_batch(batch)?;
        let mut total = 0.0;
        let mut correct = 0usize;
        for i in 0..batch.len() {
            let trace = self.trace(params, batch.input(i), None);
            let out = trace.pre.last().unwrap();
            let l = self.loss_derivs(out, batch, i).loss;
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { sample: i });
            }
            total += l;
            let truth = match batch.targets() {
                Targets::Classes(c) => c[i],
                Targets::Values { dim, data } => argmax_restricted(&data[i * dim..(i + 1) * dim], None),
            };
            if argmax_restricted(out, allowed) == truth {
                correct += 1;
            }
        }
        let n = batch.len() as f64;
        Ok(Evaluation {
            loss: total / n,
            accuracy: correct as f64 / n,
        })
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Lowest index of the maximum of `values`, optionally over a subset.
pub fn argmax_restricted(values: &[f64], allowed: Option<&[usize]>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    let mut consider = |k: usize| {
        let v = values[k];
        if best.is_none_or(|(bk, bv)| v > bv || (v == bv && k < bk)) {
            best = Some((k, v));
        }
    };
    match allowed {
        Some(set) => set.iter().for_each(|&k| consider(k)),
        None => (0..values.len()).for_each(&mut consider),
    }
    best.map_or(0, |(k, _)| k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> MlpModel {
        MlpModel::new(vec![3, 4, 2], Activation::Tanh, LossKind::CrossEntropy).unwrap()
    }

    #[test]
    fn param_count_and_offsets() {
        let m = MlpModel::new(vec![3, 4, 2], Activation::Relu, LossKind::Mse).unwrap();
        assert_eq!(m.param_count(), 3 * 4 + 4 + 4 * 2 + 2);
        assert_eq!(m.layer_offsets(0), (0, 12));
        assert_eq!(m.layer_offsets(1), (16, 24));
    }

    #[test]
    fn requires_hidden_layer_and_two_classes() {
        assert!(MlpModel::new(vec![3, 2], Activation::Relu, LossKind::Mse).is_err());
        assert!(MlpModel::new(vec![3, 4, 1], Activation::Relu, LossKind::CrossEntropy).is_err());
        assert!(MlpModel::new(vec![3, 0, 2], Activation::Relu, LossKind::Mse).is_err());
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let m = tiny();
        let out = m.forward(&vec![0.0; m.param_count()], &[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn linear_layer_with_unit_input_reads_first_column() {
        let m = MlpModel::linear(2, 2, LossKind::Mse).unwrap();
        // W = [[1, 2], [3, 4]], b = [10, 20]
        let params = [1.0, 2.0, 3.0, 4.0, 10.0, 20.0];
        let out = m.forward(&params, &[1.0, 0.0]).unwrap();
        assert_eq!(out, vec![11.0, 23.0]);
    }

    #[test]
    fn dimension_mismatch_reports_lengths() {
        let m = tiny();
        match m.forward(&[0.0; 3], &[0.0; 3]) {
            Err(Error::DimensionMismatch { expected, actual, .. }) => {
                assert_eq!(expected, m.param_count());
                assert_eq!(actual, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        let p = vec![0.0; m.param_count()];
        assert!(matches!(
            m.forward(&p, &[0.0; 2]),
            Err(Error::DimensionMismatch { expected: 3, actual: 2, .. })
        ));
    }

    #[test]
    fn cross_entropy_at_zero_logits_is_ln2() {
        let m = tiny();
        let p = vec![0.0; m.param_count()];
        let batch = Batch::classification(3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0], vec![0, 1]).unwrap();
        let (loss, _) = m.loss_and_grad(&p, &batch).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn mse_perfect_fit_has_zero_loss_and_grad() {
        let m = MlpModel::new(vec![2, 3, 2], Activation::Tanh, LossKind::Mse).unwrap();
        let p = m.init_params(3);
        let x = [0.5, -0.25];
        let y = m.forward(&p, &x).unwrap();
        let batch = Batch::regression(2, x.to_vec(), 2, y).unwrap();
        let (loss, grad) = m.loss_and_grad(&p, &batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn overflow_reports_sample_index() {
        let m = MlpModel::linear(1, 2, LossKind::Mse).unwrap();
        let p = [1e300, 1e300, 0.0, 0.0];
        let batch = Batch::regression(1, vec![0.0, 1e10], 2, vec![0.0; 4]).unwrap();
        match m.loss_and_grad(&p, &batch) {
            Err(Error::NonFiniteLoss { sample }) => assert_eq!(sample, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hvp_of_zero_direction_is_zero() {
        let m = tiny();
        let p = m.init_params(1);
        let batch = Batch::classification(3, vec![1.0, 2.0, 3.0], vec![1]).unwrap();
        let h = m.hvp(&p, &batch, &vec![0.0; m.param_count()]).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
        let g = m.gauss_newton_vp(&p, &batch, &vec![0.0; m.param_count()]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn argmax_ties_go_to_lowest_index() {
        assert_eq!(argmax_restricted(&[1.0, 3.0, 3.0], None), 1);
        assert_eq!(argmax_restricted(&[5.0, 3.0, 3.0], Some(&[2, 1])), 1);
    }

    #[test]
    fn dropout_rate_zero_matches_plain_gradient() {
        let m = tiny();
        let p = m.init_params(4);
        let batch = Batch::classification(3, vec![1.0, 2.0, 3.0], vec![1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = m.loss_and_grad_dropout(&p, &batch, 0.0, &mut rng).unwrap();
        let b = m.loss_and_grad(&p, &batch).unwrap();
        assert_eq!(a.1, b.1);
        assert!(m.loss_and_grad_dropout(&p, &batch, 1.0, &mut rng).is_err());
    }
}
