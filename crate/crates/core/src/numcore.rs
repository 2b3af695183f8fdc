//! Minimal dense numerics: row-major f64 tensors, affine layers with exact
//! reverse-mode gradients, a fixed-topology MLP, AdamW, and a central
//! finite-difference gradient checker.
//!
//! Batched quantities are always `[batch, features]` matrices.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Builds a `[rows.len(), cols]` matrix. All rows must share a length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!("ragged rows: {} vs {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn randn(shape: &[usize], std: f64, rng: &mut impl Rng) -> Self {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * std
            })
            .collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row count of a matrix.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Column count of a matrix (1 for vectors).
    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    fn expect_matrix(&self, what: &str) -> Result<()> {
        if self.shape.len() != 2 {
            return Err(Error::Shape(format!(
                "{what}: expected a matrix, got shape {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    fn expect_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Columns `[start, start + width)` of a matrix.
    pub fn columns(&self, start: usize, width: usize) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = Tensor::zeros(&[r, width]);
        for i in 0..r {
            out.row_mut(i)
                .copy_from_slice(&self.data[i * c + start..i * c + start + width]);
        }
        out
    }

    /// Horizontal concatenation of matrices sharing a row count.
    pub fn hcat(parts: &[&Tensor]) -> Result<Tensor> {
        let r = parts.first().map_or(0, |p| p.rows());
        if parts.iter().any(|p| p.rows() != r) {
            return Err(Error::Shape("hcat: row counts differ".into()));
        }
        let c: usize = parts.iter().map(|p| p.cols()).sum();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for p in parts {
                out.extend_from_slice(p.row(i));
            }
        }
        Tensor::new(vec![r, c], out)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.expect_same_shape(other, "add")?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Column-wise sum of a matrix.
    pub fn sum_rows(&self) -> Vec<f64> {
        let c = self.cols();
        let mut out = vec![0.0; c];
        for i in 0..self.rows() {
            out.iter_mut().zip(self.row(i)).for_each(|(o, v)| *o += v);
        }
        out
    }
}

/// `c[m×n] = a[m×k] · bᵀ` where `b` is stored `[n×k]`.
fn gemm_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    let mut c = Tensor::zeros(&[m, n]);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            k as isize,
            1,
            b.data.as_ptr(),
            1,
            k as isize,
            0.0,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

/// `c[k×n] = aᵀ · b` with `a` stored `[m×k]`, `b` stored `[m×n]`.
fn gemm_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut c = Tensor::zeros(&[k, n]);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    unsafe {
        matrixmultiply::dgemm(
            k,
            m,
            n,
            1.0,
            a.data.as_ptr(),
            1,
            k as isize,
            b.data.as_ptr(),
            n as isize,
            1,
            0.0,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

/// `c[m×n] = a[m×k] · b[k×n]`.
fn gemm_nn(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut c = Tensor::zeros(&[m, n]);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            k as isize,
            1,
            b.data.as_ptr(),
            n as isize,
            1,
            0.0,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Silu,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Silu => z / (1.0 + (-z).exp()),
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
        }
    }

    pub fn forward(self, z: &Tensor) -> Tensor {
        let mut out = z.clone();
        out.data.iter_mut().for_each(|v| *v = self.apply(*v));
        out
    }

    /// `upstream ⊙ act'(z)`.
    pub fn backward(self, z: &Tensor, upstream: &Tensor) -> Tensor {
        let mut out = upstream.clone();
        out.data
            .iter_mut()
            .zip(&z.data)
            .for_each(|(g, &zv)| *g *= self.derivative(zv));
        out
    }
}

/// Affine map `y = x Wᵀ + b` with `W: [out, in]`, `b: [out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    /// Xavier-style normal init with zero bias.
    pub fn init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / (inputs + outputs) as f64).sqrt();
        Self {
            weight: Tensor::randn(&[outputs, inputs], std, rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.expect_matrix("linear input")?;
        if x.cols() != self.inputs() {
            return Err(Error::Shape(format!(
                "linear expects {} inputs, got {}",
                self.inputs(),
                x.cols()
            )));
        }
        let mut y = gemm_nt(x, &self.weight);
        for i in 0..y.rows() {
            y.row_mut(i)
                .iter_mut()
                .zip(&self.bias.data)
                .for_each(|(v, b)| *v += b);
        }
        Ok(y)
    }

    /// Returns (parameter gradients, input gradient).
    pub fn backward(&self, x: &Tensor, upstream: &Tensor) -> Result<(Linear, Tensor)> {
        if upstream.rows() != x.rows() || upstream.cols() != self.outputs() {
            return Err(Error::Shape(format!(
                "linear upstream {:?} for input {:?} and {} outputs",
                upstream.shape(),
                x.shape(),
                self.outputs()
            )));
        }
        let weight = gemm_tn(upstream, x);
        let bias = Tensor::vector(upstream.sum_rows());
        let dx = gemm_nn(upstream, &self.weight);
        Ok((Linear { weight, bias }, dx))
    }
}

/// Parameter containers that the optimizer, EMA, checkpointing and the
/// gradient checker can walk generically. Gradients use the same type.
pub trait Params: Clone {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flat(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    fn get_flat(&self, mut idx: usize) -> f64 {
        for t in self.tensors() {
            if idx < t.len() {
                return t.data()[idx];
            }
            idx -= t.len();
        }
        panic!("parameter index out of range");
    }

    fn set_flat(&mut self, mut idx: usize, value: f64) {
        for t in self.tensors_mut() {
            if idx < t.len() {
                t.data_mut()[idx] = value;
                return;
            }
            idx -= t.len();
        }
        panic!("parameter index out of range");
    }

    fn same_layout(&self, other: &Self) -> bool {
        let (a, b) = (self.tensors(), other.tensors());
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.shape() == y.shape())
    }
}

/// Feed-forward net: `activation` after every layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Params for MlpParams {
    fn tensors(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

impl MlpParams {
    /// `dims = [in, hidden.., out]`.
    pub fn init(dims: &[usize], activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        Ok(Self {
            layers: dims
                .windows(2)
                .map(|w| Linear::init(w[0], w[1], rng))
                .collect(),
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Linear::inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Linear::outputs)
    }

    pub fn check_chain(&self) -> Result<()> {
        for w in self.layers.windows(2) {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::Shape(format!(
                    "layer dims do not chain: {} -> {}",
                    w[0].outputs(),
                    w[1].inputs()
                )));
            }
        }
        Ok(())
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer.
    inputs: Vec<Tensor>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Tensor>,
}

pub fn mlp_forward(params: &MlpParams, input: &Tensor) -> Result<Tensor> {
    mlp_forward_cached(params, input).map(|(y, _)| y)
}

pub fn mlp_forward_cached(params: &MlpParams, input: &Tensor) -> Result<(Tensor, MlpCache)> {
    let mut cache = MlpCache {
        inputs: Vec::with_capacity(params.layers.len()),
        pre: Vec::with_capacity(params.layers.len()),
    };
    let mut h = input.clone();
    let last = params.layers.len() - 1;
    for (i, layer) in params.layers.iter().enumerate() {
        let z = layer.forward(&h)?;
        cache.inputs.push(h);
        if i == last {
            return Ok((z, cache));
        }
        h = params.activation.forward(&z);
        cache.pre.push(z);
    }
    unreachable!("MLP has at least one layer")
}

/// Exact gradients of `⟨upstream, mlp(input)⟩` w.r.t. parameters and input.
pub fn mlp_backward(
    params: &MlpParams,
    input: &Tensor,
    upstream: &Tensor,
) -> Result<(MlpParams, Tensor)> {
    let (out, cache) = mlp_forward_cached(params, input)?;
    if out.shape() != upstream.shape() {
        return Err(Error::Shape(format!(
            "upstream {:?} vs output {:?}",
            upstream.shape(),
            out.shape()
        )));
    }
    mlp_backward_cached(params, &cache, upstream)
}

pub fn mlp_backward_cached(
    params: &MlpParams,
    cache: &MlpCache,
    upstream: &Tensor,
) -> Result<(MlpParams, Tensor)> {
    let n = params.layers.len();
    let mut grads: Vec<Linear> = Vec::with_capacity(n);
    let mut delta = upstream.clone();
    for i in (0..n).rev() {
        if i < n - 1 {
            delta = params.activation.backward(&cache.pre[i], &delta);
        }
        let (g, dx) = params.layers[i].backward(&cache.inputs[i], &delta)?;
        grads.push(g);
        delta = dx;
    }
    grads.reverse();
    Ok((
        MlpParams {
            layers: grads,
            activation: params.activation,
        },
        delta,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
    /// Global L2 norm bound; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 1e-4,
            eps: 1e-8,
            grad_clip: Some(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub config: AdamWConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Global norm before clipping.
    pub grad_norm: f64,
    pub clip_scale: f64,
}

pub fn global_norm<P: Params>(grads: &P) -> f64 {
    grads.tensors().iter().map(|t| t.sq_norm()).sum::<f64>().sqrt()
}

impl OptState {
    pub fn new<P: Params>(config: AdamWConfig, params: &P) -> Self {
        let m: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            config,
            v: m.clone(),
            m,
            step: 0,
        }
    }

    /// Clips by global norm, updates bias-corrected moments, then applies
    /// decoupled weight decay and the Adam update.
    pub fn step<P: Params>(&mut self, params: &mut P, grads: &P) -> Result<StepStats> {
        self.step_masked(params, grads, None)
    }

    /// Like [`OptState::step`], but tensors whose `trainable` flag is false
    /// are left untouched (no weight decay, no moment update). The global
    /// norm is taken over trainable tensors only.
    pub fn step_masked<P: Params>(
        &mut self,
        params: &mut P,
        grads: &P,
        trainable: Option<&[bool]>,
    ) -> Result<StepStats> {
        let n_tensors = params.tensors().len();
        if !params.same_layout(grads)
            || n_tensors != self.m.len()
            || trainable.is_some_and(|t| t.len() != n_tensors)
        {
            return Err(Error::Shape("optimizer state/params/grads layout differ".into()));
        }
        let active = |i: usize| trainable.is_none_or(|t| t[i]);
        let norm = grads
            .tensors()
            .iter()
            .enumerate()
            .filter(|(i, _)| active(*i))
            .map(|(_, t)| t.sq_norm())
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFiniteGradient { norm });
        }
        let clip_scale = match self.config.grad_clip {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.step += 1;
        let AdamWConfig {
            lr,
            beta1,
            beta2,
            weight_decay,
            eps,
            ..
        } = self.config;
        let bc1 = 1.0 - beta1.powf(self.step as f64);
        let bc2 = 1.0 - beta2.powf(self.step as f64);
        for (i, (((p, g), m), v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
            .enumerate()
        {
            if !active(i) {
                continue;
            }
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                let g = gv * clip_scale;
                *mv = beta1 * *mv + (1.0 - beta1) * g;
                *vv = beta2 * *vv + (1.0 - beta2) * g * g;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * weight_decay * *pv;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(StepStats {
            grad_norm: norm,
            clip_scale,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Flat index of the worst probe.
    pub worst_index: usize,
    pub probes: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

/// Finite-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

/// Compares `analytic` against central differences of `loss` on up to
/// `n_probe` randomly chosen coordinates.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps
/// coordinates with vanishing gradient from reporting pure rounding noise.
pub fn grad_check<P: Params>(
    loss: impl Fn(&P) -> f64,
    params: &P,
    analytic: &P,
    n_probe: usize,
    tolerance: f64,
    seed: u64,
) -> GradCheckReport {
    let total = params.num_params();
    let mut rng = rng::stream(seed, &[total as u64]);
    let probes = index::sample(&mut rng, total, n_probe.min(total)).into_vec();
    let mut work = params.clone();
    let mut worst = (0.0_f64, 0usize);
    for &i in &probes {
        let orig = params.get_flat(i);
        work.set_flat(i, orig + FD_STEP);
        let up = loss(&work);
        work.set_flat(i, orig - FD_STEP);
        let down = loss(&work);
        work.set_flat(i, orig);
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic.get_flat(i);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        if rel > worst.0 || rel.is_nan() {
            worst = (rel, i);
        }
    }
    GradCheckReport {
        max_rel_err: worst.0,
        worst_index: worst.1,
        probes: probes.len(),
        tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_mlp(dims: &[usize], act: Activation, seed: u64) -> MlpParams {
        let mut r = rng::stream(seed, &[]);
        let mut p = MlpParams::init(dims, act, &mut r).unwrap();
        // Non-zero biases so bias gradients are exercised.
        for l in &mut p.layers {
            l.bias = Tensor::randn(l.bias.shape(), 0.3, &mut r);
        }
        p
    }

    #[test]
    fn identity_layer_is_identity() {
        let mut l = Linear::zeros(2, 2);
        l.weight.data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let p = MlpParams {
            layers: vec![l],
            activation: Activation::Tanh,
        };
        let x = Tensor::from_rows(&[[0.3, -1.7]]).unwrap();
        assert_eq!(mlp_forward(&p, &x).unwrap(), x);
    }

    #[test]
    fn zero_weights_return_last_bias() {
        let mut p = MlpParams {
            layers: vec![Linear::zeros(3, 4), Linear::zeros(4, 2)],
            activation: Activation::Silu,
        };
        p.layers[1].bias = Tensor::vector(vec![0.5, -2.0]);
        let x = Tensor::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 0.0, 9.0]]).unwrap();
        let y = mlp_forward(&p, &x).unwrap();
        assert_eq!(y.data(), &[0.5, -2.0, 0.5, -2.0]);
    }

    #[test]
    fn two_layer_matches_hand_composition() {
        let p = rand_mlp(&[3, 5, 2], Activation::Tanh, 11);
        let x = [0.2, -0.4, 1.1];
        let (l0, l1) = (&p.layers[0], &p.layers[1]);
        let hidden: Vec<f64> = (0..5)
            .map(|j| {
                let z: f64 = (0..3).map(|k| l0.weight.row(j)[k] * x[k]).sum::<f64>()
                    + l0.bias.data()[j];
                z.tanh()
            })
            .collect();
        let expected: Vec<f64> = (0..2)
            .map(|j| {
                (0..5).map(|k| l1.weight.row(j)[k] * hidden[k]).sum::<f64>() + l1.bias.data()[j]
            })
            .collect();
        let y = mlp_forward(&p, &Tensor::from_rows(&[x]).unwrap()).unwrap();
        for (a, b) in y.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let p = rand_mlp(&[3, 2], Activation::Tanh, 1);
        let x = Tensor::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(mlp_forward(&p, &x), Err(Error::Shape(_))));
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let p = rand_mlp(&[4, 16, 16, 3], Activation::Silu, 5);
        let x = Tensor::randn(&[7, 4], 1.0, &mut rng::stream(2, &[]));
        assert_eq!(mlp_forward(&p, &x).unwrap(), mlp_forward(&p, &x).unwrap());
    }

    #[test]
    fn linear_sum_loss_weight_grad_is_outer_with_ones() {
        let p = rand_mlp(&[3, 2], Activation::Tanh, 3);
        let x = Tensor::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
        let ones = Tensor::filled(&[1, 2], 1.0);
        let (g, _) = mlp_backward(&p, &x, &ones).unwrap();
        assert_eq!(g.layers[0].weight.data(), &[1.0, -2.0, 0.5, 1.0, -2.0, 0.5]);
        assert_eq!(g.layers[0].bias.data(), &[1.0, 1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let p = rand_mlp(&[3, 8, 2], Activation::Silu, 4);
        let x = Tensor::randn(&[5, 3], 1.0, &mut rng::stream(1, &[]));
        let (g, dx) = mlp_backward(&p, &x, &Tensor::zeros(&[5, 2])).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    fn fd_check(act: Activation, seed: u64) {
        let p = rand_mlp(&[3, 10, 7, 2], act, seed);
        let x = Tensor::randn(&[6, 3], 1.0, &mut rng::stream(seed, &[1]));
        let w = Tensor::randn(&[6, 2], 1.0, &mut rng::stream(seed, &[2]));
        let loss = |q: &MlpParams| -> f64 {
            let y = mlp_forward(q, &x).unwrap();
            y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let (g, dx) = mlp_backward(&p, &x, &w).unwrap();
        let report = grad_check(loss, &p, &g, p.num_params(), 1e-4, seed);
        assert!(report.passed(), "{act:?}: {report:?}");

        // Input gradient by the same central-difference rule.
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += FD_STEP;
            let mut xm = x.clone();
            xm.data_mut()[i] -= FD_STEP;
            let f = |z: &Tensor| -> f64 {
                let y = mlp_forward(&p, z).unwrap();
                y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
            };
            let numeric = (f(&xp) - f(&xm)) / (2.0 * FD_STEP);
            let a = dx.data()[i];
            assert!((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6) < 1e-4);
        }
    }

    #[test]
    fn backward_matches_finite_differences_tanh() {
        fd_check(Activation::Tanh, 21);
    }

    #[test]
    fn backward_matches_finite_differences_silu() {
        fd_check(Activation::Silu, 22);
    }

    #[test]
    fn grad_check_quadratic_and_negative_control() {
        let p = rand_mlp(&[4, 3], Activation::Tanh, 8);
        let loss = |q: &MlpParams| q.flat().iter().map(|v| v * v).sum::<f64>();
        let mut g = p.clone();
        for t in g.tensors_mut() {
            t.scale(2.0);
        }
        let ok = grad_check(loss, &p, &g, 100, 1e-4, 1);
        assert!(ok.passed(), "{ok:?}");
        assert!(ok.max_rel_err < 1e-8);

        let mut bad = g.clone();
        let i = 3;
        bad.set_flat(i, bad.get_flat(i) + 1.0);
        let report = grad_check(loss, &p, &bad, p.num_params(), 1e-4, 1);
        assert!(!report.passed());
        assert_eq!(report.worst_index, i);
    }

    #[test]
    fn adamw_zero_grad_zero_decay_is_identity() {
        let mut p = rand_mlp(&[3, 4, 2], Activation::Tanh, 2);
        let before = p.clone();
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut st = OptState::new(cfg, &p);
        let g = p.zeros_like();
        for _ in 0..3 {
            st.step(&mut p, &g).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.step, 3);
    }

    #[test]
    fn adamw_first_step_moves_against_gradient_sign() {
        let mut p = rand_mlp(&[3, 2], Activation::Tanh, 2);
        let before = p.flat();
        let mut g = p.zeros_like();
        let n = g.num_params();
        for i in 0..n {
            g.set_flat(i, if i % 2 == 0 { 0.01 * (i + 1) as f64 } else { -0.02 });
        }
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut st = OptState::new(cfg, &p);
        st.step(&mut p, &g).unwrap();
        for (i, (b, a)) in before.iter().zip(p.flat()).enumerate() {
            assert_eq!((a - b).signum(), -g.get_flat(i).signum());
        }
    }

    #[test]
    fn adamw_clips_by_global_norm() {
        // Moments after one step are (1-β)·g_eff, so the clip factor is
        // recoverable from m.
        let mut p = MlpParams {
            layers: vec![Linear::zeros(2, 1)],
            activation: Activation::Tanh,
        };
        let mut g = p.zeros_like();
        g.layers[0].weight.data_mut().copy_from_slice(&[6.0, 8.0]);
        let mut st = OptState::new(AdamWConfig::default(), &p);
        let stats = st.step(&mut p, &g).unwrap();
        assert!((stats.grad_norm - 10.0).abs() < 1e-12);
        assert!((stats.clip_scale - 0.1).abs() < 1e-15);
        let m = &st.m[0];
        assert!((m[0] - 0.1 * 0.6).abs() < 1e-12);
        assert!((m[1] - 0.1 * 0.8).abs() < 1e-12);
    }

    #[test]
    fn adamw_rejects_non_finite() {
        let mut p = rand_mlp(&[2, 1], Activation::Tanh, 2);
        let before = p.clone();
        let mut g = p.zeros_like();
        g.set_flat(0, f64::NAN);
        let mut st = OptState::new(AdamWConfig::default(), &p);
        assert!(matches!(
            st.step(&mut p, &g),
            Err(Error::NonFiniteGradient { .. })
        ));
        assert_eq!(p, before);
        assert_eq!(st.step, 0);
    }
}
