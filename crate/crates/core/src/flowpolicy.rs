//! Preference-conditioned velocity field `v(x_t, t, ω)`, forward noising,
//! the Euler sampler, EMA, and the flow-matching warm start.
//!
//! The trunk is an MLP over `[x_t, temb]` (plus a projected preference
//! block in `input_concat` mode). A single conditioning projector maps the
//! sinusoidal encoding of ω to every modulation the mode needs:
//!
//! * `time_embed_add`: an additive offset on the time embedding.
//! * `film_residual`: a shared `(γ, β)` pair applied after every hidden
//!   layer as `h ← h ⊙ (1 + g_ℓ ⊙ γ) + g_ℓ ⊙ β`, with a per-layer gate `g_ℓ`.
//! * `hybrid`: both of the above.
//! * `input_concat`: a projected block appended to the trunk input.
//!
//! The projector's last layer starts at `N(0, σ²)` with σ = 1e-3 and zero
//! bias, so a fresh net is almost independent of ω.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::numcore::{
    mlp_backward_cached, mlp_forward_cached, Activation, Linear, MlpCache, MlpParams, OptState,
    Params, Tensor,
};
use crate::rng::{self, domain};
use crate::simplex::PreferenceVector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    InputConcat,
    FilmResidual,
    TimeEmbedAdd,
    Hybrid,
}

impl ConditioningMode {
    fn time(self) -> bool {
        matches!(self, Self::TimeEmbedAdd | Self::Hybrid)
    }

    fn film(self) -> bool {
        matches!(self, Self::FilmResidual | Self::Hybrid)
    }

    fn concat(self) -> bool {
        matches!(self, Self::InputConcat)
    }
}

/// Whether the preference pathway is evaluated. `Bypass` gives the
/// ω-unconditioned behaviour used for the reference policy and for
/// fixed-preference baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    On,
    Bypass,
}

fn default_projector_hidden() -> Vec<usize> {
    vec![64]
}

fn default_omega_frequencies() -> usize {
    1
}

fn default_frequencies() -> usize {
    8
}

fn default_cond_init_std() -> f64 {
    1e-3
}

fn default_concat_dim() -> usize {
    16
}

fn default_gate_init() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub data_dim: usize,
    pub omega_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub mode: ConditioningMode,
    #[serde(default = "default_projector_hidden")]
    pub projector_hidden: Vec<usize>,
    /// Sinusoid frequencies per encoded scalar; each scalar yields `2·F` dims.
    #[serde(default = "default_frequencies")]
    pub frequencies: usize,
    /// Sinusoid frequencies per preference weight.
    #[serde(default = "default_omega_frequencies")]
    pub omega_frequencies: usize,
    #[serde(default = "default_cond_init_std")]
    pub cond_init_std: f64,
    #[serde(default = "default_concat_dim")]
    pub concat_dim: usize,
    /// Initial value of the per-layer FiLM gates.
    #[serde(default = "default_gate_init")]
    pub gate_init: f64,
}

impl NetConfig {
    pub fn new(data_dim: usize, omega_dim: usize, mode: ConditioningMode) -> Self {
        Self {
            data_dim,
            omega_dim,
            hidden: vec![128, 128, 128],
            activation: Activation::Tanh,
            mode,
            projector_hidden: default_projector_hidden(),
            frequencies: default_frequencies(),
            omega_frequencies: default_omega_frequencies(),
            cond_init_std: default_cond_init_std(),
            concat_dim: default_concat_dim(),
            gate_init: default_gate_init(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.data_dim == 0 || self.omega_dim == 0 || self.frequencies == 0 || self.omega_frequencies == 0 {
            return Err(Error::Config("data_dim, omega_dim and frequencies must be > 0".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("trunk needs at least one non-empty hidden layer".into()));
        }
        if self.mode.film() && self.hidden.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Config(
                "film modulation shares one (γ, β) across layers; hidden widths must be equal".into(),
            ));
        }
        if !self.gate_init.is_finite() || !self.cond_init_std.is_finite() || self.cond_init_std < 0.0 {
            return Err(Error::Config("gate_init and cond_init_std must be finite".into()));
        }
        if self.mode.concat() && self.concat_dim == 0 {
            return Err(Error::Config("input_concat needs concat_dim > 0".into()));
        }
        Ok(())
    }

    fn enc_dim(&self) -> usize {
        2 * self.frequencies
    }

    fn omega_enc_dim(&self) -> usize {
        self.omega_dim * 2 * self.omega_frequencies
    }

    fn trunk_input_dim(&self) -> usize {
        self.data_dim + self.enc_dim() + if self.mode.concat() { self.concat_dim } else { 0 }
    }

    fn layout(&self) -> ProjectorLayout {
        let mut off = 0;
        let mut take = |on: bool, w: usize| {
            on.then(|| {
                let r = off;
                off += w;
                r
            })
        };
        let time = take(self.mode.time(), self.enc_dim());
        let film = take(self.mode.film(), 2 * self.hidden[0]);
        let concat = take(self.mode.concat(), self.concat_dim);
        ProjectorLayout {
            time,
            film,
            concat,
            width: off,
        }
    }
}

/// Column offsets of each modulation inside the projector output.
#[derive(Debug, Clone, Copy)]
struct ProjectorLayout {
    time: Option<usize>,
    film: Option<usize>,
    concat: Option<usize>,
    width: usize,
}

/// `[sin(kπs), cos(kπs)]` for `k = 1..=F`.
pub fn encode_scalar(s: f64, frequencies: usize, out: &mut Vec<f64>) {
    let base = out.len();
    out.resize(base + 2 * frequencies, 0.0);
    for k in 0..frequencies {
        let a = (k + 1) as f64 * std::f64::consts::PI * s;
        out[base + k] = a.sin();
        out[base + frequencies + k] = a.cos();
    }
}

fn encode_rows(values: &Tensor, frequencies: usize) -> Tensor {
    let (r, c) = (values.rows(), values.cols());
    let mut data = Vec::with_capacity(r * c * 2 * frequencies);
    for i in 0..r {
        for &v in values.row(i) {
            encode_scalar(v, frequencies, &mut data);
        }
    }
    Tensor::new(vec![r, c * 2 * frequencies], data).expect("encoding shape")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedVelocityNet {
    pub config: NetConfig,
    pub trunk: MlpParams,
    pub cond_projector: MlpParams,
    /// One gate vector per hidden layer; only used by film modes.
    pub gates: Vec<Tensor>,
}

impl Params for ConditionedVelocityNet {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.trunk.tensors();
        v.extend(self.cond_projector.tensors());
        v.extend(self.gates.iter());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.trunk.tensors_mut();
        v.extend(self.cond_projector.tensors_mut());
        v.extend(self.gates.iter_mut());
        v
    }
}

/// Intermediates of one batched forward pass.
#[derive(Debug, Clone)]
pub struct NetCache {
    cond: Conditioning,
    projector: Option<MlpCache>,
    /// Input of each trunk layer.
    layer_inputs: Vec<Tensor>,
    /// Hidden pre-activations.
    pre: Vec<Tensor>,
    /// Hidden activations before modulation.
    act: Vec<Tensor>,
    /// Projector output, present when conditioning ran.
    proj_out: Option<Tensor>,
}

impl ConditionedVelocityNet {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(seed, &[domain::INIT]);
        let mut dims = vec![config.trunk_input_dim()];
        dims.extend(&config.hidden);
        dims.push(config.data_dim);
        let trunk = MlpParams::init(&dims, config.activation, &mut r)?;

        let layout = config.layout();
        let mut pdims = vec![config.omega_enc_dim()];
        pdims.extend(&config.projector_hidden);
        pdims.push(layout.width.max(1));
        let mut cond_projector = MlpParams::init(&pdims, Activation::Tanh, &mut r)?;
        let last = cond_projector.layers.last_mut().expect("projector has layers");
        *last = Linear {
            weight: Tensor::randn(last.weight.shape(), config.cond_init_std, &mut r),
            bias: Tensor::zeros(last.bias.shape()),
        };

        let gates = if config.mode.film() {
            config.hidden.iter().map(|&h| Tensor::filled(&[h], config.gate_init)).collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            config,
            trunk,
            cond_projector,
            gates,
        })
    }

    /// Structural validation after deserialization.
    pub fn check(&self) -> Result<()> {
        self.config.validate()?;
        self.trunk.check_chain()?;
        self.cond_projector.check_chain()?;
        if self.trunk.input_dim() != self.config.trunk_input_dim()
            || self.trunk.output_dim() != self.config.data_dim
            || self.trunk.layers.len() != self.config.hidden.len() + 1
        {
            return Err(Error::Shape("trunk does not match its config".into()));
        }
        if self.cond_projector.input_dim() != self.config.omega_enc_dim()
            || self.cond_projector.output_dim() != self.config.layout().width.max(1)
        {
            return Err(Error::Shape("conditioning projector does not match its config".into()));
        }
        let gates_ok = if self.config.mode.film() {
            self.gates.len() == self.config.hidden.len()
                && self.gates.iter().zip(&self.config.hidden).all(|(g, &h)| g.len() == h)
        } else {
            self.gates.is_empty()
        };
        if !gates_ok {
            return Err(Error::Shape("gate vectors do not match hidden layers".into()));
        }
        Ok(())
    }

    /// Tensors the flow-matching warm start may update: the trunk only.
    pub fn trunk_mask(&self) -> Vec<bool> {
        let n_trunk = self.trunk.tensors().len();
        (0..self.tensors().len()).map(|i| i < n_trunk).collect()
    }

    /// Batched velocity: `x: [B, d]`, `t: [B]`, `omega: [B, M]`.
    pub fn forward_batch(
        &self,
        x: &Tensor,
        t: &[f64],
        omega: &Tensor,
        cond: Conditioning,
    ) -> Result<Tensor> {
        self.forward_cached(x, t, omega, cond).map(|(y, _)| y)
    }

    pub fn forward_cached(
        &self,
        x: &Tensor,
        t: &[f64],
        omega: &Tensor,
        cond: Conditioning,
    ) -> Result<(Tensor, NetCache)> {
        let cfg = &self.config;
        let b = x.rows();
        if x.shape() != [b, cfg.data_dim] || t.len() != b || omega.shape() != [b, cfg.omega_dim] {
            return Err(Error::Shape(format!(
                "velocity inputs x{:?} t[{}] ω{:?} for data_dim {} and omega_dim {}",
                x.shape(),
                t.len(),
                omega.shape(),
                cfg.data_dim,
                cfg.omega_dim
            )));
        }
        let layout = cfg.layout();
        let t_col = Tensor::new(vec![b, 1], t.to_vec())?;
        let mut temb = encode_rows(&t_col, cfg.frequencies);

        let (proj_out, projector) = match cond {
            Conditioning::On => {
                let enc = encode_rows(omega, cfg.omega_frequencies);
                let (p, c) = mlp_forward_cached(&self.cond_projector, &enc)?;
                (Some(p), Some(c))
            }
            Conditioning::Bypass => (None, None),
        };

        if let (Some(off), Some(p)) = (layout.time, &proj_out) {
            temb.add_assign(&p.columns(off, cfg.enc_dim()))?;
        }
        let input = match layout.concat {
            Some(off) => {
                let block = match &proj_out {
                    Some(p) => p.columns(off, cfg.concat_dim),
                    None => Tensor::zeros(&[b, cfg.concat_dim]),
                };
                Tensor::hcat(&[x, &temb, &block])?
            }
            None => Tensor::hcat(&[x, &temb])?,
        };

        let film = match (layout.film, &proj_out) {
            (Some(off), Some(p)) => {
                let h = cfg.hidden[0];
                Some((p.columns(off, h), p.columns(off + h, h)))
            }
            _ => None,
        };

        let n_hidden = cfg.hidden.len();
        let mut cache = NetCache {
            cond,
            projector,
            layer_inputs: Vec::with_capacity(n_hidden + 1),
            pre: Vec::with_capacity(n_hidden),
            act: Vec::with_capacity(n_hidden),
            proj_out: None,
        };
        let mut h = input;
        for l in 0..n_hidden {
            let z = self.trunk.layers[l].forward(&h)?;
            let a = self.trunk.activation.forward(&z);
            let mut next = a.clone();
            if let Some((gamma, beta)) = &film {
                let g = self.gates[l].data();
                for i in 0..b {
                    let (gr, br) = (gamma.row(i), beta.row(i));
                    for (j, v) in next.row_mut(i).iter_mut().enumerate() {
                        *v = *v * (1.0 + g[j] * gr[j]) + g[j] * br[j];
                    }
                }
            }
            cache.layer_inputs.push(h);
            cache.pre.push(z);
            cache.act.push(a);
            h = next;
        }
        let out = self.trunk.layers[n_hidden].forward(&h)?;
        cache.layer_inputs.push(h);
        cache.proj_out = proj_out;
        Ok((out, cache))
    }

    /// Exact parameter gradients of `⟨upstream, forward(...)⟩`.
    pub fn backward(&self, cache: &NetCache, upstream: &Tensor) -> Result<Self> {
        let cfg = &self.config;
        let layout = cfg.layout();
        let n_hidden = cfg.hidden.len();
        let b = upstream.rows();
        let mut grads = self.zeros_like();

        let film = match (layout.film, &cache.proj_out) {
            (Some(off), Some(p)) => {
                let h = cfg.hidden[0];
                Some((p.columns(off, h), p.columns(off + h, h)))
            }
            _ => None,
        };
        let mut d_gamma = film.as_ref().map(|(g, _)| Tensor::zeros(g.shape()));
        let mut d_beta = film.as_ref().map(|(g, _)| Tensor::zeros(g.shape()));

        let (g_last, mut dh) =
            self.trunk.layers[n_hidden].backward(&cache.layer_inputs[n_hidden], upstream)?;
        grads.trunk.layers[n_hidden] = g_last;

        for l in (0..n_hidden).rev() {
            let mut da = dh.clone();
            if let Some((gamma, beta)) = &film {
                let g = self.gates[l].data();
                let a = &cache.act[l];
                let dg = grads.gates[l].data_mut();
                let (dgam, dbet) = (d_gamma.as_mut().unwrap(), d_beta.as_mut().unwrap());
                for i in 0..b {
                    let (ar, gr, br, dhr) = (a.row(i), gamma.row(i), beta.row(i), dh.row(i));
                    let dar = da.row_mut(i);
                    let dgr = dgam.row_mut(i);
                    let dbr = dbet.row_mut(i);
                    for j in 0..g.len() {
                        dar[j] = dhr[j] * (1.0 + g[j] * gr[j]);
                        dg[j] += dhr[j] * (ar[j] * gr[j] + br[j]);
                        dgr[j] += dhr[j] * ar[j] * g[j];
                        dbr[j] += dhr[j] * g[j];
                    }
                }
            }
            let dz = self.trunk.activation.backward(&cache.pre[l], &da);
            let (gl, dx) = self.trunk.layers[l].backward(&cache.layer_inputs[l], &dz)?;
            grads.trunk.layers[l] = gl;
            dh = dx;
        }

        if let (Some(pc), Some(p)) = (&cache.projector, &cache.proj_out) {
            let mut dp = Tensor::zeros(p.shape());
            let d = cfg.data_dim;
            let e = cfg.enc_dim();
            for i in 0..b {
                let din = dh.row(i);
                let row = dp.row_mut(i);
                if let Some(off) = layout.time {
                    row[off..off + e].copy_from_slice(&din[d..d + e]);
                }
                if let Some(off) = layout.concat {
                    row[off..off + cfg.concat_dim]
                        .copy_from_slice(&din[d + e..d + e + cfg.concat_dim]);
                }
                if let Some(off) = layout.film {
                    let h = cfg.hidden[0];
                    row[off..off + h].copy_from_slice(d_gamma.as_ref().unwrap().row(i));
                    row[off + h..off + 2 * h].copy_from_slice(d_beta.as_ref().unwrap().row(i));
                }
            }
            let (gp, _) = mlp_backward_cached(&self.cond_projector, pc, &dp)?;
            grads.cond_projector = gp;
        }
        debug_assert!(cache.cond == Conditioning::On || cache.projector.is_none());
        Ok(grads)
    }

    /// Single-point velocity.
    pub fn velocity(&self, x_t: &[f64], t: f64, omega: &PreferenceVector) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Shape(format!("time {t} outside [0, 1]")));
        }
        let x = Tensor::from_rows(&[x_t])?;
        let w = Tensor::from_rows(&[omega.weights()])?;
        Ok(self.forward_batch(&x, &[t], &w, Conditioning::On)?.into_data())
    }

    /// Overwrites the projector's last layer with zeros so its output is
    /// exactly zero.
    pub fn zero_projector_output(&mut self) {
        let last = self.cond_projector.layers.last_mut().expect("projector has layers");
        last.weight.scale(0.0);
        last.bias.scale(0.0);
    }
}

/// Linear interpolation path: `x_t = (1 − t)x₀ + tξ`, target `ξ − x₀`.
pub fn forward_noise(x0: &[f64], xi: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if x0.len() != xi.len() {
        return Err(Error::Shape(format!("x0 has {} dims, ξ has {}", x0.len(), xi.len())));
    }
    let xt = x0.iter().zip(xi).map(|(a, n)| (1.0 - t) * a + t * n).collect();
    let v = x0.iter().zip(xi).map(|(a, n)| n - a).collect();
    Ok((xt, v))
}

/// Integrates `dx/dt = v` from t = 1 down to t = 0 with `n_steps` explicit
/// Euler steps, evaluating the field at the start of each step.
pub fn euler_integrate(
    mut field: impl FnMut(&Tensor, f64) -> Result<Tensor>,
    x1: Tensor,
    n_steps: usize,
) -> Result<Tensor> {
    if n_steps == 0 {
        return Err(Error::Config("n_steps must be at least 1".into()));
    }
    let dt = 1.0 / n_steps as f64;
    let mut x = x1;
    for k in 0..n_steps {
        let t = 1.0 - k as f64 * dt;
        let v = field(&x, t)?;
        if v.shape() != x.shape() {
            return Err(Error::Shape("velocity field changed the state shape".into()));
        }
        x.data_mut()
            .iter_mut()
            .zip(v.data())
            .for_each(|(xv, vv)| *xv -= dt * vv);
        if !x.is_finite() {
            return Err(Error::Sampling { step: k });
        }
    }
    Ok(x)
}

pub fn standard_normal(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Initial noise for sample `index` of a draw keyed by `seed`.
pub fn sample_noise(seed: u64, index: u64, dim: usize) -> Vec<f64> {
    standard_normal(dim, &mut rng::stream(seed, &[domain::GENERATION, index]))
}

/// Integrates a batch whose rows may carry different preferences.
pub fn sample_batch(
    net: &ConditionedVelocityNet,
    omegas: &Tensor,
    noise: Tensor,
    n_steps: usize,
    cond: Conditioning,
) -> Result<Tensor> {
    let b = noise.rows();
    euler_integrate(
        |x, t| net.forward_batch(x, &vec![t; b], omegas, cond),
        noise,
        n_steps,
    )
}

/// `n` samples under one preference; sample `i` starts from
/// [`sample_noise`]`(seed, i)`.
pub fn sample_many(
    net: &ConditionedVelocityNet,
    omega: &PreferenceVector,
    n: usize,
    n_steps: usize,
    seed: u64,
    cond: Conditioning,
) -> Result<Tensor> {
    let d = net.config.data_dim;
    if omega.dim() != net.config.omega_dim {
        return Err(Error::Shape(format!(
            "preference has {} weights, net expects {}",
            omega.dim(),
            net.config.omega_dim
        )));
    }
    let rows: Vec<Vec<f64>> = (0..n as u64).map(|i| sample_noise(seed, i, d)).collect();
    let noise = Tensor::new(vec![n, d], rows.concat())?;
    let omegas = Tensor::new(vec![n, omega.dim()], omega.weights().repeat(n))?;
    sample_batch(net, &omegas, noise, n_steps, cond)
}

/// One sample `x₀` from noise drawn with `seed`.
pub fn euler_sample(
    net: &ConditionedVelocityNet,
    omega: &PreferenceVector,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(sample_many(net, omega, 1, n_steps, seed, Conditioning::On)?.into_data())
}

/// `old ← λ·old + (1 − λ)·current`.
pub fn ema_update<P: Params>(old: &mut P, current: &P, decay: f64) -> Result<()> {
    if !old.same_layout(current) {
        return Err(Error::Shape("EMA operands differ in layout".into()));
    }
    if !(0.0..=1.0).contains(&decay) {
        return Err(Error::Config(format!("EMA decay {decay} outside [0, 1]")));
    }
    for (o, c) in old.tensors_mut().into_iter().zip(current.tensors()) {
        o.data_mut()
            .iter_mut()
            .zip(c.data())
            .for_each(|(ov, cv)| *ov = decay * *ov + (1.0 - decay) * cv);
    }
    Ok(())
}

/// Source distribution for the warm start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetDistribution {
    Gaussian { mean: Vec<f64>, std: f64 },
    PointMass { at: Vec<f64> },
    Mixture { centers: Vec<Vec<f64>>, std: f64 },
}

pub trait DataSampler {
    fn dim(&self) -> usize;
    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
}

impl DataSampler for TargetDistribution {
    fn dim(&self) -> usize {
        match self {
            Self::Gaussian { mean, .. } => mean.len(),
            Self::PointMass { at } => at.len(),
            Self::Mixture { centers, .. } => centers.first().map_or(0, Vec::len),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            Self::Gaussian { mean, std } => {
                let z = standard_normal(mean.len(), rng);
                mean.iter().zip(z).map(|(m, z)| m + std * z).collect()
            }
            Self::PointMass { at } => at.clone(),
            Self::Mixture { centers, std } => {
                let c = &centers[rng.random_range(0..centers.len())];
                let z = standard_normal(c.len(), rng);
                c.iter().zip(z).map(|(m, z)| m + std * z).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PretrainReport {
    pub losses: Vec<f64>,
}

impl PretrainReport {
    /// Mean of the last `n` losses.
    pub fn tail_mean(&self, n: usize) -> Option<f64> {
        let n = n.min(self.losses.len());
        (n > 0).then(|| self.losses[self.losses.len() - n..].iter().sum::<f64>() / n as f64)
    }
}

/// Divergence threshold for the warm start.
pub const DIVERGENCE_LOSS: f64 = 1e6;

/// Plain conditional flow matching, `E‖v(x_t, t, ω_u) − (ξ − x₀)‖²`, with ω
/// held at the simplex barycentre. Only the trunk is updated, so the
/// conditioning pathway keeps its near-zero initialization.
pub fn pretrain_flow_matching(
    net: &mut ConditionedVelocityNet,
    data: &dyn DataSampler,
    cfg: &PretrainConfig,
    opt: &mut OptState,
) -> Result<PretrainReport> {
    let d = net.config.data_dim;
    if data.dim() != d {
        return Err(Error::Shape(format!("data has {} dims, net expects {d}", data.dim())));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let m = net.config.omega_dim;
    let bsz = cfg.batch_size;
    let omegas = Tensor::new(vec![bsz, m], PreferenceVector::uniform(m).weights().repeat(bsz))?;
    let mask = net.trunk_mask();
    let mut report = PretrainReport::default();
    for step in 0..cfg.steps {
        let mut r = rng::stream(cfg.seed, &[domain::PRETRAIN, step as u64]);
        let mut xs = Vec::with_capacity(bsz * d);
        let mut targets = Vec::with_capacity(bsz * d);
        let mut ts = Vec::with_capacity(bsz);
        for _ in 0..bsz {
            let x0 = data.draw(&mut r);
            let xi = standard_normal(d, &mut r);
            let t: f64 = r.random();
            let (xt, v) = forward_noise(&x0, &xi, t)?;
            xs.extend(xt);
            targets.extend(v);
            ts.push(t);
        }
        let x = Tensor::new(vec![bsz, d], xs)?;
        let (out, cache) = net.forward_cached(&x, &ts, &omegas, Conditioning::On)?;
        let mut grad = out.clone();
        let mut loss = 0.0;
        for (g, tv) in grad.data_mut().iter_mut().zip(&targets) {
            let diff = *g - tv;
            loss += diff * diff;
            *g = 2.0 * diff / bsz as f64;
        }
        loss /= bsz as f64;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::Diverged { step, loss });
        }
        let grads = net.backward(&cache, &grad)?;
        opt.step_masked(net, &grads, Some(&mask))?;
        report.losses.push(loss);
    }
    Ok(report)
}
