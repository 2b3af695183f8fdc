//! Preference-conditioned multi-reward fine-tuning: per-channel group
//! advantages, the advantage-to-ρ map, implicit velocity targets, per-reward
//! losses with preference-weighted aggregation, and the outer training loop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::flowpolicy::{
    ema_update, forward_noise, sample_batch, sample_noise, standard_normal, Conditioning,
    ConditionedVelocityNet,
};
use crate::numcore::{OptState, Params, Tensor};
use crate::rewards::{evaluate_vector, RewardSpec};
use crate::rng::{self, domain};
use crate::simplex::{sample_preference, PrefSampleConfig, PreferenceVector};
use crate::{Error, Result};

/// Default `eps` in the group z-score.
pub const ADV_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossMode {
    Late,
    Early,
    Stch { mu: f64 },
}

fn check_group(rewards: &Tensor) -> Result<(usize, usize)> {
    if rewards.shape().len() != 2 {
        return Err(Error::Shape(format!("rewards must be K×M, got {:?}", rewards.shape())));
    }
    let (k, m) = (rewards.rows(), rewards.cols());
    if k < 2 {
        return Err(Error::Degenerate(format!("group of {k} sample(s) has no spread")));
    }
    Ok((k, m))
}

fn zscore(values: &[f64], eps: f64) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + eps;
    values.iter().map(|v| (v - mean) / denom).collect()
}

/// Z-scores every reward channel separately across the K samples of a group
/// (population std). The preference plays no part here.
pub fn per_channel_advantages(rewards: &Tensor, eps: f64) -> Result<Tensor> {
    let (k, m) = check_group(rewards)?;
    let mut out = Tensor::zeros(&[k, m]);
    for c in 0..m {
        let col: Vec<f64> = (0..k).map(|i| rewards.row(i)[c]).collect();
        for (i, a) in zscore(&col, eps).into_iter().enumerate() {
            out.row_mut(i)[c] = a;
        }
    }
    Ok(out)
}

/// Z-score of the scalarized reward `Σ ω_m r_m`.
pub fn early_scalarized_advantages(rewards: &Tensor, omega: &PreferenceVector, eps: f64) -> Result<Vec<f64>> {
    let (k, m) = check_group(rewards)?;
    if omega.dim() != m {
        return Err(Error::Shape(format!("{m} reward channels but {} weights", omega.dim())));
    }
    let scalar: Vec<f64> = (0..k)
        .map(|i| rewards.row(i).iter().zip(omega.weights()).map(|(r, w)| r * w).sum())
        .collect();
    Ok(zscore(&scalar, eps))
}

/// `ρ = ½ + ½·clip(A/ε, −1, 1)`.
pub fn rho_map(advantage: f64, eps_clip: f64) -> f64 {
    0.5 + 0.5 * (advantage / eps_clip).clamp(-1.0, 1.0)
}

/// `v₊ = (1−β)v_old + βv_θ`, `v₋ = (1+β)v_old − βv_θ`.
pub fn implicit_velocities(v_old: &Tensor, v_theta: &Tensor, beta: f64) -> Result<(Tensor, Tensor)> {
    if v_old.shape() != v_theta.shape() {
        return Err(Error::Shape(format!(
            "v_old {:?} vs v_θ {:?}",
            v_old.shape(),
            v_theta.shape()
        )));
    }
    let plus = v_old
        .data()
        .iter()
        .zip(v_theta.data())
        .map(|(o, c)| (1.0 - beta) * o + beta * c)
        .collect();
    let minus = v_old
        .data()
        .iter()
        .zip(v_theta.data())
        .map(|(o, c)| (1.0 + beta) * o - beta * c)
        .collect();
    Ok((
        Tensor::new(v_old.shape().to_vec(), plus)?,
        Tensor::new(v_old.shape().to_vec(), minus)?,
    ))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `ρ‖v₊ − v‖² + (1 − ρ)‖v₋ − v‖²` for one sample.
pub fn nft_loss_per_reward(rho: f64, v_plus: &[f64], v_minus: &[f64], v_target: &[f64]) -> Result<f64> {
    if v_plus.len() != v_target.len() || v_minus.len() != v_target.len() {
        return Err(Error::Shape("velocity lengths differ".into()));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!("ρ={rho} outside [0, 1]")));
    }
    Ok(rho * sq_dist(v_plus, v_target) + (1.0 - rho) * sq_dist(v_minus, v_target))
}

/// `‖v_θ − v_ref‖²` for one sample.
pub fn kl_loss(v_theta: &[f64], v_ref: &[f64]) -> Result<f64> {
    if v_theta.len() != v_ref.len() {
        return Err(Error::Shape("velocity lengths differ".into()));
    }
    Ok(sq_dist(v_theta, v_ref))
}

fn check_aggregate(mode: LossMode, per_reward: &[f64], omega: &[f64]) -> Result<()> {
    if let Some(l) = per_reward.iter().find(|l| !l.is_finite()) {
        return Err(Error::NonFiniteLoss {
            step: 0,
            detail: format!("per-reward loss {l}"),
        });
    }
    match mode {
        LossMode::Stch { mu } if !(mu > 0.0 && mu.is_finite()) => {
            Err(Error::Config(format!("stch smoothing μ={mu} must be positive")))
        }
        _ if per_reward.len() != omega.len() => Err(Error::Shape(format!(
            "{} losses but {} weights",
            per_reward.len(),
            omega.len()
        ))),
        _ => Ok(()),
    }
}

/// Late: `Σ ω_m L_m`. STCH: `μ·log Σ exp(ω_m L_m / μ)`. Early mode has
/// already folded the preference into a single advantage, so it sums the
/// (single) loss with the given weights, which callers set to `[1]`.
pub fn aggregate_losses(mode: LossMode, per_reward: &[f64], omega: &[f64]) -> Result<f64> {
    check_aggregate(mode, per_reward, omega)?;
    let weighted = per_reward.iter().zip(omega).map(|(l, w)| l * w);
    Ok(match mode {
        LossMode::Late | LossMode::Early => weighted.sum(),
        LossMode::Stch { mu } => {
            let z: Vec<f64> = weighted.map(|v| v / mu).collect();
            let top = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            mu * (top + z.iter().map(|v| (v - top).exp()).sum::<f64>().ln())
        }
    })
}

/// `∂ aggregate / ∂ L_m`.
pub fn aggregate_weights(mode: LossMode, per_reward: &[f64], omega: &[f64]) -> Result<Vec<f64>> {
    check_aggregate(mode, per_reward, omega)?;
    Ok(match mode {
        LossMode::Late | LossMode::Early => omega.to_vec(),
        LossMode::Stch { mu } => {
            let z: Vec<f64> = per_reward.iter().zip(omega).map(|(l, w)| l * w / mu).collect();
            let top = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - top).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().zip(omega).map(|(e, w)| w * e / s).collect()
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossModeName {
    Late,
    Early,
    Stch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MorlConfig {
    pub group_size: usize,
    pub eps_clip: f64,
    pub beta: f64,
    pub lambda_kl: f64,
    pub ema_decay: f64,
    pub loss_mode: LossModeName,
    pub stch_mu: f64,
    pub inner_epochs: usize,
    pub timesteps_per_sample: usize,
    pub prompts_per_step: usize,
    pub prompt_pool: usize,
    /// Independently drawn preferences per prompt; each gets
    /// `group_size / subgroups` samples.
    pub subgroups: usize,
    /// Euler steps used to generate training groups.
    pub sample_steps: usize,
    pub adv_eps: f64,
    /// Trains a single-preference baseline: every group uses this ω and the
    /// network ignores its preference input.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_omega: Option<PreferenceVector>,
}

impl Default for MorlConfig {
    fn default() -> Self {
        Self {
            group_size: 32,
            eps_clip: 5.0,
            beta: 0.1,
            lambda_kl: 0.01,
            ema_decay: 0.9,
            loss_mode: LossModeName::Late,
            stch_mu: 0.1,
            inner_epochs: 1,
            timesteps_per_sample: 4,
            prompts_per_step: 8,
            prompt_pool: 64,
            subgroups: 1,
            sample_steps: 32,
            adv_eps: ADV_EPS,
            fixed_omega: None,
        }
    }
}

impl MorlConfig {
    pub fn loss_mode(&self) -> LossMode {
        match self.loss_mode {
            LossModeName::Late => LossMode::Late,
            LossModeName::Early => LossMode::Early,
            LossModeName::Stch => LossMode::Stch { mu: self.stch_mu },
        }
    }

    pub fn conditioning(&self) -> Conditioning {
        if self.fixed_omega.is_some() {
            Conditioning::Bypass
        } else {
            Conditioning::On
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.eps_clip > 0.0) {
            return bad(format!("eps_clip={} must be positive", self.eps_clip));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta={} must lie in (0, 1)", self.beta));
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return bad(format!("ema_decay={} outside [0, 1]", self.ema_decay));
        }
        if !(self.lambda_kl >= 0.0 && self.lambda_kl.is_finite()) {
            return bad(format!("lambda_kl={} must be finite and non-negative", self.lambda_kl));
        }
        if self.loss_mode == LossModeName::Stch && !(self.stch_mu > 0.0) {
            return bad(format!("stch_mu={} must be positive", self.stch_mu));
        }
        if self.subgroups == 0 || !self.group_size.is_multiple_of(self.subgroups) {
            return bad(format!(
                "group_size {} is not divisible into {} subgroups",
                self.group_size, self.subgroups
            ));
        }
        if self.group_size / self.subgroups < 2 {
            return bad("each subgroup needs at least 2 samples".into());
        }
        if self.inner_epochs == 0
            || self.timesteps_per_sample == 0
            || self.prompts_per_step == 0
            || self.prompt_pool == 0
            || self.sample_steps == 0
        {
            return bad("epochs, timesteps, prompts, pool and sample_steps must be positive".into());
        }
        if !(self.adv_eps >= 0.0) {
            return bad("adv_eps must be non-negative".into());
        }
        Ok(())
    }
}

/// The trained network, its lagged copy defining the implicit targets, and
/// the frozen warm start used for regularization.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTriple {
    pub current: ConditionedVelocityNet,
    pub old: ConditionedVelocityNet,
    pub reference: ConditionedVelocityNet,
}

impl PolicyTriple {
    pub fn from_pretrained(net: ConditionedVelocityNet) -> Self {
        Self {
            current: net.clone(),
            old: net.clone(),
            reference: net,
        }
    }

    pub fn check(&self) -> Result<()> {
        for n in [&self.current, &self.old, &self.reference] {
            n.check()?;
        }
        if self.current.config != self.old.config || self.current.config != self.reference.config {
            return Err(Error::Incompatible("policy triple mixes architectures".into()));
        }
        Ok(())
    }
}

/// Everything the loss needs for one group, fixed before the update.
#[derive(Debug, Clone)]
pub struct GroupBatch {
    pub x_t: Tensor,
    pub t: Vec<f64>,
    pub target: Tensor,
    /// Preference fed to the network, one row per batch row.
    pub omega_rows: Tensor,
    /// `[rows, C]` interpolation weights; C = M, or 1 in early mode.
    pub rho: Tensor,
    /// Aggregation weights, length C.
    pub weights: Vec<f64>,
    pub v_old: Tensor,
    pub v_ref: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossParts {
    pub per_reward: Vec<f64>,
    pub nft: f64,
    pub kl: f64,
    pub total: f64,
}

struct Objective<'a> {
    mode: LossMode,
    beta: f64,
    lambda_kl: f64,
    batch: &'a GroupBatch,
}

impl Objective<'_> {
    fn parts(&self, v_theta: &Tensor) -> Result<(LossParts, Tensor)> {
        let b = self.batch;
        let rows = v_theta.rows() as f64;
        let (plus, minus) = implicit_velocities(&b.v_old, v_theta, self.beta)?;
        let c = b.rho.cols();
        let mut per_reward = vec![0.0; c];
        let mut kl = 0.0;
        for i in 0..v_theta.rows() {
            for (m, l) in per_reward.iter_mut().enumerate() {
                *l += nft_loss_per_reward(b.rho.row(i)[m], plus.row(i), minus.row(i), b.target.row(i))?;
            }
            kl += kl_loss(v_theta.row(i), b.v_ref.row(i))?;
        }
        per_reward.iter_mut().for_each(|l| *l /= rows);
        kl /= rows;
        let nft = aggregate_losses(self.mode, &per_reward, &b.weights)?;
        let total = nft + self.lambda_kl * kl;

        let agg = aggregate_weights(self.mode, &per_reward, &b.weights)?;
        let mut upstream = Tensor::zeros(v_theta.shape());
        for i in 0..v_theta.rows() {
            let (p, n, v, th, r) = (plus.row(i), minus.row(i), b.target.row(i), v_theta.row(i), b.v_ref.row(i));
            let rho = b.rho.row(i);
            let g = upstream.row_mut(i);
            for j in 0..g.len() {
                let mut s = 0.0;
                for m in 0..c {
                    s += agg[m] * (rho[m] * (p[j] - v[j]) - (1.0 - rho[m]) * (n[j] - v[j]));
                }
                g[j] = (2.0 * self.beta * s + 2.0 * self.lambda_kl * (th[j] - r[j])) / rows;
            }
        }
        Ok((
            LossParts {
                per_reward,
                nft,
                kl,
                total,
            },
            upstream,
        ))
    }
}

/// Loss of `current` on a fixed group batch.
pub fn group_loss(
    current: &ConditionedVelocityNet,
    batch: &GroupBatch,
    cfg: &MorlConfig,
) -> Result<LossParts> {
    let v = current.forward_batch(&batch.x_t, &batch.t, &batch.omega_rows, cfg.conditioning())?;
    objective(cfg, batch).parts(&v).map(|(p, _)| p)
}

/// Loss and its exact parameter gradient.
pub fn group_loss_and_grad(
    current: &ConditionedVelocityNet,
    batch: &GroupBatch,
    cfg: &MorlConfig,
) -> Result<(LossParts, ConditionedVelocityNet)> {
    let (v, cache) = current.forward_cached(&batch.x_t, &batch.t, &batch.omega_rows, cfg.conditioning())?;
    let (parts, upstream) = objective(cfg, batch).parts(&v)?;
    Ok((parts, current.backward(&cache, &upstream)?))
}

fn objective<'a>(cfg: &MorlConfig, batch: &'a GroupBatch) -> Objective<'a> {
    Objective {
        mode: cfg.loss_mode(),
        beta: cfg.beta,
        lambda_kl: cfg.lambda_kl,
        batch,
    }
}

/// One group of samples sharing a prompt and a preference.
#[derive(Debug, Clone)]
pub struct SampleGroup {
    pub prompt_id: u64,
    pub omega: PreferenceVector,
    pub samples: Tensor,
    pub rewards: Tensor,
}

impl SampleGroup {
    pub fn mean_reward(&self) -> Vec<f64> {
        let k = self.rewards.rows() as f64;
        self.rewards.sum_rows().into_iter().map(|s| s / k).collect()
    }
}

/// Interpolation weights and aggregation weights for a scored group.
pub fn group_rho(group: &SampleGroup, cfg: &MorlConfig) -> Result<(Tensor, Vec<f64>)> {
    let k = group.rewards.rows();
    match cfg.loss_mode() {
        LossMode::Early => {
            let a = early_scalarized_advantages(&group.rewards, &group.omega, cfg.adv_eps)?;
            let rho = a.iter().map(|&a| rho_map(a, cfg.eps_clip)).collect();
            Ok((Tensor::new(vec![k, 1], rho)?, vec![1.0]))
        }
        LossMode::Late | LossMode::Stch { .. } => {
            let mut a = per_channel_advantages(&group.rewards, cfg.adv_eps)?;
            a.data_mut().iter_mut().for_each(|v| *v = rho_map(*v, cfg.eps_clip));
            Ok((a, group.omega.weights().to_vec()))
        }
    }
}

/// Keyed draws for a whole run.
#[derive(Debug, Clone)]
pub struct TrainContext<'a> {
    pub cfg: &'a MorlConfig,
    pub pref: PrefSampleConfig,
    pub registry: &'a [RewardSpec],
    pub seed: u64,
}

/// One JSONL record: a single group's update within an outer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepLog {
    pub step: u64,
    pub prompt_id: u64,
    pub omega: Vec<f64>,
    pub mean_reward: Vec<f64>,
    pub loss_nft: f64,
    pub loss_kl: f64,
    pub loss_total: f64,
}

impl TrainContext<'_> {
    fn validate(&self, triple: &PolicyTriple) -> Result<()> {
        self.cfg.validate()?;
        self.pref.validate()?;
        triple.check()?;
        let m = triple.current.config.omega_dim;
        if self.registry.len() != m || self.pref.m != m {
            return Err(Error::Incompatible(format!(
                "{} rewards, {}-D preferences and a {m}-D conditioned net",
                self.registry.len(),
                self.pref.m
            )));
        }
        if let Some(w) = &self.cfg.fixed_omega {
            if w.dim() != m {
                return Err(Error::Config(format!("fixed_omega has {} weights, expected {m}", w.dim())));
            }
        }
        Ok(())
    }

    /// Draws and scores every group of outer step `step`.
    pub fn generate(&self, net: &ConditionedVelocityNet, step: u64) -> Result<Vec<SampleGroup>> {
        let cfg = self.cfg;
        let d = net.config.data_dim;
        let m = net.config.omega_dim;
        let per = cfg.group_size / cfg.subgroups;
        let mut groups = Vec::new();
        for p in 0..cfg.prompts_per_step as u64 {
            let prompt_id = (step * cfg.prompts_per_step as u64 + p) % cfg.prompt_pool as u64;
            for j in 0..cfg.subgroups as u64 {
                let omega = match &cfg.fixed_omega {
                    Some(w) => w.clone(),
                    None => sample_preference(&self.pref, prompt_id * cfg.subgroups as u64 + j, step)?,
                };
                let key = rng::derive_seed(self.seed, &[domain::GENERATION, step, prompt_id, j]);
                let noise: Vec<f64> = (0..per as u64).flat_map(|i| sample_noise(key, i, d)).collect();
                let omegas = Tensor::new(vec![per, m], omega.weights().repeat(per))?;
                let samples = sample_batch(
                    net,
                    &omegas,
                    Tensor::new(vec![per, d], noise)?,
                    cfg.sample_steps,
                    cfg.conditioning(),
                )?;
                let rewards: Vec<f64> = (0..per)
                    .flat_map(|i| evaluate_vector(self.registry, samples.row(i)).0)
                    .collect();
                if rewards.iter().any(|r| !r.is_finite()) {
                    continue;
                }
                groups.push(SampleGroup {
                    prompt_id,
                    omega,
                    samples,
                    rewards: Tensor::new(vec![per, m], rewards)?,
                });
            }
        }
        Ok(groups)
    }

    /// Noised training rows for a group, with old and reference outputs.
    pub fn build_batch(&self, triple: &PolicyTriple, group: &SampleGroup, step: u64, epoch: u64) -> Result<GroupBatch> {
        let cfg = self.cfg;
        let d = triple.current.config.data_dim;
        let m = triple.current.config.omega_dim;
        let (rho_k, weights) = group_rho(group, cfg)?;
        let tps = cfg.timesteps_per_sample;
        let rows = group.samples.rows() * tps;
        let mut r = rng::stream(
            self.seed,
            &[domain::NOISING, step, epoch, group.prompt_id, group.omega_key()],
        );
        let mut xs = Vec::with_capacity(rows * d);
        let mut vs = Vec::with_capacity(rows * d);
        let mut ts = Vec::with_capacity(rows);
        let mut rho = Vec::with_capacity(rows * rho_k.cols());
        for i in 0..group.samples.rows() {
            for _ in 0..tps {
                let t: f64 = r.random();
                let xi = standard_normal(d, &mut r);
                let (xt, v) = forward_noise(group.samples.row(i), &xi, t)?;
                xs.extend(xt);
                vs.extend(v);
                ts.push(t);
                rho.extend_from_slice(rho_k.row(i));
            }
        }
        let x_t = Tensor::new(vec![rows, d], xs)?;
        let omega_rows = Tensor::new(vec![rows, m], group.omega.weights().repeat(rows))?;
        let v_old = triple.old.forward_batch(&x_t, &ts, &omega_rows, cfg.conditioning())?;
        let v_ref = triple.reference.forward_batch(&x_t, &ts, &omega_rows, Conditioning::Bypass)?;
        Ok(GroupBatch {
            x_t,
            t: ts,
            target: Tensor::new(vec![rows, d], vs)?,
            omega_rows,
            rho: Tensor::new(vec![rows, rho_k.cols()], rho)?,
            weights,
            v_old,
            v_ref,
        })
    }

    /// One outer iteration: snapshot the old policy, generate and score the
    /// groups, take one optimizer step per group per inner epoch, then pull
    /// the old policy toward the result.
    pub fn train_step(&self, triple: &mut PolicyTriple, opt: &mut OptState, step: u64) -> Result<Vec<StepLog>> {
        self.validate(triple)?;
        triple.old = triple.current.clone();
        let groups = self.generate(&triple.old, step)?;
        let mut logs: Vec<StepLog> = groups
            .iter()
            .map(|g| StepLog {
                step,
                prompt_id: g.prompt_id,
                omega: g.omega.weights().to_vec(),
                mean_reward: g.mean_reward(),
                loss_nft: 0.0,
                loss_kl: 0.0,
                loss_total: 0.0,
            })
            .collect();
        for epoch in 0..self.cfg.inner_epochs as u64 {
            for (g, log) in groups.iter().zip(logs.iter_mut()) {
                let batch = self.build_batch(triple, g, step, epoch)?;
                let (parts, grads) = group_loss_and_grad(&triple.current, &batch, self.cfg)?;
                if !parts.total.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        step,
                        detail: format!("prompt {} ω={:?}: {parts:?}", g.prompt_id, g.omega.weights()),
                    });
                }
                opt.step(&mut triple.current, &grads)?;
                log.loss_nft = parts.nft;
                log.loss_kl = parts.kl;
                log.loss_total = parts.total;
            }
        }
        ema_update(&mut triple.old, &triple.current, self.cfg.ema_decay)?;
        Ok(logs)
    }
}

impl SampleGroup {
    fn omega_key(&self) -> u64 {
        rng::derive_seed(0, &self.omega.weights().iter().map(|w| w.to_bits()).collect::<Vec<_>>())
    }
}

/// Mean per-channel reward of `n` samples under `omega`.
pub fn mean_reward(
    net: &ConditionedVelocityNet,
    registry: &[RewardSpec],
    omega: &PreferenceVector,
    n: usize,
    n_steps: usize,
    seed: u64,
    cond: Conditioning,
) -> Result<(Tensor, Vec<f64>)> {
    let x = crate::flowpolicy::sample_many(net, omega, n, n_steps, seed, cond)?;
    let mut mean = vec![0.0; registry.len()];
    for i in 0..n {
        for (acc, r) in mean.iter_mut().zip(evaluate_vector(registry, x.row(i)).0) {
            *acc += r;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    Ok((x, mean))
}

/// Parameter-space distance helper for tests and diagnostics.
pub fn param_distance<P: Params>(a: &P, b: &P) -> f64 {
    a.flat().iter().zip(b.flat()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
