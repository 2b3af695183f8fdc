//! Whole-run drivers shared by the CLI, the slider service and the
//! acceptance suite.

use std::fmt::Write as _;

use crate::checkpoint::{Checkpoint, Phase};
use crate::config::RunConfig;
use crate::flowpolicy::{pretrain_flow_matching, ConditionedVelocityNet, Conditioning, PretrainReport};
use crate::morl::{mean_reward, PolicyTriple, StepLog, TrainContext};
use crate::numcore::{OptState, Tensor};
use crate::pareto::{FrontPoint, FrontReport};
use crate::rewards::{evaluate_vector, RewardSpec};
use crate::rng::{self, domain};
use crate::simplex::{uniform_grid, PreferenceVector};
use crate::{Error, Result};

/// Warm start from a fresh initialization.
pub fn pretrain(cfg: &RunConfig) -> Result<(Checkpoint, PretrainReport)> {
    cfg.validate()?;
    let mut net = ConditionedVelocityNet::new(cfg.net_config(), cfg.init_seed())?;
    let mut opt = OptState::new(cfg.pretrain.optimizer, &net);
    let report = pretrain_flow_matching(&mut net, &cfg.pretrain.target, &cfg.pretrain_config(), &mut opt)?;
    let triple = PolicyTriple::from_pretrained(net);
    let ck = Checkpoint::new(cfg, Phase::Pretrained, cfg.pretrain.steps as u64, &triple, None);
    Ok((ck, report))
}

/// Runs the fine-tuning loop from `base` up to `cfg.finetune.steps` (or
/// `until`, if smaller). A fine-tuned `base` resumes from its step counter
/// and optimizer state. `on_log` sees every log record as it is produced.
pub fn finetune(
    cfg: &RunConfig,
    base: &Checkpoint,
    until: Option<u64>,
    mut on_log: impl FnMut(&StepLog) -> Result<()>,
) -> Result<Checkpoint> {
    cfg.validate()?;
    if base.net != cfg.net_config() {
        return Err(Error::Incompatible(format!(
            "checkpoint architecture {:?} does not match the config's {:?}",
            base.net,
            cfg.net_config()
        )));
    }
    let mut triple = base.policy()?;
    let (start, mut opt) = match (base.phase, base.optimizer_state()?) {
        (Phase::Finetuned, Some(opt)) => (base.step, opt),
        (Phase::Finetuned, None) => {
            return Err(Error::Incompatible("fine-tuned checkpoint lacks optimizer state".into()))
        }
        (Phase::Pretrained, _) => (0, OptState::new(cfg.finetune.optimizer, &triple.current)),
    };
    let registry = cfg.registry();
    let ctx = TrainContext {
        cfg: &cfg.morl,
        pref: cfg.pref_config(),
        registry: &registry,
        seed: cfg.finetune_seed(),
    };
    let end = until.map_or(cfg.finetune.steps, |u| u.min(cfg.finetune.steps));
    for step in start..end {
        for log in ctx.train_step(&mut triple, &mut opt, step)? {
            on_log(&log)?;
        }
    }
    Ok(Checkpoint::new(cfg, Phase::Finetuned, end.max(start), &triple, Some(&opt)))
}

/// Samples and rewards for one evaluated preference.
#[derive(Debug, Clone)]
pub struct OmegaSamples {
    pub omega: PreferenceVector,
    pub points: Tensor,
    pub rewards: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: FrontReport,
    pub samples: Vec<OmegaSamples>,
}

pub fn omega_label(omega: &PreferenceVector) -> String {
    let parts: Vec<String> = omega.weights().iter().map(|w| format!("{w:.3}")).collect();
    format!("omega=({})", parts.join(","))
}

/// Method label used when a report is written without an explicit name.
pub fn default_method(cfg: &RunConfig) -> String {
    match &cfg.morl.fixed_omega {
        Some(w) => format!("fixed {}", omega_label(w)),
        None => "paretoslider".into(),
    }
}

/// The preferences a checkpoint is evaluated at: the simplex grid for a
/// conditioned policy, its single training preference for a fixed one.
pub fn eval_omegas(cfg: &RunConfig, grid_k: usize) -> Result<(Vec<PreferenceVector>, Conditioning)> {
    match &cfg.morl.fixed_omega {
        Some(w) => Ok((vec![w.clone()], Conditioning::Bypass)),
        None => Ok((uniform_grid(cfg.registry().len(), grid_k)?, Conditioning::On)),
    }
}

/// Draws `n_samples` per preference from the current policy. Every
/// preference reuses the same noise, so differences between points come
/// from the conditioning alone.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    net: &ConditionedVelocityNet,
    registry: &[RewardSpec],
    omegas: &[PreferenceVector],
    cond: Conditioning,
    n_samples: usize,
    sample_steps: usize,
    seed: u64,
    method: &str,
) -> Result<Evaluation> {
    if n_samples == 0 {
        return Err(Error::Config("need at least one sample per preference".into()));
    }
    let noise_seed = rng::derive_seed(seed, &[domain::EVAL]);
    let mut points = Vec::with_capacity(omegas.len());
    let mut samples = Vec::with_capacity(omegas.len());
    for omega in omegas {
        let (x, mean) = mean_reward(net, registry, omega, n_samples, sample_steps, noise_seed, cond)?;
        let rewards = (0..x.rows()).map(|i| evaluate_vector(registry, x.row(i)).0).collect();
        points.push(FrontPoint {
            values: mean,
            label: omega_label(omega),
            omega: Some(omega.weights().to_vec()),
        });
        samples.push(OmegaSamples {
            omega: omega.clone(),
            points: x,
            rewards,
        });
    }
    let names = registry.iter().map(|r| r.name.clone()).collect();
    Ok(Evaluation {
        report: FrontReport::build(method, names, points)?,
        samples,
    })
}

/// Evaluates a checkpoint's current policy with its own config.
pub fn evaluate_checkpoint(
    ck: &Checkpoint,
    grid_k: usize,
    n_samples: usize,
    method: Option<&str>,
) -> Result<Evaluation> {
    let cfg = &ck.config;
    let (omegas, cond) = eval_omegas(cfg, grid_k)?;
    let net = ck.policy()?.current;
    let method = method.map_or_else(|| default_method(cfg), str::to_owned);
    evaluate(
        &net,
        &cfg.registry(),
        &omegas,
        cond,
        n_samples,
        cfg.eval.sample_steps,
        cfg.seed,
        &method,
    )
}

/// Raw samples as CSV: `omega_index,x,y,r_1..r_M`.
pub fn samples_csv(eval: &Evaluation) -> String {
    let m = eval.report.channel_names.len();
    let mut out = String::from("omega_index,x,y");
    for i in 1..=m {
        let _ = write!(out, ",r_{i}");
    }
    out.push('\n');
    for (k, s) in eval.samples.iter().enumerate() {
        for (i, r) in s.rewards.iter().enumerate() {
            let p = s.points.row(i);
            let _ = write!(out, "{k},{},{}", p[0], p[1]);
            for v in r {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}
