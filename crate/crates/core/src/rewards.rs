//! Analytic reward channels over generated points.

use serde::{Deserialize, Serialize};

use crate::simplex::PreferenceVector;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardKind {
    /// `−‖x − anchor‖²`
    NegSqDist { anchor: Vec<f64> },
    /// `−sharpness · (‖x‖ − radius)²`
    Ring { radius: f64, sharpness: f64 },
    /// `⟨x, direction⟩`
    Axis { direction: Vec<f64> },
}

fn unit_scale() -> f64 {
    1.0
}

fn is_unit(s: &f64) -> bool {
    *s == 1.0
}

/// Unknown keys are rejected by the flattened [`RewardKind`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: RewardKind,
    /// Positive multiplier on the channel (used to build mismatched scales).
    #[serde(default = "unit_scale", skip_serializing_if = "is_unit")]
    pub scale: f64,
}

/// One reward value per registry channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardVector(pub Vec<f64>);

impl RewardSpec {
    pub fn neg_sq_dist(name: &str, anchor: &[f64]) -> Self {
        Self {
            name: name.into(),
            kind: RewardKind::NegSqDist {
                anchor: anchor.to_vec(),
            },
            scale: 1.0,
        }
    }

    pub fn scaled(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn validate(&self, data_dim: usize) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match &self.kind {
            RewardKind::NegSqDist { anchor } => anchor.len() == data_dim && finite(anchor),
            RewardKind::Ring { radius, sharpness } => radius.is_finite() && sharpness.is_finite(),
            RewardKind::Axis { direction } => direction.len() == data_dim && finite(direction),
        };
        if !ok || !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::Config(format!(
                "reward '{}' has invalid parameters for {data_dim}-D data",
                self.name
            )));
        }
        Ok(())
    }
}

pub fn evaluate(spec: &RewardSpec, x0: &[f64]) -> f64 {
    let raw = match &spec.kind {
        RewardKind::NegSqDist { anchor } => -x0
            .iter()
            .zip(anchor)
            .map(|(x, a)| (x - a) * (x - a))
            .sum::<f64>(),
        RewardKind::Ring { radius, sharpness } => {
            let r = x0.iter().map(|x| x * x).sum::<f64>().sqrt();
            -sharpness * (r - radius) * (r - radius)
        }
        RewardKind::Axis { direction } => x0.iter().zip(direction).map(|(x, d)| x * d).sum(),
    };
    spec.scale * raw
}

pub fn evaluate_vector(registry: &[RewardSpec], x0: &[f64]) -> RewardVector {
    RewardVector(registry.iter().map(|s| evaluate(s, x0)).collect())
}

/// Maximizer of `Σ ω_m r_m` for a registry of (scaled) squared-distance
/// rewards: `Σ ω_m s_m a_m / Σ ω_m s_m`, i.e. `Σ ω_m a_m` at unit scales.
pub fn analytic_pareto_optimum(registry: &[RewardSpec], omega: &PreferenceVector) -> Result<Vec<f64>> {
    if registry.len() != omega.dim() {
        return Err(Error::Shape(format!(
            "{} rewards but {} preference weights",
            registry.len(),
            omega.dim()
        )));
    }
    let mut anchors = Vec::with_capacity(registry.len());
    for spec in registry {
        match &spec.kind {
            RewardKind::NegSqDist { anchor } => anchors.push((anchor, spec.scale)),
            other => {
                return Err(Error::OracleUnavailable(format!(
                    "no closed-form optimum for reward '{}' ({other:?})",
                    spec.name
                )))
            }
        }
    }
    let dim = anchors.first().map_or(0, |(a, _)| a.len());
    let mut num = vec![0.0; dim];
    let mut den = 0.0;
    for ((anchor, s), w) in anchors.iter().zip(omega.weights()) {
        den += w * s;
        num.iter_mut().zip(anchor.iter()).for_each(|(n, a)| *n += w * s * a);
    }
    Ok(num.into_iter().map(|n| n / den).collect())
}

/// Two anchors at (−1, 0) and (1, 0).
pub fn default_registry() -> Vec<RewardSpec> {
    vec![
        RewardSpec::neg_sq_dist("anchor_left", &[-1.0, 0.0]),
        RewardSpec::neg_sq_dist("anchor_right", &[1.0, 0.0]),
    ]
}

/// The default pair with the second channel multiplied by 100.
pub fn mismatched_scale_registry() -> Vec<RewardSpec> {
    let mut r = default_registry();
    r[1].scale = 100.0;
    r
}
