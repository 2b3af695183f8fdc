//! Preference vectors on the probability simplex and the structured
//! vertex/edge/interior distribution used to draw them during training.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::rng::{self, domain};
use crate::{Error, Result};

/// Tolerance on `sum(w) == 1`.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Non-negative weights summing to one: the slider position.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PreferenceVector(Vec<f64>);

impl PreferenceVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Preference("at least one objective is required".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Preference(format!("weight {w} is negative or non-finite")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Preference(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    /// Scales non-negative raw weights onto the simplex.
    pub fn normalized(raw: &[f64]) -> Result<Self> {
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Preference(format!("cannot normalize {raw:?}")));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Preference("all weights are zero".into()));
        }
        Ok(Self(raw.iter().map(|w| w / sum).collect()))
    }

    pub fn vertex(m: usize, i: usize) -> Self {
        let mut w = vec![0.0; m];
        w[i] = 1.0;
        Self(w)
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_vertex(&self) -> bool {
        self.0.iter().filter(|&&w| w == 1.0).count() == 1
    }
}

impl<'de> Deserialize<'de> for PreferenceVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<f64>::deserialize(d)?;
        PreferenceVector::new(raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrefSampleConfig {
    pub m: usize,
    pub p_vertex: f64,
    pub p_edge: f64,
    pub base_seed: u64,
}

impl PrefSampleConfig {
    pub fn new(m: usize, base_seed: u64) -> Self {
        Self {
            m,
            p_vertex: 0.2,
            p_edge: 0.2,
            base_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("preference dimension must be at least 1".into()));
        }
        for (name, p) in [("p_vertex", self.p_vertex), ("p_edge", self.p_edge)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name}={p} is not a probability")));
            }
        }
        if self.p_vertex + self.p_edge > 1.0 {
            return Err(Error::Config("p_vertex + p_edge exceeds 1".into()));
        }
        if self.m < 2 && self.p_edge > 0.0 {
            return Err(Error::Config("edge overrides need at least two objectives".into()));
        }
        Ok(())
    }
}

/// Symmetric Dirichlet(1, ..., 1) via normalized unit exponentials.
fn flat_dirichlet(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Which override (if any) produced a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreferenceBranch {
    Vertex,
    Edge,
    Interior,
}

/// Draws the training preference for `(prompt_id, step)`.
///
/// With probability `p_vertex` a uniformly chosen vertex; with probability
/// `p_edge` (M > 2) a Dir(1,1) mix of two distinct uniformly chosen
/// objectives; otherwise Dir(1,…,1). For M = 2 the edge is the whole
/// simplex, so the edge branch is an interior draw.
pub fn sample_preference(
    cfg: &PrefSampleConfig,
    prompt_id: u64,
    step: u64,
) -> Result<PreferenceVector> {
    sample_preference_with_branch(cfg, prompt_id, step).map(|(w, _)| w)
}

pub fn sample_preference_with_branch(
    cfg: &PrefSampleConfig,
    prompt_id: u64,
    step: u64,
) -> Result<(PreferenceVector, PreferenceBranch)> {
    cfg.validate()?;
    let m = cfg.m;
    let mut r = rng::stream(cfg.base_seed, &[domain::PREFERENCE, prompt_id, step]);
    let u: f64 = r.random();
    if m == 1 {
        return Ok((PreferenceVector::vertex(1, 0), PreferenceBranch::Vertex));
    }
    if u < cfg.p_vertex {
        let i = r.random_range(0..m);
        return Ok((PreferenceVector::vertex(m, i), PreferenceBranch::Vertex));
    }
    if u < cfg.p_vertex + cfg.p_edge && m > 2 {
        let a = r.random_range(0..m);
        let mut b = r.random_range(0..m - 1);
        if b >= a {
            b += 1;
        }
        let mix = flat_dirichlet(2, &mut r);
        let mut w = vec![0.0; m];
        w[a] = mix[0];
        w[b] = mix[1];
        return Ok((PreferenceVector(w), PreferenceBranch::Edge));
    }
    let branch = if u < cfg.p_vertex + cfg.p_edge {
        PreferenceBranch::Edge
    } else {
        PreferenceBranch::Interior
    };
    Ok((PreferenceVector(flat_dirichlet(m, &mut r)), branch))
}

/// Simplex lattice with `k` points per edge, ordered with the first weight
/// descending. For `m = 2` this is `(i/(k-1), 1 - i/(k-1))` from `(1,0)`.
pub fn uniform_grid(m: usize, k: usize) -> Result<Vec<PreferenceVector>> {
    if k < 2 || m == 0 {
        return Err(Error::Config(format!("grid needs m >= 1 and k >= 2 (m={m}, k={k})")));
    }
    let n = k - 1;
    let mut out = Vec::new();
    let mut counts = vec![0usize; m];
    fn rec(pos: usize, left: usize, n: usize, counts: &mut [usize], out: &mut Vec<PreferenceVector>) {
        let m = counts.len();
        if pos == m - 1 {
            counts[pos] = left;
            let w = counts.iter().map(|&c| c as f64 / n as f64).collect();
            out.push(PreferenceVector(w));
            return;
        }
        for c in (0..=left).rev() {
            counts[pos] = c;
            rec(pos + 1, left - c, n, counts, out);
        }
    }
    rec(0, n, n, &mut counts, &mut out);
    Ok(out)
}
