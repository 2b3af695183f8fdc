//! Pareto dominance, non-dominated filtering, pooled min-max normalization
//! and the hypervolume indicator (origin reference, maximization).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

/// Mean rewards of one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontPoint {
    pub values: Vec<f64>,
    pub label: String,
    /// Preference the point was generated under, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<f64>>,
}

impl FrontPoint {
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Self {
        Self {
            values,
            label: label.into(),
            omega: None,
        }
    }
}

impl AsRef<[f64]> for FrontPoint {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// `a` is ≥ `b` everywhere and > somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("dominance between {}-D and {}-D points", a.len(), b.len())));
    }
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return Ok(false);
        }
        strict |= x > y;
    }
    Ok(strict)
}

/// `true` for points no other point dominates. Equal points never dominate
/// each other, so duplicates share a fate.
///
/// Points are visited in lexicographically descending order; a dominator
/// always precedes what it dominates in that order, and dominance is
/// transitive, so each point only needs checking against the survivors.
pub fn nondominated_filter<V: AsRef<[f64]>>(points: &[V]) -> Result<Vec<bool>> {
    let dim = points.first().map_or(0, |p| p.as_ref().len());
    if points.iter().any(|p| p.as_ref().len() != dim) {
        return Err(Error::Shape("points differ in dimension".into()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (points[i].as_ref(), points[j].as_ref());
        b.iter()
            .zip(a)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut mask = vec![false; points.len()];
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        let p = points[i].as_ref();
        let mut dominated = false;
        for &f in &front {
            if dominates(points[f].as_ref(), p)? {
                dominated = true;
                break;
            }
        }
        if !dominated {
            mask[i] = true;
            front.push(i);
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelRange {
    pub min: f64,
    pub max: f64,
    /// Set when `max == min`; such channels map to 0.5.
    pub degenerate: bool,
}

impl ChannelRange {
    pub fn apply(&self, v: f64) -> f64 {
        if self.degenerate {
            0.5
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub points: Vec<Vec<f64>>,
    pub ranges: Vec<ChannelRange>,
}

pub fn channel_ranges<V: AsRef<[f64]>>(points: &[V]) -> Result<Vec<ChannelRange>> {
    if points.len() < 2 {
        return Err(Error::Shape(format!(
            "min-max normalization needs at least 2 points, got {}",
            points.len()
        )));
    }
    let dim = points[0].as_ref().len();
    if points.iter().any(|p| p.as_ref().len() != dim) {
        return Err(Error::Shape("points differ in dimension".into()));
    }
    Ok((0..dim)
        .map(|c| {
            let (min, max) = points.iter().map(|p| p.as_ref()[c]).fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), v| (lo.min(v), hi.max(v)),
            );
            ChannelRange {
                min,
                max,
                degenerate: max <= min,
            }
        })
        .collect())
}

/// Affine map of every channel onto [0, 1] using the pooled min and max.
pub fn minmax_normalize<V: AsRef<[f64]>>(points: &[V]) -> Result<Normalized> {
    let ranges = channel_ranges(points)?;
    let points = points
        .iter()
        .map(|p| p.as_ref().iter().zip(&ranges).map(|(v, r)| r.apply(*v)).collect())
        .collect();
    Ok(Normalized { points, ranges })
}

/// Exact 2-D hypervolume against the origin. Dominated points are dropped
/// first; the rest are swept by descending first coordinate.
pub fn hypervolume_2d<V: AsRef<[f64]>>(points: &[V]) -> Result<f64> {
    if let Some(p) = points.iter().find(|p| p.as_ref().len() != 2) {
        return Err(Error::Shape(format!(
            "hypervolume_2d needs 2-D points, got {}-D (use hypervolume_mc)",
            p.as_ref().len()
        )));
    }
    let mask = nondominated_filter(points)?;
    let mut front: Vec<[f64; 2]> = points
        .iter()
        .zip(&mask)
        .filter(|(_, &k)| k)
        .map(|(p, _)| {
            let p = p.as_ref();
            [p[0].max(0.0), p[1].max(0.0)]
        })
        .collect();
    front.sort_by(|a, b| b[0].total_cmp(&a[0]));
    let mut area = 0.0;
    let mut covered_y = 0.0_f64;
    for [x, y] in front {
        if y > covered_y {
            area += x * (y - covered_y);
            covered_y = y;
        }
    }
    Ok(area)
}

/// Monte Carlo hypervolume in `[0, 1]^M`: the fraction of uniform samples
/// dominated (weakly) by at least one point, with its binomial standard
/// error.
pub fn hypervolume_mc<V: AsRef<[f64]>>(points: &[V], n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    if points.is_empty() || n_samples == 0 {
        return Ok((0.0, 0.0));
    }
    let dim = points[0].as_ref().len();
    let mask = nondominated_filter(points)?;
    let front: Vec<&[f64]> = points
        .iter()
        .zip(&mask)
        .filter(|(_, &k)| k)
        .map(|(p, _)| p.as_ref())
        .collect();
    let mut r = rng::stream(seed, &[dim as u64, n_samples as u64]);
    let mut u = vec![0.0; dim];
    let mut hits = 0usize;
    for _ in 0..n_samples {
        u.iter_mut().for_each(|v| *v = r.random::<f64>());
        if front.iter().any(|p| p.iter().zip(&u).all(|(a, b)| a >= b)) {
            hits += 1;
        }
    }
    let p = hits as f64 / n_samples as f64;
    Ok((p, (p * (1.0 - p) / n_samples as f64).sqrt()))
}

/// Samples used when a report needs the hypervolume of M > 2 points.
pub const MC_SAMPLES: usize = 1_000_000;

/// Exact for M = 2, Monte Carlo (fixed seed) otherwise.
pub fn hypervolume<V: AsRef<[f64]>>(points: &[V]) -> Result<f64> {
    match points.first().map(|p| p.as_ref().len()) {
        None => Ok(0.0),
        Some(2) => hypervolume_2d(points),
        Some(_) => hypervolume_mc(points, MC_SAMPLES, 0).map(|(v, _)| v),
    }
}

/// Evaluation of one method: its operating points plus dominance and
/// hypervolume after min-max normalization over those same points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontReport {
    pub method: String,
    pub channel_names: Vec<String>,
    pub points: Vec<FrontPoint>,
    pub nondominated_mask: Vec<bool>,
    pub hypervolume: f64,
    pub normalization: Vec<ChannelRange>,
}

impl FrontReport {
    /// A single point (or a set of coincident ones) has no spread to
    /// normalize over; such reports get a zero-volume degenerate range.
    pub fn build(method: &str, channel_names: Vec<String>, points: Vec<FrontPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Shape("a front report needs at least one point".into()));
        }
        if points.iter().any(|p| p.values.len() != channel_names.len()) {
            return Err(Error::Shape("point dimension differs from channel count".into()));
        }
        if points.iter().any(|p| p.values.iter().any(|v| !v.is_finite())) {
            return Err(Error::Shape("front points must be finite".into()));
        }
        let nondominated_mask = nondominated_filter(&points)?;
        let (hypervolume, normalization) = if points.len() >= 2 {
            let n = minmax_normalize(&points)?;
            (hypervolume(&n.points)?, n.ranges)
        } else {
            let ranges = points[0]
                .values
                .iter()
                .map(|&v| ChannelRange {
                    min: v,
                    max: v,
                    degenerate: true,
                })
                .collect();
            (hypervolume(&[vec![0.5; channel_names.len()]])?, ranges)
        };
        Ok(Self {
            method: method.into(),
            channel_names,
            points,
            nondominated_mask,
            hypervolume,
            normalization,
        })
    }

    pub fn nondominated_count(&self) -> usize {
        self.nondominated_mask.iter().filter(|&&k| k).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: String,
    pub hypervolume: f64,
    pub non_dominated: usize,
    pub points: usize,
}

/// Pooled comparison: one normalization over every method's points, one
/// pooled dominance filter, then per-method hypervolume over that method's
/// surviving points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareTable {
    pub channel_names: Vec<String>,
    pub normalization: Vec<ChannelRange>,
    pub rows: Vec<CompareRow>,
    /// Pooled non-dominated flags, per method, in input point order.
    pub pooled_mask: Vec<Vec<bool>>,
}

/// Each entry is one method: a label and the reports whose points it owns.
pub fn compare(methods: &[(String, Vec<FrontReport>)]) -> Result<CompareTable> {
    let names = methods
        .iter()
        .flat_map(|(_, r)| r.iter())
        .map(|r| &r.channel_names)
        .next()
        .ok_or_else(|| Error::Mismatch("nothing to compare".into()))?
        .clone();
    for (label, reports) in methods {
        if reports.is_empty() {
            return Err(Error::Mismatch(format!("method '{label}' has no reports")));
        }
        if let Some(r) = reports.iter().find(|r| r.channel_names != names) {
            return Err(Error::Mismatch(format!(
                "method '{label}' reports channels {:?}, expected {names:?}",
                r.channel_names
            )));
        }
    }
    let per_method: Vec<Vec<&FrontPoint>> = methods
        .iter()
        .map(|(_, rs)| rs.iter().flat_map(|r| r.points.iter()).collect())
        .collect();
    let pooled: Vec<&[f64]> = per_method
        .iter()
        .flatten()
        .map(|p| p.values.as_slice())
        .collect();
    let norm = minmax_normalize(&pooled)?;
    let mask = nondominated_filter(&norm.points)?;

    let mut rows = Vec::with_capacity(methods.len());
    let mut pooled_mask = Vec::with_capacity(methods.len());
    let mut offset = 0;
    for ((label, _), pts) in methods.iter().zip(&per_method) {
        let idx = offset..offset + pts.len();
        offset += pts.len();
        let kept: Vec<&Vec<f64>> = idx
            .clone()
            .filter(|&i| mask[i])
            .map(|i| &norm.points[i])
            .collect();
        rows.push(CompareRow {
            method: label.clone(),
            hypervolume: hypervolume(&kept)?,
            non_dominated: kept.len(),
            points: pts.len(),
        });
        pooled_mask.push(mask[idx].to_vec());
    }
    Ok(CompareTable {
        channel_names: names,
        normalization: norm.ranges,
        rows,
        pooled_mask,
    })
}
