//! Versioned JSON checkpoints. Parameters are stored per tensor as base64
//! little-endian f64 blobs, so a save → load → save cycle is byte-identical.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::flowpolicy::{ConditionedVelocityNet, NetConfig};
use crate::morl::PolicyTriple;
use crate::numcore::{AdamWConfig, OptState, Params, Tensor};
use crate::rng::PRNG_ALGORITHM;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrained,
    Finetuned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerBlob {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<String>,
    pub v: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub prng: String,
    pub phase: Phase,
    /// Completed steps of `phase`.
    pub step: u64,
    pub config: RunConfig,
    pub net: NetConfig,
    pub current: Vec<NamedTensor>,
    pub old: Vec<NamedTensor>,
    pub reference: Vec<NamedTensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerBlob>,
}

fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(text: &str, expected: usize, what: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Corrupt(format!("{what}: bad base64 ({e})")))?;
    if bytes.len() != expected * 8 {
        return Err(Error::Corrupt(format!(
            "{what}: {} bytes, expected {}",
            bytes.len(),
            expected * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Tensor names in [`Params`] order.
pub fn param_names(net: &ConditionedVelocityNet) -> Vec<String> {
    let mut names = Vec::new();
    for (prefix, mlp) in [("trunk", &net.trunk), ("projector", &net.cond_projector)] {
        for i in 0..mlp.layers.len() {
            names.push(format!("{prefix}.{i}.weight"));
            names.push(format!("{prefix}.{i}.bias"));
        }
    }
    names.extend((0..net.gates.len()).map(|i| format!("gate.{i}")));
    names
}

fn pack(net: &ConditionedVelocityNet) -> Vec<NamedTensor> {
    param_names(net)
        .into_iter()
        .zip(net.tensors())
        .map(|(name, t)| NamedTensor {
            name,
            shape: t.shape().to_vec(),
            data: encode(t.data()),
        })
        .collect()
}

fn unpack(config: &NetConfig, blobs: &[NamedTensor], which: &str) -> Result<ConditionedVelocityNet> {
    let mut net = ConditionedVelocityNet::new(config.clone(), 0).map_err(|e| Error::Corrupt(e.to_string()))?;
    let names = param_names(&net);
    if blobs.len() != names.len() {
        return Err(Error::Corrupt(format!(
            "{which}: {} tensors, architecture needs {}",
            blobs.len(),
            names.len()
        )));
    }
    for ((t, blob), name) in net.tensors_mut().into_iter().zip(blobs).zip(&names) {
        if &blob.name != name || blob.shape != t.shape() {
            return Err(Error::Corrupt(format!(
                "{which}: tensor {} {:?} where {name} {:?} was expected",
                blob.name,
                blob.shape,
                t.shape()
            )));
        }
        let values = decode(&blob.data, t.len(), &format!("{which}.{name}"))?;
        *t = Tensor::new(blob.shape.clone(), values)?;
    }
    Ok(net)
}

impl Checkpoint {
    pub fn new(
        config: &RunConfig,
        phase: Phase,
        step: u64,
        triple: &PolicyTriple,
        opt: Option<&OptState>,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            prng: PRNG_ALGORITHM.into(),
            phase,
            step,
            config: config.clone(),
            net: triple.current.config.clone(),
            current: pack(&triple.current),
            old: pack(&triple.old),
            reference: pack(&triple.reference),
            optimizer: opt.map(|o| OptimizerBlob {
                config: o.config,
                step: o.step,
                m: o.m.iter().map(|v| encode(v)).collect(),
                v: o.v.iter().map(|v| encode(v)).collect(),
            }),
        }
    }

    pub fn policy(&self) -> Result<PolicyTriple> {
        Ok(PolicyTriple {
            current: unpack(&self.net, &self.current, "current")?,
            old: unpack(&self.net, &self.old, "old")?,
            reference: unpack(&self.net, &self.reference, "reference")?,
        })
    }

    pub fn optimizer_state(&self) -> Result<Option<OptState>> {
        let Some(blob) = &self.optimizer else {
            return Ok(None);
        };
        let layout = unpack(&self.net, &self.current, "current")?;
        let sizes: Vec<usize> = layout.tensors().iter().map(|t| t.len()).collect();
        if blob.m.len() != sizes.len() || blob.v.len() != sizes.len() {
            return Err(Error::Corrupt("optimizer moment count differs from parameters".into()));
        }
        let read = |blobs: &[String], tag: &str| -> Result<Vec<Vec<f64>>> {
            blobs
                .iter()
                .zip(&sizes)
                .enumerate()
                .map(|(i, (b, &n))| decode(b, n, &format!("optimizer.{tag}.{i}")))
                .collect()
        };
        Ok(Some(OptState {
            config: blob.config,
            m: read(&blob.m, "m")?,
            v: read(&blob.v, "v")?,
            step: blob.step,
        }))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("checkpoint serializes");
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::Corrupt(format!("not valid JSON: {e}")))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Incompatible(format!(
                    "checkpoint format {v}, this build reads {FORMAT_VERSION}"
                )))
            }
            None => return Err(Error::Corrupt("missing format_version".into())),
        }
        let ck: Self = serde_json::from_value(value).map_err(|e| Error::Corrupt(e.to_string()))?;
        if ck.prng != PRNG_ALGORITHM {
            return Err(Error::Incompatible(format!(
                "checkpoint uses PRNG {}, this build uses {PRNG_ALGORITHM}",
                ck.prng
            )));
        }
        ck.net.validate().map_err(|e| Error::Corrupt(e.to_string()))?;
        ck.policy()?;
        ck.optimizer_state()?;
        Ok(ck)
    }

    /// First 16 hex digits of the SHA-256 of the serialized checkpoint.
    pub fn id(&self) -> String {
        let digest = Sha256::digest(self.to_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Corrupt(format!("cannot read checkpoint {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
