//! Run configuration: a TOML file with one table per phase. Every key is
//! optional; omitted keys take the preset of the chosen `task`.
//!
//! ```toml
//! task = "default"          # or "mismatched_scale"
//! seed = 0
//! out_dir = "runs/default"
//!
//! [model]
//! hidden = [128, 128, 128]
//! mode = "hybrid"           # input_concat | film_residual | time_embed_add | hybrid
//!
//! [pretrain]
//! steps = 2000
//! target = { kind = "gaussian", mean = [0.0, 0.0], std = 0.6 }
//!
//! [finetune]
//! steps = 300
//!
//! [morl]
//! loss_mode = "late"        # late | early | stch
//! lambda_kl = 0.006
//!
//! [preference]
//! p_vertex = 0.2
//!
//! [eval]
//! grid_k = 5
//! samples = 512
//!
//! [[rewards]]               # replaces the task's registry when present
//! name = "anchor_left"
//! kind = "neg_sq_dist"
//! anchor = [-1.0, 0.0]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::flowpolicy::{ConditioningMode, NetConfig, PretrainConfig, TargetDistribution};
use crate::morl::MorlConfig;
use crate::numcore::{Activation, AdamWConfig};
use crate::rewards::{default_registry, mismatched_scale_registry, RewardSpec};
use crate::rng::{self, domain};
use crate::simplex::PrefSampleConfig;
use crate::{Error, Result};

/// Environment variable that overrides `out_dir`.
pub const OUT_DIR_ENV: &str = "PARETOSLIDER_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Two squared-distance rewards anchored at (−1, 0) and (1, 0).
    Default,
    /// The default pair with the second channel scaled by 100.
    MismatchedScale,
}

impl Task {
    pub fn registry(self) -> Vec<RewardSpec> {
        match self {
            Task::Default => default_registry(),
            Task::MismatchedScale => mismatched_scale_registry(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub mode: ConditioningMode,
    pub projector_hidden: Vec<usize>,
    pub frequencies: usize,
    pub omega_frequencies: usize,
    pub cond_init_std: f64,
    pub concat_dim: usize,
    pub gate_init: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let n = NetConfig::new(2, 2, ConditioningMode::Hybrid);
        Self {
            hidden: n.hidden,
            activation: n.activation,
            mode: n.mode,
            projector_hidden: n.projector_hidden,
            frequencies: n.frequencies,
            omega_frequencies: n.omega_frequencies,
            cond_init_std: n.cond_init_std,
            concat_dim: n.concat_dim,
            gate_init: n.gate_init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub target: TargetDistribution,
    pub optimizer: AdamWConfig,
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 256,
            target: TargetDistribution::Gaussian {
                mean: vec![0.0, 0.0],
                std: 0.6,
            },
            optimizer: AdamWConfig {
                lr: 1e-3,
                ..AdamWConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneSection {
    pub steps: u64,
    pub optimizer: AdamWConfig,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        Self {
            steps: 300,
            optimizer: AdamWConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreferenceSection {
    pub p_vertex: f64,
    pub p_edge: f64,
}

impl Default for PreferenceSection {
    fn default() -> Self {
        Self {
            p_vertex: 0.2,
            p_edge: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub grid_k: usize,
    pub samples: usize,
    pub sample_steps: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            grid_k: 5,
            samples: 512,
            sample_steps: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub out_dir: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rewards: Option<Vec<RewardSpec>>,
    pub model: ModelConfig,
    pub pretrain: PretrainSection,
    pub finetune: FinetuneSection,
    pub morl: MorlConfig,
    pub preference: PreferenceSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::Default,
            seed: 0,
            out_dir: "runs".into(),
            rewards: None,
            model: ModelConfig::default(),
            pretrain: PretrainSection::default(),
            finetune: FinetuneSection::default(),
            morl: MorlConfig {
                lambda_kl: 0.006,
                ..MorlConfig::default()
            },
            preference: PreferenceSection::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Data dimension of every built-in task.
pub const DATA_DIM: usize = 2;

impl RunConfig {
    pub fn preset(task: Task) -> Self {
        Self {
            task,
            ..Self::default()
        }
    }

    /// Parses and validates. Syntax and schema errors carry line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn registry(&self) -> Vec<RewardSpec> {
        self.rewards.clone().unwrap_or_else(|| self.task.registry())
    }

    pub fn net_config(&self) -> NetConfig {
        let m = &self.model;
        NetConfig {
            data_dim: DATA_DIM,
            omega_dim: self.registry().len(),
            hidden: m.hidden.clone(),
            activation: m.activation,
            mode: m.mode,
            projector_hidden: m.projector_hidden.clone(),
            frequencies: m.frequencies,
            omega_frequencies: m.omega_frequencies,
            cond_init_std: m.cond_init_std,
            concat_dim: m.concat_dim,
            gate_init: m.gate_init,
        }
    }

    pub fn init_seed(&self) -> u64 {
        rng::derive_seed(self.seed, &[domain::INIT])
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            steps: self.pretrain.steps,
            batch_size: self.pretrain.batch_size,
            seed: rng::derive_seed(self.seed, &[domain::PRETRAIN]),
        }
    }

    pub fn finetune_seed(&self) -> u64 {
        rng::derive_seed(self.seed, &[domain::GENERATION])
    }

    pub fn pref_config(&self) -> PrefSampleConfig {
        PrefSampleConfig {
            m: self.registry().len(),
            p_vertex: self.preference.p_vertex,
            p_edge: self.preference.p_edge,
            base_seed: rng::derive_seed(self.seed, &[domain::PREFERENCE]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let registry = self.registry();
        if registry.is_empty() {
            return Err(Error::Config("at least one reward is required".into()));
        }
        let mut names: Vec<&str> = registry.iter().map(|r| r.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("reward names must be unique".into()));
        }
        for r in &registry {
            r.validate(DATA_DIM)?;
        }
        self.net_config().validate()?;
        self.morl.validate()?;
        self.pref_config().validate()?;
        if let Some(w) = &self.morl.fixed_omega {
            if w.dim() != registry.len() {
                return Err(Error::Config(format!(
                    "morl.fixed_omega has {} weights for {} rewards",
                    w.dim(),
                    registry.len()
                )));
            }
        }
        use crate::flowpolicy::DataSampler;
        if self.pretrain.target.dim() != DATA_DIM {
            return Err(Error::Config(format!("pretrain.target must be {DATA_DIM}-D")));
        }
        if self.pretrain.batch_size == 0 {
            return Err(Error::Config("pretrain.batch_size must be positive".into()));
        }
        for (name, o) in [("pretrain", &self.pretrain.optimizer), ("finetune", &self.finetune.optimizer)] {
            if !(o.lr > 0.0 && o.lr.is_finite()) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
                return Err(Error::Config(format!("{name}.optimizer has invalid lr or betas")));
            }
        }
        if self.eval.grid_k < 2 || self.eval.samples == 0 || self.eval.sample_steps == 0 {
            return Err(Error::Config("eval needs grid_k >= 2 and positive samples/sample_steps".into()));
        }
        Ok(())
    }

    /// `PARETOSLIDER_OUT_DIR` wins over the file.
    pub fn resolved_out_dir(&self) -> String {
        std::env::var(OUT_DIR_ENV).unwrap_or_else(|_| self.out_dir.clone())
    }
}
