//! Browser slider over a trained checkpoint.
//!
//! [`Demo`] is plain Rust so it can be tested natively; [`Slider`] is the
//! thin `wasm-bindgen` wrapper that `www/index.html` drives.

use paretoslider_core::checkpoint::Checkpoint;
use paretoslider_core::flowpolicy::{sample_many, ConditionedVelocityNet, Conditioning};
use paretoslider_core::rewards::{analytic_pareto_optimum, evaluate_vector, RewardSpec};
use paretoslider_core::runner::{default_method, eval_omegas, evaluate};
use paretoslider_core::simplex::PreferenceVector;
use paretoslider_core::{Error, Result};
use wasm_bindgen::prelude::*;

pub struct Demo {
    id: String,
    config: paretoslider_core::config::RunConfig,
    net: ConditionedVelocityNet,
    registry: Vec<RewardSpec>,
    cond: Conditioning,
}

impl Demo {
    pub fn from_json(text: &str) -> Result<Self> {
        let ck = Checkpoint::from_bytes(text.as_bytes())?;
        Ok(Self {
            id: ck.id(),
            net: ck.policy()?.current,
            registry: ck.config.registry(),
            cond: ck.config.morl.conditioning(),
            config: ck.config,
        })
    }

    pub fn checkpoint_id(&self) -> &str {
        &self.id
    }

    pub fn reward_names(&self) -> Vec<String> {
        self.registry.iter().map(|r| r.name.clone()).collect()
    }

    pub fn omega_dim(&self) -> usize {
        self.registry.len()
    }

    /// `n` samples under `omega`, flattened row-major.
    pub fn sample(&self, omega: &[f64], n: usize, steps: usize, seed: u64) -> Result<Vec<f64>> {
        let w = PreferenceVector::normalized(omega)?;
        let steps = if steps == 0 { self.config.eval.sample_steps } else { steps };
        Ok(sample_many(&self.net, &w, n, steps, seed, self.cond)?.into_data())
    }

    /// Mean reward per channel of flattened points.
    pub fn mean_reward(&self, points: &[f64]) -> Result<Vec<f64>> {
        let d = self.net.config.data_dim;
        if points.is_empty() || !points.len().is_multiple_of(d) {
            return Err(Error::Shape(format!("{} values are not a whole number of {d}-D points", points.len())));
        }
        let n = points.len() / d;
        let mut mean = vec![0.0; self.registry.len()];
        for p in points.chunks_exact(d) {
            for (acc, r) in mean.iter_mut().zip(evaluate_vector(&self.registry, p).0) {
                *acc += r;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n as f64);
        Ok(mean)
    }

    /// Where the scalarized return under `omega` peaks.
    pub fn optimum(&self, omega: &[f64]) -> Result<Vec<f64>> {
        analytic_pareto_optimum(&self.registry, &PreferenceVector::normalized(omega)?)
    }

    /// Front report over a `grid_k` sweep, as JSON.
    pub fn front_json(&self, grid_k: usize, n: usize, steps: usize) -> Result<String> {
        let (omegas, cond) = eval_omegas(&self.config, grid_k)?;
        let steps = if steps == 0 { self.config.eval.sample_steps } else { steps };
        let ev = evaluate(
            &self.net,
            &self.registry,
            &omegas,
            cond,
            n,
            steps,
            self.config.seed,
            &default_method(&self.config),
        )?;
        Ok(serde_json::to_string(&ev.report).expect("report serializes"))
    }
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Slider(Demo);

#[wasm_bindgen]
impl Slider {
    /// Loads a checkpoint written by `paretoslider pretrain` or `finetune`.
    #[wasm_bindgen(constructor)]
    pub fn new(checkpoint_json: &str) -> std::result::Result<Slider, JsError> {
        Demo::from_json(checkpoint_json).map(Slider).map_err(js)
    }

    #[wasm_bindgen(js_name = checkpointId)]
    pub fn checkpoint_id(&self) -> String {
        self.0.checkpoint_id().to_string()
    }

    #[wasm_bindgen(js_name = rewardNames)]
    pub fn reward_names(&self) -> Vec<String> {
        self.0.reward_names()
    }

    pub fn sample(&self, omega: &[f64], n: usize, steps: usize, seed: u64) -> std::result::Result<Vec<f64>, JsError> {
        self.0.sample(omega, n, steps, seed).map_err(js)
    }

    #[wasm_bindgen(js_name = meanReward)]
    pub fn mean_reward(&self, points: &[f64]) -> std::result::Result<Vec<f64>, JsError> {
        self.0.mean_reward(points).map_err(js)
    }

    pub fn optimum(&self, omega: &[f64]) -> std::result::Result<Vec<f64>, JsError> {
        self.0.optimum(omega).map_err(js)
    }

    pub fn front(&self, grid_k: usize, n: usize, steps: usize) -> std::result::Result<String, JsError> {
        self.0.front_json(grid_k, n, steps).map_err(js)
    }
}
