//! HTTP inference over a frozen checkpoint.
//!
//! | route         | body                                   |
//! |---------------|----------------------------------------|
//! | `GET /health` | none                                   |
//! | `GET /info`   | none                                   |
//! | `POST /sample`| `{"omega":[..],"n":N,"seed":S?,"steps":T?}` |
//! | `POST /front` | `{"grid_k":K?,"n":N?}`                 |
//!
//! Handlers only read the loaded snapshot. [`SliderState::swap`] replaces
//! it atomically, so a request sees either the old checkpoint or the new
//! one, never a mix.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use log::{info, warn};
use paretoslider_core::checkpoint::Checkpoint;
use paretoslider_core::config::RunConfig;
use paretoslider_core::flowpolicy::{sample_many, ConditionedVelocityNet, Conditioning};
use paretoslider_core::rewards::{evaluate_vector, RewardSpec};
use paretoslider_core::rng::{self, domain};
use paretoslider_core::runner::{self, default_method};
use paretoslider_core::simplex::PreferenceVector;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub const DEFAULT_PORT: u16 = 8787;
pub const MAX_SAMPLES: usize = 2048;
pub const MAX_STEPS: usize = 1024;
pub const MAX_GRID_K: usize = 101;
/// Slack allowed on a requested preference before it is rejected.
pub const OMEGA_NEG_TOL: f64 = 1e-6;
pub const OMEGA_SUM_TOL: f64 = 1e-3;

/// Everything a handler needs from one checkpoint.
pub struct Loaded {
    pub id: String,
    pub config: RunConfig,
    pub net: ConditionedVelocityNet,
    pub registry: Vec<RewardSpec>,
    pub cond: Conditioning,
    pub phase: String,
    pub step: u64,
}

impl Loaded {
    pub fn from_checkpoint(ck: &Checkpoint) -> paretoslider_core::Result<Self> {
        Ok(Self {
            id: ck.id(),
            config: ck.config.clone(),
            net: ck.policy()?.current,
            registry: ck.config.registry(),
            cond: ck.config.morl.conditioning(),
            phase: serde_json::to_value(ck.phase)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            step: ck.step,
        })
    }
}

type FrontKey = (String, usize, usize);

#[derive(Default)]
pub struct SliderState {
    current: RwLock<Option<Arc<Loaded>>>,
    counter: AtomicU64,
    fronts: Mutex<HashMap<FrontKey, Bytes>>,
    front_hits: AtomicU64,
}

impl SliderState {
    pub fn empty() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn with_checkpoint(ck: &Checkpoint) -> paretoslider_core::Result<Arc<Self>> {
        let s = Self::empty();
        s.swap(ck)?;
        Ok(s)
    }

    /// Installs `ck` and returns its id.
    pub fn swap(&self, ck: &Checkpoint) -> paretoslider_core::Result<String> {
        let loaded = Arc::new(Loaded::from_checkpoint(ck)?);
        let id = loaded.id.clone();
        *self.current.write().expect("state lock") = Some(loaded);
        Ok(id)
    }

    pub fn snapshot(&self) -> Option<Arc<Loaded>> {
        self.current.read().expect("state lock").clone()
    }

    /// Number of `/front` requests answered from the cache.
    pub fn front_cache_hits(&self) -> u64 {
        self.front_hits.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRequest {
    pub omega: Vec<f64>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub points: Vec<Vec<f64>>,
    pub mean_reward: Vec<f64>,
    pub omega: Vec<f64>,
    pub checkpoint_id: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontRequest {
    #[serde(default)]
    pub grid_k: Option<usize>,
    #[serde(default)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoResponse {
    pub checkpoint_id: String,
    pub m: usize,
    pub reward_names: Vec<String>,
    pub data_dim: usize,
    pub conditioning_mode: String,
    pub omega_conditioned: bool,
    pub phase: String,
    pub step: u64,
    pub rewards: Vec<RewardSpec>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn unavailable() -> Self {
        Self {
            status: StatusCode::SERVICE_UNAVAILABLE,
            message: "no checkpoint loaded".into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.message }).to_string();
        (self.status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

fn json_response(bytes: Bytes) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

fn loaded(state: &SliderState) -> Result<Arc<Loaded>, ApiError> {
    state.snapshot().ok_or_else(ApiError::unavailable)
}

/// Checks a requested preference and projects it exactly onto the simplex.
pub fn validate_omega(omega: &[f64], m: usize) -> Result<PreferenceVector, String> {
    if omega.len() != m {
        return Err(format!("omega has {} weights, the checkpoint has {m} rewards", omega.len()));
    }
    if omega.iter().any(|w| !w.is_finite()) {
        return Err("omega must be finite".into());
    }
    if let Some(w) = omega.iter().find(|&&w| w < -OMEGA_NEG_TOL) {
        return Err(format!("omega component {w} is negative"));
    }
    let sum: f64 = omega.iter().sum();
    if (sum - 1.0).abs() > OMEGA_SUM_TOL {
        return Err(format!("omega sums to {sum}, not 1"));
    }
    let clamped: Vec<f64> = omega.iter().map(|w| w.max(0.0)).collect();
    PreferenceVector::normalized(&clamped).map_err(|e| e.to_string())
}

fn parse<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))
}

/// Samples for one request against one snapshot.
pub fn handle_sample(loaded: &Loaded, req: &SampleRequest, seed: u64) -> Result<SampleResponse, ApiError> {
    let omega = validate_omega(&req.omega, loaded.registry.len()).map_err(ApiError::bad_request)?;
    if !(1..=MAX_SAMPLES).contains(&req.n) {
        return Err(ApiError::bad_request(format!("n must be in 1..={MAX_SAMPLES}")));
    }
    let steps = req.steps.unwrap_or(loaded.config.eval.sample_steps);
    if !(1..=MAX_STEPS).contains(&steps) {
        return Err(ApiError::bad_request(format!("steps must be in 1..={MAX_STEPS}")));
    }
    let x = sample_many(&loaded.net, &omega, req.n, steps, seed, loaded.cond)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let points: Vec<Vec<f64>> = (0..x.rows()).map(|i| x.row(i).to_vec()).collect();
    let mut mean = vec![0.0; loaded.registry.len()];
    for p in &points {
        for (acc, r) in mean.iter_mut().zip(evaluate_vector(&loaded.registry, p).0) {
            *acc += r;
        }
    }
    mean.iter_mut().for_each(|v| *v /= points.len() as f64);
    Ok(SampleResponse {
        points,
        mean_reward: mean,
        omega: omega.weights().to_vec(),
        checkpoint_id: loaded.id.clone(),
    })
}

async fn health(State(state): State<Arc<SliderState>>) -> Response {
    let body = serde_json::json!({ "status": "ok", "loaded": state.snapshot().is_some() });
    json_response(Bytes::from(body.to_string()))
}

async fn info_route(State(state): State<Arc<SliderState>>) -> Result<Response, ApiError> {
    let l = loaded(&state)?;
    let mode = serde_json::to_value(l.net.config.mode)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default();
    let info = InfoResponse {
        checkpoint_id: l.id.clone(),
        m: l.registry.len(),
        reward_names: l.registry.iter().map(|r| r.name.clone()).collect(),
        data_dim: l.net.config.data_dim,
        conditioning_mode: mode,
        omega_conditioned: l.cond == Conditioning::On,
        phase: l.phase.clone(),
        step: l.step,
        rewards: l.registry.clone(),
    };
    Ok(json_response(Bytes::from(serde_json::to_vec(&info).expect("info serializes"))))
}

async fn sample_route(State(state): State<Arc<SliderState>>, body: Bytes) -> Result<Response, ApiError> {
    let l = loaded(&state)?;
    let req: SampleRequest = parse(&body)?;
    let seed = match req.seed {
        Some(s) => s,
        None => {
            let k = state.counter.fetch_add(1, Ordering::Relaxed);
            let s = rng::derive_seed(l.config.seed, &[domain::SERVE, k]);
            info!("unseeded /sample request #{k} uses seed {s}");
            s
        }
    };
    let resp = tokio::task::spawn_blocking(move || handle_sample(&l, &req, seed))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(json_response(Bytes::from(serde_json::to_vec(&resp).expect("response serializes"))))
}

async fn front_route(State(state): State<Arc<SliderState>>, body: Bytes) -> Result<Response, ApiError> {
    let l = loaded(&state)?;
    let req: FrontRequest = if body.iter().all(u8::is_ascii_whitespace) {
        FrontRequest::default()
    } else {
        parse(&body)?
    };
    let grid_k = req.grid_k.unwrap_or(l.config.eval.grid_k);
    let n = req.n.unwrap_or(l.config.eval.samples);
    if !(2..=MAX_GRID_K).contains(&grid_k) {
        return Err(ApiError::bad_request(format!("grid_k must be in 2..={MAX_GRID_K}")));
    }
    if !(1..=MAX_SAMPLES).contains(&n) {
        return Err(ApiError::bad_request(format!("n must be in 1..={MAX_SAMPLES}")));
    }
    let key = (l.id.clone(), grid_k, n);
    if let Some(hit) = state.fronts.lock().expect("cache lock").get(&key).cloned() {
        state.front_hits.fetch_add(1, Ordering::Relaxed);
        return Ok(json_response(hit));
    }
    let snapshot = l.clone();
    let bytes = tokio::task::spawn_blocking(move || -> Result<Bytes, ApiError> {
        let (omegas, cond) =
            runner::eval_omegas(&snapshot.config, grid_k).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let ev = runner::evaluate(
            &snapshot.net,
            &snapshot.registry,
            &omegas,
            cond,
            n,
            snapshot.config.eval.sample_steps,
            snapshot.config.seed,
            &default_method(&snapshot.config),
        )
        .map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(Bytes::from(serde_json::to_vec(&ev.report).expect("report serializes")))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    state.fronts.lock().expect("cache lock").insert(key, bytes.clone());
    Ok(json_response(bytes))
}

/// `allow_origin` of `None` admits any origin.
pub fn router(state: Arc<SliderState>, allow_origin: Option<&str>) -> Router {
    let origin = match allow_origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(v) => AllowOrigin::exact(v),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/health", get(health))
        .route("/info", get(info_route))
        .route("/sample", post(sample_route))
        .route("/front", post(front_route))
        .layer(cors)
        .with_state(state)
}

fn file_stamp(path: &Path) -> Option<(SystemTime, u64)> {
    let meta = std::fs::metadata(path).ok()?;
    Some((meta.modified().ok()?, meta.len()))
}

/// Polls `path` and hot-swaps the served checkpoint whenever the file
/// changes. A file that fails to load leaves the current one in place.
pub async fn watch_checkpoint(state: Arc<SliderState>, path: PathBuf, every: Duration) {
    let mut seen = None;
    loop {
        let stamp = file_stamp(&path);
        if stamp.is_some() && stamp != seen {
            match Checkpoint::load(&path).and_then(|ck| state.swap(&ck)) {
                Ok(id) => info!("serving checkpoint {id} from {}", path.display()),
                Err(e) => warn!("keeping previous checkpoint: {e}"),
            }
            seen = stamp;
        }
        tokio::time::sleep(every).await;
    }
}

pub async fn serve(
    checkpoint: Option<PathBuf>,
    port: u16,
    allow_origin: Option<String>,
) -> crate::CliResult<()> {
    let state = SliderState::empty();
    if let Some(path) = &checkpoint {
        if path.exists() {
            let ck = Checkpoint::load(path)?;
            info!("serving checkpoint {}", state.swap(&ck)?);
        } else {
            warn!("{} does not exist yet; answering 503 until it appears", path.display());
        }
        tokio::spawn(watch_checkpoint(state.clone(), path.clone(), Duration::from_secs(2)));
    }
    let app = router(state, allow_origin.as_deref());
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
        .await
        .map_err(|e| crate::CliError::Serve(format!("cannot bind port {port}: {e}")))?;
    info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| crate::CliError::Serve(e.to_string()))
}
