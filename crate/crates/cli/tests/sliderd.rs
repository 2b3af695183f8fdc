use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use paretoslider_cli::sliderd::{router, validate_omega, SampleResponse, SliderState};
use paretoslider_core::checkpoint::Checkpoint;
use paretoslider_core::config::RunConfig;
use paretoslider_core::pareto::FrontReport;
use paretoslider_core::rewards::evaluate_vector;
use paretoslider_core::runner;
use tower::ServiceExt;

fn tiny_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig { seed, ..RunConfig::default() };
    cfg.model.hidden = vec![16, 16];
    cfg.model.projector_hidden = vec![8];
    cfg.pretrain.steps = 10;
    cfg.pretrain.batch_size = 16;
    cfg.eval.sample_steps = 4;
    cfg.eval.samples = 16;
    cfg
}

fn tiny_checkpoint(seed: u64) -> Checkpoint {
    runner::pretrain(&tiny_config(seed)).unwrap().0
}

async fn call(state: &Arc<SliderState>, method: &str, uri: &str, body: &str) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .header("origin", "http://localhost:5173")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = router(state.clone(), None).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}

#[tokio::test]
async fn everything_but_health_is_unavailable_before_load() {
    let state = SliderState::empty();
    assert_eq!(call(&state, "GET", "/info", "").await.0, StatusCode::SERVICE_UNAVAILABLE);
    let (s, _) = call(&state, "POST", "/sample", r#"{"omega":[1,0],"n":4}"#).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(call(&state, "POST", "/front", "{}").await.0, StatusCode::SERVICE_UNAVAILABLE);
    let (s, body) = call(&state, "GET", "/health", "").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(json(&body)["loaded"], false);
}

#[tokio::test]
async fn info_reports_the_task_and_follows_hot_swaps() {
    let first = tiny_checkpoint(1);
    let state = SliderState::with_checkpoint(&first).unwrap();
    let (s, body) = call(&state, "GET", "/info", "").await;
    assert_eq!(s, StatusCode::OK);
    let info = json(&body);
    assert_eq!(info["m"], 2);
    assert_eq!(info["reward_names"], serde_json::json!(["anchor_left", "anchor_right"]));
    assert_eq!(info["data_dim"], 2);
    assert_eq!(info["conditioning_mode"], "hybrid");
    assert_eq!(info["checkpoint_id"], first.id());

    let second = tiny_checkpoint(2);
    assert_ne!(first.id(), second.id());
    state.swap(&second).unwrap();
    let info = json(&call(&state, "GET", "/info", "").await.1);
    assert_eq!(info["checkpoint_id"], second.id());
}

#[tokio::test]
async fn seeded_samples_are_byte_identical_and_self_consistent() {
    let ck = tiny_checkpoint(4);
    let state = SliderState::with_checkpoint(&ck).unwrap();
    let body = r#"{"omega":[0.25,0.75],"n":32,"seed":11,"steps":8}"#;
    let (s1, a) = call(&state, "POST", "/sample", body).await;
    let (s2, b) = call(&state, "POST", "/sample", body).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a, b);

    let keys: Vec<String> = json(&a).as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys.len(), 4);
    for k in ["points", "mean_reward", "omega", "checkpoint_id"] {
        assert!(keys.iter().any(|x| x == k), "missing {k}");
    }
    let resp: SampleResponse = serde_json::from_slice(&a).unwrap();
    assert_eq!(resp.points.len(), 32);
    assert!(resp.points.iter().all(|p| p.len() == 2));
    assert_eq!(resp.omega, vec![0.25, 0.75]);
    assert_eq!(resp.checkpoint_id, ck.id());
    let registry = ck.config.registry();
    let mut mean = [0.0; 2];
    for p in &resp.points {
        for (m, r) in mean.iter_mut().zip(evaluate_vector(&registry, p).0) {
            *m += r;
        }
    }
    mean.iter_mut().for_each(|m| *m /= 32.0);
    assert_eq!(resp.mean_reward, mean.to_vec());
}

#[tokio::test]
async fn unseeded_requests_vary() {
    let state = SliderState::with_checkpoint(&tiny_checkpoint(5)).unwrap();
    let body = r#"{"omega":[0.5,0.5],"n":8}"#;
    let a = call(&state, "POST", "/sample", body).await.1;
    let b = call(&state, "POST", "/sample", body).await.1;
    assert_ne!(a, b);
}

#[tokio::test]
async fn invalid_requests_are_rejected() {
    let state = SliderState::with_checkpoint(&tiny_checkpoint(6)).unwrap();
    for body in [
        r#"{"omega":[0.5,0.6],"n":4}"#,
        r#"{"omega":[1.1,-0.1],"n":4}"#,
        r#"{"omega":[1.0],"n":4}"#,
        r#"{"omega":[1,0],"n":0}"#,
        r#"{"omega":[1,0],"n":2049}"#,
        r#"{"omega":[1,0],"n":4,"steps":0}"#,
        r#"{"omega":[1,0],"n":4,"colour":"red"}"#,
        r#"{"omega":[1,0]"#,
    ] {
        let (s, resp) = call(&state, "POST", "/sample", body).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{body}");
        assert!(json(&resp)["error"].is_string());
    }
    assert_eq!(call(&state, "POST", "/front", r#"{"grid_k":1}"#).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&state, "POST", "/front", r#"{"n":0}"#).await.0, StatusCode::BAD_REQUEST);
}

#[test]
fn omega_tolerances() {
    assert!(validate_omega(&[1.0 + 5e-4, -5e-7], 2).is_ok());
    assert!(validate_omega(&[1.0, -2e-6], 2).is_err());
    assert!(validate_omega(&[0.5, 0.502], 2).is_err());
    let w = validate_omega(&[0.7005, 0.3], 2).unwrap();
    assert!((w.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[tokio::test]
async fn front_is_cached_per_checkpoint_grid_and_n() {
    let ck = tiny_checkpoint(7);
    let state = SliderState::with_checkpoint(&ck).unwrap();
    let (s, a) = call(&state, "POST", "/front", r#"{"grid_k":5,"n":8}"#).await;
    assert_eq!(s, StatusCode::OK);
    let report: FrontReport = serde_json::from_slice(&a).unwrap();
    assert_eq!(report.points.len(), 5);
    assert!(report.hypervolume.is_finite());
    assert_eq!(state.front_cache_hits(), 0);
    let (_, b) = call(&state, "POST", "/front", r#"{"grid_k":5,"n":8}"#).await;
    assert_eq!(a, b);
    assert_eq!(state.front_cache_hits(), 1);
    call(&state, "POST", "/front", r#"{"grid_k":3,"n":8}"#).await;
    assert_eq!(state.front_cache_hits(), 1);
    let (s, _) = call(&state, "POST", "/front", "").await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn cors_headers_are_present() {
    let state = SliderState::with_checkpoint(&tiny_checkpoint(8)).unwrap();
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/sample")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .header("access-control-request-headers", "content-type")
        .body(Body::empty())
        .unwrap();
    let resp = router(state, None).oneshot(req).await.unwrap();
    assert!(resp.headers().contains_key("access-control-allow-origin"));
}

#[tokio::test]
async fn trained_vertex_sample_lands_on_its_anchor() {
    let cfg = RunConfig::default();
    let (base, _) = runner::pretrain(&cfg).unwrap();
    let ck = runner::finetune(&cfg, &base, None, |_| Ok(())).unwrap();
    let state = SliderState::with_checkpoint(&ck).unwrap();
    let started = std::time::Instant::now();
    let (s, body) = call(&state, "POST", "/sample", r#"{"omega":[1,0],"n":256,"seed":0}"#).await;
    let elapsed = started.elapsed();
    assert_eq!(s, StatusCode::OK);
    let resp: SampleResponse = serde_json::from_slice(&body).unwrap();
    let mx = resp.points.iter().map(|p| p[0]).sum::<f64>() / 256.0;
    let my = resp.points.iter().map(|p| p[1]).sum::<f64>() / 256.0;
    let dist = ((mx + 1.0).powi(2) + my.powi(2)).sqrt();
    assert!(dist < 0.2, "mean ({mx:.3}, {my:.3}) is {dist:.3} from (-1, 0)");
    assert!(elapsed.as_secs_f64() < 1.0, "n=256 took {elapsed:?}");
}
