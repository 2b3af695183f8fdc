use paretoslider_core::config::RunConfig;
use paretoslider_core::pareto::FrontReport;
use paretoslider_core::runner;
use paretoslider_web::Demo;

fn checkpoint_json() -> String {
    let mut cfg = RunConfig::default();
    cfg.model.hidden = vec![16, 16];
    cfg.model.projector_hidden = vec![8];
    cfg.pretrain.steps = 10;
    cfg.pretrain.batch_size = 16;
    cfg.eval.sample_steps = 4;
    let (ck, _) = runner::pretrain(&cfg).unwrap();
    String::from_utf8(ck.to_bytes()).unwrap()
}

#[test]
fn loads_a_checkpoint_and_describes_it() {
    let demo = Demo::from_json(&checkpoint_json()).unwrap();
    assert_eq!(demo.reward_names(), ["anchor_left", "anchor_right"]);
    assert_eq!(demo.omega_dim(), 2);
    assert_eq!(demo.checkpoint_id().len(), 16);
}

#[test]
fn sampling_is_seeded_and_flat() {
    let demo = Demo::from_json(&checkpoint_json()).unwrap();
    let a = demo.sample(&[0.3, 0.7], 10, 0, 5).unwrap();
    assert_eq!(a.len(), 20);
    assert_eq!(a, demo.sample(&[0.3, 0.7], 10, 0, 5).unwrap());
    assert_ne!(a, demo.sample(&[0.3, 0.7], 10, 0, 6).unwrap());
    let mean = demo.mean_reward(&a).unwrap();
    let by_hand: f64 = a.chunks(2).map(|p| -((p[0] + 1.0).powi(2) + p[1].powi(2))).sum::<f64>() / 10.0;
    assert!((mean[0] - by_hand).abs() < 1e-12);
    assert!(demo.mean_reward(&a[..3]).is_err());
}

#[test]
fn optimum_interpolates_the_anchors() {
    let demo = Demo::from_json(&checkpoint_json()).unwrap();
    let o = demo.optimum(&[0.75, 0.25]).unwrap();
    assert!((o[0] + 0.5).abs() < 1e-12 && o[1].abs() < 1e-12);
}

#[test]
fn front_sweep_is_a_report() {
    let demo = Demo::from_json(&checkpoint_json()).unwrap();
    let report: FrontReport = serde_json::from_str(&demo.front_json(5, 8, 0).unwrap()).unwrap();
    assert_eq!(report.points.len(), 5);
}

#[test]
fn rejects_garbage() {
    assert!(Demo::from_json("{}").is_err());
    assert!(Demo::from_json("not json").is_err());
}
