use paretoslider_core::checkpoint::{Checkpoint, Phase};
use paretoslider_core::config::RunConfig;
use paretoslider_core::runner::{evaluate_checkpoint, finetune, pretrain, samples_csv};
use paretoslider_core::simplex::sample_preference;
use paretoslider_core::Error;
use proptest::prelude::*;

fn tiny() -> RunConfig {
    RunConfig::from_toml_str(
        "seed = 9\n[model]\nhidden = [16, 16]\nprojector_hidden = [8]\n\
         [pretrain]\nsteps = 15\nbatch_size = 32\n[finetune]\nsteps = 4\n\
         [morl]\ngroup_size = 4\nprompts_per_step = 2\nsample_steps = 4\n\
         [eval]\nsample_steps = 4\nsamples = 8\n",
    )
    .unwrap()
}

#[test]
fn config_survives_a_toml_round_trip() {
    let cfg = tiny();
    let again = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(cfg.to_toml_string(), again.to_toml_string());
}

#[test]
fn checkpoints_round_trip_byte_for_byte() {
    let (ck, report) = pretrain(&tiny()).unwrap();
    assert_eq!(ck.phase, Phase::Pretrained);
    assert_eq!(report.losses.len(), 15);
    let bytes = ck.to_bytes();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    assert_eq!(back.id(), ck.id());
}

#[test]
fn corrupt_bytes_are_reported_as_corrupt() {
    let (ck, _) = pretrain(&tiny()).unwrap();
    let text = String::from_utf8(ck.to_bytes()).unwrap();
    let cut = &text[..text.len() / 2];
    assert!(matches!(Checkpoint::from_bytes(cut.as_bytes()), Err(Error::Corrupt(_))));
}

#[test]
fn split_finetune_matches_a_single_run() {
    let cfg = tiny();
    let (base, _) = pretrain(&cfg).unwrap();
    let mut whole_log = Vec::new();
    let whole = finetune(&cfg, &base, None, |l| {
        whole_log.push(serde_json::to_string(l).unwrap());
        Ok(())
    })
    .unwrap();
    let mut split_log = Vec::new();
    let half = finetune(&cfg, &base, Some(2), |l| {
        split_log.push(serde_json::to_string(l).unwrap());
        Ok(())
    })
    .unwrap();
    assert_eq!(half.step, 2);
    let done = finetune(&cfg, &half, None, |l| {
        split_log.push(serde_json::to_string(l).unwrap());
        Ok(())
    })
    .unwrap();
    assert_eq!(done.to_bytes(), whole.to_bytes());
    assert_eq!(split_log, whole_log);
    assert_eq!(whole_log.len(), 4 * 2);
}

#[test]
fn evaluation_sweeps_the_grid() {
    let (ck, _) = pretrain(&tiny()).unwrap();
    let ev = evaluate_checkpoint(&ck, 4, 6, Some("base")).unwrap();
    assert_eq!(ev.report.method, "base");
    assert_eq!(ev.report.points.len(), 4);
    assert_eq!(ev.report.nondominated_mask.len(), 4);
    assert_eq!(samples_csv(&ev).lines().count(), 1 + 4 * 6);
}

#[test]
fn mismatched_architecture_is_incompatible() {
    let (base, _) = pretrain(&tiny()).unwrap();
    let mut wider = tiny();
    wider.model.hidden = vec![32, 32];
    assert!(matches!(finetune(&wider, &base, None, |_| Ok(())), Err(Error::Incompatible(_))));
}

proptest! {
    #[test]
    fn preferences_are_reproducible_points_of_the_simplex(prompt in 0u64..10_000, step in 0u64..10_000) {
        let cfg = tiny().pref_config();
        let a = sample_preference(&cfg, prompt, step).unwrap();
        let b = sample_preference(&cfg, prompt, step).unwrap();
        prop_assert_eq!(a.weights(), b.weights());
        prop_assert!(a.weights().iter().all(|w| *w >= 0.0));
        prop_assert!((a.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
