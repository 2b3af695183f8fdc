use std::path::{Path, PathBuf};
use std::process::Command;

use paretoslider_cli::commands::{cmd_compare, cmd_eval, cmd_finetune, cmd_pretrain, log_path_for, CompareSpec};
use paretoslider_cli::CliError;
use paretoslider_core::checkpoint::{Checkpoint, Phase};
use paretoslider_core::morl::StepLog;
use paretoslider_core::pareto::FrontReport;
use tempfile::TempDir;

const TINY: &str = r#"
seed = 3

[model]
hidden = [16, 16]
projector_hidden = [8]

[pretrain]
steps = 20
batch_size = 32

[finetune]
steps = 3

[morl]
group_size = 4
prompts_per_step = 2
sample_steps = 4

[eval]
sample_steps = 4
samples = 8
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_paretoslider"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn pretrain_writes_checkpoint_and_loss_curve() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "run.toml", TINY);
    let out = dir.path().join("ck/pre.json");
    let o = cmd_pretrain(&cfg, None, Some(&out)).unwrap();
    let ck = Checkpoint::load(&o.checkpoint).unwrap();
    assert_eq!(ck.phase, Phase::Pretrained);
    assert_eq!(ck.step, 20);
    let curve = std::fs::read_to_string(log_path_for(&out)).unwrap();
    assert_eq!(curve.lines().count(), 20);
    let first: serde_json::Value = serde_json::from_str(curve.lines().next().unwrap()).unwrap();
    assert_eq!(first["step"], 0);
    assert!(first["loss"].as_f64().unwrap() > 0.0);
}

#[test]
fn point_mass_warm_start_drives_the_loss_down() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "pm.toml",
        "[pretrain]\nsteps = 1500\nbatch_size = 128\ntarget = { kind = \"point_mass\", at = [0.5, -0.25] }\n\
         [model]\nhidden = [64, 64]\n",
    );
    let o = cmd_pretrain(&cfg, None, Some(&dir.path().join("pm.json"))).unwrap();
    let curve = std::fs::read_to_string(&o.log).unwrap();
    let first: serde_json::Value = serde_json::from_str(curve.lines().next().unwrap()).unwrap();
    let loss = o.final_loss.unwrap();
    assert!(loss < 0.05 * first["loss"].as_f64().unwrap(), "final loss {loss}");
}

#[test]
fn zero_step_pretrain_is_the_initialization() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "z.toml", &TINY.replace("steps = 20", "steps = 0"));
    let a = cmd_pretrain(&cfg, None, Some(&dir.path().join("a.json"))).unwrap();
    let ck = Checkpoint::load(&a.checkpoint).unwrap();
    let p = ck.policy().unwrap();
    assert_eq!(p.current, p.reference);
    assert_eq!(ck.step, 0);
}

#[test]
fn finetune_is_deterministic_and_logs_every_group() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "run.toml", TINY);
    let base = cmd_pretrain(&cfg, None, Some(&dir.path().join("base.json"))).unwrap();
    let a = cmd_finetune(Some(&cfg), &base.checkpoint, None, Some(&dir.path().join("a.json")), None).unwrap();
    let b = cmd_finetune(Some(&cfg), &base.checkpoint, None, Some(&dir.path().join("b.json")), None).unwrap();
    assert_eq!(std::fs::read(&a.checkpoint).unwrap(), std::fs::read(&b.checkpoint).unwrap());
    let la = std::fs::read_to_string(&a.log).unwrap();
    assert_eq!(la, std::fs::read_to_string(&b.log).unwrap());
    assert_eq!(la.lines().count(), 3 * 2);
    for line in la.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        let mut keys = keys;
        keys.sort_unstable();
        assert_eq!(
            keys,
            ["loss_kl", "loss_nft", "loss_total", "mean_reward", "omega", "prompt_id", "step"]
        );
        let _: StepLog = serde_json::from_str(line).unwrap();
    }
}

#[test]
fn interrupted_finetune_resumes_to_the_same_bytes() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "run.toml", TINY);
    let base = cmd_pretrain(&cfg, None, Some(&dir.path().join("base.json"))).unwrap();
    let full = cmd_finetune(None, &base.checkpoint, None, Some(&dir.path().join("full.json")), None).unwrap();
    let split = dir.path().join("split.json");
    let half = cmd_finetune(None, &base.checkpoint, None, Some(&split), Some(1)).unwrap();
    assert_eq!(half.step, 1);
    let done = cmd_finetune(None, &split, None, Some(&split), None).unwrap();
    assert_eq!(done.step, 3);
    assert_eq!(std::fs::read(&full.checkpoint).unwrap(), std::fs::read(&split).unwrap());
    assert_eq!(
        std::fs::read_to_string(&full.log).unwrap(),
        std::fs::read_to_string(&done.log).unwrap()
    );
}

#[test]
fn eval_writes_report_and_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "run.toml", TINY);
    let base = cmd_pretrain(&cfg, None, Some(&dir.path().join("base.json"))).unwrap();
    let o = cmd_eval(&base.checkpoint, Some(5), Some(6), None, Some(&dir.path().join("ev")), None).unwrap();
    let report: FrontReport = serde_json::from_slice(&std::fs::read(&o.report_path).unwrap()).unwrap();
    assert_eq!(report.points.len(), 5);
    assert_eq!(report.points[0].label, "omega=(1.000,0.000)");
    let csv = std::fs::read_to_string(&o.samples_path).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "omega_index,x,y,r_1,r_2");
    assert_eq!(csv.lines().count(), 1 + 5 * 6);
}

#[test]
fn untrained_policy_gives_near_identical_points() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "run.toml", &TINY.replace("steps = 20", "steps = 0"));
    let base = cmd_pretrain(&cfg, None, Some(&dir.path().join("base.json"))).unwrap();
    let o = cmd_eval(&base.checkpoint, Some(5), Some(64), None, Some(dir.path()), None).unwrap();
    let pts = &o.evaluation.report.points;
    for p in pts {
        for (a, b) in p.values.iter().zip(&pts[0].values) {
            assert!((a - b).abs() < 5e-2, "{:?} vs {:?}", p.values, pts[0].values);
        }
    }
}

#[test]
fn compare_against_itself_gives_identical_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "run.toml", TINY);
    let base = cmd_pretrain(&cfg, None, Some(&dir.path().join("base.json"))).unwrap();
    let ev = cmd_eval(&base.checkpoint, Some(5), Some(16), None, Some(dir.path()), None).unwrap();
    let p = ev.report_path.display().to_string();
    let specs: Vec<CompareSpec> = [format!("A={p}"), format!("B={p}")].iter().map(|s| s.parse().unwrap()).collect();
    let out = dir.path().join("table.json");
    let table = cmd_compare(&specs, Some(&out)).unwrap();
    assert_eq!(table.rows[0].hypervolume, table.rows[1].hypervolume);
    assert_eq!(table.rows[0].non_dominated, table.rows[1].non_dominated);
    assert!(out.exists());
}

#[test]
fn compare_spec_parsing() {
    let s: CompareSpec = "fixed=a.json,b.json".parse().unwrap();
    assert_eq!(s.label.as_deref(), Some("fixed"));
    assert_eq!(s.paths.len(), 2);
    let s: CompareSpec = "c.json".parse().unwrap();
    assert_eq!(s.label, None);
    assert!("=a.json".parse::<CompareSpec>().is_err());
    assert!("x=".parse::<CompareSpec>().is_err());
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = TempDir::new().unwrap();

    let missing = bin()
        .args(["pretrain", "--config"])
        .arg(dir.path().join("nope.toml"))
        .status()
        .unwrap();
    assert_eq!(missing.code(), Some(2));

    let bad = write(dir.path(), "bad.toml", "[morl]\nbogus_key = 1\n");
    let out = bin().args(["pretrain", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let cfg = write(dir.path(), "run.toml", TINY);
    let base = dir.path().join("base.json");
    let st = bin()
        .args(["pretrain", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&base)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));

    let wider = write(dir.path(), "wide.toml", &TINY.replace("hidden = [16, 16]", "hidden = [16, 16, 16]"));
    let st = bin()
        .args(["finetune", "--config"])
        .arg(&wider)
        .arg("--checkpoint")
        .arg(&base)
        .arg("--out")
        .arg(dir.path().join("ft.json"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(3));

    let junk = write(dir.path(), "junk.json", "{\"format_version\": 1, \"prng\": 7}");
    let st = bin().args(["eval", "--checkpoint"]).arg(&junk).status().unwrap();
    assert_eq!(st.code(), Some(4));

    let ev = cmd_eval(&base, Some(3), Some(4), None, Some(&dir.path().join("e")), None).unwrap();
    let mut renamed: serde_json::Value = serde_json::from_slice(&std::fs::read(&ev.report_path).unwrap()).unwrap();
    renamed["channel_names"] = serde_json::json!(["left", "right"]);
    let other = write(dir.path(), "other.json", &renamed.to_string());
    let st = bin().arg("compare").arg(&ev.report_path).arg(&other).status().unwrap();
    assert_eq!(st.code(), Some(5));
}

#[test]
fn out_dir_env_overrides_the_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "run.toml", &TINY.replace("steps = 20", "steps = 2"));
    let target = dir.path().join("from_env");
    let st = bin()
        .args(["pretrain", "--config"])
        .arg(&cfg)
        .env("PARETOSLIDER_OUT_DIR", &target)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(target.join("pretrained.json").exists());
}

#[test]
fn too_few_reports_is_a_usage_error() {
    let spec: CompareSpec = "a.json".parse().unwrap();
    let err = cmd_compare(&[spec], None).unwrap_err();
    assert!(matches!(err, CliError::Usage(_)));
    assert_eq!(err.exit_code(), 2);
}
