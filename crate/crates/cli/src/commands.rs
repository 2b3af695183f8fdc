//! `pretrain`, `finetune`, `eval` and `compare`.
//!
//! Every command resolves its output locations the same way: an explicit
//! `--out` wins, then `PARETOSLIDER_OUT_DIR`, then the config's `out_dir`.

use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use paretoslider_core::checkpoint::{Checkpoint, Phase};
use paretoslider_core::config::RunConfig;
use paretoslider_core::pareto::{compare, CompareTable, FrontReport};
use paretoslider_core::runner::{self, Evaluation};
use paretoslider_core::Error;
use serde::Serialize;

use crate::{CliError, CliResult};

fn create_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    create_parent(path)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

fn json_line(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string(value).expect("log record serializes");
    s.push('\n');
    s
}

/// `foo/bar.json` → `foo/bar.jsonl`.
pub fn log_path_for(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("jsonl")
}

fn load_config(path: &Path, seed: Option<u64>) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub final_loss: Option<f64>,
}

/// Writes the warm-start checkpoint and its loss curve
/// (`{"step":..,"loss":..}` per line).
pub fn cmd_pretrain(config: &Path, seed: Option<u64>, out: Option<&Path>) -> CliResult<PretrainOutcome> {
    let cfg = load_config(config, seed)?;
    let path = out.map_or_else(|| Path::new(&cfg.resolved_out_dir()).join("pretrained.json"), Path::to_path_buf);
    info!("pretraining {} steps (seed {})", cfg.pretrain.steps, cfg.seed);
    let (ck, report) = runner::pretrain(&cfg)?;
    ck.save(&path)?;

    #[derive(Serialize)]
    struct LossLine {
        step: usize,
        loss: f64,
    }
    let log = log_path_for(&path);
    let mut text = String::new();
    for (step, &loss) in report.losses.iter().enumerate() {
        text.push_str(&json_line(&LossLine { step, loss }));
    }
    write_file(&log, text.as_bytes())?;
    let final_loss = report.tail_mean(100);
    if let Some(l) = final_loss {
        info!("final flow-matching loss (last 100 steps) {l:.5}");
    }
    info!("wrote {} ({})", path.display(), ck.id());
    Ok(PretrainOutcome {
        checkpoint: path,
        log,
        final_loss,
    })
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub step: u64,
}

/// Runs the fine-tuning loop on top of `base`. Without `config` the run
/// uses the configuration stored in the checkpoint. Resuming from a
/// fine-tuned checkpoint appends to the existing log.
pub fn cmd_finetune(
    config: Option<&Path>,
    base: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
    until: Option<u64>,
) -> CliResult<FinetuneOutcome> {
    let base = Checkpoint::load(base)?;
    let cfg = match config {
        Some(p) => load_config(p, seed)?,
        None => {
            let mut c = base.config.clone();
            if let Some(s) = seed {
                c.seed = s;
            }
            c
        }
    };
    let path = out.map_or_else(|| Path::new(&cfg.resolved_out_dir()).join("finetuned.json"), Path::to_path_buf);
    let log = log_path_for(&path);
    create_parent(&log)?;
    let file = if base.phase == Phase::Finetuned {
        OpenOptions::new().create(true).append(true).open(&log)?
    } else {
        File::create(&log)?
    };
    let mut writer = BufWriter::new(file);
    info!(
        "fine-tuning from step {} to {} ({:?} loss)",
        if base.phase == Phase::Finetuned { base.step } else { 0 },
        until.map_or(cfg.finetune.steps, |u| u.min(cfg.finetune.steps)),
        cfg.morl.loss_mode
    );
    let ck = runner::finetune(&cfg, &base, until, |l| {
        writer.write_all(json_line(l).as_bytes())?;
        if l.step % 25 == 0 && l.prompt_id % cfg.morl.prompts_per_step as u64 == 0 {
            info!("step {} omega {:?} mean reward {:?}", l.step, l.omega, l.mean_reward);
        }
        Ok(())
    })?;
    writer.flush()?;
    ck.save(&path)?;
    info!("wrote {} ({}) and {}", path.display(), ck.id(), log.display());
    Ok(FinetuneOutcome {
        checkpoint: path,
        log,
        step: ck.step,
    })
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report_path: PathBuf,
    pub samples_path: PathBuf,
    pub evaluation: Evaluation,
}

/// Writes `front.json` and `samples.csv` into `out`.
pub fn cmd_eval(
    checkpoint: &Path,
    grid_k: Option<usize>,
    samples: Option<usize>,
    seed: Option<u64>,
    out: Option<&Path>,
    method: Option<&str>,
) -> CliResult<EvalOutcome> {
    let mut ck = Checkpoint::load(checkpoint)?;
    if let Some(s) = seed {
        ck.config.seed = s;
    }
    let grid_k = grid_k.unwrap_or(ck.config.eval.grid_k);
    let n = samples.unwrap_or(ck.config.eval.samples);
    if grid_k < 2 || n == 0 {
        return Err(Error::Config("--grid-k must be at least 2 and --samples positive".into()).into());
    }
    let dir = out.map_or_else(|| PathBuf::from(ck.config.resolved_out_dir()), Path::to_path_buf);
    let evaluation = runner::evaluate_checkpoint(&ck, grid_k, n, method)?;
    let report_path = dir.join("front.json");
    let samples_path = dir.join("samples.csv");
    let mut json = serde_json::to_vec_pretty(&evaluation.report).expect("report serializes");
    json.push(b'\n');
    write_file(&report_path, &json)?;
    write_file(&samples_path, runner::samples_csv(&evaluation).as_bytes())?;
    info!(
        "{} points, {} non-dominated, HV {:.4}",
        evaluation.report.points.len(),
        evaluation.report.nondominated_count(),
        evaluation.report.hypervolume
    );
    Ok(EvalOutcome {
        report_path,
        samples_path,
        evaluation,
    })
}

/// One `compare` operand: `LABEL=a.json,b.json` groups several reports
/// under one method; a bare path is its own method named by the report.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareSpec {
    pub label: Option<String>,
    pub paths: Vec<PathBuf>,
}

impl std::str::FromStr for CompareSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (label, rest) = match s.split_once('=') {
            Some((l, r)) if !l.is_empty() => (Some(l.to_string()), r),
            Some(_) => return Err(format!("empty label in '{s}'")),
            None => (None, s),
        };
        let paths: Vec<PathBuf> = rest.split(',').filter(|p| !p.is_empty()).map(PathBuf::from).collect();
        if paths.is_empty() {
            return Err(format!("no report paths in '{s}'"));
        }
        Ok(Self { label, paths })
    }
}

fn load_report(path: &Path) -> CliResult<FrontReport> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read report {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::Config(format!("{} is not a front report: {e}", path.display())).into())
}

pub fn cmd_compare(specs: &[CompareSpec], out: Option<&Path>) -> CliResult<CompareTable> {
    let total: usize = specs.iter().map(|s| s.paths.len()).sum();
    if total < 2 {
        return Err(CliError::Usage("compare needs at least two reports".into()));
    }
    let mut methods = Vec::with_capacity(specs.len());
    for spec in specs {
        let reports = spec.paths.iter().map(|p| load_report(p)).collect::<CliResult<Vec<_>>>()?;
        let label = spec.label.clone().unwrap_or_else(|| reports[0].method.clone());
        methods.push((label, reports));
    }
    let table = compare(&methods)?;
    if let Some(path) = out {
        let mut json = serde_json::to_vec_pretty(&table).expect("table serializes");
        json.push(b'\n');
        write_file(path, &json)?;
    }
    Ok(table)
}

/// Fixed-width text rendering of a comparison.
pub fn render_table(table: &CompareTable) -> String {
    let width = table.rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
    let mut s = format!("{:<width$}  {:>10}  {:>8}  {:>6}\n", "method", "HV", "non-dom", "points");
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>10.6}  {:>8}  {:>6}",
            r.method, r.hypervolume, r.non_dominated, r.points
        );
    }
    s
}
