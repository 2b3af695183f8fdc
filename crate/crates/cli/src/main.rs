use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use paretoslider_cli::commands::{self, CompareSpec};
use paretoslider_cli::{sliderd, CliError, CliResult};

/// Preference-conditioned multi-objective fine-tuning on a 2D toy task.
#[derive(Parser)]
#[command(name = "paretoslider", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Flow-matching warm start from a fresh network.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint path (default: <out_dir>/pretrained.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-reward fine-tuning from a pretrained or partially fine-tuned checkpoint.
    Finetune {
        /// Defaults to the configuration stored in the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint path (default: <out_dir>/finetuned.json); the log goes next to it as .jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop after this many outer steps; resume later from the written checkpoint.
        #[arg(long)]
        until: Option<u64>,
    },
    /// Sweep the preference grid and write front.json and samples.csv.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        grid_k: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Method name recorded in the report.
        #[arg(long)]
        method: Option<String>,
    },
    /// Pooled hypervolume table over several reports.
    Compare {
        /// `report.json` or `LABEL=a.json,b.json`.
        #[arg(required = true)]
        reports: Vec<CompareSpec>,
        /// Also write the table as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// HTTP slider service over a checkpoint, reloaded when the file changes.
    Serve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = sliderd::DEFAULT_PORT)]
        port: u16,
        /// Only this origin may call the API from a browser (default: any).
        #[arg(long)]
        allow_origin: Option<String>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Pretrain { config, seed, out } => {
            let o = commands::cmd_pretrain(&config, seed, out.as_deref())?;
            println!("{}", o.checkpoint.display());
        }
        Command::Finetune {
            config,
            checkpoint,
            seed,
            out,
            until,
        } => {
            let o = commands::cmd_finetune(config.as_deref(), &checkpoint, seed, out.as_deref(), until)?;
            println!("{}", o.checkpoint.display());
        }
        Command::Eval {
            checkpoint,
            grid_k,
            samples,
            seed,
            out,
            method,
        } => {
            let o = commands::cmd_eval(&checkpoint, grid_k, samples, seed, out.as_deref(), method.as_deref())?;
            for (p, keep) in o.evaluation.report.points.iter().zip(&o.evaluation.report.nondominated_mask) {
                println!("{}  {:?}{}", p.label, p.values, if *keep { "" } else { "  (dominated)" });
            }
            println!("hypervolume {:.6}", o.evaluation.report.hypervolume);
        }
        Command::Compare { reports, out } => {
            let table = commands::cmd_compare(&reports, out.as_deref())?;
            print!("{}", commands::render_table(&table));
        }
        Command::Serve {
            checkpoint,
            port,
            allow_origin,
        } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(sliderd::serve(checkpoint, port, allow_origin))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            let code: CliError = e;
            ExitCode::from(code.exit_code() as u8)
        }
    }
}
