//! Experiment runner CLI: `train` runs one configuration across its seeds
//! and writes per-run metrics CSVs; `summarise` folds a run directory into
//! a comparison table.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use orthograd::exp::{self, DatasetConfig, RunConfig, RunStatus};
use orthograd::optim::{OptimizerKind, TransformKind};

#[derive(Parser)]
#[command(name = "orthograd", version, about = "Gradient-orthogonalisation training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model under one configuration, one run per seed.
    Train(Box<TrainArgs>),
    /// Summarise a directory of run metrics into a comparison table.
    Summarise(SummariseArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// JSON configuration file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Optimiser: sgdm | adam | lars
    #[arg(long)]
    optimiser: Option<String>,
    /// Gradient transform: identity | orth | norm | colnorm
    #[arg(long)]
    transform: Option<String>,
    /// Leave dense-layer gradients untransformed.
    #[arg(long)]
    skip_dense: bool,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Comma-separated seed list, e.g. 1,2,3
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// CIFAR-10 binary batch directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for metrics CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SummariseArgs {
    /// Directory holding run metrics CSVs.
    #[arg(long = "in")]
    input: PathBuf,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Train(args) => match build_config(*args).and_then(run_train) {
            Ok(()) => ExitCode::SUCCESS,
            Err(err) => {
                eprintln!("error: {err}");
                ExitCode::FAILURE
            }
        },
        Command::Summarise(args) => match exp::summarise(&args.input) {
            Ok(summary) => {
                print!("{}", summary.render());
                ExitCode::SUCCESS
            }
            Err(err) => {
                eprintln!("error: {err}");
                ExitCode::FAILURE
            }
        },
    }
}

fn build_config(args: TrainArgs) -> Result<RunConfig, String> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            RunConfig::from_json(&text).map_err(|e| e.to_string())?
        }
        None => RunConfig::default(),
    };
    if let Some(name) = &args.optimiser {
        config.optimiser =
            OptimizerKind::parse(name).ok_or_else(|| format!("unknown optimiser '{name}'"))?;
    }
    if let Some(name) = &args.transform {
        config.transform =
            TransformKind::parse(name).ok_or_else(|| format!("unknown transform '{name}'"))?;
    }
    if args.skip_dense {
        config.skip_dense = true;
    }
    if let Some(b) = args.batch_size {
        config.batch_size = b;
    }
    if let Some(lr) = args.lr {
        config.hyper.lr = lr;
    }
    if let Some(m) = args.momentum {
        config.hyper.momentum = m;
    }
    if let Some(wd) = args.weight_decay {
        config.hyper.weight_decay = wd;
    }
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(seeds) = args.seeds {
        config.seeds = seeds;
    }
    if let Some(dir) = args.data {
        match &mut config.dataset {
            DatasetConfig::Cifar10 { dir: d, .. } => *d = dir,
            DatasetConfig::Synthetic { .. } => {
                return Err("--data only applies to the cifar10 dataset".into())
            }
        }
    }
    if let Some(out) = args.out {
        config.out_dir = out;
    }
    Ok(config)
}

fn run_train(config: RunConfig) -> Result<(), String> {
    let outcome = exp::run_experiment(&config).map_err(|e| e.to_string())?;
    for run in &outcome.runs {
        let status = match run.status {
            RunStatus::Completed => {
                let (loss, acc) = run.final_val.unwrap_or((f64::NAN, f64::NAN));
                format!("loss {loss:.4}, acc {acc:.2}%, svd {:.1}s", run.svd_total_s)
            }
            RunStatus::Diverged { epoch } => format!("DIVERGED at epoch {epoch}"),
        };
        println!("{} -> {} ({})", run.run_id, status, run.csv_path.display());
    }
    if let Some(mean) = outcome.acc_mean {
        let se = outcome
            .acc_stderr
            .map(|s| format!(" ± {s:.2}"))
            .unwrap_or_default();
        println!(
            "{}: test accuracy {mean:.2}{se} over {} runs ({} diverged)",
            outcome.config_label,
            outcome.runs.len() - outcome.diverged,
            outcome.diverged
        );
    }
    Ok(())
}
