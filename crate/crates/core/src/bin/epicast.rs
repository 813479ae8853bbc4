//! Batch CLI for the forecasting engine.
//!
//! Exit codes: 0 success, 2 configuration, 3 ingestion/format,
//! 4 numeric/contract, 5 I/O.

use clap::{Args, Parser, Subcommand};
use epicast_core::commands;
use epicast_core::runconfig::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "epicast",
    about = "Multi-modal temporal-graph forecasting for epidemic case counts",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration document (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides out_dir from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated training seeds; overrides the config list.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Comma-separated horizons (days ahead); overrides the config list.
    #[arg(long, value_delimiter = ',')]
    horizon: Option<Vec<usize>>,
    /// Force fully serial, bitwise-reproducible execution. Execution is
    /// always deterministic in this build; the flag pins the contract.
    #[arg(long, default_value_t = true)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic multi-modal dataset files.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Lagged correlation table between signals and case statistics.
    Correlate {
        #[command(flatten)]
        common: Common,
        /// Largest lag (days) to scan.
        #[arg(long, default_value_t = 30)]
        max_lag: usize,
    },
    /// Train one checkpoint per (seed, horizon) pair.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate checkpoints on the held-out test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint files or directories containing *.mglm files.
        #[arg(long, required = true, num_args = 1..)]
        checkpoints: Vec<PathBuf>,
        /// Also evaluate the numerical/regression baselines.
        #[arg(long)]
        with_baselines: bool,
    },
    /// Evaluate only the baselines.
    Baseline {
        #[command(flatten)]
        common: Common,
    },
    /// Node-count ablation for the graph variant.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated node counts, each trained on the first k nodes.
        #[arg(long, value_delimiter = ',', required = true)]
        nodes: Vec<usize>,
    },
}

fn load_config(common: &Common) -> epicast_core::Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seeds) = &common.seed {
        cfg.seeds = seeds.clone();
    }
    if let Some(horizons) = &common.horizon {
        cfg.horizons = horizons.clone();
    }
    cfg.validate()?;
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| {
            epicast_core::Error::Config("no output directory (set --out or out_dir)".into())
        })?;
    Ok((cfg, out))
}

fn expand_checkpoints(paths: &[PathBuf]) -> epicast_core::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().map(|e| e == "mglm").unwrap_or(false))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(epicast_core::Error::Config("no checkpoint files found".into()));
    }
    Ok(out)
}

fn run(cli: Cli) -> epicast_core::Result<()> {
    match cli.command {
        Command::Synth { common } => {
            let (cfg, out) = load_config(&common)?;
            let files = commands::cmd_synth(&cfg, &out)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Correlate { common, max_lag } => {
            let (cfg, out) = load_config(&common)?;
            let path = commands::cmd_correlate(&cfg, &out, max_lag)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Train { common } => {
            let (cfg, out) = load_config(&common)?;
            commands::cmd_train(&cfg, &out)?;
            Ok(())
        }
        Command::Evaluate { common, checkpoints, with_baselines } => {
            let (cfg, out) = load_config(&common)?;
            let files = expand_checkpoints(&checkpoints)?;
            commands::cmd_evaluate(&cfg, &files, &out, with_baselines)
        }
        Command::Baseline { common } => {
            let (cfg, out) = load_config(&common)?;
            commands::cmd_baseline(&cfg, &out)
        }
        Command::Ablate { common, nodes } => {
            let (cfg, out) = load_config(&common)?;
            commands::cmd_ablate(&cfg, &out, &nodes)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
