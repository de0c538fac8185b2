use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use smio_core::config::{ExperimentConfig, StabilityMode};
use smio_core::experiment::{dump_model, run_abstract, run_experiment, run_stability};
use smio_core::stability::SlopeColumns;

/// Set-membership interval observer with a learned unknown-input model.
///
/// Config keys can be overridden with SMIO_<SECTION>_<KEY>=<value>, for
/// example SMIO_RUN_HORIZON=200 or SMIO_STABILITY_COLUMNS=state.
#[derive(Parser)]
#[command(name = "smio", version)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, default_value = "configs/deangelis_modified.toml")]
    config: PathBuf,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true, value_enum)]
    stability_mode: Option<Mode>,
    #[arg(long, global = true)]
    horizon: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Oracle,
    Learned,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, run the observer on every seed and write traces.
    Run,
    /// Compute the stability certificate and width bounds.
    Stability,
    /// Sample a target map and its local/global bands along one axis.
    Abstract {
        /// f, g or h.
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        axis: Option<usize>,
        #[arg(long)]
        zero_slope: bool,
    },
    /// Print the learned model table after one run.
    DumpModel,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&cli.config)
        .with_context(|| format!("reading {}", cli.config.display()))?;
    let mut cfg = ExperimentConfig::parse_with_env(&text, std::env::vars())
        .with_context(|| format!("loading {}", cli.config.display()))?;
    if let Some(seed) = cli.seed {
        cfg.run.seeds = Some(vec![seed]);
        cfg.run.seed_count = None;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(m) = cli.stability_mode {
        cfg.stability.mode = match m {
            Mode::Oracle => StabilityMode::Oracle,
            Mode::Learned => StabilityMode::Learned,
        };
    }
    if let Some(h) = cli.horizon {
        cfg.run.horizon = h;
    }
    if let Command::Abstract {
        target,
        axis,
        zero_slope,
    } = &cli.command
    {
        if let Some(t) = target {
            cfg.abstraction.target = t.clone();
        }
        if let Some(a) = axis {
            cfg.abstraction.axis = *a;
        }
        cfg.abstraction.zero_slope |= zero_slope;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let cfg = load(&cli)?;
    match &cli.command {
        Command::Run => {
            let summary = run_experiment(&cfg)?;
            for s in &summary.seeds {
                println!(
                    "seed {}: {} steps, {} violations{}",
                    s.seed,
                    s.steps,
                    s.violations,
                    s.fault.as_deref().map(|f| format!(", fault: {f}")).unwrap_or_default()
                );
            }
            println!(
                "L* = {:.6} ({}); traces in {}",
                summary.report.l_star,
                summary.report.verdict,
                summary.out_dir.display()
            );
            Ok(if summary.exit_code() == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Stability => {
            let (r, path) = run_stability(&cfg)?;
            println!("L* = {:.6} ({}, {} columns)", r.l_star, r.verdict, r.columns.as_str());
            if r.columns != SlopeColumns::State {
                println!("L* over state columns only = {:.6}", r.l_star_state);
            }
            println!("report written to {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Abstract { .. } => {
            let slice = run_abstract(&cfg)?;
            let dir = PathBuf::from(&cfg.output.dir);
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(format!("abstract_{}.csv", slice.target));
            std::fs::write(&path, slice.to_csv())
                .with_context(|| format!("writing {}", path.display()))?;
            println!("slice written to {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::DumpModel => {
            let seed = cfg.seeds()[0];
            print!("{}", dump_model(&cfg, seed)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
