use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use gosafeopt::campaign::{run_campaign, write_oracle, Setup};
use gosafeopt::config::{parse_seeds, RunConfig};
use gosafeopt::engine::Algorithm;

#[derive(Parser)]
#[command(name = "gosafeopt", version, about = "Seeded safe Bayesian optimization campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed and write per-seed records plus a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// `0..19` (inclusive) or a comma-separated list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, value_enum)]
        algo: Option<Algo>,
        /// Defaults to `output_dir` from the config, then `out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the ground-truth grid table as CSV.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a config and print the resolved settings.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Gosafeopt,
    Safeopt,
}

fn load(path: &Path) -> anyhow::Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            seeds,
            algo,
            out,
        } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seeds {
                cfg.seeds = parse_seeds(&s)?;
            }
            if let Some(a) = algo {
                cfg.algorithm = match a {
                    Algo::Gosafeopt => Algorithm::GoSafeOpt,
                    Algo::Safeopt => Algorithm::SafeOpt,
                };
            }
            let out = out.or(cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let summary = run_campaign(&cfg, Some(&out))?;
            println!(
                "{} on {}: {} seeds, {} violations, {} triggers, mean normalized objective {:.4}, mean regions {:.2}",
                summary.algorithm.as_str(),
                summary.env,
                summary.seeds.len(),
                summary.total_violations,
                summary.total_triggers,
                summary.mean_final_normalized_objective,
                summary.mean_discovered_regions,
            );
            println!("wrote {}", out.display());
        }
        Command::Oracle { config, out } => {
            let cfg = load(&config)?;
            let setup = Setup::new(&cfg)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("oracle.csv");
            write_oracle(&path, &setup.oracle, &setup.grid)?;
            println!("wrote {}", path.display());
        }
        Command::Check { config } => {
            let cfg = load(&config)?;
            let env = cfg.build_env()?;
            let grid = cfg.build_grid()?;
            let ec = cfg.engine_config(env.as_ref(), &grid)?;
            println!(
                "ok: env {} ({} grid points, jump bound {:.4}), {} for {} iterations over {} seeds",
                env.name(),
                grid.len(),
                env.jump_bound(),
                ec.algorithm.as_str(),
                ec.iterations,
                cfg.seeds.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
