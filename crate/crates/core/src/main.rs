use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use ec3_core::harness::{ingest_dataset, run_experiment, theoretical_bounds, Algorithm, CodeConfig, ExperimentConfig, ExperimentSettings, IngestOptions};

#[derive(Parser)]
#[command(name = "ec3", version, about = "EC3 multi-player bandit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write results.csv, summary.json and regret.svg.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Seed of the first replication.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Build an experiment config from a CSV of per-group reward sequences.
    Ingest {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        arms: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        players: Option<usize>,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the centralized lower bound and the EC3 upper bound for a config.
    Bounds {
        #[arg(long)]
        config: PathBuf,
    },
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            out,
            replications,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.experiment.seed_base = seed;
            }
            if let Some(n) = replications {
                cfg.experiment.replications = n;
            }
            match out {
                Some(dir) => cfg.experiment.output_dir = std::path::absolute(dir)?,
                None if cfg.experiment.output_dir.is_relative() => {
                    cfg.experiment.output_dir = std::path::absolute(&cfg.experiment.output_dir)?
                }
                None => {}
            }
            cfg.validate()?;
            let report = run_experiment(&cfg, &config_dir(&config))?;
            let s = &report.summary;
            println!("output: {}", cfg.experiment.output_dir.display());
            println!("final regret: {:.1} ± {:.1}", s.final_regret.mean, s.final_regret.std);
            println!(
                "converged: {}/{} ({:.2})",
                s.converged_runs, s.replications, s.convergence_fraction
            );
            println!("decode errors: {} total, {:.2} per run", s.decode_errors_total, s.decode_errors_mean);
        }
        Command::Ingest {
            input,
            arms,
            out,
            players,
            horizon,
            seed,
        } => {
            let opts = IngestOptions {
                num_players: players,
                horizon,
                seed,
            };
            let instance = ingest_dataset(&input, arms, &opts)?;
            let cfg = ExperimentConfig {
                instance,
                algorithm: Algorithm::Ec3,
                code: CodeConfig::default(),
                experiment: ExperimentSettings::default(),
            };
            let json = serde_json::to_string_pretty(&cfg)?;
            std::fs::write(&out, json + "\n").with_context(|| format!("writing {}", out.display()))?;
            println!(
                "wrote {} (mu_min {:.4}, nu_max {:.4})",
                out.display(),
                cfg.instance.mu_min.unwrap_or(f64::NAN),
                cfg.instance.nu_max.unwrap_or(f64::NAN)
            );
        }
        Command::Bounds { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let instance = cfg.instance_for(0, &config_dir(&config))?;
            let bounds = theoretical_bounds(&instance, instance.horizon());
            println!("horizon: {}", instance.horizon());
            match bounds.lower_bound {
                Some(v) => println!("lower bound: {v:.6e}"),
                None => println!("lower bound: undefined"),
            }
            match bounds.upper_terms {
                Some(u) => {
                    println!("upper bound: {:.6e}", u.total);
                    println!("  exploration: {:.6e}", u.exploration);
                    println!("  statistics:  {:.6e}", u.statistics);
                    println!("  control:     {:.6e}", u.control);
                    println!("  atypical:    {:.6e}", u.atypical);
                    println!("  ({})", bounds.note);
                }
                None => println!("upper bound: undefined"),
            }
        }
    }
    Ok(())
}
