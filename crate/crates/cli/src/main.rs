//! Benchmark harness CLI: synthetic grids, single fits, pairwise method
//! comparison and the numerical verification battery.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use ordgp::harness::grid::{compare_dataset, query_grid, run_grid, run_method, write_outputs};
use ordgp::harness::io::{load_dataset, GridConfig};
use ordgp::harness::metrics::Method;
use ordgp::harness::oracle::{run_all, OracleOptions};

#[derive(Parser)]
#[command(
    name = "ordgp",
    about = "Gaussian-process regression with noisy, ordered inputs",
    version
)]
struct Cli {
    /// Experiment configuration file (flat `key = value` format).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; every cell derives its own seed from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output directory (overrides the config's `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the synthetic benchmark grid and write the results files.
    Synth {
        /// Noise preset; `large-noise` sets sigma_y = (max f - min f) / 10.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Fit one dataset with one method and write predictions.
    Fit {
        /// Dataset CSV (`t,sigma_t,y,sigma_y`).
        #[arg(long)]
        data: PathBuf,
        /// One of `npv`, `mcmc`, `gp`.
        #[arg(long)]
        method: String,
    },
    /// Run the configured methods on a dataset and write the pairwise
    /// mean-difference and symmetrized-KL tables.
    Compare {
        /// Dataset CSV (`t,sigma_t,y,sigma_y`).
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the Monte-Carlo / finite-difference verification suites.
    Oracle {
        /// Reduced sample counts for a fast smoke run.
        #[arg(long)]
        quick: bool,
    },
}

fn load_config(path: &Option<PathBuf>) -> anyhow::Result<GridConfig> {
    match path {
        Some(p) => GridConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(GridConfig::default()),
    }
}

fn out_dir(cli_out: &Option<PathBuf>, config: &GridConfig) -> PathBuf {
    cli_out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.output_dir))
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth { preset } => {
            let mut config = load_config(&cli.config)?;
            match preset.as_deref() {
                Some("large-noise") => config.large_noise_preset = true,
                Some(other) => bail!("unknown preset `{other}`"),
                None => {}
            }
            let report = run_grid(&config, cli.seed)?;
            let dir = out_dir(&cli.out, &config);
            write_outputs(&report, &dir)?;
            let errors = report.records.iter().filter(|r| r.outcome.is_err()).count();
            println!(
                "{} cells, {} errors -> {}",
                report.records.len(),
                errors,
                dir.display()
            );
            if report.any_errors() {
                std::process::exit(1);
            }
            Ok(())
        }
        Command::Fit { data, method } => {
            let config = load_config(&cli.config)?;
            let method: Method = method.parse()?;
            let dataset = load_dataset(data)?;
            let max = dataset.t().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = dataset.t().iter().cloned().fold(f64::INFINITY, f64::min);
            let query = query_grid((min, max), config.query_points, dataset.len());
            let started = std::time::Instant::now();
            let (preds, tau_hat) = run_method(method, &dataset, &query, &config, cli.seed)?;
            let elapsed = started.elapsed().as_secs_f64();

            let dir = out_dir(&cli.out, &config);
            std::fs::create_dir_all(&dir)?;
            write_predictions(&dir.join("predictions.csv"), &query, &preds)?;
            write_inputs(&dir.join("inputs.csv"), dataset.t(), &tau_hat)?;
            println!(
                "{method} fit of {} points in {elapsed:.3} s -> {}",
                dataset.len(),
                dir.display()
            );
            Ok(())
        }
        Command::Compare { data } => {
            let config = load_config(&cli.config)?;
            let report = compare_dataset(&config, cli.seed, data)?;
            let dir = out_dir(&cli.out, &config);
            write_outputs(&report, &dir)?;
            println!("pairwise tables -> {}", dir.display());
            if report.any_errors() {
                for r in &report.records {
                    if let Err(e) = &r.outcome {
                        eprintln!("{}: {e}", r.method);
                    }
                }
                std::process::exit(1);
            }
            Ok(())
        }
        Command::Oracle { quick } => {
            let options = if *quick {
                OracleOptions::quick(cli.seed)
            } else {
                OracleOptions {
                    seed: cli.seed,
                    ..Default::default()
                }
            };
            let checks = run_all(&options)?;
            let mut failed = 0;
            for check in &checks {
                println!("{check}");
                if !check.pass {
                    failed += 1;
                }
            }
            println!("{} checks, {failed} failed", checks.len());
            if failed > 0 {
                std::process::exit(1);
            }
            Ok(())
        }
    }
}

fn write_predictions(
    path: &Path,
    query: &[f64],
    preds: &[ordgp::gp::GaussianPrediction],
) -> anyhow::Result<()> {
    let mut out = String::from("tau_star,mean,var\n");
    for (x, p) in query.iter().zip(preds) {
        out.push_str(&format!("{x},{},{}\n", p.mean, p.var));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_inputs(path: &Path, t: &[f64], tau_hat: &[f64]) -> anyhow::Result<()> {
    let mut out = String::from("t,tau_hat\n");
    for (a, b) in t.iter().zip(tau_hat) {
        out.push_str(&format!("{a},{b}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}
