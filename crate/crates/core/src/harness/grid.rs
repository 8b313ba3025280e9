//! Experiment grid execution and results persistence.
//!
//! Cells run in a work-stealing pool; every cell derives its seed from the
//! master seed and its grid coordinates, so the same configuration and seed
//! reproduce the same results files (wall-clock columns and the timestamp
//! header line aside).

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::Result;
use crate::gp::{
    fit_standard_gp, predict, sym_kl, Dataset, GaussianPrediction, GpFitConfig, GPWorkspace,
};
use crate::harness::io::GridConfig;
use crate::harness::metrics::{mae, rmse, ExperimentResult, Method};
use crate::harness::synth::{generate_dataset, synth_function, FunctionId, SyntheticSpec};
use crate::kernel::Matern32;
use crate::mcmc::{run_chain, ChainConfig};
use crate::variational::{fit, FitConfig};

/// One grid cell outcome; failures carry the error text and leave the grid
/// running.
#[derive(Debug, Clone)]
pub struct CellRecord {
    pub function: String,
    pub sigma_t: f64,
    pub sigma_y: f64,
    pub method: Method,
    pub seed: u64,
    pub outcome: std::result::Result<ExperimentResult, String>,
}

/// All cell records plus the pairwise tables when a real dataset was used.
#[derive(Debug, Clone)]
pub struct GridReport {
    pub records: Vec<CellRecord>,
    pub pairwise: Option<PairwiseTables>,
}

impl GridReport {
    pub fn any_errors(&self) -> bool {
        self.records.iter().any(|r| r.outcome.is_err())
    }
}

/// Method-by-method comparison matrices over a query grid.
#[derive(Debug, Clone)]
pub struct PairwiseTables {
    pub methods: Vec<Method>,
    /// Mean absolute difference between mean predictions.
    pub mad: Vec<Vec<f64>>,
    /// Mean symmetrized KL divergence between predictive Gaussians.
    pub sym_kl: Vec<Vec<f64>>,
}

fn mix_seed(master: u64, parts: &[u64]) -> u64 {
    // splitmix64 over the master seed and the cell coordinates
    let mut state = master;
    for &p in parts {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        state = z ^ (z >> 31);
    }
    state
}

/// Query locations: equally spaced over the input range, excluding a margin
/// of one training-grid gap at each end.
pub fn query_grid(range: (f64, f64), points: usize, n_train: usize) -> Vec<f64> {
    let gap = (range.1 - range.0) / (n_train.max(2) - 1) as f64;
    let (lo, hi) = (range.0 + gap, range.1 - gap);
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points.max(2) - 1) as f64)
        .collect()
}

/// Runs one method on a dataset, returning predictions on the query grid and
/// the estimated latent inputs (original row order).
pub fn run_method(
    method: Method,
    dataset: &Dataset,
    query: &[f64],
    config: &GridConfig,
    seed: u64,
) -> Result<(Vec<GaussianPrediction>, Vec<f64>)> {
    match method {
        Method::Gp => {
            let gp_config = GpFitConfig {
                restarts: config.restarts,
                seed,
                ..Default::default()
            };
            let (theta, tau) = fit_standard_gp(dataset, &gp_config)?;
            let kernel = Matern32::new(theta);
            let ws = GPWorkspace::build(&tau, dataset.y(), dataset.sigma_y(), &kernel)?;
            let preds = query
                .iter()
                .map(|&x| predict(x, &tau, &ws, &kernel))
                .collect();
            Ok((preds, tau))
        }
        Method::Npv => {
            let fit_config = FitConfig {
                k: config.k,
                restarts: config.restarts,
                seed,
                ..Default::default()
            };
            let result = fit(dataset, &fit_config)?;
            let kernel = Matern32::new(result.theta);
            let ws =
                GPWorkspace::build(&result.tau_hat, dataset.y(), dataset.sigma_y(), &kernel)?;
            let preds = query
                .iter()
                .map(|&x| predict(x, &result.tau_hat, &ws, &kernel))
                .collect();
            Ok((preds, result.tau_hat))
        }
        Method::Mcmc => {
            let chain_config = ChainConfig {
                iterations: config.mcmc_iterations,
                seed,
                ..Default::default()
            };
            let summary = run_chain(dataset, &chain_config, query)?;
            Ok((summary.predictions, summary.tau_mean))
        }
    }
}

fn run_synthetic_cell(
    function: FunctionId,
    sigma_t: f64,
    sigma_y: f64,
    method: Method,
    seed: u64,
    config: &GridConfig,
    master_seed: u64,
) -> Result<ExperimentResult> {
    let data_seed = mix_seed(master_seed, &[function as u64, sigma_t.to_bits(), seed]);
    let spec = SyntheticSpec {
        function,
        n: config.n,
        input_range: config.input_range,
        sigma_y,
        sigma_t,
        seed: data_seed,
    };
    let (dataset, truth_tau) = generate_dataset(&spec)?;
    let query = query_grid(config.input_range, config.query_points, config.n);
    let truth_f = synth_function(function, &query);
    let baseline_mae = mae(dataset.t(), &truth_tau)?;

    let started = Instant::now();
    let (preds, tau_hat) = run_method(method, &dataset, &query, config, data_seed)?;
    let wall_time_s = started.elapsed().as_secs_f64();

    let means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
    Ok(ExperimentResult {
        method,
        rmse: rmse(&means, &truth_f)?,
        input_mae: mae(&tau_hat, &truth_tau)?,
        baseline_mae,
        wall_time_s,
        seed,
    })
}

/// Executes the configured grid. Synthetic mode sweeps
/// `(function, sigma_t, method, seed)`; dataset mode runs each
/// `(method, seed)` on the loaded file and adds the pairwise tables.
pub fn run_grid(config: &GridConfig, master_seed: u64) -> Result<GridReport> {
    if let Some(path) = &config.dataset {
        return run_dataset_grid(config, master_seed, Path::new(path));
    }

    // per-function noise level (the large-noise preset needs the function)
    let sigma_y_for = |f: FunctionId| -> f64 {
        if config.large_noise_preset {
            SyntheticSpec {
                function: f,
                n: config.n,
                input_range: config.input_range,
                sigma_y: 0.0,
                sigma_t: 1.0,
                seed: 0,
            }
            .large_noise_sigma_y()
        } else {
            config.sigma_y
        }
    };

    let mut cells = Vec::new();
    for &function in &config.functions {
        for &sigma_t in &config.sigma_t_grid {
            for &method in &config.methods {
                for &seed in &config.seeds {
                    cells.push((function, sigma_t, method, seed));
                }
            }
        }
    }

    let records: Vec<CellRecord> = cells
        .par_iter()
        .map(|&(function, sigma_t, method, seed)| {
            let sigma_y = sigma_y_for(function);
            let outcome =
                run_synthetic_cell(function, sigma_t, sigma_y, method, seed, config, master_seed)
                    .map_err(|e| e.to_string());
            CellRecord {
                function: function.to_string(),
                sigma_t,
                sigma_y,
                method,
                seed,
                outcome,
            }
        })
        .collect();

    Ok(GridReport {
        records,
        pairwise: None,
    })
}

fn run_dataset_grid(config: &GridConfig, master_seed: u64, path: &Path) -> Result<GridReport> {
    let dataset = crate::harness::io::load_dataset(path)?;
    let n = dataset.len();
    let max = dataset.t().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = dataset.t().iter().cloned().fold(f64::INFINITY, f64::min);
    let query = query_grid((min, max), config.query_points, n);

    let seed0 = config.seeds.first().copied().unwrap_or(1);
    let runs: Vec<(Method, std::result::Result<(Vec<GaussianPrediction>, Vec<f64>), String>)> =
        config
            .methods
            .par_iter()
            .map(|&method| {
                let seed = mix_seed(master_seed, &[method as u64, seed0]);
                (
                    method,
                    run_method(method, &dataset, &query, config, seed).map_err(|e| e.to_string()),
                )
            })
            .collect();

    let mut records = Vec::new();
    let mut preds = Vec::new();
    for (method, outcome) in &runs {
        match outcome {
            Ok((p, tau_hat)) => {
                let means: Vec<f64> = p.iter().map(|g| g.mean).collect();
                // no ground truth on a real dataset: rmse against the
                // observations at the observed inputs is not defined on the
                // query grid, so report input movement against t instead
                let input_mae = mae(tau_hat, dataset.t())?;
                records.push(CellRecord {
                    function: "dataset".into(),
                    sigma_t: f64::NAN,
                    sigma_y: f64::NAN,
                    method: *method,
                    seed: seed0,
                    outcome: Ok(ExperimentResult {
                        method: *method,
                        rmse: f64::NAN,
                        input_mae,
                        baseline_mae: 0.0,
                        wall_time_s: 0.0,
                        seed: seed0,
                    }),
                });
                preds.push((*method, p.clone(), means));
            }
            Err(e) => records.push(CellRecord {
                function: "dataset".into(),
                sigma_t: f64::NAN,
                sigma_y: f64::NAN,
                method: *method,
                seed: seed0,
                outcome: Err(e.clone()),
            }),
        }
    }

    let methods: Vec<Method> = preds.iter().map(|(m, ..)| *m).collect();
    let m = methods.len();
    let mut mad = vec![vec![0.0; m]; m];
    let mut skl = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in 0..m {
            let (_, pa, ma) = &preds[a];
            let (_, pb, mb) = &preds[b];
            mad[a][b] = mae(ma, mb)?;
            let mut acc = 0.0;
            for (ga, gb) in pa.iter().zip(pb) {
                // variance floor keeps interpolating (zero-variance)
                // predictions comparable
                let ga = GaussianPrediction {
                    mean: ga.mean,
                    var: ga.var.max(1e-12),
                };
                let gb = GaussianPrediction {
                    mean: gb.mean,
                    var: gb.var.max(1e-12),
                };
                acc += sym_kl(&ga, &gb)?;
            }
            skl[a][b] = acc / pa.len().max(1) as f64;
        }
    }

    Ok(GridReport {
        records,
        pairwise: Some(PairwiseTables {
            methods,
            mad,
            sym_kl: skl,
        }),
    })
}

/// Writes `results.csv`, the per-figure aggregate files, the wall-time
/// summary and (in dataset mode) the pairwise tables into `out_dir`.
pub fn write_outputs(report: &GridReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;

    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut results = format!("# timestamp: {timestamp}\n");
    results.push_str(
        "function_id,sigma_t,sigma_y,method,seed,rmse,input_mae,baseline_mae,wall_time_s,error\n",
    );
    for r in &report.records {
        match &r.outcome {
            Ok(res) => results.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},\n",
                r.function,
                r.sigma_t,
                r.sigma_y,
                r.method,
                r.seed,
                res.rmse,
                res.input_mae,
                res.baseline_mae,
                res.wall_time_s
            )),
            Err(e) => results.push_str(&format!(
                "{},{},{},{},{},,,,,{}\n",
                r.function,
                r.sigma_t,
                r.sigma_y,
                r.method,
                r.seed,
                e.replace(',', ";").replace('\n', " ")
            )),
        }
    }
    std::fs::write(out_dir.join("results.csv"), results)?;

    write_figure_files(report, out_dir)?;
    write_walltime_summary(report, out_dir)?;

    if let Some(pairwise) = &report.pairwise {
        write_pairwise(pairwise, &pairwise.mad, &out_dir.join("pairwise_mad.csv"))?;
        write_pairwise(
            pairwise,
            &pairwise.sym_kl,
            &out_dir.join("pairwise_symkl.csv"),
        )?;
    }
    Ok(())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn write_figure_files(report: &GridReport, out_dir: &Path) -> Result<()> {
    // (function, metric) -> (sigma_t, method) -> per-seed values
    let mut by_panel: BTreeMap<(String, &str), BTreeMap<(String, Method), Vec<f64>>> =
        BTreeMap::new();
    for r in &report.records {
        if let Ok(res) = &r.outcome {
            if r.function == "dataset" {
                continue;
            }
            for (metric, value) in [("rmse", res.rmse), ("input_mae", res.input_mae)] {
                by_panel
                    .entry((r.function.clone(), metric))
                    .or_default()
                    .entry((format!("{}", r.sigma_t), r.method))
                    .or_default()
                    .push(value);
            }
        }
    }
    for ((function, metric), cells) in by_panel {
        let mut out = String::from("sigma_t,method,mean,std\n");
        for ((sigma_t, method), values) in cells {
            let (mean, std) = mean_std(&values);
            out.push_str(&format!("{sigma_t},{method},{mean},{std}\n"));
        }
        std::fs::write(out_dir.join(format!("fig_{function}_{metric}.csv")), out)?;
    }
    Ok(())
}

fn write_walltime_summary(report: &GridReport, out_dir: &Path) -> Result<()> {
    let mut by_method: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    for r in &report.records {
        if let Ok(res) = &r.outcome {
            by_method.entry(r.method).or_default().push(res.wall_time_s);
        }
    }
    let mut out = String::from("method,mean_s,std_s\n");
    for (method, values) in by_method {
        let (mean, std) = mean_std(&values);
        out.push_str(&format!("{method},{mean},{std}\n"));
    }
    std::fs::write(out_dir.join("walltime_summary.csv"), out)?;
    Ok(())
}

fn write_pairwise(tables: &PairwiseTables, matrix: &[Vec<f64>], path: &Path) -> Result<()> {
    let mut out = String::from("method");
    for m in &tables.methods {
        out.push_str(&format!(",{m}"));
    }
    out.push('\n');
    for (i, m) in tables.methods.iter().enumerate() {
        out.push_str(&m.to_string());
        for j in 0..tables.methods.len() {
            out.push_str(&format!(",{}", matrix[i][j]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Convenience entry point shared by the `compare` subcommand: pairwise
/// tables for a dataset file.
pub fn compare_dataset(config: &GridConfig, master_seed: u64, path: &Path) -> Result<GridReport> {
    let mut with_dataset = config.clone();
    with_dataset.dataset = Some(path.to_string_lossy().into_owned());
    run_grid(&with_dataset, master_seed)
}
