//! Dataset CSV loading and the flat key-value experiment configuration.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gp::Dataset;
use crate::harness::metrics::Method;
use crate::harness::synth::FunctionId;

const HEADER: [&str; 4] = ["t", "sigma_t", "y", "sigma_y"];

/// Parses the four-column dataset CSV (`t,sigma_t,y,sigma_y`, header
/// required, one row per observation).
///
/// `sigma_t = 0` rows are mapped to the floor `1e-6 * range(t)` so the
/// dataset invariants hold. Row order is preserved; any descending
/// canonicalization happens downstream.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

pub fn parse_dataset(content: &str) -> Result<Dataset> {
    let mut lines = content.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) if line.trim().is_empty() => continue,
            Some((_, line)) => break line,
            None => return Err(Error::SchemaError("missing header line".into())),
        }
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != HEADER {
        return Err(Error::SchemaError(format!(
            "expected header `t,sigma_t,y,sigma_y`, got `{}`",
            header.trim()
        )));
    }

    let mut t = Vec::new();
    let mut sigma_t = Vec::new();
    let mut y = Vec::new();
    let mut sigma_y = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1; // 1-based file line number
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::ParseError {
                row,
                col: format!("{}", fields.len().min(4)),
                msg: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let mut values = [0.0; 4];
        for (ci, (field, name)) in fields.iter().zip(HEADER).enumerate() {
            values[ci] = field.parse::<f64>().map_err(|e| Error::ParseError {
                row,
                col: name.to_string(),
                msg: format!("`{field}`: {e}"),
            })?;
        }
        t.push(values[0]);
        sigma_t.push(values[1]);
        y.push(values[2]);
        sigma_y.push(values[3]);
    }
    if t.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let max = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = t.iter().cloned().fold(f64::INFINITY, f64::min);
    let range = max - min;
    let floor = if range > 0.0 { 1e-6 * range } else { 1e-6 };
    for s in &mut sigma_t {
        if *s == 0.0 {
            *s = floor;
        }
    }
    Dataset::new(t, sigma_t, y, sigma_y)
}

/// Writes a dataset back out in the loader's schema.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = String::from("t,sigma_t,y,sigma_y\n");
    for i in 0..dataset.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            dataset.t()[i],
            dataset.sigma_t()[i],
            dataset.y()[i],
            dataset.sigma_y()[i]
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Experiment grid configuration, parsed from a flat `key = value` file.
#[derive(Debug, Clone)]
pub struct GridConfig {
    pub functions: Vec<FunctionId>,
    pub sigma_t_grid: Vec<f64>,
    pub sigma_y: f64,
    /// Replace `sigma_y` per function with `(max f - min f) / 10`.
    pub large_noise_preset: bool,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub n: usize,
    pub input_range: (f64, f64),
    pub k: usize,
    pub restarts: usize,
    pub mcmc_iterations: usize,
    pub query_points: usize,
    pub output_dir: String,
    /// Optional real-dataset path; when set the grid runs methods on it and
    /// emits the pairwise comparison tables instead of the synthetic sweep.
    pub dataset: Option<String>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            functions: FunctionId::ALL.to_vec(),
            sigma_t_grid: vec![0.2, 1.0, 2.0, 3.0],
            sigma_y: 0.05,
            large_noise_preset: false,
            methods: Method::ALL.to_vec(),
            seeds: vec![1, 2, 3, 4, 5],
            n: 25,
            input_range: (-10.0, 10.0),
            k: 3,
            restarts: 5,
            mcmc_iterations: 5000,
            query_points: 201,
            output_dir: "out".into(),
            dataset: None,
        }
    }
}

impl GridConfig {
    /// Parses the flat `key = value` format; `#` starts a comment. Unknown
    /// keys are rejected. Documented keys: functions, sigma_t_grid, sigma_y,
    /// preset, methods, seeds, n, range_min, range_max, k, restarts,
    /// mcmc_iterations, query_points, output_dir, dataset.
    pub fn parse(content: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (idx, raw) in content.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", idx + 1))
            })?;
            kv.insert(key.trim().to_string(), value.trim().to_string());
        }
        let mut config = Self::default();
        for (key, value) in kv {
            match key.as_str() {
                "functions" => {
                    config.functions = split_list(&value)
                        .map(|s| s.parse())
                        .collect::<Result<Vec<_>>>()?;
                }
                "sigma_t_grid" => config.sigma_t_grid = parse_list(&value, "sigma_t_grid")?,
                "sigma_y" => config.sigma_y = parse_num(&value, "sigma_y")?,
                "preset" => match value.as_str() {
                    "large-noise" => config.large_noise_preset = true,
                    "none" => config.large_noise_preset = false,
                    other => {
                        return Err(Error::Config(format!("unknown preset `{other}`")));
                    }
                },
                "methods" => {
                    config.methods = split_list(&value)
                        .map(|s| s.parse())
                        .collect::<Result<Vec<_>>>()?;
                }
                "seeds" => {
                    config.seeds = split_list(&value)
                        .map(|s| {
                            s.parse::<u64>()
                                .map_err(|e| Error::Config(format!("bad seed `{s}`: {e}")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                }
                "n" => config.n = parse_num::<usize>(&value, "n")?,
                "range_min" => config.input_range.0 = parse_num(&value, "range_min")?,
                "range_max" => config.input_range.1 = parse_num(&value, "range_max")?,
                "k" => config.k = parse_num::<usize>(&value, "k")?,
                "restarts" => config.restarts = parse_num::<usize>(&value, "restarts")?,
                "mcmc_iterations" => {
                    config.mcmc_iterations = parse_num::<usize>(&value, "mcmc_iterations")?;
                }
                "query_points" => {
                    config.query_points = parse_num::<usize>(&value, "query_points")?;
                }
                "output_dir" => config.output_dir = value,
                "dataset" => config.dataset = Some(value),
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        if config.functions.is_empty() || config.methods.is_empty() || config.seeds.is_empty() {
            return Err(Error::Config(
                "functions, methods and seeds must be non-empty".into(),
            ));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_list(value: &str, key: &str) -> Result<Vec<f64>> {
    split_list(value)
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| Error::Config(format!("bad `{key}` entry `{s}`: {e}")))
        })
        .collect()
}

fn parse_num<T: std::str::FromStr>(value: &str, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::Config(format!("bad `{key}` value `{value}`: {e}")))
}
