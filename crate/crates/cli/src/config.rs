//! The `--config` file and its merge with command-line flags.

use std::path::{Path, PathBuf};

use arblab::models::ModelConfig;
use arblab::pde::Spacing;
use arblab::{Error, Result, Scheme};
use serde::Deserialize;

/// Seed used when neither a flag, the config file nor `ARBLAB_SEED` sets one.
pub const DEFAULT_SEED: u64 = 20_240_917;

pub const SEED_ENV: &str = "ARBLAB_SEED";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(rename = "T", default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub sim: SimBlock,
    #[serde(default)]
    pub mc: McBlock,
    #[serde(default)]
    pub pde: PdeBlock,
    #[serde(default)]
    pub backtest: BacktestBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub dt: Option<f64>,
    pub steps_per_unit: Option<usize>,
    pub scheme: Option<Scheme>,
    pub hit_epsilon: Option<f64>,
    pub record_stride: Option<usize>,
    pub paths: Option<usize>,
    pub process: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    pub paths: Option<usize>,
    pub method: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeBlock {
    pub points: Option<usize>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub d_tau: Option<f64>,
    pub spacing: Option<Spacing>,
    pub slices: Option<usize>,
    pub weights: Option<bool>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestBlock {
    pub strategy: Option<String>,
    pub c: Option<f64>,
    pub p: Option<f64>,
    pub v0: Option<f64>,
    pub paths: Option<usize>,
    pub tolerance: Option<f64>,
    pub report_points: Option<usize>,
    pub replicate: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub paths_csv: Option<PathBuf>,
    pub solution_csv: Option<PathBuf>,
    pub load_solution: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))
    }
}

/// Flag, then config, then `ARBLAB_SEED`, then [`DEFAULT_SEED`].
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>, env: Option<&str>) -> Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match env {
        Some(v) => v.trim().parse().map_err(|_| {
            Error::ConfigInvalid(format!("{SEED_ENV} is not an unsigned integer: {v:?}"))
        }),
        None => Ok(DEFAULT_SEED),
    }
}
