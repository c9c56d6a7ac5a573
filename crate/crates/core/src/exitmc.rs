//! Monte Carlo estimators of `U(T, x)`.
//!
//! Two independent routes to the same number: the survival probability of
//! the auxiliary diffusion in the open orthant, and the deflated terminal
//! capitalisation `E[Z(T) X(T)] / X(0)` under the real-world dynamics. A third
//! estimator reports `E[Z(T)]` alone, which falls strictly below one when the
//! deflator is a strict local martingale.
//!
//! By default each estimator draws its own batch from a seed derived from
//! the configured one, so estimates from different methods are independent.
//! The `*_from_batch` variants reuse a caller-supplied batch instead.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::rng::derive_seed;
use crate::sde::{simulate_auxiliary, simulate_market, PathBatch, Process, Scheme, SimConfig};
use crate::stats::{proportion_interval, Accumulator, Z95};

/// Per-path values above this abort the run.
pub const OVERFLOW_LIMIT: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExitProbability,
    DeflatedValue,
    DeflatorExpectation,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::ExitProbability => "exit_probability",
            Method::DeflatedValue => "deflated_value",
            Method::DeflatorExpectation => "deflator_expectation",
        }
    }
}

/// The simulation settings an estimate was produced with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub dt: f64,
    pub n_steps: usize,
    pub horizon: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub hit_epsilon: f64,
}

impl ConfigEcho {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self::new(cfg, cfg.seed)
    }

    fn new(cfg: &SimConfig, seed: u64) -> Self {
        Self {
            dt: cfg.dt,
            n_steps: cfg.n_steps,
            horizon: cfg.horizon(),
            scheme: cfg.scheme,
            seed,
            hit_epsilon: cfg.hit_epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitEstimate {
    pub value: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_paths: usize,
    pub method: Method,
    pub cfg_echo: ConfigEcho,
}

impl ExitEstimate {
    fn from_accumulator(acc: &Accumulator, method: Method, echo: ConfigEcho) -> Self {
        let value = acc.mean();
        let stderr = acc.stderr();
        Self {
            value,
            stderr,
            ci_low: (value - Z95 * stderr).max(0.0),
            ci_high: value + Z95 * stderr,
            n_paths: acc.count() as usize,
            method,
            cfg_echo: echo,
        }
    }
}

fn method_cfg(cfg: &SimConfig, method: Method) -> SimConfig {
    let mut c = cfg.clone();
    c.seed = derive_seed(cfg.seed, method.tag());
    c.record_stride = c.n_steps.max(1);
    c
}

/// Fraction of auxiliary paths that stay in the open orthant up to `horizon`.
pub fn estimate_exit_probability(
    model: &ModelSpec,
    x0: &[f64],
    horizon: f64,
    n_paths: usize,
    cfg: &SimConfig,
) -> Result<ExitEstimate> {
    let c = method_cfg(cfg, Method::ExitProbability);
    let batch = simulate_auxiliary(model, x0, horizon, n_paths, &c)?;
    exit_probability_from_batch(&batch, &c)
}

pub fn exit_probability_from_batch(batch: &PathBatch, cfg: &SimConfig) -> Result<ExitEstimate> {
    if batch.process != Process::Auxiliary {
        return Err(Error::ConfigInvalid(
            "exit probability needs an auxiliary batch".into(),
        ));
    }
    let n = batch.n_paths as u64;
    let survived = batch.hit_time.iter().filter(|h| h.is_none()).count() as u64;
    let value = if n == 0 {
        0.0
    } else {
        survived as f64 / n as f64
    };
    let stderr = if n == 0 {
        0.0
    } else {
        (value * (1.0 - value) / n as f64).sqrt()
    };
    let ci = proportion_interval(survived, n);
    Ok(ExitEstimate {
        value,
        stderr,
        ci_low: ci.low,
        ci_high: ci.high,
        n_paths: batch.n_paths,
        method: Method::ExitProbability,
        cfg_echo: ConfigEcho::new(cfg, cfg.seed),
    })
}

/// `E[Z(T) ΣX(T)] / Σx0` under the real-world dynamics.
pub fn estimate_deflated_value(
    model: &ModelSpec,
    x0: &[f64],
    horizon: f64,
    n_paths: usize,
    cfg: &SimConfig,
) -> Result<ExitEstimate> {
    let c = method_cfg(cfg, Method::DeflatedValue);
    let batch = simulate_market(model, x0, horizon, n_paths, &c)?;
    deflated_from_batch(model, &batch, &c, true)
}

/// `E[Z(T)]` under the real-world dynamics.
pub fn estimate_deflator_expectation(
    model: &ModelSpec,
    x0: &[f64],
    horizon: f64,
    n_paths: usize,
    cfg: &SimConfig,
) -> Result<ExitEstimate> {
    let c = method_cfg(cfg, Method::DeflatorExpectation);
    let batch = simulate_market(model, x0, horizon, n_paths, &c)?;
    deflated_from_batch(model, &batch, &c, false)
}

pub fn deflated_value_from_batch(
    model: &ModelSpec,
    batch: &PathBatch,
    cfg: &SimConfig,
) -> Result<ExitEstimate> {
    deflated_from_batch(model, batch, cfg, true)
}

pub fn deflator_expectation_from_batch(
    model: &ModelSpec,
    batch: &PathBatch,
    cfg: &SimConfig,
) -> Result<ExitEstimate> {
    deflated_from_batch(model, batch, cfg, false)
}

/// `Z(t)` along path `path` at record `record`.
pub fn deflator(model: &ModelSpec, batch: &PathBatch, path: usize, record: usize) -> f64 {
    let h0 = model.potential_unchecked(batch.state(path, 0));
    let h = model.potential_unchecked(batch.state(path, record));
    (h0 - h - batch.killing_integral(path, record)).exp()
}

fn deflated_from_batch(
    model: &ModelSpec,
    batch: &PathBatch,
    cfg: &SimConfig,
    with_capital: bool,
) -> Result<ExitEstimate> {
    if batch.process != Process::Market {
        return Err(Error::ConfigInvalid(
            "deflated estimators need a market batch".into(),
        ));
    }
    let last = batch.n_records() - 1;
    let mut acc = Accumulator::default();
    for p in 0..batch.n_paths {
        let mut v = deflator(model, batch, p, last);
        if with_capital {
            let total0: f64 = batch.state(p, 0).iter().sum();
            let total: f64 = batch.terminal(p).iter().sum();
            v *= total / total0;
        }
        if !(v <= OVERFLOW_LIMIT) {
            return Err(Error::OverflowGuard { path: p, value: v });
        }
        acc.push(v);
    }
    let method = if with_capital {
        Method::DeflatedValue
    } else {
        Method::DeflatorExpectation
    };
    Ok(ExitEstimate::from_accumulator(
        &acc,
        method,
        ConfigEcho::new(cfg, cfg.seed),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(horizon: f64, steps: usize, x0: &[f64]) -> SimConfig {
        SimConfig::with_resolution(horizon, steps, x0, 2024)
    }

    #[test]
    fn zero_horizon_gives_one_exactly() {
        for model in [ModelSpec::bessel3(), ModelSpec::volstab(2, 1.0).unwrap()] {
            let x0 = vec![1.0; model.n()];
            let c = cfg(0.0, 1000, &x0);
            for e in [
                estimate_exit_probability(&model, &x0, 0.0, 50, &c).unwrap(),
                estimate_deflated_value(&model, &x0, 0.0, 50, &c).unwrap(),
            ] {
                assert_eq!(e.value, 1.0);
                assert_eq!(e.stderr, 0.0);
            }
        }
    }

    #[test]
    fn constant_potential_without_killing_has_unit_deflator() {
        let sigma = vec![vec![0.2, 0.0], vec![0.0, 0.2]];
        let model = ModelSpec::constant("flat", vec![0.0, 0.0], sigma, None).unwrap();
        let c = cfg(1.0, 200, &[1.0, 1.0]);
        let e = estimate_deflator_expectation(&model, &[1.0, 1.0], 1.0, 100, &c).unwrap();
        assert!((e.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn estimates_respect_interval_invariants() {
        let model = ModelSpec::volstab(2, 1.0).unwrap();
        let c = cfg(0.5, 400, &[1.0, 1.0]);
        let e = estimate_exit_probability(&model, &[1.0, 1.0], 0.5, 2000, &c).unwrap();
        assert!(e.ci_low <= e.value && e.value <= e.ci_high);
        assert!((0.0..=1.0).contains(&e.value));
        let d = estimate_deflated_value(&model, &[1.0, 1.0], 0.5, 2000, &c).unwrap();
        assert!(d.ci_low <= d.value && d.value <= d.ci_high);
        assert_eq!(d.method, Method::DeflatedValue);
    }

    #[test]
    fn methods_draw_independent_batches() {
        let model = ModelSpec::bessel3();
        let c = cfg(0.2, 200, &[1.0]);
        let a = estimate_deflated_value(&model, &[1.0], 0.2, 200, &c).unwrap();
        let b = estimate_deflator_expectation(&model, &[1.0], 0.2, 200, &c).unwrap();
        assert_ne!(a.cfg_echo.seed, b.cfg_echo.seed);
    }

    #[test]
    fn wrong_batch_kind_rejected() {
        let model = ModelSpec::bessel3();
        let c = cfg(0.1, 100, &[1.0]);
        let aux = simulate_auxiliary(&model, &[1.0], 0.1, 5, &c).unwrap();
        assert!(deflated_value_from_batch(&model, &aux, &c).is_err());
        let mkt = simulate_market(&model, &[1.0], 0.1, 5, &c).unwrap();
        assert!(exit_probability_from_batch(&mkt, &c).is_err());
    }
}
