//! Investment strategies and pathwise backtests against the market portfolio.
//!
//! Weights are fractions of current wealth invested in each stock; whatever
//! is left (`cash = 1 − Σπ`) sits in a zero-rate money market.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exitmc::ConfigEcho;
use crate::models::ModelSpec;
use crate::pde::{query, PdeSolution, QueryResult, SolutionKind};
use crate::rng::path_seed;
use crate::sde::{MarketStepper, SimConfig};
use crate::stats::Accumulator;

/// Weights below this count as short positions; cash below its negative counts as borrowing.
pub const POSITION_TOL: f64 = 1e-12;
/// Default Euler resolution for backtests; hedging error scales like the square root of the step.
pub const BACKTEST_STEPS_PER_UNIT: usize = 4000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyWeights {
    pub pi: Vec<f64>,
    pub cash: f64,
}

impl StrategyWeights {
    pub fn new(pi: Vec<f64>) -> Self {
        let cash = 1.0 - pi.iter().sum::<f64>();
        Self { pi, cash }
    }

    pub fn borrows(&self) -> bool {
        self.cash < -POSITION_TOL
    }

    pub fn shorts(&self) -> bool {
        self.pi.iter().any(|&p| p < -POSITION_TOL)
    }
}

fn check_simplex(mu: &[f64]) -> Result<()> {
    let s: f64 = mu.iter().sum();
    if mu.is_empty() || mu.iter().any(|&m| !(m > 0.0)) || (s - 1.0).abs() > 1e-10 {
        return Err(Error::SimplexViolation(mu.to_vec()));
    }
    Ok(())
}

/// `π_i = x_i D_i log U(τ, x) + x_i / Σx`.
pub fn optimal_weights(
    sol: &PdeSolution,
    tau_remaining: f64,
    x: &[f64],
) -> Result<StrategyWeights> {
    if sol.kind != SolutionKind::OrthantU {
        return Err(Error::ConfigInvalid(
            "optimal weights need an orthant solution".into(),
        ));
    }
    let q = query(sol, tau_remaining, x)?;
    Ok(optimal_from_query(&q, x))
}

fn optimal_from_query(q: &QueryResult, x: &[f64]) -> StrategyWeights {
    let total: f64 = x.iter().sum();
    StrategyWeights::new(
        x.iter()
            .zip(&q.grad_log)
            .map(|(xi, g)| xi * g + xi / total)
            .collect(),
    )
}

/// Portfolio generated by the two-asset weight solution `Q(τ, m₁)`:
/// `π₁ = μ₁(1 + μ₂ g)`, `π₂ = μ₂(1 − μ₁ g)` with `g = ∂ log Q / ∂m₁`.
pub fn fgp_weights(sol: &PdeSolution, tau_remaining: f64, mu: &[f64]) -> Result<StrategyWeights> {
    if sol.kind != SolutionKind::SimplexQ {
        return Err(Error::ConfigInvalid(
            "generated weights need a simplex solution".into(),
        ));
    }
    if mu.len() != 2 {
        return Err(Error::UnsupportedDimension(mu.len()));
    }
    check_simplex(mu)?;
    let g = query(sol, tau_remaining, &mu[..1])?.grad_log[0];
    let pi = vec![mu[0] * (1.0 + mu[1] * g), mu[1] * (1.0 - mu[0] * g)];
    Ok(StrategyWeights { pi, cash: 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classical {
    Market,
    /// `π_i ∝ μ_i (c − log μ_i)`.
    Entropy {
        c: f64,
    },
    /// `π = λ/n + (1 − λ) μ` with `1/λ = 1 + (Πμ)^{1/n} / c`.
    EwBlend {
        c: f64,
    },
    /// `π_i ∝ μ_i^p`.
    DiversityP {
        p: f64,
    },
}

impl Classical {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Classical::Market => Ok(()),
            Classical::Entropy { c } | Classical::EwBlend { c } if !(c > 0.0) || !c.is_finite() => {
                Err(Error::ParamInvalid(format!("c must be positive, got {c}")))
            }
            Classical::DiversityP { p } if !(p > 0.0 && p < 1.0) => Err(Error::ParamInvalid(
                format!("p must lie in (0, 1), got {p}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Classical::Market => "market".into(),
            Classical::Entropy { c } => format!("entropy(c={c})"),
            Classical::EwBlend { c } => format!("ew_blend(c={c})"),
            Classical::DiversityP { p } => format!("diversity(p={p})"),
        }
    }
}

pub fn classical_weights(kind: Classical, mu: &[f64]) -> Result<StrategyWeights> {
    kind.validate()?;
    check_simplex(mu)?;
    let n = mu.len() as f64;
    let pi: Vec<f64> = match kind {
        Classical::Market => mu.to_vec(),
        Classical::Entropy { c } => {
            let raw: Vec<f64> = mu.iter().map(|m| m * (c - m.ln())).collect();
            let j: f64 = raw.iter().sum();
            raw.into_iter().map(|r| r / j).collect()
        }
        Classical::EwBlend { c } => {
            let geo = (mu.iter().map(|m| m.ln()).sum::<f64>() / n).exp();
            let lambda = 1.0 / (1.0 + geo / c);
            mu.iter().map(|m| lambda / n + (1.0 - lambda) * m).collect()
        }
        Classical::DiversityP { p } => {
            let raw: Vec<f64> = mu.iter().map(|m| m.powf(p)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|r| r / s).collect()
        }
    };
    Ok(StrategyWeights::new(pi))
}

/// A trading rule evaluated at `(t, X(t))`; shared read-only across workers.
pub trait Strategy: Sync {
    fn name(&self) -> String;
    fn weights(&self, t: f64, x: &[f64]) -> Result<StrategyWeights>;
}

fn market_weights(x: &[f64]) -> Vec<f64> {
    let total: f64 = x.iter().sum();
    x.iter().map(|v| v / total).collect()
}

impl Strategy for Classical {
    fn name(&self) -> String {
        Classical::name(self)
    }

    fn weights(&self, _t: f64, x: &[f64]) -> Result<StrategyWeights> {
        classical_weights(*self, &market_weights(x))
    }
}

/// Holds everything in the money market.
pub struct Cash;

impl Strategy for Cash {
    fn name(&self) -> String {
        "cash".into()
    }

    fn weights(&self, _t: f64, x: &[f64]) -> Result<StrategyWeights> {
        Ok(StrategyWeights::new(vec![0.0; x.len()]))
    }
}

/// Looks up `U(τ, x)` on a solved grid, mapping states onto the box.
///
/// When the model's `U` is invariant under scaling `x`, states are first
/// rescaled to total capitalisation `total`; the result is then clamped into
/// the box either way.
#[derive(Debug, Clone, Copy)]
pub struct PdeLookup<'a> {
    pub sol: &'a PdeSolution,
    pub rescale_total: Option<f64>,
}

impl<'a> PdeLookup<'a> {
    pub fn new(sol: &'a PdeSolution, model: &ModelSpec, x0: &[f64]) -> Self {
        let rescale_total = model.is_weight_markovian().then(|| x0.iter().sum());
        Self { sol, rescale_total }
    }

    /// Value and `∇ log U` at the original (unscaled) `x`.
    pub fn query(&self, tau: f64, x: &[f64]) -> Result<QueryResult> {
        let g = &self.sol.grid;
        let scale = match self.rescale_total {
            Some(total) => total / x.iter().sum::<f64>(),
            None => 1.0,
        };
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(d, v)| (v * scale).clamp(g.lower[d], g.upper[d]))
            .collect();
        let mut q = query(self.sol, tau.clamp(0.0, g.horizon), &y)?;
        q.grad_log.iter_mut().for_each(|v| *v *= scale);
        Ok(q)
    }
}

/// The replicating strategy built from a solved `U`, for a horizon `T`.
pub struct OptimalStrategy<'a> {
    pub lookup: PdeLookup<'a>,
    pub horizon: f64,
}

impl<'a> Strategy for OptimalStrategy<'a> {
    fn name(&self) -> String {
        "optimal".into()
    }

    fn weights(&self, t: f64, x: &[f64]) -> Result<StrategyWeights> {
        let q = self.lookup.query(self.horizon - t, x)?;
        Ok(optimal_from_query(&q, x))
    }
}

/// The portfolio generated by a two-asset weight solution, for a horizon `T`.
pub struct GeneratedStrategy<'a> {
    pub sol: &'a PdeSolution,
    pub horizon: f64,
}

impl<'a> Strategy for GeneratedStrategy<'a> {
    fn name(&self) -> String {
        "generated".into()
    }

    fn weights(&self, t: f64, x: &[f64]) -> Result<StrategyWeights> {
        let g = &self.sol.grid;
        let mu = market_weights(x);
        let m1 = mu[0].clamp(g.lower[0], g.upper[0]);
        let tau = (self.horizon - t).clamp(0.0, g.horizon);
        fgp_weights(self.sol, tau, &[m1, 1.0 - m1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestOptions {
    /// Relative slack in the arbitrage event `V(T) ≥ V_market(T)(1 − tol)`.
    pub tolerance: f64,
    /// Number of evenly spaced diagnostic times, including `0` and `T`.
    pub report_points: usize,
    /// Keep per-path series at the diagnostic times for CSV export.
    pub keep_paths: bool,
}

impl Default for BacktestOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            report_points: 11,
            keep_paths: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationStats {
    /// Mean over paths and recorded times `t > 0` of `|V − X U| / (X U)`.
    pub mean: f64,
    pub max: f64,
    /// Mean over paths of the error at `T`.
    pub terminal_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub strategy: String,
    pub v0: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub terminal_wealth: Vec<f64>,
    pub relative_wealth: Vec<f64>,
    pub replication: Option<ReplicationStats>,
    pub arbitrage_frequency: f64,
    pub strict_beat_frequency: f64,
    /// Sample mean of `Z(t) V(t) / v0` at the diagnostic times.
    pub deflated_wealth: Vec<SeriesPoint>,
    /// Whether every deflated-wealth mean stays below `1 + 4·stderr`.
    pub supermartingale_ok: bool,
    /// Fraction of rebalancing events with negative cash.
    pub borrowing_fraction: f64,
    /// Fraction of rebalancing events with a negative stock weight.
    pub shorting_fraction: f64,
    pub min_wealth: f64,
    /// Paths whose market state was floored at `hit_epsilon` at some step.
    pub clamped_paths: usize,
    pub cfg_echo: ConfigEcho,
    #[serde(skip)]
    pub paths: Vec<PathSeries>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSeries {
    pub times: Vec<f64>,
    pub wealth: Vec<f64>,
    pub market: Vec<f64>,
    pub replication_error: Vec<f64>,
}

struct PathOutcome {
    terminal: f64,
    market: f64,
    error_sum: f64,
    error_count: u64,
    max_error: f64,
    terminal_error: f64,
    deflated: Vec<f64>,
    rebalances: u64,
    borrows: u64,
    shorts: u64,
    min_wealth: f64,
    clamped: bool,
    series: Option<PathSeries>,
}

fn report_records(n_records: usize, points: usize) -> Vec<usize> {
    let points = points.clamp(2, n_records.max(2));
    let mut out: Vec<usize> = (0..points)
        .map(|j| ((j * (n_records - 1)) as f64 / (points - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

/// Runs `strategy` from wealth `v0` along market paths, rebalancing at the
/// recorded times of `cfg` and holding weights fixed in between.
#[allow(clippy::too_many_arguments)]
pub fn backtest(
    model: &ModelSpec,
    strategy: &dyn Strategy,
    x0: &[f64],
    v0: f64,
    horizon: f64,
    n_paths: usize,
    cfg: &SimConfig,
    sol: Option<&PdeSolution>,
    opts: &BacktestOptions,
) -> Result<BacktestReport> {
    cfg.validate()?;
    cfg.check_horizon(horizon)?;
    if x0.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: x0.len(),
        });
    }
    if x0.iter().any(|&v| !(v > cfg.hit_epsilon)) {
        return Err(Error::NonPositiveState(x0.to_vec()));
    }
    if !(v0 > 0.0) || !v0.is_finite() {
        return Err(Error::ParamInvalid(format!(
            "initial wealth must be positive, got {v0}"
        )));
    }
    if let Some(s) = sol {
        if s.kind != SolutionKind::OrthantU || s.grid.horizon < horizon - 1e-12 {
            return Err(Error::ConfigInvalid(
                "replication check needs an orthant solution covering the horizon".into(),
            ));
        }
    }
    let lookup = sol.map(|s| PdeLookup::new(s, model, x0));
    let record_steps = cfg.record_steps();
    let reports = report_records(record_steps.len(), opts.report_points);
    let report_times: Vec<f64> = reports
        .iter()
        .map(|&r| record_steps[r] as f64 * cfg.dt)
        .collect();
    let total0: f64 = x0.iter().sum();
    let h0 = model.potential_unchecked(x0);

    let outcomes = cfg.run_parallel(n_paths, |p| {
        let seed = path_seed(cfg.seed, p as u64);
        let mut st = MarketStepper::new(model, cfg, x0, seed);
        let mut v = v0;
        let mut w = strategy.weights(0.0, x0)?;
        let mut out = PathOutcome {
            terminal: v0,
            market: v0,
            error_sum: 0.0,
            error_count: 0,
            max_error: 0.0,
            terminal_error: 0.0,
            deflated: Vec::with_capacity(reports.len()),
            rebalances: 1,
            borrows: w.borrows() as u64,
            shorts: w.shorts() as u64,
            min_wealth: v0,
            clamped: false,
            series: opts.keep_paths.then(|| PathSeries {
                times: Vec::new(),
                wealth: Vec::new(),
                market: Vec::new(),
                replication_error: Vec::new(),
            }),
        };
        let mut next_record = 1;
        let mut next_report = 0;
        for step in 0..=cfg.n_steps {
            if step > 0 {
                st.advance();
                let growth: f64 = w.pi.iter().zip(st.returns()).map(|(a, r)| a * r).sum();
                v *= 1.0 + growth;
                let t = st.time();
                if !(v > 0.0) {
                    return Err(Error::WealthNonPositive {
                        path: p,
                        seed,
                        time: t,
                    });
                }
                out.min_wealth = out.min_wealth.min(v);
            }
            let is_record = step == 0 || record_steps.get(next_record) == Some(&step);
            if !is_record {
                continue;
            }
            let rec = if step == 0 { 0 } else { next_record };
            let t = record_steps[rec] as f64 * cfg.dt;
            let x = st.state();
            let total: f64 = x.iter().sum();
            let market = v0 * total / total0;
            let mut err = 0.0;
            if let Some(l) = &lookup {
                let target = total * l.query(horizon - t, x)?.value;
                err = (v - target).abs() / target.max(1e-12);
                if step > 0 {
                    out.error_sum += err;
                    out.error_count += 1;
                    out.max_error = out.max_error.max(err);
                }
                if step == cfg.n_steps {
                    out.terminal_error = err;
                }
            }
            if reports.get(next_report) == Some(&rec) {
                let z = (h0 - model.potential_unchecked(x) - st.killing_integral()).exp();
                out.deflated.push(z * v / v0);
                if let Some(s) = out.series.as_mut() {
                    s.times.push(t);
                    s.wealth.push(v);
                    s.market.push(market);
                    s.replication_error.push(err);
                }
                next_report += 1;
            }
            if step > 0 {
                next_record += 1;
            }
            if step < cfg.n_steps {
                w = strategy.weights(t, x)?;
                if !w.pi.iter().all(|v| v.is_finite()) {
                    return Err(Error::ParamInvalid(format!(
                        "strategy returned non-finite weights at t = {t}"
                    )));
                }
                out.rebalances += 1;
                out.borrows += w.borrows() as u64;
                out.shorts += w.shorts() as u64;
            }
            out.terminal = v;
            out.market = market;
        }
        out.clamped = st.clamped;
        Ok(out)
    })?;

    let mut report = BacktestReport {
        strategy: strategy.name(),
        v0,
        horizon,
        n_paths,
        terminal_wealth: outcomes.iter().map(|o| o.terminal).collect(),
        relative_wealth: outcomes.iter().map(|o| o.terminal / o.market).collect(),
        replication: None,
        arbitrage_frequency: 0.0,
        strict_beat_frequency: 0.0,
        deflated_wealth: Vec::with_capacity(reports.len()),
        supermartingale_ok: true,
        borrowing_fraction: 0.0,
        shorting_fraction: 0.0,
        min_wealth: outcomes.iter().map(|o| o.min_wealth).fold(v0, f64::min),
        clamped_paths: outcomes.iter().filter(|o| o.clamped).count(),
        cfg_echo: ConfigEcho::from_config(cfg),
        paths: Vec::new(),
    };
    if n_paths > 0 {
        let nf = n_paths as f64;
        let beat = |o: &&PathOutcome| o.terminal >= o.market * (1.0 - opts.tolerance);
        report.arbitrage_frequency = outcomes.iter().filter(beat).count() as f64 / nf;
        report.strict_beat_frequency =
            outcomes.iter().filter(|o| o.terminal > o.market).count() as f64 / nf;
        let events: u64 = outcomes.iter().map(|o| o.rebalances).sum();
        report.borrowing_fraction =
            outcomes.iter().map(|o| o.borrows).sum::<u64>() as f64 / events as f64;
        report.shorting_fraction =
            outcomes.iter().map(|o| o.shorts).sum::<u64>() as f64 / events as f64;
        if lookup.is_some() {
            let sum: f64 = outcomes.iter().map(|o| o.error_sum).sum();
            let count: u64 = outcomes.iter().map(|o| o.error_count).sum();
            report.replication = Some(ReplicationStats {
                mean: if count == 0 { 0.0 } else { sum / count as f64 },
                max: outcomes.iter().map(|o| o.max_error).fold(0.0, f64::max),
                terminal_mean: outcomes.iter().map(|o| o.terminal_error).sum::<f64>() / nf,
            });
        }
        for (j, &t) in report_times.iter().enumerate() {
            let acc: Accumulator = outcomes.iter().map(|o| o.deflated[j]).collect();
            let point = SeriesPoint {
                t,
                mean: acc.mean(),
                stderr: acc.stderr(),
            };
            report.supermartingale_ok &= point.mean <= 1.0 + 4.0 * point.stderr + 1e-12;
            report.deflated_wealth.push(point);
        }
    }
    if opts.keep_paths {
        report.paths = outcomes.into_iter().filter_map(|o| o.series).collect();
    }
    Ok(report)
}

impl BacktestReport {
    /// Writes `path_id,t,V,V_market,replication_error` at the diagnostic times.
    pub fn write_paths_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "path_id,t,V,V_market,replication_error")?;
        for (p, s) in self.paths.iter().enumerate() {
            for k in 0..s.times.len() {
                writeln!(
                    w,
                    "{p},{},{},{},{}",
                    s.times[k], s.wealth[k], s.market[k], s.replication_error[k]
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
