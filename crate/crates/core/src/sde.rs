//! Euler simulation of the market diffusion, the auxiliary diffusion with
//! orthant-boundary absorption, and the relative-weight process.
//!
//! Each path draws its normals from [`PathRng`] keyed by its own seed and
//! the step index, so batches are bit-identical for any worker count.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::rng::{path_seed, PathRng};

/// Minimum number of Euler steps per unit of horizon for default configs.
pub const DEFAULT_STEPS_PER_UNIT: usize = 2000;
/// Default absorption threshold relative to the smallest initial coordinate.
pub const DEFAULT_HIT_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Plain Euler; the state is floored at `hit_epsilon` after every step.
    Euler,
    /// Euler with coefficients evaluated at the state clamped to `hit_epsilon`.
    FullTruncationEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    Market,
    Auxiliary,
    Weights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub scheme: Scheme,
    pub seed: u64,
    pub hit_epsilon: f64,
    pub record_stride: usize,
    /// Worker-count hint; `None` uses the global pool. Results never depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl SimConfig {
    /// Default configuration for `horizon` started at `x0`.
    pub fn for_horizon(horizon: f64, x0: &[f64], seed: u64) -> Self {
        Self::with_resolution(horizon, DEFAULT_STEPS_PER_UNIT, x0, seed)
    }

    pub fn with_resolution(horizon: f64, steps_per_unit: usize, x0: &[f64], seed: u64) -> Self {
        let n_steps = (horizon * steps_per_unit as f64).ceil().max(0.0) as usize;
        let dt = if n_steps == 0 {
            1.0 / steps_per_unit.max(1) as f64
        } else {
            horizon / n_steps as f64
        };
        let min_x0 = x0.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            dt,
            n_steps,
            scheme: Scheme::FullTruncationEuler,
            seed,
            hit_epsilon: DEFAULT_HIT_FRACTION * min_x0,
            record_stride: n_steps.max(1),
            workers: None,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride.max(1);
        self
    }

    pub fn with_workers(mut self, workers: Option<usize>) -> Self {
        self.workers = workers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::ConfigInvalid(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.hit_epsilon > 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "hit_epsilon must be positive, got {}",
                self.hit_epsilon
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::ConfigInvalid(
                "record_stride must be at least 1".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(Error::ConfigInvalid("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub(crate) fn check_horizon(&self, horizon: f64) -> Result<()> {
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::ConfigInvalid(format!(
                "horizon must be non-negative, got {horizon}"
            )));
        }
        if (self.horizon() - horizon).abs() > 1e-12 * horizon.max(1.0) {
            return Err(Error::ConfigInvalid(format!(
                "dt * n_steps = {} does not match horizon {horizon}",
                self.horizon()
            )));
        }
        Ok(())
    }

    /// Step indices (1-based, in steps taken) at which states are recorded.
    pub(crate) fn record_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = (0..=self.n_steps).step_by(self.record_stride).collect();
        if *steps.last().unwrap() != self.n_steps {
            steps.push(self.n_steps);
        }
        steps
    }

    pub(crate) fn run_parallel<T, F>(&self, n_paths: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        match self.workers {
            Some(w) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .map_err(|e| Error::ConfigInvalid(format!("worker pool: {e}")))?;
                pool.install(|| (0..n_paths).into_par_iter().map(&f).collect())
            }
            None => (0..n_paths).into_par_iter().map(&f).collect(),
        }
    }
}

/// Simulated trajectories at the recorded times.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub process: Process,
    pub n: usize,
    pub n_paths: usize,
    pub times: Vec<f64>,
    /// `[path][record][coordinate]`, flattened.
    states: Vec<f64>,
    /// `∫₀ᵗ k(X) ds` at each record, `[path][record]`.
    killing: Vec<f64>,
    /// Per record: absorbed (auxiliary, weights) or clamped (market).
    flags: Vec<bool>,
    pub hit_time: Vec<Option<f64>>,
    /// Whether any step of the path was clamped at `hit_epsilon`.
    pub clamped: Vec<bool>,
    pub path_seeds: Vec<u64>,
}

struct PathRecord {
    states: Vec<f64>,
    killing: Vec<f64>,
    flags: Vec<bool>,
    hit_time: Option<f64>,
    clamped: bool,
}

impl PathBatch {
    pub fn n_records(&self) -> usize {
        self.times.len()
    }

    pub fn state(&self, path: usize, record: usize) -> &[f64] {
        let off = (path * self.times.len() + record) * self.n;
        &self.states[off..off + self.n]
    }

    pub fn terminal(&self, path: usize) -> &[f64] {
        self.state(path, self.times.len() - 1)
    }

    pub fn killing_integral(&self, path: usize, record: usize) -> f64 {
        self.killing[path * self.times.len() + record]
    }

    pub fn flag(&self, path: usize, record: usize) -> bool {
        self.flags[path * self.times.len() + record]
    }

    /// Fraction of paths absorbed by the final time.
    pub fn hit_fraction(&self) -> f64 {
        if self.n_paths == 0 {
            return 0.0;
        }
        self.hit_time.iter().filter(|h| h.is_some()).count() as f64 / self.n_paths as f64
    }

    /// Writes `path_id,time,x_1..x_n,hit_flag`; gzip when the name ends in `.gz`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        if path.extension().is_some_and(|e| e == "gz") {
            let enc = flate2::write::GzEncoder::new(file, flate2::Compression::default());
            let mut w = BufWriter::new(enc);
            self.write_csv_to(&mut w)?;
            w.into_inner().map_err(|e| e.into_error())?.finish()?;
        } else {
            let mut w = BufWriter::new(file);
            self.write_csv_to(&mut w)?;
            w.flush()?;
        }
        Ok(())
    }

    pub fn write_csv_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write!(w, "path_id,time")?;
        for i in 1..=self.n {
            write!(w, ",x_{i}")?;
        }
        writeln!(w, ",hit_flag")?;
        for p in 0..self.n_paths {
            for (r, t) in self.times.iter().enumerate() {
                write!(w, "{p},{t}")?;
                for v in self.state(p, r) {
                    write!(w, ",{v}")?;
                }
                writeln!(w, ",{}", self.flag(p, r) as u8)?;
            }
        }
        Ok(())
    }
}

/// One Euler path of the market diffusion, exposed step by step so that
/// wealth processes can share its Brownian increments.
pub(crate) struct MarketStepper<'a> {
    model: &'a ModelSpec,
    rng: PathRng,
    dt: f64,
    sqrt_dt: f64,
    eps: f64,
    scheme: Scheme,
    step: u64,
    /// Internal Euler state.
    x: Vec<f64>,
    /// State at which coefficients are evaluated (and which is reported).
    xc: Vec<f64>,
    drift: Vec<f64>,
    vol: Vec<f64>,
    z: Vec<f64>,
    /// Realised simple returns of the reported state over the last step.
    returns: Vec<f64>,
    killing_rate: f64,
    killing_integral: f64,
    track_killing: bool,
    diagonal: bool,
    pub clamped: bool,
}

impl<'a> MarketStepper<'a> {
    pub fn new(model: &'a ModelSpec, cfg: &SimConfig, x0: &[f64], seed: u64) -> Self {
        let n = model.n();
        let track_killing = !model.killing_vanishes();
        let mut s = Self {
            model,
            rng: PathRng::new(seed),
            dt: cfg.dt,
            sqrt_dt: cfg.dt.sqrt(),
            eps: cfg.hit_epsilon,
            scheme: cfg.scheme,
            step: 0,
            x: x0.to_vec(),
            xc: x0.to_vec(),
            drift: vec![0.0; n],
            vol: vec![0.0; n * n],
            z: vec![0.0; n],
            returns: vec![0.0; n],
            killing_rate: 0.0,
            killing_integral: 0.0,
            track_killing,
            diagonal: model.diagonal_noise(),
            clamped: false,
        };
        if track_killing {
            s.killing_rate = model.killing_unchecked(&s.xc);
        }
        s
    }

    pub fn state(&self) -> &[f64] {
        &self.xc
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn killing_integral(&self) -> f64 {
        self.killing_integral
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn at_floor(&self) -> bool {
        self.x.iter().any(|&v| v <= self.eps)
    }

    pub fn advance(&mut self) {
        let n = self.x.len();
        self.model.frak_b_into(&self.xc, &mut self.drift);
        self.model.frak_s_into(&self.xc, &mut self.vol);
        self.rng.normals(self.step, &mut self.z);
        for i in 0..n {
            let noise = if self.diagonal {
                self.vol[i * n + i] * self.z[i]
            } else {
                (0..n).map(|k| self.vol[i * n + k] * self.z[k]).sum()
            };
            self.x[i] += self.drift[i] * self.dt + noise * self.sqrt_dt;
        }
        self.step += 1;
        for i in 0..n {
            if self.x[i] <= self.eps {
                self.clamped = true;
                if self.scheme == Scheme::Euler {
                    self.x[i] = self.eps;
                }
            }
            let prev = self.xc[i];
            self.xc[i] = self.x[i].max(self.eps);
            self.returns[i] = (self.xc[i] - prev) / prev;
        }
        if self.track_killing {
            let k_new = self.model.killing_unchecked(&self.xc);
            self.killing_integral += 0.5 * (self.killing_rate + k_new) * self.dt;
            self.killing_rate = k_new;
        }
    }
}

fn check_open(x0: &[f64], n: usize) -> Result<()> {
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    if x0.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::NonPositiveState(x0.to_vec()));
    }
    Ok(())
}

fn assemble(
    process: Process,
    n: usize,
    cfg: &SimConfig,
    n_paths: usize,
    records: Vec<PathRecord>,
) -> PathBatch {
    let times = cfg
        .record_steps()
        .iter()
        .map(|&s| s as f64 * cfg.dt)
        .collect();
    let mut batch = PathBatch {
        process,
        n,
        n_paths,
        times,
        states: Vec::new(),
        killing: Vec::new(),
        flags: Vec::new(),
        hit_time: Vec::with_capacity(n_paths),
        clamped: Vec::with_capacity(n_paths),
        path_seeds: (0..n_paths as u64)
            .map(|i| path_seed(cfg.seed, i))
            .collect(),
    };
    for r in records {
        batch.states.extend(r.states);
        batch.killing.extend(r.killing);
        batch.flags.extend(r.flags);
        batch.hit_time.push(r.hit_time);
        batch.clamped.push(r.clamped);
    }
    batch
}

/// Simulates the market capitalisations `X` under the real-world measure.
pub fn simulate_market(
    model: &ModelSpec,
    x0: &[f64],
    horizon: f64,
    n_paths: usize,
    cfg: &SimConfig,
) -> Result<PathBatch> {
    cfg.validate()?;
    cfg.check_horizon(horizon)?;
    check_open(x0, model.n())?;
    if x0.iter().any(|&v| v <= cfg.hit_epsilon) {
        return Err(Error::ConfigInvalid(format!(
            "hit_epsilon {} must be below every initial coordinate",
            cfg.hit_epsilon
        )));
    }
    let record_steps = cfg.record_steps();
    let records = cfg.run_parallel(n_paths, |p| {
        let mut st = MarketStepper::new(model, cfg, x0, path_seed(cfg.seed, p as u64));
        let mut rec = PathRecord {
            states: Vec::with_capacity(record_steps.len() * x0.len()),
            killing: Vec::with_capacity(record_steps.len()),
            flags: Vec::with_capacity(record_steps.len()),
            hit_time: None,
            clamped: false,
        };
        let mut next = 0;
        for step in 0..=cfg.n_steps {
            if step > 0 {
                st.advance();
            }
            if record_steps.get(next) == Some(&step) {
                rec.states.extend_from_slice(st.state());
                rec.killing.push(st.killing_integral());
                rec.flags.push(st.at_floor());
                next += 1;
            }
        }
        rec.clamped = st.clamped;
        Ok(rec)
    })?;
    Ok(assemble(Process::Market, model.n(), cfg, n_paths, records))
}

/// Simulates the auxiliary diffusion with drift `𝔟̂`, absorbing each path the
/// first step any coordinate falls to `hit_epsilon` or below.
pub fn simulate_auxiliary(
    model: &ModelSpec,
    y0: &[f64],
    horizon: f64,
    n_paths: usize,
    cfg: &SimConfig,
) -> Result<PathBatch> {
    cfg.validate()?;
    cfg.check_horizon(horizon)?;
    check_open(y0, model.n())?;
    let n = model.n();
    let eps = cfg.hit_epsilon;
    let record_steps = cfg.record_steps();
    let diagonal = model.diagonal_noise();
    let sqrt_dt = cfg.dt.sqrt();
    let records = cfg.run_parallel(n_paths, |p| {
        let rng = PathRng::new(path_seed(cfg.seed, p as u64));
        let mut y = y0.to_vec();
        let mut yc = y0.to_vec();
        let mut drift = vec![0.0; n];
        let mut vol = vec![0.0; n * n];
        let mut z = vec![0.0; n];
        let mut hit = y.iter().any(|&v| v <= eps).then_some(0.0);
        let mut rec = PathRecord {
            states: Vec::with_capacity(record_steps.len() * n),
            killing: vec![0.0; record_steps.len()],
            flags: Vec::with_capacity(record_steps.len()),
            hit_time: None,
            clamped: false,
        };
        let mut next = 0;
        for step in 0..=cfg.n_steps {
            if step > 0 && hit.is_none() {
                for i in 0..n {
                    yc[i] = y[i].max(eps);
                }
                model.aux_drift_into(&yc, &mut drift);
                model.frak_s_into(&yc, &mut vol);
                rng.normals(step as u64 - 1, &mut z);
                for i in 0..n {
                    let noise = if diagonal {
                        vol[i * n + i] * z[i]
                    } else {
                        (0..n).map(|k| vol[i * n + k] * z[k]).sum()
                    };
                    y[i] += drift[i] * cfg.dt + noise * sqrt_dt;
                }
                if y.iter().any(|&v| v <= eps) {
                    hit = Some(step as f64 * cfg.dt);
                }
            }
            if record_steps.get(next) == Some(&step) {
                rec.states.extend_from_slice(&y);
                rec.flags.push(hit.is_some());
                next += 1;
            }
        }
        rec.hit_time = hit;
        rec.clamped = hit.is_some();
        Ok(rec)
    })?;
    Ok(assemble(Process::Auxiliary, n, cfg, n_paths, records))
}

/// Simulates the relative weights `dν_i = ν_i (e_i − ν)ᵀ s(ν) dW`, renormalising
/// to the simplex after each step and absorbing when a weight reaches `hit_epsilon`.
pub fn simulate_weights(
    model: &ModelSpec,
    m0: &[f64],
    horizon: f64,
    n_paths: usize,
    cfg: &SimConfig,
) -> Result<PathBatch> {
    cfg.validate()?;
    cfg.check_horizon(horizon)?;
    let n = model.n();
    if m0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m0.len(),
        });
    }
    let total: f64 = m0.iter().sum();
    if m0.iter().any(|&v| !(v > 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::SimplexViolation(m0.to_vec()));
    }
    if n > 1 && !model.is_weight_markovian() {
        return Err(Error::ConfigInvalid(format!(
            "model `{}` is not driven by its market weights",
            model.name()
        )));
    }
    let eps = cfg.hit_epsilon;
    let record_steps = cfg.record_steps();
    let sqrt_dt = cfg.dt.sqrt();
    let records = cfg.run_parallel(n_paths, |p| {
        let rng = PathRng::new(path_seed(cfg.seed, p as u64));
        let mut nu = m0.to_vec();
        let mut nc = m0.to_vec();
        let mut frak_s = vec![0.0; n * n];
        let mut s = vec![0.0; n * n];
        let mut z = vec![0.0; n];
        let mut dnu = vec![0.0; n];
        let mut hit = (n > 1 && nu.iter().any(|&v| v <= eps)).then_some(0.0);
        let mut rec = PathRecord {
            states: Vec::with_capacity(record_steps.len() * n),
            killing: vec![0.0; record_steps.len()],
            flags: Vec::with_capacity(record_steps.len()),
            hit_time: None,
            clamped: false,
        };
        let mut next = 0;
        for step in 0..=cfg.n_steps {
            if step > 0 && hit.is_none() && n > 1 {
                for i in 0..n {
                    nc[i] = nu[i].max(eps);
                }
                model.frak_s_into(&nc, &mut frak_s);
                for i in 0..n {
                    for k in 0..n {
                        s[i * n + k] = frak_s[i * n + k] / nc[i];
                    }
                }
                rng.normals(step as u64 - 1, &mut z);
                for i in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        let market: f64 = (0..n).map(|j| nu[j] * s[j * n + k]).sum();
                        acc += (s[i * n + k] - market) * z[k];
                    }
                    dnu[i] = nu[i] * acc * sqrt_dt;
                }
                for i in 0..n {
                    nu[i] += dnu[i];
                }
                let sum: f64 = nu.iter().sum();
                nu.iter_mut().for_each(|v| *v /= sum);
                if nu.iter().any(|&v| v <= eps) {
                    hit = Some(step as f64 * cfg.dt);
                    // an overshooting step can leave the simplex; freeze on its edge instead
                    nu.iter_mut().for_each(|v| *v = v.max(eps));
                    let sum: f64 = nu.iter().sum();
                    nu.iter_mut().for_each(|v| *v /= sum);
                }
            }
            if record_steps.get(next) == Some(&step) {
                rec.states.extend_from_slice(&nu);
                rec.flags.push(hit.is_some());
                next += 1;
            }
        }
        rec.hit_time = hit;
        rec.clamped = hit.is_some();
        Ok(rec)
    })?;
    Ok(assemble(Process::Weights, n, cfg, n_paths, records))
}
