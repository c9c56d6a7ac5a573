use std::io::Write;
use std::path::{Path, PathBuf};

use arblab::exitmc::{
    estimate_deflated_value, estimate_deflator_expectation, estimate_exit_probability, ExitEstimate,
};
use arblab::models::{sample_orthant, ModelConfig, ModelKind};
use arblab::pde::{
    proposition_diagnostic, query, read_csv, solve_min_solution, solve_weight_equation, write_csv,
    GridSpec, PdeSolution, SolutionKind, Spacing,
};
use arblab::sde::{simulate_auxiliary, simulate_market, simulate_weights, DEFAULT_STEPS_PER_UNIT};
use arblab::stats::joint_sigma_distance;
use arblab::strategy::{
    backtest, BacktestOptions, Cash, Classical, GeneratedStrategy, OptimalStrategy, PdeLookup,
    Strategy, BACKTEST_STEPS_PER_UNIT,
};
use arblab::{Error, ModelSpec, Result, Scheme, SimConfig};
use clap::ValueEnum;
use serde_json::{json, Value};

use crate::config::{resolve_seed, RunConfig};
use crate::{
    BacktestArgs, Cli, Command, Common, ConditionsArgs, EstimateArgs, FicheraArgs, GridArgs,
    InspectArgs, MethodArg, ProcessArg, SchemeArg, SimulateArgs, SolveArgs, SpacingArg,
    StrategyArgs, StrategyKind, StrategyParams,
};

const DEFAULT_SIM_PATHS: usize = 1000;
const DEFAULT_MC_PATHS: usize = 10_000;
const DEFAULT_BACKTEST_PATHS: usize = 1000;
const DEFAULT_WEIGHT_EPSILON: f64 = 1e-4;
const DEFAULT_WEIGHT_POINTS: usize = 401;
const DEFAULT_DELTA: f64 = 1e-3;

/// Everything resolved from flags, the config file and the environment.
struct Ctx<'a> {
    common: &'a Common,
    cfg: RunConfig,
    model: ModelSpec,
    x0: Vec<f64>,
    horizon: Option<f64>,
    seed: u64,
    workers: Option<usize>,
}

impl Ctx<'_> {
    fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(1.0)
    }

    fn sim_config(
        &self,
        stride: Option<usize>,
        default_stride: Option<usize>,
        default_spu: usize,
    ) -> Result<SimConfig> {
        let c = self.common;
        let s = &self.cfg.sim;
        let horizon = self.horizon();
        let spu = c.steps_per_unit.or(s.steps_per_unit).unwrap_or(default_spu);
        if spu == 0 {
            return Err(Error::ConfigInvalid(
                "steps_per_unit must be positive".into(),
            ));
        }
        let mut sim = SimConfig::with_resolution(horizon, spu, &self.x0, self.seed);
        if let Some(dt) = c.dt.or(s.dt) {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::ConfigInvalid(format!(
                    "dt must be positive, got {dt}"
                )));
            }
            let steps = (horizon / dt - 1e-9).ceil().max(0.0) as usize;
            sim.n_steps = steps;
            sim.dt = if steps == 0 {
                dt
            } else {
                horizon / steps as f64
            };
        }
        if let Some(scheme) = c.scheme.map(scheme_of).or(s.scheme) {
            sim.scheme = scheme;
        }
        if let Some(eps) = c.hit_epsilon.or(s.hit_epsilon) {
            sim.hit_epsilon = eps;
        }
        sim.record_stride = stride
            .or(s.record_stride)
            .or(default_stride)
            .unwrap_or(sim.n_steps)
            .max(1);
        sim.workers = self.workers;
        sim.validate()?;
        Ok(sim)
    }
}

fn scheme_of(s: SchemeArg) -> Scheme {
    match s {
        SchemeArg::Euler => Scheme::Euler,
        SchemeArg::FullTruncationEuler => Scheme::FullTruncationEuler,
    }
}

fn parse_enum<T: ValueEnum>(what: &str, s: &str) -> Result<T> {
    T::from_str(s, true).map_err(|_| Error::ConfigInvalid(format!("unknown {what} `{s}`")))
}

fn load_model_config(path: &Path) -> Result<ModelConfig> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))
}

fn build_ctx<'a>(common: &'a Common, env_seed: Option<&str>) -> Result<Ctx<'a>> {
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut mc = match &common.model_config {
        Some(p) => Some(load_model_config(p)?),
        None => cfg.model.clone(),
    };
    if let Some(name) = &common.model {
        if mc.as_ref().is_none_or(|m| &m.name != name) {
            mc = Some(ModelConfig {
                name: name.clone(),
                ..Default::default()
            });
        }
    }
    let mut mc =
        mc.ok_or_else(|| Error::ConfigInvalid("no model given (use --model or --config)".into()))?;
    if common.n.is_some() {
        mc.n = common.n;
    }
    if common.zeta.is_some() {
        mc.zeta = common.zeta;
    }
    let model = ModelSpec::from_config(&mc)?;
    let x0 = common
        .x0
        .clone()
        .or_else(|| cfg.x0.clone())
        .unwrap_or_else(|| vec![1.0; model.n()]);
    if x0.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::NonPositiveState(x0));
    }
    let horizon = common.horizon.or(cfg.horizon);
    if let Some(h) = horizon {
        if !(h >= 0.0) || !h.is_finite() {
            return Err(Error::ConfigInvalid(format!(
                "T must be a finite non-negative number, got {h}"
            )));
        }
    }
    let seed = resolve_seed(common.seed, cfg.seed, env_seed)?;
    let workers = common.workers.or(cfg.workers);
    if workers == Some(0) {
        return Err(Error::ConfigInvalid("workers must be at least 1".into()));
    }
    Ok(Ctx {
        common,
        cfg,
        model,
        x0,
        horizon,
        seed,
        workers,
    })
}

pub(crate) fn dispatch(cli: &Cli, env_seed: Option<&str>, log: &mut dyn Write) -> Result<Value> {
    let ctx = build_ctx(&cli.common, env_seed)?;
    let _ = writeln!(
        log,
        "arblab: model {} (n = {}), seed {}",
        ctx.model.name(),
        ctx.model.n(),
        ctx.seed
    );
    match &cli.command {
        Command::Inspect(a) => inspect(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::EstimateU(a) => estimate_u(&ctx, a),
        Command::SolvePde(a) => solve_pde(&ctx, a, log),
        Command::Strategy(a) => strategy(&ctx, a, log),
        Command::Backtest(a) => run_backtest(&ctx, a, log),
        Command::Fichera(a) => fichera(&ctx, a),
        Command::Conditions(a) => conditions(&ctx, a),
    }
}

fn model_summary(model: &ModelSpec) -> Value {
    json!({
        "name": model.name(),
        "n": model.n(),
        "params": model.params(),
        "extends_to_faces": model.extends_to_faces(),
        "weight_markovian": model.is_weight_markovian(),
        "killing_vanishes": model.killing_vanishes(),
    })
}

fn inspect(ctx: &Ctx, a: &InspectArgs) -> Result<Value> {
    let m = &ctx.model;
    m.validate()?;
    let at = a.at.clone().unwrap_or_else(|| ctx.x0.clone());
    Ok(json!({
        "model": model_summary(m),
        "at": at,
        "rates": m.rate(&at)?,
        "coefficients": m.coefficients(&at)?,
        "auxiliary_drift": m.auxiliary_drift(&at)?,
        "deflator_terms": m.deflator_terms(&at)?,
        "killing_from_potential": m.killing_from_potential(&at)?,
        "potential_residual": m.potential_residual(&at)?,
    }))
}

fn simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<Value> {
    let s = &ctx.cfg.sim;
    let process = match (a.process, &s.process) {
        (Some(p), _) => p,
        (None, Some(name)) => parse_enum("process", name)?,
        (None, None) => ProcessArg::Market,
    };
    let paths = a.paths.or(s.paths).unwrap_or(DEFAULT_SIM_PATHS);
    let horizon = ctx.horizon();
    let sim = ctx.sim_config(a.stride, None, DEFAULT_STEPS_PER_UNIT)?;
    let total: f64 = ctx.x0.iter().sum();
    let start: Vec<f64> = match process {
        ProcessArg::Weights => ctx.x0.iter().map(|v| v / total).collect(),
        _ => ctx.x0.clone(),
    };
    let batch = match process {
        ProcessArg::Market => simulate_market(&ctx.model, &start, horizon, paths, &sim)?,
        ProcessArg::Auxiliary => simulate_auxiliary(&ctx.model, &start, horizon, paths, &sim)?,
        ProcessArg::Weights => simulate_weights(&ctx.model, &start, horizon, paths, &sim)?,
    };
    let csv = a.out.clone().or_else(|| ctx.cfg.output.paths_csv.clone());
    if let Some(p) = &csv {
        batch.write_csv(p)?;
    }
    let n = batch.n;
    let mut terminal_mean = vec![0.0; n];
    for p in 0..batch.n_paths {
        for (m, v) in terminal_mean.iter_mut().zip(batch.terminal(p)) {
            *m += v / batch.n_paths as f64;
        }
    }
    Ok(json!({
        "process": batch.process,
        "model": ctx.model.name(),
        "n_paths": batch.n_paths,
        "n_steps": sim.n_steps,
        "dt": sim.dt,
        "horizon": horizon,
        "seed": sim.seed,
        "hit_epsilon": sim.hit_epsilon,
        "initial": start,
        "recorded_times": batch.times,
        "terminal_mean": if batch.n_paths > 0 { Some(terminal_mean) } else { None },
        "hit_fraction": batch.hit_fraction(),
        "clamped_paths": batch.clamped.iter().filter(|c| **c).count(),
        "csv": csv,
    }))
}

fn estimate_u(ctx: &Ctx, a: &EstimateArgs) -> Result<Value> {
    let mc = &ctx.cfg.mc;
    let method = match (a.method, &mc.method) {
        (Some(m), _) => m,
        (None, Some(name)) => parse_enum("method", name)?,
        (None, None) => MethodArg::Exit,
    };
    let paths = a.paths.or(mc.paths).unwrap_or(DEFAULT_MC_PATHS);
    let horizon = ctx.horizon();
    let sim = ctx.sim_config(None, None, DEFAULT_STEPS_PER_UNIT)?;
    let (m, x0) = (&ctx.model, &ctx.x0);
    let one = |which: MethodArg| -> Result<ExitEstimate> {
        match which {
            MethodArg::Exit => estimate_exit_probability(m, x0, horizon, paths, &sim),
            MethodArg::Deflated => estimate_deflated_value(m, x0, horizon, paths, &sim),
            _ => estimate_deflator_expectation(m, x0, horizon, paths, &sim),
        }
    };
    if method != MethodArg::All {
        return Ok(serde_json::to_value(one(method)?)?);
    }
    let estimates = [
        one(MethodArg::Exit)?,
        one(MethodArg::Deflated)?,
        one(MethodArg::Deflator)?,
    ];
    let mut table = Vec::new();
    for i in 0..3 {
        for j in i + 1..3 {
            let (p, q) = (&estimates[i], &estimates[j]);
            table.push(json!({
                "a": p.method,
                "b": q.method,
                "difference": p.value - q.value,
                "joint_sigma": joint_sigma_distance(p.value, p.stderr, q.value, q.stderr),
                // E[Z] is not an estimate of U; only the first pair targets the same quantity.
                "same_target": i == 0 && j == 1,
            }));
        }
    }
    Ok(json!({ "x0": x0, "horizon": horizon, "estimates": estimates, "agreement": table }))
}

fn grid_for_orthant(ctx: &Ctx, g: &GridArgs, horizon: f64) -> Result<GridSpec> {
    let p = &ctx.cfg.pde;
    let mut grid = GridSpec::for_model(&ctx.model, &ctx.x0, horizon);
    if let Some(points) = g.points.or(p.points) {
        grid.points_per_axis = points;
    }
    if let Some(lower) = g.lower.clone().or_else(|| p.lower.clone()) {
        grid.lower = lower;
    }
    if let Some(upper) = g.upper.clone().or_else(|| p.upper.clone()) {
        grid.upper = upper;
    }
    apply_common_grid(&mut grid, ctx, g);
    grid.validate()?;
    Ok(grid)
}

fn grid_for_simplex(
    ctx: &Ctx,
    g: &GridArgs,
    epsilon: Option<f64>,
    horizon: f64,
) -> Result<GridSpec> {
    let p = &ctx.cfg.pde;
    let eps = epsilon.or(p.epsilon).unwrap_or(DEFAULT_WEIGHT_EPSILON);
    let points = g.points.or(p.points).unwrap_or(DEFAULT_WEIGHT_POINTS);
    let mut grid = GridSpec::simplex(eps, points, horizon);
    apply_common_grid(&mut grid, ctx, g);
    grid.validate()?;
    Ok(grid)
}

fn apply_common_grid(grid: &mut GridSpec, ctx: &Ctx, g: &GridArgs) {
    let p = &ctx.cfg.pde;
    if let Some(d) = g.d_tau.or(p.d_tau) {
        grid.d_tau = d;
    }
    if let Some(s) = g.spacing {
        grid.spacing = match s {
            SpacingArg::Uniform => Spacing::Uniform,
            SpacingArg::Sqrt => Spacing::Sqrt,
        };
    } else if let Some(s) = p.spacing {
        grid.spacing = s;
    }
    if let Some(k) = g.slices.or(p.slices) {
        grid.slices = k;
    }
}

fn positive_horizon(ctx: &Ctx) -> Result<f64> {
    let h = ctx.horizon();
    if h > 0.0 {
        Ok(h)
    } else {
        Err(Error::ConfigInvalid("the PDE needs T > 0".into()))
    }
}

fn solve_u(
    ctx: &Ctx,
    g: &GridArgs,
    load: Option<&PathBuf>,
    log: &mut dyn Write,
) -> Result<PdeSolution> {
    let sol = match load {
        Some(p) => read_csv(p)?,
        None => {
            let grid = grid_for_orthant(ctx, g, positive_horizon(ctx)?)?;
            let _ = writeln!(log, "arblab: solving for U on {} nodes", grid.n_nodes());
            solve_min_solution(&ctx.model, &grid)?
        }
    };
    expect_kind(&sol, SolutionKind::OrthantU, ctx.model.n())?;
    Ok(sol)
}

fn solve_q(
    ctx: &Ctx,
    g: &GridArgs,
    epsilon: Option<f64>,
    load: Option<&PathBuf>,
    log: &mut dyn Write,
) -> Result<PdeSolution> {
    let sol = match load {
        Some(p) => read_csv(p)?,
        None => {
            let grid = grid_for_simplex(ctx, g, epsilon, positive_horizon(ctx)?)?;
            let _ = writeln!(log, "arblab: solving for Q on {} nodes", grid.n_nodes());
            solve_weight_equation(&ctx.model, &grid)?
        }
    };
    expect_kind(&sol, SolutionKind::SimplexQ, 1)?;
    Ok(sol)
}

fn expect_kind(sol: &PdeSolution, kind: SolutionKind, n: usize) -> Result<()> {
    if sol.kind != kind {
        return Err(Error::ConfigInvalid(format!(
            "expected a {kind:?} solution, got {:?}",
            sol.kind
        )));
    }
    if sol.grid.n != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: sol.grid.n,
        });
    }
    Ok(())
}

fn solve_pde(ctx: &Ctx, a: &SolveArgs, log: &mut dyn Write) -> Result<Value> {
    let p = &ctx.cfg.pde;
    let load = a.load.as_ref().or(ctx.cfg.output.load_solution.as_ref());
    let weights = a.weights || p.weights.unwrap_or(false);
    let sol = if weights {
        solve_q(ctx, &a.grid, a.epsilon, load, log)?
    } else {
        solve_u(ctx, &a.grid, load, log)?
    };
    let tau = ctx.horizon.unwrap_or(sol.grid.horizon);
    let csv = a
        .out
        .clone()
        .or_else(|| ctx.cfg.output.solution_csv.clone());
    if let Some(path) = &csv {
        write_csv(&sol, path)?;
    }
    let total: f64 = ctx.x0.iter().sum();
    let (at, q) = match sol.kind {
        SolutionKind::OrthantU => {
            let lookup = PdeLookup::new(&sol, &ctx.model, &ctx.x0);
            (ctx.x0.clone(), lookup.query(tau, &ctx.x0)?)
        }
        SolutionKind::SimplexQ => {
            let m1 = vec![ctx.x0[0] / total];
            let q = query(&sol, tau, &m1)?;
            (m1, q)
        }
    };
    let diagnostic = (sol.kind == SolutionKind::OrthantU)
        .then(|| proposition_diagnostic(&sol, a.delta.or(p.delta).unwrap_or(DEFAULT_DELTA)));
    Ok(json!({
        "kind": sol.kind,
        "grid": sol.grid,
        "stats": sol.stats,
        "clipped": sol.clipped(),
        "tau": tau,
        "at": at,
        "value": q.value,
        "grad_log": q.grad_log,
        "diagnostic": diagnostic,
        "csv": csv,
    }))
}

/// Classical portfolios need their parameter; optimal and generated need a solution.
fn classical(kind: StrategyKind, params: &StrategyParams, ctx: &Ctx) -> Result<Option<Classical>> {
    let b = &ctx.cfg.backtest;
    let c = params.c.or(b.c);
    let p = params.p.or(b.p);
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| Error::ParamInvalid(format!("strategy needs --{name}")))
    };
    let out = match kind {
        StrategyKind::Market => Classical::Market,
        StrategyKind::Entropy => Classical::Entropy { c: need(c, "c")? },
        StrategyKind::EwBlend => Classical::EwBlend { c: need(c, "c")? },
        StrategyKind::Diversity => Classical::DiversityP { p: need(p, "p")? },
        _ => return Ok(None),
    };
    out.validate()?;
    Ok(Some(out))
}

fn strategy(ctx: &Ctx, a: &StrategyArgs, log: &mut dyn Write) -> Result<Value> {
    let kind = a.kind.unwrap_or(StrategyKind::Market);
    let horizon = ctx.horizon();
    let tau = a.tau.unwrap_or(horizon);
    if !(tau >= 0.0) || tau > horizon {
        return Err(Error::ConfigInvalid(format!(
            "tau must lie in [0, T], got {tau}"
        )));
    }
    let x = a.at.clone().unwrap_or_else(|| ctx.x0.clone());
    if x.len() != ctx.model.n() {
        return Err(Error::DimensionMismatch {
            expected: ctx.model.n(),
            got: x.len(),
        });
    }
    let t = horizon - tau;
    let total: f64 = x.iter().sum();
    let mu: Vec<f64> = x.iter().map(|v| v / total).collect();
    let mut value = None;
    let weights = match kind {
        StrategyKind::Optimal => {
            let sol = solve_u(ctx, &a.params.grid, a.params.solution.as_ref(), log)?;
            let lookup = PdeLookup::new(&sol, &ctx.model, &ctx.x0);
            value = Some(lookup.query(tau, &x)?.value);
            OptimalStrategy { lookup, horizon }.weights(t, &x)?
        }
        StrategyKind::Generated => {
            let sol = solve_q(ctx, &a.params.grid, None, a.params.solution.as_ref(), log)?;
            GeneratedStrategy { sol: &sol, horizon }.weights(t, &x)?
        }
        StrategyKind::Cash => Cash.weights(t, &x)?,
        _ => classical(kind, &a.params, ctx)?
            .expect("classical kind")
            .weights(t, &x)?,
    };
    Ok(json!({
        "strategy": kind.to_possible_value().map(|v| v.get_name().to_string()),
        "tau": tau,
        "x": x,
        "mu": mu,
        "pi": weights.pi,
        "cash": weights.cash,
        "borrows": weights.borrows(),
        "shorts": weights.shorts(),
        "u_value": value,
    }))
}

fn run_backtest(ctx: &Ctx, a: &BacktestArgs, log: &mut dyn Write) -> Result<Value> {
    let b = &ctx.cfg.backtest;
    let kind = match (a.strategy, &b.strategy) {
        (Some(k), _) => k,
        (None, Some(name)) => parse_enum("strategy", name)?,
        (None, None) => StrategyKind::Market,
    };
    let horizon = positive_horizon(ctx)?;
    let paths = a.paths.or(b.paths).unwrap_or(DEFAULT_BACKTEST_PATHS);
    let replicate = a.replicate || b.replicate.unwrap_or(false);
    let sim = ctx.sim_config(a.stride, Some(1), BACKTEST_STEPS_PER_UNIT)?;
    let solution = a.params.solution.as_ref();

    let u_sol = if kind == StrategyKind::Optimal || replicate {
        Some(solve_u(ctx, &a.params.grid, solution, log)?)
    } else {
        None
    };
    let q_sol = if kind == StrategyKind::Generated {
        Some(solve_q(ctx, &a.params.grid, None, solution, log)?)
    } else {
        None
    };
    let total: f64 = ctx.x0.iter().sum();
    let u0 = match &u_sol {
        Some(sol) => Some(
            PdeLookup::new(sol, &ctx.model, &ctx.x0)
                .query(horizon, &ctx.x0)?
                .value,
        ),
        None => None,
    };
    let v0 = match a.v0.or(b.v0) {
        Some(v) => v,
        None if kind == StrategyKind::Optimal => {
            u0.expect("optimal strategy has a solution") * total
        }
        None => total,
    };

    let classical_kind = classical(kind, &a.params, ctx)?;
    let strat: Box<dyn Strategy + '_> = match kind {
        StrategyKind::Optimal => Box::new(OptimalStrategy {
            lookup: PdeLookup::new(u_sol.as_ref().expect("solved"), &ctx.model, &ctx.x0),
            horizon,
        }),
        StrategyKind::Generated => Box::new(GeneratedStrategy {
            sol: q_sol.as_ref().expect("solved"),
            horizon,
        }),
        StrategyKind::Cash => Box::new(Cash),
        _ => Box::new(classical_kind.expect("classical kind")),
    };
    let mut opts = BacktestOptions::default();
    if let Some(t) = a.tolerance.or(b.tolerance) {
        opts.tolerance = t;
    }
    if let Some(k) = a.report_points.or(b.report_points) {
        opts.report_points = k;
    }
    let csv = a
        .paths_csv
        .clone()
        .or_else(|| ctx.cfg.output.paths_csv.clone());
    opts.keep_paths = csv.is_some();
    let _ = writeln!(
        log,
        "arblab: backtesting {} over {paths} paths",
        strat.name()
    );
    let report = backtest(
        &ctx.model,
        strat.as_ref(),
        &ctx.x0,
        v0,
        horizon,
        paths,
        &sim,
        u_sol.as_ref(),
        &opts,
    )?;
    if let Some(p) = &csv {
        report.write_paths_csv(p)?;
    }
    let mut value = serde_json::to_value(&report)?;
    if let Value::Object(map) = &mut value {
        map.insert("u0".into(), json!(u0));
        map.insert("csv".into(), json!(csv));
    }
    Ok(value)
}

fn fichera(ctx: &Ctx, a: &FicheraArgs) -> Result<Value> {
    let m = &ctx.model;
    let n = m.n();
    if a.face == 0 || a.face > n {
        return Err(Error::ConfigInvalid(format!(
            "face must lie in 1..={n}, got {}",
            a.face
        )));
    }
    if a.samples == 0 || !(a.lo > 0.0 && a.lo < a.hi) {
        return Err(Error::ConfigInvalid(
            "need samples > 0 and 0 < lo < hi".into(),
        ));
    }
    let i = a.face - 1;
    let zeta = match m.kind() {
        ModelKind::VolStab { zeta } => Some(*zeta),
        _ => None,
    };
    let mut rows = Vec::with_capacity(a.samples);
    let (mut f_min, mut f_hat_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut closed_err: f64 = 0.0;
    for mut x in sample_orthant(n - 1, a.samples, a.lo, a.hi) {
        x.insert(i, 0.0);
        let d = m.fichera_drifts(&x)?;
        f_min = f_min.min(d.f[i]);
        f_hat_max = f_hat_max.max(d.f_hat[i]);
        if let Some(z) = zeta {
            let s: f64 = x.iter().sum();
            for j in 0..n {
                closed_err = closed_err
                    .max((d.f[j] - 0.5 * (z * s - x[j])).abs())
                    .max((d.f_hat[j] - 0.5 * (x[j] - s)).abs());
            }
        }
        rows.push(json!({ "x": x, "f": d.f, "f_hat": d.f_hat }));
    }
    Ok(json!({
        "model": model_summary(m),
        "face": a.face,
        "n_samples": rows.len(),
        "f_face_min": f_min,
        "f_hat_face_max": f_hat_max,
        "sign_pattern_holds": f_min > 0.0 && f_hat_max < 0.0,
        "closed_form_max_abs_error": zeta.map(|_| closed_err),
        "samples": rows,
    }))
}

fn conditions(ctx: &Ctx, a: &ConditionsArgs) -> Result<Value> {
    if a.samples == 0 || !(a.lo > 0.0 && a.lo < a.hi) {
        return Err(Error::ConfigInvalid(
            "need samples > 0 and 0 < lo < hi".into(),
        ));
    }
    let samples = sample_orthant(ctx.model.n(), a.samples, a.lo, a.hi);
    let report = ctx
        .model
        .check_arbitrage_conditions(&samples, ctx.horizon())?;
    Ok(json!({ "model": model_summary(&ctx.model), "report": report }))
}
