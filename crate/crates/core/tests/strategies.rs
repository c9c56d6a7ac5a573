use arblab::pde::{
    read_csv, solve_min_solution, solve_weight_equation, write_csv, GridSpec, PdeSolution,
};
use arblab::strategy::{
    backtest, classical_weights, fgp_weights, optimal_weights, BacktestOptions, BacktestReport,
    Cash, Classical, OptimalStrategy, PdeLookup, Strategy, StrategyWeights,
};
use arblab::{Error, ModelSpec, Result, SimConfig};

fn volstab() -> ModelSpec {
    ModelSpec::volstab(2, 1.0).unwrap()
}

/// Rewrites every stored value of `sol` to `value` through a CSV round trip.
fn flattened(sol: &PdeSolution, value: f64) -> PdeSolution {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    write_csv(sol, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut out = String::new();
    for (k, line) in text.lines().enumerate() {
        if k < 2 {
            out.push_str(line);
        } else {
            let cut = line.rfind(',').unwrap();
            out.push_str(&format!("{},{value:e}", &line[..cut]));
        }
        out.push('\n');
    }
    std::fs::write(&path, out).unwrap();
    read_csv(&path).unwrap()
}

#[test]
fn entropy_weights_match_scalar_arithmetic() {
    let w = classical_weights(Classical::Entropy { c: 10.0 }, &[0.9, 0.1]).unwrap();
    let a = 0.9 * (10.0 - 0.9f64.ln());
    let b = 0.1 * (10.0 - 0.1f64.ln());
    assert!((w.pi[0] - a / (a + b)).abs() < 1e-15);
    assert!((w.pi[0] - 0.880_85).abs() < 1e-5);
    let sym = classical_weights(Classical::Entropy { c: 10.0 }, &[0.5, 0.5]).unwrap();
    assert_eq!(sym.pi, vec![0.5, 0.5]);
}

#[test]
fn market_and_diversity_limits() {
    let mu = [0.2, 0.3, 0.5];
    assert_eq!(
        classical_weights(Classical::Market, &mu).unwrap().pi,
        mu.to_vec()
    );
    let w = classical_weights(Classical::DiversityP { p: 1.0 - 1e-9 }, &mu).unwrap();
    assert!(w.pi.iter().zip(&mu).all(|(a, b)| (a - b).abs() < 1e-8));
    assert!(matches!(
        classical_weights(Classical::DiversityP { p: 1.5 }, &mu),
        Err(Error::ParamInvalid(_))
    ));
    assert!(matches!(
        classical_weights(Classical::Entropy { c: -1.0 }, &mu),
        Err(Error::ParamInvalid(_))
    ));
    assert!(classical_weights(Classical::Market, &[0.5, 0.6]).is_err());
}

#[test]
fn optimal_weights_for_bessel_are_the_market() {
    let model = ModelSpec::bessel3();
    let sol = solve_min_solution(&model, &GridSpec::for_model(&model, &[1.0], 1.0)).unwrap();
    let w = optimal_weights(&sol, 1.0, &[1.0]).unwrap();
    assert!((w.pi[0] - 1.0).abs() < 0.01, "{:?}", w.pi);
}

#[test]
fn optimal_weights_are_symmetric_and_reduce_to_the_market() {
    let sol = solve_min_solution(&volstab(), &GridSpec::around(&[1.0, 1.0], 1.0)).unwrap();
    let w = optimal_weights(&sol, 1.0, &[1.0, 1.0]).unwrap();
    assert!((w.pi[0] - w.pi[1]).abs() < 1e-6);
    assert!(optimal_weights(&sol, 1.0, &[1e3, 1.0]).is_err());

    let flat = flattened(&sol, 0.7);
    let w = optimal_weights(&flat, 0.5, &[0.8, 1.7]).unwrap();
    assert!((w.pi[0] - 0.8 / 2.5).abs() < 1e-12 && (w.pi[1] - 1.7 / 2.5).abs() < 1e-12);
    assert!(w.cash.abs() < 1e-12);
}

#[test]
fn generated_weights_are_portfolios() {
    let sol = solve_weight_equation(&volstab(), &GridSpec::simplex(1e-3, 201, 1.0)).unwrap();
    let w = fgp_weights(&sol, 1.0, &[0.5, 0.5]).unwrap();
    assert!((w.pi[0] - 0.5).abs() < 1e-9 && (w.pi[1] - 0.5).abs() < 1e-9);
    for m in [0.01, 0.2, 0.37, 0.8, 0.99] {
        let w = fgp_weights(&sol, 0.6, &[m, 1.0 - m]).unwrap();
        assert!((w.pi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert_eq!(w.cash, 0.0);
    }
    let flat = flattened(&sol, 0.4);
    let w = fgp_weights(&flat, 0.6, &[0.3, 0.7]).unwrap();
    assert!((w.pi[0] - 0.3).abs() < 1e-12);
    assert!(fgp_weights(&sol, 0.5, &[0.3, 0.6]).is_err());
}

fn run(
    model: &ModelSpec,
    s: &dyn Strategy,
    x0: &[f64],
    horizon: f64,
    paths: usize,
) -> BacktestReport {
    let cfg = SimConfig::with_resolution(horizon, 1000, x0, 6).with_stride(1);
    backtest(
        model,
        s,
        x0,
        1.0,
        horizon,
        paths,
        &cfg,
        None,
        &BacktestOptions::default(),
    )
    .unwrap()
}

#[test]
fn cash_and_market_are_exact() {
    let model = volstab();
    let cash = run(&model, &Cash, &[1.0, 1.0], 0.5, 200);
    assert!(cash.terminal_wealth.iter().all(|&v| v == 1.0));
    let market = run(&model, &Classical::Market, &[1.0, 1.0], 0.5, 200);
    assert!(market
        .relative_wealth
        .iter()
        .all(|r| (r - 1.0).abs() < 1e-12));
    assert_eq!(market.arbitrage_frequency, 1.0);
}

#[test]
fn deflated_wealth_is_a_supermartingale() {
    let vs = volstab();
    let entropy = Classical::Entropy { c: 2.0 };
    let blend = Classical::EwBlend { c: 1.0 };
    for s in [&Cash as &dyn Strategy, &Classical::Market, &entropy, &blend] {
        let r = run(&vs, s, &[1.0, 1.0], 1.0, 2000);
        assert!(
            r.supermartingale_ok,
            "{}: {:?}",
            s.name(),
            r.deflated_wealth
        );
        assert_eq!(r.deflated_wealth[0].mean, 1.0);
    }
    let bessel = ModelSpec::bessel3();
    for s in [&Cash as &dyn Strategy, &Classical::Market] {
        let r = run(&bessel, s, &[1.0], 1.0, 2000);
        assert!(
            r.supermartingale_ok,
            "{}: {:?}",
            s.name(),
            r.deflated_wealth
        );
    }
}

#[test]
fn entropy_portfolio_beats_the_market() {
    let r = run(
        &volstab(),
        &Classical::Entropy { c: 10.0 },
        &[1.0, 1.0],
        2.0,
        1000,
    );
    assert!(r.arbitrage_frequency >= 0.99, "{}", r.arbitrage_frequency);
    assert!(r.relative_wealth.iter().all(|&v| v > 1.0));
}

#[test]
fn optimal_strategy_replicates_on_a_small_run() {
    let model = volstab();
    let x0 = [1.0, 1.0];
    let sol = solve_min_solution(&model, &GridSpec::around(&x0, 1.0)).unwrap();
    let lookup = PdeLookup::new(&sol, &model, &x0);
    let u0 = lookup.query(1.0, &x0).unwrap().value;
    let s = OptimalStrategy {
        lookup,
        horizon: 1.0,
    };
    let cfg = SimConfig::for_horizon(1.0, &x0, 3).with_stride(1);
    let opts = BacktestOptions {
        keep_paths: true,
        ..Default::default()
    };
    let r = backtest(&model, &s, &x0, u0 * 2.0, 1.0, 200, &cfg, Some(&sol), &opts).unwrap();
    let rep = r.replication.as_ref().unwrap();
    assert!(rep.mean < 0.05, "{rep:?}");
    assert!(r.min_wealth > 0.0);
    assert!(r.supermartingale_ok);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("paths.csv");
    r.write_paths_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("path_id,t,V,V_market,replication_error"));
    assert_eq!(text.lines().count(), 1 + 200 * r.paths[0].times.len());
}

struct Leveraged;

impl Strategy for Leveraged {
    fn name(&self) -> String {
        "leveraged".into()
    }

    fn weights(&self, _t: f64, x: &[f64]) -> Result<StrategyWeights> {
        let mut pi = vec![0.0; x.len()];
        pi[0] = 40.0;
        Ok(StrategyWeights::new(pi))
    }
}

#[test]
fn negative_wealth_is_reported_with_its_seed() {
    let model = volstab();
    let cfg = SimConfig::with_resolution(1.0, 200, &[1.0, 1.0], 1).with_stride(1);
    let err = backtest(
        &model,
        &Leveraged,
        &[1.0, 1.0],
        1.0,
        1.0,
        200,
        &cfg,
        None,
        &BacktestOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::WealthNonPositive { .. }), "{err}");
    assert!(err.is_numerical());
}
