use arblab::models::{sample_orthant, ModelSpec, POTENTIAL_RESIDUAL_TOL};
use arblab::strategy::{classical_weights, Classical};
use arblab::{ModelConfig, SimConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn state(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..50.0, n)
}

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn correlated_model() -> ModelSpec {
    let sigma = vec![
        vec![0.3, 0.1, 0.0],
        vec![0.05, 0.25, 0.0],
        vec![0.0, 0.1, 0.4],
    ];
    ModelSpec::constant("corr3", vec![0.02, 0.01, 0.05], sigma, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frak_a_is_symmetric_psd(zeta in 0.05f64..=1.0, x in state(3)) {
        for model in [ModelSpec::volstab(3, zeta).unwrap(), correlated_model()] {
            let a = model.coefficients(&x).unwrap().frak_a;
            let m = DMatrix::from_fn(3, 3, |i, j| a[i][j]);
            let scale = m.abs().max();
            prop_assert!((&m - m.transpose()).abs().max() <= 1e-12 * scale);
            let eig = m.symmetric_eigen().eigenvalues;
            prop_assert!(eig.iter().all(|&e| e >= -1e-10 * scale), "{eig:?}");
        }
    }

    #[test]
    fn potential_solves_drift_equation(zeta in 0.05f64..=1.0, x in state(2)) {
        let vs = ModelSpec::volstab(2, zeta).unwrap();
        prop_assert!(vs.potential_residual(&x).unwrap() < POTENTIAL_RESIDUAL_TOL);
        let b = ModelSpec::bessel3();
        prop_assert!(b.potential_residual(&x[..1]).unwrap() < POTENTIAL_RESIDUAL_TOL);
    }

    #[test]
    fn killing_matches_its_second_order_formula(zeta in 0.05f64..=1.0, x in state(3)) {
        let m = ModelSpec::volstab(3, zeta).unwrap();
        let closed = m.killing(&x).unwrap();
        let numeric = m.killing_from_potential(&x).unwrap();
        prop_assert!((closed - numeric).abs() <= 1e-4 * (1.0 + closed.abs()), "{closed} vs {numeric}");
        prop_assert!(closed >= -1e-12);
    }

    #[test]
    fn volstab_fichera_sign_pattern_on_faces(zeta in 0.05f64..=1.0, x in state(3), face in 0usize..3) {
        let model = ModelSpec::volstab(3, zeta).unwrap();
        let mut y = x.clone();
        y[face] = 0.0;
        let d = model.fichera_drifts(&y).unwrap();
        let s: f64 = y.iter().sum();
        prop_assert!(d.f[face] > 0.0 && d.f_hat[face] < 0.0);
        prop_assert!((d.f[face] - 0.5 * zeta * s).abs() < 1e-10 * (1.0 + s));
        prop_assert!((d.f_hat[face] + 0.5 * s).abs() < 1e-10 * (1.0 + s));
    }

    #[test]
    fn bessel_auxiliary_drift_equals_market_drift(x in 0.001f64..100.0) {
        let m = ModelSpec::bessel3();
        let c = m.coefficients(&[x]).unwrap();
        let aux = m.auxiliary_drift(&[x]).unwrap();
        prop_assert!((aux[0] - c.frak_b[0]).abs() <= 1e-14 * c.frak_b[0].abs());
        prop_assert!((aux[0] - 1.0 / x).abs() <= 1e-14 / x);
    }

    #[test]
    fn classical_portfolios_are_long_only_and_fully_invested(
        mu in simplex(4),
        c in 0.1f64..20.0,
        p in 0.01f64..0.99,
    ) {
        for kind in [
            Classical::Market,
            Classical::Entropy { c },
            Classical::EwBlend { c },
            Classical::DiversityP { p },
        ] {
            let w = classical_weights(kind, &mu).unwrap();
            let s: f64 = w.pi.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-10);
            prop_assert!(w.cash.abs() < 1e-10);
            prop_assert!(w.pi.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
        }
    }
}

#[test]
fn config_round_trip_matches_builtin() {
    let cfg: ModelConfig =
        serde_json::from_str(r#"{"name": "volstab", "n": 3, "zeta": 0.5}"#).unwrap();
    let a = ModelSpec::from_config(&cfg).unwrap();
    let b = ModelSpec::volstab(3, 0.5).unwrap();
    assert_eq!(a, b);
    assert!(ModelSpec::from_json_str(r#"{"name": "volstab", "kappa": 1}"#).is_err());
    assert!(ModelSpec::from_json_str(r#"{"name": "bessel3", "n": 2}"#).is_err());
}

#[test]
fn weight_simulation_stays_on_the_simplex() {
    for (model, m0) in [
        (ModelSpec::volstab(2, 1.0).unwrap(), vec![0.3, 0.7]),
        (ModelSpec::volstab(3, 0.5).unwrap(), vec![0.2, 0.3, 0.5]),
        (correlated_model(), vec![0.5, 0.25, 0.25]),
    ] {
        let cfg = SimConfig::with_resolution(1.0, 500, &m0, 11).with_stride(10);
        let batch = arblab::sde::simulate_weights(&model, &m0, 1.0, 200, &cfg).unwrap();
        for p in 0..batch.n_paths {
            for r in 0..batch.n_records() {
                let s = batch.state(p, r);
                assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(s.iter().all(|&v| v > 0.0));
            }
        }
    }
}

#[test]
fn auxiliary_absorption_is_monotone_in_time_and_threshold() {
    let model = ModelSpec::volstab(2, 1.0).unwrap();
    let x0 = [0.5, 1.5];
    let survival = |eps: f64| {
        let mut cfg = SimConfig::with_resolution(1.0, 1000, &x0, 3).with_stride(100);
        cfg.hit_epsilon = eps;
        let b = arblab::sde::simulate_auxiliary(&model, &x0, 1.0, 2000, &cfg).unwrap();
        b.times
            .iter()
            .map(|&t| {
                b.hit_time
                    .iter()
                    .filter(|h| h.is_none_or(|s| s > t))
                    .count()
            })
            .collect::<Vec<_>>()
    };
    let coarse = survival(1e-2);
    let fine = survival(1e-4);
    assert!(coarse.windows(2).all(|w| w[1] <= w[0]));
    // Same paths, lower barrier: every path survives at least as long.
    assert!(coarse.iter().zip(&fine).all(|(c, f)| c <= f));
    assert!(coarse.last() < fine.last());
}

#[test]
fn sampled_conditions_for_volstab() {
    let model = ModelSpec::volstab(2, 1.0).unwrap();
    let pts = sample_orthant(2, 200, 0.05, 20.0);
    let r = model.check_arbitrage_conditions(&pts, 2.0).unwrap();
    // Σ μ_i a_ii − μᵀaμ = n − 1 for this market, so h ≡ 1.
    let iv = &r.intvol;
    assert!(iv.holds && iv.equality);
    assert!((iv.h_inf.unwrap() - 1.0).abs() < 1e-12);
    assert!((iv.horizon_bound.unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
    assert!(iv.horizon_sufficient);
}
