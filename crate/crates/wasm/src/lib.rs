//! Browser bindings for the `www/` demo page.
//!
//! Every export returns a flat `Vec<f64>` (a `Float64Array` in JavaScript)
//! whose layout is documented on the function. The `*_impl` functions carry
//! the logic and are tested natively.

use arblab::exitmc::estimate_exit_probability;
use arblab::models::{sample_orthant, ModelSpec};
use arblab::pde::{query_value, solve_min_solution, solve_weight_equation, GridSpec};
use arblab::sde::simulate_auxiliary;
use arblab::SimConfig;
use wasm_bindgen::prelude::*;

/// Grid size for the in-browser U solve; small enough for an interactive redraw.
const BROWSER_POINTS: usize = 61;
const MAX_PATHS: usize = 200_000;

fn js<T>(r: Result<T, String>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// `Q(T, m)` for the two-asset volatility-stabilised market on `points`
/// evenly spaced weights `m` in `(0, 1)`.
///
/// Layout: `[m_0..m_{k-1}, Q_0..Q_{k-1}]`.
#[wasm_bindgen]
pub fn weight_curve(zeta: f64, horizon: f64, points: usize) -> Result<Vec<f64>, JsError> {
    js(weight_curve_impl(zeta, horizon, points))
}

pub fn weight_curve_impl(zeta: f64, horizon: f64, points: usize) -> Result<Vec<f64>, String> {
    let model = ModelSpec::volstab(2, zeta).map_err(|e| e.to_string())?;
    let grid = GridSpec::simplex(1e-3, 201, horizon);
    let sol = solve_weight_equation(&model, &grid).map_err(|e| e.to_string())?;
    let k = points.clamp(2, 1000);
    let (lo, hi) = (grid.lower[0], grid.upper[0]);
    let ms: Vec<f64> = (0..k)
        .map(|j| lo + (hi - lo) * j as f64 / (k - 1) as f64)
        .collect();
    let mut out = ms.clone();
    for m in &ms {
        out.push(query_value(&sol, horizon, &[*m]).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

/// Fichera drifts `f_i` and `f̂_i` on the face `{x_i = 0}` (face is 1-based)
/// of the `n`-asset volatility-stabilised market, at `samples` points.
///
/// Layout: rows of `[Σx, f_i, f̂_i]`, sorted by `Σx`.
#[wasm_bindgen]
pub fn fichera_face(zeta: f64, n: usize, face: usize, samples: usize) -> Result<Vec<f64>, JsError> {
    js(fichera_face_impl(zeta, n, face, samples))
}

pub fn fichera_face_impl(
    zeta: f64,
    n: usize,
    face: usize,
    samples: usize,
) -> Result<Vec<f64>, String> {
    let model = ModelSpec::volstab(n, zeta).map_err(|e| e.to_string())?;
    if face == 0 || face > n {
        return Err(format!("face must lie in 1..={n}"));
    }
    let i = face - 1;
    let mut rows = Vec::with_capacity(samples);
    for mut x in sample_orthant(n - 1, samples.clamp(1, 2000), 0.05, 20.0) {
        x.insert(i, 0.0);
        let d = model.fichera_drifts(&x).map_err(|e| e.to_string())?;
        rows.push([x.iter().sum::<f64>(), d.f[i], d.f_hat[i]]);
    }
    rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
    Ok(rows.concat())
}

/// Survival of the auxiliary diffusion over `[0, T]` for the two-asset
/// volatility-stabilised market started at `(x1, x2)`, by Monte Carlo, next to
/// the PDE value of `U` at the same times.
///
/// Layout: `k` records of `[t, p_mc, stderr, U_pde]`.
#[wasm_bindgen]
pub fn exit_curve(
    zeta: f64,
    x1: f64,
    x2: f64,
    horizon: f64,
    paths: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    js(exit_curve_impl(zeta, x1, x2, horizon, paths, seed as u64))
}

pub fn exit_curve_impl(
    zeta: f64,
    x1: f64,
    x2: f64,
    horizon: f64,
    paths: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let model = ModelSpec::volstab(2, zeta).map_err(|e| e.to_string())?;
    let x0 = [x1, x2];
    if !(horizon > 0.0) {
        return Err("horizon must be positive".into());
    }
    let paths = paths.clamp(1, MAX_PATHS);
    let cfg = SimConfig::with_resolution(horizon, 1000, &x0, seed);
    let stride = (cfg.n_steps / 20).max(1);
    let batch = simulate_auxiliary(
        &model,
        &x0,
        horizon,
        paths,
        &cfg.clone().with_stride(stride),
    )
    .map_err(|e| e.to_string())?;

    let mut grid = GridSpec::for_model(&model, &x0, horizon);
    grid.points_per_axis = BROWSER_POINTS;
    let sol = solve_min_solution(&model, &grid).map_err(|e| e.to_string())?;

    let mut out = Vec::with_capacity(4 * batch.times.len());
    for &t in &batch.times {
        let alive = batch
            .hit_time
            .iter()
            .filter(|h| h.is_none_or(|s| s > t))
            .count();
        let p = alive as f64 / paths as f64;
        let u = query_value(&sol, t, &x0).map_err(|e| e.to_string())?;
        out.extend_from_slice(&[t, p, (p * (1.0 - p) / paths as f64).sqrt(), u]);
    }
    Ok(out)
}

/// Single exit-probability estimate `[value, stderr]`.
#[wasm_bindgen]
pub fn exit_probability(
    zeta: f64,
    x1: f64,
    x2: f64,
    horizon: f64,
    paths: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    js(ModelSpec::volstab(2, zeta)
        .and_then(|m| {
            let x0 = [x1, x2];
            let cfg = SimConfig::for_horizon(horizon, &x0, seed as u64);
            estimate_exit_probability(&m, &x0, horizon, paths.clamp(1, MAX_PATHS), &cfg)
        })
        .map(|e| vec![e.value, e.stderr])
        .map_err(|e| e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_curve_is_symmetric_and_bounded() {
        let v = weight_curve_impl(1.0, 0.5, 11).unwrap();
        let (m, q) = v.split_at(11);
        assert!((m[5] - 0.5).abs() < 1e-12);
        for j in 0..11 {
            assert!((0.0..=1.0).contains(&q[j]));
            assert!((q[j] - q[10 - j]).abs() < 1e-9);
        }
        assert!(q[5] < 1.0 && q[5] > q[0]);
    }

    #[test]
    fn fichera_rows_have_the_sign_pattern() {
        let v = fichera_face_impl(0.5, 3, 2, 16).unwrap();
        assert_eq!(v.len(), 48);
        for row in v.chunks(3) {
            assert!(row[1] > 0.0 && row[2] < 0.0);
            assert!((row[1] - 0.25 * row[0]).abs() < 1e-12);
            assert!((row[2] + 0.5 * row[0]).abs() < 1e-12);
        }
        assert!(fichera_face_impl(1.0, 2, 3, 4).is_err());
    }

    #[test]
    fn exit_curve_starts_at_one_and_decreases() {
        let v = exit_curve_impl(1.0, 1.0, 1.0, 0.5, 400, 7).unwrap();
        let rows: Vec<&[f64]> = v.chunks(4).collect();
        assert_eq!(rows[0], &[0.0, 1.0, 0.0, 1.0]);
        for w in rows.windows(2) {
            assert!(w[1][0] > w[0][0]);
            assert!(w[1][1] <= w[0][1]);
            assert!(w[1][3] <= w[0][3] + 1e-12);
        }
        let last = rows.last().unwrap();
        assert!((last[1] - last[3]).abs() < 4.0 * last[2] + 0.03);
    }
}
