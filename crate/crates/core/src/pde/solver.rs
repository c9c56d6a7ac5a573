use serde::Serialize;

use super::{GridSpec, PdeSolution, SolutionKind, SolveStats};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::ModelSpec;

/// Safety factor in the explicit-step certificate.
pub const STABILITY_FACTOR: f64 = 0.9;
/// Hard cap on explicit steps; finer problems are refused.
pub const MAX_STEPS: usize = 50_000_000;

#[derive(Clone, Copy, PartialEq)]
enum OuterFace {
    Extrapolate,
    Dirichlet,
}

/// Stencil of one interior node: flat neighbour offsets paired with weights.
struct Operator {
    offsets: Vec<isize>,
    /// `[interior node][stencil entry]`.
    weights: Vec<f64>,
    interior: Vec<usize>,
    max_rate: f64,
    upwind_nodes: usize,
}

fn strides(n: usize, p: usize) -> Vec<usize> {
    (0..n).map(|d| p.pow((n - 1 - d) as u32)).collect()
}

fn unravel(mut idx: usize, n: usize, p: usize, out: &mut [usize]) {
    for d in (0..n).rev() {
        out[d] = idx % p;
        idx /= p;
    }
}

/// Builds the explicit operator `½ΣΣ A_ij D²_ij + Σ B_i D_i` on interior nodes.
fn build_operator<F>(grid: &GridSpec, axes: &[Vec<f64>], mut coeffs: F) -> Result<Operator>
where
    F: FnMut(&[f64]) -> (Matrix, Vec<f64>),
{
    let n = grid.n;
    let p = grid.points_per_axis;
    let st = strides(n, p);
    let mut offsets: Vec<isize> = vec![0];
    for d in 0..n {
        offsets.push(-(st[d] as isize));
        offsets.push(st[d] as isize);
    }
    for d in 0..n {
        for e in d + 1..n {
            let (sd, se) = (st[d] as isize, st[e] as isize);
            offsets.extend([sd + se, sd - se, -sd + se, -sd - se]);
        }
    }
    let k = offsets.len();
    let mut weights = Vec::new();
    let mut interior = Vec::new();
    let mut max_rate: f64 = 0.0;
    let mut upwind_nodes = 0;
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    let mut dm = vec![0.0; n];
    let mut dp = vec![0.0; n];
    for node in 0..grid.n_nodes() {
        unravel(node, n, p, &mut idx);
        if idx.iter().any(|&i| i == 0 || i + 1 == p) {
            continue;
        }
        for d in 0..n {
            let ax = &axes[d];
            x[d] = ax[idx[d]];
            dm[d] = ax[idx[d]] - ax[idx[d] - 1];
            dp[d] = ax[idx[d] + 1] - ax[idx[d]];
        }
        let (a, b) = coeffs(&x);
        if !a.is_finite() || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelValidation(format!(
                "non-finite coefficients at {x:?}"
            )));
        }
        let mut w = vec![0.0; k];
        let mut upwind = false;
        let mut rate = 0.0;
        for d in 0..n {
            let span = dm[d] + dp[d];
            let add = a.get(d, d) / span;
            let mut lo = add / dm[d];
            let mut hi = add / dp[d];
            let (clo, chi) = (lo - b[d] / span, hi + b[d] / span);
            if clo >= 0.0 && chi >= 0.0 {
                lo = clo;
                hi = chi;
            } else {
                upwind = true;
                if b[d] > 0.0 {
                    hi += b[d] / dp[d];
                } else {
                    lo -= b[d] / dm[d];
                }
            }
            w[1 + 2 * d] = lo;
            w[2 + 2 * d] = hi;
            w[0] -= lo + hi;
            let h = dm[d].min(dp[d]);
            for e in 0..n {
                let he = dm[e].min(dp[e]);
                rate += a.get(d, e).abs() / (h * he);
            }
            rate += b[d].abs() / h;
        }
        let mut c = 1 + 2 * n;
        for d in 0..n {
            for e in d + 1..n {
                let q = a.get(d, e) / ((dm[d] + dp[d]) * (dm[e] + dp[e]));
                w[c] = q;
                w[c + 1] = -q;
                w[c + 2] = -q;
                w[c + 3] = q;
                c += 4;
            }
        }
        upwind_nodes += upwind as usize;
        max_rate = max_rate.max(rate);
        weights.extend(w);
        interior.push(node);
    }
    Ok(Operator {
        offsets,
        weights,
        interior,
        max_rate,
        upwind_nodes,
    })
}

fn march(
    grid: &GridSpec,
    axes: &[Vec<f64>],
    op: &Operator,
    outer: OuterFace,
    kind: SolutionKind,
) -> Result<PdeSolution> {
    let n = grid.n;
    let p = grid.points_per_axis;
    let m = grid.n_nodes();
    let slice_len = grid.horizon / grid.slices as f64;
    let limit = if op.max_rate > 0.0 {
        STABILITY_FACTOR / op.max_rate
    } else {
        f64::INFINITY
    };
    let target = grid.d_tau.min(limit);
    let per_slice = (slice_len / target).ceil().max(1.0);
    if !per_slice.is_finite() || per_slice * grid.slices as f64 > MAX_STEPS as f64 {
        return Err(Error::StabilityViolation(format!(
            "stable step {limit:.3e} needs more than {MAX_STEPS} steps over horizon {}",
            grid.horizon
        )));
    }
    let per_slice = per_slice as usize;
    let dt = slice_len / per_slice as f64;

    let st = strides(n, p);
    let mut idx = vec![0usize; n];
    let mut inner_nodes = Vec::new();
    // Outer-face nodes per axis with their two inward neighbours and weights.
    let mut outer_nodes: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); n];
    for node in 0..m {
        unravel(node, n, p, &mut idx);
        if idx.iter().any(|&i| i == 0) {
            inner_nodes.push(node);
            continue;
        }
        for d in 0..n {
            if idx[d] + 1 == p {
                let ax = &axes[d];
                let (x0, x1, x2) = (ax[p - 1], ax[p - 2], ax[p - 3]);
                let w1 = (x0 - x2) / (x1 - x2);
                outer_nodes[d].push((node, w1, 1.0 - w1));
            }
        }
    }

    let mut values = Vec::with_capacity(m * (grid.slices + 1));
    let mut u = vec![1.0; m];
    values.extend_from_slice(&u);
    let mut next = u.clone();
    let k = op.offsets.len();
    let mut max_clip: f64 = 0.0;
    let mut boundary_clip: f64 = 0.0;
    for _ in 0..grid.slices {
        for _ in 0..per_slice {
            for (j, &node) in op.interior.iter().enumerate() {
                let w = &op.weights[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for (wi, off) in w.iter().zip(&op.offsets) {
                    acc += wi * u[(node as isize + off) as usize];
                }
                let v = u[node] + dt * acc;
                let c = v.clamp(0.0, 1.0);
                max_clip = max_clip.max((v - c).abs());
                next[node] = c;
            }
            for &node in &inner_nodes {
                next[node] = 0.0;
            }
            for (d, nodes) in outer_nodes.iter().enumerate() {
                for &(node, w1, w2) in nodes {
                    let v = match outer {
                        OuterFace::Extrapolate => {
                            w1 * next[node - st[d]] + w2 * next[node - 2 * st[d]]
                        }
                        OuterFace::Dirichlet => 0.0,
                    };
                    let c = v.clamp(0.0, 1.0);
                    boundary_clip = boundary_clip.max((v - c).abs());
                    next[node] = c;
                }
            }
            std::mem::swap(&mut u, &mut next);
        }
        values.extend_from_slice(&u);
    }
    let stats = SolveStats {
        d_tau_used: dt,
        steps: per_slice * grid.slices,
        max_clip,
        boundary_clip,
        upwind_nodes: op.upwind_nodes,
    };
    Ok(PdeSolution::new(grid.clone(), kind, values, stats))
}

/// Solves `U_τ = ½ΣΣ 𝔞_ij D²_ij U + Σ 𝔟̂_i D_i U`, `U(0, ·) = 1`, with `U = 0` on
/// the inner faces of the box and linear extrapolation on the outer faces.
pub fn solve_min_solution(model: &ModelSpec, grid: &GridSpec) -> Result<PdeSolution> {
    grid.validate()?;
    if grid.n != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: grid.n,
        });
    }
    let axes: Vec<Vec<f64>> = (0..grid.n).map(|d| grid.axis(d)).collect();
    let op = build_operator(grid, &axes, |x| {
        let mut b = vec![0.0; x.len()];
        model.aux_drift_into(x, &mut b);
        (model.frak_a_unchecked(x), b)
    })?;
    march(
        grid,
        &axes,
        &op,
        OuterFace::Extrapolate,
        SolutionKind::OrthantU,
    )
}

/// Variance rate of the first market weight at `m₁` in a two-asset market.
fn weight_variance(model: &ModelSpec, m1: f64) -> Result<f64> {
    let nu = [m1, 1.0 - m1];
    let a = model.covariance(&nu)?;
    let e = [1.0 - m1, -(1.0 - m1)];
    let q: f64 = (0..2)
        .map(|j| (0..2).map(|k| e[j] * a.get(j, k) * e[k]).sum::<f64>())
        .sum();
    Ok(m1 * m1 * q)
}

/// Solves `Q_τ = ½ σ²(m) Q''` for the first weight of a two-asset market,
/// `Q(0, ·) = 1`, absorbing at both ends of the grid.
pub fn solve_weight_equation(model: &ModelSpec, grid: &GridSpec) -> Result<PdeSolution> {
    if model.n() != 2 {
        return Err(Error::UnsupportedDimension(model.n()));
    }
    if !model.is_weight_markovian() {
        return Err(Error::ConfigInvalid(format!(
            "model `{}` is not driven by its market weights",
            model.name()
        )));
    }
    grid.validate()?;
    if grid.n != 1 || grid.upper[0] >= 1.0 {
        return Err(Error::ConfigInvalid(
            "weight grid must be one-dimensional inside (0, 1)".into(),
        ));
    }
    let axes = vec![grid.axis(0)];
    let mut failure = None;
    let op = build_operator(grid, &axes, |x| match weight_variance(model, x[0]) {
        Ok(v) => (Matrix::diag(&[v]), vec![0.0]),
        Err(e) => {
            failure.get_or_insert(e);
            (Matrix::diag(&[f64::NAN]), vec![0.0])
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    march(
        grid,
        &axes,
        &op?,
        OuterFace::Dirichlet,
        SolutionKind::SimplexQ,
    )
}

/// Outcome of the "arbitrage on one horizon implies arbitrage on all" check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub delta: f64,
    /// Whether some interior value at the final slice is below `1 − δ`.
    pub triggered: bool,
    /// Whether every interior value at every slice `τ > 0` is below 1.
    pub holds: bool,
    pub max_interior_value: f64,
    /// `1 − max_interior_value`.
    pub margin: f64,
    pub worst_tau: f64,
    pub worst_x: Vec<f64>,
    pub n_queries: usize,
}

/// Checks interior nodes (those in the middle half of the box on every axis)
/// at every stored slice `τ > 0`.
pub fn proposition_diagnostic(sol: &PdeSolution, delta: f64) -> Diagnostic {
    let g = &sol.grid;
    let interior: Vec<usize> = (0..g.n_nodes())
        .filter(|&i| {
            sol.node(i).iter().enumerate().all(|(d, &x)| {
                let q = 0.25 * (g.upper[d] - g.lower[d]);
                x >= g.lower[d] + q && x <= g.upper[d] - q
            })
        })
        .collect();
    let last = sol.taus.len() - 1;
    let triggered = interior.iter().any(|&i| sol.slice(last)[i] < 1.0 - delta);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_tau = 0.0;
    let mut worst_node = interior.first().copied().unwrap_or(0);
    for k in 1..=last {
        let s = sol.slice(k);
        for &i in &interior {
            if s[i] > worst {
                worst = s[i];
                worst_tau = sol.taus[k];
                worst_node = i;
            }
        }
    }
    Diagnostic {
        delta,
        triggered,
        holds: !triggered || worst < 1.0,
        max_interior_value: worst,
        margin: 1.0 - worst,
        worst_tau,
        worst_x: sol.node(worst_node),
        n_queries: interior.len() * last,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::Spacing;

    fn bessel_grid(lower: f64, upper: f64, points: usize) -> GridSpec {
        GridSpec {
            n: 1,
            lower: vec![lower],
            upper: vec![upper],
            points_per_axis: points,
            d_tau: 1e-3,
            horizon: 1.0,
            spacing: Spacing::Sqrt,
            slices: 4,
        }
    }

    #[test]
    fn initial_slice_is_one() {
        let sol = solve_min_solution(&ModelSpec::bessel3(), &bessel_grid(0.05, 20.0, 64)).unwrap();
        assert!(sol.slice(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn values_bounded_and_nonincreasing_in_tau() {
        let model = ModelSpec::volstab(2, 1.0).unwrap();
        let mut grid = GridSpec::around(&[1.0, 1.0], 0.5);
        grid.points_per_axis = 41;
        let sol = solve_min_solution(&model, &grid).unwrap();
        for k in 1..sol.taus.len() {
            for (a, b) in sol.slice(k).iter().zip(sol.slice(k - 1)) {
                assert!((0.0..=1.0).contains(a));
                assert!(*a <= b + 1e-12);
            }
        }
    }

    #[test]
    fn weight_equation_needs_two_assets() {
        let model = ModelSpec::volstab(3, 1.0).unwrap();
        let grid = GridSpec::simplex(1e-3, 101, 1.0);
        assert!(matches!(
            solve_weight_equation(&model, &grid),
            Err(Error::UnsupportedDimension(3))
        ));
    }

    #[test]
    fn weight_variance_of_volstab_is_wright_fisher() {
        let model = ModelSpec::volstab(2, 0.3).unwrap();
        for m in [0.1, 0.5, 0.8] {
            assert!((weight_variance(&model, m).unwrap() - m * (1.0 - m)).abs() < 1e-12);
        }
    }

    #[test]
    fn refuses_unreachable_step_count() {
        let mut grid = bessel_grid(1e-8, 1e4, 4000);
        grid.horizon = 100.0;
        assert!(matches!(
            solve_min_solution(&ModelSpec::bessel3(), &grid),
            Err(Error::StabilityViolation(_))
        ));
    }
}
