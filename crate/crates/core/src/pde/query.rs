use serde::Serialize;

use super::PdeSolution;
use crate::error::{Error, Result};

/// Floor applied to `U` before dividing by it.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub value: f64,
    pub grad_log: Vec<f64>,
}

/// Cell index `k` with `axis[k] ≤ x ≤ axis[k + 1]` and the weight of `axis[k + 1]`.
fn locate(axis: &[f64], x: f64) -> (usize, f64) {
    let last = axis.len() - 2;
    let k = axis
        .partition_point(|&a| a <= x)
        .saturating_sub(1)
        .min(last);
    let t = (x - axis[k]) / (axis[k + 1] - axis[k]);
    (k, t.clamp(0.0, 1.0))
}

fn in_domain(sol: &PdeSolution, tau: f64, x: &[f64]) -> bool {
    let g = &sol.grid;
    x.len() == g.n
        && (0.0..=g.horizon).contains(&tau)
        && x.iter()
            .enumerate()
            .all(|(d, &v)| v >= g.lower[d] && v <= g.upper[d])
}

fn spatial(sol: &PdeSolution, slice: usize, x: &[f64]) -> f64 {
    let n = sol.grid.n;
    let p = sol.grid.points_per_axis;
    let cells: Vec<(usize, f64)> = (0..n).map(|d| locate(&sol.axes()[d], x[d])).collect();
    let values = sol.slice(slice);
    let mut acc = 0.0;
    for corner in 0..(1usize << n) {
        let mut w = 1.0;
        let mut idx = 0;
        for (d, &(k, t)) in cells.iter().enumerate() {
            let up = corner >> (n - 1 - d) & 1;
            w *= if up == 1 { t } else { 1.0 - t };
            idx = idx * p + k + up;
        }
        if w != 0.0 {
            acc += w * values[idx];
        }
    }
    acc
}

fn interpolate(sol: &PdeSolution, tau: f64, x: &[f64]) -> f64 {
    let (k, t) = locate(&sol.taus, tau);
    let a = spatial(sol, k, x);
    if t == 0.0 {
        return a;
    }
    let b = spatial(sol, k + 1, x);
    (1.0 - t) * a + t * b
}

/// Interpolated value at `(τ, x)`.
pub fn query_value(sol: &PdeSolution, tau: f64, x: &[f64]) -> Result<f64> {
    if !in_domain(sol, tau, x) {
        return Err(Error::DomainError { tau, x: x.to_vec() });
    }
    Ok(interpolate(sol, tau, x))
}

/// Interpolated value and `∇ log U` by central differences whose step is the
/// width of the grid cell containing `x`, one-sided at the box edges.
pub fn query(sol: &PdeSolution, tau: f64, x: &[f64]) -> Result<QueryResult> {
    let value = query_value(sol, tau, x)?;
    let g = &sol.grid;
    let mut grad_log = vec![0.0; g.n];
    let mut probe = x.to_vec();
    for d in 0..g.n {
        let axis = &sol.axes()[d];
        let (k, _) = locate(axis, x[d]);
        let h = axis[k + 1] - axis[k];
        let hi = (x[d] + h).min(g.upper[d]);
        let lo = (x[d] - h).max(g.lower[d]);
        probe[d] = hi;
        let u_hi = interpolate(sol, tau, &probe);
        probe[d] = lo;
        let u_lo = interpolate(sol, tau, &probe);
        probe[d] = x[d];
        grad_log[d] = (u_hi - u_lo) / (hi - lo) / value.max(LOG_FLOOR);
    }
    Ok(QueryResult { value, grad_log })
}
