//! Finite-difference solutions of the Cauchy problem for `U` on a truncated
//! orthant, and of the market-weight equation for `Q` on the simplex.

mod io;
mod query;
mod solver;

pub use io::{read_csv, write_csv};
pub use query::{query, query_value, QueryResult};
pub use solver::{proposition_diagnostic, solve_min_solution, solve_weight_equation, Diagnostic};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelSpec;

/// Smallest allowed number of nodes per axis.
pub const MIN_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    /// Uniform in `√x`: nodes cluster toward the lower face, where the
    /// diffusion degenerates and the solution varies fastest.
    #[default]
    Sqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points_per_axis: usize,
    /// Requested time step; the solver reduces it as stability requires.
    pub d_tau: f64,
    pub horizon: f64,
    #[serde(default)]
    pub spacing: Spacing,
    /// Number of stored time slices after `τ = 0`, evenly spaced.
    #[serde(default = "default_slices")]
    pub slices: usize,
}

fn default_slices() -> usize {
    10
}

/// Default lower truncation relative to the starting point.
pub const DEFAULT_LOWER_FRACTION: f64 = 1e-6;
/// Lower truncation for models whose auxiliary drift is singular on the faces;
/// the explicit step would otherwise shrink with the square of the offset.
pub const SINGULAR_LOWER_FRACTION: f64 = 1e-2;
/// Default upper truncation relative to the starting point.
pub const DEFAULT_UPPER_FACTOR: f64 = 30.0;

impl GridSpec {
    /// Default grid for `model`: the box `[10⁻⁶ x0, 30 x0]`, or `[10⁻² x0, 30 x0]`
    /// when the coefficients do not extend to the closed orthant.
    pub fn for_model(model: &ModelSpec, x0: &[f64], horizon: f64) -> Self {
        let mut g = Self::around(x0, horizon);
        if !model.extends_to_faces() {
            g.lower = x0.iter().map(|v| SINGULAR_LOWER_FRACTION * v).collect();
        }
        g
    }

    /// The box `[10⁻⁶ x0, 30 x0]` around `x0`.
    pub fn around(x0: &[f64], horizon: f64) -> Self {
        let n = x0.len();
        let points = match n {
            1 => 401,
            2 => 121,
            _ => 31,
        };
        Self {
            n,
            lower: x0.iter().map(|v| DEFAULT_LOWER_FRACTION * v).collect(),
            upper: x0.iter().map(|v| DEFAULT_UPPER_FACTOR * v).collect(),
            points_per_axis: points,
            d_tau: 1e-3,
            horizon,
            spacing: Spacing::Sqrt,
            slices: default_slices(),
        }
    }

    /// A uniform grid on `[ε, 1 − ε]` for the two-asset weight equation.
    pub fn simplex(epsilon: f64, points: usize, horizon: f64) -> Self {
        Self {
            n: 1,
            lower: vec![epsilon],
            upper: vec![1.0 - epsilon],
            points_per_axis: points,
            d_tau: 1e-3,
            horizon,
            spacing: Spacing::Uniform,
            slices: default_slices(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.n) {
            return Err(Error::UnsupportedDimension(self.n));
        }
        if self.lower.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: self.lower.len(),
            });
        }
        if self.upper.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: self.upper.len(),
            });
        }
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            if !(*lo > 0.0) || !(lo < hi) || !hi.is_finite() {
                return Err(Error::ConfigInvalid(format!(
                    "grid bounds must satisfy 0 < lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        if self.points_per_axis < MIN_POINTS {
            return Err(Error::ConfigInvalid(format!(
                "points_per_axis must be at least {MIN_POINTS}, got {}",
                self.points_per_axis
            )));
        }
        if !(self.d_tau > 0.0) || !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::ConfigInvalid(
                "d_tau and horizon must be positive".into(),
            ));
        }
        if self.slices == 0 {
            return Err(Error::ConfigInvalid("slices must be at least 1".into()));
        }
        Ok(())
    }

    pub fn axis(&self, d: usize) -> Vec<f64> {
        let (lo, hi) = (self.lower[d], self.upper[d]);
        let m = (self.points_per_axis - 1) as f64;
        (0..self.points_per_axis)
            .map(|k| {
                let t = k as f64 / m;
                match self.spacing {
                    Spacing::Uniform => lo + t * (hi - lo),
                    Spacing::Sqrt => {
                        let s = lo.sqrt() + t * (hi.sqrt() - lo.sqrt());
                        s * s
                    }
                }
            })
            .enumerate()
            .map(|(k, v)| {
                if k == 0 {
                    lo
                } else if k + 1 == self.points_per_axis {
                    hi
                } else {
                    v
                }
            })
            .collect()
    }

    pub fn n_nodes(&self) -> usize {
        self.points_per_axis.pow(self.n as u32)
    }

    pub fn slice_taus(&self) -> Vec<f64> {
        (0..=self.slices)
            .map(|k| self.horizon * k as f64 / self.slices as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionKind {
    /// `U(τ, x)` on the truncated orthant.
    OrthantU,
    /// `Q(τ, m₁)` on the two-asset simplex.
    SimplexQ,
}

/// Solver statistics attached to a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub d_tau_used: f64,
    pub steps: usize,
    /// Largest magnitude removed by clamping the scheme's update into `[0, 1]`.
    pub max_clip: f64,
    /// Largest magnitude removed by capping the outer-face extrapolation into `[0, 1]`.
    #[serde(default)]
    pub boundary_clip: f64,
    pub upwind_nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution {
    pub grid: GridSpec,
    pub kind: SolutionKind,
    pub taus: Vec<f64>,
    /// Slice-major node values, `[slice][node]` with the last axis fastest.
    pub values: Vec<f64>,
    pub stats: SolveStats,
    axes: Vec<Vec<f64>>,
}

impl PdeSolution {
    pub(crate) fn new(
        grid: GridSpec,
        kind: SolutionKind,
        values: Vec<f64>,
        stats: SolveStats,
    ) -> Self {
        let axes = (0..grid.n).map(|d| grid.axis(d)).collect();
        let taus = grid.slice_taus();
        Self {
            grid,
            kind,
            taus,
            values,
            stats,
            axes,
        }
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let m = self.grid.n_nodes();
        &self.values[k * m..(k + 1) * m]
    }

    /// Coordinates of flat node index `idx`.
    pub fn node(&self, idx: usize) -> Vec<f64> {
        let p = self.grid.points_per_axis;
        let mut out = vec![0.0; self.grid.n];
        let mut r = idx;
        for d in (0..self.grid.n).rev() {
            out[d] = self.axes[d][r % p];
            r /= p;
        }
        out
    }

    /// Whether clamping into `[0, 1]` ever removed more than round-off.
    pub fn clipped(&self) -> bool {
        self.stats.max_clip > 1e-12
    }
}
