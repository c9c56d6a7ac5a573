//! Market models: local rates `b_i(x)`, local volatilities `s_ik(x)`, the
//! potential `H` with `𝔟 = 𝔞 ∇H`, the killing rate `k`, and everything derived
//! from them.
//!
//! Capitalisation-scaled coefficients carry a `frak_` prefix:
//! `frak_b_i = x_i b_i`, `frak_s_ik = x_i s_ik`, `frak_a = frak_s frak_sᵀ`.
//! For models that extend continuously to the closed orthant these are the
//! quantities evaluated on the faces (Fichera drifts, the auxiliary diffusion).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};

/// Relative determinant floor for the volatility matrix.
pub const DET_FLOOR: f64 = 1e-12;
/// Most negative killing rate tolerated before a model is rejected.
pub const KILLING_FLOOR: f64 = -1e-9;
/// Relative residual tolerated in `frak_a ∇H = frak_b`.
pub const POTENTIAL_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// One asset, `dX = (1/X) dt + dW`.
    Bessel3,
    /// Volatility-stabilised market, `b_i = κ X/X_i`, `s = diag((X/X_i)^½)`.
    VolStab { zeta: f64 },
    /// Constant `b` and `s`; the potential is `H = Σ c_i log x_i` with `c = a⁻¹ b`.
    Constant {
        b: Vec<f64>,
        sigma: Matrix,
        a: Matrix,
        h_coef: Vec<f64>,
    },
}

/// An immutable market model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    name: String,
    n: usize,
    kind: ModelKind,
    params: BTreeMap<String, f64>,
}

/// JSON model description.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(rename = "H_linear", default, skip_serializing_if = "Option::is_none")]
    pub h_linear: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficients {
    pub frak_b: Vec<f64>,
    pub frak_s: Vec<Vec<f64>>,
    pub frak_a: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FicheraDrifts {
    pub f: Vec<f64>,
    pub f_hat: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeflatorTerms {
    #[serde(rename = "H")]
    pub h: f64,
    pub k: f64,
    pub g: f64,
}

/// Outcome of the integrated-volatility (`IntVol`) and equal-weight (`EW`)
/// sufficient conditions for relative arbitrage, sampled at a set of points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub n_samples: usize,
    pub horizon: f64,
    pub intvol: ConditionOutcome,
    pub equal_weight: ConditionOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionOutcome {
    /// Infimum of `lhs / rhs-scale` over the samples; `None` if every sample violates.
    pub h_inf: Option<f64>,
    pub h_sup: Option<f64>,
    pub holds: bool,
    /// The condition held with the same `h` at every sample.
    pub equality: bool,
    /// Smallest horizon beyond which arbitrage is guaranteed.
    pub horizon_bound: Option<f64>,
    pub horizon_sufficient: bool,
}

impl ModelSpec {
    pub fn bessel3() -> Self {
        Self {
            name: "bessel3".into(),
            n: 1,
            kind: ModelKind::Bessel3,
            params: BTreeMap::new(),
        }
    }

    pub fn volstab(n: usize, zeta: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::ConfigInvalid(format!(
                "volstab needs n >= 2, got {n}"
            )));
        }
        if !(0.0..=1.0).contains(&zeta) {
            return Err(Error::ConfigInvalid(format!(
                "zeta must lie in [0, 1], got {zeta}"
            )));
        }
        let mut params = BTreeMap::new();
        params.insert("zeta".into(), zeta);
        params.insert("kappa".into(), 0.5 * (1.0 + zeta));
        Ok(Self {
            name: "volstab".into(),
            n,
            kind: ModelKind::VolStab { zeta },
            params,
        })
    }

    /// Constant-coefficient model. Without `h_linear` the potential coefficients
    /// are solved from `a c = b`.
    pub fn constant(
        name: &str,
        b: Vec<f64>,
        sigma: Vec<Vec<f64>>,
        h_linear: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = b.len();
        if n == 0 {
            return Err(Error::ConfigInvalid("empty rate vector".into()));
        }
        let sigma = Matrix::from_rows(&sigma)
            .filter(|m| m.n == n)
            .ok_or_else(|| Error::ConfigInvalid(format!("sigma must be {n}x{n}")))?;
        if !sigma.is_finite() || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::ConfigInvalid("non-finite coefficient".into()));
        }
        let floor = DET_FLOOR * sigma.row_norms().iter().product::<f64>();
        let det = sigma.det();
        if det.abs() <= floor {
            return Err(Error::SingularVolatility {
                x: vec![1.0; n],
                det,
                floor,
            });
        }
        let a = sigma.gram();
        let h_coef = match h_linear {
            Some(c) if c.len() != n => {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.len(),
                })
            }
            Some(c) => c,
            None => a
                .solve(&b)
                .ok_or_else(|| Error::ModelValidation("a is singular".into()))?,
        };
        let model = Self {
            name: name.to_string(),
            n,
            kind: ModelKind::Constant {
                b,
                sigma,
                a,
                h_coef,
            },
            params: BTreeMap::new(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        let stray = |what: &str| {
            Error::ConfigInvalid(format!("`{what}` is not valid for model `{}`", cfg.name))
        };
        match cfg.name.as_str() {
            "bessel3" => {
                if cfg.zeta.is_some() {
                    return Err(stray("zeta"));
                }
                if cfg.b.is_some() || cfg.sigma.is_some() || cfg.h_linear.is_some() {
                    return Err(stray("b/sigma/H_linear"));
                }
                match cfg.n {
                    None | Some(1) => Ok(Self::bessel3()),
                    Some(n) => Err(Error::ConfigInvalid(format!("bessel3 has n = 1, got {n}"))),
                }
            }
            "volstab" => {
                if cfg.b.is_some() || cfg.sigma.is_some() || cfg.h_linear.is_some() {
                    return Err(stray("b/sigma/H_linear"));
                }
                Self::volstab(cfg.n.unwrap_or(2), cfg.zeta.unwrap_or(1.0))
            }
            other => {
                if cfg.zeta.is_some() {
                    return Err(stray("zeta"));
                }
                let b = cfg
                    .b
                    .clone()
                    .ok_or_else(|| Error::ConfigInvalid("missing `b`".into()))?;
                let sigma = cfg
                    .sigma
                    .clone()
                    .ok_or_else(|| Error::ConfigInvalid("missing `sigma`".into()))?;
                if let Some(n) = cfg.n {
                    if n != b.len() {
                        return Err(Error::DimensionMismatch {
                            expected: n,
                            got: b.len(),
                        });
                    }
                }
                Self::constant(other, b, sigma, cfg.h_linear.clone())
            }
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ModelConfig = serde_json::from_str(s)?;
        Self::from_config(&cfg)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// Whether `frak_b`, `frak_s` extend continuously to the closed orthant.
    pub fn extends_to_faces(&self) -> bool {
        !matches!(self.kind, ModelKind::Bessel3)
    }

    /// Whether rates and volatilities depend on the market weights alone.
    pub fn is_weight_markovian(&self) -> bool {
        !matches!(self.kind, ModelKind::Bessel3)
    }

    /// `k ≡ 0`, so the deflator needs no time integral.
    pub fn killing_vanishes(&self) -> bool {
        match &self.kind {
            ModelKind::Bessel3 => true,
            ModelKind::VolStab { zeta } => *zeta == 1.0,
            ModelKind::Constant { .. } => self.killing_unchecked(&vec![1.0; self.n]) == 0.0,
        }
    }

    fn kappa(&self) -> f64 {
        match self.kind {
            ModelKind::VolStab { zeta } => 0.5 * (1.0 + zeta),
            _ => 0.0,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_open(&self, x: &[f64]) -> Result<()> {
        self.check_dim(x)?;
        if x.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::NonPositiveState(x.to_vec()));
        }
        Ok(())
    }

    fn check_closed(&self, x: &[f64]) -> Result<()> {
        self.check_dim(x)?;
        if !self.extends_to_faces() {
            return Err(Error::ExtensionUnavailable(self.name.clone()));
        }
        if x.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::NonPositiveState(x.to_vec()));
        }
        Ok(())
    }

    // ---- raw coefficients on the open orthant -------------------------------

    pub fn rate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_open(x)?;
        Ok(match &self.kind {
            ModelKind::Bessel3 => vec![1.0 / (x[0] * x[0])],
            ModelKind::VolStab { .. } => {
                let s: f64 = x.iter().sum();
                x.iter().map(|&xi| self.kappa() * s / xi).collect()
            }
            ModelKind::Constant { b, .. } => b.clone(),
        })
    }

    pub fn vol(&self, x: &[f64]) -> Result<Matrix> {
        self.check_open(x)?;
        Ok(match &self.kind {
            ModelKind::Bessel3 => Matrix::diag(&[1.0 / x[0]]),
            ModelKind::VolStab { .. } => {
                let s: f64 = x.iter().sum();
                Matrix::diag(&x.iter().map(|&xi| (s / xi).sqrt()).collect::<Vec<_>>())
            }
            ModelKind::Constant { sigma, .. } => sigma.clone(),
        })
    }

    /// Covariance `a = s sᵀ`.
    pub fn covariance(&self, x: &[f64]) -> Result<Matrix> {
        Ok(self.vol(x)?.gram())
    }

    pub fn potential(&self, x: &[f64]) -> Result<f64> {
        self.check_open(x)?;
        Ok(self.potential_unchecked(x))
    }

    #[inline]
    pub(crate) fn potential_unchecked(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ModelKind::Bessel3 => x[0].ln(),
            ModelKind::VolStab { .. } => self.kappa() * x.iter().map(|v| v.ln()).sum::<f64>(),
            ModelKind::Constant { h_coef, .. } => {
                h_coef.iter().zip(x).map(|(c, v)| c * v.ln()).sum()
            }
        }
    }

    /// `∇H`; analytic for the built-ins, central differences for config models.
    pub fn grad_potential(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_open(x)?;
        Ok(match &self.kind {
            ModelKind::Bessel3 => vec![1.0 / x[0]],
            ModelKind::VolStab { .. } => x.iter().map(|&v| self.kappa() / v).collect(),
            ModelKind::Constant { .. } => numeric_gradient(|y| self.potential_unchecked(y), x),
        })
    }

    pub fn killing(&self, x: &[f64]) -> Result<f64> {
        self.check_open(x)?;
        let k = self.killing_unchecked(x);
        if k < KILLING_FLOOR {
            return Err(Error::ModelValidation(format!(
                "killing rate {k:e} < 0 at {x:?}"
            )));
        }
        Ok(k)
    }

    #[inline]
    pub(crate) fn killing_unchecked(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ModelKind::Bessel3 => 0.0,
            ModelKind::VolStab { zeta } => {
                if *zeta == 1.0 {
                    return 0.0;
                }
                let s: f64 = x.iter().sum();
                (1.0 - zeta * zeta) * s * x.iter().map(|v| 1.0 / (8.0 * v)).sum::<f64>()
            }
            ModelKind::Constant { a, h_coef, .. } => {
                let n = self.n;
                let mut k = 0.0;
                for i in 0..n {
                    k += 0.5 * a.get(i, i) * h_coef[i];
                    for j in 0..n {
                        k -= 0.5 * a.get(i, j) * h_coef[i] * h_coef[j];
                    }
                }
                k
            }
        }
    }

    // ---- capitalisation-scaled coefficients ---------------------------------

    #[inline]
    pub(crate) fn frak_b_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::Bessel3 => out[0] = 1.0 / x[0],
            ModelKind::VolStab { .. } => {
                let v = self.kappa() * x.iter().sum::<f64>();
                out.iter_mut().for_each(|o| *o = v);
            }
            ModelKind::Constant { b, .. } => {
                for ((o, &xi), &bi) in out.iter_mut().zip(x).zip(b) {
                    *o = xi * bi;
                }
            }
        }
    }

    /// Writes `frak_s` row-major into `out` (length n²).
    #[inline]
    pub(crate) fn frak_s_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        match &self.kind {
            ModelKind::Bessel3 => out[0] = 1.0,
            ModelKind::VolStab { .. } => {
                let s: f64 = x.iter().sum();
                out.iter_mut().for_each(|o| *o = 0.0);
                for i in 0..n {
                    out[i * n + i] = (x[i] * s).sqrt();
                }
            }
            ModelKind::Constant { sigma, .. } => {
                for i in 0..n {
                    for k in 0..n {
                        out[i * n + k] = x[i] * sigma.get(i, k);
                    }
                }
            }
        }
    }

    /// Whether `frak_s` is diagonal everywhere.
    pub(crate) fn diagonal_noise(&self) -> bool {
        match &self.kind {
            ModelKind::Bessel3 | ModelKind::VolStab { .. } => true,
            ModelKind::Constant { sigma, .. } => {
                (0..self.n).all(|i| (0..self.n).all(|k| i == k || sigma.get(i, k) == 0.0))
            }
        }
    }

    pub(crate) fn frak_a_unchecked(&self, x: &[f64]) -> Matrix {
        let n = self.n;
        match &self.kind {
            ModelKind::Bessel3 => Matrix::diag(&[1.0]),
            ModelKind::VolStab { .. } => {
                let s: f64 = x.iter().sum();
                Matrix::diag(&x.iter().map(|&xi| xi * s).collect::<Vec<_>>())
            }
            ModelKind::Constant { a, .. } => {
                let mut m = Matrix::zeros(n);
                for i in 0..n {
                    for j in 0..n {
                        m.set(i, j, x[i] * x[j] * a.get(i, j));
                    }
                }
                m
            }
        }
    }

    /// `𝔟̂_i = Σ_j frak_a_ij / Σ x`; writes into `out`.
    #[inline]
    pub(crate) fn aux_drift_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::Bessel3 => out[0] = 1.0 / x[0],
            ModelKind::VolStab { .. } => out.copy_from_slice(x),
            ModelKind::Constant { a, .. } => {
                let s: f64 = x.iter().sum();
                let n = self.n;
                for i in 0..n {
                    let row: f64 = (0..n).map(|j| x[j] * a.get(i, j)).sum();
                    out[i] = x[i] * row / s;
                }
            }
        }
    }

    /// `Σ_j D_j frak_a_ij`; analytic for built-ins, finite differences otherwise.
    fn div_frak_a(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            ModelKind::Bessel3 => vec![0.0],
            ModelKind::VolStab { .. } => {
                let s: f64 = x.iter().sum();
                x.iter().map(|&xi| s + xi).collect()
            }
            ModelKind::Constant { .. } => {
                let n = self.n;
                (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| numeric_partial(|y| self.frak_a_unchecked(y).get(i, j), x, j))
                            .sum()
                    })
                    .collect()
            }
        }
    }

    // ---- public operations --------------------------------------------------

    pub fn coefficients(&self, x: &[f64]) -> Result<Coefficients> {
        self.check_open(x)?;
        let vol = self.vol(x)?;
        let floor = DET_FLOOR * vol.row_norms().iter().product::<f64>();
        let det = vol.det();
        if !(det.abs() > floor) {
            return Err(Error::SingularVolatility {
                x: x.to_vec(),
                det,
                floor,
            });
        }
        let n = self.n;
        let mut frak_b = vec![0.0; n];
        self.frak_b_into(x, &mut frak_b);
        let mut s = vec![0.0; n * n];
        self.frak_s_into(x, &mut s);
        let frak_s = Matrix { n, data: s };
        let theta = frak_s.transpose_mul_vec(&self.grad_potential(x)?);
        Ok(Coefficients {
            frak_b,
            frak_a: frak_s.gram().rows(),
            frak_s: frak_s.rows(),
            theta,
        })
    }

    /// Drift `𝔟̂` of the auxiliary diffusion. Faces are allowed when the model
    /// extends to them.
    pub fn auxiliary_drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let total: f64 = x.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NonPositiveState(x.to_vec()));
        }
        if self.extends_to_faces() {
            self.check_closed(x)?;
        } else {
            self.check_open(x)?;
        }
        let mut out = vec![0.0; self.n];
        self.aux_drift_into(x, &mut out);
        Ok(out)
    }

    pub fn fichera_drifts(&self, x: &[f64]) -> Result<FicheraDrifts> {
        self.check_closed(x)?;
        let n = self.n;
        let div = self.div_frak_a(x);
        let mut b = vec![0.0; n];
        self.frak_b_into(x, &mut b);
        let mut b_hat = vec![0.0; n];
        if x.iter().sum::<f64>() > 0.0 {
            self.aux_drift_into(x, &mut b_hat);
        } else if matches!(self.kind, ModelKind::VolStab { .. }) {
            // 𝔟̂_i = x_i vanishes at the origin
        } else {
            return Err(Error::NonPositiveState(x.to_vec()));
        }
        Ok(FicheraDrifts {
            f: b.iter().zip(&div).map(|(b, d)| b - 0.5 * d).collect(),
            f_hat: b_hat.iter().zip(&div).map(|(b, d)| b - 0.5 * d).collect(),
        })
    }

    pub fn deflator_terms(&self, x: &[f64]) -> Result<DeflatorTerms> {
        let h = self.potential(x)?;
        let k = self.killing(x)?;
        let g = (-h).exp() * x.iter().sum::<f64>();
        Ok(DeflatorTerms { h, k, g })
    }

    /// Killing rate from its defining second-order formula with numerically
    /// differentiated `H`; used to cross-check the closed forms.
    pub fn killing_from_potential(&self, x: &[f64]) -> Result<f64> {
        self.check_open(x)?;
        let n = self.n;
        let grad = numeric_gradient(|y| self.potential_unchecked(y), x);
        let a = self.frak_a_unchecked(x);
        let mut k = 0.0;
        for i in 0..n {
            for j in 0..n {
                let hess = numeric_partial(
                    |y| numeric_partial(|z| self.potential_unchecked(z), y, i),
                    x,
                    j,
                );
                k -= 0.5 * a.get(i, j) * (hess + grad[i] * grad[j]);
            }
        }
        Ok(k)
    }

    /// `‖frak_a ∇H − frak_b‖ / (1 + ‖frak_b‖)`.
    pub fn potential_residual(&self, x: &[f64]) -> Result<f64> {
        let grad = self.grad_potential(x)?;
        let a = self.frak_a_unchecked(x);
        let mut b = vec![0.0; self.n];
        self.frak_b_into(x, &mut b);
        let lhs = a.mul_vec(&grad);
        let diff: Vec<f64> = lhs.iter().zip(&b).map(|(l, r)| l - r).collect();
        Ok(norm(&diff) / (1.0 + norm(&b)))
    }

    /// Checks invertibility, `k ≥ 0` and the potential identity at sampled points.
    pub fn validate(&self) -> Result<()> {
        for x in sample_orthant(self.n, 32, 0.05, 20.0) {
            self.coefficients(&x)?;
            self.killing(&x)?;
            let r = self.potential_residual(&x)?;
            if !(r < POTENTIAL_RESIDUAL_TOL) {
                return Err(Error::ModelValidation(format!(
                    "frak_a ∇H ≠ frak_b at {x:?} (relative residual {r:e})"
                )));
            }
        }
        Ok(())
    }

    pub fn check_arbitrage_conditions(
        &self,
        samples: &[Vec<f64>],
        horizon: f64,
    ) -> Result<ConditionReport> {
        if samples.is_empty() {
            return Err(Error::ConfigInvalid("no sample points".into()));
        }
        if !(horizon > 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let n = self.n;
        let nf = n as f64;
        let mut intvol = Vec::with_capacity(samples.len());
        let mut ew = Vec::with_capacity(samples.len());
        for x in samples {
            let a = self.covariance(x)?;
            let s: f64 = x.iter().sum();
            let diag: f64 = (0..n).map(|i| x[i] * a.get(i, i)).sum();
            let quad: f64 = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| x[i] * x[j] * a.get(i, j))
                .sum();
            intvol.push((s * diag - quad) / (s * s));

            let trace: f64 = (0..n).map(|i| a.get(i, i)).sum();
            let total: f64 = a.data.iter().sum();
            let geo = (x.iter().map(|v| v.ln()).sum::<f64>() / nf).exp();
            ew.push(geo * (trace - total / nf) / s);
        }
        Ok(ConditionReport {
            n_samples: samples.len(),
            horizon,
            intvol: outcome(&intvol, 2.0 * nf.ln(), horizon),
            equal_weight: outcome(&ew, 2.0 * nf.powf(1.0 - 1.0 / nf), horizon),
        })
    }
}

fn outcome(ratios: &[f64], bound_numerator: f64, horizon: f64) -> ConditionOutcome {
    let inf = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let sup = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let all_violate = ratios.iter().all(|&r| !(r > 0.0));
    let holds = inf > 0.0;
    let scale = sup.abs().max(1.0);
    let horizon_bound = holds.then(|| bound_numerator / inf);
    ConditionOutcome {
        h_inf: (!all_violate).then_some(inf),
        h_sup: (!all_violate).then_some(sup),
        holds,
        equality: holds && (sup - inf) <= 1e-9 * scale,
        horizon_bound,
        horizon_sufficient: horizon_bound.is_some_and(|b| horizon > b),
    }
}

/// Step used by the numerical derivatives.
fn fd_step(x: f64) -> f64 {
    (1e-5_f64).max(1e-5 * x.abs())
}

/// `∂f/∂x_i`: central when the stencil stays in the orthant, otherwise the
/// second-order one-sided stencil pointing inward.
pub(crate) fn numeric_partial(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let h = fd_step(x[i]);
    let mut y = x.to_vec();
    if x[i] - h > 0.0 {
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        (fp - fm) / (2.0 * h)
    } else {
        let f0 = f(x);
        y[i] = x[i] + h;
        let f1 = f(&y);
        y[i] = x[i] + 2.0 * h;
        let f2 = f(&y);
        (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)
    }
}

pub(crate) fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len()).map(|i| numeric_partial(&f, x, i)).collect()
}

/// Deterministic Halton points, log-uniform in `[lo, hi]^n`.
pub fn sample_orthant(n: usize, count: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    let (llo, lhi) = (lo.ln(), hi.ln());
    (1..=count as u64)
        .map(|k| {
            (0..n)
                .map(|d| {
                    let u = radical_inverse(k, PRIMES[d % PRIMES.len()]);
                    (llo + u * (lhi - llo)).exp()
                })
                .collect()
        })
        .collect()
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn volstab_frak_b_is_kappa_times_total() {
        let m = ModelSpec::volstab(3, 1.0).unwrap();
        let c = m.coefficients(&[1.0, 2.0, 3.0]).unwrap();
        for v in c.frak_b {
            assert!(close(v, 6.0, 1e-14));
        }
    }

    #[test]
    fn bessel3_coefficients_at_two() {
        let c = ModelSpec::bessel3().coefficients(&[2.0]).unwrap();
        assert!(close(c.frak_b[0], 0.5, 1e-15));
        assert!(close(c.frak_s[0][0], 1.0, 1e-15));
        assert!(close(c.theta[0], 0.5, 1e-15));
    }

    #[test]
    fn frak_a_symmetric_on_diagonal_states() {
        let m = ModelSpec::constant(
            "c",
            vec![0.03, 0.01],
            vec![vec![0.3, 0.1], vec![0.0, 0.2]],
            None,
        )
        .unwrap();
        let c = m.coefficients(&[1.5, 1.5]).unwrap();
        assert_eq!(c.frak_a[0][1], c.frak_a[1][0]);
        assert!(c.frak_a[0][0] >= 0.0 && c.frak_a[1][1] >= 0.0);
    }

    #[test]
    fn auxiliary_drift_examples() {
        let vs = ModelSpec::volstab(3, 1.0).unwrap();
        assert_eq!(
            vs.auxiliary_drift(&[1.0, 2.0, 3.0]).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        let b = ModelSpec::bessel3().auxiliary_drift(&[2.0]).unwrap();
        assert!(close(b[0], 0.5, 1e-15));
        // n = 1, a = σ²: 𝔟̂ = x · x σ² / x = σ² x
        let sigma = 0.4;
        let g = ModelSpec::constant("gbm", vec![0.02], vec![vec![sigma]], None).unwrap();
        let d = g.auxiliary_drift(&[3.0]).unwrap();
        assert!(close(d[0], sigma * sigma * 3.0, 1e-14));
    }

    #[test]
    fn auxiliary_drift_rejects_zero_total() {
        let vs = ModelSpec::volstab(2, 1.0).unwrap();
        assert!(matches!(
            vs.auxiliary_drift(&[0.0, 0.0]),
            Err(Error::NonPositiveState(_))
        ));
    }

    #[test]
    fn fichera_drifts_on_face() {
        let m = ModelSpec::volstab(3, 1.0).unwrap();
        let f = m.fichera_drifts(&[0.0, 2.0, 3.0]).unwrap();
        assert!(close(f.f_hat[0], -2.5, 1e-14));
        assert!(close(f.f[0], 2.5, 1e-14));
        let origin = m.fichera_drifts(&[0.0, 0.0, 0.0]).unwrap();
        assert!(origin.f_hat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fichera_needs_extension() {
        assert!(matches!(
            ModelSpec::bessel3().fichera_drifts(&[0.0]),
            Err(Error::ExtensionUnavailable(_))
        ));
    }

    #[test]
    fn deflator_terms_examples() {
        let d = ModelSpec::bessel3().deflator_terms(&[2.0]).unwrap();
        assert!(close(d.h, 2f64.ln(), 1e-15));
        assert_eq!(d.k, 0.0);
        assert!(close(d.g, 1.0, 1e-15));

        let d = ModelSpec::volstab(2, 1.0)
            .unwrap()
            .deflator_terms(&[1.0, 1.0])
            .unwrap();
        assert_eq!((d.h, d.k), (0.0, 0.0));
        assert!(close(d.g, 2.0, 1e-15));

        let d = ModelSpec::volstab(2, 0.0)
            .unwrap()
            .deflator_terms(&[1.0, 1.0])
            .unwrap();
        assert!(close(d.k, 0.5, 1e-15));
    }

    #[test]
    fn killing_closed_forms_match_second_order_formula() {
        for m in [
            ModelSpec::bessel3(),
            ModelSpec::volstab(2, 0.0).unwrap(),
            ModelSpec::volstab(3, 0.5).unwrap(),
        ] {
            for x in sample_orthant(m.n(), 12, 0.2, 5.0) {
                let closed = m.killing(&x).unwrap();
                let generic = m.killing_from_potential(&x).unwrap();
                assert!(
                    (closed - generic).abs() < 1e-4 * (1.0 + closed.abs()),
                    "{}: {closed} vs {generic} at {x:?}",
                    m.name()
                );
            }
        }
    }

    #[test]
    fn non_positive_state_rejected() {
        let m = ModelSpec::volstab(2, 1.0).unwrap();
        assert!(matches!(
            m.coefficients(&[1.0, 0.0]),
            Err(Error::NonPositiveState(_))
        ));
        assert!(matches!(
            m.deflator_terms(&[-1.0, 1.0]),
            Err(Error::NonPositiveState(_))
        ));
    }

    #[test]
    fn singular_constant_model_rejected() {
        let r = ModelSpec::constant(
            "s",
            vec![0.1, 0.1],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            None,
        );
        assert!(matches!(r, Err(Error::SingularVolatility { .. })));
    }

    #[test]
    fn negative_killing_rejected() {
        // n = 1: k = (b/2)(1 − b/σ²) < 0 for b > σ²
        let r = ModelSpec::constant("hot", vec![0.5], vec![vec![0.2]], None);
        assert!(matches!(r, Err(Error::ModelValidation(_))));
    }

    #[test]
    fn inconsistent_potential_rejected() {
        let r = ModelSpec::constant("bad", vec![0.01], vec![vec![0.3]], Some(vec![2.0]));
        assert!(matches!(r, Err(Error::ModelValidation(_))));
    }

    #[test]
    fn constant_model_fichera_matches_closed_form() {
        let m = ModelSpec::constant(
            "c",
            vec![0.02, 0.03],
            vec![vec![0.3, 0.05], vec![0.1, 0.25]],
            None,
        )
        .unwrap();
        let a = m.covariance(&[1.0, 1.0]).unwrap();
        let x = [0.0, 1.7];
        let f = m.fichera_drifts(&x).unwrap();
        // Σ_j D_j (x_i x_j a_ij) = x_i (Σ_j a_ij + a_ii)
        for i in 0..2 {
            let div = x[i] * (a.get(i, 0) + a.get(i, 1) + a.get(i, i));
            let b = x[i] * [0.02, 0.03][i];
            assert!(close(f.f[i], b - 0.5 * div, 1e-8));
        }
    }

    #[test]
    fn conditions_volstab_equality_and_bound() {
        let m = ModelSpec::volstab(2, 1.0).unwrap();
        let r = m
            .check_arbitrage_conditions(&sample_orthant(2, 50, 0.1, 10.0), 2.0)
            .unwrap();
        assert!(r.intvol.equality);
        assert!(close(r.intvol.h_inf.unwrap(), 1.0, 1e-12));
        assert!(close(
            r.intvol.horizon_bound.unwrap(),
            2.0 * 2f64.ln(),
            1e-12
        ));
        assert!(r.intvol.horizon_sufficient);
        assert!(r.equal_weight.holds && r.equal_weight.h_inf.unwrap() >= 1.0 - 1e-12);
    }

    #[test]
    fn conditions_single_asset_fail() {
        let m = ModelSpec::constant("gbm", vec![0.01], vec![vec![0.3]], None).unwrap();
        let r = m
            .check_arbitrage_conditions(&[vec![1.0], vec![2.0]], 1.0)
            .unwrap();
        assert!(!r.intvol.holds);
        assert!(r.intvol.h_inf.is_none());
        assert!(r.intvol.horizon_bound.is_none());
    }

    #[test]
    fn config_parsing() {
        let m = ModelSpec::from_json_str(r#"{"name":"volstab","zeta":0.5,"n":3}"#).unwrap();
        assert_eq!(m.n(), 3);
        assert_eq!(m.params()["kappa"], 0.75);
        let c = ModelSpec::from_json_str(
            r#"{"name":"pair","n":2,"b":[0.02,0.01],"sigma":[[0.2,0.0],[0.05,0.3]]}"#,
        )
        .unwrap();
        assert_eq!(c.n(), 2);
        assert!(ModelSpec::from_json_str(r#"{"name":"bessel3","extra":1}"#).is_err());
        assert!(ModelSpec::from_json_str(r#"{"name":"volstab","zeta":1.5}"#).is_err());
        assert!(ModelSpec::from_json_str(r#"{"name":"bessel3","n":2}"#).is_err());
    }
}
