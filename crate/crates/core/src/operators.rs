//! Trace-type operators `f -> Tr(P o hess f)` on graphs: `L_k`, the
//! normalized `P_k / H_k`, the composite operator built from `P_0..P_{k-1}`,
//! and the divergence-form operator `div(P_{k-1} grad f)`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hypersurface::{CurvatureBundle, GraphHypersurface};
use crate::linalg;

/// Eigenvalues above this are treated as positive.
pub const ELLIPTIC_EIG_TOL: f64 = 1e-10;
/// `H_k` must exceed this to normalize by it.
pub const NORMALIZE_TOL: f64 = 1e-10;

/// Coefficient variants of the composite operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeVariant {
    /// Coefficients `(c_{k-1}/c_i) ((log rho)'(h))^{k-1-i} (-Theta)^i`.
    Compact,
    /// Coefficients `(c_{k-1}/c_i) |(log rho)'(h) / Theta|^{k-1-i}`.
    ThetaRatio,
}

impl FromStr for CompositeVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "compact" | "call_compact" => Ok(Self::Compact),
            "theta_ratio" | "call_theta4" => Ok(Self::ThetaRatio),
            other => Err(Error::BadParams(format!("unknown composite variant '{other}'"))),
        }
    }
}

impl fmt::Display for CompositeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Compact => "compact",
            Self::ThetaRatio => "theta_ratio",
        })
    }
}

/// A trace operator with its coefficient tensor field.
#[derive(Debug, Clone, Serialize)]
pub struct TraceOperator {
    pub label: String,
    /// Mixed, metric-self-adjoint coefficient tensor, `n^2` per point.
    pub coeff: Vec<f64>,
    /// `sup Tr P`.
    pub trace_bound: f64,
    pub min_eigenvalue: f64,
    pub elliptic: bool,
    /// Ellipticity predicates that fail on this surface.
    pub failing: Vec<String>,
}

/// `Tr(P o hess f)` with `P` mixed and `hess f = g^{-1} Hess f`.
pub fn trace_apply(s: &GraphHypersurface, coeff: &[f64], f: &[f64]) -> Vec<f64> {
    let n = s.n();
    let n2 = n * n;
    let hess = s.hessian(f);
    (0..s.len())
        .map(|p| {
            let mixed = linalg::matmul(n, s.metric_inv_at(p), &hess[p * n2..(p + 1) * n2]);
            linalg::trace_product(n, &coeff[p * n2..(p + 1) * n2], &mixed)
        })
        .collect()
}

impl TraceOperator {
    fn from_coeff(label: String, coeff: Vec<f64>, b: &CurvatureBundle, failing: Vec<String>) -> Self {
        let n = b.n;
        let n2 = n * n;
        let mut trace_bound = f64::NEG_INFINITY;
        let mut min_eigenvalue = f64::INFINITY;
        for p in 0..b.len() {
            let c = &coeff[p * n2..(p + 1) * n2];
            trace_bound = trace_bound.max(linalg::trace(n, c));
            min_eigenvalue = min_eigenvalue.min(b.frame_eigenvalues(p, c)[0]);
        }
        let elliptic = min_eigenvalue > ELLIPTIC_EIG_TOL;
        Self { label, coeff, trace_bound, min_eigenvalue, elliptic, failing }
    }

    pub fn apply(&self, s: &GraphHypersurface, f: &[f64]) -> Vec<f64> {
        trace_apply(s, &self.coeff, f)
    }
}

fn check_k(b: &CurvatureBundle, k: usize, lo: usize, hi: usize) -> Result<()> {
    if k < lo || k > hi {
        return Err(Error::BadParams(format!("k = {k} outside {lo}..={hi} for n = {}", b.n)));
    }
    Ok(())
}

/// The operator `L_k` (or `L_k / H_k` when `normalized`).
pub fn lk_operator(b: &CurvatureBundle, k: usize, normalized: bool) -> Result<TraceOperator> {
    check_k(b, k, 0, b.n - 1)?;
    let mut coeff = b.p[k].clone();
    let label = if normalized {
        let hk = b.hk_field(k);
        let min = hk.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > NORMALIZE_TOL) {
            return Err(Error::NormalizeByZero { k, min });
        }
        let n2 = b.n * b.n;
        for (p, h) in hk.iter().enumerate() {
            for v in &mut coeff[p * n2..(p + 1) * n2] {
                *v /= h;
            }
        }
        format!("L_hat_{k}")
    } else {
        format!("L_{k}")
    };
    Ok(TraceOperator::from_coeff(label, coeff, b, Vec::new()))
}

/// `L_k f = Tr(P_k o hess f)`; with `normalized`, `P_k` is divided by `H_k`.
pub fn apply_lk(s: &GraphHypersurface, b: &CurvatureBundle, k: usize, f: &[f64], normalized: bool) -> Result<Vec<f64>> {
    check_k(b, k, 0, b.n - 1)?;
    if normalized {
        return Ok(lk_operator(b, k, true)?.apply(s, f));
    }
    Ok(trace_apply(s, &b.p[k], f))
}

/// Composite operator `sum_{i<k} w_i P_i` for `1 <= k <= n`; ellipticity
/// predicates that fail are listed in `failing`.
pub fn compose_cal_l(s: &GraphHypersurface, b: &CurvatureBundle, k: usize, variant: CompositeVariant) -> Result<TraceOperator> {
    check_k(b, k, 1, b.n)?;
    let n = b.n;
    let n2 = n * n;
    let len = s.len();
    let mut coeff = vec![0.0; len * n2];
    for p in 0..len {
        let (l1, th) = (s.log_d1[p], s.theta[p]);
        for i in 0..k {
            let ratio = b.c[k - 1] / b.c[i];
            let e = (k - 1 - i) as i32;
            let w = match variant {
                CompositeVariant::Compact => ratio * l1.powi(e) * (-th).powi(i as i32),
                CompositeVariant::ThetaRatio => ratio * (l1 / th).abs().powi(e),
            };
            let pi = &b.p[i][p * n2..(p + 1) * n2];
            for (c, v) in coeff[p * n2..(p + 1) * n2].iter_mut().zip(pi) {
                *c += w * v;
            }
        }
    }
    let mut failing = Vec::new();
    match variant {
        CompositeVariant::Compact => {
            if s.rho_p.iter().any(|&v| !(v > 0.0)) {
                failing.push("rho'(h) > 0".to_string());
            }
        }
        CompositeVariant::ThetaRatio => {
            if s.log_d1.iter().zip(&s.theta).any(|(l, t)| !(l * t < 0.0)) {
                failing.push("(log rho)'(h) Theta < 0".to_string());
            }
        }
    }
    for i in 1..k {
        if !(b.newton_min_eigenvalue(i) > ELLIPTIC_EIG_TOL) {
            failing.push(format!("P_{i} positive definite"));
        }
    }
    Ok(TraceOperator::from_coeff(format!("calL_{variant}_{k}"), coeff, b, failing))
}

/// As [`compose_cal_l`], but fails with the first violated ellipticity predicate.
pub fn compose_cal_l_checked(
    s: &GraphHypersurface,
    b: &CurvatureBundle,
    k: usize,
    variant: CompositeVariant,
) -> Result<TraceOperator> {
    let op = compose_cal_l(s, b, k, variant)?;
    if let Some(predicate) = op.failing.first() {
        return Err(Error::HypothesisViolation { predicate: predicate.clone() });
    }
    Ok(op)
}

/// `div(P grad f)` for a mixed tensor `P`, by the conservative flux
/// discretization against the induced volume element.
pub fn divergence_apply(s: &GraphHypersurface, coeff: &[f64], f: &[f64]) -> Vec<f64> {
    let n = s.n();
    let n2 = n * n;
    let len = s.len();
    // flux coefficients sqrt(det g) P g^{-1}
    let mut coef = vec![0.0; len * n2];
    let mut vol = vec![0.0; len];
    for p in 0..len {
        vol[p] = linalg::det(n, s.metric_at(p)).sqrt();
        let m = linalg::matmul(n, &coeff[p * n2..(p + 1) * n2], s.metric_inv_at(p));
        for ij in 0..n2 {
            coef[p * n2 + ij] = vol[p] * m[ij];
        }
        linalg::symmetrize(n, &mut coef[p * n2..(p + 1) * n2]);
    }
    let raw = s.fiber().grid().divergence_form(&coef, f);
    raw.iter().zip(&vol).map(|(d, v)| d / v).collect()
}

/// Both evaluations of `div(P_{k-1} grad f)`.
#[derive(Debug, Clone, Serialize)]
pub struct DivergenceOperator {
    /// Constant-curvature closed form: gradient coupling term plus `L_{k-1} f`.
    pub formula: Vec<f64>,
    /// Conservative flux discretization of the divergence.
    pub divergence: Vec<f64>,
    /// Max over interior points of `|formula - divergence|`.
    pub discrepancy: f64,
}

/// `div(P_{k-1} grad f)` for `2 <= k <= n` on a constant-curvature fiber.
pub fn apply_frak_l(s: &GraphHypersurface, b: &CurvatureBundle, k: usize, f: &[f64]) -> Result<DivergenceOperator> {
    check_k(b, k, 2, b.n)?;
    let n = b.n;
    let n2 = n * n;
    let len = s.len();
    let kappa = s.fiber().kappa();
    let lk1 = trace_apply(s, &b.p[k - 1], f);
    let df = s.fiber().grid().gradient(f);
    let mut formula = Vec::with_capacity(len);
    for p in 0..len {
        let q = kappa / (s.rho[p] * s.rho[p]) - s.log_d2[p];
        let pgh = linalg::matvec(n, &b.p[k - 2][p * n2..(p + 1) * n2], s.grad_h_at(p));
        let coupling = linalg::dot(&pgh, &df[p * n..(p + 1) * n]);
        formula.push((n - k + 1) as f64 * s.theta[p] * q * coupling + lk1[p]);
    }
    let divergence = divergence_apply(s, &b.p[k - 1], f);
    let mask = s.fiber().interior_mask();
    let discrepancy = formula
        .iter()
        .zip(&divergence)
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|((a, d), _)| (a - d).abs())
        .fold(0.0, f64::max);
    Ok(DivergenceOperator { formula, divergence, discrepancy })
}
