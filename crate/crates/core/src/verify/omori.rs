//! Side conditions of the generalized Omori-Yau maximum principle on a
//! rotationally symmetric model surface `dr^2 + f(r)^2 dphi^2` of constant
//! curvature `c <= 0`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::numeric::ls_slope;

use super::parabolicity::classify_tail;
use super::{IdentityId, IdentityReport};

/// Constant in `|grad gamma| <= A sqrt(gamma)`.
pub const GRADIENT_CONSTANT: f64 = 2.0;
/// Far end of the sampling range for `G`.
pub const G_T_MAX: f64 = 1e6;
/// Largest admissible log-log growth rate of a quantity required to stay bounded.
pub const GROWTH_TOL: f64 = 0.05;
/// Relative tolerance of the gradient bound.
const GRADIENT_TOL: f64 = 1e-8;
/// First sampled radius of the comparison checks.
pub const R_MIN: f64 = 1.2;
const SAMPLES: usize = 200;
/// Relative step of the fourth-order difference quotients.
const FD_STEP: f64 = 1e-3;
/// Tolerance on the space-form equality `Hess r = psi_c (g - dr dr)` and the gamma Hessian bound.
pub const EQUALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmoriModel {
    /// Curvature of the model.
    pub c: f64,
    pub r_max: f64,
}

impl OmoriModel {
    /// `log f(r)`, evaluated without overflow.
    fn log_profile(&self, r: f64) -> f64 {
        if self.c == 0.0 {
            r.ln()
        } else {
            let a = (-self.c).sqrt();
            // log(sinh(a r) / a)
            a * r + (-(-2.0 * a * r).exp()).ln_1p() - std::f64::consts::LN_2 - a.ln()
        }
    }

    /// Comparison function `psi_c`.
    pub fn psi(&self, r: f64) -> f64 {
        if self.c == 0.0 {
            1.0 / r
        } else {
            let a = (-self.c).sqrt();
            a / (a * r).tanh()
        }
    }
}

/// Exhaustion function `gamma` of the radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSpec {
    /// `gamma = r^2`.
    RSquared,
}

impl GammaSpec {
    fn eval(&self, r: f64) -> f64 {
        match self {
            Self::RSquared => r * r,
        }
    }
}

/// Growth function `G`.
#[derive(Debug, Clone, PartialEq)]
pub enum GSpec {
    /// `t^2 + 1`.
    QuadraticPlusOne,
    /// `(t^2 + 1) log(e + t)`.
    QuadraticLog,
    /// `e^t`.
    Exponential,
    /// `1 + t^p`.
    Power(f64),
    /// Expression in `x` (standing for `t`).
    Expression(Expr),
}

impl GSpec {
    /// `log G(t)`.
    fn log_g(&self, t: f64) -> f64 {
        match self {
            Self::QuadraticPlusOne => (t * t).ln_1p(),
            Self::QuadraticLog => (t * t).ln_1p() + (std::f64::consts::E + t).ln().ln(),
            Self::Exponential => t,
            Self::Power(p) => t.powf(*p).ln_1p(),
            Self::Expression(e) => e.eval(&[t]).ln(),
        }
    }

    fn g(&self, t: f64) -> f64 {
        match self {
            Self::Expression(e) => e.eval(&[t]),
            other => other.log_g(t).exp(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::QuadraticPlusOne => "t^2+1".to_string(),
            Self::QuadraticLog => "(t^2+1)log(e+t)".to_string(),
            Self::Exponential => "e^t".to_string(),
            Self::Power(p) => format!("1+t^{p}"),
            Self::Expression(_) => "expression".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmoriCheck {
    pub gamma_ok: [bool; 3],
    #[serde(rename = "G_ok")]
    pub g_ok: [bool; 4],
    /// `min (psi_c(r) - Hess r(e, e))` over unit `e` orthogonal to `grad r`, sampled.
    pub psi_c_margin: f64,
    /// Largest `|psi_c(r) - Hess r(e, e)|`; zero on the space forms.
    pub psi_c_equality_defect: f64,
    /// `min` over samples of the smallest eigenvalue of `2 sqrt(gamma) psi_c(sqrt(gamma)) g - Hess gamma`.
    pub gamma_hessian_margin: f64,
    pub details: Vec<String>,
}

impl OmoriCheck {
    pub fn all_pass(&self) -> bool {
        self.gamma_ok.iter().chain(&self.g_ok).all(|&b| b)
    }

    /// Hessian comparison, gamma Hessian bound and the seven side conditions as reports.
    pub fn reports(&self) -> Vec<IdentityReport> {
        vec![
            IdentityReport::predicate(
                IdentityId::HessianComparison,
                self.psi_c_equality_defect <= EQUALITY_TOL && self.psi_c_margin >= -EQUALITY_TOL,
                Some(self.psi_c_equality_defect),
                Some(format!("margin {:e}", self.psi_c_margin)),
            ),
            IdentityReport::predicate(
                IdentityId::GammaHessian,
                self.gamma_hessian_margin >= -EQUALITY_TOL,
                Some(self.gamma_hessian_margin),
                None,
            ),
            IdentityReport::predicate(
                IdentityId::OmoriConditions,
                self.all_pass(),
                None,
                Some(format!("gamma {:?}, G {:?}", self.gamma_ok, self.g_ok)),
            ),
        ]
    }
}

fn log_samples(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).collect()
}

/// Fourth-order central first and second differences.
fn fd(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> (f64, f64) {
    let (fm2, fm1, f0, fp1, fp2) = (f(x - 2.0 * h), f(x - h), f(x), f(x + h), f(x + 2.0 * h));
    let d1 = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h);
    let d2 = (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) / (12.0 * h * h);
    (d1, d2)
}

/// Log-log growth rate of `log q` over the last decade of `xs`.
fn tail_growth(xs: &[f64], log_q: &[f64]) -> f64 {
    let start = xs.len() / 2;
    let lx: Vec<f64> = xs[start..].iter().map(|x| x.ln()).collect();
    ls_slope(&lx, &log_q[start..])
}

/// Evaluate the `gamma` and `G` conditions on the model and the Hessian
/// comparison against an independent finite-difference Hessian of `r`.
pub fn check_omori(model: OmoriModel, gamma: GammaSpec, g: &GSpec) -> Result<OmoriCheck> {
    if !(model.c <= 0.0) || !(model.r_max > 2.0 * R_MIN) {
        return Err(Error::BadParams(format!("model needs c <= 0 and r_max > {}", 2.0 * R_MIN)));
    }
    let mut details = Vec::new();
    for t in crate::numeric::linspace(0.0, model.r_max, 1001) {
        let v = g.g(t);
        if !(v > 0.0) {
            return Err(Error::BadG { t, value: v });
        }
    }

    // Hessian of the distance: radial eigenvalue 0, tangential (log f)'.
    let log_f = |r: f64| model.log_profile(r);
    let rs = log_samples(R_MIN, model.r_max, SAMPLES);
    let mut psi_c_margin = f64::INFINITY;
    let mut psi_c_equality_defect = 0.0f64;
    let mut gamma_hessian_margin = f64::INFINITY;
    let mut grad_ratio = 0.0f64;
    let mut lgamma_ratio = Vec::with_capacity(rs.len());
    let gamma_fn = |r: f64| gamma.eval(r);
    for &r in &rs {
        let (dlog_f, _) = fd(&log_f, r, FD_STEP * r);
        let psi = model.psi(r);
        let slack = psi - dlog_f;
        psi_c_margin = psi_c_margin.min(slack);
        psi_c_equality_defect = psi_c_equality_defect.max(slack.abs());

        let (g1, g2) = fd(&gamma_fn, r, FD_STEP * r);
        let gam = gamma.eval(r);
        let sq = gam.sqrt();
        let bound = 2.0 * sq * model.psi(sq);
        // Hess gamma = gamma'' dr^2 + gamma' (log f)' (g - dr^2)
        gamma_hessian_margin = gamma_hessian_margin.min((bound - g2).min(bound - g1 * dlog_f));
        grad_ratio = grad_ratio.max(g1.abs() / sq);
        let lap = g2 + g1 * dlog_f;
        let denom_log = 0.5 * (gam.ln() + g.log_g(sq));
        lgamma_ratio.push(lap.max(f64::MIN_POSITIVE).ln() - denom_log);
    }
    details.push(format!("sup |grad gamma| / sqrt(gamma) = {grad_ratio:.12}"));

    let grid_r = log_samples(1.0, G_T_MAX, SAMPLES);
    let lg_r: Vec<f64> = grid_r.iter().map(|&r| gamma.eval(r).ln()).collect();
    let gamma1 = lg_r.windows(2).all(|w| w[1] > w[0]) && tail_growth(&grid_r, &lg_r) > GROWTH_TOL;
    let gamma2 = grad_ratio <= GRADIENT_CONSTANT * (1.0 + GRADIENT_TOL);
    let growth3 = tail_growth(&rs, &lgamma_ratio);
    let gamma3 = growth3 <= GROWTH_TOL;
    details.push(format!("tail growth of L gamma / sqrt(gamma G(sqrt gamma)) = {growth3:.6}"));

    let g0 = g.g(0.0);
    let cond_i = g0 > 0.0;
    let ts = log_samples(1e-3, G_T_MAX, 4 * SAMPLES);
    let mut cond_ii = true;
    let mut prev = g.log_g(0.0);
    for &t in &ts {
        let cur = g.log_g(t);
        if cur < prev - 1e-12 * (1.0 + prev.abs()) {
            cond_ii = false;
            details.push(format!("G decreases before t = {t}"));
            break;
        }
        prev = cur;
    }
    let cond_iii = match classify_tail(|t| -0.5 * g.log_g(t), G_T_MAX) {
        Ok(tail) => {
            details.push(format!(
                "1/sqrt(G) tail exponent {:.4}, log exponent {:?}, {}",
                tail.exponent,
                tail.log_exponent,
                if tail.divergent { "not integrable" } else { "integrable" }
            ));
            tail.divergent
        }
        Err(e) => {
            details.push(format!("1/sqrt(G) tail undecided: {e}"));
            false
        }
    };
    let ts4 = log_samples(10.0, G_T_MAX, SAMPLES);
    let ratio: Vec<f64> = ts4.iter().map(|&t| t.ln() + g.log_g(t.sqrt()) - g.log_g(t)).collect();
    let growth4 = tail_growth(&ts4, &ratio);
    let cond_iv = ratio.iter().all(|r| r.is_finite()) && growth4 <= GROWTH_TOL;
    details.push(format!("tail growth of t G(sqrt t) / G(t) = {growth4:.6}"));
    details.push(format!(
        "psi_c comparison defect {psi_c_equality_defect:.3e}; G(0) = {g0}; G = {}",
        g.label()
    ));

    Ok(OmoriCheck {
        gamma_ok: [gamma1, gamma2, gamma3],
        g_ok: [cond_i, cond_ii, cond_iii, cond_iv],
        psi_c_margin,
        psi_c_equality_defect,
        gamma_hessian_margin,
        details,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_model_passes_everything() {
        let chk = check_omori(OmoriModel { c: 0.0, r_max: 50.0 }, GammaSpec::RSquared, &GSpec::QuadraticPlusOne).unwrap();
        assert!(chk.all_pass(), "{chk:?}");
        assert!(chk.psi_c_equality_defect <= 1e-8);
        assert!(chk.gamma_hessian_margin >= -1e-8);
    }

    #[test]
    fn hyperbolic_model() {
        let chk = check_omori(OmoriModel { c: -1.0, r_max: 30.0 }, GammaSpec::RSquared, &GSpec::QuadraticPlusOne).unwrap();
        assert!(chk.all_pass(), "{chk:?}");
        assert!(chk.psi_c_equality_defect <= 1e-8);
        assert!(chk.gamma_hessian_margin >= -1e-8);
    }

    #[test]
    fn g_library() {
        let m = OmoriModel { c: 0.0, r_max: 50.0 };
        let exp = check_omori(m, GammaSpec::RSquared, &GSpec::Exponential).unwrap();
        assert_eq!(exp.g_ok, [true, true, false, true]);
        let ql = check_omori(m, GammaSpec::RSquared, &GSpec::QuadraticLog).unwrap();
        assert!(ql.g_ok.iter().all(|&b| b), "{ql:?}");
        let cubic = check_omori(m, GammaSpec::RSquared, &GSpec::Power(3.0)).unwrap();
        assert!(!cubic.g_ok[2]);
        let lin = check_omori(m, GammaSpec::RSquared, &GSpec::Power(1.0)).unwrap();
        assert!(lin.g_ok[2] && !lin.g_ok[3]);
        let bad = GSpec::Expression(crate::expr::parse("x - 1").unwrap());
        assert!(matches!(check_omori(m, GammaSpec::RSquared, &bad), Err(Error::BadG { .. })));
    }
}
