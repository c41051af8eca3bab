//! Residual reports for every closed-form identity and inequality, fitted
//! convergence orders under refinement, and the side-condition checkers.

mod identities;
mod omori;
mod parabolicity;

pub use identities::{
    condition_reports, verify_composite, verify_inequalities, verify_structural, verify_suite, verify_theta, SuiteChecks,
    SuiteSpec,
};
pub use omori::{check_omori, GSpec, GammaSpec, OmoriCheck, OmoriModel};
pub use parabolicity::{check_parabolicity, classify_tail, ParabolicityResult, Profile, TailClass};

use std::fmt;

use serde::Serialize;

use crate::numeric::ls_slope;

/// Minimum fitted order for discretization identities.
pub const MIN_ORDER: f64 = 1.8;
/// Residual ceiling for algebraic identities (relative) and exact cases.
pub const ALGEBRAIC_TOL: f64 = 1e-10;

/// One entry per checked formula. The `equation` text of each variant is the
/// documented formula it checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityId {
    SigmaOperator,
    HeightOperator,
    TraceNewton,
    TraceShapeNewton,
    TraceShapeSquaredNewton,
    ShapeNormSquared,
    HeightGradientNorm,
    GaussScalar,
    IntrinsicGauss,
    CompositeSplit,
    CompositeSigma,
    CompositeSigmaRatio,
    DivergenceForm,
    ThetaHatLaplacian,
    ThetaHatNewton,
    PhiDivergence,
    SectionalDecomposition,
    WedgeNorm,
    SectionalBound,
    FiberTermBound,
    CurvatureFloor,
    GardingChain,
    MeanCurvatureSquare,
    ThetaBound,
    HessianComparison,
    GammaHessian,
    OmoriConditions,
    ParabolicityCriterion,
    LogConcavity,
    TimelikeConvergence,
    NullConvergence,
    StrictNullConvergence,
}

impl IdentityId {
    pub const ALL: [IdentityId; 32] = [
        Self::SigmaOperator,
        Self::HeightOperator,
        Self::TraceNewton,
        Self::TraceShapeNewton,
        Self::TraceShapeSquaredNewton,
        Self::ShapeNormSquared,
        Self::HeightGradientNorm,
        Self::GaussScalar,
        Self::IntrinsicGauss,
        Self::CompositeSplit,
        Self::CompositeSigma,
        Self::CompositeSigmaRatio,
        Self::DivergenceForm,
        Self::ThetaHatLaplacian,
        Self::ThetaHatNewton,
        Self::PhiDivergence,
        Self::SectionalDecomposition,
        Self::WedgeNorm,
        Self::SectionalBound,
        Self::FiberTermBound,
        Self::CurvatureFloor,
        Self::GardingChain,
        Self::MeanCurvatureSquare,
        Self::ThetaBound,
        Self::HessianComparison,
        Self::GammaHessian,
        Self::OmoriConditions,
        Self::ParabolicityCriterion,
        Self::LogConcavity,
        Self::TimelikeConvergence,
        Self::NullConvergence,
        Self::StrictNullConvergence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SigmaOperator => "sigma_operator",
            Self::HeightOperator => "height_operator",
            Self::TraceNewton => "trace_newton",
            Self::TraceShapeNewton => "trace_shape_newton",
            Self::TraceShapeSquaredNewton => "trace_shape_squared_newton",
            Self::ShapeNormSquared => "shape_norm_squared",
            Self::HeightGradientNorm => "height_gradient_norm",
            Self::GaussScalar => "gauss_scalar",
            Self::IntrinsicGauss => "intrinsic_gauss",
            Self::CompositeSplit => "composite_split",
            Self::CompositeSigma => "composite_sigma",
            Self::CompositeSigmaRatio => "composite_sigma_ratio",
            Self::DivergenceForm => "divergence_form",
            Self::ThetaHatLaplacian => "theta_hat_laplacian",
            Self::ThetaHatNewton => "theta_hat_newton",
            Self::PhiDivergence => "phi_divergence",
            Self::SectionalDecomposition => "sectional_decomposition",
            Self::WedgeNorm => "wedge_norm",
            Self::SectionalBound => "sectional_bound",
            Self::FiberTermBound => "fiber_term_bound",
            Self::CurvatureFloor => "curvature_floor",
            Self::GardingChain => "garding_chain",
            Self::MeanCurvatureSquare => "mean_curvature_square",
            Self::ThetaBound => "theta_bound",
            Self::HessianComparison => "hessian_comparison",
            Self::GammaHessian => "gamma_hessian",
            Self::OmoriConditions => "omori_conditions",
            Self::ParabolicityCriterion => "parabolicity_criterion",
            Self::LogConcavity => "log_concavity",
            Self::TimelikeConvergence => "timelike_convergence",
            Self::NullConvergence => "null_convergence",
            Self::StrictNullConvergence => "strict_null_convergence",
        }
    }

    /// The formula being checked.
    pub fn equation(self) -> &'static str {
        match self {
            Self::SigmaOperator => "L_k sigma(h) = -c_k (rho'(h) H_k + Theta rho(h) H_{k+1})",
            Self::HeightOperator => {
                "L_k h = -(log rho)'(h) (c_k H_k + <P_k grad h, grad h>) - Theta c_k H_{k+1}"
            }
            Self::TraceNewton => "Tr P_k = c_k H_k",
            Self::TraceShapeNewton => "Tr(A P_k) = -c_k H_{k+1}",
            Self::TraceShapeSquaredNewton => "Tr(A^2 P_k) = C(n,k+1) (n H_1 H_{k+1} - (n-k-1) H_{k+2})",
            Self::ShapeNormSquared => "|A|^2 = n^2 H_1^2 - n(n-1) H_2",
            Self::HeightGradientNorm => "|grad h|^2 = Theta^2 - 1",
            Self::GaussScalar => "n(n-1) H_2 = Sbar - S + 2 Ricbar(N,N)",
            Self::IntrinsicGauss => "K(X,Y) = Kbar(X,Y) - <AX,X><AY,Y> + <AX,Y>^2",
            Self::CompositeSplit => "calL = (n-1)(log rho)'(h) L_0 - Theta L_1 for k = 2",
            Self::CompositeSigma => "calL sigma(h) = -c_{k-1} rho(h) ((log rho)'(h)^k - (-Theta)^k H_k)",
            Self::CompositeSigmaRatio => {
                "calL' sigma(h) = c_{k-1} (-Theta)^{1-k} rho(h) ((-Theta)^k H_k - (log rho)'(h)^k)"
            }
            Self::DivergenceForm => {
                "div(P_{k-1} grad f) = (n-k+1) Theta (kappa/rho^2 - (log rho)'') <P_{k-2} grad h, grad f> + L_{k-1} f"
            }
            Self::ThetaHatLaplacian => {
                "Lap That = -n rho <grad h, grad H_1> + n rho' H_1 + n That (n H_1^2 - (n-1) H_2) + That (Ric_P(N*,N*) - (n-1)(log rho)'' |grad h|^2)"
            }
            Self::ThetaHatNewton => {
                "L_k That = -C(n,k+1) rho <grad h, grad H_{k+1}> + rho' c_k H_{k+1} + That (kappa/rho^2 - (log rho)'')(|grad h|^2 c_k H_k - <P_k grad h, grad h>) + That C(n,k+1)(n H_1 H_{k+1} - (n-k-1) H_{k+2})"
            }
            Self::PhiDivergence => {
                "div(P_{k-1} grad phi), phi = c sigma(h) + That: -c_{k-1} rho' (c H_{k-1} - H_k) + (n-k+1) That Q c <P_{k-2} grad h, grad h> + (n-k) That Q <P_{k-1} grad h, grad h> + That C(n,k) (n H_1 H_k - (n-k) H_{k+1} - k c H_k) - C(n,k) rho <grad h, grad H_k>"
            }
            Self::SectionalDecomposition => {
                "Kbar(X,Y) = kappa |X*^Y*|^2 / rho^2 + (log rho)'^2 - (log rho)'' (<X,grad h>^2 + <Y,grad h>^2)"
            }
            Self::WedgeNorm => "|X*^Y*|^2 = 1 + <X,T>^2 + <Y,T>^2",
            Self::SectionalBound => "K(X,Y) >= Kbar(X,Y) - |A|^2",
            Self::FiberTermBound => "Kbar(X,Y) >= kappa |X*^Y*|^2 / rho^2 when (log rho)'' <= 0",
            Self::CurvatureFloor => "kappa |X*^Y*|^2 / rho^2 >= -|kappa| Theta^2 / rho^2",
            Self::GardingChain => "H_1 >= H_2^(1/2) >= ... >= H_n^(1/n) > 0 at elliptic points",
            Self::MeanCurvatureSquare => "H_1^2 >= H_2 where H_2 > 0",
            Self::ThetaBound => "Theta^2 >= 1",
            Self::HessianComparison => "Hess r <= psi_c(r) (g - dr (x) dr)",
            Self::GammaHessian => "Hess gamma <= 2 sqrt(gamma) psi_c(sqrt(gamma)) g for large gamma",
            Self::OmoriConditions => "gamma and G conditions of the generalized maximum principle",
            Self::ParabolicityCriterion => "(sup H_{k-1} vol(dB_t))^{-1} not in L^1(+inf)",
            Self::LogConcavity => "(log rho)'' <= 0",
            Self::TimelikeConvergence => "Ric_P >= (n-1) sup (log rho)'' rho^2 and rho'' <= 0",
            Self::NullConvergence => "Ric_P >= (n-1) sup (log rho)'' rho^2",
            Self::StrictNullConvergence => "Ric_P > (n-1) sup (log rho)'' rho^2",
        }
    }

    pub fn class(self) -> IdentityClass {
        match self {
            Self::SigmaOperator
            | Self::HeightOperator
            | Self::GaussScalar
            | Self::IntrinsicGauss
            | Self::CompositeSigma
            | Self::CompositeSigmaRatio
            | Self::DivergenceForm
            | Self::ThetaHatLaplacian
            | Self::ThetaHatNewton
            | Self::PhiDivergence => IdentityClass::Discretization,
            Self::TraceNewton
            | Self::TraceShapeNewton
            | Self::TraceShapeSquaredNewton
            | Self::ShapeNormSquared
            | Self::HeightGradientNorm
            | Self::CompositeSplit
            | Self::SectionalDecomposition
            | Self::WedgeNorm => IdentityClass::Algebraic,
            Self::SectionalBound
            | Self::FiberTermBound
            | Self::CurvatureFloor
            | Self::GardingChain
            | Self::MeanCurvatureSquare
            | Self::ThetaBound
            | Self::HessianComparison
            | Self::GammaHessian => IdentityClass::Inequality,
            Self::OmoriConditions
            | Self::ParabolicityCriterion
            | Self::LogConcavity
            | Self::TimelikeConvergence
            | Self::NullConvergence
            | Self::StrictNullConvergence => IdentityClass::Predicate,
        }
    }
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityClass {
    /// Same-data algebra; relative residual must stay below `ALGEBRAIC_TOL`.
    Algebraic,
    /// Both sides discretized independently; must converge at `MIN_ORDER`.
    Discretization,
    /// Pointwise inequality; minimum slack must stay above `-tolerance`.
    Inequality,
    /// Boolean predicate of a scalar computation.
    Predicate,
}

/// Worst point of a residual field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub index: usize,
    pub coords: Vec<f64>,
    pub value: f64,
}

/// Residual norms on one grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResidual {
    pub spacing: f64,
    pub shape: Vec<usize>,
    /// Max-norm residual (inequalities: largest violation, 0 if none).
    pub max: f64,
    /// Root-mean-square residual over the checked points.
    pub l2: f64,
    /// Inequalities: smallest slack over the checked points.
    pub min_slack: Option<f64>,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub identity: IdentityId,
    pub k: Option<usize>,
    pub class: IdentityClass,
    pub equation: String,
    pub grids: Vec<GridResidual>,
    pub fitted_order: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    /// Scalar outcome of predicate checks.
    pub value: Option<f64>,
    pub note: Option<String>,
}

impl IdentityReport {
    /// File-name stem: identity plus `_k{k}` when indexed.
    pub fn name(&self) -> String {
        match self.k {
            Some(k) => format!("{}_k{k}", self.identity.as_str()),
            None => self.identity.as_str().to_string(),
        }
    }

    pub fn predicate(identity: IdentityId, pass: bool, value: Option<f64>, note: Option<String>) -> Self {
        Self {
            identity,
            k: None,
            class: identity.class(),
            equation: identity.equation().to_string(),
            grids: Vec::new(),
            fitted_order: None,
            tolerance: 0.0,
            pass,
            value,
            note,
        }
    }

    pub fn max_residual(&self) -> Option<f64> {
        self.grids.last().map(|g| g.max)
    }

    /// Recompute `fitted_order` and `pass` from the grid residuals.
    pub fn finalize(&mut self) {
        self.grids.sort_by(|a, b| b.spacing.partial_cmp(&a.spacing).unwrap());
        self.fitted_order = fitted_order(&self.grids);
        self.pass = match self.class {
            IdentityClass::Algebraic => self.grids.iter().all(|g| g.max <= self.tolerance),
            IdentityClass::Discretization => {
                if self.grids.iter().all(|g| g.max <= self.tolerance) {
                    true
                } else {
                    let (coarse, fine) = (self.grids.first(), self.grids.last());
                    self.grids.len() >= 3
                        && self.fitted_order.is_some_and(|o| o >= MIN_ORDER)
                        && matches!((coarse, fine), (Some(c), Some(f)) if f.max < c.max)
                }
            }
            IdentityClass::Inequality => {
                self.grids.iter().all(|g| g.min_slack.is_none_or(|s| s >= -self.tolerance))
            }
            IdentityClass::Predicate => self.pass,
        };
    }
}

/// Least-squares slope of `log max` against `log spacing` over grids with a
/// positive residual; needs at least two grids.
pub fn fitted_order(grids: &[GridResidual]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        grids.iter().filter(|g| g.max > 0.0 && g.spacing > 0.0).map(|g| (g.spacing.ln(), g.max.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Some(ls_slope(&xs, &ys))
}

/// Merge single-grid reports from several resolutions into one report per
/// `(identity, k)`, ordered by identity then `k`.
pub fn merge_refinement(per_grid: Vec<Vec<IdentityReport>>) -> Vec<IdentityReport> {
    let mut merged: Vec<IdentityReport> = Vec::new();
    for reports in per_grid {
        for r in reports {
            match merged.iter_mut().find(|m| m.identity == r.identity && m.k == r.k) {
                Some(m) => {
                    m.grids.extend(r.grids);
                    if m.note.is_none() {
                        m.note = r.note;
                    }
                }
                None => merged.push(r),
            }
        }
    }
    for m in &mut merged {
        m.finalize();
    }
    merged.sort_by(|a, b| (a.identity, a.k).cmp(&(b.identity, b.k)));
    merged
}
