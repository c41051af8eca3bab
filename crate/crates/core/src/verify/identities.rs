//! Residual fields of the identity and inequality suite on one grid, and the
//! multi-grid runner.

use crate::error::{Error, Result};
use crate::fiber::{make_fiber, FiberKind, PatchParams};
use crate::hypersurface::{
    ambient_curvature, build_graph, curvature_bundle, gauss_sectional, intrinsic_curvature, shape_operator,
    AmbientCurvature, CurvatureBundle, GraphHypersurface,
};
use crate::linalg;
use crate::numeric::{binomial, rel_diff};
use crate::operators::{apply_frak_l, compose_cal_l, divergence_apply, trace_apply, CompositeVariant};
use crate::warping::{ConditionReport, WarpingFunction};

use super::{merge_refinement, GridResidual, IdentityId, IdentityReport, Witness, ALGEBRAIC_TOL};

/// Slack floor for the sectional bound chain.
pub const SECTIONAL_TOL: f64 = 1e-6;
/// Slack floor for the Garding chain.
pub const GARDING_TOL: f64 = 1e-9;
/// Slack floor for the purely algebraic inequalities.
pub const ALGEBRAIC_SLACK_TOL: f64 = 1e-10;

struct Frame<'s, 'a> {
    s: &'s GraphHypersurface<'a>,
    mask: Vec<bool>,
}

impl<'s, 'a> Frame<'s, 'a> {
    fn new(s: &'s GraphHypersurface<'a>) -> Self {
        Self { s, mask: s.fiber().interior_mask() }
    }

    fn grid_entry(&self, max: f64, l2: f64, min_slack: Option<f64>, worst: Option<(usize, f64)>) -> GridResidual {
        let grid = self.s.fiber().grid();
        GridResidual {
            spacing: grid.max_spacing(),
            shape: grid.shape(),
            max,
            l2,
            min_slack,
            witness: worst.map(|(index, value)| Witness { index, coords: grid.coords(index), value }),
        }
    }

    fn report(&self, id: IdentityId, k: Option<usize>, tolerance: f64, grid: GridResidual) -> IdentityReport {
        let mut r = IdentityReport {
            identity: id,
            k,
            class: id.class(),
            equation: id.equation().to_string(),
            grids: vec![grid],
            fitted_order: None,
            tolerance,
            pass: false,
            value: None,
            note: None,
        };
        r.finalize();
        r
    }

    /// Pointwise residual `lhs - rhs` over interior points; `per` values per point.
    fn equality(&self, id: IdentityId, k: Option<usize>, lhs: &[f64], rhs: &[f64], per: usize) -> IdentityReport {
        let relative = id.class() == super::IdentityClass::Algebraic;
        let (mut max, mut sq, mut count, mut worst) = (0.0f64, 0.0, 0usize, None);
        for (i, (a, b)) in lhs.iter().zip(rhs).enumerate() {
            let p = i / per;
            if !self.mask[p] {
                continue;
            }
            let r = if relative { rel_diff(*a, *b) } else { (a - b).abs() };
            sq += r * r;
            count += 1;
            if !(r <= max) {
                max = r;
                worst = Some((p, a - b));
            }
        }
        let l2 = if count > 0 { (sq / count as f64).sqrt() } else { 0.0 };
        self.report(id, k, ALGEBRAIC_TOL, self.grid_entry(max, l2, None, worst))
    }

    /// Pointwise slack `>= 0`; `None` entries are skipped.
    fn inequality(&self, id: IdentityId, k: Option<usize>, slack: &[Option<f64>], per: usize, tol: f64) -> IdentityReport {
        let (mut min, mut sq, mut count, mut worst) = (f64::INFINITY, 0.0, 0usize, None);
        for (i, v) in slack.iter().enumerate() {
            let p = i / per;
            let Some(v) = *v else { continue };
            if !self.mask[p] {
                continue;
            }
            let violation = (-v).max(0.0);
            sq += violation * violation;
            count += 1;
            if !(v >= min) {
                min = v;
                worst = Some((p, v));
            }
        }
        let l2 = if count > 0 { (sq / count as f64).sqrt() } else { 0.0 };
        let min_slack = if count > 0 { Some(min) } else { None };
        let max = min_slack.map_or(0.0, |m| (-m).max(0.0));
        let mut r = self.report(id, k, tol, self.grid_entry(max, l2, min_slack, worst));
        if count == 0 {
            r.note = Some("no admissible points".to_string());
        }
        r
    }
}

/// `<grad h, grad f>` with `grad h` contravariant and `df` the coordinate gradient.
fn grad_h_dot(s: &GraphHypersurface, f: &[f64]) -> Vec<f64> {
    let n = s.n();
    let df = s.fiber().grid().gradient(f);
    (0..s.len()).map(|p| linalg::dot(s.grad_h_at(p), &df[p * n..(p + 1) * n])).collect()
}

/// `<P grad h, grad h>` for a mixed tensor field `P`.
fn newton_quadratic(s: &GraphHypersurface, coeff: &[f64]) -> Vec<f64> {
    let n = s.n();
    let n2 = n * n;
    (0..s.len())
        .map(|p| {
            let v = linalg::matvec(n, &coeff[p * n2..(p + 1) * n2], s.grad_h_at(p));
            s.inner(p, &v, s.grad_h_at(p))
        })
        .collect()
}

/// Covariant induced Hessian from fourth-order coordinate derivatives,
/// independent of the second-order stencil that builds the shape operator.
fn fourth_order_hessian(s: &GraphHypersurface, f: &[f64]) -> Vec<f64> {
    let n = s.n();
    let (n2, n3) = (n * n, n * n * n);
    let (d1, mut out) = s.fiber().grid().derivatives4(f);
    for p in 0..s.len() {
        let gam = &s.connection[p * n3..(p + 1) * n3];
        for i in 0..n {
            for j in 0..n {
                let corr: f64 = (0..n).map(|k| gam[k * n2 + i * n + j] * d1[p * n + k]).sum();
                out[p * n2 + i * n + j] -= corr;
            }
        }
        linalg::symmetrize(n, &mut out[p * n2..(p + 1) * n2]);
    }
    out
}

/// `Tr(P g^{-1} H)` for a covariant Hessian field `H`.
fn trace_with_hessian(s: &GraphHypersurface, coeff: &[f64], hess: &[f64]) -> Vec<f64> {
    let n = s.n();
    let n2 = n * n;
    (0..s.len())
        .map(|p| {
            let mixed = linalg::matmul(n, s.metric_inv_at(p), &hess[p * n2..(p + 1) * n2]);
            linalg::trace_product(n, &coeff[p * n2..(p + 1) * n2], &mixed)
        })
        .collect()
}

fn field_of<F: Fn(usize) -> f64>(len: usize, f: F) -> Vec<f64> {
    (0..len).map(f).collect()
}

/// Operator identities for the height and `sigma(h)`, trace identities, the
/// gradient norm and, for `n = 2`, the scalar Gauss equation and the
/// intrinsic sectional curvature against the Gauss equation.
///
/// `L_k h` is evaluated with a fourth-order Hessian: with the stencil of the
/// shape operator both sides agree to rounding on every grid, which says
/// nothing about convergence.
pub fn verify_structural(s: &GraphHypersurface, b: &CurvatureBundle) -> Result<Vec<IdentityReport>> {
    let fr = Frame::new(s);
    let n = s.n();
    let n2 = n * n;
    let len = s.len();
    let mut out = Vec::new();
    let hess_h = fourth_order_hessian(s, &s.u);
    for k in 0..n {
        let ck = b.c[k];
        let lhs = trace_apply(s, &b.p[k], &s.sigma_h);
        let rhs = field_of(len, |p| -ck * (s.rho_p[p] * b.hk(k, p) + s.theta[p] * s.rho[p] * b.hk(k + 1, p)));
        out.push(fr.equality(IdentityId::SigmaOperator, Some(k), &lhs, &rhs, 1));

        let lhs = trace_with_hessian(s, &b.p[k], &hess_h);
        let quad = newton_quadratic(s, &b.p[k]);
        let rhs = field_of(len, |p| {
            -s.log_d1[p] * (ck * b.hk(k, p) + quad[p]) - s.theta[p] * ck * b.hk(k + 1, p)
        });
        out.push(fr.equality(IdentityId::HeightOperator, Some(k), &lhs, &rhs, 1));
    }
    for k in 0..=n {
        let ck = b.c[k];
        let pk = |p: usize| &b.p[k][p * n2..(p + 1) * n2];
        let lhs = field_of(len, |p| linalg::trace(n, pk(p)));
        let rhs = field_of(len, |p| ck * b.hk(k, p));
        out.push(fr.equality(IdentityId::TraceNewton, Some(k), &lhs, &rhs, 1));

        let lhs = field_of(len, |p| linalg::trace_product(n, b.a_at(p), pk(p)));
        let rhs = field_of(len, |p| -ck * b.hk(k + 1, p));
        out.push(fr.equality(IdentityId::TraceShapeNewton, Some(k), &lhs, &rhs, 1));

        if k < n {
            let bk1 = binomial(n, k + 1);
            let lhs = field_of(len, |p| {
                let a = b.a_at(p);
                linalg::trace_product(n, &linalg::matmul(n, a, a), pk(p))
            });
            let rhs = field_of(len, |p| {
                bk1 * (n as f64 * b.hk(1, p) * b.hk(k + 1, p) - (n - k - 1) as f64 * b.hk(k + 2, p))
            });
            out.push(fr.equality(IdentityId::TraceShapeSquaredNewton, Some(k), &lhs, &rhs, 1));
        }
    }
    let nf = n as f64;
    let rhs = field_of(len, |p| nf * nf * b.hk(1, p).powi(2) - nf * (nf - 1.0) * b.hk(2, p));
    out.push(fr.equality(IdentityId::ShapeNormSquared, None, &b.norm_a_sq, &rhs, 1));

    let rhs: Vec<f64> = s.theta.iter().map(|t| t * t - 1.0).collect();
    out.push(fr.equality(IdentityId::HeightGradientNorm, None, &s.grad_h_sq(), &rhs, 1));

    if n == 2 {
        let amb = ambient_curvature(s)?;
        let intr = intrinsic_curvature(s)?;
        let lhs = field_of(len, |p| nf * (nf - 1.0) * b.hk(2, p));
        let rhs = field_of(len, |p| amb.sbar[p] - intr.scalar[p] + 2.0 * amb.ric_bar_nn[p]);
        out.push(fr.equality(IdentityId::GaussScalar, None, &lhs, &rhs, 1));

        let gauss: Vec<f64> = (0..len).flat_map(|p| gauss_sectional(b, &amb, p)).collect();
        out.push(fr.equality(IdentityId::IntrinsicGauss, None, &intr.sectional, &gauss, amb.planes));
    }
    Ok(out)
}

/// Composite-operator identities on `sigma(h)` for `k = 1..=n`, the `k = 2`
/// split, and the two evaluations of the divergence-form operator on `h`.
pub fn verify_composite(s: &GraphHypersurface, b: &CurvatureBundle) -> Result<Vec<IdentityReport>> {
    let fr = Frame::new(s);
    let n = s.n();
    let len = s.len();
    let mut out = Vec::new();
    for k in 1..=n {
        let op = compose_cal_l(s, b, k, CompositeVariant::Compact)?;
        let lhs = op.apply(s, &s.sigma_h);
        let ck1 = b.c[k - 1];
        let rhs = field_of(len, |p| {
            -ck1 * s.rho[p] * (s.log_d1[p].powi(k as i32) - (-s.theta[p]).powi(k as i32) * b.hk(k, p))
        });
        out.push(fr.equality(IdentityId::CompositeSigma, Some(k), &lhs, &rhs, 1));

        let ratio_admissible = s.log_d1.iter().zip(&s.theta).all(|(l, t)| l * t < 0.0);
        if ratio_admissible {
            let op = compose_cal_l(s, b, k, CompositeVariant::ThetaRatio)?;
            let lhs = op.apply(s, &s.sigma_h);
            let rhs = field_of(len, |p| {
                let mt = -s.theta[p];
                ck1 / mt.powi(k as i32 - 1) * s.rho[p] * (mt.powi(k as i32) * b.hk(k, p) - s.log_d1[p].powi(k as i32))
            });
            out.push(fr.equality(IdentityId::CompositeSigmaRatio, Some(k), &lhs, &rhs, 1));
        }

        if k == 2 {
            let l0 = trace_apply(s, &b.p[0], &s.sigma_h);
            let l1 = trace_apply(s, &b.p[1], &s.sigma_h);
            let rhs = field_of(len, |p| (n as f64 - 1.0) * s.log_d1[p] * l0[p] - s.theta[p] * l1[p]);
            out.push(fr.equality(IdentityId::CompositeSplit, Some(k), &lhs, &rhs, 1));
        }
        if k >= 2 {
            let d = apply_frak_l(s, b, k, &s.u)?;
            out.push(fr.equality(IdentityId::DivergenceForm, Some(k), &d.divergence, &d.formula, 1));
        }
    }
    Ok(out)
}

/// `Theta_hat = rho(h) Theta` identities: its Laplacian, `L_k Theta_hat` for
/// `k = 1..n-1`, and the divergence of `P_{k-1} grad phi` with
/// `phi = c sigma(h) + Theta_hat` for `k = 1..=n`.
///
/// `c` is the mean of `H_1` for `k = 1` and `(mean H_k)^{1/k}` otherwise; the
/// latter needs `H_k > 0` everywhere.
pub fn verify_theta(s: &GraphHypersurface, b: &CurvatureBundle) -> Result<Vec<IdentityReport>> {
    let fr = Frame::new(s);
    let n = s.n();
    let nf = n as f64;
    let len = s.len();
    let kappa = s.fiber().kappa();
    let th = s.theta_hat();
    let gh_sq = s.grad_h_sq();
    let q = field_of(len, |p| kappa / (s.rho[p] * s.rho[p]) - s.log_d2[p]);
    let mut out = Vec::new();

    let lap = trace_apply(s, &b.p[0], &th);
    let dh1 = grad_h_dot(s, &b.hk_field(1));
    let rhs = field_of(len, |p| {
        let (h1, h2) = (b.hk(1, p), b.hk(2, p));
        -nf * s.rho[p] * dh1[p]
            + nf * s.rho_p[p] * h1
            + nf * th[p] * (nf * h1 * h1 - (nf - 1.0) * h2)
            + th[p] * (nf - 1.0) * q[p] * gh_sq[p]
    });
    out.push(fr.equality(IdentityId::ThetaHatLaplacian, None, &lap, &rhs, 1));

    for k in 1..n {
        let ck = b.c[k];
        let bk1 = binomial(n, k + 1);
        let lhs = trace_apply(s, &b.p[k], &th);
        let dhk1 = grad_h_dot(s, &b.hk_field(k + 1));
        let quad = newton_quadratic(s, &b.p[k]);
        let rhs = field_of(len, |p| {
            -bk1 * s.rho[p] * dhk1[p]
                + s.rho_p[p] * ck * b.hk(k + 1, p)
                + th[p] * q[p] * (gh_sq[p] * ck * b.hk(k, p) - quad[p])
                + th[p] * bk1 * (nf * b.hk(1, p) * b.hk(k + 1, p) - (n - k - 1) as f64 * b.hk(k + 2, p))
        });
        out.push(fr.equality(IdentityId::ThetaHatNewton, Some(k), &lhs, &rhs, 1));
    }

    for k in 1..=n {
        let hk = b.hk_field(k);
        let mean = hk.iter().sum::<f64>() / len as f64;
        let c = if k == 1 {
            mean
        } else {
            if let Some((index, &value)) = hk.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::NegativeHk { k, index, value });
            }
            mean.powf(1.0 / k as f64)
        };
        let phi = field_of(len, |p| c * s.sigma_h[p] + th[p]);
        let lhs = divergence_apply(s, &b.p[k - 1], &phi);
        let ck1 = b.c[k - 1];
        let bk = binomial(n, k);
        let quad_prev = if k >= 2 { newton_quadratic(s, &b.p[k - 2]) } else { vec![0.0; len] };
        let quad = newton_quadratic(s, &b.p[k - 1]);
        let dhk = grad_h_dot(s, &hk);
        let rhs = field_of(len, |p| {
            let hkm1 = b.hk(k - 1, p);
            -ck1 * s.rho_p[p] * (c * hkm1 - hk[p])
                + (n - k + 1) as f64 * th[p] * q[p] * c * quad_prev[p]
                + (n - k) as f64 * th[p] * q[p] * quad[p]
                + th[p] * bk * (nf * b.hk(1, p) * hk[p] - (n - k) as f64 * b.hk(k + 1, p) - k as f64 * c * hk[p])
                - bk * s.rho[p] * dhk[p]
        });
        out.push(fr.equality(IdentityId::PhiDivergence, Some(k), &lhs, &rhs, 1));
    }
    Ok(out)
}

/// Pointwise inequalities and the algebraic ambient-curvature identities.
/// The intrinsic sectional bound is evaluated for `n = 2` only.
pub fn verify_inequalities(s: &GraphHypersurface, b: &CurvatureBundle, amb: &AmbientCurvature) -> Result<Vec<IdentityReport>> {
    let fr = Frame::new(s);
    let n = s.n();
    let len = s.len();
    let planes = amb.planes;
    let kappa = s.fiber().kappa();
    let mut out = Vec::new();

    out.push(fr.equality(IdentityId::SectionalDecomposition, None, &amb.kbar, &amb.kbar_decomposed, planes));
    let one_plus_tilt: Vec<f64> = amb.tilt_sq.iter().map(|t| 1.0 + t).collect();
    out.push(fr.equality(IdentityId::WedgeNorm, None, &amb.wedge_sq, &one_plus_tilt, planes));

    if n == 2 {
        let intr = intrinsic_curvature(s)?;
        let slack: Vec<Option<f64>> = (0..len * planes)
            .map(|i| Some(intr.sectional[i] - (amb.kbar[i] - b.norm_a_sq[i / planes])))
            .collect();
        out.push(fr.inequality(IdentityId::SectionalBound, None, &slack, planes, SECTIONAL_TOL));
    }

    let slack: Vec<Option<f64>> = (0..len * planes)
        .map(|i| {
            let p = i / planes;
            (s.log_d2[p] <= 0.0).then(|| amb.kbar[i] - amb.fiber_term[i])
        })
        .collect();
    out.push(fr.inequality(IdentityId::FiberTermBound, None, &slack, planes, ALGEBRAIC_SLACK_TOL));

    let slack: Vec<Option<f64>> = (0..len * planes)
        .map(|i| {
            let p = i / planes;
            let r2 = s.rho[p] * s.rho[p];
            Some(amb.fiber_term[i] + kappa.abs() * s.theta[p] * s.theta[p] / r2)
        })
        .collect();
    out.push(fr.inequality(IdentityId::CurvatureFloor, None, &slack, planes, ALGEBRAIC_SLACK_TOL));

    let chain = n.saturating_sub(1).max(1);
    let slack: Vec<Option<f64>> = (0..len * chain)
        .map(|i| {
            let (p, j) = (i / chain, i % chain + 1);
            if !b.elliptic_mask[p] || n < 2 {
                return None;
            }
            let root = |k: usize| b.hk(k, p).max(0.0).powf(1.0 / k as f64);
            Some(root(j) - root(j + 1))
        })
        .collect();
    out.push(fr.inequality(IdentityId::GardingChain, None, &slack, chain, GARDING_TOL));

    if n >= 2 {
        let slack: Vec<Option<f64>> = (0..len)
            .map(|p| {
                let (h1, h2) = (b.hk(1, p), b.hk(2, p));
                (h2 > 0.0).then(|| (h1 * h1 - h2) / (1.0 + h1 * h1))
            })
            .collect();
        out.push(fr.inequality(IdentityId::MeanCurvatureSquare, None, &slack, 1, ALGEBRAIC_SLACK_TOL));
    }

    let slack: Vec<Option<f64>> = s.theta.iter().map(|t| Some(t * t - 1.0)).collect();
    out.push(fr.inequality(IdentityId::ThetaBound, None, &slack, 1, ALGEBRAIC_SLACK_TOL));
    Ok(out)
}

/// Warping predicates of a condition report as pass/fail entries.
pub fn condition_reports(c: &ConditionReport) -> Vec<IdentityReport> {
    let note = |extra: String| Some(extra);
    vec![
        IdentityReport::predicate(
            IdentityId::LogConcavity,
            c.logconcave.holds(),
            Some(c.max_log_d2),
            note(format!("{:?}; witness t = {}", c.logconcave, c.witness)),
        ),
        IdentityReport::predicate(
            IdentityId::TimelikeConvergence,
            c.tcc,
            Some(c.sup_logrho2),
            note(format!("threshold {}", c.ncc_threshold)),
        ),
        IdentityReport::predicate(
            IdentityId::NullConvergence,
            c.ncc,
            Some(c.sup_logrho2),
            note(format!("threshold {}", c.ncc_threshold)),
        ),
        IdentityReport::predicate(
            IdentityId::StrictNullConvergence,
            c.strict_ncc,
            Some(c.sup_logrho2),
            note(format!("threshold {}", c.ncc_threshold)),
        ),
    ]
}

/// Which groups of the suite to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteChecks {
    pub structural: bool,
    pub composite: bool,
    pub theta: bool,
    pub inequalities: bool,
}

impl SuiteChecks {
    pub const ALL: Self = Self { structural: true, composite: true, theta: true, inequalities: true };
}

/// Surface family for a refinement study.
pub struct SuiteSpec<'a> {
    pub fiber: FiberKind,
    pub n: usize,
    pub patch: PatchParams,
    pub warping: &'a WarpingFunction,
    pub height: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    pub checks: SuiteChecks,
}

/// Run the selected checks on every grid size and merge the reports.
pub fn verify_suite(spec: &SuiteSpec, sizes: &[usize]) -> Result<Vec<IdentityReport>> {
    let per_grid = std::thread::scope(|scope| {
        let handles: Vec<_> = sizes.iter().map(|&size| scope.spawn(move || run_single(spec, size))).collect();
        handles.into_iter().map(|h| h.join().expect("suite worker panicked")).collect::<Result<Vec<_>>>()
    })?;
    Ok(merge_refinement(per_grid))
}

fn run_single(spec: &SuiteSpec, size: usize) -> Result<Vec<IdentityReport>> {
    let fiber = make_fiber(spec.fiber, spec.n, &[size], spec.patch)?;
    let u = fiber.sample(spec.height);
    let s = build_graph(&fiber, spec.warping, &u)?;
    let b = curvature_bundle(&s, &shape_operator(&s))?;
    let mut out = Vec::new();
    if spec.checks.structural {
        out.extend(verify_structural(&s, &b)?);
    }
    if spec.checks.composite {
        out.extend(verify_composite(&s, &b)?);
    }
    if spec.checks.theta {
        out.extend(verify_theta(&s, &b)?);
    }
    if spec.checks.inequalities {
        let amb = ambient_curvature(&s)?;
        out.extend(verify_inequalities(&s, &b, &amb)?);
    }
    Ok(out)
}
