//! Diagnostics at the extrema of the height function and seeded
//! slice-uniqueness experiments.

use serde::Serialize;

use super::{perturbation, slice_distance, slice_target, solve_constant_hk, spacelike_gap, SolveOptions};
use crate::error::{Error, Result};
use crate::fiber::Fiber;
use crate::hypersurface::{build_graph, curvature_bundle, mean_curvature_field, shape_operator, CurvatureBundle, GraphHypersurface};
use crate::linalg;
use crate::operators::{compose_cal_l, trace_apply, CompositeVariant};
use crate::warping::{check_conditions, ConditionReport, Interval, LogConcavity, WarpingFunction};

/// Extremum diagnostics use the tolerance `MINMAX_EPS_FACTOR * dx^2`.
pub const MINMAX_EPS_FACTOR: f64 = 10.0;
/// Halvings of the perturbation amplitude tried to keep a seed admissible.
const MAX_AMPLITUDE_HALVINGS: usize = 8;

/// Quantities at a discrete extremum of the height function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extremum {
    pub index: usize,
    pub coords: Vec<f64>,
    pub height: f64,
    pub grad_h_norm: f64,
    pub theta_plus_one: f64,
    /// Discrete `Delta h` and its closed form `-(log rho)'(n + |grad h|^2) - n Theta H_1`.
    pub laplacian_h: f64,
    pub laplacian_formula: f64,
    /// Discrete composite operator (`k = 2`) applied to `sigma(h)`, and its
    /// closed form `-c_1 rho ((log rho)'^2 - Theta^2 H_2)`.
    pub cal_l_sigma: f64,
    pub cal_l_sigma_formula: f64,
    pub h1: f64,
    pub h2: f64,
    pub log_d1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinMaxDiagnostics {
    pub spacing: f64,
    pub eps: f64,
    pub max: Extremum,
    pub min: Extremum,
    /// `Delta h <= eps` at the maximum and `>= -eps` at the minimum.
    pub laplacian_ok: bool,
    /// Same sign pattern for the composite operator on `sigma(h)`.
    pub cal_l_sigma_ok: bool,
    /// `H_2(p_min) - (log rho)'(h_min)^2`.
    pub bracket_lower_slack: f64,
    /// `(log rho)'(h_max)^2 - H_2(p_max)`.
    pub bracket_upper_slack: f64,
    pub bracket_ok: bool,
}

/// Locate the discrete argmax/argmin of `h` and evaluate the maximum-principle
/// sign conditions and the bracket `(log rho)'(h_min)^2 <= H_2 <= (log rho)'(h_max)^2`.
pub fn minmax_diagnostics(s: &GraphHypersurface, b: &CurvatureBundle) -> MinMaxDiagnostics {
    let n = s.n();
    let spacing = s.fiber().grid().max_spacing();
    let eps = MINMAX_EPS_FACTOR * spacing * spacing;
    let lap = trace_apply(s, &identity_field(n, s.len()), &s.u);
    let cal_l = compose_cal_l(s, b, 2, CompositeVariant::Compact).expect("k = 2 <= n");
    let cal_l_sigma = cal_l.apply(s, &s.sigma_h);
    let grad_sq = s.grad_h_sq();
    let at = |p: usize| {
        let (l1, th, nf) = (s.log_d1[p], s.theta[p], n as f64);
        let (h1, h2) = (b.hk(1, p), b.hk(2, p));
        Extremum {
            index: p,
            coords: s.fiber().grid().coords(p),
            height: s.u[p],
            grad_h_norm: grad_sq[p].max(0.0).sqrt(),
            theta_plus_one: th + 1.0,
            laplacian_h: lap[p],
            laplacian_formula: -l1 * (nf + grad_sq[p]) - nf * th * h1,
            cal_l_sigma: cal_l_sigma[p],
            cal_l_sigma_formula: -b.c[1] * s.rho[p] * (l1 * l1 - th * th * h2),
            h1,
            h2,
            log_d1: l1,
        }
    };
    let imax = argext(&s.u, |a, b| a > b);
    let imin = argext(&s.u, |a, b| a < b);
    let (max, min) = (at(imax), at(imin));
    let bracket_lower_slack = min.h2 - min.log_d1 * min.log_d1;
    let bracket_upper_slack = max.log_d1 * max.log_d1 - max.h2;
    MinMaxDiagnostics {
        spacing,
        eps,
        laplacian_ok: max.laplacian_h <= eps && min.laplacian_h >= -eps,
        cal_l_sigma_ok: max.cal_l_sigma <= eps && min.cal_l_sigma >= -eps,
        bracket_ok: bracket_lower_slack >= -eps && bracket_upper_slack >= -eps,
        bracket_lower_slack,
        bracket_upper_slack,
        max,
        min,
    }
}

fn identity_field(n: usize, len: usize) -> Vec<f64> {
    linalg::identity(n).repeat(len)
}

fn argext(v: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if better(x, v[best]) {
            best = i;
        }
    }
    best
}

/// Which uniqueness statement's hypotheses an experiment claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoremTag {
    /// Compact, `(log rho)'' <= 0`, `rho'` nonvanishing on the slab.
    Thm1,
    /// `(log rho)'' <= 0` with equality only at isolated points, `H_2 > 0` or an elliptic point.
    Thm4,
    /// Constant mean curvature under the strict null convergence condition.
    Thm5,
    /// `kappa > max (log rho)'' rho^2`, `rho'` of constant sign, `H_2 > 0` or an elliptic point.
    Thm6,
}

impl std::str::FromStr for TheoremTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "thm1" => Ok(Self::Thm1),
            "thm4" => Ok(Self::Thm4),
            "thm5" => Ok(Self::Thm5),
            "thm6" => Ok(Self::Thm6),
            other => Err(Error::BadParams(format!("unknown theorem tag '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Predicate {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisEvidence {
    pub theorem: TheoremTag,
    pub conditions: ConditionReport,
    pub predicates: Vec<Predicate>,
    pub hold: bool,
}

impl HypothesisEvidence {
    pub fn failing(&self) -> Vec<&Predicate> {
        self.predicates.iter().filter(|p| !p.holds).collect()
    }
}

/// One perturbed run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    /// Amplitude actually used after capping.
    pub amplitude: f64,
    pub seed_min_hk: f64,
    pub seed_elliptic_points: usize,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub slice_distance: f64,
    pub mean_height: f64,
    pub residual_history: Vec<f64>,
    pub reached_slice: bool,
    pub minmax: Option<MinMaxDiagnostics>,
    pub error: Option<String>,
    #[serde(skip)]
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub theorem: TheoremTag,
    pub k: usize,
    pub t0: f64,
    pub target: f64,
    pub hypotheses: HypothesisEvidence,
    /// Hypotheses fail; outcomes are reported without asserting uniqueness.
    pub negative_control: bool,
    pub uniqueness_asserted: bool,
    pub converged: bool,
    /// Largest slice distance over runs.
    pub slice_distance: f64,
    /// Largest iteration count over runs.
    pub iterations: usize,
    pub slice_tol: f64,
    /// Every run converged to a slice, or nothing was asserted.
    pub passed: bool,
    pub runs: Vec<RunReport>,
}

pub struct UniquenessScenario<'a> {
    pub fiber: &'a Fiber,
    pub warping: &'a WarpingFunction,
    pub slab: Interval,
    pub k: usize,
    /// Height of the perturbed slice.
    pub t0: f64,
    /// Prescribed `H_k`; `None` takes the slice value at `t0`.
    pub target: Option<f64>,
    pub amplitude: f64,
    pub seeds: Vec<u64>,
    pub theorem: TheoremTag,
    /// Allow failing hypotheses and label the report as a negative control.
    pub negative_control: bool,
    pub tol_residual: f64,
    pub max_iter: usize,
    pub slice_tol: f64,
}

impl<'a> UniquenessScenario<'a> {
    pub fn new(fiber: &'a Fiber, warping: &'a WarpingFunction, slab: Interval, k: usize, t0: f64, theorem: TheoremTag) -> Self {
        Self {
            fiber,
            warping,
            slab,
            k,
            t0,
            target: None,
            amplitude: 0.05,
            seeds: (1..=5).collect(),
            theorem,
            negative_control: false,
            tol_residual: 1e-10,
            max_iter: 200,
            slice_tol: 1e-6,
        }
    }
}

struct Seed {
    seed: u64,
    amplitude: f64,
    u0: Vec<f64>,
    min_hk: f64,
    elliptic_points: usize,
    admissible: bool,
}

fn elliptic_points(fiber: &Fiber, w: &WarpingFunction, u: &[f64]) -> usize {
    let Ok(field) = fiber.scalar_field(u.to_vec()) else { return 0 };
    let Ok(s) = build_graph(fiber, w, &field) else { return 0 };
    curvature_bundle(&s, &shape_operator(&s)).map(|b| b.elliptic_mask.iter().filter(|&&e| e).count()).unwrap_or(0)
}

fn make_seed(sc: &UniquenessScenario, seed: u64, margin: f64) -> Seed {
    let mut amplitude = sc.amplitude;
    let mut last = None;
    for _ in 0..=MAX_AMPLITUDE_HALVINGS {
        let u0: Vec<f64> = perturbation(sc.fiber, seed, amplitude).iter().map(|v| sc.t0 + v).collect();
        let spacelike = matches!(spacelike_gap(sc.fiber, sc.warping, &u0), Some(g) if g >= margin);
        let min_hk = if spacelike {
            mean_curvature_field(sc.fiber, sc.warping, &u0, sc.k)
                .map(|h| h.into_iter().fold(f64::INFINITY, f64::min))
                .unwrap_or(f64::NAN)
        } else {
            f64::NAN
        };
        let admissible = spacelike && (sc.k < 2 || min_hk > 0.0);
        if admissible {
            let elliptic_points = elliptic_points(sc.fiber, sc.warping, &u0);
            return Seed { seed, amplitude, u0, min_hk, elliptic_points, admissible };
        }
        last = Some((u0, min_hk));
        amplitude *= 0.5;
    }
    let (u0, min_hk) = last.expect("at least one attempt");
    Seed { seed, amplitude: amplitude * 2.0, u0, min_hk, elliptic_points: 0, admissible: false }
}

fn predicate(name: &str, holds: bool, detail: String) -> Predicate {
    Predicate { name: name.to_string(), holds, detail }
}

fn evaluate_hypotheses(sc: &UniquenessScenario, cond: ConditionReport, target: f64, seeds: &[Seed]) -> HypothesisEvidence {
    let n = sc.fiber.n();
    let k = sc.k;
    let mut ps = vec![
        predicate("compact fiber", sc.fiber.is_compact(), sc.fiber.kind().to_string()),
        predicate("1 <= k <= n", (1..=n).contains(&k), format!("k = {k}, n = {n}")),
        predicate(
            "admissible seeds",
            seeds.iter().all(|s| s.admissible),
            format!("spacelike{} at every perturbed seed", if k >= 2 { " with H_k > 0" } else { "" }),
        ),
    ];
    let log_detail = format!("max (log rho)'' = {:e} at witness t = {}", cond.max_log_d2, cond.witness);
    let needs_elliptic = |ps: &mut Vec<Predicate>| {
        if k == 2 {
            ps.push(predicate("H_2 > 0", target > 0.0, format!("target H_2 = {target}")));
        } else if k >= 3 {
            let ok = seeds.iter().all(|s| s.elliptic_points > 0);
            ps.push(predicate("elliptic point", ok, "present at every seed".to_string()));
        }
    };
    match sc.theorem {
        TheoremTag::Thm1 => {
            ps.push(predicate("(log rho)'' <= 0", cond.logconcave.holds(), log_detail));
            ps.push(predicate("rho' nonvanishing", cond.rho_prime_nonvanishing, format!("on slab {:?}", cond.slab)));
            if k == 1 {
                ps.push(predicate("H_1 != 0", target != 0.0, format!("target H_1 = {target}")));
            } else {
                ps.push(predicate("H_k > 0", target > 0.0, format!("target H_{k} = {target}")));
            }
        }
        TheoremTag::Thm4 => {
            let ok = matches!(cond.logconcave, LogConcavity::Strict | LogConcavity::IsolatedEquality);
            ps.push(predicate(
                "(log rho)'' <= 0, equality only at isolated points",
                ok,
                format!("{:?}; {log_detail}", cond.logconcave),
            ));
            ps.push(predicate("k >= 2", k >= 2, format!("k = {k}")));
            needs_elliptic(&mut ps);
        }
        TheoremTag::Thm5 => {
            ps.push(predicate("k = 1", k == 1, format!("k = {k}")));
            ps.push(predicate(
                "strict null convergence",
                cond.strict_ncc,
                format!("(n-1) kappa = {} vs threshold {}", (n as f64 - 1.0) * cond.kappa, cond.ncc_threshold),
            ));
        }
        TheoremTag::Thm6 => {
            ps.push(predicate(
                "kappa > max (log rho)'' rho^2",
                cond.kappa > cond.sup_logrho2 + 1e-12,
                format!("kappa = {}, max = {}", cond.kappa, cond.sup_logrho2),
            ));
            ps.push(predicate("rho' of constant sign", cond.rho_prime_constant_sign, format!("sign {}", cond.rho_prime_sign)));
            ps.push(predicate("k >= 2", k >= 2, format!("k = {k}")));
            needs_elliptic(&mut ps);
        }
    }
    let hold = ps.iter().all(|p| p.holds);
    HypothesisEvidence { theorem: sc.theorem, conditions: cond, predicates: ps, hold }
}

fn run_seed(sc: &UniquenessScenario, seed: &Seed, opts: &SolveOptions) -> RunReport {
    let mut report = RunReport {
        seed: seed.seed,
        amplitude: seed.amplitude,
        seed_min_hk: seed.min_hk,
        seed_elliptic_points: seed.elliptic_points,
        converged: false,
        iterations: 0,
        final_residual: f64::NAN,
        slice_distance: slice_distance(&seed.u0),
        mean_height: super::mean(&seed.u0),
        residual_history: Vec::new(),
        reached_slice: false,
        minmax: None,
        error: None,
        u: seed.u0.clone(),
    };
    if !seed.admissible {
        report.error = Some("seed not admissible after amplitude capping".to_string());
        return report;
    }
    match solve_constant_hk(sc.fiber, sc.warping, &seed.u0, opts) {
        Ok(out) => {
            report.converged = out.converged;
            report.iterations = out.iterations;
            report.final_residual = out.final_residual;
            report.slice_distance = out.slice_distance;
            report.mean_height = out.mean_height;
            report.residual_history = out.residual_history;
            report.reached_slice = out.converged && out.slice_distance <= sc.slice_tol;
            report.minmax = sc
                .fiber
                .scalar_field(out.u.clone())
                .and_then(|f| build_graph(sc.fiber, sc.warping, &f).and_then(|s| {
                    let b = curvature_bundle(&s, &shape_operator(&s))?;
                    Ok(minmax_diagnostics(&s, &b))
                }))
                .ok();
            report.u = out.u;
        }
        Err(e) => {
            if let Error::NonConvergence { iterations, last, residual_history } = &e {
                report.iterations = *iterations;
                report.final_residual = *last;
                report.residual_history = residual_history.clone();
            }
            report.error = Some(e.to_string());
        }
    }
    report
}

/// Check the claimed hypotheses, solve from seeded perturbations of the slice
/// `t0` concurrently, and assert convergence to slices when the hypotheses hold.
/// Failing hypotheses are an error unless the scenario is a negative control.
pub fn uniqueness_experiment(sc: &UniquenessScenario) -> Result<UniquenessReport> {
    if sc.seeds.len() < 5 {
        return Err(Error::BadParams(format!("need at least 5 seeds, got {}", sc.seeds.len())));
    }
    if !(sc.amplitude > 0.0) {
        return Err(Error::BadParams(format!("amplitude {} must be positive", sc.amplitude)));
    }
    if !sc.slab.contains(sc.t0) {
        return Err(Error::OutOfInterval { t: sc.t0, lo: sc.slab.lo, hi: sc.slab.hi });
    }
    let target = match sc.target {
        Some(t) => t,
        None => slice_target(sc.warping, sc.t0, sc.k)?,
    };
    let mut opts = SolveOptions::new(sc.k, target);
    opts.tol_residual = sc.tol_residual;
    opts.max_iter = sc.max_iter;
    let cond = check_conditions(sc.warping, sc.slab, sc.fiber.kappa(), sc.fiber.n())?;
    let seeds: Vec<Seed> = sc.seeds.iter().map(|&s| make_seed(sc, s, opts.spacelike_margin)).collect();
    let hypotheses = evaluate_hypotheses(sc, cond, target, &seeds);
    if !hypotheses.hold && !sc.negative_control {
        let p = hypotheses.failing()[0];
        return Err(Error::HypothesisViolation { predicate: format!("{} ({})", p.name, p.detail) });
    }
    let runs: Vec<RunReport> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds.iter().map(|seed| scope.spawn(|| run_seed(sc, seed, &opts))).collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });
    let uniqueness_asserted = hypotheses.hold;
    let all_slices = runs.iter().all(|r| r.reached_slice);
    Ok(UniquenessReport {
        theorem: sc.theorem,
        k: sc.k,
        t0: sc.t0,
        target,
        negative_control: !hypotheses.hold,
        uniqueness_asserted,
        converged: runs.iter().all(|r| r.converged),
        slice_distance: runs.iter().map(|r| r.slice_distance).fold(0.0, f64::max),
        iterations: runs.iter().map(|r| r.iterations).max().unwrap_or(0),
        slice_tol: sc.slice_tol,
        passed: !uniqueness_asserted || all_slices,
        hypotheses,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::{make_fiber, FiberKind, PatchParams};
    use crate::warping::{make_warping, WarpingKind};

    fn graph_diag(u: impl Fn(&[f64]) -> f64, size: usize) -> MinMaxDiagnostics {
        let f = make_fiber(FiberKind::Torus, 2, &[size], PatchParams::default()).unwrap();
        let w = make_warping(WarpingKind::Linear, &[], Interval::new(0.5, 4.0).unwrap()).unwrap();
        let s = build_graph(&f, &w, &f.sample(u)).unwrap();
        let b = curvature_bundle(&s, &shape_operator(&s)).unwrap();
        minmax_diagnostics(&s, &b)
    }

    #[test]
    fn slice_diagnostics_vanish() {
        let d = graph_diag(|_| 2.0, 16);
        assert_eq!(d.max.grad_h_norm, 0.0);
        assert_eq!(d.max.theta_plus_one, 0.0);
        assert!(d.max.laplacian_h.abs() < 1e-12 && d.max.cal_l_sigma.abs() < 1e-12);
        assert!(d.bracket_lower_slack.abs() < 1e-12 && d.bracket_upper_slack.abs() < 1e-12);
        assert!(d.laplacian_ok && d.cal_l_sigma_ok && d.bracket_ok);
    }

    #[test]
    fn sine_graph_extrema() {
        let d = graph_diag(|x| 2.0 + 0.1 * x[0].sin(), 32);
        let dx = d.spacing;
        assert!(d.max.grad_h_norm <= dx);
        assert!(d.max.theta_plus_one.abs() <= dx * dx);
        assert!(d.max.laplacian_h <= d.eps);
        assert!(d.laplacian_ok && d.cal_l_sigma_ok && d.bracket_ok);
        assert!((d.max.laplacian_h - d.max.laplacian_formula).abs() <= d.eps);
        assert!((d.max.cal_l_sigma - d.max.cal_l_sigma_formula).abs() <= d.eps);
    }

    #[test]
    fn theorem_tags_parse() {
        assert_eq!("THM4".parse::<TheoremTag>().unwrap(), TheoremTag::Thm4);
        assert!("thm2".parse::<TheoremTag>().is_err());
    }
}
