//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use grw_core::fiber::{make_fiber, FiberKind, PatchParams};
use grw_core::hypersurface::{ambient_curvature, build_graph, curvature_bundle, shape_operator};
use grw_core::solver::{perturbation, uniqueness_experiment, TheoremTag, UniquenessScenario};
use grw_core::verify::{
    check_omori, check_parabolicity, verify_inequalities, verify_structural, verify_suite, GSpec, GammaSpec,
    IdentityClass, IdentityId, IdentityReport, OmoriModel, Profile, SuiteChecks, SuiteSpec,
};
use grw_core::warping::{make_tabulated_warping, make_warping, Interval, WarpingFunction, WarpingKind};
use grw_core::Error;

type Height = Box<dyn Fn(&[f64]) -> f64 + Sync>;
type Criterion = (&'static str, &'static str, fn() -> (bool, String));

const MIN_ORDER: f64 = 1.8;

fn line() -> Interval {
    Interval::new(f64::NEG_INFINITY, f64::INFINITY).unwrap()
}

fn warp(kind: WarpingKind, params: &[f64], lo: f64, hi: f64) -> WarpingFunction {
    make_warping(kind, params, Interval::new(lo, hi).unwrap()).unwrap()
}

fn exp() -> WarpingFunction {
    make_warping(WarpingKind::Exp, &[], line()).unwrap()
}

fn linear() -> WarpingFunction {
    warp(WarpingKind::Linear, &[], 0.5, 4.0)
}

/// Samples of `rho = t`; the natural spline reproduces them exactly.
fn tabulated_linear() -> WarpingFunction {
    let ts: Vec<f64> = (0..=40).map(|i| 0.25 + 0.1 * i as f64).collect();
    make_tabulated_warping(ts.clone(), ts).unwrap()
}

fn suite(fiber: FiberKind, n: usize, w: &WarpingFunction, h: &(dyn Fn(&[f64]) -> f64 + Sync), checks: SuiteChecks, sizes: &[usize]) -> Vec<IdentityReport> {
    let spec = SuiteSpec { fiber, n, patch: PatchParams::default(), warping: w, height: h, checks };
    verify_suite(&spec, sizes).unwrap()
}

const ONLY_STRUCTURAL: SuiteChecks = SuiteChecks { structural: true, composite: false, theta: false, inequalities: false };
const ONLY_COMPOSITE: SuiteChecks = SuiteChecks { structural: false, composite: true, theta: false, inequalities: false };
const ONLY_THETA: SuiteChecks = SuiteChecks { structural: false, composite: false, theta: true, inequalities: false };

fn find(reports: &[IdentityReport], id: IdentityId, k: Option<usize>) -> &IdentityReport {
    reports.iter().find(|r| r.identity == id && r.k == k).unwrap_or_else(|| panic!("missing {id:?} {k:?}"))
}

/// Converges at the required order; `fine_max` bounds the finest residual when given.
fn converges(r: &IdentityReport, fine_max: Option<f64>, notes: &mut Vec<String>) -> bool {
    let order = r.fitted_order.unwrap_or(f64::NAN);
    let fine = r.grids.last().map_or(f64::NAN, |g| g.max);
    notes.push(format!("{} order {order:.2} max {fine:.2e}", r.name()));
    order >= MIN_ORDER && fine_max.is_none_or(|m| fine <= m)
}

struct Surface {
    label: &'static str,
    fiber: FiberKind,
    n: usize,
    size: usize,
    warping: WarpingFunction,
    height: Height,
}

fn surface(label: &'static str, fiber: FiberKind, n: usize, size: usize, warping: WarpingFunction, height: Height) -> Surface {
    Surface { label, fiber, n, size, warping, height }
}

/// Perturbed graphs over every fiber and warping kind.
fn surfaces() -> Vec<Surface> {
    use FiberKind::*;
    vec![
        surface("torus exp", Torus, 2, 48, exp(), Box::new(|x| 0.1 * x[0].sin() * x[1].cos())),
        surface("torus linear", Torus, 2, 48, linear(), Box::new(|x| 2.0 + 0.1 * x[0].sin() * x[1].cos() + 0.05 * (2.0 * x[1]).cos())),
        surface("torus cosh", Torus, 2, 48, warp(WarpingKind::Cosh, &[], -2.0, 2.0), Box::new(|x| 0.3 + 0.1 * x[0].cos() * (2.0 * x[1]).sin())),
        surface("torus power", Torus, 2, 48, warp(WarpingKind::Power, &[2.0], 0.5, 4.0), Box::new(|x| 1.5 + 0.08 * (x[0] + x[1]).sin())),
        surface("torus tabulated", Torus, 2, 48, tabulated_linear(), Box::new(|x| 2.0 + 0.1 * x[0].cos() * x[1].cos())),
        surface("sphere band linear", SphereBand, 2, 48, linear(), Box::new(|x| 2.0 + 0.05 * x[0].sin() * x[1].cos())),
        surface("hyperbolic disk power", HyperbolicDisk, 2, 48, warp(WarpingKind::Power, &[2.0], 0.5, 4.0), Box::new(|x| 1.5 + 0.05 * x[0] * x[1])),
        surface("torus3 exp", Torus, 3, 16, exp(), Box::new(|x| 0.1 * x[0].sin() * x[1].cos() + 0.05 * x[2].cos())),
        surface("torus3 linear", Torus, 3, 16, linear(), Box::new(|x| 2.0 + 0.05 * x[0].sin() * x[1].cos() + 0.03 * x[2].cos())),
    ]
}

/// Seeded perturbations of a slice, as used by the solver.
fn seeded_torus(n: usize, size: usize, seed: u64, amplitude: f64, t0: f64) -> (grw_core::fiber::Fiber, Vec<f64>) {
    let f = make_fiber(FiberKind::Torus, n, &[size], PatchParams::default()).unwrap();
    let u = perturbation(&f, seed, amplitude).iter().map(|v| t0 + v).collect();
    (f, u)
}

fn a1() -> (bool, String) {
    let start = Instant::now();
    let w = exp();
    let h = |x: &[f64]| 0.1 * x[0].sin() * x[1].cos();
    let reports = suite(FiberKind::Torus, 2, &w, &h, ONLY_STRUCTURAL, &[32, 64, 128]);
    let secs = start.elapsed().as_secs_f64();
    let mut notes = Vec::new();
    let mut ok = true;
    for id in [IdentityId::SigmaOperator, IdentityId::HeightOperator] {
        for k in [0, 1] {
            ok &= converges(find(&reports, id, Some(k)), Some(1e-4), &mut notes);
        }
    }
    notes.push(format!("{secs:.1} s"));
    (ok && secs <= 60.0, notes.join("; "))
}

fn a2() -> (bool, String) {
    // (warping, t0, exact (log rho)'(t0))
    let cases: Vec<(&str, WarpingFunction, f64, f64)> = vec![
        ("exp", exp(), 0.3, 1.0),
        ("exp a=0.5 c=2", make_warping(WarpingKind::Exp, &[0.5, 2.0], line()).unwrap(), -0.4, 0.5),
        ("cosh", make_warping(WarpingKind::Cosh, &[], line()).unwrap(), 0.7, 0.7f64.tanh()),
        ("cosh at 0", make_warping(WarpingKind::Cosh, &[], line()).unwrap(), 0.0, 0.0),
        ("linear", linear(), 2.0, 0.5),
        ("linear a=2 b=1", warp(WarpingKind::Linear, &[2.0, 1.0], 0.0, 4.0), 1.0, 2.0 / 3.0),
        ("power 2", warp(WarpingKind::Power, &[2.0], 0.5, 4.0), 1.5, 2.0 / 1.5),
        ("power -1", warp(WarpingKind::Power, &[-1.0], 0.5, 4.0), 2.0, -0.5),
        ("tabulated t", tabulated_linear(), 2.0, 0.5),
    ];
    let fibers = [(FiberKind::Torus, 2, 16), (FiberKind::Torus, 3, 16), (FiberKind::SphereBand, 2, 16), (FiberKind::HyperbolicDisk, 2, 16)];
    let (mut hk_err, mut a_err, mut th_err) = (0.0f64, 0.0f64, 0.0f64);
    for (_, w, t0, lam) in &cases {
        for &(kind, n, size) in &fibers {
            let f = make_fiber(kind, n, &[size], PatchParams::default()).unwrap();
            let s = build_graph(&f, w, &f.sample(|_| *t0)).unwrap();
            let b = curvature_bundle(&s, &shape_operator(&s)).unwrap();
            for p in 0..s.len() {
                for k in 0..=n {
                    hk_err = hk_err.max((b.hk(k, p) - lam.powi(k as i32)).abs());
                }
                let a = b.a_at(p);
                for i in 0..n {
                    for j in 0..n {
                        let expect = if i == j { -lam } else { 0.0 };
                        a_err = a_err.max((a[i * n + j] - expect).abs());
                    }
                }
                th_err = th_err.max((s.theta[p] + 1.0).abs());
            }
        }
    }
    let ok = hk_err <= 1e-10 && a_err <= 1e-10 && th_err <= 1e-10;
    (ok, format!("{} warpings x {} fibers; |H_k - lambda^k| {hk_err:.1e}, |A + lambda I| {a_err:.1e}, |Theta + 1| {th_err:.1e}", cases.len(), fibers.len()))
}

const ALGEBRAIC: [IdentityId; 5] = [
    IdentityId::TraceNewton,
    IdentityId::TraceShapeNewton,
    IdentityId::TraceShapeSquaredNewton,
    IdentityId::ShapeNormSquared,
    IdentityId::HeightGradientNorm,
];

fn algebraic_worst(reports: &[IdentityReport]) -> (f64, bool) {
    let mut worst = 0.0f64;
    let mut ok = true;
    for r in reports.iter().filter(|r| ALGEBRAIC.contains(&r.identity)) {
        assert_eq!(r.class, IdentityClass::Algebraic);
        worst = worst.max(r.max_residual().unwrap_or(f64::INFINITY));
        ok &= r.pass && r.tolerance <= 1e-10;
    }
    (worst, ok)
}

fn a3() -> (bool, String) {
    let mut worst = 0.0f64;
    let mut ok = true;
    let mut count = 0;
    let mut failing = Vec::new();
    for sf in surfaces() {
        let rs = suite(sf.fiber, sf.n, &sf.warping, &*sf.height, ONLY_STRUCTURAL, &[sf.size]);
        let (w, pass) = algebraic_worst(&rs);
        if !pass {
            failing.push(sf.label);
        }
        worst = worst.max(w);
        ok &= pass;
        count += 1;
    }
    let w = linear();
    for (n, size) in [(2, 64), (3, 16)] {
        for seed in 1..=5 {
            let (f, u) = seeded_torus(n, size, seed, 0.05, 2.0);
            let s = build_graph(&f, &w, &f.scalar_field(u).unwrap()).unwrap();
            let b = curvature_bundle(&s, &shape_operator(&s)).unwrap();
            let (wst, pass) = algebraic_worst(&verify_structural(&s, &b).unwrap());
            worst = worst.max(wst);
            ok &= pass;
            count += 1;
        }
    }
    (ok && worst <= 1e-10, format!("{count} surfaces; worst relative residual {worst:.1e}; failing {failing:?}"))
}

fn a4() -> (bool, String) {
    let w = exp();
    let h2 = |x: &[f64]| 0.1 * x[0].sin() * x[1].cos();
    let h3 = |x: &[f64]| 0.1 * x[0].sin() * x[1].cos() + 0.05 * x[2].cos();
    let r2 = suite(FiberKind::Torus, 2, &w, &h2, ONLY_COMPOSITE, &[32, 64, 128]);
    let r3 = suite(FiberKind::Torus, 3, &w, &h3, ONLY_COMPOSITE, &[16, 24, 32]);
    let mut notes = Vec::new();
    let mut ok = converges(find(&r2, IdentityId::CompositeSigma, Some(2)), None, &mut notes);
    for k in [2, 3] {
        ok &= converges(find(&r3, IdentityId::CompositeSigma, Some(k)), None, &mut notes);
    }
    (ok, notes.join("; "))
}

fn a5() -> (bool, String) {
    let w = linear();
    let h = |x: &[f64]| 2.0 + 0.1 * x[0].sin() * x[1].cos() + 0.05 * (2.0 * x[1]).cos();
    let rs = suite(FiberKind::Torus, 2, &w, &h, ONLY_THETA, &[32, 64, 128]);
    let mut notes = Vec::new();
    let mut ok = converges(find(&rs, IdentityId::ThetaHatLaplacian, None), None, &mut notes);
    ok &= converges(find(&rs, IdentityId::ThetaHatNewton, Some(1)), None, &mut notes);
    for k in [1, 2] {
        ok &= converges(find(&rs, IdentityId::PhiDivergence, Some(k)), None, &mut notes);
    }
    (ok, notes.join("; "))
}

fn a6() -> (bool, String) {
    let w = linear();
    let (mut p1_min, mut checked2) = (f64::INFINITY, 0);
    for seed in 1..=5 {
        for amp in [0.05, 0.2] {
            let (f, u) = seeded_torus(2, 48, seed, amp, 2.0);
            let s = build_graph(&f, &w, &f.scalar_field(u).unwrap()).unwrap();
            let b = curvature_bundle(&s, &shape_operator(&s)).unwrap();
            if (0..b.len()).all(|p| b.hk(2, p) > 0.0) {
                p1_min = p1_min.min(b.newton_min_eigenvalue(1));
                checked2 += 1;
            }
        }
    }
    let (mut pk_min, mut checked3) = (f64::INFINITY, 0);
    for seed in 1..=5 {
        let (f, u) = seeded_torus(3, 16, seed, 0.05, 2.0);
        let s = build_graph(&f, &w, &f.scalar_field(u).unwrap()).unwrap();
        let b = curvature_bundle(&s, &shape_operator(&s)).unwrap();
        if (0..b.len()).all(|p| b.hk(3, p) > 0.0) && b.elliptic_mask.iter().any(|&e| e) {
            pk_min = pk_min.min(b.newton_min_eigenvalue(1)).min(b.newton_min_eigenvalue(2));
            checked3 += 1;
        }
    }
    let ok = checked2 > 0 && checked3 > 0 && p1_min > -1e-10 && pk_min > -1e-10;
    (
        ok,
        format!("H_2 > 0 on {checked2} surfaces, min eig P_1 {p1_min:.3e}; H_3 > 0 with elliptic point on {checked3}, min eig P_1, P_2 {pk_min:.3e}"),
    )
}

fn a7() -> (bool, String) {
    let start = Instant::now();
    let f = make_fiber(FiberKind::Torus, 2, &[64], PatchParams::default()).unwrap();
    let w = linear();
    let slab = Interval::new(1.0, 3.0).unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for (k, tag) in [(1, TheoremTag::Thm1), (2, TheoremTag::Thm4)] {
        let r = uniqueness_experiment(&UniquenessScenario::new(&f, &w, slab, k, 2.0, tag)).unwrap();
        let res = r.runs.iter().map(|x| x.final_residual).fold(0.0, f64::max);
        let dist = r.runs.iter().map(|x| x.slice_distance).fold(0.0, f64::max);
        let iters = r.runs.iter().map(|x| x.iterations).max().unwrap_or(usize::MAX);
        ok &= r.runs.len() == 5
            && r.runs.iter().all(|x| x.converged && (x.amplitude - 0.05).abs() < 1e-15)
            && r.passed
            && r.uniqueness_asserted
            && res <= 1e-10
            && dist <= 1e-6
            && iters <= 50;
        notes.push(format!("k={k}: residual {res:.1e}, slice distance {dist:.1e}, {iters} iterations"));
    }
    let secs = start.elapsed().as_secs_f64();
    notes.push(format!("{secs:.1} s"));
    (ok && secs <= 300.0, notes.join("; "))
}

fn a8() -> (bool, String) {
    let f = make_fiber(FiberKind::Torus, 2, &[32], PatchParams::default()).unwrap();
    let w = warp(WarpingKind::Cosh, &[], -2.0, 2.0);
    let sc = UniquenessScenario::new(&f, &w, Interval::new(-1.0, 1.0).unwrap(), 1, 0.0, TheoremTag::Thm4);
    let witness = match uniqueness_experiment(&sc) {
        Err(Error::HypothesisViolation { predicate }) => predicate,
        other => return (false, format!("expected a hypothesis violation, got {other:?}")),
    };
    let core_ok = witness.contains("t = 0");

    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/cosh_negative_control.toml");
    let out = tempfile::TempDir::new().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_grw"))
        .args(["solve", scenario.to_str().unwrap(), "--out", out.path().to_str().unwrap()])
        .output()
        .unwrap()
        .status;
    let json: serde_json::Value = std::fs::read_to_string(out.path().join("cosh_negative_control__uniqueness.json"))
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok())
        .unwrap_or_default();
    let cli_ok = status.code() == Some(2) && json["error"] == "HypothesisViolation" && json["uniqueness_asserted"] == false;
    (core_ok && cli_ok, format!("witness \"{witness}\"; cli exit {:?}, uniqueness_asserted {}", status.code(), json["uniqueness_asserted"]))
}

fn a9() -> (bool, String) {
    let flat = check_omori(OmoriModel { c: 0.0, r_max: 50.0 }, GammaSpec::RSquared, &GSpec::QuadraticPlusOne).unwrap();
    let predicates = flat.gamma_ok.len() + flat.g_ok.len();
    let mut ok = predicates == 7 && flat.all_pass();
    let mut defect = 0.0f64;
    for (c, r_max) in [(0.0, 50.0), (-0.25, 30.0), (-1.0, 20.0)] {
        let m = check_omori(OmoriModel { c, r_max }, GammaSpec::RSquared, &GSpec::QuadraticPlusOne).unwrap();
        defect = defect.max(m.psi_c_equality_defect);
    }
    ok &= defect <= 1e-8;
    let e = check_omori(OmoriModel { c: 0.0, r_max: 50.0 }, GammaSpec::RSquared, &GSpec::Exponential).unwrap();
    ok &= !e.g_ok[2];
    (ok, format!("flat model {predicates} predicates all pass {}; equality defect {defect:.1e}; e^t growth condition (iii) {}", flat.all_pass(), e.g_ok[2]))
}

fn a10() -> (bool, String) {
    let plane = check_parabolicity(&Profile::plane(), 1e6).unwrap();
    let hyp = check_parabolicity(&Profile::hyperbolic(), 1e6).unwrap();
    let ok = plane.parabolic_indicator && !hyp.parabolic_indicator && plane.tail.margin >= 0.05 && hyp.tail.margin >= 0.05;
    (
        ok,
        format!(
            "plane {} (margin {:.2}); hyperbolic {} (margin {:.2})",
            plane.parabolic_indicator, plane.tail.margin, hyp.parabolic_indicator, hyp.tail.margin
        ),
    )
}

fn a11() -> (bool, String) {
    let mut worst = f64::INFINITY;
    let mut count = 0;
    let mut worst_label = "";
    let mut check = |label: &'static str, f: &grw_core::fiber::Fiber, w: &WarpingFunction, u: grw_core::fiber::ScalarField| {
        let s = build_graph(f, w, &u).unwrap();
        let b = curvature_bundle(&s, &shape_operator(&s)).unwrap();
        let amb = ambient_curvature(&s).unwrap();
        let rs = verify_inequalities(&s, &b, &amb).unwrap();
        let r = find(&rs, IdentityId::SectionalBound, None);
        let slack = r.grids.iter().filter_map(|g| g.min_slack).fold(f64::INFINITY, f64::min);
        if slack < worst {
            (worst, worst_label) = (slack, label);
        }
        count += 1;
    };
    for sf in surfaces().into_iter().filter(|s| s.n == 2) {
        let f = make_fiber(sf.fiber, 2, &[sf.size], PatchParams::default()).unwrap();
        let u = f.sample(&*sf.height);
        check(sf.label, &f, &sf.warping, u);
    }
    let w = linear();
    for seed in 1..=5 {
        let (f, u) = seeded_torus(2, 64, seed, 0.05, 2.0);
        let u = f.scalar_field(u).unwrap();
        check("seeded torus linear", &f, &w, u);
    }
    (worst >= -1e-6, format!("{count} surfaces; min slack {worst:.3e} on {worst_label}"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("A1", "identity convergence", a1),
        ("A2", "slice exactness", a2),
        ("A3", "algebraic identities", a3),
        ("A4", "composite operator", a4),
        ("A5", "theta-hat identities", a5),
        ("A6", "ellipticity of Newton tensors", a6),
        ("A7", "uniqueness experiment", a7),
        ("A8", "negative control", a8),
        ("A9", "side conditions", a9),
        ("A10", "parabolicity criterion", a10),
        ("A11", "sectional bound", a11),
    ];
    let mut failed = Vec::new();
    for (id, title, check) in criteria {
        let (pass, detail) = check();
        println!("{id} {} {title}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 11 criteria pass");
    } else {
        println!("acceptance: failed {}", failed.join(", "));
        std::process::exit(1);
    }
}
