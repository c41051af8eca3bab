use grw_core::fiber::{fiber_calculus, make_fiber, metric_at, FiberKind, PatchParams};
use grw_core::hypersurface::{
    ambient_curvature, build_graph, curvature_bundle, shape_operator, AmbientTensor, GraphHypersurface,
};
use grw_core::linalg;
use grw_core::numeric::{binomial, newton_trace_coefficient};
use grw_core::operators::{apply_frak_l, apply_lk, compose_cal_l, trace_apply, CompositeVariant};
use grw_core::warping::{check_conditions, make_warping, Interval, LogConcavity, WarpingFunction, WarpingKind};
use grw_core::fiber::TensorField;
use grw_core::Fiber;

fn line() -> Interval {
    Interval::new(f64::NEG_INFINITY, f64::INFINITY).unwrap()
}

fn torus(size: usize) -> Fiber {
    make_fiber(FiberKind::Torus, 2, &[size], PatchParams::default()).unwrap()
}

fn warp(kind: WarpingKind, params: &[f64], lo: f64, hi: f64) -> WarpingFunction {
    make_warping(kind, params, Interval::new(lo, hi).unwrap()).unwrap()
}

#[test]
fn library_second_log_derivatives() {
    let e = make_warping(WarpingKind::Exp, &[], line()).unwrap();
    let c = make_warping(WarpingKind::Cosh, &[], line()).unwrap();
    let l = warp(WarpingKind::Linear, &[], 0.5, 4.0);
    for t in [-2.0, -0.3, 0.0, 1.7] {
        assert_eq!(e.log_d2(t), 0.0);
        assert!((c.log_d2(t) - 1.0 / t.cosh().powi(2)).abs() < 1e-14);
    }
    for t in [0.6, 1.0, 3.9] {
        assert!((l.log_d2(t) + 1.0 / (t * t)).abs() < 1e-14);
    }
}

#[test]
fn sigma_closed_forms() {
    let e = make_warping(WarpingKind::Exp, &[], line()).unwrap();
    let c = make_warping(WarpingKind::Cosh, &[], line()).unwrap();
    assert!((e.sigma(1.0, 0.0).unwrap() - (1f64.exp() - 1.0)).abs() < 1e-12);
    assert_eq!(e.sigma(0.4, 0.4).unwrap(), 0.0);
    assert!((c.sigma(1.0, -1.0).unwrap() - 2.0 * 1f64.sinh()).abs() < 1e-12);
}

#[test]
fn condition_report_examples() {
    let slab = Interval::new(-1.0, 1.0).unwrap();
    let e = make_warping(WarpingKind::Exp, &[], line()).unwrap();
    let r = check_conditions(&e, slab, 0.0, 2).unwrap();
    assert_eq!(r.logconcave, LogConcavity::InteriorEquality);
    assert!(r.ncc && !r.strict_ncc);

    let l = warp(WarpingKind::Linear, &[], 0.5, 4.0);
    let r = check_conditions(&l, Interval::new(0.5, 4.0).unwrap(), 0.0, 2).unwrap();
    assert_eq!(r.logconcave, LogConcavity::Strict);
    assert!((r.sup_logrho2 + 1.0).abs() < 1e-10);
    assert!(r.strict_ncc);

    let c = make_warping(WarpingKind::Cosh, &[], line()).unwrap();
    let r = check_conditions(&c, slab, 1.0, 2).unwrap();
    assert_eq!(r.logconcave, LogConcavity::Fails);
    assert!(r.witness.abs() < 1e-6);
    assert!(c.log_d2(r.witness) > 0.0);
}

#[test]
fn fiber_examples() {
    let t = torus(64);
    for p in [0, 100, 4000] {
        assert_eq!(t.metric(p), &[1.0, 0.0, 0.0, 1.0]);
        assert!(t.christoffel(p).iter().all(|&g| g == 0.0));
    }
    let band = make_fiber(FiberKind::SphereBand, 2, &[64], PatchParams { theta0: 0.3, r_max: 1.5 }).unwrap();
    assert_eq!(band.kappa(), 1.0);
    for p in [0, 1000, 2000] {
        let th = band.grid().coords(p)[0];
        let g = band.metric(p);
        assert!((g[0] - 1.0).abs() < 1e-15 && (g[3] - th.sin().powi(2)).abs() < 1e-15);
    }
    assert!(band.curvature_deviation() <= 1e-6);
    let disk = make_fiber(FiberKind::HyperbolicDisk, 2, &[64], PatchParams::default()).unwrap();
    assert_eq!(disk.kappa(), -1.0);
    assert!(disk.curvature_deviation() <= 1e-6);
}

#[test]
fn torus_calculus_converges_and_integrates_by_parts() {
    let mut errs = Vec::new();
    for size in [32, 64, 128] {
        let t = torus(size);
        let c = fiber_calculus(&t, &t.sample(|x| x[0].sin())).unwrap();
        let mut e: f64 = 0.0;
        for p in 0..t.len() {
            let x = t.grid().coords(p);
            e = e.max((c.grad.values[2 * p] - x[0].cos()).abs());
            e = e.max((c.lap.values[p] + x[0].sin()).abs());
        }
        errs.push(e);
    }
    assert!(errs[1] < errs[0] / 3.5 && errs[2] < errs[1] / 3.5, "{errs:?}");

    let t = torus(48);
    let f = t.sample(|x| (x[0] + 2.0 * x[1]).sin() + x[1].cos());
    let g = t.sample(|x| (x[0]).cos() * (x[1]).sin());
    let lf = fiber_calculus(&t, &f).unwrap().lap.values;
    let lg = fiber_calculus(&t, &g).unwrap().lap.values;
    let a: Vec<f64> = f.values.iter().zip(&lg).map(|(x, y)| x * y).collect();
    let b: Vec<f64> = g.values.iter().zip(&lf).map(|(x, y)| x * y).collect();
    assert!((t.integrate(&a) - t.integrate(&b)).abs() <= 1e-8);
}

#[test]
fn sphere_eigenfunction_laplacian() {
    let band = make_fiber(FiberKind::SphereBand, 2, &[64], PatchParams::default()).unwrap();
    let c = fiber_calculus(&band, &band.sample(|x| x[0].cos())).unwrap();
    let mask = band.interior_mask();
    let mut e: f64 = 0.0;
    for p in (0..band.len()).filter(|&p| mask[p]) {
        e = e.max((c.lap.values[p] + 2.0 * band.grid().coords(p)[0].cos()).abs());
    }
    assert!(e < 5e-3, "{e}");
}

#[test]
fn slice_graph_is_umbilic_with_unit_normal() {
    let f = torus(32);
    let w = make_warping(WarpingKind::Exp, &[], line()).unwrap();
    let s = build_graph(&f, &w, &f.sample(|_| 0.3)).unwrap();
    let r2 = w.rho(0.3).powi(2);
    for p in 0..s.len() {
        assert_eq!(s.theta[p], -1.0);
        let g = s.metric_at(p);
        assert!((g[0] - r2).abs() < 1e-14 && g[1] == 0.0 && (g[3] - r2).abs() < 1e-14);
    }
}

/// Future unit normal from the tangent vectors by Lorentzian Gram-Schmidt.
fn normal_by_orthonormalization(s: &GraphHypersurface, p: usize) -> Vec<f64> {
    let n = s.n();
    let tangents: Vec<Vec<f64>> =
        (0..n).map(|i| s.ambient_tangent(p, &(0..n).map(|j| (i == j) as u8 as f64).collect::<Vec<_>>())).collect();
    let mut v = vec![0.0; n + 1];
    v[0] = 1.0;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for t in tangents {
        let mut e = t.clone();
        for b in &basis {
            let c = s.ambient_inner(p, &e, b);
            for (x, y) in e.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
        let nn = s.ambient_inner(p, &e, &e).sqrt();
        basis.push(e.iter().map(|x| x / nn).collect());
    }
    for b in &basis {
        let c = s.ambient_inner(p, &v, b);
        for (x, y) in v.iter_mut().zip(b) {
            *x -= c * y;
        }
    }
    let nn = (-s.ambient_inner(p, &v, &v)).sqrt();
    v.iter().map(|x| x / nn).collect()
}

#[test]
fn theta_matches_orthonormalized_normal() {
    let f = torus(32);
    let w = make_warping(WarpingKind::Exp, &[], line()).unwrap();
    let s = build_graph(&f, &w, &f.sample(|x| 0.1 * x[0].sin())).unwrap();
    for p in (0..s.len()).step_by(37) {
        let nrm = normal_by_orthonormalization(&s, p);
        // Theta = <N, d_t> = -N^t
        let theta = -nrm[0];
        assert!((s.theta[p] - theta).abs() < 1e-10, "{} {}", s.theta[p], theta);
    }
}

#[test]
fn prescribed_principal_curvatures() {
    let f = torus(16);
    let w = warp(WarpingKind::Linear, &[0.0, 1.0], -5.0, 5.0);
    let s = build_graph(&f, &w, &f.sample(|_| 0.0)).unwrap();
    let a = TensorField { shape: f.grid().shape(), boundary: f.boundary(), dim: 2, values: [-1.0, 0.0, 0.0, -2.0].repeat(f.len()) };
    let b = curvature_bundle(&s, &a).unwrap();
    assert!((b.sk(1, 0) + 3.0).abs() < 1e-14 && (b.hk(1, 0) - 1.5).abs() < 1e-14);
    assert!((b.sk(2, 0) - 2.0).abs() < 1e-14 && (b.hk(2, 0) - 2.0).abs() < 1e-14);
    assert_eq!(newton_trace_coefficient(4, 1), 12.0);
    assert_eq!(newton_trace_coefficient(4, 1), 2.0 * binomial(4, 2));
}

#[test]
fn slice_ambient_sectional() {
    let f = torus(16);
    let w = make_warping(WarpingKind::Exp, &[], line()).unwrap();
    let s = build_graph(&f, &w, &f.sample(|_| 0.0)).unwrap();
    let amb = ambient_curvature(&s).unwrap();
    assert!(amb.kbar.iter().all(|k| (k - 1.0).abs() < 1e-8));
    assert!(amb.ric_p_nstar.iter().all(|&r| r == 0.0));
}

#[test]
fn static_spacetime_sectional_is_fiber_term() {
    let band = make_fiber(FiberKind::SphereBand, 2, &[24], PatchParams::default()).unwrap();
    let w = warp(WarpingKind::Linear, &[0.0, 1.0], -5.0, 5.0);
    let s = build_graph(&band, &w, &band.sample(|x| 0.2 * x[0].cos() * x[1].sin())).unwrap();
    let amb = ambient_curvature(&s).unwrap();
    for (k, wedge) in amb.kbar.iter().zip(&amb.wedge_sq) {
        assert!((k - wedge).abs() < 1e-12);
    }
}

/// Sectional curvature of the warped metric `-dt^2 + rho^2 g_P` on the plane
/// spanned by ambient vectors `x`, `y`, from nested finite differences.
fn numeric_ambient_sectional(kind: FiberKind, w: &WarpingFunction, at: &[f64], x: &[f64], y: &[f64]) -> f64 {
    let m = at.len();
    let metric = |z: &[f64]| -> Vec<f64> {
        let gp = metric_at(kind, m - 1, &z[1..]);
        let r2 = w.rho(z[0]).powi(2);
        let mut g = vec![0.0; m * m];
        g[0] = -1.0;
        for i in 0..m - 1 {
            for j in 0..m - 1 {
                g[(i + 1) * m + j + 1] = r2 * gp[i * (m - 1) + j];
            }
        }
        g
    };
    let h = 1e-3;
    let d = |f: &dyn Fn(&[f64]) -> Vec<f64>, z: &[f64], a: usize| -> Vec<f64> {
        let shift = |s: f64| {
            let mut q = z.to_vec();
            q[a] += s;
            f(&q)
        };
        let (p1, p2, m1, m2) = (shift(h), shift(2.0 * h), shift(-h), shift(-2.0 * h));
        (0..p1.len()).map(|i| (-p2[i] + 8.0 * p1[i] - 8.0 * m1[i] + m2[i]) / (12.0 * h)).collect()
    };
    let gamma = |z: &[f64]| -> Vec<f64> {
        let g = metric(z);
        let inv = linalg::inverse(m, &g).unwrap();
        let dg: Vec<Vec<f64>> = (0..m).map(|a| d(&metric, z, a)).collect();
        let mut c = vec![0.0; m * m * m];
        for k in 0..m {
            for i in 0..m {
                for j in 0..m {
                    c[k * m * m + i * m + j] = (0..m)
                        .map(|l| 0.5 * inv[k * m + l] * (dg[i][l * m + j] + dg[j][i * m + l] - dg[l][i * m + j]))
                        .sum();
                }
            }
        }
        c
    };
    let dc: Vec<Vec<f64>> = (0..m).map(|a| d(&gamma, at, a)).collect();
    let r = linalg::riemann_from_christoffel(m, &gamma(at), &dc);
    let g = metric(at);
    let ip = |a: &[f64], b: &[f64]| -> f64 { (0..m).map(|i| (0..m).map(|j| a[i] * g[i * m + j] * b[j]).sum::<f64>()).sum() };
    // <R(x, y) y, x> with R^a_{bcd} = R(d_c, d_d) d_b
    let mut num = 0.0;
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for dd in 0..m {
                    let ra = r[a * m * m * m + b * m * m + c * m + dd];
                    num += (0..m).map(|e| x[e] * g[e * m + a]).sum::<f64>() * ra * y[b] * x[c] * y[dd];
                }
            }
        }
    }
    num / (ip(x, x) * ip(y, y) - ip(x, y).powi(2))
}

#[test]
fn ambient_sectional_matches_finite_difference_curvature() {
    let cases: Vec<(FiberKind, WarpingFunction)> = vec![
        (FiberKind::Torus, make_warping(WarpingKind::Exp, &[], line()).unwrap()),
        (FiberKind::SphereBand, warp(WarpingKind::Linear, &[], 0.5, 4.0)),
        (FiberKind::HyperbolicDisk, make_warping(WarpingKind::Cosh, &[], line()).unwrap()),
    ];
    for (kind, w) in cases {
        let f = make_fiber(kind, 2, &[24], PatchParams::default()).unwrap();
        let base = if w.kind() == WarpingKind::Linear { 2.0 } else { 0.3 };
        let s = build_graph(&f, &w, &f.sample(|x| base + 0.1 * x[0].sin() * x[1].cos())).unwrap();
        let amb = ambient_curvature(&s).unwrap();
        let tensor = AmbientTensor::new(&s);
        for p in [f.len() / 2 + 3, f.len() / 3 + 7] {
            let frame = s.orthonormal_frame(p).unwrap();
            let col = |a: usize| s.ambient_tangent(p, &[frame[a], frame[2 + a]]);
            let (x, y) = (col(0), col(1));
            let mut at = vec![s.u[p]];
            at.extend(f.grid().coords(p));
            let oracle = numeric_ambient_sectional(kind, &w, &at, &x, &y);
            assert!((amb.kbar[p] - oracle).abs() < 1e-5, "{kind:?}: {} vs {oracle}", amb.kbar[p]);
            assert!((tensor.sectional(p, &x, &y) - amb.kbar_decomposed[p]).abs() < 1e-10);
        }
    }
}

#[test]
fn laplacian_on_slice_is_rescaled_flat() {
    let w = make_warping(WarpingKind::Exp, &[], line()).unwrap();
    let mut errs = Vec::new();
    for size in [32, 64] {
        let f = torus(size);
        let s = build_graph(&f, &w, &f.sample(|_| 0.5)).unwrap();
        let b = curvature_bundle(&s, &shape_operator(&s)).unwrap();
        let v = apply_lk(&s, &b, 0, &f.sample(|x| x[0].sin()).values, false).unwrap();
        let r2 = w.rho(0.5).powi(2);
        errs.push((0..f.len()).map(|p| (v[p] + f.grid().coords(p)[0].sin() / r2).abs()).fold(0.0, f64::max));
        let five = vec![5.0; f.len()];
        assert!(apply_lk(&s, &b, 1, &five, false).unwrap().iter().all(|&x| x == 0.0));
    }
    assert!(errs[1] < errs[0] / 3.5);
}

#[test]
fn composite_k2_splits_into_trace_operators() {
    let f = torus(32);
    let w = warp(WarpingKind::Linear, &[], 0.5, 4.0);
    let s = build_graph(&f, &w, &f.sample(|x| 2.0 + 0.05 * x[0].sin() * x[1].cos())).unwrap();
    let b = curvature_bundle(&s, &shape_operator(&s)).unwrap();
    let op = compose_cal_l(&s, &b, 2, CompositeVariant::Compact).unwrap();
    assert!(op.elliptic && op.failing.is_empty());
    assert!(b.hk_field(2).iter().all(|&h| h > 0.0));
    assert!(b.newton_min_eigenvalue(1) > 1e-10);
    let g = f.sample(|x| (2.0 * x[0]).cos() + x[1].sin()).values;
    let lhs = op.apply(&s, &g);
    let l0 = apply_lk(&s, &b, 0, &g, false).unwrap();
    let l1 = apply_lk(&s, &b, 1, &g, false).unwrap();
    for p in 0..s.len() {
        let rhs = s.log_d1[p] * l0[p] - s.theta[p] * l1[p];
        assert!((lhs[p] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }
}

#[test]
fn divergence_operator_on_slice_reduces_to_l1() {
    let w = make_warping(WarpingKind::Exp, &[], line()).unwrap();
    let mut errs = Vec::new();
    for size in [32, 64] {
        let f = torus(size);
        let s = build_graph(&f, &w, &f.sample(|_| 0.0)).unwrap();
        let b = curvature_bundle(&s, &shape_operator(&s)).unwrap();
        let g = f.sample(|x| x[0].sin()).values;
        let d = apply_frak_l(&s, &b, 2, &g).unwrap();
        let l1 = apply_lk(&s, &b, 1, &g, false).unwrap();
        assert!(d.formula.iter().zip(&l1).all(|(a, c)| (a - c).abs() < 1e-12));
        assert!(d.discrepancy < 1e-12);
        // P_1 = Id and rho = 1 on this slice
        errs.push((0..f.len()).map(|p| (d.divergence[p] + f.grid().coords(p)[0].sin()).abs()).fold(0.0, f64::max));
    }
    assert!(errs[1] < errs[0] / 3.5, "{errs:?}");
}

#[test]
fn elliptic_operator_respects_discrete_extrema() {
    let f = torus(64);
    let w = warp(WarpingKind::Linear, &[], 0.5, 4.0);
    let s = build_graph(&f, &w, &f.sample(|x| 2.0 + 0.05 * x[0].cos() * (2.0 * x[1]).sin())).unwrap();
    let b = curvature_bundle(&s, &shape_operator(&s)).unwrap();
    let op = compose_cal_l(&s, &b, 2, CompositeVariant::Compact).unwrap();
    let g = f.sample(|x| (x[0] - 0.3).sin() + 0.5 * (x[1] + 0.2).cos()).values;
    let v = op.apply(&s, &g);
    let lap = trace_apply(&s, &linalg::identity(2).repeat(f.len()), &g);
    let imax = (0..g.len()).max_by(|&a, &c| g[a].total_cmp(&g[c])).unwrap();
    let imin = (0..g.len()).min_by(|&a, &c| g[a].total_cmp(&g[c])).unwrap();
    let eps = 10.0 * f.grid().max_spacing().powi(2);
    assert!(v[imax] <= eps && lap[imax] <= eps);
    assert!(v[imin] >= -eps && lap[imin] >= -eps);
}
