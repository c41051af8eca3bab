use grw_core::fiber::{make_fiber, Fiber, FiberKind, PatchParams};
use grw_core::hypersurface::{build_graph, curvature_bundle, mean_curvature_field, shape_operator};
use grw_core::solver::{
    minmax_diagnostics, perturbation, slice_target, solve_constant_hk, uniqueness_experiment, SolveOptions,
    TheoremTag, UniquenessScenario,
};
use grw_core::verify::{merge_refinement, verify_inequalities, verify_structural, IdentityClass, IdentityId};
use grw_core::warping::{make_warping, Interval, WarpingFunction, WarpingKind};
use grw_core::{ambient_curvature, Error};

fn torus(size: usize) -> Fiber {
    make_fiber(FiberKind::Torus, 2, &[size], PatchParams::default()).unwrap()
}

fn linear() -> WarpingFunction {
    make_warping(WarpingKind::Linear, &[], Interval::new(0.5, 4.0).unwrap()).unwrap()
}

fn slab() -> Interval {
    Interval::new(1.0, 3.0).unwrap()
}

#[test]
fn off_slice_target_moves_the_slice() {
    let f = torus(32);
    let w = linear();
    let u0 = f.grid().sample(|x| 2.0 + 0.04 * (x[0] + x[1]).cos());
    for (k, target) in [(1, 0.4), (2, 0.16)] {
        let out = solve_constant_hk(&f, &w, &u0, &SolveOptions::new(k, target)).unwrap();
        assert!(out.converged && out.final_residual <= 1e-10, "k={k} {out:?}");
        assert!((out.mean_height - 2.5).abs() < 1e-8, "k={k} mean {}", out.mean_height);
        assert!(out.slice_distance <= 1e-8);
        let hk = mean_curvature_field(&f, &w, &out.u, k).unwrap();
        assert!(hk.iter().all(|v| (v - target).abs() <= 1e-10));
    }
}

#[test]
fn residual_history_decreases_and_runs_repeat() {
    let f = torus(32);
    let w = linear();
    let seed: Vec<f64> = perturbation(&f, 3, 0.05).iter().map(|v| 2.0 + v).collect();
    let opts = SolveOptions::new(2, slice_target(&w, 2.0, 2).unwrap());
    let a = solve_constant_hk(&f, &w, &seed, &opts).unwrap();
    let b = solve_constant_hk(&f, &w, &seed, &opts).unwrap();
    assert_eq!(a.u, b.u);
    assert_eq!(a.residual_history, b.residual_history);
    assert!(a.residual_history.windows(2).all(|p| p[1] < p[0]));
    assert_eq!(a.residual_history.len(), a.iterations + 1);
}

#[test]
fn exponential_warping_converges_to_some_slice() {
    // every slice of exp has H_1 = 1, so the constant mode is free
    let f = torus(32);
    let w = make_warping(WarpingKind::Exp, &[], Interval::new(f64::NEG_INFINITY, f64::INFINITY).unwrap()).unwrap();
    let u0 = f.grid().sample(|x| 0.05 * x[0].sin() * x[1].cos());
    let out = solve_constant_hk(&f, &w, &u0, &SolveOptions::new(1, 1.0)).unwrap();
    assert!(out.converged, "{out:?}");
    assert!(out.slice_distance <= 1e-6, "{out:?}");
    assert!(out.mean_height.abs() < 1e-12, "mean height drifted to {}", out.mean_height);
}

#[test]
fn hypothesis_sets_gate_the_experiment() {
    let f = torus(32);
    let line = Interval::new(f64::NEG_INFINITY, f64::INFINITY).unwrap();
    let exp = make_warping(WarpingKind::Exp, &[], line).unwrap();
    let unit = Interval::new(-1.0, 1.0).unwrap();
    let ok = uniqueness_experiment(&UniquenessScenario::new(&f, &exp, unit, 1, 0.0, TheoremTag::Thm1)).unwrap();
    assert!(ok.hypotheses.hold && ok.uniqueness_asserted && ok.passed, "{:?}", ok.runs);
    let e = uniqueness_experiment(&UniquenessScenario::new(&f, &exp, unit, 2, 0.0, TheoremTag::Thm4));
    assert!(matches!(e, Err(Error::HypothesisViolation { .. })), "{e:?}");
    let e = uniqueness_experiment(&UniquenessScenario::new(&f, &linear(), slab(), 1, 2.0, TheoremTag::Thm6));
    assert!(matches!(e, Err(Error::HypothesisViolation { .. })), "{e:?}");
}

#[test]
fn cosh_is_rejected_unless_run_as_negative_control() {
    let f = torus(32);
    let cosh = make_warping(WarpingKind::Cosh, &[], Interval::new(-2.0, 2.0).unwrap()).unwrap();
    let slab = Interval::new(-1.0, 1.0).unwrap();
    let mut sc = UniquenessScenario::new(&f, &cosh, slab, 1, 0.0, TheoremTag::Thm4);
    match uniqueness_experiment(&sc) {
        Err(Error::HypothesisViolation { predicate }) => assert!(predicate.contains("t = 0"), "{predicate}"),
        other => panic!("expected a violation, got {other:?}"),
    }
    sc.negative_control = true;
    let r = uniqueness_experiment(&sc).unwrap();
    assert!(r.negative_control && !r.uniqueness_asserted && !r.hypotheses.hold);
    assert!(r.passed);
    assert!(!r.hypotheses.failing().is_empty());
}

#[test]
fn experiment_runs_reach_the_slice_with_clean_diagnostics() {
    let f = torus(32);
    let w = linear();
    for (k, tag) in [(1, TheoremTag::Thm1), (2, TheoremTag::Thm4)] {
        let r = uniqueness_experiment(&UniquenessScenario::new(&f, &w, slab(), k, 2.0, tag)).unwrap();
        assert!(r.passed && r.uniqueness_asserted, "k={k}");
        assert_eq!(r.runs.len(), 5);
        assert_eq!(r.runs.iter().map(|x| x.seed).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
        for run in &r.runs {
            assert!(run.reached_slice && run.final_residual <= 1e-10 && run.iterations <= 50);
            let mm = run.minmax.as_ref().unwrap();
            assert!(mm.laplacian_ok && mm.cal_l_sigma_ok && mm.bracket_ok, "{mm:?}");
        }
    }
}

#[test]
fn experiment_is_deterministic() {
    let f = torus(24);
    let w = linear();
    let sc = UniquenessScenario::new(&f, &w, slab(), 2, 2.0, TheoremTag::Thm4);
    assert_eq!(uniqueness_experiment(&sc).unwrap(), uniqueness_experiment(&sc).unwrap());
}

#[test]
fn seeds_satisfy_algebraic_identities_and_inequalities() {
    let f = torus(32);
    let w = linear();
    for seed in 1..=3 {
        let u: Vec<f64> = perturbation(&f, seed, 0.05).iter().map(|v| 2.0 + v).collect();
        let s = build_graph(&f, &w, &f.scalar_field(u).unwrap()).unwrap();
        let b = curvature_bundle(&s, &shape_operator(&s)).unwrap();
        let amb = ambient_curvature(&s).unwrap();
        let mut reports = verify_structural(&s, &b).unwrap();
        reports.extend(verify_inequalities(&s, &b, &amb).unwrap());
        for r in merge_refinement(vec![reports]) {
            if matches!(r.class, IdentityClass::Algebraic | IdentityClass::Inequality) {
                assert!(r.pass, "seed {seed}: {} {:?}", r.name(), r.grids);
            }
            if r.identity == IdentityId::GardingChain {
                assert!(r.grids[0].min_slack.is_some_and(|v| v >= 0.0));
            }
        }
        let mm = minmax_diagnostics(&s, &b);
        assert!(mm.laplacian_ok, "seed {seed}: {mm:?}");
        assert!(mm.max.height >= mm.min.height);
    }
}

#[test]
fn bracketing_holds_on_elliptic_graphs() {
    let f = torus(64);
    let w = linear();
    let u = f.sample(|x| 2.0 + 0.05 * x[0].sin() * x[1].cos());
    let s = build_graph(&f, &w, &u).unwrap();
    let b = curvature_bundle(&s, &shape_operator(&s)).unwrap();
    let mm = minmax_diagnostics(&s, &b);
    assert!(mm.bracket_ok, "{mm:?}");
    assert!(mm.bracket_lower_slack >= 0.0 && mm.bracket_upper_slack >= 0.0);
}
