//! Newton-Krylov solver for the prescribed constant `H_k` equation on
//! compact graphs, and the slice-uniqueness experiments built on it.

mod experiment;
mod krylov;

pub use experiment::{
    minmax_diagnostics, uniqueness_experiment, Extremum, HypothesisEvidence, MinMaxDiagnostics, RunReport,
    TheoremTag, UniquenessReport, UniquenessScenario, MINMAX_EPS_FACTOR,
};
pub use krylov::{gmres, GmresStats, SpectralPreconditioner};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fiber::Fiber;
use crate::hypersurface::mean_curvature_field;
use crate::linalg::norm_inf;
use crate::warping::WarpingFunction;

/// Relative step of the finite-difference Jacobian-vector product.
pub const JVP_STEP: f64 = 1e-7;
/// Halvings tried by the line search before giving up.
const MAX_HALVINGS: usize = 30;
/// Perturbation modes have integer wave numbers in `[-MAX_MODE, MAX_MODE]`.
pub const MAX_MODE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    pub k: usize,
    pub target: f64,
    pub tol_residual: f64,
    pub max_iter: usize,
    /// Initial step length; halved until the step is accepted.
    pub damping: f64,
    /// Iterates must satisfy `|Du|^2_P <= (1 - margin) rho^2(u)`.
    pub spacelike_margin: f64,
    /// Relative tolerance of each linear solve.
    pub linear_tol: f64,
    pub restart: usize,
}

impl SolveOptions {
    pub fn new(k: usize, target: f64) -> Self {
        Self {
            k,
            target,
            tol_residual: 1e-10,
            max_iter: 200,
            damping: 1.0,
            spacelike_margin: 1e-6,
            linear_tol: 1e-3,
            restart: 40,
        }
    }
}

/// Result of a successful solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveOutcome {
    #[serde(skip)]
    pub u: Vec<f64>,
    pub iterations: usize,
    /// Max-norm residual of `H_k[u] - target` before each step and at the end.
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
    pub converged: bool,
    pub linear_iterations: usize,
    pub mean_height: f64,
    /// `sup |u - mean u|`.
    pub slice_distance: f64,
}

/// `H_k` of the slice `{t0}`: `((log rho)'(t0))^k`.
pub fn slice_target(w: &WarpingFunction, t0: f64, k: usize) -> Result<f64> {
    let iv = w.interval();
    if !iv.contains(t0) {
        return Err(Error::OutOfInterval { t: t0, lo: iv.lo, hi: iv.hi });
    }
    Ok(w.log_d1(t0).powi(k as i32))
}

pub fn mean(u: &[f64]) -> f64 {
    u.iter().sum::<f64>() / u.len() as f64
}

/// `sup |u - mean u|`.
pub fn slice_distance(u: &[f64]) -> f64 {
    let m = mean(u);
    u.iter().map(|v| (v - m).abs()).fold(0.0, f64::max)
}

/// Smallest `1 - |Du|^2_P / rho^2(u)` over the grid, `None` outside the interval.
pub fn spacelike_gap(fiber: &Fiber, w: &WarpingFunction, u: &[f64]) -> Option<f64> {
    let iv = w.interval();
    if u.iter().any(|v| !iv.contains(*v)) {
        return None;
    }
    let n = fiber.n();
    let du = fiber.grid().gradient(u);
    let mut gap = f64::INFINITY;
    for (p, &t) in u.iter().enumerate() {
        let ginv = fiber.inverse_metric(p);
        let d = &du[p * n..(p + 1) * n];
        let mut sq = 0.0;
        for i in 0..n {
            for j in 0..n {
                sq += ginv[i * n + j] * d[i] * d[j];
            }
        }
        let r = w.rho(t);
        gap = gap.min(1.0 - sq / (r * r));
    }
    Some(gap)
}

/// Seeded perturbation `sum_m c_m cos(m.x + phi_m)` over wave vectors with
/// entries in `[-2, 2]`, scaled to sup norm `amplitude`.
pub fn perturbation(fiber: &Fiber, seed: u64, amplitude: f64) -> Vec<f64> {
    let n = fiber.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = (2 * MAX_MODE + 1) as usize;
    let mut modes = Vec::new();
    for code in 0..width.pow(n as u32) {
        let m: Vec<f64> = (0..n).map(|a| ((code / width.pow(a as u32)) % width) as f64 - MAX_MODE as f64).collect();
        if m.iter().all(|&v| v == 0.0) {
            continue;
        }
        let c: f64 = rng.random_range(-1.0..1.0);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        modes.push((m, c, phase));
    }
    let raw = fiber.grid().sample(|x| {
        modes.iter().map(|(m, c, ph)| c * (m.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + ph).cos()).sum()
    });
    let s = norm_inf(&raw);
    if s == 0.0 {
        return raw;
    }
    raw.iter().map(|v| v * amplitude / s).collect()
}

fn check_ellipticity(k: usize, iteration: usize, hk: &[f64]) -> Result<()> {
    if k < 2 {
        return Ok(());
    }
    if let Some((index, &value)) = hk.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)) {
        if !(value > 0.0) {
            return Err(Error::LostEllipticity { k, iteration, index, value });
        }
    }
    Ok(())
}

/// Damped Newton iteration on `H_k[u] - target` for a graph over a compact
/// fiber, with matrix-free GMRES preconditioned by the linearization at the
/// mean height `a Delta + b`, `a = k l^{k-1} / (n rho^2)`, `b = k l^{k-1} (log rho)''`.
/// Where `b` vanishes the Newton steps keep the mean height fixed.
pub fn solve_constant_hk(fiber: &Fiber, w: &WarpingFunction, u0: &[f64], opts: &SolveOptions) -> Result<SolveOutcome> {
    let n = fiber.n();
    let k = opts.k;
    if k < 1 || k > n {
        return Err(Error::BadParams(format!("k = {k} outside 1..={n}")));
    }
    if !fiber.is_compact() {
        return Err(Error::UnsupportedFiber(format!("{} (solver needs a compact fiber)", fiber.kind())));
    }
    if k >= 2 && !(opts.target > 0.0) {
        return Err(Error::BadParams(format!("target H_{k} = {} must be positive for k >= 2", opts.target)));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::BadParams(format!("damping {} outside (0, 1]", opts.damping)));
    }
    if u0.len() != fiber.len() {
        return Err(Error::ShapeMismatch { expected: fiber.grid().shape(), found: vec![u0.len()] });
    }
    let margin = opts.spacelike_margin;
    match spacelike_gap(fiber, w, u0) {
        None => {
            let (index, &value) = u0.iter().enumerate().find(|(_, v)| !w.interval().contains(**v)).expect("outside");
            return Err(Error::HeightOutOfInterval { index, value });
        }
        Some(g) if g < margin => {
            return Err(Error::BadParams(format!("initial graph violates the spacelike margin (gap {g:e})")));
        }
        _ => {}
    }
    let residual = |u: &[f64]| -> Result<Vec<f64>> {
        Ok(mean_curvature_field(fiber, w, u, k)?.into_iter().map(|h| h - opts.target).collect())
    };

    let mut u = u0.to_vec();
    let mut f = residual(&u)?;
    check_ellipticity(k, 0, &f.iter().map(|r| r + opts.target).collect::<Vec<_>>())?;
    let mut fnorm = norm_inf(&f);
    let mut history = vec![fnorm];
    let mut linear_iterations = 0;
    let mut iterations = 0;
    while fnorm > opts.tol_residual {
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence { iterations, last: fnorm, residual_history: history });
        }
        iterations += 1;
        let tbar = mean(&u);
        let l = w.log_d1(tbar);
        let r = w.rho(tbar);
        let slope = k as f64 * l.powi(k as i32 - 1);
        let a = slope / (n as f64 * r * r);
        let mut b = slope * w.log_d2(tbar);
        // every nearby slice solves the problem: pin the mean height and
        // solve the linearization on mean-free functions
        let pin_mean = b.abs() <= 1e-8 * a.abs();
        // without a negative mass the symbol can vanish; shift it away
        if !(b < -1e-8 * a.abs()) {
            b = -a.abs();
        }
        let pre = SpectralPreconditioner::new(fiber.grid(), a, b);
        let precond = |v: &[f64]| {
            let mut z = pre.apply(v);
            if pin_mean {
                let m = mean(&z);
                z.iter_mut().for_each(|x| *x -= m);
            }
            z
        };
        let unorm = norm_inf(&u);
        let jvp = |v: &[f64]| -> Vec<f64> {
            let vn = norm_inf(v);
            if vn == 0.0 {
                return vec![0.0; v.len()];
            }
            let eps = JVP_STEP * (1.0 + unorm) / vn;
            let up: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + eps * b).collect();
            match residual(&up) {
                Ok(fp) => {
                    let mut jv: Vec<f64> = fp.iter().zip(&f).map(|(x, y)| (x - y) / eps).collect();
                    if pin_mean {
                        let m = mean(&jv);
                        jv.iter_mut().for_each(|x| *x -= m);
                    }
                    jv
                }
                Err(_) => vec![f64::NAN; v.len()],
            }
        };
        let mut rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        if pin_mean {
            let m = mean(&rhs);
            rhs.iter_mut().for_each(|x| *x -= m);
        }
        let (du, stats) = gmres(jvp, precond, &rhs, opts.linear_tol, opts.restart, 4 * opts.restart);
        linear_iterations += stats.iterations;
        if du.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonConvergence { iterations, last: fnorm, residual_history: history });
        }

        let mut step = opts.damping;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + step * b).collect();
            if matches!(spacelike_gap(fiber, w, &trial), Some(g) if g >= margin) {
                if let Ok(ft) = residual(&trial) {
                    let tn = norm_inf(&ft);
                    if tn < fnorm {
                        accepted = Some((trial, ft, tn));
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        let Some((un, fnew, nn)) = accepted else {
            return Err(Error::NonConvergence { iterations, last: fnorm, residual_history: history });
        };
        check_ellipticity(k, iterations, &fnew.iter().map(|r| r + opts.target).collect::<Vec<_>>())?;
        u = un;
        f = fnew;
        fnorm = nn;
        history.push(fnorm);
    }
    let mean_height = mean(&u);
    Ok(SolveOutcome {
        slice_distance: slice_distance(&u),
        u,
        iterations,
        residual_history: history,
        final_residual: fnorm,
        converged: true,
        linear_iterations,
        mean_height,
    })
}
