//! Warping functions `rho: I -> (0, inf)` of a Lorentzian warped product
//! `-I x_rho P^n`, their derivatives and the antiderivative `sigma`, plus the
//! curvature-condition predicates evaluated on time slabs.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{adaptive_simpson, golden_max, linspace};

/// Absolute tolerance for the truth of sampled predicates.
pub const PREDICATE_TOL: f64 = 1e-12;

/// Minimum number of samples used by [`check_conditions`].
pub const CONDITION_SAMPLES: usize = 4097;

/// Window used to sample unbounded intervals.
const UNBOUNDED_WINDOW: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WarpingKind {
    /// `rho = c * exp(a t)`; params `[a, c]`, defaults `[1, 1]`.
    Exp,
    /// `rho = c * cosh(a t)`; params `[a, c]`, defaults `[1, 1]`.
    Cosh,
    /// `rho = a t + b`; params `[a, b]`, defaults `[1, 0]`.
    Linear,
    /// `rho = c * t^p`; params `[p, c]`, `c` defaults to 1. Needs `I` in `(0, inf)`.
    Power,
    /// Natural cubic spline through `(t, rho)` samples.
    Tabulated,
}

impl FromStr for WarpingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exp" => Ok(Self::Exp),
            "cosh" => Ok(Self::Cosh),
            "linear" => Ok(Self::Linear),
            "power" => Ok(Self::Power),
            "tabulated" => Ok(Self::Tabulated),
            other => Err(Error::BadParams(format!("unknown warping kind '{other}'"))),
        }
    }
}

impl fmt::Display for WarpingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Exp => "exp",
            Self::Cosh => "cosh",
            Self::Linear => "linear",
            Self::Power => "power",
            Self::Tabulated => "tabulated",
        };
        f.write_str(s)
    }
}

/// Closed or half-open time interval; endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::BadParams(format!("empty interval ({lo}, {hi})")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.contains(other.lo) && self.contains(other.hi)
    }

    /// Finite window used for sampling.
    pub fn sampling_window(&self) -> (f64, f64) {
        let lo = if self.lo.is_finite() { self.lo } else { (-UNBOUNDED_WINDOW).min(self.hi - 1.0) };
        let hi = if self.hi.is_finite() { self.hi } else { UNBOUNDED_WINDOW.max(lo + 1.0) };
        (lo, hi)
    }
}

/// Natural cubic spline; used for tabulated warping functions.
#[derive(Debug, Clone, PartialEq)]
struct CubicSpline {
    ts: Vec<f64>,
    ys: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    fn new(ts: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = ts.len();
        if n < 4 || ys.len() != n {
            return Err(Error::BadParams("tabulated warping needs at least 4 (t, rho) rows".into()));
        }
        if ts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::BadParams("tabulated t values must be strictly increasing".into()));
        }
        // tridiagonal solve for interior second derivatives, natural ends
        let mut m = vec![0.0; n];
        let mut c_prime = vec![0.0; n];
        let mut d_prime = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = ts[i] - ts[i - 1];
            let h1 = ts[i + 1] - ts[i];
            let a = h0;
            let b = 2.0 * (h0 + h1);
            let c = h1;
            let d = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
            let denom = b - a * c_prime[i - 1];
            c_prime[i] = c / denom;
            d_prime[i] = (d - a * d_prime[i - 1]) / denom;
        }
        for i in (1..n - 1).rev() {
            m[i] = d_prime[i] - c_prime[i] * m[i + 1];
        }
        Ok(Self { ts, ys, m })
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.ts.len();
        match self.ts.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    /// Value, first and second derivative.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let i = self.segment(t);
        let (t0, t1) = (self.ts[i], self.ts[i + 1]);
        let h = t1 - t0;
        let a = (t1 - t) / h;
        let b = (t - t0) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let y = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let dy = (y1 - y0) / h - (3.0 * a * a - 1.0) / 6.0 * h * m0 + (3.0 * b * b - 1.0) / 6.0 * h * m1;
        let d2y = a * m0 + b * m1;
        (y, dy, d2y)
    }
}

/// A positive warping function with its derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpingFunction {
    kind: WarpingKind,
    params: Vec<f64>,
    interval: Interval,
    spline: Option<CubicSpline>,
}

/// Build a warping function of an analytic kind, validating parameters and
/// positivity on a sampling of the interval.
pub fn make_warping(kind: WarpingKind, params: &[f64], interval: Interval) -> Result<WarpingFunction> {
    if kind == WarpingKind::Tabulated {
        return Err(Error::BadParams("use make_tabulated_warping for tabulated data".into()));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::BadParams("non-finite parameter".into()));
    }
    let full = match kind {
        WarpingKind::Exp | WarpingKind::Cosh => match params {
            [] => vec![1.0, 1.0],
            [a] => vec![*a, 1.0],
            [a, c] => vec![*a, *c],
            _ => return Err(Error::BadParams(format!("{kind} takes at most 2 parameters"))),
        },
        WarpingKind::Linear => match params {
            [] => vec![1.0, 0.0],
            [a] => vec![*a, 0.0],
            [a, b] => vec![*a, *b],
            _ => return Err(Error::BadParams("linear takes at most 2 parameters".into())),
        },
        WarpingKind::Power => match params {
            [p] => vec![*p, 1.0],
            [p, c] => vec![*p, *c],
            _ => return Err(Error::BadParams("power takes [exponent] or [exponent, scale]".into())),
        },
        WarpingKind::Tabulated => unreachable!(),
    };
    match kind {
        WarpingKind::Exp | WarpingKind::Cosh | WarpingKind::Power if full[1] <= 0.0 => {
            return Err(Error::BadParams(format!("{kind} scale must be positive")));
        }
        WarpingKind::Linear if full[0] == 0.0 && full[1] <= 0.0 => {
            return Err(Error::NonPositiveWarp { t: interval.lo, value: full[1] });
        }
        WarpingKind::Power if interval.lo < 0.0 => {
            return Err(Error::BadParams("power warping needs an interval inside (0, inf)".into()));
        }
        _ => {}
    }
    let w = WarpingFunction { kind, params: full, interval, spline: None };
    w.validate_positive()?;
    Ok(w)
}

/// Build a tabulated warping function from strictly increasing `ts`.
pub fn make_tabulated_warping(ts: Vec<f64>, rhos: Vec<f64>) -> Result<WarpingFunction> {
    if let Some((t, r)) = ts.iter().zip(&rhos).find(|(_, r)| **r <= 0.0 || !r.is_finite()) {
        return Err(Error::NonPositiveWarp { t: *t, value: *r });
    }
    let interval = Interval::new(ts[0], *ts.last().unwrap_or(&ts[0]))?;
    let spline = CubicSpline::new(ts, rhos)?;
    let w = WarpingFunction { kind: WarpingKind::Tabulated, params: Vec::new(), interval, spline: Some(spline) };
    w.validate_positive()?;
    Ok(w)
}

impl WarpingFunction {
    pub fn kind(&self) -> WarpingKind {
        self.kind
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    fn validate_positive(&self) -> Result<()> {
        let (lo, hi) = self.interval.sampling_window();
        for t in linspace(lo, hi, 1001) {
            let v = self.rho(t);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveWarp { t, value: v });
            }
        }
        Ok(())
    }

    /// `(rho, rho', rho'')` at `t`.
    pub fn derivatives(&self, t: f64) -> (f64, f64, f64) {
        let p = &self.params;
        match self.kind {
            WarpingKind::Exp => {
                let (a, c) = (p[0], p[1]);
                let e = c * (a * t).exp();
                (e, a * e, a * a * e)
            }
            WarpingKind::Cosh => {
                let (a, c) = (p[0], p[1]);
                let (s, ch) = ((a * t).sinh(), (a * t).cosh());
                (c * ch, c * a * s, c * a * a * ch)
            }
            WarpingKind::Linear => (p[0] * t + p[1], p[0], 0.0),
            WarpingKind::Power => {
                let (q, c) = (p[0], p[1]);
                let v = c * t.powf(q);
                (v, q * v / t, q * (q - 1.0) * v / (t * t))
            }
            WarpingKind::Tabulated => self.spline.as_ref().expect("tabulated spline").eval(t),
        }
    }

    pub fn rho(&self, t: f64) -> f64 {
        self.derivatives(t).0
    }

    pub fn rho_prime(&self, t: f64) -> f64 {
        self.derivatives(t).1
    }

    pub fn rho_second(&self, t: f64) -> f64 {
        self.derivatives(t).2
    }

    /// `(log rho)'`.
    pub fn log_d1(&self, t: f64) -> f64 {
        let p = &self.params;
        match self.kind {
            WarpingKind::Exp => p[0],
            WarpingKind::Cosh => p[0] * (p[0] * t).tanh(),
            WarpingKind::Linear => p[0] / (p[0] * t + p[1]),
            WarpingKind::Power => p[0] / t,
            WarpingKind::Tabulated => {
                let (r, d, _) = self.derivatives(t);
                d / r
            }
        }
    }

    /// `(log rho)''`.
    pub fn log_d2(&self, t: f64) -> f64 {
        let p = &self.params;
        match self.kind {
            WarpingKind::Exp => 0.0,
            WarpingKind::Cosh => {
                let ch = (p[0] * t).cosh();
                p[0] * p[0] / (ch * ch)
            }
            WarpingKind::Linear => {
                let r = p[0] * t + p[1];
                -(p[0] * p[0]) / (r * r)
            }
            WarpingKind::Power => -p[0] / (t * t),
            WarpingKind::Tabulated => {
                let (r, d, dd) = self.derivatives(t);
                dd / r - (d / r) * (d / r)
            }
        }
    }

    /// `sigma(t) = int_{t0}^{t} rho(r) dr`.
    pub fn sigma(&self, t: f64, t0: f64) -> Result<f64> {
        for s in [t, t0] {
            if !self.interval.contains(s) {
                return Err(Error::OutOfInterval { t: s, lo: self.interval.lo, hi: self.interval.hi });
            }
        }
        Ok(self.sigma_unchecked(t, t0))
    }

    pub(crate) fn sigma_unchecked(&self, t: f64, t0: f64) -> f64 {
        if t == t0 {
            return 0.0;
        }
        let p = &self.params;
        match self.kind {
            WarpingKind::Exp => {
                let (a, c) = (p[0], p[1]);
                if a == 0.0 {
                    c * (t - t0)
                } else {
                    c * ((a * t).exp() - (a * t0).exp()) / a
                }
            }
            WarpingKind::Cosh => {
                let (a, c) = (p[0], p[1]);
                if a == 0.0 {
                    c * (t - t0)
                } else {
                    c * ((a * t).sinh() - (a * t0).sinh()) / a
                }
            }
            WarpingKind::Linear => 0.5 * p[0] * (t * t - t0 * t0) + p[1] * (t - t0),
            WarpingKind::Power => {
                let (q, c) = (p[0], p[1]);
                if (q + 1.0).abs() < 1e-14 {
                    c * (t / t0).ln()
                } else {
                    c * (t.powf(q + 1.0) - t0.powf(q + 1.0)) / (q + 1.0)
                }
            }
            WarpingKind::Tabulated => {
                let f = |s: f64| self.rho(s);
                let (a, b, sign) = if t >= t0 { (t0, t, 1.0) } else { (t, t0, -1.0) };
                // integrate knot by knot so each panel is a single cubic
                let spline = self.spline.as_ref().expect("tabulated spline");
                let mut acc = 0.0;
                let mut left = a;
                for &knot in spline.ts.iter().filter(|&&k| k > a && k < b) {
                    acc += adaptive_simpson(&f, left, knot, 1e-12);
                    left = knot;
                }
                acc += adaptive_simpson(&f, left, b, 1e-12);
                sign * acc
            }
        }
    }
}

/// Tri-state (plus failure) classification of `(log rho)'' <= 0` on a slab.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LogConcavity {
    /// `(log rho)'' < 0` everywhere on the slab.
    Strict,
    /// `(log rho)'' <= 0` with equality only at isolated points.
    IsolatedEquality,
    /// `(log rho)'' <= 0` with equality on a set with interior.
    InteriorEquality,
    /// `(log rho)'' > 0` somewhere.
    Fails,
}

impl LogConcavity {
    pub fn holds(self) -> bool {
        self != LogConcavity::Fails
    }
}

/// Curvature conditions of the warped product on a time slab.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub slab: Interval,
    pub kappa: f64,
    pub n: usize,
    pub logconcave: LogConcavity,
    /// Point where `(log rho)''` is largest; the failure witness when `logconcave = fails`.
    pub witness: f64,
    pub max_log_d2: f64,
    /// Points (or plateau starts) where `(log rho)''` vanishes.
    pub equality_points: Vec<f64>,
    /// `rho'' <= 0` on the slab.
    pub tcc_rho: bool,
    /// `sup (log rho)'' rho^2` over the slab.
    pub sup_logrho2: f64,
    /// `(n - 1) sup (log rho)'' rho^2`, the Ricci lower bound the fiber must meet.
    pub ncc_threshold: f64,
    /// `Ric_P >= ncc_threshold` (constant curvature fiber: `kappa >= sup`).
    pub ncc: bool,
    pub strict_ncc: bool,
    /// Both timelike-convergence conditions: the Ricci bound and `rho'' <= 0`.
    pub tcc: bool,
    pub rho_prime_nonvanishing: bool,
    pub rho_prime_constant_sign: bool,
    /// Sign of `rho'` on the slab when it does not change sign (0 otherwise).
    pub rho_prime_sign: i8,
    pub notes: Vec<String>,
}

/// Local maxima of sampled values, refined by golden-section search.
fn refined_max<F: Fn(f64) -> f64>(f: &F, ts: &[f64], vals: &[f64]) -> (f64, f64) {
    let mut best = (ts[0], vals[0]);
    for (i, (&t, &v)) in ts.iter().zip(vals).enumerate() {
        if v > best.1 {
            best = (t, v);
        }
        let left = if i > 0 { vals[i - 1] } else { f64::NEG_INFINITY };
        let right = if i + 1 < vals.len() { vals[i + 1] } else { f64::NEG_INFINITY };
        if v >= left && v >= right && v > f64::NEG_INFINITY {
            let a = ts[i.saturating_sub(1)];
            let b = ts[(i + 1).min(ts.len() - 1)];
            if b > a {
                let cand = golden_max(f, a, b, 60);
                if cand.1 > best.1 {
                    best = cand;
                }
            }
        }
    }
    best
}

/// Evaluate log-concavity, TCC, NCC and the sign of `rho'` on `slab`.
pub fn check_conditions(w: &WarpingFunction, slab: Interval, fiber_kappa: f64, n: usize) -> Result<ConditionReport> {
    if !w.interval.contains_interval(&slab) || !slab.lo.is_finite() || !slab.hi.is_finite() {
        return Err(Error::OutOfInterval {
            t: if w.interval.contains(slab.lo) { slab.hi } else { slab.lo },
            lo: w.interval.lo,
            hi: w.interval.hi,
        });
    }
    let tol = PREDICATE_TOL;
    let ts = linspace(slab.lo, slab.hi, CONDITION_SAMPLES);
    let ld2: Vec<f64> = ts.iter().map(|&t| w.log_d2(t)).collect();
    let f_ld2 = |t: f64| w.log_d2(t);
    let (witness, max_log_d2) = refined_max(&f_ld2, &ts, &ld2);
    let mut notes = Vec::new();

    let mut equality_points = Vec::new();
    let logconcave = if max_log_d2 > tol {
        notes.push(format!("(log rho)'' = {max_log_d2:.6e} > 0 at t = {witness:.6}"));
        LogConcavity::Fails
    } else {
        let mut longest_run = 0usize;
        let mut run = 0usize;
        for (i, &v) in ld2.iter().enumerate() {
            if v >= -tol {
                if run == 0 {
                    equality_points.push(ts[i]);
                }
                run += 1;
                longest_run = longest_run.max(run);
            } else {
                run = 0;
            }
        }
        if max_log_d2 >= -tol && equality_points.is_empty() {
            equality_points.push(witness);
        }
        // a plateau spanning more than two cells counts as interior equality
        if longest_run > 3 {
            LogConcavity::InteriorEquality
        } else if !equality_points.is_empty() {
            LogConcavity::IsolatedEquality
        } else {
            LogConcavity::Strict
        }
    };

    let tcc_rho = {
        let vals: Vec<f64> = ts.iter().map(|&t| w.rho_second(t)).collect();
        let f = |t: f64| w.rho_second(t);
        refined_max(&f, &ts, &vals).1 <= tol
    };

    let g = |t: f64| {
        let r = w.rho(t);
        w.log_d2(t) * r * r
    };
    let gv: Vec<f64> = ts.iter().map(|&t| g(t)).collect();
    let (_, sup_logrho2) = refined_max(&g, &ts, &gv);
    let nm1 = n.saturating_sub(1) as f64;
    let ncc_threshold = nm1 * sup_logrho2;
    let ric = nm1 * fiber_kappa;
    let ncc = ric >= ncc_threshold - tol;
    let strict_ncc = ric > ncc_threshold + tol;

    let dp: Vec<f64> = ts.iter().map(|&t| w.rho_prime(t)).collect();
    let all_pos = dp.iter().all(|&v| v > tol);
    let all_neg = dp.iter().all(|&v| v < -tol);
    let nonneg = dp.iter().all(|&v| v >= -tol);
    let nonpos = dp.iter().all(|&v| v <= tol);
    let rho_prime_nonvanishing = all_pos || all_neg;
    let rho_prime_constant_sign = nonneg || nonpos;
    let rho_prime_sign = if nonneg && !nonpos {
        1
    } else if nonpos && !nonneg {
        -1
    } else {
        0
    };
    if !rho_prime_nonvanishing && rho_prime_constant_sign {
        notes.push("rho' vanishes on the slab without changing sign".into());
    }

    Ok(ConditionReport {
        slab,
        kappa: fiber_kappa,
        n,
        logconcave,
        witness,
        max_log_d2,
        equality_points,
        tcc_rho,
        sup_logrho2,
        ncc_threshold,
        ncc,
        strict_ncc,
        tcc: ncc && tcc_rho,
        rho_prime_nonvanishing,
        rho_prime_constant_sign,
        rho_prime_sign,
        notes,
    })
}
