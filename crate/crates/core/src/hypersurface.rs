//! Spacelike graphs `{(u(x), x)}` in `-I x_rho P^n` and their first- and
//! second-order invariants.
//!
//! Conventions: the unit normal `N` is future pointing, so `Theta = <N, T> <= -1`;
//! the shape operator is `A = -nabla N`, which makes slices with `rho' > 0`
//! have negative principal curvatures; `C(n,k) H_k = (-1)^k S_k`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fiber::{Fiber, ScalarField, TensorField};
use crate::linalg;
use crate::numeric::{binomial, newton_trace_coefficient};
use crate::warping::WarpingFunction;

/// Relative spacelike margin below which a graph is rejected.
pub const SPACELIKE_MARGIN: f64 = 1e-12;
/// Principal curvatures below `-ELLIPTIC_TOL` mark elliptic points.
pub const ELLIPTIC_TOL: f64 = 1e-10;
/// Largest accepted condition number of the induced metric.
pub const MAX_CONDITION: f64 = 1e8;

/// A spacelike graph with its pointwise first-order data.
#[derive(Debug, Clone)]
pub struct GraphHypersurface<'a> {
    fiber: &'a Fiber,
    warping: &'a WarpingFunction,
    pub u: Vec<f64>,
    /// Coordinate gradient of `u`, `n` per point.
    pub du: Vec<f64>,
    /// Coordinate second derivatives of `u`, `n^2` per point.
    pub d2u: Vec<f64>,
    pub rho: Vec<f64>,
    pub rho_p: Vec<f64>,
    pub rho_pp: Vec<f64>,
    pub log_d1: Vec<f64>,
    pub log_d2: Vec<f64>,
    /// `|Du|^2_P`.
    pub du_sq: Vec<f64>,
    /// Induced metric `rho^2(u) g_P - du (x) du`, `n^2` per point.
    pub metric: Vec<f64>,
    pub metric_inv: Vec<f64>,
    pub theta: Vec<f64>,
    /// Induced gradient of the height, contravariant components.
    pub grad_h: Vec<f64>,
    pub sigma_h: Vec<f64>,
    /// Base point of `sigma`.
    pub sigma_origin: f64,
    /// `(min u, max u)`.
    pub slab: (f64, f64),
    /// Levi-Civita connection of the induced metric, `Gamma^k_ij` per point.
    pub connection: Vec<f64>,
}

/// Per-point first-order quantities shared by the full builder and the
/// fast `H_k` evaluator.
struct PointData {
    rho: f64,
    rho_p: f64,
    du_sq: f64,
    metric: Vec<f64>,
    metric_inv: Vec<f64>,
    alpha: f64,
}

fn point_data(fiber: &Fiber, w: &WarpingFunction, p: usize, u: f64, du: &[f64]) -> Result<PointData> {
    let n = fiber.n();
    let gp = fiber.metric(p);
    let gpi = fiber.inverse_metric(p);
    let (rho, rho_p, _) = w.derivatives(u);
    let mut du_sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            du_sq += gpi[i * n + j] * du[i] * du[j];
        }
    }
    let rho_sq = rho * rho;
    let gap = rho_sq - du_sq;
    if !(gap > SPACELIKE_MARGIN * rho_sq) {
        return Err(Error::NotSpacelike { index: p, gap, rho_sq });
    }
    let mut metric = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            metric[i * n + j] = rho_sq * gp[i * n + j] - du[i] * du[j];
        }
    }
    let metric_inv = linalg::inverse(n, &metric).ok_or(Error::EigenFailure { index: p, condition: f64::INFINITY })?;
    let alpha = rho / gap.sqrt();
    Ok(PointData { rho, rho_p, du_sq, metric, metric_inv, alpha })
}

/// Second fundamental form `II_ij = <N, nabla_{E_i} E_j>` in graph coordinates.
fn second_form(fiber: &Fiber, p: usize, pd: &PointData, du: &[f64], d2u: &[f64]) -> Vec<f64> {
    let n = fiber.n();
    let gp = fiber.metric(p);
    let gam = fiber.christoffel(p);
    let mut ii = vec![0.0; n * n];
    let rr = pd.rho * pd.rho_p;
    let lr = pd.rho_p / pd.rho;
    for i in 0..n {
        for j in 0..n {
            let corr: f64 = (0..n).map(|k| gam[k * n * n + i * n + j] * du[k]).sum();
            let hess_p = d2u[i * n + j] - corr;
            ii[i * n + j] = -pd.alpha * (hess_p + rr * gp[i * n + j] - 2.0 * lr * du[i] * du[j]);
        }
    }
    linalg::symmetrize(n, &mut ii);
    ii
}

/// Build the graph of `u` and its first-order data.
pub fn build_graph<'a>(fiber: &'a Fiber, w: &'a WarpingFunction, u: &ScalarField) -> Result<GraphHypersurface<'a>> {
    fiber.check_field(u)?;
    let interval = w.interval();
    if let Some((index, &value)) = u.values.iter().enumerate().find(|(_, v)| !interval.contains(**v)) {
        return Err(Error::HeightOutOfInterval { index, value });
    }
    let n = fiber.n();
    let len = fiber.len();
    let grid = fiber.grid();
    let (du, d2u) = grid.derivatives(&u.values);

    let mut out_rho = Vec::with_capacity(len);
    let mut out_rho_p = Vec::with_capacity(len);
    let mut out_rho_pp = Vec::with_capacity(len);
    let mut log_d1 = Vec::with_capacity(len);
    let mut log_d2 = Vec::with_capacity(len);
    let mut du_sq = Vec::with_capacity(len);
    let mut metric = Vec::with_capacity(len * n * n);
    let mut metric_inv = Vec::with_capacity(len * n * n);
    let mut theta = Vec::with_capacity(len);
    let mut grad_h = Vec::with_capacity(len * n);

    // report the worst spacelike violation rather than the first
    let mut worst: Option<Error> = None;
    let mut worst_ratio = f64::INFINITY;
    for p in 0..len {
        let dup = &du[p * n..(p + 1) * n];
        match point_data(fiber, w, p, u.values[p], dup) {
            Ok(pd) => {
                out_rho.push(pd.rho);
                out_rho_p.push(pd.rho_p);
                out_rho_pp.push(w.rho_second(u.values[p]));
                log_d1.push(w.log_d1(u.values[p]));
                log_d2.push(w.log_d2(u.values[p]));
                du_sq.push(pd.du_sq);
                theta.push(-pd.alpha);
                grad_h.extend(linalg::matvec(n, &pd.metric_inv, dup));
                metric.extend_from_slice(&pd.metric);
                metric_inv.extend_from_slice(&pd.metric_inv);
            }
            Err(Error::NotSpacelike { index, gap, rho_sq }) => {
                if gap / rho_sq < worst_ratio {
                    worst_ratio = gap / rho_sq;
                    worst = Some(Error::NotSpacelike { index, gap, rho_sq });
                }
            }
            Err(e) => return Err(e),
        }
    }
    if let Some(e) = worst {
        return Err(e);
    }

    let lo = u.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = u.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sigma_h = u.values.iter().map(|&t| w.sigma_unchecked(t, lo)).collect();
    let connection = induced_connection(fiber, &out_rho, &out_rho_p, &du, &d2u, &metric_inv);
    Ok(GraphHypersurface {
        fiber,
        warping: w,
        u: u.values.clone(),
        du,
        d2u,
        rho: out_rho,
        rho_p: out_rho_p,
        rho_pp: out_rho_pp,
        log_d1,
        log_d2,
        du_sq,
        metric,
        metric_inv,
        theta,
        grad_h,
        sigma_h,
        sigma_origin: lo,
        slab: (lo, hi),
        connection,
    })
}

/// Christoffel symbols of `g = rho^2(u) g_P - du (x) du` from the chain rule
/// `d_k g_ij = 2 rho rho' u_k gP_ij + rho^2 d_k gP_ij - u_ik u_j - u_i u_jk`.
fn induced_connection(
    fiber: &Fiber,
    rho: &[f64],
    rho_p: &[f64],
    du: &[f64],
    d2u: &[f64],
    metric_inv: &[f64],
) -> Vec<f64> {
    let n = fiber.n();
    let len = fiber.len();
    let n2 = n * n;
    let n3 = n2 * n;
    let mut out = vec![0.0; len * n3];
    let mut dg = vec![0.0; n3];
    for p in 0..len {
        let gp = fiber.metric(p);
        let gam = fiber.christoffel(p);
        let ui = &du[p * n..(p + 1) * n];
        let uij = &d2u[p * n2..(p + 1) * n2];
        let (r, rp) = (rho[p], rho_p[p]);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    // metric compatibility of the fiber connection gives d_k gP
                    let mut dgp = 0.0;
                    for l in 0..n {
                        dgp += gam[l * n2 + k * n + i] * gp[l * n + j] + gam[l * n2 + k * n + j] * gp[i * n + l];
                    }
                    dg[k * n2 + i * n + j] = 2.0 * r * rp * ui[k] * gp[i * n + j] + r * r * dgp
                        - uij[i * n + k] * ui[j]
                        - ui[i] * uij[j * n + k];
                }
            }
        }
        let ginv = &metric_inv[p * n2..(p + 1) * n2];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut v = 0.0;
                    for l in 0..n {
                        v += ginv[k * n + l] * (dg[i * n2 + l * n + j] + dg[j * n2 + i * n + l] - dg[l * n2 + i * n + j]);
                    }
                    out[p * n3 + k * n2 + i * n + j] = 0.5 * v;
                }
            }
        }
    }
    out
}

impl<'a> GraphHypersurface<'a> {
    pub fn fiber(&self) -> &'a Fiber {
        self.fiber
    }

    pub fn warping(&self) -> &'a WarpingFunction {
        self.warping
    }

    pub fn n(&self) -> usize {
        self.fiber.n()
    }

    pub fn len(&self) -> usize {
        self.fiber.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fiber.is_empty()
    }

    pub fn metric_at(&self, p: usize) -> &[f64] {
        let m = self.n() * self.n();
        &self.metric[p * m..(p + 1) * m]
    }

    pub fn metric_inv_at(&self, p: usize) -> &[f64] {
        let m = self.n() * self.n();
        &self.metric_inv[p * m..(p + 1) * m]
    }

    pub fn grad_h_at(&self, p: usize) -> &[f64] {
        &self.grad_h[p * self.n()..(p + 1) * self.n()]
    }

    /// `Theta_hat = rho(h) Theta`.
    pub fn theta_hat(&self) -> Vec<f64> {
        self.rho.iter().zip(&self.theta).map(|(r, t)| r * t).collect()
    }

    /// Induced inner product of two contravariant vectors at `p`.
    pub fn inner(&self, p: usize, x: &[f64], y: &[f64]) -> f64 {
        let n = self.n();
        let g = self.metric_at(p);
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += x[i] * g[i * n + j] * y[j];
            }
        }
        acc
    }

    /// `||grad h||^2` from the induced metric.
    pub fn grad_h_sq(&self) -> Vec<f64> {
        (0..self.len()).map(|p| self.inner(p, self.grad_h_at(p), self.grad_h_at(p))).collect()
    }

    /// Induced gradient (contravariant) of a scalar field.
    pub fn gradient(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n();
        let df = self.fiber.grid().gradient(f);
        let mut out = Vec::with_capacity(f.len() * n);
        for p in 0..self.len() {
            out.extend(linalg::matvec(n, self.metric_inv_at(p), &df[p * n..(p + 1) * n]));
        }
        out
    }

    /// Covariant induced Hessian `d_ij f - Gamma^k_ij d_k f`, symmetrized.
    pub fn hessian(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n();
        let (n2, n3) = (n * n, n * n * n);
        let (d1, d2) = self.fiber.grid().derivatives(f);
        let mut out = vec![0.0; self.len() * n2];
        for p in 0..self.len() {
            let gam = &self.connection[p * n3..(p + 1) * n3];
            for i in 0..n {
                for j in 0..n {
                    let corr: f64 = (0..n).map(|k| gam[k * n2 + i * n + j] * d1[p * n + k]).sum();
                    out[p * n2 + i * n + j] = d2[p * n2 + i * n + j] - corr;
                }
            }
            linalg::symmetrize(n, &mut out[p * n2..(p + 1) * n2]);
        }
        out
    }

    /// Ambient coordinates `(t, x)` of the tangent vector `sum_i v^i E_i`.
    pub fn ambient_tangent(&self, p: usize, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n + 1];
        out[0] = (0..n).map(|i| v[i] * self.du[p * n + i]).sum();
        out[1..].copy_from_slice(&v[..n]);
        out
    }

    /// Ambient coordinates of the future-pointing unit normal.
    pub fn ambient_normal(&self, p: usize) -> Vec<f64> {
        let n = self.n();
        let alpha = -self.theta[p];
        let gpi = self.fiber.inverse_metric(p);
        let r2 = self.rho[p] * self.rho[p];
        let mut out = vec![alpha; n + 1];
        let raised = linalg::matvec(n, gpi, &self.du[p * n..(p + 1) * n]);
        for i in 0..n {
            out[i + 1] = alpha * raised[i] / r2;
        }
        out
    }

    /// Lorentzian inner product of ambient vectors at grid point `p`.
    pub fn ambient_inner(&self, p: usize, a: &[f64], b: &[f64]) -> f64 {
        let n = self.n();
        let gp = self.fiber.metric(p);
        let r2 = self.rho[p] * self.rho[p];
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += a[i + 1] * gp[i * n + j] * b[j + 1];
            }
        }
        -a[0] * b[0] + r2 * acc
    }

    /// Columns of `L^{-T}` with `g = L L^T`: an orthonormal tangent frame, in
    /// graph coordinates, `n^2` per point (column `a` is frame vector `a`).
    pub fn orthonormal_frame(&self, p: usize) -> Result<Vec<f64>> {
        let n = self.n();
        let l = linalg::cholesky(n, self.metric_at(p)).ok_or(Error::EigenFailure { index: p, condition: f64::INFINITY })?;
        Ok(linalg::transpose(n, &linalg::lower_inverse(n, &l)))
    }
}

/// The shape operator `A` (mixed components `A^i_j`) of a graph.
pub fn shape_operator(s: &GraphHypersurface) -> TensorField {
    let fiber = s.fiber;
    let n = fiber.n();
    let n2 = n * n;
    let mut values = Vec::with_capacity(s.len() * n2);
    for p in 0..s.len() {
        let pd = PointData {
            rho: s.rho[p],
            rho_p: s.rho_p[p],
            du_sq: s.du_sq[p],
            metric: s.metric_at(p).to_vec(),
            metric_inv: s.metric_inv_at(p).to_vec(),
            alpha: -s.theta[p],
        };
        let ii = second_form(fiber, p, &pd, &s.du[p * n..(p + 1) * n], &s.d2u[p * n2..(p + 1) * n2]);
        values.extend(linalg::matmul(n, &pd.metric_inv, &ii));
    }
    TensorField { shape: fiber.grid().shape(), boundary: fiber.boundary(), dim: n, values }
}

/// Second-order invariants of a graph.
#[derive(Debug, Clone, Serialize)]
pub struct CurvatureBundle {
    pub n: usize,
    /// Shape operator, mixed components, `n^2` per point.
    pub a: Vec<f64>,
    /// Shape operator in the orthonormal frame `L^T A L^{-T}`, symmetric.
    pub a_frame: Vec<f64>,
    /// Principal curvatures, ascending, `n` per point.
    pub principal: Vec<f64>,
    /// `S_0..S_n`, `n + 1` per point.
    pub s: Vec<f64>,
    /// `H_0..H_n`, `n + 1` per point.
    pub h: Vec<f64>,
    /// Newton tensors `P_0..P_n` (mixed), each `n^2` per point.
    pub p: Vec<Vec<f64>>,
    /// `c_k = (n - k) C(n, k)` for `k = 0..=n`.
    pub c: Vec<f64>,
    pub elliptic_mask: Vec<bool>,
    pub norm_a_sq: Vec<f64>,
    /// Largest `|<AX, Y> - <X, AY>|` over coordinate basis pairs.
    pub self_adjoint_defect: f64,
    /// Cholesky factors of the induced metric, `n^2` per point.
    #[serde(skip)]
    pub chol: Vec<f64>,
}

/// Complete the bundle from a shape operator (any orientation).
pub fn curvature_bundle(s: &GraphHypersurface, a: &TensorField) -> Result<CurvatureBundle> {
    let n = s.n();
    let n2 = n * n;
    let len = s.len();
    if a.values.len() != len * n2 {
        return Err(Error::ShapeMismatch { expected: vec![len * n2], found: vec![a.values.len()] });
    }
    let c: Vec<f64> = (0..=n).map(|k| newton_trace_coefficient(n, k)).collect();
    let binoms: Vec<f64> = (0..=n).map(|k| binomial(n, k)).collect();
    let mut out = CurvatureBundle {
        n,
        a: a.values.clone(),
        a_frame: Vec::with_capacity(len * n2),
        principal: Vec::with_capacity(len * n),
        s: Vec::with_capacity(len * (n + 1)),
        h: Vec::with_capacity(len * (n + 1)),
        p: vec![Vec::with_capacity(len * n2); n + 1],
        c,
        elliptic_mask: Vec::with_capacity(len),
        norm_a_sq: Vec::with_capacity(len),
        self_adjoint_defect: 0.0,
        chol: Vec::with_capacity(len * n2),
    };
    for p in 0..len {
        let g = s.metric_at(p);
        let ev = linalg::sym_eigenvalues(n, g);
        let condition = ev[n - 1] / ev[0];
        if !(ev[0] > 0.0) || condition > MAX_CONDITION {
            return Err(Error::EigenFailure { index: p, condition });
        }
        let ap = &a.values[p * n2..(p + 1) * n2];
        // g A should be symmetric
        let ga = linalg::matmul(n, g, ap);
        for i in 0..n {
            for j in (i + 1)..n {
                out.self_adjoint_defect = out.self_adjoint_defect.max((ga[i * n + j] - ga[j * n + i]).abs());
            }
        }
        let l = linalg::cholesky(n, g).ok_or(Error::EigenFailure { index: p, condition })?;
        let lt = linalg::transpose(n, &l);
        let lti = linalg::transpose(n, &linalg::lower_inverse(n, &l));
        let mut af = linalg::matmul(n, &linalg::matmul(n, &lt, ap), &lti);
        linalg::symmetrize(n, &mut af);
        let principal = linalg::sym_eigenvalues(n, &af);
        let coeffs = linalg::characteristic_coefficients(n, &af);
        for k in 0..=n {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            out.s.push(sign * coeffs[k]);
            out.h.push(coeffs[k] / binoms[k]);
        }
        let mut prev = linalg::identity(n);
        out.p[0].extend_from_slice(&prev);
        for k in 1..=n {
            let mut next = linalg::matmul(n, ap, &prev);
            let hk = coeffs[k];
            for i in 0..n {
                next[i * n + i] += hk;
            }
            out.p[k].extend_from_slice(&next);
            prev = next;
        }
        out.elliptic_mask.push(principal.iter().all(|&k| k < -ELLIPTIC_TOL));
        out.norm_a_sq.push(linalg::trace_product(n, ap, ap));
        out.principal.extend(principal);
        out.a_frame.extend(af);
        out.chol.extend(l);
    }
    Ok(out)
}

impl CurvatureBundle {
    pub fn len(&self) -> usize {
        self.elliptic_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elliptic_mask.is_empty()
    }

    /// `H_k` at point `p`; zero for `k > n`.
    pub fn hk(&self, k: usize, p: usize) -> f64 {
        if k > self.n {
            0.0
        } else {
            self.h[p * (self.n + 1) + k]
        }
    }

    /// The field `H_k`; zero for `k > n`.
    pub fn hk_field(&self, k: usize) -> Vec<f64> {
        (0..self.len()).map(|p| self.hk(k, p)).collect()
    }

    pub fn sk(&self, k: usize, p: usize) -> f64 {
        self.s[p * (self.n + 1) + k]
    }

    pub fn a_at(&self, p: usize) -> &[f64] {
        let m = self.n * self.n;
        &self.a[p * m..(p + 1) * m]
    }

    /// Newton tensor `P_k` at `p`; zero for `k > n`.
    pub fn pk_at(&self, k: usize, p: usize) -> Vec<f64> {
        let m = self.n * self.n;
        if k > self.n {
            vec![0.0; m]
        } else {
            self.p[k][p * m..(p + 1) * m].to_vec()
        }
    }

    pub fn principal_at(&self, p: usize) -> &[f64] {
        &self.principal[p * self.n..(p + 1) * self.n]
    }

    /// Eigenvalues of a mixed, metric-self-adjoint tensor at `p`, ascending.
    pub fn frame_eigenvalues(&self, p: usize, t: &[f64]) -> Vec<f64> {
        let n = self.n;
        let l = &self.chol[p * n * n..(p + 1) * n * n];
        let lt = linalg::transpose(n, l);
        let lti = linalg::transpose(n, &linalg::lower_inverse(n, l));
        let tf = linalg::matmul(n, &linalg::matmul(n, &lt, t), &lti);
        linalg::sym_eigenvalues(n, &tf)
    }

    /// Smallest eigenvalue of `P_k` over all points.
    pub fn newton_min_eigenvalue(&self, k: usize) -> f64 {
        (0..self.len()).map(|p| self.frame_eigenvalues(p, &self.pk_at(k, p))[0]).fold(f64::INFINITY, f64::min)
    }
}

/// Bundle of the opposite orientation (`N -> -N`, `A -> -A`).
pub fn flipped_bundle(s: &GraphHypersurface, b: &CurvatureBundle) -> Result<CurvatureBundle> {
    let n = b.n;
    let values: Vec<f64> = b.a.iter().map(|v| -v).collect();
    let a = TensorField { shape: s.fiber.grid().shape(), boundary: s.fiber.boundary(), dim: n, values };
    curvature_bundle(s, &a)
}

/// Only the field `H_k[u]`, without building the full graph. Used by the solver.
pub fn mean_curvature_field(fiber: &Fiber, w: &WarpingFunction, u: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = fiber.n();
    let n2 = n * n;
    let interval = w.interval();
    if let Some((index, &value)) = u.iter().enumerate().find(|(_, v)| !interval.contains(**v)) {
        return Err(Error::HeightOutOfInterval { index, value });
    }
    let (du, d2u) = fiber.grid().derivatives(u);
    let bk = binomial(n, k);
    let mut out = Vec::with_capacity(u.len());
    for p in 0..u.len() {
        let dup = &du[p * n..(p + 1) * n];
        let pd = point_data(fiber, w, p, u[p], dup)?;
        let ii = second_form(fiber, p, &pd, dup, &d2u[p * n2..(p + 1) * n2]);
        let a = linalg::matmul(n, &pd.metric_inv, &ii);
        let coeffs = linalg::characteristic_coefficients(n, &a);
        out.push(coeffs[k] / bk);
    }
    Ok(out)
}

/// Ambient curvature quantities along a graph (constant-curvature fiber).
#[derive(Debug, Clone, Serialize)]
pub struct AmbientCurvature {
    /// Number of orthonormal-frame planes sampled per point, `n (n - 1) / 2`.
    pub planes: usize,
    /// Sectional curvature of `M` on each frame plane, from the full curvature tensor.
    pub kbar: Vec<f64>,
    /// The decomposition `kappa |X*^Y*|^2 / rho^2 + (log rho)'^2 - (log rho)'' (<X,grad h>^2 + <Y,grad h>^2)`.
    pub kbar_decomposed: Vec<f64>,
    /// The fiber term `kappa |X*^Y*|^2 / rho^2` of each plane.
    pub fiber_term: Vec<f64>,
    /// `|X*^Y*|^2` of each plane.
    pub wedge_sq: Vec<f64>,
    /// `<X,T>^2 + <Y,T>^2` of each plane.
    pub tilt_sq: Vec<f64>,
    pub ric_bar_nn: Vec<f64>,
    pub sbar: Vec<f64>,
    pub ric_p_nstar: Vec<f64>,
}

/// Curvature tensor of `-I x_rho P^n` with constant fiber curvature `kappa`,
/// evaluated on ambient coordinate vectors.
pub struct AmbientTensor<'s, 'a> {
    s: &'s GraphHypersurface<'a>,
    kappa: f64,
}

impl<'s, 'a> AmbientTensor<'s, 'a> {
    pub fn new(s: &'s GraphHypersurface<'a>) -> Self {
        Self { s, kappa: s.fiber.kappa() }
    }

    /// `R(U, V) W` at grid point `p`.
    pub fn apply(&self, p: usize, u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        let s = self.s;
        let n = s.n();
        let gp = s.fiber.metric(p);
        let fib = |a: &[f64], b: &[f64]| -> f64 {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += a[i + 1] * gp[i * n + j] * b[j + 1];
                }
            }
            acc
        };
        let ip = |a: &[f64], b: &[f64]| s.ambient_inner(p, a, b);
        let with_t = |a: &[f64]| -a[0];
        let (l1, l2) = (s.log_d1[p], s.log_d2[p]);
        let (uw_p, vw_p) = (fib(u, w), fib(v, w));
        let (uw, vw) = (ip(u, w), ip(v, w));
        let (ut, vt, wt) = (with_t(u), with_t(v), with_t(w));
        let mut out = vec![0.0; n + 1];
        for c in 0..=n {
            let (us, vs) = if c == 0 { (0.0, 0.0) } else { (u[c], v[c]) };
            let tc = if c == 0 { 1.0 } else { 0.0 };
            out[c] = self.kappa * (uw_p * vs - vw_p * us)
                + l1 * l1 * (uw * v[c] - vw * u[c])
                + l2 * wt * (vt * u[c] - ut * v[c])
                - l2 * (uw * vt - vw * ut) * tc;
        }
        out
    }

    /// `<R(X, Y) X, Y>`.
    pub fn sectional(&self, p: usize, x: &[f64], y: &[f64]) -> f64 {
        let r = self.apply(p, x, y, x);
        self.s.ambient_inner(p, &r, y)
    }

    /// Ambient orthonormal frame `(T, e_1 / rho, ...)` with signs `(-1, 1, ...)`.
    pub fn frame(&self, p: usize) -> Vec<(Vec<f64>, f64)> {
        let s = self.s;
        let n = s.n();
        let mut out = vec![({
            let mut t = vec![0.0; n + 1];
            t[0] = 1.0;
            t
        }, -1.0)];
        let l = linalg::cholesky(n, s.fiber.metric(p)).expect("fiber metric positive");
        let lti = linalg::transpose(n, &linalg::lower_inverse(n, &l));
        for a in 0..n {
            let mut e = vec![0.0; n + 1];
            for i in 0..n {
                e[i + 1] = lti[i * n + a] / s.rho[p];
            }
            out.push((e, 1.0));
        }
        out
    }

    /// `Ric(V, V) = sum_a eps_a <R(E_a, V) E_a, V>`.
    pub fn ricci(&self, p: usize, v: &[f64]) -> f64 {
        self.frame(p)
            .iter()
            .map(|(e, eps)| eps * self.s.ambient_inner(p, &self.apply(p, e, v, e), v))
            .sum()
    }

    pub fn scalar(&self, p: usize) -> f64 {
        self.frame(p).iter().map(|(e, eps)| eps * self.ricci(p, e)).sum()
    }
}

/// Ambient sectional, Ricci and scalar curvature along the graph.
pub fn ambient_curvature(s: &GraphHypersurface) -> Result<AmbientCurvature> {
    let n = s.n();
    let kappa = s.fiber.kappa();
    let tensor = AmbientTensor::new(s);
    let planes = n * (n - 1) / 2;
    let len = s.len();
    let mut out = AmbientCurvature {
        planes,
        kbar: Vec::with_capacity(len * planes),
        kbar_decomposed: Vec::with_capacity(len * planes),
        fiber_term: Vec::with_capacity(len * planes),
        wedge_sq: Vec::with_capacity(len * planes),
        tilt_sq: Vec::with_capacity(len * planes),
        ric_bar_nn: Vec::with_capacity(len),
        sbar: Vec::with_capacity(len),
        ric_p_nstar: Vec::with_capacity(len),
    };
    for p in 0..len {
        let frame = s.orthonormal_frame(p)?;
        let cols: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|i| frame[i * n + a]).collect()).collect();
        let amb: Vec<Vec<f64>> = cols.iter().map(|c| s.ambient_tangent(p, c)).collect();
        let gh = s.grad_h_at(p);
        let r2 = s.rho[p] * s.rho[p];
        for a in 0..n {
            for b in (a + 1)..n {
                let (x, y) = (&amb[a], &amb[b]);
                out.kbar.push(tensor.sectional(p, x, y));
                let proj = |v: &[f64]| {
                    let mut w = v.to_vec();
                    w[0] = 0.0;
                    w
                };
                let (xs, ys) = (proj(x), proj(y));
                let wedge = s.ambient_inner(p, &xs, &xs) * s.ambient_inner(p, &ys, &ys)
                    - s.ambient_inner(p, &xs, &ys).powi(2);
                let (xt, yt) = (-x[0], -y[0]);
                let (xg, yg) = (s.inner(p, &cols[a], gh), s.inner(p, &cols[b], gh));
                let fiber_term = kappa * wedge / r2;
                out.wedge_sq.push(wedge);
                out.tilt_sq.push(xt * xt + yt * yt);
                out.fiber_term.push(fiber_term);
                out.kbar_decomposed
                    .push(fiber_term + s.log_d1[p].powi(2) - s.log_d2[p] * (xg * xg + yg * yg));
            }
        }
        let nrm = s.ambient_normal(p);
        out.ric_bar_nn.push(tensor.ricci(p, &nrm));
        out.sbar.push(tensor.scalar(p));
        let mut nstar = nrm.clone();
        nstar[0] = 0.0;
        let nstar_p_sq = s.ambient_inner(p, &nstar, &nstar) / r2;
        out.ric_p_nstar.push((n as f64 - 1.0) * kappa * nstar_p_sq);
    }
    Ok(out)
}

/// Intrinsic curvature of the induced metric from its discrete connection.
#[derive(Debug, Clone, Serialize)]
pub struct IntrinsicCurvature {
    pub planes: usize,
    /// Sectional curvature on the orthonormal frame planes, matching `AmbientCurvature`.
    pub sectional: Vec<f64>,
    pub scalar: Vec<f64>,
}

/// Curvature of the induced metric, computed from the induced connection and
/// its central differences; independent of the shape operator.
pub fn intrinsic_curvature(s: &GraphHypersurface) -> Result<IntrinsicCurvature> {
    let n = s.n();
    let (n2, n3, n4) = (n * n, n * n * n, n * n * n * n);
    let len = s.len();
    let grid = s.fiber.grid();
    // d_e Gamma^a_bc for each component
    let mut dgam = vec![0.0; len * n4];
    for comp in 0..n3 {
        let field: Vec<f64> = (0..len).map(|p| s.connection[p * n3 + comp]).collect();
        let grad = grid.gradient(&field);
        for p in 0..len {
            for e in 0..n {
                dgam[p * n4 + e * n3 + comp] = grad[p * n + e];
            }
        }
    }
    let planes = n * (n - 1) / 2;
    let mut sectional = Vec::with_capacity(len * planes);
    let mut scalar = Vec::with_capacity(len);
    for p in 0..len {
        let gam = &s.connection[p * n3..(p + 1) * n3];
        let d: Vec<Vec<f64>> = (0..n).map(|e| dgam[p * n4 + e * n3..p * n4 + (e + 1) * n3].to_vec()).collect();
        let r = linalg::riemann_from_christoffel(n, gam, &d);
        scalar.push(linalg::scalar_from_riemann(n, &r, s.metric_inv_at(p)));
        let frame = s.orthonormal_frame(p)?;
        let g = s.metric_at(p);
        for a in 0..n {
            for b in (a + 1)..n {
                let x: Vec<f64> = (0..n).map(|i| frame[i * n + a]).collect();
                let y: Vec<f64> = (0..n).map(|i| frame[i * n + b]).collect();
                // <R(X,Y)Y, X> with R(d_c, d_d) d_b = R^a_bcd d_a
                let mut acc = 0.0;
                for aa in 0..n {
                    let xa_low: f64 = (0..n).map(|e| g[aa * n + e] * x[e]).sum();
                    for bb in 0..n {
                        for cc in 0..n {
                            for dd in 0..n {
                                acc += xa_low * r[aa * n3 + bb * n2 + cc * n + dd] * y[bb] * x[cc] * y[dd];
                            }
                        }
                    }
                }
                sectional.push(acc);
            }
        }
    }
    Ok(IntrinsicCurvature { planes, sectional, scalar })
}

/// Gauss-equation sectional curvature `Kbar - <AX,X><AY,Y> + <AX,Y>^2` on the
/// frame planes, from the orthonormal-frame shape operator.
pub fn gauss_sectional(b: &CurvatureBundle, amb: &AmbientCurvature, p: usize) -> Vec<f64> {
    let n = b.n;
    let af = &b.a_frame[p * n * n..(p + 1) * n * n];
    let mut out = Vec::with_capacity(amb.planes);
    let mut idx = 0;
    for a in 0..n {
        for c in (a + 1)..n {
            let kb = amb.kbar[p * amb.planes + idx];
            out.push(kb - af[a * n + a] * af[c * n + c] + af[a * n + c] * af[a * n + c]);
            idx += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::{make_fiber, FiberKind, PatchParams};
    use crate::warping::{make_warping, Interval, WarpingKind};

    fn torus(n: usize) -> Fiber {
        make_fiber(FiberKind::Torus, 2, &[n], PatchParams::default()).unwrap()
    }

    fn line() -> Interval {
        Interval::new(f64::NEG_INFINITY, f64::INFINITY).unwrap()
    }

    #[test]
    fn slice_of_exponential() {
        let f = torus(16);
        let w = make_warping(WarpingKind::Exp, &[], line()).unwrap();
        let s = build_graph(&f, &w, &f.sample(|_| 0.0)).unwrap();
        assert!(s.theta.iter().all(|&t| t == -1.0));
        assert!(s.grad_h.iter().all(|&v| v == 0.0));
        let a = shape_operator(&s);
        assert!((a.at(3)[0] + 1.0).abs() < 1e-15 && a.at(3)[1] == 0.0);
        let b = curvature_bundle(&s, &a).unwrap();
        for k in 0..=2 {
            assert!((b.hk(k, 7) - 1.0).abs() < 1e-14);
        }
        assert_eq!(b.c, vec![2.0, 2.0, 0.0]);
        let p1 = b.pk_at(1, 0);
        assert!((p1[0] - 1.0).abs() < 1e-14 && (p1[3] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cosh_slice_principal_curvatures() {
        let f = torus(16);
        let w = make_warping(WarpingKind::Cosh, &[], line()).unwrap();
        let s = build_graph(&f, &w, &f.sample(|_| 1.0)).unwrap();
        let b = curvature_bundle(&s, &shape_operator(&s)).unwrap();
        for &k in b.principal_at(0) {
            assert!((k + 1f64.tanh()).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_graph_in_static_spacetime() {
        let f = torus(32);
        let w = make_warping(WarpingKind::Exp, &[0.0, 1.0], line()).unwrap();
        // near x = 0 the graph of 0.5 sin x is the plane t = 0.5 x to first order
        let s = build_graph(&f, &w, &f.sample(|x| 0.5 * x[0].sin())).unwrap();
        let p = 5;
        let m = s.du[p * 2];
        assert!((m - 0.5).abs() < 0.01);
        // independent oracle: normalize the ambient normal (1, m) of the plane t = m x
        let norm = (1.0 - m * m).sqrt();
        assert!((s.theta[p] + 1.0 / norm).abs() < 1e-12);
        assert!((s.grad_h_sq()[p] - (1.0 / (norm * norm) - 1.0)).abs() < 1e-12);
        let exact = -1.0 / (1.0f64 - 0.25).sqrt();
        assert!((exact + 1.1547005383792517).abs() < 1e-15);
    }

    #[test]
    fn spacelike_violation_names_worst_point() {
        let f = torus(32);
        let w = make_warping(WarpingKind::Exp, &[0.0, 1.0], line()).unwrap();
        let err = build_graph(&f, &w, &f.sample(|x| 1.2 * x[0].sin())).unwrap_err();
        match err {
            Error::NotSpacelike { index, .. } => {
                let x = f.grid().coords(index);
                assert!(x[0].cos().abs() > 0.99);
            }
            other => panic!("{other:?}"),
        }
        let w = make_warping(WarpingKind::Linear, &[], Interval::new(0.5, 4.0).unwrap()).unwrap();
        assert!(matches!(
            build_graph(&f, &w, &f.sample(|_| 5.0)),
            Err(Error::HeightOutOfInterval { .. })
        ));
    }

    #[test]
    fn worked_principal_example() {
        // principal curvatures (-1, -2) in a unit metric
        let n = 2;
        let a = [-1.0, 0.0, 0.0, -2.0];
        let c = linalg::characteristic_coefficients(n, &a);
        let s1 = -c[1];
        let s2 = c[2];
        assert_eq!((s1, s2), (-3.0, 2.0));
        assert_eq!(c[1] / binomial(2, 1), 1.5);
        assert_eq!(c[2] / binomial(2, 2), 2.0);
    }

    #[test]
    fn fast_field_matches_bundle() {
        let f = torus(32);
        let w = make_warping(WarpingKind::Exp, &[], line()).unwrap();
        let u = f.sample(|x| 0.1 * x[0].sin() * x[1].cos());
        let s = build_graph(&f, &w, &u).unwrap();
        let b = curvature_bundle(&s, &shape_operator(&s)).unwrap();
        for k in 1..=2 {
            let fast = mean_curvature_field(&f, &w, &u.values, k).unwrap();
            for p in 0..f.len() {
                assert!((fast[p] - b.hk(k, p)).abs() < 1e-12);
            }
        }
    }
}
