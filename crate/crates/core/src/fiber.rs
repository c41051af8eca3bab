//! Constant-curvature Riemannian fibers on structured grids, with the
//! analytic metric, Christoffel symbols and a discrete covariant calculus.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};
use crate::linalg;

/// Smallest grid size accepted per axis.
pub const MIN_GRID: usize = 16;
/// Smallest latitude allowed for sphere bands.
pub const MIN_POLE_DISTANCE: f64 = 0.2;
/// Fraction of each non-periodic axis excluded at both ends from residuals.
pub const BOUNDARY_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FiberKind {
    /// Flat periodic torus `[0, 2 pi)^n`.
    Torus,
    /// Round sphere band `theta in [theta0, pi - theta0]`, periodic longitude.
    SphereBand,
    /// Square patch of the Poincare disk model of the hyperbolic plane.
    HyperbolicDisk,
}

impl FromStr for FiberKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "torus" => Ok(Self::Torus),
            "sphere_band" => Ok(Self::SphereBand),
            "hyperbolic_disk" => Ok(Self::HyperbolicDisk),
            other => Err(Error::UnsupportedFiber(other.to_string())),
        }
    }
}

impl fmt::Display for FiberKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Torus => "torus",
            Self::SphereBand => "sphere_band",
            Self::HyperbolicDisk => "hyperbolic_disk",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    Periodic,
    DirichletGhost,
}

/// Patch parameters for the non-periodic fibers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PatchParams {
    /// Sphere band half-opening: the band is `[theta0, pi - theta0]`.
    pub theta0: f64,
    /// Hyperbolic patch: distance from the center to the patch corners.
    pub r_max: f64,
}

impl Default for PatchParams {
    fn default() -> Self {
        Self { theta0: 0.3, r_max: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarField {
    pub shape: Vec<usize>,
    pub boundary: BoundaryPolicy,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VectorField {
    pub shape: Vec<usize>,
    pub boundary: BoundaryPolicy,
    pub dim: usize,
    /// `dim` components per point.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorField {
    pub shape: Vec<usize>,
    pub boundary: BoundaryPolicy,
    pub dim: usize,
    /// `dim * dim` row-major components per point.
    pub values: Vec<f64>,
}

impl TensorField {
    pub fn at(&self, p: usize) -> &[f64] {
        let m = self.dim * self.dim;
        &self.values[p * m..(p + 1) * m]
    }
}

/// A fiber `P^n` with grid, metric and Christoffel symbols at grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct Fiber {
    kind: FiberKind,
    n: usize,
    kappa: f64,
    patch: PatchParams,
    grid: Grid,
    metric: Vec<f64>,
    inverse: Vec<f64>,
    /// `Gamma^k_ij` stored at `p * n^3 + k * n^2 + i * n + j`.
    christoffel: Vec<f64>,
    sqrt_det: Vec<f64>,
    curvature_deviation: f64,
}

/// Build a fiber and check its invariants (positive metric, curvature).
pub fn make_fiber(kind: FiberKind, n: usize, grid_sizes: &[usize], patch: PatchParams) -> Result<Fiber> {
    let max_dim = if kind == FiberKind::Torus { 4 } else { 2 };
    if n < 2 || n > max_dim {
        return Err(Error::UnsupportedDimension(n));
    }
    let sizes: Vec<usize> = match grid_sizes {
        [s] => vec![*s; n],
        s if s.len() == n => s.to_vec(),
        s => {
            return Err(Error::ShapeMismatch { expected: vec![n], found: vec![s.len()] });
        }
    };
    if let Some(&s) = sizes.iter().find(|&&s| s < MIN_GRID) {
        return Err(Error::BadParams(format!("grid size {s} below the minimum {MIN_GRID}")));
    }
    let (axes, kappa) = match kind {
        FiberKind::Torus => (sizes.iter().map(|&s| Axis::periodic(s, 0.0, 2.0 * PI)).collect::<Vec<_>>(), 0.0),
        FiberKind::SphereBand => {
            if !(patch.theta0 >= MIN_POLE_DISTANCE) {
                return Err(Error::PoleTooClose(patch.theta0));
            }
            if patch.theta0 >= PI / 2.0 - 0.05 {
                return Err(Error::BadParams(format!("theta0 = {} leaves an empty band", patch.theta0)));
            }
            (vec![Axis::closed(sizes[0], patch.theta0, PI - patch.theta0), Axis::periodic(sizes[1], 0.0, 2.0 * PI)], 1.0)
        }
        FiberKind::HyperbolicDisk => {
            if !(patch.r_max > 0.0 && patch.r_max.is_finite()) {
                return Err(Error::BadParams(format!("r_max must be positive, got {}", patch.r_max)));
            }
            let s = (0.5 * patch.r_max).tanh() / 2f64.sqrt();
            (vec![Axis::closed(sizes[0], -s, s), Axis::closed(sizes[1], -s, s)], -1.0)
        }
    };
    let grid = Grid::new(axes);
    let len = grid.len();
    let mut metric = Vec::with_capacity(len * n * n);
    let mut inverse = Vec::with_capacity(len * n * n);
    let mut christoffel = Vec::with_capacity(len * n * n * n);
    let mut sqrt_det = Vec::with_capacity(len);
    for p in 0..len {
        let x = grid.coords(p);
        let g = metric_at(kind, n, &x);
        let eig = linalg::sym_eigenvalues(n, &g);
        if eig[0] <= 1e-12 {
            return Err(Error::BadParams(format!("fiber metric degenerate at grid point {p}")));
        }
        let inv = linalg::inverse(n, &g).expect("positive definite metric");
        sqrt_det.push(linalg::det(n, &g).sqrt());
        metric.extend_from_slice(&g);
        inverse.extend_from_slice(&inv);
        christoffel.extend_from_slice(&christoffel_at(kind, n, &x));
    }
    let mut fiber = Fiber {
        kind,
        n,
        kappa,
        patch,
        grid,
        metric,
        inverse,
        christoffel,
        sqrt_det,
        curvature_deviation: 0.0,
    };
    fiber.curvature_deviation = fiber.measure_curvature_deviation();
    if fiber.curvature_deviation > 1e-6 {
        return Err(Error::BadParams(format!(
            "numerical sectional curvature deviates from {kappa} by {:e}",
            fiber.curvature_deviation
        )));
    }
    Ok(fiber)
}

/// Analytic metric components at a coordinate point.
pub fn metric_at(kind: FiberKind, n: usize, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; n * n];
    match kind {
        FiberKind::Torus => {
            for i in 0..n {
                g[i * n + i] = 1.0;
            }
        }
        FiberKind::SphereBand => {
            g[0] = 1.0;
            g[3] = x[0].sin().powi(2);
        }
        FiberKind::HyperbolicDisk => {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let lam = 2.0 / (1.0 - r2);
            for i in 0..n {
                g[i * n + i] = lam * lam;
            }
        }
    }
    g
}

/// Analytic Christoffel symbols `Gamma^k_ij` at a coordinate point.
pub fn christoffel_at(kind: FiberKind, n: usize, x: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; n * n * n];
    let idx = |k: usize, i: usize, j: usize| k * n * n + i * n + j;
    match kind {
        FiberKind::Torus => {}
        FiberKind::SphereBand => {
            let (s, co) = (x[0].sin(), x[0].cos());
            c[idx(0, 1, 1)] = -s * co;
            c[idx(1, 0, 1)] = co / s;
            c[idx(1, 1, 0)] = co / s;
        }
        FiberKind::HyperbolicDisk => {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let dl: Vec<f64> = x.iter().map(|v| 2.0 * v / (1.0 - r2)).collect();
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut v = 0.0;
                        if i == k {
                            v += dl[j];
                        }
                        if j == k {
                            v += dl[i];
                        }
                        if i == j {
                            v -= dl[k];
                        }
                        c[idx(k, i, j)] = v;
                    }
                }
            }
        }
    }
    c
}

/// Fourth-order central difference of a vector-valued function along axis `a`.
fn fd4<F: Fn(&[f64]) -> Vec<f64>>(f: &F, x: &[f64], a: usize, delta: f64) -> Vec<f64> {
    let shifted = |s: f64| {
        let mut y = x.to_vec();
        y[a] += s * delta;
        f(&y)
    };
    let (p2, p1, m1, m2) = (shifted(2.0), shifted(1.0), shifted(-1.0), shifted(-2.0));
    (0..p1.len()).map(|i| (-p2[i] + 8.0 * p1[i] - 8.0 * m1[i] + m2[i]) / (12.0 * delta)).collect()
}

/// Sectional curvatures of the coordinate planes at `x`, computed from the
/// analytic metric alone by nested finite differences. Independent of the
/// closed-form Christoffel symbols.
pub fn numerical_sectional_curvatures(kind: FiberKind, n: usize, x: &[f64]) -> Vec<f64> {
    let delta = 1e-3;
    let gamma = |y: &[f64]| -> Vec<f64> {
        let g = metric_at(kind, n, y);
        let inv = linalg::inverse(n, &g).expect("metric invertible");
        let dg: Vec<Vec<f64>> = (0..n).map(|a| fd4(&|z: &[f64]| metric_at(kind, n, z), y, a, delta)).collect();
        let mut c = vec![0.0; n * n * n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut v = 0.0;
                    for l in 0..n {
                        v += 0.5 * inv[k * n + l] * (dg[i][l * n + j] + dg[j][i * n + l] - dg[l][i * n + j]);
                    }
                    c[k * n * n + i * n + j] = v;
                }
            }
        }
        c
    };
    let g = metric_at(kind, n, x);
    let c = gamma(x);
    let dc: Vec<Vec<f64>> = (0..n).map(|a| fd4(&gamma, x, a, delta)).collect();
    let riemann = linalg::riemann_from_christoffel(n, &c, &dc);
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(linalg::sectional_from_riemann(n, &riemann, &g, i, j));
        }
    }
    out
}

impl Fiber {
    pub fn kind(&self) -> FiberKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn patch(&self) -> PatchParams {
        self.patch
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn boundary(&self) -> BoundaryPolicy {
        if self.grid.all_periodic() {
            BoundaryPolicy::Periodic
        } else {
            BoundaryPolicy::DirichletGhost
        }
    }

    /// True when every point is an interior point (closed manifold).
    pub fn is_compact(&self) -> bool {
        self.grid.all_periodic()
    }

    /// Cells excluded near non-periodic boundaries when reducing residuals.
    pub fn residual_margin(&self) -> usize {
        if self.is_compact() {
            0
        } else {
            3
        }
    }

    /// Points at least `residual_margin` cells and a fixed fraction
    /// `BOUNDARY_FRACTION` of the axis length away from non-periodic ends, so
    /// the checked region does not move under refinement.
    pub fn interior_mask(&self) -> Vec<bool> {
        let cells = self.grid.interior_mask(self.residual_margin());
        let axes = self.grid.axes();
        (0..self.len())
            .map(|p| {
                cells[p]
                    && self.grid.unravel(p).iter().zip(axes).all(|(&i, ax)| {
                        let len = (ax.size - 1) as f64 * ax.spacing;
                        let d = (i as f64 * ax.spacing).min(len - i as f64 * ax.spacing);
                        ax.periodic || d >= BOUNDARY_FRACTION * len - 1e-12
                    })
            })
            .collect()
    }

    pub fn metric(&self, p: usize) -> &[f64] {
        let m = self.n * self.n;
        &self.metric[p * m..(p + 1) * m]
    }

    pub fn inverse_metric(&self, p: usize) -> &[f64] {
        let m = self.n * self.n;
        &self.inverse[p * m..(p + 1) * m]
    }

    pub fn christoffel(&self, p: usize) -> &[f64] {
        let m = self.n * self.n * self.n;
        &self.christoffel[p * m..(p + 1) * m]
    }

    pub fn sqrt_det(&self, p: usize) -> f64 {
        self.sqrt_det[p]
    }

    /// Largest absolute deviation of sampled numerical sectional curvature from `kappa`.
    pub fn curvature_deviation(&self) -> f64 {
        self.curvature_deviation
    }

    fn measure_curvature_deviation(&self) -> f64 {
        if self.kind == FiberKind::Torus {
            // flat metric: numerical curvature of a constant metric is exactly zero
            let x = self.grid.coords(0);
            return numerical_sectional_curvatures(self.kind, self.n, &x)
                .iter()
                .map(|k| k.abs())
                .fold(0.0, f64::max);
        }
        let mask = self.grid.interior_mask(1);
        let stride = (self.len() / 256).max(1);
        let mut worst: f64 = 0.0;
        for p in (0..self.len()).step_by(stride).filter(|&p| mask[p]) {
            let x = self.grid.coords(p);
            for k in numerical_sectional_curvatures(self.kind, self.n, &x) {
                worst = worst.max((k - self.kappa).abs() / self.kappa.abs().max(1.0));
            }
        }
        worst
    }

    pub fn scalar_field(&self, values: Vec<f64>) -> Result<ScalarField> {
        self.grid.check_len(&values, 1)?;
        Ok(ScalarField { shape: self.grid.shape(), boundary: self.boundary(), values })
    }

    /// Sample a closure of the coordinates at every grid point.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> ScalarField {
        ScalarField { shape: self.grid.shape(), boundary: self.boundary(), values: self.grid.sample(f) }
    }

    pub fn check_field(&self, f: &ScalarField) -> Result<()> {
        if f.shape != self.grid.shape() || f.values.len() != self.len() {
            return Err(Error::ShapeMismatch { expected: self.grid.shape(), found: f.shape.clone() });
        }
        Ok(())
    }

    /// Fixed-order sum of `values * sqrt(det g_P) * cell volume`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let cell: f64 = self.grid.axes().iter().map(|a| a.spacing).product();
        values.iter().zip(&self.sqrt_det).map(|(v, s)| v * s).sum::<f64>() * cell
    }
}

/// Fiber gradient, covariant Hessian and Laplace-Beltrami operator of `f`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberCalculus {
    pub grad: VectorField,
    pub hess: TensorField,
    pub lap: ScalarField,
}

pub fn fiber_calculus(fiber: &Fiber, f: &ScalarField) -> Result<FiberCalculus> {
    fiber.check_field(f)?;
    let n = fiber.n;
    let len = fiber.len();
    let (d1, d2) = fiber.grid.derivatives(&f.values);
    let mut grad = vec![0.0; len * n];
    let mut hess = vec![0.0; len * n * n];
    let mut lap = vec![0.0; len];
    for p in 0..len {
        let inv = fiber.inverse_metric(p);
        let gam = fiber.christoffel(p);
        let df = &d1[p * n..(p + 1) * n];
        for i in 0..n {
            grad[p * n + i] = (0..n).map(|j| inv[i * n + j] * df[j]).sum();
        }
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let corr: f64 = (0..n).map(|k| gam[k * n * n + i * n + j] * df[k]).sum();
                let hij = d2[p * n * n + i * n + j] - corr;
                hess[p * n * n + i * n + j] = hij;
            }
        }
        linalg::symmetrize(n, &mut hess[p * n * n..(p + 1) * n * n]);
        for i in 0..n {
            for j in 0..n {
                acc += inv[i * n + j] * hess[p * n * n + i * n + j];
            }
        }
        lap[p] = acc;
    }
    let shape = fiber.grid.shape();
    let boundary = fiber.boundary();
    Ok(FiberCalculus {
        grad: VectorField { shape: shape.clone(), boundary, dim: n, values: grad },
        hess: TensorField { shape: shape.clone(), boundary, dim: n, values: hess },
        lap: ScalarField { shape, boundary, values: lap },
    })
}
