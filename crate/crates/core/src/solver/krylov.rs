//! Restarted GMRES with right preconditioning, and a spectral preconditioner
//! for constant-coefficient operators `a Laplacian + b` on periodic grids.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::grid::Grid;
use crate::linalg::{dot, norm2};

/// Outcome of a linear solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresStats {
    pub iterations: usize,
    /// Final residual norm relative to `||b||`.
    pub relative_residual: f64,
}

/// Solve `A x = b` with `x0 = 0`, `A` applied through `apply` and the right
/// preconditioner through `precond`, to relative tolerance `tol`.
pub fn gmres<A, M>(apply: A, precond: M, b: &[f64], tol: f64, restart: usize, max_iter: usize) -> (Vec<f64>, GmresStats)
where
    A: Fn(&[f64]) -> Vec<f64>,
    M: Fn(&[f64]) -> Vec<f64>,
{
    let len = b.len();
    let mut x = vec![0.0; len];
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return (x, GmresStats { iterations: 0, relative_residual: 0.0 });
    }
    let restart = restart.max(1);
    let mut total = 0;
    let mut rel = 1.0;
    while total < max_iter {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        rel = beta / b_norm;
        if rel <= tol {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..restart {
            if total >= max_iter {
                break;
            }
            total += 1;
            let mut w = apply(&precond(&basis[j]));
            // modified Gram-Schmidt
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hij * vk;
                }
            }
            let hn = norm2(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            if d == 0.0 {
                break;
            }
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            rel = g[j + 1].abs() / b_norm;
            if rel <= tol || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        if used == 0 {
            break;
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let s: f64 = ((i + 1)..used).map(|l| h[i][l] * y[l]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut z = vec![0.0; len];
        for (yi, v) in y.iter().zip(&basis) {
            for (zk, vk) in z.iter_mut().zip(v) {
                *zk += yi * vk;
            }
        }
        for (xk, zk) in x.iter_mut().zip(precond(&z)) {
            *xk += zk;
        }
        if rel <= tol {
            break;
        }
    }
    (x, GmresStats { iterations: total, relative_residual: rel })
}

/// Inverse of `a Delta_h + b` on a fully periodic grid, where `Delta_h` is the
/// flat 3-point Laplacian. Symbols closer to zero than `floor` are clamped.
pub struct SpectralPreconditioner {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    symbol: Vec<f64>,
}

impl SpectralPreconditioner {
    pub fn new(grid: &Grid, a: f64, b: f64) -> Self {
        let shape = grid.shape();
        let mut planner = FftPlanner::new();
        let forward = shape.iter().map(|&s| planner.plan_fft_forward(s)).collect();
        let inverse = shape.iter().map(|&s| planner.plan_fft_inverse(s)).collect();
        let axis_eigs: Vec<Vec<f64>> = grid
            .axes()
            .iter()
            .map(|ax| {
                (0..ax.size)
                    .map(|m| {
                        let s = (std::f64::consts::PI * m as f64 / ax.size as f64).sin();
                        -4.0 * s * s / (ax.spacing * ax.spacing)
                    })
                    .collect()
            })
            .collect();
        let floor = 0.1 * a.abs().max(b.abs()).max(1e-12);
        let symbol = (0..grid.len())
            .map(|p| {
                let lap: f64 = grid.unravel(p).iter().zip(&axis_eigs).map(|(&m, e)| e[m]).sum();
                let v = a * lap + b;
                if v.abs() < floor {
                    if v < 0.0 { -floor } else { floor }
                } else {
                    v
                }
            })
            .collect();
        Self { shape, forward, inverse, symbol }
    }

    fn transform(&self, data: &mut [Complex<f64>], plans: &[Arc<dyn Fft<f64>>]) {
        let dim = self.shape.len();
        for axis in 0..dim {
            let size = self.shape[axis];
            let stride: usize = self.shape[axis + 1..].iter().product();
            let outer = data.len() / (size * stride);
            let mut line = vec![Complex::new(0.0, 0.0); size];
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * size * stride + inner;
                    for (i, c) in line.iter_mut().enumerate() {
                        *c = data[base + i * stride];
                    }
                    plans[axis].process(&mut line);
                    for (i, c) in line.iter().enumerate() {
                        data[base + i * stride] = *c;
                    }
                }
            }
        }
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut data: Vec<Complex<f64>> = r.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        for (c, s) in data.iter_mut().zip(&self.symbol) {
            *c /= *s;
        }
        self.transform(&mut data, &self.inverse);
        let scale = data.len() as f64;
        data.iter().map(|c| c.re / scale).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;

    #[test]
    fn gmres_solves_small_system() {
        let m = [[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
        let apply = |x: &[f64]| (0..3).map(|i| (0..3).map(|j| m[i][j] * x[j]).sum()).collect();
        let b = [1.0, 2.0, 3.0];
        let (x, st) = gmres(apply, |v: &[f64]| v.to_vec(), &b, 1e-12, 10, 50);
        assert!(st.relative_residual <= 1e-12);
        let ax: Vec<f64> = apply(&x);
        for (a, bb) in ax.iter().zip(&b) {
            assert!((a - bb).abs() < 1e-10);
        }
    }

    #[test]
    fn spectral_inverse_is_exact_for_flat_operator() {
        let two_pi = 2.0 * std::f64::consts::PI;
        let grid = Grid::new(vec![Axis::periodic(16, 0.0, two_pi), Axis::periodic(12, 0.0, two_pi)]);
        let (a, b) = (0.3, -1.7);
        let pre = SpectralPreconditioner::new(&grid, a, b);
        let f = grid.sample(|x| (x[0]).sin() * (2.0 * x[1]).cos() + 0.2);
        let (_, d2) = grid.derivatives(&f);
        let op: Vec<f64> = (0..grid.len()).map(|p| a * (d2[p * 4] + d2[p * 4 + 3]) + b * f[p]).collect();
        let back = pre.apply(&op);
        for (x, y) in back.iter().zip(&f) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
