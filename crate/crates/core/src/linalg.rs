//! Small dense linear algebra on row-major `n x n` slices.

use nalgebra::{DMatrix, DVector};

pub fn to_matrix(n: usize, a: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, a)
}

pub fn from_matrix(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = vec![0.0; n * m.ncols()];
    for i in 0..n {
        for j in 0..m.ncols() {
            out[i * m.ncols() + j] = m[(i, j)];
        }
    }
    out
}

pub fn identity(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i * n + i] = 1.0;
    }
    out
}

pub fn matmul(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

pub fn matvec(n: usize, a: &[f64], v: &[f64]) -> Vec<f64> {
    (0..n).map(|i| (0..n).map(|j| a[i * n + j] * v[j]).sum()).collect()
}

pub fn transpose(n: usize, a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = a[i * n + j];
        }
    }
    out
}

pub fn trace(n: usize, a: &[f64]) -> f64 {
    (0..n).map(|i| a[i * n + i]).sum()
}

/// `Tr(a b)` without forming the product.
pub fn trace_product(n: usize, a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += a[i * n + j] * b[j * n + i];
        }
    }
    acc
}

pub fn symmetrize(n: usize, a: &mut [f64]) {
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
}

pub fn det(n: usize, a: &[f64]) -> f64 {
    match n {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => to_matrix(n, a).determinant(),
    }
}

pub fn inverse(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    if n == 2 {
        let d = det(2, a);
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        return Some(vec![a[3] / d, -a[1] / d, -a[2] / d, a[0] / d]);
    }
    to_matrix(n, a).try_inverse().map(|m| from_matrix(&m))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(n: usize, a: &[f64]) -> Vec<f64> {
    let mut s = a.to_vec();
    symmetrize(n, &mut s);
    let mut ev: Vec<f64> = to_matrix(n, &s).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Lower Cholesky factor `L` with `a = L L^T`.
pub fn cholesky(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    to_matrix(n, a).cholesky().map(|c| from_matrix(&c.l()))
}

/// Solve `L x = b` for lower-triangular `L`.
pub fn forward_solve(n: usize, l: &[f64], b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|j| l[i * n + j] * x[j]).sum();
        x[i] = (b[i] - s) / l[i * n + i];
    }
    x
}

/// Inverse of a lower-triangular matrix.
pub fn lower_inverse(n: usize, l: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        let col = forward_solve(n, l, &e);
        for r in 0..n {
            out[r * n + c] = col[r];
        }
    }
    out
}

/// Coefficients of `det(x I - a) = x^n + e_1 x^{n-1} + ... + e_n` via the
/// Faddeev-LeVerrier recursion; returns `[1, e_1, ..., e_n]`.
pub fn characteristic_coefficients(n: usize, a: &[f64]) -> Vec<f64> {
    let mut coeffs = vec![1.0; n + 1];
    let mut m = vec![0.0; n * n];
    for k in 1..=n {
        // M_k = A M_{k-1} + e_{k-1} I
        let mut next = matmul(n, a, &m);
        for i in 0..n {
            next[i * n + i] += coeffs[k - 1];
        }
        m = next;
        coeffs[k] = -trace_product(n, a, &m) / k as f64;
    }
    coeffs
}

/// `R^a_{bcd}` at `a n^3 + b n^2 + c n + d` from Christoffel symbols
/// `Gamma^a_{bc}` and their partial derivatives `d[e] = d_e Gamma`.
pub fn riemann_from_christoffel(n: usize, gamma: &[f64], d: &[Vec<f64>]) -> Vec<f64> {
    let g = |a: usize, b: usize, c: usize| gamma[a * n * n + b * n + c];
    let mut r = vec![0.0; n * n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for dd in 0..n {
                    let mut v = d[c][a * n * n + dd * n + b] - d[dd][a * n * n + c * n + b];
                    for e in 0..n {
                        v += g(a, c, e) * g(e, dd, b) - g(a, dd, e) * g(e, c, b);
                    }
                    r[a * n * n * n + b * n * n + c * n + dd] = v;
                }
            }
        }
    }
    r
}

/// Sectional curvature of the coordinate plane `(i, j)`.
pub fn sectional_from_riemann(n: usize, r: &[f64], g: &[f64], i: usize, j: usize) -> f64 {
    let num: f64 = (0..n).map(|a| g[i * n + a] * r[a * n * n * n + j * n * n + i * n + j]).sum();
    let den = g[i * n + i] * g[j * n + j] - g[i * n + j] * g[i * n + j];
    num / den
}

/// Scalar curvature `g^{bd} R^a_{bad}`.
pub fn scalar_from_riemann(n: usize, r: &[f64], ginv: &[f64]) -> f64 {
    let mut s = 0.0;
    for a in 0..n {
        for b in 0..n {
            for dd in 0..n {
                s += ginv[b * n + dd] * r[a * n * n * n + b * n * n + a * n + dd];
            }
        }
    }
    s
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn characteristic_polynomial_of_diagonal() {
        let a = [-1.0, 0.0, 0.0, -2.0];
        let c = characteristic_coefficients(2, &a);
        // (x + 1)(x + 2) = x^2 + 3x + 2
        assert_eq!(c, vec![1.0, 3.0, 2.0]);
    }

    #[test]
    fn inverse_and_cholesky() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let inv = inverse(3, &a).unwrap();
        let id = matmul(3, &a, &inv);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id[i * 3 + j] - want).abs() < 1e-14);
            }
        }
        let l = cholesky(3, &a).unwrap();
        let back = matmul(3, &l, &transpose(3, &l));
        assert!(back.iter().zip(&a).all(|(x, y)| (x - y).abs() < 1e-14));
        let li = lower_inverse(3, &l);
        let id = matmul(3, &li, &l);
        assert!((trace(3, &id) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eigenvalues_sorted() {
        let ev = sym_eigenvalues(2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }
}
