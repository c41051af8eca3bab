//! Structured n-dimensional grids with one ghost layer and second-order
//! central difference stencils. Fields are flat row-major arrays (last axis
//! fastest).

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub size: usize,
    pub lo: f64,
    pub spacing: f64,
    pub periodic: bool,
}

impl Axis {
    /// `size` points covering `[lo, lo + period)`.
    pub fn periodic(size: usize, lo: f64, period: f64) -> Self {
        Self { size, lo, spacing: period / size as f64, periodic: true }
    }

    /// `size` points covering `[lo, hi]` inclusive.
    pub fn closed(size: usize, lo: f64, hi: f64) -> Self {
        Self { size, lo, spacing: (hi - lo) / (size - 1) as f64, periodic: false }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.lo + self.spacing * i as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    axes: Vec<Axis>,
    #[serde(skip)]
    strides: Vec<usize>,
    #[serde(skip)]
    padded_strides: Vec<usize>,
    #[serde(skip)]
    padded_len: usize,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Self {
        let dim = axes.len();
        let mut strides = vec![1; dim];
        let mut padded_strides = vec![1; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * axes[a + 1].size;
            padded_strides[a] = padded_strides[a + 1] * (axes[a + 1].size + 2);
        }
        let padded_len = axes.iter().map(|a| a.size + 2).product();
        Self { axes, strides, padded_strides, padded_len }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.size).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.size).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest spacing; the refinement parameter of convergence fits.
    pub fn max_spacing(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing).fold(0.0, f64::max)
    }

    pub fn all_periodic(&self) -> bool {
        self.axes.iter().all(|a| a.periodic)
    }

    pub fn unravel(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (a, s) in self.strides.iter().enumerate() {
            out[a] = idx / s;
            idx %= s;
        }
        out
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        self.unravel(idx).iter().zip(&self.axes).map(|(&i, ax)| ax.coord(i)).collect()
    }

    /// Sample a closure at every grid point.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|p| f(&self.coords(p))).collect()
    }

    fn padded_index(&self, idx: usize) -> usize {
        let mut q = 0;
        let mut rest = idx;
        for a in 0..self.dim() {
            let i = rest / self.strides[a];
            rest %= self.strides[a];
            q += (i + 1) * self.padded_strides[a];
        }
        q
    }

    /// Points at least `margin` cells away from every non-periodic boundary.
    pub fn interior_mask(&self, margin: usize) -> Vec<bool> {
        (0..self.len())
            .map(|p| {
                self.unravel(p)
                    .iter()
                    .zip(&self.axes)
                    .all(|(&i, ax)| ax.periodic || (i >= margin && i + margin < ax.size))
            })
            .collect()
    }

    pub fn check_len(&self, values: &[f64], per_point: usize) -> Result<()> {
        if values.len() != self.len() * per_point {
            let mut found = self.shape();
            found.push(values.len());
            let mut expected = self.shape();
            expected.push(self.len() * per_point);
            return Err(Error::ShapeMismatch { expected, found });
        }
        Ok(())
    }

    /// Copy of `values` with one ghost layer per axis: periodic wrap, or cubic
    /// extrapolation in difference form (exact for constants) at closed ends.
    pub fn pad(&self, values: &[f64]) -> Vec<f64> {
        let dim = self.dim();
        let mut out = vec![0.0; self.padded_len];
        for (p, &v) in values.iter().enumerate() {
            out[self.padded_index(p)] = v;
        }
        let psizes: Vec<usize> = self.axes.iter().map(|a| a.size + 2).collect();
        for a in 0..dim {
            let ax = &self.axes[a];
            let n = ax.size;
            let st = self.padded_strides[a];
            // ranges for the other axes: padded for already-filled axes, interior otherwise
            let ranges: Vec<(usize, usize)> =
                (0..dim).map(|b| if b < a { (0, psizes[b]) } else { (1, psizes[b] - 1) }).collect();
            for base in offsets(&ranges, &self.padded_strides, a) {
                let at = |i: usize| base + i * st;
                if ax.periodic {
                    out[at(0)] = out[at(n)];
                    out[at(n + 1)] = out[at(1)];
                } else {
                    let (f0, f1, f2, f3) = (out[at(1)], out[at(2)], out[at(3)], out[at(4)]);
                    out[at(0)] = f0 + 3.0 * (f0 - f1) - 3.0 * (f1 - f2) + (f2 - f3);
                    let (f0, f1, f2, f3) = (out[at(n)], out[at(n - 1)], out[at(n - 2)], out[at(n - 3)]);
                    out[at(n + 1)] = f0 + 3.0 * (f0 - f1) - 3.0 * (f1 - f2) + (f2 - f3);
                }
            }
        }
        out
    }

    /// First derivatives, `dim` values per point.
    pub fn gradient(&self, values: &[f64]) -> Vec<f64> {
        self.derivatives_impl(values, false).0
    }

    /// First derivatives (`dim` per point) and second derivatives (`dim^2`
    /// per point, symmetric).
    pub fn derivatives(&self, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.derivatives_impl(values, true)
    }

    /// Fourth-order first and second derivatives in the interior, by deferred
    /// correction of the second-order stencils with their leading error terms:
    /// `d_i = D_i - h_i^2/6 D_i D_ii`, `d_ii = D_ii - h_i^2/12 D_ii D_ii`,
    /// `d_ij = D_ij - h_i^2/6 D_ij D_ii - h_j^2/6 D_ij D_jj`.
    pub fn derivatives4(&self, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let dim = self.dim();
        let len = self.len();
        let (mut d1, mut d2) = self.derivatives(values);
        let hs: Vec<f64> = self.axes.iter().map(|a| a.spacing).collect();
        let corr: Vec<(Vec<f64>, Vec<f64>)> = (0..dim)
            .map(|a| self.derivatives(&(0..len).map(|p| d2[p * dim * dim + a * dim + a]).collect::<Vec<_>>()))
            .collect();
        for p in 0..len {
            for i in 0..dim {
                let h2 = hs[i] * hs[i];
                d1[p * dim + i] -= h2 / 6.0 * corr[i].0[p * dim + i];
                d2[p * dim * dim + i * dim + i] -= h2 / 12.0 * corr[i].1[p * dim * dim + i * dim + i];
                for j in (i + 1)..dim {
                    let k2 = hs[j] * hs[j];
                    let ij = p * dim * dim + i * dim + j;
                    let v = d2[ij] - h2 / 6.0 * corr[i].1[ij] - k2 / 6.0 * corr[j].1[ij];
                    d2[ij] = v;
                    d2[p * dim * dim + j * dim + i] = v;
                }
            }
        }
        (d1, d2)
    }

    fn derivatives_impl(&self, values: &[f64], second: bool) -> (Vec<f64>, Vec<f64>) {
        let dim = self.dim();
        let padded = self.pad(values);
        let len = self.len();
        let mut d1 = vec![0.0; len * dim];
        let mut d2 = if second { vec![0.0; len * dim * dim] } else { Vec::new() };
        let hs: Vec<f64> = self.axes.iter().map(|a| a.spacing).collect();
        for p in 0..len {
            let q = self.padded_index(p);
            let c = padded[q];
            for i in 0..dim {
                let si = self.padded_strides[i];
                let (fp, fm) = (padded[q + si], padded[q - si]);
                d1[p * dim + i] = (fp - fm) / (2.0 * hs[i]);
                if second {
                    d2[p * dim * dim + i * dim + i] = (fp - 2.0 * c + fm) / (hs[i] * hs[i]);
                    for j in (i + 1)..dim {
                        let sj = self.padded_strides[j];
                        let v = (padded[q + si + sj] - padded[q + si - sj] - padded[q - si + sj]
                            + padded[q - si - sj])
                            / (4.0 * hs[i] * hs[j]);
                        d2[p * dim * dim + i * dim + j] = v;
                        d2[p * dim * dim + j * dim + i] = v;
                    }
                }
            }
        }
        (d1, d2)
    }

    /// Conservative second-order discretization of `sum_ij d_i (k^{ij} d_j f)`
    /// where `coef` holds the symmetric `k^{ij}` per point. Diagonal fluxes use
    /// face-averaged coefficients and compact differences; cross fluxes use
    /// centered differences.
    pub fn divergence_form(&self, coef: &[f64], f: &[f64]) -> Vec<f64> {
        let dim = self.dim();
        let len = self.len();
        let fp = self.pad(f);
        let hs: Vec<f64> = self.axes.iter().map(|a| a.spacing).collect();
        let comps: Vec<Vec<f64>> = (0..dim * dim)
            .map(|ij| self.pad(&(0..len).map(|p| coef[p * dim * dim + ij]).collect::<Vec<_>>()))
            .collect();
        let grad = self.gradient(f);
        let df: Vec<Vec<f64>> =
            (0..dim).map(|j| self.pad(&(0..len).map(|p| grad[p * dim + j]).collect::<Vec<_>>())).collect();
        let mut out = vec![0.0; len];
        for (p, o) in out.iter_mut().enumerate() {
            let q = self.padded_index(p);
            let mut acc = 0.0;
            for i in 0..dim {
                let si = self.padded_strides[i];
                let kii = &comps[i * dim + i];
                let kp = 0.5 * (kii[q] + kii[q + si]);
                let km = 0.5 * (kii[q] + kii[q - si]);
                acc += (kp * (fp[q + si] - fp[q]) - km * (fp[q] - fp[q - si])) / (hs[i] * hs[i]);
                for j in 0..dim {
                    if j == i {
                        continue;
                    }
                    let kij = &comps[i * dim + j];
                    let plus = kij[q + si] * df[j][q + si];
                    let minus = kij[q - si] * df[j][q - si];
                    acc += (plus - minus) / (2.0 * hs[i]);
                }
            }
            *o = acc;
        }
        out
    }
}

/// Flat padded offsets of every index combination over all axes except `skip`.
fn offsets(ranges: &[(usize, usize)], strides: &[usize], skip: usize) -> Vec<usize> {
    let mut acc = vec![0usize];
    for (b, &(lo, hi)) in ranges.iter().enumerate() {
        if b == skip {
            continue;
        }
        acc = acc.iter().flat_map(|&base| (lo..hi).map(move |i| base + i * strides[b])).collect();
    }
    acc
}
