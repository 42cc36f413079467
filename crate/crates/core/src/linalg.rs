//! Small dense and banded linear algebra kernels.
//!
//! Everything here works on plain `f64` slices. The banded Cholesky
//! factorization exploits the lexicographic ordering of the grid: the
//! 5-point stencil has half-bandwidth `n1d`, and fill-in stays inside the
//! band.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::SparseOperator;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| f64::max(m, libm::fabs(*v)))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

/// Cholesky factor `A = L L^T` of a symmetric positive definite band matrix.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    // row i holds L[i][i-bw..=i], right-aligned: entry (i, j) at i*(bw+1) + (j + bw - i)
    data: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(op: &SparseOperator) -> Result<Self> {
        let n = op.dim();
        let bw = op.half_bandwidth();
        let w = bw + 1;
        let mut data = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in op.row(i) {
                if j <= i {
                    data[i * w + (j + bw - i)] = v;
                }
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = data[i * w + (j + bw - i)];
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= data[i * w + (k + bw - i)] * data[j * w + (k + bw - j)];
                }
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::LinearSolver {
                            iterations: i,
                            residual: s,
                        });
                    }
                    data[i * w + bw] = libm::sqrt(s);
                } else {
                    data[i * w + (j + bw - i)] = s / data[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.data[i * w + (k + bw - i)] * x[k];
            }
            x[i] = s / self.data[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n.min(i + bw + 1) {
                s -= self.data[k * w + (i + bw - k)] * x[k];
            }
            x[i] = s / self.data[i * w + bw];
        }
    }
}

/// Jacobi-preconditioned conjugate gradients.
///
/// Returns the solution and the number of iterations used. Fails with the
/// last relative residual when `max_iters` is exhausted.
pub fn pcg(
    op: &SparseOperator,
    rhs: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = op.dim();
    let mut x = vec![0.0; n];
    let rhs_norm = norm2(rhs);
    if rhs_norm == 0.0 {
        return Ok((x, 0));
    }
    let inv_diag: Vec<f64> = (0..n).map(|i| 1.0 / op.diagonal(i)).collect();
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iters {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::LinearSolver {
                iterations: it,
                residual: norm2(&r) / rhs_norm,
            });
        }
        let a = rz / pap;
        axpy(a, &p, &mut x);
        axpy(-a, &ap, &mut r);
        if norm2(&r) <= tol * rhs_norm {
            return Ok((x, it));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolver {
        iterations: max_iters,
        residual: norm2(&r) / rhs_norm,
    })
}

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    /// Solves `M x = b` by LU with partial pivoting. Consumes the matrix.
    pub fn lu_solve(mut self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let mut x = b.to_vec();
        let scale = self
            .data
            .iter()
            .fold(0.0, |m, v| f64::max(m, libm::fabs(*v)));
        for col in 0..n {
            let mut piv = col;
            let mut best = libm::fabs(self.get(col, col));
            for r in (col + 1)..n {
                let v = libm::fabs(self.get(r, col));
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if !(best > scale * 1e-300) || !best.is_finite() {
                return Err(Error::Newton(alloc::format!(
                    "singular matrix at column {col}"
                )));
            }
            if piv != col {
                for j in 0..n {
                    self.data.swap(col * n + j, piv * n + j);
                }
                x.swap(col, piv);
            }
            let d = self.get(col, col);
            for r in (col + 1)..n {
                let f = self.get(r, col) / d;
                if f != 0.0 {
                    for j in col..n {
                        let v = self.get(col, j);
                        self.data[r * n + j] -= f * v;
                    }
                    x[r] -= f * x[col];
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.get(i, j) * x[j];
            }
            x[i] = s / self.get(i, i);
        }
        Ok(x)
    }
}
