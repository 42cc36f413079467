//! Linear solves with the assembled elliptic operator, the manufactured
//! solution convergence study, and power-iteration operator norms.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{FaceRule, Grid, SparseOperator};
use crate::linalg::{self, BandCholesky};

/// Above this many unknowns the solver switches from banded Cholesky to
/// Jacobi-preconditioned CG.
pub const CHOLESKY_LIMIT: usize = 10_000;

pub const CG_TOLERANCE: f64 = 1e-12;

/// A factored (or iterative) solver for one SPD operator, reusable across
/// right-hand sides.
#[derive(Debug, Clone)]
pub enum LinearSolver {
    Cholesky(BandCholesky),
    Cg {
        op: SparseOperator,
        max_iters: usize,
    },
}

impl LinearSolver {
    pub fn new(op: &SparseOperator) -> Result<Self> {
        if op.dim() <= CHOLESKY_LIMIT {
            Ok(LinearSolver::Cholesky(BandCholesky::factor(op)?))
        } else {
            Ok(LinearSolver::Cg {
                op: op.clone(),
                max_iters: 20 * op.dim(),
            })
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LinearSolver::Cholesky(c) => c.dim(),
            LinearSolver::Cg { op, .. } => op.dim(),
        }
    }

    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<()> {
        match self {
            LinearSolver::Cholesky(c) => {
                c.solve_in_place(x);
                Ok(())
            }
            LinearSolver::Cg { op, max_iters } => {
                let (sol, _) = linalg::pcg(op, x, CG_TOLERANCE, *max_iters)?;
                x.copy_from_slice(&sol);
                Ok(())
            }
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}

/// Solves `A y = rhs` for an SPD operator.
pub fn solve_linear(op: &SparseOperator, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != op.dim() {
        return Err(Error::Dimension(alloc::format!(
            "right-hand side has {} entries, operator is {}x{}",
            rhs.len(),
            op.dim(),
            op.dim()
        )));
    }
    LinearSolver::new(op)?.solve(rhs)
}

/// One refinement level of the manufactured-solution study.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MmsRow {
    pub n1d: usize,
    pub h: f64,
    pub max_error: f64,
    /// Observed order against the previous level; `None` on the first row.
    pub rate: Option<f64>,
}

/// Solves `-Laplace(y) = 2 pi^2 sin(pi s1) sin(pi s2)` on each level and
/// measures the max-norm error against `sin(pi s1) sin(pi s2)`.
pub fn mms_convergence_study(levels: &[usize]) -> Result<Vec<MmsRow>> {
    if levels.is_empty() {
        return Err(Error::InvalidInput("no refinement levels given".into()));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "refinement levels must be strictly increasing".into(),
        ));
    }
    let exact = |s1: f64, s2: f64| libm::sin(PI * s1) * libm::sin(PI * s2);
    let mut rows: Vec<MmsRow> = Vec::with_capacity(levels.len());
    for &n1d in levels {
        let grid = Grid::new(n1d)?;
        let op = SparseOperator::assemble(
            &grid,
            &grid.sample_lattice(|_, _| 1.0),
            FaceRule::Arithmetic,
        )?;
        let rhs = grid.sample_nodes(|s1, s2| 2.0 * PI * PI * exact(s1, s2));
        let y = solve_linear(&op, &rhs)?;
        let truth = grid.sample_nodes(exact);
        let max_error = y
            .iter()
            .zip(&truth)
            .fold(0.0, |m, (a, b)| f64::max(m, libm::fabs(a - b)));
        let rate = rows
            .last()
            .map(|prev| libm::log(prev.max_error / max_error) / libm::log(prev.h / grid.h()));
        rows.push(MmsRow {
            n1d,
            h: grid.h(),
            max_error,
            rate,
        });
    }
    Ok(rows)
}

/// A linear map between two finite-dimensional inner-product spaces, given
/// by its forward and adjoint actions.
pub trait LinearMap {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn forward(&self, x: &[f64], out: &mut [f64]);
    /// Adjoint with respect to the inner products of the two spaces.
    fn adjoint(&self, y: &[f64], out: &mut [f64]);
    /// Inner product on the input space.
    fn inner_in(&self, a: &[f64], b: &[f64]) -> f64 {
        linalg::dot(a, b)
    }
}

pub const NORM_SAFETY: f64 = 1.01;

/// Power-iteration estimate of `||K||`, multiplied by [`NORM_SAFETY`].
///
/// Iterates on `K* K` until the Rayleigh quotient changes by at most
/// `1e-6` relative, or 500 iterations.
pub fn operator_norm_estimate(map: &impl LinearMap) -> f64 {
    let n = map.dim_in();
    if n == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * libm::sin(0.7 * i as f64 + 0.3))
        .collect();
    let mut kv = vec![0.0; map.dim_out()];
    let mut w = vec![0.0; n];
    let nv = libm::sqrt(map.inner_in(&v, &v));
    v.iter_mut().for_each(|x| *x /= nv);
    let mut rayleigh = 0.0;
    for _ in 0..500 {
        map.forward(&v, &mut kv);
        map.adjoint(&kv, &mut w);
        let next = map.inner_in(&v, &w);
        let nw = libm::sqrt(map.inner_in(&w, &w));
        if nw == 0.0 || !(next > 0.0) {
            return 0.0;
        }
        let done = libm::fabs(next - rayleigh) <= 1e-6 * next;
        rayleigh = next;
        if done {
            break;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    libm::sqrt(rayleigh) * NORM_SAFETY
}

/// A sparse operator viewed as a map on unweighted coordinates.
impl LinearMap for SparseOperator {
    fn dim_in(&self) -> usize {
        self.dim()
    }
    fn dim_out(&self) -> usize {
        self.dim()
    }
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        self.apply(x, out);
    }
    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        // transpose product; the assembled operators are symmetric but
        // triplet-built ones need not be
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.dim() {
            for (j, v) in self.row(i) {
                out[j] += v * y[i];
            }
        }
    }
}
