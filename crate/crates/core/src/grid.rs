//! Interior-node finite-difference grid on the unit square and the 5-point
//! flux-form operator `-div(a grad y)` with homogeneous Dirichlet data.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::error::{Error, Result};

/// Uniform grid of `n1d x n1d` interior nodes on `(0,1)^2`.
///
/// Interior node `(i, j)`, `0 <= i, j < n1d`, has index `i + n1d * j` and
/// coordinates `((i + 1) h, (j + 1) h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n1d: usize,
    h: f64,
}

impl Grid {
    pub fn new(n1d: usize) -> Result<Self> {
        if n1d == 0 {
            return Err(Error::EmptyGrid);
        }
        Ok(Self {
            n1d,
            h: 1.0 / (n1d as f64 + 1.0),
        })
    }

    pub fn n1d(&self) -> usize {
        self.n1d
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of unknowns, `n1d^2`.
    pub fn len(&self) -> usize {
        self.n1d * self.n1d
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Weight of one node in the discrete L2 pairing, `h^2`.
    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn node_coords(&self, k: usize) -> (f64, f64) {
        let i = k % self.n1d;
        let j = k / self.n1d;
        ((i + 1) as f64 * self.h, (j + 1) as f64 * self.h)
    }

    /// Evaluates `f` at every interior node.
    pub fn sample_nodes(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.sample_nodes_indexed(|_, s1, s2| f(s1, s2))
    }

    /// As [`Grid::sample_nodes`], also passing the node index.
    pub fn sample_nodes_indexed(&self, f: impl Fn(usize, f64, f64) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let (s1, s2) = self.node_coords(k);
                f(k, s1, s2)
            })
            .collect()
    }

    /// Side length of the lattice including the boundary ring, `n1d + 2`.
    pub fn lattice_side(&self) -> usize {
        self.n1d + 2
    }

    /// Evaluates `f` on the full `(n1d+2)^2` lattice, boundary included.
    /// Lattice point `(i, j)`, `0 <= i, j <= n1d + 1`, sits at `(i h, j h)`
    /// and is stored at `i + (n1d + 2) j`.
    pub fn sample_lattice(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.sample_lattice_indexed(|_, s1, s2| f(s1, s2))
    }

    /// As [`Grid::sample_lattice`], also passing the storage index.
    pub fn sample_lattice_indexed(&self, f: impl Fn(usize, f64, f64) -> f64) -> Vec<f64> {
        let m = self.lattice_side();
        let mut out = Vec::with_capacity(m * m);
        for j in 0..m {
            for i in 0..m {
                out.push(f(i + m * j, i as f64 * self.h, j as f64 * self.h));
            }
        }
        out
    }

    /// Restricts a lattice array to the interior nodes.
    pub fn interior_of(&self, lattice: &[f64]) -> Vec<f64> {
        let m = self.lattice_side();
        (0..self.len())
            .map(|k| {
                let i = k % self.n1d + 1;
                let j = k / self.n1d + 1;
                lattice[i + m * j]
            })
            .collect()
    }
}

/// How the coefficient on a cell face is formed from its two nodal values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FaceRule {
    #[default]
    Arithmetic,
    Harmonic,
}

impl FaceRule {
    fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            FaceRule::Arithmetic => 0.5 * (a + b),
            FaceRule::Harmonic => 2.0 * a * b / (a + b),
        }
    }
}

/// Square sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    half_bandwidth: usize,
}

impl SparseOperator {
    /// Assembles `-div(a grad .)` on the interior nodes.
    ///
    /// `lattice_coeff` holds `a` on the `(n1d+2)^2` lattice (see
    /// [`Grid::sample_lattice`]); faces between an interior node and the
    /// boundary use the boundary lattice value.
    pub fn assemble(grid: &Grid, lattice_coeff: &[f64], rule: FaceRule) -> Result<Self> {
        let m = grid.lattice_side();
        if lattice_coeff.len() != m * m {
            return Err(Error::Dimension(alloc::format!(
                "coefficient lattice has {} values, expected {}",
                lattice_coeff.len(),
                m * m
            )));
        }
        if let Some((index, &value)) = lattice_coeff.iter().enumerate().find(|(_, v)| !(**v > 0.0))
        {
            return Err(Error::Ellipticity { index, value });
        }
        let n1d = grid.n1d();
        let inv_h2 = 1.0 / grid.cell_area();
        let a = |i: usize, j: usize| lattice_coeff[i + m * j];
        let mut row_ptr = Vec::with_capacity(grid.len() + 1);
        let mut col_idx = Vec::with_capacity(5 * grid.len());
        let mut values = Vec::with_capacity(5 * grid.len());
        row_ptr.push(0);
        for j in 1..=n1d {
            for i in 1..=n1d {
                let c = a(i, j);
                let west = rule.combine(c, a(i - 1, j));
                let east = rule.combine(c, a(i + 1, j));
                let south = rule.combine(c, a(i, j - 1));
                let north = rule.combine(c, a(i, j + 1));
                let k = (i - 1) + n1d * (j - 1);
                // ascending column order: south, west, diag, east, north
                if j > 1 {
                    col_idx.push(k - n1d);
                    values.push(-south * inv_h2);
                }
                if i > 1 {
                    col_idx.push(k - 1);
                    values.push(-west * inv_h2);
                }
                col_idx.push(k);
                values.push((west + east + south + north) * inv_h2);
                if i < n1d {
                    col_idx.push(k + 1);
                    values.push(-east * inv_h2);
                }
                if j < n1d {
                    col_idx.push(k + n1d);
                    values.push(-north * inv_h2);
                }
                row_ptr.push(col_idx.len());
            }
        }
        let half_bandwidth = if n1d > 1 { n1d } else { 0 };
        Ok(Self {
            n: grid.len(),
            row_ptr,
            col_idx,
            values,
            half_bandwidth,
        })
    }

    /// Builds an operator from coordinate triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::Dimension(alloc::format!(
                    "entry ({i}, {j}) outside {n}x{n}"
                )));
            }
            match rows[i].iter_mut().find(|(c, _)| *c == j) {
                Some(e) => e.1 += v,
                None => rows[i].push((j, v)),
            }
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut half_bandwidth = 0;
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|e| e.0);
            for (j, v) in row {
                half_bandwidth = half_bandwidth.max(i.abs_diff(j));
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
            half_bandwidth,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn half_bandwidth(&self) -> usize {
        self.half_bandwidth
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|(c, _)| *c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.entry(i, i)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| {
            self.row(i)
                .all(|(j, v)| libm::fabs(v - self.entry(j, i)) <= tol * (1.0 + libm::fabs(v)))
        })
    }

    /// `out = A x`
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            out[i] = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply(x, &mut out);
        out
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// Coordinate-format dump: one `row col value` line per stored entry,
    /// values with 17 significant digits.
    pub fn to_coo_text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let _ = writeln!(s, "{i} {j} {v:.16e}");
            }
        }
        s
    }
}
