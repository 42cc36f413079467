//! Scenario-subset view of the problem shared by the first-order solvers.
//!
//! The first-stage block is generalized to `(c/2)|x1|^2 - <lin, x1>` so that
//! the progressive-hedging subproblems reuse the same machinery. The PDE
//! constraint is preconditioned as `y_j - L_j x1 - b_j = 0` with
//! `L_j = A_j^{-1}` and `b_j = L_j g_j`; its multiplier `mu_j` relates to the
//! adjoint density by `lambda_e = L_j mu_j`.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;

use crate::error::Result;
use crate::linalg::{clamp, dot};
use crate::pde::LinearMap;
use crate::problem::{norm_h, Instance};

/// One vector per scenario block.
type Blocks = Vec<Vec<f64>>;

#[derive(Debug, Clone)]
pub(crate) struct Iterate {
    pub x1: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct Duals {
    pub mu: Vec<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
}

impl Duals {
    pub fn zeros(s: usize, n: usize) -> Self {
        Self {
            mu: vec![vec![0.0; n]; s],
            nu: vec![vec![0.0; n]; s],
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.mu
            .iter()
            .chain(&self.nu)
            .flatten()
            .fold(0.0, |m: f64, v| {
                if v.is_finite() {
                    m.max(v.abs())
                } else {
                    f64::INFINITY
                }
            })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Residuals {
    pub r1: f64,
    pub r3: f64,
    pub r3p: f64,
    pub r4: f64,
    pub r5_sign: f64,
    pub r5_feas: f64,
    pub r5_comp: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        [
            self.r1,
            self.r3,
            self.r3p,
            self.r4,
            self.r5_feas,
            self.r5_comp,
            -self.r5_sign,
        ]
        .into_iter()
        .fold(
            0.0,
            |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v) },
        )
    }
}

pub(crate) struct Model<'a> {
    pub inst: &'a Instance,
    ids: Vec<usize>,
    weights: Vec<f64>,
    curvature: f64,
    lin: Vec<f64>,
    b: Vec<Vec<f64>>,
}

impl<'a> Model<'a> {
    /// The full problem: all scenarios, first-stage curvature `alpha`.
    pub fn full(inst: &'a Instance) -> Result<Self> {
        let ids: Vec<usize> = (0..inst.scenario_count()).collect();
        Self::new(
            inst,
            ids,
            inst.probabilities().to_vec(),
            inst.alpha(),
            vec![0.0; inst.n()],
        )
    }

    /// A single scenario with weight one.
    pub fn scenario(inst: &'a Instance, k: usize, curvature: f64, lin: Vec<f64>) -> Result<Self> {
        Self::new(inst, vec![k], vec![1.0], curvature, lin)
    }

    fn new(
        inst: &'a Instance,
        ids: Vec<usize>,
        weights: Vec<f64>,
        curvature: f64,
        lin: Vec<f64>,
    ) -> Result<Self> {
        let b = ids
            .iter()
            .map(|&k| inst.factor(k).solve(inst.load(k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            inst,
            ids,
            weights,
            curvature,
            lin,
            b,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn n(&self) -> usize {
        self.inst.n()
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    pub fn linear_term(&self) -> &[f64] {
        &self.lin
    }

    pub fn set_linear_term(&mut self, lin: Vec<f64>) {
        self.lin = lin;
    }

    pub fn slack(&self) -> bool {
        !self.inst.is_hard()
    }

    pub fn inverse(&self, j: usize, v: &mut [f64]) -> Result<()> {
        self.inst.factor(self.ids[j]).solve_in_place(v)
    }

    /// `sum_j w_j L_j v_j`.
    pub fn mean_inverse(&self, v: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n()];
        let mut buf = vec![0.0; self.n()];
        for (j, vj) in v.iter().enumerate() {
            buf.copy_from_slice(vj);
            self.inverse(j, &mut buf)?;
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += self.weights[j] * b;
            }
        }
        Ok(out)
    }

    /// Adjoint densities `lambda_e_j = L_j mu_j`.
    pub fn adjoint_densities(&self, mu: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        mu.iter()
            .enumerate()
            .map(|(j, m)| {
                let mut v = m.clone();
                self.inverse(j, &mut v)?;
                Ok(v)
            })
            .collect()
    }

    /// Preconditioned constraint multipliers from adjoint densities.
    pub fn duals_from_densities(&self, lambda_e: &[Vec<f64>], lambda_i: &[Vec<f64>]) -> Duals {
        Duals {
            mu: self
                .ids
                .iter()
                .zip(lambda_e)
                .map(|(&k, le)| self.inst.operator(k).mul(le))
                .collect(),
            nu: lambda_i
                .iter()
                .map(|v| v.iter().map(|x| x.max(0.0)).collect())
                .collect(),
        }
    }

    pub fn x1_from_mean(&self, mean: &[f64]) -> Vec<f64> {
        let (lo, hi) = (self.inst.c1_lo(), self.inst.c1_hi());
        (0..self.n())
            .map(|i| clamp((mean[i] + self.lin[i]) / self.curvature, lo[i], hi[i]))
            .collect()
    }

    /// Exact minimizer of the Lagrangian in the primal variables.
    pub fn argmin(&self, d: &Duals) -> Result<Iterate> {
        let mean = self.mean_inverse(&d.mu)?;
        let x1 = self.x1_from_mean(&mean);
        let m = self.inst.c2_bound();
        let yd = self.inst.target();
        let y = (0..self.len())
            .map(|j| {
                (0..self.n())
                    .map(|i| clamp(yd[i] - d.mu[j][i] - d.nu[j][i], -m, m))
                    .collect()
            })
            .collect();
        let z = if self.slack() {
            let ap = self.inst.alpha_prime();
            d.nu.iter()
                .map(|v| v.iter().map(|x| clamp(x / ap, -m, m)).collect())
                .collect()
        } else {
            vec![vec![0.0; self.n()]; self.len()]
        };
        Ok(Iterate { x1, y, z })
    }

    /// `y_j - L_j x1 - b_j` and `y_j - z_j - psi_j` (the dual gradient).
    pub fn constraint_values(&self, x: &Iterate) -> Result<(Blocks, Blocks)> {
        let mut eq = Vec::with_capacity(self.len());
        let mut ineq = Vec::with_capacity(self.len());
        let mut lx = vec![0.0; self.n()];
        for j in 0..self.len() {
            lx.copy_from_slice(&x.x1);
            self.inverse(j, &mut lx)?;
            eq.push(
                (0..self.n())
                    .map(|i| x.y[j][i] - lx[i] - self.b[j][i])
                    .collect(),
            );
            ineq.push(self.inst.obstacle_gap(self.ids[j], &x.y[j], &x.z[j]));
        }
        Ok((eq, ineq))
    }

    pub fn objective(&self, x: &Iterate) -> f64 {
        let h2 = self.inst.grid().cell_area();
        let mut v = h2 * (0.5 * self.curvature * dot(&x.x1, &x.x1) - dot(&self.lin, &x.x1));
        let yd = self.inst.target();
        for j in 0..self.len() {
            let mut t: f64 = x.y[j]
                .iter()
                .zip(yd)
                .map(|(a, b)| 0.5 * (a - b) * (a - b))
                .sum();
            if self.slack() {
                t += 0.5 * self.inst.alpha_prime() * dot(&x.z[j], &x.z[j]);
            }
            v += self.weights[j] * h2 * t;
        }
        v
    }

    /// `sum_j w_j h^2 <a_j, b_j>`.
    pub fn pairing(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        let h2 = self.inst.grid().cell_area();
        a.iter()
            .zip(b)
            .zip(&self.weights)
            .map(|((u, v), w)| w * h2 * dot(u, v))
            .sum()
    }

    /// Projection residuals of the model's optimality system.
    pub fn residuals(&self, x: &Iterate, d: &Duals) -> Result<Residuals> {
        let h = self.inst.h();
        let m = self.inst.c2_bound();
        let (lo, hi) = (self.inst.c1_lo(), self.inst.c1_hi());
        let mean = self.mean_inverse(&d.mu)?;
        let dx: Vec<f64> = (0..self.n())
            .map(|i| {
                let g = self.curvature * x.x1[i] - self.lin[i] - mean[i];
                x.x1[i] - clamp(x.x1[i] - g, lo[i], hi[i])
            })
            .collect();
        let mut r = Residuals {
            r1: norm_h(&dx, h),
            r5_sign: 0.0,
            ..Residuals::default()
        };
        let yd = self.inst.target();
        let h2 = h * h;
        let mut comp = 0.0;
        for j in 0..self.len() {
            let (y, z, mu, nu) = (&x.y[j], &x.z[j], &d.mu[j], &d.nu[j]);
            let dy: Vec<f64> = (0..self.n())
                .map(|i| y[i] - clamp(y[i] - (y[i] - yd[i] + mu[i] + nu[i]), -m, m))
                .collect();
            r.r3 = r.r3.max(norm_h(&dy, h));
            if self.slack() {
                let ap = self.inst.alpha_prime();
                let dz: Vec<f64> = (0..self.n())
                    .map(|i| z[i] - clamp(z[i] - (ap * z[i] - nu[i]), -m, m))
                    .collect();
                r.r3p = r.r3p.max(norm_h(&dz, h));
            }
            let k = self.ids[j];
            r.r4 =
                r.r4.max(norm_h(&self.inst.equality_residual(k, &x.x1, y), h));
            let gap = self.inst.obstacle_gap(k, y, z);
            r.r5_feas = gap.iter().fold(r.r5_feas, |a, v| a.max(*v));
            r.r5_sign = nu.iter().fold(r.r5_sign, |a, v| a.min(*v));
            comp += self.weights[j] * h2 * dot(&gap, nu);
        }
        r.r5_comp = comp.abs();
        Ok(r)
    }

    /// Upper bound on the model objective over the box set; a dual value
    /// above it certifies that the constraints cannot be met.
    pub fn objective_bound(&self) -> f64 {
        let h2 = self.inst.grid().cell_area();
        let m = self.inst.c2_bound();
        let (lo, hi) = (self.inst.c1_lo(), self.inst.c1_hi());
        let mut v = 0.0;
        for i in 0..self.n() {
            let a = lo[i].abs().max(hi[i].abs());
            v += h2 * (0.5 * self.curvature * a * a + self.lin[i].abs() * a);
        }
        let total: f64 = self.weights.iter().sum();
        for yd in self.inst.target() {
            let e = m + yd.abs();
            v += total * h2 * 0.5 * e * e;
        }
        if self.slack() {
            v += total * h2 * self.n() as f64 * 0.5 * self.inst.alpha_prime() * m * m;
        }
        v
    }

    /// Dual function value at `d` given the matching argmin `x`.
    pub fn dual_value(&self, x: &Iterate, d: &Duals) -> Result<f64> {
        let (eq, ineq) = self.constraint_values(x)?;
        Ok(self.objective(x) + self.pairing(&d.mu, &eq) + self.pairing(&d.nu, &ineq))
    }
}

/// `D^(1/2) K^T` from the dual space to the primal space, with per-block
/// scales; its squared norm bounds the curvature of the dual function
/// (`D` = inverse primal curvatures) or the step condition of the classic
/// iteration (`D` = primal step ratios).
pub(crate) struct ScaledAdjoint<'m, 'a> {
    pub model: &'m Model<'a>,
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
    pub failed: Cell<bool>,
}

impl ScaledAdjoint<'_, '_> {
    fn blocks(&self) -> usize {
        if self.model.slack() {
            2 * self.model.len() + 1
        } else {
            self.model.len() + 1
        }
    }
}

impl LinearMap for ScaledAdjoint<'_, '_> {
    fn dim_in(&self) -> usize {
        2 * self.model.len() * self.model.n()
    }

    fn dim_out(&self) -> usize {
        self.blocks() * self.model.n()
    }

    fn forward(&self, v: &[f64], out: &mut [f64]) {
        let (s, n) = (self.model.len(), self.model.n());
        let (mu, nu) = v.split_at(s * n);
        let mus: Vec<Vec<f64>> = mu.chunks(n).map(|c| c.to_vec()).collect();
        match self.model.mean_inverse(&mus) {
            Ok(mean) => {
                for i in 0..n {
                    out[i] = -self.sx * mean[i];
                }
            }
            Err(_) => self.failed.set(true),
        }
        for j in 0..s {
            for i in 0..n {
                out[n + j * n + i] = self.sy * (mu[j * n + i] + nu[j * n + i]);
                if self.model.slack() {
                    out[n + (s + j) * n + i] = -self.sz * nu[j * n + i];
                }
            }
        }
    }

    fn adjoint(&self, u: &[f64], out: &mut [f64]) {
        let (s, n) = (self.model.len(), self.model.n());
        let x = &u[..n];
        let mut lx = vec![0.0; n];
        for j in 0..s {
            lx.copy_from_slice(x);
            if self.model.inverse(j, &mut lx).is_err() {
                self.failed.set(true);
            }
            for i in 0..n {
                let y = u[n + j * n + i];
                out[j * n + i] = -self.sx * lx[i] + self.sy * y;
                let z = if self.model.slack() {
                    u[n + (s + j) * n + i]
                } else {
                    0.0
                };
                out[(s + j) * n + i] = self.sy * y - self.sz * z;
            }
        }
    }

    fn inner_in(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.model.n();
        let s = self.model.len();
        let mut acc = 0.0;
        for (c, (ca, cb)) in a.chunks(n).zip(b.chunks(n)).enumerate() {
            acc += self.model.weights[c % s] * dot(ca, cb);
        }
        acc
    }
}
