//! Certification of a primal-dual pair against the optimality system.
//!
//! Variational inequalities are scored as natural projection residuals with
//! unit step; complementarity as the integrated product `<lambda_i, gap>`.

use alloc::vec::Vec;

use crate::linalg::clamp;
use crate::problem::{norm_h, DualPoint, Instance, PrimalPoint};

/// Column order of [`KktReport::csv_row`].
pub const CSV_COLUMNS: [&str; 13] = [
    "r1",
    "r2",
    "r3",
    "r3p",
    "r4",
    "r5_sign",
    "r5_feas",
    "r5_comp",
    "duality_gap",
    "objective",
    "l1_lambda_e",
    "l1_lambda_i",
    "l1_rho",
];

/// Weighted L1 norms `sum_k p_k h^2 sum_i |lambda_ki|`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MultiplierNorms {
    pub lambda_e: f64,
    pub lambda_i: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KktReport {
    /// First-stage variational inequality.
    pub r1: f64,
    /// Consistency `rho + lambda_e = 0`.
    pub r2: f64,
    /// State stationarity.
    pub r3: f64,
    /// Slack stationarity; absent in hard mode.
    pub r3p: Option<f64>,
    /// PDE residual.
    pub r4: f64,
    /// Smallest obstacle multiplier entry.
    pub r5_sign: f64,
    /// Largest obstacle violation.
    pub r5_feas: f64,
    /// Integrated complementarity `|<lambda_i, y - z - psi>|`.
    pub r5_comp: f64,
    /// `j(x) - g(lambda)`, as computed.
    pub duality_gap: f64,
    pub objective: f64,
    pub l1_norms: MultiplierNorms,
}

impl KktReport {
    /// Largest of the residuals that must vanish, with `r5_sign` counted as
    /// its negative part.
    pub fn max_residual(&self) -> f64 {
        [
            self.r1,
            self.r2,
            self.r3,
            self.r3p.unwrap_or(0.0),
            self.r4,
            self.r5_feas,
            self.r5_comp,
            (-self.r5_sign).max(0.0),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// All residuals at most `tol` and `r5_sign >= -tol`.
    pub fn certify(&self, tol: f64) -> bool {
        let ok = [
            self.r1,
            self.r2,
            self.r3,
            self.r3p.unwrap_or(0.0),
            self.r4,
            self.r5_feas,
            self.r5_comp,
        ]
        .iter()
        .all(|r| *r <= tol);
        ok && self.r5_sign >= -tol
    }

    /// `gap / (1 + |objective|)`.
    pub fn relative_gap(&self) -> f64 {
        self.duality_gap / (1.0 + self.objective.abs())
    }

    pub fn gap_certified(&self, tol: f64) -> bool {
        self.relative_gap() <= tol
    }

    /// Values in [`CSV_COLUMNS`] order; `r3p` is NaN in hard mode.
    pub fn csv_row(&self) -> [f64; 13] {
        [
            self.r1,
            self.r2,
            self.r3,
            self.r3p.unwrap_or(f64::NAN),
            self.r4,
            self.r5_sign,
            self.r5_feas,
            self.r5_comp,
            self.duality_gap,
            self.objective,
            self.l1_norms.lambda_e,
            self.l1_norms.lambda_i,
            self.l1_norms.rho,
        ]
    }
}

/// Distances to the closed-form minimizers of the quadratic subproblems.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FixedPointResiduals {
    pub x1: f64,
    pub y: f64,
    pub z: f64,
}

fn weighted_l1(a: &[Vec<f64>], p: &[f64], h: f64) -> f64 {
    let h2 = h * h;
    a.iter()
        .zip(p)
        .map(|(v, pk)| pk * h2 * v.iter().map(|x| x.abs()).sum::<f64>())
        .sum()
}

pub fn multiplier_l1_norms(inst: &Instance, lambda: &DualPoint) -> MultiplierNorms {
    let (p, h) = (inst.probabilities(), inst.h());
    MultiplierNorms {
        lambda_e: weighted_l1(&lambda.lambda_e, p, h),
        lambda_i: weighted_l1(&lambda.lambda_i, p, h),
        rho: weighted_l1(&lambda.rho, p, h),
    }
}

/// `objective(x) - dual_function(lambda)`; `+inf` if `lambda_i` has a
/// negative entry.
pub fn duality_gap(inst: &Instance, x: &PrimalPoint, lambda: &DualPoint) -> f64 {
    inst.objective(x) - inst.dual_function(lambda)
}

pub fn kkt_residuals(inst: &Instance, x: &PrimalPoint, lambda: &DualPoint) -> KktReport {
    let h = inst.h();
    let m = inst.c2_bound();
    let alpha = inst.alpha();
    let s = inst.scenario_count();

    let mean_rho = inst.expectation(&lambda.rho);
    let step: Vec<f64> =
        x.x1.iter()
            .zip(&mean_rho)
            .map(|(v, r)| v - (alpha * v + r))
            .collect();
    let proj = inst.project_c1(&step);
    let d: Vec<f64> = x.x1.iter().zip(&proj).map(|(a, b)| a - b).collect();
    let r1 = norm_h(&d, h);

    let mut r2: f64 = 0.0;
    let mut r3: f64 = 0.0;
    let mut r3p: f64 = 0.0;
    let mut r4: f64 = 0.0;
    let mut r5_sign = f64::INFINITY;
    let mut r5_feas: f64 = 0.0;
    let mut comp = 0.0;
    for k in 0..s {
        let (y, z) = (&x.y[k], &x.z[k]);
        let (le, li) = (&lambda.lambda_e[k], &lambda.lambda_i[k]);
        let sum: Vec<f64> = lambda.rho[k].iter().zip(le).map(|(a, b)| a + b).collect();
        r2 = r2.max(norm_h(&sum, h));

        let ale = inst.operator(k).mul(le);
        let dy: Vec<f64> = (0..inst.n())
            .map(|i| {
                let grad = y[i] - inst.target()[i] + ale[i] + li[i];
                y[i] - clamp(y[i] - grad, -m, m)
            })
            .collect();
        r3 = r3.max(norm_h(&dy, h));

        if !inst.is_hard() {
            let dz: Vec<f64> = (0..inst.n())
                .map(|i| z[i] - clamp(z[i] - (inst.alpha_prime() * z[i] - li[i]), -m, m))
                .collect();
            r3p = r3p.max(norm_h(&dz, h));
        }

        r4 = r4.max(norm_h(&inst.equality_residual(k, &x.x1, y), h));

        let gap = inst.obstacle_gap(k, y, z);
        r5_sign = li.iter().fold(r5_sign, |m, v| m.min(*v));
        r5_feas = gap.iter().fold(r5_feas, |m, v| m.max(*v));
        comp +=
            inst.probabilities()[k] * h * h * gap.iter().zip(li).map(|(a, b)| a * b).sum::<f64>();
    }
    if s == 0 {
        r5_sign = 0.0;
    }
    KktReport {
        r1,
        r2,
        r3,
        r3p: (!inst.is_hard()).then_some(r3p),
        r4,
        r5_sign,
        r5_feas,
        r5_comp: comp.abs(),
        duality_gap: duality_gap(inst, x, lambda),
        objective: inst.objective(x),
        l1_norms: multiplier_l1_norms(inst, lambda),
    }
}

/// `||x1 - Proj_C1(-E[rho]/alpha)||_h`, `max_k ||y_k - Proj_C2(y_D - A_k
/// lambda_e - lambda_i)||_h` and `max_k ||z_k - Proj_C2(lambda_i/alpha')||_h`
/// (zero in hard mode).
pub fn stationarity_fixed_points(
    inst: &Instance,
    x: &PrimalPoint,
    lambda: &DualPoint,
) -> FixedPointResiduals {
    let h = inst.h();
    let m = inst.c2_bound();
    let mean_rho = inst.expectation(&lambda.rho);
    let target: Vec<f64> = mean_rho.iter().map(|r| -r / inst.alpha()).collect();
    let x1_star = inst.project_c1(&target);
    let dx: Vec<f64> = x.x1.iter().zip(&x1_star).map(|(a, b)| a - b).collect();
    let mut ry: f64 = 0.0;
    let mut rz: f64 = 0.0;
    for k in 0..inst.scenario_count() {
        let ale = inst.operator(k).mul(&lambda.lambda_e[k]);
        let li = &lambda.lambda_i[k];
        let dy: Vec<f64> = (0..inst.n())
            .map(|i| x.y[k][i] - clamp(inst.target()[i] - ale[i] - li[i], -m, m))
            .collect();
        ry = ry.max(norm_h(&dy, h));
        if !inst.is_hard() {
            let dz: Vec<f64> = (0..inst.n())
                .map(|i| x.z[k][i] - clamp(li[i] / inst.alpha_prime(), -m, m))
                .collect();
            rz = rz.max(norm_h(&dz, h));
        }
    }
    FixedPointResiduals {
        x1: norm_h(&dx, h),
        y: ry,
        z: rz,
    }
}
