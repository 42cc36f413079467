//! Progressive hedging over the scenarios.
//!
//! Each scenario subproblem carries its own copy `x1^k` of the control and
//! minimizes `J1(x1^k) + J2 + <w_k, x1^k> + (r/2)|x1^k - xhat|^2` under the
//! scenario's constraints. The consensus `xhat` is the projected mean and
//! the weights accumulate `r (x1^k - xhat)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;

use super::model::{Duals, Model};
use super::params::{Algorithm, PenaltyRule, SolveReport, SolveStatus, SolverParams};
use super::pdhg;
use crate::error::{Error, Result};
use crate::kkt::kkt_residuals;
use crate::pde::{operator_norm_estimate, LinearMap};
use crate::problem::{norm_h, DualPoint, Instance, PrimalPoint};

/// `x -> (sqrt(p_k) A_k^{-1} x)_k`.
struct StackedInverse<'a> {
    inst: &'a Instance,
    failed: Cell<bool>,
}

impl LinearMap for StackedInverse<'_> {
    fn dim_in(&self) -> usize {
        self.inst.n()
    }

    fn dim_out(&self) -> usize {
        self.inst.n() * self.inst.scenario_count()
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        let n = self.inst.n();
        for (k, chunk) in out.chunks_mut(n).enumerate() {
            chunk.copy_from_slice(x);
            if self.inst.factor(k).solve_in_place(chunk).is_err() {
                self.failed.set(true);
            }
            let w = libm::sqrt(self.inst.probabilities()[k]);
            chunk.iter_mut().for_each(|v| *v *= w);
        }
    }

    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        let n = self.inst.n();
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut buf = vec![0.0; n];
        for (k, chunk) in y.chunks(n).enumerate() {
            buf.copy_from_slice(chunk);
            if self.inst.factor(k).solve_in_place(&mut buf).is_err() {
                self.failed.set(true);
            }
            let w = libm::sqrt(self.inst.probabilities()[k]);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += w * b;
            }
        }
    }
}

/// Multiple of the geometric-mean penalty used by [`PenaltyRule::Auto`];
/// tuned on the seeded instances.
pub const AUTO_PENALTY_SCALE: f64 = 4.0;

/// The penalty `r` selected by `rule` for `inst`.
///
/// `Auto` scales `sqrt(alpha (alpha + ||L||^2))`, where `L` stacks
/// `sqrt(p_k) A_k^{-1}`: the geometric mean of the extreme curvatures of the
/// reduced first-stage objective.
pub fn penalty_value(inst: &Instance, rule: PenaltyRule) -> Result<f64> {
    match rule {
        PenaltyRule::Fixed(r) => Ok(r),
        PenaltyRule::Auto => {
            let map = StackedInverse {
                inst,
                failed: Cell::new(false),
            };
            let norm = operator_norm_estimate(&map);
            if map.failed.get() {
                return Err(Error::LinearSolver {
                    iterations: 0,
                    residual: f64::NAN,
                });
            }
            let alpha = inst.alpha();
            Ok(AUTO_PENALTY_SCALE * libm::sqrt(alpha * (alpha + norm * norm)))
        }
    }
}

fn subproblem_failed(k: usize, status: SolveStatus) -> Error {
    Error::InvalidInput(format!("subproblem solve ended with status {status:?}")).in_scenario(k)
}

/// Progressive hedging on a slack-mode instance.
///
/// Returns the consensus solution, the per-scenario multipliers, the report
/// and the final weights `w` (`S x n`).
pub fn solve_progressive_hedging(
    inst: &Instance,
    params: &SolverParams,
) -> Result<(PrimalPoint, DualPoint, SolveReport, Vec<Vec<f64>>)> {
    params.validate()?;
    if inst.is_hard() {
        return Err(Error::Precondition(
            "progressive hedging needs a slack-mode instance".into(),
        ));
    }
    let (s, n, h) = (inst.scenario_count(), inst.n(), inst.h());
    let r = penalty_value(inst, params.ph_penalty)?;
    let tol = params.kkt_tolerance;
    let inner_tol = params.ph_inner_tolerance.min(0.1 * tol);

    let mut models = (0..s)
        .map(|k| Model::scenario(inst, k, inst.alpha(), vec![0.0; n]))
        .collect::<Result<Vec<_>>>()?;
    let mut duals: Vec<Duals> = match &params.warm_start {
        Some(lam) => {
            lam.check(inst)?;
            (0..s)
                .map(|k| models[k].duals_from_densities(&lam.lambda_e[k..=k], &lam.lambda_i[k..=k]))
                .collect()
        }
        None => (0..s).map(|_| Duals::zeros(1, n)).collect(),
    };
    let mut w = vec![vec![0.0; n]; s];
    let mut xhat = vec![0.0; n];
    let mut controls = vec![vec![0.0; n]; s];
    let mut states = PrimalPoint::zeros(s, n);
    let mut drift: f64 = 0.0;
    let mut status = SolveStatus::IterationLimit;
    let mut outer = 0;

    while outer < params.ph_max_outer {
        if outer == 1 {
            // the first pass solves the unpenalized scenario problems
            let proximal = (0..s)
                .map(|k| Model::scenario(inst, k, inst.alpha() + r, vec![0.0; n]))
                .collect::<Result<Vec<_>>>()?;
            models = proximal;
        }
        for k in 0..s {
            if outer > 0 {
                let lin: Vec<f64> = (0..n).map(|i| r * xhat[i] - w[k][i]).collect();
                models[k].set_linear_term(lin);
            }
            let out = pdhg::run(
                &models[k],
                params,
                inner_tol,
                params.max_iters,
                duals[k].clone(),
            )?;
            if !out.status.is_converged() {
                return Err(subproblem_failed(k, out.status));
            }
            controls[k] = out.x.x1;
            states.y[k] = out.x.y.into_iter().next().unwrap_or_default();
            states.z[k] = out.x.z.into_iter().next().unwrap_or_default();
            duals[k] = out.duals;
        }
        outer += 1;
        let prev = core::mem::replace(&mut xhat, inst.project_c1(&inst.expectation(&controls)));
        for k in 0..s {
            for i in 0..n {
                w[k][i] += r * (controls[k][i] - xhat[i]);
            }
        }
        let mean_w = inst.expectation(&w);
        drift = drift.max(norm_h(&mean_w, h));

        let primal_res = (0..s)
            .map(|k| {
                let d: Vec<f64> = controls[k].iter().zip(&xhat).map(|(a, b)| a - b).collect();
                norm_h(&d, h)
            })
            .fold(0.0, f64::max);
        let step: Vec<f64> = xhat.iter().zip(&prev).map(|(a, b)| a - b).collect();
        let dual_res = if outer == 1 {
            0.0
        } else {
            r * norm_h(&step, h)
        };
        if primal_res <= 0.1 * tol && dual_res <= 0.1 * tol {
            let (x, lambda) = assemble(inst, &models, &duals, &xhat, &states)?;
            if kkt_residuals(inst, &x, &lambda).certify(tol) {
                status = SolveStatus::Converged;
                break;
            }
        }
        if !xhat.iter().all(|v| v.is_finite()) {
            status = SolveStatus::NumericalFailure;
            break;
        }
    }

    let (x, lambda) = assemble(inst, &models, &duals, &xhat, &states)?;
    let kkt = kkt_residuals(inst, &x, &lambda);
    let report = SolveReport {
        algorithm: Algorithm::ProgressiveHedging,
        iterations: outer,
        status,
        objective: kkt.objective,
        dual_value: inst.dual_function(&lambda),
        kkt,
        tolerance: tol,
        weight_drift: Some(drift),
        history: Vec::new(),
    };
    Ok((x, lambda, report, w))
}

fn assemble(
    inst: &Instance,
    models: &[Model],
    duals: &[Duals],
    xhat: &[f64],
    states: &PrimalPoint,
) -> Result<(PrimalPoint, DualPoint)> {
    let mut lambda_e = Vec::with_capacity(inst.scenario_count());
    let mut lambda_i = Vec::with_capacity(inst.scenario_count());
    for (m, d) in models.iter().zip(duals) {
        lambda_e.push(m.adjoint_densities(&d.mu)?.remove(0));
        lambda_i.push(d.nu[0].clone());
    }
    let x = PrimalPoint {
        x1: xhat.to_vec(),
        y: states.y.clone(),
        z: states.z.clone(),
    };
    Ok((x, DualPoint::from_multipliers(lambda_e, lambda_i)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::InstanceSpec;

    #[test]
    fn single_scenario_needs_one_pass() {
        let inst = Instance::build(InstanceSpec::binding(4, 1, 3)).unwrap();
        let (_, _, rep, w) = solve_progressive_hedging(&inst, &SolverParams::default()).unwrap();
        assert!(rep.converged(), "{rep:?}");
        assert_eq!(rep.iterations, 1);
        assert!(w.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn hard_mode_rejected() {
        let inst = Instance::build(InstanceSpec::tiny(1))
            .unwrap()
            .with_mode(crate::ConstraintMode::Hard)
            .unwrap();
        assert!(solve_progressive_hedging(&inst, &SolverParams::default()).is_err());
    }

    #[test]
    fn auto_penalty_is_positive() {
        let inst = Instance::build(InstanceSpec::tiny(1)).unwrap();
        let r = penalty_value(&inst, PenaltyRule::Auto).unwrap();
        assert!(r > inst.alpha() && r < 1.0);
        assert_eq!(penalty_value(&inst, PenaltyRule::Fixed(0.5)).unwrap(), 0.5);
    }
}
