//! Solution algorithms: the default first-order primal-dual method,
//! progressive hedging, and a dense log-barrier reference.

mod barrier;
mod model;
mod params;
mod pdhg;
mod ph;

use alloc::vec::Vec;

pub use barrier::solve_barrier_reference;
pub use params::{
    Algorithm, HistoryRow, PdhgVariant, PenaltyRule, SolveReport, SolveStatus, SolverParams,
};
pub use ph::{penalty_value, solve_progressive_hedging};

use crate::error::{Error, Result};
use crate::kkt::kkt_residuals;
use crate::problem::{DualPoint, Instance, PrimalPoint};
use model::{Duals, Model};

/// `rho_k = -lambda_e_k`: the control enters every scenario constraint
/// through the identity.
pub fn extract_rho(lambda_e: &[Vec<f64>]) -> Vec<Vec<f64>> {
    lambda_e
        .iter()
        .map(|v| v.iter().map(|x| -x).collect())
        .collect()
}

fn start_duals(model: &Model, inst: &Instance, params: &SolverParams) -> Result<Duals> {
    match &params.warm_start {
        Some(lam) => {
            lam.check(inst)?;
            Ok(model.duals_from_densities(&lam.lambda_e, &lam.lambda_i))
        }
        None => Ok(Duals::zeros(model.len(), model.n())),
    }
}

/// Primal-dual solve of the full problem (slack or hard mode, as stored in
/// the instance).
///
/// Terminates once the certified residuals of
/// [`kkt_residuals`](crate::kkt::kkt_residuals) are all below
/// `params.kkt_tolerance`; on an iteration cap the best iterate seen is
/// returned.
pub fn solve_pdhg(
    inst: &Instance,
    params: &SolverParams,
) -> Result<(PrimalPoint, DualPoint, SolveReport)> {
    params.validate()?;
    let model = Model::full(inst)?;
    let mut start = start_duals(&model, inst, params)?;
    let mut inner_tol = params.kkt_tolerance;
    let mut used = 0;
    let mut history = Vec::new();
    loop {
        let out = pdhg::run(&model, params, inner_tol, params.max_iters - used, start)?;
        used += out.iterations;
        history.extend(out.history);
        let lambda = DualPoint::from_multipliers(
            model.adjoint_densities(&out.duals.mu)?,
            out.duals.nu.clone(),
        );
        let x = PrimalPoint {
            x1: out.x.x1,
            y: out.x.y,
            z: out.x.z,
        };
        let kkt = kkt_residuals(inst, &x, &lambda);
        let mut status = out.status;
        if status.is_converged() && !kkt.certify(params.kkt_tolerance) {
            // model residuals and certified residuals differ by rounding
            if used < params.max_iters && inner_tol > 1e-15 {
                inner_tol *= 0.1;
                start = out.duals;
                continue;
            }
            status = SolveStatus::IterationLimit;
        }
        let report = SolveReport {
            algorithm: Algorithm::Pdhg,
            iterations: used,
            status,
            objective: kkt.objective,
            dual_value: inst.dual_function(&lambda),
            kkt,
            tolerance: params.kkt_tolerance,
            weight_drift: None,
            history,
        };
        return Ok((x, lambda, report));
    }
}

/// [`solve_pdhg`] on a hard-mode instance (no slack, `y_k <= psi_k`).
pub fn solve_hard(
    inst: &Instance,
    params: &SolverParams,
) -> Result<(PrimalPoint, DualPoint, SolveReport)> {
    if !inst.is_hard() {
        return Err(Error::Precondition(
            "solve_hard needs a hard-mode instance".into(),
        ));
    }
    solve_pdhg(inst, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::InstanceSpec;
    use alloc::vec;

    #[test]
    fn rho_is_negated_adjoint() {
        assert_eq!(extract_rho(&[vec![1.0, 1.0]]), vec![vec![-1.0, -1.0]]);
        let rho = extract_rho(&[vec![0.3; 4], vec![-0.3; 4]]);
        let mean: Vec<f64> = (0..4).map(|i| 0.5 * rho[0][i] + 0.5 * rho[1][i]).collect();
        assert!(mean.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn tiny_solve_certifies() {
        let inst = Instance::build(InstanceSpec::tiny(1)).unwrap();
        let (_, _, rep) = solve_pdhg(&inst, &SolverParams::default()).unwrap();
        assert!(rep.converged(), "{rep:?}");
        assert!(rep.kkt.certify(1e-6));
    }

    #[test]
    fn classic_variant_certifies() {
        let inst = Instance::build(InstanceSpec::tiny(2)).unwrap();
        let params = SolverParams {
            variant: PdhgVariant::Classic,
            ..SolverParams::default()
        };
        let (x, _, rep) = solve_pdhg(&inst, &params).unwrap();
        assert!(rep.converged(), "{:?} after {}", rep.kkt, rep.iterations);
        let (xa, _, _) = solve_pdhg(&inst, &SolverParams::default()).unwrap();
        let d: Vec<f64> = x.x1.iter().zip(&xa.x1).map(|(a, b)| a - b).collect();
        assert!(crate::problem::norm_h(&d, inst.h()) < 1e-4);
    }

    #[test]
    fn one_iteration_hits_cap() {
        let inst = Instance::build(InstanceSpec::tiny(1)).unwrap();
        let params = SolverParams {
            max_iters: 1,
            ..SolverParams::default()
        };
        let (_, _, rep) = solve_pdhg(&inst, &params).unwrap();
        assert_eq!(rep.status, SolveStatus::IterationLimit);
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn solve_hard_rejects_slack_instance() {
        let inst = Instance::build(InstanceSpec::tiny(1)).unwrap();
        assert!(matches!(
            solve_hard(&inst, &SolverParams::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn unreachable_obstacle_is_flagged() {
        let mut spec = InstanceSpec::tiny(1);
        spec.mode = crate::ConstraintMode::Hard;
        // psi below -M: no state in C2 can satisfy y <= psi
        spec.scenarios.spec_psi = crate::FieldSpec::constant(-20.0);
        let inst = Instance::build(spec).unwrap();
        let (_, _, rep) = solve_hard(&inst, &SolverParams::default()).unwrap();
        assert_eq!(rep.status, SolveStatus::InfeasibilitySuspected);
    }
}
