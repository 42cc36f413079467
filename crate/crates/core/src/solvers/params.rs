use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kkt::KktReport;
use crate::problem::DualPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Algorithm {
    #[default]
    Pdhg,
    ProgressiveHedging,
    Barrier,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Pdhg => "pdhg",
            Algorithm::ProgressiveHedging => "ph",
            Algorithm::Barrier => "barrier",
        }
    }
}

/// Iteration scheme used by [`solve_pdhg`](super::solve_pdhg).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PdhgVariant {
    /// Exact primal minimization, Nesterov-extrapolated projected dual step
    /// of length `1/L` with adaptive restarts. The constraint is
    /// preconditioned as `y_k - A_k^{-1} x1 - A_k^{-1} g_k = 0`.
    #[default]
    Accelerated,
    /// Fixed-step Chambolle-Pock iteration on the same preconditioned
    /// splitting, block primal steps, `sigma tau ||K T^(1/2)||^2 <= safety`.
    Classic,
}

/// Penalty parameter of progressive hedging.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PenaltyRule {
    Fixed(f64),
    /// `r = sqrt(alpha (alpha + lambda_max(E[A^-2])))`, the geometric mean of
    /// the extreme curvatures of the reduced first-stage problem.
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverParams {
    pub algorithm: Algorithm,
    pub max_iters: usize,
    pub kkt_tolerance: f64,
    pub variant: PdhgVariant,
    /// Bound on `sigma tau ||K||^2` for the classic variant.
    pub step_safety: f64,
    /// Ratio of the first-stage primal step to the second-stage step.
    pub x1_step_ratio: f64,
    /// Residuals are evaluated every this many iterations.
    pub check_every: usize,
    /// Dual sup-norm treated as divergence.
    pub divergence_threshold: f64,
    pub ph_penalty: PenaltyRule,
    pub ph_inner_tolerance: f64,
    pub ph_max_outer: usize,
    pub barrier_mu0: f64,
    pub barrier_shrink: f64,
    pub barrier_mu_final: f64,
    pub barrier_size_limit: usize,
    pub record_history: bool,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub warm_start: Option<DualPoint>,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Pdhg,
            max_iters: 200_000,
            kkt_tolerance: 1e-6,
            variant: PdhgVariant::Accelerated,
            step_safety: 0.99,
            x1_step_ratio: 100.0,
            check_every: 10,
            divergence_threshold: 1e8,
            ph_penalty: PenaltyRule::Auto,
            ph_inner_tolerance: 1e-9,
            ph_max_outer: 5_000,
            barrier_mu0: 1.0,
            barrier_shrink: 0.2,
            barrier_mu_final: 1e-12,
            barrier_size_limit: 2000,
            record_history: false,
            warm_start: None,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_iters", self.max_iters as f64),
            ("kkt_tolerance", self.kkt_tolerance),
            ("step_safety", self.step_safety),
            ("x1_step_ratio", self.x1_step_ratio),
            ("check_every", self.check_every as f64),
            ("divergence_threshold", self.divergence_threshold),
            ("ph_inner_tolerance", self.ph_inner_tolerance),
            ("ph_max_outer", self.ph_max_outer as f64),
            ("barrier_mu0", self.barrier_mu0),
            ("barrier_shrink", self.barrier_shrink),
            ("barrier_mu_final", self.barrier_mu_final),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.kkt_tolerance >= 1.0 {
            return Err(Error::InvalidInput("kkt_tolerance must be < 1".into()));
        }
        if self.step_safety >= 1.0 {
            return Err(Error::InvalidInput("step_safety must be < 1".into()));
        }
        if self.barrier_shrink >= 1.0 {
            return Err(Error::InvalidInput("barrier_shrink must be < 1".into()));
        }
        if let PenaltyRule::Fixed(r) = self.ph_penalty {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "PH penalty must be positive, got {r}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    InfeasibilitySuspected,
    NumericalFailure,
}

impl SolveStatus {
    pub fn is_converged(self) -> bool {
        self == SolveStatus::Converged
    }
}

/// One line of the iterate history.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistoryRow {
    pub iteration: usize,
    pub max_residual: f64,
    pub r4: f64,
    pub r5_feas: f64,
    pub r5_comp: f64,
    pub objective: f64,
    pub dual_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolveReport {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub status: SolveStatus,
    pub kkt: KktReport,
    pub objective: f64,
    pub dual_value: f64,
    pub tolerance: f64,
    /// Progressive hedging: consensus drift `|sum_k p_k w_k|_h` caused by the
    /// C1 projection.
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub weight_drift: Option<f64>,
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Vec::is_empty")
    )]
    pub history: Vec<HistoryRow>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status.is_converged()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        assert!(SolverParams::default().validate().is_ok());
        assert_eq!(Algorithm::ProgressiveHedging.name(), "ph");
    }

    #[test]
    fn bad_values_rejected() {
        let cases = [
            SolverParams {
                kkt_tolerance: 0.0,
                ..SolverParams::default()
            },
            SolverParams {
                kkt_tolerance: 2.0,
                ..SolverParams::default()
            },
            SolverParams {
                max_iters: 0,
                ..SolverParams::default()
            },
            SolverParams {
                step_safety: 1.0,
                ..SolverParams::default()
            },
            SolverParams {
                barrier_shrink: f64::NAN,
                ..SolverParams::default()
            },
            SolverParams {
                ph_penalty: PenaltyRule::Fixed(-1.0),
                ..SolverParams::default()
            },
        ];
        for p in cases {
            assert!(matches!(p.validate(), Err(Error::InvalidInput(_))), "{p:?}");
        }
    }
}
