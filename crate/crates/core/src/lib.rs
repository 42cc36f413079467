//! Solver core for two-stage convex stochastic optimal control with
//! almost-sure pointwise state constraints.
//!
//! The model problem is an elliptic PDE on the unit square with a random
//! diffusion coefficient, a deterministic first-stage control `x1`, and
//! per-scenario states `y` constrained by an obstacle `psi` (optionally
//! relaxed by a penalized slack `z`). The crate computes primal solutions
//! together with integrable multipliers (adjoint `lambda_e`, obstacle
//! `lambda_i`, nonanticipativity `rho`) and certifies them against the
//! full optimality system.
//!
//! The crate is `no_std` (with `alloc`); file formats, timing and the CLI
//! live in the `sassc` companion crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod grid;
pub mod homotopy;
pub mod kkt;
pub mod linalg;
pub mod pde;
pub mod problem;
pub mod scenario;
pub mod solvers;

pub use error::{Error, Result};
pub use grid::{FaceRule, Grid, SparseOperator};
pub use homotopy::{fit_decay_rate, run_homotopy, DecayFit, HomotopyLevel, HomotopyReport};
pub use kkt::{
    duality_gap, kkt_residuals, multiplier_l1_norms, stationarity_fixed_points,
    FixedPointResiduals, KktReport, MultiplierNorms,
};
pub use pde::{
    mms_convergence_study, operator_norm_estimate, solve_linear, LinearMap, LinearSolver, MmsRow,
};
pub use problem::{ConstraintMode, DualPoint, Instance, InstanceSpec, PrimalPoint};
pub use scenario::{FieldSpec, Mode, ScenarioSet};
pub use solvers::{
    extract_rho, solve_barrier_reference, solve_hard, solve_pdhg, solve_progressive_hedging,
    Algorithm, PenaltyRule, SolveReport, SolveStatus, SolverParams,
};
