//! Discrete problem data and its algebra.
//!
//! All pairings are discrete L2 pairings weighted by the cell area `h^2`
//! and, for scenario-dependent quantities, by the scenario probability
//! `p_k`. Multipliers are stored as densities with respect to that measure,
//! so `<u, lambda> = sum_k p_k h^2 sum_i u_ki lambda_ki`.
//!
//! The problem, in slack mode, is
//!
//! ```text
//! min  (alpha/2)|x1|^2 + E[ (1/2)|y - y_D|^2 + (alpha'/2)|z|^2 ]
//! s.t. x1 in C1,  y_k, z_k in C2,  A_k y_k = x1 + g_k,  y_k - z_k <= psi_k
//! ```
//!
//! and in hard mode the slack is absent (`y_k <= psi_k`).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{FaceRule, Grid, SparseOperator};
use crate::linalg::{clamp, dot};
use crate::pde::LinearSolver;
use crate::scenario::{FieldSpec, Mode, RealizedScenario, ScenarioSet};

/// Membership slack for box tests.
pub const BOX_TOLERANCE: f64 = 1e-12;
/// Default tolerance on equality residuals in feasibility reports.
pub const EQUALITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ConstraintMode {
    /// Obstacle relaxed by a slack `z` penalized with `alpha'/2 |z|^2`.
    #[default]
    Slack,
    /// Pointwise constraint `y <= psi` without slack.
    Hard,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(untagged))]
pub enum BoundSpec {
    Uniform(f64),
    Nodal(Vec<f64>),
}

impl BoundSpec {
    fn realize(&self, n: usize, name: &str) -> Result<Vec<f64>> {
        match self {
            BoundSpec::Uniform(v) => Ok(vec![*v; n]),
            BoundSpec::Nodal(v) if v.len() == n => Ok(v.clone()),
            BoundSpec::Nodal(v) => Err(Error::Dimension(format!(
                "{name} has {} values, grid has {n} nodes",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoxSpec {
    pub lo: BoundSpec,
    pub hi: BoundSpec,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TargetSpec {
    /// Evaluated deterministically (every mode coefficient set to one).
    Spec(FieldSpec),
    Array(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSpec {
    pub n1d: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub face_rule: FaceRule,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioSpec {
    #[cfg_attr(feature = "serde", serde(rename = "S"))]
    pub count: usize,
    pub seed: u64,
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub probabilities: Option<Vec<f64>>,
    pub spec_a: FieldSpec,
    pub spec_g: FieldSpec,
    pub spec_psi: FieldSpec,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateBoxSpec {
    #[cfg_attr(feature = "serde", serde(rename = "M"))]
    pub bound: f64,
}

/// Serializable description of an instance; fields are regenerated from it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InstanceSpec {
    pub grid: GridSpec,
    pub scenarios: ScenarioSpec,
    pub c1: BoxSpec,
    pub c2: StateBoxSpec,
    #[cfg_attr(feature = "serde", serde(rename = "y_D"))]
    pub target: TargetSpec,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub mode: ConstraintMode,
}

impl InstanceSpec {
    /// The reference binding-obstacle instance on an `n1d` grid with `count`
    /// scenarios.
    pub fn binding(n1d: usize, count: usize, seed: u64) -> Self {
        Self {
            grid: GridSpec {
                n1d,
                face_rule: FaceRule::Arithmetic,
            },
            scenarios: ScenarioSpec {
                count,
                seed,
                probabilities: None,
                spec_a: FieldSpec::constant(1.0)
                    .with_modes(vec![
                        Mode::new(0.4, 1, 1),
                        Mode::new(0.2, 2, 1),
                        Mode::new(0.2, 1, 2),
                        Mode::new(0.1, 2, 2),
                    ])
                    .with_clip(0.2, 2.0),
                spec_g: FieldSpec::constant(0.0).with_modes(vec![
                    Mode::new(0.2, 1, 1),
                    Mode::new(0.1, 2, 1),
                    Mode::new(0.1, 1, 3),
                ]),
                spec_psi: FieldSpec::constant(0.09)
                    .with_modes(vec![Mode::new(0.005, 1, 1), Mode::new(0.005, 3, 1)]),
            },
            c1: BoxSpec {
                lo: BoundSpec::Uniform(-100.0),
                hi: BoundSpec::Uniform(100.0),
            },
            c2: StateBoxSpec { bound: 10.0 },
            target: TargetSpec::Spec(
                FieldSpec::constant(0.0).with_modes(vec![Mode::new(0.1, 1, 1)]),
            ),
            alpha: 1e-5,
            alpha_prime: 100.0,
            mode: ConstraintMode::Slack,
        }
    }

    /// Default instance: 16x16 grid, 8 scenarios.
    pub fn default_binding(seed: u64) -> Self {
        Self::binding(16, 8, seed)
    }

    /// Oracle-sized instance: 4x4 grid, 3 scenarios.
    pub fn tiny(seed: u64) -> Self {
        Self::binding(4, 3, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidInput(format!(
                "control weight alpha = {} must be > 0",
                self.alpha
            )));
        }
        if !(self.alpha_prime > 0.0) || !self.alpha_prime.is_finite() {
            return Err(Error::InvalidInput(format!(
                "slack weight alpha_prime = {} must be > 0",
                self.alpha_prime
            )));
        }
        if !(self.c2.bound > 0.0) || !self.c2.bound.is_finite() {
            return Err(Error::InvalidInput(format!(
                "state box C2 = [-M, M] must be bounded and nonempty, got M = {}",
                self.c2.bound
            )));
        }
        Ok(())
    }
}

/// First-stage control and per-scenario state and slack.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrimalPoint {
    pub x1: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

/// Multiplier densities: adjoint, obstacle, nonanticipativity.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DualPoint {
    pub lambda_e: Vec<Vec<f64>>,
    pub lambda_i: Vec<Vec<f64>>,
    pub rho: Vec<Vec<f64>>,
}

fn check_array(name: &str, a: &[Vec<f64>], s: usize, n: usize) -> Result<()> {
    if a.len() != s || a.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("{name} must be {s} x {n}")));
    }
    if a.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "{name} has non-finite entries"
        )));
    }
    Ok(())
}

impl PrimalPoint {
    pub fn zeros(scenarios: usize, n: usize) -> Self {
        Self {
            x1: vec![0.0; n],
            y: vec![vec![0.0; n]; scenarios],
            z: vec![vec![0.0; n]; scenarios],
        }
    }

    pub fn check(&self, inst: &Instance) -> Result<()> {
        let (s, n) = (inst.scenario_count(), inst.n());
        if self.x1.len() != n {
            return Err(Error::Dimension(format!("x1 must have {n} entries")));
        }
        if self.x1.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("x1 has non-finite entries".into()));
        }
        check_array("y", &self.y, s, n)?;
        check_array("z", &self.z, s, n)
    }
}

impl DualPoint {
    pub fn zeros(scenarios: usize, n: usize) -> Self {
        Self {
            lambda_e: vec![vec![0.0; n]; scenarios],
            lambda_i: vec![vec![0.0; n]; scenarios],
            rho: vec![vec![0.0; n]; scenarios],
        }
    }

    /// Builds a dual point with `rho = -lambda_e`.
    pub fn from_multipliers(lambda_e: Vec<Vec<f64>>, lambda_i: Vec<Vec<f64>>) -> Self {
        let rho = crate::solvers::extract_rho(&lambda_e);
        Self {
            lambda_e,
            lambda_i,
            rho,
        }
    }

    pub fn check(&self, inst: &Instance) -> Result<()> {
        let (s, n) = (inst.scenario_count(), inst.n());
        check_array("lambda_e", &self.lambda_e, s, n)?;
        check_array("lambda_i", &self.lambda_i, s, n)?;
        check_array("rho", &self.rho, s, n)
    }
}

/// `<u, lambda> = sum_k p_k h^2 sum_i u_ki lambda_ki`.
pub fn pairing(u: &[Vec<f64>], lambda: &[Vec<f64>], p: &[f64], h: f64) -> f64 {
    let h2 = h * h;
    u.iter()
        .zip(lambda)
        .zip(p)
        .map(|((a, b), pk)| pk * h2 * dot(a, b))
        .sum()
}

/// Weighted norm `||v||_h = sqrt(h^2 sum v_i^2)`.
pub fn norm_h(v: &[f64], h: f64) -> f64 {
    h * libm::sqrt(dot(v, v))
}

pub fn project_koplus(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.max(0.0)).collect()
}

/// `min_{v in [lo, hi]} (c/2) v^2 - b v`, returning `(argmin, value)`.
pub(crate) fn clamped_quadratic(c: f64, b: f64, lo: f64, hi: f64) -> (f64, f64) {
    let v = clamp(b / c, lo, hi);
    (v, 0.5 * c * v * v - b * v)
}

/// Per-constraint maximal violations of a primal point.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeasibilityReport {
    pub c1_violation: f64,
    pub c2_y_violation: f64,
    pub c2_z_violation: f64,
    /// `||A_k y_k - x1 - g_k||_h` per scenario.
    pub equality: Vec<f64>,
    pub inequality_violation: f64,
}

impl FeasibilityReport {
    pub fn max_equality(&self) -> f64 {
        self.equality.iter().fold(0.0, |m, v| m.max(*v))
    }

    pub fn is_feasible(&self, box_tol: f64, equality_tol: f64) -> bool {
        self.c1_violation <= box_tol
            && self.c2_y_violation <= box_tol
            && self.c2_z_violation <= box_tol
            && self.inequality_violation <= box_tol
            && self.max_equality() <= equality_tol
    }
}

/// Where a strict-feasibility margin is attained.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarginLocation {
    pub constraint: String,
    pub scenario: Option<usize>,
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SlaterReport {
    /// Smallest margin over all inequality and box constraints.
    pub margin: f64,
    pub success: bool,
    /// Location of the smallest margin (the violation when `!success`).
    pub location: Option<MarginLocation>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RecourseReport {
    pub per_probe: Vec<bool>,
    pub all_succeeded: bool,
    pub no_probes: bool,
}

struct MarginTracker {
    margin: f64,
    location: Option<MarginLocation>,
}

impl MarginTracker {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            location: None,
        }
    }

    fn offer(&mut self, value: f64, constraint: &str, scenario: Option<usize>, node: usize) {
        if value < self.margin {
            self.margin = value;
            self.location = Some(MarginLocation {
                constraint: constraint.into(),
                scenario,
                node,
            });
        }
    }

    fn finish(self) -> SlaterReport {
        SlaterReport {
            success: self.margin > 0.0,
            margin: self.margin,
            location: self.location,
        }
    }
}

/// A fully realized problem instance.
#[derive(Debug, Clone)]
pub struct Instance {
    spec: InstanceSpec,
    grid: Grid,
    scenarios: ScenarioSet,
    realized: Vec<RealizedScenario>,
    operators: Vec<SparseOperator>,
    factors: Vec<LinearSolver>,
    c1_lo: Vec<f64>,
    c1_hi: Vec<f64>,
    target: Vec<f64>,
}

impl Instance {
    pub fn build(spec: InstanceSpec) -> Result<Self> {
        spec.validate()?;
        let grid = Grid::new(spec.grid.n1d)?;
        let n = grid.len();
        let sc = &spec.scenarios;
        let scenarios = ScenarioSet::sample(
            sc.spec_a.clone(),
            sc.spec_g.clone(),
            sc.spec_psi.clone(),
            sc.count,
            sc.seed,
            sc.probabilities.clone(),
        )?;
        let lattice = grid.lattice_side() * grid.lattice_side();
        sc.spec_a.check_nodal("coefficient", lattice)?;
        sc.spec_g.check_nodal("load", n)?;
        sc.spec_psi.check_nodal("obstacle", n)?;
        let c1_lo = spec.c1.lo.realize(n, "c1.lo")?;
        let c1_hi = spec.c1.hi.realize(n, "c1.hi")?;
        if let Some(i) = (0..n)
            .find(|&i| !(c1_lo[i] <= c1_hi[i]) || !c1_lo[i].is_finite() || !c1_hi[i].is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "control box C1 must be nonempty and bounded: lo = {} > hi = {} at node {i}",
                c1_lo[i], c1_hi[i]
            )));
        }
        let target = match &spec.target {
            TargetSpec::Spec(f) => {
                f.validate("y_D")?;
                f.check_nodal("y_D", n)?;
                grid.sample_nodes_indexed(|i, s1, s2| f.evaluate_deterministic(i, s1, s2))
            }
            TargetSpec::Array(v) if v.len() == n => v.clone(),
            TargetSpec::Array(v) => {
                return Err(Error::Dimension(format!(
                    "y_D has {} values, grid has {n} nodes",
                    v.len()
                )));
            }
        };
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("y_D has non-finite entries".into()));
        }
        let realized = scenarios.realize(&grid);
        let operators = realized
            .iter()
            .enumerate()
            .map(|(k, r)| {
                SparseOperator::assemble(&grid, &r.coefficient_lattice, spec.grid.face_rule)
                    .map_err(|e| e.in_scenario(k))
            })
            .collect::<Result<Vec<_>>>()?;
        let factors = operators
            .iter()
            .enumerate()
            .map(|(k, a)| LinearSolver::new(a).map_err(|e| e.in_scenario(k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            grid,
            scenarios,
            realized,
            operators,
            factors,
            c1_lo,
            c1_hi,
            target,
        })
    }

    pub fn spec(&self) -> &InstanceSpec {
        &self.spec
    }

    fn rebuild(&self, f: impl FnOnce(&mut InstanceSpec)) -> Result<Self> {
        let mut spec = self.spec.clone();
        f(&mut spec);
        Self::build(spec)
    }

    pub fn with_mode(&self, mode: ConstraintMode) -> Result<Self> {
        self.rebuild(|s| s.mode = mode)
    }

    pub fn with_alpha_prime(&self, alpha_prime: f64) -> Result<Self> {
        self.rebuild(|s| s.alpha_prime = alpha_prime)
    }

    pub fn with_probabilities(&self, probabilities: Vec<f64>) -> Result<Self> {
        self.rebuild(|s| s.scenarios.probabilities = Some(probabilities))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn h(&self) -> f64 {
        self.grid.h()
    }

    pub fn scenario_count(&self) -> usize {
        self.scenarios.len()
    }

    pub fn scenarios(&self) -> &ScenarioSet {
        &self.scenarios
    }

    pub fn probabilities(&self) -> &[f64] {
        self.scenarios.probabilities()
    }

    pub fn realized(&self) -> &[RealizedScenario] {
        &self.realized
    }

    pub fn operator(&self, k: usize) -> &SparseOperator {
        &self.operators[k]
    }

    pub fn factor(&self, k: usize) -> &LinearSolver {
        &self.factors[k]
    }

    pub fn load(&self, k: usize) -> &[f64] {
        &self.realized[k].load
    }

    pub fn obstacle(&self, k: usize) -> &[f64] {
        &self.realized[k].obstacle
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn c1_lo(&self) -> &[f64] {
        &self.c1_lo
    }

    pub fn c1_hi(&self) -> &[f64] {
        &self.c1_hi
    }

    pub fn c2_bound(&self) -> f64 {
        self.spec.c2.bound
    }

    pub fn alpha(&self) -> f64 {
        self.spec.alpha
    }

    pub fn alpha_prime(&self) -> f64 {
        self.spec.alpha_prime
    }

    pub fn mode(&self) -> ConstraintMode {
        self.spec.mode
    }

    pub fn is_hard(&self) -> bool {
        self.spec.mode == ConstraintMode::Hard
    }

    pub fn project_c1(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.c1_lo.iter().zip(&self.c1_hi))
            .map(|(x, (lo, hi))| clamp(*x, *lo, *hi))
            .collect()
    }

    pub fn project_c2(&self, v: &[f64]) -> Vec<f64> {
        let m = self.c2_bound();
        v.iter().map(|x| clamp(*x, -m, m)).collect()
    }

    /// `E[v] = sum_k p_k v_k`, summed in scenario order.
    pub fn expectation(&self, v: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (vk, pk) in v.iter().zip(self.probabilities()) {
            for (o, x) in out.iter_mut().zip(vk) {
                *o += pk * x;
            }
        }
        out
    }

    /// `y_k - z_k - psi_k` (slack mode) or `y_k - psi_k` (hard mode).
    pub fn obstacle_gap(&self, k: usize, y: &[f64], z: &[f64]) -> Vec<f64> {
        let psi = self.obstacle(k);
        if self.is_hard() {
            y.iter().zip(psi).map(|(a, b)| a - b).collect()
        } else {
            y.iter()
                .zip(z)
                .zip(psi)
                .map(|((a, c), b)| a - c - b)
                .collect()
        }
    }

    /// `A_k y - x1 - g_k`.
    pub fn equality_residual(&self, k: usize, x1: &[f64], y: &[f64]) -> Vec<f64> {
        let mut r = self.operators[k].mul(y);
        for ((ri, xi), gi) in r.iter_mut().zip(x1).zip(self.load(k)) {
            *ri -= xi + gi;
        }
        r
    }

    pub fn pairing(&self, u: &[Vec<f64>], lambda: &[Vec<f64>]) -> f64 {
        pairing(u, lambda, self.probabilities(), self.h())
    }

    /// `(alpha/2)||x1||^2 + E[(1/2)||y - y_D||^2 + (alpha'/2)||z||^2]`, the
    /// slack term omitted in hard mode.
    pub fn objective(&self, x: &PrimalPoint) -> f64 {
        let h2 = self.grid.cell_area();
        let mut j = 0.5 * self.alpha() * h2 * dot(&x.x1, &x.x1);
        for k in 0..self.scenario_count() {
            let pk = self.probabilities()[k];
            let track: f64 = x.y[k]
                .iter()
                .zip(&self.target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let mut term = 0.5 * track;
            if !self.is_hard() {
                term += 0.5 * self.alpha_prime() * dot(&x.z[k], &x.z[k]);
            }
            j += pk * h2 * term;
        }
        j
    }

    /// Objective without the slack penalty.
    pub fn tracking_objective(&self, x: &PrimalPoint) -> f64 {
        let h2 = self.grid.cell_area();
        let mut j = 0.5 * self.alpha() * h2 * dot(&x.x1, &x.x1);
        for k in 0..self.scenario_count() {
            let track: f64 = x.y[k]
                .iter()
                .zip(&self.target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            j += self.probabilities()[k] * h2 * 0.5 * track;
        }
        j
    }

    /// Membership in the box set `X0` (C1 for `x1`, C2 for `y` and `z`).
    pub fn in_x0(&self, x: &PrimalPoint) -> bool {
        let m = self.c2_bound() + BOX_TOLERANCE;
        let c1 =
            x.x1.iter()
                .zip(self.c1_lo.iter().zip(&self.c1_hi))
                .all(|(v, (lo, hi))| *v >= lo - BOX_TOLERANCE && *v <= hi + BOX_TOLERANCE);
        let c2 = |a: &[Vec<f64>]| a.iter().flatten().all(|v| v.abs() <= m);
        c1 && c2(&x.y) && (self.is_hard() || c2(&x.z))
    }

    /// The Lagrangian, with `+inf` outside `X0` and `-inf` when `lambda_i`
    /// leaves the nonnegative cone.
    pub fn lagrangian(&self, x: &PrimalPoint, lambda: &DualPoint) -> f64 {
        if !self.in_x0(x) {
            return f64::INFINITY;
        }
        if lambda.lambda_i.iter().flatten().any(|v| *v < 0.0) {
            return f64::NEG_INFINITY;
        }
        let s = self.scenario_count();
        let eq: Vec<Vec<f64>> = (0..s)
            .map(|k| self.equality_residual(k, &x.x1, &x.y[k]))
            .collect();
        let ineq: Vec<Vec<f64>> = (0..s)
            .map(|k| self.obstacle_gap(k, &x.y[k], &x.z[k]))
            .collect();
        self.objective(x)
            + self.pairing(&eq, &lambda.lambda_e)
            + self.pairing(&ineq, &lambda.lambda_i)
    }

    /// `g(lambda) = inf_x L(x, lambda)` in closed form: every inner minimum
    /// is a clamped scalar quadratic per node.
    pub fn dual_function(&self, lambda: &DualPoint) -> f64 {
        if lambda.lambda_i.iter().flatten().any(|v| *v < 0.0) {
            return f64::NEG_INFINITY;
        }
        let h2 = self.grid.cell_area();
        let m = self.c2_bound();
        let alpha = self.alpha();
        let mean_le = self.expectation(&lambda.lambda_e);
        let mut g = 0.0;
        for i in 0..self.n() {
            g += h2 * clamped_quadratic(alpha, mean_le[i], self.c1_lo[i], self.c1_hi[i]).1;
        }
        for k in 0..self.scenario_count() {
            let pk = self.probabilities()[k];
            let le = &lambda.lambda_e[k];
            let li = &lambda.lambda_i[k];
            let ale = self.operators[k].mul(le);
            let mut term = 0.0;
            for i in 0..self.n() {
                // (1/2)(y - yD)^2 + q y  =  (1/2) y^2 - (yD - q) y + (1/2) yD^2
                let q = ale[i] + li[i];
                let yd = self.target[i];
                term += clamped_quadratic(1.0, yd - q, -m, m).1 + 0.5 * yd * yd;
                if !self.is_hard() {
                    term += clamped_quadratic(self.alpha_prime(), li[i], -m, m).1;
                }
                term -= le[i] * self.load(k)[i] + li[i] * self.obstacle(k)[i];
            }
            g += pk * h2 * term;
        }
        g
    }

    pub fn feasibility(&self, x: &PrimalPoint) -> FeasibilityReport {
        let m = self.c2_bound();
        let box_violation = |v: f64, lo: f64, hi: f64| (lo - v).max(v - hi).max(0.0);
        let c1_violation =
            x.x1.iter()
                .zip(self.c1_lo.iter().zip(&self.c1_hi))
                .fold(0.0, |acc: f64, (v, (lo, hi))| {
                    acc.max(box_violation(*v, *lo, *hi))
                });
        let c2 = |a: &[Vec<f64>]| {
            a.iter()
                .flatten()
                .fold(0.0, |acc: f64, v| acc.max(box_violation(*v, -m, m)))
        };
        let s = self.scenario_count();
        let equality = (0..s)
            .map(|k| norm_h(&self.equality_residual(k, &x.x1, &x.y[k]), self.h()))
            .collect();
        let inequality_violation = (0..s)
            .flat_map(|k| self.obstacle_gap(k, &x.y[k], &x.z[k]))
            .fold(0.0, |acc: f64, v| acc.max(v));
        FeasibilityReport {
            c1_violation,
            c2_y_violation: c2(&x.y),
            c2_z_violation: if self.is_hard() { 0.0 } else { c2(&x.z) },
            equality,
            inequality_violation,
        }
    }

    /// States `y_k = A_k^{-1}(x1 + g_k)` for every scenario.
    pub fn solve_states(&self, x1: &[f64]) -> Result<Vec<Vec<f64>>> {
        (0..self.scenario_count())
            .map(|k| {
                let rhs: Vec<f64> = x1.iter().zip(self.load(k)).map(|(a, b)| a + b).collect();
                self.factors[k].solve(&rhs).map_err(|e| e.in_scenario(k))
            })
            .collect()
    }

    fn second_stage_margins(&self, x1: &[f64], tracker: &mut MarginTracker) -> Result<()> {
        let m = self.c2_bound();
        let delta = f64::min(1.0, 0.5 * m);
        let states = self.solve_states(x1)?;
        for (k, y) in states.iter().enumerate() {
            let psi = self.obstacle(k);
            for i in 0..self.n() {
                let z = clamp(y[i] - psi[i] + delta, -m, m);
                tracker.offer(psi[i] + z - y[i], "obstacle", Some(k), i);
                tracker.offer(m - y[i].abs(), "state box", Some(k), i);
                tracker.offer(m - z.abs(), "slack box", Some(k), i);
            }
        }
        Ok(())
    }

    /// Strict-feasibility check: builds `x1` at the center of C1, solves the
    /// states, sets `z = clamp(y - psi + delta)` with `delta = min(1, M/2)`
    /// and reports the smallest margin over the obstacle and all boxes.
    pub fn slater_check(&self) -> Result<SlaterReport> {
        if self.is_hard() {
            return Err(Error::Precondition(
                "strict feasibility check needs a slack-mode instance".into(),
            ));
        }
        let x1: Vec<f64> = self
            .c1_lo
            .iter()
            .zip(&self.c1_hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let mut tracker = MarginTracker::new();
        for i in 0..self.n() {
            let interior = f64::min(x1[i] - self.c1_lo[i], self.c1_hi[i] - x1[i]);
            tracker.offer(interior, "control box", None, i);
        }
        self.second_stage_margins(&x1, &mut tracker)?;
        Ok(tracker.finish())
    }

    /// Sampled recourse check: for each probe `x1 in C1`, does the
    /// strict-feasibility construction of the second stage succeed?
    pub fn recourse_probe(&self, probes: &[Vec<f64>]) -> Result<RecourseReport> {
        let mut per_probe = Vec::with_capacity(probes.len());
        for (j, x1) in probes.iter().enumerate() {
            if x1.len() != self.n() {
                return Err(Error::Dimension(format!(
                    "probe {j} has {} entries",
                    x1.len()
                )));
            }
            let inside = x1
                .iter()
                .zip(self.c1_lo.iter().zip(&self.c1_hi))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi);
            if !inside {
                return Err(Error::InvalidInput(format!("probe {j} lies outside C1")));
            }
            let mut tracker = MarginTracker::new();
            self.second_stage_margins(x1, &mut tracker)?;
            per_probe.push(tracker.finish().success);
        }
        Ok(RecourseReport {
            all_succeeded: per_probe.iter().all(|b| *b),
            no_probes: probes.is_empty(),
            per_probe,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feasible_point(inst: &Instance, x1: Vec<f64>) -> PrimalPoint {
        let y = inst.solve_states(&x1).unwrap();
        let m = inst.c2_bound();
        let z = y
            .iter()
            .enumerate()
            .map(|(k, yk)| {
                yk.iter()
                    .zip(inst.obstacle(k))
                    .map(|(a, b)| clamp((a - b).max(0.0), -m, m))
                    .collect()
            })
            .collect();
        PrimalPoint { x1, y, z }
    }

    fn single_node() -> Instance {
        let mut spec = InstanceSpec::binding(1, 1, 0);
        spec.target = TargetSpec::Array(vec![0.0]);
        Instance::build(spec).unwrap()
    }

    #[test]
    fn objective_examples() {
        let inst = Instance::build(InstanceSpec::tiny(3)).unwrap();
        let (s, n) = (inst.scenario_count(), inst.n());
        let x = PrimalPoint {
            x1: vec![0.0; n],
            y: vec![inst.target().to_vec(); s],
            z: vec![vec![0.0; n]; s],
        };
        assert_eq!(inst.objective(&x), 0.0);

        let one = single_node();
        assert_eq!(one.h(), 0.5);
        let x = PrimalPoint {
            x1: vec![0.0],
            y: vec![vec![2.0]],
            z: vec![vec![0.0]],
        };
        assert!((one.objective(&x) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn slack_term_only_in_slack_mode() {
        let one = single_node();
        let x = PrimalPoint {
            x1: vec![0.0],
            y: vec![vec![0.0]],
            z: vec![vec![1.0]],
        };
        assert!((one.objective(&x) - 0.5 * one.alpha_prime() * 0.25).abs() < 1e-12);
        assert_eq!(one.tracking_objective(&x), 0.0);
        let hard = one.with_mode(ConstraintMode::Hard).unwrap();
        assert_eq!(hard.objective(&x), 0.0);
    }

    #[test]
    fn pairing_examples() {
        let ones = vec![vec![1.0; 9]; 2];
        assert!((pairing(&ones, &ones, &[0.5, 0.5], 0.25) - 9.0 / 16.0).abs() < 1e-15);
        assert_eq!(
            pairing(&ones, &vec![vec![0.0; 9]; 2], &[0.5, 0.5], 0.25),
            0.0
        );
    }

    #[test]
    fn projection_examples() {
        let mut spec = InstanceSpec::binding(1, 1, 0);
        spec.c2.bound = 1.0;
        let inst = Instance::build(spec).unwrap();
        assert_eq!(inst.project_c2(&[1.5, -0.2, -3.0]), vec![1.0, -0.2, -1.0]);
        assert_eq!(inst.project_c2(&[0.3, -0.2]), vec![0.3, -0.2]);
        assert_eq!(project_koplus(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
        assert_eq!(inst.project_c1(&[150.0]), vec![100.0]);
    }

    #[test]
    fn clamped_quadratic_minimizes() {
        assert_eq!(clamped_quadratic(2.0, 1.0, -1.0, 1.0), (0.5, -0.25));
        assert_eq!(clamped_quadratic(1.0, 5.0, -1.0, 1.0), (1.0, -4.5));
    }

    #[test]
    fn lagrangian_branches() {
        let inst = Instance::build(InstanceSpec::tiny(2)).unwrap();
        let (s, n) = (inst.scenario_count(), inst.n());
        let x = feasible_point(&inst, vec![0.5; n]);
        let j = inst.objective(&x);
        let zero = DualPoint::zeros(s, n);
        assert!((inst.lagrangian(&x, &zero) - j).abs() <= 1e-12 * j.abs().max(1.0));

        let mut lam = DualPoint::zeros(s, n);
        lam.lambda_e = vec![vec![3.0; n]; s];
        lam.lambda_i = vec![vec![2.0; n]; s];
        assert!(inst.lagrangian(&x, &lam) <= j + 1e-10);

        lam.lambda_i[1][3] = -1e-3;
        assert_eq!(inst.lagrangian(&x, &lam), f64::NEG_INFINITY);
        assert_eq!(inst.dual_function(&lam), f64::NEG_INFINITY);

        let mut outside = x.clone();
        outside.x1[0] = 101.0;
        assert_eq!(inst.lagrangian(&outside, &zero), f64::INFINITY);
    }

    #[test]
    fn dual_function_at_zero_vanishes() {
        let inst = Instance::build(InstanceSpec::tiny(4)).unwrap();
        let g = inst.dual_function(&DualPoint::zeros(inst.scenario_count(), inst.n()));
        assert!(g.abs() < 1e-18, "{g}");
    }

    #[test]
    fn feasibility_of_constructed_point() {
        let inst = Instance::build(InstanceSpec::tiny(5)).unwrap();
        let x = feasible_point(&inst, vec![-0.25; inst.n()]);
        let rep = inst.feasibility(&x);
        assert!(rep.max_equality() <= 1e-12 && rep.inequality_violation <= 1e-12);
        assert!(rep.is_feasible(BOX_TOLERANCE, EQUALITY_TOLERANCE));

        let mut bad = x.clone();
        bad.y[0][2] = inst.c2_bound() + 10.0;
        let rep = inst.feasibility(&bad);
        assert!((rep.c2_y_violation - 10.0).abs() < 1e-12);
        assert!(!rep.is_feasible(BOX_TOLERANCE, EQUALITY_TOLERANCE));
    }

    #[test]
    fn slater_examples() {
        let inst = Instance::build(InstanceSpec::default_binding(7)).unwrap();
        let rep = inst.slater_check().unwrap();
        assert!(rep.success && rep.margin >= 0.5, "{rep:?}");

        let mut spec = InstanceSpec::default_binding(7);
        spec.c2.bound = 1e-3;
        let rep = Instance::build(spec).unwrap().slater_check().unwrap();
        assert!(!rep.success);
        assert_eq!(rep.location.unwrap().constraint, "state box");

        let hard = inst.with_mode(ConstraintMode::Hard).unwrap();
        assert!(matches!(hard.slater_check(), Err(Error::Precondition(_))));
    }

    #[test]
    fn recourse_examples() {
        let inst = Instance::build(InstanceSpec::tiny(1)).unwrap();
        let n = inst.n();
        let rep = inst.recourse_probe(&[vec![0.0; n]]).unwrap();
        assert!(rep.all_succeeded && !rep.no_probes);
        let rep = inst.recourse_probe(&[]).unwrap();
        assert!(rep.all_succeeded && rep.no_probes);
        assert!(inst.recourse_probe(&[vec![200.0; n]]).is_err());

        // vertices of a one-node box: the states scale with the vertex value
        let mut spec = InstanceSpec::binding(1, 2, 9);
        spec.c1 = BoxSpec {
            lo: BoundSpec::Uniform(-1.0),
            hi: BoundSpec::Uniform(1.0),
        };
        let one = Instance::build(spec.clone()).unwrap();
        let ymax = one
            .solve_states(&[1.0])
            .unwrap()
            .into_iter()
            .chain(one.solve_states(&[-1.0]).unwrap())
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(
            one.recourse_probe(&[vec![-1.0], vec![1.0]])
                .unwrap()
                .all_succeeded
        );
        spec.c2.bound = 0.5 * ymax;
        let small = Instance::build(spec).unwrap();
        assert!(
            !small
                .recourse_probe(&[vec![-1.0], vec![1.0]])
                .unwrap()
                .all_succeeded
        );
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = InstanceSpec::tiny(1);
        spec.alpha = 0.0;
        assert!(matches!(Instance::build(spec), Err(Error::InvalidInput(_))));
        let mut spec = InstanceSpec::tiny(1);
        spec.c1.lo = BoundSpec::Uniform(2.0);
        spec.c1.hi = BoundSpec::Uniform(1.0);
        assert!(matches!(Instance::build(spec), Err(Error::InvalidInput(_))));
        let mut spec = InstanceSpec::tiny(1);
        spec.target = TargetSpec::Array(vec![0.0; 3]);
        assert!(matches!(Instance::build(spec), Err(Error::Dimension(_))));
        let mut spec = InstanceSpec::tiny(1);
        spec.scenarios.spec_psi = FieldSpec::nodal(vec![0.0; 15]);
        assert!(matches!(Instance::build(spec), Err(Error::Dimension(_))));
    }

    #[test]
    fn dimension_checks() {
        let inst = Instance::build(InstanceSpec::tiny(1)).unwrap();
        assert!(PrimalPoint::zeros(3, 16).check(&inst).is_ok());
        assert!(PrimalPoint::zeros(2, 16).check(&inst).is_err());
        let mut lam = DualPoint::zeros(3, 16);
        lam.rho[0][0] = f64::NAN;
        assert!(matches!(lam.check(&inst), Err(Error::InvalidInput(_))));
    }
}
