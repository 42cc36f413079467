//! Continuation in the slack weight `alpha'` towards the hard-constrained
//! problem.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kkt::stationarity_fixed_points;
use crate::problem::{norm_h, ConstraintMode, Instance};
use crate::solvers::{solve_hard, solve_pdhg, SolveReport, SolverParams};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HomotopyLevel {
    pub alpha_prime: f64,
    /// `E ||z||_h^2`.
    pub ez2: f64,
    /// `||x1(alpha') - x1(hard)||_h`.
    pub dist_x1: f64,
    pub objective: f64,
    /// Objective without the slack penalty.
    pub tracking_objective: f64,
    pub kkt_max: f64,
    /// `max_k ||z_k - Proj_C2(lambda_i / alpha')||_h`.
    pub slack_link: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Least-squares fit of `log E||z||^2 = slope log alpha' + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    pub excluded_zeros: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HomotopyReport {
    pub schedule: Vec<f64>,
    pub levels: Vec<HomotopyLevel>,
    pub fit: Option<DecayFit>,
    pub reference: SolveReport,
}

impl HomotopyReport {
    /// `E||z||^2` nonincreasing over converged levels, up to `slack`.
    pub fn slack_decay_monotone(&self, slack: f64) -> bool {
        let v: Vec<f64> = self
            .levels
            .iter()
            .filter(|l| l.converged)
            .map(|l| l.ez2)
            .collect();
        v.windows(2).all(|w| w[1] <= w[0] + slack)
    }

    pub fn final_distance(&self) -> Option<f64> {
        self.levels
            .iter()
            .rev()
            .find(|l| l.converged)
            .map(|l| l.dist_x1)
    }
}

/// Schedules must have at least three strictly increasing positive values
/// spanning three decades.
pub fn validate_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "schedule has {} levels, at least 3 are required",
            schedule.len()
        )));
    }
    if schedule.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
        return Err(Error::InvalidInput(
            "schedule values must be positive and finite".into(),
        ));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "schedule must be strictly increasing".into(),
        ));
    }
    let decades = libm::log10(schedule[schedule.len() - 1] / schedule[0]);
    if decades < 3.0 - 1e-9 {
        return Err(Error::InvalidInput(format!(
            "schedule spans {decades:.2} decades, at least 3 are required"
        )));
    }
    Ok(())
}

/// Solves the slack problem along `schedule`, warm-starting each level from
/// the previous multipliers, and compares with the hard-mode reference.
pub fn run_homotopy(
    inst: &Instance,
    schedule: &[f64],
    params: &SolverParams,
) -> Result<HomotopyReport> {
    if inst.is_hard() {
        return Err(Error::Precondition(
            "homotopy runs on a slack-mode instance".into(),
        ));
    }
    validate_schedule(schedule)?;
    let hard = inst.with_mode(ConstraintMode::Hard)?;
    let (x_hard, _, reference) = solve_hard(&hard, params)?;
    if !reference.converged() {
        return Err(Error::ReferenceFailed(format!(
            "status {:?} after {} iterations, max residual {:e}",
            reference.status,
            reference.iterations,
            reference.kkt.max_residual()
        )));
    }
    let h = inst.h();
    let mut levels = Vec::with_capacity(schedule.len());
    let mut warm = params.warm_start.clone();
    for &ap in schedule {
        let level = inst.with_alpha_prime(ap)?;
        let p = SolverParams {
            warm_start: warm.clone(),
            ..params.clone()
        };
        let (x, lambda, rep) = solve_pdhg(&level, &p)?;
        let ez2: f64 =
            x.z.iter()
                .zip(level.probabilities())
                .map(|(z, pk)| pk * h * h * z.iter().map(|v| v * v).sum::<f64>())
                .sum();
        let d: Vec<f64> = x.x1.iter().zip(&x_hard.x1).map(|(a, b)| a - b).collect();
        levels.push(HomotopyLevel {
            alpha_prime: ap,
            ez2,
            dist_x1: norm_h(&d, h),
            objective: rep.objective,
            tracking_objective: level.tracking_objective(&x),
            kkt_max: rep.kkt.max_residual(),
            slack_link: stationarity_fixed_points(&level, &x, &lambda).z,
            iterations: rep.iterations,
            converged: rep.converged(),
        });
        if rep.converged() {
            warm = Some(lambda);
        }
    }
    let mut report = HomotopyReport {
        schedule: schedule.to_vec(),
        levels,
        fit: None,
        reference,
    };
    report.fit = fit_decay_rate(&report).ok();
    Ok(report)
}

/// Log-log fit of `E||z||^2` against `alpha'` over the converged levels.
pub fn fit_decay_rate(report: &HomotopyReport) -> Result<DecayFit> {
    let (a, v): (Vec<f64>, Vec<f64>) = report
        .levels
        .iter()
        .filter(|l| l.converged)
        .map(|l| (l.alpha_prime, l.ez2))
        .unzip();
    fit_power_law(&a, &v)
}

/// Ordinary least squares on `(log x, log y)`; zero values are excluded and
/// counted.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<DecayFit> {
    if x.len() != y.len() {
        return Err(Error::Dimension(
            "abscissae and values differ in length".into(),
        ));
    }
    let zeros = y.iter().filter(|v| **v == 0.0).count();
    if zeros > 0 && zeros == y.len() {
        return Err(Error::ConstraintNeverActive);
    }
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (libm::log(*a), libm::log(*b)))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(pts.len()));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts
        .iter()
        .map(|p| p.1 - intercept - slope * p.0)
        .map(|e| e * e)
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(DecayFit {
        slope,
        intercept,
        r_squared,
        points: pts.len(),
        excluded_zeros: zeros,
    })
}
