//! First-order primal-dual iterations on a [`Model`].

use alloc::vec::Vec;
use core::cell::Cell;

use super::model::{Duals, Iterate, Model, ScaledAdjoint};
use super::params::{HistoryRow, PdhgVariant, SolveStatus, SolverParams};
use crate::error::{Error, Result};
use crate::linalg::clamp;
use crate::pde::operator_norm_estimate;

pub(crate) struct Outcome {
    pub x: Iterate,
    pub duals: Duals,
    pub iterations: usize,
    pub status: SolveStatus,
    pub history: Vec<HistoryRow>,
}

fn norm_of(model: &Model, sx: f64, sy: f64, sz: f64) -> Result<f64> {
    let map = ScaledAdjoint {
        model,
        sx,
        sy,
        sz,
        failed: Cell::new(false),
    };
    let v = operator_norm_estimate(&map);
    if map.failed.get() || !v.is_finite() {
        return Err(Error::LinearSolver {
            iterations: 0,
            residual: f64::NAN,
        });
    }
    Ok(v)
}

/// Lipschitz constant of the dual gradient.
pub(crate) fn dual_lipschitz(model: &Model, curvature: f64) -> Result<f64> {
    let sz = 1.0 / libm::sqrt(model.inst.alpha_prime());
    let v = norm_of(model, 1.0 / libm::sqrt(curvature), 1.0, sz)?;
    Ok(v * v)
}

struct Tracker<'p> {
    params: &'p SolverParams,
    tol: f64,
    bound: f64,
    best: Option<(f64, Iterate, Duals)>,
    history: Vec<HistoryRow>,
}

enum Verdict {
    Continue,
    Stop(SolveStatus),
}

impl Tracker<'_> {
    fn check(
        &mut self,
        model: &Model,
        it: usize,
        x: Iterate,
        d: &Duals,
        dual_value: Option<f64>,
    ) -> Result<Verdict> {
        let r = model.residuals(&x, d)?;
        let max = r.max();
        if self.params.record_history {
            self.history.push(HistoryRow {
                iteration: it,
                max_residual: max,
                r4: r.r4,
                r5_feas: r.r5_feas,
                r5_comp: r.r5_comp,
                objective: model.objective(&x),
                dual_value: dual_value.unwrap_or(f64::NAN),
            });
        }
        if !max.is_finite() || !d.sup_norm().is_finite() {
            return Ok(Verdict::Stop(SolveStatus::NumericalFailure));
        }
        let improved = self.best.as_ref().is_none_or(|b| max < b.0);
        let done = max <= self.tol;
        if improved || done {
            self.best = Some((max, x, d.clone()));
        }
        if done {
            return Ok(Verdict::Stop(SolveStatus::Converged));
        }
        let diverged = d.sup_norm() > self.params.divergence_threshold
            || dual_value.is_some_and(|g| g > self.bound);
        if diverged {
            return Ok(Verdict::Stop(SolveStatus::InfeasibilitySuspected));
        }
        Ok(Verdict::Continue)
    }

    fn finish(
        self,
        status: SolveStatus,
        iterations: usize,
        fallback: (Iterate, Duals),
    ) -> Result<Outcome> {
        let (x, duals) = match self.best {
            Some((_, x, d)) if status != SolveStatus::InfeasibilitySuspected => (x, d),
            _ => fallback,
        };
        Ok(Outcome {
            x,
            duals,
            iterations,
            status,
            history: self.history,
        })
    }
}

/// Runs the configured variant until the model residuals drop below `tol`
/// or `max_iters` is spent.
pub(crate) fn run(
    model: &Model,
    params: &SolverParams,
    tol: f64,
    max_iters: usize,
    start: Duals,
) -> Result<Outcome> {
    match params.variant {
        PdhgVariant::Accelerated => accelerated(model, params, tol, max_iters, start),
        PdhgVariant::Classic => classic(model, params, tol, max_iters, start),
    }
}

fn accelerated(
    model: &Model,
    params: &SolverParams,
    tol: f64,
    max_iters: usize,
    start: Duals,
) -> Result<Outcome> {
    let lip = dual_lipschitz(model, model.curvature())?;
    let step = 1.0 / lip;
    let mut tracker = Tracker {
        params,
        tol,
        bound: model.objective_bound(),
        best: None,
        history: Vec::new(),
    };
    let mut cur = start;
    let mut prev = cur.clone();
    let mut t: f64 = 1.0;
    let first = model.argmin(&cur)?;
    let g = model.dual_value(&first, &cur)?;
    if let Verdict::Stop(status) = tracker.check(model, 0, first.clone(), &cur, Some(g))? {
        return tracker.finish(status, 0, (first, cur));
    }
    let mut extrap = cur.clone();
    for it in 1..=max_iters {
        let t_next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * t * t));
        let beta = (t - 1.0) / t_next;
        for j in 0..model.len() {
            for i in 0..model.n() {
                extrap.mu[j][i] = cur.mu[j][i] + beta * (cur.mu[j][i] - prev.mu[j][i]);
                extrap.nu[j][i] = cur.nu[j][i] + beta * (cur.nu[j][i] - prev.nu[j][i]);
            }
        }
        let x = model.argmin(&extrap)?;
        let (eq, ineq) = model.constraint_values(&x)?;
        let mut next = Duals::zeros(model.len(), model.n());
        let mut momentum = 0.0;
        for j in 0..model.len() {
            for i in 0..model.n() {
                next.mu[j][i] = extrap.mu[j][i] + step * eq[j][i];
                next.nu[j][i] = (extrap.nu[j][i] + step * ineq[j][i]).max(0.0);
                momentum += (extrap.mu[j][i] - next.mu[j][i]) * (next.mu[j][i] - cur.mu[j][i])
                    + (extrap.nu[j][i] - next.nu[j][i]) * (next.nu[j][i] - cur.nu[j][i]);
            }
        }
        // gradient restart: drop momentum once it opposes the step
        t = if momentum > 0.0 { 1.0 } else { t_next };
        prev = core::mem::replace(&mut cur, next);

        if it % params.check_every == 0 || it == max_iters {
            let x = model.argmin(&cur)?;
            let g = model.dual_value(&x, &cur)?;
            if let Verdict::Stop(status) = tracker.check(model, it, x.clone(), &cur, Some(g))? {
                return tracker.finish(status, it, (x, cur));
            }
        }
    }
    let x = model.argmin(&cur)?;
    tracker.finish(SolveStatus::IterationLimit, max_iters, (x, cur))
}

fn classic(
    model: &Model,
    params: &SolverParams,
    tol: f64,
    max_iters: usize,
    start: Duals,
) -> Result<Outcome> {
    let ratio = params.x1_step_ratio;
    let eta = norm_of(model, libm::sqrt(ratio), 1.0, 1.0)?;
    let base = libm::sqrt(params.step_safety) / eta;
    let (tau, sigma) = (base, base);
    let tau_x = ratio * tau;
    let mut tracker = Tracker {
        params,
        tol,
        bound: f64::INFINITY,
        best: None,
        history: Vec::new(),
    };
    let m = model.inst.c2_bound();
    let yd = model.inst.target();
    let ap = model.inst.alpha_prime();
    let (lo, hi) = (model.inst.c1_lo(), model.inst.c1_hi());
    let mut d = start;
    let mut x = model.argmin(&d)?;
    for it in 1..=max_iters {
        let mean = model.mean_inverse(&d.mu)?;
        let c = model.curvature();
        let lin = model.linear_term();
        let x1: Vec<f64> = (0..model.n())
            .map(|i| {
                clamp(
                    (x.x1[i] / tau_x + mean[i] + lin[i]) / (c + 1.0 / tau_x),
                    lo[i],
                    hi[i],
                )
            })
            .collect();
        let mut next = Iterate {
            x1,
            y: x.y.clone(),
            z: x.z.clone(),
        };
        for j in 0..model.len() {
            for i in 0..model.n() {
                next.y[j][i] = clamp(
                    (x.y[j][i] / tau + yd[i] - d.mu[j][i] - d.nu[j][i]) / (1.0 + 1.0 / tau),
                    -m,
                    m,
                );
                if model.slack() {
                    next.z[j][i] = clamp((x.z[j][i] / tau + d.nu[j][i]) / (ap + 1.0 / tau), -m, m);
                }
            }
        }
        let bar = Iterate {
            x1: next
                .x1
                .iter()
                .zip(&x.x1)
                .map(|(a, b)| 2.0 * a - b)
                .collect(),
            y: next
                .y
                .iter()
                .zip(&x.y)
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| 2.0 * p - q).collect())
                .collect(),
            z: next
                .z
                .iter()
                .zip(&x.z)
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| 2.0 * p - q).collect())
                .collect(),
        };
        let (eq, ineq) = model.constraint_values(&bar)?;
        for j in 0..model.len() {
            for i in 0..model.n() {
                d.mu[j][i] += sigma * eq[j][i];
                d.nu[j][i] = (d.nu[j][i] + sigma * ineq[j][i]).max(0.0);
            }
        }
        x = next;
        if it % params.check_every == 0 || it == max_iters {
            if let Verdict::Stop(status) = tracker.check(model, it, x.clone(), &d, None)? {
                return tracker.finish(status, it, (x, d));
            }
        }
    }
    tracker.finish(SolveStatus::IterationLimit, max_iters, (x, d))
}
