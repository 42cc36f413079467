//! Dense primal log-barrier reference solver for small instances.
//!
//! Every inequality (boxes and obstacle) enters a weighted barrier
//! `-mu sum_c w_c log s_c` whose weights are the pairing weights, so the
//! recovered multipliers `mu / s_c` are already densities. The PDE rows are
//! scaled by `p_k h^2` and kept as equality constraints in a dense Newton
//! system solved by LU.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{Algorithm, SolveReport, SolveStatus, SolverParams};
use crate::error::{Error, Result};
use crate::kkt::kkt_residuals;
use crate::linalg::{norm2, DenseMatrix};
use crate::problem::{DualPoint, Instance, PrimalPoint};

/// Affine slack `s = offset + sum coef_j v[idx_j]` with barrier weight.
struct Slack {
    terms: [(usize, f64); 2],
    len: usize,
    offset: f64,
    weight: f64,
}

impl Slack {
    fn one(idx: usize, coef: f64, offset: f64, weight: f64) -> Self {
        Self {
            terms: [(idx, coef), (0, 0.0)],
            len: 1,
            offset,
            weight,
        }
    }

    fn value(&self, v: &[f64]) -> f64 {
        self.offset
            + self.terms[..self.len]
                .iter()
                .map(|(i, c)| c * v[*i])
                .sum::<f64>()
    }

    fn rate(&self, dv: &[f64]) -> f64 {
        self.terms[..self.len].iter().map(|(i, c)| c * dv[*i]).sum()
    }
}

struct Layout<'a> {
    inst: &'a Instance,
    n: usize,
    s: usize,
    slack_mode: bool,
    nvar: usize,
    slacks: Vec<Slack>,
    /// First slack index of the obstacle rows.
    obstacle_start: usize,
    /// Diagonal of the quadratic objective.
    quad: Vec<f64>,
    /// Linear objective term.
    lin: Vec<f64>,
}

impl<'a> Layout<'a> {
    fn new(inst: &'a Instance) -> Self {
        let (n, s) = (inst.n(), inst.scenario_count());
        let slack_mode = !inst.is_hard();
        let nvar = n * (1 + if slack_mode { 2 * s } else { s });
        let h2 = inst.grid().cell_area();
        let m = inst.c2_bound();
        let mut slacks = Vec::new();
        for i in 0..n {
            slacks.push(Slack::one(i, 1.0, -inst.c1_lo()[i], h2));
            slacks.push(Slack::one(i, -1.0, inst.c1_hi()[i], h2));
        }
        let yi = |k: usize, i: usize| n + k * n + i;
        let zi = |k: usize, i: usize| n + (s + k) * n + i;
        for k in 0..s {
            let w = inst.probabilities()[k] * h2;
            for i in 0..n {
                slacks.push(Slack::one(yi(k, i), 1.0, m, w));
                slacks.push(Slack::one(yi(k, i), -1.0, m, w));
                if slack_mode {
                    slacks.push(Slack::one(zi(k, i), 1.0, m, w));
                    slacks.push(Slack::one(zi(k, i), -1.0, m, w));
                }
            }
        }
        let obstacle_start = slacks.len();
        for k in 0..s {
            let w = inst.probabilities()[k] * h2;
            let psi = inst.obstacle(k);
            for i in 0..n {
                let mut sl = Slack::one(yi(k, i), -1.0, psi[i], w);
                if slack_mode {
                    sl.terms[1] = (zi(k, i), 1.0);
                    sl.len = 2;
                }
                slacks.push(sl);
            }
        }
        let mut quad = vec![inst.alpha() * h2; nvar];
        let mut lin = vec![0.0; nvar];
        for k in 0..s {
            let w = inst.probabilities()[k] * h2;
            for i in 0..n {
                quad[yi(k, i)] = w;
                lin[yi(k, i)] = -w * inst.target()[i];
                if slack_mode {
                    quad[zi(k, i)] = w * inst.alpha_prime();
                }
            }
        }
        Self {
            inst,
            n,
            s,
            slack_mode,
            nvar,
            slacks,
            obstacle_start,
            quad,
            lin,
        }
    }

    fn neq(&self) -> usize {
        self.n * self.s
    }

    /// Scaled equality rows `p_k h^2 (A_k y_k - x1)` as sparse triplets and
    /// right-hand sides `p_k h^2 g_k`.
    fn equality_rows(&self) -> (Vec<Vec<(usize, f64)>>, Vec<f64>) {
        let h2 = self.inst.grid().cell_area();
        let mut rows = Vec::with_capacity(self.neq());
        let mut rhs = Vec::with_capacity(self.neq());
        for k in 0..self.s {
            let w = self.inst.probabilities()[k] * h2;
            for i in 0..self.n {
                let mut row: Vec<(usize, f64)> = self
                    .inst
                    .operator(k)
                    .row(i)
                    .map(|(j, v)| (self.n + k * self.n + j, w * v))
                    .collect();
                row.push((i, -w));
                rows.push(row);
                rhs.push(w * self.inst.load(k)[i]);
            }
        }
        (rows, rhs)
    }

    fn start(&self) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.nvar];
        let m = self.inst.c2_bound();
        for i in 0..self.n {
            let (lo, hi) = (self.inst.c1_lo()[i], self.inst.c1_hi()[i]);
            if !(lo < hi) {
                return Err(Error::Precondition(format!(
                    "C1 has empty interior at node {i}"
                )));
            }
            v[i] = 0.5 * (lo + hi);
        }
        for k in 0..self.s {
            let psi = self.inst.obstacle(k);
            for i in 0..self.n {
                if psi[i] <= -m {
                    return Err(Error::Precondition(format!(
                        "obstacle at scenario {k}, node {i} leaves no interior below it in C2"
                    )));
                }
                v[self.n + k * self.n + i] = if psi[i] > 0.0 {
                    0.0
                } else {
                    0.5 * (psi[i] - m)
                };
            }
        }
        Ok(v)
    }
}

struct Newton<'l, 'a> {
    lay: &'l Layout<'a>,
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
}

impl Newton<'_, '_> {
    /// KKT residual: Lagrangian gradient stacked with the equality residual.
    fn residual(&self, v: &[f64], nu: &[f64], mu: f64) -> Option<Vec<f64>> {
        let lay = self.lay;
        let mut r = vec![0.0; lay.nvar + lay.neq()];
        for j in 0..lay.nvar {
            r[j] = lay.quad[j] * v[j] + lay.lin[j];
        }
        for sl in &lay.slacks {
            let s = sl.value(v);
            if !(s > 0.0) {
                return None;
            }
            for (i, c) in &sl.terms[..sl.len] {
                r[*i] -= mu * sl.weight * c / s;
            }
        }
        for (e, row) in self.rows.iter().enumerate() {
            let mut acc = -self.rhs[e];
            for (j, a) in row {
                r[*j] += a * nu[e];
                acc += a * v[*j];
            }
            r[lay.nvar + e] = acc;
        }
        Some(r)
    }

    fn direction(&self, v: &[f64], res: &[f64], mu: f64) -> Result<Vec<f64>> {
        let lay = self.lay;
        let dim = lay.nvar + lay.neq();
        let mut kkt = DenseMatrix::zeros(dim);
        for j in 0..lay.nvar {
            kkt.add(j, j, lay.quad[j]);
        }
        for sl in &lay.slacks {
            let s = sl.value(v);
            let c = mu * sl.weight / (s * s);
            for (i, ci) in &sl.terms[..sl.len] {
                for (j, cj) in &sl.terms[..sl.len] {
                    kkt.add(*i, *j, c * ci * cj);
                }
            }
        }
        for (e, row) in self.rows.iter().enumerate() {
            for (j, a) in row {
                kkt.add(lay.nvar + e, *j, *a);
                kkt.add(*j, lay.nvar + e, *a);
            }
        }
        let neg: Vec<f64> = res.iter().map(|x| -x).collect();
        let mut d = kkt.clone().lu_solve(&neg)?;
        // one step of iterative refinement; the barrier Hessian is badly
        // scaled near the end of the path
        let mut r = neg;
        for (i, ri) in r.iter_mut().enumerate() {
            for (j, dj) in d.iter().enumerate() {
                *ri -= kkt.get(i, j) * dj;
            }
        }
        let corr = kkt.lu_solve(&r)?;
        d.iter_mut().zip(&corr).for_each(|(a, b)| *a += b);
        Ok(d)
    }
}

/// Log-barrier Newton solve; only for instances with at most
/// `params.barrier_size_limit` primal variables.
pub fn solve_barrier_reference(
    inst: &Instance,
    params: &SolverParams,
) -> Result<(PrimalPoint, DualPoint, SolveReport)> {
    params.validate()?;
    let lay = Layout::new(inst);
    if lay.nvar > params.barrier_size_limit {
        return Err(Error::SizeGuard {
            variables: lay.nvar,
            limit: params.barrier_size_limit,
        });
    }
    let (rows, rhs) = lay.equality_rows();
    let newton = Newton {
        lay: &lay,
        rows,
        rhs,
    };
    let mut v = lay.start()?;
    let mut nu = vec![0.0; lay.neq()];
    let mut mu = params.barrier_mu0;
    let mut steps = 0;
    let h2 = inst.grid().cell_area();
    let mut last = f64::INFINITY;
    loop {
        let terminal = mu <= params.barrier_mu_final * (1.0 + 1e-12);
        // intermediate centers need only be approximate
        let target = if terminal { 1e-15 } else { 1e-3 * mu * h2 };
        for _ in 0..200 {
            let res = newton
                .residual(&v, &nu, mu)
                .ok_or_else(|| Error::Newton("iterate left the barrier domain".into()))?;
            let norm = norm2(&res);
            last = norm;
            if norm <= target {
                break;
            }
            let d = newton.direction(&v, &res, mu)?;
            steps += 1;
            let (dv, dnu) = d.split_at(lay.nvar);
            // fraction to the boundary
            let mut t: f64 = 1.0;
            for sl in &lay.slacks {
                let rate = sl.rate(dv);
                if rate < 0.0 {
                    t = t.min(-0.995 * sl.value(&v) / rate);
                }
            }
            let mut accepted = false;
            while t > 1e-12 {
                let vt: Vec<f64> = v.iter().zip(dv).map(|(a, b)| a + t * b).collect();
                let nt: Vec<f64> = nu.iter().zip(dnu).map(|(a, b)| a + t * b).collect();
                if let Some(rt) = newton.residual(&vt, &nt, mu) {
                    if norm2(&rt) <= (1.0 - 0.01 * t) * norm {
                        v = vt;
                        nu = nt;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                // stalled at rounding level
                break;
            }
        }
        if terminal {
            break;
        }
        mu = (mu * params.barrier_shrink).max(params.barrier_mu_final);
    }
    if !last.is_finite() || last > 1e-6 {
        return Err(Error::Newton(format!(
            "KKT residual {last:e} at terminal barrier parameter {mu:e} after {steps} Newton steps"
        )));
    }

    let (n, s) = (lay.n, lay.s);
    let mut x = PrimalPoint::zeros(s, n);
    x.x1.copy_from_slice(&v[..n]);
    for k in 0..s {
        x.y[k].copy_from_slice(&v[n + k * n..n + (k + 1) * n]);
        if lay.slack_mode {
            x.z[k].copy_from_slice(&v[n + (s + k) * n..n + (s + k + 1) * n]);
        }
    }
    let lambda_e: Vec<Vec<f64>> = nu.chunks(n).map(|c| c.to_vec()).collect();
    let lambda_i: Vec<Vec<f64>> = lay.slacks[lay.obstacle_start..]
        .chunks(n)
        .map(|c| c.iter().map(|sl| mu / sl.value(&v)).collect())
        .collect();
    let lambda = DualPoint::from_multipliers(lambda_e, lambda_i);
    let kkt = kkt_residuals(inst, &x, &lambda);
    let tolerance = 10.0 * libm::sqrt(params.barrier_mu_final);
    let report = SolveReport {
        algorithm: Algorithm::Barrier,
        iterations: steps,
        status: if kkt.certify(tolerance) {
            SolveStatus::Converged
        } else {
            SolveStatus::NumericalFailure
        },
        objective: kkt.objective,
        dual_value: inst.dual_function(&lambda),
        kkt,
        tolerance,
        weight_drift: None,
        history: Vec::new(),
    };
    Ok((x, lambda, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::InstanceSpec;

    #[test]
    fn size_guard() {
        let inst = Instance::build(InstanceSpec::default_binding(7)).unwrap();
        assert!(matches!(
            solve_barrier_reference(&inst, &SolverParams::default()),
            Err(Error::SizeGuard { .. })
        ));
    }

    #[test]
    fn tiny_oracle_certifies() {
        let inst = Instance::build(InstanceSpec::tiny(1)).unwrap();
        let (_, lam, rep) = solve_barrier_reference(&inst, &SolverParams::default()).unwrap();
        assert!(rep.converged(), "{:?}", rep.kkt);
        assert!(rep.kkt.certify(1e-4));
        assert!(lam.lambda_i.iter().flatten().all(|v| *v > 0.0));
    }
}
