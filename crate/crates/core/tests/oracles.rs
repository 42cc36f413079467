//! Dense linear-algebra oracles for the solvers and the problem algebra.

use nalgebra::{DMatrix, DVector};
use sassc_core::problem::{norm_h, BoundSpec, BoxSpec, TargetSpec};
use sassc_core::*;

fn dense(op: &SparseOperator) -> DMatrix<f64> {
    let n = op.dim();
    DMatrix::from_fn(n, n, |i, j| op.entry(i, j))
}

fn dist(a: &[f64], b: &[f64], h: f64) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm_h(&d, h)
}

/// Wide boxes and a far obstacle: only the PDE constraint is active.
fn equality_only(n1d: usize, s: usize, seed: u64) -> Instance {
    let mut spec = InstanceSpec::binding(n1d, s, seed);
    spec.c1 = BoxSpec {
        lo: BoundSpec::Uniform(-1e4),
        hi: BoundSpec::Uniform(1e4),
    };
    spec.c2.bound = 1e3;
    spec.scenarios.spec_psi = FieldSpec::constant(1e6);
    spec.alpha = 1e-2;
    Instance::build(spec).unwrap()
}

/// Reduced normal equations `(alpha I + E[L^T L]) x = E[L^T (y_D - L g)]`.
fn reduced_solution(inst: &Instance) -> Vec<f64> {
    let n = inst.n();
    let mut lhs = DMatrix::<f64>::identity(n, n) * inst.alpha();
    let mut rhs = DVector::<f64>::zeros(n);
    let yd = DVector::from_column_slice(inst.target());
    for k in 0..inst.scenario_count() {
        let p = inst.probabilities()[k];
        let l = dense(inst.operator(k)).try_inverse().unwrap();
        let g = DVector::from_column_slice(inst.load(k));
        lhs += p * l.transpose() * &l;
        rhs += p * l.transpose() * (&yd - &l * g);
    }
    lhs.lu().solve(&rhs).unwrap().as_slice().to_vec()
}

#[test]
fn pde_solves_match_dense_lu() {
    let inst = Instance::build(InstanceSpec::binding(8, 3, 11)).unwrap();
    for k in 0..3 {
        let a = dense(inst.operator(k));
        let rhs: Vec<f64> = (0..inst.n()).map(|i| (i as f64 * 0.37).sin()).collect();
        let ours = solve_linear(inst.operator(k), &rhs).unwrap();
        let reference = a.lu().solve(&DVector::from_column_slice(&rhs)).unwrap();
        for (x, y) in ours.iter().zip(reference.iter()) {
            assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
        }
    }
}

#[test]
fn objective_matches_independent_summation() {
    let inst = Instance::build(InstanceSpec::tiny(8)).unwrap();
    let (s, n, h) = (inst.scenario_count(), inst.n(), inst.h());
    let x = PrimalPoint {
        x1: (0..n).map(|i| (i as f64).cos()).collect(),
        y: (0..s)
            .map(|k| (0..n).map(|i| ((k * n + i) as f64 * 0.3).sin()).collect())
            .collect(),
        z: (0..s)
            .map(|k| (0..n).map(|i| 0.01 * (k + i) as f64).collect())
            .collect(),
    };
    let mut reference = 0.0;
    for i in 0..n {
        reference += inst.alpha() / 2.0 * x.x1[i] * x.x1[i] * h * h;
    }
    for k in 0..s {
        let p = inst.probabilities()[k];
        for i in 0..n {
            let e = x.y[k][i] - inst.target()[i];
            reference += p * h * h * (e * e + inst.alpha_prime() * x.z[k][i] * x.z[k][i]) / 2.0;
        }
    }
    let j = inst.objective(&x);
    assert!(
        (j - reference).abs() <= 1e-14 * reference.abs(),
        "{j} vs {reference}"
    );
}

#[test]
fn unconstrained_interior_matches_dense_kkt() {
    let inst = equality_only(6, 3, 5);
    let reference = reduced_solution(&inst);
    let (x, lambda, rep) = solve_pdhg(&inst, &SolverParams::default()).unwrap();
    assert!(rep.converged(), "{rep:?}");
    assert!(dist(&x.x1, &reference, inst.h()) <= 1e-6);
    assert!(lambda.lambda_i.iter().flatten().all(|v| *v == 0.0));
    assert!(x.z.iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn barrier_equality_only_matches_dense_kkt() {
    let inst = equality_only(3, 2, 9);
    let reference = reduced_solution(&inst);
    let (x, _, rep) = solve_barrier_reference(&inst, &SolverParams::default()).unwrap();
    assert!(rep.converged(), "{rep:?}");
    assert!(dist(&x.x1, &reference, inst.h()) <= 1e-6);
}

#[test]
fn far_obstacle_hard_matches_slack() {
    let mut spec = InstanceSpec::tiny(3);
    spec.scenarios.spec_psi = FieldSpec::constant(1e6);
    let slack = Instance::build(spec).unwrap();
    let hard = slack.with_mode(ConstraintMode::Hard).unwrap();
    let (xs, _, rs) = solve_pdhg(&slack, &SolverParams::default()).unwrap();
    let (xh, _, rh) = solve_hard(&hard, &SolverParams::default()).unwrap();
    assert!(rs.converged() && rh.converged());
    assert!(xs.z.iter().flatten().all(|v| *v == 0.0));
    assert!(dist(&xs.x1, &xh.x1, slack.h()) <= 1e-6);
}

#[test]
fn obstacle_patch_becomes_active() {
    let mut spec = InstanceSpec::binding(4, 2, 4);
    spec.scenarios.spec_psi = FieldSpec::constant(1e6);
    spec.mode = ConstraintMode::Hard;
    let free = Instance::build(spec.clone()).unwrap();
    let (x0, _, _) = solve_hard(&free, &SolverParams::default()).unwrap();
    let patch = [5usize, 6, 9, 10];
    let psi: Vec<f64> = (0..free.n())
        .map(|i| {
            if patch.contains(&i) {
                x0.y[0][i].min(x0.y[1][i]) - 0.1
            } else {
                1e3
            }
        })
        .collect();
    spec.scenarios.spec_psi = FieldSpec::nodal(psi.clone());
    let inst = Instance::build(spec).unwrap();
    assert_eq!(inst.obstacle(1), &psi[..]);

    let (x, lambda, rep) = solve_barrier_reference(&inst, &SolverParams::default()).unwrap();
    assert!(rep.converged(), "{rep:?}");
    let tight = SolverParams {
        kkt_tolerance: 1e-9,
        ..SolverParams::default()
    };
    let (xp, _, rp) = solve_hard(&inst, &tight).unwrap();
    assert!(rp.converged());
    assert!(dist(&x.x1, &xp.x1, inst.h()) <= 1e-5);
    let active =
        |i: usize| (0..2).any(|k| lambda.lambda_i[k][i] > 1e-8 && psi[i] - x.y[k][i] < 1e-6);
    for i in 0..inst.n() {
        assert_eq!(active(i), patch.contains(&i), "node {i}");
    }
}

#[test]
fn barrier_and_pdhg_agree_on_hard_tiny() {
    for seed in 1..=3 {
        let inst = Instance::build(InstanceSpec::tiny(seed))
            .unwrap()
            .with_mode(ConstraintMode::Hard)
            .unwrap();
        let tight = SolverParams {
            kkt_tolerance: 1e-10,
            ..SolverParams::default()
        };
        let (xb, _, rb) = solve_barrier_reference(&inst, &SolverParams::default()).unwrap();
        let (xp, _, rp) = solve_hard(&inst, &tight).unwrap();
        assert!(rb.converged() && rp.converged());
        assert!(dist(&xb.x1, &xp.x1, inst.h()) <= 1e-5);
    }
}

#[test]
fn nodal_target_array_round_trip() {
    let mut spec = InstanceSpec::tiny(1);
    let base = Instance::build(spec.clone()).unwrap();
    spec.target = TargetSpec::Array(base.target().to_vec());
    let inst = Instance::build(spec).unwrap();
    assert_eq!(inst.target(), base.target());
}
