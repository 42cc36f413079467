//! Randomized invariants of the problem algebra.

use proptest::prelude::*;
use sassc_core::problem::{norm_h, pairing, project_koplus};
use sassc_core::*;

fn tiny() -> Instance {
    Instance::build(InstanceSpec::tiny(1)).unwrap()
}

/// Feasible point: states from the PDE, slack covering the obstacle excess.
fn feasible(inst: &Instance, x1: Vec<f64>, extra: &[f64]) -> PrimalPoint {
    let y = inst.solve_states(&x1).unwrap();
    let z = y
        .iter()
        .enumerate()
        .map(|(k, yk)| {
            yk.iter()
                .zip(inst.obstacle(k))
                .zip(extra)
                .map(|((a, b), e)| (a - b).max(0.0) + e)
                .collect()
        })
        .collect();
    PrimalPoint { x1, y, z }
}

fn dual(inst: &Instance, le: &[f64], li: &[f64]) -> DualPoint {
    let (s, n) = (inst.scenario_count(), inst.n());
    let chunk = |v: &[f64]| {
        (0..s)
            .map(|k| v[k * n..(k + 1) * n].to_vec())
            .collect::<Vec<_>>()
    };
    DualPoint::from_multipliers(chunk(le), chunk(li))
}

const N: usize = 16;
const SN: usize = 48;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projections_idempotent_and_nonexpansive(
        u in prop::collection::vec(-300.0f64..300.0, N),
        v in prop::collection::vec(-300.0f64..300.0, N),
    ) {
        let inst = tiny();
        let h = inst.h();
        let d = |a: &[f64], b: &[f64]| norm_h(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>(), h);
        for p in [
            &(|w: &[f64]| inst.project_c1(w)) as &dyn Fn(&[f64]) -> Vec<f64>,
            &|w: &[f64]| inst.project_c2(w),
            &|w: &[f64]| project_koplus(w),
        ] {
            let (pu, pv) = (p(&u), p(&v));
            prop_assert_eq!(p(&pu), pu.clone());
            prop_assert!(d(&pu, &pv) <= d(&u, &v) + 1e-12);
        }
    }

    #[test]
    fn pairing_bilinear_and_symmetric(
        u in prop::collection::vec(-1.0f64..1.0, SN),
        l1 in prop::collection::vec(-1.0f64..1.0, SN),
        l2 in prop::collection::vec(-1.0f64..1.0, SN),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let inst = tiny();
        let chunk = |v: &[f64]| v.chunks(N).map(|c| c.to_vec()).collect::<Vec<_>>();
        let (u, l1, l2) = (chunk(&u), chunk(&l1), chunk(&l2));
        let mix: Vec<Vec<f64>> = l1
            .iter()
            .zip(&l2)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect())
            .collect();
        let (p, h) = (inst.probabilities(), inst.h());
        let lhs = pairing(&u, &mix, p, h);
        let rhs = a * pairing(&u, &l1, p, h) + b * pairing(&u, &l2, p, h);
        prop_assert!((lhs - rhs).abs() <= 1e-13);
        prop_assert!((pairing(&u, &l1, p, h) - pairing(&l1, &u, p, h)).abs() <= 1e-15);
    }

    #[test]
    fn weak_duality_and_lagrangian_consistency(
        x1 in prop::collection::vec(-5.0f64..5.0, N),
        extra in prop::collection::vec(0.0f64..0.5, N),
        le in prop::collection::vec(-2.0f64..2.0, SN),
        li in prop::collection::vec(0.0f64..2.0, SN),
    ) {
        let inst = tiny();
        let x = feasible(&inst, x1, &extra);
        prop_assert!(inst.feasibility(&x).is_feasible(1e-12, 1e-10));
        let lam = dual(&inst, &le, &li);
        let j = inst.objective(&x);
        prop_assert!(inst.dual_function(&lam) <= j + 1e-10);
        let s = inst.scenario_count();
        let gap: Vec<Vec<f64>> = (0..s).map(|k| inst.obstacle_gap(k, &x.y[k], &x.z[k])).collect();
        let l = inst.lagrangian(&x, &lam);
        let expected = j + inst.pairing(&gap, &lam.lambda_i);
        prop_assert!((l - expected).abs() <= 1e-10 * (1.0 + j.abs()));
        prop_assert!(l <= j + 1e-12);
    }

    #[test]
    fn dual_function_concave_on_segments(
        a in prop::collection::vec(-2.0f64..2.0, SN),
        b in prop::collection::vec(-2.0f64..2.0, SN),
        ia in prop::collection::vec(0.0f64..2.0, SN),
        ib in prop::collection::vec(0.0f64..2.0, SN),
        t in 0.0f64..1.0,
    ) {
        let inst = tiny();
        let mix = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| t * x + (1.0 - t) * y).collect::<Vec<_>>();
        let g = |le: &[f64], li: &[f64]| inst.dual_function(&dual(&inst, le, li));
        let lhs = g(&mix(&a, &b), &mix(&ia, &ib));
        let rhs = t * g(&a, &ia) + (1.0 - t) * g(&b, &ib);
        prop_assert!(lhs >= rhs - 1e-10);
    }
}
