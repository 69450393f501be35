//! Stacked prediction and compact rows against step-by-step simulation.

use binflex::fixtures::{random_instance, worked_instance};
use binflex::system::{check_constraints, simulate, RowOrigin};
use binflex::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_inputs(rng: &mut ChaCha8Rng, inst: &binflex::Model) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = inst.dynamics.horizon;
    let r = (0..inst.dynamics.m() * h).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
    let u = (0..inst.dynamics.p() * h).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let v = (0..inst.dynamics.q() * h).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
    (r, u, v)
}

#[test]
fn stacking_matches_recursion() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..100 {
        let mut inst = random_instance(seed);
        inst.dynamics.x0 = (0..inst.dynamics.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let st = inst.stacked().unwrap();
        let (r, u, v) = random_inputs(&mut rng, &inst);
        let stacked = st.predict(&inst.dynamics.x0, &r, &u, &v);
        let stepped: Vec<f64> = simulate(&inst.dynamics, &inst.dynamics.x0, &r, &u, &v)
            .unwrap()
            .concat();
        assert_eq!(stacked.len(), stepped.len());
        for (a, b) in stacked.iter().zip(&stepped) {
            assert!((a - b).abs() < 1e-9, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn compact_rows_match_direct_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..100 {
        let inst = random_instance(seed);
        let cc = inst.compact().unwrap();
        let (r, u, v) = random_inputs(&mut rng, &inst);
        let lhs = cc.lhs(&r, &u, &v, &0.0);
        let states = simulate(&inst.dynamics, &inst.dynamics.x0, &r, &u, &v).unwrap();
        let direct = check_constraints(&states, &r, &u, &v, &inst.constraints, &1e-9);
        let mut worst = f64::NEG_INFINITY;
        for i in 0..cc.num_rows() {
            if matches!(cc.origins[i], RowOrigin::State { .. } | RowOrigin::Input { .. }) {
                worst = worst.max(lhs[i] - cc.h[i]);
                let flagged = direct.violations.iter().any(|rv| rv.row == i);
                assert_eq!(flagged, lhs[i] - cc.h[i] > 1e-9, "seed {seed} row {i}");
            }
        }
        assert!((worst - direct.max_margin).abs() < 1e-9, "seed {seed}");
    }
}

#[test]
fn binary_box_rows_bound_v() {
    let inst = random_instance(3);
    let cc = inst.compact().unwrap();
    let qn = inst.dynamics.q() * inst.dynamics.horizon;
    let upper = cc.origins.iter().filter(|o| matches!(o, RowOrigin::BinaryUpper { .. })).count();
    let lower = cc.origins.iter().filter(|o| matches!(o, RowOrigin::BinaryLower { .. })).count();
    assert_eq!((upper, lower), (qn, qn));
}

#[test]
fn exact_stacking_of_the_worked_instance() {
    let inst = worked_instance::<BigRational>();
    let st = inst.stacked().unwrap();
    // x(1) = r0 - u0, x(2) = r0 + r1 - u0 - u1
    let one = BigRational::from_integer(1.into());
    let zero = BigRational::from_integer(0.into());
    assert_eq!(st.fr.to_rows(), vec![vec![one.clone(), zero.clone()], vec![one.clone(), one.clone()]]);
    assert_eq!(st.fu.to_rows(), vec![vec![-one.clone(), zero.clone()], vec![-one.clone(), -one]]);
    assert_eq!(st.fx.to_rows().len(), 2);
}
