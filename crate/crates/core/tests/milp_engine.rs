//! Embedded simplex and branch and bound against enumeration and HiGHS.

use binflex::milp::{
    lp_duality_check, solve_lp, solve_milp, Engine, MilpProblem, RowSense, SolveStatus, SolverOptions, VarKind,
};
use binflex::fixtures::{enumerate_integer_optimum, random_integer_milp};
use binflex::BigRational;
use proptest::prelude::*;

#[test]
fn branch_and_bound_matches_enumeration() {
    let mut feasible = 0;
    for seed in 0..20 {
        let p = random_integer_milp(seed);
        let truth = enumerate_integer_optimum(&p);
        for engine in [Engine::Embedded, Engine::Highs] {
            let sol = solve_milp(&p, &SolverOptions::default().with_engine(engine)).unwrap();
            match truth {
                Some(t) => {
                    assert_eq!(sol.status, SolveStatus::Optimal, "seed {seed} {engine:?}");
                    assert_eq!(sol.objective.unwrap(), t, "seed {seed} {engine:?}");
                    assert_eq!(p.max_fractionality(&sol.values), 0.0);
                }
                None => assert_eq!(sol.status, SolveStatus::Infeasible, "seed {seed} {engine:?}"),
            }
        }
        feasible += usize::from(truth.is_some());
    }
    assert!(feasible >= 10, "only {feasible} feasible draws");
}

#[test]
fn exact_branch_and_bound_matches_enumeration() {
    for seed in 0..10 {
        let p = random_integer_milp(seed);
        let exact = p.convert::<BigRational>();
        let sol = solve_milp(&exact, &SolverOptions::default()).unwrap();
        match enumerate_integer_optimum(&p) {
            Some(t) => assert_eq!(sol.objective.unwrap(), BigRational::from_integer((t as i64).into())),
            None => assert_eq!(sol.status, SolveStatus::Infeasible),
        }
    }
}

#[test]
fn solves_are_deterministic() {
    let p = random_integer_milp(3);
    let o = SolverOptions::default().with_engine(Engine::Embedded);
    let a = solve_milp(&p, &o).unwrap();
    let b = solve_milp(&p, &o).unwrap();
    assert_eq!((a.values, a.nodes, a.lp_iterations), (b.values, b.nodes, b.lp_iterations));
}

/// Feasible, bounded LP: `x = x0` satisfies every row by construction and
/// every variable is boxed.
fn lp_strategy() -> impl Strategy<Value = MilpProblem<f64>> {
    (1usize..6, 1usize..7).prop_flat_map(|(nv, nr)| {
        (
            prop::collection::vec(-3i32..=3, nv),
            prop::collection::vec(-2i32..=2, nv),
            prop::collection::vec(prop::collection::vec(-3i32..=3, nv), nr),
            prop::collection::vec((0u8..3, 0i32..4), nr),
        )
            .prop_map(move |(cost, x0, a, rows)| {
                let mut p = MilpProblem::new();
                for j in 0..nv {
                    p.add_var(format!("x{j}"), VarKind::Continuous, Some(-4.0), Some(4.0), f64::from(cost[j]));
                }
                for (i, (coef, (sense, slack))) in a.iter().zip(rows).enumerate() {
                    let act: i32 = coef.iter().zip(&x0).map(|(c, x)| c * x).sum();
                    let (sense, rhs) = match sense {
                        0 => (RowSense::Le, act + slack),
                        1 => (RowSense::Ge, act - slack),
                        _ => (RowSense::Eq, act),
                    };
                    let coefs = coef.iter().enumerate().map(|(j, &c)| (j, f64::from(c)));
                    p.add_row(format!("r{i}"), coefs, sense, f64::from(rhs));
                }
                p
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lp_optima_close_the_duality_gap(p in lp_strategy()) {
        let o = SolverOptions::default();
        let lp = solve_lp(&p, &o).unwrap();
        prop_assert_eq!(lp.status, SolveStatus::Optimal);
        prop_assert!(p.max_violation(&lp.values) <= 1e-7);
        prop_assert!(lp_duality_check(&p, &lp.values, &lp.row_duals, &o));
        let exact = solve_lp(&p.convert::<BigRational>(), &o).unwrap();
        let exact_obj = exact.objective.unwrap();
        prop_assert!((lp.objective.unwrap() - binflex::Scalar::as_f64(&exact_obj)).abs() <= 1e-6);
    }

    #[test]
    fn integer_optimum_is_no_better_than_relaxation(p in lp_strategy()) {
        let o = SolverOptions::default().with_engine(Engine::Embedded);
        let mut mixed = p.clone();
        for v in mixed.vars.iter_mut().step_by(2) {
            v.kind = VarKind::Integer;
        }
        let relaxed = solve_lp(&mixed.relaxed(), &o).unwrap();
        let sol = solve_milp(&mixed, &o).unwrap();
        if sol.status == SolveStatus::Optimal {
            prop_assert!(sol.objective.unwrap() >= relaxed.objective.unwrap() - 1e-7);
            prop_assert!(mixed.max_violation(&sol.values) <= 1e-7);
        } else {
            prop_assert_eq!(sol.status, SolveStatus::Infeasible);
        }
    }
}
