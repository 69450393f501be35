//! The reformulated MILP against scenario enumeration on small instances.

use binflex::fixtures::{downward_instance, random_instance, worked_instance};
use binflex::milp::{Engine, SolverOptions};
use binflex::oracle::{exhaustive_gamma, verify_policy, worst_case_cost, RecourseMode};
use binflex::reform::{assess, build_theorem1_milp, count_constraints, DualSign, PolicyMode, ReformOptions};
use binflex::system::CostMode;
use binflex::{Error, Model};

fn solver() -> SolverOptions {
    SolverOptions::default()
}

/// Random instances whose nominal reference admits recourse.
fn feasible_instances(count: usize) -> Vec<(u64, Model)> {
    let mut out = Vec::new();
    let mut seed = 0;
    while out.len() < count {
        let inst = random_instance(seed);
        let cc = inst.compact().unwrap();
        match exhaustive_gamma(&cc, &inst.partition, RecourseMode::Adjustable, &solver()) {
            Ok(_) => out.push((seed, inst)),
            Err(Error::NominalInfeasible) => {}
            Err(e) => panic!("seed {seed}: {e}"),
        }
        seed += 1;
    }
    out
}

#[test]
fn budgets_are_ordered_and_policies_verify() {
    for (seed, inst) in feasible_instances(30) {
        let cc = inst.compact().unwrap();
        let adjustable = exhaustive_gamma(&cc, &inst.partition, RecourseMode::Adjustable, &solver()).unwrap();
        let fixed = exhaustive_gamma(&cc, &inst.partition, RecourseMode::Static, &solver()).unwrap();
        let affine = assess(&inst, &ReformOptions::default(), &solver()).unwrap();
        let open = assess(&inst, &ReformOptions::open_loop(), &solver()).unwrap();

        assert!(affine.gamma_star <= adjustable.gamma_star, "seed {seed}: affine over-claims");
        assert!(open.gamma_star <= affine.gamma_star, "seed {seed}: open loop beats affine");
        // Dualising an integral budget polytope is exact, so without gains
        // the MILP is exactly the shared-recourse search.
        assert_eq!(open.gamma_star, fixed.gamma_star, "seed {seed}: open loop vs static");

        for res in [&affine, &open] {
            let rep = verify_policy(&res.policy, res.gamma_star, &inst, 1e-6).unwrap();
            assert!(rep.passed(), "seed {seed}: {:?}", rep.violations.first());
        }
        if affine.gamma_star < inst.partition.num_uncertain() {
            assert!(adjustable.gamma_star >= affine.gamma_star);
        }
    }
}

#[test]
fn emitted_rows_follow_the_count() {
    for (seed, inst) in feasible_instances(10) {
        let cc = inst.compact().unwrap();
        let m = build_theorem1_milp(&cc, &inst.partition, &inst.cost, &ReformOptions::default()).unwrap();
        let count = count_constraints(cc.num_rows(), inst.partition.num_uncertain(), 0, PolicyMode::Affine);
        assert_eq!(m.problem.num_rows(), count.theorem1_rows, "seed {seed}");
    }
}

#[test]
fn epigraph_bounds_the_enumerated_cost() {
    for (seed, mut inst) in feasible_instances(12) {
        let n = inst.dynamics.n() * inst.dynamics.horizon;
        let p = inst.dynamics.p() * inst.dynamics.horizon;
        let q = inst.dynamics.q() * inst.dynamics.horizon;
        inst.cost.state = (0..n).map(|i| if i % 2 == 0 { 0.5 } else { -0.25 }).collect();
        inst.cost.input_cont = vec![1.0; p];
        inst.cost.input_bin = vec![0.5; q];
        inst.cost.lambda = 10.0;
        inst.cost.mode = CostMode::CostAndGamma;
        let res = assess(&inst, &ReformOptions::default(), &solver()).unwrap();
        let theta = res.theta.unwrap();
        let (worst, _) = worst_case_cost(&res.policy, res.gamma_star, &inst).unwrap();
        assert!(theta >= worst - 1e-6, "seed {seed}: theta {theta} < worst {worst}");
        let expected = theta - inst.cost.lambda * res.gamma_star as f64;
        assert!((res.objective - expected).abs() < 1e-6, "seed {seed}");
    }
}

#[test]
fn worked_instance_against_enumeration() {
    let inst = worked_instance::<f64>();
    let cc = inst.compact().unwrap();
    let affine = assess(&inst, &ReformOptions::default(), &solver()).unwrap();
    let adjustable = exhaustive_gamma(&cc, &inst.partition, RecourseMode::Adjustable, &solver()).unwrap();
    assert_eq!((affine.gamma_star, adjustable.gamma_star), (2, 2));
    assert!(verify_policy(&affine.policy, 2, &inst, 1e-6).unwrap().passed());
}

#[test]
fn dual_row_sign_matters_for_downward_flips() {
    let inst = downward_instance::<f64>();
    let cc = inst.compact().unwrap();
    let truth = exhaustive_gamma(&cc, &inst.partition, RecourseMode::Adjustable, &solver()).unwrap();
    assert_eq!(truth.gamma_star, 1);

    let derived = assess(&inst, &ReformOptions::default(), &solver()).unwrap();
    assert_eq!(derived.gamma_star, 1);
    assert!(verify_policy(&derived.policy, 1, &inst, 1e-6).unwrap().passed());

    let statement = ReformOptions {
        dual_sign: DualSign::Statement,
        ..ReformOptions::default()
    };
    let claimed = assess(&inst, &statement, &solver()).unwrap();
    assert!(claimed.gamma_star > truth.gamma_star);
    let rep = verify_policy(&claimed.policy, claimed.gamma_star, &inst, 1e-6).unwrap();
    assert!(!rep.passed());
}

#[test]
fn exact_and_float_pipelines_agree() {
    use binflex::BigRational;
    let exact = worked_instance::<BigRational>();
    let float = worked_instance::<f64>();
    let a = assess(&exact, &ReformOptions::default(), &solver()).unwrap();
    let b = assess(&float, &ReformOptions::default(), &solver()).unwrap();
    assert_eq!(a.gamma_star, b.gamma_star);
    assert!(verify_policy(&a.policy, a.gamma_star, &exact, 0.0).unwrap().passed());
}

#[test]
fn engines_agree_on_small_reformulations() {
    let embedded = SolverOptions::default().with_engine(Engine::Embedded);
    let highs = SolverOptions::default().with_engine(Engine::Highs);
    for (seed, inst) in feasible_instances(8) {
        let a = assess(&inst, &ReformOptions::default(), &embedded).unwrap();
        let b = assess(&inst, &ReformOptions::default(), &highs).unwrap();
        assert_eq!(a.gamma_star, b.gamma_star, "seed {seed}");
    }
}

#[test]
fn joint_and_per_budget_searches_agree() {
    use binflex::reform::BudgetSearch;
    let joint = ReformOptions {
        budget_search: BudgetSearch::Joint,
        ..ReformOptions::default()
    };
    for (seed, mut inst) in feasible_instances(10) {
        let a = assess(&inst, &joint, &solver()).unwrap();
        let b = assess(&inst, &ReformOptions::default(), &solver()).unwrap();
        assert_eq!(a.gamma_star, b.gamma_star, "seed {seed}");

        let n = inst.dynamics.n() * inst.dynamics.horizon;
        inst.cost.state = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
        inst.cost.lambda = 0.3;
        inst.cost.mode = CostMode::CostAndGamma;
        let a = assess(&inst, &joint, &solver()).unwrap();
        let b = assess(&inst, &ReformOptions::default(), &solver()).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-6, "seed {seed}: {} vs {}", a.objective, b.objective);
    }
}
