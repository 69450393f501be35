//! Ground truth by enumeration: scenario lists, per-scenario recourse
//! searches, and simulation-based checks of a policy.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{solve_milp, MilpProblem, RowSense, SolveStatus, SolverOptions, VarKind};
use crate::reform::{policy_response, scenario_count, AffinePolicy};
use crate::scalar::{indicator, Scalar};
use crate::system::{check_constraints, simulate, CompactConstraints, Instance, RowOrigin, UncertaintyPartition};

/// A set of flipped flexible entries and the reference it produces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    /// Positions into the partition's flexible list, ascending.
    pub flipped: Vec<usize>,
    pub reference: Vec<bool>,
}

impl Scenario {
    pub fn size(&self) -> usize {
        self.flipped.len()
    }
}

/// Scenarios with at most `gamma` flips, by size and then lexicographically.
pub fn enumerate_scenarios(
    part: &UncertaintyPartition,
    gamma: usize,
) -> Result<impl Iterator<Item = Scenario> + '_> {
    let nu = part.num_uncertain();
    if gamma > nu {
        return Err(Error::GammaOutOfRange { gamma, max: nu });
    }
    Ok((0..=gamma).flat_map(move |k| {
        (0..nu).combinations(k).map(move |flipped| Scenario {
            reference: part.realize(&flipped),
            flipped,
        })
    }))
}

fn scenarios_of_size(part: &UncertaintyPartition, k: usize) -> Vec<Scenario> {
    (0..part.num_uncertain())
        .combinations(k)
        .map(|flipped| Scenario {
            reference: part.realize(&flipped),
            flipped,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecourseMode {
    /// Each scenario picks its own inputs.
    #[default]
    Adjustable,
    /// One input sequence serves every scenario.
    Static,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveResult {
    pub gamma_star: usize,
    pub mode: RecourseMode,
    /// First scenario without recourse (adjustable mode).
    pub blocking: Option<Scenario>,
    /// Smallest budget without a shared recourse (static mode).
    pub blocking_gamma: Option<usize>,
    pub solves: u64,
    pub scenarios_checked: u64,
}

fn non_epigraph_rows<T: Scalar>(cc: &CompactConstraints<T>) -> impl Iterator<Item = usize> + '_ {
    (0..cc.num_rows()).filter(|&i| cc.origins[i] != RowOrigin::Epigraph)
}

/// Appends `u`, `v` columns and returns their indices.
fn add_inputs<T: Scalar>(pb: &mut MilpProblem<T>, cc: &CompactConstraints<T>, cost: Option<usize>) -> (Vec<usize>, Vec<usize>) {
    let u = (0..cc.p.cols())
        .map(|k| {
            let c = cost.map_or(T::zero(), |e| cc.p[(e, k)].clone());
            pb.add_var(format!("u[{k}]"), VarKind::Continuous, None, None, c)
        })
        .collect();
    let v = (0..cc.q.cols())
        .map(|k| {
            let c = cost.map_or(T::zero(), |e| cc.q[(e, k)].clone());
            pb.add_var(format!("v[{k}]"), VarKind::Binary, None, None, c)
        })
        .collect();
    (u, v)
}

fn add_scenario_rows<T: Scalar>(
    pb: &mut MilpProblem<T>,
    cc: &CompactConstraints<T>,
    r: &[T],
    u: &[usize],
    v: &[usize],
    tag: usize,
) {
    for i in non_epigraph_rows(cc) {
        let fixed = crate::scalar::dot(cc.o.row(i), r);
        let coefs = u
            .iter()
            .enumerate()
            .map(|(k, &c)| (c, cc.p[(i, k)].clone()))
            .chain(v.iter().enumerate().map(|(k, &c)| (c, cc.q[(i, k)].clone())));
        pb.add_row(format!("s{tag}_r{i}"), coefs, RowSense::Le, cc.h[i].clone() - fixed);
    }
}

/// Recourse problem for one realised reference. With `with_cost` the
/// objective is the cost carried by the epigraph row (without its constant).
pub fn scenario_problem<T: Scalar>(cc: &CompactConstraints<T>, reference: &[bool], with_cost: bool) -> MilpProblem<T> {
    let r: Vec<T> = reference.iter().map(|&b| indicator(b)).collect();
    let mut pb = MilpProblem::new();
    let epi = if with_cost { cc.epigraph_row() } else { None };
    let (u, v) = add_inputs(&mut pb, cc, epi);
    add_scenario_rows(&mut pb, cc, &r, &u, &v, 0);
    pb
}

fn scenario_feasible<T: Scalar>(cc: &CompactConstraints<T>, s: &Scenario, solver: &SolverOptions) -> Result<bool> {
    let sol = solve_milp(&scenario_problem(cc, &s.reference, false), solver)?;
    match sol.status {
        SolveStatus::Optimal => Ok(true),
        SolveStatus::Infeasible => Ok(false),
        other => Err(Error::NotOptimal(other)),
    }
}

/// Largest budget for which every scenario admits recourse.
pub fn exhaustive_gamma<T: Scalar>(
    cc: &CompactConstraints<T>,
    part: &UncertaintyPartition,
    mode: RecourseMode,
    solver: &SolverOptions,
) -> Result<ExhaustiveResult> {
    let nu = part.num_uncertain();
    match mode {
        RecourseMode::Adjustable => {
            let mut solves = 0u64;
            for k in 0..=nu {
                let level = scenarios_of_size(part, k);
                let feasible: Vec<Result<bool>> =
                    level.par_iter().map(|s| scenario_feasible(cc, s, solver)).collect();
                solves += level.len() as u64;
                let mut blocking = None;
                for (s, f) in level.iter().zip(feasible) {
                    if !f? && blocking.is_none() {
                        blocking = Some(s.clone());
                    }
                }
                if let Some(b) = blocking {
                    if k == 0 {
                        return Err(Error::NominalInfeasible);
                    }
                    return Ok(ExhaustiveResult {
                        gamma_star: k - 1,
                        mode,
                        blocking: Some(b),
                        blocking_gamma: None,
                        solves,
                        scenarios_checked: solves,
                    });
                }
            }
            Ok(ExhaustiveResult {
                gamma_star: nu,
                mode,
                blocking: None,
                blocking_gamma: None,
                solves,
                scenarios_checked: solves,
            })
        }
        RecourseMode::Static => {
            // Shared recourse only gets harder as the budget grows, so the
            // first failing budget settles the answer.
            let mut solves = 0u64;
            for gamma in 0..=nu {
                let sol = solve_milp(&static_problem(cc, part, gamma)?, solver)?;
                solves += 1;
                match sol.status {
                    SolveStatus::Optimal => {}
                    SolveStatus::Infeasible if gamma == 0 => return Err(Error::NominalInfeasible),
                    SolveStatus::Infeasible => {
                        return Ok(ExhaustiveResult {
                            gamma_star: gamma - 1,
                            mode,
                            blocking: None,
                            blocking_gamma: Some(gamma),
                            solves,
                            scenarios_checked: scenario_count(nu, gamma),
                        })
                    }
                    other => return Err(Error::NotOptimal(other)),
                }
            }
            Ok(ExhaustiveResult {
                gamma_star: nu,
                mode,
                blocking: None,
                blocking_gamma: None,
                solves,
                scenarios_checked: scenario_count(nu, nu),
            })
        }
    }
}

/// One `(u, v)` shared by every scenario with at most `gamma` flips.
pub fn static_problem<T: Scalar>(
    cc: &CompactConstraints<T>,
    part: &UncertaintyPartition,
    gamma: usize,
) -> Result<MilpProblem<T>> {
    let mut pb = MilpProblem::new();
    let (u, v) = add_inputs(&mut pb, cc, None);
    for (tag, s) in enumerate_scenarios(part, gamma)?.enumerate() {
        let r: Vec<T> = s.reference.iter().map(|&b| indicator(b)).collect();
        add_scenario_rows(&mut pb, cc, &r, &u, &v, tag);
    }
    Ok(pb)
}

/// `max_S min_{u,v} J` over scenarios with at most `gamma` flips, with the
/// maximising scenario. Errors if some scenario has no recourse.
pub fn adjustable_worst_cost<T: Scalar>(
    cc: &CompactConstraints<T>,
    part: &UncertaintyPartition,
    gamma: usize,
    solver: &SolverOptions,
) -> Result<(T, Scenario)> {
    let e = cc
        .epigraph_row()
        .ok_or_else(|| Error::invalid("cost", "compact constraints carry no cost row"))?;
    let scenarios: Vec<Scenario> = enumerate_scenarios(part, gamma)?.collect();
    let costs: Vec<Result<T>> = scenarios
        .par_iter()
        .map(|s| {
            let sol = solve_milp(&scenario_problem(cc, &s.reference, true), solver)?;
            let obj = sol.objective.clone().filter(|_| sol.status == SolveStatus::Optimal);
            let obj = obj.ok_or(Error::NotOptimal(sol.status))?;
            let r: Vec<T> = s.reference.iter().map(|&b| indicator(b)).collect();
            Ok(obj + crate::scalar::dot(cc.o.row(e), &r) - cc.h[e].clone())
        })
        .collect();
    let mut best: Option<(T, usize)> = None;
    for (idx, c) in costs.into_iter().enumerate() {
        let c = c?;
        if best.as_ref().is_none_or(|(b, _)| c > *b) {
            best = Some((c, idx));
        }
    }
    let (cost, idx) = best.expect("at least the nominal scenario");
    Ok((cost, scenarios[idx].clone()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioViolation {
    pub flipped: Vec<usize>,
    pub row: usize,
    pub origin: RowOrigin,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub gamma: usize,
    pub scenarios_checked: u64,
    pub violations: Vec<ScenarioViolation>,
    pub max_margin: f64,
    pub worst_case_cost: Option<f64>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

struct ScenarioOutcome<T> {
    violations: Vec<ScenarioViolation>,
    max_margin: f64,
    cost: T,
    states: Vec<Vec<T>>,
}

fn evaluate_scenario<T: Scalar>(
    policy: &AffinePolicy<T>,
    inst: &Instance<T>,
    s: &Scenario,
    tol: &T,
) -> Result<ScenarioOutcome<T>> {
    let (u, v) = policy_response(policy, &s.reference, &inst.partition)?;
    let r: Vec<T> = s.reference.iter().map(|&b| indicator(b)).collect();
    let states = simulate(&inst.dynamics, &inst.dynamics.x0, &r, &u, &v)?;
    let report = check_constraints(&states, &r, &u, &v, &inst.constraints, tol);
    let mut violations: Vec<ScenarioViolation> = report
        .violations
        .into_iter()
        .map(|rv| ScenarioViolation {
            flipped: s.flipped.clone(),
            row: rv.row,
            origin: rv.origin,
            margin: rv.margin,
        })
        .collect();
    let mut max_margin = report.max_margin;
    let base = states.len() * (inst.constraints.state_rows() + inst.constraints.input_rows());
    let qn = v.len();
    for (index, vk) in v.iter().enumerate() {
        for (row, origin, margin) in [
            (base + index, RowOrigin::BinaryUpper { index }, vk.clone() - T::one()),
            (base + qn + index, RowOrigin::BinaryLower { index }, -vk.clone()),
        ] {
            max_margin = max_margin.max(margin.as_f64());
            if margin > *tol {
                violations.push(ScenarioViolation {
                    flipped: s.flipped.clone(),
                    row,
                    origin,
                    margin: margin.as_f64(),
                });
            }
        }
    }
    let x: Vec<T> = states.iter().flatten().cloned().collect();
    let cost = inst.cost.evaluate(&x, &r, &u, &v);
    Ok(ScenarioOutcome {
        violations,
        max_margin,
        cost,
        states,
    })
}

fn evaluate_all<T: Scalar>(
    policy: &AffinePolicy<T>,
    gamma: usize,
    inst: &Instance<T>,
    tol: &T,
) -> Result<(Vec<Scenario>, Vec<ScenarioOutcome<T>>)> {
    let scenarios: Vec<Scenario> = enumerate_scenarios(&inst.partition, gamma)?.collect();
    let outcomes = scenarios
        .par_iter()
        .map(|s| evaluate_scenario(policy, inst, s, tol))
        .collect::<Result<Vec<_>>>()?;
    Ok((scenarios, outcomes))
}

/// Simulates the policy on every scenario with at most `gamma` flips and
/// reports each violated row. Reports are in enumeration order.
pub fn verify_policy<T: Scalar>(
    policy: &AffinePolicy<T>,
    gamma: usize,
    inst: &Instance<T>,
    tol: f64,
) -> Result<VerificationReport> {
    let tol_t = T::from_f64_lossy(tol);
    let (scenarios, outcomes) = evaluate_all(policy, gamma, inst, &tol_t)?;
    let mut max_margin = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    let mut worst: Option<f64> = None;
    for o in outcomes {
        max_margin = max_margin.max(o.max_margin);
        violations.extend(o.violations);
        let c = o.cost.as_f64();
        worst = Some(worst.map_or(c, |w: f64| w.max(c)));
    }
    let has_cost = inst.cost.mode == crate::system::CostMode::CostAndGamma;
    Ok(VerificationReport {
        gamma,
        scenarios_checked: scenarios.len() as u64,
        violations,
        max_margin,
        worst_case_cost: if has_cost { worst } else { None },
    })
}

/// Exact maximum of the cost over scenarios under the policy; ties go to the
/// earliest scenario in enumeration order.
pub fn worst_case_cost<T: Scalar>(policy: &AffinePolicy<T>, gamma: usize, inst: &Instance<T>) -> Result<(T, Scenario)> {
    let (scenarios, outcomes) = evaluate_all(policy, gamma, inst, &T::zero())?;
    let mut best: Option<(T, usize)> = None;
    for (idx, o) in outcomes.into_iter().enumerate() {
        if best.as_ref().is_none_or(|(b, _)| o.cost > *b) {
            best = Some((o.cost, idx));
        }
    }
    let (cost, idx) = best.expect("at least the nominal scenario");
    Ok((cost, scenarios[idx].clone()))
}

/// Pointwise range of every state component over the scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateEnvelope<T> {
    /// `[step][component]`
    pub lower: Vec<Vec<T>>,
    pub upper: Vec<Vec<T>>,
}

pub fn state_envelope<T: Scalar>(policy: &AffinePolicy<T>, gamma: usize, inst: &Instance<T>) -> Result<StateEnvelope<T>> {
    let (_, outcomes) = evaluate_all(policy, gamma, inst, &T::zero())?;
    let mut iter = outcomes.into_iter();
    let first = iter.next().expect("at least the nominal scenario").states;
    let (mut lower, mut upper) = (first.clone(), first);
    for o in iter {
        for (t, x) in o.states.into_iter().enumerate() {
            for (i, xi) in x.into_iter().enumerate() {
                if xi < lower[t][i] {
                    lower[t][i] = xi.clone();
                }
                if xi > upper[t][i] {
                    upper[t][i] = xi;
                }
            }
        }
    }
    Ok(StateEnvelope { lower, upper })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::worked_instance;
    use crate::matrix::Matrix;
    use crate::milp::Engine;

    fn solver() -> SolverOptions {
        SolverOptions::default().with_engine(Engine::Embedded)
    }

    fn identity_policy() -> AffinePolicy<f64> {
        AffinePolicy {
            gain_u: Matrix::identity(2),
            offset_u: vec![0.0, 0.0],
            gain_v: vec![],
            offset_v: vec![],
        }
    }

    #[test]
    fn enumeration_order_and_counts() {
        let part = UncertaintyPartition::new(vec![false; 5], vec![4, 1, 2]).unwrap();
        let all: Vec<Vec<usize>> = enumerate_scenarios(&part, 2).unwrap().map(|s| s.flipped).collect();
        assert_eq!(
            all,
            vec![vec![], vec![0], vec![1], vec![2], vec![0, 1], vec![0, 2], vec![1, 2]]
        );
        let first_flip = enumerate_scenarios(&part, 1).unwrap().nth(1).unwrap();
        assert_eq!(first_flip.reference, vec![false, false, false, false, true]);
        assert_eq!(enumerate_scenarios(&part, 0).unwrap().count(), 1);
        assert!(enumerate_scenarios(&part, 4).is_err());
        let eight = UncertaintyPartition::new(vec![false; 8], (0..8).collect()).unwrap();
        assert_eq!(enumerate_scenarios(&eight, 5).unwrap().count(), 219);
    }

    #[test]
    fn worked_instance_exhaustive() {
        let inst = worked_instance::<f64>();
        let cc = inst.compact().unwrap();
        let adj = exhaustive_gamma(&cc, &inst.partition, RecourseMode::Adjustable, &solver()).unwrap();
        assert_eq!(adj.gamma_star, 2);
        assert_eq!(adj.solves, 4);
        let st = exhaustive_gamma(&cc, &inst.partition, RecourseMode::Static, &solver()).unwrap();
        assert_eq!(st.gamma_star, 1);
        assert_eq!(st.blocking_gamma, Some(2));
    }

    #[test]
    fn empty_flexible_set() {
        let mut inst = worked_instance::<f64>();
        inst.partition = UncertaintyPartition::new(vec![false, false], vec![]).unwrap();
        let cc = inst.compact().unwrap();
        let adj = exhaustive_gamma(&cc, &inst.partition, RecourseMode::Adjustable, &solver()).unwrap();
        assert_eq!(adj.gamma_star, 0);
        assert!(adj.blocking.is_none());
    }

    #[test]
    fn nominal_infeasibility_is_an_error() {
        let mut inst = worked_instance::<f64>();
        inst.partition = UncertaintyPartition::new(vec![true, true], vec![0, 1]).unwrap();
        // Nominal r = (1, 1) with u <= 1/4 leaves x(2) >= 3/2 above its bound.
        inst.constraints.input_rhs = vec![0.25, 0.0];
        let cc = inst.compact().unwrap();
        assert!(matches!(
            exhaustive_gamma(&cc, &inst.partition, RecourseMode::Adjustable, &solver()),
            Err(Error::NominalInfeasible)
        ));
    }

    #[test]
    fn identity_policy_verifies() {
        let inst = worked_instance::<f64>();
        let rep = verify_policy(&identity_policy(), 2, &inst, 1e-6).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.scenarios_checked, 4);
        assert!(rep.max_margin <= 1e-6);
        let zero = AffinePolicy::zero(2, 0, 2);
        let rep = verify_policy(&zero, 2, &inst, 1e-6).unwrap();
        assert!(!rep.passed());
        assert!(rep.violations.iter().all(|v| !v.flipped.is_empty()));
        assert!(verify_policy(&zero, 0, &inst, 1e-6).unwrap().passed());
    }

    #[test]
    fn worst_cost_by_enumeration() {
        let mut inst = worked_instance::<f64>();
        inst.cost.input_cont = vec![1.0, 1.0];
        inst.cost.mode = crate::system::CostMode::CostAndGamma;
        let (c, s) = worst_case_cost(&identity_policy(), 2, &inst).unwrap();
        assert_eq!(c, 2.0);
        assert_eq!(s.flipped, vec![0, 1]);
        let (c0, s0) = worst_case_cost(&identity_policy(), 0, &inst).unwrap();
        assert_eq!((c0, s0.size()), (0.0, 0));
        let env = state_envelope(&identity_policy(), 2, &inst).unwrap();
        assert_eq!(env.upper, vec![vec![0.0], vec![0.0]]);
    }

    #[test]
    fn adjustable_cost_uses_cheapest_recourse() {
        let mut inst = worked_instance::<f64>();
        inst.cost.input_cont = vec![1.0, 1.0];
        inst.cost.mode = crate::system::CostMode::CostAndGamma;
        let cc = inst.compact().unwrap();
        // Cheapest recourse for r = (1, 1): x(2) = 2 - u0 - u1 <= 1 needs
        // u0 + u1 >= 1 and x(1) = 1 - u0 <= 1 holds for any u0 >= 0.
        let (c, s) = adjustable_worst_cost(&cc, &inst.partition, 2, &solver()).unwrap();
        assert!((c - 1.0).abs() < 1e-9);
        assert_eq!(s.flipped, vec![0, 1]);
    }
}
