//! HiGHS backend for problems too large for the dense tableau.

use std::ops::Bound;
use std::time::Instant;

use highs::{HighsModelStatus, RowProblem, Sense};

use crate::error::{Error, Result};

use super::{Engine, MilpProblem, MilpSolution, RowSense, SolveStatus, SolverOptions};

fn bounds(lo: Option<f64>, hi: Option<f64>) -> (Bound<f64>, Bound<f64>) {
    (
        lo.map_or(Bound::Unbounded, Bound::Included),
        hi.map_or(Bound::Unbounded, Bound::Included),
    )
}

fn build(p: &MilpProblem<f64>) -> RowProblem {
    let mut pb = RowProblem::default();
    let cols: Vec<_> = p
        .vars
        .iter()
        .map(|v| {
            let b = bounds(v.lower, v.upper);
            if v.is_integer() {
                pb.add_integer_column(v.cost, b)
            } else {
                pb.add_column(v.cost, b)
            }
        })
        .collect();
    for row in &p.rows {
        let b = match row.sense {
            RowSense::Le => bounds(None, Some(row.rhs)),
            RowSense::Ge => bounds(Some(row.rhs), None),
            RowSense::Eq => bounds(Some(row.rhs), Some(row.rhs)),
        };
        pb.add_row(b, row.coefs.iter().map(|(j, a)| (cols[*j], *a)));
    }
    pb
}

fn run(
    p: &MilpProblem<f64>,
    opts: &SolverOptions,
    presolve: bool,
) -> Result<(HighsModelStatus, Vec<f64>, f64, u64, u64)> {
    let mut model = build(p).optimise(Sense::Minimise);
    model.make_quiet();
    let set = |model: &mut highs::Model, name: &str, value: OptionValue| {
        let r = match value {
            OptionValue::Int(v) => model.try_set_option(name, v),
            OptionValue::Float(v) => model.try_set_option(name, v),
            OptionValue::Str(v) => model.try_set_option(name, v),
        };
        r.map_err(|e| Error::Backend(format!("option {name}: {e:?}")))
    };
    set(&mut model, "threads", OptionValue::Int(1))?;
    set(&mut model, "random_seed", OptionValue::Int((opts.seed % i32::MAX as u64) as i32))?;
    set(&mut model, "mip_abs_gap", OptionValue::Float(opts.abs_gap))?;
    set(&mut model, "mip_rel_gap", OptionValue::Float(1e-9))?;
    set(&mut model, "mip_feasibility_tolerance", OptionValue::Float(opts.int_tol))?;
    set(&mut model, "primal_feasibility_tolerance", OptionValue::Float(opts.lp_tol))?;
    set(&mut model, "dual_feasibility_tolerance", OptionValue::Float(opts.lp_tol))?;
    set(
        &mut model,
        "mip_max_nodes",
        OptionValue::Int(opts.max_nodes.min(i32::MAX as u64) as i32),
    )?;
    if !presolve {
        set(&mut model, "presolve", OptionValue::Str("off"))?;
    }
    let solved = model
        .try_solve()
        .map_err(|e| Error::Backend(format!("solve: {e:?}")))?;
    let mut nodes: i64 = 0;
    // SAFETY: the pointer is a live HiGHS instance owned by `solved`, and the
    // key is a valid NUL-terminated string naming an int64 info value.
    let rc = unsafe {
        highs_sys::Highs_getInt64InfoValue(solved.as_ptr(), c"mip_node_count".as_ptr(), &mut nodes)
    };
    if rc != 0 || nodes < 0 {
        nodes = 0;
    }
    let iters = solved
        .int_info_value(c"simplex_iteration_count")
        .unwrap_or(0)
        .max(0) as u64;
    let status = solved.status();
    let values = solved.get_solution().columns().to_vec();
    Ok((status, values, solved.objective_value(), nodes as u64, iters))
}

enum OptionValue {
    Int(i32),
    Float(f64),
    Str(&'static str),
}

pub(crate) fn solve(p: &MilpProblem<f64>, opts: &SolverOptions) -> Result<MilpSolution<f64>> {
    let start = Instant::now();
    let mut sol = solve_raw(p, opts)?;
    if sol.status != SolveStatus::Optimal || p.num_integer() == 0 {
        return Ok(sol);
    }
    // A near-integral point can open big-M rows by M times the residual.
    // Re-solve the continuous part with the integers fixed exactly, and if
    // that fails, tighten the integrality tolerance once and retry.
    if let Some(polished) = polish(p, &sol.values, opts)? {
        sol.values = polished.0;
        sol.objective = Some(polished.1);
    } else {
        let mut tight = opts.clone();
        tight.int_tol = 1e-10;
        tight.lp_tol = tight.lp_tol.min(1e-9);
        let retry = solve_raw(p, &tight)?;
        sol.nodes += retry.nodes;
        sol.lp_iterations += retry.lp_iterations;
        match retry.status {
            SolveStatus::Optimal => match polish(p, &retry.values, opts)? {
                Some((values, obj)) => {
                    sol.values = values;
                    sol.objective = Some(obj);
                }
                None => {
                    return Err(Error::Backend(
                        "integer solution does not survive fixing the integers".into(),
                    ))
                }
            },
            status => {
                sol.status = status;
                sol.values = retry.values;
                sol.objective = retry.objective;
            }
        }
    }
    sol.wall_time = start.elapsed();
    Ok(sol)
}

fn polish(p: &MilpProblem<f64>, x: &[f64], opts: &SolverOptions) -> Result<Option<(Vec<f64>, f64)>> {
    let fixed = super::bnb::fixed_integers(p, x);
    let (status, values, objective, _, _) = run(&fixed, opts, true)?;
    Ok(match status {
        HighsModelStatus::Optimal => Some((values, objective)),
        HighsModelStatus::ModelEmpty => Some((values, 0.0)),
        _ => None,
    })
}

fn solve_raw(p: &MilpProblem<f64>, opts: &SolverOptions) -> Result<MilpSolution<f64>> {
    let start = Instant::now();
    let mut out = run(p, opts, true)?;
    if out.0 == HighsModelStatus::UnboundedOrInfeasible {
        out = run(p, opts, false)?;
    }
    let (status, values, objective, nodes, iters) = out;
    let has_point = values.len() == p.num_vars() && p.max_violation(&values) <= 1e3 * opts.lp_tol;
    let (status, keep) = match status {
        HighsModelStatus::Optimal => (SolveStatus::Optimal, true),
        HighsModelStatus::ModelEmpty => (SolveStatus::Optimal, true),
        HighsModelStatus::Infeasible => (SolveStatus::Infeasible, false),
        HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
            (SolveStatus::Unbounded, false)
        }
        HighsModelStatus::ReachedIterationLimit => (SolveStatus::IterationLimit, has_point),
        HighsModelStatus::ReachedTimeLimit
        | HighsModelStatus::ReachedSolutionLimit
        | HighsModelStatus::Unknown => (SolveStatus::NodeLimit, has_point),
        other => return Err(Error::Backend(format!("model status {other:?}"))),
    };
    let (values, objective) = if keep {
        let values = if p.num_vars() == 0 { Vec::new() } else { values };
        (values, Some(if p.num_vars() == 0 { 0.0 } else { objective }))
    } else {
        (Vec::new(), None)
    };
    Ok(MilpSolution {
        status,
        values,
        objective,
        nodes,
        lp_iterations: iters,
        wall_time: start.elapsed(),
        engine: Engine::Highs,
    })
}
