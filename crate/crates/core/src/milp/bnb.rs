//! Best-bound branch and bound on top of the dense simplex.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::scalar::Scalar;

use super::simplex::solve_bounded;
use super::{Engine, MilpProblem, MilpSolution, SolveStatus, SolverOptions};

/// Solves `p` with the engine selected in `opts`.
pub fn solve_milp<T: Scalar>(p: &MilpProblem<T>, opts: &SolverOptions) -> Result<MilpSolution<T>> {
    p.validate()?;
    opts.validate()?;
    p.check_integer_bounds()?;
    let engine = match opts.engine {
        Engine::Auto if !T::EXACT && Engine::highs_available() && p.dense_tableau_cells() > opts.dense_cell_limit => {
            Engine::Highs
        }
        Engine::Auto => Engine::Embedded,
        e => e,
    };
    match engine {
        Engine::Highs => solve_highs(p, opts),
        _ => Ok(branch_and_bound(p, opts)),
    }
}

#[cfg(feature = "highs")]
fn solve_highs<T: Scalar>(p: &MilpProblem<T>, opts: &SolverOptions) -> Result<MilpSolution<T>> {
    let sol = super::highs_backend::solve(&p.convert::<f64>(), opts)?;
    Ok(MilpSolution {
        status: sol.status,
        values: sol.values.iter().map(|v| T::from_f64_lossy(*v)).collect(),
        objective: sol.objective.map(T::from_f64_lossy),
        nodes: sol.nodes,
        lp_iterations: sol.lp_iterations,
        wall_time: sol.wall_time,
        engine: Engine::Highs,
    })
}

#[cfg(not(feature = "highs"))]
fn solve_highs<T: Scalar>(_: &MilpProblem<T>, _: &SolverOptions) -> Result<MilpSolution<T>> {
    Err(crate::error::Error::EngineUnavailable("highs"))
}

struct Node<T> {
    lower: Vec<Option<T>>,
    upper: Vec<Option<T>>,
    bound: f64,
    depth: usize,
    seq: u64,
}

// Max-heap order: smallest bound first, then deepest, then oldest.
impl<T> Ord for Node<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

impl<T> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T> Eq for Node<T> {}

fn ceil<T: Scalar>(x: &T) -> T {
    -(-x.clone()).floor()
}

pub(crate) fn branch_and_bound<T: Scalar>(p: &MilpProblem<T>, opts: &SolverOptions) -> MilpSolution<T> {
    let start = Instant::now();
    let int_tol = T::from_f64_lossy(opts.int_tol);
    // When every cost sits on an integer variable with an integral
    // coefficient, objective values are integers and the cutoff can be
    // raised to one unit below the incumbent.
    let integral_objective = p.vars.iter().all(|v| {
        v.cost.is_zero() || (v.is_integer() && v.cost.round_nearest() == v.cost)
    });
    let gap = if integral_objective {
        opts.abs_gap.max(1.0 - 1e-6)
    } else {
        opts.abs_gap
    };

    // Seeded priority among equally fractional variables.
    let mut priority: Vec<usize> = (0..p.num_vars()).collect();
    priority.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    let mut rank = vec![0usize; p.num_vars()];
    for (r, &j) in priority.iter().enumerate() {
        rank[j] = r;
    }

    let mut lower: Vec<Option<T>> = Vec::with_capacity(p.num_vars());
    let mut upper: Vec<Option<T>> = Vec::with_capacity(p.num_vars());
    for v in &p.vars {
        if v.is_integer() {
            lower.push(v.lower.as_ref().map(|l| ceil(&(l.clone() - int_tol.clone()))));
            upper.push(v.upper.as_ref().map(|u| (u.clone() + int_tol.clone()).floor()));
        } else {
            lower.push(v.lower.clone());
            upper.push(v.upper.clone());
        }
    }

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        lower,
        upper,
        bound: f64::NEG_INFINITY,
        depth: 0,
        seq: 0,
    });
    let mut seq = 1u64;
    let mut nodes = 0u64;
    let mut iterations = 0u64;
    let mut incumbent: Option<(T, Vec<T>)> = None;
    let mut status = None;
    let mut lp_trouble = false;

    // Until the first incumbent exists, dive depth first on the preferred
    // child; best-bound order takes over afterwards.
    let mut stack: Vec<Node<T>> = Vec::new();
    loop {
        if incumbent.is_some() && !stack.is_empty() {
            heap.extend(stack.drain(..));
        }
        let Some(node) = stack.pop().or_else(|| heap.pop()) else {
            break;
        };
        if let Some((best, _)) = &incumbent {
            if node.bound >= best.as_f64() - gap {
                continue;
            }
        }
        if nodes >= opts.max_nodes {
            status = Some(SolveStatus::NodeLimit);
            break;
        }
        nodes += 1;
        let lp = solve_bounded(p, &node.lower, &node.upper, opts);
        iterations += lp.iterations;
        match lp.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => continue,
            SolveStatus::Unbounded if node.depth == 0 => {
                status = Some(SolveStatus::Unbounded);
                break;
            }
            _ => {
                lp_trouble = true;
                continue;
            }
        }
        let obj = lp.objective.expect("optimal LP has an objective");
        let obj_f = obj.as_f64();
        if let Some((best, _)) = &incumbent {
            if obj_f >= best.as_f64() - gap {
                continue;
            }
        }

        // Most fractional integer variable, ties by seeded rank. Variables
        // carrying objective weight go first, since big-M relaxations tend
        // to leave them barely fractional while the bound depends on them.
        let mut branch: Option<(usize, T)> = None;
        for pass in [true, false] {
            for (j, v) in p.vars.iter().enumerate() {
                if !v.is_integer() || v.cost.is_zero() != !pass {
                    continue;
                }
                let x = &lp.values[j];
                let frac = x.clone() - x.floor();
                let dist = T::min_of(frac.clone(), T::one() - frac);
                if dist <= int_tol {
                    continue;
                }
                branch = match branch {
                    Some((b, bd)) if bd > dist || (bd == dist && rank[b] < rank[j]) => Some((b, bd)),
                    _ => Some((j, dist)),
                };
            }
            if branch.is_some() {
                break;
            }
        }

        let j = match branch {
            Some((j, _)) => j,
            None => {
                // Integral within tolerance. Near-integral values can still
                // open big-M rows by M times the residual, so the continuous
                // part is re-solved with the integers fixed exactly.
                if let Some((values, obj)) = polish_embedded(p, &lp.values, opts) {
                    if incumbent.as_ref().is_none_or(|(best, _)| obj < *best) {
                        incumbent = Some((obj, values));
                    }
                    continue;
                }
                // Split the offending variable three ways around its rounding.
                let Some(j) = most_off_integer(p, &lp.values, &rank) else {
                    continue;
                };
                let r = lp.values[j].round_nearest();
                let mut children = Vec::new();
                let mut fixed = Node {
                    lower: node.lower.clone(),
                    upper: node.upper.clone(),
                    bound: obj_f,
                    depth: node.depth + 1,
                    seq: 0,
                };
                fixed.lower[j] = Some(r.clone());
                fixed.upper[j] = Some(r.clone());
                children.push(fixed);
                let below = r.clone() - T::one();
                if node.lower[j].as_ref().is_none_or(|l| *l <= below) {
                    let mut c = Node {
                        lower: node.lower.clone(),
                        upper: node.upper.clone(),
                        bound: obj_f,
                        depth: node.depth + 1,
                        seq: 0,
                    };
                    c.upper[j] = Some(below);
                    children.push(c);
                }
                let above = r + T::one();
                if node.upper[j].as_ref().is_none_or(|u| *u >= above) {
                    let mut c = Node {
                        lower: node.lower.clone(),
                        upper: node.upper.clone(),
                        bound: obj_f,
                        depth: node.depth + 1,
                        seq: 0,
                    };
                    c.lower[j] = Some(above);
                    children.push(c);
                }
                for mut child in children.into_iter().rev() {
                    child.seq = seq;
                    seq += 1;
                    if incumbent.is_none() {
                        stack.push(child);
                    } else {
                        heap.push(child);
                    }
                }
                continue;
            }
        };

        let x = lp.values[j].clone();
        let down_val = x.floor();
        let up_first = x.clone() - down_val.clone() >= crate::scalar::one_half::<T>();
        let mut down = Node {
            lower: node.lower.clone(),
            upper: node.upper.clone(),
            bound: obj_f,
            depth: node.depth + 1,
            seq: 0,
        };
        down.upper[j] = Some(down_val.clone());
        let mut up = Node {
            lower: node.lower,
            upper: node.upper,
            bound: obj_f,
            depth: node.depth + 1,
            seq: 0,
        };
        up.lower[j] = Some(down_val + T::one());
        let (first, second) = if up_first { (up, down) } else { (down, up) };
        for mut child in [second, first] {
            child.seq = seq;
            seq += 1;
            if incumbent.is_none() {
                stack.push(child);
            } else {
                heap.push(child);
            }
        }
    }

    let status = status.unwrap_or(match (&incumbent, lp_trouble) {
        (Some(_), _) => SolveStatus::Optimal,
        (None, true) => SolveStatus::IterationLimit,
        (None, false) => SolveStatus::Infeasible,
    });
    let (objective, values) = match incumbent {
        Some((o, v)) if status != SolveStatus::Unbounded => (Some(o), v),
        _ => (None, Vec::new()),
    };
    log::debug!(
        "branch and bound: {status:?} after {nodes} nodes, {iterations} LP iterations"
    );
    MilpSolution {
        status,
        values,
        objective,
        nodes,
        lp_iterations: iterations,
        wall_time: start.elapsed(),
        engine: Engine::Embedded,
    }
}

/// Integer variable farthest from its rounding, if any is off at all.
fn most_off_integer<T: Scalar>(p: &MilpProblem<T>, x: &[T], rank: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (j, v) in p.vars.iter().enumerate() {
        if !v.is_integer() {
            continue;
        }
        let d = crate::scalar::fractionality(&x[j]);
        if d.is_zero() {
            continue;
        }
        best = match best {
            Some((b, bd)) if bd > d || (bd == d && rank[b] < rank[j]) => Some((b, bd)),
            _ => Some((j, d)),
        };
    }
    best.map(|(j, _)| j)
}

/// Problem with every integer variable fixed at the rounding of `x`.
pub(crate) fn fixed_integers<T: Scalar>(p: &MilpProblem<T>, x: &[T]) -> MilpProblem<T> {
    let mut fixed = p.clone();
    for (v, xi) in fixed.vars.iter_mut().zip(x) {
        if v.is_integer() {
            let r = xi.round_nearest();
            v.lower = Some(r.clone());
            v.upper = Some(r);
            v.kind = super::VarKind::Continuous;
        }
    }
    fixed
}

fn polish_embedded<T: Scalar>(p: &MilpProblem<T>, x: &[T], opts: &SolverOptions) -> Option<(Vec<T>, T)> {
    let fixed = fixed_integers(p, x);
    let lower: Vec<Option<T>> = fixed.vars.iter().map(|v| v.lower.clone()).collect();
    let upper: Vec<Option<T>> = fixed.vars.iter().map(|v| v.upper.clone()).collect();
    let lp = solve_bounded(&fixed, &lower, &upper, opts);
    match lp.status {
        SolveStatus::Optimal => {
            let obj = lp.objective.expect("optimal LP has an objective");
            Some((lp.values, obj))
        }
        _ => None,
    }
}
