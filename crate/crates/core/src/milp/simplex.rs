//! Dense two-phase tableau simplex.
//!
//! Variables are shifted onto their lower bound (or reflected onto their upper
//! bound, or split when free) so every column is nonnegative; finite upper
//! bounds become explicit rows. All rows are brought to `<=` form, and rows
//! with a negative right-hand side get a surplus and an artificial column.
//! Pricing is Dantzig's rule, switching to Bland's rule after a run of
//! degenerate pivots.

use crate::error::Result;
use crate::scalar::Scalar;

use super::{LpSolution, MilpProblem, RowSense, SolveStatus, SolverOptions};

const STALL_LIMIT: usize = 50;

pub fn solve_lp<T: Scalar>(p: &MilpProblem<T>, opts: &SolverOptions) -> Result<LpSolution<T>> {
    p.validate()?;
    opts.validate()?;
    let lower: Vec<Option<T>> = p.vars.iter().map(|v| v.lower.clone()).collect();
    let upper: Vec<Option<T>> = p.vars.iter().map(|v| v.upper.clone()).collect();
    Ok(solve_bounded(p, &lower, &upper, opts))
}

struct StdCol {
    var: usize,
    negate: bool,
}

enum StdOrigin {
    Row { index: usize, factor: i8 },
    Bound,
}

struct StdRow<T> {
    coefs: Vec<(usize, T)>,
    rhs: T,
    origin: StdOrigin,
}

struct Tols<T> {
    /// Optimality and feasibility tolerance.
    opt: T,
    /// Smallest usable pivot element.
    pivot: T,
    /// Entries below this are flushed to zero after a pivot (floats only).
    flush: Option<T>,
}

impl<T: Scalar> Tols<T> {
    fn new(lp_tol: f64) -> Self {
        if T::EXACT {
            Self {
                opt: T::zero(),
                pivot: T::zero(),
                flush: None,
            }
        } else {
            Self {
                opt: T::from_f64_lossy(lp_tol),
                pivot: T::from_f64_lossy(1e-9),
                flush: Some(T::from_f64_lossy(1e-12)),
            }
        }
    }
}

struct Tableau<T> {
    rows: Vec<Vec<T>>,
    /// Reduced costs followed by minus the objective value.
    obj: Vec<T>,
    basis: Vec<usize>,
    artificial: Vec<bool>,
    ncols: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl<T: Scalar> Tableau<T> {
    fn rhs(&self, k: usize) -> &T {
        &self.rows[k][self.ncols]
    }

    fn price(&mut self, cost: &[T]) {
        let mut obj: Vec<T> = cost.to_vec();
        obj.push(T::zero());
        for (k, row) in self.rows.iter().enumerate() {
            let cb = &cost[self.basis[k]];
            if cb.is_zero() {
                continue;
            }
            for (o, a) in obj.iter_mut().zip(row) {
                if !a.is_zero() {
                    *o = o.clone() - cb.clone() * a.clone();
                }
            }
        }
        self.obj = obj;
    }

    fn pivot(&mut self, r: usize, e: usize, tols: &Tols<T>) {
        let piv = self.rows[r][e].clone();
        for a in self.rows[r].iter_mut() {
            if !a.is_zero() {
                *a = a.clone() / piv.clone();
            }
        }
        self.rows[r][e] = T::one();
        let pivot_row = std::mem::take(&mut self.rows[r]);
        let nz: Vec<usize> = (0..pivot_row.len())
            .filter(|&j| !pivot_row[j].is_zero())
            .collect();
        let eliminate = |target: &mut Vec<T>| {
            let f = target[e].clone();
            if f.is_zero() {
                return;
            }
            for &j in &nz {
                let v = target[j].clone() - f.clone() * pivot_row[j].clone();
                target[j] = match &tols.flush {
                    Some(eps) if v.abs() < *eps => T::zero(),
                    _ => v,
                };
            }
            target[e] = T::zero();
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        eliminate(&mut self.obj);
        self.rows[r] = pivot_row;
        self.basis[r] = e;
    }

    fn run(
        &mut self,
        allowed: &[bool],
        tols: &Tols<T>,
        max_iter: u64,
        iters: &mut u64,
    ) -> Outcome {
        let neg_tol = -tols.opt.clone();
        let mut degenerate_run = 0usize;
        loop {
            if *iters >= max_iter {
                return Outcome::IterationLimit;
            }
            let bland = degenerate_run >= STALL_LIMIT;
            let mut entering: Option<usize> = None;
            for j in 0..self.ncols {
                if !allowed[j] || self.obj[j] >= neg_tol {
                    continue;
                }
                match entering {
                    None => entering = Some(j),
                    Some(_) if bland => break,
                    Some(b) if self.obj[j] < self.obj[b] => entering = Some(j),
                    _ => {}
                }
                if bland {
                    break;
                }
            }
            let Some(e) = entering else {
                return Outcome::Optimal;
            };

            let mut leave: Option<(usize, T)> = None;
            for k in 0..self.rows.len() {
                let a = &self.rows[k][e];
                if *a <= tols.pivot || a.is_zero() {
                    continue;
                }
                let rhs = T::max_of(self.rhs(k).clone(), T::zero());
                let ratio = rhs / a.clone();
                leave = match leave {
                    None => Some((k, ratio)),
                    Some((b, best)) => {
                        let better = if ratio < best.clone() - tols.opt.clone() {
                            true
                        } else if ratio > best.clone() + tols.opt.clone() {
                            false
                        } else if bland {
                            self.basis[k] < self.basis[b]
                        } else {
                            let (ak, ab) = (a.abs(), self.rows[b][e].abs());
                            ak > ab || (ak == ab && self.basis[k] < self.basis[b])
                        };
                        if better {
                            Some((k, ratio))
                        } else {
                            Some((b, best))
                        }
                    }
                };
            }
            let Some((r, step)) = leave else {
                return Outcome::Unbounded;
            };
            if step <= tols.opt {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, e, tols);
            *iters += 1;
        }
    }
}

/// Solves the LP relaxation of `p` with the given bounds replacing the
/// problem's own.
pub(crate) fn solve_bounded<T: Scalar>(
    p: &MilpProblem<T>,
    lower: &[Option<T>],
    upper: &[Option<T>],
    opts: &SolverOptions,
) -> LpSolution<T> {
    let tols = Tols::<T>::new(opts.lp_tol);
    let nv = p.num_vars();
    let fail = |status, iterations| LpSolution {
        status,
        values: Vec::new(),
        row_duals: Vec::new(),
        reduced_costs: Vec::new(),
        objective: None,
        iterations,
    };

    // Column map and offsets.
    let mut cols: Vec<StdCol> = Vec::new();
    let mut var_cols: Vec<Vec<usize>> = vec![Vec::new(); nv];
    let mut offset = vec![T::zero(); nv];
    let mut std_rows: Vec<StdRow<T>> = Vec::new();
    let mut push_col = |cols: &mut Vec<StdCol>, var: usize, negate: bool| {
        cols.push(StdCol { var, negate });
        var_cols[var].push(cols.len() - 1);
        cols.len() - 1
    };
    for j in 0..nv {
        match (&lower[j], &upper[j]) {
            (Some(l), Some(u)) => {
                if *u < l.clone() - tols.opt.clone() {
                    return fail(SolveStatus::Infeasible, 0);
                }
                let c = push_col(&mut cols, j, false);
                offset[j] = l.clone();
                std_rows.push(StdRow {
                    coefs: vec![(c, T::one())],
                    rhs: T::max_of(u.clone() - l.clone(), T::zero()),
                    origin: StdOrigin::Bound,
                });
            }
            (Some(l), None) => {
                push_col(&mut cols, j, false);
                offset[j] = l.clone();
            }
            (None, Some(u)) => {
                push_col(&mut cols, j, true);
                offset[j] = u.clone();
            }
            (None, None) => {
                push_col(&mut cols, j, false);
                push_col(&mut cols, j, true);
            }
        }
    }
    let var_cols = var_cols;

    for (i, row) in p.rows.iter().enumerate() {
        let mut coefs = Vec::new();
        let mut rhs = row.rhs.clone();
        for (j, a) in &row.coefs {
            rhs = rhs - a.clone() * offset[*j].clone();
            for &c in &var_cols[*j] {
                let v = if cols[c].negate { -a.clone() } else { a.clone() };
                coefs.push((c, v));
            }
        }
        let negated = || -> Vec<(usize, T)> {
            coefs.iter().map(|(c, a)| (*c, -a.clone())).collect()
        };
        match row.sense {
            RowSense::Le => std_rows.push(StdRow {
                coefs: coefs.clone(),
                rhs,
                origin: StdOrigin::Row { index: i, factor: 1 },
            }),
            RowSense::Ge => std_rows.push(StdRow {
                coefs: negated(),
                rhs: -rhs,
                origin: StdOrigin::Row { index: i, factor: -1 },
            }),
            RowSense::Eq => {
                std_rows.push(StdRow {
                    coefs: coefs.clone(),
                    rhs: rhs.clone(),
                    origin: StdOrigin::Row { index: i, factor: 1 },
                });
                std_rows.push(StdRow {
                    coefs: negated(),
                    rhs: -rhs,
                    origin: StdOrigin::Row { index: i, factor: -1 },
                });
            }
        }
    }

    // Tableau: structural | one identity column per row | surplus columns.
    let ns = cols.len();
    let m = std_rows.len();
    let flipped: Vec<bool> = std_rows.iter().map(|r| r.rhs < T::zero()).collect();
    let n_surplus = flipped.iter().filter(|f| **f).count();
    let ncols = ns + m + n_surplus;
    let mut artificial = vec![false; ncols];
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut next_surplus = ns + m;
    for (k, sr) in std_rows.iter().enumerate() {
        let mut row = vec![T::zero(); ncols + 1];
        let sign = if flipped[k] { -T::one() } else { T::one() };
        for (c, a) in &sr.coefs {
            row[*c] = row[*c].clone() + sign.clone() * a.clone();
        }
        row[ns + k] = T::one();
        if flipped[k] {
            row[next_surplus] = -T::one();
            next_surplus += 1;
            artificial[ns + k] = true;
        }
        row[ncols] = sign * sr.rhs.clone();
        rows.push(row);
        basis.push(ns + k);
    }
    let mut tab = Tableau {
        rows,
        obj: Vec::new(),
        basis,
        artificial,
        ncols,
    };
    let mut iters = 0u64;

    // Phase 1.
    if n_surplus > 0 {
        let cost: Vec<T> = (0..ncols)
            .map(|j| {
                if tab.artificial[j] {
                    T::one()
                } else {
                    T::zero()
                }
            })
            .collect();
        tab.price(&cost);
        let allowed: Vec<bool> = tab.artificial.iter().map(|a| !a).collect();
        match tab.run(&allowed, &tols, opts.max_lp_iterations, &mut iters) {
            Outcome::Optimal => {}
            Outcome::IterationLimit => return fail(SolveStatus::IterationLimit, iters),
            Outcome::Unbounded => unreachable!("phase one objective is bounded below"),
        }
        let infeas = -tab.obj[ncols].clone();
        let scale = std_rows
            .iter()
            .fold(T::one(), |acc, r| T::max_of(acc, r.rhs.abs()));
        if infeas > tols.opt.clone() * scale {
            return fail(SolveStatus::Infeasible, iters);
        }
        // Drive remaining artificials out of the basis where possible.
        for k in 0..m {
            if !tab.artificial[tab.basis[k]] {
                continue;
            }
            let best = (0..ncols)
                .filter(|&j| !tab.artificial[j])
                .filter(|&j| tab.rows[k][j].abs() > tols.pivot)
                .max_by(|&a, &b| {
                    tab.rows[k][a]
                        .abs()
                        .partial_cmp(&tab.rows[k][b].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(b.cmp(&a))
                });
            if let Some(j) = best {
                tab.pivot(k, j, &tols);
                iters += 1;
            }
        }
    }

    // Phase 2.
    let mut cost = vec![T::zero(); ncols];
    for (c, col) in cols.iter().enumerate() {
        let cv = p.vars[col.var].cost.clone();
        cost[c] = if col.negate { -cv } else { cv };
    }
    tab.price(&cost);
    let allowed: Vec<bool> = tab.artificial.iter().map(|a| !a).collect();
    match tab.run(&allowed, &tols, opts.max_lp_iterations, &mut iters) {
        Outcome::Optimal => {}
        Outcome::Unbounded => return fail(SolveStatus::Unbounded, iters),
        Outcome::IterationLimit => return fail(SolveStatus::IterationLimit, iters),
    }

    let mut xs = vec![T::zero(); ncols];
    for (k, &b) in tab.basis.iter().enumerate() {
        xs[b] = tab.rhs(k).clone();
    }
    let mut values = offset;
    for (c, col) in cols.iter().enumerate() {
        if xs[c].is_zero() {
            continue;
        }
        let v = values[col.var].clone();
        values[col.var] = if col.negate {
            v - xs[c].clone()
        } else {
            v + xs[c].clone()
        };
    }

    // Row multipliers: stored-row dual is minus the identity column's reduced
    // cost; undo the row flips and fold back onto the original rows.
    let mut row_duals = vec![T::zero(); p.num_rows()];
    for (k, sr) in std_rows.iter().enumerate() {
        if let StdOrigin::Row { index, factor } = sr.origin {
            let mut y = -tab.obj[ns + k].clone();
            if flipped[k] {
                y = -y;
            }
            if factor < 0 {
                y = -y;
            }
            row_duals[index] = row_duals[index].clone() - y;
        }
    }
    let reduced_costs = super::duality::reduced_costs(p, &row_duals);
    let objective = p.objective(&values);
    LpSolution {
        status: SolveStatus::Optimal,
        values,
        row_duals,
        reduced_costs,
        objective: Some(objective),
        iterations: iters,
    }
}
