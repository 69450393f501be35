//! Optimality certificate for LP solutions.

use crate::scalar::Scalar;

use super::{MilpProblem, RowSense, SolverOptions};

/// `c + Aᵀ y` for row multipliers `y`.
pub fn reduced_costs<T: Scalar>(p: &MilpProblem<T>, duals: &[T]) -> Vec<T> {
    let mut d: Vec<T> = p.vars.iter().map(|v| v.cost.clone()).collect();
    for (row, y) in p.rows.iter().zip(duals) {
        if y.is_zero() {
            continue;
        }
        for (j, a) in &row.coefs {
            d[*j] = d[*j].clone() + a.clone() * y.clone();
        }
    }
    d
}

/// Checks primal feasibility, dual sign feasibility, complementary slackness
/// and equality of primal and dual objectives, all within `10 * lp_tol`
/// (relative to the magnitude of the objective when it exceeds one).
///
/// Multipliers follow the convention of [`super::LpSolution::row_duals`]:
/// stationarity reads `c + Aᵀ y = d`, where `d_j > 0` only at a lower bound
/// and `d_j < 0` only at an upper bound.
pub fn lp_duality_check<T: Scalar>(
    p: &MilpProblem<T>,
    primal: &[T],
    duals: &[T],
    opts: &SolverOptions,
) -> bool {
    if primal.len() != p.num_vars() || duals.len() != p.num_rows() {
        return false;
    }
    let tol = 10.0 * opts.lp_tol;
    if p.max_violation(primal) > tol {
        return false;
    }

    // Dual objective: -b·y plus bound terms from the reduced costs.
    let mut dual_obj = 0.0_f64;
    for (i, (row, y)) in p.rows.iter().zip(duals).enumerate() {
        let yf = y.as_f64();
        let sign_ok = match row.sense {
            RowSense::Le => yf >= -tol,
            RowSense::Ge => yf <= tol,
            RowSense::Eq => true,
        };
        if !sign_ok {
            return false;
        }
        let slack = (p.row_activity(i, primal) - row.rhs.clone()).as_f64();
        if (yf * slack).abs() > tol {
            return false;
        }
        dual_obj -= row.rhs.as_f64() * yf;
    }

    let d = reduced_costs(p, duals);
    for ((v, dj), xj) in p.vars.iter().zip(&d).zip(primal) {
        let dj = dj.as_f64();
        let xj = xj.as_f64();
        if dj > tol {
            match &v.lower {
                Some(l) if (dj * (xj - l.as_f64())).abs() <= tol => dual_obj += dj * l.as_f64(),
                _ => return false,
            }
        } else if dj < -tol {
            match &v.upper {
                Some(u) if (dj * (u.as_f64() - xj)).abs() <= tol => dual_obj += dj * u.as_f64(),
                _ => return false,
            }
        } else {
            dual_obj += dj * xj;
        }
    }

    let primal_obj = p.objective(primal).as_f64();
    (primal_obj - dual_obj).abs() <= tol * primal_obj.abs().max(1.0)
}
