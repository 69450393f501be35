//! Small LP/MILP solver: dense two-phase simplex plus best-bound branch and
//! bound, with an optional HiGHS backend for instances too large for a dense
//! tableau.

mod bnb;
mod duality;
mod export;
#[cfg(feature = "highs")]
mod highs_backend;
mod simplex;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use bnb::solve_milp;
pub use duality::{lp_duality_check, reduced_costs};
pub use export::write_lp;
pub use simplex::solve_lp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarKind {
    Continuous,
    Integer,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable<T> {
    pub name: String,
    pub kind: VarKind,
    pub lower: Option<T>,
    pub upper: Option<T>,
    pub cost: T,
}

impl<T: Scalar> Variable<T> {
    pub fn is_integer(&self) -> bool {
        self.kind != VarKind::Continuous
    }
}

/// Sparse constraint row `sum coefs <sense> rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Row<T> {
    pub name: String,
    pub coefs: Vec<(usize, T)>,
    pub sense: RowSense,
    pub rhs: T,
}

/// Minimisation problem. `None` bounds are infinite.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MilpProblem<T> {
    pub vars: Vec<Variable<T>>,
    pub rows: Vec<Row<T>>,
}

impl<T: Scalar> MilpProblem<T> {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Adds a variable and returns its index. Binary variables get `[0, 1]`
    /// intersected with whatever bounds are given.
    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: Option<T>,
        upper: Option<T>,
        cost: T,
    ) -> usize {
        let (lower, upper) = if kind == VarKind::Binary {
            (
                Some(lower.map_or(T::zero(), |l| T::max_of(l, T::zero()))),
                Some(upper.map_or(T::one(), |u| T::min_of(u, T::one()))),
            )
        } else {
            (lower, upper)
        };
        self.vars.push(Variable {
            name: name.into(),
            kind,
            lower,
            upper,
            cost,
        });
        self.vars.len() - 1
    }

    /// Adds a row; zero coefficients are dropped and repeated indices merged.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coefs: impl IntoIterator<Item = (usize, T)>,
        sense: RowSense,
        rhs: T,
    ) -> usize {
        let mut merged: Vec<(usize, T)> = Vec::new();
        for (j, a) in coefs {
            if a.is_zero() {
                continue;
            }
            match merged.iter_mut().find(|(k, _)| *k == j) {
                Some((_, b)) => *b = b.clone() + a,
                None => merged.push((j, a)),
            }
        }
        merged.retain(|(_, a)| !a.is_zero());
        self.rows.push(Row {
            name: name.into(),
            coefs: merged,
            sense,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_integer(&self) -> usize {
        self.vars.iter().filter(|v| v.is_integer()).count()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vars.len();
        for row in &self.rows {
            if let Some((j, _)) = row.coefs.iter().find(|(j, _)| *j >= n) {
                return Err(Error::InvalidProblem(format!(
                    "row `{}` references variable {j} of {n}",
                    row.name
                )));
            }
        }
        for v in &self.vars {
            if v.kind == VarKind::Binary {
                let lo_ok = v.lower.as_ref().is_some_and(|l| *l >= T::zero());
                let hi_ok = v.upper.as_ref().is_some_and(|u| *u <= T::one());
                if !lo_ok || !hi_ok {
                    return Err(Error::InvalidProblem(format!(
                        "binary variable `{}` has bounds outside [0, 1]",
                        v.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn check_integer_bounds(&self) -> Result<()> {
        match self
            .vars
            .iter()
            .find(|v| v.is_integer() && (v.lower.is_none() || v.upper.is_none()))
        {
            Some(v) => Err(Error::UnboundedInteger {
                name: v.name.clone(),
            }),
            None => Ok(()),
        }
    }

    pub fn objective(&self, x: &[T]) -> T {
        self.vars
            .iter()
            .zip(x)
            .fold(T::zero(), |acc, (v, xi)| acc + v.cost.clone() * xi.clone())
    }

    pub fn row_activity(&self, i: usize, x: &[T]) -> T {
        self.rows[i]
            .coefs
            .iter()
            .fold(T::zero(), |acc, (j, a)| acc + a.clone() * x[*j].clone())
    }

    /// Largest violation over rows and bounds, in `f64`.
    pub fn max_violation(&self, x: &[T]) -> f64 {
        let mut worst = 0.0_f64;
        for (i, row) in self.rows.iter().enumerate() {
            let slack = (self.row_activity(i, x) - row.rhs.clone()).as_f64();
            let v = match row.sense {
                RowSense::Le => slack,
                RowSense::Ge => -slack,
                RowSense::Eq => slack.abs(),
            };
            worst = worst.max(v);
        }
        for (v, xi) in self.vars.iter().zip(x) {
            if let Some(l) = &v.lower {
                worst = worst.max((l.clone() - xi.clone()).as_f64());
            }
            if let Some(u) = &v.upper {
                worst = worst.max((xi.clone() - u.clone()).as_f64());
            }
        }
        worst
    }

    /// Largest distance of an integer variable from the nearest integer.
    pub fn max_fractionality(&self, x: &[T]) -> f64 {
        self.vars
            .iter()
            .zip(x)
            .filter(|(v, _)| v.is_integer())
            .map(|(_, xi)| crate::scalar::fractionality(xi).as_f64())
            .fold(0.0, f64::max)
    }

    /// Copy with every variable continuous (binary bounds kept).
    pub fn relaxed(&self) -> Self {
        let mut p = self.clone();
        for v in &mut p.vars {
            v.kind = VarKind::Continuous;
        }
        p
    }

    /// Converts to another scalar type through `f64`.
    pub fn convert<U: Scalar>(&self) -> MilpProblem<U> {
        let c = |t: &T| U::from_f64_lossy(t.as_f64());
        MilpProblem {
            vars: self
                .vars
                .iter()
                .map(|v| Variable {
                    name: v.name.clone(),
                    kind: v.kind,
                    lower: v.lower.as_ref().map(c),
                    upper: v.upper.as_ref().map(c),
                    cost: c(&v.cost),
                })
                .collect(),
            rows: self
                .rows
                .iter()
                .map(|r| Row {
                    name: r.name.clone(),
                    coefs: r.coefs.iter().map(|(j, a)| (*j, c(a))).collect(),
                    sense: r.sense,
                    rhs: c(&r.rhs),
                })
                .collect(),
        }
    }

    /// Rough cell count of the dense tableau the embedded engine would build.
    pub fn dense_tableau_cells(&self) -> usize {
        let bounded = self
            .vars
            .iter()
            .filter(|v| v.lower.is_some() && v.upper.is_some())
            .count();
        let free = self
            .vars
            .iter()
            .filter(|v| v.lower.is_none() && v.upper.is_none())
            .count();
        let eq = self
            .rows
            .iter()
            .filter(|r| r.sense == RowSense::Eq)
            .count();
        let m = self.rows.len() + eq + bounded;
        let n = self.vars.len() + free + 2 * m + 1;
        m.saturating_mul(n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NodeLimit,
    IterationLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Embedded engine unless the dense tableau would be large.
    #[default]
    Auto,
    Embedded,
    Highs,
}

impl Engine {
    pub fn highs_available() -> bool {
        cfg!(feature = "highs")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub lp_tol: f64,
    pub int_tol: f64,
    pub abs_gap: f64,
    pub max_nodes: u64,
    pub max_lp_iterations: u64,
    pub seed: u64,
    pub engine: Engine,
    /// `Engine::Auto` switches to HiGHS above this many tableau cells.
    pub dense_cell_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            lp_tol: 1e-7,
            int_tol: 1e-6,
            abs_gap: 1e-6,
            max_nodes: 1_000_000,
            max_lp_iterations: 1_000_000,
            seed: 0,
            engine: Engine::Auto,
            dense_cell_limit: 250_000,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lp_tol", self.lp_tol),
            ("int_tol", self.int_tol),
            ("abs_gap", self.abs_gap),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution<T> {
    pub status: SolveStatus,
    pub values: Vec<T>,
    /// Lagrange multipliers with `c + Aᵀ y = reduced costs`; nonnegative on
    /// binding `<=` rows, nonpositive on binding `>=` rows.
    pub row_duals: Vec<T>,
    pub reduced_costs: Vec<T>,
    pub objective: Option<T>,
    pub iterations: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MilpSolution<T> {
    pub status: SolveStatus,
    /// Best integer-feasible point found; empty when there is none.
    pub values: Vec<T>,
    pub objective: Option<T>,
    pub nodes: u64,
    pub lp_iterations: u64,
    pub wall_time: Duration,
    pub engine: Engine,
}

impl<T: Scalar> MilpSolution<T> {
    pub fn has_incumbent(&self) -> bool {
        !self.values.is_empty() || (self.status == SolveStatus::Optimal && self.objective.is_some())
    }

    pub fn require_optimal(&self) -> Result<&[T]> {
        if self.status == SolveStatus::Optimal {
            Ok(&self.values)
        } else {
            Err(Error::NotOptimal(self.status))
        }
    }
}
