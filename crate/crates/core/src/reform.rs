//! Robust counterpart of the compact constraints under a flip budget, as a
//! single MILP over the affine policy, the budget indicators and the dual
//! multipliers of the inner worst case.
//!
//! For row `i` write `c_ij = O_ij + sum_k P_ik M_kj + sum_k Q_ik L_kj` for the
//! total sensitivity of the row to flexible entry `j`. Flipping entry `j`
//! changes the row by `c_ij (1 - 2 r̄_j)`, and the worst case over at most `Γ`
//! flips is dualised with multipliers `mu_ij`, `pi_i`. The product `Γ pi_i` is
//! split into `beta_ij = delta_j pi_i` with big-M rows.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::milp::{self, Engine, MilpProblem, MilpSolution, RowSense, SolverOptions, VarKind};
use crate::scalar::{fractionality, indicator, one_half, Scalar};
use crate::system::{CompactConstraints, CostMode, CostSpec, Instance, UncertaintyPartition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyMode {
    #[default]
    Affine,
    OpenLoop,
}

/// Sign in front of the `c_ij r̄_j` term of the dual rows.
///
/// `Derived` subtracts it, which is what dualising the worst case gives.
/// `Statement` adds it instead; it is kept so the two can be compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualSign {
    #[default]
    Derived,
    Statement,
}

/// How [`assess`] finds the budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetSearch {
    /// One MILP with the budget as a decision.
    Joint,
    /// One MILP per budget with `delta` pinned by its bounds. Pinned `delta`
    /// takes the big-M slack out of the relaxation, which makes each solve
    /// far easier. Gamma-only mode walks down from `|U|` and stops at the
    /// first feasible budget; cost mode tries every budget.
    #[default]
    PerBudget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReformOptions {
    pub big_m: f64,
    pub policy_mode: PolicyMode,
    pub l_lo: i64,
    pub l_hi: i64,
    pub eps_lo: i64,
    pub eps_hi: i64,
    pub gain_max: f64,
    pub dual_sign: DualSign,
    /// Pins the budget instead of maximising it.
    pub fixed_gamma: Option<usize>,
    pub budget_search: BudgetSearch,
}

impl Default for ReformOptions {
    fn default() -> Self {
        Self {
            big_m: 1e4,
            policy_mode: PolicyMode::Affine,
            l_lo: -1,
            l_hi: 1,
            eps_lo: 0,
            eps_hi: 1,
            gain_max: 1e3,
            dual_sign: DualSign::Derived,
            fixed_gamma: None,
            budget_search: BudgetSearch::PerBudget,
        }
    }
}

impl ReformOptions {
    pub fn open_loop() -> Self {
        Self {
            policy_mode: PolicyMode::OpenLoop,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.big_m > 0.0 && self.big_m.is_finite()) {
            return Err(Error::invalid("big_M", format!("must be positive, got {}", self.big_m)));
        }
        if self.l_lo > self.l_hi {
            return Err(Error::invalid("L bounds", format!("{} > {}", self.l_lo, self.l_hi)));
        }
        if self.eps_lo > self.eps_hi {
            return Err(Error::invalid("eps bounds", format!("{} > {}", self.eps_lo, self.eps_hi)));
        }
        if !(self.gain_max >= 0.0 && self.gain_max.is_finite()) {
            return Err(Error::invalid("gain_max", "must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// `u = M r_U + eta`, `v = L r_U + eps`, with `r_U` the realised flexible
/// entries in partition order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinePolicy<T> {
    pub gain_u: Matrix<T>,
    pub offset_u: Vec<T>,
    pub gain_v: Vec<Vec<i64>>,
    pub offset_v: Vec<i64>,
}

impl<T: Scalar> AffinePolicy<T> {
    pub fn zero(p_len: usize, q_len: usize, num_uncertain: usize) -> Self {
        Self {
            gain_u: Matrix::zeros(p_len, num_uncertain),
            offset_u: vec![T::zero(); p_len],
            gain_v: vec![vec![0; num_uncertain]; q_len],
            offset_v: vec![0; q_len],
        }
    }

    /// Policy that ignores the reference.
    pub fn open_loop(offset_u: Vec<T>, offset_v: Vec<i64>, num_uncertain: usize) -> Self {
        Self {
            gain_u: Matrix::zeros(offset_u.len(), num_uncertain),
            gain_v: vec![vec![0; num_uncertain]; offset_v.len()],
            offset_u,
            offset_v,
        }
    }

    pub fn is_open_loop(&self) -> bool {
        self.gain_u.to_rows().iter().flatten().all(|g| g.is_zero())
            && self.gain_v.iter().flatten().all(|g| *g == 0)
    }
}

/// Evaluates the policy on a realised reference.
pub fn policy_response<T: Scalar>(
    policy: &AffinePolicy<T>,
    r: &[bool],
    part: &UncertaintyPartition,
) -> Result<(Vec<T>, Vec<T>)> {
    if r.len() != part.len() {
        return Err(Error::dim("reference", format!("length {}, expected {}", r.len(), part.len())));
    }
    if let Some(index) = part.certain().into_iter().find(|&j| r[j] != part.nominal()[j]) {
        return Err(Error::ReferenceMismatch { index });
    }
    let ru: Vec<T> = part.uncertain().iter().map(|&j| indicator(r[j])).collect();
    let mut u = policy.gain_u.mul_vec(&ru);
    for (uk, ek) in u.iter_mut().zip(&policy.offset_u) {
        *uk = uk.clone() + ek.clone();
    }
    let v = policy
        .gain_v
        .iter()
        .zip(&policy.offset_v)
        .map(|(row, e)| {
            let s: i64 = row
                .iter()
                .zip(part.uncertain())
                .filter(|(_, &j)| r[j])
                .map(|(l, _)| *l)
                .sum();
            T::from_i64(s + e)
        })
        .collect();
    Ok((u, v))
}

/// Column indices of every variable family in the emitted MILP.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct VarLayout {
    pub theta: Option<usize>,
    pub delta: Vec<usize>,
    pub mu: Vec<Vec<usize>>,
    pub pi: Vec<usize>,
    pub phi: Vec<usize>,
    pub y: Vec<Vec<usize>>,
    pub beta: Vec<Vec<usize>>,
    /// `[k][j]`; empty in open-loop mode.
    pub gain_u: Vec<Vec<usize>>,
    pub offset_u: Vec<usize>,
    pub gain_v: Vec<Vec<usize>>,
    pub offset_v: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Theorem1Milp<T> {
    pub problem: MilpProblem<T>,
    pub layout: VarLayout,
    pub options: ReformOptions,
    pub num_uncertain: usize,
    pub warnings: Vec<String>,
}

impl<T: Scalar> Theorem1Milp<T> {
    /// `(name, column)` for every variable.
    pub fn index_map(&self) -> impl Iterator<Item = (&str, usize)> {
        self.problem.vars.iter().enumerate().map(|(j, v)| (v.name.as_str(), j))
    }
}

/// Builds the budget-maximising MILP with affine recourse.
pub fn build_theorem1_milp<T: Scalar>(
    cc: &CompactConstraints<T>,
    part: &UncertaintyPartition,
    cost: &CostSpec<T>,
    opts: &ReformOptions,
) -> Result<Theorem1Milp<T>> {
    build(cc, part, cost, opts, opts.policy_mode)
}

/// Same MILP with the gain columns removed.
pub fn build_open_loop_milp<T: Scalar>(
    cc: &CompactConstraints<T>,
    part: &UncertaintyPartition,
    cost: &CostSpec<T>,
    opts: &ReformOptions,
) -> Result<Theorem1Milp<T>> {
    build(cc, part, cost, opts, PolicyMode::OpenLoop)
}

fn build<T: Scalar>(
    cc: &CompactConstraints<T>,
    part: &UncertaintyPartition,
    cost: &CostSpec<T>,
    opts: &ReformOptions,
    mode: PolicyMode,
) -> Result<Theorem1Milp<T>> {
    opts.validate()?;
    let rows = cc.num_rows();
    let (p_len, q_len) = (cc.p.cols(), cc.q.cols());
    if cc.o.cols() != part.len() {
        return Err(Error::dim(
            "O",
            format!("{} columns, partition covers {}", cc.o.cols(), part.len()),
        ));
    }
    for (name, m) in [("O", &cc.o), ("P", &cc.p), ("Q", &cc.q)] {
        if m.rows() != rows {
            return Err(Error::dim(name, format!("{} rows, expected {rows}", m.rows())));
        }
    }
    if cc.theta.len() != rows || cc.origins.len() != rows {
        return Err(Error::dim("theta column", "length differs from h"));
    }
    let nu = part.num_uncertain();
    if let Some(g) = opts.fixed_gamma {
        if g > nu {
            return Err(Error::GammaOutOfRange { gamma: g, max: nu });
        }
    }
    let cost_mode = cost.mode == CostMode::CostAndGamma;
    if cost_mode != cc.epigraph_row().is_some() {
        return Err(Error::invalid("cost mode", "compact constraints were built for another mode"));
    }

    let mut warnings = Vec::new();
    if opts.big_m < 10.0 {
        let msg = format!("big_M = {} is small and may cut off valid multipliers", opts.big_m);
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let lit = |v: f64| T::from_f64_lossy(v);
    let big_m = lit(opts.big_m);
    let half = one_half::<T>();
    let sigma = match opts.dual_sign {
        DualSign::Derived => T::one(),
        DualSign::Statement => -T::one(),
    };
    let rbar: Vec<T> = part.nominal_vector();
    let uncertain = part.uncertain();
    let certain = part.certain();

    let mut pb = MilpProblem::new();
    let mut lay = VarLayout::default();

    if cost_mode {
        lay.theta = Some(pb.add_var("theta", VarKind::Continuous, None, None, T::one()));
    }
    let delta_cost = if cost_mode { -cost.lambda.clone() } else { -T::one() };
    for j in 0..nu {
        let (lo, hi) = match opts.fixed_gamma {
            Some(g) => {
                let on = indicator::<T>(j < g);
                (Some(on.clone()), Some(on))
            }
            None => (None, None),
        };
        lay.delta
            .push(pb.add_var(format!("delta[{j}]"), VarKind::Binary, lo, hi, delta_cost.clone()));
    }
    let gain_max = lit(opts.gain_max);
    if mode == PolicyMode::Affine {
        for k in 0..p_len {
            lay.gain_u.push(
                (0..nu)
                    .map(|j| {
                        pb.add_var(
                            format!("M[{k},{j}]"),
                            VarKind::Continuous,
                            Some(-gain_max.clone()),
                            Some(gain_max.clone()),
                            T::zero(),
                        )
                    })
                    .collect(),
            );
        }
    }
    for k in 0..p_len {
        lay.offset_u
            .push(pb.add_var(format!("eta[{k}]"), VarKind::Continuous, None, None, T::zero()));
    }
    if mode == PolicyMode::Affine {
        for k in 0..q_len {
            lay.gain_v.push(
                (0..nu)
                    .map(|j| {
                        pb.add_var(
                            format!("L[{k},{j}]"),
                            VarKind::Integer,
                            Some(T::from_i64(opts.l_lo)),
                            Some(T::from_i64(opts.l_hi)),
                            T::zero(),
                        )
                    })
                    .collect(),
            );
        }
    }
    for k in 0..q_len {
        lay.offset_v.push(pb.add_var(
            format!("eps[{k}]"),
            VarKind::Integer,
            Some(T::from_i64(opts.eps_lo)),
            Some(T::from_i64(opts.eps_hi)),
            T::zero(),
        ));
    }
    let nonneg = || (Some(T::zero()), None::<T>);
    for i in 0..rows {
        let (lo, hi) = nonneg();
        lay.pi.push(pb.add_var(format!("pi[{i}]"), VarKind::Continuous, lo, hi, T::zero()));
        lay.phi
            .push(pb.add_var(format!("phi[{i}]"), VarKind::Continuous, None, None, T::zero()));
        let mut fam = |name: &str| -> Vec<usize> {
            (0..nu)
                .map(|j| {
                    let (lo, hi) = nonneg();
                    pb.add_var(format!("{name}[{i},{j}]"), VarKind::Continuous, lo, hi, T::zero())
                })
                .collect()
        };
        lay.mu.push(fam("mu"));
        lay.y.push(fam("y"));
        lay.beta.push(fam("beta"));
    }

    for i in 0..rows {
        // Variable part of c_ij and its constant O_ij.
        let sens = |j: usize| -> (T, Vec<(usize, T)>) {
            let mut terms = Vec::new();
            for (k, cols) in lay.gain_u.iter().enumerate() {
                let a = &cc.p[(i, k)];
                if !a.is_zero() {
                    terms.push((cols[j], a.clone()));
                }
            }
            for (k, cols) in lay.gain_v.iter().enumerate() {
                let a = &cc.q[(i, k)];
                if !a.is_zero() {
                    terms.push((cols[j], a.clone()));
                }
            }
            (cc.o[(i, uncertain[j])].clone(), terms)
        };

        let mut master: Vec<(usize, T)> = Vec::new();
        for j in 0..nu {
            master.push((lay.mu[i][j], T::one()));
            master.push((lay.beta[i][j], T::one()));
        }
        master.push((lay.phi[i], T::one()));
        for (k, &col) in lay.offset_u.iter().enumerate() {
            master.push((col, cc.p[(i, k)].clone()));
        }
        for (k, &col) in lay.offset_v.iter().enumerate() {
            master.push((col, cc.q[(i, k)].clone()));
        }
        if let Some(t) = lay.theta {
            master.push((t, cc.theta[i].clone()));
        }
        let fixed = certain
            .iter()
            .fold(T::zero(), |acc, &j| acc + cc.o[(i, j)].clone() * rbar[j].clone());
        pb.add_row(format!("master[{i}]"), master, RowSense::Le, cc.h[i].clone() - fixed);

        // phi_i >= sum_j c_ij r̄_j
        let mut phi_row = vec![(lay.phi[i], T::one())];
        let mut phi_rhs = T::zero();
        for (j, &col) in uncertain.iter().enumerate() {
            if rbar[col].is_zero() {
                continue;
            }
            let (o, terms) = sens(j);
            phi_rhs = phi_rhs + o;
            phi_row.extend(terms.into_iter().map(|(v, a)| (v, -a)));
        }
        pb.add_row(format!("phi[{i}]"), phi_row, RowSense::Ge, phi_rhs);

        for j in 0..nu {
            let (o, terms) = sens(j);
            let rb = rbar[uncertain[j]].clone();
            // mu + pi >= (c + y)/2 - sigma c r̄  ->  mu + pi - y/2 - kappa c_var >= kappa O
            let kappa = half.clone() - sigma.clone() * rb;
            let mut dual = vec![
                (lay.mu[i][j], T::one()),
                (lay.pi[i], T::one()),
                (lay.y[i][j], -half.clone()),
            ];
            dual.extend(terms.iter().map(|(v, a)| (*v, -kappa.clone() * a.clone())));
            pb.add_row(format!("dual[{i},{j}]"), dual, RowSense::Ge, kappa * o.clone());

            let mut pos = vec![(lay.y[i][j], -T::one())];
            pos.extend(terms.iter().cloned());
            pb.add_row(format!("abs+[{i},{j}]"), pos, RowSense::Le, -o.clone());
            let mut neg = vec![(lay.y[i][j], -T::one())];
            neg.extend(terms.iter().map(|(v, a)| (*v, -a.clone())));
            pb.add_row(format!("abs-[{i},{j}]"), neg, RowSense::Le, o);

            let (b, d, p) = (lay.beta[i][j], lay.delta[j], lay.pi[i]);
            pb.add_row(
                format!("bigm1[{i},{j}]"),
                [(b, T::one()), (d, -big_m.clone())],
                RowSense::Le,
                T::zero(),
            );
            pb.add_row(format!("bigm2[{i},{j}]"), [(b, -T::one())], RowSense::Le, T::zero());
            pb.add_row(
                format!("bigm3[{i},{j}]"),
                [(b, T::one()), (p, -T::one())],
                RowSense::Le,
                T::zero(),
            );
            pb.add_row(
                format!("bigm4[{i},{j}]"),
                [(p, T::one()), (b, -T::one()), (d, big_m.clone())],
                RowSense::Le,
                big_m.clone(),
            );
        }
    }

    Ok(Theorem1Milp {
        problem: pb,
        layout: lay,
        options: opts.clone(),
        num_uncertain: nu,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes: u64,
    pub lp_iterations: u64,
    pub wall_time: Duration,
    pub engine: Engine,
}

impl<T> From<&MilpSolution<T>> for SolveStats {
    fn from(s: &MilpSolution<T>) -> Self {
        Self {
            nodes: s.nodes,
            lp_iterations: s.lp_iterations,
            wall_time: s.wall_time,
            engine: s.engine,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlexibilityResult<T> {
    pub gamma_star: usize,
    pub delta: Vec<bool>,
    pub policy: AffinePolicy<T>,
    pub theta: Option<T>,
    pub objective: T,
    pub stats: SolveStats,
    pub warnings: Vec<String>,
}

const ROUNDING_RESIDUAL: f64 = 1e-6;

fn round_integer<T: Scalar>(name: &str, x: &T) -> Result<i64> {
    if fractionality(x).as_f64() > ROUNDING_RESIDUAL {
        return Err(Error::IntegralityResidual {
            name: name.to_string(),
            value: x.as_f64(),
        });
    }
    Ok(x.round_nearest().as_f64() as i64)
}

/// Maps an optimal MILP solution back to the budget and the policy.
pub fn extract_solution<T: Scalar>(sol: &MilpSolution<T>, milp: &Theorem1Milp<T>) -> Result<FlexibilityResult<T>> {
    let x = sol.require_optimal()?;
    if x.len() != milp.problem.num_vars() {
        return Err(Error::dim("solution", format!("{} values for {} variables", x.len(), milp.problem.num_vars())));
    }
    let lay = &milp.layout;
    let name = |j: usize| milp.problem.vars[j].name.as_str();

    let mut delta = Vec::with_capacity(lay.delta.len());
    for &j in &lay.delta {
        let d = round_integer(name(j), &x[j])?;
        if !(0..=1).contains(&d) {
            return Err(Error::IntegralityResidual {
                name: name(j).to_string(),
                value: x[j].as_f64(),
            });
        }
        delta.push(d == 1);
    }
    let gamma_star = delta.iter().filter(|d| **d).count();

    let nu = milp.num_uncertain;
    let p_len = lay.offset_u.len();
    let gain_u = if lay.gain_u.is_empty() {
        Matrix::zeros(p_len, nu)
    } else {
        Matrix::from_fn(p_len, nu, |k, j| x[lay.gain_u[k][j]].clone())
    };
    let offset_u = lay.offset_u.iter().map(|&j| x[j].clone()).collect();
    let gain_v = if lay.gain_v.is_empty() {
        vec![vec![0; nu]; lay.offset_v.len()]
    } else {
        lay.gain_v
            .iter()
            .map(|cols| cols.iter().map(|&j| round_integer(name(j), &x[j])).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?
    };
    let offset_v = lay
        .offset_v
        .iter()
        .map(|&j| round_integer(name(j), &x[j]))
        .collect::<Result<Vec<_>>>()?;

    let mut warnings = milp.warnings.clone();
    let threshold = (1.0 - 1e-3) * milp.options.big_m;
    let near_bound = lay
        .pi
        .iter()
        .chain(lay.beta.iter().flatten())
        .find(|&&j| x[j].as_f64() >= threshold);
    if let Some(&j) = near_bound {
        let msg = format!(
            "{} = {} is within 1e-3 of big_M = {}; consider a larger big_M",
            name(j),
            x[j].as_f64(),
            milp.options.big_m
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    Ok(FlexibilityResult {
        gamma_star,
        delta,
        policy: AffinePolicy {
            gain_u,
            offset_u,
            gain_v,
            offset_v,
        },
        theta: lay.theta.map(|j| x[j].clone()),
        objective: sol.objective.clone().unwrap_or_else(|| milp.problem.objective(x)),
        stats: SolveStats::from(sol),
        warnings,
    })
}

/// Builds, solves and extracts in one go.
pub fn assess<T: Scalar>(
    instance: &Instance<T>,
    opts: &ReformOptions,
    solver: &SolverOptions,
) -> Result<FlexibilityResult<T>> {
    let cc = instance.compact()?;
    if opts.fixed_gamma.is_some() || opts.budget_search == BudgetSearch::Joint {
        let milp = build_theorem1_milp(&cc, &instance.partition, &instance.cost, opts)?;
        let sol = milp::solve_milp(&milp.problem, solver)?;
        return match sol.status {
            milp::SolveStatus::Infeasible if opts.fixed_gamma.is_none() => Err(Error::NominalInfeasible),
            _ => extract_solution(&sol, &milp),
        };
    }

    let cost_mode = instance.cost.mode == CostMode::CostAndGamma;
    let mut stats = SolveStats {
        nodes: 0,
        lp_iterations: 0,
        wall_time: Duration::ZERO,
        engine: solver.engine,
    };
    let mut best: Option<FlexibilityResult<T>> = None;
    for gamma in (0..=instance.partition.num_uncertain()).rev() {
        let pinned = ReformOptions {
            fixed_gamma: Some(gamma),
            ..opts.clone()
        };
        let milp = build_theorem1_milp(&cc, &instance.partition, &instance.cost, &pinned)?;
        let sol = milp::solve_milp(&milp.problem, solver)?;
        stats.nodes += sol.nodes;
        stats.lp_iterations += sol.lp_iterations;
        stats.wall_time += sol.wall_time;
        stats.engine = sol.engine;
        if sol.status == milp::SolveStatus::Infeasible {
            continue;
        }
        let res = extract_solution(&sol, &milp)?;
        if !cost_mode {
            best = Some(res);
            break;
        }
        // Descending order, so ties keep the larger budget.
        if best.as_ref().is_none_or(|b| res.objective < b.objective) {
            best = Some(res);
        }
    }
    let mut res = best.ok_or(Error::NominalInfeasible)?;
    res.stats = stats;
    Ok(res)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintCount {
    pub theorem1_rows: usize,
    pub exhaustive_scenarios: u64,
}

/// `C(n, k)`, saturating at `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Number of scenarios with at most `gamma` flips among `num_uncertain`.
pub fn scenario_count(num_uncertain: usize, gamma: usize) -> u64 {
    (0..=gamma.min(num_uncertain)).fold(0u64, |acc, i| acc.saturating_add(binomial(num_uncertain, i)))
}

/// Emitted MILP row count and the size of the exhaustive alternative. The
/// row count does not depend on the policy mode.
pub fn count_constraints(num_rows: usize, num_uncertain: usize, gamma: usize, _mode: PolicyMode) -> ConstraintCount {
    ConstraintCount {
        theorem1_rows: num_rows * (2 + 7 * num_uncertain),
        exhaustive_scenarios: scenario_count(num_uncertain, gamma),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::worked_instance;
    use crate::milp::{SolveStatus, SolverOptions};

    fn solver() -> SolverOptions {
        SolverOptions::default().with_engine(Engine::Embedded)
    }

    #[test]
    fn counts() {
        assert_eq!(scenario_count(3, 1), 4);
        assert_eq!(scenario_count(8, 5), 219);
        assert_eq!(scenario_count(8, 0), 1);
        assert_eq!(binomial(48, 24), 32_247_603_683_100);
        assert_eq!(count_constraints(8, 2, 1, PolicyMode::Affine).theorem1_rows, 8 * 16);
    }

    #[test]
    fn row_count_matches_formula() {
        let inst = worked_instance::<f64>();
        let cc = inst.compact().unwrap();
        let m = build_theorem1_milp(&cc, &inst.partition, &inst.cost, &ReformOptions::default()).unwrap();
        assert_eq!(m.problem.num_rows(), cc.num_rows() * (2 + 7 * 2));
        assert!(m.warnings.is_empty());
        let ol = build_open_loop_milp(&cc, &inst.partition, &inst.cost, &ReformOptions::default()).unwrap();
        assert_eq!(ol.problem.num_rows(), m.problem.num_rows());
        assert_eq!(ol.problem.num_vars() + 4, m.problem.num_vars());
        assert!(!ol.problem.vars.iter().any(|v| v.name.starts_with("M[")));
    }

    #[test]
    fn worked_instance_budgets() {
        let inst = worked_instance::<f64>();
        let aff = assess(&inst, &ReformOptions::default(), &solver()).unwrap();
        assert_eq!(aff.gamma_star, 2);
        assert_eq!(aff.delta, vec![true, true]);
        // The first input cannot react to the second entry, and with no
        // flips nothing moves.
        assert!(aff.policy.gain_u[(0, 1)].abs() < 1e-7);
        assert!(aff.policy.offset_u.iter().all(|e| e.abs() < 1e-7));
        let ol = assess(&inst, &ReformOptions::open_loop(), &solver()).unwrap();
        assert_eq!(ol.gamma_star, 1);
        assert!(ol.policy.is_open_loop());
    }

    #[test]
    fn small_big_m_warns() {
        let inst = worked_instance::<f64>();
        let cc = inst.compact().unwrap();
        let opts = ReformOptions {
            big_m: 5.0,
            ..ReformOptions::default()
        };
        let m = build_theorem1_milp(&cc, &inst.partition, &inst.cost, &opts).unwrap();
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn empty_budget_is_nominal_feasibility() {
        let mut inst = worked_instance::<f64>();
        inst.partition = UncertaintyPartition::new(vec![false, false], vec![]).unwrap();
        let res = assess(&inst, &ReformOptions::default(), &solver()).unwrap();
        assert_eq!(res.gamma_star, 0);
        assert_eq!(res.objective, 0.0);
    }

    #[test]
    fn fixed_gamma_out_of_range() {
        let inst = worked_instance::<f64>();
        let opts = ReformOptions {
            fixed_gamma: Some(3),
            ..ReformOptions::default()
        };
        assert!(matches!(
            assess(&inst, &opts, &solver()),
            Err(Error::GammaOutOfRange { gamma: 3, max: 2 })
        ));
    }

    #[test]
    fn extraction_rejects_fractional_delta() {
        let inst = worked_instance::<f64>();
        let cc = inst.compact().unwrap();
        let m = build_theorem1_milp(&cc, &inst.partition, &inst.cost, &ReformOptions::default()).unwrap();
        let mut values = vec![0.0; m.problem.num_vars()];
        values[m.layout.delta[0]] = 0.5;
        let sol = MilpSolution {
            status: SolveStatus::Optimal,
            values: values.clone(),
            objective: Some(0.0),
            nodes: 0,
            lp_iterations: 0,
            wall_time: Duration::ZERO,
            engine: Engine::Embedded,
        };
        assert!(matches!(extract_solution(&sol, &m), Err(Error::IntegralityResidual { .. })));
        values[m.layout.delta[0]] = 1.0;
        values[m.layout.delta[1]] = 1.0 - 1e-9;
        let sol = MilpSolution { values, ..sol };
        assert_eq!(extract_solution(&sol, &m).unwrap().gamma_star, 2);
    }

    #[test]
    fn responses() {
        let part = UncertaintyPartition::new(vec![false, false], vec![0, 1]).unwrap();
        let zero = AffinePolicy::<f64>::zero(2, 0, 2);
        assert_eq!(policy_response(&zero, &[true, false], &part).unwrap(), (vec![0.0, 0.0], vec![]));
        let ident = AffinePolicy {
            gain_u: Matrix::identity(2),
            offset_u: vec![0.0, 0.0],
            gain_v: vec![],
            offset_v: vec![],
        };
        assert_eq!(policy_response(&ident, &[true, true], &part).unwrap().0, vec![1.0, 1.0]);

        let one = UncertaintyPartition::new(vec![false], vec![0]).unwrap();
        let l = AffinePolicy::<f64> {
            gain_u: Matrix::zeros(0, 1),
            offset_u: vec![],
            gain_v: vec![vec![1]],
            offset_v: vec![0],
        };
        assert_eq!(policy_response(&l, &[true], &one).unwrap().1, vec![1.0]);

        let fixed = UncertaintyPartition::new(vec![false, true], vec![0]).unwrap();
        let pol = AffinePolicy::<f64>::zero(1, 0, 1);
        assert!(matches!(
            policy_response(&pol, &[false, false], &fixed),
            Err(Error::ReferenceMismatch { index: 1 })
        ));
    }
}
