//! The three ways of computing a flexibility budget.

use std::time::{Duration, Instant};

use binflex::oracle::{adjustable_worst_cost, exhaustive_gamma, verify_policy, RecourseMode};
use binflex::reform::{
    assess, build_theorem1_milp, scenario_count, AffinePolicy, FlexibilityResult, PolicyMode, ReformOptions,
};
use binflex::robustness::{compute_ab, flip_count_tail, monte_carlo_violation, prop1_bound, prop2_bound, FlipModel};
use binflex::system::CostMode;
use binflex::{Error, Model};
use serde::{Deserialize, Serialize};

use crate::config::{FlipModelBlock, ScenarioConfig};
use crate::report::{
    config_hash, tool_version, BoundsSummary, RowBound, RunReport, SolverSummary, VerificationSummary, REPORT_SCHEMA,
};

/// Tolerance for policy verification and Monte Carlo row checks.
pub const VERIFY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Affine policy through the big-M reformulation.
    Affine,
    /// Exhaustive scenario search with per-scenario recourse.
    Exhaustive,
    /// The same reformulation without gains.
    OpenLoop,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Affine, Scheme::Exhaustive, Scheme::OpenLoop];

    pub fn number(self) -> u8 {
        match self {
            Scheme::Affine => 1,
            Scheme::Exhaustive => 2,
            Scheme::OpenLoop => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.number() == n)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Affine => "affine",
            Scheme::Exhaustive => "exhaustive",
            Scheme::OpenLoop => "open-loop",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Write wall time into the report.
    pub timings: bool,
    /// Overrides the config's budget (schemes 1 and 3 only).
    pub fixed_gamma: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Model(#[from] Error),
    #[error("scheme {0} cannot pin the budget")]
    Unsupported(u8),
}

impl RunError {
    /// True when the run failed because no recourse exists.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            RunError::Model(Error::NominalInfeasible) | RunError::Model(Error::NotOptimal(binflex::milp::SolveStatus::Infeasible))
        )
    }
}

pub fn run_scheme(cfg: &ScenarioConfig, scheme: Scheme, run: &RunOptions) -> Result<RunReport, RunError> {
    let inst = cfg.to_instance()?;
    let start = Instant::now();
    let mut report = match scheme {
        Scheme::Affine | Scheme::OpenLoop => run_milp(cfg, &inst, scheme, run)?,
        Scheme::Exhaustive => {
            if run.fixed_gamma.is_some() {
                return Err(RunError::Unsupported(scheme.number()));
            }
            run_exhaustive(cfg, &inst)?
        }
    };
    report.wall_time = start.elapsed();
    log::info!(
        "scheme {} with |U| = {}: gamma* = {} in {:.3}s",
        scheme.number(),
        report.num_uncertain,
        report.gamma_star,
        report.wall_time.as_secs_f64()
    );
    if run.timings {
        report.wall_seconds = Some(report.wall_time.as_secs_f64());
    }
    Ok(report)
}

fn base_report(cfg: &ScenarioConfig, scheme: Scheme, gamma_star: usize) -> RunReport {
    let nu = cfg.num_uncertain();
    RunReport {
        schema: REPORT_SCHEMA.to_string(),
        tool_version: tool_version(),
        config_hash: config_hash(cfg),
        seed: cfg.solver.seed,
        scheme: scheme.number(),
        scheme_name: scheme.name().to_string(),
        num_uncertain: nu,
        gamma_star,
        theta: None,
        objective: None,
        policy: None,
        row_count: 0,
        scenario_count: scenario_count(nu, gamma_star),
        solver: SolverSummary {
            engine: cfg.solver.engine,
            solves: 0,
            nodes: 0,
            lp_iterations: 0,
        },
        verification: VerificationSummary {
            gamma: gamma_star,
            scenarios_checked: 0,
            passed: true,
            violations: 0,
            max_margin: None,
            worst_case_cost: None,
        },
        bounds: None,
        warnings: Vec::new(),
        wall_seconds: None,
        wall_time: Duration::ZERO,
    }
}

fn run_milp(cfg: &ScenarioConfig, inst: &Model, scheme: Scheme, run: &RunOptions) -> Result<RunReport, RunError> {
    let opts = ReformOptions {
        policy_mode: if scheme == Scheme::OpenLoop {
            PolicyMode::OpenLoop
        } else {
            PolicyMode::Affine
        },
        fixed_gamma: run.fixed_gamma.or(cfg.reform.fixed_gamma),
        ..cfg.reform.clone()
    };
    let res: FlexibilityResult<f64> = assess(inst, &opts, &cfg.solver)?;
    let cc = inst.compact()?;
    let rows = build_theorem1_milp(&cc, &inst.partition, &inst.cost, &opts)?.problem.num_rows();
    let ver = verify_policy(&res.policy, res.gamma_star, inst, VERIFY_TOL)?;

    let mut report = base_report(cfg, scheme, res.gamma_star);
    report.theta = res.theta;
    report.objective = Some(res.objective);
    report.row_count = rows as u64;
    report.solver.engine = res.stats.engine;
    report.solver.nodes = res.stats.nodes;
    report.solver.lp_iterations = res.stats.lp_iterations;
    report.solver.solves = 1;
    report.verification = VerificationSummary {
        gamma: ver.gamma,
        scenarios_checked: ver.scenarios_checked,
        passed: ver.passed(),
        violations: ver.violations.len(),
        max_margin: Some(ver.max_margin),
        worst_case_cost: ver.worst_case_cost,
    };
    if let Some(fm) = &cfg.flip_model {
        report.bounds = Some(bounds_summary(inst, &res.policy, res.gamma_star, fm, cfg.solver.seed)?);
    }
    report.warnings = res.warnings;
    report.policy = Some(res.policy);
    Ok(report)
}

fn run_exhaustive(cfg: &ScenarioConfig, inst: &Model) -> Result<RunReport, RunError> {
    let cc = inst.compact()?;
    let res = exhaustive_gamma(&cc, &inst.partition, RecourseMode::Adjustable, &cfg.solver)?;
    let mut report = base_report(cfg, Scheme::Exhaustive, res.gamma_star);
    report.solver.solves = res.solves;
    report.row_count = cc.num_rows() as u64 * res.solves;
    report.verification.scenarios_checked = res.scenarios_checked;
    if inst.cost.mode == CostMode::CostAndGamma {
        let (worst, _) = adjustable_worst_cost(&cc, &inst.partition, res.gamma_star, &cfg.solver)?;
        report.theta = Some(worst);
        report.objective = Some(worst - inst.cost.lambda * res.gamma_star as f64);
        report.verification.worst_case_cost = Some(worst);
    }
    if let Some(fm) = &cfg.flip_model {
        let model = FlipModel::new(fm.eps.clone())?;
        let (bound, exact) = exceed_bounds(&model, res.gamma_star)?;
        report.bounds = Some(BoundsSummary {
            eps: fm.eps.clone(),
            exceed_at: res.gamma_star + 1,
            budget_exceed_bound: bound,
            budget_exceed_exact: exact,
            row_bounds: Vec::new(),
            monte_carlo: None,
        });
    }
    Ok(report)
}

/// Bound and exact chance of more than `gamma` flips.
fn exceed_bounds(fm: &FlipModel, gamma: usize) -> binflex::Result<(Option<f64>, Option<f64>)> {
    if gamma >= fm.len() {
        return Ok((None, None));
    }
    Ok((Some(prop2_bound(fm, gamma + 1)?.value), Some(flip_count_tail(fm, gamma + 1))))
}

pub fn bounds_summary(
    inst: &Model,
    policy: &AffinePolicy<f64>,
    gamma: usize,
    fm: &FlipModelBlock,
    seed: u64,
) -> binflex::Result<BoundsSummary> {
    let model = FlipModel::new(fm.eps.clone())?;
    let cc = inst.compact()?;
    let ab = compute_ab(&cc, policy, &inst.partition)?;
    let row_bounds = (0..ab.rows.len())
        .map(|r| {
            let b = prop1_bound(&ab, &model, &inst.partition, r)?;
            Ok(RowBound {
                row: ab.rows[r],
                origin: cc.origins[ab.rows[r]],
                bound: b.value,
                vacuous: b.vacuous,
            })
        })
        .collect::<binflex::Result<Vec<_>>>()?;
    let (bound, exact) = exceed_bounds(&model, gamma)?;
    let mc = monte_carlo_violation(policy, inst, &model, gamma + 1, fm.samples, seed, VERIFY_TOL)?;
    Ok(BoundsSummary {
        eps: fm.eps.clone(),
        exceed_at: gamma + 1,
        budget_exceed_bound: bound,
        budget_exceed_exact: exact,
        row_bounds,
        monte_carlo: Some(mc),
    })
}
