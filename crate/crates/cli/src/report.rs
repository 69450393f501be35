//! Run reports, scaling tables and temperature envelopes.

use std::path::Path;
use std::time::Duration;

use binflex::milp::Engine;
use binflex::oracle::state_envelope;
use binflex::reform::AffinePolicy;
use binflex::robustness::MonteCarloReport;
use binflex::system::RowOrigin;
use binflex::Model;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{to_json, ScenarioConfig};

pub const REPORT_SCHEMA: &str = "binflex.report/v1";

pub fn tool_version() -> String {
    format!("binflex {}", env!("CARGO_PKG_VERSION"))
}

/// SHA-256 of the canonical JSON form of the config.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let digest = Sha256::digest(to_json(cfg).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub engine: Engine,
    pub solves: u64,
    pub nodes: u64,
    pub lp_iterations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub gamma: usize,
    pub scenarios_checked: u64,
    pub passed: bool,
    pub violations: usize,
    /// Largest `lhs - rhs` seen; absent when no policy was simulated.
    pub max_margin: Option<f64>,
    pub worst_case_cost: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowBound {
    pub row: usize,
    pub origin: RowOrigin,
    pub bound: f64,
    pub vacuous: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsSummary {
    pub eps: Vec<f64>,
    /// Flip count that exceeds the budget, `gamma_star + 1`.
    pub exceed_at: usize,
    /// Markov bound on more than `gamma_star` flips; absent when every index
    /// is already covered.
    pub budget_exceed_bound: Option<f64>,
    pub budget_exceed_exact: Option<f64>,
    pub row_bounds: Vec<RowBound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub scheme: u8,
    pub scheme_name: String,
    pub num_uncertain: usize,
    pub gamma_star: usize,
    pub theta: Option<f64>,
    pub objective: Option<f64>,
    pub policy: Option<AffinePolicy<f64>>,
    /// Scheme 1 and 3: rows of one emitted MILP. Scheme 2: rows of one
    /// scenario problem times the number of scenario problems solved.
    pub row_count: u64,
    /// Scenarios with at most `gamma_star` flips.
    pub scenario_count: u64,
    pub solver: SolverSummary,
    pub verification: VerificationSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSummary>,
    pub warnings: Vec<String>,
    /// Only written when timings are requested, so that reports of identical
    /// runs stay byte-identical by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub num_uncertain: usize,
    pub scheme: u8,
    pub wall_seconds: f64,
    pub gamma_star: usize,
    pub row_count: u64,
    pub scenario_count: u64,
}

impl ScalingRow {
    pub fn from_report(r: &RunReport) -> Self {
        Self {
            num_uncertain: r.num_uncertain,
            scheme: r.scheme,
            wall_seconds: r.wall_time.as_secs_f64(),
            gamma_star: r.gamma_star,
            row_count: r.row_count,
            scenario_count: r.scenario_count,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub time_index: usize,
    pub min_temp: f64,
    pub max_temp: f64,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
}

/// Simple bounds on the first state component implied by the state rows.
fn first_state_bounds(inst: &Model) -> (Option<f64>, Option<f64>) {
    let g = &inst.constraints.state;
    let (mut lo, mut hi): (Option<f64>, Option<f64>) = (None, None);
    for i in 0..g.rows() {
        let row = g.row(i);
        if row.iter().skip(1).any(|&c| c != 0.0) || row.first().is_none_or(|&c| c == 0.0) {
            continue;
        }
        let bound = inst.constraints.state_rhs[i] / row[0];
        if row[0] > 0.0 {
            hi = Some(hi.map_or(bound, |h: f64| h.min(bound)));
        } else {
            lo = Some(lo.map_or(bound, |l: f64| l.max(bound)));
        }
    }
    (lo, hi)
}

/// Range of the first state component over every scenario with at most
/// `gamma` flips, starting with `x(0)` at index 0.
pub fn envelope_rows(policy: &AffinePolicy<f64>, gamma: usize, inst: &Model) -> binflex::Result<Vec<EnvelopeRow>> {
    let env = state_envelope(policy, gamma, inst)?;
    let (lower_bound, upper_bound) = first_state_bounds(inst);
    let x0 = inst.dynamics.x0[0];
    let mut rows = vec![EnvelopeRow {
        time_index: 0,
        min_temp: x0,
        max_temp: x0,
        lower_bound,
        upper_bound,
    }];
    for (t, (lo, hi)) in env.lower.iter().zip(&env.upper).enumerate() {
        rows.push(EnvelopeRow {
            time_index: t + 1,
            min_temp: lo[0],
            max_temp: hi[0],
            lower_bound,
            upper_bound,
        });
    }
    Ok(rows)
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

pub fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> std::io::Result<Vec<R>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(std::io::Error::other)).collect()
}

/// Writes `report.json` and, when a policy is present, `envelope.csv`.
pub fn emit_reports(report: &RunReport, inst: &Model, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), report.to_json())?;
    if let Some(policy) = &report.policy {
        let rows = envelope_rows(policy, report.gamma_star, inst).map_err(std::io::Error::other)?;
        write_csv(&dir.join("envelope.csv"), &rows)?;
    }
    Ok(())
}
