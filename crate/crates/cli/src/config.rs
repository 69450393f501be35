//! Versioned JSON scenario configuration.
//!
//! Matrices are row-major nested arrays. Loading reports every problem found,
//! each tagged with the path of the offending field.

use std::fmt;
use std::path::Path;

use binflex::matrix::Matrix;
use binflex::milp::SolverOptions;
use binflex::reform::ReformOptions;
use binflex::system::{ConstraintSet, CostMode, CostSpec, Instance, SystemDynamics, UncertaintyPartition};
use binflex::Model;
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA: &str = "binflex.config/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dynamics: DynamicsBlock,
    pub constraints: ConstraintsBlock,
    #[serde(default)]
    pub cost: CostBlock,
    pub uncertainty: UncertaintyBlock,
    #[serde(default)]
    pub reform: ReformOptions,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip_model: Option<FlipModelBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsBlock {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    pub horizon: usize,
    #[serde(default = "default_sampling")]
    pub sampling_minutes: f64,
}

fn default_sampling() -> f64 {
    30.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsBlock {
    pub g_x: Vec<Vec<f64>>,
    pub g_x_rhs: Vec<f64>,
    pub g_r: Vec<Vec<f64>>,
    pub g_u: Vec<Vec<f64>>,
    pub g_v: Vec<Vec<f64>>,
    pub g_r_rhs: Vec<f64>,
    /// One right-hand side per step, replacing `g_r_rhs` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_r_rhs_schedule: Option<Vec<Vec<f64>>>,
}

/// Empty cost vectors stand for all zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostBlock {
    pub mode: CostMode,
    #[serde(default)]
    pub c_x: Vec<f64>,
    #[serde(default)]
    pub c_u: Vec<f64>,
    #[serde(default)]
    pub c_v: Vec<f64>,
    #[serde(default)]
    pub c_r: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl Default for CostBlock {
    fn default() -> Self {
        Self {
            mode: CostMode::GammaOnly,
            c_x: Vec::new(),
            c_u: Vec::new(),
            c_v: Vec::new(),
            c_r: Vec::new(),
            lambda: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyBlock {
    /// Flexible positions in the stacked reference.
    pub indices: Vec<usize>,
    /// Nominal reference over the whole horizon, entries 0 or 1.
    pub r_bar: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlipModelBlock {
    pub eps: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: u64,
}

fn default_samples() -> u64 {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{} validation error(s):\n{}", .0.len(), .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),
}

impl ConfigError {
    pub fn fields(&self) -> &[FieldError] {
        match self {
            ConfigError::Invalid(e) => e,
            _ => &[],
        }
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let errors = cfg.validate();
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(errors))
    }
}

pub fn to_json(cfg: &ScenarioConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serialises");
    s.push('\n');
    s
}

struct Errors(Vec<FieldError>);

impl Errors {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(FieldError {
            path: path.into(),
            message: message.into(),
        });
    }

    /// Checks a matrix is `rows x cols`; `rows` of `None` accepts any count.
    fn matrix(&mut self, path: &str, m: &[Vec<f64>], rows: Option<usize>, cols: usize) {
        if let Some(r) = rows {
            if m.len() != r {
                self.push(path, format!("{} rows, expected {r}", m.len()));
            }
        }
        for (i, row) in m.iter().enumerate() {
            if row.len() != cols {
                self.push(format!("{path}[{i}]"), format!("{} entries, expected {cols}", row.len()));
            }
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    self.push(format!("{path}[{i}][{j}]"), "not finite");
                }
            }
        }
    }

    fn vector(&mut self, path: &str, v: &[f64], len: usize, empty_ok: bool) {
        if v.len() != len && !(empty_ok && v.is_empty()) {
            self.push(path, format!("length {}, expected {len}", v.len()));
        }
        for (i, x) in v.iter().enumerate() {
            if !x.is_finite() {
                self.push(format!("{path}[{i}]"), "not finite");
            }
        }
    }
}

fn width(m: &[Vec<f64>]) -> usize {
    m.first().map_or(0, Vec::len)
}

impl ScenarioConfig {
    pub fn num_uncertain(&self) -> usize {
        self.uncertainty.indices.len()
    }

    /// Every problem in the file, in field order.
    pub fn validate(&self) -> Vec<FieldError> {
        let mut e = Errors(Vec::new());
        if self.schema != CONFIG_SCHEMA {
            e.push("schema", format!("expected \"{CONFIG_SCHEMA}\", got \"{}\"", self.schema));
        }

        let dy = &self.dynamics;
        let n = dy.a.len();
        if n == 0 {
            e.push("dynamics.a", "needs at least one state");
        }
        let (m, p, q) = (width(&dy.b), width(&dy.d), width(&dy.e));
        e.matrix("dynamics.a", &dy.a, Some(n), n);
        e.matrix("dynamics.b", &dy.b, Some(n), m);
        e.matrix("dynamics.d", &dy.d, Some(n), p);
        e.matrix("dynamics.e", &dy.e, Some(n), q);
        e.vector("dynamics.x0", &dy.x0, n, false);
        if dy.horizon == 0 {
            e.push("dynamics.horizon", "must be at least 1");
        }
        if !(dy.sampling_minutes > 0.0 && dy.sampling_minutes.is_finite()) {
            e.push("dynamics.sampling_minutes", "must be positive");
        }
        let h = dy.horizon;

        let c = &self.constraints;
        let rows_x = c.g_x.len();
        let rows_u = c.g_u.len();
        e.matrix("constraints.g_x", &c.g_x, None, n);
        e.vector("constraints.g_x_rhs", &c.g_x_rhs, rows_x, false);
        e.matrix("constraints.g_r", &c.g_r, Some(rows_u), m);
        e.matrix("constraints.g_u", &c.g_u, None, p);
        e.matrix("constraints.g_v", &c.g_v, Some(rows_u), q);
        e.vector("constraints.g_r_rhs", &c.g_r_rhs, rows_u, false);
        if let Some(schedule) = &c.g_r_rhs_schedule {
            if schedule.len() != h {
                e.push(
                    "constraints.g_r_rhs_schedule",
                    format!("{} steps, horizon is {h}", schedule.len()),
                );
            }
            for (t, g) in schedule.iter().enumerate() {
                e.vector(&format!("constraints.g_r_rhs_schedule[{t}]"), g, rows_u, false);
            }
        }

        let cost = &self.cost;
        e.vector("cost.c_x", &cost.c_x, n * h, true);
        e.vector("cost.c_u", &cost.c_u, p * h, true);
        e.vector("cost.c_v", &cost.c_v, q * h, true);
        e.vector("cost.c_r", &cost.c_r, m * h, true);
        match (cost.mode, cost.lambda) {
            (CostMode::CostAndGamma, None) => e.push("cost.lambda", "required in cost-and-gamma mode"),
            (_, Some(l)) if !(l > 0.0 && l.is_finite()) => e.push("cost.lambda", "must be positive"),
            _ => {}
        }
        if cost.mode == CostMode::GammaOnly {
            let any = [&cost.c_x, &cost.c_u, &cost.c_v, &cost.c_r]
                .iter()
                .any(|v| v.iter().any(|&x| x != 0.0));
            if any {
                e.push("cost.mode", "gamma-only mode takes all-zero cost vectors");
            }
        }

        let un = &self.uncertainty;
        e.vector("uncertainty.r_bar", &un.r_bar, m * h, false);
        for (k, &r) in un.r_bar.iter().enumerate() {
            if r != 0.0 && r != 1.0 {
                e.push(format!("uncertainty.r_bar[{k}]"), format!("must be 0 or 1, got {r}"));
            }
        }
        for (k, &j) in un.indices.iter().enumerate() {
            if j >= m * h {
                e.push(format!("uncertainty.indices[{k}]"), format!("{j} outside 0..{}", m * h));
            }
            if un.indices[..k].contains(&j) {
                e.push(format!("uncertainty.indices[{k}]"), format!("duplicate index {j}"));
            }
        }

        if let Err(err) = self.reform.validate() {
            e.push("reform", err.to_string());
        }
        if let Some(g) = self.reform.fixed_gamma {
            if g > un.indices.len() {
                e.push("reform.fixed_gamma", format!("{g} exceeds |U| = {}", un.indices.len()));
            }
        }
        if let Err(err) = self.solver.validate() {
            e.push("solver", err.to_string());
        }
        if let Some(fm) = &self.flip_model {
            if fm.eps.len() != un.indices.len() {
                e.push("flip_model.eps", format!("length {}, expected {}", fm.eps.len(), un.indices.len()));
            }
            for (k, &x) in fm.eps.iter().enumerate() {
                if !(0.0..=1.0).contains(&x) {
                    e.push(format!("flip_model.eps[{k}]"), format!("must lie in [0, 1], got {x}"));
                }
            }
            if fm.samples == 0 {
                e.push("flip_model.samples", "must be at least 1");
            }
        }
        e.0
    }

    /// Builds the model. Call only on a validated config.
    pub fn to_instance(&self) -> binflex::Result<Model> {
        let dy = &self.dynamics;
        let n = dy.a.len();
        let (m, p, q) = (width(&dy.b), width(&dy.d), width(&dy.e));
        let h = dy.horizon;
        let mat = |name: &str, rows: &[Vec<f64>], cols: usize| Matrix::from_rows(name, rows.to_vec(), cols);
        let dynamics = SystemDynamics::new(
            mat("A", &dy.a, n)?,
            mat("B", &dy.b, m)?,
            mat("D", &dy.d, p)?,
            mat("E", &dy.e, q)?,
            dy.x0.clone(),
            h,
        )?;
        let c = &self.constraints;
        let constraints = ConstraintSet {
            state: mat("Gx", &c.g_x, n)?,
            state_rhs: c.g_x_rhs.clone(),
            input_ref: mat("Gr", &c.g_r, m)?,
            input_cont: mat("Gu", &c.g_u, p)?,
            input_bin: mat("Gv", &c.g_v, q)?,
            input_rhs: c.g_r_rhs.clone(),
            input_rhs_schedule: c.g_r_rhs_schedule.clone(),
        };
        let or_zeros = |v: &[f64], len: usize| if v.is_empty() { vec![0.0; len] } else { v.to_vec() };
        let cost = CostSpec {
            state: or_zeros(&self.cost.c_x, n * h),
            input_cont: or_zeros(&self.cost.c_u, p * h),
            input_bin: or_zeros(&self.cost.c_v, q * h),
            reference: or_zeros(&self.cost.c_r, m * h),
            lambda: self.cost.lambda.unwrap_or(1.0),
            mode: self.cost.mode,
        };
        let partition = UncertaintyPartition::new(
            self.uncertainty.r_bar.iter().map(|&r| r == 1.0).collect(),
            self.uncertainty.indices.clone(),
        )?;
        let inst = Instance {
            dynamics,
            constraints,
            cost,
            partition,
        };
        inst.validate()?;
        Ok(inst)
    }
}

/// The two-step integrator used throughout the tests, as a config.
pub fn worked_config() -> ScenarioConfig {
    ScenarioConfig {
        schema: CONFIG_SCHEMA.to_string(),
        name: Some("worked two-step integrator".to_string()),
        dynamics: DynamicsBlock {
            a: vec![vec![1.0]],
            b: vec![vec![1.0]],
            d: vec![vec![-1.0]],
            e: vec![vec![]],
            x0: vec![0.0],
            horizon: 2,
            sampling_minutes: 30.0,
        },
        constraints: ConstraintsBlock {
            g_x: vec![vec![1.0], vec![-1.0]],
            g_x_rhs: vec![1.0, 0.0],
            g_r: vec![vec![0.0], vec![0.0]],
            g_u: vec![vec![1.0], vec![-1.0]],
            g_v: vec![vec![], vec![]],
            g_r_rhs: vec![1.0, 0.0],
            g_r_rhs_schedule: None,
        },
        cost: CostBlock::default(),
        uncertainty: UncertaintyBlock {
            indices: vec![0, 1],
            r_bar: vec![0.0, 0.0],
        },
        reform: ReformOptions::default(),
        solver: SolverOptions::default(),
        flip_model: None,
        output: None,
    }
}
