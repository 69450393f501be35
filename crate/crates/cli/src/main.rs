use std::path::{Path, PathBuf};
use std::process::ExitCode;

use binflex::oracle::verify_policy;
use binflex_cli::case_study::{generate_building_case, CaseStudyParams};
use binflex_cli::config::{load_config, to_json, ConfigError, FlipModelBlock};
use binflex_cli::report::{emit_reports, write_csv, RunReport, ScalingRow};
use binflex_cli::schemes::{bounds_summary, run_scheme, RunError, RunOptions, Scheme, VERIFY_TOL};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "binflex", version, about = "Flexibility budgets for binary reference schedules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one config with one scheme.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// 1 = affine policy, 2 = exhaustive search, 3 = open loop.
        #[arg(long, default_value_t = 1)]
        scheme: u8,
        /// Output directory; defaults to the config's output.dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Pin the budget instead of maximising it (schemes 1 and 3).
        #[arg(long)]
        gamma: Option<usize>,
        /// Record wall time in the report.
        #[arg(long)]
        timings: bool,
    },
    /// Write the building case config.
    CaseStudy {
        /// JSON file with parameter overrides.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        num_uncertain: Option<usize>,
        /// Destination file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run schemes on the building case over a range of |U|.
    Sweep {
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        min: usize,
        #[arg(long, default_value_t = 8)]
        max: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        schemes: Vec<u8>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
        #[arg(long)]
        timings: bool,
    },
    /// Check a reported policy against every scenario within its budget.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// A report written by `run`.
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        gamma: Option<usize>,
    },
    /// Violation probability bounds and Monte Carlo for a reported policy.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        /// JSON with `eps` and optionally `samples`.
        #[arg(long)]
        flip_model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit codes: 0 success, 1 infeasible or failed verification, 2 invalid
/// input, 3 any other failure.
enum Failure {
    Infeasible(String),
    Invalid(String),
    Other(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Other(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        if e.is_infeasible() {
            Failure::Infeasible(e.to_string())
        } else {
            match e {
                RunError::Model(binflex::Error::Invalid { .. } | binflex::Error::Dimension { .. })
                | RunError::Unsupported(_) => Failure::Invalid(e.to_string()),
                _ => Failure::Other(e.to_string()),
            }
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl From<binflex::Error> for Failure {
    fn from(e: binflex::Error) -> Self {
        Failure::from(RunError::Model(e))
    }
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn case_params(path: Option<&Path>) -> Result<CaseStudyParams, Failure> {
    path.map_or_else(|| Ok(CaseStudyParams::default()), read_json)
}

fn summary(r: &RunReport) -> String {
    format!(
        "scheme {} ({}): gamma* = {} of {}, verification {} over {} scenarios",
        r.scheme,
        r.scheme_name,
        r.gamma_star,
        r.num_uncertain,
        if r.verification.passed { "passed" } else { "FAILED" },
        r.verification.scenarios_checked
    )
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            scheme,
            out,
            gamma,
            timings,
        } => {
            let cfg = load_config(&config)?;
            let scheme = Scheme::from_number(scheme).ok_or_else(|| Failure::Invalid(format!("unknown scheme {scheme}")))?;
            let report = run_scheme(&cfg, scheme, &RunOptions { timings, fixed_gamma: gamma })?;
            println!("{}", summary(&report));
            let dir = out.or_else(|| cfg.output.as_ref().map(|o| PathBuf::from(&o.dir)));
            if let Some(dir) = dir {
                emit_reports(&report, &cfg.to_instance()?, &dir)?;
            }
            if !report.verification.passed {
                return Err(Failure::Infeasible("policy fails verification".into()));
            }
        }
        Command::CaseStudy {
            params,
            num_uncertain,
            out,
        } => {
            let mut p = case_params(params.as_deref())?;
            if let Some(k) = num_uncertain {
                p.num_uncertain = k;
            }
            let cfg = generate_building_case(&p).map_err(|e| Failure::Invalid(e.to_string()))?;
            match out {
                Some(path) => std::fs::write(path, to_json(&cfg))?,
                None => print!("{}", to_json(&cfg)),
            }
        }
        Command::Sweep {
            params,
            min,
            max,
            schemes,
            out,
            timings,
        } => {
            let base = case_params(params.as_deref())?;
            let schemes = schemes
                .iter()
                .map(|&s| Scheme::from_number(s).ok_or_else(|| Failure::Invalid(format!("unknown scheme {s}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let mut rows = Vec::new();
            for k in min..=max {
                let cfg = generate_building_case(&CaseStudyParams {
                    num_uncertain: k,
                    ..base.clone()
                })
                .map_err(|e| Failure::Invalid(e.to_string()))?;
                for &s in &schemes {
                    let report = run_scheme(&cfg, s, &RunOptions { timings, fixed_gamma: None })?;
                    println!("|U| = {k}: {}", summary(&report));
                    emit_reports(&report, &cfg.to_instance()?, &out.join(format!("u{k}_scheme{}", s.number())))?;
                    rows.push(ScalingRow::from_report(&report));
                }
            }
            write_csv(&out.join("scaling.csv"), &rows)?;
        }
        Command::Verify { config, solution, gamma } => {
            let cfg = load_config(&config)?;
            let report: RunReport = read_json(&solution)?;
            let policy = report
                .policy
                .ok_or_else(|| Failure::Invalid("solution carries no policy".into()))?;
            let gamma = gamma.unwrap_or(report.gamma_star);
            let ver = verify_policy(&policy, gamma, &cfg.to_instance()?, VERIFY_TOL)?;
            println!(
                "gamma {gamma}: {} scenarios, {} violations, max margin {:.3e}",
                ver.scenarios_checked,
                ver.violations.len(),
                ver.max_margin
            );
            if !ver.passed() {
                return Err(Failure::Infeasible("policy fails verification".into()));
            }
        }
        Command::Bounds {
            config,
            solution,
            flip_model,
            out,
        } => {
            let cfg = load_config(&config)?;
            let report: RunReport = read_json(&solution)?;
            let policy = report
                .policy
                .ok_or_else(|| Failure::Invalid("solution carries no policy".into()))?;
            let fm: FlipModelBlock = read_json(&flip_model)?;
            let bounds = bounds_summary(&cfg.to_instance()?, &policy, report.gamma_star, &fm, cfg.solver.seed)?;
            let text = serde_json::to_string_pretty(&bounds).expect("bounds serialise") + "\n";
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Infeasible(m)) => {
            eprintln!("infeasible: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Invalid(m)) => {
            eprintln!("invalid input: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
