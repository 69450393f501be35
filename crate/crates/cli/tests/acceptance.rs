//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use binflex::fixtures::{downward_instance, enumerate_integer_optimum, random_instance, random_integer_milp};
use binflex::milp::{lp_duality_check, solve_lp, solve_milp, Engine, SolveStatus, SolverOptions, VarKind};
use binflex::oracle::{exhaustive_gamma, verify_policy, RecourseMode};
use binflex::reform::{assess, count_constraints, DualSign, PolicyMode, ReformOptions};
use binflex::robustness::{compute_ab, flip_count_tail, monte_carlo_violation, prop1_bound, prop2_bound, FlipModel};
use binflex::{BigRational, Error, Model, Scalar};
use binflex_cli::case_study::{generate_building_case, CaseStudyParams};
use binflex_cli::config::{worked_config, ScenarioConfig};
use binflex_cli::report::envelope_rows;
use binflex_cli::schemes::{run_scheme, RunOptions, Scheme};

const TOL: f64 = 1e-6;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn building(nu: usize) -> ScenarioConfig {
    generate_building_case(&CaseStudyParams {
        num_uncertain: nu,
        ..Default::default()
    })
    .expect("default building parameters are valid")
}

/// `C(n, k)` by Pascal's triangle.
fn choose(n: usize, k: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = vec![1u64; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    row.get(k).copied().unwrap_or(0)
}

/// Random instances whose nominal reference admits recourse, starting at
/// `seed`.
fn feasible_instances(mut seed: u64, count: usize) -> Vec<(u64, Model, usize)> {
    let mut out = Vec::new();
    while out.len() < count {
        let inst = random_instance(seed);
        let cc = inst.compact().unwrap();
        match exhaustive_gamma(&cc, &inst.partition, RecourseMode::Adjustable, &SolverOptions::default()) {
            Ok(res) => out.push((seed, inst, res.gamma_star)),
            Err(Error::NominalInfeasible) => {}
            Err(e) => panic!("seed {seed}: {e}"),
        }
        seed += 1;
    }
    out
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let instances = feasible_instances(0, 50);
    let (mut strict, mut mixed, mut scenarios) = (0, 0, 0);
    for (seed, inst, adjustable) in &instances {
        let res = assess(inst, &ReformOptions::default(), &SolverOptions::default()).map_err(|e| format!("seed {seed}: {e}"))?;
        check(res.gamma_star <= *adjustable, || {
            format!("seed {seed}: affine {} > adjustable {adjustable}", res.gamma_star)
        })?;
        let rep = verify_policy(&res.policy, res.gamma_star, inst, TOL).unwrap();
        let expected: u64 = (0..=res.gamma_star).map(|i| choose(inst.partition.num_uncertain(), i)).sum();
        check(rep.passed() && rep.scenarios_checked == expected, || {
            format!("seed {seed}: {} violations over {} scenarios", rep.violations.len(), rep.scenarios_checked)
        })?;
        strict += usize::from(res.gamma_star < *adjustable);
        mixed += usize::from(inst.dynamics.p() > 0 && inst.dynamics.q() > 0);
        scenarios += rep.scenarios_checked;
    }
    let elapsed = start.elapsed();
    check(elapsed <= Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} instances ({mixed} with mixed recourse), {scenarios} scenarios verified, affine below adjustable on {strict}, {:.1}s",
        instances.len(),
        elapsed.as_secs_f64()
    ))
}

fn worked_instance() -> Outcome {
    let cfg = worked_config();
    let got: Vec<usize> = Scheme::ALL
        .iter()
        .map(|&s| run_scheme(&cfg, s, &RunOptions::default()).map(|r| r.gamma_star))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    check(got == [2, 2, 1], || format!("schemes 1/2/3 gave {got:?}"))?;
    Ok("schemes 1/2/3 give 2/2/1".into())
}

fn min_wall(cfg: &ScenarioConfig, scheme: Scheme, reps: usize) -> Result<(f64, binflex_cli::report::RunReport), String> {
    let mut best: Option<(f64, _)> = None;
    for _ in 0..reps {
        let r = run_scheme(cfg, scheme, &RunOptions::default()).map_err(|e| e.to_string())?;
        let t = r.wall_time.as_secs_f64();
        if best.as_ref().is_none_or(|(b, _)| t < *b) {
            best = Some((t, r));
        }
    }
    Ok(best.unwrap())
}

fn scaling() -> Outcome {
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    for nu in 4..=10 {
        let cfg = building(nu);
        let cc = cfg.to_instance().unwrap().compact().unwrap();
        let (t1, affine) = min_wall(&cfg, Scheme::Affine, 3)?;
        let (t2, exhaustive) = min_wall(&cfg, Scheme::Exhaustive, 3)?;

        let expected = count_constraints(cc.num_rows(), nu, affine.gamma_star, PolicyMode::Affine).theorem1_rows;
        check(affine.row_count == expected as u64, || {
            format!("|U| = {nu}: {} rows, count says {expected}", affine.row_count)
        })?;
        let scenarios: u64 = (0..=exhaustive.gamma_star).map(|i| choose(nu, i)).sum();
        check(exhaustive.scenario_count == scenarios, || {
            format!("|U| = {nu}: {} scenarios, expected {scenarios}", exhaustive.scenario_count)
        })?;
        rows.push(affine.row_count as i64);
        ratios.push(t2 / t1);
    }
    let step = rows[1] - rows[0];
    check(rows.windows(2).all(|w| w[1] - w[0] == step), || format!("rows {rows:?} not linear"))?;
    let text: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    check(ratios.windows(2).all(|w| w[1] >= w[0]), || {
        format!("scheme 2/1 wall ratio not monotone: {}", text.join(", "))
    })?;
    Ok(format!(
        "rows {} + {step} per index, scheme 2/1 wall ratio {}",
        rows[0] - 4 * step,
        text.join(", ")
    ))
}

fn optimality_match() -> Outcome {
    let mut table = Vec::new();
    let mut strict = 0;
    for nu in 4..=8 {
        let cfg = building(nu);
        let g: Vec<usize> = Scheme::ALL
            .iter()
            .map(|&s| run_scheme(&cfg, s, &RunOptions::default()).map(|r| r.gamma_star))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        check(g[0] == g[1], || format!("|U| = {nu}: affine {} vs exhaustive {}", g[0], g[1]))?;
        check(g[2] <= g[0], || format!("|U| = {nu}: open loop {} above affine {}", g[2], g[0]))?;
        strict += usize::from(g[2] < g[0]);
        table.push(format!("{nu}:{}/{}/{}", g[0], g[1], g[2]));
    }
    let gap = if strict == 0 {
        "open-loop gap is zero at every point for these parameters".to_string()
    } else {
        format!("open loop strictly lower at {strict} point(s)")
    };
    Ok(format!("|U|:s1/s2/s3 {}; {gap}", table.join(" ")))
}

fn envelope() -> Outcome {
    let cfg = building(8);
    let inst = cfg.to_instance().unwrap();
    let report = run_scheme(&cfg, Scheme::Affine, &RunOptions::default()).map_err(|e| e.to_string())?;
    let gamma = report.gamma_star;
    let rows = envelope_rows(report.policy.as_ref().unwrap(), gamma, &inst).map_err(|e| e.to_string())?;
    let lo = rows.iter().map(|r| r.min_temp).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.max_temp).fold(f64::NEG_INFINITY, f64::max);
    check(lo >= 20.0 - TOL && hi <= 24.0 + TOL, || format!("envelope [{lo}, {hi}]"))?;

    let forced = run_scheme(
        &cfg,
        Scheme::OpenLoop,
        &RunOptions {
            timings: false,
            fixed_gamma: Some(gamma),
        },
    );
    let open = match forced {
        Err(e) if e.is_infeasible() => "open loop infeasible at the same budget".to_string(),
        Err(e) => return Err(format!("open loop failed: {e}")),
        Ok(r) => {
            let env = envelope_rows(r.policy.as_ref().unwrap(), gamma, &inst).map_err(|e| e.to_string())?;
            let olo = env.iter().map(|r| r.min_temp).fold(f64::INFINITY, f64::min);
            let ohi = env.iter().map(|r| r.max_temp).fold(f64::NEG_INFINITY, f64::max);
            check(olo < 20.0 - TOL || ohi > 24.0 + TOL, || {
                format!("open loop holds the band at budget {gamma}: [{olo}, {ohi}]")
            })?;
            format!("open-loop envelope [{olo:.3}, {ohi:.3}] leaves the band")
        }
    };
    Ok(format!("budget {gamma}, affine envelope [{lo:.3}, {hi:.3}] over {} steps; {open}", rows.len()))
}

fn flip_count_bound() -> Outcome {
    let fm = FlipModel::uniform(8, 0.1).unwrap();
    let bound = prop2_bound(&fm, 5).unwrap().value;
    check(bound == 0.16, || format!("bound {bound}"))?;

    // Pr(Bin(8, 0.1) >= 5), term by term
    let exact: f64 = (5..=8)
        .map(|k| choose(8, k) as f64 * 0.1_f64.powi(k as i32) * 0.9_f64.powi(8 - k as i32))
        .sum();
    check((flip_count_tail(&fm, 5) - exact).abs() < 1e-15, || "tail disagrees".into())?;

    let cfg = building(8);
    let inst = cfg.to_instance().unwrap();
    let report = run_scheme(&cfg, Scheme::Affine, &RunOptions::default()).map_err(|e| e.to_string())?;
    let mc = monte_carlo_violation(report.policy.as_ref().unwrap(), &inst, &fm, 5, 100_000, 2024, TOL)
        .map_err(|e| e.to_string())?;
    let freq = mc.budget_exceed_frequency;
    let se = (exact * (1.0 - exact) / 1e5).sqrt();
    check(freq < bound, || format!("frequency {freq} not below {bound}"))?;
    check((freq - exact).abs() <= 3.0 * se, || format!("frequency {freq} vs exact {exact:.4e} (se {se:.2e})"))?;
    Ok(format!("bound 0.16, exact tail {exact:.4e}, sampled {freq:.4e} (se {se:.1e})"))
}

fn per_row_bound() -> Outcome {
    let (mut rows, mut vacuous, mut worst) = (0, 0, f64::NEG_INFINITY);
    let instances = feasible_instances(100, 10);
    for (seed, inst, _) in &instances {
        let res = assess(inst, &ReformOptions::default(), &SolverOptions::default()).map_err(|e| e.to_string())?;
        check(verify_policy(&res.policy, res.gamma_star, inst, TOL).unwrap().passed(), || {
            format!("seed {seed}: policy fails verification")
        })?;
        let part = &inst.partition;
        // Spread over [0, 0.3] without a generator.
        let eps: Vec<f64> = (0..part.num_uncertain())
            .map(|j| 0.3 * ((*seed as f64 * 0.618_034 + j as f64 * 0.377_2).fract()))
            .collect();
        let fm = FlipModel::new(eps).unwrap();
        let cc = inst.compact().unwrap();
        let ab = compute_ab(&cc, &res.policy, part).unwrap();
        let mc = monte_carlo_violation(&res.policy, inst, &fm, res.gamma_star.max(1), 100_000, *seed, TOL).unwrap();
        for (row, &i) in ab.rows.iter().enumerate() {
            let bound = prop1_bound(&ab, &fm, part, row).unwrap();
            let k = mc.rows.iter().position(|&x| x == i).unwrap();
            let (freq, se) = (mc.row_frequency[k], mc.row_stderr[k]);
            check(freq <= bound.value + 3.0 * se, || {
                format!("seed {seed} row {i}: frequency {freq} above bound {}", bound.value)
            })?;
            rows += 1;
            vacuous += usize::from(bound.vacuous);
            worst = worst.max(freq - bound.value);
        }
    }
    Ok(format!(
        "{} instances, {rows} rows ({vacuous} vacuous bounds), largest frequency minus bound {worst:.2e}",
        instances.len()
    ))
}

fn milp_engine() -> Outcome {
    let (mut feasible, mut lps) = (0, 0);
    for seed in 0..20 {
        let p = random_integer_milp(seed);
        let truth = enumerate_integer_optimum(&p);
        for engine in [Engine::Auto, Engine::Embedded] {
            let sol = solve_milp(&p, &SolverOptions::default().with_engine(engine)).map_err(|e| e.to_string())?;
            match truth {
                Some(t) => check(sol.status == SolveStatus::Optimal && sol.objective == Some(t), || {
                    format!("seed {seed} {engine:?}: {:?} vs {t}", sol.objective)
                })?,
                None => check(sol.status == SolveStatus::Infeasible, || {
                    format!("seed {seed} {engine:?}: {:?} on an infeasible problem", sol.status)
                })?,
            }
        }
        feasible += usize::from(truth.is_some());

        // Duality on the relaxation and on the LP left after fixing the
        // integers at the optimum.
        let opts = SolverOptions::default();
        let mut problems = vec![p.relaxed()];
        if let Some(sol) = solve_milp(&p, &opts).ok().filter(|s| s.status == SolveStatus::Optimal) {
            let mut fixed = p.relaxed();
            for (v, x) in fixed.vars.iter_mut().zip(&sol.values) {
                v.kind = VarKind::Continuous;
                (v.lower, v.upper) = (Some(*x), Some(*x));
            }
            problems.push(fixed);
        }
        for lp in problems {
            let res = solve_lp(&lp, &opts).unwrap();
            if res.status != SolveStatus::Optimal {
                continue;
            }
            check(lp_duality_check(&lp, &res.values, &res.row_duals, &opts), || {
                format!("seed {seed}: duality gap above {TOL}")
            })?;
            let exact = solve_lp(&lp.convert::<BigRational>(), &opts).unwrap();
            let exact_obj = exact.objective.as_ref().map(Scalar::as_f64);
            check(
                exact_obj.is_some_and(|e| (e - res.objective.unwrap()).abs() <= TOL),
                || format!("seed {seed}: LP optimum {:?} vs exact {exact_obj:?}", res.objective),
            )?;
            lps += 1;
        }
    }
    Ok(format!("20 problems ({feasible} feasible) match enumeration on both engines, {lps} LP optima close the gap"))
}

fn sign_regression() -> Outcome {
    let inst = downward_instance::<f64>();
    let cc = inst.compact().unwrap();
    let solver = SolverOptions::default();
    let truth = exhaustive_gamma(&cc, &inst.partition, RecourseMode::Adjustable, &solver)
        .map_err(|e| e.to_string())?
        .gamma_star;
    let derived = assess(&inst, &ReformOptions::default(), &solver).map_err(|e| e.to_string())?;
    check(derived.gamma_star <= truth, || format!("derived sign claims {} > {truth}", derived.gamma_star))?;
    check(verify_policy(&derived.policy, derived.gamma_star, &inst, TOL).unwrap().passed(), || {
        "derived-sign policy fails verification".into()
    })?;

    let statement = ReformOptions {
        dual_sign: DualSign::Statement,
        ..ReformOptions::default()
    };
    let claimed = assess(&inst, &statement, &solver).map_err(|e| e.to_string())?;
    let rep = verify_policy(&claimed.policy, claimed.gamma_star, &inst, TOL).unwrap();
    check(claimed.gamma_star > truth && !rep.passed(), || {
        format!("plus-sign variant stayed sound: claims {} of true {truth}", claimed.gamma_star)
    })?;

    // The same random set as the oracle check, with the plus sign.
    let mut unsound = 0;
    for (_, inst, _) in feasible_instances(0, 50) {
        let res = assess(&inst, &statement, &solver).map_err(|e| e.to_string())?;
        unsound += usize::from(!verify_policy(&res.policy, res.gamma_star, &inst, TOL).unwrap().passed());
    }
    Ok(format!(
        "downward fixture: true {truth}, derived sign {} verified, plus sign claims {} with {} violations; \
         plus sign unsound on {unsound} of 50 random instances",
        derived.gamma_star,
        claimed.gamma_star,
        rep.violations.len()
    ))
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters target the libtest harness; this
    // target has nothing to list.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [Criterion; 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("worked instance", worked_instance),
        ("scaling", scaling),
        ("scheme 1 optimality match", optimality_match),
        ("envelope robustness", envelope),
        ("flip-count bound", flip_count_bound),
        ("per-row bound", per_row_bound),
        ("MILP engine", milp_engine),
        ("dual sign regression", sign_regression),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({secs:.1}s) {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({secs:.1}s) {detail}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
