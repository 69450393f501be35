//! Reference instances: the hand-checkable two-step integrator and a seeded
//! generators of small random systems and integer programs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matrix::Matrix;
use crate::milp::{MilpProblem, RowSense, VarKind};
use crate::scalar::Scalar;
use crate::system::{ConstraintSet, CostSpec, Instance, SystemDynamics, UncertaintyPartition};

/// `x(t+1) = x(t) + r(t) - u(t)`, `x(0) = 0`, `0 <= x <= 1`, `0 <= u <= 1`,
/// two steps, nominal reference `(0, 0)` with both entries flexible.
///
/// Reacting with `u(t) = r(t)` tolerates both flips; any fixed `u` fails the
/// scenario `r = (1, 1)`.
pub fn worked_instance<T: Scalar>() -> Instance<T> {
    let lit = |v: f64| T::from_f64_lossy(v);
    let mat = |name: &str, rows: Vec<Vec<f64>>, cols: usize| {
        Matrix::from_rows(name, rows.into_iter().map(|r| r.into_iter().map(lit).collect()).collect(), cols)
            .expect("fixture dimensions")
    };
    let dynamics = SystemDynamics::new(
        mat("A", vec![vec![1.0]], 1),
        mat("B", vec![vec![1.0]], 1),
        mat("D", vec![vec![-1.0]], 1),
        Matrix::zeros(1, 0),
        vec![T::zero()],
        2,
    )
    .expect("fixture dynamics");
    let constraints = ConstraintSet {
        state: mat("Gx", vec![vec![1.0], vec![-1.0]], 1),
        state_rhs: vec![lit(1.0), lit(0.0)],
        input_ref: Matrix::zeros(2, 1),
        input_cont: mat("Gu", vec![vec![1.0], vec![-1.0]], 1),
        input_bin: Matrix::zeros(2, 0),
        input_rhs: vec![lit(1.0), lit(0.0)],
        input_rhs_schedule: None,
    };
    let cost = CostSpec::gamma_only(&dynamics);
    let partition = UncertaintyPartition::new(vec![false, false], vec![0, 1]).expect("fixture partition");
    Instance {
        dynamics,
        constraints,
        cost,
        partition,
    }
}

/// Leaky tank with downward flexibility: `x(t+1) = 0.5 x(t) + r(t) + u(t)`,
/// `x(0) = 2`, `x >= 0.9`, `0 <= u <= 0.25`, three steps, nominal reference
/// `(1, 1, 1)` with every entry flexible.
///
/// Any single down-flip is absorbed, two consecutive ones are not, so the
/// exact budget is 1. A dual row that drops the sign of the flip direction
/// treats these flips as harmless.
pub fn downward_instance<T: Scalar>() -> Instance<T> {
    let lit = |v: f64| T::from_f64_lossy(v);
    let mat = |name: &str, rows: Vec<Vec<f64>>, cols: usize| {
        Matrix::from_rows(name, rows.into_iter().map(|r| r.into_iter().map(lit).collect()).collect(), cols)
            .expect("fixture dimensions")
    };
    let dynamics = SystemDynamics::new(
        mat("A", vec![vec![0.5]], 1),
        mat("B", vec![vec![1.0]], 1),
        mat("D", vec![vec![1.0]], 1),
        Matrix::zeros(1, 0),
        vec![lit(2.0)],
        3,
    )
    .expect("fixture dynamics");
    let constraints = ConstraintSet {
        state: mat("Gx", vec![vec![-1.0]], 1),
        state_rhs: vec![lit(-0.9)],
        input_ref: Matrix::zeros(2, 1),
        input_cont: mat("Gu", vec![vec![1.0], vec![-1.0]], 1),
        input_bin: Matrix::zeros(2, 0),
        input_rhs: vec![lit(0.25), lit(0.0)],
        input_rhs_schedule: None,
    };
    let cost = CostSpec::gamma_only(&dynamics);
    let partition =
        UncertaintyPartition::new(vec![true, true, true], vec![0, 1, 2]).expect("fixture partition");
    Instance {
        dynamics,
        constraints,
        cost,
        partition,
    }
}

/// Seeded random instance with `n <= 2`, `N <= 5`, `|U| <= 6`, one reference
/// channel and mixed continuous/binary recourse.
///
/// The nominal reference is not guaranteed to be feasible; callers filter.
pub fn random_instance(seed: u64) -> Instance<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=2);
    let horizon = rng.gen_range(2..=5);
    let (p, q) = match rng.gen_range(0..4) {
        0 => (1, 0),
        1 => (0, 1),
        _ => (1, 1),
    };
    let pick = |rng: &mut ChaCha8Rng, choices: &[f64]| choices[rng.gen_range(0..choices.len())];

    let a = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            pick(&mut rng, &[0.5, 0.8, 1.0])
        } else {
            pick(&mut rng, &[0.0, 0.0, 0.2, -0.2])
        }
    });
    let b = Matrix::from_fn(n, 1, |i, _| if i == 0 { pick(&mut rng, &[0.5, 1.0]) } else { pick(&mut rng, &[0.0, 0.5]) });
    let d = Matrix::from_fn(n, p, |_, _| pick(&mut rng, &[-1.0, -0.5, 0.5]));
    let e = Matrix::from_fn(n, q, |_, _| pick(&mut rng, &[-1.0, -0.5, 0.5, 1.0]));
    let dynamics = SystemDynamics::new(a, b, d, e, vec![0.0; n], horizon).expect("generated dynamics");

    // |x_i| <= bound_i
    let mut state_rows = Vec::new();
    let mut state_rhs = Vec::new();
    for i in 0..n {
        let bound = pick(&mut rng, &[1.0, 1.5, 2.0]);
        for sign in [1.0, -1.0] {
            let mut row = vec![0.0; n];
            row[i] = sign;
            state_rows.push(row);
            state_rhs.push(bound);
        }
    }

    // |u| <= ubound, plus a shared budget row coupling u and v
    let mut gr = Vec::new();
    let mut gu = Vec::new();
    let mut gv = Vec::new();
    let mut g = Vec::new();
    if p > 0 {
        let ubound = pick(&mut rng, &[0.5, 1.0, 2.0]);
        for sign in [1.0, -1.0] {
            gr.push(vec![0.0]);
            gu.push(vec![sign; p]);
            gv.push(vec![0.0; q]);
            g.push(ubound);
        }
    }
    if p + q > 0 {
        gr.push(vec![pick(&mut rng, &[0.0, 0.0, 0.5])]);
        gu.push(vec![pick(&mut rng, &[0.5, 1.0]); p]);
        gv.push(vec![pick(&mut rng, &[0.5, 1.0]); q]);
        g.push(pick(&mut rng, &[1.5, 2.0, 3.0]));
    }
    let rows_u = g.len();
    let constraints = ConstraintSet {
        state: Matrix::from_rows("Gx", state_rows, n).expect("Gx"),
        state_rhs,
        input_ref: Matrix::from_rows("Gr", gr, 1).expect("Gr"),
        input_cont: Matrix::from_rows("Gu", gu, p).expect("Gu"),
        input_bin: Matrix::from_rows("Gv", gv, q).expect("Gv"),
        input_rhs: g,
        input_rhs_schedule: None,
    };
    debug_assert_eq!(constraints.input_rows(), rows_u);

    let nominal: Vec<bool> = (0..horizon).map(|_| rng.gen_bool(0.3)).collect();
    let flexible_len = rng.gen_range(1..=horizon.min(6));
    let mut indices: Vec<usize> = (0..horizon).collect();
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let mut uncertain: Vec<usize> = indices.into_iter().take(flexible_len).collect();
    uncertain.sort_unstable();
    let partition = UncertaintyPartition::new(nominal, uncertain).expect("generated partition");
    let cost = CostSpec::gamma_only(&dynamics);
    Instance {
        dynamics,
        constraints,
        cost,
        partition,
    }
}

/// Seeded pure integer problem with small integer data and boxed variables. Rows
/// are built around a hidden integer point, except that odd seeds get one
/// random equality row which may cut it off.
pub fn random_integer_milp(seed: u64) -> MilpProblem<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nv = rng.gen_range(2..=8);
    let nr = rng.gen_range(1..=10);
    let mut p = MilpProblem::new();
    let mut hidden = Vec::new();
    for j in 0..nv {
        let cost = f64::from(rng.gen_range(-5..=5));
        if rng.gen_bool(0.5) {
            p.add_var(format!("b{j}"), VarKind::Binary, None, None, cost);
            hidden.push(rng.gen_range(0..=1));
        } else {
            let lo = rng.gen_range(-2..=0);
            p.add_var(format!("z{j}"), VarKind::Integer, Some(f64::from(lo)), Some(f64::from(lo + 3)), cost);
            hidden.push(rng.gen_range(lo..=lo + 3));
        }
    }
    for i in 0..nr {
        let mut coefs = Vec::new();
        let mut act = 0;
        for (j, x) in hidden.iter().enumerate() {
            if rng.gen_bool(0.6) {
                let c = rng.gen_range(-4..=4);
                act += c * x;
                coefs.push((j, f64::from(c)));
            }
        }
        let slack = rng.gen_range(0..=2);
        let (sense, rhs) = match rng.gen_range(0..5) {
            0 => (RowSense::Ge, act - slack),
            1 if seed % 2 == 1 && i == 0 => (RowSense::Eq, rng.gen_range(-3..=6)),
            1 => (RowSense::Eq, act),
            _ => (RowSense::Le, act + slack),
        };
        p.add_row(format!("r{i}"), coefs, sense, f64::from(rhs));
    }
    p
}

/// Minimum over every integer point in the box, if any is feasible.
pub fn enumerate_integer_optimum(p: &MilpProblem<f64>) -> Option<f64> {
    let ranges: Vec<(i64, i64)> = p
        .vars
        .iter()
        .map(|v| (v.lower.unwrap() as i64, v.upper.unwrap() as i64))
        .collect();
    let mut x: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let mut best: Option<f64> = None;
    loop {
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        if p.max_violation(&xf) <= 1e-12 {
            let obj = p.objective(&xf);
            best = Some(best.map_or(obj, |b| b.min(obj)));
        }
        let mut k = 0;
        loop {
            if k == x.len() {
                return best;
            }
            if x[k] < ranges[k].1 {
                x[k] += 1;
                break;
            }
            x[k] = ranges[k].0;
            k += 1;
        }
    }
}
