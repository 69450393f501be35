//! What happens beyond the reserved budget when flips are random: Markov
//! type bounds on row violation and on the flip count, and a seeded
//! Monte-Carlo estimate to compare them against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::oracle::Scenario;
use crate::reform::{policy_response, AffinePolicy};
use crate::scalar::{indicator, Scalar};
use crate::system::{check_constraints, simulate, CompactConstraints, Instance, RowOrigin, UncertaintyPartition};

/// Independent flip probabilities, one per flexible entry in partition order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipModel {
    eps: Vec<f64>,
}

impl FlipModel {
    pub fn new(eps: Vec<f64>) -> Result<Self> {
        for (j, e) in eps.iter().enumerate() {
            if !(0.0..=1.0).contains(e) {
                return Err(Error::invalid(format!("flip_probabilities[{j}]"), format!("{e} is not in [0, 1]")));
            }
        }
        Ok(Self { eps })
    }

    pub fn uniform(num_uncertain: usize, eps: f64) -> Result<Self> {
        Self::new(vec![eps; num_uncertain])
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    /// `Pr(r_j = 1)` for flexible position `pos`.
    pub fn prob_one(&self, pos: usize, part: &UncertaintyPartition) -> f64 {
        let e = self.eps[pos];
        if part.nominal()[part.uncertain()[pos]] {
            1.0 - e
        } else {
            e
        }
    }

    fn check(&self, part: &UncertaintyPartition) -> Result<()> {
        if self.eps.len() != part.num_uncertain() {
            return Err(Error::dim(
                "flip probabilities",
                format!("{} entries for {} flexible indices", self.eps.len(), part.num_uncertain()),
            ));
        }
        Ok(())
    }
}

/// Row `i` is violated exactly when `sum_j a_ij r_j > b_i`, with `r_j` the
/// realised flexible entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCoefficients<T> {
    pub a: Matrix<T>,
    pub b: Vec<T>,
    /// Compact row index of each coefficient row; the cost row is skipped.
    pub rows: Vec<usize>,
}

pub fn compute_ab<T: Scalar>(
    cc: &CompactConstraints<T>,
    policy: &AffinePolicy<T>,
    part: &UncertaintyPartition,
) -> Result<ConstraintCoefficients<T>> {
    let nu = part.num_uncertain();
    if policy.gain_u.shape() != (cc.p.cols(), nu) || policy.offset_u.len() != cc.p.cols() {
        return Err(Error::dim("policy gains for u", format!("expected {}x{nu}", cc.p.cols())));
    }
    if policy.gain_v.len() != cc.q.cols()
        || policy.offset_v.len() != cc.q.cols()
        || policy.gain_v.iter().any(|r| r.len() != nu)
    {
        return Err(Error::dim("policy gains for v", format!("expected {}x{nu}", cc.q.cols())));
    }
    if cc.o.cols() != part.len() {
        return Err(Error::dim("O", "column count differs from the partition"));
    }
    let rows: Vec<usize> = (0..cc.num_rows()).filter(|&i| cc.origins[i] != RowOrigin::Epigraph).collect();
    let rbar: Vec<T> = part.nominal_vector();
    let certain = part.certain();
    let a = Matrix::from_fn(rows.len(), nu, |r, j| {
        let i = rows[r];
        let mut acc = cc.o[(i, part.uncertain()[j])].clone();
        for k in 0..cc.p.cols() {
            acc = acc + cc.p[(i, k)].clone() * policy.gain_u[(k, j)].clone();
        }
        for k in 0..cc.q.cols() {
            acc = acc + cc.q[(i, k)].clone() * T::from_i64(policy.gain_v[k][j]);
        }
        acc
    });
    let b = rows
        .iter()
        .map(|&i| {
            let mut acc = cc.h[i].clone();
            for &j in &certain {
                acc = acc - cc.o[(i, j)].clone() * rbar[j].clone();
            }
            for k in 0..cc.p.cols() {
                acc = acc - cc.p[(i, k)].clone() * policy.offset_u[k].clone();
            }
            for k in 0..cc.q.cols() {
                acc = acc - cc.q[(i, k)].clone() * T::from_i64(policy.offset_v[k]);
            }
            acc
        })
        .collect();
    Ok(ConstraintCoefficients { a, b, rows })
}

/// A probability bound, capped at one. `raw` keeps the uncapped value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityBound {
    pub value: f64,
    pub raw: f64,
    pub vacuous: bool,
}

impl ProbabilityBound {
    fn from_raw(raw: f64) -> Self {
        Self {
            value: raw.min(1.0),
            raw,
            vacuous: raw >= 1.0,
        }
    }
}

/// `ln((1 - p) + p e^a)` without overflow for large `|a|`.
fn log_mgf(a: f64, p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else if a > 0.0 {
        a + (p + (1.0 - p) * (-a).exp()).ln()
    } else {
        (p * a.exp_m1()).ln_1p()
    }
}

/// `prod_j E[exp(a_ij r_j)] / exp(b_i)` for coefficient row `i`.
pub fn prop1_bound<T: Scalar>(
    coef: &ConstraintCoefficients<T>,
    fm: &FlipModel,
    part: &UncertaintyPartition,
    row: usize,
) -> Result<ProbabilityBound> {
    fm.check(part)?;
    if row >= coef.b.len() {
        return Err(Error::invalid("row", format!("{row} outside 0..{}", coef.b.len())));
    }
    let log_raw: f64 = (0..fm.len())
        .map(|j| log_mgf(coef.a[(row, j)].as_f64(), fm.prob_one(j, part)))
        .sum::<f64>()
        - coef.b[row].as_f64();
    Ok(ProbabilityBound::from_raw(log_raw.exp()))
}

/// Neumaier-compensated sum.
fn compensated_sum(values: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `sum_j eps_j / gamma`, bounding the chance of at least `gamma` flips.
pub fn prop2_bound(fm: &FlipModel, gamma: usize) -> Result<ProbabilityBound> {
    if gamma == 0 {
        return Err(Error::invalid("gamma", "the flip-count bound needs gamma >= 1"));
    }
    Ok(ProbabilityBound::from_raw(compensated_sum(&fm.eps) / gamma as f64))
}

/// Exact `Pr(sum_j z_j >= gamma)` for independent flips.
pub fn flip_count_tail(fm: &FlipModel, gamma: usize) -> f64 {
    // dist[k] = Pr(exactly k flips so far)
    let mut dist = vec![0.0_f64; fm.len() + 1];
    dist[0] = 1.0;
    for (n, &e) in fm.eps.iter().enumerate() {
        for k in (0..=n + 1).rev() {
            let stay = dist[k] * (1.0 - e);
            let come = if k > 0 { dist[k - 1] * e } else { 0.0 };
            dist[k] = stay + come;
        }
    }
    dist.iter().skip(gamma).sum()
}

pub const MC_ALGORITHM: &str = "chacha8-stream-per-sample";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub samples: u64,
    pub seed: u64,
    pub algorithm: String,
    pub gamma: usize,
    /// Compact row index of each entry in `row_frequency`.
    pub rows: Vec<usize>,
    pub row_frequency: Vec<f64>,
    pub row_stderr: Vec<f64>,
    pub any_row_frequency: f64,
    pub any_row_stderr: f64,
    pub budget_exceed_frequency: f64,
    pub budget_exceed_stderr: f64,
}

#[derive(Clone)]
struct Tally {
    rows: Vec<u64>,
    any: u64,
    exceed: u64,
}

impl Tally {
    fn new(n: usize) -> Self {
        Self {
            rows: vec![0; n],
            any: 0,
            exceed: 0,
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.rows.iter_mut().zip(other.rows) {
            *a += b;
        }
        self.any += other.any;
        self.exceed += other.exceed;
        self
    }
}

/// Draws one flip pattern for sample `index`; each sample has its own
/// stream so the result does not depend on how samples are scheduled.
pub fn sample_flips(fm: &FlipModel, seed: u64, index: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    fm.eps
        .iter()
        .enumerate()
        .filter_map(|(j, &e)| (rng.gen::<f64>() < e).then_some(j))
        .collect()
}

fn stderr(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Samples random flips, applies the policy, simulates and tallies violated
/// rows (state, input and binary-box rows, in compact order).
pub fn monte_carlo_violation<T: Scalar>(
    policy: &AffinePolicy<T>,
    inst: &Instance<T>,
    fm: &FlipModel,
    gamma: usize,
    samples: u64,
    seed: u64,
    tol: f64,
) -> Result<MonteCarloReport> {
    let part = &inst.partition;
    fm.check(part)?;
    if samples == 0 {
        return Err(Error::invalid("samples", "must be at least 1"));
    }
    let horizon = inst.dynamics.horizon;
    let qn = inst.dynamics.q() * horizon;
    let base = horizon * (inst.constraints.state_rows() + inst.constraints.input_rows());
    let n_rows = base + 2 * qn;
    let tol_t = T::from_f64_lossy(tol);

    let one = |index: u64| -> Result<Tally> {
        let flipped = sample_flips(fm, seed, index);
        let s = Scenario {
            reference: part.realize(&flipped),
            flipped,
        };
        let (u, v) = policy_response(policy, &s.reference, part)?;
        let r: Vec<T> = s.reference.iter().map(|&b| indicator(b)).collect();
        let states = simulate(&inst.dynamics, &inst.dynamics.x0, &r, &u, &v)?;
        let report = check_constraints(&states, &r, &u, &v, &inst.constraints, &tol_t);
        let mut t = Tally::new(n_rows);
        for rv in &report.violations {
            t.rows[rv.row] = 1;
        }
        for (k, vk) in v.iter().enumerate() {
            if vk.clone() - T::one() > tol_t {
                t.rows[base + k] = 1;
            }
            if -vk.clone() > tol_t {
                t.rows[base + qn + k] = 1;
            }
        }
        t.any = u64::from(t.rows.iter().any(|&c| c > 0));
        t.exceed = u64::from(s.flipped.len() >= gamma);
        Ok(t)
    };

    let tally = (0..samples)
        .into_par_iter()
        .map(one)
        .try_fold(|| Tally::new(n_rows), |acc, t| t.map(|t| acc.merge(t)))
        .try_reduce(|| Tally::new(n_rows), |a, b| Ok(a.merge(b)))?;

    let freq = |c: u64| c as f64 / samples as f64;
    let row_frequency: Vec<f64> = tally.rows.iter().map(|&c| freq(c)).collect();
    let row_stderr = row_frequency.iter().map(|&p| stderr(p, samples)).collect();
    let any = freq(tally.any);
    let exceed = freq(tally.exceed);
    Ok(MonteCarloReport {
        samples,
        seed,
        algorithm: MC_ALGORITHM.to_string(),
        gamma,
        rows: (0..n_rows).collect(),
        row_frequency,
        row_stderr,
        any_row_frequency: any,
        any_row_stderr: stderr(any, samples),
        budget_exceed_frequency: exceed,
        budget_exceed_stderr: stderr(exceed, samples),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::worked_instance;

    fn identity_policy() -> AffinePolicy<f64> {
        AffinePolicy {
            gain_u: Matrix::identity(2),
            offset_u: vec![0.0, 0.0],
            gain_v: vec![],
            offset_v: vec![],
        }
    }

    fn single(a: f64, b: f64) -> ConstraintCoefficients<f64> {
        ConstraintCoefficients {
            a: Matrix::from_rows("a", vec![vec![a]], 1).unwrap(),
            b: vec![b],
            rows: vec![0],
        }
    }

    #[test]
    fn prop1_closed_forms() {
        let part = UncertaintyPartition::new(vec![false], vec![0]).unwrap();
        let half = FlipModel::uniform(1, 0.5).unwrap();
        let e = std::f64::consts::E;
        let b = prop1_bound(&single(1.0, 1.0), &half, &part, 0).unwrap();
        assert!((b.value - (0.5 + 0.5 * e) / e).abs() < 1e-15);
        assert!(!b.vacuous);
        let v = prop1_bound(&single(0.0, 0.0), &half, &part, 0).unwrap();
        assert_eq!((v.value, v.vacuous), (1.0, true));
        let far = prop1_bound(&single(1.0, 800.0), &half, &part, 0).unwrap();
        assert_eq!(far.value, 0.0);
        let huge = prop1_bound(&single(900.0, 0.0), &half, &part, 0).unwrap();
        assert!(huge.vacuous && huge.raw.is_infinite());
    }

    #[test]
    fn prop2_closed_forms() {
        let fm = FlipModel::uniform(8, 0.1).unwrap();
        assert_eq!(prop2_bound(&fm, 5).unwrap().value, 0.16);
        assert_eq!(prop2_bound(&FlipModel::uniform(8, 0.0).unwrap(), 5).unwrap().value, 0.0);
        let big = prop2_bound(&FlipModel::uniform(4, 0.9).unwrap(), 2).unwrap();
        assert!(big.vacuous && big.value == 1.0 && (big.raw - 1.8).abs() < 1e-12);
        assert!(prop2_bound(&fm, 0).is_err());
    }

    #[test]
    fn binomial_tail() {
        let fm = FlipModel::uniform(8, 0.1).unwrap();
        // 56 * 1e-5 * 0.729 + 28 * 1e-6 * 0.81 + 8 * 1e-7 * 0.9 + 1e-8
        let exact = 56.0 * 1e-5 * 0.729 + 28.0 * 1e-6 * 0.81 + 8.0 * 1e-7 * 0.9 + 1e-8;
        assert!((flip_count_tail(&fm, 5) - exact).abs() < 1e-15);
        assert!((flip_count_tail(&fm, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coefficients_cancel_under_identity_gain() {
        let inst = worked_instance::<f64>();
        let cc = inst.compact().unwrap();
        let ab = compute_ab(&cc, &identity_policy(), &inst.partition).unwrap();
        for (r, &i) in ab.rows.iter().enumerate() {
            if matches!(cc.origins[i], RowOrigin::State { .. }) {
                assert_eq!(ab.a.row(r), &[0.0, 0.0]);
            }
        }
        let zero = AffinePolicy::zero(2, 0, 2);
        let ab0 = compute_ab(&cc, &zero, &inst.partition).unwrap();
        assert_eq!(ab0.b, cc.h);
    }

    #[test]
    fn monte_carlo_degenerate_models() {
        let inst = worked_instance::<f64>();
        let none = FlipModel::uniform(2, 0.0).unwrap();
        let rep = monte_carlo_violation(&identity_policy(), &inst, &none, 1, 200, 7, 1e-6).unwrap();
        assert_eq!(rep.any_row_frequency, 0.0);
        assert_eq!(rep.budget_exceed_frequency, 0.0);
        let all = FlipModel::uniform(2, 1.0).unwrap();
        let rep = monte_carlo_violation(&identity_policy(), &inst, &all, 2, 50, 7, 1e-6).unwrap();
        assert_eq!(rep.budget_exceed_frequency, 1.0);
        assert_eq!(rep.any_row_frequency, 0.0);
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let inst = worked_instance::<f64>();
        let fm = FlipModel::uniform(2, 0.4).unwrap();
        let zero = AffinePolicy::zero(2, 0, 2);
        let a = monte_carlo_violation(&zero, &inst, &fm, 1, 2000, 11, 1e-6).unwrap();
        let b = monte_carlo_violation(&zero, &inst, &fm, 1, 2000, 11, 1e-6).unwrap();
        assert_eq!(a, b);
        let serial: u64 = (0..2000).filter(|&i| !sample_flips(&fm, 11, i).is_empty()).count() as u64;
        assert_eq!((a.budget_exceed_frequency * 2000.0).round() as u64, serial);
        assert!(a.any_row_frequency > 0.0);
    }
}
