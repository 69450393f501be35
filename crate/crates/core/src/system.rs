//! Linear time-invariant model, horizon stacking and the compact robust
//! program data `O r + P u + Q v <= h`.
//!
//! Stacked vectors are time-major: `r = [r(0); r(1); ...; r(N-1)]`, and the
//! state stack starts at `x(1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{dot, indicator, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct SystemDynamics<T> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
    pub d: Matrix<T>,
    pub e: Matrix<T>,
    pub x0: Vec<T>,
    pub horizon: usize,
}

impl<T: Scalar> SystemDynamics<T> {
    /// `x(t+1) = A x(t) + B r(t) + D u(t) + E v(t)` over `horizon` steps.
    pub fn new(
        a: Matrix<T>,
        b: Matrix<T>,
        d: Matrix<T>,
        e: Matrix<T>,
        x0: Vec<T>,
        horizon: usize,
    ) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::dim("A", format!("{:?} is not square", a.shape())));
        }
        for (name, m) in [("B", &b), ("D", &d), ("E", &e)] {
            if m.rows() != n {
                return Err(Error::dim(name, format!("{} rows, state dimension is {n}", m.rows())));
            }
        }
        if x0.len() != n {
            return Err(Error::dim("x0", format!("length {}, state dimension is {n}", x0.len())));
        }
        if horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        Ok(Self {
            a,
            b,
            d,
            e,
            x0,
            horizon,
        })
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.b.cols()
    }

    pub fn p(&self) -> usize {
        self.d.cols()
    }

    pub fn q(&self) -> usize {
        self.e.cols()
    }
}

/// Per-step constraints `Gx x(t) <= gx` and `Gr r(t) + Gu u(t) + Gv v(t) <= gr`.
///
/// `input_rhs_schedule`, when present, replaces `input_rhs` with one vector per
/// step; this is how time-varying limits such as a solar availability profile
/// are expressed.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet<T> {
    pub state: Matrix<T>,
    pub state_rhs: Vec<T>,
    pub input_ref: Matrix<T>,
    pub input_cont: Matrix<T>,
    pub input_bin: Matrix<T>,
    pub input_rhs: Vec<T>,
    pub input_rhs_schedule: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> ConstraintSet<T> {
    pub fn state_rows(&self) -> usize {
        self.state.rows()
    }

    pub fn input_rows(&self) -> usize {
        self.input_cont.rows()
    }

    pub fn input_rhs_at(&self, step: usize) -> &[T] {
        match &self.input_rhs_schedule {
            Some(schedule) => &schedule[step],
            None => &self.input_rhs,
        }
    }

    pub fn validate(&self, dynamics: &SystemDynamics<T>) -> Result<()> {
        let rows_x = self.state.rows();
        let rows_u = self.input_cont.rows();
        let checks = [
            ("Gx", self.state.cols(), dynamics.n()),
            ("Gr", self.input_ref.cols(), dynamics.m()),
            ("Gu", self.input_cont.cols(), dynamics.p()),
            ("Gv", self.input_bin.cols(), dynamics.q()),
            ("gx", self.state_rhs.len(), rows_x),
            ("Gr rows", self.input_ref.rows(), rows_u),
            ("Gv rows", self.input_bin.rows(), rows_u),
            ("gr", self.input_rhs.len(), rows_u),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::dim(name, format!("got {got}, expected {want}")));
            }
        }
        if let Some(schedule) = &self.input_rhs_schedule {
            if schedule.len() != dynamics.horizon {
                return Err(Error::dim(
                    "gr schedule",
                    format!("{} steps, horizon is {}", schedule.len(), dynamics.horizon),
                ));
            }
            if let Some((t, bad)) = schedule.iter().enumerate().find(|(_, g)| g.len() != rows_u) {
                return Err(Error::dim(
                    "gr schedule",
                    format!("step {t} has {} entries, expected {rows_u}", bad.len()),
                ));
            }
        }
        Ok(())
    }
}

/// Horizon-stacked prediction and constraint matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedSystem<T> {
    pub fx: Matrix<T>,
    pub fr: Matrix<T>,
    pub fu: Matrix<T>,
    pub fv: Matrix<T>,
    pub g_x: Matrix<T>,
    pub g_r: Matrix<T>,
    pub g_u: Matrix<T>,
    pub g_v: Matrix<T>,
    pub g_x_rhs: Vec<T>,
    pub g_r_rhs: Vec<T>,
    pub horizon: usize,
}

impl<T: Scalar> StackedSystem<T> {
    /// `x = Fx x0 + Fr r + Fu u + Fv v`.
    pub fn predict(&self, x0: &[T], r: &[T], u: &[T], v: &[T]) -> Vec<T> {
        let parts = [
            self.fx.mul_vec(x0),
            self.fr.mul_vec(r),
            self.fu.mul_vec(u),
            self.fv.mul_vec(v),
        ];
        (0..self.fx.rows())
            .map(|i| {
                parts
                    .iter()
                    .fold(T::zero(), |acc, part| acc + part[i].clone())
            })
            .collect()
    }
}

pub fn build_stacked<T: Scalar>(
    dynamics: &SystemDynamics<T>,
    constraints: &ConstraintSet<T>,
) -> Result<StackedSystem<T>> {
    constraints.validate(dynamics)?;
    let n = dynamics.n();
    let horizon = dynamics.horizon;

    // powers[k] = A^k for k = 0..=N
    let mut powers = vec![Matrix::identity(n)];
    for k in 1..=horizon {
        let next = powers[k - 1].mul(&dynamics.a);
        powers.push(next);
    }

    let mut fx = Matrix::zeros(n * horizon, n);
    for t in 0..horizon {
        fx.set_block(t * n, 0, &powers[t + 1]);
    }

    let convolve = |input: &Matrix<T>| {
        let width = input.cols();
        let mut out = Matrix::zeros(n * horizon, width * horizon);
        let responses: Vec<Matrix<T>> = powers[..horizon].iter().map(|p| p.mul(input)).collect();
        for t in 0..horizon {
            for s in 0..=t {
                out.set_block(t * n, s * width, &responses[t - s]);
            }
        }
        out
    };

    let mut g_r_rhs = Vec::with_capacity(constraints.input_rows() * horizon);
    for t in 0..horizon {
        g_r_rhs.extend_from_slice(constraints.input_rhs_at(t));
    }

    Ok(StackedSystem {
        fx,
        fr: convolve(&dynamics.b),
        fu: convolve(&dynamics.d),
        fv: convolve(&dynamics.e),
        g_x: constraints.state.block_diag(horizon),
        g_r: constraints.input_ref.block_diag(horizon),
        g_u: constraints.input_cont.block_diag(horizon),
        g_v: constraints.input_bin.block_diag(horizon),
        g_x_rhs: (0..horizon).flat_map(|_| constraints.state_rhs.iter().cloned()).collect(),
        g_r_rhs,
        horizon,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMode {
    CostAndGamma,
    GammaOnly,
}

/// Linear cost `J = c_xᵀx + c_uᵀu + c_vᵀv + c_rᵀr` and the flexibility weight.
#[derive(Clone, Debug, PartialEq)]
pub struct CostSpec<T> {
    pub state: Vec<T>,
    pub input_cont: Vec<T>,
    pub input_bin: Vec<T>,
    pub reference: Vec<T>,
    pub lambda: T,
    pub mode: CostMode,
}

impl<T: Scalar> CostSpec<T> {
    pub fn gamma_only(dynamics: &SystemDynamics<T>) -> Self {
        let horizon = dynamics.horizon;
        Self {
            state: vec![T::zero(); dynamics.n() * horizon],
            input_cont: vec![T::zero(); dynamics.p() * horizon],
            input_bin: vec![T::zero(); dynamics.q() * horizon],
            reference: vec![T::zero(); dynamics.m() * horizon],
            lambda: T::one(),
            mode: CostMode::GammaOnly,
        }
    }

    pub fn validate(&self, dynamics: &SystemDynamics<T>) -> Result<()> {
        let horizon = dynamics.horizon;
        let checks = [
            ("c_x", self.state.len(), dynamics.n() * horizon),
            ("c_u", self.input_cont.len(), dynamics.p() * horizon),
            ("c_v", self.input_bin.len(), dynamics.q() * horizon),
            ("c_r", self.reference.len(), dynamics.m() * horizon),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::dim(name, format!("length {got}, expected {want}")));
            }
        }
        if self.lambda <= T::zero() {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if self.mode == CostMode::GammaOnly && !self.is_zero() {
            return Err(Error::invalid("cost", "gamma-only mode requires all-zero cost vectors"));
        }
        Ok(())
    }

    fn is_zero(&self) -> bool {
        [&self.state, &self.input_cont, &self.input_bin, &self.reference]
            .iter()
            .all(|v| v.iter().all(|c| c.is_zero()))
    }

    /// Evaluates `J` on a stacked trajectory.
    pub fn evaluate(&self, x: &[T], r: &[T], u: &[T], v: &[T]) -> T {
        dot(&self.state, x) + dot(&self.input_cont, u) + dot(&self.input_bin, v) + dot(&self.reference, r)
    }
}

/// Split of the reference indices into the fixed set `C` and the flexible set
/// `U`, with the nominal binary reference.
///
/// A flexible entry that is flipped takes the value `1 - nominal`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UncertaintyPartition {
    uncertain: Vec<usize>,
    nominal: Vec<bool>,
}

impl UncertaintyPartition {
    pub fn new(nominal: Vec<bool>, uncertain: Vec<usize>) -> Result<Self> {
        let len = nominal.len();
        let mut seen = vec![false; len];
        for (pos, &idx) in uncertain.iter().enumerate() {
            if idx >= len {
                return Err(Error::invalid(
                    format!("uncertain[{pos}]"),
                    format!("index {idx} outside 0..{len}"),
                ));
            }
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::invalid(format!("uncertain[{pos}]"), format!("duplicate index {idx}")));
            }
        }
        Ok(Self { uncertain, nominal })
    }

    /// Flexible indices in their declared order.
    pub fn uncertain(&self) -> &[usize] {
        &self.uncertain
    }

    /// Fixed indices in ascending order.
    pub fn certain(&self) -> Vec<usize> {
        let mut flexible = vec![false; self.nominal.len()];
        for &j in &self.uncertain {
            flexible[j] = true;
        }
        (0..self.nominal.len()).filter(|&j| !flexible[j]).collect()
    }

    pub fn nominal(&self) -> &[bool] {
        &self.nominal
    }

    pub fn len(&self) -> usize {
        self.nominal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nominal.is_empty()
    }

    pub fn num_uncertain(&self) -> usize {
        self.uncertain.len()
    }

    pub fn nominal_vector<T: Scalar>(&self) -> Vec<T> {
        self.nominal.iter().map(|&b| indicator(b)).collect()
    }

    /// Reference with the flexible entries at `flipped` (positions into
    /// [`Self::uncertain`]) switched away from nominal.
    pub fn realize(&self, flipped: &[usize]) -> Vec<bool> {
        let mut r = self.nominal.clone();
        for &pos in flipped {
            let j = self.uncertain[pos];
            r[j] = !r[j];
        }
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RowOrigin {
    State { step: usize, row: usize },
    Input { step: usize, row: usize },
    BinaryUpper { index: usize },
    BinaryLower { index: usize },
    Epigraph,
}

/// Robust program rows `O r + P u + Q v + theta_coef * theta <= h`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompactConstraints<T> {
    pub o: Matrix<T>,
    pub p: Matrix<T>,
    pub q: Matrix<T>,
    pub h: Vec<T>,
    /// Coefficient of the epigraph variable per row (`-1` on the epigraph row).
    pub theta: Vec<T>,
    pub origins: Vec<RowOrigin>,
}

impl<T: Scalar> CompactConstraints<T> {
    pub fn num_rows(&self) -> usize {
        self.h.len()
    }

    pub fn epigraph_row(&self) -> Option<usize> {
        self.origins.iter().position(|o| *o == RowOrigin::Epigraph)
    }

    /// Row-wise left-hand side `O r + P u + Q v + theta_coef * theta`.
    pub fn lhs(&self, r: &[T], u: &[T], v: &[T], theta: &T) -> Vec<T> {
        (0..self.num_rows())
            .map(|i| {
                dot(self.o.row(i), r)
                    + dot(self.p.row(i), u)
                    + dot(self.q.row(i), v)
                    + self.theta[i].clone() * theta.clone()
            })
            .collect()
    }
}

pub fn build_compact<T: Scalar>(
    stacked: &StackedSystem<T>,
    cost: &CostSpec<T>,
    partition: &UncertaintyPartition,
    x0: &[T],
) -> Result<CompactConstraints<T>> {
    let horizon = stacked.horizon;
    let n = stacked.fx.cols();
    let mn = stacked.fr.cols();
    let pn = stacked.fu.cols();
    let qn = stacked.fv.cols();
    if x0.len() != n {
        return Err(Error::dim("x0", format!("length {}, state dimension is {n}", x0.len())));
    }
    if partition.len() != mn {
        return Err(Error::dim(
            "nominal reference",
            format!("length {}, expected {mn}", partition.len()),
        ));
    }
    let checks = [
        ("c_x", cost.state.len(), stacked.fx.rows()),
        ("c_u", cost.input_cont.len(), pn),
        ("c_v", cost.input_bin.len(), qn),
        ("c_r", cost.reference.len(), mn),
    ];
    for (name, got, want) in checks {
        if got != want {
            return Err(Error::dim(name, format!("length {got}, expected {want}")));
        }
    }

    let rows_x = stacked.g_x.rows() / horizon.max(1);
    let rows_u = stacked.g_u.rows() / horizon.max(1);
    let free_state = stacked.fx.mul_vec(x0);

    // state rows: Gx (Fx x0 + Fr r + Fu u + Fv v) <= gx
    let o_state = stacked.g_x.mul(&stacked.fr);
    let p_state = stacked.g_x.mul(&stacked.fu);
    let q_state = stacked.g_x.mul(&stacked.fv);
    let offset = stacked.g_x.mul_vec(&free_state);
    let h_state: Vec<T> = stacked
        .g_x_rhs
        .iter()
        .zip(&offset)
        .map(|(g, c)| g.clone() - c.clone())
        .collect();

    // binary box rows: v <= 1 and -v <= 0
    let mut q_box = Matrix::zeros(2 * qn, qn);
    for k in 0..qn {
        q_box[(k, k)] = T::one();
        q_box[(qn + k, k)] = -T::one();
    }
    let h_box: Vec<T> = std::iter::repeat_n(T::one(), qn)
        .chain(std::iter::repeat_n(T::zero(), qn))
        .collect();

    let mut origins = Vec::new();
    for step in 0..horizon {
        for row in 0..rows_x {
            origins.push(RowOrigin::State { step, row });
        }
    }
    for step in 0..horizon {
        for row in 0..rows_u {
            origins.push(RowOrigin::Input { step, row });
        }
    }
    origins.extend((0..qn).map(|index| RowOrigin::BinaryUpper { index }));
    origins.extend((0..qn).map(|index| RowOrigin::BinaryLower { index }));

    let mut o_parts = vec![o_state, stacked.g_r.clone(), Matrix::zeros(2 * qn, mn)];
    let mut p_parts = vec![p_state, stacked.g_u.clone(), Matrix::zeros(2 * qn, pn)];
    let mut q_parts = vec![q_state, stacked.g_v.clone(), q_box];
    let mut h: Vec<T> = h_state
        .into_iter()
        .chain(stacked.g_r_rhs.iter().cloned())
        .chain(h_box)
        .collect();

    if cost.mode == CostMode::CostAndGamma {
        // c_rᵀr + c_xᵀ(Fx x0 + Fr r + Fu u + Fv v) + c_uᵀu + c_vᵀv - theta <= 0
        let add = |a: Vec<T>, b: &[T]| -> Vec<T> {
            a.into_iter().zip(b).map(|(x, y)| x + y.clone()).collect()
        };
        let o_row = add(stacked.fr.tr_mul_vec(&cost.state), &cost.reference);
        let p_row = add(stacked.fu.tr_mul_vec(&cost.state), &cost.input_cont);
        let q_row = add(stacked.fv.tr_mul_vec(&cost.state), &cost.input_bin);
        o_parts.push(Matrix::from_fn(1, mn, |_, j| o_row[j].clone()));
        p_parts.push(Matrix::from_fn(1, pn, |_, j| p_row[j].clone()));
        q_parts.push(Matrix::from_fn(1, qn, |_, j| q_row[j].clone()));
        h.push(-dot(&cost.state, &free_state));
        origins.push(RowOrigin::Epigraph);
    }

    let mut theta = vec![T::zero(); h.len()];
    if cost.mode == CostMode::CostAndGamma {
        let last = theta.len() - 1;
        theta[last] = -T::one();
    }

    let stack = |parts: &[Matrix<T>]| Matrix::vstack(&parts.iter().collect::<Vec<_>>());
    let compact = CompactConstraints {
        o: stack(&o_parts),
        p: stack(&p_parts),
        q: stack(&q_parts),
        h,
        theta,
        origins,
    };
    if compact.num_rows() == 0 {
        log::warn!("compact constraint set is empty");
    }
    Ok(compact)
}

/// Steps the recursion forward and returns `x(1), ..., x(N)`.
pub fn simulate<T: Scalar>(
    dynamics: &SystemDynamics<T>,
    x0: &[T],
    r: &[T],
    u: &[T],
    v: &[T],
) -> Result<Vec<Vec<T>>> {
    let horizon = dynamics.horizon;
    let (n, m, p, q) = (dynamics.n(), dynamics.m(), dynamics.p(), dynamics.q());
    let checks = [
        ("x0", x0.len(), n),
        ("r", r.len(), m * horizon),
        ("u", u.len(), p * horizon),
        ("v", v.len(), q * horizon),
    ];
    for (name, got, want) in checks {
        if got != want {
            return Err(Error::dim(name, format!("length {got}, expected {want}")));
        }
    }
    let mut states = Vec::with_capacity(horizon);
    let mut x = x0.to_vec();
    for t in 0..horizon {
        let ax = dynamics.a.mul_vec(&x);
        let br = dynamics.b.mul_vec(&r[t * m..(t + 1) * m]);
        let du = dynamics.d.mul_vec(&u[t * p..(t + 1) * p]);
        let ev = dynamics.e.mul_vec(&v[t * q..(t + 1) * q]);
        x = (0..n)
            .map(|i| ax[i].clone() + br[i].clone() + du[i].clone() + ev[i].clone())
            .collect();
        states.push(x.clone());
    }
    Ok(states)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowViolation {
    pub row: usize,
    pub origin: RowOrigin,
    /// `lhs - rhs`, positive when violated.
    pub margin: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub violations: Vec<RowViolation>,
    /// Largest `lhs - rhs` over every checked row.
    pub max_margin: f64,
}

impl ConstraintReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evaluates every per-step state and input row. Row numbering matches
/// [`build_compact`]: state rows first, then input rows, time-major.
///
/// A row is violated when `lhs - rhs > tol`, so boundary points pass.
pub fn check_constraints<T: Scalar>(
    trajectory: &[Vec<T>],
    r: &[T],
    u: &[T],
    v: &[T],
    constraints: &ConstraintSet<T>,
    tol: &T,
) -> ConstraintReport {
    let horizon = trajectory.len();
    let rows_x = constraints.state_rows();
    let rows_u = constraints.input_rows();
    let (m, p, q) = (
        constraints.input_ref.cols(),
        constraints.input_cont.cols(),
        constraints.input_bin.cols(),
    );
    let mut report = ConstraintReport {
        violations: Vec::new(),
        max_margin: f64::NEG_INFINITY,
    };
    let mut record = |row: usize, origin: RowOrigin, margin: T| {
        let m64 = margin.as_f64();
        report.max_margin = report.max_margin.max(m64);
        if margin > *tol {
            report.violations.push(RowViolation {
                row,
                origin,
                margin: m64,
            });
        }
    };
    for (step, x) in trajectory.iter().enumerate() {
        for row in 0..rows_x {
            let lhs = dot(constraints.state.row(row), x);
            record(
                step * rows_x + row,
                RowOrigin::State { step, row },
                lhs - constraints.state_rhs[row].clone(),
            );
        }
    }
    for step in 0..horizon {
        let rhs = constraints.input_rhs_at(step);
        for row in 0..rows_u {
            let lhs = dot(constraints.input_ref.row(row), &r[step * m..(step + 1) * m])
                + dot(constraints.input_cont.row(row), &u[step * p..(step + 1) * p])
                + dot(constraints.input_bin.row(row), &v[step * q..(step + 1) * q]);
            record(
                horizon * rows_x + step * rows_u + row,
                RowOrigin::Input { step, row },
                lhs - rhs[row].clone(),
            );
        }
    }
    report
}


/// Everything needed to pose one flexibility problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance<T> {
    pub dynamics: SystemDynamics<T>,
    pub constraints: ConstraintSet<T>,
    pub cost: CostSpec<T>,
    pub partition: UncertaintyPartition,
}

impl<T: Scalar> Instance<T> {
    pub fn validate(&self) -> Result<()> {
        self.constraints.validate(&self.dynamics)?;
        self.cost.validate(&self.dynamics)?;
        let mn = self.dynamics.m() * self.dynamics.horizon;
        if self.partition.len() != mn {
            return Err(Error::dim(
                "nominal reference",
                format!("length {}, expected {mn}", self.partition.len()),
            ));
        }
        Ok(())
    }

    pub fn stacked(&self) -> Result<StackedSystem<T>> {
        build_stacked(&self.dynamics, &self.constraints)
    }

    pub fn compact(&self) -> Result<CompactConstraints<T>> {
        self.validate()?;
        build_compact(&self.stacked()?, &self.cost, &self.partition, &self.dynamics.x0)
    }
}
