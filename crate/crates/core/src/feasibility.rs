//! Deciding whether a finite model admits a reliable learner.
//!
//! A task fixes utilities `U[θ][h]`; tolerances `(ε, δ)` turn it into one
//! linear row per environment, `Σ_{h ∈ G_θ(ε)} q_{θ,h} ≥ 1 − δ`. Classical
//! models given as rational polytopes are decided exactly with a phase-1
//! simplex; quantum `d`-copy models are searched by alternating projections
//! over POVMs.

use std::collections::HashSet;
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::kernel::{Kernel, KernelError};
use crate::prob::{format_rational, parse_rational, ParseRationalError};
use crate::quantum::{
    hermitian_eigenvalues, hermitian_part, project_psd, spectral_map, tensor_power, trace_norm,
    trace_product, CMatrix, DensityMatrix, DimCap, Povm, PovmFile, QuantumError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeasibilityError {
    #[error("invalid task: {0}")]
    Task(String),
    #[error("invalid constraint system: {0}")]
    System(String),
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error(transparent)]
    Parse(#[from] ParseRationalError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

fn zero() -> BigRational {
    BigRational::zero()
}

fn one() -> BigRational {
    BigRational::one()
}

fn rational_from_f64(v: f64) -> Result<BigRational, FeasibilityError> {
    BigRational::from_float(v).ok_or_else(|| FeasibilityError::Parameter(format!("{v} is not finite")))
}

// ---------------------------------------------------------------------------
// Tasks
// ---------------------------------------------------------------------------

/// Finite environments, hypotheses and utilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    thetas: Vec<String>,
    hyps: Vec<String>,
    utility: Vec<Vec<BigRational>>,
}

impl TaskSpec {
    pub fn new(
        thetas: Vec<String>,
        hyps: Vec<String>,
        utility: Vec<Vec<BigRational>>,
    ) -> Result<Self, FeasibilityError> {
        if thetas.is_empty() || hyps.is_empty() {
            return Err(FeasibilityError::Task("no environments or no hypotheses".into()));
        }
        for (what, labels) in [("environment", &thetas), ("hypothesis", &hyps)] {
            let mut seen = HashSet::new();
            if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
                return Err(FeasibilityError::Task(format!("duplicate {what} label {dup:?}")));
            }
        }
        if utility.len() != thetas.len() {
            return Err(FeasibilityError::Task(format!(
                "{} utility rows for {} environments",
                utility.len(),
                thetas.len()
            )));
        }
        for (t, row) in utility.iter().enumerate() {
            if row.len() != hyps.len() {
                return Err(FeasibilityError::Task(format!(
                    "utility row {t} has {} entries, expected {}",
                    row.len(),
                    hyps.len()
                )));
            }
            if let Some(u) = row.iter().find(|u| u.is_negative() || **u > one()) {
                return Err(FeasibilityError::Task(format!(
                    "utility {} outside [0, 1]",
                    format_rational(u)
                )));
            }
        }
        Ok(Self {
            thetas,
            hyps,
            utility,
        })
    }

    /// `U = I` on `n` environments/hypotheses labelled `θi`/`hi`.
    pub fn identity(n: usize) -> Self {
        let utility = (0..n)
            .map(|t| (0..n).map(|h| if t == h { one() } else { zero() }).collect())
            .collect();
        Self::new(
            (1..=n).map(|i| format!("theta{i}")).collect(),
            (1..=n).map(|i| format!("h{i}")).collect(),
            utility,
        )
        .expect("identity task is valid")
    }

    pub fn thetas(&self) -> &[String] {
        &self.thetas
    }

    pub fn hyps(&self) -> &[String] {
        &self.hyps
    }

    pub fn utility(&self) -> &[Vec<BigRational>] {
        &self.utility
    }

    pub fn num_thetas(&self) -> usize {
        self.thetas.len()
    }

    pub fn num_hyps(&self) -> usize {
        self.hyps.len()
    }

    /// `max_h U[θ][h]`.
    pub fn opt(&self, theta: usize) -> BigRational {
        self.utility[theta]
            .iter()
            .max()
            .cloned()
            .expect("rows are nonempty")
    }
}

/// JSON form: `{thetas, hyps, utility}` with utilities as rational strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFile {
    pub thetas: Vec<String>,
    pub hyps: Vec<String>,
    pub utility: Vec<Vec<String>>,
}

impl TaskFile {
    pub fn load(&self) -> Result<TaskSpec, FeasibilityError> {
        let utility = self
            .utility
            .iter()
            .map(|row| row.iter().map(|u| parse_rational(u)).collect())
            .collect::<Result<Vec<Vec<_>>, _>>()?;
        TaskSpec::new(self.thetas.clone(), self.hyps.clone(), utility)
    }

    pub fn from_task(task: &TaskSpec) -> Self {
        Self {
            thetas: task.thetas.clone(),
            hyps: task.hyps.clone(),
            utility: task
                .utility
                .iter()
                .map(|r| r.iter().map(format_rational).collect())
                .collect(),
        }
    }
}

/// `G_θ(ε) = {h : U(θ, h) ≥ opt(θ) − ε}` for every θ, as sorted indices.
pub fn epsilon_optimal_sets(
    task: &TaskSpec,
    epsilon: &BigRational,
) -> Result<Vec<Vec<usize>>, FeasibilityError> {
    if epsilon.is_negative() {
        return Err(FeasibilityError::Parameter("epsilon must be nonnegative".into()));
    }
    Ok((0..task.num_thetas())
        .map(|t| {
            let threshold = task.opt(t) - epsilon;
            (0..task.num_hyps())
                .filter(|&h| task.utility[t][h] >= threshold)
                .collect()
        })
        .collect())
}

/// `Σ_{h ∈ good} q_{θ,h} ≥ min_mass`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlConstraint {
    pub theta: usize,
    pub good: Vec<usize>,
    pub min_mass: BigRational,
}

impl PlConstraint {
    /// Dense row over kernel coordinates `θ·|H| + h`.
    pub fn to_row(&self, num_thetas: usize, num_hyps: usize) -> LinearConstraint {
        let mut coeffs = vec![zero(); num_thetas * num_hyps];
        for &h in &self.good {
            coeffs[self.theta * num_hyps + h] = one();
        }
        LinearConstraint::new(coeffs, Relation::Ge, self.min_mass.clone())
    }
}

/// One PL row per environment.
pub fn build_pl_constraints(
    task: &TaskSpec,
    epsilon: &BigRational,
    delta: &BigRational,
) -> Result<Vec<PlConstraint>, FeasibilityError> {
    if delta.is_negative() || *delta > one() {
        return Err(FeasibilityError::Parameter("delta must lie in [0, 1]".into()));
    }
    Ok(epsilon_optimal_sets(task, epsilon)?
        .into_iter()
        .enumerate()
        .map(|(theta, good)| PlConstraint {
            theta,
            good,
            min_mass: one() - delta,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Polytopes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Vec<BigRational>,
    pub relation: Relation,
    pub rhs: BigRational,
}

impl LinearConstraint {
    pub fn new(coeffs: Vec<BigRational>, relation: Relation, rhs: BigRational) -> Self {
        Self {
            coeffs,
            relation,
            rhs,
        }
    }

    pub fn lhs(&self, point: &[BigRational]) -> BigRational {
        self.coeffs
            .iter()
            .zip(point)
            .filter(|(c, _)| !c.is_zero())
            .fold(zero(), |acc, (c, x)| acc + c * x)
    }

    /// Exact check.
    pub fn holds(&self, point: &[BigRational]) -> bool {
        let lhs = self.lhs(point);
        match self.relation {
            Relation::Le => lhs <= self.rhs,
            Relation::Eq => lhs == self.rhs,
            Relation::Ge => lhs >= self.rhs,
        }
    }
}

/// JSON form of one row: `{coeffs, relation, rhs}` with rational strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFile {
    pub coeffs: Vec<String>,
    pub relation: Relation,
    pub rhs: String,
}

impl RowFile {
    pub fn load(&self) -> Result<LinearConstraint, FeasibilityError> {
        Ok(LinearConstraint::new(
            self.coeffs
                .iter()
                .map(|c| parse_rational(c))
                .collect::<Result<_, _>>()?,
            self.relation,
            parse_rational(&self.rhs)?,
        ))
    }

    pub fn from_row(row: &LinearConstraint) -> Self {
        Self {
            coeffs: row.coeffs.iter().map(format_rational).collect(),
            relation: row.relation,
            rhs: format_rational(&row.rhs),
        }
    }
}

/// JSON polytope: extra rows on top of the simplex constraints.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PolytopeFile {
    #[serde(default)]
    pub rows: Vec<RowFile>,
}

/// Rational polytope over kernel coordinates `q[θ·|H| + h]`. Coordinates are
/// nonnegative by construction and every spec carries the simplex rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopeSpec {
    num_thetas: usize,
    num_hyps: usize,
    rows: Vec<LinearConstraint>,
}

impl PolytopeSpec {
    /// Nonnegativity and one normalization row per θ.
    pub fn simplex(num_thetas: usize, num_hyps: usize) -> Self {
        let n = num_thetas * num_hyps;
        let mut rows = Vec::with_capacity(n + num_thetas);
        for i in 0..n {
            let mut coeffs = vec![zero(); n];
            coeffs[i] = one();
            rows.push(LinearConstraint::new(coeffs, Relation::Ge, zero()));
        }
        for t in 0..num_thetas {
            let mut coeffs = vec![zero(); n];
            for h in 0..num_hyps {
                coeffs[t * num_hyps + h] = one();
            }
            rows.push(LinearConstraint::new(coeffs, Relation::Eq, one()));
        }
        Self {
            num_thetas,
            num_hyps,
            rows,
        }
    }

    /// Simplex plus `Q(h | θ) = Q(h | θ_1)`: outputs carry no information.
    pub fn constant_kernel(num_thetas: usize, num_hyps: usize) -> Self {
        let mut spec = Self::simplex(num_thetas, num_hyps);
        let n = num_thetas * num_hyps;
        for t in 1..num_thetas {
            for h in 0..num_hyps {
                let mut coeffs = vec![zero(); n];
                coeffs[t * num_hyps + h] = one();
                coeffs[h] = -one();
                spec.rows.push(LinearConstraint::new(coeffs, Relation::Eq, zero()));
            }
        }
        spec
    }

    /// Simplex plus the rows of `file`.
    pub fn from_file(
        file: &PolytopeFile,
        num_thetas: usize,
        num_hyps: usize,
    ) -> Result<Self, FeasibilityError> {
        let mut spec = Self::simplex(num_thetas, num_hyps);
        for row in &file.rows {
            spec.push(row.load()?)?;
        }
        Ok(spec)
    }

    pub fn push(&mut self, row: LinearConstraint) -> Result<(), FeasibilityError> {
        if row.coeffs.len() != self.num_vars() {
            return Err(FeasibilityError::System(format!(
                "row has {} coefficients for {} variables",
                row.coeffs.len(),
                self.num_vars()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Copy without row `index`.
    pub fn without_row(&self, index: usize) -> Self {
        let mut rows = self.rows.clone();
        rows.remove(index);
        Self {
            num_thetas: self.num_thetas,
            num_hyps: self.num_hyps,
            rows,
        }
    }

    pub fn num_thetas(&self) -> usize {
        self.num_thetas
    }

    pub fn num_hyps(&self) -> usize {
        self.num_hyps
    }

    pub fn num_vars(&self) -> usize {
        self.num_thetas * self.num_hyps
    }

    pub fn rows(&self) -> &[LinearConstraint] {
        &self.rows
    }

    /// Indices of rows beyond the leading simplex block.
    pub fn model_rows(&self) -> std::ops::Range<usize> {
        self.num_vars() + self.num_thetas..self.rows.len()
    }

    pub fn count(&self, relation: Relation) -> usize {
        self.rows.iter().filter(|r| r.relation == relation).count()
    }

    /// Every row holds exactly and every coordinate is nonnegative.
    pub fn satisfied_by(&self, point: &[BigRational]) -> bool {
        point.len() == self.num_vars()
            && point.iter().all(|x| !x.is_negative())
            && self.rows.iter().all(|r| r.holds(point))
    }

    /// Dimension of the affine hull cut out by the equality rows.
    pub fn affine_dimension(&self) -> usize {
        let eqs: Vec<Vec<BigRational>> = self
            .rows
            .iter()
            .filter(|r| r.relation == Relation::Eq)
            .map(|r| r.coeffs.clone())
            .collect();
        self.num_vars() - rank(eqs)
    }

    pub fn to_file(&self) -> PolytopeFile {
        PolytopeFile {
            rows: self.rows.iter().map(RowFile::from_row).collect(),
        }
    }
}

/// Exact rank by Gaussian elimination.
pub fn rank(mut rows: Vec<Vec<BigRational>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let pivot = rows[r][c].clone();
        for i in 0..rows.len() {
            if i != r && !rows[i][c].is_zero() {
                let f = &rows[i][c] / &pivot;
                for j in c..cols {
                    let delta = &f * &rows[r][j];
                    rows[i][j] -= delta;
                }
            }
        }
        r += 1;
    }
    r
}

/// No-signaling correlations `p(a, b | x, y)` as a polytope over kernel
/// coordinates with `θ = (x, y)` and `h = (a, b)`.
pub fn no_signaling_polytope(
    outputs_a: usize,
    outputs_b: usize,
    inputs_x: usize,
    inputs_y: usize,
) -> PolytopeSpec {
    let num_thetas = inputs_x * inputs_y;
    let num_hyps = outputs_a * outputs_b;
    let n = num_thetas * num_hyps;
    let var = |a: usize, b: usize, x: usize, y: usize| (x * inputs_y + y) * num_hyps + a * outputs_b + b;
    let mut spec = PolytopeSpec::simplex(num_thetas, num_hyps);
    // Alice's marginal may not depend on y.
    for a in 0..outputs_a {
        for x in 0..inputs_x {
            for y in 1..inputs_y {
                let mut coeffs = vec![zero(); n];
                for b in 0..outputs_b {
                    coeffs[var(a, b, x, y - 1)] += one();
                    coeffs[var(a, b, x, y)] -= one();
                }
                spec.rows.push(LinearConstraint::new(coeffs, Relation::Eq, zero()));
            }
        }
    }
    // Bob's marginal may not depend on x.
    for b in 0..outputs_b {
        for y in 0..inputs_y {
            for x in 1..inputs_x {
                let mut coeffs = vec![zero(); n];
                for a in 0..outputs_a {
                    coeffs[var(a, b, x - 1, y)] += one();
                    coeffs[var(a, b, x, y)] -= one();
                }
                spec.rows.push(LinearConstraint::new(coeffs, Relation::Eq, zero()));
            }
        }
    }
    spec
}

// ---------------------------------------------------------------------------
// Exact phase-1 simplex
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum LpVerdict {
    Feasible(Kernel<BigRational>),
    /// Carries the strictly positive phase-1 optimum.
    Infeasible(BigRational),
}

impl LpVerdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Self::Feasible(_))
    }

    pub fn witness(&self) -> Option<&Kernel<BigRational>> {
        match self {
            Self::Feasible(k) => Some(k),
            Self::Infeasible(_) => None,
        }
    }

    /// `{verdict, witness?, residual?}`.
    pub fn to_json(&self) -> Value {
        match self {
            Self::Feasible(k) => json!({ "verdict": "feasible", "witness": k }),
            Self::Infeasible(r) => json!({ "verdict": "infeasible", "residual": format_rational(r) }),
        }
    }
}

/// Finds `x ≥ 0` with `A x = b`, or returns the positive phase-1 optimum.
/// Rows must already have `b ≥ 0`. Bland's rule rules out cycling.
fn phase_one(a: &[Vec<BigRational>], b: &[BigRational]) -> Result<Vec<BigRational>, BigRational> {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    let width = n + m;
    let mut tab: Vec<Vec<BigRational>> = a
        .iter()
        .zip(b)
        .enumerate()
        .map(|(i, (row, rhs))| {
            let mut t = row.clone();
            t.extend((0..m).map(|k| if k == i { one() } else { zero() }));
            t.push(rhs.clone());
            t
        })
        .collect();
    let mut basis: Vec<usize> = (n..width).collect();
    // reduced costs of the artificial-sum objective, last entry = −objective
    let mut cost = vec![zero(); width + 1];
    for row in &tab {
        for j in 0..n {
            cost[j] -= &row[j];
        }
        cost[width] -= &row[width];
    }
    while let Some(enter) = (0..width).find(|&j| cost[j].is_negative()) {
        let mut leave: Option<(usize, BigRational)> = None;
        for (i, row) in tab.iter().enumerate() {
            if row[enter].is_positive() {
                let ratio = &row[width] / &row[enter];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => ratio < *lr || (ratio == *lr && basis[i] < basis[*li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (r, _) = leave.expect("phase-1 objective is bounded below");
        let pivot = tab[r][enter].clone();
        for v in tab[r].iter_mut() {
            *v /= &pivot;
        }
        let pivot_row = tab[r].clone();
        for (i, row) in tab.iter_mut().enumerate() {
            if i != r && !row[enter].is_zero() {
                let f = row[enter].clone();
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    if !p.is_zero() {
                        *v -= &f * p;
                    }
                }
            }
        }
        if !cost[enter].is_zero() {
            let f = cost[enter].clone();
            for (v, p) in cost.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v -= &f * p;
                }
            }
        }
        basis[r] = enter;
    }
    let optimum = -cost[width].clone();
    if optimum.is_positive() {
        return Err(optimum);
    }
    let mut x = vec![zero(); n];
    for (i, &j) in basis.iter().enumerate() {
        if j < n {
            x[j] = tab[i][width].clone();
        }
    }
    Ok(x)
}

/// Decides whether some kernel in `poly` satisfies every PL row, exactly.
pub fn lp_feasible(poly: &PolytopeSpec, pl: &[PlConstraint]) -> Result<LpVerdict, FeasibilityError> {
    let n = poly.num_vars();
    if n == 0 {
        return Err(FeasibilityError::System("no variables".into()));
    }
    let mut rows: Vec<LinearConstraint> = Vec::with_capacity(poly.rows.len() + pl.len());
    for (i, r) in poly.rows.iter().enumerate() {
        if r.coeffs.len() != n {
            return Err(FeasibilityError::System(format!(
                "polytope row {i} has {} coefficients for {n} variables",
                r.coeffs.len()
            )));
        }
        rows.push(r.clone());
    }
    for c in pl {
        if c.theta >= poly.num_thetas || c.good.iter().any(|&h| h >= poly.num_hyps) {
            return Err(FeasibilityError::System(format!(
                "PL row for environment {} references an undeclared variable",
                c.theta
            )));
        }
        rows.push(c.to_row(poly.num_thetas, poly.num_hyps));
    }
    // slack for every inequality, then flip rows so the right side is ≥ 0
    let slacks = rows.iter().filter(|r| r.relation != Relation::Eq).count();
    let mut a = Vec::with_capacity(rows.len());
    let mut b = Vec::with_capacity(rows.len());
    let mut next_slack = n;
    for r in &rows {
        let mut coeffs = r.coeffs.clone();
        coeffs.resize(n + slacks, zero());
        match r.relation {
            Relation::Le => coeffs[next_slack] = one(),
            Relation::Ge => coeffs[next_slack] = -one(),
            Relation::Eq => {}
        }
        if r.relation != Relation::Eq {
            next_slack += 1;
        }
        let mut rhs = r.rhs.clone();
        if rhs.is_negative() {
            coeffs.iter_mut().for_each(|c| *c = -c.clone());
            rhs = -rhs;
        }
        a.push(coeffs);
        b.push(rhs);
    }
    match phase_one(&a, &b) {
        Err(optimum) => Ok(LpVerdict::Infeasible(optimum)),
        Ok(mut x) => {
            x.truncate(n);
            debug_assert!(rows.iter().all(|r| r.holds(&x)));
            Ok(LpVerdict::Feasible(Kernel::from_coordinates(&x, poly.num_hyps)?))
        }
    }
}

/// Whether `kernel` satisfies every PL row exactly.
pub fn kernel_satisfies(kernel: &Kernel<BigRational>, pl: &[PlConstraint]) -> bool {
    pl.iter()
        .all(|c| kernel.mass_on(c.theta, &c.good) >= c.min_mass)
}

// ---------------------------------------------------------------------------
// Quantum models: POVM search
// ---------------------------------------------------------------------------

/// Knobs for [`sdp_feasible`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    /// Stop once the PSD iterate violates the linear constraints by less.
    pub tolerance: f64,
    /// A witness must satisfy every constraint within this slack.
    pub verify_tolerance: f64,
    pub max_iterations: usize,
    /// Iterations between witness attempts and stagnation checks.
    pub window: usize,
    /// Residuals below this never count as stagnation.
    pub stagnation_floor: f64,
    /// Relative residual improvement per window below which the search stalls.
    pub stagnation_ratio: f64,
    pub cap: DimCap,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            verify_tolerance: 1e-6,
            max_iterations: 20_000,
            window: 50,
            stagnation_floor: 1e-4,
            stagnation_ratio: 1e-6,
            cap: DimCap::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InfeasibilityCertificate {
    /// Environments with disjoint good sets that no measurement separates
    /// well enough: `2(1 − δ) > 1 + ½‖R_a − R_b‖₁`.
    Helstrom {
        theta_a: usize,
        theta_b: usize,
        required: f64,
        bound: f64,
    },
    /// Projections stopped improving at a positive distance.
    Stagnation { residual: f64, iterations: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SdpVerdict {
    Feasible {
        witness: Povm,
        residual: f64,
        iterations: usize,
    },
    Infeasible(InfeasibilityCertificate),
    Undetermined {
        residual: f64,
        iterations: usize,
    },
}

impl SdpVerdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Self::Feasible { .. })
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Self::Infeasible(_))
    }

    /// `{verdict, witness?, residual?}`.
    pub fn to_json(&self) -> Value {
        match self {
            Self::Feasible {
                witness, residual, ..
            } => json!({
                "verdict": "feasible",
                "witness": PovmFile::from_povm(witness),
                "residual": residual,
            }),
            Self::Infeasible(cert) => {
                let residual = match cert {
                    InfeasibilityCertificate::Stagnation { residual, .. } => Some(*residual),
                    InfeasibilityCertificate::Helstrom { .. } => None,
                };
                json!({ "verdict": "infeasible", "certificate": cert, "residual": residual })
            }
            Self::Undetermined { residual, .. } => json!({ "verdict": "undetermined", "residual": residual }),
        }
    }
}

/// Performance row `Σ_{h ∈ good} tr(M_h R) ≥ target` in the real space of
/// Hermitian `|H|`-tuples.
struct Halfspace {
    good: Vec<bool>,
    state: CMatrix,
    target: f64,
    /// `‖a_T‖²` for the normal projected onto `{Σ X_h = 0}`.
    tangent_norm_sq: f64,
    /// `|G| / |H|`.
    share: f64,
}

impl Halfspace {
    fn value(&self, x: &[CMatrix]) -> f64 {
        x.iter()
            .zip(&self.good)
            .filter(|(_, g)| **g)
            .map(|(m, _)| trace_product(m, &self.state))
            .sum()
    }

    /// Exact projection onto this halfspace intersected with the
    /// completeness subspace, for a point already in the subspace.
    fn project(&self, x: &mut [CMatrix]) -> bool {
        let gap = self.target - self.value(x);
        if gap <= 0.0 || self.tangent_norm_sq == 0.0 {
            return false;
        }
        let step = gap / self.tangent_norm_sq;
        for (m, g) in x.iter_mut().zip(&self.good) {
            let weight = if *g { 1.0 - self.share } else { -self.share };
            *m += self.state.scale(step * weight);
        }
        true
    }
}

fn frobenius_sq(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

fn project_completeness(x: &mut [CMatrix]) {
    let n = x[0].nrows();
    let total = x.iter().fold(CMatrix::zeros(n, n), |acc, m| acc + m);
    let correction = (total - CMatrix::identity(n, n)) / num_complex::Complex64::new(x.len() as f64, 0.0);
    for m in x.iter_mut() {
        *m -= &correction;
    }
}

/// `M_h = S^{-1/2} X_h S^{-1/2}` with `S = Σ X_h`.
fn normalize_to_povm(x: &[CMatrix]) -> Option<Vec<CMatrix>> {
    let n = x[0].nrows();
    let total = x.iter().fold(CMatrix::zeros(n, n), |acc, m| acc + m);
    if hermitian_eigenvalues(&total)[0] <= 1e-12 {
        return None;
    }
    let inv_sqrt = spectral_map(&total, |l| 1.0 / l.sqrt());
    Some(
        x.iter()
            .map(|m| hermitian_part(&(&inv_sqrt * m * &inv_sqrt)))
            .collect(),
    )
}

/// Constraint violation of a PSD tuple: completeness gap plus performance
/// shortfalls, in Euclidean norm.
fn violation(x: &[CMatrix], spaces: &[Halfspace]) -> f64 {
    let n = x[0].nrows();
    let total = x.iter().fold(CMatrix::zeros(n, n), |acc, m| acc + m);
    let shortfall: f64 = spaces
        .iter()
        .map(|s| (s.target - s.value(x)).max(0.0).powi(2))
        .sum();
    (frobenius_sq(&(total - CMatrix::identity(n, n))) + shortfall).sqrt()
}

fn verify_witness(elements: &[CMatrix], spaces: &[Halfspace], tol: f64) -> bool {
    let n = elements[0].nrows();
    let psd = elements
        .iter()
        .all(|m| hermitian_eigenvalues(m)[0] >= -tol);
    let total = elements.iter().fold(CMatrix::zeros(n, n), |acc, m| acc + m);
    let complete = frobenius_sq(&(total - CMatrix::identity(n, n))).sqrt() <= tol;
    psd && complete && spaces.iter().all(|s| s.value(elements) >= s.target - tol)
}

fn pairwise_certificate(
    powers: &[CMatrix],
    good: &[Vec<usize>],
    delta: f64,
) -> Option<InfeasibilityCertificate> {
    let required = 2.0 * (1.0 - delta);
    for a in 0..powers.len() {
        for b in a + 1..powers.len() {
            if good[a].iter().any(|h| good[b].contains(h)) {
                continue;
            }
            let bound = 1.0 + 0.5 * trace_norm(&(&powers[a] - &powers[b]));
            // margin keeps round-off in the trace norm from deciding
            if required > bound + 1e-12 {
                return Some(InfeasibilityCertificate::Helstrom {
                    theta_a: a,
                    theta_b: b,
                    required,
                    bound,
                });
            }
        }
    }
    None
}

/// Searches for a POVM `{M_h}` on `d` copies meeting every PL row.
///
/// Alternates between the PSD cone (per-element eigenvalue clipping) and the
/// completeness subspace cut by the performance halfspaces. A candidate is
/// renormalized into an exact POVM and reported only if it verifies within
/// `verify_tolerance`.
pub fn sdp_feasible(
    states: &[DensityMatrix],
    task: &TaskSpec,
    epsilon: f64,
    delta: f64,
    copies: usize,
    opts: &SdpOptions,
) -> Result<SdpVerdict, FeasibilityError> {
    if states.len() != task.num_thetas() {
        return Err(FeasibilityError::Task(format!(
            "{} states for {} environments",
            states.len(),
            task.num_thetas()
        )));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(FeasibilityError::Parameter("delta must lie in [0, 1]".into()));
    }
    let dim = states[0].dim();
    if let Some(s) = states.iter().find(|s| s.dim() != dim) {
        return Err(QuantumError::DimensionMismatch {
            expected: dim,
            found: s.dim(),
        }
        .into());
    }
    let powers = states
        .iter()
        .map(|s| tensor_power(s, copies, opts.cap).map(DensityMatrix::into_matrix))
        .collect::<Result<Vec<_>, _>>()?;
    let good = epsilon_optimal_sets(task, &rational_from_f64(epsilon)?)?;
    if let Some(cert) = pairwise_certificate(&powers, &good, delta) {
        return Ok(SdpVerdict::Infeasible(cert));
    }

    let nh = task.num_hyps();
    let n = powers[0].nrows();
    let spaces: Vec<Halfspace> = powers
        .iter()
        .zip(&good)
        .map(|(state, g)| {
            let share = g.len() as f64 / nh as f64;
            Halfspace {
                good: (0..nh).map(|h| g.contains(&h)).collect(),
                tangent_norm_sq: frobenius_sq(state) * g.len() as f64 * (1.0 - share),
                state: state.clone(),
                target: 1.0 - delta,
                share,
            }
        })
        .collect();

    let mut x: Vec<CMatrix> = vec![CMatrix::identity(n, n).unscale(nh as f64); nh];
    let mut residual = f64::INFINITY;
    let mut window_start = f64::INFINITY;
    let attempt = |x: &[CMatrix]| {
        normalize_to_povm(x).filter(|m| verify_witness(m, &spaces, opts.verify_tolerance))
    };
    for iteration in 1..=opts.max_iterations {
        // affine step: completeness, then cyclic halfspace projections
        let mut y = x.clone();
        project_completeness(&mut y);
        for _ in 0..100 {
            let mut moved = false;
            for s in &spaces {
                moved |= s.project(&mut y);
            }
            if !moved {
                break;
            }
        }
        x = y.iter().map(project_psd).collect();
        residual = violation(&x, &spaces);
        let converged = residual < opts.tolerance;
        if converged || iteration % opts.window == 0 {
            if let Some(elements) = attempt(&x) {
                return Ok(SdpVerdict::Feasible {
                    witness: Povm::new(elements)?,
                    residual,
                    iterations: iteration,
                });
            }
            if converged {
                return Ok(SdpVerdict::Undetermined {
                    residual,
                    iterations: iteration,
                });
            }
            if residual > opts.stagnation_floor
                && window_start - residual < opts.stagnation_ratio * residual
            {
                return Ok(SdpVerdict::Infeasible(InfeasibilityCertificate::Stagnation {
                    residual,
                    iterations: iteration,
                }));
            }
            window_start = residual;
        }
    }
    Ok(SdpVerdict::Undetermined {
        residual,
        iterations: opts.max_iterations,
    })
}

/// Smallest δ at which [`sdp_feasible`] finds a witness, to within `tol`.
/// Anything short of `Feasible` counts against a δ.
pub fn sdp_threshold(
    states: &[DensityMatrix],
    task: &TaskSpec,
    epsilon: f64,
    copies: usize,
    opts: &SdpOptions,
    tol: f64,
) -> Result<f64, FeasibilityError> {
    let feasible = |delta: f64| -> Result<bool, FeasibilityError> {
        Ok(sdp_feasible(states, task, epsilon, delta, copies, opts)?.is_feasible())
    };
    if feasible(0.0)? {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
