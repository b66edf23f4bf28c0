//! Finite-dimensional quantum environments and measurements.
//!
//! Environments are density matrices `ρ_θ`; a protocol with `d` copies is a
//! POVM `{M_h}` on the `d`-fold tensor power, inducing the kernel
//! `Q(h | θ) = tr(M_h ρ_θ^{⊗d})`. Binary discrimination is limited by the
//! Helstrom bound `1 + ½‖ρ0^{⊗d} − ρ1^{⊗d}‖₁`, attained by projecting onto
//! the positive part of the difference.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{Kernel, KernelError};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Hermiticity tolerance for density matrices.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Smallest eigenvalue accepted as nonnegative.
pub const PSD_TOL: f64 = 1e-10;
/// Trace tolerance for density matrices.
pub const TRACE_TOL: f64 = 1e-12;
/// Completeness and positivity tolerance for POVM elements.
pub const POVM_TOL: f64 = 1e-10;
/// Eigenvalues of `ρ0 − ρ1` above this join the Helstrom projector.
pub const SPECTRAL_TOL: f64 = 1e-10;
/// Default cap on the dimension of `d`-copy operators.
pub const DEFAULT_DIM_CAP: usize = 1 << 10;
/// Environment variable overriding the dimension cap.
pub const DIM_CAP_ENV: &str = "PLAB_DIM_CAP";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("tensor dimension {dim}^{copies} exceeds the cap {cap}")]
    CapExceeded { dim: usize, copies: usize, cap: usize },
    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("trace is {0}, expected 1")]
    NotNormalized(f64),
    #[error("invalid POVM: {0}")]
    InvalidPovm(String),
    #[error("invalid correlation table: {0}")]
    InvalidTable(String),
    #[error("degenerate overlap: {0}")]
    Degenerate(String),
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Upper bound on `dim^d` for tensor-power operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimCap(pub usize);

impl Default for DimCap {
    fn default() -> Self {
        Self(DEFAULT_DIM_CAP)
    }
}

impl DimCap {
    /// Reads `PLAB_DIM_CAP`, falling back to the default.
    pub fn from_env() -> Self {
        std::env::var(DIM_CAP_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .map_or_else(Self::default, Self)
    }

    pub fn check(self, dim: usize, copies: usize) -> Result<usize, QuantumError> {
        let err = QuantumError::CapExceeded {
            dim,
            copies,
            cap: self.0,
        };
        let total = dim.checked_pow(copies as u32).ok_or(err.clone())?;
        if total > self.0 {
            return Err(err);
        }
        Ok(total)
    }
}

// ---------------------------------------------------------------------------
// Dense Hermitian helpers
// ---------------------------------------------------------------------------

pub fn adjoint(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

/// Largest entrywise deviation from Hermiticity.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let diff = m - m.adjoint();
    diff.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues (ascending) and matching eigenvector columns of a Hermitian
/// matrix; the input is symmetrized first.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut values: Vec<f64> = hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// `‖A‖₁` for Hermitian `A`: the sum of absolute eigenvalues.
pub fn trace_norm(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).iter().map(|l| l.abs()).sum()
}

/// Operator norm of a Hermitian matrix.
pub fn operator_norm(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m)
        .iter()
        .map(|l| l.abs())
        .fold(0.0, f64::max)
}

/// `V diag(f(λ)) V†`.
pub fn spectral_map(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (values, vectors) = hermitian_eigen(m);
    let mut scaled = vectors.clone();
    for (j, &l) in values.iter().enumerate() {
        let s = f(l);
        scaled.column_mut(j).scale_mut(s);
    }
    &scaled * vectors.adjoint()
}

/// Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped).
pub fn project_psd(m: &CMatrix) -> CMatrix {
    spectral_map(m, |l| l.max(0.0))
}

/// Real part of `tr(A B)`.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

pub fn trace_re(m: &CMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

fn check_square(m: &CMatrix) -> Result<usize, QuantumError> {
    if m.nrows() != m.ncols() {
        return Err(QuantumError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

fn kron_power(m: &CMatrix, d: usize) -> CMatrix {
    let mut out = m.clone();
    for _ in 1..d {
        out = out.kronecker(m);
    }
    out
}

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self, QuantumError> {
        check_square(&matrix)?;
        let dev = hermitian_deviation(&matrix);
        if dev > HERMITIAN_TOL {
            return Err(QuantumError::NotHermitian(dev));
        }
        let tr = trace_re(&matrix);
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(QuantumError::NotNormalized(tr));
        }
        let min = hermitian_eigenvalues(&matrix)[0];
        if min < -PSD_TOL {
            return Err(QuantumError::NotPositive(min));
        }
        Ok(Self { matrix })
    }

    /// `|ψ⟩⟨ψ|` for the normalized `psi`.
    pub fn pure(psi: &CVector) -> Result<Self, QuantumError> {
        let norm = psi.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(QuantumError::Parameter("zero state vector".into()));
        }
        let v = psi.unscale(norm);
        Ok(Self {
            matrix: &v * v.adjoint(),
        })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim).unscale(dim as f64),
        }
    }

    /// Computational basis state `|k⟩⟨k|`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut m = CMatrix::zeros(dim, dim);
        m[(k, k)] = Complex64::new(1.0, 0.0);
        Self { matrix: m }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn purity(&self) -> f64 {
        trace_product(&self.matrix, &self.matrix)
    }

    pub fn rank(&self, tol: f64) -> usize {
        hermitian_eigenvalues(&self.matrix)
            .iter()
            .filter(|&&l| l > tol)
            .count()
    }

    /// `ρ ⊗ σ`.
    pub fn tensor(&self, other: &Self) -> Self {
        Self {
            matrix: self.matrix.kronecker(&other.matrix),
        }
    }
}

/// `ρ^{⊗d}`, refusing operators larger than `cap`.
pub fn tensor_power(rho: &DensityMatrix, d: usize, cap: DimCap) -> Result<DensityMatrix, QuantumError> {
    if d == 0 {
        return Err(QuantumError::Parameter("at least one copy is required".into()));
    }
    cap.check(rho.dim(), d)?;
    Ok(DensityMatrix {
        matrix: kron_power(&rho.matrix, d),
    })
}

/// `‖ρ − σ‖₁`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64, QuantumError> {
    if rho.dim() != sigma.dim() {
        return Err(QuantumError::DimensionMismatch {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    Ok(trace_norm(&(&rho.matrix - &sigma.matrix)))
}

/// `2·√(1 − γ^{2d})`, the trace norm between `d` copies of two pure states
/// with overlap `γ = |⟨ψ|φ⟩| ∈ [0, 1]`.
pub fn pure_distance_formula(gamma: f64, d: usize) -> f64 {
    2.0 * (1.0 - gamma.powi(2 * d as i32)).max(0.0).sqrt()
}

/// `|⟨ψ|φ⟩|` for normalized copies of the inputs.
pub fn overlap(psi: &CVector, phi: &CVector) -> f64 {
    psi.dotc(phi).norm() / (psi.norm() * phi.norm())
}

/// `|0⟩` and `γ|0⟩ + √(1−γ²)|1⟩` on a qubit.
pub fn pure_pair_with_overlap(gamma: f64) -> Result<(DensityMatrix, DensityMatrix), QuantumError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(QuantumError::Parameter(format!("overlap {gamma} outside [0, 1]")));
    }
    let psi = CVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
    let phi = CVector::from_vec(vec![
        Complex64::new(gamma, 0.0),
        Complex64::new((1.0 - gamma * gamma).max(0.0).sqrt(), 0.0),
    ]);
    Ok((DensityMatrix::pure(&psi)?, DensityMatrix::pure(&phi)?))
}

// ---------------------------------------------------------------------------
// Measurements
// ---------------------------------------------------------------------------

/// Positive operators summing to the identity; element `h` is outcome `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    elements: Vec<CMatrix>,
}

impl Povm {
    pub fn new(elements: Vec<CMatrix>) -> Result<Self, QuantumError> {
        let first = elements
            .first()
            .ok_or_else(|| QuantumError::InvalidPovm("no elements".into()))?;
        let dim = check_square(first)?;
        let mut total = CMatrix::zeros(dim, dim);
        for (h, m) in elements.iter().enumerate() {
            if check_square(m)? != dim {
                return Err(QuantumError::DimensionMismatch {
                    expected: dim,
                    found: m.nrows(),
                });
            }
            let dev = hermitian_deviation(m);
            if dev > POVM_TOL {
                return Err(QuantumError::InvalidPovm(format!(
                    "element {h} is not Hermitian (deviation {dev:e})"
                )));
            }
            let min = hermitian_eigenvalues(m)[0];
            if min < -POVM_TOL {
                return Err(QuantumError::InvalidPovm(format!(
                    "element {h} has eigenvalue {min:e}"
                )));
            }
            total += m;
        }
        let gap = operator_norm(&(total - CMatrix::identity(dim, dim)));
        if gap > POVM_TOL {
            return Err(QuantumError::InvalidPovm(format!(
                "elements sum to identity only within {gap:e}"
            )));
        }
        Ok(Self { elements })
    }

    /// Projective measurement in the computational basis.
    pub fn computational(dim: usize) -> Self {
        Self {
            elements: (0..dim)
                .map(|k| DensityMatrix::basis(dim, k).into_matrix())
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.elements[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    /// Born-rule outcome distribution `tr(M_h ρ)`.
    pub fn probabilities(&self, rho: &CMatrix) -> Result<Vec<f64>, QuantumError> {
        if rho.nrows() != self.dim() {
            return Err(QuantumError::DimensionMismatch {
                expected: self.dim(),
                found: rho.nrows(),
            });
        }
        Ok(self
            .elements
            .iter()
            .map(|m| trace_product(m, rho))
            .collect())
    }
}

/// Helstrom measurement together with the quantities it is judged by.
#[derive(Debug, Clone)]
pub struct HelstromOutcome {
    pub povm: Povm,
    /// `‖ρ0^{⊗d} − ρ1^{⊗d}‖₁`
    pub trace_norm: f64,
    /// `1 + ½‖Δ‖₁`
    pub bound: f64,
    /// `tr(M0 ρ0^{⊗d}) + tr(M1 ρ1^{⊗d})`
    pub achieved: f64,
    /// `tr(M0 ρ0^{⊗d})` and `tr(M1 ρ1^{⊗d})`
    pub per_state_success: [f64; 2],
}

fn paired_powers(
    rho0: &DensityMatrix,
    rho1: &DensityMatrix,
    d: usize,
    cap: DimCap,
) -> Result<(CMatrix, CMatrix), QuantumError> {
    if rho0.dim() != rho1.dim() {
        return Err(QuantumError::DimensionMismatch {
            expected: rho0.dim(),
            found: rho1.dim(),
        });
    }
    Ok((
        tensor_power(rho0, d, cap)?.into_matrix(),
        tensor_power(rho1, d, cap)?.into_matrix(),
    ))
}

/// `M0` projects onto the eigenvectors of `Δ = ρ0^{⊗d} − ρ1^{⊗d}` with
/// eigenvalue above [`SPECTRAL_TOL`]; `M1 = I − M0`.
pub fn helstrom(
    rho0: &DensityMatrix,
    rho1: &DensityMatrix,
    d: usize,
    cap: DimCap,
) -> Result<HelstromOutcome, QuantumError> {
    let (r0, r1) = paired_powers(rho0, rho1, d, cap)?;
    let delta = &r0 - &r1;
    let (values, vectors) = hermitian_eigen(&delta);
    let n = delta.nrows();
    let mut m0 = CMatrix::zeros(n, n);
    for (j, &l) in values.iter().enumerate() {
        if l > SPECTRAL_TOL {
            let v = vectors.column(j);
            m0 += &v * v.adjoint();
        }
    }
    let m1 = CMatrix::identity(n, n) - &m0;
    let trace_norm: f64 = values.iter().map(|l| l.abs()).sum();
    let s0 = trace_product(&m0, &r0);
    let s1 = trace_product(&m1, &r1);
    Ok(HelstromOutcome {
        povm: Povm {
            elements: vec![m0, m1],
        },
        trace_norm,
        bound: 1.0 + 0.5 * trace_norm,
        achieved: s0 + s1,
        per_state_success: [s0, s1],
    })
}

pub fn helstrom_povm(
    rho0: &DensityMatrix,
    rho1: &DensityMatrix,
    d: usize,
    cap: DimCap,
) -> Result<Povm, QuantumError> {
    helstrom(rho0, rho1, d, cap).map(|h| h.povm)
}

/// `1 + ½‖ρ0^{⊗d} − ρ1^{⊗d}‖₁`.
pub fn helstrom_bound(
    rho0: &DensityMatrix,
    rho1: &DensityMatrix,
    d: usize,
    cap: DimCap,
) -> Result<f64, QuantumError> {
    let (r0, r1) = paired_powers(rho0, rho1, d, cap)?;
    Ok(1.0 + 0.5 * trace_norm(&(r0 - r1)))
}

/// `tr(M0 ρ0^{⊗d}) + tr(M1 ρ1^{⊗d})` for a two-outcome POVM.
pub fn success_sum(
    povm: &Povm,
    rho0: &DensityMatrix,
    rho1: &DensityMatrix,
    d: usize,
    cap: DimCap,
) -> Result<f64, QuantumError> {
    if povm.len() != 2 {
        return Err(QuantumError::InvalidPovm(format!(
            "binary discrimination needs 2 outcomes, got {}",
            povm.len()
        )));
    }
    let (r0, r1) = paired_powers(rho0, rho1, d, cap)?;
    Ok(povm.probabilities(&r0)?[0] + povm.probabilities(&r1)?[1])
}

/// `Q(h | θ) = tr(M_h ρ_θ^{⊗d})`.
pub fn born_kernel(
    povm: &Povm,
    states: &[DensityMatrix],
    d: usize,
    cap: DimCap,
) -> Result<Kernel<f64>, QuantumError> {
    let rows = states
        .iter()
        .map(|rho| {
            let power = tensor_power(rho, d, cap)?;
            let probs = povm.probabilities(power.matrix())?;
            // round-off below the POVM tolerance is not a negative probability
            Ok(probs
                .into_iter()
                .map(|q| if q < 0.0 && q > -POVM_TOL { 0.0 } else { q })
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>, QuantumError>>()?;
    Ok(Kernel::new(rows)?)
}

// ---------------------------------------------------------------------------
// Copy complexity
// ---------------------------------------------------------------------------

/// Smallest two-sided error compatible with `d` copies of pure states of
/// overlap `γ`: `(1 − √(1−γ^{2d})) / 2`.
pub fn delta_min(gamma: f64, d: usize) -> Result<f64, QuantumError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(QuantumError::Parameter(format!("overlap {gamma} outside [0, 1]")));
    }
    if d == 0 {
        return Err(QuantumError::Parameter("at least one copy is required".into()));
    }
    Ok((1.0 - (1.0 - gamma.powi(2 * d as i32)).max(0.0).sqrt()) / 2.0)
}

/// Fewest copies allowing two-sided error `δ`:
/// smallest integer `≥ ln(1/(4δ(1−δ))) / (−2 ln γ)`.
pub fn d_min(gamma: f64, delta: f64) -> Result<usize, QuantumError> {
    if gamma <= 0.0 {
        return Err(QuantumError::Degenerate(
            "orthogonal states are distinguished without error from a single copy".into(),
        ));
    }
    if gamma >= 1.0 {
        return Err(QuantumError::Degenerate(
            "identical states can never be told apart".into(),
        ));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(QuantumError::Parameter(format!("delta {delta} outside (0, 1/2)")));
    }
    let bound = (1.0 / (4.0 * delta * (1.0 - delta))).ln() / (-2.0 * gamma.ln());
    Ok(((bound * (1.0 - 1e-12)).ceil() as usize).max(1))
}

/// Both copy-complexity quantities for one `(γ, d, δ)` point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscriminationBounds {
    pub gamma: f64,
    pub copies: usize,
    pub delta: f64,
    pub delta_min: f64,
    pub d_min: Option<usize>,
}

pub fn discrimination_bounds(gamma: f64, copies: usize, delta: f64) -> Result<DiscriminationBounds, QuantumError> {
    Ok(DiscriminationBounds {
        gamma,
        copies,
        delta,
        delta_min: delta_min(gamma, copies)?,
        d_min: d_min(gamma, delta).ok(),
    })
}

// ---------------------------------------------------------------------------
// Bipartite correlations
// ---------------------------------------------------------------------------

/// `p(a, b | x, y)` over finite alphabets.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTable {
    shape: [usize; 4],
    p: Vec<f64>,
}

/// Tolerance on per-setting normalization.
pub const TABLE_TOL: f64 = 1e-12;

impl CorrelationTable {
    /// Builds `p[a][b][x][y] = f(a, b, x, y)` and validates it.
    pub fn from_fn(
        outputs_a: usize,
        outputs_b: usize,
        inputs_x: usize,
        inputs_y: usize,
        f: impl Fn(usize, usize, usize, usize) -> f64,
    ) -> Result<Self, QuantumError> {
        let shape = [outputs_a, outputs_b, inputs_x, inputs_y];
        if shape.contains(&0) {
            return Err(QuantumError::InvalidTable("empty alphabet".into()));
        }
        let mut p = Vec::with_capacity(shape.iter().product());
        for a in 0..outputs_a {
            for b in 0..outputs_b {
                for x in 0..inputs_x {
                    for y in 0..inputs_y {
                        p.push(f(a, b, x, y));
                    }
                }
            }
        }
        let table = Self { shape, p };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<(), QuantumError> {
        let [na, nb, nx, ny] = self.shape;
        if let Some(v) = self.p.iter().find(|v| !v.is_finite() || **v < -TABLE_TOL) {
            return Err(QuantumError::InvalidTable(format!("entry {v} is negative")));
        }
        for x in 0..nx {
            for y in 0..ny {
                let total: f64 = (0..na)
                    .flat_map(|a| (0..nb).map(move |b| (a, b)))
                    .map(|(a, b)| self.get(a, b, x, y))
                    .sum();
                if (total - 1.0).abs() > TABLE_TOL {
                    return Err(QuantumError::InvalidTable(format!(
                        "setting ({x}, {y}) sums to {total}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `[|A|, |B|, |X|, |Y|]`.
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn get(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        let [_, nb, nx, ny] = self.shape;
        self.p[((a * nb + b) * nx + x) * ny + y]
    }

    /// Entries in `(a, b, x, y)` row-major order.
    pub fn values(&self) -> &[f64] {
        &self.p
    }

    /// `Σ_b p(a, b | x, y)`.
    pub fn alice_marginal(&self, a: usize, x: usize, y: usize) -> f64 {
        (0..self.shape[1]).map(|b| self.get(a, b, x, y)).sum()
    }

    /// `Σ_a p(a, b | x, y)`.
    pub fn bob_marginal(&self, b: usize, x: usize, y: usize) -> f64 {
        (0..self.shape[0]).map(|a| self.get(a, b, x, y)).sum()
    }
}

/// `p(a, b | x, y) = tr((M_a^x ⊗ N_b^y) ρ_AB)`.
pub fn quantum_correlation(
    rho_ab: &DensityMatrix,
    alice: &[Povm],
    bob: &[Povm],
) -> Result<CorrelationTable, QuantumError> {
    let uniform = |side: &str, povms: &[Povm]| -> Result<(usize, usize), QuantumError> {
        let first = povms
            .first()
            .ok_or_else(|| QuantumError::InvalidPovm(format!("{side} has no settings")))?;
        for m in povms {
            if m.dim() != first.dim() || m.len() != first.len() {
                return Err(QuantumError::InvalidPovm(format!(
                    "{side}'s settings differ in dimension or outcome count"
                )));
            }
        }
        Ok((first.dim(), first.len()))
    };
    let (dim_a, na) = uniform("alice", alice)?;
    let (dim_b, nb) = uniform("bob", bob)?;
    if dim_a * dim_b != rho_ab.dim() {
        return Err(QuantumError::DimensionMismatch {
            expected: dim_a * dim_b,
            found: rho_ab.dim(),
        });
    }
    let mut values = vec![0.0; na * nb * alice.len() * bob.len()];
    for (x, ma) in alice.iter().enumerate() {
        for (y, nb_povm) in bob.iter().enumerate() {
            for (a, m) in ma.elements().iter().enumerate() {
                for (b, n) in nb_povm.elements().iter().enumerate() {
                    let joint = m.kronecker(n);
                    let v = trace_product(&joint, rho_ab.matrix());
                    values[((a * nb + b) * alice.len() + x) * bob.len() + y] =
                        if v < 0.0 && v > -POVM_TOL { 0.0 } else { v };
                }
            }
        }
    }
    let shape = [na, nb, alice.len(), bob.len()];
    let table = CorrelationTable { shape, p: values };
    table.validate()?;
    Ok(table)
}

/// Result of a no-signaling check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoSignalingVerdict {
    pub passes: bool,
    /// Largest spread of a marginal across the other party's inputs.
    pub max_violation: f64,
    /// Human-readable location of the worst spread, if nonzero.
    pub worst: Option<String>,
}

/// Checks that Bob's marginals do not depend on `x` and Alice's marginals do
/// not depend on `y`, within `tol`.
pub fn check_no_signaling(table: &CorrelationTable, tol: f64) -> NoSignalingVerdict {
    let [na, nb, nx, ny] = table.shape();
    let mut max_violation = 0.0;
    let mut worst = None;
    let spread = |values: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        hi - lo
    };
    for b in 0..nb {
        for y in 0..ny {
            let s = spread(&mut (0..nx).map(|x| table.bob_marginal(b, x, y)));
            if s > max_violation {
                max_violation = s;
                worst = Some(format!("Bob's marginal for b={b}, y={y} varies with x"));
            }
        }
    }
    for a in 0..na {
        for x in 0..nx {
            let s = spread(&mut (0..ny).map(|y| table.alice_marginal(a, x, y)));
            if s > max_violation {
                max_violation = s;
                worst = Some(format!("Alice's marginal for a={a}, x={x} varies with y"));
            }
        }
    }
    NoSignalingVerdict {
        passes: max_violation <= tol,
        max_violation,
        worst,
    }
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

fn gaussian_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-random unit vector (normalized complex Gaussian).
pub fn haar_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CVector {
    let v = CVector::from_fn(dim, |_, _| gaussian_complex(rng));
    let n = v.norm();
    v.unscale(n)
}

pub fn random_pure<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
    DensityMatrix::pure(&haar_state(dim, rng)).expect("nonzero Gaussian vector")
}

/// Induced mixed state `G G† / tr(G G†)` with `G` a `dim × rank` Ginibre matrix.
pub fn random_mixed<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> DensityMatrix {
    let g = CMatrix::from_fn(dim, rank.max(1), |_, _| gaussian_complex(rng));
    let m = &g * g.adjoint();
    let tr = trace_re(&m);
    DensityMatrix {
        matrix: hermitian_part(&m.unscale(tr)),
    }
}

/// Random POVM: `M_h = S^{-1/2} G_h S^{-1/2}` with `G_h = A_h A_h†` Ginibre
/// blocks and `S = Σ G_h`.
pub fn random_povm<R: Rng + ?Sized>(dim: usize, outcomes: usize, rng: &mut R) -> Povm {
    let blocks: Vec<CMatrix> = (0..outcomes.max(1))
        .map(|_| {
            let a = CMatrix::from_fn(dim, dim, |_, _| gaussian_complex(rng));
            &a * a.adjoint()
        })
        .collect();
    let total = blocks.iter().fold(CMatrix::zeros(dim, dim), |acc, g| acc + g);
    let inv_sqrt = spectral_map(&total, |l| 1.0 / l.sqrt());
    let elements = blocks
        .iter()
        .map(|g| hermitian_part(&(&inv_sqrt * g * &inv_sqrt)))
        .collect();
    Povm { elements }
}

/// Random two-outcome POVM `{E, I − E}` with `E` having a uniformly random
/// spectrum in `[0, 1]` and Haar-ish eigenbasis.
pub fn random_binary_povm<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Povm {
    let basis = random_mixed(dim, dim, rng).into_matrix();
    let (_, vectors) = hermitian_eigen(&basis);
    let mut scaled = vectors.clone();
    for j in 0..dim {
        let s: f64 = rng.random();
        scaled.column_mut(j).scale_mut(s);
    }
    let e = hermitian_part(&(&scaled * vectors.adjoint()));
    let rest = CMatrix::identity(dim, dim) - &e;
    Povm {
        elements: vec![e, rest],
    }
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Complex matrix as `{dim, entries: [[re, im], …]}` in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

impl MatrixFile {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let dim = m.nrows();
        let entries = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| [m[(i, j)].re, m[(i, j)].im])
            .collect();
        Self { dim, entries }
    }

    pub fn to_matrix(&self) -> Result<CMatrix, QuantumError> {
        if self.entries.len() != self.dim * self.dim {
            return Err(QuantumError::DimensionMismatch {
                expected: self.dim * self.dim,
                found: self.entries.len(),
            });
        }
        Ok(CMatrix::from_row_iterator(
            self.dim,
            self.dim,
            self.entries.iter().map(|[re, im]| Complex64::new(*re, *im)),
        ))
    }
}

/// A state file is a single matrix.
pub type StateFile = MatrixFile;

impl StateFile {
    pub fn to_state(&self) -> Result<DensityMatrix, QuantumError> {
        DensityMatrix::new(self.to_matrix()?)
    }
}

/// POVM file: `{dim, elements: [[[re, im], …], …]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovmFile {
    pub dim: usize,
    pub elements: Vec<Vec<[f64; 2]>>,
}

impl PovmFile {
    pub fn from_povm(povm: &Povm) -> Self {
        Self {
            dim: povm.dim(),
            elements: povm
                .elements()
                .iter()
                .map(|m| MatrixFile::from_matrix(m).entries)
                .collect(),
        }
    }

    pub fn to_povm(&self) -> Result<Povm, QuantumError> {
        let elements = self
            .elements
            .iter()
            .map(|entries| {
                MatrixFile {
                    dim: self.dim,
                    entries: entries.clone(),
                }
                .to_matrix()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Povm::new(elements)
    }
}
