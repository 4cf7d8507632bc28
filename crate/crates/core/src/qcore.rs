//! State algebra of the superdense teleportation protocol.
//!
//! Basis ordering for a single ququart is fixed everywhere in this crate as
//!
//! | index | label |
//! |-------|-------|
//! | 0     | `Ht1` |
//! | 1     | `Vt1` |
//! | 2     | `Ht2` |
//! | 3     | `Vt2` |
//!
//! and two-photon operators are ordered Charles (or Alice's analyzer side)
//! first, Bob second: joint index `4·c + b`.
//!
//! When two kets are compared "up to global phase" the first amplitude with
//! non-negligible modulus is rotated onto the positive real axis.

use std::f64::consts::{PI, TAU};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, CMatrix, CVector, ONE, ZERO};

pub const NORM_TOLERANCE: f64 = 1e-12;
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;
pub const TRACE_TOLERANCE: f64 = 1e-10;
pub const EIGEN_TOLERANCE: f64 = 1e-10;
/// Coherences at or below this modulus carry no usable phase.
pub const COHERENCE_TOLERANCE: f64 = 1e-6;

pub const QUQUART_LABELS: [&str; 4] = ["Ht1", "Vt1", "Ht2", "Vt2"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QcoreError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("operator is not Hermitian (defect {0:e})")]
    NotHermitian(f64),
    #[error("operator trace is {0}, expected 1")]
    BadTrace(f64),
    #[error("operator has negative eigenvalue {0:e}")]
    NotPositive(f64),
    #[error("operator is not square ({0}×{1})")]
    NotSquare(usize, usize),
    #[error("phase of basis term {0} is undefined (coherence {1:e})")]
    UndefinedPhase(usize, f64),
    #[error("empty input")]
    Empty,
}

pub type Result<T> = std::result::Result<T, QcoreError>;

/// Reduces an angle to `[0, 2π)`.
pub fn wrap_2pi(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Reduces an angle to `(−π, π]`.
pub fn wrap_pi(angle: f64) -> f64 {
    let r = wrap_2pi(angle);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

fn default_labels(dim: usize) -> Vec<String> {
    match dim {
        4 => QUQUART_LABELS.iter().map(|s| s.to_string()).collect(),
        16 => QUQUART_LABELS.iter().flat_map(|c| QUQUART_LABELS.iter().map(move |b| format!("{c}⊗{b}"))).collect(),
        _ => (0..dim).map(|i| i.to_string()).collect(),
    }
}

/// A normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
    labels: Vec<String>,
}

impl StateVector {
    /// Wraps amplitudes that are already normalized to within `1e-12`.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(QcoreError::Empty);
        }
        let norm2: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > NORM_TOLERANCE {
            return Err(QcoreError::NotNormalized(norm2));
        }
        let labels = default_labels(amplitudes.len());
        Ok(Self { amplitudes: CVector::from_vec(amplitudes), labels })
    }

    /// Normalizes arbitrary non-zero amplitudes.
    pub fn normalized(amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if amplitudes.is_empty() || norm == 0.0 {
            return Err(QcoreError::Empty);
        }
        Self::new(amplitudes.into_iter().map(|a| a / norm).collect())
    }

    pub fn from_vector(v: CVector) -> Result<Self> {
        Self::normalized(v.iter().copied().collect())
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn density(&self) -> DensityOperator {
        DensityOperator::from_pure(self)
    }

    /// Copy with the first significant amplitude made real and positive.
    pub fn canonical_phase(&self) -> StateVector {
        let pivot = self.amplitudes.iter().find(|a| a.norm() > 1e-9).copied().unwrap_or(ONE);
        let rot = pivot.conj() / pivot.norm();
        StateVector { amplitudes: self.amplitudes.map(|a| a * rot), labels: self.labels.clone() }
    }

    /// True when the states agree up to a global phase.
    pub fn approx_eq_up_to_phase(&self, other: &StateVector, tol: f64) -> bool {
        self.dim() == other.dim()
            && self
                .canonical_phase()
                .amplitudes
                .iter()
                .zip(other.canonical_phase().amplitudes.iter())
                .all(|(a, b)| (a - b).norm() <= tol)
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .amplitudes
            .iter()
            .zip(&self.labels)
            .filter(|(a, _)| a.norm() > 1e-12)
            .map(|(a, l)| format!("({:.4}{:+.4}i)|{l}⟩", a.re, a.im))
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

/// A Hermitian, positive semidefinite, unit-trace operator.
///
/// Serializes as `{"dim": d, "re": [[..]], "im": [[..]]}` with row-major
/// nested arrays; deserialization re-validates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensityJson", into = "DensityJson")]
pub struct DensityOperator {
    matrix: CMatrix,
}

#[derive(Serialize, Deserialize)]
struct DensityJson {
    dim: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl From<DensityOperator> for DensityJson {
    fn from(rho: DensityOperator) -> Self {
        let d = rho.dim();
        let part =
            |f: fn(&Complex64) -> f64| (0..d).map(|i| (0..d).map(|j| f(&rho.matrix[(i, j)])).collect()).collect();
        Self { dim: d, re: part(|z| z.re), im: part(|z| z.im) }
    }
}

impl TryFrom<DensityJson> for DensityOperator {
    type Error = QcoreError;

    fn try_from(j: DensityJson) -> Result<Self> {
        let d = j.dim;
        let shape_ok = |m: &Vec<Vec<f64>>| m.len() == d && m.iter().all(|r| r.len() == d);
        if !shape_ok(&j.re) || !shape_ok(&j.im) {
            return Err(QcoreError::DimensionMismatch { expected: d, got: j.re.len() });
        }
        DensityOperator::new(CMatrix::from_fn(d, d, |r, c| Complex64::new(j.re[r][c], j.im[r][c])))
    }
}

impl DensityOperator {
    /// Validates and wraps a matrix. The stored matrix is the exact Hermitian
    /// part of the input.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(QcoreError::NotSquare(matrix.nrows(), matrix.ncols()));
        }
        if matrix.nrows() == 0 {
            return Err(QcoreError::Empty);
        }
        let defect = linalg::hermiticity_defect(&matrix);
        if defect > HERMITIAN_TOLERANCE {
            return Err(QcoreError::NotHermitian(defect));
        }
        let tr = linalg::trace(&matrix).re;
        if (tr - 1.0).abs() > TRACE_TOLERANCE {
            return Err(QcoreError::BadTrace(tr));
        }
        let matrix = linalg::hermitian_part(&matrix);
        let min_eig = linalg::hermitian_eigenvalues(&matrix)[0];
        if min_eig < -EIGEN_TOLERANCE {
            return Err(QcoreError::NotPositive(min_eig));
        }
        Ok(Self { matrix })
    }

    /// Normalizes a PSD matrix by its trace, then validates.
    pub fn from_unnormalized(matrix: CMatrix) -> Result<Self> {
        let tr = linalg::trace(&matrix).re;
        if tr <= 0.0 || !tr.is_finite() {
            return Err(QcoreError::BadTrace(tr));
        }
        Self::new(matrix.unscale(tr))
    }

    pub fn from_pure(state: &StateVector) -> Self {
        let m = linalg::outer(state.amplitudes(), state.amplitudes());
        Self { matrix: linalg::hermitian_part(&m) }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: CMatrix::identity(dim, dim).unscale(dim as f64) }
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

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(&self.matrix)
    }

    /// `U ρ U†`
    pub fn conjugate(&self, u: &CMatrix) -> Result<Self> {
        if u.nrows() != self.dim() {
            return Err(QcoreError::DimensionMismatch { expected: self.dim(), got: u.nrows() });
        }
        Self::new(u * &self.matrix * u.adjoint())
    }

    /// Convex combination `w·self + (1−w)·other`.
    pub fn mix(&self, other: &DensityOperator, w: f64) -> Result<Self> {
        if other.dim() != self.dim() {
            return Err(QcoreError::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(Self { matrix: self.matrix.scale(w) + other.matrix.scale(1.0 - w) })
    }

    /// Entrywise modulus `|ρ|`. Not a density operator in general.
    pub fn entrywise_modulus(&self) -> CMatrix {
        self.matrix.map(|z| Complex64::new(z.norm(), 0.0))
    }

    /// Dominant eigenvector when the operator is pure to within `tol`.
    fn pure_vector(&self, tol: f64) -> Option<CVector> {
        if (purity(self) - 1.0).abs() > tol {
            return None;
        }
        let (vals, vecs) = linalg::hermitian_eigen(&self.matrix);
        let k = vals.len() - 1;
        Some(vecs.column(k).into_owned())
    }
}

/// Phases of an equimodular ququart, each in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquimodularPhases {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
}

impl EquimodularPhases {
    pub fn new(phi1: f64, phi2: f64, phi3: f64) -> Self {
        Self { phi1: wrap_2pi(phi1), phi2: wrap_2pi(phi2), phi3: wrap_2pi(phi3) }
    }

    pub fn from_degrees(d1: f64, d2: f64, d3: f64) -> Self {
        Self::new(d1.to_radians(), d2.to_radians(), d3.to_radians())
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.phi1, self.phi2, self.phi3]
    }

    pub fn to_degrees(&self) -> [f64; 3] {
        self.as_array().map(f64::to_degrees)
    }

    /// Component-wise wrapped difference `self − other` in `(−π, π]`.
    pub fn delta(&self, other: &EquimodularPhases) -> [f64; 3] {
        let a = self.as_array();
        let b = other.as_array();
        [wrap_pi(a[0] - b[0]), wrap_pi(a[1] - b[1]), wrap_pi(a[2] - b[2])]
    }
}

/// One of Alice's four detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AliceOutcome {
    A1,
    A2,
    A3,
    A4,
}

impl AliceOutcome {
    pub const ALL: [AliceOutcome; 4] = [Self::A1, Self::A2, Self::A3, Self::A4];

    /// 1-based detector number.
    pub fn index(self) -> usize {
        self as usize + 1
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index.checked_sub(1)?).copied()
    }

    /// Real amplitudes of `|A_k⟩` (times 2).
    fn signs(self) -> [f64; 4] {
        match self {
            Self::A1 => [1.0, 1.0, 1.0, -1.0],
            Self::A2 => [1.0, 1.0, -1.0, 1.0],
            Self::A3 => [1.0, -1.0, 1.0, 1.0],
            Self::A4 => [-1.0, 1.0, 1.0, 1.0],
        }
    }
}

impl fmt::Display for AliceOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}", self.index())
    }
}

/// A diagonal unitary acting on Bob's ququart.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalUnitary {
    pub diagonal: Vec<Complex64>,
}

impl DiagonalUnitary {
    pub fn matrix(&self) -> CMatrix {
        linalg::diag(&self.diagonal)
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if state.dim() != self.diagonal.len() {
            return Err(QcoreError::DimensionMismatch { expected: self.diagonal.len(), got: state.dim() });
        }
        StateVector::new(state.amplitudes().iter().zip(&self.diagonal).map(|(a, d)| a * d).collect())
    }

    pub fn apply_density(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        rho.conjugate(&self.matrix())
    }
}

/// `(1, e^{iφ₁}, …, e^{iφ_{d−1}})/√d`
pub fn make_equimodular_ket(phases: &[f64], d: usize) -> Result<StateVector> {
    if d < 2 {
        return Err(QcoreError::UnsupportedDimension(d));
    }
    if phases.len() != d - 1 {
        return Err(QcoreError::DimensionMismatch { expected: d - 1, got: phases.len() });
    }
    let amp = 1.0 / (d as f64).sqrt();
    let amps = std::iter::once(0.0).chain(phases.iter().copied()).map(|phi| linalg::cis(phi) * amp).collect();
    StateVector::new(amps)
}

/// The ququart target `(1, e^{iφ₁}, e^{iφ₂}, e^{iφ₃})/2`.
pub fn equimodular_ququart(phases: &EquimodularPhases) -> StateVector {
    make_equimodular_ket(&phases.as_array(), 4).expect("four-dimensional ket")
}

/// `Σᵢ |ii⟩/√d` for `d ∈ {2, 4}`.
pub fn make_shared_entangled_state(d: usize) -> Result<StateVector> {
    if d != 2 && d != 4 {
        return Err(QcoreError::UnsupportedDimension(d));
    }
    let amp = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
    let mut amps = vec![ZERO; d * d];
    for i in 0..d {
        amps[i * d + i] = amp;
    }
    StateVector::new(amps)
}

/// Charles' local phase encoding `|kk⟩ → e^{iφ_k}|kk⟩` on the shared ququart pair.
pub fn encode_phases(joint: &StateVector, phases: &EquimodularPhases) -> Result<StateVector> {
    if joint.dim() != 16 {
        return Err(QcoreError::DimensionMismatch { expected: 16, got: joint.dim() });
    }
    let phi = [0.0, phases.phi1, phases.phi2, phases.phi3];
    let amps = joint.amplitudes().iter().enumerate().map(|(idx, a)| a * linalg::cis(phi[idx / 4])).collect();
    StateVector::new(amps)
}

/// Alice's mutually unbiased measurement basis `|A₁⟩ … |A₄⟩`.
pub fn alice_basis() -> [StateVector; 4] {
    AliceOutcome::ALL.map(alice_state)
}

pub fn alice_state(outcome: AliceOutcome) -> StateVector {
    StateVector::new(outcome.signs().iter().map(|&s| Complex64::new(s / 2.0, 0.0)).collect())
        .expect("normalized basis vector")
}

/// One branch of the joint state before Alice's measurement.
#[derive(Debug, Clone)]
pub struct ConditionalBranch {
    pub outcome: AliceOutcome,
    pub probability: f64,
    pub state: StateVector,
}

/// Expands the encoded shared state in Alice's basis, returning Bob's
/// conditional state and probability for each of her outcomes.
pub fn decompose_joint_state(phases: &EquimodularPhases) -> Vec<ConditionalBranch> {
    let joint = encode_phases(&make_shared_entangled_state(4).expect("d = 4"), phases).expect("16-dimensional state");
    AliceOutcome::ALL
        .iter()
        .map(|&outcome| {
            let a = alice_state(outcome);
            // (⟨A|⊗I)|Ψ⟩
            let bob: Vec<Complex64> = (0..4)
                .map(|b| (0..4).map(|c| a.amplitudes()[c].conj() * joint.amplitudes()[c * 4 + b]).sum())
                .collect();
            let probability: f64 = bob.iter().map(|z| z.norm_sqr()).sum();
            let state = StateVector::normalized(bob).expect("non-vanishing branch");
            ConditionalBranch { outcome, probability, state }
        })
        .collect()
}

/// Bob's correction for Alice's outcome: a π phase on basis term `4 − k`.
pub fn correction_unitary(outcome: AliceOutcome) -> DiagonalUnitary {
    let mut diagonal = vec![ONE; 4];
    diagonal[4 - outcome.index()] = -ONE;
    DiagonalUnitary { diagonal }
}

/// Uhlmann fidelity `(Tr√(√σ ρ √σ))²`.
pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(QcoreError::DimensionMismatch { expected: rho.dim(), got: sigma.dim() });
    }
    let pure_tol = 1e-12;
    if let Some(v) = sigma.pure_vector(pure_tol) {
        return Ok(linalg::expectation(rho.matrix(), &v).clamp(0.0, 1.0));
    }
    if let Some(v) = rho.pure_vector(pure_tol) {
        return Ok(linalg::expectation(sigma.matrix(), &v).clamp(0.0, 1.0));
    }
    let cutoff = 1e-14 * rho.dim() as f64;
    let sqrt_sigma = linalg::hermitian_map(sigma.matrix(), |x| if x > cutoff { x.sqrt() } else { 0.0 });
    let inner = &sqrt_sigma * rho.matrix() * &sqrt_sigma;
    let root_trace: f64 =
        linalg::hermitian_eigenvalues(&inner).into_iter().map(|x| if x > cutoff { x.sqrt() } else { 0.0 }).sum();
    Ok((root_trace * root_trace).clamp(0.0, 1.0))
}

/// Fidelity of a pure target with an arbitrary Hermitian matrix, `⟨ψ|M|ψ⟩`.
///
/// Used for the entrywise-modulus metric `⟨ψ||ρ||ψ⟩`, which is not a
/// standard fidelity: `|ρ|` need not be positive semidefinite.
pub fn overlap_with_pure(m: &CMatrix, target: &StateVector) -> f64 {
    linalg::expectation(m, target.amplitudes())
}

/// Fidelity of the entrywise modulus `|ρ|` with a pure target.
pub fn modulus_fidelity(rho: &DensityOperator, target: &StateVector) -> Result<f64> {
    if rho.dim() != target.dim() {
        return Err(QcoreError::DimensionMismatch { expected: rho.dim(), got: target.dim() });
    }
    Ok(overlap_with_pure(&rho.entrywise_modulus(), target))
}

/// `Tr ρ²`
pub fn purity(rho: &DensityOperator) -> f64 {
    rho.matrix().iter().map(|z| z.norm_sqr()).sum()
}

/// Phases of basis terms 1..3 relative to term 0, read from the first column
/// coherences `ρ_{i0}`.
pub fn extract_phases(rho: &DensityOperator) -> Result<EquimodularPhases> {
    if rho.dim() != 4 {
        return Err(QcoreError::DimensionMismatch { expected: 4, got: rho.dim() });
    }
    let m = rho.matrix();
    let mut out = [0.0; 3];
    for (i, slot) in out.iter_mut().enumerate() {
        let z = m[(i + 1, 0)];
        if z.norm() <= COHERENCE_TOLERANCE {
            return Err(QcoreError::UndefinedPhase(i + 1, z.norm()));
        }
        *slot = z.arg();
    }
    Ok(EquimodularPhases::new(out[0], out[1], out[2]))
}

/// Circular mean and circular standard deviation, both in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularStats {
    pub mean_deg: f64,
    pub std_deg: f64,
    /// Mean resultant length in `[0, 1]`.
    pub resultant: f64,
}

/// Circular statistics of angles given in radians.
pub fn phase_error_stats(deltas: &[f64]) -> Result<CircularStats> {
    if deltas.is_empty() {
        return Err(QcoreError::Empty);
    }
    let n = deltas.len() as f64;
    let (s, c) = deltas.iter().fold((0.0, 0.0), |(s, c), d| (s + d.sin(), c + d.cos()));
    let (s, c) = (s / n, c / n);
    let r = s.hypot(c).min(1.0);
    let mean = if r < 1e-15 { 0.0 } else { s.atan2(c) };
    let std = (-2.0 * r.ln()).max(0.0).sqrt();
    Ok(CircularStats { mean_deg: wrap_pi(mean).to_degrees(), std_deg: std.to_degrees(), resultant: r })
}
