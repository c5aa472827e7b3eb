//! Lindblad model data, derived operators, state validation and the on-disk
//! model format.
//!
//! Units: ħ = 1. The rate `gamma` is kept separate from the jump operators, so
//! the generator is
//!
//! ```text
//! ρ̇ = −i[H, ρ] + γ Σ_j (L_j ρ L_j† − ½{L_j†L_j, ρ})
//! ```
//!
//! Per-channel rates are expressed by scaling the jump operators.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::linalg::{self, c, hermitian_eigen, hermiticity_defect, real, Operator, StateVector, I};

/// Numerical tolerances used across the crate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Hermiticity defect, entrywise.
    pub herm: f64,
    /// Smallest admissible eigenvalue is `−psd`.
    pub psd: f64,
    /// Admissible trace excess above 1.
    pub trace: f64,
    /// Imaginary parts of `H_eff` eigenvalues within this of zero are dark.
    pub spec: f64,
    /// Singular-value and residual threshold for dark-state detection.
    pub dark: f64,
    /// A jumptime state with smaller trace terminates the evolution.
    pub halt: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { herm: 1e-10, psd: 1e-9, trace: 1e-9, spec: 1e-9, dark: 1e-8, halt: 1e-12 }
    }
}

impl Tolerances {
    /// Applies a `name=value` override, as given on the command line.
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), String> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(format!("tolerance {name} must be a non-negative number"));
        }
        match name {
            "herm" => self.herm = value,
            "psd" => self.psd = value,
            "trace" | "tr" => self.trace = value,
            "spec" => self.spec = value,
            "dark" => self.dark = value,
            "halt" => self.halt = value,
            other => return Err(format!("unknown tolerance `{other}`")),
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StateViolation {
    NotSquare { rows: usize, cols: usize },
    NonFinite,
    NotHermitian { defect: f64 },
    NegativeEigenvalue { min_eigenvalue: f64 },
    NegativeTrace { trace: f64 },
    TraceAboveOne { trace: f64 },
}

impl fmt::Display for StateViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateViolation::NotSquare { rows, cols } => write!(f, "matrix is {rows}x{cols}, not square"),
            StateViolation::NonFinite => write!(f, "entries are not finite"),
            StateViolation::NotHermitian { defect } => write!(f, "not Hermitian (defect {defect:e})"),
            StateViolation::NegativeEigenvalue { min_eigenvalue } => {
                write!(f, "negative eigenvalue {min_eigenvalue:e}")
            }
            StateViolation::NegativeTrace { trace } => write!(f, "negative trace {trace:e}"),
            StateViolation::TraceAboveOne { trace } => write!(f, "trace {trace} exceeds 1"),
        }
    }
}

/// Result of [`validate_state`].
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
    pub trace: f64,
    pub violations: Vec<StateViolation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "valid state (trace {})", self.trace);
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "invalid state: {}", parts.join("; "))
    }
}

/// Checks every density-matrix invariant and reports all violations.
pub fn validate_state(m: &Operator, tol: &Tolerances) -> ValidationReport {
    let mut violations = Vec::new();
    if !m.is_square() {
        violations.push(StateViolation::NotSquare { rows: m.nrows(), cols: m.ncols() });
        return ValidationReport {
            hermiticity_defect: f64::INFINITY,
            min_eigenvalue: f64::NAN,
            trace: f64::NAN,
            violations,
        };
    }
    if !linalg::is_finite(m) {
        violations.push(StateViolation::NonFinite);
        return ValidationReport {
            hermiticity_defect: f64::NAN,
            min_eigenvalue: f64::NAN,
            trace: f64::NAN,
            violations,
        };
    }
    let defect = hermiticity_defect(m);
    let trace = linalg::trace(m).re;
    let (values, _) = hermitian_eigen(m);
    let min_eigenvalue = values.first().copied().unwrap_or(0.0);
    if defect > tol.herm {
        violations.push(StateViolation::NotHermitian { defect });
    }
    if min_eigenvalue < -tol.psd {
        violations.push(StateViolation::NegativeEigenvalue { min_eigenvalue });
    }
    if trace < -tol.trace {
        violations.push(StateViolation::NegativeTrace { trace });
    }
    if trace > 1.0 + tol.trace {
        violations.push(StateViolation::TraceAboveOne { trace });
    }
    ValidationReport { hermiticity_defect: defect, min_eigenvalue, trace, violations }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct InvalidState(pub ValidationReport);

/// Hermitian, positive-semidefinite operator with trace in `[0, 1]`.
///
/// Sub-normalized states are legal: jumptime states lose trace whenever
/// trajectories end in a dark state.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    pub fn new(m: Operator) -> Result<Self, InvalidState> {
        Self::with_tolerances(m, &Tolerances::default())
    }

    pub fn with_tolerances(m: Operator, tol: &Tolerances) -> Result<Self, InvalidState> {
        let report = validate_state(&m, tol);
        if report.passed() {
            Ok(Self(m))
        } else {
            Err(InvalidState(report))
        }
    }

    /// Wraps a matrix already known to satisfy the invariants.
    pub fn from_matrix_unchecked(m: Operator) -> Self {
        Self(m)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(Operator::zeros(dim, dim))
    }

    /// `|k⟩⟨k|`
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut m = Operator::zeros(dim, dim);
        m[(k, k)] = linalg::ONE;
        Self(m)
    }

    /// `|ψ⟩⟨ψ|` with `ψ` normalized first.
    pub fn pure(psi: &StateVector) -> Self {
        let norm = psi.norm();
        Self(linalg::outer(&(psi / real(norm))))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(linalg::identity(dim) * real(1.0 / dim as f64))
    }

    /// Qubit state `(𝟙 + r·σ)/2`; requires `|r| ≤ 1`.
    pub fn from_bloch(r: [f64; 3]) -> Result<Self, InvalidState> {
        let [x, y, z] = r;
        let m = Operator::from_row_slice(
            2,
            2,
            &[c(0.5 * (1.0 + z), 0.0), c(0.5 * x, -0.5 * y), c(0.5 * x, 0.5 * y), c(0.5 * (1.0 - z), 0.0)],
        );
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Operator {
        &self.0
    }

    pub fn into_inner(self) -> Operator {
        self.0
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.0).re
    }

    pub fn purity(&self) -> f64 {
        linalg::trace(&(&self.0 * &self.0)).re
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(&self.0 * real(factor))
    }

    pub fn validate(&self, tol: &Tolerances) -> ValidationReport {
        validate_state(&self.0, tol)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("{field}: expected a {expected}x{expected} matrix, got {rows}x{cols}")]
    Shape { field: String, expected: usize, rows: usize, cols: usize },
    #[error("{field}: entries must be finite")]
    NonFinite { field: String },
    #[error("invariant `hermitian hamiltonian` violated: defect {defect:e}")]
    NonHermitianHamiltonian { defect: f64 },
    #[error("invariant `non-empty jump_ops` violated: at least one jump operator is required")]
    NoJumpOperators,
    #[error("invariant `positive gamma` violated: gamma = {0}")]
    InvalidRate(f64),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Hamiltonian, jump operators and rate of a Markovian master equation.
#[derive(Clone, Debug, PartialEq)]
pub struct LindbladModel {
    hamiltonian: Operator,
    jump_ops: Vec<Operator>,
    gamma: f64,
    label: Option<String>,
}

fn check_shape(field: &str, m: &Operator, dim: usize) -> Result<(), ModelError> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(ModelError::Shape {
            field: field.to_string(),
            expected: dim,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if !linalg::is_finite(m) {
        return Err(ModelError::NonFinite { field: field.to_string() });
    }
    Ok(())
}

impl LindbladModel {
    pub fn new(hamiltonian: Operator, jump_ops: Vec<Operator>, gamma: f64) -> Result<Self, ModelError> {
        Self::with_tolerances(hamiltonian, jump_ops, gamma, &Tolerances::default())
    }

    pub fn with_tolerances(
        hamiltonian: Operator,
        jump_ops: Vec<Operator>,
        gamma: f64,
        tol: &Tolerances,
    ) -> Result<Self, ModelError> {
        let dim = hamiltonian.nrows();
        if dim == 0 {
            return Err(ModelError::ZeroDimension);
        }
        check_shape("hamiltonian", &hamiltonian, dim)?;
        if jump_ops.is_empty() {
            return Err(ModelError::NoJumpOperators);
        }
        for (j, op) in jump_ops.iter().enumerate() {
            check_shape(&format!("jump_ops[{j}]"), op, dim)?;
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(ModelError::InvalidRate(gamma));
        }
        let defect = hermiticity_defect(&hamiltonian);
        if defect > tol.herm {
            return Err(ModelError::NonHermitianHamiltonian { defect });
        }
        Ok(Self { hamiltonian, jump_ops, gamma, label: None })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn jump_ops(&self) -> &[Operator] {
        &self.jump_ops
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// `V = Σ_j L_j†L_j`
    pub fn effective_potential(&self) -> Operator {
        let dim = self.dim();
        self.jump_ops
            .iter()
            .fold(Operator::zeros(dim, dim), |acc, l| acc + l.adjoint() * l)
    }

    /// `H_eff = H − i(γ/2) V`
    pub fn effective_hamiltonian(&self) -> Operator {
        &self.hamiltonian - self.effective_potential() * (I * (0.5 * self.gamma))
    }

    /// The model conjugated by a unitary, `H → U H U†`, `L_j → U L_j U†`.
    pub fn conjugated(&self, u: &Operator) -> Self {
        let ud = u.adjoint();
        Self {
            hamiltonian: linalg::hermitian_part(&(u * &self.hamiltonian * &ud)),
            jump_ops: self.jump_ops.iter().map(|l| u * l * &ud).collect(),
            gamma: self.gamma,
            label: self.label.clone(),
        }
    }

    /// SHA-256 of the canonical compact serialization, hex encoded.
    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(&ModelFile::from(self)).expect("model serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        file.into_model()
    }
}

/// Serialized model: complex numbers are `[re, im]` pairs, matrices are
/// row-major lists of `dim²` pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub dim: usize,
    pub gamma: f64,
    pub hamiltonian: Vec<[f64; 2]>,
    pub jump_ops: Vec<Vec<[f64; 2]>>,
    /// Momentum grid behind a collisional model; informational on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum_grid: Option<MomentumGridMetadata>,
}

/// Grid `p_k = p_min + k·dp`, `k < size`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentumGridMetadata {
    pub p_min: f64,
    pub dp: f64,
    pub size: usize,
}

pub fn matrix_to_pairs(m: &Operator) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push([m[(i, j)].re, m[(i, j)].im]);
        }
    }
    out
}

pub fn pairs_to_matrix(field: &str, pairs: &[[f64; 2]], dim: usize) -> Result<Operator, ModelError> {
    if pairs.len() != dim * dim {
        return Err(ModelError::Field {
            field: field.to_string(),
            message: format!("expected {} [re, im] entries for dim {dim}, got {}", dim * dim, pairs.len()),
        });
    }
    Ok(Operator::from_fn(dim, dim, |i, j| {
        let [re, im] = pairs[i * dim + j];
        c(re, im)
    }))
}

impl From<&LindbladModel> for ModelFile {
    fn from(model: &LindbladModel) -> Self {
        Self {
            label: model.label.clone(),
            dim: model.dim(),
            gamma: model.gamma,
            hamiltonian: matrix_to_pairs(&model.hamiltonian),
            jump_ops: model.jump_ops.iter().map(matrix_to_pairs).collect(),
            momentum_grid: None,
        }
    }
}

impl ModelFile {
    pub fn into_model(self) -> Result<LindbladModel, ModelError> {
        if self.dim == 0 {
            return Err(ModelError::ZeroDimension);
        }
        let h = pairs_to_matrix("hamiltonian", &self.hamiltonian, self.dim)?;
        let ops = self
            .jump_ops
            .iter()
            .enumerate()
            .map(|(j, pairs)| pairs_to_matrix(&format!("jump_ops[{j}]"), pairs, self.dim))
            .collect::<Result<Vec<_>, _>>()?;
        let model = LindbladModel::new(h, ops, self.gamma)?;
        Ok(match self.label {
            Some(label) => model.with_label(label),
            None => model,
        })
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LindbladModel, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    LindbladModel::from_json(&text)
}

pub fn save_model(model: &LindbladModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    let mut text = model.to_json();
    text.push('\n');
    std::fs::write(path, text).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
