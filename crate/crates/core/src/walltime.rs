//! Walltime evolution: dense superoperator propagation of the master equation.
//!
//! Density matrices are vectorized by stacking columns, so that
//! `A ρ B ↦ (Bᵀ ⊗ A) vec(ρ)`. With that convention the generator is
//!
//! ```text
//! 𝓛 = −i(𝟙 ⊗ H − Hᵀ ⊗ 𝟙) + γ Σ_j (L̄_j ⊗ L_j − ½ 𝟙 ⊗ L_j†L_j − ½ (L_j†L_j)ᵀ ⊗ 𝟙)
//! ```
//!
//! `exp(𝓛 t)` is taken from an eigen-decomposition of `𝓛` when it is
//! well conditioned, and from Padé scaling-and-squaring otherwise.

use rayon::prelude::*;

use crate::linalg::{self, real, Operator, Propagator, I};
use crate::model::{DensityMatrix, LindbladModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WalltimeError {
    #[error("times must be finite, non-negative and strictly increasing (offending index {index})")]
    InvalidTimes { index: usize },
    #[error("initial state has dimension {found}, model has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("propagation produced non-finite values at t = {time}")]
    NonFinite { time: f64 },
}

/// Superoperator acting on column-stacked density matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct LiouvillianMatrix {
    dim: usize,
    matrix: Operator,
}

impl LiouvillianMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &Operator {
        &self.matrix
    }

    /// `𝓛` applied to an operator, returned in matrix form.
    pub fn apply(&self, rho: &Operator) -> Operator {
        linalg::unvectorize(&(&self.matrix * linalg::vectorize(rho)), self.dim)
    }
}

pub fn liouvillian(model: &LindbladModel) -> LiouvillianMatrix {
    let d = model.dim();
    let id = linalg::identity(d);
    let h = model.hamiltonian();
    let mut l = (id.kronecker(h) - h.transpose().kronecker(&id)) * (-I);
    let gamma = real(model.gamma());
    for op in model.jump_ops() {
        let ldl = op.adjoint() * op;
        let term = op.map(|z| z.conj()).kronecker(op)
            - id.kronecker(&ldl) * real(0.5)
            - ldl.transpose().kronecker(&id) * real(0.5);
        l += term * gamma;
    }
    LiouvillianMatrix { dim: d, matrix: l }
}

/// Right-hand side of the master equation evaluated in operator form.
pub fn lindblad_rhs(model: &LindbladModel, rho: &Operator) -> Operator {
    let h = model.hamiltonian();
    let mut out = (h * rho - rho * h) * (-I);
    for op in model.jump_ops() {
        let ldl = op.adjoint() * op;
        let term = op * rho * op.adjoint() - (&ldl * rho + rho * &ldl) * real(0.5);
        out += term * real(model.gamma());
    }
    out
}

/// Cached `exp(𝓛 t)` for one model.
#[derive(Clone, Debug)]
pub struct WalltimePropagator {
    dim: usize,
    propagator: Propagator,
}

impl WalltimePropagator {
    pub fn new(model: &LindbladModel) -> Self {
        let l = liouvillian(model);
        Self { dim: l.dim, propagator: Propagator::new(&l.matrix) }
    }

    pub fn is_spectral(&self) -> bool {
        self.propagator.is_spectral()
    }

    pub fn propagate(&self, rho0: &Operator, t: f64) -> Operator {
        let v = linalg::vectorize(rho0);
        let out = self.propagator.prepare(&v).at(t);
        linalg::hermitian_part(&linalg::unvectorize(&out, self.dim))
    }
}

/// `ρ(t_k) = exp(𝓛 t_k) ρ₀` for each requested time.
pub fn evolve_walltime(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    times: &[f64],
) -> Result<Vec<DensityMatrix>, WalltimeError> {
    if rho0.dim() != model.dim() {
        return Err(WalltimeError::DimensionMismatch { expected: model.dim(), found: rho0.dim() });
    }
    for (k, &t) in times.iter().enumerate() {
        let ordered = k == 0 || t > times[k - 1];
        if !(t.is_finite() && t >= 0.0 && ordered) {
            return Err(WalltimeError::InvalidTimes { index: k });
        }
    }
    let propagator = WalltimePropagator::new(model);
    times
        .par_iter()
        .map(|&t| {
            if t == 0.0 {
                return Ok(rho0.clone());
            }
            let rho = propagator.propagate(rho0.matrix(), t);
            if !linalg::is_finite(&rho) {
                return Err(WalltimeError::NonFinite { time: t });
            }
            Ok(DensityMatrix::from_matrix_unchecked(rho))
        })
        .collect()
}
