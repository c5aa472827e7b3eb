//! Dark-state detection and trace-preservation certificates.
//!
//! A pure state is dark when every jump operator annihilates it and its
//! projector commutes with `H`. Detection works from that definition: the
//! joint kernel of the stacked jump operators is shrunk to its largest
//! `H`-invariant subspace, which is then diagonalized. The spectrum of
//! `H_eff†` is computed alongside as independent evidence: its eigenvalues
//! have non-negative imaginary parts, and the real ones belong to dark states.

use num_complex::Complex64;

use crate::jumptime::{self, JumptimeError, TP_TOLERANCE};
use crate::linalg::{self, hermitian_eigen, max_abs, null_space, Operator};
use crate::model::{LindbladModel, Tolerances};

#[derive(Clone, Debug)]
pub struct SpectralReport {
    /// Eigenvalues `z_λ` of `H_eff†`.
    pub eigenvalues: Vec<Complex64>,
    pub min_imag: f64,
    /// Number of eigenvalues with `|Im z_λ|` within the spectral tolerance.
    pub spectral_dark_count: usize,
    /// Dimension of the joint kernel of all jump operators.
    pub kernel_dim: usize,
    pub dark_dim: usize,
    /// Orthonormal dark states as columns, each an eigenvector of `H`.
    pub dark_basis: Operator,
    /// `⟨ψ|H|ψ⟩` for each dark basis vector.
    pub dark_energies: Vec<f64>,
}

impl SpectralReport {
    pub fn has_dark_states(&self) -> bool {
        self.dark_dim > 0
    }

    /// Projector onto the dark subspace.
    pub fn dark_projector(&self) -> Operator {
        &self.dark_basis * self.dark_basis.adjoint()
    }
}

/// Threshold on `|Im z|` for counting an `H_eff` eigenvalue as dark.
pub(crate) fn spectral_threshold(h_eff: &Operator, tol: &Tolerances) -> f64 {
    tol.spec * h_eff.norm().max(1.0)
}

pub fn find_dark_states(model: &LindbladModel) -> SpectralReport {
    find_dark_states_with(model, &Tolerances::default())
}

pub fn find_dark_states_with(model: &LindbladModel, tol: &Tolerances) -> SpectralReport {
    let d = model.dim();
    let h = model.hamiltonian();

    // (a) joint kernel of the jump operators
    let ops = model.jump_ops();
    let mut stacked = Operator::zeros(d * ops.len(), d);
    for (j, op) in ops.iter().enumerate() {
        stacked.view_mut((j * d, 0), (d, d)).copy_from(op);
    }
    let kernel = null_space(&stacked, tol.dark);
    let kernel_dim = kernel.ncols();

    // (b) largest H-invariant subspace of the kernel
    let h_scale = max_abs(h).max(1.0);
    let mut basis = kernel;
    while basis.ncols() > 0 {
        let leak = (linalg::identity(d) - &basis * basis.adjoint()) * h * &basis;
        let keep = null_space(&leak, tol.dark * h_scale);
        if keep.ncols() == basis.ncols() {
            break;
        }
        basis = &basis * keep;
    }

    let (dark_basis, dark_energies) = if basis.ncols() > 0 {
        let projected = basis.adjoint() * h * &basis;
        let (energies, vecs) = hermitian_eigen(&projected);
        (&basis * vecs, energies)
    } else {
        (Operator::zeros(d, 0), Vec::new())
    };

    let h_eff = model.effective_hamiltonian();
    let threshold = spectral_threshold(&h_eff, tol);
    let eigenvalues: Vec<Complex64> = linalg::eigenvalues(&h_eff.adjoint());
    let min_imag = eigenvalues.iter().map(|z| z.im).fold(f64::INFINITY, f64::min);
    let spectral_dark_count = eigenvalues.iter().filter(|z| z.im.abs() <= threshold).count();

    SpectralReport {
        eigenvalues,
        min_imag,
        spectral_dark_count,
        kernel_dim,
        dark_dim: dark_basis.ncols(),
        dark_basis,
        dark_energies,
    }
}

#[derive(Clone, Debug)]
pub struct TraceCertificate {
    pub is_tp: bool,
    pub report: SpectralReport,
    pub completeness: Operator,
    /// `‖S − 𝟙‖_max`
    pub deficiency: f64,
    /// `‖(𝟙 − S) − P_dark‖_max`: how well the deficiency sits on the dark subspace.
    pub dark_localization: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DarkStateError {
    #[error(
        "dark-state verdicts disagree: dark_dim = {dark_dim}, spectral count = {spectral_dark_count}, \
         ‖S − 1‖ = {deficiency:e}, ‖(1 − S) − P_dark‖ = {dark_localization:e}"
    )]
    TheoremViolation {
        dark_dim: usize,
        spectral_dark_count: usize,
        deficiency: f64,
        dark_localization: f64,
    },
    #[error(transparent)]
    Jumptime(#[from] JumptimeError),
}

pub fn certify_trace_preservation(model: &LindbladModel) -> Result<TraceCertificate, DarkStateError> {
    certify_trace_preservation_with(model, &Tolerances::default())
}

/// The channel is trace preserving iff there are no dark states. The kernel
/// verdict, the spectral count and the completeness matrix must all agree.
pub fn certify_trace_preservation_with(
    model: &LindbladModel,
    tol: &Tolerances,
) -> Result<TraceCertificate, DarkStateError> {
    let report = find_dark_states_with(model, tol);
    let completeness = match jumptime::completeness_matrix_with(model, tol) {
        Ok(s) => s,
        Err(JumptimeError::DarkSectorMismatch { kernel_dark_dim, spectral_dark_count }) => {
            return Err(DarkStateError::TheoremViolation {
                dark_dim: kernel_dark_dim,
                spectral_dark_count,
                deficiency: f64::NAN,
                dark_localization: f64::NAN,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let id = linalg::identity(model.dim());
    let deficiency = max_abs(&(&completeness - &id));
    let dark_localization = max_abs(&(&id - &completeness - report.dark_projector()));
    let agree = report.spectral_dark_count == report.dark_dim
        && dark_localization <= TP_TOLERANCE
        && (report.dark_dim > 0 || deficiency <= TP_TOLERANCE);
    if !agree {
        return Err(DarkStateError::TheoremViolation {
            dark_dim: report.dark_dim,
            spectral_dark_count: report.spectral_dark_count,
            deficiency,
            dark_localization,
        });
    }
    Ok(TraceCertificate {
        is_tp: report.dark_dim == 0,
        report,
        completeness,
        deficiency,
        dark_localization,
    })
}
