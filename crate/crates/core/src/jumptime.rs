//! Jumptime evolution: the deterministic map from the state averaged right
//! after `n` jumps to the state averaged right after `n + 1` jumps,
//!
//! ```text
//! ρ_{n+1} = γ Σ_j L_j X L_j†,    X = ∫₀^∞ e^{−iH_eff τ} ρ_n e^{iH_eff† τ} dτ.
//! ```
//!
//! `X` is obtained without quadrature from the Sylvester equation
//! `i(H_eff X − X H_eff†) = ρ_n`, which holds whenever the no-jump propagator
//! decays. Dark states do not decay: the dark subspace is invariant under
//! `H_eff` and annihilated by every `L_j`, so it is split off and the equation
//! is solved on its orthogonal complement only.

use crate::darkstates::{find_dark_states_with, spectral_threshold, SpectralReport};
use crate::linalg::{
    self, hermitian_part, orthogonal_complement, real, Operator, Propagator, SingularSylvester,
    SylvesterSolver, I,
};
use crate::model::{DensityMatrix, LindbladModel, Tolerances};

/// Bound on `‖S − 𝟙‖_max` for a trace-preserving channel.
pub const TP_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JumptimeError {
    #[error("state has dimension {found}, model has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(
        "dark-state dichotomy violated: {kernel_dark_dim} dark states by definition but \
         {spectral_dark_count} real eigenvalues of H_eff†"
    )]
    DarkSectorMismatch { kernel_dark_dim: usize, spectral_dark_count: usize },
    #[error("jump operators do not annihilate the dark subspace (Σ‖L_j P_dark‖ = {leak:e})")]
    DarkLeak { leak: f64 },
    #[error("numerical degeneracy in the no-jump integral: {0}")]
    NumericalDegeneracy(#[from] SingularSylvester),
    #[error("state has zero trace")]
    ZeroTrace,
    #[error("waiting-time grid must be finite, non-negative and increasing (offending index {index})")]
    InvalidGrid { index: usize },
    #[error("jumptime step {n}: {source}")]
    Step { n: usize, source: Box<JumptimeError> },
}

/// Precomputed jumptime map of one model.
#[derive(Clone, Debug)]
pub struct JumptimeMap {
    gamma: f64,
    dim: usize,
    jump_ops: Vec<Operator>,
    /// Orthonormal basis of the non-dark subspace; `None` without dark states.
    complement: Option<Operator>,
    /// Non-dark block of `H_eff`.
    h_eff: Operator,
    potential: Operator,
    solver: SylvesterSolver,
    report: SpectralReport,
    tol: Tolerances,
}

impl JumptimeMap {
    pub fn new(model: &LindbladModel) -> Result<Self, JumptimeError> {
        Self::with_tolerances(model, &Tolerances::default())
    }

    pub fn with_tolerances(model: &LindbladModel, tol: &Tolerances) -> Result<Self, JumptimeError> {
        let report = find_dark_states_with(model, tol);
        if report.spectral_dark_count != report.dark_dim {
            return Err(JumptimeError::DarkSectorMismatch {
                kernel_dark_dim: report.dark_dim,
                spectral_dark_count: report.spectral_dark_count,
            });
        }
        let d = model.dim();
        let full_h_eff = model.effective_hamiltonian();
        let full_potential = model.effective_potential();
        let (complement, h_eff, potential) = if report.dark_dim > 0 {
            let leak: f64 = model
                .jump_ops()
                .iter()
                .map(|l| (l * &report.dark_basis).norm())
                .sum();
            if leak > tol.dark {
                return Err(JumptimeError::DarkLeak { leak });
            }
            let u = orthogonal_complement(&report.dark_basis, d);
            let h = u.adjoint() * &full_h_eff * &u;
            let v = u.adjoint() * &full_potential * &u;
            (Some(u), h, v)
        } else {
            (None, full_h_eff.clone(), full_potential)
        };
        let min_gap = spectral_threshold(&full_h_eff, tol);
        let solver = SylvesterSolver::new(&h_eff, &(-h_eff.adjoint()), min_gap);
        Ok(Self {
            gamma: model.gamma(),
            dim: d,
            jump_ops: model.jump_ops().to_vec(),
            complement,
            h_eff,
            potential,
            solver,
            report,
            tol: *tol,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn report(&self) -> &SpectralReport {
        &self.report
    }

    pub fn has_dark_states(&self) -> bool {
        self.complement.is_some()
    }

    fn restrict(&self, m: &Operator) -> Operator {
        match &self.complement {
            Some(u) => u.adjoint() * m * u,
            None => m.clone(),
        }
    }

    fn extend(&self, m: Operator) -> Operator {
        match &self.complement {
            Some(u) => u * m * u.adjoint(),
            None => m,
        }
    }

    /// `X = ∫₀^∞ e^{−iH_eff τ} ρ e^{iH_eff† τ} dτ`, dark part projected out.
    pub fn no_jump_integral(&self, rho: &Operator) -> Result<Operator, JumptimeError> {
        if rho.nrows() != self.dim || rho.ncols() != self.dim {
            return Err(JumptimeError::DimensionMismatch { expected: self.dim, found: rho.nrows() });
        }
        let x = self.solver.solve(&(self.restrict(rho) * (-I)))?;
        Ok(hermitian_part(&self.extend(x)))
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix, JumptimeError> {
        let x = self.no_jump_integral(rho.matrix())?;
        let mut out = Operator::zeros(self.dim, self.dim);
        for l in &self.jump_ops {
            out += l * &x * l.adjoint();
        }
        Ok(DensityMatrix::from_matrix_unchecked(hermitian_part(&(out * real(self.gamma)))))
    }

    /// `S = ∫₀^∞ γ e^{iH_eff†τ} V e^{−iH_eff τ} dτ` from
    /// `i(H_eff† S − S H_eff) = −γV`, zero on the dark subspace.
    pub fn completeness_matrix(&self) -> Result<Operator, JumptimeError> {
        let min_gap = spectral_threshold(&self.h_eff, &self.tol);
        let solver = SylvesterSolver::new(&self.h_eff.adjoint(), &(-&self.h_eff), min_gap);
        let s = solver.solve(&(&self.potential * (I * self.gamma)))?;
        Ok(hermitian_part(&self.extend(s)))
    }
}

pub fn jump_map(model: &LindbladModel, rho: &DensityMatrix) -> Result<DensityMatrix, JumptimeError> {
    JumptimeMap::new(model)?.apply(rho)
}

pub fn completeness_matrix(model: &LindbladModel) -> Result<Operator, JumptimeError> {
    completeness_matrix_with(model, &Tolerances::default())
}

pub fn completeness_matrix_with(model: &LindbladModel, tol: &Tolerances) -> Result<Operator, JumptimeError> {
    JumptimeMap::with_tolerances(model, tol)?.completeness_matrix()
}

/// `ρ_0 … ρ_N` with `traces[n] = Tr ρ_n`, the probability that `n` jumps occur.
#[derive(Clone, Debug)]
pub struct JumptimeSequence {
    pub states: Vec<DensityMatrix>,
    pub traces: Vec<f64>,
    /// First index whose trace fell below the halting threshold; every later
    /// state is recorded as zero.
    pub halted_at: Option<usize>,
}

impl JumptimeSequence {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

pub fn evolve_jumptime(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    n_max: usize,
) -> Result<JumptimeSequence, JumptimeError> {
    let map = JumptimeMap::new(model)?;
    evolve_with(&map, rho0, n_max)
}

pub fn evolve_with(
    map: &JumptimeMap,
    rho0: &DensityMatrix,
    n_max: usize,
) -> Result<JumptimeSequence, JumptimeError> {
    if rho0.dim() != map.dim() {
        return Err(JumptimeError::DimensionMismatch { expected: map.dim(), found: rho0.dim() });
    }
    let mut states = vec![rho0.clone()];
    let mut traces = vec![rho0.trace()];
    let mut halted_at = (rho0.trace() < map.tol.halt).then_some(0);
    for n in 1..=n_max {
        if halted_at.is_some() {
            states.push(DensityMatrix::zeros(map.dim()));
            traces.push(0.0);
            continue;
        }
        let next = map
            .apply(&states[n - 1])
            .map_err(|e| JumptimeError::Step { n, source: Box::new(e) })?;
        let tr = next.trace();
        if tr < map.tol.halt {
            halted_at = Some(n);
        }
        traces.push(tr);
        states.push(next);
    }
    Ok(JumptimeSequence { states, traces, halted_at })
}

/// Waiting-time density between jump `n` and jump `n + 1`.
#[derive(Clone, Debug)]
pub struct WaitingTimeCurve {
    pub taus: Vec<f64>,
    pub densities: Vec<f64>,
    pub from_jump: Option<usize>,
}

impl WaitingTimeCurve {
    pub fn labeled(mut self, n: usize) -> Self {
        self.from_jump = Some(n);
        self
    }

    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        self.taus
            .windows(2)
            .zip(self.densities.windows(2))
            .map(|(t, w)| 0.5 * (t[1] - t[0]) * (w[0] + w[1]))
            .sum()
    }
}

/// `w(τ) = γ Tr[e^{iH_eff†τ} V e^{−iH_eff τ} ρ_n] / Tr ρ_n`, the density of
/// the next jump conditioned on the current state.
pub fn waiting_time(
    model: &LindbladModel,
    rho_n: &DensityMatrix,
    taus: &[f64],
) -> Result<WaitingTimeCurve, JumptimeError> {
    if rho_n.dim() != model.dim() {
        return Err(JumptimeError::DimensionMismatch { expected: model.dim(), found: rho_n.dim() });
    }
    let tr = rho_n.trace();
    if tr.is_nan() || tr <= 0.0 {
        return Err(JumptimeError::ZeroTrace);
    }
    for (k, &t) in taus.iter().enumerate() {
        if !(t.is_finite() && t >= 0.0 && (k == 0 || t > taus[k - 1])) {
            return Err(JumptimeError::InvalidGrid { index: k });
        }
    }
    let propagator = Propagator::new(&(model.effective_hamiltonian() * (-I)));
    let v = model.effective_potential();
    let densities = taus
        .iter()
        .map(|&tau| {
            let u = propagator.at(tau);
            let evolved = &u * rho_n.matrix() * u.adjoint();
            let w = model.gamma() * linalg::trace(&(&v * evolved)).re / tr;
            w.max(0.0)
        })
        .collect();
    Ok(WaitingTimeCurve { taus: taus.to_vec(), densities, from_jump: None })
}

/// Slowest decay rate of `‖e^{−iH_eff τ}ψ‖²` over non-dark states:
/// `2 min |Im z|` over eigenvalues of `H_eff` outside the dark sector.
pub fn slowest_decay_rate(model: &LindbladModel) -> f64 {
    let tol = Tolerances::default();
    let h_eff = model.effective_hamiltonian();
    let threshold = spectral_threshold(&h_eff, &tol);
    linalg::eigenvalues(&h_eff)
        .iter()
        .map(|z| -z.im)
        .filter(|&r| r > threshold)
        .fold(f64::INFINITY, f64::min)
        * 2.0
}
