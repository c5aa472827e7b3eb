//! Example models with closed-form jumptime propagators.
//!
//! Qubit conventions: `|0⟩` is the ground state (index 0), `σ_z = diag(1, −1)`,
//! `σ₋ = |0⟩⟨1|`. Oscillator matrices are written in the Fock basis truncated
//! to `cutoff` levels.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64;

use crate::linalg::{c, real, Operator, StateVector, I, ONE, ZERO};
use crate::model::{DensityMatrix, LindbladModel};

pub mod collisional;

pub use collisional::{
    collisional_jumptime_map, momentum_mean, momentum_variance, position_mean, position_mean_at_stride,
    MomentumGrid,
    MomentumGridModel,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CatalogError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unknown catalog model `{0}`")]
    UnknownModel(String),
    #[error("model `{model}` has no parameter `{param}`")]
    UnknownParameter { model: String, param: String },
}

pub fn sigma_x() -> Operator {
    Operator::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn sigma_y() -> Operator {
    Operator::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn sigma_z() -> Operator {
    Operator::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// `|0⟩⟨1|`
pub fn sigma_minus() -> Operator {
    Operator::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
}

/// `|1⟩⟨0|`
pub fn sigma_plus() -> Operator {
    Operator::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO])
}

/// Qubit Hamiltonian `h·σ`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QubitBloch {
    pub hx: f64,
    pub hy: f64,
    pub hz: f64,
}

impl QubitBloch {
    pub fn new(hx: f64, hy: f64, hz: f64) -> Self {
        Self { hx, hy, hz }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn hamiltonian(&self) -> Operator {
        sigma_x() * real(self.hx) + sigma_y() * real(self.hy) + sigma_z() * real(self.hz)
    }
}

fn positive(name: &str, value: f64) -> Result<(), CatalogError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(CatalogError::Domain(format!("{name} must be positive, got {value}")))
    }
}

/// Amplitude damping `L = σ₋`; with `thermal_x = Some(x)`, `x > 0`, the
/// reverse channel `√x σ₊` is added.
pub fn make_amplitude_damping(
    h: QubitBloch,
    gamma: f64,
    thermal_x: Option<f64>,
) -> Result<LindbladModel, CatalogError> {
    positive("gamma", gamma)?;
    let mut ops = vec![sigma_minus()];
    let label = match thermal_x {
        Some(x) if !(x.is_finite() && x >= 0.0) => {
            return Err(CatalogError::Domain(format!("thermal ratio x must be non-negative, got {x}")))
        }
        Some(x) if x > 0.0 => {
            ops.push(sigma_plus() * real(x.sqrt()));
            "thermal-amplitude-damping"
        }
        _ => "amplitude-damping",
    };
    LindbladModel::new(h.hamiltonian(), ops, gamma)
        .map(|m| m.with_label(label))
        .map_err(|e| CatalogError::Domain(e.to_string()))
}

/// Amplitude damping at `h = (γ/4, 0, 0)`, where `H_eff` has a single
/// defective eigenvalue.
pub fn make_exceptional_point(gamma: f64) -> Result<LindbladModel, CatalogError> {
    make_amplitude_damping(QubitBloch::new(gamma / 4.0, 0.0, 0.0), gamma, None)
        .map(|m| m.with_label("exceptional-point"))
}

/// Dephasing `L = σ_z`.
pub fn make_dephasing(h: QubitBloch, gamma: f64) -> Result<LindbladModel, CatalogError> {
    positive("gamma", gamma)?;
    LindbladModel::new(h.hamiltonian(), vec![sigma_z()], gamma)
        .map(|m| m.with_label("dephasing"))
        .map_err(|e| CatalogError::Domain(e.to_string()))
}

/// Closed-form jumptime step for dephasing with `H = h_z σ_z`:
///
/// ```text
/// ρ' = σ_zρσ_z + 2h_z²/(4h_z² + γ²) (ρ − σ_zρσ_z) + γh_z/(4h_z² + γ²) i[σ_z, ρ]
/// ```
pub fn dephasing_jumptime_oracle(hz: f64, gamma: f64, rho: &DensityMatrix) -> DensityMatrix {
    let sz = sigma_z();
    let r = rho.matrix();
    let flipped = &sz * r * &sz;
    let denom = 4.0 * hz * hz + gamma * gamma;
    let commutator = &sz * r - r * &sz;
    let out = &flipped + (r - &flipped) * real(2.0 * hz * hz / denom) + commutator * (I * (gamma * hz / denom));
    DensityMatrix::from_matrix_unchecked(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillatorParams {
    pub omega: f64,
    pub gamma: f64,
    /// Number of Fock levels kept.
    pub cutoff: usize,
}

impl OscillatorParams {
    /// `ω/γ = 1`, 32 levels.
    pub fn unit_ratio() -> Self {
        Self { omega: 1.0, gamma: 1.0, cutoff: 32 }
    }
}

/// Truncated annihilation operator, `a|m⟩ = √m |m−1⟩`.
pub fn annihilation(cutoff: usize) -> Operator {
    let mut a = Operator::zeros(cutoff, cutoff);
    for m in 1..cutoff {
        a[(m - 1, m)] = real((m as f64).sqrt());
    }
    a
}

/// `H = ω(a†a + ½)`, `L = a`.
pub fn make_damped_oscillator(params: OscillatorParams) -> Result<LindbladModel, CatalogError> {
    positive("omega", params.omega)?;
    positive("gamma", params.gamma)?;
    if params.cutoff < 2 {
        return Err(CatalogError::Domain(format!("cutoff must be at least 2, got {}", params.cutoff)));
    }
    let d = params.cutoff;
    let h = Operator::from_fn(d, d, |i, j| if i == j { real(params.omega * (i as f64 + 0.5)) } else { ZERO });
    LindbladModel::new(h, vec![annihilation(d)], params.gamma)
        .map(|m| m.with_label("damped-oscillator"))
        .map_err(|e| CatalogError::Domain(e.to_string()))
}

/// `K(m, m′) = 2γ√((m+1)(m′+1)) / ((2 + m + m′)γ − 2iω(m′ − m))`
pub fn oscillator_propagator(params: &OscillatorParams, m: usize, mp: usize) -> Complex64 {
    let (g, w) = (params.gamma, params.omega);
    let num = 2.0 * g * (((m + 1) * (mp + 1)) as f64).sqrt();
    real(num) / c((2 + m + mp) as f64 * g, -2.0 * w * (mp as f64 - m as f64))
}

/// `⟨m|ρ_n|m′⟩ = Π_{k<n} K(m+k, m′+k) · ⟨m+n|ρ₀|m′+n⟩`, zero beyond the
/// truncation. `K = 1` on the diagonal, so populations simply shift down; off
/// the diagonal the factors differ from step to step.
pub fn oscillator_jumptime_oracle(params: &OscillatorParams, rho: &DensityMatrix, n: usize) -> DensityMatrix {
    let d = rho.dim();
    let r = rho.matrix();
    let out = Operator::from_fn(d, d, |m, mp| {
        if m + n >= d || mp + n >= d {
            return ZERO;
        }
        (0..n).map(|k| oscillator_propagator(params, m + k, mp + k)).product::<Complex64>() * r[(m + n, mp + n)]
    });
    DensityMatrix::from_matrix_unchecked(out)
}

/// Coherent state `|α⟩` truncated to `cutoff` levels (not renormalized).
pub fn coherent_state(alpha: Complex64, cutoff: usize) -> StateVector {
    let mut psi = StateVector::zeros(cutoff);
    let mut amp = real((-0.5 * alpha.norm_sqr()).exp());
    for m in 0..cutoff {
        if m > 0 {
            amp *= alpha / (m as f64).sqrt();
        }
        psi[m] = amp;
    }
    psi
}

/// `α = 2 e^{iπ/4}`
pub fn showcase_alpha() -> Complex64 {
    Complex64::from_polar(2.0, FRAC_PI_4)
}

/// Names accepted by [`by_name`].
pub const MODEL_NAMES: &[&str] = &[
    "amplitude-damping",
    "exceptional-point",
    "thermal",
    "dephasing",
    "damped-oscillator",
    "collisional",
];

fn take(params: &mut BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.remove(key).unwrap_or(default)
}

/// Builds a catalog model from `key=value` parameters; unknown keys are errors.
pub fn by_name(name: &str, params: &BTreeMap<String, f64>) -> Result<LindbladModel, CatalogError> {
    let mut p = params.clone();
    let model = match name {
        "amplitude-damping" | "thermal" => {
            let gamma = take(&mut p, "gamma", 1.0);
            let h = QubitBloch::new(take(&mut p, "hx", 0.0), take(&mut p, "hy", 0.0), take(&mut p, "hz", 0.0));
            let default_x = if name == "thermal" { 1.0 } else { 0.0 };
            let x = take(&mut p, "x", default_x);
            make_amplitude_damping(h, gamma, Some(x))?
        }
        "exceptional-point" => make_exceptional_point(take(&mut p, "gamma", 1.0))?,
        "dephasing" => {
            let gamma = take(&mut p, "gamma", 1.0);
            let h = QubitBloch::new(take(&mut p, "hx", 0.0), take(&mut p, "hy", 0.0), take(&mut p, "hz", 0.0));
            make_dephasing(h, gamma)?
        }
        "damped-oscillator" => {
            let cutoff = take(&mut p, "cutoff", 32.0);
            if cutoff.fract() != 0.0 || cutoff < 0.0 {
                return Err(CatalogError::Domain(format!("cutoff must be an integer, got {cutoff}")));
            }
            make_damped_oscillator(OscillatorParams {
                omega: take(&mut p, "omega", 1.0),
                gamma: take(&mut p, "gamma", 1.0),
                cutoff: cutoff as usize,
            })?
        }
        "collisional" => collisional_from(&mut p)?.as_lindblad_model(),
        other => return Err(CatalogError::UnknownModel(other.to_string())),
    };
    reject_leftovers(name, &p)?;
    Ok(model)
}

fn reject_leftovers(name: &str, params: &BTreeMap<String, f64>) -> Result<(), CatalogError> {
    match params.keys().next() {
        Some(param) => Err(CatalogError::UnknownParameter { model: name.to_string(), param: param.clone() }),
        None => Ok(()),
    }
}

/// Gaussian collision model on a centered grid: `size` (64), `dp` (0.25),
/// `width` (0.5), `mass` (1), `gamma` (1), `reach` (4, kick cutoff in widths).
fn collisional_from(p: &mut BTreeMap<String, f64>) -> Result<MomentumGridModel, CatalogError> {
    let size = take(p, "size", 64.0);
    if size.fract() != 0.0 || size < 2.0 {
        return Err(CatalogError::Domain(format!("size must be an integer ≥ 2, got {size}")));
    }
    let grid = MomentumGrid::centered(size as usize, take(p, "dp", 0.25));
    let width = take(p, "width", 0.5);
    let mass = take(p, "mass", 1.0);
    let gamma = take(p, "gamma", 1.0);
    let reach = take(p, "reach", 4.0);
    MomentumGridModel::gaussian(grid, width, mass, gamma, reach)
}

/// The `collisional` catalog entry as a grid model, for its grid metadata.
pub fn collisional_by_name(params: &BTreeMap<String, f64>) -> Result<MomentumGridModel, CatalogError> {
    let mut p = params.clone();
    let model = collisional_from(&mut p)?;
    reject_leftovers("collisional", &p)?;
    Ok(model)
}

/// Finite-dimensional catalog models with representative parameters
/// (`γ = 1` unless a rate is part of the example).
pub fn standard_models() -> Vec<(String, LindbladModel)> {
    let gamma = 1.0;
    let mut out = vec![
        ("amplitude-damping".to_string(), make_amplitude_damping(QubitBloch::zero(), gamma, None)),
        (
            "amplitude-damping-hz".to_string(),
            make_amplitude_damping(QubitBloch::new(0.0, 0.0, 0.7), gamma, None),
        ),
        (
            "amplitude-damping-hx".to_string(),
            make_amplitude_damping(QubitBloch::new(0.6, 0.0, 0.0), gamma, None),
        ),
        ("exceptional-point".to_string(), make_exceptional_point(gamma)),
        ("dephasing".to_string(), make_dephasing(QubitBloch::zero(), gamma)),
        ("dephasing-hz".to_string(), make_dephasing(QubitBloch::new(0.0, 0.0, 0.5), gamma)),
        ("dephasing-h".to_string(), make_dephasing(QubitBloch::new(0.3, -0.2, 0.5), gamma)),
    ];
    for x in [0.1, 1.0, 10.0] {
        out.push((format!("thermal-x{x}"), make_amplitude_damping(QubitBloch::zero(), gamma, Some(x))));
    }
    for cutoff in [2, 8, 32] {
        out.push((
            format!("damped-oscillator-d{cutoff}"),
            make_damped_oscillator(OscillatorParams { omega: 1.0, gamma, cutoff }),
        ));
    }
    out.push((
        "collisional-grid".to_string(),
        MomentumGridModel::gaussian(MomentumGrid::centered(24, 0.25), 0.5, 1.0, gamma, 4.0)
            .map(|m| m.as_lindblad_model()),
    ));
    out.into_iter()
        .map(|(name, m)| (name, m.expect("catalog parameters are valid")))
        .collect()
}
