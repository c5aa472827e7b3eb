//! Free particle under collisional decoherence, on a uniform momentum grid.
//!
//! Jump operators `e^{iqx}` kick the momentum by `q`, drawn from `G(q)`
//! (normalized, so `γ` is the total collision rate). In momentum
//! representation the jumptime step is
//!
//! ```text
//! ⟨p|ρ'|p′⟩ = Σ_q G(q) K(p−q, p′−q) ⟨p−q|ρ|p′−q⟩,
//! K(p, p′) = [1 + i(p−p′)(p+p′)/(2mγ)]⁻¹.
//! ```
//!
//! Kicks act as cyclic shifts on the grid. A guard band rejects states that
//! would carry measurable weight across the boundary.

use num_complex::Complex64;

use super::CatalogError;
use crate::linalg::{c, real, Operator, StateVector, ZERO};
use crate::model::LindbladModel;

/// Largest diagonal weight allowed within kick range of the grid edges.
pub const GUARD_WEIGHT: f64 = 1e-12;

/// Uniform grid `p_k = p_min + k·dp`, `k = 0 … size−1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentumGrid {
    pub p_min: f64,
    pub dp: f64,
    pub size: usize,
}

impl MomentumGrid {
    /// Grid of `size` points, spacing `dp`, symmetric about zero.
    pub fn centered(size: usize, dp: f64) -> Self {
        Self { p_min: -0.5 * dp * (size as f64 - 1.0), dp, size }
    }

    pub fn p(&self, k: usize) -> f64 {
        self.p_min + k as f64 * self.dp
    }
}

/// Collision model: grid, kick distribution on multiples of `dp`, mass, rate.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumGridModel {
    grid: MomentumGrid,
    /// `G` at kick offsets `min_offset, min_offset + 1, …` (in grid steps).
    kick_weights: Vec<f64>,
    min_offset: isize,
    mass: f64,
    gamma: f64,
}

impl MomentumGridModel {
    pub fn new(
        grid: MomentumGrid,
        kick_weights: Vec<f64>,
        min_offset: isize,
        mass: f64,
        gamma: f64,
    ) -> Result<Self, CatalogError> {
        if grid.size < 2 || !(grid.dp.is_finite() && grid.dp > 0.0) {
            return Err(CatalogError::Domain("momentum grid needs at least 2 points and dp > 0".into()));
        }
        if !(mass.is_finite() && mass > 0.0) || !(gamma.is_finite() && gamma > 0.0) {
            return Err(CatalogError::Domain("mass and gamma must be positive".into()));
        }
        if kick_weights.is_empty() || kick_weights.iter().any(|&g| !(g.is_finite() && g >= 0.0)) {
            return Err(CatalogError::Domain("kick weights must be non-negative".into()));
        }
        let total: f64 = kick_weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(CatalogError::Domain(format!("kick weights must sum to 1, got {total}")));
        }
        let max_offset = min_offset + kick_weights.len() as isize - 1;
        if min_offset.unsigned_abs() >= grid.size || max_offset.unsigned_abs() >= grid.size {
            return Err(CatalogError::Domain("kick range exceeds the momentum grid".into()));
        }
        Ok(Self { grid, kick_weights, min_offset, mass, gamma })
    }

    /// Gaussian `G(q) ∝ exp(−q²/2σ²)` sampled on multiples of `dp` up to
    /// `cutoff_sigmas·σ`, normalized to unit sum.
    pub fn gaussian(
        grid: MomentumGrid,
        kick_width: f64,
        mass: f64,
        gamma: f64,
        cutoff_sigmas: f64,
    ) -> Result<Self, CatalogError> {
        if !(kick_width.is_finite() && kick_width > 0.0) {
            return Err(CatalogError::Domain("kick width must be positive".into()));
        }
        let reach = (cutoff_sigmas * kick_width / grid.dp).ceil() as isize;
        let raw: Vec<f64> = (-reach..=reach)
            .map(|k| {
                let q = k as f64 * grid.dp;
                (-0.5 * q * q / (kick_width * kick_width)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        Self::new(grid, raw.iter().map(|g| g / total).collect(), -reach, mass, gamma)
    }

    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self, CatalogError> {
        Self::new(self.grid, self.kick_weights.clone(), self.min_offset, self.mass, gamma)
    }

    /// `(offset in grid steps, weight)` pairs.
    pub fn kicks(&self) -> impl Iterator<Item = (isize, f64)> + '_ {
        self.kick_weights
            .iter()
            .enumerate()
            .map(move |(k, &g)| (self.min_offset + k as isize, g))
    }

    /// `Δ_G² = Σ_q q² G(q)`
    pub fn kick_variance(&self) -> f64 {
        self.kicks().map(|(k, g)| (k as f64 * self.grid.dp).powi(2) * g).sum()
    }

    pub fn kick_mean(&self) -> f64 {
        self.kicks().map(|(k, g)| k as f64 * self.grid.dp * g).sum()
    }

    pub fn propagator(&self, p: f64, pp: f64) -> Complex64 {
        real(1.0) / c(1.0, (p - pp) * (p + pp) / (2.0 * self.mass * self.gamma))
    }

    fn guard_weight(&self, rho: &Operator) -> f64 {
        let m = self.grid.size as isize;
        let lo = self.min_offset;
        let hi = self.min_offset + self.kick_weights.len() as isize - 1;
        (0..m)
            .filter(|&i| i + hi >= m || i + lo < 0)
            .map(|i| rho[(i as usize, i as usize)].re.abs())
            .sum()
    }

    /// Same dynamics as a finite Lindblad model: `H = p²/2m` on the grid and
    /// `L_q = √G(q) S_q` with cyclic shifts `S_q`. Only sensible for small grids.
    pub fn as_lindblad_model(&self) -> LindbladModel {
        let n = self.grid.size;
        let h = Operator::from_fn(n, n, |i, j| {
            if i == j {
                real(self.grid.p(i).powi(2) / (2.0 * self.mass))
            } else {
                ZERO
            }
        });
        let ops = self
            .kicks()
            .filter(|&(_, g)| g > 0.0)
            .map(|(k, g)| {
                let mut s = Operator::zeros(n, n);
                for i in 0..n {
                    let to = (i as isize + k).rem_euclid(n as isize) as usize;
                    s[(to, i)] = real(g.sqrt());
                }
                s
            })
            .collect();
        LindbladModel::new(h, ops, self.gamma)
            .expect("grid model is well formed")
            .with_label("collisional-grid")
    }
}

/// Applies the jumptime step `steps` times.
pub fn collisional_jumptime_map(
    model: &MomentumGridModel,
    rho: &Operator,
    steps: usize,
) -> Result<Operator, CatalogError> {
    let n = model.grid.size;
    if rho.nrows() != n || rho.ncols() != n {
        return Err(CatalogError::Domain(format!(
            "state is {}x{}, grid has {n} points",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let kernel = Operator::from_fn(n, n, |a, b| model.propagator(model.grid.p(a), model.grid.p(b)));
    let total = rho.trace().re.abs().max(f64::MIN_POSITIVE);
    let mut current = rho.clone();
    for step in 0..steps {
        let edge = model.guard_weight(&current);
        if edge > GUARD_WEIGHT * total {
            return Err(CatalogError::Domain(format!(
                "step {step}: weight {edge:e} within kick range of the grid edge"
            )));
        }
        let damped = current.component_mul(&kernel);
        let mut next = Operator::zeros(n, n);
        for (k, g) in model.kicks() {
            if g == 0.0 {
                continue;
            }
            for b in 0..n {
                let sb = (b as isize - k).rem_euclid(n as isize) as usize;
                for a in 0..n {
                    let sa = (a as isize - k).rem_euclid(n as isize) as usize;
                    next[(a, b)] += damped[(sa, sb)] * g;
                }
            }
        }
        current = next;
    }
    Ok(current)
}

pub fn momentum_mean(grid: &MomentumGrid, rho: &Operator) -> f64 {
    let tr = rho.trace().re;
    (0..grid.size).map(|k| grid.p(k) * rho[(k, k)].re).sum::<f64>() / tr
}

pub fn momentum_variance(grid: &MomentumGrid, rho: &Operator) -> f64 {
    let tr = rho.trace().re;
    let mean = momentum_mean(grid, rho);
    (0..grid.size).map(|k| (grid.p(k) - mean).powi(2) * rho[(k, k)].re).sum::<f64>() / tr
}

/// `⟨x⟩` from the central-difference form of `x = i d/dp`:
/// `⟨x⟩ = −Im Σ_k ρ_{k+1,k} / dp`, accurate to O(dp²).
pub fn position_mean(grid: &MomentumGrid, rho: &Operator) -> f64 {
    position_mean_at_stride(grid, rho, 1)
}

/// Same estimate from the `stride`-th off-diagonal, with spacing `stride·dp`.
/// On the periodic grid this is `⟨sin(s x)⟩/s` for `s = stride·dp`, so the
/// error is `−s²⟨x³⟩/6 + O(s⁴)`; comparing strides 1 and 2 estimates it.
pub fn position_mean_at_stride(grid: &MomentumGrid, rho: &Operator, stride: usize) -> f64 {
    assert!(stride >= 1 && stride < grid.size, "stride out of range");
    let tr = rho.trace().re;
    let coherence: Complex64 = (0..grid.size - stride).map(|k| rho[(k + stride, k)]).sum();
    -coherence.im / (stride as f64 * grid.dp) / tr
}

/// Gaussian wave packet centred at `(x0, p0)` with momentum width `sigma_p`,
/// normalized on the grid.
pub fn gaussian_wavepacket(grid: &MomentumGrid, p0: f64, sigma_p: f64, x0: f64) -> StateVector {
    let psi = StateVector::from_fn(grid.size, |k, _| {
        let p = grid.p(k);
        let amp = (-(p - p0).powi(2) / (4.0 * sigma_p * sigma_p)).exp();
        Complex64::from_polar(amp, -p * x0)
    });
    let norm = psi.norm();
    psi / real(norm)
}
