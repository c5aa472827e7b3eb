//! Wigner functions of Fock-basis density matrices.
//!
//! Units: `a = (x + ip)/√2`, so the vacuum is `W = e^{−x²−p²}/π` and
//! `∫W dx dp = Tr ρ`. For `m ≥ n`,
//!
//! ```text
//! W_{|m⟩⟨n|}(x, p) = (−1)ⁿ/π · √(n!/m!) · (√2(x − ip))^{m−n} · e^{−r²} · L_n^{(m−n)}(2r²),
//! ```
//!
//! with `r² = x² + p²`, and `W_{|n⟩⟨m|} = conj W_{|m⟩⟨n|}`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::linalg::{c, ZERO};
use crate::model::DensityMatrix;

/// Cells wider than this in `x` or `p` get a coarse-grid warning.
pub const MAX_CELL_WIDTH: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub np: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { x_min: -5.0, x_max: 5.0, nx: 201, p_min: -5.0, p_max: 5.0, np: 201 }
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

impl GridSpec {
    pub fn xs(&self) -> Vec<f64> {
        axis(self.x_min, self.x_max, self.nx)
    }

    pub fn ps(&self) -> Vec<f64> {
        axis(self.p_min, self.p_max, self.np)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx.max(2) - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / (self.np.max(2) - 1) as f64
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = |lo: f64, hi: f64, n: usize| lo.is_finite() && hi.is_finite() && hi > lo && n >= 2;
        if ok(self.x_min, self.x_max, self.nx) && ok(self.p_min, self.p_max, self.np) {
            Ok(())
        } else {
            Err(format!("invalid Wigner grid {self:?}"))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WignerGrid {
    pub spec: GridSpec,
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
    /// `values[(i, j)] = W(x_i, p_j)`
    pub values: DMatrix<f64>,
    /// Largest discarded imaginary part.
    pub imag_residue: f64,
    pub warnings: Vec<String>,
}

impl WignerGrid {
    /// Riemann sum times cell area.
    pub fn integral(&self) -> f64 {
        self.values.sum() * self.spec.dx() * self.spec.dp()
    }

    pub fn max(&self) -> f64 {
        self.values.max()
    }

    pub fn min(&self) -> f64 {
        self.values.min()
    }

    /// `(x, p)` of the largest value.
    pub fn argmax(&self) -> (f64, f64) {
        let mut best = (0, 0);
        for i in 0..self.values.nrows() {
            for j in 0..self.values.ncols() {
                if self.values[(i, j)] > self.values[best] {
                    best = (i, j);
                }
            }
        }
        (self.xs[best.0], self.ps[best.1])
    }

    /// `∫W dp` at each grid `x`.
    pub fn marginal_x(&self) -> Vec<f64> {
        let dp = self.spec.dp();
        self.values.row_iter().map(|row| row.sum() * dp).collect()
    }

    /// Plain-text matrix: `#` metadata lines (caller's first, then grid data),
    /// then one row per `x` with `np` values, space separated.
    pub fn write_text(&self, metadata: &[String], mut out: impl Write) -> std::io::Result<()> {
        for line in metadata {
            writeln!(out, "# {line}")?;
        }
        let s = &self.spec;
        writeln!(out, "# x_min = {:.16e}", s.x_min)?;
        writeln!(out, "# x_max = {:.16e}", s.x_max)?;
        writeln!(out, "# nx = {}", s.nx)?;
        writeln!(out, "# p_min = {:.16e}", s.p_min)?;
        writeln!(out, "# p_max = {:.16e}", s.p_max)?;
        writeln!(out, "# np = {}", s.np)?;
        writeln!(out, "# rows = x, columns = p")?;
        writeln!(out, "# max = {:.16e}", self.max())?;
        writeln!(out, "# min = {:.16e}", self.min())?;
        writeln!(out, "# integral = {:.16e}", self.integral())?;
        writeln!(out, "# imag_residue = {:.16e}", self.imag_residue)?;
        for w in &self.warnings {
            writeln!(out, "# warning = {w}")?;
        }
        for row in self.values.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// `W_{|m⟩⟨n|}(x, p)` for all `m ≥ n`, returned as `k[(m, n)]`.
fn kernel_at(x: f64, p: f64, dim: usize) -> DMatrix<Complex64> {
    let r2 = x * x + p * p;
    let y = 2.0 * r2;
    let gauss = (-r2).exp() / PI;
    let z = c(2f64.sqrt() * x, -(2f64.sqrt()) * p);
    let mut out = DMatrix::from_element(dim, dim, ZERO);
    let mut zk = c(1.0, 0.0);
    for k in 0..dim {
        // n runs over 0..dim−k with m = n + k; carry √(n!/(n+k)!) and L_n^{(k)}(y)
        let mut ratio = 1.0 / (1..=k).map(|j| j as f64).product::<f64>().sqrt();
        let kf = k as f64;
        let (mut l_prev, mut l_cur) = (0.0, 1.0);
        for n in 0..dim - k {
            if n > 0 {
                let nf = (n - 1) as f64;
                let next = ((2.0 * nf + 1.0 + kf - y) * l_cur - (nf + kf) * l_prev) / (nf + 1.0);
                l_prev = l_cur;
                l_cur = next;
                ratio *= (n as f64 / (n as f64 + kf)).sqrt();
            }
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            out[(n + k, n)] = zk * (sign * ratio * gauss * l_cur);
        }
        zk *= z;
    }
    out
}

/// Wigner function of `rho` on `spec`. `rho` may be sub-normalized.
pub fn wigner(rho: &DensityMatrix, spec: &GridSpec) -> Result<WignerGrid, String> {
    spec.validate()?;
    let d = rho.dim();
    let r = rho.matrix();
    let xs = spec.xs();
    let ps = spec.ps();
    let rows: Vec<(Vec<f64>, f64)> = xs
        .par_iter()
        .map(|&x| {
            let mut row = Vec::with_capacity(ps.len());
            let mut residue: f64 = 0.0;
            for &p in &ps {
                let k = kernel_at(x, p, d);
                let mut w = ZERO;
                for n in 0..d {
                    w += r[(n, n)] * k[(n, n)];
                    for m in n + 1..d {
                        w += r[(m, n)] * k[(m, n)] + r[(n, m)] * k[(m, n)].conj();
                    }
                }
                residue = residue.max(w.im.abs());
                row.push(w.re);
            }
            (row, residue)
        })
        .collect();
    let imag_residue = rows.iter().map(|(_, res)| *res).fold(0.0, f64::max);
    let values = DMatrix::from_fn(xs.len(), ps.len(), |i, j| rows[i].0[j]);
    let mut warnings = Vec::new();
    if spec.dx() > MAX_CELL_WIDTH || spec.dp() > MAX_CELL_WIDTH {
        warnings.push(format!(
            "grid too coarse: dx = {}, dp = {} (limit {MAX_CELL_WIDTH})",
            spec.dx(),
            spec.dp()
        ));
    }
    Ok(WignerGrid { spec: *spec, xs, ps, values, imag_residue, warnings })
}

/// Harmonic-oscillator eigenfunctions `ψ_0 … ψ_{dim−1}` at `x`, by the
/// Hermite recurrence.
pub fn hermite_functions(x: f64, dim: usize) -> Vec<f64> {
    let mut psi = vec![0.0; dim];
    if dim == 0 {
        return psi;
    }
    psi[0] = PI.powf(-0.25) * (-0.5 * x * x).exp();
    if dim > 1 {
        psi[1] = 2f64.sqrt() * x * psi[0];
    }
    for m in 1..dim.saturating_sub(1) {
        let mf = m as f64;
        psi[m + 1] = (2.0 / (mf + 1.0)).sqrt() * x * psi[m] - (mf / (mf + 1.0)).sqrt() * psi[m - 1];
    }
    psi
}

/// `⟨x|ρ|x⟩` from the Fock-basis expansion.
pub fn position_distribution(rho: &DensityMatrix, xs: &[f64]) -> Vec<f64> {
    let d = rho.dim();
    let r = rho.matrix();
    xs.iter()
        .map(|&x| {
            let psi = hermite_functions(x, d);
            let mut acc = 0.0;
            for m in 0..d {
                for n in 0..d {
                    acc += (r[(m, n)] * psi[m] * psi[n]).re;
                }
            }
            acc
        })
        .collect()
}
