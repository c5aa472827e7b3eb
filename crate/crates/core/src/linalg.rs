//! Dense complex linear algebra shared by the evolution modules.
//!
//! Everything here works on `DMatrix<Complex64>`. Eigen-decompositions of
//! non-Hermitian matrices are built from nalgebra's complex Schur form, which
//! is strictly upper triangular for complex input.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

/// Square complex matrix: Hamiltonians, jump operators, density matrices.
pub type Operator = DMatrix<Complex64>;
/// Column state vector.
pub type StateVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn real(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(dim: usize) -> Operator {
    Operator::identity(dim, dim)
}

/// Largest entrywise modulus.
pub fn max_abs(m: &Operator) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest entrywise modulus of `m − m†`.
pub fn hermiticity_defect(m: &Operator) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(m + m†)/2`
pub fn hermitian_part(m: &Operator) -> Operator {
    (m + m.adjoint()) * real(0.5)
}

pub fn trace(m: &Operator) -> Complex64 {
    m.diagonal().iter().sum()
}

pub fn is_finite(m: &Operator) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `|ψ⟩⟨ψ|`
pub fn outer(psi: &StateVector) -> Operator {
    psi * psi.adjoint()
}

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues ascending.
pub fn hermitian_eigen(m: &Operator) -> (Vec<f64>, Operator) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), Operator::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = Operator::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// `½‖a − b‖₁` for Hermitian arguments.
pub fn trace_distance(a: &Operator, b: &Operator) -> f64 {
    let (values, _) = hermitian_eigen(&(a - b));
    0.5 * values.iter().map(|v| v.abs()).sum::<f64>()
}

/// Column-stacking vectorization (nalgebra storage is column-major).
pub fn vectorize(m: &Operator) -> StateVector {
    StateVector::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &StateVector, dim: usize) -> Operator {
    Operator::from_column_slice(dim, dim, v.as_slice())
}

/// Orthonormal basis (as columns) of the orthogonal complement of the span of
/// the orthonormal columns of `basis` inside `C^dim`.
pub fn orthogonal_complement(basis: &Operator, dim: usize) -> Operator {
    let k = basis.ncols();
    if k == 0 {
        return identity(dim);
    }
    let projector = identity(dim) - basis * basis.adjoint();
    let (values, vectors) = hermitian_eigen(&projector);
    // Eigenvalues of a projector are 0 (k times) and 1 (dim − k times).
    let keep: Vec<usize> = (0..dim).filter(|&j| values[j] > 0.5).collect();
    Operator::from_fn(dim, keep.len(), |i, j| vectors[(i, keep[j])])
}

/// Eigen-decomposition `A = V Λ V⁻¹` of a general complex matrix.
#[derive(Clone, Debug)]
pub struct Eigensystem {
    pub values: Vec<Complex64>,
    pub vectors: Operator,
    pub inverse: Operator,
    /// Frobenius condition number of the eigenvector matrix.
    pub condition: f64,
}

impl Eigensystem {
    /// Returns `None` when the eigenvector matrix is singular or its condition
    /// number exceeds `max_condition` (defective or nearly defective input).
    pub fn new(a: &Operator, max_condition: f64) -> Option<Self> {
        assert!(a.is_square());
        let n = a.nrows();
        if n == 0 || !is_finite(a) {
            return None;
        }
        let (q, t) = a.clone().schur().unpack();
        let scale = max_abs(&t).max(f64::MIN_POSITIVE);
        let floor = f64::EPSILON * scale;

        let mut vt = Operator::zeros(n, n);
        for k in 0..n {
            vt[(k, k)] = ONE;
            for j in (0..k).rev() {
                let mut s = ZERO;
                for l in (j + 1)..=k {
                    s += t[(j, l)] * vt[(l, k)];
                }
                let mut denom = t[(j, j)] - t[(k, k)];
                if denom.norm() < floor {
                    denom = real(floor);
                }
                vt[(j, k)] = -s / denom;
            }
            let norm = vt.column(k).norm();
            vt.column_mut(k).unscale_mut(norm);
        }
        let vt_inv = vt.clone().try_inverse()?;
        let condition = vt.norm() * vt_inv.norm();
        if !condition.is_finite() || condition > max_condition {
            return None;
        }
        Some(Self {
            values: t.diagonal().iter().copied().collect(),
            vectors: &q * vt,
            inverse: vt_inv * q.adjoint(),
            condition,
        })
    }
}

/// Eigenvalues of a general complex matrix, read off its Schur form.
pub fn eigenvalues(a: &Operator) -> Vec<Complex64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let (_, t) = a.clone().schur().unpack();
    t.diagonal().iter().copied().collect()
}

/// Maximum eigenvector condition number accepted before falling back to
/// Padé scaling-and-squaring.
pub const DEFAULT_MAX_CONDITION: f64 = 1e7;

/// Evaluates `exp(G τ)` for a fixed generator `G` and many `τ`.
#[derive(Clone, Debug)]
pub enum Propagator {
    Spectral(Eigensystem),
    /// Defective generator; every evaluation runs Padé scaling-and-squaring.
    Pade(Operator),
}

impl Propagator {
    pub fn new(generator: &Operator) -> Self {
        match Eigensystem::new(generator, DEFAULT_MAX_CONDITION) {
            Some(eig) => Propagator::Spectral(eig),
            None => Propagator::Pade(generator.clone()),
        }
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self, Propagator::Spectral(_))
    }

    pub fn at(&self, tau: f64) -> Operator {
        match self {
            Propagator::Spectral(eig) => {
                let mut scaled = eig.vectors.clone();
                for (j, lambda) in eig.values.iter().enumerate() {
                    let f = (lambda * tau).exp();
                    for z in scaled.column_mut(j).iter_mut() {
                        *z *= f;
                    }
                }
                scaled * &eig.inverse
            }
            Propagator::Pade(g) => (g * real(tau)).exp(),
        }
    }

    /// Prepares `exp(G τ) v` for repeated evaluation at different `τ`.
    pub fn prepare(&self, v: &StateVector) -> PreparedVector<'_> {
        match self {
            Propagator::Spectral(eig) => PreparedVector::Spectral {
                eig,
                coefficients: &eig.inverse * v,
            },
            Propagator::Pade(g) => PreparedVector::Pade { generator: g, v: v.clone() },
        }
    }
}

pub enum PreparedVector<'a> {
    Spectral { eig: &'a Eigensystem, coefficients: StateVector },
    Pade { generator: &'a Operator, v: StateVector },
}

impl PreparedVector<'_> {
    pub fn at(&self, tau: f64) -> StateVector {
        match self {
            PreparedVector::Spectral { eig, coefficients } => {
                let weighted = StateVector::from_iterator(
                    coefficients.len(),
                    coefficients
                        .iter()
                        .zip(&eig.values)
                        .map(|(c, lambda)| c * (lambda * tau).exp()),
                );
                &eig.vectors * weighted
            }
            PreparedVector::Pade { generator, v } => (*generator * real(tau)).exp() * v,
        }
    }
}

/// Raised when a Sylvester operator has (numerically) coinciding spectra.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("singular Sylvester operator: |a_ii + b_jj| = {gap:e} at ({row}, {col})")]
pub struct SingularSylvester {
    pub row: usize,
    pub col: usize,
    pub gap: f64,
}

/// Complex Bartels–Stewart solver for `A X + X B = C`.
///
/// Both coefficients are reduced to Schur form once; each [`solve`] then costs
/// O(n³) with no further factorization.
///
/// [`solve`]: SylvesterSolver::solve
#[derive(Clone, Debug)]
pub struct SylvesterSolver {
    qa: Operator,
    ta: Operator,
    qb: Operator,
    tb: Operator,
    min_gap: f64,
}

impl SylvesterSolver {
    /// `min_gap` is the smallest admissible `|a_ii + b_jj|`, in absolute units.
    pub fn new(a: &Operator, b: &Operator, min_gap: f64) -> Self {
        let (qa, ta) = a.clone().schur().unpack();
        let (qb, tb) = b.clone().schur().unpack();
        Self { qa, ta, qb, tb, min_gap }
    }

    /// Smallest `|a_ii + b_jj|` over the two spectra.
    pub fn spectral_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for i in 0..self.ta.nrows() {
            for j in 0..self.tb.nrows() {
                gap = gap.min((self.ta[(i, i)] + self.tb[(j, j)]).norm());
            }
        }
        gap
    }

    pub fn solve(&self, rhs: &Operator) -> Result<Operator, SingularSylvester> {
        let m = self.ta.nrows();
        let n = self.tb.nrows();
        let f = self.qa.adjoint() * rhs * &self.qb;
        let mut y = Operator::zeros(m, n);
        // Column j of T_a Y + Y T_b: (T_a + b_jj) y_j = f_j − Σ_{k<j} b_kj y_k.
        for j in 0..n {
            let mut col: StateVector = f.column(j).into_owned();
            for k in 0..j {
                let b_kj = self.tb[(k, j)];
                if b_kj != ZERO {
                    col.axpy(-b_kj, &y.column(k), ONE);
                }
            }
            let shift = self.tb[(j, j)];
            for i in (0..m).rev() {
                let mut s = col[i];
                for l in (i + 1)..m {
                    s -= self.ta[(i, l)] * y[(l, j)];
                }
                let diag = self.ta[(i, i)] + shift;
                if diag.norm() <= self.min_gap {
                    return Err(SingularSylvester { row: i, col: j, gap: diag.norm() });
                }
                y[(i, j)] = s / diag;
            }
        }
        Ok(&self.qa * y * self.qb.adjoint())
    }
}

/// Orthonormal basis of the null space of `m` (columns), using singular
/// values at or below `threshold`.
pub fn null_space(m: &Operator, threshold: f64) -> Operator {
    let cols = m.ncols();
    if cols == 0 {
        return Operator::zeros(0, 0);
    }
    // Pad to at least `cols` rows so the SVD returns a full right basis.
    let padded = if m.nrows() < cols {
        let mut p = Operator::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let keep: Vec<usize> = (0..cols)
        .filter(|&k| svd.singular_values[k] <= threshold)
        .collect();
    Operator::from_fn(cols, keep.len(), |i, j| v_t[(keep[j], i)].conj())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample(n: usize, salt: u64) -> Operator {
        let mut state = salt.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        Operator::from_fn(n, n, |_, _| c(next(), next()))
    }

    #[test]
    fn sylvester_residual_is_small() {
        for n in [1, 2, 5, 9] {
            let a = sample(n, 1) - identity(n) * real(3.0);
            let b = sample(n, 2) + identity(n) * c(0.0, 2.0);
            let rhs = sample(n, 3);
            let x = SylvesterSolver::new(&a, &b, 1e-12).solve(&rhs).unwrap();
            assert!(max_abs(&(&a * &x + &x * &b - &rhs)) < 1e-12);
        }
    }

    #[test]
    fn sylvester_reports_singularity() {
        let a = Operator::from_diagonal(&StateVector::from_vec(vec![real(1.0), real(2.0)]));
        let b = -a.clone();
        let err = SylvesterSolver::new(&a, &b, 1e-12).solve(&identity(2)).unwrap_err();
        assert!(err.gap < 1e-12);
    }

    #[test]
    fn spectral_propagator_matches_pade() {
        let g = sample(6, 7) - identity(6);
        let prop = Propagator::new(&g);
        assert!(prop.is_spectral());
        for tau in [0.0, 0.3, 2.5] {
            let expected = (&g * real(tau)).exp();
            assert!(max_abs(&(prop.at(tau) - &expected)) < 1e-12);
            let v = StateVector::from_fn(6, |i, _| c(i as f64, 1.0));
            let prepared = prop.prepare(&v);
            assert!((prepared.at(tau) - &expected * &v).norm() < 1e-11);
        }
    }

    #[test]
    fn jordan_block_falls_back_to_pade() {
        let g = Operator::from_row_slice(2, 2, &[real(-1.0), real(1.0), ZERO, real(-1.0)]);
        let prop = Propagator::new(&g);
        assert!(!prop.is_spectral());
        let u = prop.at(2.0);
        assert_abs_diff_eq!(u[(0, 1)].re, 2.0 * (-2.0f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn null_space_of_stacked_lowering_operator() {
        let sm = Operator::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
        let k = null_space(&sm, 1e-8);
        assert_eq!(k.ncols(), 1);
        assert_abs_diff_eq!(k[(0, 0)].norm(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn trace_distance_of_orthogonal_pure_states_is_one() {
        let a = Operator::from_diagonal(&StateVector::from_vec(vec![ONE, ZERO]));
        let b = Operator::from_diagonal(&StateVector::from_vec(vec![ZERO, ONE]));
        assert_abs_diff_eq!(trace_distance(&a, &b), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn complement_is_orthonormal() {
        let v = StateVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8), ZERO]);
        let basis = Operator::from_columns(&[v]);
        let comp = orthogonal_complement(&basis, 3);
        assert_eq!(comp.ncols(), 2);
        assert!(max_abs(&(comp.adjoint() * &comp - identity(2))) < 1e-14);
        assert!(max_abs(&(basis.adjoint() * &comp)) < 1e-14);
    }
}
