#![allow(dead_code)]

use jumptime::linalg::{c, real, Operator, StateVector};
use jumptime::model::{DensityMatrix, LindbladModel};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> Operator {
    DMatrix::from_fn(d, d, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Operator {
    let a = random_matrix(rng, d);
    (&a + a.adjoint()) * real(0.5 * scale)
}

/// `GG†/Tr` with uniform complex entries: full rank almost surely.
pub fn random_density(rng: &mut ChaCha8Rng, d: usize) -> DensityMatrix {
    let g = random_matrix(rng, d);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityMatrix::new(m / real(tr)).unwrap()
}

pub fn random_pure(rng: &mut ChaCha8Rng, d: usize) -> StateVector {
    let v = StateVector::from_fn(d, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let n = v.norm();
    v / real(n)
}

/// Generic model: no dark states almost surely.
pub fn random_model(rng: &mut ChaCha8Rng, d: usize, n_ops: usize) -> LindbladModel {
    let h = random_hermitian(rng, d, 1.0);
    let ops = (0..n_ops).map(|_| random_matrix(rng, d)).collect();
    let gamma = rng.random_range(0.3..2.0);
    LindbladModel::new(h, ops, gamma).unwrap()
}

/// Model whose first `k` basis states are dark: `H` is block diagonal with a
/// diagonal dark block and every `L_j` vanishes on the dark block's columns
/// and maps nothing into it from outside.
pub fn random_dark_model(rng: &mut ChaCha8Rng, d: usize, k: usize, n_ops: usize) -> LindbladModel {
    let mut h = random_hermitian(rng, d, 1.0);
    for i in 0..d {
        for j in 0..d {
            if (i < k || j < k) && i != j {
                h[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }
    }
    let ops = (0..n_ops)
        .map(|_| {
            let mut l = random_matrix(rng, d);
            for i in 0..d {
                for j in 0..k {
                    l[(i, j)] = Complex64::new(0.0, 0.0);
                }
            }
            l
        })
        .collect();
    let gamma = rng.random_range(0.3..2.0);
    LindbladModel::new(h, ops, gamma).unwrap()
}

pub fn random_unitary(rng: &mut ChaCha8Rng, d: usize) -> Operator {
    random_matrix(rng, d).qr().q()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}
