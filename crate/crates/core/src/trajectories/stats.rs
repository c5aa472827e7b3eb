//! Goodness-of-fit tests for sampled waiting times.

use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

impl KsResult {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Kolmogorov survival function `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF, with the
/// asymptotic p-value and Stephens' small-sample correction.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let nf = n as f64;
    let statistic = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    let sqrt_n = nf.sqrt();
    let p_value = if n == 0 { 1.0 } else { kolmogorov_q((sqrt_n + 0.12 + 0.11 / sqrt_n) * statistic) };
    KsResult { statistic, p_value, n }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Bin edges after merging sparse bins.
    pub edges: Vec<f64>,
}

impl ChiSquareResult {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Pearson chi-square test of binned samples against a CDF. Adjacent bins are
/// merged until each expected count is at least 5; the outermost edges are
/// extended to cover the full support.
pub fn chi_square_test(samples: &[f64], cdf: impl Fn(f64) -> f64, edges: &[f64]) -> ChiSquareResult {
    assert!(edges.len() >= 2, "need at least one bin");
    let n = samples.len() as f64;
    let nb = edges.len() - 1;
    let mut observed = vec![0.0; nb];
    for &x in samples {
        let k = edges[1..nb].partition_point(|&e| e <= x);
        observed[k] += 1.0;
    }
    let cdf_at = |k: usize| match k {
        0 => 0.0,
        k if k == nb => 1.0,
        k => cdf(edges[k]),
    };
    let expected: Vec<f64> = (0..nb).map(|k| n * (cdf_at(k + 1) - cdf_at(k))).collect();

    let mut merged: Vec<(f64, f64, f64)> = Vec::new(); // (upper edge, observed, expected)
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for k in 0..nb {
        o_acc += observed[k];
        e_acc += expected[k];
        if e_acc >= 5.0 {
            merged.push((edges[k + 1], o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match merged.last_mut() {
            Some(last) => {
                last.0 = edges[nb];
                last.1 += o_acc;
                last.2 += e_acc;
            }
            None => merged.push((edges[nb], o_acc, e_acc)),
        }
    }
    let statistic: f64 = merged.iter().map(|&(_, o, e)| (o - e).powi(2) / e).sum();
    let dof = merged.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(statistic)
    };
    let mut out_edges = vec![edges[0]];
    out_edges.extend(merged.iter().map(|m| m.0));
    ChiSquareResult { statistic, dof, p_value, edges: out_edges }
}
