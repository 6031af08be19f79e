//! Monte Carlo draws of the rescaled spectral radius.
//!
//! The moduli of the eigenvalues of a product of k Ginibre matrices have
//! the same joint law as independent √Y_j, j = 1..n, so the spectral radius
//! is sampled from Gamma products without forming any matrix.

use rand_distr::Gamma;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gamma_product::{block_rng, sample_log_with, stream_key, BLOCK};
use crate::scaling::{rescale_log_y, EnsembleParams};

/// Keeps sampler streams apart from the per-m streams used by the tails.
const SAMPLER_SALT: u64 = 0x5a4d_504c_4552_0001;

/// Sorted sample with rank-based evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn from_samples(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("EmpiricalCdf", "no samples"));
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::domain("EmpiricalCdf", "NaN sample"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { sorted: samples })
    }

    pub fn count(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted_samples(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of samples ≤ x.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.count() as f64
    }
}

/// `count` draws of X_n = (√α_n (max_j log Y_j − k ψ(n)) − a_n)/b_n.
///
/// Sample i comes from the ChaCha stream of block i / 4096, so the result
/// depends only on (params, count, seed).
pub fn sample_spectral_radius(params: &EnsembleParams, count: u64, seed: u64) -> Result<EmpiricalCdf> {
    if count == 0 {
        return Err(Error::domain("sample_spectral_radius", "count must be positive"));
    }
    let gammas: Vec<Gamma<f64>> = (1..=params.n)
        .map(|j| Gamma::new(j as f64, 1.0).expect("shape is positive"))
        .collect();
    let key = stream_key(seed, SAMPLER_SALT ^ params.n.rotate_left(32) ^ params.k);
    let blocks = count.div_ceil(BLOCK);
    let draws: Vec<f64> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = block_rng(key, b);
            let len = BLOCK.min(count - b * BLOCK);
            let gammas = &gammas;
            (0..len)
                .map(move |_| {
                    let m = gammas
                        .iter()
                        .map(|g| sample_log_with(g, params.k, &mut rng))
                        .fold(f64::NEG_INFINITY, f64::max);
                    rescale_log_y(params, m)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    EmpiricalCdf::from_samples(draws)
}

/// One-sample Kolmogorov–Smirnov statistic
/// max_i max(|i/N − F(x₍ᵢ₎)|, |(i−1)/N − F(x₍ᵢ₎)|).
pub fn ks_distance(emp: &EmpiricalCdf, f: impl Fn(f64) -> f64) -> f64 {
    let n = emp.count() as f64;
    emp.sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let fx = f(x);
            let i = i as f64;
            ((i + 1.0) / n - fx).abs().max((i / n - fx).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic sup_x |F₁(x) − F₂(x)|.
pub fn ks_two_sample(a: &EmpiricalCdf, b: &EmpiricalCdf) -> f64 {
    let (na, nb) = (a.count() as f64, b.count() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.sorted.len() && j < b.sorted.len() {
        let x = a.sorted[i].min(b.sorted[j]);
        while i < a.sorted.len() && a.sorted[i] <= x {
            i += 1;
        }
        while j < b.sorted.len() && b.sorted[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// The 99% asymptotic critical value 1.63/√N of the one-sample statistic.
pub fn ks_critical_99(count: usize) -> f64 {
    1.63 / (count as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{digamma, normal_cdf};

    #[test]
    fn single_sample_ks() {
        let e = EmpiricalCdf::from_samples(vec![0.3]).unwrap();
        let d = ks_distance(&e, normal_cdf);
        let f = normal_cdf(0.3);
        assert!((d - f.max(1.0 - f)).abs() < 1e-15);
    }

    #[test]
    fn quantile_sample_is_close() {
        // Quantiles of the logistic law at i/(N+1).
        let n = 999;
        let f = |x: f64| 1.0 / (1.0 + (-x).exp());
        let xs: Vec<f64> = (1..=n).map(|i| {
            let u = i as f64 / (n + 1) as f64;
            (u / (1.0 - u)).ln()
        }).collect();
        let e = EmpiricalCdf::from_samples(xs).unwrap();
        assert!(ks_distance(&e, f) <= 1.0 / (n + 1) as f64 + 1e-12);
    }

    #[test]
    fn uniform_against_normal() {
        // Oracle by brute force over a fine grid of the two step functions.
        let xs: Vec<f64> = (0..200).map(|i| (i as f64 + 0.5) / 200.0).collect();
        let e = EmpiricalCdf::from_samples(xs.clone()).unwrap();
        let mut oracle: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let f = normal_cdf(x);
            oracle = oracle.max((f - i as f64 / 200.0).abs()).max((f - (i + 1) as f64 / 200.0).abs());
        }
        assert!((ks_distance(&e, normal_cdf) - oracle).abs() < 1e-15);
        assert!(oracle > 0.3 && oracle < 0.55);
    }

    #[test]
    fn exponential_case_matches_closed_form() {
        let p = EnsembleParams::new(1, 1).unwrap();
        let count = 50_000;
        let e = sample_spectral_radius(&p, count, 11).unwrap();
        let f = p.finite_constants();
        let cdf = |x: f64| 1.0 - (-(digamma(1.0).unwrap() + f.a_n + f.b_n * x).exp()).exp();
        assert!(ks_distance(&e, cdf) < ks_critical_99(count as usize));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let p = EnsembleParams::new(4, 3).unwrap();
        let a = sample_spectral_radius(&p, 9000, 6).unwrap();
        let b = sample_spectral_radius(&p, 9000, 6).unwrap();
        let c = sample_spectral_radius(&p, 9000, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let crit = 1.63 * (2.0 / 9000.0f64).sqrt();
        assert!(ks_two_sample(&a, &c) < crit);
    }

    #[test]
    fn two_sample_ks_of_shift() {
        let a = EmpiricalCdf::from_samples(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = EmpiricalCdf::from_samples(vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!((ks_two_sample(&a, &b) - 0.5).abs() < 1e-15);
        assert_eq!(ks_two_sample(&a, &a), 0.0);
    }
}
