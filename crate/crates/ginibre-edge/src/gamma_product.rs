//! The law of log Y_j, where Y_j = S_{j,1}⋯S_{j,k} and the S_{j,r} are
//! independent Gamma(j, 1) variables.
//!
//! Cumulants are exact: the r-th cumulant of log S_{j,1} is ψ⁽ʳ⁻¹⁾(j), and
//! log Y_j is a sum of k independent copies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::specfun::{
    digamma, gamma_reg, ln_gamma_ratio, normal_cdf, normal_pdf, normal_sf, polygamma,
};

/// Default sample count for Monte Carlo tails.
pub const DEFAULT_MC_SAMPLES: u64 = 1_000_000;

/// Smallest k for which the automatic method picks the Edgeworth series.
pub const EDGEWORTH_MIN_K: u64 = 30;

/// Samples per RNG stream. Each block of this many consecutive sample
/// indices is drawn from its own ChaCha stream, so the output does not
/// depend on how blocks are scheduled.
pub(crate) const BLOCK: u64 = 4096;

/// Gamma draws multiplied together before one logarithm. Eight unit-scale
/// draws cannot underflow or overflow an f64 product.
const LOG_CHUNK: usize = 8;

/// Distribution of log Y_j for a product of k Gamma(j, 1) factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GammaProductDist {
    shape: u64,
    factors: u64,
}

impl GammaProductDist {
    pub fn new(shape: u64, factors: u64) -> Result<Self> {
        if shape == 0 || factors == 0 {
            return Err(Error::domain(
                "GammaProductDist",
                format!("shape = {shape}, factors = {factors}; both must be positive"),
            ));
        }
        Ok(Self { shape, factors })
    }

    pub fn shape(&self) -> u64 {
        self.shape
    }

    pub fn factors(&self) -> u64 {
        self.factors
    }

    fn j(&self) -> f64 {
        self.shape as f64
    }

    fn k(&self) -> f64 {
        self.factors as f64
    }

    /// E log Y_j = k ψ(j).
    pub fn mean(&self) -> f64 {
        self.k() * digamma(self.j()).expect("shape is positive")
    }

    /// Var log Y_j = k ψ′(j).
    pub fn variance(&self) -> f64 {
        self.k() * polygamma(1, self.j()).expect("shape is positive")
    }

    /// Third cumulant k ψ″(j).
    pub fn cumulant3(&self) -> f64 {
        self.k() * polygamma(2, self.j()).expect("shape is positive")
    }

    /// Fourth cumulant k ψ‴(j).
    pub fn cumulant4(&self) -> f64 {
        self.k() * polygamma(3, self.j()).expect("shape is positive")
    }

    /// Standardized third cumulant λ₃ (skewness).
    pub fn skewness(&self) -> f64 {
        self.cumulant3() / self.variance().powf(1.5)
    }

    /// Standardized fourth cumulant λ₄ (excess kurtosis).
    pub fn excess_kurtosis(&self) -> f64 {
        let v = self.variance();
        self.cumulant4() / (v * v)
    }

    /// log E[Y_j^λ] = k (ln Γ(j+λ) − ln Γ(j)), finite for λ > −j.
    pub fn mgf_exponent(&self, lambda: f64) -> Result<f64> {
        if !(lambda > -self.j()) {
            return Err(Error::domain("mgf_exponent", format!("lambda = {lambda} ≤ −j")));
        }
        Ok(self.k() * ln_gamma_ratio(self.j(), lambda))
    }

    /// Standardizes a threshold t on the log Y scale.
    pub fn standardize(&self, t: f64) -> f64 {
        (t - self.mean()) / self.variance().sqrt()
    }

    /// One draw of log Y_j.
    pub fn sample_log<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let gamma = Gamma::new(self.j(), 1.0).expect("shape is positive");
        sample_log_with(&gamma, self.factors, rng)
    }

    /// `count` independent draws of log Y_j. The result depends only on
    /// (`seed`, the distribution, `count`), never on the thread count.
    pub fn sample_batch(&self, count: u64, seed: u64) -> Vec<f64> {
        self.sample_batch_salted(count, seed, 0)
    }

    /// As [`sample_batch`](Self::sample_batch), with an extra key so that
    /// several distributions driven by one seed use unrelated streams.
    pub(crate) fn sample_batch_salted(&self, count: u64, seed: u64, salt: u64) -> Vec<f64> {
        let gamma = Gamma::new(self.j(), 1.0).expect("shape is positive");
        let blocks = count.div_ceil(BLOCK);
        let key = stream_key(seed, salt ^ self.shape.rotate_left(32) ^ self.factors);
        (0..blocks)
            .into_par_iter()
            .flat_map_iter(|b| {
                let mut rng = block_rng(key, b);
                let len = BLOCK.min(count - b * BLOCK);
                (0..len)
                    .map(|_| sample_log_with(&gamma, self.factors, &mut rng))
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

pub(crate) fn sample_log_with<R: Rng + ?Sized>(gamma: &Gamma<f64>, factors: u64, rng: &mut R) -> f64 {
    let mut total = 0.0;
    let mut left = factors as usize;
    while left > 0 {
        let take = left.min(LOG_CHUNK);
        let mut prod = 1.0;
        for _ in 0..take {
            prod *= gamma.sample(rng);
        }
        total += prod.ln();
        left -= take;
    }
    total
}

/// A 256-bit ChaCha key from a seed and a salt.
pub(crate) fn stream_key(seed: u64, salt: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&salt.to_le_bytes());
    key[16..24].copy_from_slice(&0x9e37_79b9_7f4a_7c15u64.to_le_bytes());
    key
}

/// The RNG for block `b` under `key`: ChaCha8 with stream id `b`.
pub(crate) fn block_rng(key: [u8; 32], b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(b);
    rng
}

/// Strategy for P(log Y_j ≥ t).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TailMethod {
    /// Exact Q(j, e^t); k = 1 only.
    ExactK1,
    /// Second-order Edgeworth series with exact cumulants.
    Edgeworth,
    /// Optimized Chernoff upper bound.
    Chernoff,
    /// Empirical tail of `samples` draws.
    MonteCarlo { samples: u64, seed: u64 },
}

impl TailMethod {
    /// ExactK1 for k = 1, Edgeworth for k ≥ 30, Monte Carlo with 10⁶
    /// samples in between.
    pub fn auto(factors: u64, seed: u64) -> Self {
        if factors == 1 {
            TailMethod::ExactK1
        } else if factors >= EDGEWORTH_MIN_K {
            TailMethod::Edgeworth
        } else {
            TailMethod::MonteCarlo {
                samples: DEFAULT_MC_SAMPLES,
                seed,
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TailMethod::ExactK1 => "exact-k1",
            TailMethod::Edgeworth => "edgeworth",
            TailMethod::Chernoff => "chernoff",
            TailMethod::MonteCarlo { .. } => "monte-carlo",
        }
    }
}

/// A tail probability together with its complement, each computed so that
/// it keeps relative accuracy when small.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    /// P(log Y_j ≥ t).
    pub tail: f64,
    /// P(log Y_j < t).
    pub cdf: f64,
    /// Standard error, for Monte Carlo estimates.
    pub stderr: Option<f64>,
}

impl TailEstimate {
    fn exact(tail: f64, cdf: f64) -> Self {
        Self {
            tail,
            cdf,
            stderr: None,
        }
    }

    /// log P(log Y_j < t).
    pub fn ln_cdf(&self) -> f64 {
        if self.tail < 0.5 {
            (-self.tail).ln_1p()
        } else {
            self.cdf.ln()
        }
    }

    /// Fails when the standard error is above `rel` times the estimate and
    /// also above the absolute floor `abs`.
    pub fn check_budget(&self, rel: f64, abs: f64) -> Result<()> {
        match self.stderr {
            Some(se) if se > rel * self.tail && se > abs => Err(Error::StderrBudget {
                estimate: self.tail,
                stderr: se,
            }),
            _ => Ok(()),
        }
    }
}

/// P(log Y_j ≥ t) by the chosen method.
pub fn tail(dist: &GammaProductDist, t: f64, method: TailMethod) -> Result<TailEstimate> {
    if !t.is_finite() {
        return Err(Error::domain("tail", format!("t = {t}")));
    }
    match method {
        TailMethod::ExactK1 => exact_k1(dist, t),
        TailMethod::Edgeworth => Ok(edgeworth_tail(dist, dist.standardize(t))),
        // At or below the mean the bound is the trivial one.
        TailMethod::Chernoff if t <= dist.mean() => Ok(TailEstimate::exact(1.0, 0.0)),
        TailMethod::Chernoff => {
            let b = chernoff_bound(dist, t)?;
            Ok(TailEstimate::exact(b, 1.0 - b))
        }
        TailMethod::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::domain("tail", "Monte Carlo needs at least one sample"));
            }
            let draws = dist.sample_batch(samples, seed);
            Ok(EmpiricalTail::new(draws).tail(t))
        }
    }
}

fn exact_k1(dist: &GammaProductDist, t: f64) -> Result<TailEstimate> {
    if dist.factors != 1 {
        return Err(Error::Method {
            method: "exact-k1",
            detail: format!("needs k = 1, got k = {}", dist.factors),
        });
    }
    let g = gamma_reg(dist.j(), t.exp())?;
    Ok(TailEstimate::exact(g.q, g.p))
}

/// The Edgeworth correction term C(z) with Φ_E(z) = Φ(z) − φ(z)·C(z).
fn edgeworth_correction(l3: f64, l4: f64, z: f64) -> f64 {
    let z2 = z * z;
    l3 * (z2 - 1.0) / 6.0
        + l4 * z * (z2 - 3.0) / 24.0
        + l3 * l3 * z * (z2 * z2 - 10.0 * z2 + 15.0) / 72.0
}

fn edgeworth_tail(dist: &GammaProductDist, z: f64) -> TailEstimate {
    let c = edgeworth_correction(dist.skewness(), dist.excess_kurtosis(), z);
    let corr = normal_pdf(z) * c;
    let tail = (normal_sf(z) + corr).clamp(0.0, 1.0);
    let cdf = (normal_cdf(z) - corr).clamp(0.0, 1.0);
    TailEstimate::exact(tail, cdf)
}

/// Second-order Edgeworth approximation of the distribution function of the
/// standardized log Y_j at `x_std`.
///
/// Φ(x) + φ(x)[−λ₃(x²−1)/6 − λ₄(x³−3x)/24 − λ₃²(x⁵−10x³+15x)/72].
pub fn edgeworth_cdf(dist: &GammaProductDist, x_std: f64) -> Result<f64> {
    if dist.factors < 2 {
        return Err(Error::Method {
            method: "edgeworth",
            detail: "needs k ≥ 2".into(),
        });
    }
    if x_std.is_nan() {
        return Err(Error::domain("edgeworth_cdf", "x is NaN"));
    }
    let c = edgeworth_correction(dist.skewness(), dist.excess_kurtosis(), x_std);
    Ok(normal_cdf(x_std) - normal_pdf(x_std) * c)
}

/// The exponent s* > 0 solving k ψ(j + s) = t.
pub fn chernoff_exponent(dist: &GammaProductDist, t: f64) -> Result<f64> {
    let k = dist.k();
    let j = dist.j();
    if !(t > dist.mean()) {
        return Err(Error::domain(
            "chernoff_bound",
            format!("t = {t} is not above the mean {}", dist.mean()),
        ));
    }
    let f = |s: f64| k * digamma(j + s).expect("positive argument") - t;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NoConvergence { what: "chernoff bracket" });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return Ok(mid);
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// inf_{s>0} exp(k(ln Γ(j+s) − ln Γ(j)) − s t), an upper bound on
/// P(log Y_j ≥ t) for t above the mean.
pub fn chernoff_bound(dist: &GammaProductDist, t: f64) -> Result<f64> {
    Ok(chernoff_ln_bound(dist, t)?.exp())
}

/// Natural log of [`chernoff_bound`].
pub fn chernoff_ln_bound(dist: &GammaProductDist, t: f64) -> Result<f64> {
    let s = chernoff_exponent(dist, t)?;
    Ok((dist.mgf_exponent(s)? - s * t).min(0.0))
}

/// Sorted draws used as an empirical tail function.
#[derive(Debug, Clone)]
pub struct EmpiricalTail {
    sorted: Vec<f64>,
}

impl EmpiricalTail {
    pub fn new(mut draws: Vec<f64>) -> Self {
        draws.sort_by(f64::total_cmp);
        Self { sorted: draws }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// The draws in ascending order.
    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    /// The draws that are ≥ t, ascending.
    pub fn at_or_above(&self, t: f64) -> &[f64] {
        &self.sorted[self.sorted.partition_point(|&v| v < t)..]
    }

    /// Fraction of draws ≥ t, with its binomial standard error.
    pub fn tail(&self, t: f64) -> TailEstimate {
        let n = self.sorted.len() as f64;
        let below = self.sorted.partition_point(|&v| v < t) as f64;
        let tail = (n - below) / n;
        let cdf = below / n;
        TailEstimate {
            tail,
            cdf,
            stderr: Some((tail * cdf / n).sqrt()),
        }
    }
}
