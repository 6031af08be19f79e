//! Cross-module checks: finite-n laws against limit laws, sampler against
//! the exact laws, and the operator blocks against their closed forms.

use ginibre_edge::finite_n::{finite_cdf, rate_report, FiniteLawRequest, RateRegime, Statistic};
use ginibre_edge::fredholm::{phi_tilde_alpha, FredholmConfig};
use ginibre_edge::gamma_product::TailMethod;
use ginibre_edge::limit_laws::{linspace, PhiAlphaLaw};
use ginibre_edge::sampler::{ks_critical_99, ks_distance, sample_spectral_radius};
use ginibre_edge::scaling::{rescale_spectral, spectral_threshold, EnsembleParams};
use ginibre_edge::specfun::normal_cdf;
use ginibre_edge::Error;

fn params(n: u64, k: u64) -> EnsembleParams {
    EnsembleParams::new(n, k).unwrap()
}

#[test]
fn finite_radius_approaches_phi_alpha() {
    let xs = linspace(-4.0, 6.0, 101);
    let law = PhiAlphaLaw::new(1.0).unwrap();
    let sup = |n: u64| {
        let req = FiniteLawRequest::new(params(n, n), Statistic::SpectralRadius, TailMethod::Edgeworth, xs.clone()).unwrap();
        let r = finite_cdf(&req).unwrap();
        xs.iter().zip(&r.cdf).map(|(&x, c)| (c - law.cdf(x)).abs()).fold(0.0, f64::max)
    };
    let (s50, s400) = (sup(50), sup(400));
    assert!(s400 < s50, "{s50} then {s400}");
    assert!(s400 < 5e-3, "{s400}");
}

#[test]
fn finite_rightmost_approaches_fredholm_limit() {
    let p = params(100, 100);
    let xs = linspace(-2.0, 3.0, 6);
    let req = FiniteLawRequest::new(p, Statistic::Rightmost, TailMethod::Edgeworth, xs.clone()).unwrap();
    let r = finite_cdf(&req).unwrap();
    let cfg = FredholmConfig::default();
    for (&x, c) in xs.iter().zip(&r.cdf) {
        let limit = phi_tilde_alpha(x, 1.0, &cfg).unwrap().value;
        assert!((c - limit).abs() < 1e-2, "x = {x}: {c} vs {limit}");
    }
}

#[test]
fn sampler_matches_monte_carlo_tail_law() {
    // k = 3 has no exact tail; the law built from Monte Carlo tails is the
    // reference, with its own standard error added to the KS bound.
    let p = params(8, 3);
    let count = 20_000u64;
    let emp = sample_spectral_radius(&p, count, 5).unwrap();
    let xs = linspace(-4.0, 6.0, 201);
    let req = FiniteLawRequest::new(p, Statistic::SpectralRadius, TailMethod::MonteCarlo { samples: 400_000, seed: 9 }, xs.clone()).unwrap();
    let r = finite_cdf(&req).unwrap();
    let max_se = r.stderr.as_ref().unwrap().iter().copied().fold(0.0, f64::max);
    let step = |x: f64| r.cdf[xs.partition_point(|&v| v <= x).saturating_sub(1)];
    // The step function lags the law by at most one grid cell of mass.
    let cell = r.cdf.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let ks = ks_distance(&emp, step);
    assert!(ks < ks_critical_99(count as usize) + 4.0 * max_se + cell, "ks = {ks}, cell = {cell}");
}

#[test]
fn small_alpha_radius_is_nearly_gaussian() {
    let p = params(10, 100_000);
    let xs = linspace(-5.0, 5.0, 401);
    let req = FiniteLawRequest::new(p, Statistic::SpectralRadius, TailMethod::Edgeworth, xs.clone()).unwrap();
    let r = finite_cdf(&req).unwrap();
    let sup = xs.iter().zip(&r.cdf).map(|(&x, c)| (c - normal_cdf(x)).abs()).fold(0.0, f64::max);
    let alpha = p.alpha_n();
    assert!(sup < alpha.sqrt(), "{sup} vs √α = {}", alpha.sqrt());
}

#[test]
fn fredholm_tends_to_normal_as_alpha_vanishes() {
    let cfg = FredholmConfig::default();
    for x in [-2.0, -0.5, 0.0, 1.0, 2.5] {
        let v = phi_tilde_alpha(x, 1e-8, &cfg).unwrap().value;
        assert!((v - normal_cdf(x)).abs() < 1e-3, "x = {x}: {v}");
    }
}

#[test]
fn rate_regimes_reject_mismatched_sizes() {
    let r = rate_report(&params(10, 1), RateRegime::Zero, TailMethod::ExactK1);
    assert!(matches!(r, Err(Error::Domain { .. })));
    let r = rate_report(&params(2, 4), RateRegime::Infinity, TailMethod::Edgeworth);
    assert!(matches!(r, Err(Error::Domain { .. })));
}

#[test]
fn threshold_and_rescale_are_inverse() {
    for (n, k) in [(1, 1), (7, 3), (500, 40), (10_000, 1)] {
        let p = params(n, k);
        for x in [-3.0, 0.0, 0.7, 12.0] {
            let back = rescale_spectral(&p, spectral_threshold(&p, x));
            assert!((back - x).abs() <= 1e-12 * (1.0 + x.abs()) * (1.0 + p.k_psi_n().abs()), "{back} vs {x}");
        }
    }
}
