//! Property tests for the invariants each module promises.

use std::f64::consts::{E, PI, SQRT_2};

use proptest::prelude::*;

use ginibre_edge::finite_n::{
    finite_cdf, rightmost_block, spectral_radius_block, FiniteLawRequest, Statistic,
};
use ginibre_edge::fredholm::{
    assemble_limit_block, auto_truncation, phi_tilde_alpha, FredholmConfig, Truncation,
    DEFAULT_TRUNCATION_EPS,
};
use ginibre_edge::gamma_product::{tail, GammaProductDist, TailMethod};
use ginibre_edge::limit_laws::PhiAlphaLaw;
use ginibre_edge::sampler::sample_spectral_radius;
use ginibre_edge::scaling::{constants, EnsembleParams};
use ginibre_edge::specfun::{digamma, gamma_upper_reg, normal_sf, polygamma};

fn cheap() -> ProptestConfig {
    ProptestConfig::with_cases(256)
}

fn costly(cases: u32) -> ProptestConfig {
    ProptestConfig::with_cases(cases)
}

/// Log-uniform draw on [lo, hi].
fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.ln()..hi.ln()).prop_map(f64::exp)
}

// ---------------------------------------------------------------- specfun

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn digamma_and_trigamma_recurrences(x in log_uniform(1.0, 1e6)) {
        let d0 = digamma(x).unwrap();
        let d1 = digamma(x + 1.0).unwrap();
        prop_assert!((d1 - (d0 + 1.0 / x)).abs() <= 1e-12 * d1.abs());
        let t0 = polygamma(1, x).unwrap();
        let t1 = polygamma(1, x + 1.0).unwrap();
        prop_assert!((t1 - (t0 - 1.0 / (x * x))).abs() <= 1e-12 * t1.abs());
    }
}

#[test]
fn digamma_increment_is_at_most_s_over_j() {
    for j in 1..=200u32 {
        for s2 in 2..=100u32 {
            let (j, s) = (j as f64, s2 as f64 / 2.0);
            let inc = digamma(j + s).unwrap() - digamma(j).unwrap();
            assert!(inc <= s / j + 1e-14, "j = {j}, s = {s}: {inc}");
        }
    }
}

#[test]
fn mills_ratio_asymptotics() {
    for x in [10.0f64, 20.0, 30.0] {
        let r = normal_sf(x) * (2.0 * PI).sqrt() * x * (x * x / 2.0).exp();
        assert!((r - 1.0).abs() <= 2.0 / (x * x), "x = {x}: {r}");
    }
}

proptest! {
    #![proptest_config(cheap())]

    #[test]
    fn upper_gamma_is_a_decreasing_probability(
        a in log_uniform(0.5, 1e4),
        u in 0.0..1.0f64,
        step in 0.01..1.0f64,
    ) {
        let span = a + 20.0 * a.sqrt() + 20.0;
        let z1 = u * span;
        let z2 = z1 + step * (1.0 + a.sqrt());
        let q1 = gamma_upper_reg(a, z1).unwrap();
        let q2 = gamma_upper_reg(a, z2).unwrap();
        prop_assert!(q1 > 0.0 && q1 <= 1.0);
        prop_assert!(q2 > 0.0 && q2 <= 1.0);
        if q1 < 1.0 - 1e-12 {
            prop_assert!(q2 < q1, "Q({a}, {z1}) = {q1} but Q({a}, {z2}) = {q2}");
        } else {
            prop_assert!(q2 <= q1);
        }
        prop_assert_eq!(gamma_upper_reg(a, 0.0).unwrap(), 1.0);
    }
}

// ---------------------------------------------------------- gamma_product

proptest! {
    #![proptest_config(cheap())]

    #[test]
    fn k1_edgeworth_is_close_to_exact(j in 1u64..400, z in -3.0..3.0f64) {
        let d = GammaProductDist::new(j, 1).unwrap();
        let t = d.mean() + z * d.variance().sqrt();
        let exact = tail(&d, t, TailMethod::ExactK1).unwrap().tail;
        let ew = tail(&d, t, TailMethod::Edgeworth).unwrap().tail;
        prop_assert!((ew - exact).abs() <= 0.5 / (j as f64).sqrt());
    }

    #[test]
    fn k1_chernoff_dominates_exact(j in 1u64..5000, z in -3.0..40.0f64) {
        let d = GammaProductDist::new(j, 1).unwrap();
        let t = d.mean() + z * d.variance().sqrt();
        let exact = tail(&d, t, TailMethod::ExactK1).unwrap().tail;
        let bound = tail(&d, t, TailMethod::Chernoff).unwrap().tail;
        prop_assert!(bound >= exact * (1.0 - 1e-12), "{bound} < {exact}");
    }
}

proptest! {
    #![proptest_config(costly(24))]

    #[test]
    fn k1_monte_carlo_within_four_stderr(j in 1u64..200, z in -2.0..2.0f64, seed in any::<u64>()) {
        let d = GammaProductDist::new(j, 1).unwrap();
        let t = d.mean() + z * d.variance().sqrt();
        let exact = tail(&d, t, TailMethod::ExactK1).unwrap().tail;
        let mc = tail(&d, t, TailMethod::MonteCarlo { samples: 20_000, seed }).unwrap();
        let se = mc.stderr.unwrap();
        prop_assert!((mc.tail - exact).abs() <= 4.0 * se, "{} vs {exact} (se {se})", mc.tail);
    }

    #[test]
    fn sample_skewness_matches_cumulants(j in 1u64..60, k in 1u64..6, seed in any::<u64>()) {
        let d = GammaProductDist::new(j, k).unwrap();
        let draws = d.sample_batch(40_000, seed);
        // Batch means give a standard error that does not assume normality.
        let batches: Vec<f64> = draws.chunks(2_000).map(skewness).collect();
        let mean_b = batches.iter().sum::<f64>() / batches.len() as f64;
        let var_b = batches.iter().map(|b| (b - mean_b).powi(2)).sum::<f64>() / (batches.len() - 1) as f64;
        let se = (var_b / batches.len() as f64).sqrt();
        let expected = d.skewness();
        let got = skewness(&draws);
        prop_assert!((got - expected).abs() <= 5.0 * se, "{got} vs {expected} (se {se})");
    }
}

fn skewness(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

fn sorted_grid(mut ts: Vec<f64>) -> Vec<f64> {
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

fn assert_nonincreasing(d: &GammaProductDist, ts: &[f64], method: TailMethod) -> Result<(), TestCaseError> {
    let vals: Vec<f64> = ts.iter().map(|&t| tail(d, t, method).unwrap().tail).collect();
    for (w, t) in vals.windows(2).zip(ts.windows(2)) {
        prop_assert!(w[1] <= w[0], "{} at t = {} then {} at t = {}", w[0], t[0], w[1], t[1]);
    }
    Ok(())
}

proptest! {
    #![proptest_config(cheap())]

    #[test]
    fn exact_and_chernoff_tails_are_nonincreasing(
        j in 1u64..2000,
        zs in prop::collection::vec(-8.0..30.0f64, 2..40),
    ) {
        let d = GammaProductDist::new(j, 1).unwrap();
        let ts = sorted_grid(zs.iter().map(|z| d.mean() + z * d.variance().sqrt()).collect());
        assert_nonincreasing(&d, &ts, TailMethod::ExactK1)?;
        let dk = GammaProductDist::new(j, 7).unwrap();
        let ts = sorted_grid(zs.iter().map(|z| dk.mean() + z * dk.variance().sqrt()).collect());
        assert_nonincreasing(&dk, &ts, TailMethod::Chernoff)?;
    }

    // With |λ₃| near 1 (k ≤ 5 at j = 1) the series has a negative density
    // and the tail rises by up to 4e-3; the property is checked from
    // k = 30, where auto selection starts using the series.
    #[test]
    fn edgeworth_tail_is_nonincreasing(
        j in 1u64..2000,
        k in 30u64..500,
        zs in prop::collection::vec(-8.0..8.0f64, 2..40),
    ) {
        let d = GammaProductDist::new(j, k).unwrap();
        let ts = sorted_grid(zs.iter().map(|z| d.mean() + z * d.variance().sqrt()).collect());
        assert_nonincreasing(&d, &ts, TailMethod::Edgeworth)?;
    }
}

proptest! {
    #![proptest_config(costly(12))]

    #[test]
    fn monte_carlo_tail_is_nonincreasing(
        j in 1u64..50,
        k in 2u64..8,
        seed in any::<u64>(),
        zs in prop::collection::vec(-4.0..4.0f64, 2..40),
    ) {
        let d = GammaProductDist::new(j, k).unwrap();
        let ts = sorted_grid(zs.iter().map(|z| d.mean() + z * d.variance().sqrt()).collect());
        assert_nonincreasing(&d, &ts, TailMethod::MonteCarlo { samples: 5_000, seed })?;
    }
}

// ---------------------------------------------------------------- scaling

#[test]
fn small_alpha_ratios_stay_bounded() {
    let mut prev: Option<(f64, f64)> = None;
    for alpha in [1e-2f64, 1e-4, 1e-6] {
        let c = constants(alpha).unwrap();
        let ra = (c.a - alpha.sqrt()).abs() / alpha;
        let rb = (c.b - 1.0).abs() / alpha;
        assert!(ra < 2.0 && rb < 1.0, "alpha = {alpha}: {ra}, {rb}");
        if let Some((pa, pb)) = prev {
            // Bounded means not drifting upward as α shrinks.
            assert!(ra <= pa * 1.1 + 1e-3 && rb <= pb * 1.1 + 1e-3);
        }
        prev = Some((ra, rb));
    }
}

#[test]
fn c1_and_c2_are_derivatives() {
    for alpha in [0.5f64, 1.0, 2.0, 5.0] {
        let h = 1e-4 * alpha;
        let (lo, hi) = (constants(alpha - h).unwrap(), constants(alpha + h).unwrap());
        let c = constants(alpha).unwrap();
        // Fourth-order central difference.
        let (lo2, hi2) = (constants(alpha - 2.0 * h).unwrap(), constants(alpha + 2.0 * h).unwrap());
        let da = (8.0 * (hi.a - lo.a) - (hi2.a - lo2.a)) / (12.0 * h);
        let db = (8.0 * (hi.b - lo.b) - (hi2.b - lo2.b)) / (12.0 * h);
        assert!((da - c.c1).abs() <= 1e-6 * c.c1.abs(), "alpha = {alpha}: {da} vs {}", c.c1);
        assert!((-db - c.c2).abs() <= 1e-6 * c.c2.abs(), "alpha = {alpha}: {} vs {}", -db, c.c2);
    }
}

proptest! {
    #![proptest_config(cheap())]

    #[test]
    fn a_tilde_identity(alpha in log_uniform(1e-6, 1e9)) {
        let c = constants(alpha).unwrap();
        let lhs = (c.a_tilde - (alpha.ln_1p() / 2.0).sqrt()) * (-(alpha + E * E).ln().sqrt() / SQRT_2);
        let shift = (2f64.powf(0.6) * PI.powf(-0.8)).exp();
        let bracket = (2f64.powf(-0.75) * PI).ln() + 1.25 * (alpha + shift).ln().ln();
        prop_assert!((lhs - bracket).abs() <= 1e-12 * bracket.abs().max(1.0));
    }
}

// ------------------------------------------------------------- limit_laws

proptest! {
    #![proptest_config(costly(64))]

    #[test]
    fn phi_alpha_truncation_is_sound(alpha in log_uniform(1e-4, 1e4), x in -6.0..12.0f64) {
        let law = PhiAlphaLaw::new(alpha).unwrap();
        let j = law.terms(x);
        prop_assume!(2 * j <= 20_000);
        let once = law.cdf(x);
        let twice = law.ln_cdf_with_terms(x, 2 * j).exp();
        prop_assert!((once - twice).abs() < 10.0 * law.tail_eps, "{once} vs {twice} (J = {j})");
    }

    #[test]
    fn phi_alpha_is_a_distribution_function(alpha in log_uniform(1e-6, 1e12), x in -10.0..20.0f64, dx in 1e-3..2.0f64) {
        let law = PhiAlphaLaw::new(alpha).unwrap();
        let (f0, f1) = (law.cdf(x), law.cdf(x + dx));
        prop_assert!((0.0..=1.0).contains(&f0) && (0.0..=1.0).contains(&f1));
        prop_assert!(f1 >= f0);
    }
}

// --------------------------------------------------------------- fredholm

proptest! {
    #![proptest_config(costly(8))]

    #[test]
    fn fredholm_block_structure(alpha in log_uniform(0.05, 20.0), x in -3.0..4.0f64) {
        let cfg = FredholmConfig::default();
        let dim = auto_truncation(x, alpha, DEFAULT_TRUNCATION_EPS).unwrap().min(80);
        let mut block = assemble_limit_block(x, alpha, dim, &cfg).unwrap();
        let s = block.structure();
        prop_assert!(s.parity_ok);
        prop_assert!(s.max_asymmetry <= 1e-15);
        prop_assert!(s.diag_in_unit_interval);
        prop_assert!(s.max_cauchy_schwarz_excess <= 1e-13, "{}", s.max_cauchy_schwarz_excess);
        prop_assert!(s.max_midpoint_excess <= 1e-13, "{}", s.max_midpoint_excess);
    }

    #[test]
    fn fredholm_truncation_is_stable(alpha in log_uniform(0.05, 20.0), x in -3.0..4.0f64) {
        let n = auto_truncation(x, alpha, DEFAULT_TRUNCATION_EPS).unwrap();
        let at = |dim| {
            let cfg = FredholmConfig { truncation: Truncation::Fixed(dim), ..FredholmConfig::default() };
            phi_tilde_alpha(x, alpha, &cfg).unwrap().value
        };
        let (a, b) = (at(n), at(2 * n));
        prop_assert!((a - b).abs() < 1e-8, "N = {n}: {a} vs {b}");
    }

    #[test]
    fn fredholm_is_nondecreasing(alpha in log_uniform(0.05, 20.0), x in -3.0..4.0f64, dx in 0.01..1.0f64) {
        let cfg = FredholmConfig::default();
        let f0 = phi_tilde_alpha(x, alpha, &cfg).unwrap().value;
        let f1 = phi_tilde_alpha(x + dx, alpha, &cfg).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&f0) && f1 >= f0 - 1e-12, "{f0} then {f1}");
    }
}

// --------------------------------------------------------------- finite_n

proptest! {
    #![proptest_config(costly(16))]

    #[test]
    fn radius_monte_carlo_agrees_with_exact(n in 1u64..12, seed in any::<u64>(), xs in prop::collection::vec(-3.0..5.0f64, 1..12)) {
        let p = EnsembleParams::new(n, 1).unwrap();
        let xs = sorted_grid(xs);
        let exact = finite_cdf(&FiniteLawRequest::new(p, Statistic::SpectralRadius, TailMethod::ExactK1, xs.clone()).unwrap()).unwrap();
        let samples = 20_000;
        let mc = finite_cdf(&FiniteLawRequest::new(
            p,
            Statistic::SpectralRadius,
            TailMethod::MonteCarlo { samples, seed },
            xs.clone(),
        ).unwrap()).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            // Pooled standard error: the delta-method error of the product
            // with each factor's binomial variance taken at the exact tail,
            // so that a factor with no exceedances still counts.
            let t = p.radius_threshold(x);
            let rel_var: f64 = (1..=n)
                .map(|m| {
                    let q = gamma_upper_reg(m as f64, t.exp()).unwrap();
                    q / ((1.0 - q) * samples as f64)
                })
                .sum();
            let se = exact.cdf[i] * rel_var.sqrt();
            prop_assert!((mc.cdf[i] - exact.cdf[i]).abs() <= 4.0 * se, "x = {x}: {} vs {} (se {se})", mc.cdf[i], exact.cdf[i]);
        }
    }

    #[test]
    fn radius_dense_det_is_the_product(n in 1u64..=50, x in -4.0..6.0f64) {
        let p = EnsembleParams::new(n, 1).unwrap();
        let block = spectral_radius_block(&p, x, TailMethod::ExactK1).unwrap();
        let det = block.det_i_minus();
        let f = finite_cdf(&FiniteLawRequest::new(p, Statistic::SpectralRadius, TailMethod::ExactK1, vec![x]).unwrap()).unwrap();
        prop_assert!((det - f.cdf[0]).abs() <= 1e-12, "{det} vs {}", f.cdf[0]);
    }

    #[test]
    fn rightmost_is_a_distribution_function(
        n in 1u64..14,
        k in prop::sample::select(vec![1u64, 30, 100]),
        xs in prop::collection::vec(-4.0..6.0f64, 2..10),
    ) {
        let p = EnsembleParams::new(n, k).unwrap();
        let method = if k == 1 { TailMethod::ExactK1 } else { TailMethod::Edgeworth };
        let xs = sorted_grid(xs);
        let req = FiniteLawRequest::new(p, Statistic::Rightmost, method, xs.clone()).unwrap();
        let r = finite_cdf(&req).unwrap();
        for (i, f) in r.cdf.iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(f));
            if i > 0 {
                prop_assert!(*f >= r.cdf[i - 1] - 1e-10, "{} then {f}", r.cdf[i - 1]);
            }
        }
        let (mut block, _) = rightmost_block(&p, xs[0], &req).unwrap();
        let s = block.structure();
        prop_assert!(s.parity_ok && s.diag_in_unit_interval);
        prop_assert!(s.max_asymmetry <= 1e-15);
        prop_assert!(s.max_cauchy_schwarz_excess <= 1e-13, "{}", s.max_cauchy_schwarz_excess);
    }
}

// ---------------------------------------------------------------- sampler

proptest! {
    #![proptest_config(costly(6))]

    #[test]
    fn sampler_ignores_thread_count(n in 1u64..20, k in 1u64..5, count in 1u64..10_000, seed in any::<u64>()) {
        let p = EnsembleParams::new(n, k).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sample_spectral_radius(&p, count, seed).unwrap())
        };
        prop_assert_eq!(run(1), run(3));
    }
}
