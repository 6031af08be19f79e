//! The limiting family Φ_α, the boundary laws, Berry–Esseen rate predictors
//! and CDF distances.

use std::f64::consts::{E, PI};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, gl_composite, golden_max};
use crate::scaling::{constants, ell2, EnsembleParams, ScalingConstants};
use crate::specfun::{ln_normal_cdf, normal_cdf, normal_hazard_rev, normal_pdf, normal_sf};

/// Default truncation tolerance for infinite products and sums over j.
pub const DEFAULT_TAIL_EPS: f64 = 1e-14;

/// Beyond this many factors Φ_α switches from a direct sum of log Φ to an
/// Euler–Maclaurin evaluation.
const DIRECT_SUM_LIMIT: u64 = 20_000;

/// Points in the default x-grid.
pub const DEFAULT_GRID_POINTS: usize = 4001;

/// Σ_{j≥1} Ψ(v₁ + (j−1)h) ≤ Ψ(v₁) + (φ(v₁) − v₁Ψ(v₁))/h: a bound on the
/// tail of the j-sum starting at v₁, since Ψ is decreasing.
pub fn mills_tail_bound(v_first: f64, h: f64) -> f64 {
    let s = normal_sf(v_first);
    s + (normal_pdf(v_first) - v_first * s).max(0.0) / h
}

/// Smallest v such that a sum of Ψ over the lattice v, v+h, … is below eps.
pub(crate) fn cutoff_level(h: f64, eps: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mills_tail_bound(mid, h) < eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Number of terms J such that the omitted Σ_{j>J} Ψ(v₁ + (j−1)h) < eps.
pub fn truncation_terms(v1: f64, h: f64, eps: f64) -> u64 {
    let level = cutoff_level(h, eps);
    if v1 >= level {
        return 1;
    }
    ((level - v1) / h).ceil() as u64 + 1
}

/// Φ_α(x) = ∏_{j≥1} Φ(v_α(j, x)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiAlphaLaw {
    pub alpha: f64,
    pub tail_eps: f64,
    consts: ScalingConstants,
}

impl PhiAlphaLaw {
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_tail_eps(alpha, DEFAULT_TAIL_EPS)
    }

    pub fn with_tail_eps(alpha: f64, tail_eps: f64) -> Result<Self> {
        if !(tail_eps > 0.0) {
            return Err(Error::domain("PhiAlphaLaw", format!("tail_eps = {tail_eps}")));
        }
        Ok(Self {
            alpha,
            tail_eps,
            consts: constants(alpha)?,
        })
    }

    pub fn constants(&self) -> &ScalingConstants {
        &self.consts
    }

    fn h(&self) -> f64 {
        1.0 / self.alpha.sqrt()
    }

    /// J, the number of factors kept at x.
    pub fn terms(&self, x: f64) -> u64 {
        truncation_terms(self.consts.v(1, x), self.h(), self.tail_eps)
    }

    /// log Φ_α(x).
    pub fn ln_cdf(&self, x: f64) -> f64 {
        let j = self.terms(x);
        self.ln_cdf_with_terms(x, j)
    }

    /// log Φ_α(x) with the product truncated after `terms` factors.
    pub fn ln_cdf_with_terms(&self, x: f64, terms: u64) -> f64 {
        let v1 = self.consts.v(1, x);
        let h = self.h();
        if terms <= DIRECT_SUM_LIMIT {
            (0..terms).map(|i| ln_normal_cdf(v1 + i as f64 * h)).sum()
        } else {
            euler_maclaurin_ln_product(v1, h)
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.ln_cdf(x).exp()
    }

    /// Σ_j (φ/Φ)(v_j) q₁(j, x) and Σ_j (φ/Φ)(v_j) q₂(j, x), the two sums
    /// behind the fixed-α rate.
    pub fn q_sums(&self, x: f64) -> (f64, f64) {
        let c = &self.consts;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for j in 1..=self.terms(x) {
            let r = normal_hazard_rev(c.v(j, x));
            s1 += r * c.q1(j, x);
            s2 += r * c.q2(j, x);
        }
        (s1, s2)
    }
}

/// Σ_{j≥0} log Φ(v₁ + jh) by Euler–Maclaurin:
/// (1/h)∫_{v₁}^∞ log Φ + g/2 − h g′/12 + h³ g‴/720 at v₁.
fn euler_maclaurin_ln_product(v1: f64, h: f64) -> f64 {
    let upper = 38.0;
    if v1 >= upper {
        return 0.0;
    }
    let panels = ((upper - v1) * 2.0).ceil() as usize;
    let integral = gl_composite(24, panels, v1, upper, ln_normal_cdf);
    let g0 = ln_normal_cdf(v1);
    let r = normal_hazard_rev(v1);
    let r1 = -v1 * r - r * r;
    let r2 = -r - v1 * r1 - 2.0 * r * r1;
    integral / h + 0.5 * g0 - h * r / 12.0 + h.powi(3) * r2 / 720.0
}

/// Leading sup-distance rate for α_n → ∞: (log log α_n)²/(2e log α_n).
pub fn rate_predictor_gumbel(alpha_n: f64) -> f64 {
    let l = alpha_n.ln();
    l.ln().powi(2) / (2.0 * E * l)
}

/// W₁ counterpart of [`rate_predictor_gumbel`]: (log log α_n)²/(2 log α_n).
pub fn w1_predictor_gumbel(alpha_n: f64) -> f64 {
    let l = alpha_n.ln();
    l.ln().powi(2) / (2.0 * l)
}

/// sup_x |d₁ − d₂x| φ(x) in closed form, for d₁, d₂ ≥ 0.
pub fn sup_linear_times_density(d1: f64, d2: f64) -> f64 {
    if d2 == 0.0 {
        return d1 / (2.0 * PI).sqrt();
    }
    let root = (d1 * d1 + 4.0 * d2 * d2).sqrt();
    (d1 + root) / (2.0 * (2.0 * PI).sqrt()) * (-(d1 - root).powi(2) / (8.0 * d2 * d2)).exp()
}

/// Rate for α_n → 0: sup_x φ(x)|√α_n − x/(4n)|.
pub fn rate_predictor_gaussian(params: &EnsembleParams) -> f64 {
    sup_linear_times_density(params.alpha_n().sqrt(), 0.25 / params.n as f64)
}

/// W₁ rate for α_n → 0: √α_n(2Φ(4n√α_n) − 1) + φ(4n√α_n)/(2n).
pub fn w1_predictor_gaussian(params: &EnsembleParams) -> f64 {
    let d1 = params.alpha_n().sqrt();
    let n = params.n as f64;
    let z = 4.0 * n * d1;
    d1 * (2.0 * normal_cdf(z) - 1.0) + normal_pdf(z) / (2.0 * n)
}

/// The limit β = lim n³/k of the Gaussian regime, read at finite n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaRegime {
    /// n³/k below `BETA_ZERO_BELOW`: the x/(4n) term dominates.
    Zero,
    Finite(f64),
    /// n³/k above `BETA_INFINITE_ABOVE`: the √α_n term dominates.
    Infinite,
}

pub const BETA_ZERO_BELOW: f64 = 1e-4;
pub const BETA_INFINITE_ABOVE: f64 = 1e4;

impl BetaRegime {
    pub fn classify(params: &EnsembleParams) -> Self {
        let beta = (params.n as f64).powi(3) / params.k as f64;
        if beta < BETA_ZERO_BELOW {
            BetaRegime::Zero
        } else if beta > BETA_INFINITE_ABOVE {
            BetaRegime::Infinite
        } else {
            BetaRegime::Finite(beta)
        }
    }

    /// The closed-form supremum belonging to this regime at size n:
    /// 1/(4√(2πe) n), the general formula, or √α_n/√(2π).
    pub fn supremum(&self, params: &EnsembleParams) -> f64 {
        let n = params.n as f64;
        match self {
            BetaRegime::Zero => 1.0 / (4.0 * (2.0 * PI * E).sqrt() * n),
            BetaRegime::Infinite => params.alpha_n().sqrt() / (2.0 * PI).sqrt(),
            BetaRegime::Finite(_) => rate_predictor_gaussian(params),
        }
    }
}

/// The default x-grid [−10, ℓ₂,∞(α) + 10] with 4001 points.
pub fn default_grid(alpha: f64) -> Vec<f64> {
    linspace(-10.0, ell2(alpha) + 10.0, DEFAULT_GRID_POINTS)
}

pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (count - 1) as f64;
    (0..count).map(|i| lo + i as f64 * step).collect()
}

/// sup over a grid, with golden-section refinement around the coarse
/// maximizer; returns (x, value).
pub fn grid_sup(f: impl Fn(f64) -> f64 + Sync, grid: &[f64]) -> (f64, f64) {
    let values: Vec<f64> = grid.par_iter().map(|&x| f(x)).collect();
    let (mut i, mut best) = (0, f64::NEG_INFINITY);
    for (k, &v) in values.iter().enumerate() {
        if v > best {
            best = v;
            i = k;
        }
    }
    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    if hi > lo {
        let (x, v) = golden_max(&f, lo, hi, 1e-9 * (1.0 + hi.abs()));
        if v > best {
            return (x, v);
        }
    }
    (grid[i], best)
}

/// Fixed-α predictor: sup over the default grid of
/// Φ_α(x)|Σ_j (φ/Φ)(v_j)(q₁/n + (α_n − α)q₂)|.
pub fn rate_predictor_fixed_alpha(params: &EnsembleParams, alpha: f64) -> Result<f64> {
    let law = PhiAlphaLaw::new(alpha)?;
    let n = params.n as f64;
    let da = params.alpha_n() - alpha;
    let f = |x: f64| {
        let (s1, s2) = law.q_sums(x);
        law.cdf(x) * (s1 / n + da * s2).abs()
    };
    Ok(grid_sup(f, &default_grid(alpha)).1)
}

/// W₁ counterpart: the same integrand integrated over the default range.
pub fn w1_predictor_fixed_alpha(params: &EnsembleParams, alpha: f64) -> Result<f64> {
    let law = PhiAlphaLaw::new(alpha)?;
    let n = params.n as f64;
    let da = params.alpha_n() - alpha;
    let f = |x: f64| {
        let (s1, s2) = law.q_sums(x);
        law.cdf(x) * (s1 / n + da * s2).abs()
    };
    Ok(adaptive_simpson(&f, -10.0, ell2(alpha) + 10.0, 1e-10))
}

/// The two a priori bounds at α: (4/3)(α+√α+1) for the q₁ sum and
/// (2/(e ln 2))(c₁ + c₂(α−1)/b + 1/α)(1+√α) for the q₂ sum.
pub fn q_sum_bounds(alpha: f64) -> Result<(f64, f64)> {
    let c = constants(alpha)?;
    let sa = alpha.sqrt();
    let b1 = 4.0 / 3.0 * (alpha + sa + 1.0);
    let b2 = 2.0 / (E * std::f64::consts::LN_2) * (c.c1 + c.c2 * (alpha - 1.0) / c.b + 1.0 / alpha) * (1.0 + sa);
    Ok((b1, b2))
}

/// Grid suprema of Φ_α|Σ q₁φ/Φ| and Φ_α|Σ q₂φ/Φ| on the default grid.
pub fn q_sum_suprema(alpha: f64) -> Result<(f64, f64)> {
    let law = PhiAlphaLaw::new(alpha)?;
    let grid = default_grid(alpha);
    let s1 = grid_sup(|x| law.cdf(x) * law.q_sums(x).0.abs(), &grid).1;
    let s2 = grid_sup(|x| law.cdf(x) * law.q_sums(x).1.abs(), &grid).1;
    Ok((s1, s2))
}

/// Pointwise large-α error predictor
/// e^{−x−e^{−x}}|(x−ℓ₂)² + 4(x−ℓ₂)|/(2 log(α+e)).
pub fn gumbel_pointwise_predictor(alpha: f64, x: f64) -> f64 {
    let d = x - ell2(alpha);
    (-x - (-x).exp()).exp() * (d * d + 4.0 * d).abs() / (2.0 * (alpha + E).ln())
}

/// Measured distance between two distribution functions, with a predicted
/// value for comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceReport {
    pub sup_distance: f64,
    pub argmax_x: f64,
    pub w1_distance: f64,
    pub predicted: f64,
    /// sup_distance / predicted, or NaN when nothing is predicted.
    pub ratio: f64,
}

impl DistanceReport {
    pub fn with_prediction(mut self, predicted: f64) -> Self {
        self.predicted = predicted;
        self.ratio = if predicted > 0.0 {
            self.sup_distance / predicted
        } else {
            f64::NAN
        };
        self
    }
}

const MIN_GRID: usize = 8;

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < MIN_GRID {
        return Err(Error::domain("sup_distance", format!("grid has {} < {MIN_GRID} points", grid.len())));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("sup_distance", "grid is not strictly increasing"));
    }
    Ok(())
}

/// sup |F − G| over the grid with golden-section refinement, and
/// W₁ = ∫|F − G| over the grid span.
pub fn sup_distance(
    f: impl Fn(f64) -> f64 + Sync,
    g: impl Fn(f64) -> f64 + Sync,
    grid: &[f64],
) -> Result<DistanceReport> {
    check_grid(grid)?;
    let diff = |x: f64| (f(x) - g(x)).abs();
    let (argmax_x, sup) = grid_sup(diff, grid);
    let w1 = w1_on_grid(&diff, grid);
    Ok(DistanceReport {
        sup_distance: sup,
        argmax_x,
        w1_distance: w1,
        predicted: f64::NAN,
        ratio: f64::NAN,
    })
}

/// W₁ = ∫|F − G| over the grid span, adaptive Simpson to 1e-8 absolute.
pub fn w1_distance(
    f: impl Fn(f64) -> f64 + Sync,
    g: impl Fn(f64) -> f64 + Sync,
    grid: &[f64],
) -> Result<f64> {
    check_grid(grid)?;
    Ok(w1_on_grid(&|x: f64| (f(x) - g(x)).abs(), grid))
}

fn w1_on_grid(diff: &(impl Fn(f64) -> f64 + Sync), grid: &[f64]) -> f64 {
    // Seed the adaptive rule with coarse panels so that narrow features
    // between widely spaced first samples are not skipped.
    let panels = 64.min(grid.len() - 1);
    let lo = grid[0];
    let hi = grid[grid.len() - 1];
    let step = (hi - lo) / panels as f64;
    let tol = 1e-8 / panels as f64;
    (0..panels)
        .into_par_iter()
        .map(|i| {
            let a = lo + i as f64 * step;
            adaptive_simpson(diff, a, a + step, tol)
        })
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::gumbel_cdf;
    use approx::assert_relative_eq;

    #[test]
    fn phi_alpha_limits_and_first_factor_bound() {
        let law = PhiAlphaLaw::new(1.0).unwrap();
        assert!(law.cdf(-40.0) < 1e-100);
        assert!((law.cdf(40.0) - 1.0).abs() < 1e-14);
        let c = law.constants();
        for &x in &[-3.0, -1.0, 0.0, 2.0] {
            assert!(law.cdf(x) <= normal_cdf(c.v(1, x)));
        }
    }

    #[test]
    fn euler_maclaurin_matches_direct_sum() {
        for &al in &[1e3, 1e4, 1e5] {
            let law = PhiAlphaLaw::new(al).unwrap();
            for &x in &[-1.5, 0.0, 2.0] {
                let v1 = law.constants().v(1, x);
                let h = 1.0 / al.sqrt();
                let direct: f64 = (0..law.terms(x)).map(|i| ln_normal_cdf(v1 + i as f64 * h)).sum();
                let em = euler_maclaurin_ln_product(v1, h);
                assert!((direct - em).abs() < 1e-11 * (1.0 + direct.abs()), "{al} {x}: {direct} vs {em}");
            }
        }
    }

    #[test]
    fn small_alpha_leading_term() {
        // Φ_α(0) − Φ(0) ≈ √α φ(0) for small α
        let al = 1e-6;
        let law = PhiAlphaLaw::new(al).unwrap();
        let d = law.cdf(0.0) - 0.5;
        assert_relative_eq!(d, al.sqrt() * normal_pdf(0.0), max_relative = 0.01);
    }

    #[test]
    fn gaussian_closed_forms() {
        assert_relative_eq!(sup_linear_times_density(0.3, 0.0), 0.3 / (2.0 * PI).sqrt(), max_relative = 1e-15);
        assert_relative_eq!(
            sup_linear_times_density(0.0, 0.01),
            0.01 / (2.0 * PI * E).sqrt(),
            max_relative = 1e-13
        );
        // general case against a dense grid
        let (d1, d2) = (0.01, 1.0 / 800.0);
        let grid = linspace(-8.0, 8.0, 160_001);
        let brute = grid.iter().map(|&x| normal_pdf(x) * (d1 - d2 * x).abs()).fold(0.0, f64::max);
        assert_relative_eq!(sup_linear_times_density(d1, d2), brute, max_relative = 1e-8);
    }

    #[test]
    fn beta_regimes() {
        let p = EnsembleParams::new(10, 1_000_000_000).unwrap();
        assert_eq!(BetaRegime::classify(&p), BetaRegime::Zero);
        assert_relative_eq!(
            BetaRegime::Zero.supremum(&p),
            1.0 / (4.0 * (2.0 * PI * E).sqrt() * 10.0),
            max_relative = 1e-15
        );
        let p = EnsembleParams::new(200, 2_000_000).unwrap();
        assert!(matches!(BetaRegime::classify(&p), BetaRegime::Finite(b) if (b - 4.0).abs() < 1e-12));
        let p = EnsembleParams::new(1000, 1000).unwrap();
        assert_eq!(BetaRegime::classify(&p), BetaRegime::Infinite);
    }

    #[test]
    fn distance_identities() {
        let grid = linspace(-10.0, 10.0, 401);
        let r = sup_distance(normal_cdf, normal_cdf, &grid).unwrap();
        assert_eq!(r.sup_distance, 0.0);
        assert_eq!(r.w1_distance, 0.0);
        let mu = 0.37;
        let w = w1_distance(normal_cdf, |x| normal_cdf(x - mu), &grid).unwrap();
        assert_relative_eq!(w, mu, epsilon = 1e-6);
        assert!(sup_distance(normal_cdf, normal_cdf, &grid[..7]).is_err());
        let bad = vec![0.0, 1.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert!(sup_distance(normal_cdf, normal_cdf, &bad).is_err());
    }

    #[test]
    fn normal_vs_gumbel_sup() {
        // Dense-grid oracle, step 1e-4.
        let mut best = (0.0, 0.0);
        let mut x = -10.0;
        while x <= 10.0 {
            let d = (normal_cdf(x) - gumbel_cdf(x)).abs();
            if d > best.1 {
                best = (x, d);
            }
            x += 1e-4;
        }
        let r = sup_distance(normal_cdf, gumbel_cdf, &linspace(-10.0, 10.0, 4001)).unwrap();
        assert_relative_eq!(r.sup_distance, best.1, max_relative = 1e-8);
        assert_relative_eq!(r.sup_distance, 0.150_148, epsilon = 1e-6);
        assert!((r.argmax_x - 0.8399).abs() < 1e-3);
    }

    #[test]
    fn truncation_bound_is_conservative() {
        let law = PhiAlphaLaw::new(0.5).unwrap();
        for &x in &[-2.0, 0.0, 3.0] {
            let j = law.terms(x);
            let a = law.ln_cdf_with_terms(x, j);
            let b = law.ln_cdf_with_terms(x, 2 * j);
            assert!((a - b).abs() < 10.0 * law.tail_eps);
        }
    }
}
