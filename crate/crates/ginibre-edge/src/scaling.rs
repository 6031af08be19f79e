//! Centering and scaling constants, and the maps between raw eigenvalue
//! statistics and limit-law coordinates.
//!
//! Limit constants are functions of a limit parameter α and live in
//! [`ScalingConstants`]. Finite-n constants are the same formulas evaluated
//! at α_n = n/k and live in [`FiniteScaling`]. The two are kept apart on
//! purpose: the fixed-α rate depends on the difference between them.

use std::f64::consts::{E, PI};

use crate::error::{Error, Result};
use crate::specfun::digamma;

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// e^{1/√(2π)}, the shift inside the log-log term of a.
fn e_inv_sqrt_2pi() -> f64 {
    (1.0 / SQRT_2PI).exp()
}

/// e^{2^{3/5} π^{−4/5}}, the shift inside the log-log term of ã.
fn e_tilde_shift() -> f64 {
    (2f64.powf(0.6) * PI.powf(-0.8)).exp()
}

/// w(t) = 2t log t.
pub fn w(t: f64) -> f64 {
    2.0 * t * t.ln()
}

/// The pair (n, k) with ratio α_n = n/k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EnsembleParams {
    pub n: u64,
    pub k: u64,
}

impl EnsembleParams {
    pub fn new(n: u64, k: u64) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::domain("EnsembleParams", format!("n = {n}, k = {k}")));
        }
        Ok(Self { n, k })
    }

    /// α_n = n/k.
    pub fn alpha_n(&self) -> f64 {
        self.n as f64 / self.k as f64
    }

    /// k ψ(n), the centering of log Y_n.
    pub fn k_psi_n(&self) -> f64 {
        self.k as f64 * digamma(self.n as f64).expect("n is positive")
    }

    pub fn finite_constants(&self) -> FiniteScaling {
        let c = constants(self.alpha_n()).expect("alpha_n is positive");
        FiniteScaling {
            alpha_n: c.alpha,
            a_n: c.a,
            b_n: c.b,
            a_tilde_n: c.a_tilde,
            b_tilde_n: c.b_tilde,
        }
    }

    /// Threshold on log Y (that is, on 2·log|z|) defining the event
    /// {X_n ≤ x}: k ψ(n) + (a_n + b_n x)/√α_n.
    pub fn radius_threshold(&self, x: f64) -> f64 {
        let f = self.finite_constants();
        self.k_psi_n() + (f.a_n + f.b_n * x) / f.alpha_n.sqrt()
    }

    /// Threshold on 2·log Re z for the rightmost eigenvalue:
    /// k ψ(n) + (ã_n + b̃_n x)/√α_n.
    pub fn rightmost_threshold(&self, x: f64) -> f64 {
        let f = self.finite_constants();
        self.k_psi_n() + (f.a_tilde_n + f.b_tilde_n * x) / f.alpha_n.sqrt()
    }
}

/// Constants evaluated at α_n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteScaling {
    pub alpha_n: f64,
    pub a_n: f64,
    pub b_n: f64,
    pub a_tilde_n: f64,
    pub b_tilde_n: f64,
}

/// Constants evaluated at a limit parameter α.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingConstants {
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    pub a_tilde: f64,
    pub b_tilde: f64,
    /// da/dα.
    pub c1: f64,
    /// −db/dα.
    pub c2: f64,
}

/// ℓ₂,∞ = log(√(2π)·log(α + e^{1/√(2π)})).
pub fn ell2(alpha: f64) -> f64 {
    (SQRT_2PI * (alpha + e_inv_sqrt_2pi()).ln()).ln()
}

/// All limit constants at α > 0.
///
/// ```
/// use ginibre_edge::scaling::constants;
/// let c = constants(1.0).unwrap();
/// assert!((c.b - 1.0 / (1.0 + std::f64::consts::E).ln().sqrt()).abs() < 1e-15);
/// ```
pub fn constants(alpha: f64) -> Result<ScalingConstants> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::domain("constants", format!("alpha = {alpha}")));
    }
    let l_e = (alpha + E).ln();
    let l_e2 = (alpha + E * E).ln();
    let l1 = alpha.ln_1p();
    let ell = ell2(alpha);
    let a = l1.sqrt() - ell / l_e.sqrt();
    let b = 1.0 / l_e.sqrt();
    let bracket = (2f64.powf(-0.75) * PI).ln() + 1.25 * (alpha + e_tilde_shift()).ln().ln();
    let a_tilde = (l1 / 2.0).sqrt() - std::f64::consts::SQRT_2 * bracket / l_e2.sqrt();
    let b_tilde = std::f64::consts::SQRT_2 / l_e2.sqrt();
    Ok(ScalingConstants {
        alpha,
        a,
        b,
        a_tilde,
        b_tilde,
        c1: c1(alpha),
        c2: 1.0 / (2.0 * (alpha + E) * l_e.powf(1.5)),
    })
}

/// c₁ = da/dα:
/// √log(α+1)/w(α+1) − 2/(w(α+e^{1/√2π})√log(α+e)) + ℓ₂,∞/(w(α+e)√log(α+e)).
pub fn c1(alpha: f64) -> f64 {
    let sl_e = (alpha + E).ln().sqrt();
    alpha.ln_1p().sqrt() / w(alpha + 1.0) - 2.0 / (w(alpha + e_inv_sqrt_2pi()) * sl_e)
        + ell2(alpha) / (w(alpha + E) * sl_e)
}

/// The c₁ expression with the opposite signs on its last two terms, as it
/// is sometimes printed. It is not the derivative of a(α); kept only so the
/// discrepancy can be reproduced.
pub fn c1_printed(alpha: f64) -> f64 {
    let sl_e = (alpha + E).ln().sqrt();
    alpha.ln_1p().sqrt() / w(alpha + 1.0) + 2.0 / (w(alpha + e_inv_sqrt_2pi()) * sl_e)
        - ell2(alpha) / (w(alpha + E) * sl_e)
}

impl ScalingConstants {
    /// v_α(j, x) = (j−1)/√α + a + b x.
    pub fn v(&self, j: u64, x: f64) -> f64 {
        (j as f64 - 1.0) / self.alpha.sqrt() + self.a + self.b * x
    }

    /// ṽ_α(j, x) = (j−1)/√α + ã + b̃ x. Takes a real index because the
    /// operator entries evaluate it at half-sums.
    pub fn v_tilde(&self, j: f64, x: f64) -> f64 {
        (j - 1.0) / self.alpha.sqrt() + self.a_tilde + self.b_tilde * x
    }

    /// q₁(j, x) = [2α(v²−1) − 3√α(2j−1)v + 6j(j−1)]/(12√α).
    pub fn q1(&self, j: u64, x: f64) -> f64 {
        let v = self.v(j, x);
        let jf = j as f64;
        let sa = self.alpha.sqrt();
        (2.0 * self.alpha * (v * v - 1.0) - 3.0 * sa * (2.0 * jf - 1.0) * v + 6.0 * jf * (jf - 1.0))
            / (12.0 * sa)
    }

    /// q₂(j, x) = c₁ − c₂ x − (j−1)/(2α^{3/2}).
    pub fn q2(&self, j: u64, x: f64) -> f64 {
        self.c1 - self.c2 * x - (j as f64 - 1.0) / (2.0 * self.alpha.powf(1.5))
    }
}

/// v_α(j, x).
pub fn v_alpha(j: u64, x: f64, alpha: f64) -> Result<f64> {
    Ok(constants(alpha)?.v(j, x))
}

/// ṽ_α(j, x).
pub fn v_tilde_alpha(j: u64, x: f64, alpha: f64) -> Result<f64> {
    Ok(constants(alpha)?.v_tilde(j as f64, x))
}

/// u_n(j, x) = (j−1)/√α_n + a_n + b_n x.
pub fn u_n(j: u64, x: f64, params: &EnsembleParams) -> f64 {
    let f = params.finite_constants();
    (j as f64 - 1.0) / f.alpha_n.sqrt() + f.a_n + f.b_n * x
}

pub fn q1(j: u64, x: f64, alpha: f64) -> Result<f64> {
    Ok(constants(alpha)?.q1(j, x))
}

pub fn q2(j: u64, x: f64, alpha: f64) -> Result<f64> {
    Ok(constants(alpha)?.q2(j, x))
}

/// X_n from the raw maximum log-modulus L = log max|Z_j|:
/// (√α_n(2L − kψ(n)) − a_n)/b_n.
pub fn rescale_spectral(params: &EnsembleParams, raw_max_log_modulus: f64) -> f64 {
    rescale_log_y(params, 2.0 * raw_max_log_modulus)
}

/// X_n from M = max_j log Y_j, which has the law of 2·log max|Z_j|.
pub fn rescale_log_y(params: &EnsembleParams, max_log_y: f64) -> f64 {
    let f = params.finite_constants();
    (f.alpha_n.sqrt() * (max_log_y - params.k_psi_n()) - f.a_n) / f.b_n
}

/// The log-modulus threshold ½kψ(n) + (a_n + b_n x)/(2√α_n) of the event
/// {X_n ≤ x}; inverse of [`rescale_spectral`].
pub fn spectral_threshold(params: &EnsembleParams, x: f64) -> f64 {
    0.5 * params.radius_threshold(x)
}
