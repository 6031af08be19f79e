//! Truncations of the limiting operator M̃(x, α) and the Fredholm
//! determinant Φ̃_α(x) = det(I − M̃(x, α)).
//!
//! Entries are
//!
//! ```text
//! M̃_{jk} = (2/π) e^{−(j−k)²/(4α)} ∫₀^{π/2} cos((j−k)θ) Ψ(ṽ_α((j+k)/2, x) − √α log cos²θ) dθ
//! ```
//!
//! for even j − k and zero otherwise. They depend on (j, k) only through the
//! half-sum p and the offset d, so one set of θ-nodes serves every entry and
//! the Ψ values are computed once per half-sum.

use std::f64::consts::{E, FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::limit_laws::{grid_sup, linspace, mills_tail_bound, truncation_terms, DistanceReport};
use crate::quad::{gl_integrate, ThetaRule};
use crate::scaling::{constants, ell2, ScalingConstants};
use crate::specfun::{gumbel_cdf, normal_cdf, normal_sf};

/// Default quadrature order per θ piece.
pub const DEFAULT_QUAD_ORDER: usize = 64;
/// Largest order tried before giving up.
pub const MAX_QUAD_ORDER: usize = 4096;
/// Two successive quadrature passes must agree to this, entrywise.
pub const QUAD_TOL: f64 = 1e-12;
/// Default Mills-tail tolerance for automatic truncation.
pub const DEFAULT_TRUNCATION_EPS: f64 = 1e-13;
/// Largest dimension handled by a dense LU; above it the determinant is
/// enclosed using the trace and a Hilbert–Schmidt bound.
pub const DEFAULT_DENSE_LIMIT: usize = 2500;
/// Values within this distance of [0, 1] are clamped into it.
pub const CLAMP_TOL: f64 = 1e-10;

/// Ψ beyond this argument is below 1e-300 and treated as zero.
const PSI_NEGLIGIBLE: f64 = 37.0;

/// How the truncation size is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    Fixed(usize),
    /// Smallest N whose Mills-ratio tail bound Σ_{j>N} Ψ(ṽ_α(j, x)) is below eps.
    Auto(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FredholmConfig {
    pub truncation: Truncation,
    pub quad_order: usize,
    pub band_eps: f64,
    pub dense_limit: usize,
}

impl Default for FredholmConfig {
    fn default() -> Self {
        Self {
            truncation: Truncation::Auto(DEFAULT_TRUNCATION_EPS),
            quad_order: DEFAULT_QUAD_ORDER,
            band_eps: 1e-16,
            dense_limit: DEFAULT_DENSE_LIMIT,
        }
    }
}

/// A finite square block of operator entries, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorBlock {
    pub dim: usize,
    pub entries: Vec<f64>,
    /// True once [`OperatorBlock::structure`] found parity zeros intact.
    pub parity_checked: bool,
}

/// Results of the structural checks on a block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureReport {
    pub parity_ok: bool,
    pub max_asymmetry: f64,
    pub diag_in_unit_interval: bool,
    /// max over pairs of |M_jk|² − M_jj M_kk (should be ≤ 0 up to rounding).
    pub max_cauchy_schwarz_excess: f64,
    /// max over even offsets of |M_jk| − M_pp, p = (j+k)/2 (should be ≤ 0).
    pub max_midpoint_excess: f64,
}

impl OperatorBlock {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
            parity_checked: false,
        }
    }

    /// Entry at 1-based (j, k).
    pub fn get(&self, j: usize, k: usize) -> f64 {
        assert!(j >= 1 && k >= 1 && j <= self.dim && k <= self.dim, "({j}, {k}) outside a {0}×{0} block", self.dim);
        self.entries[(j - 1) * self.dim + (k - 1)]
    }

    pub(crate) fn set_sym(&mut self, j: usize, k: usize, v: f64) {
        let n = self.dim;
        self.entries[(j - 1) * n + (k - 1)] = v;
        self.entries[(k - 1) * n + (j - 1)] = v;
    }

    pub fn trace(&self) -> f64 {
        (1..=self.dim).map(|j| self.get(j, j)).sum()
    }

    pub fn hs_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// det(I − block) by LU with partial pivoting.
    pub fn det_i_minus(&self) -> f64 {
        if self.dim == 0 {
            return 1.0;
        }
        let n = self.dim;
        let m = DMatrix::from_fn(n, n, |r, c| {
            let v = self.entries[r * n + c];
            if r == c {
                1.0 - v
            } else {
                -v
            }
        });
        m.lu().determinant()
    }

    /// Runs the parity, symmetry, range, Cauchy–Schwarz and midpoint checks.
    pub fn structure(&mut self) -> StructureReport {
        let n = self.dim;
        let mut parity_ok = true;
        let mut max_asym: f64 = 0.0;
        let mut diag_ok = true;
        let mut cs: f64 = f64::NEG_INFINITY;
        let mut mid: f64 = f64::NEG_INFINITY;
        for j in 1..=n {
            let d = self.get(j, j);
            diag_ok &= (0.0..=1.0).contains(&d);
            for k in 1..=n {
                let v = self.get(j, k);
                if (j + k) % 2 == 1 {
                    parity_ok &= v == 0.0;
                    continue;
                }
                max_asym = max_asym.max((v - self.get(k, j)).abs());
                cs = cs.max(v * v - d * self.get(k, k));
                let p = (j + k) / 2;
                mid = mid.max(v.abs() - self.get(p, p));
            }
        }
        self.parity_checked = parity_ok;
        StructureReport {
            parity_ok,
            max_asymmetry: max_asym,
            diag_in_unit_interval: diag_ok,
            max_cauchy_schwarz_excess: cs,
            max_midpoint_excess: mid,
        }
    }
}

/// Largest offset d with e^{−d²/(4α)} ≥ band_eps.
fn band_width(alpha: f64, band_eps: f64) -> usize {
    let d = (4.0 * alpha * (1.0 / band_eps).ln()).sqrt();
    if d.is_finite() {
        d.floor() as usize
    } else {
        usize::MAX
    }
}

/// The θ rule for a given smallest ṽ. When every integrand is provably
/// below 1e-300 beyond some θ ≤ π/4, the rule stops there.
fn theta_rule(order: usize, alpha: f64, v_min: f64) -> ThetaRule {
    let c = (PSI_NEGLIGIBLE - v_min) / (2.0 * alpha.sqrt());
    if c < -FRAC_PI_4.cos().ln() {
        ThetaRule::truncated(order, (-c).exp().acos())
    } else {
        ThetaRule::full(order)
    }
}

/// The Ψ(ṽ_p − √α log cos²θᵢ) table for p = 1..=pmax, one row per p.
fn psi_table(c: &ScalingConstants, x: f64, pmax: usize, rule: &ThetaRule) -> Vec<Vec<f64>> {
    let sa = c.alpha.sqrt();
    (1..=pmax)
        .into_par_iter()
        .map(|p| {
            let v = c.v_tilde(p as f64, x);
            rule.ln_cos2.iter().map(|&lc| normal_sf(v - sa * lc)).collect()
        })
        .collect()
}

/// Single entry of M̃(x, α) at 1-based (j, k), with the quadrature order
/// doubled from `quad_order` until two passes agree to 1e-12.
pub fn limit_entry(j: usize, k: usize, x: f64, alpha: f64, quad_order: usize) -> Result<f64> {
    if j == 0 || k == 0 {
        return Err(Error::domain("limit_entry", "indices are 1-based"));
    }
    if (j + k) % 2 == 1 {
        return Ok(0.0);
    }
    let c = constants(alpha)?;
    let d = j.abs_diff(k) as f64;
    let pref = (2.0 / PI) * (-(d * d) / (4.0 * alpha)).exp();
    if pref == 0.0 {
        return Ok(0.0);
    }
    let v = c.v_tilde((j + k) as f64 / 2.0, x);
    let sa = alpha.sqrt();
    let eval = |order: usize| {
        theta_rule(order, alpha, v).integrate(|th, lc| (d * th).cos() * normal_sf(v - sa * lc)) * pref
    };
    let mut order = quad_order.max(2);
    let mut prev = eval(order);
    while order < MAX_QUAD_ORDER {
        order *= 2;
        let next = eval(order);
        if (next - prev).abs() <= QUAD_TOL {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NoConvergence { what: "limit entry quadrature" })
}

/// Automatic truncation size at (x, α).
pub fn auto_truncation(x: f64, alpha: f64, eps: f64) -> Result<usize> {
    let c = constants(alpha)?;
    Ok(truncation_terms(c.v_tilde(1.0, x), 1.0 / alpha.sqrt(), eps) as usize)
}

fn block_at_order(
    c: &ScalingConstants,
    x: f64,
    dim: usize,
    order: usize,
    band: usize,
) -> OperatorBlock {
    let alpha = c.alpha;
    let rule = theta_rule(order, alpha, c.v_tilde(1.0, x));
    let table = psi_table(c, x, dim, &rule);
    let dmax = band.min(dim.saturating_sub(1));
    // cos(dθᵢ)·wᵢ for even d, and the Gaussian prefactor with 2/π.
    let cos_w: Vec<Vec<f64>> = (0..=dmax / 2)
        .into_par_iter()
        .map(|h| {
            let d = (2 * h) as f64;
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&th, &w)| (d * th).cos() * w)
                .collect()
        })
        .collect();
    let pref: Vec<f64> = (0..=dmax / 2)
        .map(|h| {
            let d = (2 * h) as f64;
            2.0 / PI * (-(d * d) / (4.0 * alpha)).exp()
        })
        .collect();
    let rows: Vec<Vec<(usize, f64)>> = (1..=dim)
        .into_par_iter()
        .map(|j| {
            let mut out = Vec::new();
            let mut k = j;
            while k <= dim && k - j <= dmax {
                let h = (k - j) / 2;
                let p = (j + k) / 2;
                let s: f64 = cos_w[h].iter().zip(&table[p - 1]).map(|(a, b)| a * b).sum();
                out.push((k, pref[h] * s));
                k += 2;
            }
            out
        })
        .collect();
    let mut block = OperatorBlock::zeros(dim);
    for (j, row) in rows.into_iter().enumerate() {
        for (k, v) in row {
            block.set_sym(j + 1, k, v);
        }
    }
    block
}

/// Assembles the dim × dim truncation of M̃(x, α). The θ-rule order is
/// doubled until the block changes by at most 1e-12 in every entry.
pub fn assemble_limit_block(x: f64, alpha: f64, dim: usize, cfg: &FredholmConfig) -> Result<OperatorBlock> {
    let c = constants(alpha)?;
    let band = band_width(alpha, cfg.band_eps);
    let mut order = cfg.quad_order.max(2);
    let mut prev = block_at_order(&c, x, dim, order, band);
    while order < MAX_QUAD_ORDER {
        order *= 2;
        let next = block_at_order(&c, x, dim, order, band);
        let diff = prev
            .entries
            .iter()
            .zip(&next.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if diff <= QUAD_TOL {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NoConvergence { what: "operator block quadrature" })
}

/// How a Fredholm value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetMethod {
    /// Dense LU of the assembled block.
    Dense,
    /// Midpoint of [exp(−Tr − H/(2(1−√H))), exp(−Tr)], H ≥ ‖M̃‖²_HS.
    TraceEnclosure,
}

/// Φ̃_α(x) with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FredholmValue {
    pub value: f64,
    pub dim: usize,
    pub method: DetMethod,
    pub trace: f64,
    /// ‖M̃‖_HS for the dense path, an upper bound on it otherwise.
    pub hs_norm: f64,
    pub lower: f64,
    pub upper: f64,
}

pub(crate) fn clamp_probability(v: f64) -> Result<f64> {
    if v < -CLAMP_TOL {
        return Err(Error::NegativeDeterminant { value: v });
    }
    if v < 0.0 {
        return Ok(0.0);
    }
    if v > 1.0 && v <= 1.0 + CLAMP_TOL {
        return Ok(1.0);
    }
    Ok(v)
}

/// Φ̃_α(x) = det(I − M̃(x, α)).
pub fn phi_tilde_alpha(x: f64, alpha: f64, cfg: &FredholmConfig) -> Result<FredholmValue> {
    let dim = match cfg.truncation {
        Truncation::Fixed(n) => n.max(1),
        Truncation::Auto(eps) => auto_truncation(x, alpha, eps)?,
    };
    if dim <= cfg.dense_limit {
        let block = assemble_limit_block(x, alpha, dim, cfg)?;
        let det = clamp_probability(block.det_i_minus())?;
        Ok(FredholmValue {
            value: det,
            dim,
            method: DetMethod::Dense,
            trace: block.trace(),
            hs_norm: block.hs_norm(),
            lower: det,
            upper: det,
        })
    } else {
        trace_enclosure(x, alpha, dim, cfg)
    }
}

/// Trace of the dim-truncation and H = Σ_p (2/π)∫f_p², an upper bound on
/// the squared HS norm (Parseval on the cos(2qθ) basis of [0, π/2]).
pub fn trace_and_hs_bound(x: f64, alpha: f64, dim: usize, cfg: &FredholmConfig) -> Result<(f64, f64)> {
    let c = constants(alpha)?;
    let eval = |order: usize| {
        let rule = theta_rule(order, alpha, c.v_tilde(1.0, x));
        let sa = alpha.sqrt();
        let parts: Vec<(f64, f64)> = (1..=dim)
            .into_par_iter()
            .map(|p| {
                let v = c.v_tilde(p as f64, x);
                let mut t = 0.0;
                let mut h = 0.0;
                for (&w, &lc) in rule.weights.iter().zip(&rule.ln_cos2) {
                    let f = normal_sf(v - sa * lc);
                    t += w * f;
                    h += w * f * f;
                }
                (t, h)
            })
            .collect();
        let (t, h) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        (2.0 / PI * t, 2.0 / PI * h)
    };
    let mut order = cfg.quad_order.max(2);
    let mut prev = eval(order);
    while order < MAX_QUAD_ORDER {
        order *= 2;
        let next = eval(order);
        if (next.0 - prev.0).abs() <= QUAD_TOL * dim as f64 && (next.1 - prev.1).abs() <= QUAD_TOL * dim as f64 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NoConvergence { what: "trace quadrature" })
}

fn trace_enclosure(x: f64, alpha: f64, dim: usize, cfg: &FredholmConfig) -> Result<FredholmValue> {
    let (tr, h) = trace_and_hs_bound(x, alpha, dim, cfg)?;
    let hs = h.sqrt();
    if hs >= 1.0 {
        return Err(Error::NoConvergence { what: "trace enclosure (HS bound ≥ 1)" });
    }
    let upper = (-tr).exp();
    let lower = (-tr - h / (2.0 * (1.0 - hs))).exp();
    Ok(FredholmValue {
        value: 0.5 * (lower + upper),
        dim,
        method: DetMethod::TraceEnclosure,
        trace: tr,
        hs_norm: hs,
        lower,
        upper,
    })
}

/// Small-α constant (√2 + 4 ln 2)/(2√(2π)).
pub fn small_alpha_constant() -> f64 {
    (2f64.sqrt() + 4.0 * 2f64.ln()) / (2.0 * (2.0 * PI).sqrt())
}

/// Large-α constant 25/(16e).
pub fn large_alpha_constant() -> f64 {
    25.0 / (16.0 * E)
}

/// Points in the grid used by [`boundary_report`].
pub const BOUNDARY_GRID_POINTS: usize = 801;

/// sup_x|Φ̃_α − Φ| against (√2+4ln2)/(2√(2π))·√α, and sup_x|Φ̃_α − Λ|
/// against (25/(16e))(log log α)²/log α.
pub fn boundary_report(alpha: f64) -> Result<(DistanceReport, DistanceReport)> {
    let grid = linspace(-10.0, ell2(alpha) + 10.0, BOUNDARY_GRID_POINTS);
    boundary_report_on(alpha, &grid, &FredholmConfig::default())
}

/// [`boundary_report`] on a caller-chosen grid.
pub fn boundary_report_on(
    alpha: f64,
    grid: &[f64],
    cfg: &FredholmConfig,
) -> Result<(DistanceReport, DistanceReport)> {
    // Evaluate once on the grid, then refine each sup locally.
    let values: Vec<f64> = grid
        .par_iter()
        .map(|&x| phi_tilde_alpha(x, alpha, cfg).map(|v| v.value))
        .collect::<Result<_>>()?;
    let f = |x: f64| phi_tilde_alpha(x, alpha, cfg).map(|v| v.value).unwrap_or(f64::NAN);
    let report = |g: fn(f64) -> f64, predicted: f64| -> DistanceReport {
        let coarse: Vec<f64> = values.iter().zip(grid).map(|(v, &x)| (v - g(x)).abs()).collect();
        let i = coarse
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (k, &v)| if v > b.1 { (k, v) } else { b })
            .0;
        let lo = grid[i.saturating_sub(1)];
        let hi = grid[(i + 1).min(grid.len() - 1)];
        let local = linspace(lo, hi, 9);
        let (x, sup) = grid_sup(|x| (f(x) - g(x)).abs(), &local);
        let (x, sup) = if sup >= coarse[i] { (x, sup) } else { (grid[i], coarse[i]) };
        let w1 = coarse
            .windows(2)
            .zip(grid.windows(2))
            .map(|(v, x)| 0.5 * (v[0] + v[1]) * (x[1] - x[0]))
            .sum();
        DistanceReport {
            sup_distance: sup,
            argmax_x: x,
            w1_distance: w1,
            predicted: f64::NAN,
            ratio: f64::NAN,
        }
        .with_prediction(predicted)
    };
    let l = alpha.ln();
    let small = report(normal_cdf, small_alpha_constant() * alpha.sqrt());
    let large_pred = if alpha > E {
        large_alpha_constant() * l.ln().powi(2) / l
    } else {
        f64::NAN
    };
    let large = report(gumbel_cdf, large_pred);
    Ok((small, large))
}

/// Cross-check integral ∫₀^v s^{−1/2}(h+s)^{−1}e^{−(h+s)²/2} ds, by
/// Gauss–Legendre after s = y², and its large-h approximation √(π/h³)e^{−h²/2}.
pub fn endpoint_integral_check(h: f64, v: f64, order: usize) -> (f64, f64) {
    let integral = gl_integrate(order, 0.0, v.sqrt(), |y| {
        let s = y * y;
        2.0 / (h + s) * (-(h + s).powi(2) / 2.0).exp()
    });
    let approx = (PI / h.powi(3)).sqrt() * (-h * h / 2.0).exp();
    (integral, approx)
}

/// Upper bound on Σ_{j>N} M̃_jj, from Ψ(ṽ) ≥ M̃_jj.
pub fn truncation_tail_bound(x: f64, alpha: f64, dim: usize) -> Result<f64> {
    let c = constants(alpha)?;
    Ok(mills_tail_bound(c.v_tilde(dim as f64 + 1.0, x), 1.0 / alpha.sqrt()))
}

/// θ at which the integrand of every entry at (x, α) falls below 1e-300,
/// or π/2 if it never does on the θ range.
pub fn theta_support(x: f64, alpha: f64) -> Result<f64> {
    let c = constants(alpha)?;
    let cc = (PSI_NEGLIGIBLE - c.v_tilde(1.0, x)) / (2.0 * alpha.sqrt());
    Ok(if cc < 0.0 { 0.0 } else { (-cc).exp().acos().min(FRAC_PI_2) })
}
