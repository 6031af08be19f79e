//! Exact finite-n distribution functions of the rescaled spectral radius
//! X_n and the rescaled rightmost eigenvalue X̃_n.
//!
//! The spectral radius law is a product over independent log Y_m. The
//! rightmost law is det(I − M̃⁽ⁿ⁾(x)) with
//!
//! ```text
//! M̃⁽ⁿ⁾_{jk} = c_{jk} (2/π) ∫₀^{π/2} cos((j−k)θ) P(log Y_m + log cos²θ ≥ T(x)) dθ,
//! ```
//!
//! m = n + 1 − (j+k)/2, and c_{jk} the Gamma-ratio prefactor
//! (Γ(m)²/(Γ(m−q)Γ(m+q)))^{k/2} with q = (j−k)/2.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fredholm::{clamp_probability, OperatorBlock, DEFAULT_QUAD_ORDER, MAX_QUAD_ORDER, QUAD_TOL};
use crate::gamma_product::{chernoff_ln_bound, tail, EmpiricalTail, GammaProductDist, TailMethod};
use crate::quad::ThetaRule;
use crate::limit_laws::{
    default_grid, linspace, rate_predictor_fixed_alpha, rate_predictor_gaussian, rate_predictor_gumbel,
    w1_predictor_fixed_alpha, w1_predictor_gaussian, w1_predictor_gumbel, DistanceReport, PhiAlphaLaw,
};
use crate::scaling::EnsembleParams;
use crate::specfun::{gumbel_cdf, ln_gamma_ratio, normal_cdf};

/// A factor whose Chernoff bound is below this is taken as exactly 1.
pub const NEGLIGIBLE_TAIL: f64 = 1e-18;

/// The θ range is cut where every integrand is below this.
const NEGLIGIBLE_INTEGRAND: f64 = 1e-30;

/// Default per-entry Monte Carlo budget for the rightmost matrix.
pub const DEFAULT_BUDGET: StderrBudget = StderrBudget { rel: 0.25, abs: 1e-4 };

/// Largest rightmost matrix handled (dense LU).
pub const MAX_RIGHTMOST_DIM: usize = 2500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    SpectralRadius,
    Rightmost,
}

/// A Monte Carlo estimate is rejected when its standard error exceeds both
/// `rel` times its magnitude and `abs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StderrBudget {
    pub rel: f64,
    pub abs: f64,
}

impl StderrBudget {
    pub fn check(&self, estimate: f64, stderr: f64) -> Result<()> {
        if stderr > self.rel * estimate.abs() && stderr > self.abs {
            Err(Error::StderrBudget { estimate, stderr })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteLawRequest {
    pub params: EnsembleParams,
    pub statistic: Statistic,
    pub tail_method: TailMethod,
    pub x_grid: Vec<f64>,
    /// Set for rightmost requests with k ≥ 2 and Monte Carlo tails.
    pub stderr_budget: Option<StderrBudget>,
    pub quad_order: usize,
    pub band_eps: f64,
}

impl FiniteLawRequest {
    pub fn new(
        params: EnsembleParams,
        statistic: Statistic,
        tail_method: TailMethod,
        x_grid: Vec<f64>,
    ) -> Result<Self> {
        if x_grid.is_empty() {
            return Err(Error::domain("FiniteLawRequest", "empty x grid"));
        }
        if x_grid.iter().any(|x| !x.is_finite()) || x_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("FiniteLawRequest", "x grid must be finite and increasing"));
        }
        let mc = matches!(tail_method, TailMethod::MonteCarlo { .. });
        let stderr_budget =
            (statistic == Statistic::Rightmost && params.k >= 2 && mc).then_some(DEFAULT_BUDGET);
        Ok(Self {
            params,
            statistic,
            tail_method,
            x_grid,
            stderr_budget,
            quad_order: DEFAULT_QUAD_ORDER,
            band_eps: 1e-16,
        })
    }
}

/// Distribution function values on the request grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteLawResult {
    pub x: Vec<f64>,
    pub cdf: Vec<f64>,
    /// Delta-method standard errors, spectral radius with Monte Carlo tails only.
    pub stderr: Option<Vec<f64>>,
    /// Factors (spectral radius) or trailing rows (rightmost) dropped
    /// because their tails are below 1e-18, per grid point.
    pub truncated: Vec<u64>,
}

fn dist(m: u64, params: &EnsembleParams) -> Result<GammaProductDist> {
    GammaProductDist::new(m, params.k)
}

fn negligible_at(d: &GammaProductDist, t: f64, level: f64) -> bool {
    t > d.mean() && chernoff_ln_bound(d, t).is_ok_and(|b| b < level.ln())
}

/// Largest m such that P(log Y_{m'} ≥ t) < 1e-18 for every m' ≤ m; zero if
/// even m = 1 is not negligible. The tails increase with m, and so do
/// their Chernoff bounds, so a binary search suffices.
pub fn negligible_cutoff(params: &EnsembleParams, t: f64) -> Result<u64> {
    let (mut lo, mut hi) = (0u64, params.n + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if negligible_at(&dist(mid, params)?, t, NEGLIGIBLE_TAIL) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn mc_tail(d: &GammaProductDist, method: TailMethod) -> Option<EmpiricalTail> {
    match method {
        TailMethod::MonteCarlo { samples, seed } => {
            Some(EmpiricalTail::new(d.sample_batch_salted(samples, seed, d.shape())))
        }
        _ => None,
    }
}

/// P(X_n ≤ x) on the grid: ∏_m P(log Y_m < k ψ(n) + (a_n + b_n x)/√α_n).
pub fn spectral_radius_cdf(req: &FiniteLawRequest) -> Result<FiniteLawResult> {
    if req.statistic != Statistic::SpectralRadius {
        return Err(Error::domain("spectral_radius_cdf", "request is not for the spectral radius"));
    }
    if let TailMethod::MonteCarlo { samples: 0, .. } = req.tail_method {
        return Err(Error::domain("spectral_radius_cdf", "Monte Carlo needs at least one sample"));
    }
    let p = req.params;
    let thresholds: Vec<f64> = req.x_grid.iter().map(|&x| p.radius_threshold(x)).collect();
    let cuts: Vec<u64> = thresholds
        .par_iter()
        .map(|&t| negligible_cutoff(&p, t))
        .collect::<Result<_>>()?;
    let low = cuts.iter().copied().min().unwrap_or(p.n);
    let mut ln_cdf = vec![0.0; thresholds.len()];
    let mut rel_var = vec![0.0; thresholds.len()];
    for m in (low + 1..=p.n).rev() {
        let d = dist(m, &p)?;
        let emp = mc_tail(&d, req.tail_method);
        let terms: Vec<Option<(f64, f64)>> = thresholds
            .par_iter()
            .zip(&cuts)
            .map(|(&t, &cut)| {
                if m <= cut {
                    return Ok(None);
                }
                let est = match &emp {
                    Some(e) => e.tail(t),
                    None => tail(&d, t, req.tail_method)?,
                };
                let rv = match est.stderr {
                    Some(se) if est.cdf > 0.0 => (se / est.cdf).powi(2),
                    _ => 0.0,
                };
                Ok(Some((est.ln_cdf(), rv)))
            })
            .collect::<Result<_>>()?;
        for (i, term) in terms.into_iter().enumerate() {
            if let Some((l, rv)) = term {
                ln_cdf[i] += l;
                rel_var[i] += rv;
            }
        }
    }
    let cdf: Vec<f64> = ln_cdf.iter().map(|l| l.exp()).collect();
    let stderr = matches!(req.tail_method, TailMethod::MonteCarlo { .. })
        .then(|| cdf.iter().zip(&rel_var).map(|(c, v)| c * v.sqrt()).collect());
    Ok(FiniteLawResult {
        x: req.x_grid.clone(),
        cdf,
        stderr,
        truncated: cuts,
    })
}

/// The diagonal matrix M⁽ⁿ⁾(x) of the spectral radius problem, with the
/// tail of log Y_{n+1−j} in position j.
pub fn spectral_radius_block(params: &EnsembleParams, x: f64, method: TailMethod) -> Result<OperatorBlock> {
    let n = usize::try_from(params.n).map_err(|_| Error::domain("spectral_radius_block", "n too large"))?;
    let t = params.radius_threshold(x);
    let mut block = OperatorBlock::zeros(n);
    for j in 1..=n {
        let d = dist(params.n + 1 - j as u64, params)?;
        block.set_sym(j, j, tail(&d, t, method)?.tail);
    }
    Ok(block)
}

/// log of (Γ(m)²/(Γ(m−q)Γ(m+q)))^{k/2}.
fn ln_prefactor(m: u64, q: u64, k: u64) -> f64 {
    if q == 0 {
        return 0.0;
    }
    let (m, q) = (m as f64, q as f64);
    -0.5 * k as f64 * (ln_gamma_ratio(m, q) + ln_gamma_ratio(m, -q))
}

/// θ beyond which P(log Y_m ≥ t − log cos²θ) < 1e-30 for the given m.
fn support_theta(d: &GammaProductDist, t: f64) -> f64 {
    let mut c = 1.0;
    while !negligible_at(d, t + c, NEGLIGIBLE_INTEGRAND) {
        c *= 2.0;
        if c > 4096.0 {
            return FRAC_PI_2;
        }
    }
    (-0.5 * c).exp().acos()
}

/// (2/π)∫₀^{π/2} cos(2qθ) 1{L + log cos²θ ≥ t} dθ averaged over the draws
/// L, for q = 0..=qmax, with standard errors. Per draw the integral is
/// θ* or sin(2qθ*)/(2q) with θ* = arccos(e^{(t−L)/2}).
fn mc_entries(emp: &EmpiricalTail, t: f64, qmax: usize) -> Vec<(f64, f64)> {
    let n = emp.len() as f64;
    let mut s = vec![0.0; qmax + 1];
    let mut s2 = vec![0.0; qmax + 1];
    for &l in emp.at_or_above(t) {
        let th = ((t - l) * 0.5).exp().min(1.0).acos();
        s[0] += th;
        s2[0] += th * th;
        let (s1, c1) = (2.0 * th).sin_cos();
        let (mut sn, mut cn) = (s1, c1);
        for q in 1..=qmax {
            let g = sn / (2 * q) as f64;
            s[q] += g;
            s2[q] += g * g;
            (sn, cn) = (sn * c1 + cn * s1, cn * c1 - sn * s1);
        }
    }
    s.iter()
        .zip(&s2)
        .map(|(&a, &b)| {
            let mean = a / n;
            let var = ((b / n - mean * mean) / n).max(0.0);
            (2.0 / PI * mean, 2.0 / PI * var.sqrt())
        })
        .collect()
}

/// Single entry of M̃⁽ⁿ⁾(x) at 1-based (j, k_idx).
pub fn finite_rightmost_entry(
    j: usize,
    k_idx: usize,
    x: f64,
    params: &EnsembleParams,
    method: TailMethod,
) -> Result<f64> {
    let n = params.n as usize;
    if j == 0 || k_idx == 0 || j > n || k_idx > n {
        return Err(Error::domain("finite_rightmost_entry", format!("({j}, {k_idx}) outside 1..={n}")));
    }
    if (j + k_idx) % 2 == 1 {
        return Ok(0.0);
    }
    let t = params.rightmost_threshold(x);
    let m = params.n + 1 - ((j + k_idx) / 2) as u64;
    let q = (j.abs_diff(k_idx) / 2) as u64;
    let pref = ln_prefactor(m, q, params.k).exp();
    let d = dist(m, params)?;
    if let Some(emp) = mc_tail(&d, method) {
        let (v, se) = mc_entries(&emp, t, q as usize)[q as usize];
        let (v, se) = (pref * v, pref * se);
        if params.k >= 2 {
            DEFAULT_BUDGET.check(v, se)?;
        }
        return Ok(v);
    }
    let theta_max = support_theta(&d, t);
    let dd = (2 * q) as f64;
    let eval = |order: usize| -> Result<f64> {
        let rule = ThetaRule::truncated(order, theta_max);
        let mut s = 0.0;
        for ((&th, &w), &lc) in rule.nodes.iter().zip(&rule.weights).zip(&rule.ln_cos2) {
            s += w * (dd * th).cos() * tail(&d, t - lc, method)?.tail;
        }
        Ok(2.0 / PI * pref * s)
    };
    let mut order = DEFAULT_QUAD_ORDER;
    let mut prev = eval(order)?;
    while order < MAX_QUAD_ORDER {
        order *= 2;
        let next = eval(order)?;
        if (next - prev).abs() <= QUAD_TOL {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NoConvergence { what: "finite rightmost entry quadrature" })
}

/// Visits the banded upper triangle of a dim × dim block: (j, k, m, q, prefactor).
fn for_each_entry(
    params: &EnsembleParams,
    dim: usize,
    band_eps: f64,
    mut f: impl FnMut(usize, usize, u64, u64, f64) -> Result<()>,
) -> Result<()> {
    for j in 1..=dim {
        let mut q = 0usize;
        while j + 2 * q <= dim {
            let m = params.n + 1 - (j + q) as u64;
            let pref = ln_prefactor(m, q as u64, params.k).exp();
            if pref < band_eps {
                break;
            }
            f(j, j + 2 * q, m, q as u64, pref)?;
            q += 1;
        }
    }
    Ok(())
}

fn block_at_order(
    params: &EnsembleParams,
    t: f64,
    dim: usize,
    order: usize,
    theta_max: f64,
    req: &FiniteLawRequest,
) -> Result<OperatorBlock> {
    let rule = ThetaRule::truncated(order, theta_max);
    let n = params.n;
    let m_low = n + 1 - dim as u64;
    // Tail values at every node, one row per m in m_low..=n.
    let table: Vec<Vec<f64>> = (m_low..=n)
        .into_par_iter()
        .map(|m| {
            let d = dist(m, params)?;
            rule.ln_cos2
                .iter()
                .map(|&lc| tail(&d, t - lc, req.tail_method).map(|e| e.tail))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut cos_w: Vec<Vec<f64>> = Vec::new();
    let mut block = OperatorBlock::zeros(dim);
    for_each_entry(params, dim, req.band_eps, |j, k, m, q, pref| {
        while cos_w.len() <= q as usize {
            let dd = (2 * cos_w.len()) as f64;
            cos_w.push(rule.nodes.iter().zip(&rule.weights).map(|(&th, &w)| (dd * th).cos() * w).collect());
        }
        let row = &table[(m - m_low) as usize];
        let s: f64 = cos_w[q as usize].iter().zip(row).map(|(a, b)| a * b).sum();
        block.set_sym(j, k, 2.0 / PI * pref * s);
        Ok(())
    })?;
    Ok(block)
}

/// The active block of M̃⁽ⁿ⁾(x) by quadrature, and the number of dropped
/// trailing rows. Not for Monte Carlo tails.
pub fn rightmost_block(params: &EnsembleParams, x: f64, req: &FiniteLawRequest) -> Result<(OperatorBlock, u64)> {
    if matches!(req.tail_method, TailMethod::MonteCarlo { .. }) {
        return rightmost_blocks_mc(params, &[x], req).map(|mut v| v.remove(0));
    }
    let t = params.rightmost_threshold(x);
    let cut = negligible_cutoff(params, t)?;
    let dim = (params.n - cut) as usize;
    if dim > MAX_RIGHTMOST_DIM {
        return Err(Error::Method {
            method: "rightmost",
            detail: format!("{dim} active rows exceed the dense limit {MAX_RIGHTMOST_DIM}"),
        });
    }
    if dim == 0 {
        return Ok((OperatorBlock::zeros(0), cut));
    }
    let theta_max = support_theta(&dist(params.n, params)?, t);
    let mut order = req.quad_order.max(2);
    let mut prev = block_at_order(params, t, dim, order, theta_max, req)?;
    while order < MAX_QUAD_ORDER {
        order *= 2;
        let next = block_at_order(params, t, dim, order, theta_max, req)?;
        let diff = prev
            .entries
            .iter()
            .zip(&next.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if diff <= QUAD_TOL {
            return Ok((next, cut));
        }
        prev = next;
    }
    Err(Error::NoConvergence { what: "finite rightmost block quadrature" })
}

/// Monte Carlo blocks for several grid points. The draws for each m are
/// made once and shared by all grid points.
fn rightmost_blocks_mc(params: &EnsembleParams, xs: &[f64], req: &FiniteLawRequest) -> Result<Vec<(OperatorBlock, u64)>> {
    let thresholds: Vec<f64> = xs.iter().map(|&x| params.rightmost_threshold(x)).collect();
    let cuts: Vec<u64> = thresholds
        .iter()
        .map(|&t| negligible_cutoff(params, t))
        .collect::<Result<_>>()?;
    let dims: Vec<usize> = cuts.iter().map(|&c| (params.n - c) as usize).collect();
    let dmax = dims.iter().copied().max().unwrap_or(0);
    if dmax > MAX_RIGHTMOST_DIM {
        return Err(Error::Method {
            method: "rightmost",
            detail: format!("{dmax} active rows exceed the dense limit {MAX_RIGHTMOST_DIM}"),
        });
    }
    let budget = req.stderr_budget;
    let mut blocks: Vec<OperatorBlock> = dims.iter().map(|&d| OperatorBlock::zeros(d)).collect();
    for m in (params.n + 1 - dmax as u64)..=params.n {
        let d = dist(m, params)?;
        let emp = mc_tail(&d, req.tail_method).expect("Monte Carlo tails");
        let p = (params.n + 1 - m) as usize;
        blocks
            .par_iter_mut()
            .zip(&thresholds)
            .try_for_each(|(block, &t)| -> Result<()> {
                let dim = block.dim;
                if p > dim {
                    return Ok(());
                }
                let mut prefs = Vec::new();
                while prefs.len() < p && p + prefs.len() <= dim {
                    let pref = ln_prefactor(m, prefs.len() as u64, params.k).exp();
                    if pref < req.band_eps {
                        break;
                    }
                    prefs.push(pref);
                }
                if prefs.is_empty() {
                    return Ok(());
                }
                let raw = mc_entries(&emp, t, prefs.len() - 1);
                for (q, (pref, (v, se))) in prefs.iter().zip(raw).enumerate() {
                    let (v, se) = (pref * v, pref * se);
                    if let Some(b) = budget {
                        b.check(v, se)?;
                    }
                    block.set_sym(p - q, p + q, v);
                }
                Ok(())
            })?;
    }
    Ok(blocks.into_iter().zip(cuts).collect())
}

/// P(X̃_n ≤ x) = det(I − M̃⁽ⁿ⁾(x)) on the grid.
pub fn rightmost_cdf(req: &FiniteLawRequest) -> Result<FiniteLawResult> {
    if req.statistic != Statistic::Rightmost {
        return Err(Error::domain("rightmost_cdf", "request is not for the rightmost eigenvalue"));
    }
    if let TailMethod::MonteCarlo { samples: 0, .. } = req.tail_method {
        return Err(Error::domain("rightmost_cdf", "Monte Carlo needs at least one sample"));
    }
    let p = req.params;
    let blocks: Vec<(OperatorBlock, u64)> = if matches!(req.tail_method, TailMethod::MonteCarlo { .. }) {
        rightmost_blocks_mc(&p, &req.x_grid, req)?
    } else {
        req.x_grid
            .par_iter()
            .map(|&x| rightmost_block(&p, x, req))
            .collect::<Result<_>>()?
    };
    let mut cdf = Vec::with_capacity(blocks.len());
    let mut truncated = Vec::with_capacity(blocks.len());
    for (b, cut) in &blocks {
        cdf.push(clamp_probability(b.det_i_minus())?);
        truncated.push(*cut);
    }
    Ok(FiniteLawResult {
        x: req.x_grid.clone(),
        cdf,
        stderr: None,
        truncated,
    })
}

/// Dispatches on the request statistic.
pub fn finite_cdf(req: &FiniteLawRequest) -> Result<FiniteLawResult> {
    match req.statistic {
        Statistic::SpectralRadius => spectral_radius_cdf(req),
        Statistic::Rightmost => rightmost_cdf(req),
    }
}

/// Which limit law a finite-n spectral radius law is compared with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateRegime {
    /// α_n → 0, limit Φ.
    Zero,
    /// α_n → α, limit Φ_α.
    Fixed(f64),
    /// α_n → ∞, limit Λ.
    Infinity,
}

/// Measured and predicted distances between the finite-n spectral radius
/// law and its limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub params: EnsembleParams,
    pub regime: RateRegime,
    /// Sup distance and its predictor, W₁ distance.
    pub distance: DistanceReport,
    pub w1_predicted: f64,
    pub w1_ratio: f64,
    /// Largest number of truncated factors over the grid.
    pub max_truncated: u64,
}

type LimitCdf = Box<dyn Fn(f64) -> f64 + Sync>;

/// Compares the finite-n spectral radius law with the regime's limit on
/// the default grid. The sup is refined on 17 points around the coarse
/// maximizer; W₁ is the trapezoid rule on the grid.
pub fn rate_report(params: &EnsembleParams, regime: RateRegime, tail_method: TailMethod) -> Result<RateReport> {
    let an = params.alpha_n();
    let (grid, limit, sup_pred, w1_pred): (Vec<f64>, LimitCdf, f64, f64) = match regime {
        RateRegime::Zero => {
            if !(an < 1.0) {
                return Err(Error::domain("rate_report", format!("regime zero needs α_n < 1, got {an}")));
            }
            (default_grid(an), Box::new(normal_cdf), rate_predictor_gaussian(params), w1_predictor_gaussian(params))
        }
        RateRegime::Infinity => {
            if !(an > std::f64::consts::E) {
                return Err(Error::domain("rate_report", format!("regime infinity needs α_n > e, got {an}")));
            }
            (default_grid(an), Box::new(gumbel_cdf), rate_predictor_gumbel(an), w1_predictor_gumbel(an))
        }
        RateRegime::Fixed(alpha) => {
            let law = PhiAlphaLaw::new(alpha)?;
            let sup = rate_predictor_fixed_alpha(params, alpha)?;
            let w1 = w1_predictor_fixed_alpha(params, alpha)?;
            (default_grid(alpha), Box::new(move |x| law.cdf(x)), sup, w1)
        }
    };
    let req = FiniteLawRequest::new(*params, Statistic::SpectralRadius, tail_method, grid.clone())?;
    let r = spectral_radius_cdf(&req)?;
    let diff: Vec<f64> = r.cdf.iter().zip(&grid).map(|(c, &x)| (c - limit(x)).abs()).collect();
    let (i, mut sup) = diff
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (k, &v)| if v > b.1 { (k, v) } else { b });
    let mut argmax = grid[i];
    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    if hi > lo {
        let local = linspace(lo, hi, 17);
        let req = FiniteLawRequest::new(*params, Statistic::SpectralRadius, tail_method, local.clone())?;
        let fine = spectral_radius_cdf(&req)?;
        for (c, &x) in fine.cdf.iter().zip(&local) {
            let d = (c - limit(x)).abs();
            if d > sup {
                sup = d;
                argmax = x;
            }
        }
    }
    let w1 = diff
        .windows(2)
        .zip(grid.windows(2))
        .map(|(d, x)| 0.5 * (d[0] + d[1]) * (x[1] - x[0]))
        .sum::<f64>();
    let distance = DistanceReport {
        sup_distance: sup,
        argmax_x: argmax,
        w1_distance: w1,
        predicted: f64::NAN,
        ratio: f64::NAN,
    }
    .with_prediction(sup_pred);
    Ok(RateReport {
        params: *params,
        regime,
        distance,
        w1_predicted: w1_pred,
        w1_ratio: w1 / w1_pred,
        max_truncated: r.truncated.iter().copied().max().unwrap_or(0),
    })
}
