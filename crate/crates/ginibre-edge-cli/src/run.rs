//! Executes a validated [`RunConfig`] and produces a [`Table`].

use rayon::prelude::*;
use thiserror::Error;

use ginibre_edge::finite_n::{
    finite_cdf, rate_report, FiniteLawRequest, RateRegime, Statistic,
};
use ginibre_edge::fredholm::{phi_tilde_alpha, DetMethod, FredholmConfig, Truncation};
use ginibre_edge::gamma_product::TailMethod;
use ginibre_edge::limit_laws::{default_grid, BetaRegime, PhiAlphaLaw};
use ginibre_edge::sampler::{ks_critical_99, ks_distance, sample_spectral_radius, EmpiricalCdf};
use ginibre_edge::scaling::{ell2, EnsembleParams};
use ginibre_edge::specfun::{gumbel_cdf, normal_cdf};

use crate::config::{Command, ConfigError, LimitLaw, Numerics, Regime, RunConfig, StatisticArg, TailArg};
use crate::output::{Cell, Table};

/// Rightmost runs with k ≥ 2 above this n get a cost warning.
pub const RIGHTMOST_WARN_N: u64 = 300;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Library(#[from] ginibre_edge::Error),
    #[error("{0} check(s) failed")]
    SelftestFailed(usize),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// 2 for usage and parameter errors, 3 for numerical-quality failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Library(e) if e.is_numerical() => 3,
            RunError::Library(_) => 2,
            RunError::SelftestFailed(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

pub type RunResult<T> = Result<T, RunError>;

/// The tail method a config selects for a given k.
pub fn tail_method(numerics: &Numerics, k: u64) -> TailMethod {
    let mc = TailMethod::MonteCarlo {
        samples: numerics.samples,
        seed: numerics.seed,
    };
    match numerics.tail {
        TailArg::Auto => match TailMethod::auto(k, numerics.seed) {
            TailMethod::MonteCarlo { .. } => mc,
            m => m,
        },
        TailArg::ExactK1 => TailMethod::ExactK1,
        TailArg::Edgeworth => TailMethod::Edgeworth,
        TailArg::Chernoff => TailMethod::Chernoff,
        TailArg::MonteCarlo => mc,
    }
}

pub fn fredholm_config(numerics: &Numerics) -> FredholmConfig {
    FredholmConfig {
        truncation: match numerics.truncation {
            Some(n) => Truncation::Fixed(n),
            None => Truncation::Auto(numerics.truncation_eps),
        },
        quad_order: numerics.quad_order,
        band_eps: numerics.band_eps,
        ..FredholmConfig::default()
    }
}

/// Default grid points for expensive curves.
pub const COARSE_GRID_POINTS: usize = 401;

/// [−10, ℓ₂,∞(α) + 10] with the given number of points, as a grid spec.
pub fn default_grid_spec(alpha: f64, count: usize) -> crate::config::GridSpec {
    crate::config::GridSpec {
        lo: -10.0,
        hi: ell2(alpha) + 10.0,
        count,
    }
}

pub fn execute(cfg: &RunConfig) -> RunResult<Table> {
    cfg.validate()?;
    let nm = &cfg.numerics;
    match &cfg.run {
        Command::Limit { law, alpha, grid } => limit(*law, *alpha, &grid.points(), nm),
        Command::Finite { statistic, n, k, grid } => finite(*statistic, *n, *k, grid.points(), nm),
        Command::Rate { regime, n, k, alpha } => rate(*regime, *n, *k, *alpha, nm),
        Command::Mc { n, k, count } => mc(*n, *k, *count, nm),
        Command::Scan { alphas, grid } => scan(alphas, &grid.points(), nm),
        Command::Selftest => selftest(),
    }
}

fn limit(law: LimitLaw, alpha: Option<f64>, xs: &[f64], nm: &Numerics) -> RunResult<Table> {
    match law {
        LimitLaw::Fredholm => {
            let alpha = alpha.expect("validated");
            let cfg = fredholm_config(nm);
            let values = xs
                .par_iter()
                .map(|&x| phi_tilde_alpha(x, alpha, &cfg))
                .collect::<Result<Vec<_>, _>>()?;
            let mut t = Table::new(&["x", "F", "trace", "hs_norm", "dim", "lower", "upper"]);
            let mut enclosures = 0u64;
            for (&x, v) in xs.iter().zip(&values) {
                enclosures += u64::from(v.method == DetMethod::TraceEnclosure);
                t.push(vec![
                    Cell::num(x),
                    Cell::num(v.value),
                    Cell::num(v.trace),
                    Cell::num(v.hs_norm),
                    Cell::int(v.dim as u64),
                    Cell::num(v.lower),
                    Cell::num(v.upper),
                ]);
            }
            t.diag("law", "fredholm");
            t.diag("max_dim", values.iter().map(|v| v.dim).max().unwrap_or(0) as u64);
            t.diag("trace_enclosure_points", enclosures);
            Ok(t)
        }
        _ => {
            let f: Box<dyn Fn(f64) -> f64 + Sync> = match law {
                LimitLaw::PhiAlpha => {
                    let law = PhiAlphaLaw::new(alpha.expect("validated"))?;
                    Box::new(move |x| law.cdf(x))
                }
                LimitLaw::Gumbel => Box::new(gumbel_cdf),
                _ => Box::new(normal_cdf),
            };
            let mut t = Table::new(&["x", "F"]);
            let values: Vec<f64> = xs.par_iter().map(|&x| f(x)).collect();
            for (&x, v) in xs.iter().zip(values) {
                t.push(vec![Cell::num(x), Cell::num(v)]);
            }
            Ok(t)
        }
    }
}

fn finite(statistic: StatisticArg, n: u64, k: u64, xs: Vec<f64>, nm: &Numerics) -> RunResult<Table> {
    let params = EnsembleParams::new(n, k)?;
    let method = tail_method(nm, k);
    let stat = match statistic {
        StatisticArg::Radius => Statistic::SpectralRadius,
        StatisticArg::Rightmost => Statistic::Rightmost,
    };
    if stat == Statistic::Rightmost && k >= 2 && n > RIGHTMOST_WARN_N && matches!(method, TailMethod::MonteCarlo { .. }) {
        eprintln!(
            "warning: rightmost with n = {n} and Monte Carlo tails is expensive; consider --tail edgeworth"
        );
    }
    let mut req = FiniteLawRequest::new(params, stat, method, xs)?;
    req.quad_order = nm.quad_order;
    req.band_eps = nm.band_eps;
    let r = finite_cdf(&req)?;
    let mut cols = vec!["x", "F", "truncated"];
    if r.stderr.is_some() {
        cols.push("stderr");
    }
    let mut t = Table::new(&cols);
    for i in 0..r.x.len() {
        let mut row = vec![Cell::num(r.x[i]), Cell::num(r.cdf[i]), Cell::int(r.truncated[i])];
        if let Some(se) = &r.stderr {
            row.push(Cell::num(se[i]));
        }
        t.push(row);
    }
    t.diag("tail_method", method.name());
    t.diag("alpha_n", params.alpha_n());
    Ok(t)
}

fn rate(regime: Regime, n: u64, k: u64, alpha: Option<f64>, nm: &Numerics) -> RunResult<Table> {
    let params = EnsembleParams::new(n, k)?;
    let method = tail_method(nm, k);
    let r = match regime {
        Regime::Zero => RateRegime::Zero,
        Regime::Fixed => RateRegime::Fixed(alpha.expect("validated")),
        Regime::Infinity => RateRegime::Infinity,
    };
    let rep = rate_report(&params, r, method)?;
    let d = rep.distance;
    let mut t = Table::new(&[
        "n", "k", "alpha_n", "sup", "argmax_x", "sup_predicted", "ratio", "w1", "w1_predicted", "w1_ratio",
    ]);
    t.push(vec![
        Cell::int(n),
        Cell::int(k),
        Cell::num(params.alpha_n()),
        Cell::num(d.sup_distance),
        Cell::num(d.argmax_x),
        Cell::num(d.predicted),
        Cell::num(d.ratio),
        Cell::num(d.w1_distance),
        Cell::num(rep.w1_predicted),
        Cell::num(rep.w1_ratio),
    ]);
    t.diag("tail_method", method.name());
    t.diag("max_truncated", rep.max_truncated);
    if regime == Regime::Zero {
        let b = BetaRegime::classify(&params);
        let name = match b {
            BetaRegime::Zero => "beta-zero",
            BetaRegime::Finite(_) => "beta-finite",
            BetaRegime::Infinite => "beta-infinite",
        };
        t.diag("beta_regime", name);
        t.diag("beta_regime_supremum", b.supremum(&params));
    }
    Ok(t)
}

fn mc(n: u64, k: u64, count: u64, nm: &Numerics) -> RunResult<Table> {
    let params = EnsembleParams::new(n, k)?;
    let method = tail_method(nm, k);
    let emp = sample_spectral_radius(&params, count, nm.seed)?;
    let ks = ks_against_exact(&params, &emp, method)?;
    let mut t = Table::new(&["n", "k", "count", "seed", "tail_method", "ks", "ks_critical_99"]);
    t.push(vec![
        Cell::int(n),
        Cell::int(k),
        Cell::int(count),
        Cell::text(nm.seed.to_string()),
        Cell::text(method.name()),
        Cell::num(ks),
        Cell::num(ks_critical_99(emp.count())),
    ]);
    Ok(t)
}

/// KS distance between draws and the finite-n law, evaluated exactly at
/// every distinct draw.
pub fn ks_against_exact(params: &EnsembleParams, emp: &EmpiricalCdf, method: TailMethod) -> RunResult<f64> {
    let mut xs = emp.sorted_samples().to_vec();
    xs.dedup();
    let req = FiniteLawRequest::new(*params, Statistic::SpectralRadius, method, xs.clone())?;
    let r = finite_cdf(&req)?;
    Ok(ks_distance(emp, |x| r.cdf[xs.partition_point(|&v| v < x)]))
}

fn scan(alphas: &[f64], xs: &[f64], nm: &Numerics) -> RunResult<Table> {
    let cfg = fredholm_config(nm);
    let mut t = Table::new(&["alpha", "x", "phi_alpha", "phi_tilde_alpha"]);
    for &alpha in alphas {
        let law = PhiAlphaLaw::new(alpha)?;
        let tilde = xs
            .par_iter()
            .map(|&x| phi_tilde_alpha(x, alpha, &cfg).map(|v| v.value))
            .collect::<Result<Vec<_>, _>>()?;
        for (&x, ft) in xs.iter().zip(tilde) {
            t.push(vec![Cell::num(alpha), Cell::num(x), Cell::num(law.cdf(x)), Cell::num(ft)]);
        }
    }
    Ok(t)
}

/// One quick check: name, measured value, expected value, tolerance.
type Check = (&'static str, f64, f64, f64);

fn selftest_checks() -> RunResult<Vec<Check>> {
    let cfg = FredholmConfig::default();
    let mut out = Vec::new();
    for &(alpha, expected) in &[(0.25, 0.711138), (1.0, 0.684857), (4.0, 0.566859)] {
        let name = match alpha {
            a if a < 0.5 => "fredholm alpha=0.25 x=0",
            a if a < 2.0 => "fredholm alpha=1 x=0",
            _ => "fredholm alpha=4 x=0",
        };
        out.push((name, phi_tilde_alpha(0.0, alpha, &cfg)?.value, expected, 1e-6));
    }
    let al = 1e-6;
    let law = PhiAlphaLaw::new(al)?;
    let grid = default_grid(al);
    let sup = grid.iter().map(|&x| (law.cdf(x) - normal_cdf(x)).abs()).fold(0.0, f64::max);
    out.push(("small-alpha constant 1/sqrt(2 pi)", sup / al.sqrt(), 0.398942, 0.02 * 0.398942));
    let p = EnsembleParams::new(1, 1)?;
    let req = FiniteLawRequest::new(p, Statistic::SpectralRadius, TailMethod::ExactK1, vec![0.0])?;
    let f = p.finite_constants();
    let exact = 1.0 - (-(-0.5772156649015329 + f.a_n).exp()).exp();
    out.push(("finite n=k=1 closed form", finite_cdf(&req)?.cdf[0], exact, 1e-12));
    let emp = sample_spectral_radius(&EnsembleParams::new(8, 1)?, 20_000, 1)?;
    let ks = ks_against_exact(&EnsembleParams::new(8, 1)?, &emp, TailMethod::ExactK1)?;
    out.push(("sampler ks n=8 k=1", ks, 0.0, ks_critical_99(20_000)));
    Ok(out)
}

fn selftest() -> RunResult<Table> {
    let checks = selftest_checks()?;
    let mut t = Table::new(&["check", "value", "expected", "tolerance", "pass"]);
    let mut failed = 0;
    for (name, v, e, tol) in checks {
        let pass = (v - e).abs() <= tol;
        failed += usize::from(!pass);
        t.push(vec![Cell::text(name), Cell::num(v), Cell::num(e), Cell::num(tol), Cell::text(if pass { "PASS" } else { "FAIL" })]);
    }
    t.diag("failed", failed as u64);
    Ok(t)
}

/// True when a selftest table has a failed row.
pub fn selftest_failed(t: &Table) -> usize {
    t.diagnostics.get("failed").and_then(|v| v.as_u64()).unwrap_or(0) as usize
}
