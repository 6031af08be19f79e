//! The validated run record and the small text formats it is built from.

use std::fmt;
use std::str::FromStr;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper limits that keep a single run bounded.
pub const MAX_GRID_POINTS: usize = 1_000_000;
pub const MAX_ALPHAS: usize = 64;
pub const MAX_N: u64 = 1_000_000_000;
pub const MAX_SAMPLES: u64 = 1_000_000_000;
pub const MAX_TRUNCATION: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("invalid grid spec {0:?}: expected lo:hi:count with lo < hi and count ≥ 2")]
    Grid(String),
    #[error("invalid alpha list {0:?}: {1}")]
    Alphas(String, &'static str),
    #[error("invalid value for {field}: {detail}")]
    Field { field: &'static str, detail: String },
    #[error("no config header found")]
    MissingHeader,
    #[error("malformed config header: {0}")]
    Header(String),
    #[error("malformed output document: {0}")]
    Document(String),
}

fn field(field: &'static str, detail: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field,
        detail: detail.into(),
    }
}

/// An evenly spaced x-grid, written `lo:hi:count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = self.lo.is_finite()
            && self.hi.is_finite()
            && self.lo < self.hi
            && (2..=MAX_GRID_POINTS).contains(&self.count)
            && (self.hi - self.lo).is_finite();
        if ok {
            Ok(())
        } else {
            Err(ConfigError::Grid(self.to_string()))
        }
    }

    pub fn points(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.count - 1) as f64;
        let mut v: Vec<f64> = (0..self.count).map(|i| self.lo + i as f64 * step).collect();
        v[self.count - 1] = self.hi;
        v
    }
}

impl FromStr for GridSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::Grid(s.to_string());
        let mut parts = s.split(':');
        let (Some(lo), Some(hi), Some(count), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        let g = GridSpec {
            lo: lo.trim().parse().map_err(|_| bad())?,
            hi: hi.trim().parse().map_err(|_| bad())?,
            count: count.trim().parse().map_err(|_| bad())?,
        };
        g.validate().map_err(|_| bad())?;
        Ok(g)
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `{:?}` prints the shortest string that parses back to the same f64.
        write!(f, "{:?}:{:?}:{}", self.lo, self.hi, self.count)
    }
}

/// A comma-separated list of positive α values.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaList(pub Vec<f64>);

impl FromStr for AlphaList {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |why| ConfigError::Alphas(s.to_string(), why);
        let mut out = Vec::new();
        for part in s.split(',') {
            let v: f64 = part.trim().parse().map_err(|_| err("not a number"))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(err("values must be positive and finite"));
            }
            out.push(v);
            if out.len() > MAX_ALPHAS {
                return Err(err("too many values"));
            }
        }
        Ok(AlphaList(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LimitLaw {
    /// Φ_α, the spectral radius limit.
    PhiAlpha,
    /// Φ̃_α, the rightmost eigenvalue limit.
    Fredholm,
    Gumbel,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticArg {
    Radius,
    Rightmost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// α_n → 0, Gaussian limit.
    Zero,
    /// α_n → α.
    Fixed,
    /// α_n → ∞, Gumbel limit.
    Infinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TailArg {
    /// exact-k1 for k = 1, edgeworth for k ≥ 30, monte-carlo otherwise.
    Auto,
    ExactK1,
    Edgeworth,
    Chernoff,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

/// The verb and its own parameters, with every default resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    Limit {
        law: LimitLaw,
        alpha: Option<f64>,
        grid: GridSpec,
    },
    Finite {
        statistic: StatisticArg,
        n: u64,
        k: u64,
        grid: GridSpec,
    },
    Rate {
        regime: Regime,
        n: u64,
        k: u64,
        alpha: Option<f64>,
    },
    Mc {
        n: u64,
        k: u64,
        count: u64,
    },
    Scan {
        alphas: Vec<f64>,
        grid: GridSpec,
    },
    Selftest,
}

/// Tail method and quadrature/truncation overrides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub tail: TailArg,
    pub samples: u64,
    pub seed: u64,
    pub truncation: Option<usize>,
    pub truncation_eps: f64,
    pub quad_order: usize,
    pub band_eps: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            tail: TailArg::Auto,
            samples: 1_000_000,
            seed: 0,
            truncation: None,
            truncation_eps: 1e-13,
            quad_order: 64,
            band_eps: 1e-16,
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: String,
    pub run: Command,
    pub numerics: Numerics,
    pub output: Option<String>,
    pub format: Format,
}

fn positive(name: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field(name, format!("{v} is not positive and finite")))
    }
}

fn sizes(n: u64, k: u64) -> Result<(), ConfigError> {
    if !(1..=MAX_N).contains(&n) {
        return Err(field("n", format!("{n} outside 1..={MAX_N}")));
    }
    if !(1..=MAX_N).contains(&k) {
        return Err(field("k", format!("{k} outside 1..={MAX_N}")));
    }
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let nm = &self.numerics;
        if !(1..=MAX_SAMPLES).contains(&nm.samples) {
            return Err(field("samples", nm.samples.to_string()));
        }
        if let Some(t) = nm.truncation {
            if !(1..=MAX_TRUNCATION).contains(&t) {
                return Err(field("truncation", t.to_string()));
            }
        }
        if !(nm.truncation_eps > 0.0 && nm.truncation_eps < 1.0) {
            return Err(field("truncation_eps", nm.truncation_eps.to_string()));
        }
        if !(nm.band_eps > 0.0 && nm.band_eps < 1.0) {
            return Err(field("band_eps", nm.band_eps.to_string()));
        }
        if !(2..=4096).contains(&nm.quad_order) {
            return Err(field("quad_order", nm.quad_order.to_string()));
        }
        match &self.run {
            Command::Limit { law, alpha, grid } => {
                grid.validate()?;
                match (law, alpha) {
                    (LimitLaw::PhiAlpha | LimitLaw::Fredholm, None) => {
                        return Err(field("alpha", "required for this law"))
                    }
                    (_, Some(a)) => positive("alpha", *a)?,
                    _ => {}
                }
            }
            Command::Finite { n, k, grid, .. } => {
                sizes(*n, *k)?;
                grid.validate()?;
            }
            Command::Rate { regime, n, k, alpha } => {
                sizes(*n, *k)?;
                match (regime, alpha) {
                    (Regime::Fixed, Some(a)) => positive("alpha", *a)?,
                    (Regime::Fixed, None) => return Err(field("alpha", "required for the fixed regime")),
                    (_, Some(_)) => return Err(field("alpha", "only used by the fixed regime")),
                    _ => {}
                }
            }
            Command::Mc { n, k, count } => {
                sizes(*n, *k)?;
                if !(1..=MAX_SAMPLES).contains(count) {
                    return Err(field("count", count.to_string()));
                }
            }
            Command::Scan { alphas, grid } => {
                grid.validate()?;
                if alphas.is_empty() || alphas.len() > MAX_ALPHAS {
                    return Err(field("alphas", format!("{} values", alphas.len())));
                }
                for a in alphas {
                    positive("alphas", *a)?;
                }
            }
            Command::Selftest => {}
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Prefix of the config line in CSV output.
pub const CONFIG_PREFIX: &str = "# config: ";

/// Reads the config back from the `#` header of a CSV output.
pub fn parse_csv_header(text: &str) -> Result<RunConfig, ConfigError> {
    for line in text.lines() {
        if !line.starts_with('#') {
            break;
        }
        if let Some(json) = line.strip_prefix(CONFIG_PREFIX) {
            let cfg: RunConfig = serde_json::from_str(json).map_err(|e| ConfigError::Header(e.to_string()))?;
            cfg.validate()?;
            return Ok(cfg);
        }
    }
    Err(ConfigError::MissingHeader)
}
