//! Quadrature rules and one-dimensional search helpers.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::GaussLegendre;

type Rule = Arc<[(f64, f64)]>;

/// Gauss–Legendre nodes and weights on [−1, 1], cached per order.
pub fn gauss_legendre(order: usize) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("quadrature cache poisoned");
    map.entry(order)
        .or_insert_with(|| {
            let n = NonZeroUsize::new(order.max(1)).expect("order is positive");
            GaussLegendre::new(n).as_node_weight_pairs().into()
        })
        .clone()
}

/// ∫_a^b f by a single Gauss–Legendre rule of the given order.
pub fn gl_integrate(order: usize, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    gauss_legendre(order)
        .iter()
        .map(|&(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Composite Gauss–Legendre: `panels` equal panels of `order` points.
pub fn gl_composite(order: usize, panels: usize, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let step = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * step;
            gl_integrate(order, lo, lo + step, &mut f)
        })
        .sum()
}

/// Upper end of the exponential map used near θ = π/2; the omitted sliver
/// has width (π/4)e^{−40} ≈ 3e-18.
const MAP_SPAN: f64 = 40.0;

/// A fixed set of nodes and weights for integrals over θ ∈ [0, π/2] whose
/// integrand involves log cos²θ.
///
/// The range is split at π/4. The left half uses plain Gauss–Legendre. The
/// right half uses Gauss–Legendre in y with π/2 − θ = (π/4)e^{−y}, which
/// resolves the logarithmic behaviour at π/2. When the integrand is known to
/// vanish beyond some θ_max ≤ π/4, a single rule on [0, θ_max] is used.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// log cos²θ at each node, computed without cancellation near π/2.
    pub ln_cos2: Vec<f64>,
}

impl ThetaRule {
    /// Rule on the whole of [0, π/2] with `order` points in each half.
    pub fn full(order: usize) -> Self {
        Self::truncated(order, FRAC_PI_2)
    }

    /// Rule on [0, θ_max]; `order` points per piece.
    pub fn truncated(order: usize, theta_max: f64) -> Self {
        let mut nodes = Vec::with_capacity(2 * order);
        let mut weights = Vec::with_capacity(2 * order);
        let mut ln_cos2 = Vec::with_capacity(2 * order);
        let gl = gauss_legendre(order);
        let left = theta_max.min(FRAC_PI_4);
        for &(x, w) in gl.iter() {
            let th = 0.5 * left * (x + 1.0);
            nodes.push(th);
            weights.push(0.5 * left * w);
            ln_cos2.push(2.0 * th.cos().ln());
        }
        if theta_max > FRAC_PI_4 {
            for &(x, w) in gl.iter() {
                let y = 0.5 * MAP_SPAN * (x + 1.0);
                let gap = FRAC_PI_4 * (-y).exp();
                nodes.push(FRAC_PI_2 - gap);
                weights.push(0.5 * MAP_SPAN * w * gap);
                // cos(π/2 − g) = sin g
                ln_cos2.push(2.0 * gap.sin().ln());
            }
        }
        Self {
            nodes,
            weights,
            ln_cos2,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Σ wᵢ f(θᵢ, log cos²θᵢ).
    pub fn integrate(&self, mut f: impl FnMut(f64, f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .zip(&self.ln_cos2)
            .map(|((&th, &w), &lc)| w * f(th, lc))
            .sum()
    }
}

/// ∫_a^b f by adaptive Simpson with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Golden-section search for a maximum of f on [a, b]; returns (x, f(x)).
pub fn golden_max(f: impl Fn(f64) -> f64, a: f64, b: f64, xtol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (a, b);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > xtol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
