//! One-dimensional quadrature rules.
//!
//! Two workhorses: fixed Gauss–Legendre panels (smooth integrands on
//! known breakpoints) and tanh-sinh (endpoint singularities of algebraic
//! type). Semi-infinite ranges with algebraic decay are mapped onto a finite
//! interval with [`power_tail`].

use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

const MAX_GL_ORDER: usize = 64;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn legendre_rule(order: usize) -> GaussLegendre {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let m = order.div_ceil(2);
    let nf = order as f64;
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }
    GaussLegendre { nodes, weights }
}

/// Cached rule of the given order (1..=64).
pub fn gauss_legendre(order: usize) -> &'static GaussLegendre {
    static TABLE: OnceLock<Vec<GaussLegendre>> = OnceLock::new();
    assert!((1..=MAX_GL_ORDER).contains(&order), "unsupported Gauss-Legendre order {order}");
    let table = TABLE.get_or_init(|| (1..=MAX_GL_ORDER).map(legendre_rule).collect());
    &table[order - 1]
}

/// Fixed-order Gauss–Legendre on `[a, b]`.
pub fn gl<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, order: usize) -> f64 {
    let rule = gauss_legendre(order);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut sum = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        sum += w * f(c + h * x);
    }
    sum * h
}

/// Gauss–Legendre applied panel by panel over sorted breakpoints.
pub fn gl_panels<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], order: usize) -> f64 {
    breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| gl(&mut f, w[0], w[1], order))
        .sum()
}

/// Result of an adaptive rule together with its error estimate.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

const DE_T_MAX: f64 = 4.5;
const DE_MAX_LEVEL: usize = 9;

/// Tanh-sinh quadrature on `[a, b]` with level doubling until the relative
/// change drops below `rel_tol` (or the absolute change below `abs_tol`).
///
/// Nodes are placed symmetrically from both endpoints so that algebraic
/// endpoint singularities are resolved; nodes that round onto an endpoint
/// are skipped.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Estimate {
    let [e] = tanh_sinh_many(|x| [f(x)], a, b, rel_tol, abs_tol);
    e
}

/// Vector-valued [`tanh_sinh`]; every component must meet the tolerance.
pub fn tanh_sinh_many<const K: usize, F: FnMut(f64) -> [f64; K]>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> [Estimate; K] {
    let zero = [Estimate { value: 0.0, error: 0.0 }; K];
    if b <= a {
        return zero;
    }
    let half = 0.5 * (b - a);
    let mut eval = |t: f64, sum: &mut [f64; K]| {
        let u = FRAC_PI_2 * t.sinh();
        // Distance from the nearer endpoint, in units of the half-width.
        let e = (-2.0 * u.abs()).exp();
        let dist = 2.0 * half * e / (1.0 + e);
        let weight = half * FRAC_PI_2 * t.cosh() * 4.0 * e / ((1.0 + e) * (1.0 + e));
        if weight == 0.0 {
            return;
        }
        let x = if t < 0.0 { a + dist } else { b - dist };
        if x <= a || x >= b {
            return;
        }
        let v = f(x);
        for k in 0..K {
            sum[k] += weight * v[k];
        }
    };
    let mut h = 0.5;
    let mut sum = [0.0; K];
    eval(0.0, &mut sum);
    let mut k = 1;
    while (k as f64) * h <= DE_T_MAX {
        let t = k as f64 * h;
        eval(t, &mut sum);
        eval(-t, &mut sum);
        k += 1;
    }
    let mut out = zero;
    for j in 0..K {
        out[j] = Estimate { value: sum[j] * h, error: f64::INFINITY };
    }
    for level in 1..=DE_MAX_LEVEL {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= DE_T_MAX {
            let t = k as f64 * h;
            eval(t, &mut sum);
            eval(-t, &mut sum);
            k += 2;
        }
        let mut done = level >= 2;
        for j in 0..K {
            let next = sum[j] * h;
            let error = (next - out[j].value).abs();
            out[j] = Estimate { value: next, error };
            done &= error <= rel_tol * next.abs() || error <= abs_tol;
        }
        if done {
            break;
        }
    }
    out
}

/// Tanh-sinh over consecutive breakpoints; errors are summed.
pub fn tanh_sinh_panels<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], rel_tol: f64, abs_tol: f64) -> Estimate {
    let mut total = Estimate { value: 0.0, error: 0.0 };
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let e = tanh_sinh(&mut f, w[0], w[1], rel_tol, abs_tol);
            total.value += e.value;
            total.error += e.error;
        }
    }
    total
}

/// `∫_{x0}^∞ f(x) dx` for an integrand decaying like `x^{-1-γ}`.
///
/// The substitution `x = x0 τ^{-1/γ}` turns the tail into an integral over
/// `τ ∈ (0, 1]` whose integrand tends to a constant as `τ → 0`.
pub fn power_tail<F: FnMut(f64) -> f64>(mut f: F, x0: f64, gamma: f64, rel_tol: f64, abs_tol: f64) -> Estimate {
    let [e] = power_tail_many(|x| [f(x)], x0, gamma, rel_tol, abs_tol);
    e
}

/// Vector-valued [`power_tail`].
pub fn power_tail_many<const K: usize, F: FnMut(f64) -> [f64; K]>(
    mut f: F,
    x0: f64,
    gamma: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> [Estimate; K] {
    assert!(x0 > 0.0 && gamma > 0.0);
    tanh_sinh_many(
        |tau| {
            let x = x0 * tau.powf(-1.0 / gamma);
            if !x.is_finite() || x > 1e250 {
                return [0.0; K];
            }
            let jac = x / (gamma * tau);
            f(x).map(|v| v * jac)
        },
        0.0,
        1.0,
        rel_tol,
        abs_tol,
    )
}

/// Geometric breakpoints `center ± scale·2^k` clipped to `[lo, hi]`, merged
/// with `extra` and sorted. Used to resolve a peak of width `scale`.
pub fn peak_breakpoints(lo: f64, hi: f64, center: f64, scale: f64, extra: &[f64]) -> Vec<f64> {
    let mut b = Vec::with_capacity(extra.len() + 64);
    b.push(lo);
    b.push(hi);
    b.extend(extra.iter().copied().filter(|&x| x > lo && x < hi));
    if center > lo && center < hi {
        b.push(center);
    }
    if scale > 0.0 {
        let mut d = scale;
        while d < 2.0 * (hi - lo) {
            for x in [center - d, center + d] {
                if x > lo && x < hi {
                    b.push(x);
                }
            }
            d *= 2.0;
        }
    }
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * (1.0 + y.abs()));
    b
}

/// Breakpoints `end - width·2^{-k}` accumulating at `end` (from below),
/// for endpoint behaviour like `(end - x)^p`.
pub fn graded_toward(start: f64, end: f64, levels: usize) -> Vec<f64> {
    let mut b = vec![start];
    let w = end - start;
    for k in 1..=levels {
        b.push(end - w * 0.5f64.powi(k as i32));
    }
    b.push(end);
    b
}
