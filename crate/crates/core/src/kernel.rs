//! Angular reduction shared by every radial convolution in the crate.
//!
//! For radial data, kernels of the form `g(|x - z|² + y²)` integrated over
//! the sphere `|z| = ρ'` reduce to a one-dimensional integral in the angle
//! `θ` between `x` and `z`:
//!
//! ```text
//! ∫_{S^{n-1}} g(ρ² + ρ'² - 2ρρ'σ₁ + y²) dσ
//!     = |S^{n-2}| ∫_0^π sin^{n-2}θ · g(e² + 4ρρ' sin²(θ/2)) dθ,
//! ```
//!
//! with `e² = (ρ - ρ')² + y²`. The integrand peaks at `θ ≈ 0` with width
//! `e / √(ρρ')`; panels are refined geometrically out of that peak.

use std::f64::consts::PI;

use crate::numerics::sphere_area;
use crate::quad::gauss_legendre;

const PANEL_ORDER: usize = 12;
const MAX_PANEL: f64 = 0.8;
const MIN_WIDTH: f64 = 1e-15;

/// Precomputed angular data for a fixed dimension.
#[derive(Debug, Clone, Copy)]
pub struct Sphere {
    n: usize,
    /// `|S^{n-2}|`; unused for `n = 1`.
    rim_area: f64,
}

impl Sphere {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let rim_area = if n >= 2 { sphere_area(n - 1) } else { 0.0 };
        Sphere { n, rim_area }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `∫_{S^{n-1}} f(σ₁, |ρe₁ - ρ'σ|² + y²) dσ`.
    ///
    /// The closure receives `cos θ` and the squared distance `D`.
    pub fn integrate<F: FnMut(f64, f64) -> f64>(&self, rho: f64, rho_p: f64, y2: f64, mut f: F) -> f64 {
        self.integrate_many(rho, rho_p, y2, |c, d| [f(c, d)])[0]
    }

    /// Vector-valued variant of [`Sphere::integrate`]; all components share
    /// the same angular nodes.
    pub fn integrate_many<const K: usize, F: FnMut(f64, f64) -> [f64; K]>(
        &self,
        rho: f64,
        rho_p: f64,
        y2: f64,
        mut f: F,
    ) -> [f64; K] {
        let d = rho - rho_p;
        let e2 = d * d + y2;
        if self.n == 1 {
            let s = rho + rho_p;
            let a = f(1.0, e2);
            let b = f(-1.0, s * s + y2);
            return std::array::from_fn(|k| a[k] + b[k]);
        }
        let q = rho * rho_p;
        let pow = (self.n - 2) as i32;
        let rule = gauss_legendre(PANEL_ORDER);
        let mut total = [0.0; K];
        let mut panel = |lo: f64, hi: f64, total: &mut [f64; K]| {
            let c = 0.5 * (lo + hi);
            let h = 0.5 * (hi - lo);
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let th = c + h * x;
                let half_sin = (0.5 * th).sin();
                let dist2 = e2 + 4.0 * q * half_sin * half_sin;
                let weight = if pow == 0 { 1.0 } else { th.sin().powi(pow) };
                let v = f(th.cos(), dist2);
                for k in 0..K {
                    total[k] += w * weight * h * v[k];
                }
            }
        };
        let mut split = |lo: f64, hi: f64, total: &mut [f64; K]| {
            let pieces = ((hi - lo) / MAX_PANEL).ceil().max(1.0) as usize;
            let step = (hi - lo) / pieces as f64;
            for k in 0..pieces {
                panel(lo + k as f64 * step, lo + (k + 1) as f64 * step, total);
            }
        };
        let width = if q > 0.0 { (e2 / q).sqrt().max(MIN_WIDTH) } else { f64::INFINITY };
        let mut lo = 0.0;
        let mut hi = width.min(PI);
        loop {
            split(lo, hi, &mut total);
            if hi >= PI {
                break;
            }
            lo = hi;
            hi = (2.0 * hi).min(PI);
        }
        total.map(|t| self.rim_area * t)
    }

    /// `∫_{S^{n-1}} (|ρe₁ - ρ'σ|² + y²)^{-μ} dσ`.
    pub fn power_mean(&self, rho: f64, rho_p: f64, y2: f64, mu: f64) -> f64 {
        self.integrate(rho, rho_p, y2, |_, dist2| dist2.powf(-mu))
    }

    /// `exp(ln_factor) · power_mean(ρ, ρ', y², μ)`, with `e^{-2μ}` factored
    /// out in log space so that near-coincident points do not overflow.
    pub fn power_mean_times(&self, ln_factor: f64, rho: f64, rho_p: f64, y2: f64, mu: f64) -> f64 {
        let d = rho - rho_p;
        let e2 = d * d + y2;
        if e2 == 0.0 {
            return ln_factor.exp() * self.power_mean(rho, rho_p, y2, mu);
        }
        let scaled = self.integrate(rho, rho_p, y2, |_, dist2| (dist2 / e2).powf(-mu));
        (ln_factor - mu * e2.ln()).exp() * scaled
    }
}
