//! The flux-moment constant
//!
//! ```text
//! A_{n,s,β} = β Γ_{n,s} ∫_{R^{n+1}_+} y^{a+2} (ρ² + y²)^{-(β+2)/2} (|x - e|² + y²)^{-(n+2-2s)/2} dx dy
//! ```
//!
//! and the integration-by-parts identity relating weighted moments of the
//! extension to `∫ ρ^{-β} (-Δ)^s w`.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FracError, Result};
use crate::extension::ExtensionField;
use crate::kernel::Sphere;
use crate::laplacian::fractional_laplacian;
use crate::numerics::{log_gamma_unchecked, normalizations, sphere_area, Params};
use crate::profile::RadialProfile;
use crate::quad::{gauss_legendre, graded_toward, power_tail, tanh_sinh, tanh_sinh_panels, Estimate};

/// Radius of the disc around `(ρ, y) = (1, 0)` handled in local polar
/// coordinates.
const LOCAL_RADIUS: f64 = 0.1;
const TARGET_REL: f64 = 1e-4;
const INNER_REL: f64 = 1e-8;
const OUTER_REL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxConstantQuery {
    pub params: Params,
    pub beta: f64,
}

impl FluxConstantQuery {
    pub fn new(params: Params, beta: f64) -> Result<Self> {
        let q = FluxConstantQuery { params, beta };
        q.validate()?;
        Ok(q)
    }

    /// Upper end `n + 2 - 2s` of the admissible `β` range.
    pub fn beta_max(params: &Params) -> f64 {
        params.dim() + 2.0 - 2.0 * params.s()
    }

    pub fn validate(&self) -> Result<()> {
        let hi = Self::beta_max(&self.params);
        if !(self.beta > 0.0 && self.beta < hi) {
            return Err(FracError::domain(format!(
                "beta = {} outside (0, {hi}) for n = {}, s = {}",
                self.beta,
                self.params.n(),
                self.params.s()
            )));
        }
        Ok(())
    }

    fn nu(&self) -> f64 {
        0.5 * Self::beta_max(&self.params)
    }

    fn prefactor(&self) -> f64 {
        self.beta * normalizations(&self.params).gamma_ns
    }
}

/// `ρ^{n-1} y^{a+2} (ρ²+y²)^{-(β+2)/2} ∫_{S^{n-1}} (|ρσ - e|² + y²)^{-ν} dσ`.
struct Reduced {
    sphere: Sphere,
    pow: i32,
    ya: f64,
    half_beta: f64,
    nu: f64,
}

impl Reduced {
    fn new(q: &FluxConstantQuery) -> Self {
        Reduced {
            sphere: Sphere::new(q.params.n()),
            pow: q.params.n() as i32 - 1,
            ya: 3.0 - 2.0 * q.params.s(),
            half_beta: 0.5 * q.beta + 1.0,
            nu: q.nu(),
        }
    }

    fn eval(&self, rho: f64, y: f64) -> f64 {
        if rho <= 0.0 || y <= 0.0 {
            return 0.0;
        }
        let r = rho.hypot(y);
        // Combined in logs: the factors under- and overflow separately
        // near the origin in high dimension and far out for small β.
        let ln = self.pow as f64 * rho.ln() + self.ya * y.ln() - 2.0 * self.half_beta * r.ln();
        if r <= 1.0 {
            return ln.exp() * self.sphere.power_mean(1.0, rho, y * y, self.nu);
        }
        // |ρσ - e|² + y² = r²(|(ρ/r)σ - e/r|² + (y/r)²)
        let (c, sn) = (rho / r, y / r);
        (ln - 2.0 * self.nu * r.ln()).exp() * self.sphere.power_mean(1.0 / r, c, sn * sn, self.nu)
    }
}

/// `A_{n,s,β}` by nested tanh-sinh quadrature with its estimated absolute
/// error.
pub fn magic_constant_estimate(q: &FluxConstantQuery) -> Result<Estimate> {
    q.validate()?;
    let g = Reduced::new(q);
    let beta = q.beta;
    let mut inner_rel: f64 = 0.0;
    let mut track = |e: Estimate| {
        if e.value != 0.0 {
            inner_rel = inner_rel.max(e.error / e.value.abs());
        }
        e.value
    };
    let r_far = 2.0;
    let phi0 = LOCAL_RADIUS.asin();

    // Global polar coordinates outside the local disc.
    let mut ray = |phi: f64| {
        let (sin, cos) = phi.sin_cos();
        let f = |r: f64| r * g.eval(r * cos, r * sin);
        let body = if sin < LOCAL_RADIUS {
            let half = (LOCAL_RADIUS * LOCAL_RADIUS - sin * sin).sqrt();
            let a = tanh_sinh(f, 0.0, cos - half, INNER_REL, 0.0);
            let b = tanh_sinh(f, cos + half, r_far, INNER_REL, 0.0);
            Estimate {
                value: a.value + b.value,
                error: a.error + b.error,
            }
        } else {
            tanh_sinh_panels(f, &[0.0, cos, r_far], INNER_REL, 0.0)
        };
        let tail = power_tail(f, r_far, beta, INNER_REL, 0.0);
        track(body) + track(tail)
    };
    let outer = tanh_sinh_panels(&mut ray, &[0.0, phi0, 2.0 * phi0, 4.0 * phi0, FRAC_PI_2], OUTER_REL, 0.0);

    // Local polar coordinates around (1, 0).
    let mut arc = |psi: f64| {
        let (sin, cos) = psi.sin_cos();
        track(tanh_sinh(
            |t| t * g.eval(1.0 + t * cos, t * sin),
            0.0,
            LOCAL_RADIUS,
            INNER_REL,
            0.0,
        ))
    };
    let local = tanh_sinh(&mut arc, 0.0, std::f64::consts::PI, OUTER_REL, 0.0);

    let scale = q.prefactor();
    let value = scale * (outer.value + local.value);
    let error = scale * (outer.error + local.error) + inner_rel * value.abs();
    if !value.is_finite() || error > TARGET_REL * value.abs() {
        return Err(FracError::accuracy(
            format!("magic constant (n = {}, s = {}, beta = {})", q.params.n(), q.params.s(), q.beta),
            error / value.abs(),
            TARGET_REL,
        ));
    }
    Ok(Estimate { value, error })
}

pub fn magic_constant(q: &FluxConstantQuery) -> Result<f64> {
    magic_constant_estimate(q).map(|e| e.value)
}

/// The `β` values used for sweeps: fixed fractions of `n + 2 - 2s`.
pub fn beta_grid(params: &Params) -> Vec<f64> {
    let hi = FluxConstantQuery::beta_max(params);
    [0.25, 0.5, 0.75].iter().map(|f| f * hi).collect()
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

const MC_CHUNK: u64 = 1 << 14;
const MC_NEAR_RADIUS: f64 = 0.5;
const MC_NEAR_WEIGHT: f64 = 0.25;

fn ln_beta(a: f64, b: f64) -> f64 {
    log_gamma_unchecked(a) + log_gamma_unchecked(b) - log_gamma_unchecked(a + b)
}

/// Importance sampler on `R^{n+1}_+`: a mixture of a radial beta-prime law
/// matching the integrand at the origin and at infinity, and a cone law
/// concentrated at `(e, 0)`. Both share the angular factor `ω_y^{a+2}`.
struct Sampler {
    n: usize,
    ya: f64,
    /// radial law `r^p (1+r)^{-p-1-β}`
    p: f64,
    beta: f64,
    ln_norm_radial: f64,
    ln_norm_angle: f64,
    radial: Beta<f64>,
    angle: Beta<f64>,
}

impl Sampler {
    fn new(q: &FluxConstantQuery) -> Self {
        let n = q.params.n();
        let s = q.params.s();
        let p = q.params.dim() + 1.0 - 2.0 * s - q.beta;
        let half_n = 0.5 * n as f64;
        Sampler {
            n,
            ya: 3.0 - 2.0 * s,
            p,
            beta: q.beta,
            ln_norm_radial: ln_beta(p + 1.0, q.beta),
            ln_norm_angle: (0.5 * sphere_area(n)).ln() + ln_beta(2.0 - s, half_n),
            radial: Beta::new(p + 1.0, q.beta).expect("valid beta-prime shape"),
            angle: Beta::new(2.0 - s, half_n).expect("valid angular shape"),
        }
    }

    /// Point `(x₁, |x_⊥|², y)` at distance `d` from `base` along a random
    /// direction with `ω_y² ~ Beta(2-s, n/2)`.
    fn direction<R: Rng>(&self, rng: &mut R) -> (f64, f64, f64) {
        let t = self.angle.sample(rng).sqrt();
        let mut first: f64 = rng.sample(StandardNormal);
        let mut norm2 = first * first;
        for _ in 1..self.n {
            let g: f64 = rng.sample(StandardNormal);
            norm2 += g * g;
        }
        let h = (1.0 - t * t).max(0.0).sqrt();
        first /= norm2.sqrt();
        (h * first, h * h * (1.0 - first * first), t)
    }

    fn ln_angle_density(&self, t: f64) -> f64 {
        self.ya * t.ln() - self.ln_norm_angle
    }

    fn density(&self, x1: f64, perp2: f64, y: f64) -> f64 {
        let nf = self.n as f64;
        let r = (x1 * x1 + perp2 + y * y).sqrt();
        let ln_q = self.p * r.ln() - (self.p + 1.0 + self.beta) * (1.0 + r).ln() - self.ln_norm_radial;
        let far = (ln_q - nf * r.ln() + self.ln_angle_density(y / r)).exp();
        let dx = x1 - 1.0;
        let d = (dx * dx + perp2 + y * y).sqrt();
        let near = if d < MC_NEAR_RADIUS {
            let ln_q = (2.0 * d / (MC_NEAR_RADIUS * MC_NEAR_RADIUS)).ln();
            (ln_q - nf * d.ln() + self.ln_angle_density(y / d)).exp()
        } else {
            0.0
        };
        (1.0 - MC_NEAR_WEIGHT) * far + MC_NEAR_WEIGHT * near
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> (f64, f64, f64) {
        let (u1, perp2, t) = self.direction(rng);
        if rng.random::<f64>() < MC_NEAR_WEIGHT {
            let d = MC_NEAR_RADIUS * rng.random::<f64>().sqrt();
            (1.0 + d * u1, d * d * perp2, d * t)
        } else {
            let x = self.radial.sample(rng);
            let r = x / (1.0 - x);
            (r * u1, r * r * perp2, r * t)
        }
    }
}

/// Seeded importance-sampling estimate of `A_{n,s,β}` directly in
/// `R^{n+1}_+`. Chunk `k` draws from ChaCha8 stream `k`, so the result does
/// not depend on the number of worker threads.
pub fn magic_constant_mc(q: &FluxConstantQuery, samples: u64, seed: u64) -> Result<McEstimate> {
    q.validate()?;
    if samples < 2 {
        return Err(FracError::domain("Monte Carlo needs at least two samples"));
    }
    let sampler = Sampler::new(q);
    let scale = q.prefactor();
    let (ya, half_beta, nu) = (sampler.ya, 0.5 * q.beta + 1.0, q.nu());
    let chunks = samples.div_ceil(MC_CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let count = MC_CHUNK.min(samples - k * MC_CHUNK);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let (x1, perp2, y) = sampler.sample(&mut rng);
                if !(y > 0.0) {
                    continue;
                }
                let rho2 = x1 * x1 + perp2;
                let dx = x1 - 1.0;
                let f = y.powf(ya) * (rho2 + y * y).powf(-half_beta) * (dx * dx + perp2 + y * y).powf(-nu);
                let w = f / sampler.density(x1, perp2, y);
                if w.is_finite() {
                    s1 += w;
                    s2 += w * w;
                }
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = sums.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let m = samples as f64;
    let mean = s1 / m;
    let var = (s2 / m - mean * mean).max(0.0);
    Ok(McEstimate {
        mean: scale * mean,
        std_error: scale * (var / m).sqrt(),
        samples,
    })
}

/// The three integrals of the integration-by-parts identity for a radial
/// `w` with extension `W`:
///
/// ```text
/// horizontal = -β d_s ∫ y^a ρ W_ρ r^{-β-2},   vertical = -β d_s ∫ y^a y W_y r^{-β-2},
/// trace      = ∫ ρ^{-β} (-Δ)^s w,
/// ```
///
/// which satisfy `trace = horizontal + vertical`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxMoments {
    pub horizontal: f64,
    pub vertical: f64,
    pub trace: f64,
}

fn check_moment_beta(params: &Params, beta: f64) -> Result<()> {
    FluxConstantQuery::new(*params, beta)?;
    if beta >= params.dim() {
        return Err(FracError::domain(format!(
            "beta = {beta} must be below n = {} for the trace moment",
            params.n()
        )));
    }
    Ok(())
}

const MOMENT_ORDER: usize = 8;
const MOMENT_LEVELS: i32 = 8;
const ANGULAR_LEVELS: i32 = 6;
const EDGE_LEVELS: usize = 6;

/// Nodes and weights of composite Gauss-Legendre on consecutive breaks.
fn composite_rule(breaks: &[f64], order: usize) -> Vec<(f64, f64)> {
    let rule = gauss_legendre(order);
    let mut out = Vec::with_capacity(breaks.len() * order);
    for w in breaks.windows(2) {
        let (c, h) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
            out.push((c + h * x, h * wt));
        }
    }
    out
}

/// `hi·2^{-k}` for `k = levels..0`, preceded by zero.
fn geometric_breaks(hi: f64, levels: i32) -> Vec<f64> {
    let mut b = vec![0.0];
    b.extend((0..=levels).rev().map(|k| hi * 0.5f64.powi(k)));
    b
}

pub fn flux_moments<P: RadialProfile + Clone>(w: &P, params: &Params, beta: f64) -> Result<FluxMoments> {
    flux_moments_with_order(w, params, beta, MOMENT_ORDER)
}

/// [`flux_moments`] with the Gauss-Legendre order of every panel given.
pub fn flux_moments_with_order<P: RadialProfile + Clone>(
    w: &P,
    params: &Params,
    beta: f64,
    order: usize,
) -> Result<FluxMoments> {
    check_moment_beta(params, beta)?;
    if w.sup_abs() == 0.0 {
        return Ok(FluxMoments {
            horizontal: 0.0,
            vertical: 0.0,
            trace: 0.0,
        });
    }
    let norms = normalizations(params);
    let n = params.n();
    let s = params.s();
    let a = params.a();
    let area = sphere_area(n);
    let pow = n as i32 - 1;
    let support = w.support();
    let field = ExtensionField::new(w.clone(), *params);
    let r_far = 2.0 * support;
    let gamma = beta + 2.0 * s;

    // Polar coordinates (ρ, y) = r(cos φ, sin φ). Radial panels accumulate
    // geometrically at r = 0 and toward the support radius from both
    // sides, where compactly supported profiles change fastest; beyond
    // r_far, r = r_far τ^{-1/γ} absorbs the r^{-1-γ} decay.
    let mut breaks = geometric_breaks(0.5 * support, MOMENT_LEVELS);
    breaks.extend(graded_toward(0.5 * support, support, EDGE_LEVELS).into_iter().skip(1));
    breaks.extend((0..EDGE_LEVELS).rev().map(|k| support * (1.0 + 0.5f64.powi(k as i32 + 1))));
    breaks.push(r_far);
    let mut radial = composite_rule(&breaks, order);
    radial.extend(composite_rule(&[0.0, 0.25, 0.5, 1.0], order).into_iter().map(|(tau, wt)| {
        let r = r_far * tau.powf(-1.0 / gamma);
        (r, wt * r / (gamma * tau))
    }));
    // φ = (π/2) t^{1/(2-2s)} absorbs the y^a endpoint behaviour.
    let k = 1.0 / (2.0 - 2.0 * s);
    let angular: Vec<(f64, f64)> = composite_rule(&geometric_breaks(1.0, ANGULAR_LEVELS), order)
        .into_iter()
        .map(|(t, wt)| (FRAC_PI_2 * t.powf(k), wt * FRAC_PI_2 * k * t.powf(k - 1.0)))
        .collect();

    let rows: Vec<Result<[f64; 2]>> = angular
        .par_iter()
        .map(|&(phi, wphi)| {
            let (sin, cos) = phi.sin_cos();
            let mut acc = [0.0; 2];
            for &(r, wr) in &radial {
                if !r.is_finite() || r > 1e200 {
                    continue;
                }
                let (rho, y) = (r * cos, r * sin);
                let (vr, vy) = field.gradient(rho, y)?;
                let ln = pow as f64 * rho.ln() + a * y.ln() - (beta + 2.0) * r.ln();
                let common = wphi * wr * r * ln.exp();
                acc[0] += common * rho * vr;
                acc[1] += common * y * vy;
            }
            Ok(acc)
        })
        .collect();
    let mut half = [0.0; 2];
    for row in rows {
        let row = row?;
        half[0] += row[0];
        half[1] += row[1];
    }
    let scale = -beta * norms.d_s * area;

    let trace: f64 = radial
        .par_iter()
        .filter(|(r, _)| r.is_finite() && *r <= 1e200)
        .map(|&(rho, wr)| wr * rho.powf(n as f64 - 1.0 - beta) * fractional_laplacian(w, params, rho))
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(FluxMoments {
        horizontal: scale * half[0],
        vertical: scale * half[1],
        trace: area * trace,
    })
}

impl FluxMoments {
    /// `|trace - horizontal - vertical| / (|horizontal + vertical| + |trace|)`;
    /// zero when all three vanish.
    pub fn ibp_residual(&self) -> f64 {
        let half_space = self.horizontal + self.vertical;
        let denom = half_space.abs() + self.trace.abs();
        if denom == 0.0 {
            return 0.0;
        }
        (self.trace - half_space).abs() / denom
    }
}

/// Relative defect of the integration-by-parts identity for `w`.
pub fn ibp_residual<P: RadialProfile + Clone>(w: &P, params: &Params, beta: f64) -> Result<f64> {
    flux_moments(w, params, beta).map(|m| m.ibp_residual())
}

/// Both sides of `-d_s β ∫ y^a r^{-β-2} y W_y = A_{n,s,β} ∫ ρ^{-β} (-Δ)^s w`.
pub fn flux_moment_check<P: RadialProfile + Clone>(w: &P, params: &Params, beta: f64) -> Result<(f64, f64)> {
    let m = flux_moments(w, params, beta)?;
    if m.trace == 0.0 && m.vertical == 0.0 {
        return Ok((0.0, 0.0));
    }
    let a = magic_constant(&FluxConstantQuery::new(*params, beta)?)?;
    Ok((m.vertical, a * m.trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_range_is_enforced() {
        let p = Params::new(2, 0.5).unwrap();
        assert!(FluxConstantQuery::new(p, 0.0).is_err());
        assert!(FluxConstantQuery::new(p, 3.0).is_err());
        assert!(FluxConstantQuery::new(p, 2.99).is_ok());
        assert!(check_moment_beta(&p, 2.5).is_err());
    }
}
