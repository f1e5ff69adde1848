//! Direct singular quadrature of `(-Δ)^s u` for radial profiles.
//!
//! Writing `z = x + tσ` and averaging over the sphere first,
//!
//! ```text
//! (-Δ)^s u(x) = c_{n,s} ∫_0^∞ t^{-1-2s} ( |S^{n-1}| u(x) - M_x(t) ) dt,
//! M_x(t) = ∫_{S^{n-1}} u(|x + tσ|) dσ,
//! ```
//!
//! and the bracket is `O(t²)`, so no principal value is needed. The
//! innermost ball `t < t₀` is replaced by its Taylor term in `Δu(x)`.

use crate::numerics::{normalizations, sphere_area, Params};
use crate::profile::RadialProfile;
use crate::kernel::Sphere;
use crate::quad::{gl_panels, peak_breakpoints, tanh_sinh_panels};

const INNER_TOL: f64 = 1e-11;
const OUTER_TOL: f64 = 1e-10;
const EXTERIOR_ORDER: usize = 16;

/// `∫_{S^{n-1}} u(|x + tσ|) dσ` for `|x| = ρ`.
pub fn spherical_mean<P: RadialProfile + ?Sized>(u: &P, n: usize, rho: f64, t: f64) -> f64 {
    if n == 1 {
        return u.value((rho + t).abs()) + u.value((rho - t).abs());
    }
    if rho == 0.0 || t == 0.0 {
        return sphere_area(n) * u.value(rho + t);
    }
    let outer = rho + t;
    let inner = (rho - t).abs();
    // Angles where the sphere |z - x| = t crosses a kink radius.
    let mut breaks = vec![0.0, std::f64::consts::PI];
    let mut radii = u.kinks();
    radii.push(u.support());
    for k in radii {
        if k > inner && k < outer {
            // Parametrized as |x - tσ|² = (ρ - t)² + 4ρt sin²(θ/2).
            let c = ((rho * rho + t * t - k * k) / (2.0 * rho * t)).clamp(-1.0, 1.0);
            breaks.push(c.acos());
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pow = (n - 2) as i32;
    let est = tanh_sinh_panels(
        |th| {
            let half_sin = (0.5 * th).sin();
            let r2 = (rho - t) * (rho - t) + 4.0 * rho * t * half_sin * half_sin;
            let w = if pow == 0 { 1.0 } else { th.sin().powi(pow) };
            w * u.value(r2.sqrt())
        },
        &breaks,
        INNER_TOL,
        1e-300,
    );
    sphere_area(n - 1) * est.value
}

/// `(-Δ)^s u(ρ)` by direct quadrature of the singular integral.
pub fn fractional_laplacian<P: RadialProfile + ?Sized>(u: &P, params: &Params, rho: f64) -> f64 {
    let n = params.n();
    let s = params.s();
    let c_ns = normalizations(params).c_ns;
    let area = sphere_area(n);
    let support = u.support();
    if rho > support {
        return -c_ns * exterior_potential(u, n, 0.5 * (params.dim() + 2.0 * s), rho);
    }
    let u0 = u.value(rho);
    let mut radii = u.kinks();
    radii.push(support);

    // Where the Taylor expansion of the spherical mean is valid.
    let gap = radii
        .iter()
        .map(|k| (k - rho).abs())
        .fold(f64::INFINITY, f64::min);
    let inside = rho < support;
    let t_lo = if inside { 1e-3 * gap.min(1.0) } else { rho - support };
    let t_hi = rho + support;

    let mut breaks = vec![t_lo, t_hi];
    for &k in &radii {
        for t in [(rho - k).abs(), rho + k] {
            if t > t_lo && t < t_hi {
                breaks.push(t);
            }
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();

    let body = tanh_sinh_panels(
        |t| t.powf(-1.0 - 2.0 * s) * (area * u0 - spherical_mean(u, n, rho, t)),
        &breaks,
        OUTER_TOL,
        1e-300,
    )
    .value;
    // Beyond t_hi the sphere misses the support entirely.
    let far = area * u0 * t_hi.powf(-2.0 * s) / (2.0 * s);
    let near = if inside && t_lo > 0.0 {
        // |S| u(x) - M(t) ≈ -|S| t² Δu(x) / (2n)
        -area * u.laplacian(rho, n) / (2.0 * n as f64) * t_lo.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s)
    } else {
        0.0
    };
    c_ns * (body + far + near)
}

/// `∫ u(z) |x - z|^{-2μ} dz` for `|x| = ρ` outside the support, where the
/// integral is not singular.
fn exterior_potential<P: RadialProfile + ?Sized>(u: &P, n: usize, mu: f64, rho: f64) -> f64 {
    let sphere = Sphere::new(n);
    let support = u.support();
    let breaks = peak_breakpoints(0.0, support, rho, rho - support, &u.panel_breaks());
    let pow = n as i32 - 1;
    gl_panels(
        |rp| {
            let v = u.value(rp);
            if v == 0.0 {
                return 0.0;
            }
            v * rp.powi(pow) * sphere.power_mean(rho, rp, 0.0, mu)
        },
        &breaks,
        EXTERIOR_ORDER,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::getoor_constant;
    use crate::profile::Getoor;

    #[test]
    fn getoor_is_constant_inside_the_ball() {
        for (n, s) in [(1, 0.5), (2, 0.5), (3, 0.25), (3, 0.75), (5, 0.1)] {
            let p = Params::new(n, s).unwrap();
            let want = getoor_constant(&p);
            for rho in [0.0, 0.3, 0.8, 0.97] {
                let got = fractional_laplacian(&Getoor { s }, &p, rho);
                assert!(((got - want) / want).abs() < 1e-7, "n={n} s={s} rho={rho}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn getoor_exterior_values_are_negative() {
        let p = Params::new(2, 0.5).unwrap();
        for rho in [1.0 + 1e-10, 1.01, 1.5, 3.0] {
            assert!(fractional_laplacian(&Getoor { s: 0.5 }, &p, rho) < 0.0);
        }
    }

    #[test]
    fn exterior_values_match_the_spherical_mean_route() {
        // Far from the support the two formulations share no code path.
        let p = Params::new(3, 0.3).unwrap();
        let u = Getoor { s: 0.3 };
        for rho in [1.05, 2.0] {
            let direct = fractional_laplacian(&u, &p, rho);
            let n = p.n();
            let t_lo = rho - 1.0;
            let est = tanh_sinh_panels(
                |t| -t.powf(-1.6) * spherical_mean(&u, n, rho, t),
                &[t_lo, rho, rho + 1.0],
                1e-11,
                0.0,
            );
            let want = normalizations(&p).c_ns * est.value;
            assert!(((direct - want) / want).abs() < 1e-8, "{rho}: {direct} vs {want}");
        }
    }
}
