//! The `s`-harmonic extension `v = P(·, y) * u` of a radial trace and the
//! quantities built from it.
//!
//! `P(x, y) = P_{n,s} y^{2s} / (|x|² + y²)^{(n+2s)/2}`. All convolutions go
//! through the angular reduction in [`crate::kernel`], with `ρ'` panels
//! refined geometrically around `ρ' = ρ` at the scale `y`.

use serde::{Deserialize, Serialize};

use crate::error::{FracError, Result};
use crate::kernel::Sphere;
use crate::numerics::{normalizations, sphere_area, Normalizations, Params};
use crate::profile::{RadialFunction, RadialProfile};
use crate::quad::{gauss_legendre, gl_panels, peak_breakpoints, power_tail, tanh_sinh_panels};

const RADIAL_ORDER: usize = 12;

/// Evaluator of the extension of a fixed radial trace.
#[derive(Debug, Clone)]
pub struct ExtensionField<P = RadialFunction> {
    trace: P,
    params: Params,
    norms: Normalizations,
    sphere: Sphere,
}

impl<P: RadialProfile> ExtensionField<P> {
    pub fn new(trace: P, params: Params) -> Self {
        let norms = normalizations(&params);
        Self::with_normalizations(trace, params, norms)
    }

    /// Uses caller-supplied constants (e.g. to probe a miscalibration).
    pub fn with_normalizations(trace: P, params: Params, norms: Normalizations) -> Self {
        ExtensionField {
            trace,
            params,
            norms,
            sphere: Sphere::new(params.n()),
        }
    }

    pub fn trace(&self) -> &P {
        &self.trace
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn normalizations(&self) -> &Normalizations {
        &self.norms
    }

    fn mu(&self) -> f64 {
        0.5 * (self.params.dim() + 2.0 * self.params.s())
    }

    /// `∫_0^R u(ρ') ρ'^{n-1} [∫_{S^{n-1}} k(cosθ, D) dσ] dρ'` with panels
    /// adapted to a peak of width `y` at `ρ' = ρ`.
    fn convolve<const K: usize, F>(&self, rho: f64, y: f64, kernel: F) -> [f64; K]
    where
        F: Fn(f64, f64, f64) -> [f64; K],
    {
        self.convolve_weighted(rho, y, |rp| [self.trace.value(rp); K], kernel)
    }

    /// Like [`Self::convolve`] with a separate radial weight per component
    /// in place of `u(ρ')`.
    fn convolve_weighted<const K: usize, W, F>(&self, rho: f64, y: f64, weight: W, kernel: F) -> [f64; K]
    where
        W: Fn(f64) -> [f64; K],
        F: Fn(f64, f64, f64) -> [f64; K],
    {
        let support = self.trace.support();
        let breaks = peak_breakpoints(0.0, support, rho, y, &self.trace.panel_breaks());
        let pow = self.params.n() as i32 - 1;
        let y2 = y * y;
        let rule = gauss_legendre(RADIAL_ORDER);
        let mut out = [0.0; K];
        for w in breaks.windows(2) {
            let c = 0.5 * (w[0] + w[1]);
            let h = 0.5 * (w[1] - w[0]);
            for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
                let rp = c + h * x;
                let u = weight(rp);
                if u.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let ang = self.sphere.integrate_many(rho, rp, y2, |c, d| kernel(rp, c, d));
                let f = wt * h * rp.powi(pow);
                for k in 0..K {
                    out[k] += f * u[k] * ang[k];
                }
            }
        }
        out
    }

    /// `∫_{|z|>R} [2s D^{-μ} - 2μ y² D^{-μ-1}] dz`, the part of the
    /// mean-zero kernel `y^{1-2s} ∂_y(y^{2s} D^{-μ})` outside the support.
    fn exterior_flux_kernel(&self, rho: f64, y: f64) -> f64 {
        let mu = self.mu();
        let s = self.params.s();
        let y2 = y * y;
        let pow = self.params.n() as i32 - 1;
        let support = self.trace.support();
        let k = |rp: f64| {
            rp.powi(pow)
                * self.sphere.integrate(rho, rp, y2, |_, d| {
                    let dm = d.powf(-mu);
                    2.0 * s * dm - 2.0 * mu * y2 * dm / d
                })
        };
        let far = 4.0 * support;
        let near = gl_panels(k, &peak_breakpoints(support, far, rho, y, &[]), RADIAL_ORDER);
        near + power_tail(k, far, 2.0 * s, 1e-12, 0.0).value
    }

    /// `∫ u K` for the flux kernel `K = 2s D^{-μ} - 2μ y² D^{-μ-1}`, written
    /// as `∫ (u(z) - u(x)) K dz - u(x) ∫_{|z|>R} K` since `K` has zero mass.
    /// The split removes the `O(y^{-2s})` cancellation as `y ↓ 0`.
    fn flux_integral(&self, rho: f64, y: f64) -> f64 {
        let mu = self.mu();
        let s = self.params.s();
        let y2 = y * y;
        let kernel = |_: f64, _: f64, d: f64| {
            let dm = d.powf(-mu);
            [2.0 * s * dm - 2.0 * mu * y2 * dm / d]
        };
        let support = self.trace.support();
        let u_x = if rho < support { self.trace.value(rho) } else { 0.0 };
        if u_x == 0.0 {
            return self.convolve(rho, y, kernel)[0];
        }
        let [inside] = self.convolve_weighted(rho, y, |rp| [self.trace.value(rp) - u_x], kernel);
        inside - u_x * self.exterior_flux_kernel(rho, y)
    }

    /// `v(ρ, y)`.
    pub fn extend(&self, rho: f64, y: f64) -> Result<f64> {
        check_height(y)?;
        let mu = self.mu();
        let [v] = self.convolve(rho, y, |_, _, d| [d.powf(-mu)]);
        Ok(self.norms.p_ns * y.powf(2.0 * self.params.s()) * v)
    }

    /// `(v_ρ, v_y)`. The horizontal derivative is the extension of `u'`
    /// along `x/|x|`; the vertical one differentiates the kernel in `y`.
    pub fn gradient(&self, rho: f64, y: f64) -> Result<(f64, f64)> {
        let v_rho = self.radial_derivative(rho, y)?;
        let v_y = -y.powf(-self.params.a()) * self.weighted_flux(rho, y)?;
        Ok((v_rho, v_y))
    }

    /// `v_ρ` alone.
    pub fn radial_derivative(&self, rho: f64, y: f64) -> Result<f64> {
        check_height(y)?;
        let mu = self.mu();
        let [dr] = self.convolve_weighted(rho, y, |rp| [self.trace.derivative(rp)], |_, c, d| [c * d.powf(-mu)]);
        Ok(self.norms.p_ns * y.powf(2.0 * self.params.s()) * dr)
    }

    /// Weighted vertical flux `-y^a v_y(ρ, y)`; tends to `(-Δ)^s u / d_s`
    /// as `y ↓ 0`.
    pub fn weighted_flux(&self, rho: f64, y: f64) -> Result<f64> {
        check_height(y)?;
        Ok(-self.norms.p_ns * self.flux_integral(rho, y))
    }

    /// `‖u‖_{L¹(R^n)}`.
    pub fn trace_l1(&self) -> f64 {
        self.trace.l1_norm(self.params.n())
    }
}

fn check_height(y: f64) -> Result<()> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(FracError::domain(format!("extension evaluated at y = {y}; requires y > 0")));
    }
    Ok(())
}

/// Power-law continuation `h(ρ) = h(R)(ρ/R)^{-exponent}` beyond the last node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTail {
    pub exponent: f64,
}

impl PowerTail {
    /// Decay `ρ^{-(n+2s)}` of `(-Δ)^s u` for compactly supported `u`.
    pub fn fractional(params: &Params) -> Self {
        PowerTail {
            exponent: params.dim() + 2.0 * params.s(),
        }
    }
}

/// Neumann data `h = (-Δ)^s u` on `[0, R_tail]` plus an optional tail model.
#[derive(Debug, Clone)]
pub struct FluxData {
    pub profile: RadialFunction,
    pub tail: Option<PowerTail>,
}

/// `-v_y(ρ, y) = (1/d_s) ∫ Γ(x - z, y) h(z) dz` with the conjugate kernel
/// `Γ = Γ_{n,s} y / (|x|² + y²)^{(n+2-2s)/2}`.
pub fn vy_from_flux(h: &FluxData, params: &Params, rho: f64, y: f64) -> Result<f64> {
    vy_from_flux_with(h, params, &normalizations(params), rho, y)
}

pub fn vy_from_flux_with(
    h: &FluxData,
    params: &Params,
    norms: &Normalizations,
    rho: f64,
    y: f64,
) -> Result<f64> {
    check_height(y)?;
    let n = params.n();
    let nu = 0.5 * (params.dim() + 2.0 - 2.0 * params.s());
    let sphere = Sphere::new(n);
    let y2 = y * y;
    let pow = n as i32 - 1;
    let r_tail = h.profile.support();
    let breaks = peak_breakpoints(0.0, r_tail, rho, y, h.profile.nodes());
    let body = gl_panels(
        |rp| {
            let v = h.profile.value(rp);
            if v == 0.0 {
                return 0.0;
            }
            v * rp.powi(pow) * sphere.power_mean(rho, rp, y2, nu)
        },
        &breaks,
        RADIAL_ORDER,
    );
    let h_end = *h.profile.values().last().unwrap();
    let model = h.tail.unwrap_or(PowerTail::fractional(params));
    // Kernel-weighted contribution of the modelled tail; with no tail
    // supplied it is the size of what is being dropped.
    let tail = if h_end == 0.0 {
        0.0
    } else {
        let decay = model.exponent + 2.0 * nu - (n as f64 - 1.0) - 1.0;
        power_tail(
            |rp| {
                h_end * (rp / r_tail).powf(-model.exponent) * rp.powi(pow) * sphere.power_mean(rho, rp, y2, nu)
            },
            r_tail,
            decay.max(1e-3),
            1e-12,
            0.0,
        )
        .value
    };
    let scale = norms.gamma_ns * y / norms.d_s;
    if h.tail.is_none() {
        let estimate = (body * scale).abs();
        let dropped = (tail * scale).abs();
        if dropped > 1e-6 * estimate {
            return Err(FracError::accuracy(
                "vy_from_flux: flux data truncated without a tail model",
                dropped / estimate.max(f64::MIN_POSITIVE),
                1e-6,
            ));
        }
        return Ok(body * scale);
    }
    Ok((body + tail) * scale)
}

/// `C ∫_{B₁} h(z) |x - z|^{2s-n} dz` with the fundamental-solution constant.
pub fn riesz_bound(h: &RadialFunction, params: &Params, x: f64) -> Result<f64> {
    if h.min_value() < 0.0 {
        return Err(FracError::domain("riesz_bound requires nonnegative data"));
    }
    let c = normalizations(params).riesz_c.ok_or_else(|| {
        FracError::domain("fundamental solution is not a Riesz potential for n <= 2s")
    })?;
    let n = params.n();
    let mu = 0.5 * (params.dim() - 2.0 * params.s());
    let sphere = Sphere::new(n);
    let pow = n as i32 - 1;
    let radius = h.support().min(1.0);
    let mut breaks: Vec<f64> = h.nodes().iter().copied().filter(|&r| r <= radius).collect();
    if *breaks.last().unwrap() < radius {
        breaks.push(radius);
    }
    if x > 0.0 && x < radius {
        breaks.push(x);
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup();
    }
    let est = tanh_sinh_panels(
        |rp| {
            let v = h.value(rp);
            if v == 0.0 {
                return 0.0;
            }
            v * rp.powi(pow) * sphere.power_mean(x, rp, 0.0, mu)
        },
        &breaks,
        1e-10,
        1e-300,
    );
    Ok(c * est.value)
}

/// Maxima of the normalized decay ratios over a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// `max |v_ρ| r^{n+1+2s} / y^{2s}`
    pub horizontal: f64,
    /// `max |v_y| r^{n+2s} / y^{2s-1}`
    pub vertical: f64,
    /// `max |∇v| y^{n+1} / ‖u‖_{L¹}`
    pub gradient: f64,
}

pub fn decay_report<P: RadialProfile>(field: &ExtensionField<P>, samples: &[(f64, f64)]) -> Result<DecayReport> {
    if let Some(&(rho, _)) = samples.iter().find(|(rho, _)| !(*rho > 2.0)) {
        return Err(FracError::domain(format!(
            "decay ratios are only bounded for rho > 2 (sample at rho = {rho})"
        )));
    }
    let n = field.params.dim();
    let s = field.params.s();
    let l1 = field.trace_l1();
    let mut report = DecayReport {
        horizontal: 0.0,
        vertical: 0.0,
        gradient: 0.0,
    };
    for &(rho, y) in samples {
        let (vr, vy) = field.gradient(rho, y)?;
        let r = (rho * rho + y * y).sqrt();
        report.horizontal = report.horizontal.max(vr.abs() * r.powf(n + 1.0 + 2.0 * s) / y.powf(2.0 * s));
        report.vertical = report.vertical.max(vy.abs() * r.powf(n + 2.0 * s) / y.powf(2.0 * s - 1.0));
        if l1 > 0.0 {
            let g = (vr * vr + vy * vy).sqrt();
            report.gradient = report.gradient.max(g * y.powf(n + 1.0) / l1);
        }
    }
    Ok(report)
}

/// Sampled `sup_{B_R^+} |v|` against `C (‖u‖_{L∞(B_{2R})} + ‖u‖_{L¹})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfBallBound {
    pub sup_estimate: f64,
    pub bound: f64,
    /// Constant used in `bound`: `max(1, P_{n,s} R^{-n})`, for which the
    /// inequality follows from the Poisson formula.
    pub constant: f64,
    /// Smallest constant consistent with the samples.
    pub fitted_constant: f64,
}

pub fn sup_halfball_bound<P: RadialProfile>(field: &ExtensionField<P>, radius: f64) -> Result<HalfBallBound> {
    if !(radius > 0.0) {
        return Err(FracError::domain("half-ball radius must be positive"));
    }
    let n = field.params.n();
    let mut sup: f64 = 0.0;
    const RADIAL: usize = 12;
    const ANGULAR: usize = 12;
    for i in 1..=RADIAL {
        let r = radius * i as f64 / RADIAL as f64;
        for j in 1..=ANGULAR {
            let phi = 0.5 * std::f64::consts::PI * j as f64 / ANGULAR as f64;
            let (rho, y) = (r * phi.cos(), r * phi.sin());
            if y <= 1e-12 {
                continue;
            }
            sup = sup.max(field.extend(rho, y)?.abs());
        }
    }
    let trace = &field.trace;
    let local_sup = {
        let mut m: f64 = 0.0;
        let top = (2.0 * radius).min(trace.support());
        let steps = 400;
        for k in 0..=steps {
            m = m.max(trace.value(top * k as f64 / steps as f64).abs());
        }
        for x in trace.panel_breaks() {
            if x <= 2.0 * radius {
                m = m.max(trace.value(x).abs());
            }
        }
        m
    };
    let rhs = local_sup + trace.l1_norm(n);
    let constant = f64::max(1.0, field.norms.p_ns * radius.powi(-(n as i32)));
    let fitted_constant = if rhs > 0.0 { sup / rhs } else { 0.0 };
    Ok(HalfBallBound {
        sup_estimate: sup,
        bound: constant * rhs,
        constant,
        fitted_constant,
    })
}

/// `∫_{R^n} P(x, y) dx` by quadrature in `ρ` at fixed `y`.
pub fn poisson_mass(params: &Params, y: f64) -> Result<f64> {
    check_height(y)?;
    let p = normalizations(params).p_ns;
    let n = params.n();
    let s = params.s();
    let mu = 0.5 * (params.dim() + 2.0 * s);
    let ys = y.powf(2.0 * s);
    let f = |rho: f64| {
        if rho <= y {
            rho.powi(n as i32 - 1) * ys * (rho * rho + y * y).powf(-mu)
        } else {
            // ρ^{n-1} (ρ² + y²)^{-μ} = ρ^{-1-2s} (1 + (y/ρ)²)^{-μ}
            let t = y / rho;
            ys * rho.powf(-1.0 - 2.0 * s) * (1.0 + t * t).powf(-mu)
        }
    };
    let near = tanh_sinh_panels(f, &[0.0, y], 1e-13, 0.0).value;
    let far = power_tail(f, y, 2.0 * s, 1e-13, 0.0).value;
    Ok(p * sphere_area(n) * (near + far))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{Getoor, GridSpec};

    #[test]
    fn zero_trace_gives_zero_field() {
        let p = Params::new(2, 0.5).unwrap();
        let grid = GridSpec::new(40).build().unwrap();
        let f = ExtensionField::new(RadialFunction::zeros(grid).unwrap(), p);
        assert_eq!(f.extend(0.3, 0.2).unwrap(), 0.0);
        assert_eq!(f.gradient(2.5, 1.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn rejects_nonpositive_height() {
        let p = Params::new(2, 0.5).unwrap();
        let f = ExtensionField::new(Getoor { s: 0.5 }, p);
        assert!(matches!(f.extend(0.1, 0.0), Err(FracError::Domain(_))));
        assert!(f.extend(0.1, -1.0).is_err());
    }

    #[test]
    fn poisson_mass_is_one_in_the_half_plane() {
        let p = Params::new(1, 0.5).unwrap();
        for y in [0.1, 1.0, 10.0] {
            assert!((poisson_mass(&p, y).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn maximum_principle_on_getoor() {
        let p = Params::new(2, 0.5).unwrap();
        let f = ExtensionField::new(Getoor { s: 0.5 }, p);
        for rho in [0.0, 0.5, 0.99, 1.5] {
            for y in [1e-3, 0.1, 1.0] {
                let v = f.extend(rho, y).unwrap();
                assert!((0.0..=1.0).contains(&v), "{rho} {y} {v}");
            }
        }
    }

    #[test]
    fn decay_report_rejects_near_samples() {
        let p = Params::new(2, 0.5).unwrap();
        let f = ExtensionField::new(Getoor { s: 0.5 }, p);
        assert!(matches!(decay_report(&f, &[(1.5, 1.0)]), Err(FracError::Domain(_))));
    }

    #[test]
    fn riesz_bound_rejects_negative_data() {
        let p = Params::new(2, 0.5).unwrap();
        let h = RadialFunction::new(vec![0.0, 0.5, 1.0], vec![1.0, -0.1, 0.0]).unwrap();
        assert!(matches!(riesz_bound(&h, &p, 0.0), Err(FracError::Domain(_))));
    }

    #[test]
    fn riesz_bound_of_constant_at_origin() {
        // C ∫_{B₁} |z|^{2s-n} dz = C |S^{n-1}| / (2s)
        let p = Params::new(3, 0.25).unwrap();
        let h = RadialFunction::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        let c = normalizations(&p).riesz_c.unwrap();
        let want = c * sphere_area(3) / 0.5;
        let got = riesz_bound(&h, &p, 0.0).unwrap();
        assert!(((got - want) / want).abs() < 1e-9, "{got} vs {want}");
    }
}
