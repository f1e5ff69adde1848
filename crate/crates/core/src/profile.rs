//! Radial profiles `u(ρ)` on `R^n`, vanishing outside a ball.

use serde::{Deserialize, Serialize};

use crate::error::{FracError, Result};
use crate::numerics::sphere_area;
use crate::quad::{gl_panels, graded_toward};

/// A radial function supported in `[0, support]`.
pub trait RadialProfile: Sync {
    fn value(&self, rho: f64) -> f64;

    /// Outer radius of the support.
    fn support(&self) -> f64;

    /// Radii in `(0, support)` where the profile is not smooth.
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Whether the profile has an algebraic singularity (in some derivative)
    /// at the support radius, e.g. `(1 - ρ)^s`.
    fn singular_at_support(&self) -> bool {
        false
    }

    /// Radial derivative; central differences unless overridden.
    fn derivative(&self, rho: f64) -> f64 {
        let h = 1e-6 * (1.0 + rho);
        if rho < h {
            return (self.value(rho + h) - self.value(rho)) / h;
        }
        (self.value(rho + h) - self.value(rho - h)) / (2.0 * h)
    }

    /// `Δu` for a radial function in `R^n`, by finite differences unless
    /// overridden. Only used for small-ball corrections.
    fn laplacian(&self, rho: f64, n: usize) -> f64 {
        let h = 1e-4 * (1.0 + rho);
        let u0 = self.value(rho);
        if rho < h {
            // u(ρ) ≈ u(0) + ρ² Δu(0) / (2n)
            return 2.0 * n as f64 * (self.value(h) - u0) / (h * h);
        }
        let second = (self.value(rho + h) - 2.0 * u0 + self.value(rho - h)) / (h * h);
        let first = (self.value(rho + h) - self.value(rho - h)) / (2.0 * h);
        second + (n as f64 - 1.0) * first / rho
    }

    /// Breakpoints covering `[0, support]`, refined toward the support
    /// radius when the profile is singular there.
    fn panel_breaks(&self) -> Vec<f64> {
        let r = self.support();
        let mut b = vec![0.0];
        b.extend(self.kinks().into_iter().filter(|&k| k > 0.0 && k < r));
        if self.singular_at_support() {
            let last = *b.last().unwrap();
            let start = last.max(0.5 * r);
            if start > last {
                b.push(start);
            }
            b.extend(graded_toward(start, r, 45).into_iter().skip(1));
        } else {
            b.push(r);
        }
        b.dedup();
        b
    }

    /// `‖u‖_{L¹(R^n)}`.
    fn l1_norm(&self, n: usize) -> f64 {
        sphere_area(n)
            * gl_panels(|r| self.value(r).abs() * r.powi(n as i32 - 1), &self.panel_breaks(), 10)
    }

    /// Supremum of `|u|` sampled at breakpoints and panel midpoints.
    fn sup_abs(&self) -> f64 {
        let b = self.panel_breaks();
        let mut m: f64 = 0.0;
        for w in b.windows(2) {
            for x in [w[0], 0.5 * (w[0] + w[1]), w[1]] {
                m = m.max(self.value(x).abs());
            }
        }
        m
    }
}

/// Piecewise-linear radial function on a strictly increasing grid starting
/// at `ρ = 0`; identically zero beyond the last node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialFunction {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl RadialFunction {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.len() != values.len() {
            return Err(FracError::domain(format!(
                "radial function needs matching node/value arrays of length >= 2 (got {} and {})",
                nodes.len(),
                values.len()
            )));
        }
        if nodes[0] != 0.0 {
            return Err(FracError::domain("radial grid must start at rho = 0"));
        }
        if let Some(i) = nodes.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(FracError::domain(format!(
                "radial grid not strictly increasing at index {}",
                i + 1
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FracError::domain("radial function values must be finite"));
        }
        Ok(RadialFunction { nodes, values })
    }

    /// Samples `f` at the nodes.
    pub fn sample<F: Fn(f64) -> f64>(nodes: Vec<f64>, f: F) -> Result<Self> {
        let values = nodes.iter().map(|&r| f(r)).collect();
        Self::new(nodes, values)
    }

    pub fn zeros(nodes: Vec<f64>) -> Result<Self> {
        let values = vec![0.0; nodes.len()];
        Self::new(nodes, values)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        RadialFunction {
            nodes: self.nodes.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn map_values<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        RadialFunction {
            nodes: self.nodes.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Linear combination on a shared grid.
    pub fn combine(&self, a: f64, other: &RadialFunction, b: f64) -> Result<Self> {
        if self.nodes != other.nodes {
            return Err(FracError::domain("radial functions live on different grids"));
        }
        Ok(RadialFunction {
            nodes: self.nodes.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn locate(&self, rho: f64) -> usize {
        match self.nodes.binary_search_by(|x| x.partial_cmp(&rho).unwrap()) {
            Ok(i) => i.min(self.nodes.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.nodes.len() - 2),
        }
    }
}

impl RadialProfile for RadialFunction {
    fn value(&self, rho: f64) -> f64 {
        let rho = rho.abs();
        let last = *self.nodes.last().unwrap();
        if rho > last {
            return 0.0;
        }
        let i = self.locate(rho);
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let t = (rho - x0) / (x1 - x0);
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    fn support(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    fn kinks(&self) -> Vec<f64> {
        self.nodes[1..self.nodes.len() - 1].to_vec()
    }

    fn derivative(&self, rho: f64) -> f64 {
        if rho > self.support() {
            return 0.0;
        }
        let i = self.locate(rho);
        (self.values[i + 1] - self.values[i]) / (self.nodes[i + 1] - self.nodes[i])
    }

    fn panel_breaks(&self) -> Vec<f64> {
        self.nodes.clone()
    }
}

/// `(1 - ρ²)₊^s`, whose fractional Laplacian is constant in the unit ball.
#[derive(Debug, Clone, Copy)]
pub struct Getoor {
    pub s: f64,
}

impl RadialProfile for Getoor {
    fn value(&self, rho: f64) -> f64 {
        let t = 1.0 - rho * rho;
        if t <= 0.0 {
            0.0
        } else {
            t.powf(self.s)
        }
    }

    fn support(&self) -> f64 {
        1.0
    }

    fn singular_at_support(&self) -> bool {
        true
    }

    fn derivative(&self, rho: f64) -> f64 {
        let t = 1.0 - rho * rho;
        if t <= 0.0 {
            0.0
        } else {
            -2.0 * self.s * rho * t.powf(self.s - 1.0)
        }
    }

    fn laplacian(&self, rho: f64, n: usize) -> f64 {
        let t = 1.0 - rho * rho;
        if t <= 0.0 {
            return 0.0;
        }
        let s = self.s;
        // u'' + (n-1)u'/ρ with u = t^s, t = 1 - ρ²
        -2.0 * s * n as f64 * t.powf(s - 1.0) + 4.0 * s * (s - 1.0) * rho * rho * t.powf(s - 2.0)
    }
}

/// Smooth compactly supported bump `exp(1 - 1/(1 - (ρ/R)²))`, radially
/// decreasing with value 1 at the origin.
#[derive(Debug, Clone, Copy)]
pub struct SmoothBump {
    pub radius: f64,
}

impl Default for SmoothBump {
    fn default() -> Self {
        SmoothBump { radius: 1.0 }
    }
}

impl RadialProfile for SmoothBump {
    fn value(&self, rho: f64) -> f64 {
        let t = rho / self.radius;
        let w = 1.0 - t * t;
        if w <= 0.0 {
            0.0
        } else {
            (1.0 - 1.0 / w).exp()
        }
    }

    fn support(&self) -> f64 {
        self.radius
    }

    fn derivative(&self, rho: f64) -> f64 {
        let t = rho / self.radius;
        let w = 1.0 - t * t;
        if w <= 0.0 {
            0.0
        } else {
            self.value(rho) * (-2.0 * t / (w * w)) / self.radius
        }
    }

    /// Graded toward the support radius, where all derivatives are large
    /// before vanishing.
    fn panel_breaks(&self) -> Vec<f64> {
        let r = self.radius;
        let mut b = vec![0.0, 0.25 * r];
        b.extend(graded_toward(0.5 * r, r, 10));
        b
    }
}

/// Scalar multiple of a profile.
#[derive(Debug, Clone, Copy)]
pub struct Scaled<P> {
    pub inner: P,
    pub factor: f64,
}

impl<P: RadialProfile> RadialProfile for Scaled<P> {
    fn value(&self, rho: f64) -> f64 {
        self.factor * self.inner.value(rho)
    }
    fn support(&self) -> f64 {
        self.inner.support()
    }
    fn kinks(&self) -> Vec<f64> {
        self.inner.kinks()
    }
    fn singular_at_support(&self) -> bool {
        self.inner.singular_at_support()
    }
    fn derivative(&self, rho: f64) -> f64 {
        self.factor * self.inner.derivative(rho)
    }
    fn laplacian(&self, rho: f64, n: usize) -> f64 {
        self.factor * self.inner.laplacian(rho, n)
    }
    fn panel_breaks(&self) -> Vec<f64> {
        self.inner.panel_breaks()
    }
}

/// Grid controls for the unit-ball discretization.
///
/// The interior is uniform; toward `ρ = 1` the element widths shrink
/// geometrically by `grading_ratio` down to `h_uniform^layer_power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of intervals; the Dirichlet node `ρ = 1` is the last of
    /// `intervals + 1` nodes.
    pub intervals: usize,
    pub grading_ratio: f64,
    pub layer_power: f64,
}

impl GridSpec {
    pub fn new(intervals: usize) -> Self {
        GridSpec {
            intervals,
            grading_ratio: 0.85,
            layer_power: 2.0,
        }
    }

    pub fn build(&self) -> Result<Vec<f64>> {
        graded_grid(self)
    }
}

pub fn graded_grid(spec: &GridSpec) -> Result<Vec<f64>> {
    let m = spec.intervals;
    let r = spec.grading_ratio;
    if m < 8 {
        return Err(FracError::domain(format!("grid needs at least 8 intervals, got {m}")));
    }
    if !(r > 0.0 && r < 1.0) || !(spec.layer_power >= 1.0) {
        return Err(FracError::domain("grading ratio must lie in (0,1) and layer power be >= 1"));
    }
    let layer = |h: f64| -> (usize, f64) {
        let h_min = h.powf(spec.layer_power);
        let count = if h_min < h {
            ((h / h_min).ln() / (1.0 / r).ln()).ceil() as usize
        } else {
            0
        };
        let length = (0..count).map(|k| h_min * r.powi(-(k as i32))).sum::<f64>();
        (count, length)
    };
    let mut h = 1.0 / m as f64;
    let mut sizes_layer = 0;
    for _ in 0..100 {
        let (count, length) = layer(h);
        if count + 3 >= m || length >= 0.9 {
            return Err(FracError::domain(format!(
                "grid with {m} intervals cannot host the boundary layer"
            )));
        }
        let next = (1.0 - length) / (m - count) as f64;
        sizes_layer = count;
        if (next - h).abs() < 1e-15 {
            break;
        }
        h = next;
    }
    let (count, length) = layer(h);
    debug_assert_eq!(count, sizes_layer);
    let uniform = m - count;
    let h_u = (1.0 - length) / uniform as f64;
    let h_min = h.powf(spec.layer_power);
    let mut nodes = Vec::with_capacity(m + 1);
    for i in 0..=uniform {
        nodes.push(i as f64 * h_u);
    }
    let mut x = nodes[uniform];
    for k in (0..count).rev() {
        x += h_min * r.powi(-(k as i32));
        nodes.push(x);
    }
    // Pin the Dirichlet node exactly.
    let last = nodes.len() - 1;
    nodes[last] = 1.0;
    if nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(FracError::domain("graded grid construction produced duplicate nodes"));
    }
    Ok(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_grid_shape() {
        for m in [40, 80, 160, 320] {
            let g = GridSpec::new(m).build().unwrap();
            assert_eq!(g.len(), m + 1);
            assert_eq!(g[0], 0.0);
            assert_eq!(*g.last().unwrap(), 1.0);
            let widths: Vec<f64> = g.windows(2).map(|w| w[1] - w[0]).collect();
            // Widths never grow toward the boundary.
            for w in widths.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-9), "m={m}");
            }
            // The last decade holds more than four nodes.
            let delta_last = 1.0 - g[m - 1];
            let in_decade = g.iter().filter(|&&r| r < 1.0 && 1.0 - r <= 10.0 * delta_last).count();
            assert!(in_decade >= 4);
        }
    }

    #[test]
    fn radial_function_rejects_bad_grids() {
        assert!(RadialFunction::new(vec![0.0, 0.5, 0.5, 1.0], vec![0.0; 4]).is_err());
        assert!(RadialFunction::new(vec![0.1, 0.5, 1.0], vec![0.0; 3]).is_err());
        assert!(RadialFunction::new(vec![0.0, 1.0], vec![0.0]).is_err());
    }

    #[test]
    fn piecewise_linear_interpolation() {
        let f = RadialFunction::new(vec![0.0, 0.5, 1.0], vec![2.0, 1.0, 0.0]).unwrap();
        assert!((f.value(0.25) - 1.5).abs() < 1e-15);
        assert!((f.value(0.75) - 0.5).abs() < 1e-15);
        assert_eq!(f.value(1.5), 0.0);
        assert!((f.derivative(0.6) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn getoor_laplacian_matches_finite_differences() {
        let g = Getoor { s: 0.3 };
        for n in [2, 3] {
            for rho in [0.0, 0.2, 0.7] {
                let fd = {
                    struct Wrap(Getoor);
                    impl RadialProfile for Wrap {
                        fn value(&self, r: f64) -> f64 {
                            self.0.value(r)
                        }
                        fn support(&self) -> f64 {
                            1.0
                        }
                    }
                    Wrap(g).laplacian(rho, n)
                };
                let exact = g.laplacian(rho, n);
                assert!((fd - exact).abs() < 1e-5 * (1.0 + exact.abs()), "{fd} vs {exact}");
            }
        }
    }

    #[test]
    fn l1_norm_of_indicator_like_profile() {
        // u = 1 - ρ on [0,1] in R^2: ‖u‖₁ = 2π ∫(1-ρ)ρ dρ = π/3
        let f = RadialFunction::new(vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
        assert!((f.l1_norm(2) - std::f64::consts::PI / 3.0).abs() < 1e-13);
    }
}
