//! Special functions and the `(n, s)`-dependent normalization constants.
//!
//! Every constant here has a defining property that can be checked by
//! quadrature (mass of the Poisson kernel, Dirichlet-to-Neumann matching,
//! the constant value of `(-Δ)^s (1-|x|²)₊^s`). The closed forms are the
//! classical ones; the test suites check the defining properties.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{FracError, Result};

/// Dimension `n` and fractional order `s` of the problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    n: usize,
    s: f64,
}

impl Params {
    /// Kernel-level parameters: any `n >= 1`, `0 < s < 1`.
    pub fn new(n: usize, s: f64) -> Result<Self> {
        if n < 1 {
            return Err(FracError::domain(format!("dimension n = {n} must be >= 1")));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(FracError::domain(format!("order s = {s} must lie in (0, 1)")));
        }
        Ok(Params { n, s })
    }

    /// Parameters for the solver-facing paths, where the theory needs `n >= 2`.
    pub fn for_solver(n: usize, s: f64) -> Result<Self> {
        let p = Self::new(n, s)?;
        p.require_solver_dimension()?;
        Ok(p)
    }

    pub fn require_solver_dimension(&self) -> Result<()> {
        if self.n < 2 {
            return Err(FracError::domain(format!(
                "dimension n = {} not supported here (requires n >= 2)",
                self.n
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// Extension weight exponent `a = 1 - 2s`.
    pub fn a(&self) -> f64 {
        1.0 - 2.0 * self.s
    }

    pub fn dim(&self) -> f64 {
        self.n as f64
    }
}

/// Normalization constants for a fixed [`Params`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizations {
    /// Constant in front of the principal-value integral defining `(-Δ)^s`.
    pub c_ns: f64,
    /// Dirichlet-to-Neumann constant: `(-Δ)^s u = d_s ∂v/∂ν^a`.
    pub d_s: f64,
    /// Poisson kernel constant, fixed by unit mass.
    pub p_ns: f64,
    /// Conjugate (Neumann) kernel constant.
    pub gamma_ns: f64,
    /// Constant of the fundamental solution `C |x|^{2s-n}`. Undefined when
    /// `n <= 2s` (only possible for `n = 1`), where the fundamental solution
    /// is logarithmic or growing.
    pub riesz_c: Option<f64>,
}

pub fn normalizations(p: &Params) -> Normalizations {
    let n = p.dim();
    let s = p.s();
    let half_n = 0.5 * n;
    let ln_pi_half_n = half_n * PI.ln();
    let c_ns = (s.ln() + s * 4f64.ln() + log_gamma_unchecked(half_n + s)
        - ln_pi_half_n
        - log_gamma_unchecked(1.0 - s))
    .exp();
    let p_ns = (log_gamma_unchecked(half_n + s) - ln_pi_half_n - log_gamma_unchecked(s)).exp();
    let gamma_ns =
        (log_gamma_unchecked(half_n + 1.0 - s) - ln_pi_half_n - log_gamma_unchecked(1.0 - s)).exp();
    let d_s = ((2.0 * s - 1.0) * 2f64.ln() + log_gamma_unchecked(s) - log_gamma_unchecked(1.0 - s))
        .exp();
    let riesz_c = if n > 2.0 * s {
        Some(
            (log_gamma_unchecked(half_n - s)
                - s * 4f64.ln()
                - ln_pi_half_n
                - log_gamma_unchecked(s))
            .exp(),
        )
    } else {
        None
    };
    Normalizations {
        c_ns,
        d_s,
        p_ns,
        gamma_ns,
        riesz_c,
    }
}

/// Surface measure of the unit sphere `S^{k-1} ⊂ R^k`, i.e. `2 π^{k/2} / Γ(k/2)`.
/// `sphere_area(1) = 2` counts the two points of `S^0`.
pub fn sphere_area(k: usize) -> f64 {
    let k = k as f64;
    2.0 * (0.5 * k * PI.ln() - log_gamma_unchecked(0.5 * k)).exp()
}

/// Volume of the unit ball in `R^n`.
pub fn ball_volume(n: usize) -> f64 {
    sphere_area(n) / n as f64
}

/// `(-Δ)^s (1-|x|²)₊^s` inside the unit ball, with the `c_{n,s}` normalization.
pub fn getoor_constant(p: &Params) -> f64 {
    let n = p.dim();
    let s = p.s();
    (s * 4f64.ln() + log_gamma_unchecked(1.0 + s) + log_gamma_unchecked(0.5 * n + s)
        - log_gamma_unchecked(0.5 * n))
    .exp()
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(FracError::domain(format!(
            "log_gamma requires a finite positive argument, got {x}"
        )));
    }
    Ok(log_gamma_unchecked(x))
}

pub(crate) fn log_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the Lanczos sum in its accurate range.
        return (PI / (PI * x).sin()).ln() - log_gamma_unchecked(1.0 - x);
    }
    // Exact zeros, where the relative error would otherwise be unbounded.
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    let z = x - 1.0;
    let mut sum = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        sum += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_gamma_exact_values() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-15);
        assert!((log_gamma(0.5).unwrap() - 0.5 * PI.ln()).abs() < 1e-14);
        assert!((log_gamma(5.0).unwrap() - 24f64.ln()).abs() < 1e-13);
        // Γ(10) = 9!
        assert!((log_gamma(10.0).unwrap() - 362_880f64.ln()).abs() < 1e-12);
        // Γ(7/2) = 15√π/8
        let expected = (15.0 * PI.sqrt() / 8.0).ln();
        assert!((log_gamma(3.5).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn log_gamma_rejects_nonpositive() {
        assert!(matches!(log_gamma(0.0), Err(FracError::Domain(_))));
        assert!(matches!(log_gamma(-1.5), Err(FracError::Domain(_))));
        assert!(log_gamma(f64::NAN).is_err());
    }

    #[test]
    fn log_gamma_large_argument_matches_stirling() {
        let x: f64 = 1000.0;
        let stirling = (x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x.powi(3));
        let got = log_gamma(x).unwrap();
        assert!(((got - stirling) / stirling).abs() < 1e-13);
    }

    #[test]
    fn params_validation() {
        assert!(Params::new(0, 0.5).is_err());
        assert!(Params::new(2, 0.0).is_err());
        assert!(Params::new(2, 1.0).is_err());
        assert!(Params::new(1, 0.3).is_ok());
        assert!(Params::for_solver(1, 0.3).is_err());
        let p = Params::new(3, 0.25).unwrap();
        assert!((p.a() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn half_plane_poisson_constant() {
        let p = Params::new(1, 0.5).unwrap();
        let k = normalizations(&p);
        assert!((k.p_ns - 1.0 / PI).abs() < 1e-14);
        assert!((k.d_s - 1.0).abs() < 1e-14);
        assert!(k.riesz_c.is_none());
    }

    #[test]
    fn all_constants_positive() {
        for n in 1..=10 {
            for i in 1..10 {
                let p = Params::new(n, i as f64 / 10.0).unwrap();
                let k = normalizations(&p);
                for v in [k.c_ns, k.d_s, k.p_ns, k.gamma_ns] {
                    assert!(v > 0.0 && v.is_finite());
                }
                if n >= 2 {
                    assert!(k.riesz_c.unwrap() > 0.0);
                }
            }
        }
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((ball_volume(2) - PI).abs() < 1e-13);
    }

    #[test]
    fn laplacian_limit_of_c_ns() {
        // c_{n,s} / (s(1-s)) tends to a finite positive limit; for n = 1 the
        // s = 1/2 value is 1/π.
        let k = normalizations(&Params::new(1, 0.5).unwrap());
        assert!((k.c_ns - 1.0 / PI).abs() < 1e-14);
    }
}
