//! Dimension/order thresholds for boundedness of stable solutions.

use serde::{Deserialize, Serialize};

use crate::error::{FracError, Result};
use crate::numerics::{log_gamma_unchecked, Params};

const BISECTION_TOL: f64 = 1e-8;
const S_LO: f64 = 1e-6;
const S_HI: f64 = 1.0 - 1e-6;
const SCAN_POINTS: usize = 400;

/// Outcome of solving a threshold condition for `s ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "s", rename_all = "snake_case")]
pub enum Threshold {
    /// The condition holds for every tested `s`.
    AllS,
    /// The condition fails for every tested `s`.
    NoS,
    /// The condition holds exactly for `s > s*`.
    Crossing(f64),
}

impl Threshold {
    pub fn critical_s(&self) -> Option<f64> {
        match self {
            Threshold::Crossing(s) => Some(*s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub params: Params,
    /// `n < 2(s + 2 + √(2(s+1)))`
    pub radial_condition_holds: bool,
    /// `n/2 - s - 1 - √(n-1)`
    pub mu_floor: f64,
    pub gelfand_condition_holds: bool,
    /// `n < 10s`
    pub exp_10s_holds: bool,
    /// `n < 4s`
    pub convex_4s_holds: bool,
}

/// Upper end `2(s + 2 + √(2(s+1)))` of the admissible dimension window.
pub fn radial_upper(s: f64) -> f64 {
    2.0 * (s + 2.0 + (2.0 * (s + 1.0)).sqrt())
}

/// Lower end `2(s + 2 - √(2(s+1)))`.
pub fn radial_lower(s: f64) -> f64 {
    2.0 * (s + 2.0 - (2.0 * (s + 1.0)).sqrt())
}

/// `ln[Γ(n/2)Γ(1+s)/Γ((n-2s)/2)] - ln[Γ²((n+2s)/4)/Γ²((n-2s)/4)]`;
/// positive exactly when the Gelfand condition holds. Requires `n > 2s`.
pub fn gelfand_margin(n: usize, s: f64) -> Result<f64> {
    let nf = n as f64;
    if !(nf > 2.0 * s) || !(s > 0.0) {
        return Err(FracError::domain(format!(
            "Gamma condition needs n > 2s > 0 (n = {n}, s = {s})"
        )));
    }
    let lg = log_gamma_unchecked;
    let lhs = lg(nf / 2.0) + lg(1.0 + s) - lg((nf - 2.0 * s) / 2.0);
    let rhs = 2.0 * lg((nf + 2.0 * s) / 4.0) - 2.0 * lg((nf - 2.0 * s) / 4.0);
    Ok(lhs - rhs)
}

fn require_dimension(n: usize) -> Result<()> {
    if n < 2 {
        return Err(FracError::domain(format!("thresholds are stated for n >= 2 (got {n})")));
    }
    Ok(())
}

pub fn classify(p: &Params) -> Result<RegimeReport> {
    require_dimension(p.n())?;
    let (n, s) = (p.dim(), p.s());
    Ok(RegimeReport {
        params: *p,
        radial_condition_holds: n < radial_upper(s),
        mu_floor: decay_exponent_floor(p)?,
        gelfand_condition_holds: gelfand_margin(p.n(), s)? > 0.0,
        exp_10s_holds: n < 10.0 * s,
        convex_4s_holds: n < 4.0 * s,
    })
}

pub fn decay_exponent_floor(p: &Params) -> Result<f64> {
    require_dimension(p.n())?;
    let n = p.dim();
    Ok(n / 2.0 - p.s() - 1.0 - (n - 1.0).sqrt())
}

/// Bisection for a sign change of `g` on `[lo, hi]`; `g(lo) ≤ 0 < g(hi)`.
fn bisect<G: Fn(f64) -> f64>(g: G, mut lo: f64, mut hi: f64) -> f64 {
    debug_assert!(g(lo) <= 0.0 && g(hi) > 0.0);
    while hi - lo > BISECTION_TOL * 1e-2 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Scan `[lo, hi]` for the sign pattern of `g` and locate a single
/// crossing from "fails" to "holds".
fn solve_threshold<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64) -> Threshold {
    let samples: Vec<(f64, f64)> = (0..=SCAN_POINTS)
        .map(|k| {
            let s = lo + (hi - lo) * k as f64 / SCAN_POINTS as f64;
            (s, g(s))
        })
        .collect();
    if samples.iter().all(|&(_, v)| v > 0.0) {
        return Threshold::AllS;
    }
    if samples.iter().all(|&(_, v)| v <= 0.0) {
        return Threshold::NoS;
    }
    // Last transition from non-positive to positive.
    let k = samples
        .windows(2)
        .rposition(|w| w[0].1 <= 0.0 && w[1].1 > 0.0)
        .expect("mixed signs imply a transition");
    Threshold::Crossing(bisect(&g, samples[k].0, samples[k + 1].0))
}

/// Order `s*` above which `n < 2(s + 2 + √(2(s+1)))`.
pub fn critical_s_radial(n: usize) -> Result<Threshold> {
    require_dimension(n)?;
    let nf = n as f64;
    Ok(solve_threshold(|s| radial_upper(s) - nf, S_LO, S_HI))
}

/// Order `s*` above which the Gelfand Gamma condition holds.
pub fn critical_s_gelfand(n: usize) -> Result<Threshold> {
    require_dimension(n)?;
    // n ≥ 2 > 2s on the whole scan interval.
    Ok(solve_threshold(|s| gelfand_margin(n, s).unwrap(), S_LO, S_HI))
}
