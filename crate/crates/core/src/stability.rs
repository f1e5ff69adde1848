//! Quantities that stability controls along computed branches: the
//! linearized quadratic form, the weighted Dirichlet integral of `v_ρ`,
//! `L^p` norms of `e^u`, and power decay of the state near the origin.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FracError, Result};
use crate::extension::ExtensionField;
use crate::numerics::{ball_volume, sphere_area, Params};
use crate::operator::DiscreteOperator;
use crate::profile::{RadialFunction, RadialProfile};
use crate::quad::gauss_legendre;
use crate::regimes::{classify, decay_exponent_floor};
use crate::solver::{Branch, BranchPoint, Nonlinearity};

const CELL_ORDER: usize = 4;
/// Bottom of the `y` lattice; below it a single panel in `τ = y^{1+a}`.
const Y_FLOOR: f64 = 1e-4;
const TRUNCATION_TOL: f64 = 0.01;
const EXTENSION_BUDGET: usize = 8;
const LP_ORDER: usize = 8;

/// `ξᵀAξ - λ Σ w_i f'(u_i) ξ_i²`.
pub fn stability_form(op: &DiscreteOperator, f: &dyn Nonlinearity, point: &BranchPoint, xi: &DVector<f64>) -> Result<f64> {
    if xi.len() != op.dim() {
        return Err(FracError::domain(format!(
            "test vector of length {} on a grid with {} unknowns",
            xi.len(),
            op.dim()
        )));
    }
    let u = op.interior(&point.state)?;
    let potential: f64 = xi
        .iter()
        .zip(u.iter())
        .zip(op.weights().iter())
        .map(|((x, v), w)| w * f.derivative(*v) * x * x)
        .sum();
    Ok(op.energy(xi) - point.lambda * potential)
}

/// Admissible range `[1, 1 + √(n-1))` for the weight exponent.
pub fn alpha_range(n: usize) -> (f64, f64) {
    (1.0, 1.0 + (n as f64 - 1.0).sqrt())
}

#[derive(Debug, Clone)]
pub struct WeightedDirichletQuery<P = RadialFunction> {
    pub state: P,
    pub alpha: f64,
    pub rho_min: f64,
    pub y_max: f64,
}

impl<P: RadialProfile> WeightedDirichletQuery<P> {
    /// Default truncation `ρ_min = 1e-3`, `Y_max = 50`.
    pub fn new(state: P, alpha: f64) -> Self {
        WeightedDirichletQuery {
            state,
            alpha,
            rho_min: 1e-3,
            y_max: 50.0,
        }
    }

    pub fn validate(&self, params: &Params) -> Result<()> {
        let (lo, hi) = alpha_range(params.n());
        if !(self.alpha >= lo && self.alpha < hi) {
            return Err(FracError::domain(format!(
                "alpha = {} outside [{lo}, {hi}) for n = {}",
                self.alpha,
                params.n()
            )));
        }
        if !(self.rho_min > 0.0 && self.rho_min < 0.5) || !(self.y_max > Y_FLOOR) || !self.y_max.is_finite() {
            return Err(FracError::domain(format!(
                "truncation (rho_min = {}, y_max = {}) must satisfy 0 < rho_min < 1/2 and y_max > {Y_FLOOR}",
                self.rho_min, self.y_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedDirichletReport {
    /// Integral over `(rho_min, 1/2) × (0, y_max)`.
    pub value: f64,
    /// Same with `rho_min` halved and `y_max` doubled.
    pub refined: f64,
    pub rho_min: f64,
    pub y_max: f64,
    pub converged: bool,
}

impl WeightedDirichletReport {
    pub fn relative_change(&self) -> f64 {
        if self.refined == 0.0 {
            return 0.0;
        }
        (self.refined - self.value).abs() / self.refined.abs()
    }
}

/// Panel edges `rho_min·2^j` capped at `1/2`; halving `rho_min` only
/// prepends an edge.
fn rho_edges(rho_min: f64) -> Vec<f64> {
    let mut e = vec![rho_min];
    let mut r = rho_min;
    while 2.0 * r < 0.5 {
        r *= 2.0;
        e.push(r);
    }
    e.push(0.5);
    e
}

/// `0` followed by `y_max·2^{-j}`, the smallest in `(Y_FLOOR/2, Y_FLOOR]`;
/// doubling `y_max` only appends an edge.
fn y_edges(y_max: f64) -> Vec<f64> {
    let mut e = vec![y_max];
    let mut y = y_max;
    while y > Y_FLOOR {
        y *= 0.5;
        e.push(y);
    }
    e.push(0.0);
    e.reverse();
    e
}

struct DirichletIntegrand<'a, P> {
    ext: &'a ExtensionField<P>,
    alpha: f64,
    cache: Mutex<HashMap<[u64; 4], Result<f64>>>,
}

impl<'a, P: RadialProfile> DirichletIntegrand<'a, P> {
    fn new(q: &WeightedDirichletQuery<P>, ext: &'a ExtensionField<P>) -> Result<Self> {
        q.validate(ext.params())?;
        let probe = ext.trace().panel_breaks();
        if probe.iter().any(|&r| q.state.value(r) != ext.trace().value(r)) || q.state.support() != ext.trace().support() {
            return Err(FracError::domain("extension field was not built from the query state"));
        }
        Ok(DirichletIntegrand {
            ext,
            alpha: q.alpha,
            cache: Mutex::new(HashMap::new()),
        })
    }

    fn cell(&self, r0: f64, r1: f64, y0: f64, y1: f64) -> Result<f64> {
        let key = [r0.to_bits(), r1.to_bits(), y0.to_bits(), y1.to_bits()];
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return v.clone();
        }
        let v = self.compute_cell(r0, r1, y0, y1);
        self.cache.lock().unwrap().insert(key, v.clone());
        v
    }

    fn compute_cell(&self, r0: f64, r1: f64, y0: f64, y1: f64) -> Result<f64> {
        let params = self.ext.params();
        let a = params.a();
        let pow = params.dim() - 1.0 - 2.0 * self.alpha;
        let rule = gauss_legendre(CELL_ORDER);
        let (rc, rh) = (0.5 * (r0 + r1), 0.5 * (r1 - r0));
        // Bottom panel: y^a dy = dτ / (1+a) with τ = y^{1+a}.
        let bottom = y0 == 0.0;
        let (t0, t1) = if bottom { (0.0, y1.powf(1.0 + a)) } else { (y0, y1) };
        let (tc, th) = (0.5 * (t0 + t1), 0.5 * (t1 - t0));
        let mut sum = 0.0;
        for (xr, wr) in rule.nodes.iter().zip(&rule.weights) {
            let rho = rc + rh * xr;
            let mut inner = 0.0;
            for (xt, wt) in rule.nodes.iter().zip(&rule.weights) {
                let t = tc + th * xt;
                let (y, jac) = if bottom {
                    (t.powf(1.0 / (1.0 + a)), 1.0 / (1.0 + a))
                } else {
                    (t, t.powf(a))
                };
                let d = self.ext.radial_derivative(rho, y)?;
                inner += wt * jac * d * d;
            }
            sum += wr * rho.powf(pow) * inner * th;
        }
        Ok(sphere_area(params.n()) * sum * rh)
    }

    fn integral(&self, rho_min: f64, y_max: f64) -> Result<f64> {
        let re = rho_edges(rho_min);
        let ye = y_edges(y_max);
        let cells: Vec<(usize, usize)> = (0..re.len() - 1)
            .flat_map(|i| (0..ye.len() - 1).map(move |j| (i, j)))
            .collect();
        let values: Vec<Result<f64>> = cells
            .par_iter()
            .map(|&(i, j)| self.cell(re[i], re[i + 1], ye[j], ye[j + 1]))
            .collect();
        let mut total = 0.0;
        for v in values {
            total += v?;
        }
        Ok(total)
    }
}

/// `∫_{ρ_min}^{1/2} ∫_0^{Y_max} y^a v_ρ² ρ^{-2α} dx dy` over the annulus in
/// `R^n`, extending the truncation until halving `ρ_min` and doubling
/// `Y_max` changes the value by at most 1%.
pub fn weighted_dirichlet<P: RadialProfile>(
    q: &WeightedDirichletQuery<P>,
    ext: &ExtensionField<P>,
) -> Result<WeightedDirichletReport> {
    let integrand = DirichletIntegrand::new(q, ext)?;
    let (mut rho_min, mut y_max) = (q.rho_min, q.y_max);
    let mut value = integrand.integral(rho_min, y_max)?;
    let mut report = WeightedDirichletReport {
        value,
        refined: value,
        rho_min,
        y_max,
        converged: false,
    };
    for _ in 0..=EXTENSION_BUDGET {
        let refined = integrand.integral(0.5 * rho_min, 2.0 * y_max)?;
        report = WeightedDirichletReport {
            value,
            refined,
            rho_min,
            y_max,
            converged: false,
        };
        report.converged = report.relative_change() <= TRUNCATION_TOL;
        if report.converged {
            break;
        }
        rho_min *= 0.5;
        y_max *= 2.0;
        value = refined;
    }
    Ok(report)
}

/// The integral at the query's truncation, without extension.
pub fn weighted_dirichlet_truncated<P: RadialProfile>(q: &WeightedDirichletQuery<P>, ext: &ExtensionField<P>) -> Result<f64> {
    DirichletIntegrand::new(q, ext)?.integral(q.rho_min, q.y_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpEntry {
    pub lambda: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSweep {
    pub alpha: f64,
    /// `2α + 1`.
    pub exponent: f64,
    pub entries: Vec<LpEntry>,
    pub sup: f64,
    pub monotone: bool,
}

/// `‖e^u‖_{L^p(B₁)}` for a radial grid state, exact per element up to
/// Gauss–Legendre error in the exponential.
pub fn exp_lp_norm(state: &RadialFunction, n: usize, p: f64) -> f64 {
    let rule = gauss_legendre(LP_ORDER);
    let nodes = state.nodes();
    let values = state.values();
    let pow = n as i32 - 1;
    let mut sum = 0.0;
    for i in 0..nodes.len() - 1 {
        let (r0, r1) = (nodes[i], nodes[i + 1]);
        let (u0, u1) = (values[i], values[i + 1]);
        let (c, h) = (0.5 * (r0 + r1), 0.5 * (r1 - r0));
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let t = 0.5 * (1.0 + x);
            let u = u0 + (u1 - u0) * t;
            sum += w * h * (p * u).exp() * (c + h * x).powi(pow);
        }
    }
    // Beyond the last node the state is zero but e^0 = 1 still counts.
    let last = *nodes.last().unwrap();
    if last < 1.0 {
        sum += (1.0 - last.powi(n as i32)) / n as f64;
    }
    (sphere_area(n) * sum).powf(1.0 / p)
}

/// `‖e^{u_λ}‖_{L^{2α+1}(B₁)}` at every point of an exponential branch.
pub fn lp_sweep(branch: &Branch, params: &Params, alpha: f64) -> Result<LpSweep> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(FracError::domain(format!("lp_sweep needs 0 < alpha < 2 (got {alpha})")));
    }
    let p = 2.0 * alpha + 1.0;
    let n = params.n();
    let entries: Vec<LpEntry> = branch
        .points
        .par_iter()
        .map(|pt| LpEntry {
            lambda: pt.lambda,
            norm: exp_lp_norm(&pt.state, n, p),
        })
        .collect();
    let sup = entries.iter().map(|e| e.norm).fold(f64::NEG_INFINITY, f64::max);
    let mut sorted = entries.clone();
    sorted.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let monotone = sorted.windows(2).all(|w| w[1].norm >= w[0].norm * (1.0 - 1e-12));
    Ok(LpSweep {
        alpha,
        exponent: p,
        entries,
        sup,
        monotone,
    })
}

/// `|B₁|^{1/p' - 1/p}`, the Hölder factor between `L^{p'}` and `L^p` on the
/// unit ball (`p' < p`).
pub fn holder_factor(n: usize, p_low: f64, p_high: f64) -> f64 {
    ball_volume(n).powf(1.0 / p_low - 1.0 / p_high)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub mu: f64,
    /// Smallest `C` with `u ≤ C ρ^{-μ}` on the middle half of the nodes.
    pub constant: f64,
    /// `min_i (1 - u_i ρ_i^μ / C)` over the nodes outside the fitting
    /// window; zero when `C = 0`. Negative means the bound fails.
    pub worst_slack: f64,
    pub holds: bool,
}

/// Fits `C` in `u(ρ) ≤ C ρ^{-μ}` on the middle half of the grid nodes and
/// checks the bound at every node.
pub fn decay_profile_check(state: &RadialFunction, params: &Params, mu: f64) -> Result<DecayReport> {
    let report = classify(params)?;
    if report.radial_condition_holds {
        return Err(FracError::domain(format!(
            "decay profiles apply only when n >= 2(s+2+sqrt(2(s+1))) (n = {}, s = {})",
            params.n(),
            params.s()
        )));
    }
    let floor = decay_exponent_floor(params)?;
    if !(mu > floor) {
        return Err(FracError::domain(format!("mu = {mu} must exceed the floor {floor}")));
    }
    let pts: Vec<(f64, f64)> = state
        .nodes()
        .iter()
        .zip(state.values())
        .filter(|(r, _)| **r > 0.0)
        .map(|(r, v)| (*r, *v * r.powf(mu)))
        .collect();
    // Middle half of the nodes strictly inside (0, 1), by index.
    let inner = pts.len().saturating_sub(1);
    let fit = inner / 4..(3 * inner).div_ceil(4).max(inner / 4 + 1);
    let constant = pts[fit.clone()].iter().map(|p| p.1).fold(0.0, f64::max);
    let holds = pts.iter().all(|&(_, scaled)| scaled <= constant * (1.0 + 1e-12));
    let outside = pts
        .iter()
        .enumerate()
        .filter(|(i, _)| !fit.contains(i))
        .map(|(_, &(_, scaled))| scaled);
    let worst_slack = if constant > 0.0 {
        outside.map(|scaled| 1.0 - scaled / constant).fold(f64::INFINITY, f64::min)
    } else {
        0.0
    };
    Ok(DecayReport {
        mu,
        constant,
        worst_slack,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_nest_under_refinement() {
        let a = rho_edges(1e-3);
        let b = rho_edges(5e-4);
        assert_eq!(&b[1..], &a[..]);
        let a = y_edges(50.0);
        let b = y_edges(100.0);
        assert_eq!(&b[..b.len() - 1], &a[..]);
        assert!(a[1] <= Y_FLOOR && a[1] > 0.5 * Y_FLOOR);
    }

    #[test]
    fn lp_norm_of_zero_state_is_ball_volume_power() {
        let u = RadialFunction::zeros(vec![0.0, 0.3, 0.7, 1.0]).unwrap();
        for n in [2usize, 3, 5] {
            let got = exp_lp_norm(&u, n, 4.0);
            let want = ball_volume(n).powf(0.25);
            assert!((got - want).abs() < 1e-13 * want, "{n}: {got} vs {want}");
        }
    }
}
