//! Newton solves, pseudo-arclength continuation of the minimal branch of
//! `(-Δ)^s u = λ f(u)` in `B₁`, and principal eigenvalues along it.
//!
//! The discrete system is `F(u, λ) = A u - λ W f(u) = 0` with the stiffness
//! `A` and lumped mass `W` of [`DiscreteOperator`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{FracError, Result};
use crate::operator::DiscreteOperator;
use crate::profile::RadialFunction;

pub const NEWTON_MAX_ITER: usize = 50;
const CORRECTOR_MAX_ITER: usize = 12;
const EIGEN_MAX_ITER: usize = 500;

/// A nonlinearity `f` with its derivative.
pub trait Nonlinearity: Send + Sync {
    fn value(&self, u: f64) -> f64;
    fn derivative(&self, u: f64) -> f64;
    /// Caller's attestation that `f` is nondecreasing.
    fn nondecreasing(&self) -> bool;
    fn name(&self) -> String;
}

/// Built-in nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Builtin {
    /// `e^u`
    Exp,
    /// `(1 + u)^p`
    Power { p: f64 },
    /// `f ≡ 1`; the problem becomes linear in `λ`.
    Constant,
}

impl Nonlinearity for Builtin {
    fn value(&self, u: f64) -> f64 {
        match *self {
            Builtin::Exp => u.exp(),
            Builtin::Power { p } => (1.0 + u).powf(p),
            Builtin::Constant => 1.0,
        }
    }

    fn derivative(&self, u: f64) -> f64 {
        match *self {
            Builtin::Exp => u.exp(),
            Builtin::Power { p } => p * (1.0 + u).powf(p - 1.0),
            Builtin::Constant => 0.0,
        }
    }

    fn nondecreasing(&self) -> bool {
        match *self {
            Builtin::Power { p } => p >= 0.0,
            _ => true,
        }
    }

    fn name(&self) -> String {
        match *self {
            Builtin::Exp => "exp".into(),
            Builtin::Power { p } => format!("power({p})"),
            Builtin::Constant => "constant".into(),
        }
    }
}

pub fn check_nonlinearity(f: &dyn Nonlinearity) -> Result<()> {
    if !f.nondecreasing() {
        return Err(FracError::domain(format!("{} is not attested nondecreasing", f.name())));
    }
    if !(f.value(0.0) > 0.0) {
        return Err(FracError::domain(format!("{} needs f(0) > 0", f.name())));
    }
    Ok(())
}

fn map(u: &DVector<f64>, g: impl Fn(f64) -> f64) -> DVector<f64> {
    u.map(g)
}

/// `A u - λ W f(u)`.
fn residual(op: &DiscreteOperator, f: &dyn Nonlinearity, lambda: f64, u: &DVector<f64>) -> DVector<f64> {
    op.matrix() * u - map(u, |x| f.value(x)).component_mul(op.weights()) * lambda
}

/// `‖W⁻¹F‖∞`, the pointwise residual of the discrete equation.
fn residual_norm(op: &DiscreteOperator, r: &DVector<f64>) -> f64 {
    r.component_div(op.weights()).amax()
}

fn tolerance(lambda: f64) -> f64 {
    1e-10 * (1.0 + lambda.abs())
}

/// `A - λ W diag f'(u)`.
fn jacobian(op: &DiscreteOperator, f: &dyn Nonlinearity, lambda: f64, u: &DVector<f64>) -> DMatrix<f64> {
    let mut j = op.matrix().clone();
    for i in 0..u.len() {
        j[(i, i)] -= lambda * op.weights()[i] * f.derivative(u[i]);
    }
    j
}

/// Solves `(-Δ)^s u = λ f(u)` on the grid by Newton's method from `init`.
pub fn newton_solve(
    op: &DiscreteOperator,
    f: &dyn Nonlinearity,
    lambda: f64,
    init: &RadialFunction,
) -> Result<RadialFunction> {
    check_nonlinearity(f)?;
    if !(lambda >= 0.0) {
        return Err(FracError::domain(format!("lambda = {lambda} must be >= 0")));
    }
    let mut u = op.interior(init)?;
    let mut res = f64::INFINITY;
    for it in 0..=NEWTON_MAX_ITER {
        let r = residual(op, f, lambda, &u);
        res = residual_norm(op, &r);
        if !res.is_finite() {
            break;
        }
        if res <= tolerance(lambda) {
            return op.extend_by_zero(&u);
        }
        if it == NEWTON_MAX_ITER {
            break;
        }
        let Some(step) = jacobian(op, f, lambda, &u).lu().solve(&(-r)) else {
            break;
        };
        u += step;
    }
    Err(FracError::NoConvergence {
        lambda,
        iterations: NEWTON_MAX_ITER,
        residual: res,
    })
}

/// Step controls for [`continue_branch`]; steps are measured in the norm
/// `√(Δλ² + ‖Δu‖²_{L²(B₁)})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationControls {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Arclength width of the final fold bracket.
    pub fold_tol: f64,
    /// Stop once `λ` reaches this value (no fold expected beyond it).
    pub lambda_max: f64,
    pub max_points: usize,
}

impl Default for ContinuationControls {
    fn default() -> Self {
        ContinuationControls {
            initial_step: 0.05,
            min_step: 1e-9,
            max_step: 0.25,
            fold_tol: 1e-7,
            lambda_max: f64::INFINITY,
            max_points: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub lambda: f64,
    pub state: RadialFunction,
    pub sup_norm: f64,
    pub mu1: f64,
    pub arclength: f64,
    pub boundary_exponent: Option<f64>,
}

/// One serialized row of a branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub lambda: f64,
    pub sup_norm: f64,
    pub mu1: f64,
    pub boundary_exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub lambda_star: Option<f64>,
    pub fold_found: bool,
}

impl Branch {
    pub fn records(&self) -> Vec<BranchRecord> {
        self.points
            .iter()
            .map(|p| BranchRecord {
                lambda: p.lambda,
                sup_norm: p.sup_norm,
                mu1: p.mu1,
                boundary_exponent: p.boundary_exponent,
            })
            .collect()
    }

    /// Accepted point whose `λ` is closest to `lambda`.
    pub fn nearest(&self, lambda: f64) -> Option<&BranchPoint> {
        self.points
            .iter()
            .min_by(|a, b| (a.lambda - lambda).abs().total_cmp(&(b.lambda - lambda).abs()))
    }
}

struct Continuation<'a> {
    op: &'a DiscreteOperator,
    f: &'a dyn Nonlinearity,
}

#[derive(Clone)]
struct State {
    lambda: f64,
    u: DVector<f64>,
    /// Unit tangent `(t_λ, t_u)`.
    t_lambda: f64,
    t_u: DVector<f64>,
}

impl Continuation<'_> {
    fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.iter().zip(b.iter()).zip(self.op.weights().iter()).map(|((x, y), w)| w * x * y).sum()
    }

    /// Bordered matrix `[J, -W f(u); t_uᵀW, t_λ]`.
    fn bordered(&self, lambda: f64, u: &DVector<f64>, t_lambda: f64, t_u: &DVector<f64>) -> DMatrix<f64> {
        let m = u.len();
        let mut b = DMatrix::zeros(m + 1, m + 1);
        b.view_mut((0, 0), (m, m)).copy_from(&jacobian(self.op, self.f, lambda, u));
        for i in 0..m {
            let w = self.op.weights()[i];
            b[(i, m)] = -w * self.f.value(u[i]);
            b[(m, i)] = w * t_u[i];
        }
        b[(m, m)] = t_lambda;
        b
    }

    /// Tangent at `(λ, u)` oriented along the previous tangent.
    fn tangent(&self, lambda: f64, u: &DVector<f64>, prev_lambda: f64, prev_u: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let m = u.len();
        let b = self.bordered(lambda, u, prev_lambda, prev_u);
        let mut rhs = DVector::zeros(m + 1);
        rhs[m] = 1.0;
        let z = b.lu().solve(&rhs)?;
        let (tl, tu) = (z[m], z.rows(0, m).into_owned());
        let norm = (tl * tl + self.inner(&tu, &tu)).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        Some((tl / norm, tu / norm))
    }

    /// Predictor–corrector step of length `ds` from `from`.
    fn step(&self, from: &State, ds: f64) -> Option<State> {
        let m = from.u.len();
        let mut lambda = from.lambda + ds * from.t_lambda;
        let mut u = &from.u + &from.t_u * ds;
        for _ in 0..CORRECTOR_MAX_ITER {
            let r = residual(self.op, self.f, lambda, &u);
            let du = &u - &from.u;
            let g = from.t_lambda * (lambda - from.lambda) + self.inner(&from.t_u, &du) - ds;
            let res = residual_norm(self.op, &r);
            if !res.is_finite() {
                return None;
            }
            if res <= tolerance(lambda) && g.abs() <= 1e-12 * (1.0 + ds) {
                let (tl, tu) = self.tangent(lambda, &u, from.t_lambda, &from.t_u)?;
                return Some(State {
                    lambda,
                    u,
                    t_lambda: tl,
                    t_u: tu,
                });
            }
            let b = self.bordered(lambda, &u, from.t_lambda, &from.t_u);
            let mut rhs = DVector::zeros(m + 1);
            rhs.rows_mut(0, m).copy_from(&(-r));
            rhs[m] = -g;
            let z = b.lu().solve(&rhs)?;
            u += z.rows(0, m);
            lambda += z[m];
        }
        None
    }
}

/// Continues the solution branch from `(0, 0)` until the fold, `λ_max`, or
/// step underflow.
pub fn continue_branch(
    op: &DiscreteOperator,
    f: &dyn Nonlinearity,
    controls: &ContinuationControls,
) -> Result<Branch> {
    check_nonlinearity(f)?;
    if !(controls.initial_step > 0.0 && controls.min_step > 0.0 && controls.max_step >= controls.min_step) {
        return Err(FracError::domain("continuation steps must be positive with min <= max"));
    }
    if !(controls.lambda_max >= 0.0) {
        return Err(FracError::domain("lambda_max must be >= 0"));
    }
    let m = op.dim();
    let cont = Continuation { op, f };
    let zero = DVector::zeros(m);
    let make_point = |lambda: f64, u: &DVector<f64>, arclength: f64| -> Result<BranchPoint> {
        let state = op.extend_by_zero(u)?;
        let mu1 = principal_eigenvalue_at(op, f, lambda, u)?;
        let boundary_exponent = if u.iter().all(|&v| v > 0.0) {
            boundary_exponent(&state).ok()
        } else {
            None
        };
        Ok(BranchPoint {
            lambda,
            sup_norm: u.amax(),
            state,
            mu1,
            arclength,
            boundary_exponent,
        })
    };

    let mut points = vec![make_point(0.0, &zero, 0.0)?];
    if controls.lambda_max == 0.0 {
        return Ok(Branch {
            points,
            lambda_star: None,
            fold_found: false,
        });
    }
    // Initial tangent: J t_u = W f(0) t_λ at λ = 0.
    let rhs = DVector::from_iterator(m, (0..m).map(|i| op.weights()[i] * f.value(0.0)));
    let dir = op
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| FracError::domain("stiffness matrix is not positive definite"))?
        .solve(&rhs);
    let norm = (1.0 + cont.inner(&dir, &dir)).sqrt();
    let mut current = State {
        lambda: 0.0,
        u: zero.clone(),
        t_lambda: 1.0 / norm,
        t_u: dir / norm,
    };
    let mut arclength = 0.0;
    let mut ds = controls.initial_step.min(controls.max_step);

    while points.len() < controls.max_points {
        let Some(next) = cont.step(&current, ds) else {
            ds *= 0.5;
            if ds < controls.min_step {
                break;
            }
            continue;
        };
        if next.lambda >= controls.lambda_max && next.t_lambda > 0.0 {
            // Land exactly on λ_max with a natural-parameter solve.
            let frac = (controls.lambda_max - current.lambda) / (next.lambda - current.lambda);
            let guess = &current.u + (&next.u - &current.u) * frac;
            let init = op.extend_by_zero(&guess)?;
            let sol = newton_solve(op, f, controls.lambda_max, &init)?;
            let u = op.interior(&sol)?;
            let du = &u - &current.u;
            let dl = controls.lambda_max - current.lambda;
            arclength += (dl * dl + cont.inner(&du, &du)).sqrt();
            points.push(make_point(controls.lambda_max, &u, arclength)?);
            return Ok(Branch {
                points,
                lambda_star: None,
                fold_found: false,
            });
        }
        if next.t_lambda <= 0.0 {
            // Fold between `current` (t_λ > 0) and `next`; bisect in
            // arclength on the sign of t_λ.
            let (mut lo, mut hi) = (0.0, ds);
            let mut lo_state = current.clone();
            let mut hi_lambda = next.lambda;
            while hi - lo > controls.fold_tol {
                let mid = 0.5 * (lo + hi);
                match cont.step(&current, mid) {
                    Some(s) if s.t_lambda > 0.0 => {
                        lo = mid;
                        lo_state = s;
                    }
                    Some(s) => {
                        hi = mid;
                        hi_lambda = s.lambda;
                    }
                    None => break,
                }
            }
            if lo > 0.0 {
                points.push(make_point(lo_state.lambda, &lo_state.u, arclength + lo)?);
            }
            let lambda_star = lo_state.lambda.max(hi_lambda);
            return Ok(Branch {
                points,
                lambda_star: Some(lambda_star),
                fold_found: true,
            });
        }
        arclength += ds;
        points.push(make_point(next.lambda, &next.u, arclength)?);
        current = next;
        ds = (ds * 1.5).min(controls.max_step);
    }
    Ok(Branch {
        points,
        lambda_star: None,
        fold_found: false,
    })
}

/// Symmetric form `W^{-1/2}(A - λ W diag f'(u))W^{-1/2}` of the
/// linearized pencil.
pub fn linearized_matrix(op: &DiscreteOperator, f: &dyn Nonlinearity, lambda: f64, u: &DVector<f64>) -> DMatrix<f64> {
    let m = u.len();
    let sq: Vec<f64> = op.weights().iter().map(|w| w.sqrt()).collect();
    let mut b = op.matrix().clone();
    for i in 0..m {
        for j in 0..m {
            b[(i, j)] /= sq[i] * sq[j];
        }
        b[(i, i)] -= lambda * f.derivative(u[i]);
    }
    b
}

/// Smallest eigenvalue and its eigenvector (in the `W`-weighted
/// coordinates `W^{1/2}ξ`) of a symmetric matrix. A dense decomposition
/// locates the bottom of the spectrum; inverse iteration just below it and
/// Rayleigh-quotient steps refine the pair, and a Cholesky factorization
/// certifies that no eigenvalue lies below the result.
pub fn smallest_eigenpair(b: &DMatrix<f64>, lower_bound: f64) -> Result<(f64, DVector<f64>)> {
    let m = b.nrows();
    let scale = b.amax().max(1.0);
    let dense = SymmetricEigen::new(b.clone());
    let k = dense.eigenvalues.imin();
    let guess = dense.eigenvalues[k].max(lower_bound);
    let mut x: DVector<f64> = dense.eigenvectors.column(k).into_owned();
    // Dense eigenvalues carry an absolute error ~ eps‖B‖.
    let mut shift = guess - 1e-12 * scale - 1e-9 * (1.0 + guess.abs());
    let mut lu = (b - DMatrix::identity(m, m) * shift).lu();
    let mut refining = false;
    let mut last = f64::INFINITY;
    for _ in 0..EIGEN_MAX_ITER {
        let Some(y) = lu.solve(&x) else {
            break;
        };
        let norm = y.norm();
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        x = y / norm;
        let bx = b * &x;
        let rq = x.dot(&bx);
        let res = (&bx - &x * rq).norm();
        let size = 1.0 + rq.abs();
        let change = (rq - last).abs();
        if res <= 1e-13 * size || (refining && change <= 1e-15 * size) || res <= 1e-15 * scale {
            let below = b - DMatrix::identity(m, m) * (rq - 1e-9 * size);
            if below.cholesky().is_none() {
                return Err(FracError::accuracy(
                    "principal eigenvalue: converged to a non-minimal eigenvalue",
                    rq,
                    guess,
                ));
            }
            return Ok((rq, x));
        }
        last = rq;
        if !refining && (res <= 1e-6 * size || change <= 1e-9 * size) {
            refining = true;
        }
        if refining {
            shift = rq;
            lu = (b - DMatrix::identity(m, m) * shift).lu();
        }
    }
    Err(FracError::accuracy("principal eigenvalue: inverse iteration did not converge", last, 1e-13))
}

fn principal_eigenvalue_at(op: &DiscreteOperator, f: &dyn Nonlinearity, lambda: f64, u: &DVector<f64>) -> Result<f64> {
    let b = linearized_matrix(op, f, lambda, u);
    // A is positive definite, so -λ max f'(u) bounds the spectrum below.
    let lower = -lambda * u.iter().map(|&v| f.derivative(v)).fold(0.0, f64::max);
    smallest_eigenpair(&b, lower).map(|(mu, _)| mu)
}

/// `μ₁` of the pencil `(A - λ W diag f'(u), W)` at a branch point.
pub fn principal_eigenvalue(op: &DiscreteOperator, f: &dyn Nonlinearity, point: &BranchPoint) -> Result<f64> {
    let u = op.interior(&point.state)?;
    principal_eigenvalue_at(op, f, point.lambda, &u)
}

/// Principal eigenvector `ξ` (nodal values, `Σ w_i ξ_i² = 1`).
pub fn principal_eigenvector(op: &DiscreteOperator, f: &dyn Nonlinearity, point: &BranchPoint) -> Result<(f64, DVector<f64>)> {
    let u = op.interior(&point.state)?;
    let b = linearized_matrix(op, f, point.lambda, &u);
    let lower = -point.lambda * u.iter().map(|&v| f.derivative(v)).fold(0.0, f64::max);
    let (mu, y) = smallest_eigenpair(&b, lower)?;
    let mut xi = y.component_div(&op.weights().map(|w| w.sqrt()));
    if xi.sum() < 0.0 {
        xi = -xi;
    }
    Ok((mu, xi))
}

/// Least-squares slope of `ln u` against `ln(1 - ρ)` over the nodes with
/// `1 - ρ` within a factor ten of the smallest positive distance.
pub fn boundary_exponent(state: &RadialFunction) -> Result<f64> {
    let nodes = state.nodes();
    let values = state.values();
    let delta_min = nodes
        .iter()
        .map(|r| 1.0 - r)
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let pts: Vec<(f64, f64)> = nodes
        .iter()
        .zip(values)
        .filter(|(r, v)| {
            let d = 1.0 - **r;
            d > 0.0 && d <= 10.0 * delta_min * (1.0 + 1e-12) && **v > 0.0
        })
        .map(|(r, v)| ((1.0 - r).ln(), v.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(FracError::accuracy(
            "boundary_exponent: too few usable nodes in the last decade",
            pts.len() as f64,
            4.0,
        ));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

/// Whether consecutive nodal values are non-increasing up to `1e-10`
/// relative slack.
pub fn monotonicity_check(state: &RadialFunction) -> bool {
    let v = state.values();
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    v.windows(2).all(|w| w[1] <= w[0] + 1e-10 * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_exponent_of_powers() {
        let mut nodes: Vec<f64> = (0..50).map(|k| 0.9 * k as f64 / 50.0).collect();
        let mut d = 0.1;
        while d > 1e-5 {
            nodes.push(1.0 - d);
            d *= 0.85;
        }
        nodes.push(1.0);
        let u = RadialFunction::sample(nodes.clone(), |r| (1.0 - r * r).max(0.0).powf(0.3)).unwrap();
        assert!((boundary_exponent(&u).unwrap() - 0.3).abs() < 1e-3);
        let u = RadialFunction::sample(nodes, |r| (1.0 - r * r).max(0.0)).unwrap();
        assert!((boundary_exponent(&u).unwrap() - 1.0).abs() < 1e-3);
        let coarse = RadialFunction::sample(vec![0.0, 0.5, 1.0], |r| 1.0 - r).unwrap();
        assert!(boundary_exponent(&coarse).is_err());
    }

    #[test]
    fn monotonicity_detects_inversions() {
        let z = RadialFunction::zeros(vec![0.0, 0.5, 1.0]).unwrap();
        assert!(monotonicity_check(&z));
        let bad = RadialFunction::new(vec![0.0, 0.3, 0.6, 1.0], vec![1.0, 0.5, 0.6, 0.0]).unwrap();
        assert!(!monotonicity_check(&bad));
    }

    #[test]
    fn builtins_satisfy_hypotheses() {
        for f in [Builtin::Exp, Builtin::Power { p: 3.0 }, Builtin::Constant] {
            assert!(check_nonlinearity(&f).is_ok());
        }
        assert!(check_nonlinearity(&Builtin::Power { p: -1.0 }).is_err());
    }
}
