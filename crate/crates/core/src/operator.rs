//! Radial discretization of the Dirichlet fractional Laplacian on `B₁`.
//!
//! Continuous piecewise-linear hat functions `φ_i` on the grid, with the
//! node at `ρ = 1` fixed to zero. The stiffness matrix is the energy form
//!
//! ```text
//! A_ij = (c/2) ∫∫_{B₁×B₁} (φ_i(x)-φ_i(z))(φ_j(x)-φ_j(z)) |x-z|^{-n-2s}
//!      + c ∫_{B₁} φ_i φ_j κ(x),      κ(x) = ∫_{|z|>1} |x-z|^{-n-2s} dz,
//! ```
//!
//! reduced to `(ρ, ρ')` with the angular kernel of [`crate::kernel`]. The
//! discrete operator is `W⁻¹A` with the lumped mass `W`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{FracError, Result};
use crate::kernel::Sphere;
use crate::numerics::{normalizations, sphere_area, Params};
use crate::profile::{RadialFunction, RadialProfile};
use crate::quad::{gauss_legendre, gl_panels, graded_toward, peak_breakpoints, power_tail};

const PAIR_ORDER: usize = 8;
const DIAG_LEVELS: usize = 16;
const T_FLOOR: f64 = 1e-9;

/// Assembled stiffness matrix and lumped mass on a fixed grid.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    params: Params,
    nodes: Vec<f64>,
    matrix: DMatrix<f64>,
    weights: DVector<f64>,
}

impl DiscreteOperator {
    pub fn params(&self) -> &Params {
        &self.params
    }

    /// All grid nodes including the boundary node `ρ = 1`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of unknowns (interior nodes).
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// The symmetric stiffness matrix `A`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lumped mass `w_i = ∫ φ_i dx`.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// `W⁻¹ A u`, the discrete `(-Δ)^s u` at the interior nodes.
    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        (&self.matrix * u).component_div(&self.weights)
    }

    /// `ξᵀAξ`, the discrete `⟦ξ⟧²_{H^s}`.
    pub fn energy(&self, xi: &DVector<f64>) -> f64 {
        xi.dot(&(&self.matrix * xi))
    }

    /// `Σ w_i ξ_i²`.
    pub fn mass(&self, xi: &DVector<f64>) -> f64 {
        xi.iter().zip(self.weights.iter()).map(|(x, w)| w * x * x).sum()
    }

    /// Interior nodal values of a profile.
    pub fn restrict<P: RadialProfile + ?Sized>(&self, u: &P) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.nodes[..self.dim()].iter().map(|&r| u.value(r)))
    }

    /// Grid function with the boundary value appended.
    pub fn extend_by_zero(&self, u: &DVector<f64>) -> Result<RadialFunction> {
        if u.len() != self.dim() {
            return Err(FracError::domain(format!(
                "vector of length {} on a grid with {} unknowns",
                u.len(),
                self.dim()
            )));
        }
        let mut values: Vec<f64> = u.iter().copied().collect();
        values.push(0.0);
        RadialFunction::new(self.nodes.clone(), values)
    }

    /// Interior values of a grid function on this grid.
    pub fn interior(&self, u: &RadialFunction) -> Result<DVector<f64>> {
        if u.nodes() != self.nodes.as_slice() {
            return Err(FracError::domain("state does not live on the operator grid"));
        }
        Ok(DVector::from_column_slice(&u.values()[..self.dim()]))
    }
}

/// Local node indices `[e, e+1, f, f+1]` with the shared node merged.
struct PairDofs {
    ids: [usize; 4],
    count: usize,
    /// Local slot of the right node of `f`; the left node of `f` sits in
    /// `slot_f`.
    slot_f: usize,
}

impl PairDofs {
    fn new(e: usize, f: usize) -> Self {
        if f == e + 1 {
            PairDofs {
                ids: [e, e + 1, e + 2, usize::MAX],
                count: 3,
                slot_f: 1,
            }
        } else {
            PairDofs {
                ids: [e, e + 1, f, f + 1],
                count: 4,
                slot_f: 2,
            }
        }
    }
}

struct Assembler<'a> {
    nodes: &'a [f64],
    sphere: Sphere,
    area: f64,
    mu: f64,
    pow: i32,
    s: f64,
    /// Subdivision depth at which the dropped corner of a touching pair,
    /// `O(2^{-depth(3-2s)})` relative, is below `1e-12`.
    max_depth: usize,
}

impl Assembler<'_> {
    /// `G(ρ, ρ') = |S^{n-1}| ρ^{n-1} ρ'^{n-1} ∫_{S^{n-1}} |ρe - ρ'σ|^{-n-2s} dσ`
    fn g(&self, r: f64, rp: f64) -> f64 {
        if (r == 0.0 || rp == 0.0) && self.pow > 0 {
            return 0.0;
        }
        let ln_factor = if self.pow == 0 { 0.0 } else { self.pow as f64 * (r * rp).ln() };
        self.area * self.sphere.power_mean_times(ln_factor, r, rp, 0.0, self.mu)
    }

    fn basis(&self, e: usize, r: f64) -> (f64, f64) {
        let (a, b) = (self.nodes[e], self.nodes[e + 1]);
        let h = b - a;
        ((b - r) / h, (r - a) / h)
    }

    /// Tensor Gauss–Legendre over `[a,b]×[c,d]` inside elements `e`, `f`.
    fn tensor(&self, e: usize, f: usize, dofs: &PairDofs, x: (f64, f64), z: (f64, f64), out: &mut [[f64; 4]; 4]) {
        let rule = gauss_legendre(PAIR_ORDER);
        let (cx, hx) = (0.5 * (x.0 + x.1), 0.5 * (x.1 - x.0));
        let (cz, hz) = (0.5 * (z.0 + z.1), 0.5 * (z.1 - z.0));
        for (xi, wi) in rule.nodes.iter().zip(&rule.weights) {
            let r = cx + hx * xi;
            let (pl, pr) = self.basis(e, r);
            for (zj, wj) in rule.nodes.iter().zip(&rule.weights) {
                let rp = cz + hz * zj;
                let (ql, qr) = self.basis(f, rp);
                let mut delta = [pl, pr, 0.0, 0.0];
                delta[dofs.slot_f] -= ql;
                delta[dofs.slot_f + 1] -= qr;
                let w = wi * wj * hx * hz * self.g(r, rp);
                #[allow(clippy::needless_range_loop)]
                for k in 0..dofs.count {
                    for l in k..dofs.count {
                        out[k][l] += w * delta[k] * delta[l];
                    }
                }
            }
        }
    }

    /// Recursive subdivision until sub-rectangles are well separated
    /// relative to their size. Touching elements go through
    /// [`Assembler::adjacent`] instead; `max_depth` is a safeguard.
    #[allow(clippy::too_many_arguments)]
    fn rect(
        &self,
        e: usize,
        f: usize,
        dofs: &PairDofs,
        x: (f64, f64),
        z: (f64, f64),
        depth: usize,
        out: &mut [[f64; 4]; 4],
    ) {
        let gap = (z.0 - x.1).max(x.0 - z.1).max(0.0);
        let (lx, lz) = (x.1 - x.0, z.1 - z.0);
        let size = lx.max(lz);
        if gap >= size {
            self.tensor(e, f, dofs, x, z, out);
            return;
        }
        if depth >= self.max_depth {
            return;
        }
        let split_x = lx > 0.5 * size;
        let split_z = lz > 0.5 * size;
        let xs = if split_x {
            let m = 0.5 * (x.0 + x.1);
            vec![(x.0, m), (m, x.1)]
        } else {
            vec![x]
        };
        let zs = if split_z {
            let m = 0.5 * (z.0 + z.1);
            vec![(z.0, m), (m, z.1)]
        } else {
            vec![z]
        };
        for &xx in &xs {
            for &zz in &zs {
                self.rect(e, f, dofs, xx, zz, depth + 1, out);
            }
        }
    }

    /// Touching elements `e = [a, b]`, `f = [b, c]`: Duffy coordinates
    /// centred on the shared corner `(b, b)`, where the integrand behaves
    /// like `|ρ - ρ'|^{1-2s}`. With `ρ = b - u`, `ρ' = b + v`, each of the
    /// two triangles `u/X ≷ v/Z` is parametrized by `r ∈ [0,1]` along the
    /// diagonal and `w ∈ [0,1]` across it, and `r = τ^{1/(3-2s)}` absorbs
    /// the leading singularity.
    fn adjacent(&self, e: usize, out: &mut [[f64; 4]; 4]) {
        let (a, b, c) = (self.nodes[e], self.nodes[e + 1], self.nodes[e + 2]);
        let (x_len, z_len) = (b - a, c - b);
        let p = 1.0 / (3.0 - 2.0 * self.s);
        let tau_breaks: Vec<f64> = {
            let mut v: Vec<f64> = (0..=DIAG_LEVELS).rev().map(|k| 0.5f64.powi(k as i32)).collect();
            v.insert(0, 0.0);
            v
        };
        let rule = gauss_legendre(PAIR_ORDER);
        for tw in tau_breaks.windows(2) {
            let (ct, ht) = (0.5 * (tw[0] + tw[1]), 0.5 * (tw[1] - tw[0]));
            for (ti, wti) in rule.nodes.iter().zip(&rule.weights) {
                let tau = ct + ht * ti;
                let r = tau.powf(p);
                let dr = p * tau.powf(p - 1.0);
                for (wj, wwj) in rule.nodes.iter().zip(&rule.weights) {
                    let w = 0.5 * (1.0 + wj);
                    let weight = wti * ht * 0.5 * wwj * dr * x_len * z_len * r;
                    for (u, v) in [(x_len * r, z_len * r * w), (x_len * r * w, z_len * r)] {
                        let (rho, rho_p) = (b - u, b + v);
                        // φ_e, φ_{e+1} at ρ ∈ e minus φ_{e+1}, φ_{e+2} at ρ' ∈ f
                        let delta = [u / x_len, 1.0 - u / x_len - (1.0 - v / z_len), -v / z_len];
                        let g = weight * self.g(rho, rho_p);
                        for k in 0..3 {
                            for l in k..3 {
                                out[k][l] += g * delta[k] * delta[l];
                            }
                        }
                    }
                }
            }
        }
    }

    /// `∫∫_{e×e} (ρ - ρ')² G(ρ, ρ')`, via `t = ρ' - ρ` and the substitution
    /// `t = h τ^{1/(2-2s)}` which absorbs the `t^{1-2s}` singularity.
    fn diagonal(&self, e: usize) -> f64 {
        let (a, b) = (self.nodes[e], self.nodes[e + 1]);
        let h = b - a;
        let p = 1.0 / (2.0 - 2.0 * self.s);
        let tau_breaks: Vec<f64> = {
            let mut v: Vec<f64> = (0..=DIAG_LEVELS).rev().map(|k| 0.5f64.powi(k as i32)).collect();
            v.insert(0, 0.0);
            v
        };
        let inner = |t: f64| -> f64 {
            let hi = b - t;
            let breaks = if a == 0.0 {
                // G(ρ, ρ+t) changes character at ρ ~ t near the origin.
                peak_breakpoints(0.0, hi, 0.0, t, &[])
            } else {
                vec![a, hi]
            };
            gl_panels(|r| self.g(r, r + t), &breaks, PAIR_ORDER)
        };
        // Below t_floor the leading behaviour K t^{-1-2s} is exact to
        // O(t/h); evaluating the angular integral there would overflow.
        let t_floor = T_FLOOR * h;
        let at_floor = inner(t_floor);
        let inner_asym = |t: f64| {
            if t < t_floor {
                at_floor * (t_floor / t).powf(1.0 + 2.0 * self.s)
            } else {
                inner(t)
            }
        };
        let integral = gl_panels(
            |tau| {
                let t = h * tau.powf(p);
                let dt = h * p * tau.powf(p - 1.0);
                t * t * inner_asym(t) * dt
            },
            &tau_breaks,
            PAIR_ORDER,
        );
        2.0 * integral
    }

    /// `κ(ρ) = ∫_1^∞ ρ'^{n-1} ∫_{S^{n-1}} |ρe - ρ'σ|^{-n-2s} dσ dρ'`.
    fn kappa(&self, r: f64) -> f64 {
        // ρ'^{n-1}|ρe - ρ'σ|^{-n-2s} = ρ'^{-1-2s}|(ρ/ρ')e - σ|^{-n-2s}
        let f = |rp: f64| rp.powf(-1.0 - 2.0 * self.s) * self.sphere.power_mean(r / rp, 1.0, 0.0, self.mu);
        let breaks = peak_breakpoints(1.0, 2.0, 1.0, 1.0 - r, &[]);
        let near = gl_panels(f, &breaks, 10);
        let far = power_tail(f, 2.0, 2.0 * self.s, 1e-12, 0.0).value;
        near + far
    }

    /// `∫_e φ_k φ_l |S| ρ^{n-1} κ(ρ) dρ` for the two nodes of element `e`.
    fn exterior(&self, e: usize) -> [[f64; 2]; 2] {
        let (a, b) = (self.nodes[e], self.nodes[e + 1]);
        let breaks = if b >= 1.0 { graded_toward(a, b, 30) } else { vec![a, b] };
        let mut out = [[0.0; 2]; 2];
        let rule = gauss_legendre(PAIR_ORDER);
        for w in breaks.windows(2) {
            let (c, hh) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
                let r = c + hh * x;
                let (pl, pr) = self.basis(e, r);
                let v = wt * hh * self.area * r.powi(self.pow) * self.kappa(r);
                out[0][0] += v * pl * pl;
                out[0][1] += v * pl * pr;
                out[1][1] += v * pr * pr;
            }
        }
        out[1][0] = out[0][1];
        out
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 3 {
        return Err(FracError::domain("grid needs at least two elements"));
    }
    if grid[0] != 0.0 || *grid.last().unwrap() != 1.0 {
        return Err(FracError::domain("grid must run from 0 to 1"));
    }
    if let Some(w) = grid.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(FracError::domain(format!(
            "grid nodes must be strictly increasing (found {} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

pub fn assemble(params: &Params, grid: &[f64]) -> Result<DiscreteOperator> {
    params.require_solver_dimension()?;
    validate_grid(grid)?;
    let n = params.n();
    let s = params.s();
    let c = normalizations(params).c_ns;
    let m = grid.len() - 1;
    let asm = Assembler {
        nodes: grid,
        sphere: Sphere::new(n),
        area: sphere_area(n),
        mu: 0.5 * (params.dim() + 2.0 * s),
        pow: n as i32 - 1,
        s,
        max_depth: (40.0 / (3.0 - 2.0 * s)).ceil() as usize,
    };

    // Each element pair (e, f) with e ≤ f touches at most four unknowns.
    let blocks: Vec<Vec<(usize, usize, f64)>> = (0..m)
        .into_par_iter()
        .map(|e| {
            let mut entries = Vec::new();
            let mut push = |i: usize, j: usize, v: f64| {
                if i < m && j < m && v != 0.0 {
                    entries.push((i, j, v));
                }
            };
            let h = grid[e + 1] - grid[e];
            let d = c * 0.5 * asm.diagonal(e) / (h * h);
            push(e, e, d);
            push(e + 1, e + 1, d);
            push(e, e + 1, -d);
            // Row-sum lumping keeps the off-diagonal entries non-positive.
            let ext = asm.exterior(e);
            push(e, e, c * (ext[0][0] + ext[0][1]));
            push(e + 1, e + 1, c * (ext[1][0] + ext[1][1]));
            for f in e + 1..m {
                let dofs = PairDofs::new(e, f);
                let mut local = [[0.0; 4]; 4];
                if f == e + 1 {
                    asm.adjacent(e, &mut local);
                } else {
                    asm.rect(e, f, &dofs, (grid[e], grid[e + 1]), (grid[f], grid[f + 1]), 0, &mut local);
                }
                #[allow(clippy::needless_range_loop)]
                for k in 0..dofs.count {
                    for l in k..dofs.count {
                        // (e, f) and (f, e) contribute equally.
                        push(dofs.ids[k], dofs.ids[l], c * local[k][l]);
                    }
                }
            }
            entries
        })
        .collect();

    let mut matrix = DMatrix::zeros(m, m);
    for (i, j, v) in blocks.into_iter().flatten() {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        matrix[(i, j)] += v;
    }
    for i in 0..m {
        for j in 0..i {
            matrix[(i, j)] = matrix[(j, i)];
        }
    }

    let area = sphere_area(n);
    let pow = n as i32 - 1;
    let mut weights = DVector::zeros(m);
    for e in 0..m {
        let (a, b) = (grid[e], grid[e + 1]);
        let h = b - a;
        let left = gl_panels(|r| (b - r) / h * r.powi(pow), &[a, b], PAIR_ORDER);
        let right = gl_panels(|r| (r - a) / h * r.powi(pow), &[a, b], PAIR_ORDER);
        weights[e] += area * left;
        if e + 1 < m {
            weights[e + 1] += area * right;
        }
    }

    Ok(DiscreteOperator {
        params: *params,
        nodes: grid.to_vec(),
        matrix,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::GridSpec;

    #[test]
    fn rejects_bad_grids() {
        let p = Params::new(2, 0.5).unwrap();
        assert!(assemble(&p, &[0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(assemble(&p, &[0.0, 0.6, 0.5, 1.0]).is_err());
        assert!(assemble(&p, &[0.1, 0.5, 1.0]).is_err());
        let p1 = Params::new(1, 0.5).unwrap();
        assert!(assemble(&p1, &[0.0, 0.5, 1.0]).is_err());
    }

    #[test]
    fn kappa_at_origin() {
        let p = Params::new(3, 0.4).unwrap();
        let grid = GridSpec::new(40).build().unwrap();
        let asm = Assembler {
            nodes: &grid,
            sphere: Sphere::new(3),
            area: sphere_area(3),
            mu: 0.5 * (3.0 + 0.8),
            pow: 2,
            s: p.s(),
            max_depth: 20,
        };
        let want = sphere_area(3) / 0.8;
        assert!(((asm.kappa(0.0) - want) / want).abs() < 1e-10);
    }

    #[test]
    fn symmetric_with_positive_diagonal() {
        let p = Params::new(2, 0.5).unwrap();
        let op = assemble(&p, &GridSpec::new(40).build().unwrap()).unwrap();
        let a = op.matrix();
        assert_eq!(a, &a.transpose());
        assert!((0..op.dim()).all(|i| a[(i, i)] > 0.0));
        for i in 0..op.dim() {
            for j in 0..op.dim() {
                assert!(i == j || a[(i, j)] <= 0.0, "({i},{j}) = {}", a[(i, j)]);
            }
        }
        let ones = DVector::from_element(op.dim(), 1.0);
        assert!(op.apply(&ones).iter().all(|&v| v > 0.0));
        let zero = DVector::zeros(op.dim());
        assert_eq!(op.apply(&zero), zero);
    }
}
