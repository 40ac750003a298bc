//! Compatible finite-volume operators on the torus.
//!
//! Scalars live on cells and gradients on edges (faces). The energy form
//! `B(p, q) ≈ ∫ p·a q` acts on edge fields; in one dimension it samples `a` at
//! face midpoints, in two dimensions it uses a vertex quadrature that couples
//! the x- and y-edges meeting at each vertex through `a₁₂`. Every derived
//! operator is assembled from the same three pieces (gradient, `A`, and its
//! adjoint divergence), so discrete integration by parts holds exactly.

use super::grid::TorusGrid;
use super::solver::{bicgstab, cg_mean_zero};
use super::PdeError;
use crate::environment::{EnvKind, Environment};
use crate::functional::{FunctionalKind, FunctionalSpec};
use crate::tensor::Sym2;

const TOL: f64 = 1e-12;

/// Values on x-edges and (in two dimensions) y-edges.
///
/// x-edge `(i, j)` sits between cells `(i, j)` and `(i+1, j)`; y-edge `(i, j)`
/// between `(i, j)` and `(i, j+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeField {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl EdgeField {
    pub fn axpy(&mut self, s: f64, other: &EdgeField) {
        self.x.iter_mut().zip(&other.x).for_each(|(a, b)| *a += s * b);
        self.y.iter_mut().zip(&other.y).for_each(|(a, b)| *a += s * b);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    /// Direct flux sweeps in one dimension, Krylov in two.
    Auto,
    /// Krylov methods in every dimension.
    Iterative,
}

#[derive(Clone, Debug)]
pub struct Discretization {
    pub grid: TorusGrid,
    solver: SolverKind,
    /// One dimension: `a` at face `i+½`.
    face: Vec<f64>,
    /// Two dimensions: `a` at vertex `(i+½, j+½)`.
    vert: Vec<Sym2>,
}

impl Discretization {
    pub fn new(env: &Environment, grid: TorusGrid) -> Result<Self, PdeError> {
        if env.kind() == EnvKind::RandomBumps {
            return Err(PdeError::NotPeriodic);
        }
        if env.dim() != grid.dim {
            return Err(PdeError::BadGrid("grid and environment dimensions differ".into()));
        }
        let h = grid.h();
        let mut face = Vec::new();
        let mut vert = Vec::new();
        if grid.dim == 1 {
            face = (0..grid.n).map(|i| env.a(&[(i + 1) as f64 * h, 0.0]).xx).collect();
        } else {
            vert = (0..grid.cells())
                .map(|v| {
                    let (i, j) = grid.coords(v);
                    env.a(&[(i + 1) as f64 * h, (j + 1) as f64 * h])
                })
                .collect();
        }
        Ok(Discretization { grid, solver: SolverKind::Auto, face, vert })
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self
    }

    fn n(&self) -> usize {
        self.grid.n
    }

    fn xp(&self, i: usize, j: usize) -> usize {
        self.grid.index((i + 1) % self.n(), j)
    }

    fn yp(&self, i: usize, j: usize) -> usize {
        self.grid.index(i, (j + 1) % self.n())
    }

    pub fn zero_edges(&self) -> EdgeField {
        let m = self.grid.cells();
        EdgeField { x: vec![0.0; m], y: vec![0.0; if self.grid.dim == 2 { m } else { 0 }] }
    }

    /// Constant edge field of the unit vector `e_k`.
    pub fn unit_edges(&self, k: usize) -> EdgeField {
        let mut e = self.zero_edges();
        if k == 0 {
            e.x.iter_mut().for_each(|v| *v = 1.0);
        } else {
            e.y.iter_mut().for_each(|v| *v = 1.0);
        }
        e
    }

    pub fn grad(&self, u: &[f64]) -> EdgeField {
        let inv_h = 1.0 / self.grid.h();
        let mut g = self.zero_edges();
        for c in 0..self.grid.cells() {
            let (i, j) = self.grid.coords(c);
            g.x[c] = (u[self.xp(i, j)] - u[c]) * inv_h;
            if self.grid.dim == 2 {
                g.y[c] = (u[self.yp(i, j)] - u[c]) * inv_h;
            }
        }
        g
    }

    /// Edge field `p ↦ A p` with `B(p, q) = h^d Σ_e (A p)_e q_e`.
    pub fn apply_a(&self, p: &EdgeField) -> EdgeField {
        let mut out = self.zero_edges();
        if self.grid.dim == 1 {
            for (e, v) in out.x.iter_mut().enumerate() {
                *v = self.face[e] * p.x[e];
            }
            return out;
        }
        for v in 0..self.grid.cells() {
            let (i, j) = self.grid.coords(v);
            let a = self.vert[v];
            let (x1, x2) = (v, self.yp(i, j));
            let (y1, y2) = (v, self.xp(i, j));
            let pp = 0.5 * (p.x[x1] + p.x[x2]);
            let qq = 0.5 * (p.y[y1] + p.y[y2]);
            out.x[x1] += 0.5 * (a.xx * p.x[x1] + a.xy * qq);
            out.x[x2] += 0.5 * (a.xx * p.x[x2] + a.xy * qq);
            out.y[y1] += 0.5 * (a.yy * p.y[y1] + a.xy * pp);
            out.y[y2] += 0.5 * (a.yy * p.y[y2] + a.xy * pp);
        }
        out
    }

    /// `B(p, q)`.
    pub fn pair(&self, p: &EdgeField, q: &EdgeField) -> f64 {
        let ap = self.apply_a(p);
        let s: f64 = ap.x.iter().zip(&q.x).map(|(a, b)| a * b).sum::<f64>()
            + ap.y.iter().zip(&q.y).map(|(a, b)| a * b).sum::<f64>();
        self.grid.volume() * s
    }

    /// Cell vector `D(r)` with `Σ_c D(r)_c w_c = h^d Σ_e r_e (∇w)_e`.
    pub fn weak_div(&self, r: &EdgeField) -> Vec<f64> {
        let n = self.n();
        let scale = self.grid.h().powi(self.grid.dim as i32 - 1);
        let mut out = vec![0.0; self.grid.cells()];
        for c in 0..self.grid.cells() {
            let (i, j) = self.grid.coords(c);
            let left = self.grid.index((i + n - 1) % n, j);
            let mut s = r.x[left] - r.x[c];
            if self.grid.dim == 2 {
                let down = self.grid.index(i, (j + n - 1) % n);
                s += r.y[down] - r.y[c];
            }
            out[c] = scale * s;
        }
        out
    }

    /// Stiffness matrix `K u = D(A ∇u)`, so `wᵀ K u = B(∇u, ∇w)`.
    pub fn stiffness(&self, u: &[f64]) -> Vec<f64> {
        self.weak_div(&self.apply_a(&self.grad(u)))
    }

    /// Central edge average of a cell field on x-edges, zero on y-edges.
    pub fn x_edge_average(&self, phi: &[f64]) -> EdgeField {
        let mut e = self.zero_edges();
        for c in 0..self.grid.cells() {
            let (i, j) = self.grid.coords(c);
            e.x[c] = 0.5 * (phi[c] + phi[self.xp(i, j)]);
        }
        e
    }

    /// Edge flux `∇φ − 2λ φ̄ e₁` of the forced Fokker–Planck operator.
    pub fn steady_flux(&self, lambda: f64, phi: &[f64]) -> EdgeField {
        let mut g = self.grad(phi);
        g.axpy(-2.0 * lambda, &self.x_edge_average(phi));
        g
    }

    pub fn steady_apply(&self, lambda: f64, phi: &[f64]) -> Vec<f64> {
        self.weak_div(&self.apply_a(&self.steady_flux(lambda, phi)))
    }

    /// Mean-zero `u` with `K u = rhs`; `rhs` must sum to zero.
    pub fn solve_stiffness(&self, rhs: &[f64]) -> Result<Vec<f64>, PdeError> {
        if self.grid.dim == 1 && self.solver == SolverKind::Auto {
            return Ok(self.solve_stiffness_1d(rhs));
        }
        let max_iter = 50 * self.grid.cells().max(100);
        let (u, _) = cg_mean_zero(|u, out| out.copy_from_slice(&self.stiffness(u)), rhs, TOL, max_iter)?;
        Ok(u)
    }

    /// `(K u)_i = r_{i−½} − r_{i+½}` with flux `r_e = a_e (u_{i+1} − u_i)/h`;
    /// the flux follows by summation and the constant by periodicity.
    fn solve_stiffness_1d(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n();
        let h = self.grid.h();
        let mut partial = vec![0.0; n];
        let mut s = 0.0;
        for i in 0..n {
            s += rhs[i];
            partial[i] = s;
        }
        let w: f64 = self.face.iter().map(|a| h / a).sum();
        let c = self.face.iter().zip(&partial).map(|(a, p)| h * p / a).sum::<f64>() / w;
        let mut u = vec![0.0; n];
        for i in 0..n - 1 {
            u[i + 1] = u[i] + h * (c - partial[i]) / self.face[i];
        }
        let m = u.iter().sum::<f64>() / n as f64;
        u.iter_mut().for_each(|v| *v -= m);
        u
    }

    /// Density `φ` with `L_λ φ = 0`, `h^d Σ φ = 1`.
    pub fn solve_steady(&self, lambda: f64) -> Result<Vec<f64>, PdeError> {
        let cells = self.grid.cells();
        if lambda == 0.0 {
            return Ok(vec![1.0; cells]);
        }
        let mut phi = if self.grid.dim == 1 && self.solver == SolverKind::Auto {
            self.solve_steady_1d(lambda)?
        } else {
            // φ = 1 + ψ with L ψ = −L 1; the right side has zero sum.
            let ones = vec![1.0; cells];
            let rhs: Vec<f64> = self.steady_apply(lambda, &ones).iter().map(|v| -v).collect();
            let max_iter = 50 * cells.max(100);
            let (psi, _) = bicgstab(|u, out| out.copy_from_slice(&self.steady_apply(lambda, u)), &rhs, TOL, max_iter)?;
            psi.iter().map(|p| 1.0 + p).collect()
        };
        let mass = self.grid.volume() * phi.iter().sum::<f64>();
        if !(mass.is_finite() && mass != 0.0) {
            return Err(PdeError::SolverDiverged { iterations: 0, residual: f64::NAN });
        }
        phi.iter_mut().for_each(|v| *v /= mass);
        Ok(phi)
    }

    /// Constant flux `J = a_e[(φ_{i+1} − φ_i)/h − λ(φ_i + φ_{i+1})]` gives the
    /// recursion `φ_{i+1} = α φ_i + β_e J`; periodicity fixes `φ_0 / J`.
    fn solve_steady_1d(&self, lambda: f64) -> Result<Vec<f64>, PdeError> {
        let n = self.n();
        let h = self.grid.h();
        let lh = lambda * h;
        if lh.abs() >= 1.0 {
            return Err(PdeError::BadGrid(format!("λh = {lh} must be below 1")));
        }
        let alpha = (1.0 + lh) / (1.0 - lh);
        let beta = |e: usize| h / (self.face[e] * (1.0 - lh));
        // φ_n = α^n φ_0 + J s with J = 1.
        let mut s = 0.0;
        for e in 0..n {
            s = alpha * s + beta(e);
        }
        let phi0 = s / (1.0 - alpha.powi(n as i32));
        let mut phi = vec![0.0; n];
        phi[0] = phi0;
        for i in 0..n - 1 {
            phi[i + 1] = alpha * phi[i] + beta(i);
        }
        Ok(phi)
    }

    /// Cell values of `f = div F` compatible with the energy form.
    ///
    /// For the drift component this is `b_h = −D(A e₁)/(2h^d)`, so that the
    /// potential of `b_h` is exactly the corrector. Other fluxes are
    /// differenced from their values at face midpoints.
    pub fn functional_density(&self, env: &Environment, f: &FunctionalSpec) -> Vec<f64> {
        let cells = self.grid.cells();
        match f.kind() {
            FunctionalKind::Zero => vec![0.0; cells],
            FunctionalKind::DriftComponent => {
                let s = -0.5 / self.grid.volume();
                self.weak_div(&self.apply_a(&self.unit_edges(0))).iter().map(|v| s * v).collect()
            }
            FunctionalKind::Custom => {
                let h = self.grid.h();
                let flux_at = |p: [f64; 2]| f.flux(&p, &env.eval(&p));
                let mut out = vec![0.0; cells];
                for c in 0..cells {
                    let (i, j) = self.grid.coords(c);
                    let y = if self.grid.dim == 2 { (j as f64 + 0.5) * h } else { 0.0 };
                    let xr = flux_at([(i + 1) as f64 * h, y])[0];
                    let xl = flux_at([i as f64 * h, y])[0];
                    let mut v = (xr - xl) / h;
                    if self.grid.dim == 2 {
                        let x = (i as f64 + 0.5) * h;
                        let yt = flux_at([x, (j + 1) as f64 * h])[1];
                        let yb = flux_at([x, j as f64 * h])[1];
                        v += (yt - yb) / h;
                    }
                    out[c] = v;
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{PeriodicCoefficients, TrigProfile, TrigTerm};

    fn env2() -> Environment {
        Environment::make_periodic(
            2,
            PeriodicCoefficients {
                a11: TrigProfile::sine(2.0, 0.6, &[1, 0]),
                a12: Some(TrigProfile {
                    mean: 0.0,
                    reciprocal: false,
                    terms: vec![TrigTerm { k: vec![1, 1], cos: 0.3, sin: 0.0 }],
                }),
                a22: Some(TrigProfile::sine(1.5, 0.5, &[0, 1])),
            },
        )
        .unwrap()
    }

    fn rough(grid: &TorusGrid, seed: f64) -> Vec<f64> {
        (0..grid.cells()).map(|c| ((c as f64 + seed) * 12.9898).sin() * 43.7).map(|v| v - v.floor() - 0.5).collect()
    }

    #[test]
    fn energy_form_is_symmetric_and_positive() {
        let g = TorusGrid::new(2, 16).unwrap();
        let d = Discretization::new(&env2(), g).unwrap();
        let p = d.grad(&rough(&g, 1.0));
        let q = d.grad(&rough(&g, 2.0));
        assert!((d.pair(&p, &q) - d.pair(&q, &p)).abs() < 1e-12);
        assert!(d.pair(&p, &p) > 0.0);
    }

    #[test]
    fn weak_divergence_is_adjoint_of_gradient() {
        let g = TorusGrid::new(2, 16).unwrap();
        let d = Discretization::new(&env2(), g).unwrap();
        let w = rough(&g, 3.0);
        let mut r = d.grad(&rough(&g, 4.0));
        r.axpy(0.7, &d.unit_edges(1));
        let lhs: f64 = d.weak_div(&r).iter().zip(&w).map(|(a, b)| a * b).sum();
        let gw = d.grad(&w);
        let rhs = g.volume()
            * (r.x.iter().zip(&gw.x).map(|(a, b)| a * b).sum::<f64>()
                + r.y.iter().zip(&gw.y).map(|(a, b)| a * b).sum::<f64>());
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn one_dimensional_solvers_match_krylov() {
        let env =
            Environment::make_periodic(1, PeriodicCoefficients::scalar(TrigProfile::sine(2.0, 1.0, &[1]))).unwrap();
        let g = TorusGrid::new(1, 64).unwrap();
        let direct = Discretization::new(&env, g).unwrap();
        let krylov = direct.clone().with_solver(SolverKind::Iterative);
        let mut rhs = rough(&g, 5.0);
        let m = rhs.iter().sum::<f64>() / 64.0;
        rhs.iter_mut().for_each(|v| *v -= m);
        let a = direct.solve_stiffness(&rhs).unwrap();
        let b = krylov.solve_stiffness(&rhs).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
        let res = direct.stiffness(&a);
        assert!(res.iter().zip(&rhs).all(|(x, y)| (x - y).abs() < 1e-12));
        let p = direct.solve_steady(0.3).unwrap();
        let q = krylov.solve_steady(0.3).unwrap();
        assert!(p.iter().zip(&q).all(|(x, y)| (x - y).abs() < 1e-9));
        assert!(direct.steady_apply(0.3, &p).iter().all(|v| v.abs() < 1e-10));
    }
}
