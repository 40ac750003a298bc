//! Periodic cell problems: invariant density of the forced process, the
//! corrector, effective diffusivity and drift, and the linear-response
//! identities that relate them.
//!
//! All quantities are computed from one compatible discretization (see
//! [`operator`]), so identities that follow from integration by parts in the
//! continuum hold to solver precision on the grid.

pub mod grid;
pub mod operator;
pub mod solver;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::Environment;
use crate::functional::{FunctionalKind, FunctionalSpec};
use crate::tensor::{Point, MAX_DIM};

pub use grid::{TorusField, TorusGrid};
pub use operator::{Discretization, EdgeField, SolverKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("the torus solvers need a periodic or constant environment")]
    NotPeriodic,
    #[error("functional is not centred on the grid (mean {0:.3e})")]
    NotCentered(f64),
    #[error("bad grid: {0}")]
    BadGrid(String),
}

/// Density `f^λ` of the invariant measure of the forced process on the torus,
/// normalized to unit mass.
pub fn steady_state(env: &Environment, lambda: f64, grid: TorusGrid) -> Result<TorusField, PdeError> {
    let d = Discretization::new(env, grid)?;
    Ok(TorusField::new(grid, d.solve_steady(lambda)?))
}

/// Mean-zero corrector `χ₁` with `div(a(∇χ₁ + e₁)) = 0`.
pub fn corrector(env: &Environment, grid: TorusGrid) -> Result<TorusField, PdeError> {
    let d = Discretization::new(env, grid)?;
    Ok(TorusField::new(grid, corrector_values(&d)?))
}

fn corrector_values(d: &Discretization) -> Result<Vec<f64>, PdeError> {
    let rhs: Vec<f64> = d.weak_div(&d.apply_a(&d.unit_edges(0))).iter().map(|v| -v).collect();
    d.solve_stiffness(&rhs)
}

/// `Σ₁ = e₁·Σe₁` as `(∫(e₁+∇χ)·a(e₁+∇χ), ∫e₁·ae₁ − ∫∇χ·a∇χ)`.
pub fn effective_sigma(env: &Environment, grid: TorusGrid) -> Result<(f64, f64), PdeError> {
    let d = Discretization::new(env, grid)?;
    let chi = corrector_values(&d)?;
    Ok(sigma_forms(&d, &chi))
}

fn sigma_forms(d: &Discretization, chi: &[f64]) -> (f64, f64) {
    let e1 = d.unit_edges(0);
    let g = d.grad(chi);
    let mut ge = g.clone();
    ge.axpy(1.0, &e1);
    (d.pair(&ge, &ge), d.pair(&e1, &e1) - d.pair(&g, &g))
}

/// Effective drift `ℓ(λ) = ∫(b + λae₁) f^λ = −½ ∫ a(∇f^λ − 2λ f^λ e₁)`.
pub fn effective_drift(env: &Environment, lambda: f64, grid: TorusGrid) -> Result<Point, PdeError> {
    let d = Discretization::new(env, grid)?;
    let phi = d.solve_steady(lambda)?;
    Ok(drift_from_density(&d, lambda, &phi))
}

fn drift_from_density(d: &Discretization, lambda: f64, phi: &[f64]) -> Point {
    let flux = d.steady_flux(lambda, phi);
    let mut ell = [0.0; MAX_DIM];
    for (k, v) in ell.iter_mut().enumerate().take(d.grid.dim) {
        *v = -0.5 * d.pair(&flux, &d.unit_edges(k));
    }
    ell
}

/// Cell values of `f` used by the grid identities.
pub fn functional_density(env: &Environment, f: &FunctionalSpec, grid: TorusGrid) -> Result<TorusField, PdeError> {
    let d = Discretization::new(env, grid)?;
    Ok(TorusField::new(grid, d.functional_density(env, f)))
}

fn check_centered(f: &[f64]) -> Result<(), PdeError> {
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    let scale = f.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if mean.abs() > 1e-10 * scale {
        return Err(PdeError::NotCentered(mean));
    }
    Ok(())
}

/// Potential `u_f` with `½ div(a∇u_f) = −f`, mean zero.
pub fn potential(env: &Environment, f: &FunctionalSpec, grid: TorusGrid) -> Result<TorusField, PdeError> {
    let d = Discretization::new(env, grid)?;
    let fv = d.functional_density(env, f);
    check_centered(&fv)?;
    Ok(TorusField::new(grid, potential_values(&d, &fv)?))
}

fn potential_values(d: &Discretization, f: &[f64]) -> Result<Vec<f64>, PdeError> {
    let s = 2.0 * d.grid.volume();
    let rhs: Vec<f64> = f.iter().map(|v| s * v).collect();
    d.solve_stiffness(&rhs)
}

/// Covariances `Σ(f,g) = ∫∇u_f·a∇u_g` of two centred functionals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HMinus1 {
    pub sigma_ff: f64,
    pub sigma_gg: f64,
    pub sigma_fg: f64,
    /// `‖f‖_{H⁻¹} = √(Σ(f)/2)`.
    pub norm_f: f64,
}

pub fn h_minus1(
    env: &Environment,
    f: &FunctionalSpec,
    g: &FunctionalSpec,
    grid: TorusGrid,
) -> Result<HMinus1, PdeError> {
    let d = Discretization::new(env, grid)?;
    let fv = d.functional_density(env, f);
    let gv = d.functional_density(env, g);
    check_centered(&fv)?;
    check_centered(&gv)?;
    let uf = potential_values(&d, &fv)?;
    let ug = potential_values(&d, &gv)?;
    let (gf, gg) = (d.grad(&uf), d.grad(&ug));
    let sigma_ff = d.pair(&gf, &gf);
    let sigma_gg = d.pair(&gg, &gg);
    let sigma_fg = d.pair(&gf, &gg);
    Ok(HMinus1 { sigma_ff, sigma_gg, sigma_fg, norm_f: (0.5 * sigma_ff).max(0.0).sqrt() })
}

/// One line of the identity report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub identity: String,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
    pub grid_n: usize,
    pub lambda_fd: f64,
}

/// The linear-response numbers for a centred functional `f`:
/// (i) the central difference of `ν_λ(f) = ∫ f f^λ`, (ii) `Γ̄ = −∫∇u_f·a∇χ₁`,
/// (iii) `−2∫fχ₁`, and for the drift component (iv) `Σ₁ − ∫e₁·ae₁`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdtReport {
    pub dnu_dlambda: f64,
    pub gamma_bar: f64,
    pub minus_two_f_chi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_gap: Option<f64>,
    pub checks: Vec<IdentityCheck>,
}

pub fn fdt_identities(
    env: &Environment,
    f: &FunctionalSpec,
    lambda_fd: f64,
    grid: TorusGrid,
) -> Result<FdtReport, PdeError> {
    let d = Discretization::new(env, grid)?;
    let fv = d.functional_density(env, f);
    check_centered(&fv)?;
    let vol = grid.volume();
    let nu = |lambda: f64| -> Result<f64, PdeError> {
        let phi = d.solve_steady(lambda)?;
        Ok(vol * fv.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>())
    };
    let dnu = (nu(lambda_fd)? - nu(-lambda_fd)?) / (2.0 * lambda_fd);
    let chi = corrector_values(&d)?;
    let uf = potential_values(&d, &fv)?;
    let gamma_bar = -d.pair(&d.grad(&uf), &d.grad(&chi));
    let minus_two_f_chi = -2.0 * vol * fv.iter().zip(&chi).map(|(a, b)| a * b).sum::<f64>();
    let sigma_gap = (f.kind() == FunctionalKind::DriftComponent).then(|| {
        let e1 = d.unit_edges(0);
        sigma_forms(&d, &chi).1 - d.pair(&e1, &e1)
    });
    let row = |identity: &str, lhs: f64, rhs: f64| IdentityCheck {
        identity: identity.to_string(),
        lhs,
        rhs,
        abs_err: (lhs - rhs).abs(),
        grid_n: grid.n,
        lambda_fd,
    };
    let mut checks = vec![
        row("dnu_dlambda = gamma_bar", dnu, gamma_bar),
        row("gamma_bar = -2 <f, chi1>", gamma_bar, minus_two_f_chi),
    ];
    if let Some(gap) = sigma_gap {
        checks.push(row("gamma_bar = sigma1 - <e1, a e1>", gamma_bar, gap));
    }
    Ok(FdtReport { dnu_dlambda: dnu, gamma_bar, minus_two_f_chi, sigma_gap, checks })
}

/// Steady density, corrector, potentials and effective coefficients on one grid.
#[derive(Clone, Debug)]
pub struct TorusSolution {
    pub grid: TorusGrid,
    pub lambda: f64,
    pub f_lambda: TorusField,
    pub chi1: TorusField,
    pub u_f: Vec<(String, TorusField)>,
    pub sigma1: f64,
    pub sigma1_alt: f64,
    pub ell: Point,
}

impl TorusSolution {
    pub fn solve(
        env: &Environment,
        grid: TorusGrid,
        lambda: f64,
        functionals: &[(&str, &FunctionalSpec)],
    ) -> Result<Self, PdeError> {
        let d = Discretization::new(env, grid)?;
        let phi = d.solve_steady(lambda)?;
        let chi = corrector_values(&d)?;
        let (sigma1, sigma1_alt) = sigma_forms(&d, &chi);
        let ell = drift_from_density(&d, lambda, &phi);
        let mut u_f = Vec::new();
        for (name, f) in functionals {
            let fv = d.functional_density(env, f);
            check_centered(&fv)?;
            u_f.push((name.to_string(), TorusField::new(grid, potential_values(&d, &fv)?)));
        }
        Ok(TorusSolution {
            grid,
            lambda,
            f_lambda: TorusField::new(grid, phi),
            chi1: TorusField::new(grid, chi),
            u_f,
            sigma1,
            sigma1_alt,
            ell,
        })
    }

    /// One row per cell: coordinates, `f_lambda`, `chi1`, then each `u_f`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header: Vec<String> = ["x", "y"][..self.grid.dim].iter().map(|s| s.to_string()).collect();
        header.extend(["f_lambda".to_string(), "chi1".to_string()]);
        header.extend(self.u_f.iter().map(|(n, _)| format!("u_{n}")));
        writeln!(out, "{}", header.join(","))?;
        for c in 0..self.grid.cells() {
            let p = self.grid.cell_center(c);
            let mut row: Vec<String> = p[..self.grid.dim].iter().map(|v| v.to_string()).collect();
            row.push(self.f_lambda.values[c].to_string());
            row.push(self.chi1.values[c].to_string());
            row.extend(self.u_f.iter().map(|(_, u)| u.values[c].to_string()));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{PeriodicCoefficients, TrigProfile, TrigTerm};
    use crate::functional::{make_functional, FunctionalDesc};

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
                a22: Some(TrigProfile::sine(1.5, 0.5, &[1, 1])),
            },
        )
        .unwrap()
    }

    #[test]
    fn constant_coefficients() {
        let env = Environment::make_constant(2, 1.2).unwrap();
        let g = TorusGrid::new(2, 16).unwrap();
        let (s1, s2) = effective_sigma(&env, g).unwrap();
        assert!((s1 - 1.44).abs() < 1e-12 && (s2 - 1.44).abs() < 1e-12);
        assert!(corrector(&env, g).unwrap().values.iter().all(|v| v.abs() < 1e-12));
        let ell = effective_drift(&env, 0.3, g).unwrap();
        assert!((ell[0] - 0.3 * 1.44).abs() < 1e-12 && ell[1].abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_identities_hold_exactly() {
        let env = env2();
        let g = TorusGrid::new(2, 32).unwrap();
        let (s1, s2) = effective_sigma(&env, g).unwrap();
        assert!((s1 - s2).abs() < 1e-8 * s1);
        let f = make_functional(&env, &FunctionalDesc::DriftComponent).unwrap();
        let rep = fdt_identities(&env, &f, 1e-2, g).unwrap();
        assert!((rep.gamma_bar - rep.minus_two_f_chi).abs() < 1e-9);
        assert!((rep.gamma_bar - rep.sigma_gap.unwrap()).abs() < 1e-9);
        assert!((rep.dnu_dlambda - rep.gamma_bar).abs() < 1e-3);
        let phi = steady_state(&env, 0.4, g).unwrap();
        assert!((phi.integral() - 1.0).abs() < 1e-12);
        assert!(phi.min() > 0.0);
    }

    #[test]
    fn two_dimensional_einstein_relation() {
        let env = env2();
        let g = TorusGrid::new(2, 32).unwrap();
        let (s1, _) = effective_sigma(&env, g).unwrap();
        let lam = 1e-3;
        let slope =
            (effective_drift(&env, lam, g).unwrap()[0] - effective_drift(&env, -lam, g).unwrap()[0]) / (2.0 * lam);
        assert!((slope - s1).abs() < 1e-5, "{slope} vs {s1}");
    }

    #[test]
    fn not_centered_is_rejected() {
        let env = Environment::make_constant(1, 1.0).unwrap();
        let f = FunctionalSpec::custom(&env, |x| [x[0], 0.0], |_| 1.0, 1e9, 0.0, false).unwrap();
        let g = TorusGrid::new(1, 16).unwrap();
        // The flux x ↦ x is not periodic, so the discrete divergence has mass.
        assert!(matches!(potential(&env, &f, g), Err(PdeError::NotCentered(_))));
    }

    #[test]
    fn random_fields_are_rejected() {
        let env = Environment::make_random_bumps(1, 1.0, 1.0, 1.0, 1.0, 1).unwrap();
        assert_eq!(steady_state(&env, 0.1, TorusGrid::new(1, 16).unwrap()).unwrap_err(), PdeError::NotPeriodic);
    }
}
