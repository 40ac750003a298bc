//! Local observables `f = div F` with bounded flux `F`.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{uniform_point, Coeffs, EnvKind, EnvSpec, Environment, TrigProfile, MAX_BUMPS_PER_CELL};
use crate::tensor::{norm, Point, MAX_DIM};

const SUP_SAMPLES: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionalError {
    #[error("flux exceeds the declared sup norm: |F({point:?})| = {value} > {declared}")]
    UnboundedF { point: Vec<f64>, value: f64, declared: f64 },
    #[error("malformed functional: {0}")]
    BadParameters(String),
}

/// Serializable description of an observable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalDesc {
    /// `f ≡ 0`.
    Zero,
    /// `F = ½ a e₁`, so `f = b·e₁`.
    DriftComponent,
    /// `F_i` given componentwise as 1-periodic trigonometric polynomials.
    Custom {
        flux: Vec<TrigProfile>,
        #[serde(default)]
        locality_radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sup_norm: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    Zero,
    DriftComponent,
    Custom,
}

type FluxFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
type DivFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Field {
    Zero,
    Drift,
    Trig(Vec<TrigProfile>),
    Closure { flux: FluxFn, div: DivFn },
}

/// Observable `f = div F` ready for evaluation along paths.
#[derive(Clone)]
pub struct FunctionalSpec {
    field: Field,
    dim: usize,
    pub locality_radius: f64,
    pub sup_norm: f64,
    pub centered: bool,
}

impl fmt::Debug for FunctionalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionalSpec")
            .field("kind", &self.kind())
            .field("dim", &self.dim)
            .field("locality_radius", &self.locality_radius)
            .field("sup_norm", &self.sup_norm)
            .field("centered", &self.centered)
            .finish()
    }
}

impl FunctionalSpec {
    pub fn zero(dim: usize) -> Self {
        FunctionalSpec { field: Field::Zero, dim, locality_radius: 0.0, sup_norm: 0.0, centered: true }
    }

    /// Custom observable from analytic closures for `F` and `div F`.
    ///
    /// The declared `sup_norm` is checked on a deterministic sample of points.
    pub fn custom(
        env: &Environment,
        flux: impl Fn(&Point) -> Point + Send + Sync + 'static,
        div: impl Fn(&Point) -> f64 + Send + Sync + 'static,
        sup_norm: f64,
        locality_radius: f64,
        centered: bool,
    ) -> Result<Self, FunctionalError> {
        let spec = FunctionalSpec {
            field: Field::Closure { flux: Arc::new(flux), div: Arc::new(div) },
            dim: env.dim(),
            locality_radius,
            sup_norm,
            centered,
        };
        spec.check_sup_norm(env)?;
        Ok(spec)
    }

    pub fn kind(&self) -> FunctionalKind {
        match self.field {
            Field::Zero => FunctionalKind::Zero,
            Field::Drift => FunctionalKind::DriftComponent,
            Field::Trig(_) | Field::Closure { .. } => FunctionalKind::Custom,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.field, Field::Zero)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `f(x)`, given the environment coefficients already evaluated at `x`.
    pub fn value(&self, x: &Point, c: &Coeffs) -> f64 {
        match &self.field {
            Field::Zero => 0.0,
            Field::Drift => c.b[0],
            Field::Trig(flux) => {
                let mut s = 0.0;
                for (i, p) in flux.iter().enumerate() {
                    s += p.eval(x, self.dim).1[i];
                }
                s
            }
            Field::Closure { div, .. } => div(x),
        }
    }

    /// `F(x)`.
    pub fn flux(&self, x: &Point, c: &Coeffs) -> Point {
        match &self.field {
            Field::Zero => [0.0; MAX_DIM],
            Field::Drift => [0.5 * c.a.xx, if self.dim == 2 { 0.5 * c.a.xy } else { 0.0 }],
            Field::Trig(flux) => {
                let mut out = [0.0; MAX_DIM];
                for (i, p) in flux.iter().enumerate() {
                    out[i] = p.eval(x, self.dim).0;
                }
                out
            }
            Field::Closure { flux, .. } => flux(x),
        }
    }

    fn check_sup_norm(&self, env: &Environment) -> Result<(), FunctionalError> {
        let width = match env.kind() {
            EnvKind::Periodic => 1.0,
            _ => 10.0 * env.range().max(1.0),
        };
        let mut g = ChaCha8Rng::seed_from_u64(0xF1);
        for _ in 0..SUP_SAMPLES {
            let x = uniform_point(&mut g, self.dim, width);
            let v = norm(&self.flux(&x, &env.eval(&x)), self.dim);
            if !(v <= self.sup_norm * (1.0 + 1e-12)) {
                return Err(FunctionalError::UnboundedF {
                    point: x[..self.dim].to_vec(),
                    value: v,
                    declared: self.sup_norm,
                });
            }
        }
        Ok(())
    }
}

/// Builds an observable for `env` from its description.
pub fn make_functional(env: &Environment, desc: &FunctionalDesc) -> Result<FunctionalSpec, FunctionalError> {
    let dim = env.dim();
    match desc {
        FunctionalDesc::Zero => Ok(FunctionalSpec::zero(dim)),
        FunctionalDesc::DriftComponent => {
            let sup_norm = drift_sup_norm(env);
            Ok(FunctionalSpec { field: Field::Drift, dim, locality_radius: env.range(), sup_norm, centered: true })
        }
        FunctionalDesc::Custom { flux, locality_radius, sup_norm } => {
            if flux.len() != dim {
                return Err(FunctionalError::BadParameters(format!(
                    "flux has {} components, expected {dim}",
                    flux.len()
                )));
            }
            let mut bound = 0.0;
            for p in flux {
                if p.reciprocal {
                    return Err(FunctionalError::BadParameters(
                        "reciprocal profiles have no closed-form divergence bound; use a closure".into(),
                    ));
                }
                if p.terms.iter().any(|t| t.k.len() != dim) || !p.mean.is_finite() {
                    return Err(FunctionalError::BadParameters("wave vector length mismatch".into()));
                }
                let s: f64 = p.mean.abs() + p.terms.iter().map(|t| t.cos.abs() + t.sin.abs()).sum::<f64>();
                bound += s * s;
            }
            if !(*locality_radius >= 0.0) {
                return Err(FunctionalError::BadParameters("locality_radius must be non-negative".into()));
            }
            let spec = FunctionalSpec {
                field: Field::Trig(flux.clone()),
                dim,
                locality_radius: *locality_radius,
                sup_norm: sup_norm.unwrap_or(bound.sqrt()),
                // The divergence of a periodic field integrates to zero.
                centered: true,
            };
            spec.check_sup_norm(env)?;
            Ok(spec)
        }
    }
}

/// `½ max |a e₁|` (an upper bound for random fields).
fn drift_sup_norm(env: &Environment) -> f64 {
    let dim = env.dim();
    match env.spec() {
        EnvSpec::Constant { sigma0, .. } => 0.5 * sigma0 * sigma0,
        EnvSpec::RandomBumps { amplitude, base, .. } => {
            0.5 * (base + amplitude * 3f64.powi(dim as i32) * MAX_BUMPS_PER_CELL as f64)
        }
        EnvSpec::Periodic { .. } => {
            let n = if dim == 1 { 1 << 14 } else { 256 };
            let rows = if dim == 1 { 1 } else { n };
            let mut m: f64 = 0.0;
            for j in 0..rows {
                for i in 0..n {
                    let x = [i as f64 / n as f64, j as f64 / n as f64];
                    let a = env.a(&x);
                    m = m.max(norm(&[a.xx, if dim == 2 { a.xy } else { 0.0 }], dim));
                }
            }
            // Small allowance for the sampling gap.
            0.5 * m * (1.0 + 1e-3)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{PeriodicCoefficients, TrigTerm};
    use std::f64::consts::PI;

    fn two_plus_sin() -> Environment {
        Environment::make_periodic(1, PeriodicCoefficients::scalar(TrigProfile::sine(2.0, 1.0, &[1]))).unwrap()
    }

    #[test]
    fn drift_component_of_constant_env_vanishes() {
        let env = Environment::make_constant(2, 1.0).unwrap();
        let f = make_functional(&env, &FunctionalDesc::DriftComponent).unwrap();
        let x = [0.3, 0.9];
        assert_eq!(f.value(&x, &env.eval(&x)), 0.0);
    }

    #[test]
    fn drift_component_is_centered_cosine() {
        let env = two_plus_sin();
        let f = make_functional(&env, &FunctionalDesc::DriftComponent).unwrap();
        assert!(f.centered);
        assert!((f.sup_norm - 1.5).abs() < 2e-3);
        let n = 1000;
        let mut integral = 0.0;
        for i in 0..n {
            let x = [(i as f64 + 0.5) / n as f64, 0.0];
            let v = f.value(&x, &env.eval(&x));
            assert!((v - PI * (2.0 * PI * x[0]).cos()).abs() < 1e-12);
            integral += v / n as f64;
        }
        assert!(integral.abs() < 1e-12);
    }

    #[test]
    fn custom_sine_flux_in_two_dimensions() {
        let env = Environment::make_constant(2, 1.0).unwrap();
        let desc = FunctionalDesc::Custom {
            flux: vec![TrigProfile::sine(0.0, 1.0, &[1, 0]), TrigProfile::constant(0.0)],
            locality_radius: 0.0,
            sup_norm: None,
        };
        let f = make_functional(&env, &desc).unwrap();
        assert_eq!(f.sup_norm, 1.0);
        let n = 64;
        let mut integral = 0.0;
        for j in 0..n {
            for i in 0..n {
                let x = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                let v = f.value(&x, &env.eval(&x));
                assert!((v - 2.0 * PI * (2.0 * PI * x[0]).cos()).abs() < 1e-12);
                integral += v / (n * n) as f64;
            }
        }
        assert!(integral.abs() < 1e-12);
    }

    #[test]
    fn divergence_matches_finite_differences() {
        let env = Environment::make_constant(2, 1.0).unwrap();
        let desc = FunctionalDesc::Custom {
            flux: vec![
                TrigProfile {
                    mean: 0.1,
                    reciprocal: false,
                    terms: vec![TrigTerm { k: vec![1, 2], cos: 0.4, sin: -0.3 }],
                },
                TrigProfile::sine(0.0, 0.7, &[2, 1]),
            ],
            locality_radius: 0.0,
            sup_norm: None,
        };
        let f = make_functional(&env, &desc).unwrap();
        let x = [0.31, 0.77];
        let c = env.eval(&x);
        let err = |h: f64| {
            let mut s = 0.0;
            for k in 0..2 {
                let (mut xp, mut xm) = (x, x);
                xp[k] += h;
                xm[k] -= h;
                s += (f.flux(&xp, &c)[k] - f.flux(&xm, &c)[k]) / (2.0 * h);
            }
            (s - f.value(&x, &c)).abs()
        };
        let order = (err(1e-2) / err(5e-3)).log2();
        assert!(order > 1.9, "order {order}");
    }

    #[test]
    fn declared_sup_norm_is_enforced() {
        let env = Environment::make_constant(1, 1.0).unwrap();
        let desc = FunctionalDesc::Custom {
            flux: vec![TrigProfile::sine(0.0, 2.0, &[1])],
            locality_radius: 0.0,
            sup_norm: Some(1.0),
        };
        assert!(matches!(make_functional(&env, &desc), Err(FunctionalError::UnboundedF { .. })));
        let closure = FunctionalSpec::custom(
            &env,
            |x| [3.0 * (2.0 * PI * x[0]).sin(), 0.0],
            |x| 6.0 * PI * (2.0 * PI * x[0]).cos(),
            1.0,
            0.0,
            true,
        );
        assert!(matches!(closure, Err(FunctionalError::UnboundedF { .. })));
    }

    #[test]
    fn description_round_trips() {
        let desc = FunctionalDesc::Custom {
            flux: vec![TrigProfile::sine(0.0, 1.0, &[1])],
            locality_radius: 0.5,
            sup_norm: Some(2.0),
        };
        let text = toml::to_string(&desc).unwrap();
        assert_eq!(toml::from_str::<FunctionalDesc>(&text).unwrap(), desc);
    }
}
