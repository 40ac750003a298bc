//! Coefficient fields: constant, periodic trigonometric, and Poisson bumps.
//!
//! An [`Environment`] is an immutable description of a diffusion matrix field
//! `a(x)` on ℝ^d together with `σ = a^{1/2}` and the divergence drift
//! `b = ½ div a`. All derivatives are analytic.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::tensor::{Point, Sym2, MAX_DIM};

/// Hard cap on the number of bumps drawn in a single lattice cell.
pub const MAX_BUMPS_PER_CELL: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("ellipticity violated: {0}")]
    EllipticityViolation(String),
    #[error("malformed coefficients: {0}")]
    BadCoefficients(String),
    #[error("unsupported dimension {0}; only 1 and 2 are implemented")]
    UnsupportedDimension(usize),
}

/// Uniform ellipticity constant `κ`: `κ|ζ|² ≤ ζ·a ζ ≤ κ⁻¹|ζ|²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityBounds {
    pub kappa: f64,
}

impl EllipticityBounds {
    pub fn contains(&self, eig: f64) -> bool {
        eig >= self.kappa * (1.0 - 1e-12) && eig <= (1.0 + 1e-12) / self.kappa
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Constant,
    Periodic,
    RandomBumps,
}

/// One Fourier mode `cos·cos(2πk·x) + sin·sin(2πk·x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub k: Vec<i32>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// A 1-periodic trigonometric polynomial `p(x)`.
///
/// With `reciprocal = true` the profile denotes `1/p(x)` instead, which is
/// the natural way to write coefficients with a prescribed harmonic mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigProfile {
    pub mean: f64,
    #[serde(default)]
    pub reciprocal: bool,
    #[serde(default)]
    pub terms: Vec<TrigTerm>,
}

impl TrigProfile {
    pub fn constant(v: f64) -> Self {
        TrigProfile { mean: v, reciprocal: false, terms: Vec::new() }
    }

    /// `mean + amp·sin(2π k·x)`.
    pub fn sine(mean: f64, amp: f64, k: &[i32]) -> Self {
        TrigProfile { mean, reciprocal: false, terms: vec![TrigTerm { k: k.to_vec(), cos: 0.0, sin: amp }] }
    }

    pub fn reciprocal_of(mut self) -> Self {
        self.reciprocal = !self.reciprocal;
        self
    }

    fn validate(&self, dim: usize, name: &str) -> Result<(), EnvError> {
        if !self.mean.is_finite() {
            return Err(EnvError::BadCoefficients(format!("{name}: non-finite mean")));
        }
        for t in &self.terms {
            if t.k.len() != dim {
                return Err(EnvError::BadCoefficients(format!(
                    "{name}: wave vector {:?} has length {}, expected {dim}",
                    t.k,
                    t.k.len()
                )));
            }
            if !t.cos.is_finite() || !t.sin.is_finite() {
                return Err(EnvError::BadCoefficients(format!("{name}: non-finite amplitude")));
            }
        }
        Ok(())
    }

    /// Value and gradient at `x`.
    pub fn eval(&self, x: &Point, dim: usize) -> (f64, Point) {
        let mut p = self.mean;
        let mut g = [0.0; MAX_DIM];
        for t in &self.terms {
            let mut phase = 0.0;
            for k in 0..dim {
                phase += t.k[k] as f64 * x[k];
            }
            let (s, c) = (2.0 * PI * phase).sin_cos();
            p += t.cos * c + t.sin * s;
            let dphase = t.sin * c - t.cos * s;
            for k in 0..dim {
                g[k] += 2.0 * PI * t.k[k] as f64 * dphase;
            }
        }
        if self.reciprocal {
            let v = 1.0 / p;
            let s = -v * v;
            (v, [g[0] * s, g[1] * s])
        } else {
            (p, g)
        }
    }
}

/// Trigonometric coefficient table for a periodic environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicCoefficients {
    pub a11: TrigProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a12: Option<TrigProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a22: Option<TrigProfile>,
}

impl PeriodicCoefficients {
    /// Scalar one-dimensional coefficient.
    pub fn scalar(a: TrigProfile) -> Self {
        PeriodicCoefficients { a11: a, a12: None, a22: None }
    }
}

/// Serializable environment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Constant {
        dim: usize,
        sigma0: f64,
    },
    Periodic {
        dim: usize,
        a11: TrigProfile,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a12: Option<TrigProfile>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a22: Option<TrigProfile>,
    },
    RandomBumps {
        dim: usize,
        seed: u64,
        intensity: f64,
        bump_radius: f64,
        amplitude: f64,
        base: f64,
    },
}

impl EnvSpec {
    pub fn build(&self) -> Result<Environment, EnvError> {
        match self {
            EnvSpec::Constant { dim, sigma0 } => Environment::make_constant(*dim, *sigma0),
            EnvSpec::Periodic { dim, a11, a12, a22 } => Environment::make_periodic(
                *dim,
                PeriodicCoefficients { a11: a11.clone(), a12: a12.clone(), a22: a22.clone() },
            ),
            EnvSpec::RandomBumps { dim, seed, intensity, bump_radius, amplitude, base } => {
                Environment::make_random_bumps(*dim, *intensity, *bump_radius, *amplitude, *base, *seed)
            }
        }
    }
}

/// `σ`, `a = σσᵀ` and `b = ½ div a` at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coeffs {
    pub sigma: Sym2,
    pub a: Sym2,
    pub b: Point,
}

/// Identifies one bump: its lattice cell and index within the cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BumpId {
    pub cell: [i64; MAX_DIM],
    pub index: usize,
}

#[derive(Clone, Copy, Debug)]
struct Bump {
    id: BumpId,
    center: Point,
    mat: Sym2,
}

/// Per-caller memo of the bumps around the most recently visited cell.
///
/// Environments stay immutable; each integrator owns its own cache.
#[derive(Clone, Debug, Default)]
pub struct NeighborhoodCache {
    cell: Option<[i64; MAX_DIM]>,
    bumps: Vec<Bump>,
}

impl NeighborhoodCache {
    pub fn new() -> Self {
        Self::default()
    }
}

#[derive(Clone, Debug)]
pub struct Environment {
    spec: EnvSpec,
    dim: usize,
    bounds: EllipticityBounds,
}

impl Environment {
    pub fn make_constant(dim: usize, sigma0: f64) -> Result<Self, EnvError> {
        check_dim(dim)?;
        if !sigma0.is_finite() || sigma0 <= 0.0 {
            return Err(EnvError::EllipticityViolation(format!("sigma0 = {sigma0} must be positive")));
        }
        let a = sigma0 * sigma0;
        let kappa = 1.0_f64.min(a).min(1.0 / a);
        Ok(Environment { spec: EnvSpec::Constant { dim, sigma0 }, dim, bounds: EllipticityBounds { kappa } })
    }

    pub fn make_periodic(dim: usize, coeffs: PeriodicCoefficients) -> Result<Self, EnvError> {
        check_dim(dim)?;
        coeffs.a11.validate(dim, "a11")?;
        if dim == 1 {
            if coeffs.a12.is_some() || coeffs.a22.is_some() {
                return Err(EnvError::BadCoefficients("a12/a22 given for a one-dimensional field".into()));
            }
        } else {
            match &coeffs.a22 {
                Some(p) => p.validate(dim, "a22")?,
                None => return Err(EnvError::BadCoefficients("a22 is required in two dimensions".into())),
            }
            if let Some(p) = &coeffs.a12 {
                p.validate(dim, "a12")?;
            }
        }
        let PeriodicCoefficients { a11, a12, a22 } = coeffs;
        let mut env = Environment {
            spec: EnvSpec::Periodic { dim, a11, a12, a22 },
            dim,
            bounds: EllipticityBounds { kappa: 1.0 },
        };
        let (lo, hi) = env.sampled_eigen_range()?;
        let kappa = 1.0_f64.min(lo).min(1.0 / hi);
        env.bounds = EllipticityBounds { kappa };
        Ok(env)
    }

    pub fn make_random_bumps(
        dim: usize,
        intensity: f64,
        bump_radius: f64,
        amplitude: f64,
        base: f64,
        seed: u64,
    ) -> Result<Self, EnvError> {
        check_dim(dim)?;
        for (name, v) in [("intensity", intensity), ("bump_radius", bump_radius)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(EnvError::BadCoefficients(format!("{name} = {v} must be positive")));
            }
        }
        if !amplitude.is_finite() || amplitude < 0.0 {
            return Err(EnvError::BadCoefficients(format!("amplitude = {amplitude} must be non-negative")));
        }
        if !base.is_finite() || base <= 0.0 {
            return Err(EnvError::EllipticityViolation(format!(
                "base = {base}: bumps are positive semidefinite so the lower eigenvalue is base, which must be positive"
            )));
        }
        let overlap = 3f64.powi(dim as i32) * MAX_BUMPS_PER_CELL as f64;
        let kappa = 1.0_f64.min(base).min(1.0 / (base + amplitude * overlap));
        Ok(Environment {
            spec: EnvSpec::RandomBumps { dim, seed, intensity, bump_radius, amplitude, base },
            dim,
            bounds: EllipticityBounds { kappa },
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> EllipticityBounds {
        self.bounds
    }

    pub fn kind(&self) -> EnvKind {
        match self.spec {
            EnvSpec::Constant { .. } => EnvKind::Constant,
            EnvSpec::Periodic { .. } => EnvKind::Periodic,
            EnvSpec::RandomBumps { .. } => EnvKind::RandomBumps,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self.spec {
            EnvSpec::RandomBumps { seed, .. } => Some(seed),
            _ => None,
        }
    }

    /// Range of dependence; `+∞` for periodic fields, `0` for constant ones.
    pub fn range(&self) -> f64 {
        match self.spec {
            EnvSpec::Constant { .. } => 0.0,
            EnvSpec::Periodic { .. } => f64::INFINITY,
            EnvSpec::RandomBumps { bump_radius, .. } => 2.0 * bump_radius,
        }
    }

    /// Copy of a random environment with an independent seed derived from
    /// `(seed, index)`. Deterministic kinds are returned unchanged.
    pub fn reseeded(&self, index: u64) -> Environment {
        let mut out = self.clone();
        if let EnvSpec::RandomBumps { seed, .. } = &mut out.spec {
            *seed = rng::mix64(*seed ^ rng::mix64(index.wrapping_add(0x5EED)));
        }
        out
    }

    pub fn eval(&self, x: &Point) -> Coeffs {
        let (a, grad) = self.a_and_grad(x, None);
        self.finish(a, grad)
    }

    /// Same values as [`Environment::eval`], reusing `cache` for bump fields.
    pub fn eval_cached(&self, x: &Point, cache: &mut NeighborhoodCache) -> Coeffs {
        let (a, grad) = self.a_and_grad(x, Some(cache));
        self.finish(a, grad)
    }

    /// `a(x)` only.
    pub fn a(&self, x: &Point) -> Sym2 {
        self.a_and_grad(x, None).0
    }

    fn finish(&self, a: Sym2, grad: [Sym2; MAX_DIM]) -> Coeffs {
        let sigma = a.sqrt_psd(self.dim);
        // a is re-derived from σ so that a = σσᵀ holds for the returned pair.
        let a = sigma.square(self.dim);
        let b = if self.dim == 1 {
            [0.5 * grad[0].xx, 0.0]
        } else {
            [0.5 * (grad[0].xx + grad[1].xy), 0.5 * (grad[0].xy + grad[1].yy)]
        };
        Coeffs { sigma, a, b }
    }

    /// `a(x)` and its partial derivatives `∂_k a`.
    fn a_and_grad(&self, x: &Point, cache: Option<&mut NeighborhoodCache>) -> (Sym2, [Sym2; MAX_DIM]) {
        let dim = self.dim;
        match &self.spec {
            EnvSpec::Constant { sigma0, .. } => (Sym2::scalar(sigma0 * sigma0, dim), [Sym2::ZERO; MAX_DIM]),
            EnvSpec::Periodic { a11, a12, a22, .. } => {
                let (v11, g11) = a11.eval(x, dim);
                if dim == 1 {
                    let a = Sym2 { xx: v11, xy: 0.0, yy: 0.0 };
                    return (a, [Sym2 { xx: g11[0], xy: 0.0, yy: 0.0 }, Sym2::ZERO]);
                }
                let (v12, g12) = a12.as_ref().map_or((0.0, [0.0; MAX_DIM]), |p| p.eval(x, dim));
                let (v22, g22) = a22.as_ref().expect("validated").eval(x, dim);
                let a = Sym2 { xx: v11, xy: v12, yy: v22 };
                let grad = [Sym2 { xx: g11[0], xy: g12[0], yy: g22[0] }, Sym2 { xx: g11[1], xy: g12[1], yy: g22[1] }];
                (a, grad)
            }
            EnvSpec::RandomBumps { bump_radius, base, .. } => {
                let mut a = Sym2::scalar(*base, dim);
                let mut grad = [Sym2::ZERO; MAX_DIM];
                let r = *bump_radius;
                let mut accumulate = |bump: &Bump| {
                    let mut u = [0.0; MAX_DIM];
                    let mut s = 0.0;
                    for k in 0..dim {
                        u[k] = (x[k] - bump.center[k]) / r;
                        s += u[k] * u[k];
                    }
                    if s >= 1.0 {
                        return;
                    }
                    let w = 1.0 - s;
                    let phi = w * w * w;
                    a = a.add(&bump.mat.scale(phi));
                    for k in 0..dim {
                        let dphi = -6.0 * u[k] * w * w / r;
                        grad[k] = grad[k].add(&bump.mat.scale(dphi));
                    }
                };
                match cache {
                    Some(cache) => {
                        let cell = self.cell_of(x);
                        if cache.cell != Some(cell) {
                            cache.bumps.clear();
                            self.gather(cell, &mut cache.bumps);
                            cache.cell = Some(cell);
                        }
                        cache.bumps.iter().for_each(&mut accumulate);
                    }
                    None => {
                        let mut bumps = Vec::new();
                        self.gather(self.cell_of(x), &mut bumps);
                        bumps.iter().for_each(&mut accumulate);
                    }
                }
                (a, grad)
            }
        }
    }

    fn cell_of(&self, x: &Point) -> [i64; MAX_DIM] {
        let r = match self.spec {
            EnvSpec::RandomBumps { bump_radius, .. } => bump_radius,
            _ => 1.0,
        };
        let mut c = [0i64; MAX_DIM];
        for k in 0..self.dim {
            c[k] = (x[k] / r).floor() as i64;
        }
        c
    }

    /// Pushes every bump whose centre lies in the 3^d block of cells around `cell`.
    fn gather(&self, cell: [i64; MAX_DIM], out: &mut Vec<Bump>) {
        let (dy_lo, dy_hi) = if self.dim == 1 { (0, 0) } else { (-1, 1) };
        for dy in dy_lo..=dy_hi {
            for dx in -1..=1 {
                self.cell_bumps([cell[0] + dx, cell[1] + dy], out);
            }
        }
    }

    fn cell_bumps(&self, cell: [i64; MAX_DIM], out: &mut Vec<Bump>) {
        let EnvSpec::RandomBumps { dim, seed, intensity, bump_radius, amplitude, .. } = self.spec else {
            return;
        };
        let key = rng::mix64(cell[0] as u64) ^ rng::mix64((cell[1] as u64).rotate_left(29) ^ 0xC3);
        let stream = rng::stream_id(rng::domain::BUMPS, key);
        let mean = intensity * bump_radius.powi(dim as i32);
        let mut count_rng = rng::stream_at(seed, stream, 0);
        let count = Poisson::new(mean).map(|p| p.sample(&mut count_rng) as usize).unwrap_or(0).min(MAX_BUMPS_PER_CELL);
        for j in 0..count {
            // Each bump owns a fixed window of the keystream.
            let mut g = rng::stream_at(seed, stream, 1024 + 16 * j as u128);
            let mut center = [0.0; MAX_DIM];
            for k in 0..dim {
                center[k] = (cell[k] as f64 + g.random::<f64>()) * bump_radius;
            }
            let strength = amplitude * g.random::<f64>();
            let mat = if dim == 1 {
                Sym2 { xx: strength, xy: 0.0, yy: 0.0 }
            } else {
                let (s, c) = (PI * g.random::<f64>()).sin_cos();
                Sym2 { xx: strength * c * c, xy: strength * c * s, yy: strength * s * s }
            };
            out.push(Bump { id: BumpId { cell, index: j }, center, mat });
        }
    }

    /// Bumps whose support contains `x` (empty for non-random kinds).
    pub fn contributing_bumps(&self, x: &Point) -> Vec<BumpId> {
        if self.kind() != EnvKind::RandomBumps {
            return Vec::new();
        }
        let EnvSpec::RandomBumps { bump_radius, .. } = self.spec else { unreachable!() };
        let mut bumps = Vec::new();
        self.gather(self.cell_of(x), &mut bumps);
        let mut ids: Vec<BumpId> = bumps
            .iter()
            .filter(|b| {
                let s: f64 = (0..self.dim).map(|k| (x[k] - b.center[k]).powi(2)).sum();
                s < bump_radius * bump_radius
            })
            .map(|b| b.id)
            .collect();
        ids.sort();
        ids
    }

    /// Extreme eigenvalues of `a` over a dense sample of the unit cell,
    /// widened by a second-difference bound on the sampling gap.
    fn sampled_eigen_range(&self) -> Result<(f64, f64), EnvError> {
        let n: usize = if self.dim == 1 { 1 << 16 } else { 512 };
        let step = 1.0 / n as f64;
        let eig = |i: usize, j: usize| {
            let x = [i as f64 * step, j as f64 * step];
            self.a(&x).eigenvalues(self.dim)
        };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut curv: f64 = 0.0;
        let rows = if self.dim == 1 { 1 } else { n };
        for j in 0..rows {
            for i in 0..n {
                let (l, h) = eig(i, j);
                if !l.is_finite() || !h.is_finite() {
                    return Err(EnvError::EllipticityViolation("non-finite coefficient sample".into()));
                }
                lo = lo.min(l);
                hi = hi.max(h);
                let (l1, h1) = eig((i + 1) % n, j);
                let (l0, h0) = eig((i + n - 1) % n, j);
                curv = curv.max((l1 - 2.0 * l + l0).abs()).max((h1 - 2.0 * h + h0).abs());
                if self.dim == 2 {
                    let (l1, h1) = eig(i, (j + 1) % n);
                    let (l0, h0) = eig(i, (j + n - 1) % n);
                    curv = curv.max((l1 - 2.0 * l + l0).abs()).max((h1 - 2.0 * h + h0).abs());
                }
            }
        }
        let margin = curv * self.dim as f64;
        let (lo, hi) = (lo - margin, hi + margin);
        if lo <= 0.0 {
            return Err(EnvError::EllipticityViolation(format!("sampled eigenvalue {lo:.3e} is not positive")));
        }
        Ok((lo, hi))
    }
}

fn check_dim(dim: usize) -> Result<(), EnvError> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(EnvError::UnsupportedDimension(dim))
    }
}

/// Uniform random point in `[0, width)^d`.
pub fn uniform_point<R: Rng>(rng: &mut R, dim: usize, width: f64) -> Point {
    let mut x = [0.0; MAX_DIM];
    for k in 0..dim {
        x[k] = width * rng.random::<f64>();
    }
    x
}
