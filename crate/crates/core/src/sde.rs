//! Time stepping of the forced diffusion and its path functionals.
//!
//! The state carried along a path is the position `X`, the additive
//! functional `A_f = ∫ f(X) ds` (trapezoid rule), an independent Brownian
//! coordinate `W¹`, the martingale `B̄ = ∫ σe₁·dW` with its bracket
//! `⟨B̄⟩ = ∫ e₁·a e₁ ds`, and the running maximum of `e₁·(X − X(0))`.

use std::io::{self, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{uniform_point, Coeffs, EnvKind, Environment, NeighborhoodCache};
use crate::functional::FunctionalSpec;
use crate::rng;
use crate::tensor::{dot, norm, Point, MAX_DIM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("state became non-finite at t = {time} (step too large?)")]
    NonFinite { time: f64 },
    #[error("time {0} is not a grid point of the path")]
    OffGrid(f64),
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    /// Euler plus the Itô correction `½ σσ′ (ΔW² − h)`; one dimension only.
    #[serde(rename = "milstein")]
    Milstein1D,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub step: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub lambda: f64,
    pub direction: Point,
    /// When false the companion coordinate `W¹` stays at zero.
    pub simulate_w1: bool,
}

impl IntegratorConfig {
    pub fn new(step: f64, seed: u64, lambda: f64) -> Self {
        IntegratorConfig { step, scheme: Scheme::EulerMaruyama, seed, lambda, direction: [1.0, 0.0], simulate_w1: true }
    }

    /// `min(10⁻², λ²/10)`, or `10⁻²` when `λ = 0`.
    pub fn default_step(lambda: f64) -> f64 {
        if lambda > 0.0 {
            (1e-2_f64).min(lambda * lambda / 10.0)
        } else {
            1e-2
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), SdeError> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(SdeError::InvalidConfig(format!("step = {} must be positive", self.step)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(SdeError::InvalidConfig(format!("lambda = {} must be non-negative", self.lambda)));
        }
        if (norm(&self.direction, dim) - 1.0).abs() > 1e-12 || (dim == 1 && self.direction[1] != 0.0) {
            return Err(SdeError::InvalidConfig("direction must be a unit vector".into()));
        }
        if self.scheme == Scheme::Milstein1D && dim != 1 {
            return Err(SdeError::InvalidConfig("the Milstein scheme is only available in one dimension".into()));
        }
        Ok(())
    }
}

/// Instantaneous state of a path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathState {
    pub index: usize,
    pub x: Point,
    pub afun: f64,
    pub w1: f64,
    pub bbar: f64,
    pub bracket: f64,
    /// `e₁·(X − X(0))`.
    pub lead: f64,
    pub running_max: f64,
}

/// Streaming integrator for a single path.
pub struct Integrator<'a> {
    env: &'a Environment,
    f: &'a FunctionalSpec,
    cfg: IntegratorConfig,
    rng: ChaCha8Rng,
    cache: NeighborhoodCache,
    x0: Point,
    state: PathState,
    coeffs: Coeffs,
    fval: f64,
}

impl<'a> Integrator<'a> {
    /// Path number `path_index` of the ensemble keyed by `cfg.seed`.
    pub fn new(
        env: &'a Environment,
        f: &'a FunctionalSpec,
        cfg: IntegratorConfig,
        x0: Point,
        path_index: u64,
    ) -> Result<Self, SdeError> {
        cfg.validate(env.dim())?;
        if f.dim() != env.dim() {
            return Err(SdeError::InvalidConfig("functional and environment dimensions differ".into()));
        }
        let mut cache = NeighborhoodCache::new();
        let coeffs = env.eval_cached(&x0, &mut cache);
        let fval = f.value(&x0, &coeffs);
        let rng = rng::stream(cfg.seed, rng::stream_id(rng::domain::PATH, path_index));
        Ok(Integrator {
            env,
            f,
            cfg,
            rng,
            cache,
            x0,
            state: PathState {
                index: 0,
                x: x0,
                afun: 0.0,
                w1: 0.0,
                bbar: 0.0,
                bracket: 0.0,
                lead: 0.0,
                running_max: 0.0,
            },
            coeffs,
            fval,
        })
    }

    pub fn state(&self) -> &PathState {
        &self.state
    }

    pub fn coeffs(&self) -> &Coeffs {
        &self.coeffs
    }

    /// `f` at the current position.
    pub fn f_value(&self) -> f64 {
        self.fval
    }

    pub fn time(&self) -> f64 {
        self.state.index as f64 * self.cfg.step
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    pub fn step(&mut self) -> Result<(), SdeError> {
        let dim = self.env.dim();
        let h = self.cfg.step;
        let sqh = h.sqrt();
        let dir = self.cfg.direction;
        let mut dw = [0.0; MAX_DIM];
        for k in 0..dim {
            let z: f64 = self.rng.sample(StandardNormal);
            dw[k] = sqh * z;
        }
        let dw1 = if self.cfg.simulate_w1 {
            let z: f64 = self.rng.sample(StandardNormal);
            sqh * z
        } else {
            0.0
        };
        let c = &self.coeffs;
        let sigma_e = c.sigma.mul_vec(&dir, dim);
        let a_e = c.a.mul_vec(&dir, dim);
        let mut x = self.state.x;
        let noise = c.sigma.mul_vec(&dw, dim);
        for k in 0..dim {
            x[k] += (c.b[k] + self.cfg.lambda * a_e[k]) * h + noise[k];
        }
        if self.cfg.scheme == Scheme::Milstein1D {
            // σσ′ = ½ a′ = b in one dimension.
            x[0] += 0.5 * c.b[0] * (dw[0] * dw[0] - h);
        }
        let bbar = self.state.bbar + dot(&sigma_e, &dw, dim);
        let bracket = self.state.bracket + dot(&a_e, &dir, dim) * h;

        let coeffs = self.env.eval_cached(&x, &mut self.cache);
        let fval = self.f.value(&x, &coeffs);
        let afun = self.state.afun + 0.5 * (self.fval + fval) * h;
        let mut disp = [0.0; MAX_DIM];
        for k in 0..dim {
            disp[k] = x[k] - self.x0[k];
        }
        let lead = dot(&dir, &disp, dim);
        if !(x[0].is_finite() && x[1].is_finite() && afun.is_finite() && bbar.is_finite()) {
            return Err(SdeError::NonFinite { time: self.time() + h });
        }
        self.state = PathState {
            index: self.state.index + 1,
            x,
            afun,
            w1: self.state.w1 + dw1,
            bbar,
            bracket,
            lead,
            running_max: self.state.running_max.max(lead),
        };
        self.coeffs = coeffs;
        self.fval = fval;
        Ok(())
    }

    /// Runs `n` steps, calling `observe` after each one with the new state,
    /// the coefficients there, and `f` there.
    pub fn run<F: FnMut(&PathState, &Coeffs, f64)>(&mut self, n: usize, mut observe: F) -> Result<(), SdeError> {
        for _ in 0..n {
            self.step()?;
            observe(&self.state, &self.coeffs, self.fval);
        }
        Ok(())
    }

    /// Appends `n` steps to `path`, which must end at the current state.
    pub fn extend(&mut self, path: &mut PathRecord, n: usize) -> Result<(), SdeError> {
        if path.is_empty() {
            path.push(&self.state);
        }
        debug_assert_eq!(path.last_index(), self.state.index);
        path.reserve(n);
        for _ in 0..n {
            self.step()?;
            path.push(&self.state);
        }
        Ok(())
    }
}

/// Column store of a simulated path on the grid `t_i = i·step`.
///
/// Leading samples can be dropped with [`PathRecord::trim_before`]; indices
/// stay absolute.
#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    pub dim: usize,
    pub step: f64,
    pub lambda: f64,
    pub direction: Point,
    offset: usize,
    x: Vec<f64>,
    lead: Vec<f64>,
    afun: Vec<f64>,
    w1: Vec<f64>,
    bbar: Vec<f64>,
    bracket: Vec<f64>,
    running_max: Vec<f64>,
}

/// CSV header of [`PathRecord::write_csv`] for the given dimension.
pub fn path_csv_header(dim: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=dim).map(|k| format!("X{k}")));
    cols.extend(["A_f", "W1", "Bbar"].map(String::from));
    cols.join(",")
}

impl PathRecord {
    pub fn new(dim: usize, cfg: &IntegratorConfig) -> Self {
        PathRecord {
            dim,
            step: cfg.step,
            lambda: cfg.lambda,
            direction: cfg.direction,
            offset: 0,
            x: Vec::new(),
            lead: Vec::new(),
            afun: Vec::new(),
            w1: Vec::new(),
            bbar: Vec::new(),
            bracket: Vec::new(),
            running_max: Vec::new(),
        }
    }

    /// Path through the given positions, started at index 0, with zero
    /// `A_f`, `W¹` and `B̄` columns. Used to drive path functionals on
    /// hand-built trajectories.
    pub fn from_positions(dim: usize, step: f64, lambda: f64, positions: &[Point]) -> Self {
        let cfg = IntegratorConfig::new(step, 0, lambda);
        let mut path = PathRecord::new(dim, &cfg);
        let Some(x0) = positions.first().copied() else {
            return path;
        };
        let mut running_max = f64::NEG_INFINITY;
        for (index, x) in positions.iter().enumerate() {
            let lead = dot(&cfg.direction, &[x[0] - x0[0], x[1] - x0[1]], dim);
            running_max = running_max.max(lead);
            path.push(&PathState { index, x: *x, afun: 0.0, w1: 0.0, bbar: 0.0, bracket: 0.0, lead, running_max });
        }
        path
    }

    fn reserve(&mut self, n: usize) {
        self.x.reserve(n * self.dim);
        for col in
            [&mut self.lead, &mut self.afun, &mut self.w1, &mut self.bbar, &mut self.bracket, &mut self.running_max]
        {
            col.reserve(n);
        }
    }

    fn push(&mut self, s: &PathState) {
        debug_assert!(self.is_empty() || s.index == self.last_index() + 1);
        if self.is_empty() {
            self.offset = s.index;
        }
        self.x.extend_from_slice(&s.x[..self.dim]);
        self.lead.push(s.lead);
        self.afun.push(s.afun);
        self.w1.push(s.w1);
        self.bbar.push(s.bbar);
        self.bracket.push(s.bracket);
        self.running_max.push(s.running_max);
    }

    pub fn is_empty(&self) -> bool {
        self.lead.is_empty()
    }

    /// Number of stored samples.
    pub fn len(&self) -> usize {
        self.lead.len()
    }

    pub fn first_index(&self) -> usize {
        self.offset
    }

    pub fn last_index(&self) -> usize {
        self.offset + self.lead.len() - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn x(&self, i: usize) -> Point {
        let j = (i - self.offset) * self.dim;
        let mut p = [0.0; MAX_DIM];
        p[..self.dim].copy_from_slice(&self.x[j..j + self.dim]);
        p
    }

    pub fn lead(&self, i: usize) -> f64 {
        self.lead[i - self.offset]
    }

    /// `e₁·(X − X(0))` over absolute indices `from..=to`.
    pub fn lead_range(&self, from: usize, to: usize) -> &[f64] {
        &self.lead[from - self.offset..=to - self.offset]
    }

    pub fn afun(&self, i: usize) -> f64 {
        self.afun[i - self.offset]
    }

    pub fn w1(&self, i: usize) -> f64 {
        self.w1[i - self.offset]
    }

    pub fn bbar(&self, i: usize) -> f64 {
        self.bbar[i - self.offset]
    }

    pub fn bracket(&self, i: usize) -> f64 {
        self.bracket[i - self.offset]
    }

    pub fn running_max(&self, i: usize) -> f64 {
        self.running_max[i - self.offset]
    }

    /// Grid index of time `t`, if `t` is a stored grid point.
    pub fn index_of_time(&self, t: f64) -> Option<usize> {
        if !(t >= 0.0) {
            return None;
        }
        let i = (t / self.step).round();
        if (i * self.step - t).abs() > 1e-9 * t.max(1.0) {
            return None;
        }
        let i = i as usize;
        (!self.is_empty() && i >= self.offset && i <= self.last_index()).then_some(i)
    }

    /// Drops samples with index below `i`.
    pub fn trim_before(&mut self, i: usize) {
        if self.is_empty() || i <= self.offset {
            return;
        }
        let k = (i - self.offset).min(self.len());
        self.x.drain(..k * self.dim);
        for col in
            [&mut self.lead, &mut self.afun, &mut self.w1, &mut self.bbar, &mut self.bracket, &mut self.running_max]
        {
            col.drain(..k);
        }
        self.offset += k;
    }

    /// Writes `t, X1..Xd, A_f, W1, Bbar` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", path_csv_header(self.dim))?;
        if self.is_empty() {
            return Ok(());
        }
        for i in self.first_index()..=self.last_index() {
            write!(out, "{}", self.time(i))?;
            let x = self.x(i);
            for v in &x[..self.dim] {
                write!(out, ",{v}")?;
            }
            writeln!(out, ",{},{},{}", self.afun(i), self.w1(i), self.bbar(i))?;
        }
        Ok(())
    }
}

/// Simulates path 0 of the ensemble `cfg.seed` from the origin.
pub fn integrate(
    env: &Environment,
    f: &FunctionalSpec,
    cfg: &IntegratorConfig,
    horizon: f64,
) -> Result<PathRecord, SdeError> {
    integrate_from(env, f, cfg, horizon, [0.0; MAX_DIM], 0)
}

pub fn integrate_from(
    env: &Environment,
    f: &FunctionalSpec,
    cfg: &IntegratorConfig,
    horizon: f64,
    x0: Point,
    path_index: u64,
) -> Result<PathRecord, SdeError> {
    let n = steps_for(horizon, cfg.step)?;
    let mut integ = Integrator::new(env, f, cfg.clone(), x0, path_index)?;
    let mut path = PathRecord::new(env.dim(), cfg);
    integ.extend(&mut path, n)?;
    Ok(path)
}

/// Number of steps covering `horizon`, which must be at least one step.
pub fn steps_for(horizon: f64, step: f64) -> Result<usize, SdeError> {
    if !(horizon >= step * (1.0 - 1e-9)) || !horizon.is_finite() {
        return Err(SdeError::InvalidConfig(format!("horizon {horizon} is shorter than one step {step}")));
    }
    Ok((horizon / step - 1e-9).ceil() as usize)
}

/// Environment and starting point of ensemble member `index`.
///
/// Random fields get an independent realization per member (annealed
/// averaging); periodic fields start from a uniform point of the unit cell,
/// which samples the equilibrium of the environment seen from the particle.
pub fn ensemble_member(env: &Environment, seed: u64, index: u64) -> (Environment, Point) {
    match env.kind() {
        EnvKind::RandomBumps => (env.reseeded(index), [0.0; MAX_DIM]),
        EnvKind::Periodic => {
            let mut g = rng::stream(seed, rng::stream_id(rng::domain::START, index));
            (env.clone(), uniform_point(&mut g, env.dim(), 1.0))
        }
        EnvKind::Constant => (env.clone(), [0.0; MAX_DIM]),
    }
}

/// Log of the Girsanov density `λB̄(t) − ½λ²⟨B̄⟩(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GirsanovWeight {
    pub logw: f64,
}

impl GirsanovWeight {
    pub fn value(&self) -> f64 {
        self.logw.exp()
    }
}

pub fn weight(path: &PathRecord, lambda: f64, t: f64) -> Result<GirsanovWeight, SdeError> {
    let i = path.index_of_time(t).ok_or(SdeError::OffGrid(t))?;
    Ok(GirsanovWeight { logw: lambda * path.bbar(i) - 0.5 * lambda * lambda * path.bracket(i) })
}

/// Largest deviation from `B̄(t) = e₁·(X(t) − X(0)) − ∫ e₁·b(X) du` over the
/// stored grid, with the integral by the trapezoid rule. Meaningful for
/// unforced paths.
pub fn bbar_decomposition_check(path: &PathRecord, env: &Environment) -> f64 {
    if path.is_empty() {
        return 0.0;
    }
    let dim = path.dim;
    let drift = |i: usize| dot(&env.eval(&path.x(i)).b, &path.direction, dim);
    let first = path.first_index();
    let mut integral = 0.0;
    let mut prev = drift(first);
    let mut worst: f64 = 0.0;
    for i in first + 1..=path.last_index() {
        let cur = drift(i);
        integral += 0.5 * (prev + cur) * path.step;
        prev = cur;
        let lead = path.lead(i) - path.lead(first);
        let bbar = path.bbar(i) - path.bbar(first);
        worst = worst.max((bbar - (lead - integral)).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{PeriodicCoefficients, TrigProfile};
    use crate::functional::{make_functional, FunctionalDesc};

    fn periodic(mean: f64, amp: f64) -> Environment {
        Environment::make_periodic(1, PeriodicCoefficients::scalar(TrigProfile::sine(mean, amp, &[1]))).unwrap()
    }

    #[test]
    fn zero_functional_leaves_afun_zero() {
        let env = periodic(2.0, 1.0);
        let f = FunctionalSpec::zero(1);
        let path = integrate(&env, &f, &IntegratorConfig::new(0.01, 1, 0.3), 5.0).unwrap();
        assert_eq!(path.len(), 501);
        for i in 0..=path.last_index() {
            assert_eq!(path.afun(i), 0.0);
        }
    }

    #[test]
    fn path_invariants_hold() {
        let env = periodic(2.0, 1.0);
        let f = make_functional(&env, &FunctionalDesc::DriftComponent).unwrap();
        let path = integrate(&env, &f, &IntegratorConfig::new(0.01, 3, 0.5), 20.0).unwrap();
        let kappa = env.bounds().kappa;
        assert_eq!((path.afun(0), path.bbar(0), path.w1(0), path.running_max(0)), (0.0, 0.0, 0.0, 0.0));
        for i in 1..=path.last_index() {
            assert!(path.running_max(i) >= path.running_max(i - 1));
            assert!(path.running_max(i) >= path.lead(i));
            assert!(path.bracket(i) >= path.bracket(i - 1));
            let t = path.time(i);
            assert!(path.bracket(i) >= kappa * t * (1.0 - 1e-12) && path.bracket(i) <= t / kappa);
        }
    }

    #[test]
    fn reproducible_and_streaming_equivalent() {
        let env = Environment::make_random_bumps(2, 0.5, 1.0, 1.0, 1.0, 4).unwrap();
        let f = make_functional(&env, &FunctionalDesc::DriftComponent).unwrap();
        let cfg = IntegratorConfig::new(0.01, 9, 0.2);
        let a = integrate(&env, &f, &cfg, 3.0).unwrap();
        assert_eq!(a, integrate(&env, &f, &cfg, 3.0).unwrap());
        let mut integ = Integrator::new(&env, &f, cfg.clone(), [0.0; 2], 0).unwrap();
        let mut b = PathRecord::new(2, &cfg);
        integ.extend(&mut b, 100).unwrap();
        integ.extend(&mut b, 200).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trimming_keeps_absolute_indices() {
        let env = periodic(2.0, 1.0);
        let f = FunctionalSpec::zero(1);
        let full = integrate(&env, &f, &IntegratorConfig::new(0.01, 3, 0.5), 2.0).unwrap();
        let mut trimmed = full.clone();
        trimmed.trim_before(50);
        assert_eq!(trimmed.first_index(), 50);
        assert_eq!(trimmed.len(), 151);
        assert_eq!(trimmed.x(120), full.x(120));
        assert_eq!(trimmed.index_of_time(0.2), None);
        assert_eq!(trimmed.index_of_time(0.7), Some(70));
    }

    #[test]
    fn weight_is_trivial_without_forcing_and_off_grid_errors() {
        let env = periodic(2.0, 1.0);
        let f = FunctionalSpec::zero(1);
        let path = integrate(&env, &f, &IntegratorConfig::new(0.01, 3, 0.0), 1.0).unwrap();
        assert_eq!(weight(&path, 0.0, 1.0).unwrap().value(), 1.0);
        assert_eq!(weight(&path, 0.3, 0.555), Err(SdeError::OffGrid(0.555)));
    }

    #[test]
    fn decomposition_is_exact_for_constant_coefficients() {
        let env = Environment::make_constant(2, 1.0).unwrap();
        let f = FunctionalSpec::zero(2);
        let path = integrate(&env, &f, &IntegratorConfig::new(0.01, 3, 0.0), 10.0).unwrap();
        assert!(bbar_decomposition_check(&path, &env) < 1e-12);
    }

    #[test]
    fn milstein_requires_one_dimension() {
        let mut cfg = IntegratorConfig::new(0.01, 0, 0.0);
        cfg.scheme = Scheme::Milstein1D;
        assert!(cfg.validate(2).is_err());
        assert!(cfg.validate(1).is_ok());
        cfg.direction = [0.6, 0.8];
        assert!(cfg.validate(1).is_err());
    }

    #[test]
    fn default_step_rule() {
        assert_eq!(IntegratorConfig::default_step(0.0), 1e-2);
        assert_eq!(IntegratorConfig::default_step(1.0), 1e-2);
        assert!((IntegratorConfig::default_step(0.1) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn csv_dump_has_fixed_header() {
        let env = Environment::make_constant(2, 1.0).unwrap();
        let f = FunctionalSpec::zero(2);
        let path = integrate(&env, &f, &IntegratorConfig::new(0.5, 3, 0.0), 1.0).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,X1,X2,A_f,W1,Bbar");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,0,0,0,0,0"));
    }
}
