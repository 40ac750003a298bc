//! Path-ensemble estimators of the long-time quantities.
//!
//! Every estimator is a map over path indices `0..n_paths` followed by a
//! reduction in index order, so results depend only on the inputs and the
//! seed, never on the thread count. Path `i` uses ensemble member `i` (an
//! independent environment realization for random fields, a uniform start in
//! the unit cell for periodic ones).

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{Coeffs, Environment};
use crate::functional::FunctionalSpec;
use crate::homogenize::TorusField;
use crate::regeneration::{
    harvest_with, ratio_estimate, HarvestOptions, RatioQuantity, RegenConfig, RegenError, RegenMode,
};
use crate::sde::{ensemble_member, Integrator, IntegratorConfig, PathState, Scheme, SdeError};
use crate::stats::{batch_means, covariance, mean, plain_mean, richardson, EstimateWithCI, Method, ScalingFit};
use crate::tensor::{dot, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("horizon {horizon} is shorter than the required {required}")]
    HorizonTooShort { horizon: f64, required: f64 },
    #[error("invalid estimator input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Regen(#[from] RegenError),
}

/// Discretization shared by the ensemble estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleOptions {
    /// Time step; `None` selects [`IntegratorConfig::default_step`].
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
}

fn default_scheme() -> Scheme {
    Scheme::EulerMaruyama
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions { step: None, scheme: Scheme::EulerMaruyama }
    }
}

impl EnsembleOptions {
    pub fn with_step(step: f64) -> Self {
        EnsembleOptions { step: Some(step), ..Default::default() }
    }

    fn config(&self, seed: u64, lambda: f64) -> IntegratorConfig {
        let mut cfg = IntegratorConfig::new(self.step.unwrap_or(IntegratorConfig::default_step(lambda)), seed, lambda);
        cfg.scheme = self.scheme;
        cfg
    }
}

fn check_paths(n_paths: usize) -> Result<(), EstimatorError> {
    if n_paths < 2 {
        return Err(EstimatorError::InvalidInput("at least two paths are needed".into()));
    }
    Ok(())
}

fn steps(horizon: f64, step: f64) -> Result<usize, EstimatorError> {
    if !(horizon >= step) || !horizon.is_finite() {
        return Err(EstimatorError::HorizonTooShort { horizon, required: step });
    }
    Ok((horizon / step).round() as usize)
}

/// Trapezoidal time integral of an extra observable along a path.
#[derive(Default)]
struct SideIntegral {
    prev: Option<f64>,
    total: f64,
}

impl SideIntegral {
    fn push(&mut self, v: f64, h: f64) {
        if let Some(p) = self.prev {
            self.total += 0.5 * (p + v) * h;
        }
        self.prev = Some(v);
    }
}

/// Runs path `index` for `n` steps, calling `observe` on the initial state
/// and after every step. Returns the final state and the start.
fn run_path(
    env: &Environment,
    f: &FunctionalSpec,
    cfg: &IntegratorConfig,
    index: usize,
    n: usize,
    mut observe: impl FnMut(&PathState, &Coeffs, f64),
) -> Result<(PathState, Point), SdeError> {
    let (member, x0) = ensemble_member(env, cfg.seed, index as u64);
    let mut integ = Integrator::new(&member, f, cfg.clone(), x0, index as u64)?;
    observe(integ.state(), integ.coeffs(), integ.f_value());
    integ.run(n, observe)?;
    Ok((*integ.state(), x0))
}

fn map_paths<T, F>(n_paths: usize, per_path: F) -> Result<Vec<T>, EstimatorError>
where
    T: Send,
    F: Fn(usize) -> Result<T, SdeError> + Sync,
{
    (0..n_paths).into_par_iter().map(|i| per_path(i).map_err(EstimatorError::from)).collect()
}

fn displacement(state: &PathState, x0: &Point, e: &Point, dim: usize) -> f64 {
    let d = [state.x[0] - x0[0], state.x[1] - x0[1]];
    dot(&d, e, dim)
}

/// `ν_λ(f)` from `A_f(t)/t` over independent paths, batch-means error.
pub fn ergodic_nu(
    env: &Environment,
    f: &FunctionalSpec,
    lambda: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    opts: &EnsembleOptions,
) -> Result<EstimateWithCI, EstimatorError> {
    check_paths(n_paths)?;
    if lambda > 0.0 && horizon < 10.0 / (lambda * lambda) {
        return Err(EstimatorError::HorizonTooShort { horizon, required: 10.0 / (lambda * lambda) });
    }
    let cfg = opts.config(seed, lambda);
    let n = steps(horizon, cfg.step)?;
    let t = n as f64 * cfg.step;
    let vals = map_paths(n_paths, |i| Ok(run_path(env, f, &cfg, i, n, |_, _, _| {})?.0.afun / t))?;
    Ok(batch_means(&vals, None))
}

/// `e·ℓ(λ)` from `e·(X(t) − X(0))/t` over independent paths.
pub fn ergodic_ell(
    env: &Environment,
    lambda: f64,
    e: &Point,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    opts: &EnsembleOptions,
) -> Result<EstimateWithCI, EstimatorError> {
    check_paths(n_paths)?;
    let cfg = opts.config(seed, lambda);
    let n = steps(horizon, cfg.step)?;
    let t = n as f64 * cfg.step;
    let zero = FunctionalSpec::zero(env.dim());
    let vals = map_paths(n_paths, |i| {
        let (s, x0) = run_path(env, &zero, &cfg, i, n, |_, _, _| {})?;
        Ok(displacement(&s, &x0, e, env.dim()) / t)
    })?;
    Ok(batch_means(&vals, None))
}

/// `e·Σe` at `λ = 0` from `E[(e·(X(t) − X(0)))²]/t`.
pub fn diffusivity(
    env: &Environment,
    e: &Point,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    opts: &EnsembleOptions,
) -> Result<EstimateWithCI, EstimatorError> {
    check_paths(n_paths)?;
    let cfg = opts.config(seed, 0.0);
    let n = steps(horizon, cfg.step)?;
    let t = n as f64 * cfg.step;
    let zero = FunctionalSpec::zero(env.dim());
    let vals = map_paths(n_paths, |i| {
        let (s, x0) = run_path(env, &zero, &cfg, i, n, |_, _, _| {})?;
        Ok(displacement(&s, &x0, e, env.dim()).powi(2) / t)
    })?;
    Ok(plain_mean(&vals))
}

/// `A_f(t)` and `A_g(t)` on every path of the unforced dynamics.
fn pair_integrals(
    env: &Environment,
    f: &FunctionalSpec,
    g: &FunctionalSpec,
    cfg: &IntegratorConfig,
    n: usize,
    n_paths: usize,
) -> Result<Vec<(f64, f64)>, EstimatorError> {
    let zero = FunctionalSpec::zero(env.dim());
    let h = cfg.step;
    map_paths(n_paths, |i| {
        let mut af = SideIntegral::default();
        let mut ag = SideIntegral::default();
        run_path(env, &zero, cfg, i, n, |s, c, _| {
            af.push(f.value(&s.x, c), h);
            ag.push(g.value(&s.x, c), h);
        })?;
        Ok((af.total, ag.total))
    })
}

/// `Σ(f, g)` from `E[A_f(t)A_g(t)]/t` at `λ = 0`. Symmetric in `(f, g)` for
/// a shared seed.
pub fn sigma_cov(
    env: &Environment,
    f: &FunctionalSpec,
    g: &FunctionalSpec,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    opts: &EnsembleOptions,
) -> Result<EstimateWithCI, EstimatorError> {
    check_paths(n_paths)?;
    let cfg = opts.config(seed, 0.0);
    let n = steps(horizon, cfg.step)?;
    let t = n as f64 * cfg.step;
    let pairs = pair_integrals(env, f, g, &cfg, n, n_paths)?;
    let vals: Vec<f64> = pairs.iter().map(|(a, b)| a * b / t).collect();
    Ok(plain_mean(&vals))
}

/// `Γ̄(f)` from `E[A_f(t)B̄(t)]/t` at `λ = 0`.
pub fn gamma_bar(
    env: &Environment,
    f: &FunctionalSpec,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    opts: &EnsembleOptions,
) -> Result<EstimateWithCI, EstimatorError> {
    check_paths(n_paths)?;
    let cfg = opts.config(seed, 0.0);
    let n = steps(horizon, cfg.step)?;
    let t = n as f64 * cfg.step;
    let vals = map_paths(n_paths, |i| {
        let (s, _) = run_path(env, f, &cfg, i, n, |_, _, _| {})?;
        Ok(s.afun * s.bbar / t)
    })?;
    Ok(plain_mean(&vals))
}

/// Time average `(1/t)∫ f(X)χ(X) ds` at `λ = 0` with `χ` interpolated from
/// a torus field. Its limit is `−½Γ̄(f)`.
pub fn corrector_pairing(
    env: &Environment,
    f: &FunctionalSpec,
    chi: &TorusField,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    opts: &EnsembleOptions,
) -> Result<EstimateWithCI, EstimatorError> {
    check_paths(n_paths)?;
    if chi.grid.dim != env.dim() {
        return Err(EstimatorError::InvalidInput("corrector and environment dimensions differ".into()));
    }
    let cfg = opts.config(seed, 0.0);
    let n = steps(horizon, cfg.step)?;
    let h = cfg.step;
    let t = n as f64 * h;
    let vals = map_paths(n_paths, |i| {
        let mut acc = SideIntegral::default();
        run_path(env, f, &cfg, i, n, |s, _, fv| acc.push(fv * chi.interpolate(&s.x), h))?;
        Ok(acc.total / t)
    })?;
    Ok(batch_means(&vals, None))
}

/// Drift of `A^ε_f(t) = εA_f(t/ε²)` over `t ∈ [0, 1]` under forcing
/// `λ = √α·ε`, one estimate per `ε`. The reported slope is the log-log
/// exponent of the drift against `ε`, which vanishes for a constant drift.
pub fn lebowitz_rost_drift(
    env: &Environment,
    f: &FunctionalSpec,
    alpha: f64,
    eps_grid: &[f64],
    n_paths: usize,
    seed: u64,
    opts: &EnsembleOptions,
) -> Result<ScalingFit, EstimatorError> {
    check_paths(n_paths)?;
    if !(alpha >= 0.0) || eps_grid.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
        return Err(EstimatorError::InvalidInput("need alpha ≥ 0 and ε in (0, 1]".into()));
    }
    let mut values = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let lambda = alpha.sqrt() * eps;
        let cfg = opts.config(seed, lambda);
        let n = steps(1.0 / (eps * eps), cfg.step)?;
        let t = n as f64 * cfg.step * eps * eps;
        // The endpoint is the efficient drift estimator for a Brownian path.
        let vals = map_paths(n_paths, |i| Ok(eps * run_path(env, f, &cfg, i, n, |_, _, _| {})?.0.afun / t))?;
        values.push(plain_mean(&vals));
    }
    Ok(ScalingFit::fit(eps_grid.to_vec(), values))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmaxScaling {
    /// `E max_{s ≤ λ⁻²} |A_f(s)|^p` per `λ` with the log-log slope.
    pub fit: ScalingFit,
    /// The same values divided by `(2λt‖F‖_∞)^p` at `t = λ⁻²`.
    pub normalized: Vec<f64>,
    pub p: f64,
}

/// `E max_{s ≤ t}|A_f(s)|^p` at `t = λ⁻²` under forcing `λ`, for each `λ`.
pub fn amax_scaling(
    env: &Environment,
    f: &FunctionalSpec,
    lambdas: &[f64],
    p: f64,
    n_paths: usize,
    seed: u64,
    opts: &EnsembleOptions,
) -> Result<AmaxScaling, EstimatorError> {
    check_paths(n_paths)?;
    if lambdas.len() < 2 || lambdas.iter().any(|l| !(*l > 0.0 && *l <= 1.0)) || !(p > 0.0) {
        return Err(EstimatorError::InvalidInput("need at least two λ in (0, 1] and p > 0".into()));
    }
    let mut values = Vec::with_capacity(lambdas.len());
    let mut normalized = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let cfg = opts.config(seed, lambda);
        let t = 1.0 / (lambda * lambda);
        let n = steps(t, cfg.step)?;
        let vals = map_paths(n_paths, |i| {
            let mut m: f64 = 0.0;
            run_path(env, f, &cfg, i, n, |s, _, _| m = m.max(s.afun.abs()))?;
            Ok(m.powf(p))
        })?;
        let est = plain_mean(&vals);
        let scale = (2.0 * lambda * t * f.sup_norm).powf(p);
        normalized.push(if scale > 0.0 { est.value / scale } else { 0.0 });
        values.push(est);
    }
    Ok(AmaxScaling { fit: ScalingFit::fit(lambdas.to_vec(), values), normalized, p })
}

/// Knobs of [`einstein_mc`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EinsteinOptions {
    pub harvest: HarvestOptions,
    /// Success probability of the regeneration coins.
    pub delta: f64,
    pub mode: RegenMode,
    /// Horizon and path count of the unforced diffusivity estimate.
    pub sigma0_horizon: f64,
    pub sigma0_paths: usize,
}

impl Default for EinsteinOptions {
    fn default() -> Self {
        EinsteinOptions {
            harvest: HarvestOptions::default(),
            delta: 0.5,
            mode: RegenMode::Coin,
            sigma0_horizon: 200.0,
            sigma0_paths: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EinsteinMc {
    /// `e₁·ℓ(λ)/λ` per `λ`, with a first-order extrapolant to `λ = 0`.
    pub mobility: ScalingFit,
    /// `e₁·Σ_λe₁` per `λ`.
    pub sigma_lambda: Vec<EstimateWithCI>,
    /// `e₁·Σe₁` from the unforced dynamics.
    pub sigma0: EstimateWithCI,
    pub cycles: Vec<usize>,
}

/// Mobility `ℓ(λ)/λ` from regeneration cycles over a decreasing `λ` grid,
/// next to the unforced diffusivity.
pub fn einstein_mc(
    env: &Environment,
    lambdas: &[f64],
    n_cycles: usize,
    seed: u64,
    opts: &EinsteinOptions,
) -> Result<EinsteinMc, EstimatorError> {
    if lambdas.len() < 3 || lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(EstimatorError::InvalidInput("need at least three strictly decreasing λ".into()));
    }
    let zero = FunctionalSpec::zero(env.dim());
    let e1 = [1.0, 0.0];
    let mut mobility = Vec::new();
    let mut sigma_lambda = Vec::new();
    let mut cycles = Vec::new();
    for &lambda in lambdas {
        let cfg = RegenConfig::for_env(env, &zero, lambda, opts.delta, opts.mode)?;
        let res = harvest_with(env, &zero, &cfg, n_cycles, seed, &opts.harvest)?;
        mobility.push(ratio_estimate(&res.records, RatioQuantity::Ell, &e1)?.scale(1.0 / lambda));
        sigma_lambda.push(ratio_estimate(&res.records, RatioQuantity::SigmaLambda, &e1)?);
        cycles.push(res.pool().len());
    }
    let sigma0 = diffusivity(
        env,
        &e1,
        opts.sigma0_horizon,
        opts.sigma0_paths,
        seed,
        &EnsembleOptions { step: Some(opts.harvest.step), scheme: opts.harvest.scheme },
    )?;
    Ok(EinsteinMc {
        mobility: ScalingFit::fit(lambdas.to_vec(), mobility).with_extrapolation(1.0),
        sigma_lambda,
        sigma0,
        cycles,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoobCheck {
    /// `E[(sup_{s≤t}|A_g(s)|)²]`.
    pub lhs: EstimateWithCI,
    /// `8t‖g‖²_{H⁻¹}`.
    pub bound: f64,
    /// `bound / lhs`.
    pub slack: f64,
    /// `lhs − 3se ≤ bound`.
    pub holds: bool,
}

/// Maximal inequality for `A_g` at `λ = 0` against a supplied `H⁻¹` norm.
pub fn doob_bound_check(
    env: &Environment,
    g: &FunctionalSpec,
    t: f64,
    n_paths: usize,
    seed: u64,
    hminus1_norm: f64,
    opts: &EnsembleOptions,
) -> Result<DoobCheck, EstimatorError> {
    check_paths(n_paths)?;
    let cfg = opts.config(seed, 0.0);
    let n = steps(t, cfg.step)?;
    let vals = map_paths(n_paths, |i| {
        let mut m: f64 = 0.0;
        run_path(env, g, &cfg, i, n, |s, _, _| m = m.max(s.afun.abs()))?;
        Ok(m * m)
    })?;
    let lhs = plain_mean(&vals);
    let bound = 8.0 * n as f64 * cfg.step * hminus1_norm * hminus1_norm;
    Ok(DoobCheck {
        lhs,
        bound,
        slack: if lhs.value > 0.0 { bound / lhs.value } else { f64::INFINITY },
        holds: lhs.value - 3.0 * lhs.se <= bound,
    })
}

/// Second moments `E[(εA_f(s/ε²))²]` at the given macroscopic times, at
/// `λ = 0`; the limit is `Σ(f)·s`.
pub fn kiva_marginals(
    env: &Environment,
    f: &FunctionalSpec,
    eps: f64,
    times: &[f64],
    n_paths: usize,
    seed: u64,
    opts: &EnsembleOptions,
) -> Result<Vec<EstimateWithCI>, EstimatorError> {
    check_paths(n_paths)?;
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || !(times[0] > 0.0) {
        return Err(EstimatorError::InvalidInput("times must be positive and increasing".into()));
    }
    let cfg = opts.config(seed, 0.0);
    let marks: Vec<usize> = times.iter().map(|s| steps(s / (eps * eps), cfg.step)).collect::<Result<_, _>>()?;
    let n = *marks.last().expect("non-empty");
    let per_path = map_paths(n_paths, |i| {
        let mut out = Vec::with_capacity(marks.len());
        run_path(env, f, &cfg, i, n, |s, _, _| {
            if marks.contains(&s.index) {
                out.push((eps * s.afun).powi(2));
            }
        })?;
        Ok(out)
    })?;
    Ok((0..marks.len()).map(|k| plain_mean(&per_path.iter().map(|v| v[k]).collect::<Vec<_>>())).collect())
}

/// Sample covariance matrix of `λ·(X(λ⁻²) − X(0), A_f(λ⁻²) + W¹(λ⁻²))`,
/// row-major of size `d + 1`, each entry with a standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointCovariance {
    pub lambda: f64,
    pub size: usize,
    pub entries: Vec<EstimateWithCI>,
}

impl JointCovariance {
    pub fn get(&self, i: usize, j: usize) -> &EstimateWithCI {
        &self.entries[i * self.size + j]
    }
}

pub fn joint_covariance(
    env: &Environment,
    f: &FunctionalSpec,
    lambda: f64,
    n_paths: usize,
    seed: u64,
    opts: &EnsembleOptions,
) -> Result<JointCovariance, EstimatorError> {
    check_paths(n_paths)?;
    if !(lambda > 0.0) {
        return Err(EstimatorError::InvalidInput("lambda must be positive".into()));
    }
    let cfg = opts.config(seed, lambda);
    let n = steps(1.0 / (lambda * lambda), cfg.step)?;
    let dim = env.dim();
    let rows = map_paths(n_paths, |i| {
        let (s, x0) = run_path(env, f, &cfg, i, n, |_, _, _| {})?;
        let mut z: Vec<f64> = (0..dim).map(|k| lambda * (s.x[k] - x0[k])).collect();
        z.push(lambda * (s.afun + s.w1));
        Ok(z)
    })?;
    let size = dim + 1;
    let cols: Vec<Vec<f64>> = (0..size).map(|k| rows.iter().map(|r| r[k]).collect()).collect();
    let means: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let mut entries = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let prods: Vec<f64> = (0..n_paths).map(|p| (cols[i][p] - means[i]) * (cols[j][p] - means[j])).collect();
            let mut est = plain_mean(&prods);
            est.value = covariance(&cols[i], &cols[j]);
            entries.push(est);
        }
    }
    Ok(JointCovariance { lambda, size, entries })
}

/// `Cov(e₁·X(t), A_f(t))/t` at `λ = 0`; vanishes in the limit.
pub fn orthogonality(
    env: &Environment,
    f: &FunctionalSpec,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    opts: &EnsembleOptions,
) -> Result<EstimateWithCI, EstimatorError> {
    check_paths(n_paths)?;
    let cfg = opts.config(seed, 0.0);
    let n = steps(horizon, cfg.step)?;
    let t = n as f64 * cfg.step;
    let pairs = map_paths(n_paths, |i| {
        let (s, _) = run_path(env, f, &cfg, i, n, |_, _, _| {})?;
        Ok((s.lead, s.afun))
    })?;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let prods: Vec<f64> = pairs.iter().map(|(x, y)| (x - mx) * (y - my) / t).collect();
    let mut est = plain_mean(&prods);
    est.value = covariance(&xs, &ys) / t;
    est.method = Method::PlainMean;
    Ok(est)
}

/// First-order extrapolation to a vanishing time step: runs `job` at `2h`
/// and `h` and combines them, assuming a bias linear in the step.
pub fn extrapolate_in_step(
    step: f64,
    scheme: Scheme,
    job: impl Fn(&EnsembleOptions) -> Result<EstimateWithCI, EstimatorError>,
) -> Result<EstimateWithCI, EstimatorError> {
    let coarse = job(&EnsembleOptions { step: Some(2.0 * step), scheme })?;
    let fine = job(&EnsembleOptions { step: Some(step), scheme })?;
    Ok(richardson(&coarse, &fine, 2.0, 1.0))
}

/// JSON-ready summary of one estimator run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultObject {
    pub name: String,
    pub params: BTreeMap<String, String>,
    pub value: f64,
    pub se: f64,
    pub n: usize,
    pub seed: u64,
    pub runtime_s: f64,
}

impl ResultObject {
    /// Runs `job` and packages its estimate with the wall-clock time.
    pub fn timed<E>(
        name: &str,
        params: &[(&str, String)],
        seed: u64,
        job: impl FnOnce() -> Result<EstimateWithCI, E>,
    ) -> Result<(ResultObject, EstimateWithCI), E> {
        let start = Instant::now();
        let est = job()?;
        Ok((
            ResultObject {
                name: name.to_string(),
                params: params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
                value: est.value,
                se: est.se,
                n: est.n,
                seed,
                runtime_s: start.elapsed().as_secs_f64(),
            },
            est,
        ))
    }
}
