//! Regeneration times of the forced process and cycle records.
//!
//! The skeleton works on the lattice `λ⁻²ℤ` and the lead coordinate
//! `x(t) = e₁·(X(t) − X(0))`:
//!
//! * `V₀ = T_{a/λ}`, `V_{k+1} = T_{M(⌈V_k⌉) + R}`; the candidate `Ñ` is the
//!   first `⌈V_k⌉` whose oscillation over `[V_k, ⌈V_k⌉]` is at most `R/2`.
//!   Further candidates restart from `Ñ` with `a = 3λR`.
//! * `N` is the first candidate with a success, `S = N + λ⁻²`,
//!   `J = S + T_{−R}∘θ_S`, and `R_k = ⌈J⌉`. The next search starts at `R_k`
//!   with `a_k = λ(M(R_k) − x(R_k) + R)`.
//! * `τ = S_K` for the first `K` without backtrack. Since that event is not
//!   decidable in finite time, a candidate is certified once no backtrack
//!   occurs within the censoring horizon `H_cens` after `S_K`.
//!
//! Levels `T_L` are detected on the time grid with linear interpolation of
//! the crossing time.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::Environment;
use crate::functional::FunctionalSpec;
use crate::rng;
use crate::sde::{ensemble_member, Integrator, IntegratorConfig, PathRecord, Scheme, SdeError};
use crate::stats::{ratio_of_means, EstimateWithCI};
use crate::tensor::{Point, MAX_DIM};

/// Minimum size of the i.i.d. pool accepted by [`ratio_estimate`].
pub const MIN_POOL: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegenError {
    #[error("invalid regeneration configuration: {0}")]
    InvalidConfig(String),
    #[error("path ended before the current cycle was certified ({censored} cycles censored)")]
    HorizonExceeded { censored: usize },
    #[error("step budget of {budget} exhausted with {collected} of {wanted} cycles")]
    BudgetExhausted { budget: u64, collected: usize, wanted: usize },
    #[error("only {available} cycles in the pool, at least {required} needed")]
    TooFewCycles { available: usize, required: usize },
    #[error(transparent)]
    Sde(#[from] SdeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegenMode {
    /// Success iff an independent coin shows 1 and the path then performs the
    /// coupling event (stays in `U^z`, lands in `B^z`).
    Bernoulli,
    /// Success iff the coupling event occurs.
    EventBased,
    /// Success iff an independent Bernoulli(δ) coin shows 1.
    Coin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegenConfig {
    pub lambda: f64,
    pub r_assump: f64,
    pub r_f: f64,
    pub delta: f64,
    pub mode: RegenMode,
    /// Censoring horizon in units of `λ⁻²`.
    pub h_cens_factor: f64,
}

pub const DEFAULT_H_CENS_FACTOR: f64 = 50.0;

impl RegenConfig {
    pub fn new(lambda: f64, r_assump: f64, r_f: f64, delta: f64, mode: RegenMode) -> Result<Self, RegenError> {
        let cfg = RegenConfig { lambda, r_assump, r_f, delta, mode, h_cens_factor: DEFAULT_H_CENS_FACTOR };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Ranges taken from the environment and the functional. Unbounded ranges
    /// (periodic fields) are replaced by the period, 1.
    pub fn for_env(
        env: &Environment,
        f: &FunctionalSpec,
        lambda: f64,
        delta: f64,
        mode: RegenMode,
    ) -> Result<Self, RegenError> {
        let finite = |r: f64| if r.is_finite() { r } else { 1.0 };
        RegenConfig::new(lambda, finite(env.range()), finite(f.locality_radius), delta, mode)
    }

    pub fn with_censoring_factor(mut self, factor: f64) -> Self {
        self.h_cens_factor = factor;
        self
    }

    pub fn validate(&self) -> Result<(), RegenError> {
        let bad = |m: String| Err(RegenError::InvalidConfig(m));
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad(format!("lambda = {} must lie in (0, 1]", self.lambda));
        }
        if !(self.r_assump >= 0.0 && self.r_assump.is_finite() && self.r_f >= 0.0 && self.r_f.is_finite()) {
            return bad("ranges must be finite and non-negative".into());
        }
        if self.mode != RegenMode::EventBased && !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} must lie in (0, 1)", self.delta));
        }
        if !(self.h_cens_factor > 0.0) {
            return bad("censoring factor must be positive".into());
        }
        Ok(())
    }

    /// `R(λ) = max{R, R_f, 1/λ}`.
    pub fn r_lambda(&self) -> f64 {
        self.r_assump.max(self.r_f).max(1.0 / self.lambda)
    }

    /// Lattice spacing `λ⁻²`.
    pub fn lattice(&self) -> f64 {
        1.0 / (self.lambda * self.lambda)
    }

    pub fn h_cens(&self) -> f64 {
        self.h_cens_factor * self.lattice()
    }

    /// Largest step `≤ requested` that divides `λ⁻²`.
    pub fn compatible_step(&self, requested: f64) -> f64 {
        let m = (self.lattice() / requested - 1e-9).ceil().max(1.0);
        self.lattice() / m
    }
}

/// Independent Bernoulli(δ) variables indexed by lattice time.
#[derive(Clone, Copy, Debug)]
pub struct CoinStream {
    seed: u64,
    stream: u64,
    delta: f64,
}

impl CoinStream {
    pub fn new(seed: u64, index: u64, delta: f64) -> Self {
        CoinStream { seed, stream: rng::stream_id(rng::domain::COIN, index), delta }
    }

    pub fn y(&self, lattice_index: u64) -> bool {
        rng::keyed_uniform(self.seed, self.stream, lattice_index) < self.delta
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    SeekingRecord,
    InSuccessBlock,
    AwaitingBacktrack,
}

/// Times of one success candidate within a cycle, as grid indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub n: usize,
    pub s: usize,
    pub j: Option<f64>,
    pub r: Option<usize>,
}

/// Checks evaluated when a cycle is certified.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleAudit {
    /// `λ⁻² ≤ N₁ ≤ S₁ ≤ J₁ ≤ R₁ ≤ N₂ ≤ …` relative to the cycle start.
    pub ordering: bool,
    /// `N_k`, `S_k`, `R_k` lie on the lattice.
    pub lattice: bool,
    /// No backtrack below `x(τ) − R` up to the censoring horizon.
    pub post_halfspace: bool,
    /// `x(s) ≤ x(τ − λ⁻²) + R` for `s ≤ τ − λ⁻²`.
    pub pre_halfspace: bool,
    /// `x(s) ≤ x(τ) − 7R` for `s ≤ τ − λ⁻²`; guaranteed only when success
    /// requires the coupling event.
    pub strict_halfspace: bool,
    /// `λ²(τ_k − τ_{k−1})`.
    pub tau_lattice_units: f64,
}

impl CycleAudit {
    /// Structural checks that hold for every mode.
    pub fn passes(&self) -> bool {
        self.ordering
            && self.lattice
            && self.post_halfspace
            && self.pre_halfspace
            && self.tau_lattice_units >= 2.0 - 1e-9
    }
}

/// One regeneration cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegenerationRecord {
    /// Cycle number within its stream, starting at 1.
    pub k: usize,
    pub stream: usize,
    pub dt: f64,
    pub dx: Vec<f64>,
    pub da: f64,
    pub dw1: f64,
    pub is_first: bool,
    pub censored: bool,
    /// Number of success candidates `K` used by the cycle.
    pub candidates: usize,
    pub audit: Option<CycleAudit>,
}

impl RegenerationRecord {
    /// `ΔZ = (ΔX, ΔA_f + ΔW¹)`.
    pub fn dz(&self) -> Vec<f64> {
        let mut z = self.dx.clone();
        z.push(self.da + self.dw1);
        z
    }

    pub fn dx1(&self) -> f64 {
        self.dx[0]
    }
}

/// Resumable state of the skeleton on one path.
#[derive(Clone, Debug)]
pub struct SkeletonState {
    pub phase: Phase,
    /// Grid index of the current cycle start `τ_{k−1}`.
    pub origin: usize,
    /// Ladder level `a` of the current candidate search.
    pub ladder: f64,
    /// Number of success candidates in the current cycle.
    pub k: usize,
    pub tilde_n: Option<usize>,
    pub candidates: Vec<Candidate>,
    window: usize,
    level: f64,
    scan: usize,
    wmax: f64,
    wmax_upto: usize,
    cmax: f64,
    cmax_upto: usize,
    backtrack_scan: usize,
    cycles: usize,
    /// Success candidates resolved so far, by backtrack or certification.
    pub resolved: usize,
}

pub struct Skeleton {
    cfg: RegenConfig,
    step: f64,
    m: usize,
    r: f64,
    h_steps: usize,
    state: SkeletonState,
}

enum Step {
    Progress,
    NeedData,
    Certified(RegenerationRecord),
}

impl Skeleton {
    /// Skeleton starting at grid index `start` of paths with time step `step`.
    pub fn new(cfg: RegenConfig, step: f64, start: usize, start_lead: f64) -> Result<Self, RegenError> {
        cfg.validate()?;
        let m = (cfg.lattice() / step).round();
        if m < 1.0 || (m * step - cfg.lattice()).abs() > 1e-9 * cfg.lattice() {
            return Err(RegenError::InvalidConfig(format!(
                "step {step} does not divide the lattice spacing {}",
                cfg.lattice()
            )));
        }
        let m = m as usize;
        if start % m != 0 {
            return Err(RegenError::InvalidConfig("skeleton must start on the lattice".into()));
        }
        let r = cfg.r_lambda();
        let h_steps = (cfg.h_cens() / step).round() as usize;
        let lambda = cfg.lambda;
        let mut sk = Skeleton {
            cfg,
            step,
            m,
            r,
            h_steps,
            state: SkeletonState {
                phase: Phase::SeekingRecord,
                origin: start,
                ladder: 0.0,
                k: 0,
                tilde_n: None,
                candidates: Vec::new(),
                window: start,
                level: 0.0,
                scan: start,
                wmax: start_lead,
                wmax_upto: start,
                cmax: start_lead,
                cmax_upto: start,
                backtrack_scan: start,
                cycles: 0,
                resolved: 0,
            },
        };
        sk.open_window(start, start_lead, 3.0 * lambda * r);
        Ok(sk)
    }

    pub fn state(&self) -> &SkeletonState {
        &self.state
    }

    pub fn config(&self) -> &RegenConfig {
        &self.cfg
    }

    /// Lattice spacing in grid steps.
    pub fn lattice_steps(&self) -> usize {
        self.m
    }

    /// Earliest grid index still needed; older samples may be trimmed.
    pub fn earliest_needed(&self) -> usize {
        self.state.origin
    }

    /// Times of the skeleton candidates, `+∞` when not yet defined.
    pub fn current_times(&self) -> [f64; 5] {
        let t = |i: Option<usize>| i.map_or(f64::INFINITY, |i| i as f64 * self.step);
        let last = self.state.candidates.last();
        [
            t(self.state.tilde_n),
            t(last.map(|c| c.n)),
            t(last.map(|c| c.s)),
            last.and_then(|c| c.j).unwrap_or(f64::INFINITY),
            t(last.and_then(|c| c.r)),
        ]
    }

    fn open_window(&mut self, at: usize, lead_at: f64, ladder: f64) {
        let st = &mut self.state;
        st.ladder = ladder;
        st.window = at;
        st.level = lead_at + ladder / self.cfg.lambda;
        st.scan = at;
        st.wmax = lead_at;
        st.wmax_upto = at;
        st.phase = Phase::SeekingRecord;
    }

    /// Processes all data available in `path`, returning the cycles certified.
    pub fn advance(&mut self, path: &PathRecord, coins: &CoinStream) -> Result<Vec<RegenerationRecord>, RegenError> {
        let mut out = Vec::new();
        loop {
            match self.step_once(path, coins)? {
                Step::Progress => {}
                Step::NeedData => return Ok(out),
                Step::Certified(rec) => out.push(rec),
            }
        }
    }

    fn step_once(&mut self, path: &PathRecord, coins: &CoinStream) -> Result<Step, RegenError> {
        let last = path.last_index();
        match self.state.phase {
            Phase::SeekingRecord => {
                let Some(cand) = (match self.state.tilde_n {
                    Some(c) => Some(c),
                    None => self.find_tilde_n(path),
                }) else {
                    return Ok(Step::NeedData);
                };
                self.state.tilde_n = Some(cand);
                let success = match self.cfg.mode {
                    RegenMode::Coin => coins.y((cand / self.m) as u64),
                    RegenMode::Bernoulli | RegenMode::EventBased => {
                        if cand + self.m > last {
                            return Ok(Step::NeedData);
                        }
                        let coin = self.cfg.mode == RegenMode::EventBased || coins.y((cand / self.m) as u64);
                        coin && self.coupling_event(path, cand)
                    }
                };
                self.state.tilde_n = None;
                if success {
                    let s = cand + self.m;
                    self.state.candidates.push(Candidate { n: cand, s, j: None, r: None });
                    self.state.k += 1;
                    self.state.phase = Phase::InSuccessBlock;
                    self.state.backtrack_scan = s + 1;
                } else {
                    self.open_window(cand, path.lead(cand), 3.0 * self.cfg.lambda * self.r);
                }
                Ok(Step::Progress)
            }
            Phase::InSuccessBlock => {
                let s = self.state.candidates.last().expect("candidate").s;
                if s > last {
                    return Ok(Step::NeedData);
                }
                self.state.phase = Phase::AwaitingBacktrack;
                Ok(Step::Progress)
            }
            Phase::AwaitingBacktrack => {
                let s = self.state.candidates.last().expect("candidate").s;
                let level = path.lead(s) - self.r;
                let until = s + self.h_steps;
                let stop = until.min(last);
                let from = self.state.backtrack_scan;
                let hit = if from <= stop {
                    path.lead_range(from, stop).iter().position(|&v| v < level).map(|p| from + p)
                } else {
                    None
                };
                match hit {
                    Some(j) => {
                        let jt = crossing_time(path, j, level);
                        let r_idx = self.ceil_lattice(jt, j);
                        if r_idx > last {
                            self.state.backtrack_scan = j;
                            return Ok(Step::NeedData);
                        }
                        self.state.resolved += 1;
                        let cand = self.state.candidates.last_mut().expect("candidate");
                        cand.j = Some(jt);
                        cand.r = Some(r_idx);
                        let cmax = self.cycle_max(path, r_idx);
                        let lead_r = path.lead(r_idx);
                        let ladder = self.cfg.lambda * (cmax - lead_r + self.r);
                        self.open_window(r_idx, lead_r, ladder);
                        Ok(Step::Progress)
                    }
                    None if last >= until => Ok(Step::Certified(self.certify(path, s))),
                    None => {
                        self.state.backtrack_scan = last + 1;
                        Ok(Step::NeedData)
                    }
                }
            }
        }
    }

    /// Smallest lattice index at or after time `t`; `hint` is the first grid
    /// index at or after `t`.
    fn ceil_lattice(&self, t: f64, hint: usize) -> usize {
        let lat = (t / (self.m as f64 * self.step) - 1e-9).ceil().max(0.0) as usize;
        // The interpolated crossing lies in (hint − 1, hint], so the lattice
        // point cannot exceed the one at or after `hint`.
        (lat * self.m).min(hint.div_ceil(self.m) * self.m)
    }

    fn cycle_max(&mut self, path: &PathRecord, upto: usize) -> f64 {
        let st = &mut self.state;
        if upto > st.cmax_upto {
            for &v in path.lead_range(st.cmax_upto + 1, upto) {
                st.cmax = st.cmax.max(v);
            }
            st.cmax_upto = upto;
        }
        st.cmax
    }

    fn window_max(&mut self, path: &PathRecord, upto: usize) -> f64 {
        let st = &mut self.state;
        if upto > st.wmax_upto {
            for &v in path.lead_range(st.wmax_upto + 1, upto) {
                st.wmax = st.wmax.max(v);
            }
            st.wmax_upto = upto;
        }
        st.wmax
    }

    /// Next candidate `Ñ` of the current window, or `None` if more data is needed.
    fn find_tilde_n(&mut self, path: &PathRecord) -> Option<usize> {
        let last = path.last_index();
        let half = 0.5 * self.r;
        loop {
            let (from, level) = (self.state.scan, self.state.level);
            if from > last {
                return None;
            }
            let Some(i) = path.lead_range(from, last).iter().position(|&v| v >= level).map(|p| from + p) else {
                self.state.scan = last + 1;
                return None;
            };
            debug_assert!(i > self.state.window);
            let v = crossing_time(path, i, level);
            let c = self.ceil_lattice(v, i);
            if c > last {
                self.state.scan = i;
                return None;
            }
            let seg = path.lead_range(i, c);
            let hi = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = seg.iter().copied().fold(f64::INFINITY, f64::min);
            if hi - level <= half && level - lo <= half {
                return Some(c);
            }
            let wmax = self.window_max(path, c);
            self.state.level = wmax + self.r;
            self.state.scan = c;
        }
    }

    /// `Z` stays in the ball of radius `6R` about `z + 5Rě₁` during the block
    /// and ends in the ball of radius `R` about `z + 9Rě₁`.
    fn coupling_event(&self, path: &PathRecord, n: usize) -> bool {
        let dim = path.dim;
        let dir = path.direction;
        let x0 = path.x(n);
        let y0 = path.afun(n) + path.w1(n);
        let dist2 = |i: usize, shift: f64| {
            let x = path.x(i);
            let mut s = 0.0;
            for k in 0..dim {
                let d = x[k] - x0[k] - shift * dir[k];
                s += d * d;
            }
            let dy = path.afun(i) + path.w1(i) - y0;
            s + dy * dy
        };
        let r = self.r;
        for i in n..=n + self.m {
            if dist2(i, 5.0 * r) >= 36.0 * r * r {
                return false;
            }
        }
        dist2(n + self.m, 9.0 * r) <= r * r
    }

    fn certify(&mut self, path: &PathRecord, s: usize) -> RegenerationRecord {
        let origin = self.state.origin;
        let dim = path.dim;
        let (xo, xs) = (path.x(origin), path.x(s));
        let dx: Vec<f64> = (0..dim).map(|k| xs[k] - xo[k]).collect();
        let audit = self.audit(path, s);
        self.state.cycles += 1;
        self.state.resolved += 1;
        let rec = RegenerationRecord {
            k: self.state.cycles,
            stream: 0,
            dt: (s - origin) as f64 * self.step,
            dx,
            da: path.afun(s) - path.afun(origin),
            dw1: path.w1(s) - path.w1(origin),
            is_first: self.state.cycles == 1,
            censored: false,
            candidates: self.state.k,
            audit: Some(audit),
        };
        let lead_s = path.lead(s);
        self.state.origin = s;
        self.state.k = 0;
        self.state.candidates.clear();
        self.state.tilde_n = None;
        self.state.cmax = lead_s;
        self.state.cmax_upto = s;
        self.open_window(s, lead_s, 3.0 * self.cfg.lambda * self.r);
        rec
    }

    fn audit(&self, path: &PathRecord, s: usize) -> CycleAudit {
        let origin = self.state.origin;
        let m = self.m;
        let mut ordering = true;
        let mut prev = origin + m;
        let mut prev_t = prev as f64 * self.step;
        let mut lattice = true;
        for c in &self.state.candidates {
            let (n_t, s_t) = (c.n as f64 * self.step, c.s as f64 * self.step);
            ordering &= c.n >= prev && n_t >= prev_t - 1e-9 && c.s == c.n + m;
            lattice &= c.n % m == 0 && c.s % m == 0;
            prev = c.s;
            prev_t = s_t;
            if let (Some(j), Some(r)) = (c.j, c.r) {
                ordering &= j >= s_t - 1e-9 && r as f64 * self.step >= j - 1e-9;
                lattice &= r % m == 0;
                prev = r;
                prev_t = r as f64 * self.step;
            }
        }
        ordering &= self.state.candidates.last().map(|c| c.s) == Some(s);
        let post = path.lead_range(s, s + self.h_steps).iter().copied().fold(f64::INFINITY, f64::min);
        let before = path.lead_range(origin, s - m).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-12 * (1.0 + path.lead(s).abs());
        CycleAudit {
            ordering,
            lattice,
            post_halfspace: post >= path.lead(s) - self.r - tol,
            pre_halfspace: before <= path.lead(s - m) + self.r + tol,
            strict_halfspace: before <= path.lead(s) - 7.0 * self.r + tol,
            tau_lattice_units: (s - origin) as f64 / m as f64,
        }
    }

    /// Record of the unfinished cycle at the end of a path.
    pub fn censored_record(&self, path: &PathRecord) -> RegenerationRecord {
        let origin = self.state.origin;
        let last = path.last_index();
        let (xo, xl) = (path.x(origin), path.x(last));
        RegenerationRecord {
            k: self.state.cycles + 1,
            stream: 0,
            dt: (last - origin) as f64 * self.step,
            dx: (0..path.dim).map(|k| xl[k] - xo[k]).collect(),
            da: path.afun(last) - path.afun(origin),
            dw1: path.w1(last) - path.w1(origin),
            is_first: self.state.cycles == 0,
            censored: true,
            candidates: self.state.k,
            audit: None,
        }
    }
}

/// Time at which the lead coordinate reaches `level` between grid indices
/// `i − 1` and `i`.
fn crossing_time(path: &PathRecord, i: usize, level: f64) -> f64 {
    let t = path.time(i);
    if i == path.first_index() {
        return t;
    }
    let (a, b) = (path.lead(i - 1), path.lead(i));
    if a == b {
        return t;
    }
    let frac = ((level - a) / (b - a)).clamp(0.0, 1.0);
    path.time(i - 1) + frac * path.step
}

/// Knobs of [`harvest_with`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarvestOptions {
    /// Requested time step; reduced to divide `λ⁻²`.
    pub step: f64,
    pub scheme: Scheme,
    /// Independent paths; each carries its own environment realization.
    pub n_streams: usize,
    /// Simulated time per chunk, in units of `λ⁻²`.
    pub chunk_lattice: usize,
    /// Step budget summed over all streams.
    pub max_steps: u64,
    /// Forcing of the dynamics when it differs from the skeleton's `λ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_lambda: Option<f64>,
}

impl Default for HarvestOptions {
    fn default() -> Self {
        HarvestOptions {
            step: 1e-2,
            scheme: Scheme::EulerMaruyama,
            n_streams: 8,
            chunk_lattice: 20,
            max_steps: 2_000_000_000,
            drift_lambda: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarvestResult {
    /// Certified cycles of all streams, ordered by stream then cycle.
    pub records: Vec<RegenerationRecord>,
    /// Unfinished cycles at the end of each stream.
    pub censored: Vec<RegenerationRecord>,
    pub discarded_first: usize,
    pub steps: u64,
    pub step: f64,
}

impl HarvestResult {
    /// Records of the i.i.d. pool (cycles `k ≥ 2`).
    pub fn pool(&self) -> Vec<&RegenerationRecord> {
        self.records.iter().filter(|r| !r.is_first && !r.censored).collect()
    }

    pub fn audit_failures(&self) -> usize {
        self.records.iter().filter(|r| !r.audit.is_some_and(|a| a.passes())).count()
    }
}

pub fn harvest(
    env: &Environment,
    f: &FunctionalSpec,
    cfg: &RegenConfig,
    n_cycles: usize,
    seed: u64,
) -> Result<HarvestResult, RegenError> {
    harvest_with(env, f, cfg, n_cycles, seed, &HarvestOptions::default())
}

/// Runs `opts.n_streams` independent paths until together they hold
/// `n_cycles` pool cycles. Results do not depend on the thread count.
pub fn harvest_with(
    env: &Environment,
    f: &FunctionalSpec,
    cfg: &RegenConfig,
    n_cycles: usize,
    seed: u64,
    opts: &HarvestOptions,
) -> Result<HarvestResult, RegenError> {
    cfg.validate()?;
    if n_cycles == 0 || opts.n_streams == 0 {
        return Err(RegenError::InvalidConfig("need at least one cycle and one stream".into()));
    }
    let step = cfg.compatible_step(opts.step);
    let per_stream = n_cycles.div_ceil(opts.n_streams);
    let budget = opts.max_steps / opts.n_streams as u64;
    let outs: Vec<Result<StreamOutput, RegenError>> = (0..opts.n_streams)
        .into_par_iter()
        .map(|s| run_stream(env, f, cfg, seed, s, per_stream, step, budget, opts))
        .collect();
    let mut result = HarvestResult { records: Vec::new(), censored: Vec::new(), discarded_first: 0, steps: 0, step };
    let mut collected = 0;
    let mut exhausted = false;
    for out in outs {
        let out = out?;
        result.steps += out.steps;
        exhausted |= out.exhausted;
        collected += out.records.iter().filter(|r| !r.is_first).count();
        result.discarded_first += out.records.iter().filter(|r| r.is_first).count();
        result.records.extend(out.records);
        result.censored.extend(out.censored);
    }
    if exhausted {
        return Err(RegenError::BudgetExhausted { budget: opts.max_steps, collected, wanted: n_cycles });
    }
    Ok(result)
}

struct StreamOutput {
    records: Vec<RegenerationRecord>,
    censored: Option<RegenerationRecord>,
    steps: u64,
    exhausted: bool,
}

#[allow(clippy::too_many_arguments)]
fn run_stream(
    env: &Environment,
    f: &FunctionalSpec,
    cfg: &RegenConfig,
    seed: u64,
    stream: usize,
    target: usize,
    step: f64,
    budget: u64,
    opts: &HarvestOptions,
) -> Result<StreamOutput, RegenError> {
    let (member, x0) = ensemble_member(env, seed, stream as u64);
    let mut icfg = IntegratorConfig::new(step, seed, opts.drift_lambda.unwrap_or(cfg.lambda));
    icfg.scheme = opts.scheme;
    let mut integ = Integrator::new(&member, f, icfg.clone(), x0, stream as u64)?;
    let mut path = PathRecord::new(member.dim(), &icfg);
    let mut sk = Skeleton::new(cfg.clone(), step, 0, 0.0)?;
    let coins = CoinStream::new(seed, stream as u64, cfg.delta);
    let chunk = sk.lattice_steps() * opts.chunk_lattice.max(1);
    let mut records = Vec::new();
    let mut steps = 0u64;
    let mut pool = 0;
    while pool < target {
        if steps >= budget {
            let mut cens = sk.censored_record(&path);
            cens.stream = stream;
            return Ok(StreamOutput { records, censored: Some(cens), steps, exhausted: true });
        }
        integ.extend(&mut path, chunk)?;
        steps += chunk as u64;
        for mut rec in sk.advance(&path, &coins)? {
            rec.stream = stream;
            pool += usize::from(!rec.is_first);
            records.push(rec);
        }
        path.trim_before(sk.earliest_needed());
    }
    let mut cens = sk.censored_record(&path);
    cens.stream = stream;
    Ok(StreamOutput { records, censored: Some(cens), steps, exhausted: false })
}

/// Monte Carlo frequency of the coupling event over one block `λ⁻²`, started
/// from a uniform point of `B^z`, floored at `10⁻³`.
pub fn estimate_delta(
    env: &Environment,
    f: &FunctionalSpec,
    cfg: &RegenConfig,
    step: f64,
    trials: usize,
    seed: u64,
) -> Result<f64, RegenError> {
    let step = cfg.compatible_step(step);
    let r = cfg.r_lambda();
    let hits: Result<Vec<bool>, RegenError> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (member, x0) = ensemble_member(env, seed, t as u64);
            let icfg = IntegratorConfig::new(step, seed, cfg.lambda);
            let mut g = rng::stream(seed, rng::stream_id(rng::domain::DELTA, t as u64));
            // Offset of the start from the centre of B^z, uniform in the ball.
            let dim = env.dim();
            let offset: Vec<f64> = loop {
                let v: Vec<f64> = (0..=dim).map(|_| r * (2.0 * rand::Rng::random::<f64>(&mut g) - 1.0)).collect();
                if v.iter().map(|x| x * x).sum::<f64>() <= r * r {
                    break v;
                }
            };
            let mut integ = Integrator::new(&member, f, icfg.clone(), x0, t as u64)?;
            let n = (cfg.lattice() / step).round() as usize;
            let mut inside = true;
            let dir = icfg.direction;
            let check = |st: &crate::sde::PathState, shift: f64, radius: f64| {
                let mut s = 0.0;
                for k in 0..dim {
                    let d = st.x[k] - x0[k] + offset[k] - shift * dir[k];
                    s += d * d;
                }
                let dy = st.afun + st.w1 + offset[dim];
                s + dy * dy < radius * radius
            };
            integ.run(n, |st, _, _| inside &= check(st, 5.0 * r, 6.0 * r))?;
            Ok(inside && check(integ.state(), 9.0 * r, r))
        })
        .collect();
    let hits = hits?;
    let freq = hits.iter().filter(|h| **h).count() as f64 / trials.max(1) as f64;
    Ok(freq.max(1e-3))
}

/// Outcome counts of success candidates on paths of fixed length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationStats {
    pub attempts: usize,
    pub certified: usize,
    /// `certified / attempts` with a binomial standard error.
    pub rate: EstimateWithCI,
}

/// Runs `n_streams` paths of length `horizon` and counts how many resolved
/// success candidates were certified. `drift_lambda` sets the forcing of the
/// dynamics independently of the skeleton's `λ`.
#[allow(clippy::too_many_arguments)]
pub fn certification_rate(
    env: &Environment,
    f: &FunctionalSpec,
    cfg: &RegenConfig,
    drift_lambda: f64,
    horizon: f64,
    n_streams: usize,
    seed: u64,
    step: f64,
) -> Result<CertificationStats, RegenError> {
    cfg.validate()?;
    let step = cfg.compatible_step(step);
    let counts: Result<Vec<(usize, usize)>, RegenError> = (0..n_streams)
        .into_par_iter()
        .map(|s| {
            let (member, x0) = ensemble_member(env, seed, s as u64);
            let icfg = IntegratorConfig::new(step, seed, drift_lambda);
            let mut integ = Integrator::new(&member, f, icfg.clone(), x0, s as u64)?;
            let mut path = PathRecord::new(member.dim(), &icfg);
            let mut sk = Skeleton::new(cfg.clone(), step, 0, 0.0)?;
            let coins = CoinStream::new(seed, s as u64, cfg.delta);
            let total = (horizon / step).round() as usize;
            let chunk = sk.lattice_steps() * 50;
            let mut done = 0;
            let mut certified = 0;
            while done < total {
                let n = chunk.min(total - done);
                integ.extend(&mut path, n)?;
                done += n;
                certified += sk.advance(&path, &coins)?.len();
                path.trim_before(sk.earliest_needed());
            }
            Ok((sk.state().resolved, certified))
        })
        .collect();
    let counts = counts?;
    let attempts: usize = counts.iter().map(|c| c.0).sum();
    let certified: usize = counts.iter().map(|c| c.1).sum();
    let p = if attempts > 0 { certified as f64 / attempts as f64 } else { 0.0 };
    let se = if attempts > 0 { (p * (1.0 - p) / attempts as f64).sqrt() } else { 0.0 };
    Ok(CertificationStats {
        attempts,
        certified,
        rate: EstimateWithCI { value: p, se, n: attempts, method: crate::stats::Method::PlainMean },
    })
}

/// Probability that a driftless Brownian motion with variance `a` per unit
/// time stays above `−r` during `[0, h]`.
pub fn no_backtrack_probability(r: f64, a: f64, h: f64) -> f64 {
    statrs::function::erf::erf(r / (2.0 * a * h).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioQuantity {
    /// `ν_λ(f) = E[ΔA + ΔW¹] / E[Δτ]`.
    NuF,
    /// `e·ℓ = E[e·ΔX] / E[Δτ]`.
    Ell,
    /// `e·Σ_λ e = E[(e·ΔX − Δτ e·ℓ)²] / E[Δτ]`.
    SigmaLambda,
    /// Variance rate of `A_f + W¹`, i.e. `1 + Σ_λ(f)`.
    SigmaLambdaF,
}

/// Ratio estimators over the i.i.d. pool; `e` is the projection direction
/// for the spatial quantities.
pub fn ratio_estimate(
    records: &[RegenerationRecord],
    which: RatioQuantity,
    e: &Point,
) -> Result<EstimateWithCI, RegenError> {
    let pool: Vec<&RegenerationRecord> = records.iter().filter(|r| !r.is_first && !r.censored).collect();
    if pool.len() < MIN_POOL {
        return Err(RegenError::TooFewCycles { available: pool.len(), required: MIN_POOL });
    }
    let dt: Vec<f64> = pool.iter().map(|r| r.dt).collect();
    let proj = |r: &RegenerationRecord| r.dx.iter().zip(e.iter()).map(|(a, b)| a * b).sum::<f64>();
    let y: Vec<f64> = pool.iter().map(|r| r.da + r.dw1).collect();
    let xe: Vec<f64> = pool.iter().map(|r| proj(r)).collect();
    Ok(match which {
        RatioQuantity::NuF => ratio_of_means(&y, &dt),
        RatioQuantity::Ell => ratio_of_means(&xe, &dt),
        RatioQuantity::SigmaLambda => {
            let ell = ratio_of_means(&xe, &dt).value;
            let q: Vec<f64> = xe.iter().zip(&dt).map(|(x, t)| (x - t * ell).powi(2)).collect();
            ratio_of_means(&q, &dt)
        }
        RatioQuantity::SigmaLambdaF => {
            let nu = ratio_of_means(&y, &dt).value;
            let q: Vec<f64> = y.iter().zip(&dt).map(|(v, t)| (v - t * nu).powi(2)).collect();
            ratio_of_means(&q, &dt)
        }
    })
}

/// Writes `k,dt,dA,dW1,dX_1..dX_d,censored` rows.
pub fn write_records_csv<W: Write>(records: &[RegenerationRecord], dim: usize, mut out: W) -> io::Result<()> {
    let mut header = vec!["k".to_string(), "dt".into(), "dA".into(), "dW1".into()];
    header.extend((1..=dim).map(|k| format!("dX_{k}")));
    header.push("censored".into());
    writeln!(out, "{}", header.join(","))?;
    for r in records {
        write!(out, "{},{},{},{}", r.k, r.dt, r.da, r.dw1)?;
        for v in &r.dx {
            write!(out, ",{v}")?;
        }
        writeln!(out, ",{}", u8::from(r.censored))?;
    }
    Ok(())
}

#[doc(hidden)]
pub fn unit_e1() -> Point {
    let mut e = [0.0; MAX_DIM];
    e[0] = 1.0;
    e
}
