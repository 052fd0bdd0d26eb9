//! Site-clock simulation of the hard-core dynamics.
//!
//! Every site carries a death clock of rate 1 and a birth clock of rate
//! `λ_U(t)` or `λ_V(t)`. A birth at a site with an active neighbour, or at
//! an already active site, and a death at an inactive site leave the state
//! unchanged but still count as ticks of the driving clock. The union of
//! all site clocks is a Poisson clock of rate `γ(t)`, and the induced
//! jump chain is the frozen-time kernel.
//!
//! Time-varying birth rates are realized by thinning: on consecutive
//! windows each birth clock proposes at a constant envelope (the rate at
//! the start of the window for `U`, at its end for `V`) and accepts with
//! the ratio of the true rate to the envelope.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::rates::ActivationRates;
use crate::topology::{precedes_masks, BipartiteGraph, HardCoreConfig, TopologyError};

/// Slack on thinning ratios before an envelope is considered violated.
const RATIO_SLACK: f64 = 1e-9;

/// Grid resolution for checking coupling preconditions.
const PRECONDITION_GRID: usize = 256;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("horizon must be positive and finite (got {0})")]
    BadHorizon(f64),
    #[error("rate {rate} exceeds thinning envelope {envelope} at t={t}")]
    EnvelopeViolation { t: f64, rate: f64, envelope: f64 },
    #[error("rates must be finite and nonnegative (got {rate} at t={t})")]
    BadRate { t: f64, rate: f64 },
    #[error("coupling precondition violated: {0}")]
    CouplingPrecondition(String),
    #[error("regeneration logs require starting at the all-U configuration")]
    NotStartingAtU,
    #[error("no samples")]
    NoSamples,
    #[error("M must be positive and finite (got {0})")]
    BadScale(f64),
    #[error("success probability {value} at s={s} lies outside [0, 1]")]
    BadProbability { s: f64, value: f64 },
}

/// Stable replicate seed: a SplitMix64 finalizer over `(base, index)`.
pub fn replicate_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `f(index, seed)` for every replicate in parallel; results come back
/// in replicate order.
pub fn run_replicates<T, F>(n: usize, base_seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map(|i| f(i, replicate_seed(base_seed, i as u64)))
        .collect()
}

/// Counters over regeneration trials. A trial starts at every tick (and at
/// time 0) at which the state is `u`; it succeeds if the target is hit
/// before the next such tick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TrialStats {
    pub trials: u64,
    pub successes: u64,
    pub failures: u64,
    /// Sum of `L` over failed trials.
    pub failure_ticks: u64,
}

impl TrialStats {
    pub fn success_fraction(&self) -> Option<f64> {
        (self.trials > 0).then(|| self.successes as f64 / self.trials as f64)
    }

    pub fn mean_failure_len(&self) -> Option<f64> {
        (self.failures > 0).then(|| self.failure_ticks as f64 / self.failures as f64)
    }

    pub fn merge(&mut self, o: &TrialStats) {
        self.trials += o.trials;
        self.successes += o.successes;
        self.failures += o.failures;
        self.failure_ticks += o.failure_ticks;
    }
}

/// One regeneration trial: start time `s`, outcome `B(s)`, tick count
/// `L(s) = ξ((s, s + δT(s)])` and duration `δT(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRecord {
    pub start: f64,
    pub success: bool,
    pub ticks: u64,
    /// `end - start`, rounded.
    pub duration: f64,
    /// End of the trial: the hit time on success, else the next tick at `u`.
    pub end: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RegenLog {
    pub records: Vec<TrialRecord>,
    /// Start of the first successful trial.
    pub first_success: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingSample {
    /// First hitting time of the target; `None` on timeout.
    pub t_v: Option<f64>,
    pub t_max: f64,
    /// Ticks of the driving clock up to the hit or the horizon.
    pub n_events: u64,
    pub seed: u64,
    pub trials: TrialStats,
    pub regen_log: Option<RegenLog>,
}

impl HittingSample {
    pub fn timed_out(&self) -> bool {
        self.t_v.is_none()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ClockKind {
    Birth,
    Death,
}

/// One site clock with its own random stream.
struct SiteClock {
    rng: ChaCha8Rng,
    site: usize,
    kind: ClockKind,
    on_u: bool,
    t: f64,
    window: u64,
    envelope: f64,
    /// Lower bound of the rate on the current window.
    floor: f64,
}

impl SiteClock {
    fn new(seed: u64, site: usize, kind: ClockKind, on_u: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stream = 2 * site as u64 + u64::from(kind == ClockKind::Death);
        rng.set_stream(stream);
        SiteClock { rng, site, kind, on_u, t: 0.0, window: 0, envelope: f64::NAN, floor: 0.0 }
    }

    fn exp(&mut self) -> f64 {
        self.rng.sample::<f64, _>(Exp1)
    }

    fn rate<R: ActivationRates + ?Sized>(&self, rates: &R, t: f64) -> f64 {
        if self.on_u {
            rates.lambda_u(t)
        } else {
            rates.lambda_v(t)
        }
    }

    /// Advances to the next accepted tick, or `None` past `t_max`.
    fn advance<R: ActivationRates + ?Sized>(
        &mut self,
        rates: &R,
        width: f64,
        t_max: f64,
    ) -> Result<Option<f64>, SimError> {
        if self.kind == ClockKind::Death {
            self.t += self.exp();
            return Ok((self.t <= t_max).then_some(self.t));
        }
        loop {
            let end = (self.window + 1) as f64 * width;
            if self.envelope.is_nan() {
                // lambda_u is nonincreasing, lambda_v nondecreasing
                let (env_t, floor_t) = if self.on_u { (self.t, end.min(t_max)) } else { (end.min(t_max), self.t) };
                let env = self.rate(rates, env_t);
                if !(env >= 0.0 && env.is_finite()) {
                    return Err(SimError::BadRate { t: env_t, rate: env });
                }
                let floor = self.rate(rates, floor_t);
                if floor > env * (1.0 + RATIO_SLACK) {
                    return Err(SimError::EnvelopeViolation { t: floor_t, rate: floor, envelope: env });
                }
                self.envelope = env;
                self.floor = floor.min(env);
            }
            if self.t > t_max {
                return Ok(None);
            }
            let next = if self.envelope > 0.0 { self.t + self.exp() / self.envelope } else { f64::INFINITY };
            if next > end {
                if end >= t_max {
                    self.t = next;
                    return Ok(None);
                }
                self.t = end;
                self.window += 1;
                self.envelope = f64::NAN;
                continue;
            }
            self.t = next;
            // squeeze: marks below the window's smallest rate accept without
            // evaluating the rate
            let mark = if self.floor >= self.envelope { 0.0 } else { self.rng.gen::<f64>() * self.envelope };
            if mark < self.floor {
                return Ok((next <= t_max).then_some(next));
            }
            let rate = self.rate(rates, next);
            if rate > self.envelope * (1.0 + RATIO_SLACK) {
                return Err(SimError::EnvelopeViolation { t: next, rate, envelope: self.envelope });
            }
            if mark < rate {
                return Ok((next <= t_max).then_some(next));
            }
        }
    }
}

fn check_horizon(t_max: f64) -> Result<(), SimError> {
    if t_max > 0.0 && t_max.is_finite() {
        Ok(())
    } else {
        Err(SimError::BadHorizon(t_max))
    }
}

fn build_clocks(g: &BipartiteGraph, seed: u64) -> Vec<SiteClock> {
    let mut clocks = Vec::with_capacity(2 * g.n_vertices());
    for i in 0..g.n_vertices() {
        clocks.push(SiteClock::new(seed, i, ClockKind::Birth, g.is_u(i)));
        clocks.push(SiteClock::new(seed, i, ClockKind::Death, g.is_u(i)));
    }
    clocks
}

/// Applies one tick of a site clock to `state`.
#[inline]
fn apply(state: u64, site: usize, kind: ClockKind, nbr: u64) -> u64 {
    let bit = 1u64 << site;
    match kind {
        ClockKind::Death => state & !bit,
        ClockKind::Birth if state & nbr == 0 => state | bit,
        ClockKind::Birth => state,
    }
}

struct TrialTracker {
    stats: TrialStats,
    log: Option<RegenLog>,
    open: Option<(f64, u64)>,
}

impl TrialTracker {
    fn new(record: bool) -> Self {
        TrialTracker { stats: TrialStats::default(), log: record.then(RegenLog::default), open: None }
    }

    fn close(&mut self, t: f64, success: bool) {
        if let Some((start, ticks)) = self.open.take() {
            if success {
                self.stats.successes += 1;
            } else {
                self.stats.failures += 1;
                self.stats.failure_ticks += ticks;
            }
            if let Some(log) = &mut self.log {
                log.records.push(TrialRecord { start, success, ticks, duration: t - start, end: t });
                if success && log.first_success.is_none() {
                    log.first_success = Some(start);
                }
            }
        }
    }

    fn open(&mut self, t: f64) {
        self.stats.trials += 1;
        self.open = Some((t, 0));
    }

    #[inline]
    fn tick(&mut self) {
        if let Some((_, ticks)) = &mut self.open {
            *ticks += 1;
        }
    }
}

/// First hitting time of `target` from `x0`, with trial counters.
pub fn simulate_hitting<R: ActivationRates + ?Sized>(
    g: &BipartiteGraph,
    rates: &R,
    x0: HardCoreConfig,
    target: HardCoreConfig,
    seed: u64,
    t_max: f64,
) -> Result<HittingSample, SimError> {
    run_hitting(g, rates, x0, target, seed, t_max, false)
}

/// Hitting run from `u` to `v` that records every regeneration trial.
pub fn regeneration_log<R: ActivationRates + ?Sized>(
    g: &BipartiteGraph,
    rates: &R,
    seed: u64,
    t_max: f64,
) -> Result<HittingSample, SimError> {
    run_hitting(g, rates, g.u_config(), g.v_config(), seed, t_max, true)
}

/// Shared engine behind [`simulate_hitting`] and [`regeneration_log`].
pub fn run_hitting<R: ActivationRates + ?Sized>(
    g: &BipartiteGraph,
    rates: &R,
    x0: HardCoreConfig,
    target: HardCoreConfig,
    seed: u64,
    t_max: f64,
    record: bool,
) -> Result<HittingSample, SimError> {
    check_horizon(t_max)?;
    g.config(x0.bits())?;
    g.config(target.bits())?;
    let u = g.u_config().bits();
    if record && x0.bits() != u {
        return Err(SimError::NotStartingAtU);
    }
    let mut trials = TrialTracker::new(record);
    let mut sample = HittingSample { t_v: None, t_max, n_events: 0, seed, trials: TrialStats::default(), regen_log: None };
    let mut state = x0.bits();
    if state == u {
        trials.open(0.0);
    }
    if state == target.bits() {
        trials.close(0.0, true);
        sample.t_v = Some(0.0);
    } else {
        let nbr: Vec<u64> = (0..g.n_vertices()).map(|i| g.neighbor_mask(i)).collect();
        let width = rates.envelope_window(t_max).min(t_max);
        let mut clocks = build_clocks(g, seed);
        let mut heap = BinaryHeap::with_capacity(clocks.len());
        for (id, c) in clocks.iter_mut().enumerate() {
            if let Some(t) = c.advance(rates, width, t_max)? {
                heap.push(Reverse(Key(t, id)));
            }
        }
        while let Some(Reverse(Key(t, id))) = heap.pop() {
            let c = &mut clocks[id];
            state = apply(state, c.site, c.kind, nbr[c.site]);
            sample.n_events += 1;
            trials.tick();
            if state == target.bits() {
                trials.close(t, true);
                sample.t_v = Some(t);
                break;
            }
            if state == u {
                trials.close(t, false);
                trials.open(t);
            }
            if let Some(next) = c.advance(rates, width, t_max)? {
                heap.push(Reverse(Key(next, id)));
            }
        }
    }
    sample.trials = trials.stats;
    sample.regen_log = trials.log;
    Ok(sample)
}

/// Options for [`simulate_coupled`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingOptions {
    pub t_max: f64,
    /// Stop once both copies have visited `v`.
    pub stop_when_both_hit: bool,
    pub record_events: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoupledEvent {
    pub t: f64,
    pub state: HardCoreConfig,
    pub state_prime: HardCoreConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingSample {
    pub events: Vec<CoupledEvent>,
    pub order_violations: u64,
    pub n_events: u64,
    /// First visit of `v` by the unprimed and primed copies.
    pub t_v: Option<f64>,
    pub t_v_prime: Option<f64>,
    pub seed: u64,
}

/// Thinned birth clock shared by two copies: proposals at the larger
/// envelope carry a uniform mark that each copy compares with its own rate.
struct SharedBirth {
    clock: SiteClock,
}

fn shared_rates<A, B>(on_u: bool, a: &A, b: &B, t: f64) -> (f64, f64)
where
    A: ActivationRates + ?Sized,
    B: ActivationRates + ?Sized,
{
    if on_u {
        (a.lambda_u(t), b.lambda_u(t))
    } else {
        (a.lambda_v(t), b.lambda_v(t))
    }
}

impl SharedBirth {
    /// Next proposal that at least one copy accepts, with the accept flags.
    fn advance<A, B>(&mut self, a: &A, b: &B, width: f64, t_max: f64) -> Result<Option<(f64, bool, bool)>, SimError>
    where
        A: ActivationRates + ?Sized,
        B: ActivationRates + ?Sized,
    {
        let c = &mut self.clock;
        loop {
            let end = (c.window + 1) as f64 * width;
            if c.envelope.is_nan() {
                let env_t = if c.on_u { c.t } else { end.min(t_max) };
                let (ra, rb) = shared_rates(c.on_u, a, b, env_t);
                let env = ra.max(rb);
                if !(env >= 0.0 && env.is_finite()) {
                    return Err(SimError::BadRate { t: env_t, rate: env });
                }
                c.envelope = env;
            }
            if c.t > t_max {
                return Ok(None);
            }
            let next = if c.envelope > 0.0 { c.t + c.exp() / c.envelope } else { f64::INFINITY };
            if next > end {
                if end >= t_max {
                    c.t = next;
                    return Ok(None);
                }
                c.t = end;
                c.window += 1;
                c.envelope = f64::NAN;
                continue;
            }
            c.t = next;
            let env = c.envelope;
            let (ra, rb) = shared_rates(c.on_u, a, b, next);
            let top = ra.max(rb);
            if top > env * (1.0 + RATIO_SLACK) {
                return Err(SimError::EnvelopeViolation { t: next, rate: top, envelope: env });
            }
            let mark = c.rng.gen::<f64>() * env;
            let (acc_a, acc_b) = (mark < ra, mark < rb);
            if acc_a || acc_b {
                return Ok((next <= t_max).then_some((next, acc_a, acc_b)));
            }
        }
    }
}

fn check_coupling_preconditions<A, B>(
    g: &BipartiteGraph,
    a: &A,
    b: &B,
    x0: HardCoreConfig,
    x0_prime: HardCoreConfig,
    t_max: f64,
) -> Result<(), SimError>
where
    A: ActivationRates + ?Sized,
    B: ActivationRates + ?Sized,
{
    g.config(x0.bits())?;
    g.config(x0_prime.bits())?;
    if !precedes_masks(g.u_mask(), x0.bits(), x0_prime.bits()) {
        return Err(SimError::CouplingPrecondition("initial states are not ordered".into()));
    }
    for k in 0..=PRECONDITION_GRID {
        let t = t_max * k as f64 / PRECONDITION_GRID as f64;
        if a.lambda_u(t) < b.lambda_u(t) {
            return Err(SimError::CouplingPrecondition(format!("lambda_u < lambda_u' at t={t}")));
        }
        if a.lambda_v(t) > b.lambda_v(t) {
            return Err(SimError::CouplingPrecondition(format!("lambda_v > lambda_v' at t={t}")));
        }
    }
    Ok(())
}

/// Runs two copies on shared clocks and counts order violations
/// `x(t) ⋢ x'(t)` at event times. Requires `λ_U ≥ λ'_U`, `λ_V ≤ λ'_V`
/// (checked on a time grid) and `x0 ⊑ x0'`.
pub fn simulate_coupled<A, B>(
    g: &BipartiteGraph,
    rates: &A,
    rates_prime: &B,
    x0: HardCoreConfig,
    x0_prime: HardCoreConfig,
    seed: u64,
    opts: &CouplingOptions,
) -> Result<CouplingSample, SimError>
where
    A: ActivationRates + ?Sized,
    B: ActivationRates + ?Sized,
{
    let t_max = opts.t_max;
    check_horizon(t_max)?;
    check_coupling_preconditions(g, rates, rates_prime, x0, x0_prime, t_max)?;
    let v = g.v_config().bits();
    let u_mask = g.u_mask();
    let nbr: Vec<u64> = (0..g.n_vertices()).map(|i| g.neighbor_mask(i)).collect();
    let width = rates.envelope_window(t_max).min(rates_prime.envelope_window(t_max)).min(t_max);

    let mut births: Vec<SharedBirth> = Vec::with_capacity(g.n_vertices());
    let mut deaths: Vec<SiteClock> = Vec::with_capacity(g.n_vertices());
    for i in 0..g.n_vertices() {
        births.push(SharedBirth { clock: SiteClock::new(seed, i, ClockKind::Birth, g.is_u(i)) });
        deaths.push(SiteClock::new(seed, i, ClockKind::Death, g.is_u(i)));
    }
    let n = g.n_vertices();
    // ids: [0, n) births, [n, 2n) deaths
    let mut pending: Vec<(bool, bool)> = vec![(false, false); n];
    let mut heap = BinaryHeap::with_capacity(2 * n);
    for i in 0..n {
        if let Some((t, a, b)) = births[i].advance(rates, rates_prime, width, t_max)? {
            pending[i] = (a, b);
            heap.push(Reverse(Key(t, i)));
        }
        if let Some(t) = deaths[i].advance(rates, width, t_max)? {
            heap.push(Reverse(Key(t, n + i)));
        }
    }

    let (mut x, mut y) = (x0.bits(), x0_prime.bits());
    let mut out = CouplingSample {
        events: Vec::new(),
        order_violations: 0,
        n_events: 0,
        t_v: (x == v).then_some(0.0),
        t_v_prime: (y == v).then_some(0.0),
        seed,
    };
    if opts.record_events {
        out.events.push(CoupledEvent { t: 0.0, state: HardCoreConfig(x), state_prime: HardCoreConfig(y) });
    }
    let done = |o: &CouplingSample| opts.stop_when_both_hit && o.t_v.is_some() && o.t_v_prime.is_some();
    while !done(&out) {
        let Some(Reverse(Key(t, id))) = heap.pop() else { break };
        if id < n {
            let (acc_x, acc_y) = pending[id];
            if acc_x {
                x = apply(x, id, ClockKind::Birth, nbr[id]);
            }
            if acc_y {
                y = apply(y, id, ClockKind::Birth, nbr[id]);
            }
            if let Some((next, a, b)) = births[id].advance(rates, rates_prime, width, t_max)? {
                pending[id] = (a, b);
                heap.push(Reverse(Key(next, id)));
            }
        } else {
            let site = id - n;
            x = apply(x, site, ClockKind::Death, 0);
            y = apply(y, site, ClockKind::Death, 0);
            if let Some(next) = deaths[site].advance(rates, width, t_max)? {
                heap.push(Reverse(Key(next, id)));
            }
        }
        out.n_events += 1;
        if !precedes_masks(u_mask, x, y) {
            out.order_violations += 1;
        }
        if x == v && out.t_v.is_none() {
            out.t_v = Some(t);
        }
        if y == v && out.t_v_prime.is_none() {
            out.t_v_prime = Some(t);
        }
        if opts.record_events {
            out.events.push(CoupledEvent { t, state: HardCoreConfig(x), state_prime: HardCoreConfig(y) });
        }
    }
    Ok(out)
}

/// First success time `S` of independent trials run at time 0 and at the
/// ticks of a Poisson clock of rate `gamma(·)`, a trial at `s` succeeding
/// with probability `eps(s)`. `gamma_bound` must dominate `gamma` on
/// `[0, t_max]`. Returns `None` past `t_max`.
pub fn colored_poisson_trial<G, E>(
    gamma: G,
    eps: E,
    gamma_bound: f64,
    seed: u64,
    t_max: f64,
) -> Result<Option<f64>, SimError>
where
    G: Fn(f64) -> f64,
    E: Fn(f64) -> f64,
{
    check_horizon(t_max)?;
    if !(gamma_bound > 0.0 && gamma_bound.is_finite()) {
        return Err(SimError::BadRate { t: 0.0, rate: gamma_bound });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coin = |rng: &mut ChaCha8Rng, s: f64| -> Result<bool, SimError> {
        let p = eps(s);
        if !(0.0..=1.0).contains(&p) {
            return Err(SimError::BadProbability { s, value: p });
        }
        Ok(rng.gen::<f64>() < p)
    };
    if coin(&mut rng, 0.0)? {
        return Ok(Some(0.0));
    }
    let mut t = 0.0;
    loop {
        t += rng.sample::<f64, _>(Exp1) / gamma_bound;
        if t > t_max {
            return Ok(None);
        }
        let rate = gamma(t);
        if !(rate >= 0.0) || rate > gamma_bound * (1.0 + RATIO_SLACK) {
            return Err(SimError::EnvelopeViolation { t, rate, envelope: gamma_bound });
        }
        if rng.gen::<f64>() * gamma_bound < rate && coin(&mut rng, t)? {
            return Ok(Some(t));
        }
    }
}

/// Empirical survival `P(T_v > Mτ)` with binomial standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub tau: Vec<f64>,
    pub survival: Vec<f64>,
    pub se: Vec<f64>,
    /// Samples used at each τ (timeouts before `Mτ` are excluded).
    pub n_used: Vec<usize>,
    pub censored_fraction: f64,
    pub warnings: Vec<String>,
}

pub fn estimate_survival(samples: &[HittingSample], m: f64, tau_grid: &[f64]) -> Result<SurvivalCurve, SimError> {
    if samples.is_empty() {
        return Err(SimError::NoSamples);
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(SimError::BadScale(m));
    }
    let censored = samples.iter().filter(|s| s.timed_out()).count();
    let mut curve = SurvivalCurve {
        tau: tau_grid.to_vec(),
        survival: Vec::with_capacity(tau_grid.len()),
        se: Vec::with_capacity(tau_grid.len()),
        n_used: Vec::with_capacity(tau_grid.len()),
        censored_fraction: censored as f64 / samples.len() as f64,
        warnings: Vec::new(),
    };
    for &tau in tau_grid {
        let cut = m * tau;
        let (mut n, mut alive) = (0usize, 0usize);
        for s in samples {
            match s.t_v {
                Some(t) => {
                    n += 1;
                    alive += usize::from(t > cut);
                }
                None if cut < s.t_max => {
                    n += 1;
                    alive += 1;
                }
                None => {}
            }
        }
        if n < samples.len() {
            curve.warnings.push(format!(
                "tau={tau}: {} timed-out samples end before M*tau and were excluded",
                samples.len() - n
            ));
        }
        if n == 0 {
            curve.survival.push(f64::NAN);
            curve.se.push(f64::NAN);
        } else {
            let p = alive as f64 / n as f64;
            curve.survival.push(p);
            curve.se.push((p * (1.0 - p) / n as f64).sqrt());
        }
        curve.n_used.push(n);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_oracle::{expected_hitting_time, hitting_prob_before_return};
    use crate::rates::{ConstantRates, Exponent, RateSchedule};
    use crate::topology::{enumerate_configs, DEFAULT_STATE_CAP};

    fn k(m: usize, n: usize) -> BipartiteGraph {
        BipartiteGraph::complete_bipartite(m, n).unwrap()
    }

    fn pooled(g: &BipartiteGraph, r: &ConstantRates, n: usize, seed: u64, t_max: f64) -> (TrialStats, Vec<HittingSample>) {
        let samples: Vec<HittingSample> = run_replicates(n, seed, |_, s| {
            simulate_hitting(g, r, g.u_config(), g.v_config(), s, t_max).unwrap()
        });
        let mut stats = TrialStats::default();
        for s in &samples {
            stats.merge(&s.trials);
        }
        (stats, samples)
    }

    #[test]
    fn per_trial_success_matches_oracle_on_single_edge() {
        let g = k(1, 1);
        let r = ConstantRates { lambda_u: 2.0, lambda_v: 4.0 };
        let (stats, samples) = pooled(&g, &r, 8_000, 11, 1e4);
        assert!(samples.iter().all(|s| !s.timed_out()));
        assert!(stats.trials >= 90_000, "trials {}", stats.trials);
        let p = stats.success_fraction().unwrap();
        let se = (p * (1.0 - p) / stats.trials as f64).sqrt();
        assert!((p - 1.0 / 12.0).abs() < 3.0 * se, "p={p} se={se}");
    }

    #[test]
    fn mean_hitting_time_matches_oracle_on_k22() {
        let g = k(2, 2);
        let space = enumerate_configs(&g, DEFAULT_STATE_CAP).unwrap();
        let r = ConstantRates { lambda_u: 3.0, lambda_v: 5.0 };
        let exact = expected_hitting_time(&space, 3.0, 5.0, space.u_index(), space.v_index()).unwrap();
        let (stats, samples) = pooled(&g, &r, 4_000, 5, 1e5);
        let ts: Vec<f64> = samples.iter().map(|s| s.t_v.unwrap()).collect();
        let n = ts.len() as f64;
        let mean = ts.iter().sum::<f64>() / n;
        let var = ts.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - exact).abs() < 3.0 * (var / n).sqrt(), "mean={mean} exact={exact}");
        let eps = hitting_prob_before_return(&space, 3.0, 5.0).unwrap();
        let p = stats.success_fraction().unwrap();
        assert!((p - eps).abs() < 3.0 * (p * (1.0 - p) / stats.trials as f64).sqrt());
    }

    #[test]
    fn vanishing_u_rate_gives_harmonic_mean() {
        let g = k(2, 2);
        let r = ConstantRates { lambda_u: 0.0, lambda_v: 1e3 };
        let samples = run_replicates(10_000, 3, |_, s| {
            simulate_hitting(&g, &r, g.u_config(), g.v_config(), s, 100.0).unwrap()
        });
        let mean = samples.iter().map(|s| s.t_v.unwrap()).sum::<f64>() / samples.len() as f64;
        assert!((mean / 1.5 - 1.0).abs() < 0.05, "mean={mean}");
    }

    #[test]
    fn start_at_target_is_immediate() {
        let g = k(2, 3);
        let r = ConstantRates { lambda_u: 1.0, lambda_v: 1.0 };
        let s = simulate_hitting(&g, &r, g.v_config(), g.v_config(), 1, 10.0).unwrap();
        assert_eq!(s.t_v, Some(0.0));
        assert_eq!(s.n_events, 0);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let g = k(1, 1);
        let r = ConstantRates { lambda_u: 1.0, lambda_v: 1.0 };
        let err = simulate_hitting(&g, &r, HardCoreConfig(0b11), g.v_config(), 1, 10.0);
        assert!(matches!(err, Err(SimError::Topology(_))));
        assert!(matches!(
            simulate_hitting(&g, &r, g.u_config(), g.v_config(), 1, 0.0),
            Err(SimError::BadHorizon(_))
        ));
    }

    #[test]
    fn timeouts_are_data() {
        let g = k(3, 3);
        let r = ConstantRates { lambda_u: 30.0, lambda_v: 40.0 };
        let s = simulate_hitting(&g, &r, g.u_config(), g.v_config(), 9, 0.5).unwrap();
        assert!(s.timed_out());
        assert!(s.n_events > 0);
    }

    #[test]
    fn runs_are_deterministic() {
        let g = BipartiteGraph::even_torus(2, 4).unwrap();
        let s = RateSchedule::unit(6.0, Exponent::new(1, 1), Exponent::new(3, 2)).unwrap();
        let a = regeneration_log(&g, &s, 42, 50.0).unwrap();
        let b = regeneration_log(&g, &s, 42, 50.0).unwrap();
        assert_eq!(a, b);
        let c = regeneration_log(&g, &s, 43, 50.0).unwrap();
        assert_ne!(a.n_events, c.n_events);
    }

    #[test]
    fn regeneration_identity_holds_exactly() {
        let g = k(2, 2);
        let s = RateSchedule::unit(8.0, Exponent::new(1, 1), Exponent::new(3, 2)).unwrap();
        for seed in 0..200 {
            let run = regeneration_log(&g, &s, seed, 100.0).unwrap();
            let log = run.regen_log.unwrap();
            let t_v = run.t_v.unwrap();
            let last = log.records.last().unwrap();
            assert!(last.success);
            assert!(log.records[..log.records.len() - 1].iter().all(|r| !r.success));
            assert_eq!(log.first_success, Some(last.start));
            assert_eq!(last.end, t_v);
            assert!((last.start + last.duration - t_v).abs() <= f64::EPSILON * t_v);
            assert_eq!(log.records.len() as u64, run.trials.trials);
            for w in log.records.windows(2) {
                assert_eq!(w[0].end, w[1].start);
            }
        }
    }

    #[test]
    fn direct_success_gives_single_record() {
        let g = k(1, 1);
        let r = ConstantRates { lambda_u: 0.0, lambda_v: 1.0 };
        let mut seen = 0;
        for seed in 0..200 {
            let run = regeneration_log(&g, &r, seed, 1e3).unwrap();
            let log = run.regen_log.unwrap();
            if log.records.len() == 1 {
                seen += 1;
                assert_eq!(log.first_success, Some(0.0));
                assert!(log.records[0].success);
                assert_eq!(log.records[0].duration, run.t_v.unwrap());
            }
        }
        assert!(seen > 20, "{seen}");
    }

    #[test]
    fn failed_trials_shorten_as_rates_grow() {
        let g = k(2, 2);
        let mut means = Vec::new();
        for lu in [5.0f64, 20.0, 60.0] {
            let r = ConstantRates { lambda_u: lu, lambda_v: lu.powf(1.5) };
            let (stats, _) = pooled(&g, &r, 100, 17, 1e6);
            means.push(stats.mean_failure_len().unwrap());
        }
        assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
        assert!(means[2] < 1.2, "{means:?}");
    }

    #[test]
    fn regeneration_log_requires_u_start() {
        let g = k(2, 2);
        let r = ConstantRates { lambda_u: 1.0, lambda_v: 1.0 };
        assert!(matches!(
            run_hitting(&g, &r, HardCoreConfig::EMPTY, g.v_config(), 1, 1.0, true),
            Err(SimError::NotStartingAtU)
        ));
    }

    fn mean_ticks<R: ActivationRates>(r: &R, on_u: bool, t_max: f64, n: u64) -> f64 {
        let width = r.envelope_window(t_max).min(t_max);
        let mut total = 0u64;
        for seed in 0..n {
            let mut c = SiteClock::new(seed, 0, ClockKind::Birth, on_u);
            while c.advance(r, width, t_max).unwrap().is_some() {
                total += 1;
            }
        }
        total as f64 / n as f64
    }

    #[test]
    fn thinned_clocks_match_integrated_rates() {
        let s = RateSchedule::unit(4.0, Exponent::new(1, 1), Exponent::new(2, 1)).unwrap();
        let n = 20_000;
        // U side: integral of (4 - t) over [0, 6] is 8 (zero after depletion)
        let m = mean_ticks(&s, true, 6.0, n);
        assert!((m - 8.0).abs() < 3.0 * (8.0 / n as f64).sqrt(), "{m}");
        // V side: integral of (4 + t)^2 over [0, 2] is 152/3
        let m = mean_ticks(&s, false, 2.0, n);
        let exact = 152.0 / 3.0;
        assert!((m - exact).abs() < 3.0 * (exact / n as f64).sqrt(), "{m}");
    }

    struct Bump;

    impl ActivationRates for Bump {
        fn lambda_u(&self, t: f64) -> f64 {
            1.0 + t
        }
        fn lambda_v(&self, _t: f64) -> f64 {
            1.0
        }
    }

    #[test]
    fn increasing_u_rate_violates_envelope() {
        let g = k(1, 1);
        let r = simulate_hitting(&g, &Bump, HardCoreConfig::EMPTY, g.v_config(), 1, 1e6);
        assert!(matches!(r, Err(SimError::EnvelopeViolation { .. })));
    }

    #[test]
    fn coupling_identical_copies_agree() {
        let g = k(2, 2);
        let s = RateSchedule::unit(10.0, Exponent::new(1, 1), Exponent::new(3, 2)).unwrap();
        let opts = CouplingOptions { t_max: 30.0, stop_when_both_hit: false, record_events: true };
        let c = simulate_coupled(&g, &s, &s, g.u_config(), g.u_config(), 7, &opts).unwrap();
        assert_eq!(c.order_violations, 0);
        assert!(c.events.iter().all(|e| e.state == e.state_prime));
        assert_eq!(c.t_v, c.t_v_prime);
    }

    #[test]
    fn coupling_preserves_order() {
        let opts = CouplingOptions { t_max: 40.0, stop_when_both_hit: true, record_events: false };
        for g in [k(2, 2), BipartiteGraph::even_torus(2, 2).unwrap()] {
            let lo = RateSchedule::new(12.0, 1.0, 1.0, 1.0, 1.0, Exponent::new(1, 1), Exponent::new(3, 2), None).unwrap();
            let hi = RateSchedule::new(12.0, 0.8, 1.2, 1.0, 1.0, Exponent::new(1, 1), Exponent::new(3, 2), None).unwrap();
            for seed in 0..300 {
                let c = simulate_coupled(&g, &lo, &hi, g.u_config(), g.u_config(), seed, &opts).unwrap();
                assert_eq!(c.order_violations, 0);
                if let Some(t) = c.t_v {
                    assert!(c.t_v_prime.unwrap() <= t);
                }
                let c = simulate_coupled(&g, &lo, &hi, g.u_config(), g.v_config(), seed, &opts).unwrap();
                assert_eq!(c.order_violations, 0);
                assert_eq!(c.t_v_prime, Some(0.0));
            }
        }
    }

    #[test]
    fn coupling_rejects_bad_preconditions() {
        let g = k(2, 2);
        let lo = RateSchedule::unit(12.0, Exponent::new(1, 1), Exponent::new(3, 2)).unwrap();
        let hi = lo.with_lambda(13.0).unwrap();
        let opts = CouplingOptions { t_max: 5.0, stop_when_both_hit: true, record_events: false };
        // λ_U' > λ_U
        assert!(matches!(
            simulate_coupled(&g, &lo, &hi, g.u_config(), g.u_config(), 1, &opts),
            Err(SimError::CouplingPrecondition(_))
        ));
        assert!(matches!(
            simulate_coupled(&g, &lo, &lo, g.v_config(), g.u_config(), 1, &opts),
            Err(SimError::CouplingPrecondition(_))
        ));
    }

    fn poisson_survival<G, E>(gamma: G, eps: E, bound: f64, t: f64, n: usize) -> (f64, f64)
    where
        G: Fn(f64) -> f64 + Sync + Send,
        E: Fn(f64) -> f64 + Sync + Send,
    {
        let hits = run_replicates(n, 99, |_, s| colored_poisson_trial(&gamma, &eps, bound, s, t).unwrap());
        let p = hits.iter().filter(|h| h.is_none()).count() as f64 / n as f64;
        (p, (p * (1.0 - p) / n as f64).sqrt())
    }

    #[test]
    fn colored_poisson_constant_case() {
        let (p, se) = poisson_survival(|_| 2.0, |_| 0.5, 2.0, 1.0, 100_000);
        let exact = 0.5 * (-1.0f64).exp();
        assert!((p - exact).abs() < 3.0 * se, "p={p} exact={exact}");
    }

    #[test]
    fn colored_poisson_certain_success() {
        for seed in 0..20 {
            assert_eq!(colored_poisson_trial(|_| 3.0, |_| 1.0, 3.0, seed, 1.0).unwrap(), Some(0.0));
        }
    }

    #[test]
    fn colored_poisson_time_varying() {
        for t in [0.5, 1.0] {
            let (p, se) = poisson_survival(|_| 1.0, |s: f64| s.min(1.0), 1.0, t, 40_000);
            let exact = (-t * t / 2.0f64).exp();
            assert!((p - exact).abs() < 3.0 * se, "t={t} p={p} exact={exact}");
        }
    }

    fn fake(t_v: Option<f64>, t_max: f64) -> HittingSample {
        HittingSample { t_v, t_max, n_events: 0, seed: 0, trials: TrialStats::default(), regen_log: None }
    }

    #[test]
    fn survival_counting_examples() {
        let xs: Vec<_> = [0.5, 1.5, 2.5].iter().map(|&t| fake(Some(t), 10.0)).collect();
        let c = estimate_survival(&xs, 1.0, &[1.0]).unwrap();
        assert!((c.survival[0] - 2.0 / 3.0).abs() < 1e-15);
        let p: f64 = 2.0 / 3.0;
        assert!((c.se[0] - (p * (1.0 - p) / 3.0).sqrt()).abs() < 1e-15);
        let all_out: Vec<_> = (0..4).map(|_| fake(None, 10.0)).collect();
        let c = estimate_survival(&all_out, 2.0, &[0.5, 1.0, 4.0, 6.0]).unwrap();
        assert_eq!(&c.survival[..3], &[1.0, 1.0, 1.0]);
        assert_eq!(c.n_used[3], 0);
        assert!(!c.warnings.is_empty());
        assert_eq!(c.censored_fraction, 1.0);
        assert!(matches!(estimate_survival(&[], 1.0, &[1.0]), Err(SimError::NoSamples)));
    }

    #[test]
    fn replicate_seeds_are_distinct_and_stable() {
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|i| replicate_seed(7, i)).collect();
        assert_eq!(seeds.len(), 10_000);
        assert_eq!(replicate_seed(7, 3), replicate_seed(7, 3));
        let out = run_replicates(50, 1, |i, s| (i, s));
        assert!(out.iter().enumerate().all(|(j, &(i, s))| i == j && s == replicate_seed(1, j as u64)));
    }
}
