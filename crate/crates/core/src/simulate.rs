//! Exact simulation by Ogata thinning and generation of labelled training sets.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Geometric};

use crate::error::{Error, Result};
use crate::model::{Direction, EventSequence, HawkesParams, IntensityState, MarkedEvent};

/// Attempts per path before a sampler is declared broken.
pub const MAX_SAMPLER_RETRIES: usize = 100;

/// When a simulation stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Simulate on `[0, T]`.
    Horizon(f64),
    /// Simulate exactly this many events; the horizon is the last event time.
    EventCount(usize),
}

/// Distribution of the jump size (in ticks) of one direction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum MarkDist {
    #[default]
    Unit,
    /// `1 + Geometric(p)`, so `P(Z = k) = p (1 - p)^{k-1}` for `k >= 1`.
    Geometric { p: f64 },
}

impl MarkDist {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match *self {
            MarkDist::Unit => 1,
            MarkDist::Geometric { p } => {
                // `new` was validated in SimConfig::check.
                let extra = Geometric::new(p).map(|g| g.sample(rng)).unwrap_or(0);
                1 + extra.min(u32::MAX as u64 - 1) as u32
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            MarkDist::Unit => 1.0,
            MarkDist::Geometric { p } => 1.0 / p,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            MarkDist::Unit => 1.0,
            MarkDist::Geometric { p } => (2.0 - p) / (p * p),
        }
    }

    fn check(&self) -> Result<()> {
        match *self {
            MarkDist::Unit => Ok(()),
            MarkDist::Geometric { p } if p > 0.0 && p <= 1.0 => Ok(()),
            MarkDist::Geometric { p } => Err(Error::InvalidConfig(alloc::format!(
                "geometric mark probability must lie in (0, 1], got {p}"
            ))),
        }
    }
}

/// Mark distributions for up and down moves, independent of the history.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MarkLaw {
    pub up: MarkDist,
    pub down: MarkDist,
}

impl MarkLaw {
    pub const fn unit() -> Self {
        MarkLaw { up: MarkDist::Unit, down: MarkDist::Unit }
    }

    pub const fn symmetric(dist: MarkDist) -> Self {
        MarkLaw { up: dist, down: dist }
    }

    fn for_direction(&self, d: Direction) -> &MarkDist {
        match d {
            Direction::Up => &self.up,
            Direction::Down => &self.down,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub params: HawkesParams,
    pub stop_rule: StopRule,
    pub mark_law: MarkLaw,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(params: HawkesParams, stop_rule: StopRule, seed: u64) -> Self {
        SimConfig { params, stop_rule, mark_law: MarkLaw::unit(), seed }
    }

    pub fn with_marks(mut self, mark_law: MarkLaw) -> Self {
        self.mark_law = mark_law;
        self
    }

    pub fn check(&self) -> Result<()> {
        self.params.check()?;
        match self.stop_rule {
            StopRule::Horizon(t) if !(t > 0.0 && t.is_finite()) => {
                return Err(Error::InvalidConfig(alloc::format!("horizon must be positive, got {t}")))
            }
            StopRule::EventCount(0) => {
                return Err(Error::InvalidConfig("event count must be at least 1".into()))
            }
            _ => {}
        }
        self.mark_law.up.check()?;
        self.mark_law.down.check()
    }
}

/// Deterministic generator for `seed`.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` of `seed`, used for per-path generation so that
/// results do not depend on how paths are distributed over threads.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Samples one path under `config`.
pub fn simulate(config: &SimConfig) -> Result<EventSequence> {
    config.check()?;
    let mut rng = rng_from_seed(config.seed);
    simulate_with_rng(&config.params, config.stop_rule, &config.mark_law, &mut rng)
}

/// Ogata thinning with exact exponential decay between candidate points.
///
/// Between events the total intensity only decays, so the total intensity
/// just after the latest accepted or rejected point bounds the intensity
/// until the next event.
pub fn simulate_with_rng<R: Rng + ?Sized>(
    params: &HawkesParams,
    stop_rule: StopRule,
    marks: &MarkLaw,
    rng: &mut R,
) -> Result<EventSequence> {
    params.check()?;
    let (horizon, max_events) = match stop_rule {
        StopRule::Horizon(t) => (t, usize::MAX),
        StopRule::EventCount(k) => (f64::INFINITY, k),
    };
    let mut events = Vec::with_capacity(match stop_rule {
        StopRule::EventCount(k) => k,
        StopRule::Horizon(t) => {
            let rate = 2.0 * params.mu / (1.0 - params.branching_ratio());
            ((rate * t) as usize).saturating_add(16).min(1 << 24)
        }
    });
    let mut state = IntensityState::new(*params);
    let mut last_time = f64::NEG_INFINITY;
    while events.len() < max_events {
        let bound = state.total();
        let wait: f64 = Exp1.sample(rng);
        let candidate = state.t + wait / bound;
        if candidate > horizon {
            break;
        }
        state.advance_to(candidate);
        let total = state.total();
        let u: f64 = rng.random();
        if u * bound > total {
            continue;
        }
        let direction = if rng.random::<f64>() * total < state.lambda1 {
            Direction::Up
        } else {
            Direction::Down
        };
        let mark = marks.for_direction(direction).sample(rng);
        let mut time = candidate;
        if time <= last_time {
            time = last_time.next_up();
            state.t = time;
        }
        last_time = time;
        events.push(MarkedEvent::new(time, direction, mark));
        state.jump(direction);
    }
    let horizon = if horizon.is_finite() { horizon } else { last_time.max(0.0) };
    EventSequence::new(events, horizon)
}

/// Source of training-set parameters.
pub trait ParamSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HawkesParams;
}

/// Always the same parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedSampler(pub HawkesParams);

impl ParamSampler for FixedSampler {
    fn sample<R: Rng + ?Sized>(&self, _rng: &mut R) -> HawkesParams {
        self.0
    }
}

/// Draws `μ`, `β`, the branching ratio `n` and a split `c` uniformly, then
/// sets `α1 = c n β` and `α2 = (1 - c) n β`, each clamped below at
/// `min_alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformSampler {
    pub mu: (f64, f64),
    pub beta: (f64, f64),
    pub branching: (f64, f64),
    pub min_alpha: f64,
}

impl Default for UniformSampler {
    fn default() -> Self {
        UniformSampler {
            mu: (0.05, 1.0),
            beta: (0.5, 3.0),
            branching: (0.05, 0.95),
            min_alpha: 1e-4,
        }
    }
}

impl UniformSampler {
    /// Parameters for given draws of `(μ, β, n, c)`.
    pub fn compose(&self, mu: f64, beta: f64, branching: f64, split: f64) -> HawkesParams {
        let alpha1 = (split * branching * beta).max(self.min_alpha);
        let alpha2 = ((1.0 - split) * branching * beta).max(self.min_alpha);
        HawkesParams::new(mu, alpha1, alpha2, beta)
    }

    pub fn check(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !(ok(self.mu) && ok(self.beta) && ok(self.branching))
            || self.mu.0 <= 0.0
            || self.beta.0 <= 0.0
            || self.branching.0 < 0.0
            || self.branching.1 >= 1.0
            || self.min_alpha < 0.0
        {
            return Err(Error::InvalidConfig(alloc::format!("bad sampler ranges: {self:?}")));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

impl ParamSampler for UniformSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HawkesParams {
        let mu = uniform(rng, self.mu);
        let beta = uniform(rng, self.beta);
        let n = uniform(rng, self.branching);
        let c = rng.random::<f64>();
        self.compose(mu, beta, n, c)
    }
}

/// Sampler with the default ranges `μ ∈ [0.05, 1]`, `β ∈ [0.5, 3]`,
/// `n ∈ [0.05, 0.95]`.
pub fn default_param_sampler() -> UniformSampler {
    UniformSampler::default()
}

/// Fixed-length paths of `(inter-arrival, direction)` pairs with their
/// generating parameters, stored flat in path-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    length: usize,
    inter_arrivals: Vec<f64>,
    directions: Vec<u8>,
    targets: Vec<HawkesParams>,
}

impl LabeledDataset {
    pub fn new(length: usize) -> Self {
        LabeledDataset { length, inter_arrivals: Vec::new(), directions: Vec::new(), targets: Vec::new() }
    }

    /// Assembles a dataset from flat buffers, checking every invariant.
    pub fn from_parts(
        length: usize,
        inter_arrivals: Vec<f64>,
        directions: Vec<u8>,
        targets: Vec<HawkesParams>,
    ) -> Result<Self> {
        let ds = LabeledDataset { length, inter_arrivals, directions, targets };
        ds.check()?;
        Ok(ds)
    }

    pub fn check(&self) -> Result<()> {
        let n = self.targets.len();
        if self.length == 0
            || self.inter_arrivals.len() != n * self.length
            || self.directions.len() != n * self.length
        {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{} targets, {} gaps, {} directions for length {}",
                n,
                self.inter_arrivals.len(),
                self.directions.len(),
                self.length
            )));
        }
        if let Some(i) = self.inter_arrivals.iter().position(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::InvalidEventTime { index: i, time: self.inter_arrivals[i] });
        }
        if self.directions.iter().any(|d| Direction::from_code(*d).is_none()) {
            return Err(Error::ShapeMismatch("direction codes must be 1 or 2".into()));
        }
        for t in &self.targets {
            t.check()?;
        }
        Ok(())
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn n_paths(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn inter_arrivals(&self) -> &[f64] {
        &self.inter_arrivals
    }

    pub fn directions(&self) -> &[u8] {
        &self.directions
    }

    pub fn targets(&self) -> &[HawkesParams] {
        &self.targets
    }

    /// Gaps and direction codes of path `i`.
    pub fn path(&self, i: usize) -> (&[f64], &[u8]) {
        let r = i * self.length..(i + 1) * self.length;
        (&self.inter_arrivals[r.clone()], &self.directions[r])
    }

    pub fn target(&self, i: usize) -> &HawkesParams {
        &self.targets[i]
    }

    /// Appends a path given as gaps and direction codes.
    pub fn push(&mut self, gaps: &[f64], directions: &[u8], target: HawkesParams) -> Result<()> {
        if gaps.len() != self.length || directions.len() != self.length {
            return Err(Error::ShapeMismatch(alloc::format!(
                "path of length {} in a dataset of length {}",
                gaps.len(),
                self.length
            )));
        }
        self.inter_arrivals.extend_from_slice(gaps);
        self.directions.extend_from_slice(directions);
        self.targets.push(target);
        Ok(())
    }

    /// Appends an event sequence of exactly `length` events.
    pub fn push_sequence(&mut self, seq: &EventSequence, target: HawkesParams) -> Result<()> {
        let gaps: Vec<f64> = seq.inter_arrivals().collect();
        let dirs: Vec<u8> = seq.iter().map(|e| e.direction.code()).collect();
        self.push(&gaps, &dirs, target)
    }

    /// Path `i` as an event sequence with unit marks.
    pub fn sequence(&self, i: usize) -> Result<EventSequence> {
        let (gaps, dirs) = self.path(i);
        let mut t = 0.0;
        let events = gaps
            .iter()
            .zip(dirs)
            .map(|(g, d)| {
                t += g;
                MarkedEvent::new(t, Direction::from_code(*d).unwrap_or(Direction::Up), 1)
            })
            .collect();
        EventSequence::with_ties_broken(events, t, 0.0).map(|(s, _)| s)
    }

    /// The sub-dataset of the given paths, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut out = LabeledDataset::new(self.length);
        for &i in indices {
            let (g, d) = self.path(i);
            out.inter_arrivals.extend_from_slice(g);
            out.directions.extend_from_slice(d);
            out.targets.push(self.targets[i]);
        }
        out
    }

    /// Appends every path of `other`.
    pub fn extend(&mut self, other: &LabeledDataset) -> Result<()> {
        if other.length != self.length {
            return Err(Error::ShapeMismatch(alloc::format!(
                "cannot join datasets of length {} and {}",
                self.length,
                other.length
            )));
        }
        self.inter_arrivals.extend_from_slice(&other.inter_arrivals);
        self.directions.extend_from_slice(&other.directions);
        self.targets.extend_from_slice(&other.targets);
        Ok(())
    }
}

/// Path `index` of the dataset generated from `seed`: a fresh parameter draw
/// (resampled while invalid) and a unit-mark path of exactly `length` events.
pub fn dataset_path<S: ParamSampler + ?Sized>(
    index: u64,
    length: usize,
    sampler: &S,
    seed: u64,
) -> Result<(EventSequence, HawkesParams)> {
    let mut rng = path_rng(seed, index);
    let mut attempts = 0;
    let params = loop {
        let p = sampler.sample(&mut rng);
        if p.is_valid() {
            break p;
        }
        attempts += 1;
        if attempts >= MAX_SAMPLER_RETRIES {
            return Err(Error::SamplerExhausted(attempts));
        }
    };
    let seq = simulate_with_rng(&params, StopRule::EventCount(length), &MarkLaw::unit(), &mut rng)?;
    Ok((seq, params))
}

/// `n_paths` independent labelled paths of `length` events each.
pub fn make_dataset<S: ParamSampler + ?Sized>(
    n_paths: usize,
    length: usize,
    sampler: &S,
    seed: u64,
) -> Result<LabeledDataset> {
    check_dataset_shape(n_paths, length)?;
    let mut ds = LabeledDataset::new(length);
    ds.inter_arrivals.reserve(n_paths * length);
    ds.directions.reserve(n_paths * length);
    for i in 0..n_paths {
        let (seq, params) = dataset_path(i as u64, length, sampler, seed)?;
        ds.push_sequence(&seq, params)?;
    }
    Ok(ds)
}

pub fn check_dataset_shape(n_paths: usize, length: usize) -> Result<()> {
    if n_paths == 0 {
        return Err(Error::InvalidConfig("n_paths must be at least 1".into()));
    }
    if length < 2 {
        return Err(Error::InvalidConfig("sequence length must be at least 2".into()));
    }
    Ok(())
}
