//! Parameters, marked events and intensity evaluation for the symmetric
//! bivariate Hawkes model.
//!
//! Intensities follow
//!
//! ```text
//! λ1(t) = μ + Σ_{up τ < t} α1 e^{-β(t-τ)} + Σ_{down τ < t} α2 e^{-β(t-τ)}
//! λ2(t) = μ + Σ_{up τ < t} α2 e^{-β(t-τ)} + Σ_{down τ < t} α1 e^{-β(t-τ)}
//! ```
//!
//! Marks (jump sizes in ticks) never enter the intensities. All times are in
//! seconds and all rates are per second.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::math;

/// Safety margin on the branching condition `(α1 + α2) / β < 1`.
pub const STABILITY_EPS: f64 = 1e-6;

/// Parameters `{μ, α1, α2, β}` of the symmetric model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HawkesParams {
    /// Baseline intensity of each direction.
    pub mu: f64,
    /// Jump in the intensity of the same direction after an event.
    pub alpha1: f64,
    /// Jump in the intensity of the opposite direction after an event.
    pub alpha2: f64,
    /// Exponential decay rate of the excitation.
    pub beta: f64,
}

impl HawkesParams {
    pub const fn new(mu: f64, alpha1: f64, alpha2: f64, beta: f64) -> Self {
        HawkesParams { mu, alpha1, alpha2, beta }
    }

    pub fn branching_ratio(&self) -> f64 {
        branching_ratio(self)
    }

    /// Checks positivity and stationarity, returning the first failure as an error.
    pub fn check(&self) -> Result<()> {
        validate(self).map_err(Error::InvalidParams)
    }

    pub fn is_valid(&self) -> bool {
        validate(self).is_ok()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.mu, self.alpha1, self.alpha2, self.beta]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        HawkesParams::new(a[0], a[1], a[2], a[3])
    }

    /// `(μ, α1, α2, β − α1 − α2)`: the coordinates in which both estimators
    /// work, since positivity of every entry implies stationarity.
    pub fn to_excess_form(&self) -> [f64; 4] {
        [self.mu, self.alpha1, self.alpha2, self.beta - self.alpha1 - self.alpha2]
    }

    pub fn from_excess_form(c: [f64; 4]) -> Self {
        HawkesParams::new(c[0], c[1], c[2], c[1] + c[2] + c[3])
    }

    /// Excitation of component `target` caused by an event in direction `source`.
    #[inline]
    pub fn excitation(&self, source: Direction, target: Direction) -> f64 {
        if source == target {
            self.alpha1
        } else {
            self.alpha2
        }
    }

    /// Multiplies every rate by `factor`, i.e. runs the process `factor` times faster.
    pub fn time_scaled(&self, factor: f64) -> Self {
        HawkesParams::new(
            self.mu * factor,
            self.alpha1 * factor,
            self.alpha2 * factor,
            self.beta * factor,
        )
    }
}

impl fmt::Display for HawkesParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(mu={}, alpha1={}, alpha2={}, beta={})",
            self.mu, self.alpha1, self.alpha2, self.beta
        )
    }
}

/// A single reason why a parameter vector is unusable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    NonFinite { field: &'static str },
    NonPositive { field: &'static str, value: f64 },
    Negative { field: &'static str, value: f64 },
    NonStationary { branching_ratio: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite { field } => write!(f, "{field} is not finite"),
            Violation::NonPositive { field, value } => write!(f, "{field} <= 0 ({value})"),
            Violation::Negative { field, value } => write!(f, "{field} < 0 ({value})"),
            Violation::NonStationary { branching_ratio } => {
                write!(f, "branching ratio >= 1 ({branching_ratio})")
            }
        }
    }
}

/// Spectral radius of `∫ α ∘ b(t) dt = α / β`.
///
/// The matrix `[[α1, α2], [α2, α1]] / β` has eigenvalues `(α1 ± α2) / β`, so
/// with non-negative excitations the radius is `(α1 + α2) / β`.
pub fn branching_ratio(params: &HawkesParams) -> f64 {
    (params.alpha1 + params.alpha2) / params.beta
}

/// Reports every positivity and stationarity violation.
///
/// `μ` and `β` must be strictly positive. The excitations must be
/// non-negative: `α = 0` is the Poisson boundary and stays admissible so the
/// closed forms can be checked against their Poisson reductions. The branching
/// ratio must stay below `1 - STABILITY_EPS`.
pub fn validate(params: &HawkesParams) -> core::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let fields = [
        ("mu", params.mu),
        ("alpha1", params.alpha1),
        ("alpha2", params.alpha2),
        ("beta", params.beta),
    ];
    for (field, value) in fields {
        if !value.is_finite() {
            out.push(Violation::NonFinite { field });
        }
    }
    if params.mu.is_finite() && params.mu <= 0.0 {
        out.push(Violation::NonPositive { field: "mu", value: params.mu });
    }
    if params.beta.is_finite() && params.beta <= 0.0 {
        out.push(Violation::NonPositive { field: "beta", value: params.beta });
    }
    for (field, value) in [("alpha1", params.alpha1), ("alpha2", params.alpha2)] {
        if value.is_finite() && value < 0.0 {
            out.push(Violation::Negative { field, value });
        }
    }
    if out.is_empty() {
        let ratio = branching_ratio(params);
        if ratio >= 1.0 - STABILITY_EPS {
            out.push(Violation::NonStationary { branching_ratio: ratio });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Price-move direction, encoded `Up = 1`, `Down = 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Direction {
    Up = 1,
    Down = 2,
}

impl Direction {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Direction> {
        match code {
            1 => Some(Direction::Up),
            2 => Some(Direction::Down),
            _ => None,
        }
    }

    /// Index into per-direction arrays: Up → 0, Down → 1.
    #[inline]
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }
}

/// One price move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkedEvent {
    /// Seconds from the start of the observation window.
    pub time: f64,
    pub direction: Direction,
    /// Jump size in ticks, at least 1.
    pub mark: u32,
}

impl MarkedEvent {
    pub const fn new(time: f64, direction: Direction, mark: u32) -> Self {
        MarkedEvent { time, direction, mark }
    }
}

/// Marked events with strictly increasing times on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventSequence {
    events: Vec<MarkedEvent>,
    horizon: f64,
}

impl EventSequence {
    /// Validates ordering, marks and horizon.
    pub fn new(events: Vec<MarkedEvent>, horizon: f64) -> Result<Self> {
        let mut prev = f64::NEG_INFINITY;
        for (index, e) in events.iter().enumerate() {
            if !e.time.is_finite() || e.time < 0.0 {
                return Err(Error::InvalidEventTime { index, time: e.time });
            }
            if e.time <= prev {
                return Err(Error::UnorderedEvents { index, time: e.time });
            }
            if e.mark == 0 {
                return Err(Error::ZeroMark { index });
            }
            prev = e.time;
        }
        let last = events.last().map_or(0.0, |e| e.time);
        if !(horizon >= last) || !horizon.is_finite() {
            return Err(Error::HorizonTooShort { horizon, last });
        }
        Ok(EventSequence { events, horizon })
    }

    /// Sequence whose horizon is the last event time.
    pub fn from_events(events: Vec<MarkedEvent>) -> Result<Self> {
        let horizon = events.last().map_or(0.0, |e| e.time);
        Self::new(events, horizon)
    }

    /// Builds a sequence from events that are ordered but may contain ties.
    ///
    /// A time that does not exceed its predecessor is moved to
    /// `predecessor + tie_step`, or to the next representable float when
    /// `tie_step` is zero. Returns the sequence and the number of moved events.
    pub fn with_ties_broken(
        mut events: Vec<MarkedEvent>,
        horizon: f64,
        tie_step: f64,
    ) -> Result<(Self, usize)> {
        let mut moved = 0;
        for i in 1..events.len() {
            let prev = events[i - 1].time;
            if events[i].time <= prev {
                events[i].time = if tie_step > 0.0 { prev + tie_step } else { prev.next_up() };
                moved += 1;
            }
        }
        let last = events.last().map_or(0.0, |e| e.time);
        let horizon = if horizon < last { last } else { horizon };
        Ok((Self::new(events, horizon)?, moved))
    }

    pub fn empty(horizon: f64) -> Self {
        EventSequence { events: Vec::new(), horizon }
    }

    pub fn events(&self) -> &[MarkedEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<MarkedEvent> {
        self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, MarkedEvent> {
        self.events.iter()
    }

    /// Number of up and down events.
    pub fn counts(&self) -> [usize; 2] {
        let mut c = [0, 0];
        for e in &self.events {
            c[e.direction.index()] += 1;
        }
        c
    }

    /// Gaps between consecutive events; the first is measured from time 0.
    pub fn inter_arrivals(&self) -> impl Iterator<Item = f64> + '_ {
        let mut prev = 0.0;
        self.events.iter().map(move |e| {
            let gap = e.time - prev;
            prev = e.time;
            gap
        })
    }

    /// Same times and directions, marks replaced by `f(index, event)`.
    pub fn map_marks(&self, mut f: impl FnMut(usize, &MarkedEvent) -> u32) -> Result<Self> {
        let events = self
            .events
            .iter()
            .enumerate()
            .map(|(i, e)| MarkedEvent { mark: f(i, e), ..*e })
            .collect();
        Self::new(events, self.horizon)
    }

    /// Events `range`, shifted so that `base` becomes time 0, with the horizon
    /// at the last retained event.
    pub fn rebased(&self, range: core::ops::Range<usize>, base: f64) -> Result<Self> {
        let events: Vec<_> = self.events[range]
            .iter()
            .map(|e| MarkedEvent { time: e.time - base, ..*e })
            .collect();
        Self::from_events(events)
    }
}

/// Running intensity of both components under exponential decay.
///
/// `excitation_i` is the kernel sum already weighted by `α1`/`α2`, so
/// `lambda_i = mu + excitation_i` at every observable state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityState {
    pub lambda1: f64,
    pub lambda2: f64,
    pub excitation1: f64,
    pub excitation2: f64,
    pub t: f64,
    params: HawkesParams,
}

impl IntensityState {
    /// Empty history at time 0.
    pub fn new(params: HawkesParams) -> Self {
        IntensityState {
            lambda1: params.mu,
            lambda2: params.mu,
            excitation1: 0.0,
            excitation2: 0.0,
            t: 0.0,
            params,
        }
    }

    pub fn params(&self) -> &HawkesParams {
        &self.params
    }

    pub fn total(&self) -> f64 {
        self.lambda1 + self.lambda2
    }

    pub fn lambda(&self, d: Direction) -> f64 {
        match d {
            Direction::Up => self.lambda1,
            Direction::Down => self.lambda2,
        }
    }

    /// Decays the excitation to time `t >= self.t`.
    #[inline]
    pub fn advance_to(&mut self, t: f64) {
        let decay = math::exp(-self.params.beta * (t - self.t));
        self.excitation1 *= decay;
        self.excitation2 *= decay;
        self.t = t;
        self.refresh();
    }

    /// Adds the jump caused by an event in `direction` at the current time.
    #[inline]
    pub fn jump(&mut self, direction: Direction) {
        let p = &self.params;
        match direction {
            Direction::Up => {
                self.excitation1 += p.alpha1;
                self.excitation2 += p.alpha2;
            }
            Direction::Down => {
                self.excitation1 += p.alpha2;
                self.excitation2 += p.alpha1;
            }
        }
        self.refresh();
    }

    #[inline]
    fn refresh(&mut self) {
        self.lambda1 = self.params.mu + self.excitation1;
        self.lambda2 = self.params.mu + self.excitation2;
    }
}

/// Left-limit intensities `(λ1(t−), λ2(t−))`; events at exactly `t` are excluded.
pub fn intensity_at(params: &HawkesParams, seq: &EventSequence, t: f64) -> (f64, f64) {
    let mut state = IntensityState::new(*params);
    for e in seq.iter().take_while(|e| e.time < t) {
        state.advance_to(e.time);
        state.jump(e.direction);
    }
    state.advance_to(t.max(state.t));
    (state.lambda1, state.lambda2)
}

/// First and second moments of the mark (jump size) per direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkMoments {
    pub z1_mean: f64,
    pub z2_mean: f64,
    pub z1_sq: f64,
    pub z2_sq: f64,
}

impl MarkMoments {
    pub fn new(z1_mean: f64, z2_mean: f64, z1_sq: f64, z2_sq: f64) -> Result<Self> {
        let m = MarkMoments { z1_mean, z2_mean, z1_sq, z2_sq };
        m.check()?;
        Ok(m)
    }

    /// All marks equal to one tick.
    pub const fn unit() -> Self {
        MarkMoments { z1_mean: 1.0, z2_mean: 1.0, z1_sq: 1.0, z2_sq: 1.0 }
    }

    pub fn check(&self) -> Result<()> {
        for (mean, sq) in [(self.z1_mean, self.z1_sq), (self.z2_mean, self.z2_sq)] {
            if !mean.is_finite() || !sq.is_finite() {
                return Err(Error::InvalidMoments("moments must be finite"));
            }
            if mean < 1.0 {
                return Err(Error::InvalidMoments("mean mark must be at least 1 tick"));
            }
            if sq < mean * mean * (1.0 - 1e-12) {
                return Err(Error::InvalidMoments("second moment below squared mean"));
            }
        }
        Ok(())
    }

    pub fn means(&self) -> [f64; 2] {
        [self.z1_mean, self.z2_mean]
    }

    pub fn second_moments(&self) -> [f64; 2] {
        [self.z1_sq, self.z2_sq]
    }
}
