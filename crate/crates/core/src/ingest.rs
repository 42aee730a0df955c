//! Quote streams to filtered event sequences.
//!
//! The mid-price is observed every `dt` seconds on the grid `k·dt`. When the
//! observed mid differs from the previous observation an event is recorded
//! at the time of the quote that produced the current mid, with the jump
//! size in ticks as its mark. Oscillations that return to the observed level
//! within one interval leave no trace.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::model::{Direction, EventSequence, MarkedEvent};

/// Shift applied to an event whose time does not exceed its predecessor's.
pub const TIE_STEP: f64 = 1e-9;

/// Tolerated distance of `|Δmid| / tick` from an integer.
pub const MARK_ROUNDING_TOLERANCE: f64 = 0.25;

/// One top-of-book quote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quote {
    /// Seconds since session open.
    pub timestamp: f64,
    pub bid: f64,
    pub ask: f64,
}

impl Quote {
    pub const fn new(timestamp: f64, bid: f64, ask: f64) -> Self {
        Quote { timestamp, bid, ask }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.bid + self.ask)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.timestamp.is_finite() && self.timestamp >= 0.0) {
            return Err(Error::InvalidEventTime { index: 0, time: self.timestamp });
        }
        if !(self.bid > 0.0 && self.bid.is_finite()) {
            return Err(Error::NonPositivePrice { index: 0, price: self.bid });
        }
        if !(self.ask >= self.bid && self.ask.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "ask {} below bid {} at {}",
                self.ask,
                self.bid,
                self.timestamp
            )));
        }
        Ok(())
    }
}

/// Quotes with non-decreasing timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TickSeries {
    records: Vec<Quote>,
}

impl TickSeries {
    pub fn new(records: Vec<Quote>) -> Result<Self> {
        let mut prev = f64::NEG_INFINITY;
        for (index, q) in records.iter().enumerate() {
            q.check().map_err(|e| match e {
                Error::InvalidEventTime { time, .. } => Error::InvalidEventTime { index, time },
                Error::NonPositivePrice { price, .. } => Error::NonPositivePrice { index, price },
                other => other,
            })?;
            if q.timestamp < prev {
                return Err(Error::UnorderedEvents { index, time: q.timestamp });
            }
            prev = q.timestamp;
        }
        Ok(TickSeries { records })
    }

    pub fn records(&self) -> &[Quote] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestConfig {
    /// Sampling interval in seconds.
    pub dt: f64,
    /// Price units per tick.
    pub tick_size: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { dt: 0.1, tick_size: 0.01 }
    }
}

impl IngestConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.tick_size > 0.0 && self.tick_size.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "tick size must be positive, got {}",
                self.tick_size
            )));
        }
        Ok(())
    }
}

/// Non-fatal anomalies found while filtering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterWarning {
    /// `|Δmid| / tick` is more than a quarter tick away from an integer.
    MarkRounding { time: f64, ticks: f64 },
    /// The move was below half a tick and was recorded with mark 1.
    SubTickMove { time: f64, ticks: f64 },
    /// The event time was shifted to keep times strictly increasing.
    TiePerturbed { time: f64 },
}

/// Incremental grid filter. Feed quotes in time order with [`push`](Self::push)
/// and flush the final interval with [`finish`](Self::finish).
#[derive(Debug, Clone)]
pub struct MidPriceFilter {
    cfg: IngestConfig,
    next_grid: u64,
    observed_mid: Option<f64>,
    current_mid: Option<f64>,
    change_time: f64,
    last_timestamp: f64,
    last_event_time: f64,
    warnings: Vec<FilterWarning>,
}

impl MidPriceFilter {
    pub fn new(cfg: IngestConfig) -> Result<Self> {
        cfg.check()?;
        Ok(MidPriceFilter {
            cfg,
            next_grid: 0,
            observed_mid: None,
            current_mid: None,
            change_time: 0.0,
            last_timestamp: f64::NEG_INFINITY,
            last_event_time: f64::NEG_INFINITY,
            warnings: Vec::new(),
        })
    }

    pub fn config(&self) -> &IngestConfig {
        &self.cfg
    }

    /// Latest mid-price seen, observed on the grid or not.
    pub fn current_mid(&self) -> Option<f64> {
        self.current_mid
    }

    /// Warnings accumulated so far; draining clears them.
    pub fn drain_warnings(&mut self) -> impl Iterator<Item = FilterWarning> + '_ {
        self.warnings.drain(..)
    }

    fn grid_time(&self, k: u64) -> f64 {
        k as f64 * self.cfg.dt
    }

    /// Observes every grid point strictly before `t`, appending events to `out`.
    fn observe_until(&mut self, t: f64, inclusive: bool, out: &mut Vec<MarkedEvent>) {
        loop {
            let g = self.grid_time(self.next_grid);
            let due = if inclusive { g <= t } else { g < t };
            if !due {
                break;
            }
            self.next_grid += 1;
            self.observe(out);
        }
    }

    fn observe(&mut self, out: &mut Vec<MarkedEvent>) {
        let (Some(current), Some(observed)) = (self.current_mid, self.observed_mid) else {
            return;
        };
        if current == observed {
            return;
        }
        let delta = current - observed;
        self.observed_mid = Some(current);
        let ticks = delta.abs() / self.cfg.tick_size;
        let rounded = math::round(ticks);
        let mut time = self.change_time;
        if rounded < 1.0 {
            self.warnings.push(FilterWarning::SubTickMove { time, ticks });
        } else if (ticks - rounded).abs() > MARK_ROUNDING_TOLERANCE {
            self.warnings.push(FilterWarning::MarkRounding { time, ticks });
        }
        if time <= self.last_event_time {
            time = self.last_event_time + TIE_STEP;
            self.warnings.push(FilterWarning::TiePerturbed { time });
        }
        self.last_event_time = time;
        let direction = if delta > 0.0 { Direction::Up } else { Direction::Down };
        let mark = (rounded.max(1.0)).min(u32::MAX as f64) as u32;
        out.push(MarkedEvent::new(time, direction, mark));
    }

    /// Processes one quote; returns events completed by grid points before it.
    pub fn push(&mut self, quote: Quote) -> Result<Vec<MarkedEvent>> {
        quote.check()?;
        if quote.timestamp < self.last_timestamp {
            return Err(Error::UnorderedEvents { index: 0, time: quote.timestamp });
        }
        let mut out = Vec::new();
        if self.current_mid.is_none() {
            // The opening quote is the reference level; grid points before it see nothing.
            self.next_grid = math::floor(quote.timestamp / self.cfg.dt) as u64;
            while self.grid_time(self.next_grid) < quote.timestamp {
                self.next_grid += 1;
            }
            let mid = quote.mid();
            self.current_mid = Some(mid);
            self.observed_mid = Some(mid);
            self.change_time = quote.timestamp;
        } else {
            self.observe_until(quote.timestamp, false, &mut out);
            let mid = quote.mid();
            if Some(mid) != self.current_mid {
                self.current_mid = Some(mid);
                self.change_time = quote.timestamp;
            }
        }
        self.last_timestamp = quote.timestamp;
        Ok(out)
    }

    /// Observes the grid up to and including the first point at or after the
    /// last quote, so a trailing change is not lost.
    pub fn finish(&mut self) -> Vec<MarkedEvent> {
        let mut out = Vec::new();
        if self.current_mid.is_some() {
            self.observe_until(self.last_timestamp, true, &mut out);
            if self.current_mid != self.observed_mid {
                self.next_grid += 1;
                self.observe(&mut out);
            }
        }
        out
    }
}

/// Result of [`filter_events`].
#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub events: EventSequence,
    pub warnings: Vec<FilterWarning>,
}

/// Filters a whole quote series. Times are seconds since session open.
pub fn filter_events(ticks: &TickSeries, cfg: &IngestConfig) -> Result<Filtered> {
    let mut filter = MidPriceFilter::new(*cfg)?;
    if ticks.is_empty() {
        return Err(Error::NotEnoughEvents { needed: 1, got: 0 });
    }
    let mut events = Vec::new();
    for q in ticks.records() {
        events.extend(filter.push(*q)?);
    }
    events.extend(filter.finish());
    let horizon = ticks.records().last().map_or(0.0, |q| q.timestamp);
    let warnings = filter.drain_warnings().collect();
    let last = events.last().map_or(0.0, |e| e.time);
    let events = EventSequence::new(events, horizon.max(last))?;
    Ok(Filtered { events, warnings })
}

/// A fixed-length slice of a longer sequence, re-based to start at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// Index of the first event in the source sequence.
    pub start: usize,
    /// Source time mapped to 0: the preceding event's time, or 0 for the first window.
    pub base_time: f64,
    /// Source time of the last event.
    pub end_time: f64,
    pub events: EventSequence,
}

/// Windows of exactly `length` events every `stride` events.
pub fn window_segments(seq: &EventSequence, length: usize, stride: usize) -> Result<Vec<Window>> {
    if length < 2 || stride == 0 {
        return Err(Error::InvalidConfig(alloc::format!(
            "window length must be >= 2 and stride >= 1 (got {length}, {stride})"
        )));
    }
    let ev = seq.events();
    let mut out = Vec::new();
    let mut start = 0;
    while start + length <= ev.len() {
        let base_time = if start == 0 { 0.0 } else { ev[start - 1].time };
        out.push(Window {
            start,
            base_time,
            end_time: ev[start + length - 1].time,
            events: seq.rebased(start..start + length, base_time)?,
        });
        start += stride;
    }
    Ok(out)
}

/// One quote per event plus an opening quote at time 0, with the mid moving
/// by `±mark` ticks at each event and a constant spread of two ticks.
pub fn synthesize_quotes(seq: &EventSequence, opening_mid: f64, tick_size: f64) -> Result<TickSeries> {
    let mut level = math::round(opening_mid / tick_size) as i64;
    let quote = |t: f64, level: i64| Quote::new(t, (level - 1) as f64 * tick_size, (level + 1) as f64 * tick_size);
    let mut records = Vec::with_capacity(seq.len() + 1);
    records.push(quote(0.0, level));
    for e in seq.iter() {
        match e.direction {
            Direction::Up => level += e.mark as i64,
            Direction::Down => level -= e.mark as i64,
        }
        if level <= 1 {
            return Err(Error::NonPositivePrice { index: records.len(), price: level as f64 * tick_size });
        }
        records.push(quote(e.time, level));
    }
    TickSeries::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cfg() -> IngestConfig {
        IngestConfig { dt: 0.1, tick_size: 0.01 }
    }

    fn series(q: &[(f64, f64)]) -> TickSeries {
        TickSeries::new(q.iter().map(|&(t, mid)| Quote::new(t, mid - 0.005, mid + 0.005)).collect()).unwrap()
    }

    #[test]
    fn constant_quotes_give_no_events() {
        let s = series(&[(0.0, 100.0), (0.5, 100.0), (3.0, 100.0)]);
        assert!(filter_events(&s, &cfg()).unwrap().events.is_empty());
    }

    #[test]
    fn single_change_keeps_exact_time() {
        let s = series(&[(0.0, 100.0), (0.37, 100.01), (1.0, 100.01)]);
        let f = filter_events(&s, &cfg()).unwrap();
        assert_eq!(f.events.events(), &[MarkedEvent::new(0.37, Direction::Up, 1)]);
        assert!(f.warnings.is_empty());
        // A trailing change is flushed by `finish`.
        let s = series(&[(0.0, 100.0), (0.37, 99.98)]);
        let f = filter_events(&s, &cfg()).unwrap();
        assert_eq!(f.events.events(), &[MarkedEvent::new(0.37, Direction::Down, 2)]);
    }

    #[test]
    fn sub_interval_round_trip_is_filtered() {
        let s = series(&[(0.0, 100.0), (0.31, 100.01), (0.34, 100.0), (0.9, 100.0)]);
        assert!(filter_events(&s, &cfg()).unwrap().events.is_empty());
    }

    #[test]
    fn last_change_in_interval_defines_event() {
        let s = series(&[(0.0, 100.0), (0.31, 100.01), (0.34, 100.03), (0.36, 100.03), (0.9, 100.03)]);
        let f = filter_events(&s, &cfg()).unwrap();
        assert_eq!(f.events.events(), &[MarkedEvent::new(0.34, Direction::Up, 3)]);
    }

    #[test]
    fn quote_on_grid_point_is_observed_there() {
        let s = series(&[(0.0, 100.0), (0.2, 100.01), (0.25, 100.0), (1.0, 100.0)]);
        let f = filter_events(&s, &cfg()).unwrap();
        assert_eq!(f.events.len(), 2);
        assert_eq!(f.events.events()[1], MarkedEvent::new(0.25, Direction::Down, 1));
    }

    #[test]
    fn odd_moves_warn() {
        let s = series(&[(0.0, 100.0), (0.15, 100.004), (0.5, 100.0215), (1.0, 100.0215)]);
        let f = filter_events(&s, &cfg()).unwrap();
        assert_eq!(f.events.len(), 2);
        assert!(f.events.iter().all(|e| e.direction == Direction::Up));
        assert_eq!(f.events.events()[0].mark, 1);
        assert!(matches!(f.warnings[0], FilterWarning::SubTickMove { .. }));
        assert!(matches!(f.warnings[1], FilterWarning::MarkRounding { .. }));
    }

    #[test]
    fn rejects_bad_quotes() {
        assert!(TickSeries::new(vec![Quote::new(1.0, 100.0, 99.0)]).is_err());
        assert!(TickSeries::new(vec![Quote::new(1.0, 0.0, 1.0)]).is_err());
        assert!(TickSeries::new(vec![Quote::new(1.0, 1.0, 1.0), Quote::new(0.5, 1.0, 1.0)]).is_err());
        assert!(filter_events(&TickSeries::default(), &cfg()).is_err());
        assert!(MidPriceFilter::new(IngestConfig { dt: 0.0, tick_size: 0.01 }).is_err());
    }

    fn seq_of(n: usize) -> EventSequence {
        EventSequence::from_events(
            (0..n).map(|i| MarkedEvent::new(1.0 + i as f64, Direction::Up, 1)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(window_segments(&seq_of(5), 2, 1).unwrap().len(), 4);
        assert_eq!(window_segments(&seq_of(10), 3, 3).unwrap().len(), 3);
        assert!(window_segments(&seq_of(1), 2, 1).unwrap().is_empty());
        assert!(window_segments(&seq_of(5), 1, 1).is_err());
        assert!(window_segments(&seq_of(5), 2, 0).is_err());
    }

    #[test]
    fn windows_are_rebased() {
        let w = window_segments(&seq_of(6), 3, 2).unwrap();
        assert_eq!(w[0].base_time, 0.0);
        assert_eq!(w[0].events.events()[0].time, 1.0);
        assert_eq!(w[1].start, 2);
        assert_eq!(w[1].base_time, 2.0);
        assert_eq!(w[1].end_time, 5.0);
        let times: vec::Vec<f64> = w[1].events.iter().map(|e| e.time).collect();
        assert_eq!(times, [1.0, 2.0, 3.0]);
        assert_eq!(w[1].events.horizon(), 3.0);
    }

    #[test]
    fn synthesized_quotes_round_trip() {
        let ev = vec![
            MarkedEvent::new(0.05, Direction::Up, 2),
            MarkedEvent::new(0.42, Direction::Down, 1),
            MarkedEvent::new(0.61, Direction::Down, 3),
            MarkedEvent::new(1.7, Direction::Up, 1),
        ];
        let seq = EventSequence::from_events(ev).unwrap();
        let q = synthesize_quotes(&seq, 100.0, 0.01).unwrap();
        let f = filter_events(&q, &cfg()).unwrap();
        assert_eq!(f.events.events(), seq.events());
        assert!(f.warnings.is_empty());
    }
}
