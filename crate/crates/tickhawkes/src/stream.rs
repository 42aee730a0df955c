//! Sliding-window estimation over a quote stream.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use tickhawkes_core::ingest::{FilterWarning, IngestConfig, MidPriceFilter};
use tickhawkes_core::mle::{fit_mle, Init};
use tickhawkes_core::nn::{FeatureEncoding, LstmEstimator};
use tickhawkes_core::volatility::{
    estimate_mark_moments, hawkes_volatility, realized_volatility, sample_on_grid, VolConfig,
    TRADING_SECONDS_PER_YEAR,
};
use tickhawkes_core::{Direction, EventSequence, HawkesParams, MarkedEvent};

use crate::error::{Error, Result};
use crate::formats::QuoteStream;

pub enum Estimator {
    Mle,
    Nn(LstmEstimator),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamConfig {
    /// Events per window.
    pub length: usize,
    /// Events between consecutive windows.
    pub stride: usize,
    pub ingest: IngestConfig,
    /// Grid step in seconds for realized volatility; `None` skips it.
    pub rv_grid: Option<f64>,
    pub annualization: f64,
    /// Windows estimated concurrently; 1 runs inline.
    pub workers: usize,
}

impl StreamConfig {
    pub fn new(length: usize) -> Self {
        StreamConfig {
            length,
            stride: (length / 10).max(1),
            ingest: IngestConfig::default(),
            rv_grid: None,
            annualization: TRADING_SECONDS_PER_YEAR,
            workers: 1,
        }
    }

    pub fn check(&self) -> Result<()> {
        self.ingest.check()?;
        if self.length < 2 || self.stride == 0 || self.workers == 0 {
            return Err(Error::Input("window length must be >= 2, stride and workers >= 1".into()));
        }
        if self.rv_grid.is_some_and(|g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::Input("realized-volatility grid must be positive".into()));
        }
        Ok(())
    }
}

/// One emitted window.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamRow {
    /// Session time of the window's last event.
    pub end_time: f64,
    pub params: HawkesParams,
    /// False when the MLE stopped before converging.
    pub converged: bool,
    /// Annualized Hawkes volatility in price units.
    pub hawkes_vol: Option<f64>,
    /// The same divided by the mid at the window end, comparable to `realized_vol`.
    pub hawkes_vol_relative: Option<f64>,
    /// Annualized realized volatility of log mids over the window.
    pub realized_vol: Option<f64>,
}

pub const ROW_HEADER: &str =
    "end_time,mu,alpha1,alpha2,beta,converged,hawkes_vol_annualized,hawkes_vol_relative,realized_vol";

pub fn write_row<W: Write>(w: &mut W, r: &StreamRow) -> std::io::Result<()> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    writeln!(
        w,
        "{:.9},{},{},{},{},{},{},{},{}",
        r.end_time,
        r.params.mu,
        r.params.alpha1,
        r.params.alpha2,
        r.params.beta,
        r.converged,
        opt(r.hawkes_vol),
        opt(r.hawkes_vol_relative),
        opt(r.realized_vol)
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamStats {
    pub quotes: usize,
    pub skipped: usize,
    pub events: usize,
    pub rows: usize,
    /// Windows whose estimation failed; reported as warnings, not rows.
    pub failed_windows: usize,
}

struct Job {
    window: EventSequence,
    end_time: f64,
    start_time: f64,
    end_mid: f64,
}

/// Filtered mid path kept for windowing and realized volatility.
struct History {
    events: Vec<MarkedEvent>,
    /// Mid after each event, with the opening mid at index 0.
    mid_times: Vec<f64>,
    mids: Vec<f64>,
}

impl History {
    fn push(&mut self, e: MarkedEvent, tick: f64) {
        let last = *self.mids.last().expect("opening mid recorded first");
        let step = tick * e.mark as f64;
        self.mids.push(if e.direction == Direction::Up { last + step } else { last - step });
        self.mid_times.push(e.time);
        self.events.push(e);
    }
}

fn estimate(job: &Job, estimator: &Estimator, history: &History, cfg: &StreamConfig) -> Result<StreamRow> {
    let (params, converged) = match estimator {
        Estimator::Mle => {
            let fit = fit_mle(&job.window, Init::Auto)?;
            (fit.params, fit.converged)
        }
        Estimator::Nn(model) => (model.forward(FeatureEncoding::from_sequence(&job.window).view()), true),
    };
    let vol_cfg = VolConfig { tick_size: cfg.ingest.tick_size, horizon_t: 1.0, annualization: cfg.annualization };
    let hawkes_vol = estimate_mark_moments(&job.window)
        .and_then(|z| hawkes_volatility(&params, &z, &vol_cfg))
        .ok()
        .map(|v| v.annualized);
    let realized_vol = cfg.rv_grid.and_then(|step| {
        let grid = sample_on_grid(&history.mid_times, &history.mids, job.start_time, job.end_time, step);
        let span = job.end_time - job.start_time;
        let rv_cfg = VolConfig { tick_size: 1.0, horizon_t: span, annualization: cfg.annualization };
        realized_volatility(&grid, &rv_cfg).ok().map(|r| r.annualized)
    });
    Ok(StreamRow {
        end_time: job.end_time,
        params,
        converged,
        hawkes_vol,
        hawkes_vol_relative: hawkes_vol.map(|v| v / job.end_mid),
        realized_vol,
    })
}

fn describe(w: &FilterWarning) -> String {
    match w {
        FilterWarning::MarkRounding { time, ticks } => {
            format!("t={time:.9}: move of {ticks} ticks is not close to a whole tick; check the tick size")
        }
        FilterWarning::SubTickMove { time, ticks } => format!("t={time:.9}: sub-tick move ({ticks} ticks) recorded as mark 1"),
        FilterWarning::TiePerturbed { time } => format!("t={time:.9}: tied event time moved forward"),
    }
}

/// Appends events, queueing a job for every completed window. Returns warnings.
fn add_events(
    new: Vec<MarkedEvent>,
    history: &mut History,
    pending: &mut Vec<Job>,
    stats: &mut StreamStats,
    cfg: &StreamConfig,
) -> Vec<String> {
    let mut notes = Vec::new();
    for e in new {
        history.push(e, cfg.ingest.tick_size);
        stats.events += 1;
        let n = history.events.len();
        if n < cfg.length || (n - cfg.length) % cfg.stride != 0 {
            continue;
        }
        let start = n - cfg.length;
        let base = if start == 0 { 0.0 } else { history.events[start - 1].time };
        let events: Vec<_> = history.events[start..].iter().map(|e| MarkedEvent { time: e.time - base, ..*e }).collect();
        let horizon = events.last().map_or(0.0, |e| e.time);
        match EventSequence::new(events, horizon) {
            Ok(window) => pending.push(Job {
                window,
                end_time: e.time,
                start_time: base.max(history.mid_times[0]),
                end_mid: *history.mids.last().expect("opening mid recorded first"),
            }),
            // Rebasing can merge times one nanosecond apart.
            Err(err) => {
                stats.failed_windows += 1;
                notes.push(format!("window ending at {:.9}: {err}", e.time));
            }
        }
    }
    notes
}

#[allow(clippy::too_many_arguments)]
fn flush(
    pending: &mut Vec<Job>,
    history: &History,
    stats: &mut StreamStats,
    estimator: &Estimator,
    cfg: &StreamConfig,
    pool: Option<&rayon::ThreadPool>,
    emit: &mut dyn FnMut(&StreamRow) -> Result<()>,
    warn: &mut dyn FnMut(String),
) -> Result<()> {
    let results: Vec<Result<StreamRow>> = match pool {
        Some(pool) => pool.install(|| pending.par_iter().map(|j| estimate(j, estimator, history, cfg)).collect()),
        None => pending.iter().map(|j| estimate(j, estimator, history, cfg)).collect(),
    };
    for (job, r) in pending.iter().zip(results) {
        match r {
            Ok(row) => {
                emit(&row)?;
                stats.rows += 1;
            }
            Err(e) => {
                stats.failed_windows += 1;
                warn(format!("window ending at {:.9}: {e}", job.end_time));
            }
        }
    }
    pending.clear();
    Ok(())
}

/// Consumes quotes and emits one row each time `length` events have arrived
/// and then every `stride` further events. Rows are emitted in window order.
pub fn run_stream<R: Read>(
    source: R,
    label: &Path,
    estimator: &Estimator,
    cfg: &StreamConfig,
    emit: &mut dyn FnMut(&StreamRow) -> Result<()>,
    warn: &mut dyn FnMut(String),
) -> Result<StreamStats> {
    cfg.check()?;
    let mut quotes = QuoteStream::new(source, label)?;
    let mut filter = MidPriceFilter::new(cfg.ingest)?;
    let mut history = History { events: Vec::new(), mid_times: Vec::new(), mids: Vec::new() };
    let mut stats = StreamStats::default();
    let mut pending: Vec<Job> = Vec::new();
    let batch = if cfg.workers > 1 { 4 * cfg.workers } else { 1 };
    let pool = if cfg.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.workers)
                .build()
                .map_err(|e| Error::Input(format!("cannot start {} workers: {e}", cfg.workers)))?,
        )
    } else {
        None
    };

    while let Some(record) = quotes.next_record() {
        let quote = match record {
            Ok(q) => q,
            Err(s) => {
                stats.skipped += 1;
                warn(format!("{}: line {}: skipped: {}", label.display(), s.line, s.reason));
                continue;
            }
        };
        stats.quotes += 1;
        let new = filter.push(quote)?;
        if history.mids.is_empty() {
            history.mids.push(filter.current_mid().expect("first quote sets the mid"));
            history.mid_times.push(quote.timestamp);
        }
        for w in filter.drain_warnings() {
            warn(describe(&w));
        }
        for note in add_events(new, &mut history, &mut pending, &mut stats, cfg) {
            warn(note);
        }
        if pending.len() >= batch {
            flush(&mut pending, &history, &mut stats, estimator, cfg, pool.as_ref(), emit, warn)?;
        }
    }
    let tail = filter.finish();
    for w in filter.drain_warnings() {
        warn(describe(&w));
    }
    for note in add_events(tail, &mut history, &mut pending, &mut stats, cfg) {
        warn(note);
    }
    flush(&mut pending, &history, &mut stats, estimator, cfg, pool.as_ref(), emit, warn)?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tickhawkes_core::ingest::synthesize_quotes;
    use tickhawkes_core::simulate::{simulate, SimConfig, StopRule};

    fn quotes_csv(seq: &EventSequence) -> Vec<u8> {
        let ticks = synthesize_quotes(seq, 100.0, 0.01).unwrap();
        let mut out = Vec::new();
        crate::formats::quotes::write_quotes_to(&mut out, &ticks).unwrap();
        out
    }

    fn collect(bytes: &[u8], cfg: &StreamConfig) -> (Vec<StreamRow>, StreamStats) {
        let mut rows = Vec::new();
        let stats = run_stream(
            bytes,
            Path::new("q.csv"),
            &Estimator::Mle,
            cfg,
            &mut |r| {
                rows.push(r.clone());
                Ok(())
            },
            &mut |_| {},
        )
        .unwrap();
        (rows, stats)
    }

    #[test]
    fn row_schedule_follows_length_and_stride() {
        let p = HawkesParams::new(0.3, 0.4, 0.7, 1.5);
        let seq = simulate(&SimConfig::new(p, StopRule::EventCount(250), 4)).unwrap();
        let bytes = quotes_csv(&seq);
        let cfg = StreamConfig { ingest: IngestConfig { dt: 1e-3, tick_size: 0.01 }, stride: 30, ..StreamConfig::new(100) };
        let (rows, stats) = collect(&bytes, &cfg);
        assert_eq!(stats.skipped, 0);
        let n = stats.events;
        assert_eq!(rows.len(), (n - 100) / 30 + 1);
        assert!(rows.windows(2).all(|w| w[0].end_time < w[1].end_time));
        assert!(rows.iter().all(|r| r.hawkes_vol.is_some() && r.realized_vol.is_none()));
    }

    #[test]
    fn workers_preserve_order_and_values() {
        let p = HawkesParams::new(0.3, 0.4, 0.7, 1.5);
        let seq = simulate(&SimConfig::new(p, StopRule::EventCount(400), 9)).unwrap();
        let bytes = quotes_csv(&seq);
        let base = StreamConfig {
            ingest: IngestConfig { dt: 1e-3, tick_size: 0.01 },
            stride: 20,
            rv_grid: Some(1.0),
            ..StreamConfig::new(100)
        };
        let (a, _) = collect(&bytes, &base);
        let (b, _) = collect(&bytes, &StreamConfig { workers: 3, ..base });
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.realized_vol.is_some()));
    }

    #[test]
    fn empty_and_short_inputs_emit_nothing() {
        let cfg = StreamConfig::new(50);
        let (rows, stats) = collect(b"", &cfg);
        assert!(rows.is_empty());
        assert_eq!(stats, StreamStats::default());
        let (rows, _) = collect(b"timestamp,bid,ask\n0,99.99,100.01\n1,100.00,100.02\n", &cfg);
        assert!(rows.is_empty());
    }
}
