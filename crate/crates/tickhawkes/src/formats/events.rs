//! Event CSV: header `time,direction,mark`, time in seconds with 9 decimals,
//! direction 1 (up) or 2 (down), positive integer mark.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Deserialize;
use tickhawkes_core::ingest::TIE_STEP;
use tickhawkes_core::{Direction, EventSequence, MarkedEvent};

use crate::error::{Error, Result};

pub const EVENT_HEADER: [&str; 3] = ["time", "direction", "mark"];

#[derive(Deserialize)]
struct Row {
    time: f64,
    direction: u8,
    mark: u32,
}

/// Events read from a file, with the number of tied timestamps that were
/// moved forward by one nanosecond.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedEvents {
    pub events: EventSequence,
    pub ties_moved: usize,
}

pub(crate) fn check_header(path: &Path, found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = found.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::format(path, format!("expected header {:?}, found {:?}", expected.join(","), got.join(","))));
    }
    Ok(())
}

pub fn read_events(path: &Path) -> Result<LoadedEvents> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_events_from(BufReader::new(file), path)
}

/// Parses event CSV; `label` names the source in errors.
pub fn read_events_from<R: Read>(reader: R, label: &Path) -> Result<LoadedEvents> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::format(label, e.to_string()))?.clone();
    check_header(label, &header, &EVENT_HEADER)?;
    let mut events = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::format(label, format!("line {line}: {e}")))?;
        let direction = Direction::from_code(row.direction)
            .ok_or_else(|| Error::format(label, format!("line {line}: direction must be 1 or 2, got {}", row.direction)))?;
        if row.mark == 0 {
            return Err(Error::format(label, format!("line {line}: mark must be positive")));
        }
        if !(row.time.is_finite() && row.time >= 0.0) {
            return Err(Error::format(label, format!("line {line}: invalid time {}", row.time)));
        }
        if let Some(prev) = events.last().map(|e: &MarkedEvent| e.time) {
            if row.time < prev {
                return Err(Error::format(label, format!("line {line}: time {} precedes {prev}", row.time)));
            }
        }
        events.push(MarkedEvent::new(row.time, direction, row.mark));
    }
    let horizon = events.last().map_or(0.0, |e| e.time);
    let (events, ties_moved) = EventSequence::with_ties_broken(events, horizon, TIE_STEP)?;
    Ok(LoadedEvents { events, ties_moved })
}

pub fn write_events(path: &Path, seq: &EventSequence) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_events_to(BufWriter::new(file), seq).map_err(|e| Error::io(path, e))
}

pub fn write_events_to<W: Write>(mut w: W, seq: &EventSequence) -> std::io::Result<()> {
    writeln!(w, "{}", EVENT_HEADER.join(","))?;
    for e in seq.iter() {
        writeln!(w, "{:.9},{},{}", e.time, e.direction.code(), e.mark)?;
    }
    w.flush()
}
