//! Quote CSV (`timestamp,bid,ask`) and price CSV (`timestamp,price`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tickhawkes_core::ingest::{Quote, TickSeries};

use super::events::check_header;
use crate::error::{Error, Result};

pub const QUOTE_HEADER: [&str; 3] = ["timestamp", "bid", "ask"];
pub const PRICE_HEADER: [&str; 2] = ["timestamp", "price"];

#[derive(Deserialize)]
struct QuoteRow {
    timestamp: f64,
    bid: f64,
    ask: f64,
}

/// A record that could not be used, with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRecord {
    pub line: usize,
    pub reason: String,
}

/// Incremental quote reader. Malformed records are reported through
/// [`QuoteStream::next_record`] rather than ending the stream.
pub struct QuoteStream<R: Read> {
    records: csv::DeserializeRecordsIntoIter<R, QuoteRow>,
    line: usize,
    last_timestamp: f64,
}

impl<R: Read> QuoteStream<R> {
    pub fn new(reader: R, label: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
        match rdr.headers() {
            Ok(h) if h.is_empty() => {}
            Ok(h) => check_header(label, &h.clone(), &QUOTE_HEADER)?,
            Err(e) => return Err(Error::format(label, e.to_string())),
        }
        Ok(QuoteStream { records: rdr.into_deserialize(), line: 1, last_timestamp: f64::NEG_INFINITY })
    }

    /// Next record: `Some(Ok(quote))`, `Some(Err(skipped))`, or `None` at the end.
    pub fn next_record(&mut self) -> Option<std::result::Result<Quote, SkippedRecord>> {
        let row = self.records.next()?;
        self.line += 1;
        let line = self.line;
        let skip = |reason: String| Some(Err(SkippedRecord { line, reason }));
        let row = match row {
            Ok(r) => r,
            Err(e) => return skip(e.to_string()),
        };
        let q = Quote::new(row.timestamp, row.bid, row.ask);
        if let Err(e) = q.check() {
            return skip(e.to_string());
        }
        if q.timestamp < self.last_timestamp {
            return skip(format!("timestamp {} precedes {}", q.timestamp, self.last_timestamp));
        }
        self.last_timestamp = q.timestamp;
        Some(Ok(q))
    }
}

/// Reads a whole quote file; any bad record is an error.
pub fn read_quotes(path: &Path) -> Result<TickSeries> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut stream = QuoteStream::new(BufReader::new(file), path)?;
    let mut records = Vec::new();
    while let Some(r) = stream.next_record() {
        match r {
            Ok(q) => records.push(q),
            Err(s) => return Err(Error::format(path, format!("line {}: {}", s.line, s.reason))),
        }
    }
    Ok(TickSeries::new(records)?)
}

pub fn write_quotes(path: &Path, ticks: &TickSeries) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_quotes_to(BufWriter::new(file), ticks).map_err(|e| Error::io(path, e))
}

pub fn write_quotes_to<W: Write>(mut w: W, ticks: &TickSeries) -> std::io::Result<()> {
    writeln!(w, "{}", QUOTE_HEADER.join(","))?;
    for q in ticks.records() {
        writeln!(w, "{:.9},{},{}", q.timestamp, price(q.bid), price(q.ask))?;
    }
    w.flush()
}

/// Eight decimals without trailing zeros, hiding binary noise such as
/// `99.99000000000001`.
fn price(x: f64) -> String {
    let s = format!("{x:.8}");
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').unwrap_or(s).to_owned()
}

#[derive(Deserialize)]
struct PriceRow {
    timestamp: f64,
    price: f64,
}

/// Timestamps and prices; timestamps must be non-decreasing.
pub fn read_prices(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_prices_from(BufReader::new(file), path)
}

pub fn read_prices_from<R: Read>(reader: R, label: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::format(label, e.to_string()))?.clone();
    check_header(label, &header, &PRICE_HEADER)?;
    let (mut times, mut prices) = (Vec::new(), Vec::new());
    for (i, row) in rdr.deserialize::<PriceRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::format(label, format!("line {line}: {e}")))?;
        if times.last().is_some_and(|&t| row.timestamp < t) || !row.timestamp.is_finite() {
            return Err(Error::format(label, format!("line {line}: timestamps must be non-decreasing")));
        }
        times.push(row.timestamp);
        prices.push(row.price);
    }
    Ok((times, prices))
}

pub fn write_prices(path: &Path, times: &[f64], prices: &[f64]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", PRICE_HEADER.join(",")).map_err(io)?;
    for (t, p) in times.iter().zip(prices) {
        writeln!(w, "{t:.9},{}", price(*p)).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Path label for standard input.
pub fn stdin_label() -> PathBuf {
    PathBuf::from("<stdin>")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_skips_bad_records() {
        let text = "timestamp,bid,ask\n0.0,99.99,100.01\nx,1,2\n0.5,100.02,100.00\n0.2,1,2\n1.0,100.00,100.02\n";
        let mut s = QuoteStream::new(text.as_bytes(), Path::new("q.csv")).unwrap();
        let mut ok = 0;
        let mut skipped = Vec::new();
        while let Some(r) = s.next_record() {
            match r {
                Ok(_) => ok += 1,
                Err(e) => skipped.push(e.line),
            }
        }
        assert_eq!(ok, 3);
        assert_eq!(skipped, [3, 4]);
    }

    #[test]
    fn empty_input_is_an_empty_stream() {
        let mut s = QuoteStream::new("".as_bytes(), Path::new("q.csv")).unwrap();
        assert!(s.next_record().is_none());
        let mut s = QuoteStream::new("timestamp,bid,ask\n".as_bytes(), Path::new("q.csv")).unwrap();
        assert!(s.next_record().is_none());
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(QuoteStream::new("time,bid,ask\n".as_bytes(), Path::new("q.csv")).is_err());
        assert!(read_prices_from("t,p\n".as_bytes(), Path::new("p.csv")).is_err());
    }

    #[test]
    fn prices_are_written_without_noise() {
        assert_eq!(price(99.99000000000001), "99.99");
        assert_eq!(price(100.0), "100");
        assert_eq!(price(0.125), "0.125");
    }

    #[test]
    fn prices_parse() {
        let (t, p) = read_prices_from("timestamp,price\n0,100\n1.5,100.5\n".as_bytes(), Path::new("p.csv")).unwrap();
        assert_eq!(t, [0.0, 1.5]);
        assert_eq!(p, [100.0, 100.5]);
    }
}
