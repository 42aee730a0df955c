//! Labeled dataset container.
//!
//! Layout: `"HWKD"`, version `u32`, `n_paths u64`, `L u64`, then all
//! inter-arrivals (`n_paths·L` f64), all directions (`n_paths·L` u8) and the
//! targets `(μ, α1, α2, β)` as 4 f64 per path. Everything little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use tickhawkes_core::simulate::LabeledDataset;
use tickhawkes_core::HawkesParams;

use super::binary::{put_f64s, Reader};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"HWKD";
pub const DATASET_VERSION: u32 = 1;

pub fn save_dataset(path: &Path, ds: &LabeledDataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(BufWriter::new(file), ds).map_err(|e| Error::io(path, e))
}

pub fn write_dataset_to<W: Write>(mut w: W, ds: &LabeledDataset) -> std::io::Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(ds.n_paths() as u64).to_le_bytes())?;
    w.write_all(&(ds.length() as u64).to_le_bytes())?;
    put_f64s(&mut w, ds.inter_arrivals())?;
    w.write_all(ds.directions())?;
    let targets: Vec<f64> = ds.targets().iter().flat_map(|t| t.to_array()).collect();
    put_f64s(&mut w, &targets)?;
    w.flush()
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_from(BufReader::new(file), path)
}

pub fn read_dataset_from<R: Read>(reader: R, path: &Path) -> Result<LabeledDataset> {
    let mut r = Reader::new(reader, path);
    r.magic(DATASET_MAGIC)?;
    let version = r.u32("version")?;
    if version != DATASET_VERSION {
        return Err(Error::format(path, format!("unsupported dataset version {version}")));
    }
    let n_paths = r.u64("path count")?;
    let length = r.u64("path length")?;
    let cells = n_paths
        .checked_mul(length)
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| Error::corrupt(path, "header sizes overflow"))?;
    let gaps = r.f64s(cells, "inter-arrivals")?;
    let directions = r.bytes(cells, "directions")?;
    let raw = r.f64s(n_paths as usize * 4, "targets")?;
    r.expect_end()?;
    let targets = raw.chunks_exact(4).map(|c| HawkesParams::from_array([c[0], c[1], c[2], c[3]])).collect();
    LabeledDataset::from_parts(length as usize, gaps, directions, targets)
        .map_err(|e| Error::corrupt(path, format!("dataset contents are invalid: {e}")))
}

/// Long-format CSV, one row per event, targets repeated on every row.
pub fn export_dataset_csv<W: Write>(mut w: W, ds: &LabeledDataset) -> std::io::Result<()> {
    writeln!(w, "path,step,inter_arrival,direction,mu,alpha1,alpha2,beta")?;
    for i in 0..ds.n_paths() {
        let (gaps, dirs) = ds.path(i);
        let t = ds.target(i);
        for (k, (g, d)) in gaps.iter().zip(dirs).enumerate() {
            writeln!(w, "{i},{k},{g:.9},{d},{},{},{},{}", t.mu, t.alpha1, t.alpha2, t.beta)?;
        }
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tickhawkes_core::simulate::{default_param_sampler, make_dataset};

    #[test]
    fn round_trip_is_lossless() {
        let ds = make_dataset(7, 13, &default_param_sampler(), 4).unwrap();
        let mut bytes = Vec::new();
        write_dataset_to(&mut bytes, &ds).unwrap();
        assert_eq!(bytes.len(), 24 + 7 * 13 * 9 + 7 * 32);
        let back = read_dataset_from(bytes.as_slice(), Path::new("d.hwkd")).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn truncation_and_bad_headers_are_detected() {
        let ds = make_dataset(3, 5, &default_param_sampler(), 1).unwrap();
        let mut bytes = Vec::new();
        write_dataset_to(&mut bytes, &ds).unwrap();
        let p = Path::new("d.hwkd");
        let cut = read_dataset_from(&bytes[..bytes.len() - 3], p).unwrap_err();
        assert!(matches!(cut, Error::Corrupt { .. }), "{cut}");
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(read_dataset_from(extra.as_slice(), p), Err(Error::Corrupt { .. })));
        let mut wrong = bytes.clone();
        wrong[4] = 9;
        assert!(matches!(read_dataset_from(wrong.as_slice(), p), Err(Error::Format { .. })));
        wrong[0] = b'X';
        assert!(read_dataset_from(wrong.as_slice(), p).is_err());
    }

    #[test]
    fn csv_export_has_one_row_per_event() {
        let ds = make_dataset(2, 4, &default_param_sampler(), 2).unwrap();
        let mut out = Vec::new();
        export_dataset_csv(&mut out, &ds).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 1 + 8);
    }
}
