//! Network file.
//!
//! Layout: `"HWKN"`, version `u32`, input dim, hidden1, hidden2, output dim
//! (`u32` each), weight count `u64`, standardization mean and SD (`f64`),
//! then the weights as little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use tickhawkes_core::nn::{Architecture, LstmEstimator, Standardization, INPUT_DIM, OUTPUT_DIM};

use super::binary::{put_f64s, Reader};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"HWKN";
pub const MODEL_VERSION: u32 = 1;

pub fn save_model(path: &Path, model: &LstmEstimator) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_model_to(BufWriter::new(file), model).map_err(|e| Error::io(path, e))
}

pub fn write_model_to<W: Write>(mut w: W, model: &LstmEstimator) -> std::io::Result<()> {
    let arch = model.architecture();
    let s = model.standardization();
    w.write_all(MODEL_MAGIC)?;
    for v in [MODEL_VERSION, INPUT_DIM as u32, arch.hidden1 as u32, arch.hidden2 as u32, OUTPUT_DIM as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(model.weights().len() as u64).to_le_bytes())?;
    put_f64s(&mut w, &[s.log_gap_mean, s.log_gap_sd])?;
    put_f64s(&mut w, model.weights())?;
    w.flush()
}

pub fn load_model(path: &Path) -> Result<LstmEstimator> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model_from(BufReader::new(file), path)
}

pub fn read_model_from<R: Read>(reader: R, path: &Path) -> Result<LstmEstimator> {
    let mut r = Reader::new(reader, path);
    r.magic(MODEL_MAGIC)?;
    let version = r.u32("version")?;
    if version != MODEL_VERSION {
        return Err(Error::format(path, format!("unsupported model version {version}")));
    }
    let input = r.u32("input dimension")? as usize;
    let hidden1 = r.u32("hidden1")? as usize;
    let hidden2 = r.u32("hidden2")? as usize;
    let output = r.u32("output dimension")? as usize;
    if input != INPUT_DIM || output != OUTPUT_DIM {
        return Err(Error::format(
            path,
            format!("model maps {input} -> {output}, expected {INPUT_DIM} -> {OUTPUT_DIM}"),
        ));
    }
    let arch = Architecture { hidden1, hidden2 };
    arch.check().map_err(|e| Error::format(path, e.to_string()))?;
    let n = r.u64("weight count")?;
    if n != arch.weight_count() as u64 {
        return Err(Error::format(
            path,
            format!("weight count {n} does not match {hidden1}/{hidden2} layers ({})", arch.weight_count()),
        ));
    }
    let standardization = Standardization { log_gap_mean: r.f64("mean")?, log_gap_sd: r.f64("sd")? };
    let weights = r.f64s(n as usize, "weights")?;
    r.expect_end()?;
    LstmEstimator::from_parts(arch, standardization, weights).map_err(|e| Error::corrupt(path, e.to_string()))
}
