//! `fit.json`: an estimate with its diagnostics. Floats are stored as
//! decimal strings with 17 significant digits so they read back bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tickhawkes_core::mle::FitResult;
use tickhawkes_core::HawkesParams;

use crate::error::{Error, Result};

/// Formats `x` with 17 significant digits.
pub fn exact(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_exact(path: &Path, field: &str, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::format(path, format!("{field}: not a number: {s:?}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub method: String,
    pub mu: String,
    pub alpha1: String,
    pub alpha2: String,
    pub beta: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loglik: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    pub wall_time: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_norm: Option<String>,
}

impl FitFile {
    pub fn from_mle(fit: &FitResult) -> Self {
        FitFile {
            loglik: Some(exact(fit.loglik)),
            iterations: Some(fit.iterations),
            converged: Some(fit.converged),
            gradient_norm: Some(exact(fit.gradient_norm)),
            ..Self::from_params("mle", &fit.params, fit.wall_time)
        }
    }

    pub fn from_params(method: &str, p: &HawkesParams, wall_time: f64) -> Self {
        FitFile {
            method: method.to_owned(),
            mu: exact(p.mu),
            alpha1: exact(p.alpha1),
            alpha2: exact(p.alpha2),
            beta: exact(p.beta),
            loglik: None,
            iterations: None,
            converged: None,
            wall_time: exact(wall_time),
            gradient_norm: None,
        }
    }

    pub fn params(&self, path: &Path) -> Result<HawkesParams> {
        Ok(HawkesParams::new(
            parse_exact(path, "mu", &self.mu)?,
            parse_exact(path, "alpha1", &self.alpha1)?,
            parse_exact(path, "alpha2", &self.alpha2)?,
            parse_exact(path, "beta", &self.beta)?,
        ))
    }

    /// Reconstructs the MLE result; fails for files written by other methods.
    pub fn mle_result(&self, path: &Path) -> Result<FitResult> {
        let missing = |f: &str| Error::format(path, format!("{f} missing; not an MLE fit"));
        Ok(FitResult {
            params: self.params(path)?,
            loglik: parse_exact(path, "loglik", self.loglik.as_deref().ok_or_else(|| missing("loglik"))?)?,
            iterations: self.iterations.ok_or_else(|| missing("iterations"))?,
            converged: self.converged.ok_or_else(|| missing("converged"))?,
            wall_time: parse_exact(path, "wall_time", &self.wall_time)?,
            gradient_norm: parse_exact(
                path,
                "gradient_norm",
                self.gradient_norm.as_deref().ok_or_else(|| missing("gradient_norm"))?,
            )?,
        })
    }
}

pub fn write_fit(path: &Path, fit: &FitFile) -> Result<()> {
    let text = serde_json::to_string_pretty(fit).expect("fit file serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_fit(path: &Path) -> Result<FitFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mle_result_round_trips_bit_exactly() {
        let fit = FitResult {
            params: HawkesParams::new(0.1 + 0.2, 1.0 / 3.0, 0.7000000000000001, 1.5e-300),
            loglik: -1234.5678901234567,
            iterations: 14,
            converged: true,
            wall_time: 0.00123,
            gradient_norm: 5e-324,
        };
        let file = FitFile::from_mle(&fit);
        let json = serde_json::to_string(&file).unwrap();
        let back: FitFile = serde_json::from_str(&json).unwrap();
        let r = back.mle_result(Path::new("f.json")).unwrap();
        assert_eq!(r.params.to_array().map(f64::to_bits), fit.params.to_array().map(f64::to_bits));
        assert_eq!(r.loglik.to_bits(), fit.loglik.to_bits());
        assert_eq!(r.gradient_norm.to_bits(), fit.gradient_norm.to_bits());
        assert_eq!(r, fit);
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(exact(0.3), "2.9999999999999999e-1");
        assert_eq!(exact(1.5), "1.5000000000000000e0");
    }

    #[test]
    fn nn_files_have_no_mle_fields() {
        let f = FitFile::from_params("nn", &HawkesParams::new(0.3, 0.4, 0.7, 1.5), 0.001);
        let json = serde_json::to_string(&f).unwrap();
        assert!(!json.contains("loglik"));
        assert!(f.mle_result(Path::new("f.json")).is_err());
    }
}
