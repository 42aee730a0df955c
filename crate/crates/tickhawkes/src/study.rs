//! Sampling-distribution study and the NN/MLE comparison table.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;
use tickhawkes_core::mle::{FitResult, Init};
use tickhawkes_core::nn::{FeatureEncoding, FeatureView, LstmEstimator};
use tickhawkes_core::simulate::{path_rng, simulate_with_rng, LabeledDataset, MarkLaw, StopRule};
use tickhawkes_core::{EventSequence, HawkesParams};

use crate::error::{Error, Result};
use crate::manifest::dataset_fingerprints;
use crate::parallel::fit_many;

pub const PARAM_NAMES: [&str; 4] = ["mu", "alpha1", "alpha2", "beta"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mle,
    Nn,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mle" => Ok(Method::Mle),
            "nn" => Ok(Method::Nn),
            other => Err(format!("unknown method {other:?} (expected mle or nn)")),
        }
    }
}

/// Starting point for the MLE in a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InitChoice {
    /// The true parameters of each path.
    Truth,
    Auto,
}

impl InitChoice {
    fn resolve(self, truth: &HawkesParams) -> Init {
        match self {
            InitChoice::Truth => Init::Given(*truth),
            InitChoice::Auto => Init::Auto,
        }
    }
}

/// Per-method summary of estimates against a known truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Paths that produced an estimate.
    pub n: usize,
    /// MLE paths that failed or did not converge; they are excluded everywhere.
    pub failed: usize,
    pub mean: [f64; 4],
    /// Sample SD; absent when fewer than two estimates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd: Option<[f64; 4]>,
    /// Standard error of the mean; absent when fewer than two estimates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<[f64; 4]>,
    pub mse: [f64; 4],
    /// Mean of the four per-parameter MSEs.
    pub mse_aggregate: f64,
    /// Mean wall time per path, seconds.
    pub time_per_path: f64,
}

/// Summarizes estimates against per-path truths. `estimates[i]` is `None` for a failed path.
pub fn summarize(
    method: Method,
    estimates: &[Option<HawkesParams>],
    truths: &[HawkesParams],
    time_per_path: f64,
) -> MethodSummary {
    let ok: Vec<(usize, [f64; 4])> =
        estimates.iter().enumerate().filter_map(|(i, e)| e.map(|p| (i, p.to_array()))).collect();
    let n = ok.len();
    let mut mean = [0.0; 4];
    let mut mse = [0.0; 4];
    for (i, e) in &ok {
        let t = truths[*i].to_array();
        for k in 0..4 {
            mean[k] += e[k] / n as f64;
            mse[k] += (e[k] - t[k]).powi(2) / n as f64;
        }
    }
    let (sd, se) = if n >= 2 {
        let mut var = [0.0; 4];
        for (_, e) in &ok {
            for k in 0..4 {
                var[k] += (e[k] - mean[k]).powi(2) / (n - 1) as f64;
            }
        }
        let sd = var.map(f64::sqrt);
        (Some(sd), Some(sd.map(|s| s / (n as f64).sqrt())))
    } else {
        (None, None)
    };
    MethodSummary {
        method,
        n,
        failed: estimates.len() - n,
        mean,
        sd,
        se,
        mse,
        mse_aggregate: mse.iter().sum::<f64>() / 4.0,
        time_per_path,
    }
}

/// Estimate only when the fit returned and converged.
pub fn usable(fit: &tickhawkes_core::Result<FitResult>) -> Option<HawkesParams> {
    match fit {
        Ok(f) if f.converged => Some(f.params),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub params: HawkesParams,
    pub n_paths: usize,
    pub length: usize,
    pub methods: Vec<Method>,
    pub init: InitChoice,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub params: [f64; 4],
    pub n_paths: usize,
    pub length: usize,
    pub init: InitChoice,
    pub methods: Vec<MethodSummary>,
}

/// Estimates from one study, path by path.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyEstimates {
    pub method: Method,
    pub estimates: Vec<Option<HawkesParams>>,
}

/// Path `i` of a study: `length` unit-mark events at `params`.
pub fn study_path(params: &HawkesParams, length: usize, seed: u64, i: u64) -> tickhawkes_core::Result<EventSequence> {
    simulate_with_rng(params, StopRule::EventCount(length), &MarkLaw::unit(), &mut path_rng(seed, i))
}

pub fn run_study(cfg: &StudyConfig, model: Option<&LstmEstimator>) -> Result<(StudyReport, Vec<StudyEstimates>)> {
    cfg.params.check()?;
    if cfg.n_paths == 0 || cfg.length < 2 {
        return Err(Error::Input("study needs at least one path of at least two events".into()));
    }
    if cfg.methods.contains(&Method::Nn) && model.is_none() {
        return Err(Error::Input("the nn method needs --model".into()));
    }
    let paths: Vec<EventSequence> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| study_path(&cfg.params, cfg.length, cfg.seed, i))
        .collect::<tickhawkes_core::Result<_>>()?;
    let truths = vec![cfg.params; cfg.n_paths];

    let mut summaries = Vec::new();
    let mut all = Vec::new();
    for &method in &cfg.methods {
        let (estimates, time) = match method {
            Method::Mle => {
                let init = cfg.init.resolve(&cfg.params);
                let fits = fit_many(paths.par_iter(), |_| init);
                let time = mean_fit_time(&fits);
                (fits.iter().map(usable).collect::<Vec<_>>(), time)
            }
            Method::Nn => {
                let model = model.expect("checked above");
                let encoded: Vec<FeatureEncoding> = paths.iter().map(FeatureEncoding::from_sequence).collect();
                let views: Vec<FeatureView> = encoded.iter().map(FeatureEncoding::view).collect();
                let pred = model.predict_batch(&views);
                (pred.params.into_iter().map(Some).collect(), pred.per_path)
            }
        };
        summaries.push(summarize(method, &estimates, &truths, time));
        all.push(StudyEstimates { method, estimates });
    }
    let report = StudyReport {
        params: cfg.params.to_array(),
        n_paths: cfg.n_paths,
        length: cfg.length,
        init: cfg.init,
        methods: summaries,
    };
    Ok((report, all))
}

/// Mean wall time of the fits that returned, failed or not.
fn mean_fit_time(fits: &[tickhawkes_core::Result<FitResult>]) -> f64 {
    let times: Vec<f64> = fits.iter().filter_map(|f| f.as_ref().ok().map(|f| f.wall_time)).collect();
    if times.is_empty() {
        0.0
    } else {
        times.iter().sum::<f64>() / times.len() as f64
    }
}

/// The MSE/time table for a held-out dataset, both methods scored on the
/// paths where the MLE converged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub n_paths: usize,
    pub init: InitChoice,
    pub nn: MethodSummary,
    pub mle: MethodSummary,
    /// NN aggregate MSE over MLE aggregate MSE.
    pub mse_ratio: f64,
    /// NN time per path over MLE time per path.
    pub time_ratio: f64,
}

/// Errors if any test path was used in training.
pub fn check_overlap(test: &LabeledDataset, training_fingerprints: &[String]) -> Result<()> {
    let seen: HashSet<&str> = training_fingerprints.iter().map(String::as_str).collect();
    let shared = dataset_fingerprints(test, 0..test.n_paths()).iter().filter(|f| seen.contains(f.as_str())).count();
    if shared > 0 {
        return Err(Error::Input(format!("{shared} test paths also appear in the model's training set")));
    }
    Ok(())
}

pub fn compare(test: &LabeledDataset, model: &LstmEstimator, init: InitChoice) -> Result<CompareReport> {
    test.check()?;
    if test.is_empty() {
        return Err(Error::Input("test dataset is empty".into()));
    }
    let sequences: Vec<EventSequence> =
        (0..test.n_paths()).map(|i| test.sequence(i)).collect::<tickhawkes_core::Result<_>>()?;
    let fits = fit_many(sequences.par_iter(), |i| init.resolve(test.target(i)));
    let mle: Vec<Option<HawkesParams>> = fits.iter().map(usable).collect();

    let views: Vec<FeatureView> = (0..test.n_paths())
        .map(|i| {
            let (gaps, directions) = test.path(i);
            FeatureView { gaps, directions }
        })
        .collect();
    // One thread, like each individual fit.
    let pred = model.predict_batch(&views);
    let nn: Vec<Option<HawkesParams>> = pred.params.iter().zip(&mle).map(|(p, m)| m.map(|_| *p)).collect();

    let truths = test.targets();
    let mle = summarize(Method::Mle, &mle, truths, mean_fit_time(&fits));
    let nn = summarize(Method::Nn, &nn, truths, pred.per_path);
    if mle.n == 0 {
        return Err(Error::Numerical("no test path produced a converged MLE fit".into()));
    }
    Ok(CompareReport {
        n_paths: test.n_paths(),
        init,
        mse_ratio: nn.mse_aggregate / mle.mse_aggregate,
        time_ratio: nn.time_per_path / mle.time_per_path,
        nn,
        mle,
    })
}
