//! Mini-batch Adam training with full backpropagation through time.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::adam::{Adam, AdamConfig};
use super::estimator::{mean_loss, Architecture, FeatureView, GradientScratch, LstmEstimator, Standardization, OUTPUT_DIM};
use super::lstm::LANES;
use crate::clock::Stopwatch;
use crate::error::{Error, Result};
use crate::math;
use crate::mle::{fit_mle, FitResult, Init};
use crate::model::EventSequence;
use crate::simulate::{path_rng, LabeledDataset};

const INIT_STREAM: u64 = 1 << 62;
const SPLIT_STREAM: u64 = INIT_STREAM + 1;
const SHUFFLE_STREAM: u64 = INIT_STREAM + 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Share of the dataset held out for per-epoch validation.
    pub validation_fraction: f64,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 256,
            adam: AdamConfig::default(),
            seed: 0,
            validation_fraction: 0.1,
            architecture: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return Err(Error::InvalidConfig(alloc::format!(
                "validation_fraction must lie in (0, 0.5), got {}",
                self.validation_fraction
            )));
        }
        self.adam.check()?;
        self.architecture.check()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean loss over the epoch's batches, each measured before its update.
    pub train_mse: f64,
    /// Loss on the held-out split after the epoch.
    pub validation_mse: f64,
    /// Zero without `std`.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

/// Training targets `(μ, α1, α2, β − α1 − α2)`.
pub fn transformed_targets(ds: &LabeledDataset) -> Vec<[f64; OUTPUT_DIM]> {
    ds.targets().iter().map(|p| p.to_excess_form()).collect()
}

fn view(ds: &LabeledDataset, i: usize) -> FeatureView<'_> {
    let (gaps, directions) = ds.path(i);
    FeatureView { gaps, directions }
}

/// Loss and gradient of up to `LANES` paths, written (not added) into `out`.
pub fn group_contribution(
    model: &LstmEstimator,
    data: &LabeledDataset,
    targets: &[[f64; OUTPUT_DIM]],
    group: &[usize],
    scratch: &mut GradientScratch,
    out: &mut [f64],
) -> f64 {
    let mut views = [FeatureView { gaps: &[], directions: &[] }; LANES];
    let mut ys = [[0.0; OUTPUT_DIM]; LANES];
    for (k, &i) in group.iter().enumerate() {
        views[k] = view(data, i);
        ys[k] = targets[i];
    }
    out.fill(0.0);
    model.group_gradient(&views[..group.len()], &ys[..group.len()], scratch, out)
}

/// Source of batch gradients. Implementations must split a batch into
/// consecutive `LANES`-sized groups, compute each with
/// [`group_contribution`] and add the results in group order, so every
/// engine produces bit-identical sums.
pub trait GradientEngine {
    /// Adds `Σ_{i∈batch} ∂loss_i/∂w` into `grad` and returns `Σ loss_i`.
    fn batch_gradient(
        &self,
        model: &LstmEstimator,
        data: &LabeledDataset,
        targets: &[[f64; OUTPUT_DIM]],
        batch: &[usize],
        grad: &mut [f64],
    ) -> f64;

    /// Transformed predictions for the given paths.
    fn predict(&self, model: &LstmEstimator, data: &LabeledDataset, indices: &[usize]) -> Vec<[f64; OUTPUT_DIM]> {
        let views: Vec<_> = indices.iter().map(|&i| view(data, i)).collect();
        model.predict_transformed(&views)
    }
}

/// Single-threaded engine.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl GradientEngine for Sequential {
    fn batch_gradient(
        &self,
        model: &LstmEstimator,
        data: &LabeledDataset,
        targets: &[[f64; OUTPUT_DIM]],
        batch: &[usize],
        grad: &mut [f64],
    ) -> f64 {
        let mut scratch = GradientScratch::new(model.architecture());
        let mut buf = vec![0.0; grad.len()];
        let mut loss = 0.0;
        for group in batch.chunks(LANES) {
            loss += group_contribution(model, data, targets, group, &mut scratch, &mut buf);
            for (g, b) in grad.iter_mut().zip(&buf) {
                *g += b;
            }
        }
        loss
    }
}

/// Seeded split into (train, validation) indices.
pub fn split_indices(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut path_rng(seed, SPLIT_STREAM));
    let n_val = (math::round(n as f64 * validation_fraction) as usize).clamp(1, n.saturating_sub(1));
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

pub fn train(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<(LstmEstimator, TrainLog)> {
    train_with(ds, cfg, &Sequential, &mut |_| {})
}

/// Trains a freshly initialized model, reporting each epoch to `observer`.
pub fn train_with<E: GradientEngine + ?Sized>(
    ds: &LabeledDataset,
    cfg: &TrainConfig,
    engine: &E,
    observer: &mut dyn FnMut(&EpochStats),
) -> Result<(LstmEstimator, TrainLog)> {
    cfg.check()?;
    ds.check()?;
    if ds.n_paths() < 2 {
        return Err(Error::NotEnoughEvents { needed: 2, got: ds.n_paths() });
    }
    let (train_idx, val_idx) = split_indices(ds.n_paths(), cfg.validation_fraction, cfg.seed);
    let targets = transformed_targets(ds);
    let val_targets: Vec<_> = val_idx.iter().map(|&i| targets[i]).collect();

    let mut model = LstmEstimator::initialized(cfg.architecture, &mut path_rng(cfg.seed, INIT_STREAM));
    model.set_standardization(Standardization::fit(train_idx.iter().map(|&i| ds.path(i).0)));
    let mut adam = Adam::new(cfg.adam, model.weights().len());
    let mut shuffle_rng = path_rng(cfg.seed, SHUFFLE_STREAM);
    let mut order = train_idx.clone();
    let mut grad = vec![0.0; model.weights().len()];
    let mut log = TrainLog { epochs: Vec::with_capacity(cfg.epochs), train_indices: train_idx, validation_indices: val_idx };

    for epoch in 1..=cfg.epochs {
        let clock = Stopwatch::start();
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            let loss = engine.batch_gradient(&model, ds, &targets, batch, &mut grad);
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, loss: loss * scale });
            }
            adam.step(model.weights_mut(), &grad);
            epoch_loss += loss;
        }
        let preds = engine.predict(&model, ds, &log.validation_indices);
        let validation_mse = mean_loss(&preds, &val_targets);
        if !validation_mse.is_finite() {
            return Err(Error::Diverged { epoch, loss: validation_mse });
        }
        let stats = EpochStats {
            epoch,
            train_mse: epoch_loss / order.len() as f64,
            validation_mse,
            seconds: clock.seconds(),
        };
        observer(&stats);
        log.epochs.push(stats);
    }
    Ok((model, log))
}

/// Settings for training on MLE-labelled empirical segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalConfig {
    pub train: TrainConfig,
    /// Fewest converged segments accepted.
    pub min_segments: usize,
    /// Share of the training set made of empirical segments; `0` trains on
    /// the simulated set alone, `1` on the empirical set alone.
    pub empirical_share: f64,
}

impl Default for EmpiricalConfig {
    fn default() -> Self {
        EmpiricalConfig { train: TrainConfig::default(), min_segments: 20, empirical_share: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EmpiricalSummary {
    pub used: usize,
    pub skipped: usize,
    pub simulated: usize,
}

/// Labels each segment with its fit, dropping failed or non-converged fits.
pub fn empirical_dataset(
    segments: &[EventSequence],
    fits: &[Result<FitResult>],
    min_segments: usize,
) -> Result<(LabeledDataset, EmpiricalSummary)> {
    assert_eq!(segments.len(), fits.len());
    let length = segments.first().map_or(0, |s| s.len());
    if let Some(bad) = segments.iter().find(|s| s.len() != length) {
        return Err(Error::ShapeMismatch(alloc::format!(
            "segments must share one length: {} vs {}",
            bad.len(),
            length
        )));
    }
    let mut ds = LabeledDataset::new(length);
    let mut summary = EmpiricalSummary::default();
    for (seg, fit) in segments.iter().zip(fits) {
        match fit {
            Ok(f) if f.converged && f.params.is_valid() => {
                ds.push_sequence(seg, f.params)?;
                summary.used += 1;
            }
            _ => summary.skipped += 1,
        }
    }
    if summary.used < min_segments.max(2) {
        return Err(Error::NotEnoughEvents { needed: min_segments.max(2), got: summary.used });
    }
    Ok((ds, summary))
}

/// Combines empirical and simulated paths so that empirical paths make up
/// `share` of the result (simulated paths taken from the front, as available).
pub fn mix_datasets(empirical: &LabeledDataset, simulated: Option<&LabeledDataset>, share: f64) -> Result<LabeledDataset> {
    if !(0.0..=1.0).contains(&share) {
        return Err(Error::InvalidConfig(alloc::format!("empirical share must lie in [0, 1], got {share}")));
    }
    let needs_sim = share < 1.0;
    let sim = match (simulated, needs_sim) {
        (Some(s), true) => s,
        (None, true) => return Err(Error::InvalidConfig("mixing requires a simulated dataset".into())),
        (_, false) => return Ok(empirical.clone()),
    };
    if share == 0.0 {
        return Ok(sim.clone());
    }
    let wanted = math::round(empirical.n_paths() as f64 * (1.0 - share) / share) as usize;
    let take: Vec<usize> = (0..wanted.min(sim.n_paths())).collect();
    let mut out = empirical.clone();
    out.extend(&sim.select(&take))?;
    Ok(out)
}

/// Fits every segment by maximum likelihood and trains on the fits,
/// optionally mixed with simulated data.
pub fn train_on_empirical(
    segments: &[EventSequence],
    simulated: Option<&LabeledDataset>,
    cfg: &EmpiricalConfig,
) -> Result<(LstmEstimator, TrainLog, EmpiricalSummary)> {
    if cfg.empirical_share == 0.0 {
        let sim = simulated.ok_or_else(|| Error::InvalidConfig("mixing requires a simulated dataset".into()))?;
        let (model, log) = train(sim, &cfg.train)?;
        return Ok((model, log, EmpiricalSummary { simulated: sim.n_paths(), ..Default::default() }));
    }
    let fits: Vec<_> = segments.iter().map(|s| fit_mle(s, Init::Auto)).collect();
    let (emp, mut summary) = empirical_dataset(segments, &fits, cfg.min_segments)?;
    let ds = mix_datasets(&emp, simulated, cfg.empirical_share)?;
    summary.simulated = ds.n_paths() - emp.n_paths();
    let (model, log) = train(&ds, &cfg.train)?;
    Ok((model, log, summary))
}
