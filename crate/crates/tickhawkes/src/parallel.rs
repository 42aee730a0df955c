//! Path-level parallelism on the rayon pool. Every function here returns
//! results in input order and matches its sequential counterpart bit for bit.

use rayon::prelude::*;
use tickhawkes_core::mle::{fit_mle, FitResult, Init};
use tickhawkes_core::nn::{
    group_contribution, FeatureView, GradientEngine, GradientScratch, LstmEstimator, LANES, OUTPUT_DIM,
};
use tickhawkes_core::simulate::{check_dataset_shape, dataset_path, LabeledDataset, ParamSampler};
use tickhawkes_core::{EventSequence, HawkesParams};

/// Paths handed to one worker at a time during inference.
const PREDICT_CHUNK: usize = 4 * LANES;

/// Data-parallel gradient engine. Each lane group is computed into its own
/// buffer; buffers are then added in group order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Parallel;

impl GradientEngine for Parallel {
    fn batch_gradient(
        &self,
        model: &LstmEstimator,
        data: &LabeledDataset,
        targets: &[[f64; OUTPUT_DIM]],
        batch: &[usize],
        grad: &mut [f64],
    ) -> f64 {
        let n = grad.len();
        let parts: Vec<(f64, Vec<f64>)> = batch
            .par_chunks(LANES)
            .map_init(
                || GradientScratch::new(model.architecture()),
                |scratch, group| {
                    let mut buf = vec![0.0; n];
                    let loss = group_contribution(model, data, targets, group, scratch, &mut buf);
                    (loss, buf)
                },
            )
            .collect();
        let mut loss = 0.0;
        for (l, buf) in parts {
            loss += l;
            for (g, b) in grad.iter_mut().zip(&buf) {
                *g += b;
            }
        }
        loss
    }

    fn predict(&self, model: &LstmEstimator, data: &LabeledDataset, indices: &[usize]) -> Vec<[f64; OUTPUT_DIM]> {
        indices
            .par_chunks(PREDICT_CHUNK)
            .flat_map_iter(|chunk| {
                let views: Vec<_> = chunk
                    .iter()
                    .map(|&i| {
                        let (gaps, directions) = data.path(i);
                        FeatureView { gaps, directions }
                    })
                    .collect();
                model.predict_transformed(&views)
            })
            .collect()
    }
}

/// Network estimates for many paths.
pub fn predict_many(model: &LstmEstimator, views: &[FeatureView<'_>]) -> Vec<HawkesParams> {
    views.par_chunks(PREDICT_CHUNK).flat_map_iter(|chunk| model.predict_batch(chunk).params).collect()
}

/// Parallel [`tickhawkes_core::simulate::make_dataset`].
pub fn make_dataset_parallel<S: ParamSampler + Sync + ?Sized>(
    n_paths: usize,
    length: usize,
    sampler: &S,
    seed: u64,
) -> tickhawkes_core::Result<LabeledDataset> {
    check_dataset_shape(n_paths, length)?;
    let paths: Vec<_> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| dataset_path(i, length, sampler, seed))
        .collect::<Result<_, _>>()?;
    let mut ds = LabeledDataset::new(length);
    for (seq, params) in &paths {
        ds.push_sequence(seq, *params)?;
    }
    Ok(ds)
}

/// Fits every sequence; failures stay in place so callers can count them.
pub fn fit_many<'a, I>(sequences: I, init: impl Fn(usize) -> Init + Sync) -> Vec<tickhawkes_core::Result<FitResult>>
where
    I: IndexedParallelIterator<Item = &'a EventSequence>,
{
    sequences.enumerate().map(|(i, s)| fit_mle(s, init(i))).collect()
}
