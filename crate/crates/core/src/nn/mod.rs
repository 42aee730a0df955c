//! Recurrent estimator mapping event paths to Hawkes parameters.
//!
//! Two stacked LSTM layers read `(ln(1 + Δt) standardized, direction code)`
//! per event; a dense softplus head emits `(μ, α1, α2, δ)` and the estimate
//! is `β = α1 + α2 + δ`, which is stationary by construction.

mod adam;
mod estimator;
pub mod lstm;
mod train;

pub use adam::{Adam, AdamConfig};
pub use estimator::{
    head_transform, mean_loss, params_from_transformed, Architecture, BatchPrediction, FeatureEncoding, FeatureView,
    GradientScratch, LstmEstimator, Standardization, INPUT_DIM, OUTPUT_DIM,
};
pub use lstm::LANES;
pub use train::{
    empirical_dataset, group_contribution, mix_datasets, split_indices, train, train_on_empirical, train_with,
    transformed_targets, EmpiricalConfig, EmpiricalSummary, EpochStats, GradientEngine, Sequential, TrainConfig,
    TrainLog,
};
