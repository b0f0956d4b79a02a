use crate::bnn::{BnnPosterior, BnnSpec, PosteriorDraws};
use crate::error::Result;
use crate::gp::GpModel;
use crate::lpf::{GridSpec, LowpassContext};
use crate::numeric::SeedPath;
use crate::nuts::SamplerConfig;

use super::metrics::{evaluate_bnn, evaluate_nngp, MetricRow, NllMode};
use super::Dataset;

/// Low-pass filter applied inside the BNN likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSetting {
    pub grid: GridSpec,
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct BnnFit {
    pub draws: PosteriorDraws,
    pub metrics: MetricRow,
}

/// Samples the (optionally filtered) BNN posterior on the training split
/// and scores it on the test split.
pub fn fit_bnn(
    spec: &BnnSpec,
    dataset: &Dataset,
    filter: Option<FilterSetting>,
    config: &SamplerConfig,
    seed: &SeedPath,
    workers: usize,
) -> Result<BnnFit> {
    let ctx = filter.map(|f| LowpassContext::new(f.grid, f.t, &dataset.train.x)).transpose()?;
    let posterior = BnnPosterior::new(*spec, dataset.train.x.clone(), dataset.train.y.clone(), ctx)?;
    let draws = posterior.sample(config, seed, workers)?;
    let metrics = evaluate_bnn(spec, draws.matrix(), dataset, posterior.filter(), NllMode::Mixture)?;
    Ok(BnnFit { draws, metrics })
}

/// Exact inference with the limiting NNGP of `spec`.
pub fn fit_limiting_nngp(spec: &BnnSpec, dataset: &Dataset) -> Result<MetricRow> {
    evaluate_nngp(&GpModel::new(spec.limiting_kernel(), spec.noise_var)?, dataset)
}
