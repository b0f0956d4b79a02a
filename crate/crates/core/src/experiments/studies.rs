use std::fmt::Write as _;

use crate::bnn::{forward, prior_draws, BnnSpec};
use crate::error::{Error, Result};
use crate::gp::{GpModel, GpPosterior};
use crate::kernels::{fmt_f64, gram_sym, KernelSpec};
use crate::lpf::GridSpec;
use crate::numeric::{cholesky, mvn_sample_factored, normal_stream, Matrix, SeedPath};
use crate::spectral::{lowpass_apply, spectrum_percentiles, DctPlan, SpectrumSummary};

use super::metrics::evaluate_nngp;
use super::{synthetic_train_design, Dataset, Split};

/// Where LDL-study datasets come from.
#[derive(Debug, Clone)]
pub enum LdlGenerator {
    BnnPrior(BnnSpec),
    GpPrior(GpModel),
}

impl LdlGenerator {
    fn tag(&self) -> (&'static str, usize) {
        match self {
            LdlGenerator::BnnPrior(spec) => ("bnn", spec.width),
            LdlGenerator::GpPrior(_) => ("nngp", 0),
        }
    }

    fn noise_var(&self) -> f64 {
        match self {
            LdlGenerator::BnnPrior(spec) => spec.noise_var,
            LdlGenerator::GpPrior(gp) => gp.noise_var,
        }
    }

    fn function(&self, x: &Matrix, seed: &SeedPath) -> Result<Vec<f64>> {
        match self {
            LdlGenerator::BnnPrior(spec) => forward(spec, &spec.sample_prior(seed, 1.0), x),
            LdlGenerator::GpPrior(gp) => gp.prior_sample(x, false, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdlRow {
    pub model: String,
    pub width: usize,
    pub sample_id: usize,
    pub ldl: f64,
}

/// Draws `s` noisy datasets on the 21-point training design from
/// `generator` and scores each under `evaluator`.
pub fn ldl_cdf_study(generator: &LdlGenerator, evaluator: &GpModel, s: usize, seed: &SeedPath) -> Result<Vec<LdlRow>> {
    if s == 0 {
        return Err(Error::InvalidArgument("LDL study needs at least one dataset".into()));
    }
    let (model, width) = generator.tag();
    let sigma = generator.noise_var().sqrt();
    (0..s)
        .map(|i| {
            let unit = seed.child("ldl_dataset", i as u64);
            let x = synthetic_train_design(&unit.child("design", 0));
            let f = generator.function(&x, &unit.child("function", 0))?;
            let y: Vec<f64> = f.iter().zip(normal_stream(&unit.child("noise", 0))).map(|(f, z)| f + sigma * z).collect();
            let ldl = evaluator.log_data_likelihood(&x, &y)?;
            Ok(LdlRow { model: model.to_owned(), width, sample_id: i, ldl })
        })
        .collect()
}

/// Sorted values paired with the empirical CDF `k/n` at each.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}

pub const LDL_HEADER: &str = "model,width,sample_id,ldl";

pub fn ldl_csv(rows: &[LdlRow]) -> String {
    let mut out = format!("{LDL_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.model, r.width, r.sample_id, fmt_f64(r.ldl));
    }
    out
}

/// A distribution over functions whose DCT spectrum is summarised.
#[derive(Debug, Clone, Copy)]
pub enum SpectrumSource<'a> {
    BnnPrior(&'a BnnSpec),
    /// Parameter draws, one per row.
    BnnDraws(&'a BnnSpec, &'a Matrix),
    GpPrior(&'a GpModel),
    GpPosterior(&'a GpPosterior),
    /// Noiseless data-generating GP, low-pass filtered with threshold `t`.
    DataGenerator(&'a GpModel, f64),
}

impl SpectrumSource<'_> {
    pub fn phase(&self) -> &'static str {
        match self {
            SpectrumSource::BnnPrior(_) | SpectrumSource::GpPrior(_) => "prior",
            SpectrumSource::BnnDraws(..) | SpectrumSource::GpPosterior(_) => "posterior",
            SpectrumSource::DataGenerator(..) => "data",
        }
    }
}

fn gaussian_draws(mean: &[f64], cov: &Matrix, m: usize, seed: &SeedPath) -> Result<Matrix> {
    let chol = cholesky(cov, 0.0)?;
    let mut out = Matrix::zeros(m, mean.len());
    for i in 0..m {
        let f = mvn_sample_factored(mean, &chol, &mut normal_stream(&seed.child("function", i as u64)));
        out.row_mut(i).copy_from_slice(&f);
    }
    Ok(out)
}

/// `m` function draws on the grid points (BNN parameter draws are used as
/// given, so `m` is ignored for them).
pub fn spectrum_functions(source: SpectrumSource<'_>, grid: &GridSpec, m: usize, seed: &SeedPath) -> Result<Matrix> {
    let x = Matrix::column(&grid.points())?;
    let push_through = |spec: &BnnSpec, draws: &Matrix| -> Result<Matrix> {
        let mut out = Matrix::zeros(draws.rows(), grid.len());
        for r in 0..draws.rows() {
            out.row_mut(r).copy_from_slice(&forward(spec, draws.row(r), &x)?);
        }
        Ok(out)
    };
    match source {
        SpectrumSource::BnnPrior(spec) => push_through(spec, &prior_draws(spec, m, seed)),
        SpectrumSource::BnnDraws(spec, draws) => push_through(spec, draws),
        SpectrumSource::GpPrior(gp) => gaussian_draws(&vec![0.0; grid.len()], &gram_sym(&gp.spec, &x)?, m, seed),
        SpectrumSource::GpPosterior(post) => {
            let pred = post.predict(&x)?;
            gaussian_draws(&pred.mean, &pred.cov, m, seed)
        }
        SpectrumSource::DataGenerator(gp, t) => {
            let mut f = gaussian_draws(&vec![0.0; grid.len()], &gram_sym(&gp.spec, &x)?, m, seed)?;
            let plan = DctPlan::new(grid.len())?;
            for r in 0..m {
                let filtered = lowpass_apply(&plan, t, f.row(r))?;
                f.row_mut(r).copy_from_slice(&filtered);
            }
            Ok(f)
        }
    }
}

/// Percentiles of `|a_i|` over `m` functions drawn from `source` on `grid`.
pub fn spectrum_study(
    source: SpectrumSource<'_>,
    grid: &GridSpec,
    m: usize,
    percentiles: &[f64],
    seed: &SeedPath,
) -> Result<SpectrumSummary> {
    if m < 2 && !matches!(source, SpectrumSource::BnnDraws(..)) {
        return Err(Error::InvalidArgument("spectrum study needs at least two draws".into()));
    }
    let f = spectrum_functions(source, grid, m, seed)?;
    spectrum_percentiles(&f, &DctPlan::new(grid.len())?, percentiles, true)
}

pub const SPECTRUM_HEADER: &str = "phase,model,width,coeff_index,percentile,value";

/// Appends one summary to a spectrum CSV body (no header).
pub fn spectrum_lines(out: &mut String, phase: &str, model: &str, width: usize, summary: &SpectrumSummary) {
    for (coeff, p, v) in summary.rows() {
        let _ = writeln!(out, "{phase},{model},{width},{coeff},{},{}", fmt_f64(p), fmt_f64(v));
    }
}

/// The main hyperparameter of a kernel: lengthscale or weight variance.
pub fn primary_hyper(spec: &KernelSpec) -> f64 {
    match *spec {
        KernelSpec::Rbf { lengthscale } => lengthscale,
        KernelSpec::Arcsin { sigma_w2, .. } | KernelSpec::Arccos { sigma_w2, .. } => sigma_w2,
    }
}

/// Kernels of `family` with the hyperparameter set to each grid value
/// (`σ²_W = σ²_b` for the NNGP kernels).
pub fn hyper_grid(family: &KernelSpec, values: &[f64]) -> Result<Vec<KernelSpec>> {
    values
        .iter()
        .map(|&v| match family {
            KernelSpec::Rbf { .. } => KernelSpec::rbf(v),
            KernelSpec::Arcsin { .. } => KernelSpec::arcsin(v, v),
            KernelSpec::Arccos { .. } => KernelSpec::arccos(v, v),
        })
        .collect()
}

/// Candidate with the lowest validation MSE. Equal scores go to the smaller
/// hyperparameter, then to the earlier candidate.
pub fn nngp_model_select(candidates: &[KernelSpec], noise_var: f64, dataset: &Dataset) -> Result<KernelSpec> {
    if candidates.is_empty() {
        return Err(Error::Empty("hyperparameter grid"));
    }
    let valid = dataset
        .valid
        .as_ref()
        .filter(|v| !v.is_empty())
        .ok_or(Error::Empty("validation split"))?;
    let probe = Dataset {
        id: dataset.id.clone(),
        train: dataset.train.clone(),
        test: Split { x: valid.x.clone(), y: valid.y.clone(), f: valid.f.clone() },
        valid: None,
        manifest: dataset.manifest.clone(),
    };
    let mut best: Option<(f64, f64, KernelSpec)> = None;
    for spec in candidates {
        let mse = evaluate_nngp(&GpModel::new(*spec, noise_var)?, &probe)?.mse;
        let h = primary_hyper(spec);
        let better = match &best {
            None => true,
            Some((b_mse, b_h, _)) => mse < *b_mse || (mse == *b_mse && h < *b_h),
        };
        if better {
            best = Some((mse, h, *spec));
        }
    }
    Ok(best.map(|b| b.2).expect("nonempty candidates"))
}
