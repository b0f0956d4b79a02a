use std::path::{Path, PathBuf};

use bnnwidth::bnn::{Activation, BnnSpec};
use bnnwidth::kernels::KernelSpec;
use bnnwidth::lpf::{GridSpec, DEFAULT_GRID_HI, DEFAULT_GRID_LO, DEFAULT_GRID_POINTS};
use bnnwidth::nuts::SamplerConfig;
use bnnwidth::spectral::DEFAULT_PERCENTILES;
use serde::Deserialize;

use crate::error::CliError;

/// Suite size used by `--full-scale`.
pub const FULL_SCALE_DATASETS: usize = 200;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    #[serde(default = "one")]
    pub workers: usize,
    pub data: DataConfig,
    pub bnn: Option<BnnConfig>,
    #[serde(default)]
    pub nngp: NngpConfig,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub ldl: LdlConfig,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Synthetic generator; mutually exclusive with `tabular`.
    pub kernel: Option<KernelConfig>,
    pub tabular: Option<TabularConfig>,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_sigma_eps")]
    pub sigma_eps: f64,
    /// Low-pass filter the generated functions with this threshold.
    pub filter_t: Option<f64>,
}

fn default_count() -> usize {
    20
}

fn default_sigma_eps() -> f64 {
    bnnwidth::experiments::DEFAULT_SIGMA_EPS
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: String,
    pub lengthscale: Option<f64>,
    pub sigma_w2: Option<f64>,
    pub sigma_b2: Option<f64>,
}

impl KernelConfig {
    pub fn build(&self, section: &str) -> Result<KernelSpec, CliError> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| CliError::Config(format!("{section}: missing field `{name}` for a {} kernel", self.family)))
        };
        let spec = match self.family.as_str() {
            "rbf" => KernelSpec::rbf(need(self.lengthscale, "lengthscale")?),
            "arcsin" => KernelSpec::arcsin(need(self.sigma_w2, "sigma_w2")?, need(self.sigma_b2, "sigma_b2")?),
            "arccos" => KernelSpec::arccos(need(self.sigma_w2, "sigma_w2")?, need(self.sigma_b2, "sigma_b2")?),
            other => return Err(CliError::Config(format!("{section}: unknown kernel family `{other}`"))),
        };
        spec.map_err(|e| CliError::Config(format!("{section}: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularConfig {
    pub path: PathBuf,
    pub target: String,
    #[serde(default)]
    pub standardize: bool,
}

/// One BNN family swept over widths and filter thresholds.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BnnConfig {
    pub activation: String,
    pub sigma_w2: f64,
    pub sigma_b2: f64,
    pub widths: Vec<usize>,
    /// Filter thresholds; without them the plain model is fitted.
    pub thresholds: Option<Vec<f64>>,
}

impl BnnConfig {
    pub fn activation(&self) -> Result<Activation, CliError> {
        self.activation.parse().map_err(|e| CliError::Config(format!("bnn.activation: {e}")))
    }

    pub fn spec(&self, width: usize, input_dim: usize, noise_var: f64) -> Result<BnnSpec, CliError> {
        BnnSpec::new(width, self.activation()?, input_dim, self.sigma_w2, self.sigma_b2, noise_var)
            .map_err(|e| CliError::Config(format!("bnn: {e}")))
    }

    /// `None` stands for the unfiltered model.
    pub fn filter_settings(&self) -> Vec<Option<f64>> {
        match &self.thresholds {
            None => vec![None],
            Some(ts) => ts.iter().copied().map(Some).collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NngpConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Kernel for NNGP-only runs; with a [bnn] section its limiting kernel
    /// is used instead.
    pub kernel: Option<KernelConfig>,
    /// Hyperparameter grid for validation-based selection (needs a
    /// validation split); otherwise the BNN's limiting kernel is used.
    pub select: Option<Vec<f64>>,
}

fn yes() -> bool {
    true
}

impl Default for NngpConfig {
    fn default() -> Self {
        Self { enabled: true, kernel: None, select: None }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub chains: Option<usize>,
    pub warmup: Option<usize>,
    pub draws: Option<usize>,
    pub thin: Option<usize>,
    pub target_accept: Option<f64>,
    pub max_depth: Option<usize>,
}

impl SamplerSection {
    pub fn build(&self, full_scale: bool) -> Result<SamplerConfig, CliError> {
        let base = if full_scale { SamplerConfig::full_scale() } else { SamplerConfig::desk_scale() };
        let config = SamplerConfig {
            chains: self.chains.unwrap_or(base.chains),
            warmup: self.warmup.unwrap_or(base.warmup),
            draws: self.draws.unwrap_or(base.draws),
            thin: self.thin.unwrap_or(base.thin),
            target_accept: self.target_accept.unwrap_or(base.target_accept),
            max_depth: self.max_depth.unwrap_or(base.max_depth),
            initial_step: base.initial_step,
        };
        config.validate().map_err(|e| CliError::Config(format!("sampler: {e}")))?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    #[serde(default = "default_n_grid")]
    pub n_grid: usize,
    #[serde(default = "default_lo")]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
    #[serde(default = "default_percentiles")]
    pub percentiles: Vec<f64>,
    #[serde(default = "default_m")]
    pub draws: usize,
    /// Dataset whose posteriors are summarised; the first one by default.
    pub dataset: Option<String>,
}

fn default_n_grid() -> usize {
    DEFAULT_GRID_POINTS
}
fn default_lo() -> f64 {
    DEFAULT_GRID_LO
}
fn default_hi() -> f64 {
    DEFAULT_GRID_HI
}
fn default_percentiles() -> Vec<f64> {
    DEFAULT_PERCENTILES.to_vec()
}
fn default_m() -> usize {
    2000
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            n_grid: default_n_grid(),
            lo: default_lo(),
            hi: default_hi(),
            percentiles: default_percentiles(),
            draws: default_m(),
            dataset: None,
        }
    }
}

impl SpectrumConfig {
    pub fn grid(&self) -> Result<GridSpec, CliError> {
        GridSpec::new(self.lo, self.hi, self.n_grid).map_err(|e| CliError::Config(format!("spectrum: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdlConfig {
    #[serde(default = "default_ldl_count")]
    pub count: usize,
    #[serde(default = "default_evaluator_lengthscale")]
    pub evaluator_lengthscale: f64,
    /// BNN widths to sample from; defaults to the fitted widths.
    pub widths: Option<Vec<usize>>,
}

fn default_ldl_count() -> usize {
    500
}
fn default_evaluator_lengthscale() -> f64 {
    2.0
}

impl Default for LdlConfig {
    fn default() -> Self {
        Self { count: default_ldl_count(), evaluator_lengthscale: default_evaluator_lengthscale(), widths: None }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub full_scale: bool,
}

/// A parsed, validated configuration with overrides applied.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub sampler: SamplerConfig,
}

impl Run {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_owned()))?;
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(w) = overrides.workers {
            config.workers = w;
        }
        if overrides.full_scale {
            config.data.count = FULL_SCALE_DATASETS;
        }
        let out_dir = overrides
            .out_dir
            .clone()
            .or_else(|| config.out_dir.clone())
            .ok_or_else(|| CliError::Config("no output directory: set `out_dir` or pass --out-dir".into()))?;
        let sampler = config.sampler.build(overrides.full_scale)?;
        let run = Self { config, out_dir, sampler };
        run.validate()?;
        Ok(run)
    }

    fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        if c.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        match (&c.data.kernel, &c.data.tabular) {
            (Some(k), None) => {
                k.build("data.kernel")?;
            }
            (None, Some(_)) => {
                if c.data.filter_t.is_some() {
                    return Err(CliError::Config("data.filter_t applies only to synthetic data".into()));
                }
            }
            (None, None) => return Err(CliError::Config("data: missing field `kernel` (or `tabular`)".into())),
            (Some(_), Some(_)) => return Err(CliError::Config("data: `kernel` and `tabular` are exclusive".into())),
        }
        if c.data.count == 0 {
            return Err(CliError::Config("data.count must be at least 1".into()));
        }
        if !(c.data.sigma_eps > 0.0 && c.data.sigma_eps.is_finite()) {
            return Err(CliError::Config("data.sigma_eps must be positive".into()));
        }
        if let Some(t) = c.data.filter_t {
            if !(0.0..=1.0).contains(&t) {
                return Err(CliError::Config(format!("data.filter_t = {t} lies outside [0, 1]")));
            }
        }
        match &c.bnn {
            Some(bnn) => {
                if bnn.widths.is_empty() {
                    return Err(CliError::Config("bnn.widths is empty".into()));
                }
                for &w in &bnn.widths {
                    bnn.spec(w, 1, self.noise_var())?;
                }
                if let Some(t) = bnn.thresholds.iter().flatten().find(|t| !(0.0..=1.0).contains(*t)) {
                    return Err(CliError::Config(format!("bnn.thresholds: {t} lies outside [0, 1]")));
                }
            }
            None if !c.nngp.enabled => return Err(CliError::Config("no models: add a [bnn] section or enable nngp".into())),
            None => match &c.nngp.kernel {
                Some(k) => {
                    k.build("nngp.kernel")?;
                }
                None => return Err(CliError::Config("nngp: missing field `kernel` (required without [bnn])".into())),
            },
        }
        if c.nngp.select.as_ref().is_some_and(|g| g.is_empty()) {
            return Err(CliError::Config("nngp.select is empty".into()));
        }
        if c.spectrum.draws < 2 {
            return Err(CliError::Config("spectrum.draws must be at least 2".into()));
        }
        if c.ldl.count < 2 {
            return Err(CliError::Config("ldl.count must be at least 2".into()));
        }
        self.config.spectrum.grid()?;
        Ok(())
    }

    pub fn noise_var(&self) -> f64 {
        self.config.data.sigma_eps * self.config.data.sigma_eps
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out_dir.join("data")
    }

    pub fn fits_dir(&self) -> PathBuf {
        self.out_dir.join("fits")
    }
}
