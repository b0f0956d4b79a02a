//! Low-pass filtered BNNs on 1-D inputs.
//!
//! The network is evaluated on a uniform grid, transformed with the DCT,
//! truncated, transformed back, and read off at the grid points nearest to
//! the data. All of this is linear in the grid function, so the likelihood
//! stays differentiable in the weights.

use crate::bnn::{forward, gaussian_log_lik, BnnSpec};
use crate::error::{Error, Result};
use crate::experiments::{Dataset, Manifest, Split};
use crate::gp::GpModel;
use crate::kernels::fmt_f64;
use crate::numeric::{normal_stream, Matrix, SeedPath};
use crate::spectral::{lowpass_apply, lowpass_matrix, DctPlan, FilterSpec};

pub const DEFAULT_GRID_LO: f64 = -3.5;
pub const DEFAULT_GRID_HI: f64 = 3.5;
pub const DEFAULT_GRID_POINTS: usize = 256;

/// `n` uniformly spaced points covering `[lo, hi]` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    lo: f64,
    hi: f64,
    n: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("grid bounds [{lo}, {hi}] are not increasing")));
        }
        if n < 2 {
            return Err(Error::InvalidArgument(format!("grid needs at least 2 points, got {n}")));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Index of the nearest grid point; exact midpoints go to the lower index.
    pub fn nearest(&self, x: f64) -> usize {
        let pos = (x - self.lo) / self.spacing();
        if pos <= 0.0 {
            return 0;
        }
        let below = (pos.floor() as usize).min(self.n - 1);
        let above = (below + 1).min(self.n - 1);
        if (x - self.point(below)).abs() <= (self.point(above) - x).abs() {
            below
        } else {
            above
        }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { lo: DEFAULT_GRID_LO, hi: DEFAULT_GRID_HI, n: DEFAULT_GRID_POINTS }
    }
}

pub fn make_grid(lo: f64, hi: f64, n_grid: usize) -> Result<GridSpec> {
    GridSpec::new(lo, hi, n_grid)
}

/// Nearest-grid-point index for each row of a one-column design.
pub fn snap_to_grid(x: &Matrix, grid: &GridSpec) -> Result<Vec<usize>> {
    if x.cols() != 1 && x.rows() > 0 {
        return Err(Error::Dimension(format!("grid snapping needs 1-D inputs, got {} columns", x.cols())));
    }
    Ok(x.as_slice().iter().map(|&v| grid.nearest(v)).collect())
}

/// Replaces each input by its nearest grid point.
pub fn snapped_inputs(x: &Matrix, grid: &GridSpec) -> Result<Matrix> {
    let idx = snap_to_grid(x, grid)?;
    Matrix::column(&idx.iter().map(|&i| grid.point(i)).collect::<Vec<_>>())
}

/// Everything needed to evaluate the filtered likelihood for one dataset.
#[derive(Debug, Clone)]
pub struct LowpassContext {
    grid: GridSpec,
    plan: DctPlan,
    filter: FilterSpec,
    selection: Vec<usize>,
    grid_inputs: Matrix,
    snapped: Matrix,
    /// Rows of `C = Tᵀ·diag(kept)·T` at the selected grid points.
    data_operator: Matrix,
}

impl LowpassContext {
    /// Snaps `x` onto `grid` and prepares the filter with threshold `t`.
    pub fn new(grid: GridSpec, t: f64, x: &Matrix) -> Result<Self> {
        let selection = snap_to_grid(x, &grid)?;
        Self::from_selection(grid, t, selection)
    }

    pub fn from_selection(grid: GridSpec, t: f64, selection: Vec<usize>) -> Result<Self> {
        let filter = FilterSpec::new(t)?;
        if let Some(&bad) = selection.iter().find(|&&i| i >= grid.len()) {
            return Err(Error::InvalidArgument(format!("selection index {bad} outside grid")));
        }
        let plan = DctPlan::new(grid.len())?;
        let c = lowpass_matrix(&plan, t)?;
        let data_operator = c.select_rows(&selection);
        let grid_inputs = Matrix::column(&grid.points())?;
        let snapped = grid_inputs.select_rows(&selection);
        Ok(Self { grid, plan, filter, selection, grid_inputs, snapped, data_operator })
    }

    /// Same grid and threshold, different data points.
    pub fn reselect(&self, x: &Matrix) -> Result<Self> {
        let selection = snap_to_grid(x, &self.grid)?;
        Self::from_selection(self.grid, self.filter.t(), selection)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn plan(&self) -> &DctPlan {
        &self.plan
    }

    pub fn t(&self) -> f64 {
        self.filter.t()
    }

    pub fn selection(&self) -> &[usize] {
        &self.selection
    }

    pub fn grid_inputs(&self) -> &Matrix {
        &self.grid_inputs
    }

    pub fn data_operator(&self) -> &Matrix {
        &self.data_operator
    }

    /// Snapped data inputs as a one-column matrix.
    pub fn snapped_inputs(&self) -> Matrix {
        self.snapped.clone()
    }

    pub(crate) fn snapped_ref(&self) -> &Matrix {
        &self.snapped
    }

    /// True when the threshold removes no coefficient, so filtering is exact identity.
    pub fn is_identity(&self) -> bool {
        self.filter.kept(self.grid.len()) == self.grid.len()
    }

    /// Manifest entries describing the filter.
    pub fn manifest_entries(&self) -> Vec<(String, String)> {
        vec![
            ("t".into(), fmt_f64(self.t())),
            ("n_grid".into(), self.grid.len().to_string()),
            ("grid_lo".into(), fmt_f64(self.grid.lo())),
            ("grid_hi".into(), fmt_f64(self.grid.hi())),
        ]
    }
}

/// Filtered network on the whole grid and at the selected data points.
pub fn lpf_forward(spec: &BnnSpec, theta: &[f64], ctx: &LowpassContext) -> Result<(Vec<f64>, Vec<f64>)> {
    if spec.input_dim != 1 {
        return Err(Error::Dimension("low-pass filtering needs a 1-D input network".into()));
    }
    let f_grid = forward(spec, theta, &ctx.grid_inputs)?;
    let filtered = lowpass_apply(&ctx.plan, ctx.t(), &f_grid)?;
    let at_data = ctx.selection.iter().map(|&i| filtered[i]).collect();
    Ok((filtered, at_data))
}

pub fn lpf_log_likelihood(spec: &BnnSpec, theta: &[f64], ctx: &LowpassContext, y: &[f64]) -> Result<f64> {
    if y.len() != ctx.selection.len() {
        return Err(Error::Dimension(format!(
            "{} targets for {} snapped inputs",
            y.len(),
            ctx.selection.len()
        )));
    }
    let (_, f) = lpf_forward(spec, theta, ctx)?;
    Ok(gaussian_log_lik(&f, y, spec.noise_var))
}

/// Filtered network values for each parameter row of `draws`, read at the
/// context's selection.
pub fn lpf_function_draws(spec: &BnnSpec, draws: &Matrix, ctx: &LowpassContext) -> Result<Matrix> {
    if draws.rows() == 0 {
        return Err(Error::Empty("parameter draws"));
    }
    let mut out = Matrix::zeros(draws.rows(), ctx.selection.len());
    for m in 0..draws.rows() {
        let (_, f) = lpf_forward(spec, draws.row(m), ctx)?;
        out.row_mut(m).copy_from_slice(&f);
    }
    Ok(out)
}

/// Synthetic dataset from a GP whose draws are low-pass filtered on `grid`.
///
/// A noiseless function is drawn on the full grid and filtered; train and
/// test inputs are snapped to the grid and read the filtered values there.
/// Only training targets receive `N(0, σ²_ε)` noise.
pub fn lpf_gp_dataset(
    gp: &GpModel,
    grid: &GridSpec,
    t: f64,
    x_train: &Matrix,
    x_test: &Matrix,
    seed: &SeedPath,
) -> Result<Dataset> {
    let filter = FilterSpec::new(t)?;
    let grid_x = Matrix::column(&grid.points())?;
    let f_grid = gp.prior_sample(&grid_x, false, &seed.child("function", 0))?;
    let f_filtered = if filter.kept(grid.len()) == grid.len() {
        f_grid
    } else {
        lowpass_apply(&DctPlan::new(grid.len())?, t, &f_grid)?
    };
    let train_idx = snap_to_grid(x_train, grid)?;
    let test_idx = snap_to_grid(x_test, grid)?;
    let f_train: Vec<f64> = train_idx.iter().map(|&i| f_filtered[i]).collect();
    let f_test: Vec<f64> = test_idx.iter().map(|&i| f_filtered[i]).collect();
    let sigma = gp.noise_var.sqrt();
    let y_train: Vec<f64> =
        f_train.iter().zip(normal_stream(&seed.child("noise", 0))).map(|(f, z)| f + sigma * z).collect();

    let mut manifest = Manifest::default();
    for (k, v) in gp.spec.to_manifest() {
        manifest.set(&k, v);
    }
    manifest.set("sigma_eps", fmt_f64(sigma));
    manifest.set("t", fmt_f64(t));
    manifest.set("n_grid", grid.len().to_string());
    manifest.set("grid_lo", fmt_f64(grid.lo()));
    manifest.set("grid_hi", fmt_f64(grid.hi()));

    let snap = |idx: &[usize]| Matrix::column(&idx.iter().map(|&i| grid.point(i)).collect::<Vec<_>>());
    Ok(Dataset {
        id: String::new(),
        train: Split { x: snap(&train_idx)?, y: y_train, f: Some(f_train) },
        test: Split { x: snap(&test_idx)?, y: f_test.clone(), f: Some(f_test) },
        valid: None,
        manifest,
    })
}
