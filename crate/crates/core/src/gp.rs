//! Exact zero-mean Gaussian-process regression.
//!
//! All solves go through a Cholesky factor of `Σ_f = K + σ²_ε I`; explicit
//! inverses are never formed.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernels::{gram, gram_sym, KernelSpec};
use crate::numeric::{cholesky, normal_stream, Cholesky, Matrix, SeedPath};

/// Variances this far below zero are treated as rounding noise.
pub const VARIANCE_FLOOR: f64 = -1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpModel {
    pub spec: KernelSpec,
    pub noise_var: f64,
}

impl GpModel {
    pub fn new(spec: KernelSpec, noise_var: f64) -> Result<Self> {
        spec.validate()?;
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise variance {noise_var} is negative")));
        }
        Ok(Self { spec, noise_var })
    }

    /// `K(X, X) + σ²_ε I`.
    pub fn train_cov(&self, x: &Matrix) -> Result<Matrix> {
        Ok(gram_sym(&self.spec, x)?.add_diag(self.noise_var))
    }

    /// One draw of the function values at `x`, optionally with observation
    /// noise folded into the covariance.
    pub fn prior_sample(&self, x: &Matrix, include_noise: bool, seed: &SeedPath) -> Result<Vec<f64>> {
        let mut k = gram_sym(&self.spec, x)?;
        if include_noise {
            k = k.add_diag(self.noise_var);
        }
        let chol = cholesky(&k, 0.0)?;
        Ok(correlate(&chol, &mut normal_stream(seed)))
    }

    pub fn fit(&self, x: &Matrix, y: &[f64]) -> Result<GpPosterior> {
        let k = gram_sym(&self.spec, x)?;
        GpPosterior::from_gram(*self, x.clone(), &k, y)
    }

    /// Log density of `y` under `N(0, K + σ²_ε I)`.
    pub fn log_data_likelihood(&self, x: &Matrix, y: &[f64]) -> Result<f64> {
        if y.len() != x.rows() {
            return Err(Error::Dimension(format!("{} targets for {} inputs", y.len(), x.rows())));
        }
        let chol = cholesky(&self.train_cov(x)?, 0.0)?;
        let z = chol.solve_lower(y)?;
        let quad: f64 = z.iter().map(|v| v * v).sum();
        Ok(-0.5 * quad - 0.5 * chol.log_det() - 0.5 * y.len() as f64 * (2.0 * PI).ln())
    }
}

/// `L·z` for a fresh standard-normal `z`.
pub(crate) fn correlate(chol: &Cholesky, normals: &mut impl Iterator<Item = f64>) -> Vec<f64> {
    let zero = vec![0.0; chol.dim()];
    crate::numeric::mvn_sample_factored(&zero, chol, normals)
}

/// Conditioned GP, cached for repeated prediction.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    model: GpModel,
    x: Matrix,
    chol: Cholesky,
    alpha: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl Prediction {
    /// Diagonal of the covariance with rounding-level negatives set to zero.
    pub fn variances(&self) -> Vec<f64> {
        self.cov.diag().into_iter().map(|v| v.max(0.0)).collect()
    }
}

impl GpPosterior {
    /// Conditions on a caller-supplied noiseless Gram `k` over `x`.
    pub fn from_gram(model: GpModel, x: Matrix, k: &Matrix, y: &[f64]) -> Result<Self> {
        if k.rows() != x.rows() || y.len() != x.rows() {
            return Err(Error::Dimension(format!(
                "{}x{} gram, {} inputs, {} targets",
                k.rows(),
                k.cols(),
                x.rows(),
                y.len()
            )));
        }
        let chol = cholesky(&k.add_diag(model.noise_var), 0.0)?;
        let alpha = chol.solve(y)?;
        Ok(Self { model, x, chol, alpha })
    }

    pub fn model(&self) -> &GpModel {
        &self.model
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    /// Diagonal jitter that the factorization needed on top of `σ²_ε`.
    pub fn jitter(&self) -> f64 {
        self.chol.jitter()
    }

    /// Posterior mean and full covariance of the latent function at `xstar`.
    pub fn predict(&self, xstar: &Matrix) -> Result<Prediction> {
        let kss = gram_sym(&self.model.spec, xstar)?;
        if self.x.rows() == 0 {
            return Ok(Prediction { mean: vec![0.0; xstar.rows()], cov: kss });
        }
        if xstar.cols() != self.x.cols() {
            return Err(Error::Dimension(format!(
                "test inputs have {} columns, training inputs {}",
                xstar.cols(),
                self.x.cols()
            )));
        }
        let kxs = gram(&self.model.spec, &self.x, xstar)?;
        let mean = kxs.tr_matvec(&self.alpha)?;
        let v = self.chol.solve_lower_mat(&kxs)?;
        let m = xstar.rows();
        let mut cov = kss;
        for i in 0..m {
            for j in i..m {
                let mut s = 0.0;
                for k in 0..v.rows() {
                    s += v[(k, i)] * v[(k, j)];
                }
                let c = cov[(i, j)] - s;
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }
        Ok(Prediction { mean, cov })
    }
}
