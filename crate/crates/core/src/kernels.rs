//! Covariance functions: RBF for data generation, and the Arcsin / Arccos
//! kernels that one-hidden-layer erf / ReLU networks converge to as the
//! width grows.
//!
//! For the NNGP kernels an input `x` is augmented to `x̃ = [x, 1]` and inner
//! products are weighted by `Σ = Diag(σ²_W, …, σ²_W, σ²_b)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Tolerance within which an asin/acos argument is clamped back into [-1, 1].
const CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Rbf { lengthscale: f64 },
    Arcsin { sigma_w2: f64, sigma_b2: f64 },
    Arccos { sigma_w2: f64, sigma_b2: f64 },
}

impl KernelSpec {
    pub fn rbf(lengthscale: f64) -> Result<Self> {
        positive("lengthscale", lengthscale)?;
        Ok(Self::Rbf { lengthscale })
    }

    pub fn arcsin(sigma_w2: f64, sigma_b2: f64) -> Result<Self> {
        positive("sigma_w2", sigma_w2)?;
        positive("sigma_b2", sigma_b2)?;
        Ok(Self::Arcsin { sigma_w2, sigma_b2 })
    }

    pub fn arccos(sigma_w2: f64, sigma_b2: f64) -> Result<Self> {
        positive("sigma_w2", sigma_w2)?;
        positive("sigma_b2", sigma_b2)?;
        Ok(Self::Arccos { sigma_w2, sigma_b2 })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Rbf { .. } => "rbf",
            Self::Arcsin { .. } => "arcsin",
            Self::Arccos { .. } => "arccos",
        }
    }

    /// Re-checks the positivity invariant, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Rbf { lengthscale } => positive("lengthscale", lengthscale),
            Self::Arcsin { sigma_w2, sigma_b2 } | Self::Arccos { sigma_w2, sigma_b2 } => {
                positive("sigma_w2", sigma_w2)?;
                positive("sigma_b2", sigma_b2)
            }
        }
    }

    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        match *self {
            Self::Rbf { lengthscale } => rbf_eval(lengthscale, x, x2),
            Self::Arcsin { sigma_w2, sigma_b2 } => arcsin_eval(sigma_w2, sigma_b2, x, x2),
            Self::Arccos { sigma_w2, sigma_b2 } => arccos_eval(sigma_w2, sigma_b2, x, x2),
        }
    }

    /// `key = value` lines as they appear in manifests.
    pub fn to_manifest(&self) -> Vec<(String, String)> {
        let mut out = vec![("kernel".to_owned(), self.name().to_owned())];
        match *self {
            Self::Rbf { lengthscale } => out.push(("lengthscale".into(), fmt_f64(lengthscale))),
            Self::Arcsin { sigma_w2, sigma_b2 } | Self::Arccos { sigma_w2, sigma_b2 } => {
                out.push(("sigma_w2".into(), fmt_f64(sigma_w2)));
                out.push(("sigma_b2".into(), fmt_f64(sigma_b2)));
            }
        }
        out
    }

    /// Parses the `kernel`, `lengthscale`, `sigma_w2` and `sigma_b2` keys.
    pub fn from_manifest(map: &BTreeMap<String, String>) -> Result<Self> {
        let get = |key: &str| -> Result<f64> {
            let raw = map.get(key).ok_or_else(|| Error::Parse(format!("missing field `{key}`")))?;
            raw.trim().parse().map_err(|_| Error::Parse(format!("field `{key}`: bad number {raw:?}")))
        };
        let kind = map.get("kernel").ok_or_else(|| Error::Parse("missing field `kernel`".into()))?;
        match kind.trim() {
            "rbf" => Self::rbf(get("lengthscale")?),
            "arcsin" => Self::arcsin(get("sigma_w2")?, get("sigma_b2")?),
            "arccos" => Self::arccos(get("sigma_w2")?, get("sigma_b2")?),
            other => Err(Error::Parse(format!("unknown kernel {other:?}"))),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Rbf { lengthscale } => write!(f, "rbf(l={lengthscale})"),
            Self::Arcsin { sigma_w2, sigma_b2 } => write!(f, "arcsin(w={sigma_w2},b={sigma_b2})"),
            Self::Arccos { sigma_w2, sigma_b2 } => write!(f, "arccos(w={sigma_w2},b={sigma_b2})"),
        }
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

fn same_dim(x: &[f64], x2: &[f64]) -> Result<()> {
    if x.len() == x2.len() {
        Ok(())
    } else {
        Err(Error::Dimension(format!("kernel inputs of dimension {} and {}", x.len(), x2.len())))
    }
}

fn clamp_unit(name: &'static str, v: f64) -> Result<f64> {
    if v.abs() <= 1.0 {
        Ok(v)
    } else if v.abs() <= 1.0 + CLAMP_TOL {
        Ok(v.clamp(-1.0, 1.0))
    } else {
        Err(Error::Domain { name, value: v })
    }
}

/// `exp(-‖x - x2‖² / (2 l²))`, unit signal variance.
pub fn rbf_eval(lengthscale: f64, x: &[f64], x2: &[f64]) -> Result<f64> {
    same_dim(x, x2)?;
    let d2: f64 = x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-d2 / (2.0 * lengthscale * lengthscale)).exp())
}

/// `x̃ᵀ Σ x̃'` for augmented inputs.
#[inline]
fn weighted_inner(sigma_w2: f64, sigma_b2: f64, x: &[f64], x2: &[f64]) -> f64 {
    sigma_w2 * x.iter().zip(x2).map(|(a, b)| a * b).sum::<f64>() + sigma_b2
}

/// Limiting kernel of an erf network.
pub fn arcsin_eval(sigma_w2: f64, sigma_b2: f64, x: &[f64], x2: &[f64]) -> Result<f64> {
    same_dim(x, x2)?;
    let cross = weighted_inner(sigma_w2, sigma_b2, x, x2);
    let n1 = weighted_inner(sigma_w2, sigma_b2, x, x);
    let n2 = weighted_inner(sigma_w2, sigma_b2, x2, x2);
    let arg = 2.0 * cross / ((1.0 + 2.0 * n1).sqrt() * (1.0 + 2.0 * n2).sqrt());
    let arg = clamp_unit("asin", arg)?;
    Ok(2.0 * sigma_w2 / PI * arg.asin() + sigma_b2)
}

/// Limiting kernel of a ReLU network.
pub fn arccos_eval(sigma_w2: f64, sigma_b2: f64, x: &[f64], x2: &[f64]) -> Result<f64> {
    same_dim(x, x2)?;
    let cross = weighted_inner(sigma_w2, sigma_b2, x, x2);
    let norm1 = weighted_inner(sigma_w2, sigma_b2, x, x).sqrt();
    let norm2 = weighted_inner(sigma_w2, sigma_b2, x2, x2).sqrt();
    let norms = norm1 * norm2;
    let cos = clamp_unit("acos", cross / norms)?;
    let theta = cos.acos();
    let j = theta.sin() + (PI - theta) * cos;
    Ok(sigma_w2 / (2.0 * PI) * norms * j + sigma_b2)
}

/// Cross-covariance matrix with entry `(i, j) = k(X_i, X2_j)`.
pub fn gram(spec: &KernelSpec, x: &Matrix, x2: &Matrix) -> Result<Matrix> {
    if x.cols() != x2.cols() && x.rows() > 0 && x2.rows() > 0 {
        return Err(Error::Dimension(format!(
            "gram of {}-column and {}-column designs",
            x.cols(),
            x2.cols()
        )));
    }
    let mut out = Matrix::zeros(x.rows(), x2.rows());
    for i in 0..x.rows() {
        for j in 0..x2.rows() {
            out[(i, j)] = spec.eval(x.row(i), x2.row(j))?;
        }
    }
    Ok(out)
}

/// `gram(spec, X, X)` computed from the upper triangle, so exactly symmetric.
pub fn gram_sym(spec: &KernelSpec, x: &Matrix) -> Result<Matrix> {
    let n = x.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = spec.eval(x.row(i), x.row(j))?;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}
