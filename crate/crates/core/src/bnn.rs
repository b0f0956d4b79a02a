//! One-hidden-layer Bayesian neural network
//! `f(x) = w₁·φ(w₀x + b₀)/√H + b₁` with isotropic Gaussian priors and a
//! Gaussian likelihood.
//!
//! Parameters are flattened as `[w₀ (H×d_in, row-major), b₀ (H), w₁ (H), b₁]`.
//! Gradients are written out by hand for this fixed architecture.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::lpf::LowpassContext;
use crate::numeric::{dot, erf, Matrix, SeedPath};
use crate::nuts::{nuts_sample, Init, LogDensity, SamplerConfig, DEFAULT_INIT_SCALE};

pub use crate::nuts::PosteriorDraws;

const TWO_OVER_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Erf,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Self::Erf => erf(z),
            Self::Relu => z.max(0.0),
        }
    }

    /// Derivative; the ReLU kink at exactly zero gets slope 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Self::Erf => TWO_OVER_SQRT_PI * (-z * z).exp(),
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Erf => "erf",
            Self::Relu => "relu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "erf" => Ok(Self::Erf),
            "relu" => Ok(Self::Relu),
            other => Err(Error::Parse(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnnSpec {
    pub width: usize,
    pub activation: Activation,
    pub input_dim: usize,
    pub sigma_w2: f64,
    pub sigma_b2: f64,
    pub noise_var: f64,
}

impl BnnSpec {
    pub fn new(
        width: usize,
        activation: Activation,
        input_dim: usize,
        sigma_w2: f64,
        sigma_b2: f64,
        noise_var: f64,
    ) -> Result<Self> {
        let spec = Self { width, activation, input_dim, sigma_w2, sigma_b2, noise_var };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.input_dim == 0 {
            return Err(Error::InvalidArgument("width and input dimension must be at least 1".into()));
        }
        for (name, v) in
            [("sigma_w2", self.sigma_w2), ("sigma_b2", self.sigma_b2), ("noise_var", self.noise_var)]
        {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `P = H·(d_in + 2) + 1`.
    pub fn n_params(&self) -> usize {
        self.width * (self.input_dim + 2) + 1
    }

    /// Number of weight entries (`w₀` and `w₁`); the rest are biases.
    pub fn n_weights(&self) -> usize {
        self.width * (self.input_dim + 1)
    }

    /// The infinite-width limit of this network's prior.
    pub fn limiting_kernel(&self) -> KernelSpec {
        match self.activation {
            Activation::Erf => KernelSpec::Arcsin { sigma_w2: self.sigma_w2, sigma_b2: self.sigma_b2 },
            Activation::Relu => KernelSpec::Arccos { sigma_w2: self.sigma_w2, sigma_b2: self.sigma_b2 },
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::Dimension(format!(
                "parameter vector of length {} for P = {}",
                theta.len(),
                self.n_params()
            )));
        }
        Ok(())
    }

    fn check_inputs(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim && x.rows() > 0 {
            return Err(Error::Dimension(format!(
                "inputs have {} columns, network expects {}",
                x.cols(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Prior variance of each flattened parameter.
    pub fn prior_variances(&self) -> Vec<f64> {
        let (h, d) = (self.width, self.input_dim);
        let mut v = vec![self.sigma_w2; h * d];
        v.extend(std::iter::repeat_n(self.sigma_b2, h));
        v.extend(std::iter::repeat_n(self.sigma_w2, h));
        v.push(self.sigma_b2);
        v
    }

    /// One parameter draw from the prior, each entry scaled by `scale`.
    pub fn sample_prior(&self, seed: &SeedPath, scale: f64) -> Vec<f64> {
        let mut rng = seed.rng();
        self.prior_variances()
            .into_iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * v.sqrt() * z
            })
            .collect()
    }
}

/// Borrowed view of the parameter segments.
#[derive(Debug, Clone, Copy)]
pub struct Params<'a> {
    pub w0: &'a [f64],
    pub b0: &'a [f64],
    pub w1: &'a [f64],
    pub b1: f64,
}

impl<'a> Params<'a> {
    pub fn split(spec: &BnnSpec, theta: &'a [f64]) -> Result<Self> {
        spec.check_theta(theta)?;
        let (h, d) = (spec.width, spec.input_dim);
        let (w0, rest) = theta.split_at(h * d);
        let (b0, rest) = rest.split_at(h);
        let (w1, rest) = rest.split_at(h);
        Ok(Self { w0, b0, w1, b1: rest[0] })
    }
}

/// Pre-activations and activations kept from a forward pass.
struct ForwardCache {
    pre: Vec<f64>,
    act: Vec<f64>,
    out: Vec<f64>,
}

fn forward_cached(spec: &BnnSpec, p: &Params<'_>, x: &Matrix) -> ForwardCache {
    if spec.input_dim == 1 {
        return forward_cached_1d(spec, p, x.as_slice());
    }
    let (h, d, n) = (spec.width, spec.input_dim, x.rows());
    let inv_sqrt_h = 1.0 / (h as f64).sqrt();
    let mut pre = vec![0.0; n * h];
    let mut act = vec![0.0; n * h];
    let mut out = Vec::with_capacity(n);
    let (b0, w1) = (&p.b0[..h], &p.w1[..h]);
    for i in 0..n {
        let xi = x.row(i);
        let zi = &mut pre[i * h..(i + 1) * h];
        for j in 0..h {
            zi[j] = b0[j] + dot(&p.w0[j * d..(j + 1) * d], xi);
        }
        let ai = &mut act[i * h..(i + 1) * h];
        match spec.activation {
            Activation::Relu => {
                for j in 0..h {
                    ai[j] = zi[j].max(0.0);
                }
            }
            Activation::Erf => {
                for j in 0..h {
                    ai[j] = erf(zi[j]);
                }
            }
        }
        out.push(dot(ai, w1) * inv_sqrt_h + p.b1);
    }
    ForwardCache { pre, act, out }
}

/// One-input networks, with `act` (and `pre` for erf) stored unit-major
/// as `h × n`. ReLU recovers its mask from `act > 0`.
fn forward_cached_1d(spec: &BnnSpec, p: &Params<'_>, x: &[f64]) -> ForwardCache {
    let (h, n) = (spec.width, x.len());
    let relu = spec.activation == Activation::Relu;
    let mut pre = Vec::with_capacity(if relu { 0 } else { n * h });
    let mut act = Vec::with_capacity(n * h);
    let mut out = vec![0.0; n];
    for j in 0..h {
        let (w, b, v) = (p.w0[j], p.b0[j], p.w1[j]);
        if relu {
            act.extend(x.iter().map(|&xi| (b + w * xi).max(0.0)));
        } else {
            let start = pre.len();
            pre.extend(x.iter().map(|&xi| b + w * xi));
            act.extend(pre[start..].iter().map(|&z| erf(z)));
        }
        let aj = &act[j * n..(j + 1) * n];
        for (o, a) in out.iter_mut().zip(aj) {
            *o += v * a;
        }
    }
    let inv_sqrt_h = 1.0 / (h as f64).sqrt();
    for o in &mut out {
        *o = *o * inv_sqrt_h + p.b1;
    }
    ForwardCache { pre, act, out }
}

fn backward_1d(spec: &BnnSpec, p: &Params<'_>, x: &[f64], cache: &ForwardCache, dout: &[f64], grad: &mut [f64]) {
    let (h, n) = (spec.width, x.len());
    let inv_sqrt_h = 1.0 / (h as f64).sqrt();
    let dx: Vec<f64> = dout.iter().zip(x).map(|(g, xi)| g * xi).collect();
    let mut dphi = vec![0.0; n];
    for j in 0..h {
        let aj = &cache.act[j * n..(j + 1) * n];
        let scale = inv_sqrt_h * p.w1[j];
        let (s_b, s_w) = match spec.activation {
            Activation::Relu => masked_sums(aj, dout, &dx),
            Activation::Erf => {
                let zj = &cache.pre[j * n..(j + 1) * n];
                for i in 0..n {
                    dphi[i] = TWO_OVER_SQRT_PI * (-zj[i] * zj[i]).exp();
                }
                (dot(&dphi, dout), dot(&dphi, &dx))
            }
        };
        grad[j] += scale * s_w;
        grad[h + j] += scale * s_b;
        grad[2 * h + j] += inv_sqrt_h * dot(dout, aj);
    }
    grad[3 * h] += sum(dout);
}

/// `(Σ [a_i > 0] u_i, Σ [a_i > 0] v_i)` with four partial sums per total.
fn masked_sums(a: &[f64], u: &[f64], v: &[f64]) -> (f64, f64) {
    let n = a.len();
    let (u, v) = (&u[..n], &v[..n]);
    let (mut su, mut sv) = ([0.0; 4], [0.0; 4]);
    let chunks = n / 4;
    for c in 0..chunks {
        for k in 0..4 {
            let i = 4 * c + k;
            let on = if a[i] > 0.0 { 1.0 } else { 0.0 };
            su[k] += on * u[i];
            sv[k] += on * v[i];
        }
    }
    for i in 4 * chunks..n {
        let on = if a[i] > 0.0 { 1.0 } else { 0.0 };
        su[0] += on * u[i];
        sv[0] += on * v[i];
    }
    ((su[0] + su[1]) + (su[2] + su[3]), (sv[0] + sv[1]) + (sv[2] + sv[3]))
}

fn sum(v: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = v.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += v[4 * c + k];
        }
    }
    let tail: f64 = v[4 * chunks..].iter().sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Adds `Σᵢ dout_i · ∂f(x_i)/∂θ` into `grad`.
fn backward(spec: &BnnSpec, p: &Params<'_>, x: &Matrix, cache: &ForwardCache, dout: &[f64], grad: &mut [f64]) {
    if spec.input_dim == 1 {
        return backward_1d(spec, p, x.as_slice(), cache, dout, grad);
    }
    let (h, d) = (spec.width, spec.input_dim);
    let inv_sqrt_h = 1.0 / (h as f64).sqrt();
    let (g_w0, rest) = grad.split_at_mut(h * d);
    let (g_b0, rest) = rest.split_at_mut(h);
    let (g_w1, g_b1) = rest.split_at_mut(h);
    let (g_b0, g_w1, w1) = (&mut g_b0[..h], &mut g_w1[..h], &p.w1[..h]);
    let mut dz = vec![0.0; h];
    for (i, &g) in dout.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        g_b1[0] += g;
        let xi = x.row(i);
        let gs = g * inv_sqrt_h;
        let zi = &cache.pre[i * h..(i + 1) * h];
        let ai = &cache.act[i * h..(i + 1) * h];
        for j in 0..h {
            g_w1[j] += gs * ai[j];
        }
        match spec.activation {
            Activation::Relu => {
                for j in 0..h {
                    dz[j] = if zi[j] > 0.0 { gs * w1[j] } else { 0.0 };
                }
            }
            Activation::Erf => {
                for j in 0..h {
                    dz[j] = gs * w1[j] * TWO_OVER_SQRT_PI * (-zi[j] * zi[j]).exp();
                }
            }
        }
        for j in 0..h {
            g_b0[j] += dz[j];
        }
        for j in 0..h {
            for (gw, xv) in g_w0[j * d..(j + 1) * d].iter_mut().zip(xi) {
                *gw += dz[j] * xv;
            }
        }
    }
}

/// Network output at every row of `x`.
pub fn forward(spec: &BnnSpec, theta: &[f64], x: &Matrix) -> Result<Vec<f64>> {
    let p = Params::split(spec, theta)?;
    spec.check_inputs(x)?;
    Ok(forward_cached(spec, &p, x).out)
}

fn gaussian_log_norm(var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln()
}

pub fn log_prior(spec: &BnnSpec, theta: &[f64]) -> Result<f64> {
    spec.check_theta(theta)?;
    Ok(spec
        .prior_variances()
        .iter()
        .zip(theta)
        .map(|(v, t)| gaussian_log_norm(*v) - t * t / (2.0 * v))
        .sum())
}

/// Gaussian log likelihood of `y` around `f`.
pub(crate) fn gaussian_log_lik(f: &[f64], y: &[f64], noise_var: f64) -> f64 {
    let sse: f64 = f.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    f.len() as f64 * gaussian_log_norm(noise_var) - sse / (2.0 * noise_var)
}

pub fn log_likelihood(spec: &BnnSpec, theta: &[f64], x: &Matrix, y: &[f64]) -> Result<f64> {
    if y.len() != x.rows() {
        return Err(Error::Dimension(format!("{} targets for {} inputs", y.len(), x.rows())));
    }
    let f = forward(spec, theta, x)?;
    Ok(gaussian_log_lik(&f, y, spec.noise_var))
}

/// Log joint density (prior + likelihood) and its gradient.
///
/// With a low-pass context the likelihood compares `y` against the filtered
/// network function read off the grid at `ctx`'s selection; `x` must then
/// hold the snapped inputs (it is only used for shape checks).
pub fn log_joint_and_grad(
    spec: &BnnSpec,
    theta: &[f64],
    x: &Matrix,
    y: &[f64],
    filter: Option<&LowpassContext>,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; theta.len()];
    let value = log_joint_into(spec, theta, x, y, filter, &mut grad)?;
    Ok((value, grad))
}

pub(crate) fn log_joint_into(
    spec: &BnnSpec,
    theta: &[f64],
    x: &Matrix,
    y: &[f64],
    filter: Option<&LowpassContext>,
    grad: &mut [f64],
) -> Result<f64> {
    let p = Params::split(spec, theta)?;
    spec.check_inputs(x)?;
    if y.len() != x.rows() {
        return Err(Error::Dimension(format!("{} targets for {} inputs", y.len(), x.rows())));
    }
    let n_w = spec.n_weights();
    let mut value = n_w as f64 * gaussian_log_norm(spec.sigma_w2)
        + (theta.len() - n_w) as f64 * gaussian_log_norm(spec.sigma_b2);
    let (h, d) = (spec.width, spec.input_dim);
    let segments = [(0, h * d, spec.sigma_w2), (h * d, h * (d + 1), spec.sigma_b2), (h * (d + 1), h * (d + 2), spec.sigma_w2)];
    for (lo, hi, v) in segments.into_iter().chain([(h * (d + 2), h * (d + 2) + 1, spec.sigma_b2)]) {
        let inv = 1.0 / v;
        for (g, t) in grad[lo..hi].iter_mut().zip(&theta[lo..hi]) {
            value -= 0.5 * t * t * inv;
            *g = -t * inv;
        }
    }
    let inv_noise = 1.0 / spec.noise_var;
    if let Some(ctx) = filter {
        if ctx.selection().len() != y.len() {
            return Err(Error::Dimension(format!(
                "{} targets for {} snapped inputs",
                y.len(),
                ctx.selection().len()
            )));
        }
    }
    match filter {
        Some(ctx) if !ctx.is_identity() => {
            let grid_x = ctx.grid_inputs();
            let cache = forward_cached(spec, &p, grid_x);
            let operator = ctx.data_operator();
            let f_data = operator.matvec(&cache.out)?;
            let resid: Vec<f64> = y.iter().zip(&f_data).map(|(a, b)| (a - b) * inv_noise).collect();
            value += gaussian_log_lik(&f_data, y, spec.noise_var);
            let dgrid = operator.tr_matvec(&resid)?;
            backward(spec, &p, grid_x, &cache, &dgrid, grad);
        }
        _ => {
            // An identity filter reduces to the plain network at the snapped inputs.
            let xs = filter.map_or(x, LowpassContext::snapped_ref);
            let cache = forward_cached(spec, &p, xs);
            let resid: Vec<f64> = y.iter().zip(&cache.out).map(|(a, b)| (a - b) * inv_noise).collect();
            value += gaussian_log_lik(&cache.out, y, spec.noise_var);
            backward(spec, &p, xs, &cache, &resid, grad);
        }
    }
    Ok(value)
}

/// The BNN posterior over θ given a training split, optionally low-pass filtered.
#[derive(Debug, Clone)]
pub struct BnnPosterior {
    spec: BnnSpec,
    x: Matrix,
    y: Vec<f64>,
    filter: Option<LowpassContext>,
}

impl BnnPosterior {
    /// With a filter, `x` is snapped to the filter grid and the filter's
    /// selection is rebuilt for it.
    pub fn new(spec: BnnSpec, x: Matrix, y: Vec<f64>, filter: Option<LowpassContext>) -> Result<Self> {
        spec.validate()?;
        spec.check_inputs(&x)?;
        if y.len() != x.rows() {
            return Err(Error::Dimension(format!("{} targets for {} inputs", y.len(), x.rows())));
        }
        let (x, filter) = match filter {
            Some(ctx) => {
                let ctx = ctx.reselect(&x)?;
                (ctx.snapped_inputs(), Some(ctx))
            }
            None => (x, None),
        };
        Ok(Self { spec, x, y, filter })
    }

    pub fn spec(&self) -> &BnnSpec {
        &self.spec
    }

    pub fn filter(&self) -> Option<&LowpassContext> {
        self.filter.as_ref()
    }

    /// Prior draw scaled by [`DEFAULT_INIT_SCALE`], independently per chain.
    pub fn default_init(&self) -> Init {
        Init::Gaussian { sd: self.spec.prior_variances().iter().map(|v| v.sqrt()).collect(), scale: DEFAULT_INIT_SCALE }
    }

    pub fn sample(&self, config: &SamplerConfig, seed: &SeedPath, workers: usize) -> Result<PosteriorDraws> {
        nuts_sample(self, config, &self.default_init(), seed, workers)
    }
}

impl LogDensity for BnnPosterior {
    fn dim(&self) -> usize {
        self.spec.n_params()
    }

    fn logp_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        log_joint_into(&self.spec, theta, &self.x, &self.y, self.filter.as_ref(), grad)
    }
}

/// Row `m` holds `forward(θ_m, x*)` for each parameter row of `draws`.
pub fn predictive_function_draws(spec: &BnnSpec, draws: &Matrix, xstar: &Matrix) -> Result<Matrix> {
    if draws.rows() == 0 {
        return Err(Error::Empty("parameter draws"));
    }
    let mut out = Matrix::zeros(draws.rows(), xstar.rows());
    for m in 0..draws.rows() {
        let f = forward(spec, draws.row(m), xstar)?;
        out.row_mut(m).copy_from_slice(&f);
    }
    Ok(out)
}

/// `count` parameter vectors drawn from the prior, one seed label per draw.
pub fn prior_draws(spec: &BnnSpec, count: usize, seed: &SeedPath) -> Matrix {
    let p = spec.n_params();
    let mut out = Matrix::zeros(count, p);
    for m in 0..count {
        out.row_mut(m).copy_from_slice(&spec.sample_prior(&seed.child("prior_draw", m as u64), 1.0));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::normal_stream;

    fn spec(h: usize, act: Activation) -> BnnSpec {
        BnnSpec::new(h, act, 1, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn parameter_count() {
        let s = BnnSpec::new(7, Activation::Erf, 3, 1.0, 1.0, 0.01).unwrap();
        assert_eq!(s.n_params(), 7 * 5 + 1);
        assert!(BnnSpec::new(0, Activation::Erf, 1, 1.0, 1.0, 0.01).is_err());
        assert!(BnnSpec::new(2, Activation::Erf, 1, 1.0, 0.0, 0.01).is_err());
    }

    #[test]
    fn forward_small_cases() {
        let x = Matrix::column(&[2.0]).unwrap();
        assert_eq!(forward(&spec(1, Activation::Relu), &[1.0, 0.0, 1.0, 0.0], &x).unwrap(), vec![2.0]);
        let x1 = Matrix::column(&[1.0]).unwrap();
        let f = forward(&spec(1, Activation::Erf), &[1.0, 0.0, 1.0, 0.0], &x1).unwrap();
        assert!((f[0] - 0.842_700_792_949_714_9).abs() < 1e-12);
        let s = spec(3, Activation::Erf);
        let mut theta = vec![0.0; s.n_params()];
        *theta.last_mut().unwrap() = 1.7;
        let xs = Matrix::column(&[-3.0, 0.0, 2.5]).unwrap();
        assert_eq!(forward(&s, &theta, &xs).unwrap(), vec![1.7; 3]);
        assert!(forward(&s, &theta[1..], &xs).is_err());
    }

    #[test]
    fn prior_at_zero() {
        let s = spec(4, Activation::Relu);
        let p = s.n_params() as f64;
        let lp = log_prior(&s, &vec![0.0; s.n_params()]).unwrap();
        assert!((lp + p / 2.0 * (2.0 * PI).ln()).abs() < 1e-12);
        let doubled = BnnSpec { sigma_w2: 2.0, ..s };
        let lp2 = log_prior(&doubled, &vec![0.0; s.n_params()]).unwrap();
        assert!((lp - lp2 - s.n_weights() as f64 / 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn likelihood_closed_forms() {
        let s = spec(2, Activation::Erf);
        let theta: Vec<f64> = normal_stream(&SeedPath::new(4)).take(s.n_params()).collect();
        let x = Matrix::column(&[-1.0, 0.5, 2.0]).unwrap();
        let f = forward(&s, &theta, &x).unwrap();
        let ll = log_likelihood(&s, &theta, &x, &f).unwrap();
        assert!((ll + 1.5 * (2.0 * PI).ln()).abs() < 1e-12);

        let noisy = BnnSpec { noise_var: 0.04, ..s };
        let x1 = Matrix::column(&[0.3]).unwrap();
        let f1 = forward(&noisy, &theta, &x1).unwrap()[0];
        let r = 0.25;
        let ll1 = log_likelihood(&noisy, &theta, &x1, &[f1 + r]).unwrap();
        let expected = -0.5 * (2.0 * PI * 0.04).ln() - r * r / (2.0 * 0.04);
        assert!((ll1 - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_hidden_output_gives_zero_output_weight_gradient() {
        let s = spec(3, Activation::Erf);
        let mut theta: Vec<f64> = normal_stream(&SeedPath::new(9)).take(s.n_params()).collect();
        // b₀ = 0 and x = 0: every hidden unit outputs erf(0) = 0.
        for b in &mut theta[3..6] {
            *b = 0.0;
        }
        let x = Matrix::column(&[0.0, 0.0]).unwrap();
        let (_, grad) = log_joint_and_grad(&s, &theta, &x, &[0.4, -0.2], None).unwrap();
        for j in 0..3 {
            let w1 = theta[6 + j];
            // Only the prior term -w₁/σ²_W remains.
            assert!((grad[6 + j] + w1).abs() < 1e-14);
        }
    }

    #[test]
    fn hidden_unit_permutation_invariance() {
        let s = BnnSpec::new(5, Activation::Relu, 2, 1.5, 0.5, 0.1).unwrap();
        let theta: Vec<f64> = normal_stream(&SeedPath::new(12)).take(s.n_params()).collect();
        let perm = [3usize, 0, 4, 1, 2];
        let mut permuted = vec![0.0; theta.len()];
        for (new, &old) in perm.iter().enumerate() {
            permuted[2 * new..2 * new + 2].copy_from_slice(&theta[2 * old..2 * old + 2]);
            permuted[10 + new] = theta[10 + old];
            permuted[15 + new] = theta[15 + old];
        }
        permuted[20] = theta[20];
        let x = Matrix::new(4, 2, normal_stream(&SeedPath::new(13)).take(8).collect()).unwrap();
        let y = [0.1, 0.2, -0.3, 0.4];
        let (a, _) = log_joint_and_grad(&s, &theta, &x, &y, None).unwrap();
        let (b, _) = log_joint_and_grad(&s, &permuted, &x, &y, None).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn predictive_draws_rows_are_forward() {
        let s = spec(4, Activation::Relu);
        let draws = prior_draws(&s, 3, &SeedPath::new(1));
        let xs = Matrix::column(&[-1.0, 0.0, 1.0]).unwrap();
        let f = predictive_function_draws(&s, &draws, &xs).unwrap();
        for m in 0..3 {
            assert_eq!(f.row(m), forward(&s, draws.row(m), &xs).unwrap().as_slice());
        }
        assert!(predictive_function_draws(&s, &Matrix::zeros(0, s.n_params()), &xs).is_err());
    }
}
