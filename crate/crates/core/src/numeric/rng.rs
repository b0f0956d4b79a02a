use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::linalg::{cholesky, Cholesky, Matrix};
use crate::error::{Error, Result};

/// A master seed plus a path of `(name, index)` labels naming one work unit.
///
/// Each path hashes to its own ChaCha stream, so the numbers a unit sees do
/// not depend on which thread runs it or in what order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SeedPath {
    master: u64,
    labels: Vec<(String, u64)>,
}

impl SeedPath {
    pub fn new(master: u64) -> Self {
        Self { master, labels: Vec::new() }
    }

    /// Extends the path by one label.
    pub fn child(&self, name: &str, index: u64) -> Self {
        let mut labels = self.labels.clone();
        labels.push((name.to_owned(), index));
        Self { master: self.master, labels }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn labels(&self) -> &[(String, u64)] {
        &self.labels
    }

    fn seed_bytes(&self) -> [u8; 32] {
        let mut state = splitmix64(self.master ^ 0x5851_f42d_4c95_7f2d);
        for (name, index) in &self.labels {
            state = splitmix64(state ^ fnv1a(name.as_bytes()));
            state = splitmix64(state ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        }
        let mut out = [0u8; 32];
        for chunk in out.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        out
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.seed_bytes())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Endless iterator of standard-normal draws.
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl Iterator for NormalStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(StandardNormal.sample(&mut self.rng))
    }
}

pub fn normal_stream(seed: &SeedPath) -> NormalStream {
    NormalStream { rng: seed.rng() }
}

/// One draw from `N(mean, cov)` as `mean + L·z`.
///
/// An all-zero covariance short-circuits to the mean.
pub fn mvn_sample(mean: &[f64], cov: &Matrix, seed: &SeedPath) -> Result<Vec<f64>> {
    if !cov.is_square() || cov.rows() != mean.len() {
        return Err(Error::Dimension(format!(
            "mean of length {} with {}x{} covariance",
            mean.len(),
            cov.rows(),
            cov.cols()
        )));
    }
    if cov.max_abs() == 0.0 {
        return Ok(mean.to_vec());
    }
    let chol = cholesky(cov, 0.0)?;
    Ok(mvn_sample_factored(mean, &chol, &mut normal_stream(seed)))
}

/// Draw using an existing factor, consuming `mean.len()` normals.
pub(crate) fn mvn_sample_factored(
    mean: &[f64],
    chol: &Cholesky,
    normals: &mut impl Iterator<Item = f64>,
) -> Vec<f64> {
    let z: Vec<f64> = normals.take(mean.len()).collect();
    let l = chol.l();
    mean.iter()
        .enumerate()
        .map(|(i, m)| m + super::linalg::dot(&l.row(i)[..=i], &z[..=i]))
        .collect()
}
