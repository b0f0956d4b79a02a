//! Orthonormal type-II DCT as an explicit matrix, hard spectral truncation,
//! and percentile summaries of coefficient magnitudes.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::stats::percentile_sorted;

/// Percentiles reported when none are requested explicitly.
pub const DEFAULT_PERCENTILES: [f64; 3] = [50.0, 90.0, 99.0];

/// Transform matrix `T` with `a = T·f` and `f = Tᵀ·a`.
#[derive(Debug, Clone)]
pub struct DctPlan {
    t: Matrix,
}

impl DctPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("DCT size must be at least 1".into()));
        }
        let nf = n as f64;
        let t = Matrix::from_fn(n, n, |i, j| {
            let scale = if i == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            scale * (PI * i as f64 * (2 * j + 1) as f64 / (2.0 * nf)).cos()
        });
        Ok(Self { t })
    }

    pub fn len(&self) -> usize {
        self.t.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn matrix(&self) -> &Matrix {
        &self.t
    }

    pub fn forward(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.t.matvec(f)
    }

    pub fn inverse(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.t.tr_matvec(a)
    }
}

pub fn dct_plan(n: usize) -> Result<DctPlan> {
    DctPlan::new(n)
}

/// Hard low-pass filter: coefficient `k` survives iff `k < (1 - t)·N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    t: f64,
}

impl FilterSpec {
    pub fn new(t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!("filter threshold {t} outside [0, 1]")));
        }
        Ok(Self { t })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Number of leading coefficients kept on an `n`-point grid.
    ///
    /// `k < (1 - t)·n` holds exactly for `k < n - ⌊t·n⌋`; the floor is taken
    /// on the exact binary value of `t`, so no rounding enters the cutoff.
    pub fn kept(&self, n: usize) -> usize {
        n - floor_mul(self.t, n)
    }

    pub fn keeps(&self, k: usize, n: usize) -> bool {
        k < self.kept(n)
    }
}

/// `⌊t·n⌋` for `t ∈ [0, 1]`, computed in integer arithmetic.
fn floor_mul(t: f64, n: usize) -> usize {
    if t == 0.0 {
        return 0;
    }
    let bits = t.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mantissa, exp) = if biased == 0 { (frac, -1074) } else { (frac | (1u64 << 52), biased - 1075) };
    // t ≤ 1 so exp ≤ 0.
    let shift = (-exp) as u32;
    if shift >= 128 {
        return 0;
    }
    ((u128::from(mantissa) * n as u128) >> shift) as usize
}

/// `C = Tᵀ·diag(kept)·T`, formed explicitly.
pub fn lowpass_matrix(plan: &DctPlan, t: f64) -> Result<Matrix> {
    let filter = FilterSpec::new(t)?;
    let n = plan.len();
    let kept = filter.kept(n);
    let tm = plan.matrix();
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = (0..kept).map(|k| tm[(k, i)] * tm[(k, j)]).sum();
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

/// Forward transform, zero the removed coefficients, transform back.
pub fn lowpass_apply(plan: &DctPlan, t: f64, f: &[f64]) -> Result<Vec<f64>> {
    let filter = FilterSpec::new(t)?;
    let mut a = plan.forward(f)?;
    let kept = filter.kept(plan.len());
    a[kept..].iter_mut().for_each(|v| *v = 0.0);
    plan.inverse(&a)
}

/// Per-coefficient percentiles of the coefficient distribution over a set
/// of function samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSummary {
    percentiles: Vec<f64>,
    /// `values[i][j]`: percentile `percentiles[j]` of coefficient `i`.
    values: Vec<Vec<f64>>,
}

impl SpectrumSummary {
    pub fn percentiles(&self) -> &[f64] {
        &self.percentiles
    }

    pub fn n_coeffs(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, coeff: usize, percentile_idx: usize) -> f64 {
        self.values[coeff][percentile_idx]
    }

    /// Looks a percentile up by value, e.g. `get(5, 99.0)`.
    pub fn get(&self, coeff: usize, percentile: f64) -> Option<f64> {
        let j = self.percentiles.iter().position(|&p| p == percentile)?;
        self.values.get(coeff).map(|row| row[j])
    }

    /// Flat `(coeff_index, percentile, value)` rows in table order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.values.iter().enumerate().flat_map(move |(i, row)| {
            self.percentiles.iter().zip(row).map(move |(&p, &v)| (i, p, v))
        })
    }
}

/// Summarises the DCT coefficients of each row of `samples` (M×N).
///
/// With `magnitude` set the percentiles are of `|a_i|`, otherwise of the
/// signed coefficients.
pub fn spectrum_percentiles(
    samples: &Matrix,
    plan: &DctPlan,
    percentiles: &[f64],
    magnitude: bool,
) -> Result<SpectrumSummary> {
    if samples.rows() == 0 {
        return Err(Error::Empty("function samples"));
    }
    if samples.rows() < 2 {
        return Err(Error::InvalidArgument("need at least two function samples".into()));
    }
    if samples.cols() != plan.len() {
        return Err(Error::Dimension(format!(
            "samples on {} points for a DCT of size {}",
            samples.cols(),
            plan.len()
        )));
    }
    if let Some(p) = percentiles.iter().find(|p| !(0.0..=100.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("percentile {p} outside [0, 100]")));
    }
    let m = samples.rows();
    let n = plan.len();
    let mut coeffs = vec![Vec::with_capacity(m); n];
    for r in 0..m {
        for (i, a) in plan.forward(samples.row(r))?.into_iter().enumerate() {
            coeffs[i].push(if magnitude { a.abs() } else { a });
        }
    }
    let values = coeffs
        .into_iter()
        .map(|mut c| {
            c.sort_by(f64::total_cmp);
            percentiles.iter().map(|&p| percentile_sorted(&c, p)).collect()
        })
        .collect();
    Ok(SpectrumSummary { percentiles: percentiles.to_vec(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{normal_stream, SeedPath};
    use proptest::prelude::*;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        normal_stream(&SeedPath::new(seed)).take(n).collect()
    }

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn two_point_matrix() {
        let plan = dct_plan(2).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [r, r, r, -r];
        for (got, want) in plan.matrix().as_slice().iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
        let a = plan.forward(&[1.0, -1.0]).unwrap();
        assert!(a[0].abs() < 1e-15 && (a[1] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_and_dc_row() {
        for n in [1, 2, 64, 256] {
            let plan = dct_plan(n).unwrap();
            let t = plan.matrix();
            let err = t.matmul(&t.transpose()).unwrap().sub(&Matrix::identity(n)).unwrap().max_abs();
            assert!(err < 1e-10, "n={n} err={err}");
            for &v in t.row(0) {
                assert!((v - (1.0 / n as f64).sqrt()).abs() < 1e-15);
            }
        }
        assert!(dct_plan(0).is_err());
    }

    #[test]
    fn constant_is_dc_only() {
        let n = 16;
        let plan = dct_plan(n).unwrap();
        let a = plan.forward(&vec![2.5; n]).unwrap();
        assert!((a[0] - 2.5 * (n as f64).sqrt()).abs() < 1e-12);
        assert!(a[1..].iter().all(|v| v.abs() < 1e-12));
        assert!(plan.forward(&[1.0; 3]).is_err());
    }

    #[test]
    fn cutoff_boundaries() {
        let keep = |t: f64, n: usize| FilterSpec::new(t).unwrap().kept(n);
        assert_eq!(keep(0.0, 256), 256);
        assert_eq!(keep(1.0, 256), 0);
        assert_eq!(keep(0.5, 4), 2);
        // (1 - 0.91)·256 = 23.04: indices 0..=23 survive.
        assert_eq!(keep(0.91, 256), 24);
        assert_eq!(keep(0.95, 256), 13);
        assert_eq!(keep(0.25, 8), 6);
        assert_eq!(keep(1e-300, 8), 8);
        assert!(FilterSpec::new(-0.1).is_err());
        assert!(FilterSpec::new(1.5).is_err());
        assert!(FilterSpec::new(f64::NAN).is_err());
        // Reference rule in exact rational arithmetic for t = p/q.
        for q in [3u64, 7, 10, 100] {
            for p in 0..=q {
                let t = p as f64 / q as f64;
                for n in [1usize, 5, 64, 256] {
                    let kept = keep(t, n);
                    for k in 0..n {
                        // k ≥ (1 - t)·n  ⇔  k·q ≥ (q - p)·n, up to rounding of p/q
                        // which only matters when the two sides are equal.
                        let lhs = k as u64 * q;
                        let rhs = (q - p) * n as u64;
                        if lhs != rhs {
                            assert_eq!(k >= kept, lhs > rhs, "t={p}/{q} n={n} k={k}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn lowpass_matrix_extremes() {
        let plan = dct_plan(32).unwrap();
        let c0 = lowpass_matrix(&plan, 0.0).unwrap();
        assert!(c0.sub(&Matrix::identity(32)).unwrap().max_abs() < 1e-10);
        let c1 = lowpass_matrix(&plan, 1.0).unwrap();
        assert_eq!(c1.max_abs(), 0.0);
        assert!(lowpass_matrix(&plan, 1.01).is_err());
    }

    #[test]
    fn half_filter_on_four_points() {
        let plan = dct_plan(4).unwrap();
        let f = random_vec(4, 1);
        let a = plan.forward(&lowpass_apply(&plan, 0.5, &f).unwrap()).unwrap();
        let a_full = plan.forward(&f).unwrap();
        assert!((a[0] - a_full[0]).abs() < 1e-12 && (a[1] - a_full[1]).abs() < 1e-12);
        assert!(a[2].abs() < 1e-12 && a[3].abs() < 1e-12);
        let c = lowpass_apply(&plan, 0.5, &[3.0; 4]).unwrap();
        assert!(c.iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn apply_matches_matrix_path() {
        let plan = dct_plan(8).unwrap();
        let mut e0 = vec![0.0; 8];
        e0[0] = 1.0;
        let c = lowpass_matrix(&plan, 0.5).unwrap();
        let direct = lowpass_apply(&plan, 0.5, &e0).unwrap();
        for (d, m) in direct.iter().zip(c.matvec(&e0).unwrap()) {
            assert!((d - m).abs() < 1e-12);
        }
        assert!(lowpass_apply(&plan, 1.0, &e0).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lowest_cosine_survives() {
        let n = 8;
        let plan = dct_plan(n).unwrap();
        let f = plan.matrix().row(1).to_vec();
        // Kept iff 1 < (1 - t)·8, i.e. t < 7/8.
        let g = lowpass_apply(&plan, 0.8, &f).unwrap();
        for (a, b) in f.iter().zip(&g) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn filter_matrix_is_symmetric_projection() {
        let plan = dct_plan(24).unwrap();
        for t in [0.0, 0.25, 0.5, 0.91, 1.0] {
            let c = lowpass_matrix(&plan, t).unwrap();
            assert_eq!(c, c.transpose());
            let cc = c.matmul(&c).unwrap();
            assert!(cc.sub(&c).unwrap().max_abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn percentile_summary_basics() {
        let plan = dct_plan(4).unwrap();
        let row = vec![0.3, -1.0, 2.0, 0.5];
        let samples = Matrix::from_rows(&vec![row.clone(); 5]).unwrap();
        let s = spectrum_percentiles(&samples, &plan, &DEFAULT_PERCENTILES, true).unwrap();
        let a = plan.forward(&row).unwrap();
        for (i, ai) in a.iter().enumerate() {
            for j in 0..3 {
                assert!((s.value(i, j) - ai.abs()).abs() < 1e-15);
            }
        }
        assert_eq!(s.rows().count(), 12);
        assert!(spectrum_percentiles(&Matrix::zeros(0, 4), &plan, &[50.0], true).is_err());
        assert!(spectrum_percentiles(&Matrix::zeros(1, 4), &plan, &[50.0], true).is_err());
    }

    #[test]
    fn median_at_dc_index() {
        // Rows whose DC coefficients are 0, 1, 2, 3, 4 (constant functions).
        let n = 4;
        let plan = dct_plan(n).unwrap();
        let rows: Vec<Vec<f64>> =
            (0..5).map(|v| vec![v as f64 / (n as f64).sqrt(); n]).collect();
        let samples = Matrix::from_rows(&rows).unwrap();
        let s = spectrum_percentiles(&samples, &plan, &[50.0], true).unwrap();
        assert!((s.get(0, 50.0).unwrap() - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn parseval_and_roundtrip(seed in 0u64..1000, n in 1usize..80) {
            let plan = dct_plan(n).unwrap();
            let f = random_vec(n, seed);
            let a = plan.forward(&f).unwrap();
            prop_assert!((norm(&a) - norm(&f)).abs() < 1e-9);
            let back = plan.inverse(&a).unwrap();
            for (x, y) in f.iter().zip(&back) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }

        #[test]
        fn filtering_removes_energy_monotonically(seed in 0u64..1000, t1 in 0.0f64..1.0, dt in 0.0f64..1.0) {
            let plan = dct_plan(32).unwrap();
            let f = random_vec(32, seed);
            let t2 = (t1 + dt).min(1.0);
            let e1 = norm(&lowpass_apply(&plan, t1, &f).unwrap());
            let e2 = norm(&lowpass_apply(&plan, t2, &f).unwrap());
            prop_assert!(e2 <= e1 + 1e-12);
        }

        #[test]
        fn percentiles_nondecreasing(seed in 0u64..200) {
            let plan = dct_plan(8).unwrap();
            let data: Vec<f64> = random_vec(8 * 20, seed);
            let samples = Matrix::new(20, 8, data).unwrap();
            let s = spectrum_percentiles(&samples, &plan, &[1.0, 50.0, 90.0, 99.0], true).unwrap();
            for i in 0..8 {
                for j in 1..4 {
                    prop_assert!(s.value(i, j) >= s.value(i, j - 1));
                }
            }
        }
    }
}
