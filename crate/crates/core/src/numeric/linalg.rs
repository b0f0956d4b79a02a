use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// First nonzero jitter tried when a Gram matrix refuses to factorize.
pub const GRAM_JITTER: f64 = 1e-10;
/// Largest diagonal jitter the escalation policy will add.
pub const MAX_JITTER: f64 = 1e-4;

const SYMMETRY_RTOL: f64 = 1e-10;

/// Row-major dense matrix of `f64`.
///
/// Zero-row matrices are allowed so that an empty design (no conditioning
/// points) can flow through the GP code without special types.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix entry ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Single-column matrix, the usual shape of a 1-D design.
    pub fn column(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `selfᵀ · v` without materialising the transpose.
    pub fn tr_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.rows != v.len() {
            return Err(Error::Dimension(format!(
                "cannot multiply transpose of {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// Returns `self + value·I`.
    pub fn add_diag(&self, value: f64) -> Matrix {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m[(i, i)] += value;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols && self.rows > 0 && other.rows > 0 {
            return Err(Error::Dimension(format!(
                "cannot stack {} columns on {}",
                other.cols, self.cols
            )));
        }
        let cols = if self.rows > 0 { self.cols } else { other.cols };
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix { rows: self.rows + other.rows, cols, data })
    }

    /// Checks symmetry to a tolerance relative to the largest entry.
    pub fn check_symmetric(&self, rtol: f64) -> Result<()> {
        if !self.is_square() {
            return Err(Error::NotSquare { rows: self.rows, cols: self.cols });
        }
        let tol = rtol * self.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let diff = (self[(i, j)] - self[(j, i)]).abs();
                if diff > tol {
                    return Err(Error::NotSymmetric { i, j, diff });
                }
            }
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Triangle {
    Lower,
    Upper,
}

/// Solves `L·x = b` for triangular `L` by substitution.
pub fn solve_triangular(l: &Matrix, b: &[f64], side: Triangle) -> Result<Vec<f64>> {
    if !l.is_square() {
        return Err(Error::NotSquare { rows: l.rows(), cols: l.cols() });
    }
    let n = l.rows();
    if b.len() != n {
        return Err(Error::Dimension(format!("rhs length {} for {n}x{n} system", b.len())));
    }
    if let Some(i) = (0..n).find(|&i| l[(i, i)] == 0.0) {
        return Err(Error::ZeroPivot(i));
    }
    let mut x = b.to_vec();
    match side {
        Triangle::Lower => {
            for i in 0..n {
                let s = dot(&l.row(i)[..i], &x[..i]);
                x[i] = (x[i] - s) / l[(i, i)];
            }
        }
        Triangle::Upper => {
            for i in (0..n).rev() {
                let s = dot(&l.row(i)[i + 1..], &x[i + 1..]);
                x[i] = (x[i] - s) / l[(i, i)];
            }
        }
    }
    Ok(x)
}

/// Lower Cholesky factor together with the diagonal jitter that was needed.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
    jitter: f64,
}

impl Cholesky {
    pub fn l(&self) -> &Matrix {
        &self.l
    }

    /// Jitter actually added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L·x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Result<Vec<f64>> {
        solve_triangular(&self.l, b, Triangle::Lower)
    }

    /// Solves `Lᵀ·x = b` reading `L` column-wise.
    pub fn solve_lower_tr(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::Dimension(format!("rhs length {} for {n}x{n} system", b.len())));
        }
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        Ok(x)
    }

    /// Solves `(A + jitter·I)·x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let z = self.solve_lower(b)?;
        self.solve_lower_tr(&z)
    }

    /// `L⁻¹·B` for every column of `B`.
    pub fn solve_lower_mat(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.dim();
        if b.rows() != n {
            return Err(Error::Dimension(format!("rhs has {} rows for {n}x{n} system", b.rows())));
        }
        let mut out = b.clone();
        let m = b.cols();
        for i in 0..n {
            let pivot = self.l[(i, i)];
            for k in 0..i {
                let lik = self.l[(i, k)];
                if lik == 0.0 {
                    continue;
                }
                for j in 0..m {
                    let v = out[(k, j)];
                    out[(i, j)] -= lik * v;
                }
            }
            for j in 0..m {
                out[(i, j)] /= pivot;
            }
        }
        Ok(out)
    }

    /// `log|A + jitter·I| = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diag().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Cholesky factorization with geometric jitter escalation.
///
/// Tries `A + jitter·I` first; on failure the jitter is multiplied by ten
/// (starting from [`GRAM_JITTER`] when the given jitter is zero) until it
/// would exceed [`MAX_JITTER`].
pub fn cholesky(a: &Matrix, jitter: f64) -> Result<Cholesky> {
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::InvalidArgument(format!("jitter must be nonnegative, got {jitter}")));
    }
    a.check_symmetric(SYMMETRY_RTOL)?;
    let mut current = jitter;
    loop {
        if let Some(l) = try_cholesky(a, current) {
            return Ok(Cholesky { l, jitter: current });
        }
        let next = if current == 0.0 { GRAM_JITTER } else { current * 10.0 };
        if next > MAX_JITTER * (1.0 + 1e-9) {
            return Err(Error::Factorization { jitter: current });
        }
        current = next;
    }
}

fn try_cholesky(a: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = a.rows();
    let scale = a.diag().iter().fold(0.0_f64, |m, d| m.max(d.abs())).max(jitter);
    // Pivots this small relative to the diagonal are numerically zero.
    let floor = scale * 1e-14;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + jitter;
        d -= dot(&l.row(j)[..j], &l.row(j)[..j]);
        if !(d > floor) || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            // Upper-triangle read keeps the result independent of tiny asymmetry.
            let s = a[(j, i)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(c: &Cholesky) -> Matrix {
        c.l().matmul(&c.l().transpose()).unwrap()
    }

    #[test]
    fn cholesky_identity_is_identity() {
        let c = cholesky(&Matrix::identity(2), 0.0).unwrap();
        assert_eq!(c.l(), &Matrix::identity(2));
        assert_eq!(c.jitter(), 0.0);
    }

    #[test]
    fn cholesky_two_by_two() {
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let c = cholesky(&a, 0.0).unwrap();
        let expected = [2.0, 0.0, 1.0, 2f64.sqrt()];
        for (got, want) in c.l().as_slice().iter().zip(expected) {
            assert!((got - want).abs() < 1e-14);
        }
        assert!(reconstruct(&c).sub(&a).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn singular_input_forces_jitter() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let c = cholesky(&a, 1e-8).unwrap();
        assert!(c.jitter() > 0.0);
        let target = a.add_diag(c.jitter());
        assert!(reconstruct(&c).sub(&target).unwrap().frobenius() < 1e-8 * target.frobenius());
    }

    #[test]
    fn singular_input_escalates_from_zero() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let c = cholesky(&a, 0.0).unwrap();
        assert!(c.jitter() >= GRAM_JITTER && c.jitter() <= MAX_JITTER);
    }

    #[test]
    fn cholesky_rejects_bad_input() {
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(cholesky(&rect, 0.0), Err(Error::NotSquare { .. })));
        let asym = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert!(matches!(cholesky(&asym, 0.0), Err(Error::NotSymmetric { .. })));
        let neg = Matrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&neg, 0.0), Err(Error::Factorization { .. })));
    }

    #[test]
    fn triangular_solves() {
        let b = [3.0, -1.0];
        assert_eq!(solve_triangular(&Matrix::identity(2), &b, Triangle::Lower).unwrap(), b);
        let l = Matrix::from_rows(&[vec![2.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let x = solve_triangular(&l, &[2.0, 2.0], Triangle::Lower).unwrap();
        assert_eq!(x, vec![1.0, 1.0]);
        let u = l.transpose();
        let x = solve_triangular(&u, &[3.0, 1.0], Triangle::Upper).unwrap();
        assert_eq!(x, vec![1.0, 1.0]);
        let bad = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            solve_triangular(&bad, &[1.0, 1.0], Triangle::Lower),
            Err(Error::ZeroPivot(0))
        ));
    }

    #[test]
    fn cholesky_solve_matches_product() {
        let a = Matrix::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 2.0],
        ])
        .unwrap();
        let c = cholesky(&a, 0.0).unwrap();
        let x = c.solve(&[1.0, 2.0, 3.0]).unwrap();
        let back = a.matvec(&x).unwrap();
        for (b, want) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((b - want).abs() < 1e-12);
        }
        let via_mat = c.solve_lower_mat(&Matrix::column(&[1.0, 2.0, 3.0]).unwrap()).unwrap();
        let via_vec = c.solve_lower(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(via_mat.col(0), via_vec);
        let det = 4.0 * (3.0 * 2.0 - 0.04) - 1.0 * (2.0 - 0.1) + 0.5 * (0.2 - 1.5);
        assert!((c.log_det() - f64::ln(det)).abs() < 1e-12);
    }

    #[test]
    fn matrix_rejects_non_finite() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0]).is_err());
    }
}
