use bnnwidth::gp::GpModel;
use bnnwidth::kernels::{gram, KernelSpec};
use bnnwidth::numeric::{Matrix, SeedPath};
use proptest::prelude::*;
use rand::Rng;

/// Conditions the joint Gaussian over (f*, y) by Gaussian elimination on
/// the full block matrix, independent of the Cholesky path.
fn joint_condition(spec: &KernelSpec, noise: f64, x: &Matrix, y: &[f64], xs: &Matrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (n, m) = (x.rows(), xs.rows());
    let all = xs.vstack(x).unwrap();
    let mut k = gram(spec, &all, &all).unwrap();
    for i in 0..n {
        let d = m + i;
        k.row_mut(d)[d] += noise;
    }
    // Augmented system [K_yy | K_y* | y] reduced to the identity on the left.
    let mut aug: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| k[(m + i, m + j)]).collect();
            row.extend((0..m).map(|a| k[(m + i, a)]));
            row.push(y[i]);
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| aug[a][c].abs().total_cmp(&aug[b][c].abs())).unwrap();
        aug.swap(c, p);
        let piv = aug[c][c];
        aug[c].iter_mut().for_each(|v| *v /= piv);
        for r in 0..n {
            if r != c {
                let f = aug[r][c];
                let pivot_row = aug[c].clone();
                aug[r].iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    let mean = (0..m).map(|a| (0..n).map(|i| k[(a, m + i)] * aug[i][n + m]).sum()).collect();
    let cov = (0..m)
        .map(|a| (0..m).map(|b| k[(a, b)] - (0..n).map(|i| k[(a, m + i)] * aug[i][n + b]).sum::<f64>()).collect())
        .collect();
    (mean, cov)
}

#[test]
fn ten_by_ten_problem_matches_joint_conditioning() {
    let mut rng = SeedPath::new(21).rng();
    for spec in [KernelSpec::rbf(0.7).unwrap(), KernelSpec::arcsin(1.5, 0.5).unwrap(), KernelSpec::arccos(2.0, 1.0).unwrap()] {
        let x = Matrix::from_fn(10, 1, |_, _| rng.random_range(-3.0..3.0));
        let xs = Matrix::from_fn(10, 1, |_, _| rng.random_range(-3.0..3.0));
        let y: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pred = GpModel::new(spec, 0.05).unwrap().fit(&x, &y).unwrap().predict(&xs).unwrap();
        let (mean, cov) = joint_condition(&spec, 0.05, &x, &y, &xs);
        for a in 0..10 {
            assert!((pred.mean[a] - mean[a]).abs() < 1e-8);
            for b in 0..10 {
                assert!((pred.cov[(a, b)] - cov[a][b]).abs() < 1e-8);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn posterior_variance_never_exceeds_prior(seed in 0u64..10_000, n in 1usize..8, noise in 0.01f64..1.0) {
        let mut rng = SeedPath::new(seed).rng();
        let spec = KernelSpec::arccos(rng.random_range(0.5..2.5), rng.random_range(0.5..2.5)).unwrap();
        let x = Matrix::from_fn(n, 1, |_, _| rng.random_range(-3.0..3.0));
        let xs = Matrix::from_fn(5, 1, |_, _| rng.random_range(-3.0..3.0));
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pred = GpModel::new(spec, noise).unwrap().fit(&x, &y).unwrap().predict(&xs).unwrap();
        let prior = gram(&spec, &xs, &xs).unwrap();
        for (a, v) in pred.variances().iter().enumerate() {
            prop_assert!(*v <= prior[(a, a)] + 1e-9);
        }
    }
}
