use std::io::Write as _;

use bnnwidth::experiments::{
    delta_metrics, empirical_cdf, evaluate_nngp, generate_filtered_suite, generate_synthetic_suite, hyper_grid,
    ldl_cdf_study, load_tabular, nngp_model_select, predictive_metrics, spectrum_study, Dataset, LdlGenerator,
    MetricRow, ModelTag, NllMode, Split, SplitRatios, DEFAULT_SIGMA_EPS,
};
use bnnwidth::gp::GpModel;
use bnnwidth::kernels::KernelSpec;
use bnnwidth::lpf::GridSpec;
use bnnwidth::numeric::{Matrix, SeedPath};
use bnnwidth::spectral::FilterSpec;
use bnnwidth::stats::{mean, std_error};
use proptest::prelude::*;
use rand::Rng;

fn row(id: &str, model: ModelTag, nll: f64, mse: f64) -> MetricRow {
    let width = if model == ModelTag::Bnn { 8 } else { 0 };
    MetricRow { dataset_id: id.into(), model, width, t: 0.0, nll, mse }
}

#[test]
fn suites_round_trip_through_files_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut suite = generate_synthetic_suite(KernelSpec::rbf(0.5).unwrap(), 3, DEFAULT_SIGMA_EPS, &SeedPath::new(1)).unwrap();
    suite.extend(
        generate_filtered_suite(KernelSpec::arcsin(2.0, 2.0).unwrap(), 2, 0.1, &GridSpec::default(), 0.5, &SeedPath::new(2))
            .unwrap()
            .into_iter()
            .map(|mut d| {
                d.id = format!("f{}", d.id);
                d
            }),
    );
    for ds in &suite {
        let path = dir.path().join(format!("{}.csv", ds.id));
        ds.write(&path).unwrap();
        let back = Dataset::read(&path).unwrap();
        assert_eq!(&back, ds);
        assert_eq!(back.to_text(), ds.to_text());
    }
}

#[test]
fn tabular_split_sizes_and_membership() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.csv");
    let mut file = std::fs::File::create(&path).unwrap();
    writeln!(file, "a,b,target").unwrap();
    for i in 0..100 {
        writeln!(file, "{},{},{}", i, (i * 7) % 13, i as f64 * 0.5).unwrap();
    }
    drop(file);
    let load = |seed| load_tabular(&path, "target", SplitRatios::default(), false, &SeedPath::new(seed)).unwrap();
    let ds = load(3);
    assert_eq!((ds.train.len(), ds.test.len(), ds.valid.as_ref().unwrap().len()), (80, 10, 10));
    assert_eq!(ds, load(3));
    let mut ids: Vec<f64> = ds.train.x.col(0);
    ids.extend(ds.test.x.col(0));
    ids.extend(ds.valid.as_ref().unwrap().x.col(0));
    ids.sort_by(f64::total_cmp);
    assert_eq!(ids, (0..100).map(f64::from).collect::<Vec<_>>());
    assert!(load_tabular(&path, "missing", SplitRatios::default(), false, &SeedPath::new(3)).is_err());
}

#[test]
fn identical_draws_at_the_truth_give_zero_mse() {
    let f = Matrix::from_fn(3, 4, |_, j| j as f64 * 0.5);
    let (_, mse) = predictive_metrics(&f, &[0.0, 0.5, 1.0, 1.5], 0.01, NllMode::Mixture).unwrap();
    assert_eq!(mse, 0.0);
}

#[test]
fn empty_training_set_gives_prior_predictive_metrics() {
    let model = GpModel::new(KernelSpec::arccos(1.0, 1.0).unwrap(), 0.04).unwrap();
    let xs = Matrix::column(&[-1.0, 0.5]).unwrap();
    let f = vec![0.3, -0.2];
    let ds = Dataset {
        id: "empty".into(),
        train: Split { x: Matrix::zeros(0, 1), y: vec![], f: None },
        test: Split { x: xs.clone(), y: f.clone(), f: Some(f.clone()) },
        valid: None,
        manifest: Default::default(),
    };
    let r = evaluate_nngp(&model, &ds).unwrap();
    let mut nll = 0.0;
    for (i, fi) in f.iter().enumerate() {
        let var = model.spec.eval(xs.row(i), xs.row(i)).unwrap() + 0.04;
        nll += 0.5 * (2.0 * std::f64::consts::PI * var).ln() + fi * fi / (2.0 * var);
    }
    assert!((r.nll - nll / 2.0).abs() < 1e-12);
    assert!((r.mse - (0.09 + 0.04) / 2.0).abs() < 1e-12);
}

#[test]
fn delta_matches_independent_recomputation() {
    let mut rng = SeedPath::new(5).rng();
    let ids: Vec<String> = (0..10).map(|i| format!("d{i}")).collect();
    let bnn: Vec<MetricRow> =
        ids.iter().map(|id| row(id, ModelTag::Bnn, rng.random_range(0.0..2.0), rng.random_range(0.0..1.0))).collect();
    let mut nngp: Vec<MetricRow> =
        ids.iter().map(|id| row(id, ModelTag::Nngp, rng.random_range(0.0..2.0), rng.random_range(0.0..1.0))).collect();
    nngp.reverse();
    let d = delta_metrics(&bnn, &nngp).unwrap();
    let diffs: Vec<f64> = bnn
        .iter()
        .map(|b| b.mse - nngp.iter().find(|n| n.dataset_id == b.dataset_id).unwrap().mse)
        .collect();
    let m = diffs.iter().sum::<f64>() / 10.0;
    let sd = (diffs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 9.0).sqrt();
    assert!((d.delta_mse - m).abs() < 1e-12);
    assert!((d.delta_mse_se - sd / 10f64.sqrt()).abs() < 1e-12);
    assert_eq!(d.s, 10);
}

#[test]
fn ldl_study_under_its_own_generator_is_stable() {
    let gp = GpModel::new(KernelSpec::rbf(2.0).unwrap(), 0.01).unwrap();
    let gen = LdlGenerator::GpPrior(gp.clone());
    let a: Vec<f64> = ldl_cdf_study(&gen, &gp, 200, &SeedPath::new(6)).unwrap().iter().map(|r| r.ldl).collect();
    let b: Vec<f64> = ldl_cdf_study(&gen, &gp, 200, &SeedPath::new(7)).unwrap().iter().map(|r| r.ldl).collect();
    assert!(a.iter().chain(&b).all(|v| v.is_finite()));
    let tol = 3.0 * (std_error(&a).powi(2) + std_error(&b).powi(2)).sqrt();
    assert!((mean(&a) - mean(&b)).abs() < tol);

    let cdf = empirical_cdf(&a);
    assert!(cdf.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    assert_eq!(cdf.last().unwrap().1, 1.0);
}

#[test]
fn spectrum_summaries() {
    let grid = GridSpec::default();
    let ps = [50.0, 90.0, 99.0];
    let gp = GpModel::new(KernelSpec::arccos(2.0, 2.0).unwrap(), 0.01).unwrap();
    let once = spectrum_study(bnnwidth::experiments::SpectrumSource::GpPrior(&gp), &grid, 50, &ps, &SeedPath::new(8)).unwrap();
    let twice = spectrum_study(bnnwidth::experiments::SpectrumSource::GpPrior(&gp), &grid, 50, &ps, &SeedPath::new(8)).unwrap();
    assert_eq!(once, twice);

    let t = 0.5;
    let data = spectrum_study(bnnwidth::experiments::SpectrumSource::DataGenerator(&gp, t), &grid, 50, &ps, &SeedPath::new(9)).unwrap();
    let kept = FilterSpec::new(t).unwrap().kept(grid.len());
    for i in kept..grid.len() {
        for p in 0..ps.len() {
            assert!(data.value(i, p) < 1e-9);
        }
    }

    // Two disjoint batches of 2000 draws. The largest deviation over all 256
    // indices is noise-limited, so each percentile must agree within 10% on
    // at least 95% of the indices.
    let a = spectrum_study(bnnwidth::experiments::SpectrumSource::GpPrior(&gp), &grid, 2000, &ps, &SeedPath::new(10)).unwrap();
    let b = spectrum_study(bnnwidth::experiments::SpectrumSource::GpPrior(&gp), &grid, 2000, &ps, &SeedPath::new(11)).unwrap();
    for p in 0..ps.len() {
        let within = (0..grid.len()).filter(|&i| (a.value(i, p) - b.value(i, p)).abs() <= 0.1 * a.value(i, p)).count();
        assert!(within * 100 >= 95 * grid.len(), "percentile {}: {within}/{}", ps[p], grid.len());
    }
}

#[test]
fn model_selection_recovers_the_generator_lengthscale() {
    let truth = 0.5;
    let grid = hyper_grid(&KernelSpec::rbf(1.0).unwrap(), &[0.25, 0.5, 1.0, 2.0]).unwrap();
    let gp = GpModel::new(KernelSpec::rbf(truth).unwrap(), 0.01).unwrap();
    let mut hits = 0;
    for trial in 0..20 {
        let seed = SeedPath::new(12).child("trial", trial);
        let mut rng = seed.rng();
        let x = Matrix::from_fn(60, 1, |_, _| rng.random_range(-3.0..3.0));
        let f = gp.prior_sample(&x, false, &seed.child("f", 0)).unwrap();
        let y: Vec<f64> = f.iter().map(|v| v + 0.1 * rng.random_range(-1.7..1.7)).collect();
        let split = |lo: usize, hi: usize| Split {
            x: x.select_rows(&(lo..hi).collect::<Vec<_>>()),
            y: y[lo..hi].to_vec(),
            f: Some(f[lo..hi].to_vec()),
        };
        let ds = Dataset { id: "sel".into(), train: split(0, 30), test: split(30, 45), valid: Some(split(45, 60)), manifest: Default::default() };
        if nngp_model_select(&grid, 0.01, &ds).unwrap() == KernelSpec::rbf(truth).unwrap() {
            hits += 1;
        }
    }
    assert!(hits > 10, "selected the generator in {hits}/20 trials");
}

#[test]
fn model_selection_edge_cases() {
    let ds = generate_synthetic_suite(KernelSpec::rbf(0.5).unwrap(), 1, 0.1, &SeedPath::new(13)).unwrap().remove(0);
    let one = [KernelSpec::arcsin(1.0, 1.0).unwrap()];
    let with_valid = Dataset { valid: Some(ds.test.clone()), ..ds.clone() };
    assert_eq!(nngp_model_select(&one, 0.01, &with_valid).unwrap(), one[0]);
    let dup = [KernelSpec::arcsin(1.5, 1.5).unwrap(), KernelSpec::arcsin(1.5, 1.5).unwrap()];
    assert_eq!(nngp_model_select(&dup, 0.01, &with_valid).unwrap(), dup[0]);
    assert!(nngp_model_select(&[], 0.01, &with_valid).is_err());
    assert!(nngp_model_select(&one, 0.01, &ds).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn paired_delta_is_difference_of_means(values in proptest::collection::vec((0.0f64..3.0, 0.0f64..3.0, 0.0f64..2.0, 0.0f64..2.0), 1..20)) {
        let bnn: Vec<MetricRow> = values.iter().enumerate().map(|(i, v)| row(&format!("d{i}"), ModelTag::Bnn, v.0, v.2)).collect();
        let nngp: Vec<MetricRow> = values.iter().enumerate().map(|(i, v)| row(&format!("d{i}"), ModelTag::Nngp, v.1, v.3)).collect();
        let d = delta_metrics(&bnn, &nngp).unwrap();
        let mb = bnn.iter().map(|r| r.nll).sum::<f64>() / bnn.len() as f64;
        let mn = nngp.iter().map(|r| r.nll).sum::<f64>() / nngp.len() as f64;
        prop_assert!((d.delta_nll - (mb - mn)).abs() < 1e-12);
    }

    #[test]
    fn mixture_nll_is_bounded_by_moment_matched(seed in 0u64..10_000, m in 2usize..30) {
        let mut rng = SeedPath::new(seed).rng();
        let f = Matrix::from_fn(m, 5, |_, _| rng.random_range(-1.0..1.0));
        let targets: Vec<f64> = (0..5).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (mix, mse_a) = predictive_metrics(&f, &targets, 0.01, NllMode::Mixture).unwrap();
        let (mm, mse_b) = predictive_metrics(&f, &targets, 0.01, NllMode::MomentMatched).unwrap();
        prop_assert!(mix >= mm - (m as f64).ln());
        prop_assert_eq!(mse_a, mse_b);
    }
}
