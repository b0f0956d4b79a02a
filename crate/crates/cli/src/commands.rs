use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bnnwidth::bnn::BnnSpec;
use bnnwidth::experiments::{
    dataset_id, delta_csv, delta_table, evaluate_nngp, fit_bnn, generate_filtered_suite, generate_synthetic_suite,
    hyper_grid, ldl_cdf_study, ldl_csv, load_tabular, metrics_csv, nngp_model_select, parse_metrics_csv,
    read_metrics_csv, spectrum_lines, spectrum_study, Dataset, FilterSetting, LdlGenerator, MetricRow, SpectrumSource,
    SplitRatios, SPECTRUM_HEADER,
};
use bnnwidth::gp::GpModel;
use bnnwidth::kernels::KernelSpec;
use bnnwidth::numeric::SeedPath;
use bnnwidth::nuts::{diagnostics_csv, PosteriorDraws};
use rayon::prelude::*;

use crate::config::Run;
use crate::error::CliError;
use crate::ledger::Ledger;

const SUITE_MANIFEST: &str = "suite.txt";

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn cmd_gen(run: &Run) -> Result<(), CliError> {
    let data = &run.config.data;
    let dir = run.data_dir();
    create_dir(&dir)?;
    let seed = SeedPath::new(run.config.seed).child("gen", 0);
    let suite: Vec<Dataset> = match (&data.kernel, &data.tabular) {
        (Some(kernel), _) => {
            let spec = kernel.build("data.kernel")?;
            match data.filter_t {
                Some(t) => {
                    generate_filtered_suite(spec, data.count, data.sigma_eps, &run.config.spectrum.grid()?, t, &seed)?
                }
                None => generate_synthetic_suite(spec, data.count, data.sigma_eps, &seed)?,
            }
        }
        (None, Some(tab)) => (0..data.count)
            .map(|s| {
                let mut ds = load_tabular(&tab.path, &tab.target, SplitRatios::default(), tab.standardize, &seed.child("split", s as u64))?;
                ds.id = dataset_id(s);
                ds.manifest.set("sigma_eps", data.sigma_eps.to_string());
                Ok(ds)
            })
            .collect::<Result<_, bnnwidth::Error>>()?,
        (None, None) => unreachable!("validated"),
    };

    let mut manifest = format!("seed = {}\ncount = {}\nsigma_eps = {}\n", run.config.seed, data.count, data.sigma_eps);
    match (&data.kernel, &data.tabular) {
        (Some(k), _) => {
            for (key, v) in k.build("data.kernel")?.to_manifest() {
                let _ = writeln!(manifest, "{key} = {v}");
            }
        }
        (None, Some(tab)) => {
            let _ = writeln!(manifest, "source = {}\ntarget = {}", tab.path.display(), tab.target);
        }
        (None, None) => {}
    }
    if let Some(t) = data.filter_t {
        let _ = writeln!(manifest, "t = {t}");
    }
    for ds in &suite {
        let path = dir.join(format!("{}.csv", ds.id));
        write_file(&path, &ds.to_text())?;
        let _ = writeln!(manifest, "dataset = {}", ds.id);
    }
    write_file(&dir.join(SUITE_MANIFEST), &manifest)?;
    eprintln!("wrote {} datasets to {}", suite.len(), dir.display());
    Ok(())
}

fn read_suite(run: &Run) -> Result<Vec<Dataset>, CliError> {
    let dir = run.data_dir();
    let manifest = read_file(&dir.join(SUITE_MANIFEST))?;
    manifest
        .lines()
        .filter_map(|l| l.split_once('=').filter(|(k, _)| k.trim() == "dataset").map(|(_, v)| v.trim()))
        .map(|id| {
            let path = dir.join(format!("{id}.csv"));
            Dataset::read(&path).map_err(|e| CliError::io(&path, e))
        })
        .collect()
}

#[derive(Debug, Clone)]
enum UnitKind {
    Nngp,
    Bnn { width: usize, t_index: usize, t: Option<f64> },
}

#[derive(Debug, Clone)]
struct Unit {
    ds_index: usize,
    kind: UnitKind,
}

impl Unit {
    fn name(&self) -> String {
        match self.kind {
            UnitKind::Nngp => "nngp".into(),
            UnitKind::Bnn { width, t: None, .. } => format!("bnn_w{width}_unfiltered"),
            UnitKind::Bnn { width, t: Some(t), .. } => format!("bnn_w{width}_t{t}"),
        }
    }
}

fn work_units(run: &Run, n_datasets: usize) -> Vec<Unit> {
    let mut units = Vec::new();
    for ds_index in 0..n_datasets {
        if run.config.nngp.enabled {
            units.push(Unit { ds_index, kind: UnitKind::Nngp });
        }
        if let Some(bnn) = &run.config.bnn {
            for &width in &bnn.widths {
                for (t_index, t) in bnn.filter_settings().into_iter().enumerate() {
                    units.push(Unit { ds_index, kind: UnitKind::Bnn { width, t_index, t } });
                }
            }
        }
    }
    units
}

/// The NNGP compared against: the BNN's limiting kernel, or the configured
/// kernel when no BNN is fitted.
fn nngp_kernel(run: &Run, input_dim: usize) -> Result<KernelSpec, CliError> {
    match (&run.config.bnn, &run.config.nngp.kernel) {
        (Some(bnn), _) => Ok(bnn.spec(1, input_dim, run.noise_var())?.limiting_kernel()),
        (None, Some(k)) => k.build("nngp.kernel"),
        (None, None) => Err(CliError::Config("nngp: missing field `kernel`".into())),
    }
}

fn draws_manifest(spec: &BnnSpec, run: &Run, t: Option<f64>, seed: &SeedPath) -> String {
    let s = &run.sampler;
    let mut out = String::new();
    let _ = writeln!(out, "width = {}\nactivation = {}\ninput_dim = {}", spec.width, spec.activation, spec.input_dim);
    let _ = writeln!(out, "sigma_w2 = {}\nsigma_b2 = {}\nnoise_var = {}", spec.sigma_w2, spec.sigma_b2, spec.noise_var);
    match t {
        Some(t) => {
            let g = run.config.spectrum.grid().expect("validated");
            let _ = writeln!(out, "t = {t}\nn_grid = {}\ngrid_lo = {}\ngrid_hi = {}", g.len(), g.lo(), g.hi());
        }
        None => out.push_str("t = none\n"),
    }
    let _ = writeln!(out, "chains = {}\nwarmup = {}\ndraws = {}\nthin = {}", s.chains, s.warmup, s.draws, s.thin);
    let _ = writeln!(out, "target_accept = {}\nmax_depth = {}\ninitial_step = {}", s.target_accept, s.max_depth, s.initial_step);
    let labels: Vec<String> = seed.labels().iter().map(|(k, i)| format!("{k}:{i}")).collect();
    let _ = writeln!(out, "seed = {}\nseed_path = {}", seed.master(), labels.join("/"));
    out
}

fn run_unit(run: &Run, ds: &Dataset, unit: &Unit, dir: &Path) -> Result<(), CliError> {
    create_dir(dir)?;
    let row: MetricRow = match unit.kind {
        UnitKind::Nngp => {
            let kernel = nngp_kernel(run, ds.input_dim())?;
            let chosen = match (&run.config.nngp.select, ds.valid.as_ref().filter(|v| !v.is_empty())) {
                (Some(grid), Some(_)) => nngp_model_select(&hyper_grid(&kernel, grid)?, run.noise_var(), ds)?,
                _ => kernel,
            };
            let mut manifest = String::new();
            for (k, v) in chosen.to_manifest() {
                let _ = writeln!(manifest, "{k} = {v}");
            }
            let _ = writeln!(manifest, "noise_var = {}", run.noise_var());
            write_file(&dir.join("manifest.txt"), &manifest)?;
            evaluate_nngp(&GpModel::new(chosen, run.noise_var())?, ds)?
        }
        UnitKind::Bnn { width, t_index, t } => {
            let bnn = run.config.bnn.as_ref().expect("bnn unit without bnn config");
            let spec = bnn.spec(width, ds.input_dim(), run.noise_var())?;
            let grid = run.config.spectrum.grid()?;
            let seed = SeedPath::new(run.config.seed)
                .child("fit", unit.ds_index as u64)
                .child("width", width as u64)
                .child("t", t_index as u64);
            let filter = t.map(|t| FilterSetting { grid, t });
            let fit = fit_bnn(&spec, ds, filter, &run.sampler, &seed, 1)?;
            fit.draws.write_csv(&dir.join("draws.csv"))?;
            write_file(&dir.join("diagnostics.csv"), &diagnostics_csv(fit.draws.diagnostics()))?;
            write_file(&dir.join("manifest.txt"), &draws_manifest(&spec, run, t, &seed))?;
            fit.metrics
        }
    };
    write_file(&dir.join("metrics.csv"), &metrics_csv(&[row]))
}

pub fn cmd_fit(run: &Run) -> Result<(), CliError> {
    let suite = read_suite(run)?;
    if run.config.bnn.is_none() {
        nngp_kernel(run, 1)?;
    }
    create_dir(&run.out_dir)?;
    let ledger = Ledger::open(&run.out_dir.join("progress.ledger"))?;
    let units = work_units(run, suite.len());
    let dir_of = |u: &Unit| -> PathBuf { run.fits_dir().join(&suite[u.ds_index].id).join(u.name()) };
    let key_of = |u: &Unit| format!("{}/{}", suite[u.ds_index].id, u.name());

    let pending: Vec<&Unit> = units.iter().filter(|u| !ledger.is_done(&key_of(u))).collect();
    eprintln!("{} work units, {} already complete", units.len(), units.len() - pending.len());
    let execute = |u: &&Unit| -> Result<(), CliError> {
        let key = key_of(u);
        let outcome = run_unit(run, &suite[u.ds_index], u, &dir_of(u));
        match &outcome {
            Ok(()) => eprintln!("done {key}"),
            Err(e) => eprintln!("unit {key} failed: {e}"),
        }
        // Unit failures are recorded and the sweep continues; only a broken
        // ledger stops it.
        ledger.record(&key, &outcome.map_err(|e| e.to_string()))
    };
    if run.config.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(run.config.workers)
            .build()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
        pool.install(|| pending.par_iter().try_for_each(execute))?;
    } else {
        pending.iter().try_for_each(execute)?;
    }

    // Aggregate in canonical unit order so the file is independent of
    // scheduling.
    let ledger = Ledger::open(&run.out_dir.join("progress.ledger"))?;
    let mut rows = Vec::new();
    let mut failed = 0;
    for u in &units {
        if !ledger.is_done(&key_of(u)) {
            failed += 1;
            continue;
        }
        let path = dir_of(u).join("metrics.csv");
        rows.extend(parse_metrics_csv(&read_file(&path)?).map_err(|e| CliError::io(&path, e))?);
    }
    write_file(&run.out_dir.join("metrics.csv"), &metrics_csv(&rows))?;
    if failed > 0 {
        eprintln!("{failed} units failed; rerun to retry them");
    }
    Ok(())
}

pub fn cmd_report(run: &Run) -> Result<(), CliError> {
    let metrics_path = run.out_dir.join("metrics.csv");
    let rows = read_metrics_csv(&metrics_path).map_err(|e| match e {
        bnnwidth::Error::Io(io) => CliError::io(&metrics_path, io),
        other => other.into(),
    })?;
    let deltas = delta_table(&rows)?;
    write_file(&run.out_dir.join("delta.csv"), &delta_csv(&deltas))?;

    let seed = SeedPath::new(run.config.seed).child("report", 0);
    let noise = run.noise_var();
    let evaluator = GpModel::new(KernelSpec::rbf(run.config.ldl.evaluator_lengthscale)?, noise)?;
    let mut ldl = Vec::new();
    if let Some(bnn) = &run.config.bnn {
        for &w in run.config.ldl.widths.as_ref().unwrap_or(&bnn.widths) {
            let gen = LdlGenerator::BnnPrior(bnn.spec(w, 1, noise)?);
            ldl.extend(ldl_cdf_study(&gen, &evaluator, run.config.ldl.count, &seed.child("ldl_bnn", w as u64))?);
        }
    }
    let limiting = GpModel::new(nngp_kernel(run, 1)?, noise)?;
    ldl.extend(ldl_cdf_study(&LdlGenerator::GpPrior(limiting.clone()), &evaluator, run.config.ldl.count, &seed.child("ldl_nngp", 0))?);
    write_file(&run.out_dir.join("ldl.csv"), &ldl_csv(&ldl))?;

    write_file(&run.out_dir.join("spectrum.csv"), &spectrum_report(run, &limiting, &seed)?)?;
    eprintln!("wrote delta.csv, ldl.csv and spectrum.csv to {}", run.out_dir.display());
    Ok(())
}

fn spectrum_report(run: &Run, limiting: &GpModel, seed: &SeedPath) -> Result<String, CliError> {
    let sc = &run.config.spectrum;
    let grid = sc.grid()?;
    let ps = &sc.percentiles;
    let m = sc.draws;
    let mut out = format!("{SPECTRUM_HEADER}\n");

    if let Some(bnn) = &run.config.bnn {
        for &w in &bnn.widths {
            let spec = bnn.spec(w, 1, run.noise_var())?;
            let s = spectrum_study(SpectrumSource::BnnPrior(&spec), &grid, m, ps, &seed.child("prior_bnn", w as u64))?;
            spectrum_lines(&mut out, "prior", "bnn", w, &s);
        }
    }
    let s = spectrum_study(SpectrumSource::GpPrior(limiting), &grid, m, ps, &seed.child("prior_nngp", 0))?;
    spectrum_lines(&mut out, "prior", "nngp", 0, &s);

    if let Some(kernel) = &run.config.data.kernel {
        let gp = GpModel::new(kernel.build("data.kernel")?, run.noise_var())?;
        let t = run.config.data.filter_t.unwrap_or(0.0);
        let s = spectrum_study(SpectrumSource::DataGenerator(&gp, t), &grid, m, ps, &seed.child("data", 0))?;
        spectrum_lines(&mut out, "data", "generator", 0, &s);
    }

    // Posteriors of one dataset: the NNGP exactly, the BNN from stored draws
    // of its unfiltered fits (t = 0 counts as unfiltered).
    let suite = read_suite(run)?;
    let chosen = match &sc.dataset {
        Some(id) => suite
            .iter()
            .find(|d| &d.id == id)
            .ok_or_else(|| CliError::Config(format!("spectrum.dataset: no dataset `{id}`")))?,
        None => suite.first().ok_or_else(|| CliError::Config("empty suite".into()))?,
    };
    if chosen.input_dim() != 1 {
        return Ok(out);
    }
    if let Some(bnn) = &run.config.bnn {
        for &w in &bnn.widths {
            let name = match bnn.filter_settings().into_iter().find(|t| t.is_none_or(|t| t == 0.0)) {
                Some(None) => format!("bnn_w{w}_unfiltered"),
                Some(Some(t)) => format!("bnn_w{w}_t{t}"),
                None => continue,
            };
            let path = run.fits_dir().join(&chosen.id).join(name).join("draws.csv");
            if !path.exists() {
                continue;
            }
            let draws = PosteriorDraws::from_csv(&read_file(&path)?).map_err(|e| CliError::io(&path, e))?;
            let spec = bnn.spec(w, 1, run.noise_var())?;
            let s = spectrum_study(SpectrumSource::BnnDraws(&spec, draws.matrix()), &grid, 0, ps, seed)?;
            spectrum_lines(&mut out, "posterior", "bnn", w, &s);
        }
    }
    let post = limiting.fit(&chosen.train.x, &chosen.train.y)?;
    let s = spectrum_study(SpectrumSource::GpPosterior(&post), &grid, m, ps, &seed.child("posterior_nngp", 0))?;
    spectrum_lines(&mut out, "posterior", "nngp", 0, &s);
    Ok(out)
}
