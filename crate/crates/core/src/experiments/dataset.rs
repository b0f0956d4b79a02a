use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::kernels::{fmt_f64, KernelSpec};
use crate::lpf::{lpf_gp_dataset, GridSpec};
use crate::numeric::{normal_stream, Matrix, SeedPath};

pub const N_TRAIN_RANDOM: usize = 20;
pub const N_TEST: usize = 100;
pub const DEFAULT_SIGMA_EPS: f64 = 0.1;

/// Ordered `key = value` header carried by every dataset file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_owned(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| v.trim().parse().map_err(|_| Error::Parse(format!("manifest `{key}`: bad number {v:?}"))))
            .transpose()
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Generator kernel, when the dataset is synthetic.
    pub fn kernel(&self) -> Result<Option<KernelSpec>> {
        if self.get("kernel").is_none() {
            return Ok(None);
        }
        let map = self.entries.iter().cloned().collect();
        KernelSpec::from_manifest(&map).map(Some)
    }
}

/// One split of a dataset. `f` holds noiseless targets where known.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub f: Option<Vec<f64>>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    /// Noiseless targets when available, else the observations.
    pub fn targets(&self) -> &[f64] {
        self.f.as_deref().unwrap_or(&self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub id: String,
    pub train: Split,
    pub test: Split,
    pub valid: Option<Split>,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn input_dim(&self) -> usize {
        self.train.x.cols()
    }

    /// Observation noise standard deviation recorded by the generator.
    pub fn sigma_eps(&self) -> Result<Option<f64>> {
        self.manifest.get_f64("sigma_eps")
    }

    /// Filter threshold the data was generated with (0 when unfiltered).
    pub fn filter_t(&self) -> Result<f64> {
        Ok(self.manifest.get_f64("t")?.unwrap_or(0.0))
    }

    /// Serialises to the manifest-plus-CSV text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "id = {}", self.id);
        for (k, v) in self.manifest.entries() {
            if k != "id" {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        let d = self.input_dim().max(self.test.x.cols());
        out.push_str("role");
        for j in 0..d {
            let _ = write!(out, ",x{j}");
        }
        out.push_str(",y,f\n");
        let mut emit = |role: &str, split: &Split| {
            for i in 0..split.len() {
                out.push_str(role);
                for v in split.x.row(i) {
                    let _ = write!(out, ",{}", fmt_f64(*v));
                }
                let _ = write!(out, ",{},", fmt_f64(split.y[i]));
                if let Some(f) = &split.f {
                    out.push_str(&fmt_f64(f[i]));
                }
                out.push('\n');
            }
        };
        emit("train", &self.train);
        emit("test", &self.test);
        if let Some(v) = &self.valid {
            emit("valid", v);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut manifest = Manifest::default();
        let mut id = String::new();
        let mut lines = text.lines();
        let header = loop {
            let line = lines.next().ok_or_else(|| Error::Parse("dataset file has no CSV header".into()))?;
            if line.starts_with("role,") {
                break line;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Parse(format!("bad manifest line {line:?}")))?;
            if k == "id" {
                id = v.to_owned();
            } else {
                manifest.set(k, v);
            }
        };
        let d = header.split(',').count() - 3;
        let mut parts: [(Vec<f64>, Vec<f64>, Vec<Option<f64>>); 3] = Default::default();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != d + 3 {
                return Err(Error::Parse(format!("row {}: expected {} fields", lineno + 1, d + 3)));
            }
            let slot = match cols[0] {
                "train" => 0,
                "test" => 1,
                "valid" => 2,
                other => return Err(Error::Parse(format!("unknown role {other:?}"))),
            };
            let num = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::Parse(format!("row {}: bad number {s:?}", lineno + 1)))
            };
            for c in &cols[1..=d] {
                parts[slot].0.push(num(c)?);
            }
            parts[slot].1.push(num(cols[d + 1])?);
            let f = cols[d + 2];
            parts[slot].2.push(if f.is_empty() { None } else { Some(num(f)?) });
        }
        let [train, test, valid] = parts;
        let build = |(x, y, f): (Vec<f64>, Vec<f64>, Vec<Option<f64>>)| -> Result<Split> {
            let f = if !f.is_empty() && f.iter().all(Option::is_some) {
                Some(f.into_iter().flatten().collect())
            } else {
                None
            };
            Ok(Split { x: Matrix::new(y.len(), d, x)?, y, f })
        };
        let valid = if valid.1.is_empty() { None } else { Some(build(valid)?) };
        Ok(Self { id, train: build(train)?, test: build(test)?, valid, manifest })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

/// Training design: `N_TRAIN_RANDOM` points uniform on `[-3,-1] ∪ [1,3]`
/// (interval chosen with probability ½) followed by `x = 0`.
pub fn synthetic_train_design(seed: &SeedPath) -> Matrix {
    let mut rng = seed.rng();
    let mut x: Vec<f64> = (0..N_TRAIN_RANDOM)
        .map(|_| {
            let u: f64 = rng.random_range(1.0..=3.0);
            if rng.random_bool(0.5) {
                -u
            } else {
                u
            }
        })
        .collect();
    x.push(0.0);
    Matrix::new(x.len(), 1, x).expect("finite design")
}

/// `N_TEST` points uniform on `[-3, 3]`.
pub fn synthetic_test_design(seed: &SeedPath) -> Matrix {
    let mut rng = seed.rng();
    let x: Vec<f64> = (0..N_TEST).map(|_| rng.random_range(-3.0..=3.0)).collect();
    Matrix::new(x.len(), 1, x).expect("finite design")
}

pub fn dataset_id(index: usize) -> String {
    format!("ds{index:04}")
}

/// `count` synthetic datasets drawn from a zero-mean GP with kernel `spec`.
///
/// Each dataset takes one joint noiseless draw over its 21 training and 100
/// test inputs; only the training targets get `N(0, σ_ε²)` noise.
pub fn generate_synthetic_suite(spec: KernelSpec, count: usize, sigma_eps: f64, seed: &SeedPath) -> Result<Vec<Dataset>> {
    if count == 0 {
        return Err(Error::InvalidArgument("suite size must be at least 1".into()));
    }
    let gp = GpModel::new(spec, sigma_eps * sigma_eps)?;
    (0..count)
        .map(|s| {
            let unit = seed.child("dataset", s as u64);
            let x_train = synthetic_train_design(&unit.child("train_design", 0));
            let x_test = synthetic_test_design(&unit.child("test_design", 0));
            let all = x_train.vstack(&x_test)?;
            let f = gp.prior_sample(&all, false, &unit.child("function", 0))?;
            let (f_train, f_test) = f.split_at(x_train.rows());
            let y_train: Vec<f64> = f_train
                .iter()
                .zip(normal_stream(&unit.child("noise", 0)))
                .map(|(v, z)| v + sigma_eps * z)
                .collect();
            let mut manifest = Manifest::default();
            for (k, v) in spec.to_manifest() {
                manifest.set(&k, v);
            }
            manifest.set("seed", seed.master().to_string());
            manifest.set("sigma_eps", fmt_f64(sigma_eps));
            manifest.set("t", fmt_f64(0.0));
            Ok(Dataset {
                id: dataset_id(s),
                train: Split { x: x_train, y: y_train, f: Some(f_train.to_vec()) },
                test: Split { x: x_test, y: f_test.to_vec(), f: Some(f_test.to_vec()) },
                valid: None,
                manifest,
            })
        })
        .collect()
}

/// Like [`generate_synthetic_suite`], but every function is low-pass
/// filtered on `grid` with threshold `t` and inputs are snapped to it.
pub fn generate_filtered_suite(
    spec: KernelSpec,
    count: usize,
    sigma_eps: f64,
    grid: &GridSpec,
    t: f64,
    seed: &SeedPath,
) -> Result<Vec<Dataset>> {
    if count == 0 {
        return Err(Error::InvalidArgument("suite size must be at least 1".into()));
    }
    let gp = GpModel::new(spec, sigma_eps * sigma_eps)?;
    (0..count)
        .map(|s| {
            let unit = seed.child("dataset", s as u64);
            let x_train = synthetic_train_design(&unit.child("train_design", 0));
            let x_test = synthetic_test_design(&unit.child("test_design", 0));
            let mut ds = lpf_gp_dataset(&gp, grid, t, &x_train, &x_test, &unit)?;
            ds.id = dataset_id(s);
            ds.manifest.set("seed", seed.master().to_string());
            Ok(ds)
        })
        .collect()
}

/// Fractions for the train / test / validation split of tabular data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub test: f64,
    pub valid: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.8, test: 0.1, valid: 0.1 }
    }
}

/// Reads a numeric CSV with a header, shuffles rows with `seed` and splits
/// them. With `standardize`, every column (inputs and target) is shifted and
/// scaled by the training split's mean and standard deviation.
pub fn load_tabular(
    path: &Path,
    target_column: &str,
    ratios: SplitRatios,
    standardize: bool,
    seed: &SeedPath,
) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let target = headers
        .iter()
        .position(|h| h.trim() == target_column)
        .ok_or_else(|| Error::Parse(format!("no column named {target_column:?}")))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, v)| {
                v.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
                    Error::Parse(format!("row {}, column {:?}: non-numeric value {v:?}", r + 1, &headers[c]))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != headers.len() {
            return Err(Error::Parse(format!("row {} has {} fields", r + 1, row.len())));
        }
        rows.push(row);
    }
    let n = rows.len();
    if n < 3 {
        return Err(Error::Parse(format!("need at least 3 rows, found {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed.rng());
    let total = ratios.train + ratios.test + ratios.valid;
    let n_train = ((ratios.train / total) * n as f64).round() as usize;
    let n_test = ((ratios.test / total) * n as f64).round() as usize;
    let n_train = n_train.clamp(1, n - 2);
    let n_test = n_test.clamp(1, n - n_train - 1);

    let width = headers.len();
    if standardize {
        for c in 0..width {
            let col: Vec<f64> = order[..n_train].iter().map(|&i| rows[i][c]).collect();
            let m = crate::stats::mean(&col);
            let sd = crate::stats::variance(&col).sqrt();
            let sd = if sd > 0.0 { sd } else { 1.0 };
            for row in &mut rows {
                row[c] = (row[c] - m) / sd;
            }
        }
    }
    let build = |idx: &[usize]| -> Result<Split> {
        let mut x = Vec::with_capacity(idx.len() * (width - 1));
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            for (c, v) in rows[i].iter().enumerate() {
                if c == target {
                    y.push(*v);
                } else {
                    x.push(*v);
                }
            }
        }
        Ok(Split { x: Matrix::new(idx.len(), width - 1, x)?, y, f: None })
    };
    let mut manifest = Manifest::default();
    manifest.set("source", path.display().to_string());
    manifest.set("target", target_column);
    manifest.set("seed", seed.master().to_string());
    manifest.set("standardize", standardize.to_string());
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Dataset {
        id,
        train: build(&order[..n_train])?,
        test: build(&order[n_train..n_train + n_test])?,
        valid: Some(build(&order[n_train + n_test..])?),
        manifest,
    })
}
