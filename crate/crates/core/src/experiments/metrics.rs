use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::bnn::{predictive_function_draws, BnnSpec};
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::kernels::fmt_f64;
use crate::lpf::{lpf_function_draws, LowpassContext};
use crate::numeric::Matrix;
use crate::stats::{log_sum_exp, mean, std_error};

use super::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelTag {
    Bnn,
    Nngp,
}

impl ModelTag {
    pub fn name(self) -> &'static str {
        match self {
            ModelTag::Bnn => "bnn",
            ModelTag::Nngp => "nngp",
        }
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bnn" => Ok(ModelTag::Bnn),
            "nngp" => Ok(ModelTag::Nngp),
            other => Err(Error::Parse(format!("unknown model tag {other:?}"))),
        }
    }
}

/// Test-set scores of one model on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub dataset_id: String,
    pub model: ModelTag,
    /// Hidden width; 0 for the NNGP.
    pub width: usize,
    pub t: f64,
    pub nll: f64,
    pub mse: f64,
}

/// How the BNN predictive density is formed from function draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NllMode {
    /// Monte Carlo mixture of `N(f_m(x*), σ²_ε)`.
    #[default]
    Mixture,
    /// Single Gaussian with the draws' mean and variance plus `σ²_ε`.
    MomentMatched,
}

fn gaussian_nll(resid: f64, var: f64) -> f64 {
    0.5 * (2.0 * PI * var).ln() + resid * resid / (2.0 * var)
}

/// Mean NLL and MSE of function draws (one row per draw) against `targets`.
pub fn predictive_metrics(f_draws: &Matrix, targets: &[f64], noise_var: f64, mode: NllMode) -> Result<(f64, f64)> {
    let m = f_draws.rows();
    if m == 0 {
        return Err(Error::Empty("function draws"));
    }
    if f_draws.cols() != targets.len() {
        return Err(Error::Dimension(format!("{} predictions for {} targets", f_draws.cols(), targets.len())));
    }
    if targets.is_empty() {
        return Err(Error::Empty("test targets"));
    }
    let log_m = (m as f64).ln();
    let (mut nll, mut mse) = (0.0, 0.0);
    let mut col = vec![0.0; m];
    for (j, &y) in targets.iter().enumerate() {
        for (i, c) in col.iter_mut().enumerate() {
            *c = f_draws[(i, j)];
        }
        let mu = mean(&col);
        mse += (mu - y).powi(2);
        nll += match mode {
            NllMode::Mixture => {
                let terms: Vec<f64> = col.iter().map(|f| -gaussian_nll(y - f, noise_var)).collect();
                log_m - log_sum_exp(&terms)
            }
            NllMode::MomentMatched => {
                let var = col.iter().map(|f| (f - mu).powi(2)).sum::<f64>() / m as f64;
                gaussian_nll(y - mu, var + noise_var)
            }
        };
    }
    let n = targets.len() as f64;
    Ok((nll / n, mse / n))
}

/// Scores parameter draws on the test split. With a filter, the network is
/// read through the low-pass map at the snapped test inputs.
pub fn evaluate_bnn(
    spec: &BnnSpec,
    draws: &Matrix,
    dataset: &Dataset,
    filter: Option<&LowpassContext>,
    mode: NllMode,
) -> Result<MetricRow> {
    let (f, t) = match filter {
        Some(ctx) => (lpf_function_draws(spec, draws, &ctx.reselect(&dataset.test.x)?)?, ctx.t()),
        None => (predictive_function_draws(spec, draws, &dataset.test.x)?, 0.0),
    };
    let (nll, mse) = predictive_metrics(&f, dataset.test.targets(), spec.noise_var, mode)?;
    Ok(MetricRow { dataset_id: dataset.id.clone(), model: ModelTag::Bnn, width: spec.width, t, nll, mse })
}

/// Exact GP predictive scores on the test split.
pub fn evaluate_nngp(model: &GpModel, dataset: &Dataset) -> Result<MetricRow> {
    let posterior = model.fit(&dataset.train.x, &dataset.train.y)?;
    let pred = posterior.predict(&dataset.test.x)?;
    let targets = dataset.test.targets();
    let (mut nll, mut mse) = (0.0, 0.0);
    for ((mu, var), y) in pred.mean.iter().zip(pred.variances()).zip(targets) {
        mse += (mu - y).powi(2);
        nll += gaussian_nll(y - mu, var + model.noise_var);
    }
    let n = targets.len() as f64;
    Ok(MetricRow { dataset_id: dataset.id.clone(), model: ModelTag::Nngp, width: 0, t: 0.0, nll: nll / n, mse: mse / n })
}

/// Paired BNN-minus-NNGP differences for one (width, t) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSummary {
    pub width: usize,
    pub t: f64,
    pub delta_nll: f64,
    pub delta_nll_se: f64,
    pub delta_mse: f64,
    pub delta_mse_se: f64,
    pub s: usize,
}

/// Pairs `bnn` rows (all one width and t) with `nngp` rows by dataset id.
pub fn delta_metrics(bnn: &[MetricRow], nngp: &[MetricRow]) -> Result<DeltaSummary> {
    let first = bnn.first().ok_or(Error::Empty("bnn metric rows"))?;
    if bnn.iter().any(|r| r.width != first.width || r.t != first.t) {
        return Err(Error::InvalidArgument("bnn rows mix widths or thresholds".into()));
    }
    let mut by_id: BTreeMap<&str, &MetricRow> = BTreeMap::new();
    for r in nngp {
        if by_id.insert(&r.dataset_id, r).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate nngp row for {}", r.dataset_id)));
        }
    }
    let bnn_ids: BTreeMap<&str, &MetricRow> = bnn.iter().map(|r| (r.dataset_id.as_str(), r)).collect();
    if bnn_ids.len() != bnn.len() {
        return Err(Error::InvalidArgument("duplicate bnn rows for one dataset".into()));
    }
    let unpaired: Vec<String> = bnn_ids
        .keys()
        .filter(|id| !by_id.contains_key(*id))
        .chain(by_id.keys().filter(|id| !bnn_ids.contains_key(*id)))
        .map(|id| id.to_string())
        .collect();
    if !unpaired.is_empty() {
        return Err(Error::Unpaired(unpaired));
    }
    let (mut dn, mut dm) = (Vec::new(), Vec::new());
    for (id, b) in &bnn_ids {
        let g = by_id[id];
        dn.push(b.nll - g.nll);
        dm.push(b.mse - g.mse);
    }
    let se = |v: &[f64]| if v.len() > 1 { std_error(v) } else { 0.0 };
    Ok(DeltaSummary {
        width: first.width,
        t: first.t,
        delta_nll: mean(&dn),
        delta_nll_se: se(&dn),
        delta_mse: mean(&dm),
        delta_mse_se: se(&dm),
        s: dn.len(),
    })
}

/// One summary per (width, t) cell of the BNN rows, ordered by width then t.
pub fn delta_table(rows: &[MetricRow]) -> Result<Vec<DeltaSummary>> {
    let nngp: Vec<MetricRow> = rows.iter().filter(|r| r.model == ModelTag::Nngp).cloned().collect();
    let mut cells: BTreeMap<(usize, u64), Vec<MetricRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.model == ModelTag::Bnn) {
        cells.entry((r.width, r.t.to_bits())).or_default().push(r.clone());
    }
    if cells.is_empty() {
        return Err(Error::Unpaired(vec!["no bnn rows".into()]));
    }
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells.values() {
        out.push(delta_metrics(cell, &nngp)?);
    }
    out.sort_by(|a, b| a.width.cmp(&b.width).then(a.t.total_cmp(&b.t)));
    Ok(out)
}

pub const METRICS_HEADER: &str = "dataset_id,model,width,t,nll,mse";
pub const DELTA_HEADER: &str = "width,t,delta_nll,delta_nll_se,delta_mse,delta_mse_se,S";

pub fn metric_line(r: &MetricRow) -> String {
    format!("{},{},{},{},{},{}", r.dataset_id, r.model, r.width, fmt_f64(r.t), fmt_f64(r.nll), fmt_f64(r.mse))
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        out.push_str(&metric_line(r));
        out.push('\n');
    }
    out
}

fn field<T: FromStr>(record: &csv::StringRecord, i: usize, what: &str) -> Result<T> {
    record
        .get(i)
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad or missing `{what}` in row {:?}", record.iter().collect::<Vec<_>>())))
}

fn check_header(reader: &mut csv::Reader<&[u8]>, expected: &str) -> Result<()> {
    let found: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    if found.join(",") != expected {
        return Err(Error::Parse(format!("expected header `{expected}`, found `{}`", found.join(","))));
    }
    Ok(())
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    check_header(&mut reader, METRICS_HEADER)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(MetricRow {
            dataset_id: record.get(0).unwrap_or_default().trim().to_owned(),
            model: field(&record, 1, "model")?,
            width: field(&record, 2, "width")?,
            t: field(&record, 3, "t")?,
            nll: field(&record, 4, "nll")?,
            mse: field(&record, 5, "mse")?,
        });
    }
    Ok(rows)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    parse_metrics_csv(&std::fs::read_to_string(path)?)
}

pub fn delta_csv(rows: &[DeltaSummary]) -> String {
    let mut out = format!("{DELTA_HEADER}\n");
    for d in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            d.width,
            fmt_f64(d.t),
            fmt_f64(d.delta_nll),
            fmt_f64(d.delta_nll_se),
            fmt_f64(d.delta_mse),
            fmt_f64(d.delta_mse_se),
            d.s
        );
    }
    out
}

pub fn parse_delta_csv(text: &str) -> Result<Vec<DeltaSummary>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    check_header(&mut reader, DELTA_HEADER)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(DeltaSummary {
            width: field(&record, 0, "width")?,
            t: field(&record, 1, "t")?,
            delta_nll: field(&record, 2, "delta_nll")?,
            delta_nll_se: field(&record, 3, "delta_nll_se")?,
            delta_mse: field(&record, 4, "delta_mse")?,
            delta_mse_se: field(&record, 5, "delta_mse_se")?,
            s: field(&record, 6, "S")?,
        });
    }
    Ok(rows)
}
