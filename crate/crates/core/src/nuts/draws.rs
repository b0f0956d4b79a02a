use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::ChainDiagnostics;
use crate::error::{Error, Result};
use crate::kernels::fmt_f64;
use crate::numeric::Matrix;

/// Retained MCMC draws with their chain of origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    draws: Matrix,
    chain_of_draw: Vec<usize>,
    diagnostics: Vec<ChainDiagnostics>,
}

impl PosteriorDraws {
    pub fn new(draws: Matrix, chain_of_draw: Vec<usize>, diagnostics: Vec<ChainDiagnostics>) -> Result<Self> {
        if draws.rows() == 0 {
            return Err(Error::Empty("posterior draws"));
        }
        if chain_of_draw.len() != draws.rows() {
            return Err(Error::Dimension(format!(
                "{} chain ids for {} draws",
                chain_of_draw.len(),
                draws.rows()
            )));
        }
        let n_chains = chain_of_draw.iter().max().map_or(0, |m| m + 1);
        if (0..n_chains).any(|c| !chain_of_draw.contains(&c)) {
            return Err(Error::InvalidArgument("chain ids are not contiguous from 0".into()));
        }
        Ok(Self { draws, chain_of_draw, diagnostics })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.draws.cols()
    }

    pub fn chain_of_draw(&self) -> &[usize] {
        &self.chain_of_draw
    }

    pub fn n_chains(&self) -> usize {
        self.chain_of_draw.iter().max().map_or(0, |m| m + 1)
    }

    pub fn diagnostics(&self) -> &[ChainDiagnostics] {
        &self.diagnostics
    }

    /// Values of parameter `param`, one vector per chain.
    pub fn chains_of(&self, param: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_chains()];
        for (r, &c) in self.chain_of_draw.iter().enumerate() {
            out[c].push(self.draws[(r, param)]);
        }
        out
    }

    pub fn total_divergences(&self) -> usize {
        self.diagnostics.iter().map(|d| d.divergences).sum()
    }

    /// `chain,draw,theta_0,…` with one row per retained draw.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("chain,draw");
        for j in 0..self.dim() {
            let _ = write!(out, ",theta_{j}");
        }
        out.push('\n');
        let mut counters = vec![0usize; self.n_chains()];
        for (r, &c) in self.chain_of_draw.iter().enumerate() {
            let _ = write!(out, "{c},{}", counters[c]);
            counters[c] += 1;
            for v in self.draws.row(r) {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`to_csv`](Self::to_csv) output; diagnostics are not stored there.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty draws file".into()))?;
        let p = header.split(',').count().saturating_sub(2);
        let mut data = Vec::new();
        let mut chains = Vec::new();
        for (i, line) in lines.filter(|l| !l.is_empty()).enumerate() {
            let mut fields = line.split(',');
            let chain: usize = fields
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| Error::Parse(format!("draw row {}: bad chain id", i + 1)))?;
            fields.next();
            let before = data.len();
            for f in fields {
                data.push(f.parse::<f64>().map_err(|_| Error::Parse(format!("draw row {}: bad value {f:?}", i + 1)))?);
            }
            if data.len() - before != p {
                return Err(Error::Parse(format!("draw row {} has {} values, expected {p}", i + 1, data.len() - before)));
            }
            chains.push(chain);
        }
        Self::new(Matrix::new(chains.len(), p, data)?, chains, Vec::new())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}
