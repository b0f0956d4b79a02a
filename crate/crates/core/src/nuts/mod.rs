//! No-U-Turn sampler with multinomial trajectory sampling, an identity mass
//! matrix, and dual-averaging step-size adaptation during warmup.
//!
//! Chains are independent work units seeded from their own [`SeedPath`]
//! child, so results do not depend on how many workers run them.

mod adapt;
mod diagnostics;
mod draws;

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

pub use adapt::{adapt_step_size, DualAveraging};
pub use diagnostics::{ess, ess_bulk, split_rhat};
pub use draws::PosteriorDraws;

use crate::error::{Error, Result};
use crate::numeric::{Matrix, SeedPath};

/// Energy error beyond which a transition is flagged divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// A differentiable log density. Must be callable from several chains at once.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Returns `log p(θ)` and writes `∇ log p(θ)` into `grad`.
    fn logp_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    /// Post-warmup iterations per chain, before thinning.
    pub draws: usize,
    pub thin: usize,
    pub target_accept: f64,
    pub max_depth: usize,
    pub initial_step: f64,
}

impl SamplerConfig {
    /// Four chains of 1,000 warmup and 2,500 kept iterations, thinned by 5.
    pub fn desk_scale() -> Self {
        Self { chains: 4, warmup: 1_000, draws: 2_500, thin: 5, target_accept: 0.8, max_depth: 10, initial_step: 0.1 }
    }

    /// Four chains of 10,000 warmup and 40,000 kept iterations each,
    /// thinned by 5.
    pub fn full_scale() -> Self {
        Self { warmup: 10_000, draws: 40_000, ..Self::desk_scale() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.draws == 0 || self.thin == 0 || self.max_depth == 0 {
            return Err(Error::InvalidArgument("chains, draws, thin and max_depth must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidArgument(format!("target acceptance {} not in (0, 1)", self.target_accept)));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::InvalidArgument("initial step size must be positive".into()));
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn kept_per_chain(&self) -> usize {
        self.draws / self.thin
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::desk_scale()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainDiagnostics {
    pub chain: usize,
    pub mean_accept: f64,
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub step_size: f64,
    pub mean_tree_depth: f64,
    pub n_leapfrog: u64,
    /// Smallest bulk ESS over parameters, from this chain's retained draws.
    pub min_ess: f64,
    /// Largest split-R̂ over parameters, from this chain's retained draws.
    pub max_rhat: f64,
}

/// Diagnostics CSV: `chain,mean_accept,divergences,step_size,min_ess,max_rhat`.
pub fn diagnostics_csv(diags: &[ChainDiagnostics]) -> String {
    let mut out = String::from("chain,mean_accept,divergences,step_size,min_ess,max_rhat\n");
    for d in diags {
        let _ = writeln!(
            out,
            "{},{:?},{},{:?},{:?},{:?}",
            d.chain, d.mean_accept, d.divergences, d.step_size, d.min_ess, d.max_rhat
        );
    }
    out
}

/// Starting point for each chain.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Every chain starts here.
    Explicit(Vec<f64>),
    /// Independent `N(0, (scale·sd_i)²)` per coordinate, per chain.
    Gaussian { sd: Vec<f64>, scale: f64 },
}

/// Default scale applied to prior draws when initialising BNN chains.
pub const DEFAULT_INIT_SCALE: f64 = 0.1;

pub fn initialize_chain(init: &Init, seed: &SeedPath, chain: usize) -> Vec<f64> {
    match init {
        Init::Explicit(theta) => theta.clone(),
        Init::Gaussian { sd, scale } => {
            let mut rng = seed.child("init", chain as u64).rng();
            sd.iter()
                .map(|s| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * s * z
                })
                .collect()
        }
    }
}

/// Position, momentum, gradient and log density at one phase-space point.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl PhasePoint {
    pub fn new<T: LogDensity + ?Sized>(target: &T, q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        let mut grad = vec![0.0; q.len()];
        let logp = target.logp_grad(&q, &mut grad)?;
        Ok(Self { q, p, grad, logp })
    }

    pub fn hamiltonian(&self) -> f64 {
        -self.logp + 0.5 * self.p.iter().map(|v| v * v).sum::<f64>()
    }
}

/// One leapfrog step of size `eps` (negative to integrate backwards).
pub fn leapfrog<T: LogDensity + ?Sized>(target: &T, z: &mut PhasePoint, eps: f64) -> Result<()> {
    let half = 0.5 * eps;
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += half * g;
    }
    for (q, p) in z.q.iter_mut().zip(&z.p) {
        *q += eps * p;
    }
    z.logp = target.logp_grad(&z.q, &mut z.grad)?;
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += half * g;
    }
    Ok(())
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// Generalised no-U-turn check with an identity metric.
fn no_u_turn(p_minus: &[f64], p_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_plus, rho) > 0.0 && dot(p_minus, rho) > 0.0
}

/// Position, gradient and log density of a candidate draw.
#[derive(Debug, Clone)]
struct Proposal {
    q: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

impl Proposal {
    fn zeros(dim: usize) -> Self {
        Self { q: vec![0.0; dim], grad: vec![0.0; dim], logp: 0.0 }
    }

    fn set_from(&mut self, z: &PhasePoint) {
        self.q.copy_from_slice(&z.q);
        self.grad.copy_from_slice(&z.grad);
        self.logp = z.logp;
    }

    fn set(&mut self, other: &Proposal) {
        self.q.copy_from_slice(&other.q);
        self.grad.copy_from_slice(&other.grad);
        self.logp = other.logp;
    }
}

/// Summary of one subtree, with edge momenta in integration order.
#[derive(Debug, Clone)]
struct Subtree {
    proposal: Proposal,
    log_sum_w: f64,
    rho: Vec<f64>,
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
}

impl Subtree {
    fn zeros(dim: usize) -> Self {
        Self {
            proposal: Proposal::zeros(dim),
            log_sum_w: f64::NEG_INFINITY,
            rho: vec![0.0; dim],
            p_beg: vec![0.0; dim],
            p_end: vec![0.0; dim],
        }
    }
}

/// Buffers for the two halves of a subtree at one depth.
#[derive(Debug, Clone, Default)]
struct Level {
    halves: Option<Box<(Subtree, Subtree)>>,
    ext: Vec<f64>,
}

struct TreeStats {
    n_leapfrog: u64,
    sum_accept: f64,
    divergent: bool,
}

struct Builder<'a, T: LogDensity + ?Sized> {
    target: &'a T,
    eps: f64,
    h0: f64,
    rng: &'a mut ChaCha8Rng,
    stats: TreeStats,
    levels: Vec<Level>,
}

impl<T: LogDensity + ?Sized> Builder<'_, T> {
    /// Extends `z` by `2^depth` leapfrog steps in direction `dir`, writing
    /// the subtree summary into `out`. Returns false when the subtree
    /// diverged or turned back on itself.
    fn build(&mut self, z: &mut PhasePoint, depth: usize, dir: f64, out: &mut Subtree) -> Result<bool> {
        if depth == 0 {
            leapfrog(self.target, z, dir * self.eps)?;
            self.stats.n_leapfrog += 1;
            let mut h = z.hamiltonian();
            if !h.is_finite() {
                h = f64::INFINITY;
            }
            let delta = self.h0 - h;
            self.stats.sum_accept += if delta > 0.0 { 1.0 } else { delta.exp() };
            if h - self.h0 > DIVERGENCE_THRESHOLD {
                self.stats.divergent = true;
                return Ok(false);
            }
            out.proposal.set_from(z);
            out.log_sum_w = delta;
            out.rho.copy_from_slice(&z.p);
            out.p_beg.copy_from_slice(&z.p);
            out.p_end.copy_from_slice(&z.p);
            return Ok(true);
        }
        let dim = z.q.len();
        let mut level = std::mem::take(&mut self.levels[depth]);
        let halves = level.halves.get_or_insert_with(|| Box::new((Subtree::zeros(dim), Subtree::zeros(dim))));
        let (init, fin) = &mut **halves;
        let valid = self.build(z, depth - 1, dir, init)? && self.build(z, depth - 1, dir, fin)?;
        let valid = valid && {
            let log_sum_w = log_add_exp(init.log_sum_w, fin.log_sum_w);
            let take_final =
                fin.log_sum_w > log_sum_w || self.rng.random::<f64>() < (fin.log_sum_w - log_sum_w).exp();
            out.proposal.set(if take_final { &fin.proposal } else { &init.proposal });
            out.log_sum_w = log_sum_w;
            for ((r, a), b) in out.rho.iter_mut().zip(&init.rho).zip(&fin.rho) {
                *r = a + b;
            }
            out.p_beg.copy_from_slice(&init.p_beg);
            out.p_end.copy_from_slice(&fin.p_end);

            let ext = &mut level.ext;
            ext.resize(dim, 0.0);
            let mut ok = no_u_turn(&init.p_beg, &fin.p_end, &out.rho);
            for ((e, a), b) in ext.iter_mut().zip(&init.rho).zip(&fin.p_beg) {
                *e = a + b;
            }
            ok &= no_u_turn(&init.p_beg, &fin.p_beg, ext);
            for ((e, a), b) in ext.iter_mut().zip(&fin.rho).zip(&init.p_end) {
                *e = a + b;
            }
            ok && no_u_turn(&init.p_end, &fin.p_end, ext)
        };
        self.levels[depth] = level;
        Ok(valid)
    }
}

/// Per-transition statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionStats {
    pub accept_stat: f64,
    pub divergent: bool,
    pub depth: usize,
    pub n_leapfrog: u64,
}

/// One NUTS transition from `current` with step size `eps`; `current` is
/// replaced by the selected point.
pub fn transition<T: LogDensity + ?Sized>(
    target: &T,
    current: &mut PhasePoint,
    eps: f64,
    max_depth: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TransitionStats> {
    let dim = current.q.len();
    for p in current.p.iter_mut() {
        *p = StandardNormal.sample(&mut *rng);
    }
    let h0 = current.hamiltonian();

    let mut fwd = current.clone();
    let mut bck = current.clone();
    // Momenta at the backward and forward ends of the whole trajectory.
    let mut p_left = current.p.clone();
    let mut p_right = current.p.clone();
    let mut rho = current.p.clone();
    let mut rho_old = vec![0.0; dim];
    let mut ext = vec![0.0; dim];
    let mut sample = Proposal::zeros(dim);
    sample.set_from(current);
    let mut sub = Subtree::zeros(dim);
    let mut log_sum_w = 0.0;

    let mut builder = Builder {
        target,
        eps,
        h0,
        rng,
        stats: TreeStats { n_leapfrog: 0, sum_accept: 0.0, divergent: false },
        levels: vec![Level::default(); max_depth],
    };
    let mut depth = 0;
    while depth < max_depth {
        let forward = builder.rng.random::<f64>() > 0.5;
        let valid = if forward {
            builder.build(&mut fwd, depth, 1.0, &mut sub)?
        } else {
            builder.build(&mut bck, depth, -1.0, &mut sub)?
        };
        if !valid {
            break;
        }
        depth += 1;

        if sub.log_sum_w > log_sum_w || builder.rng.random::<f64>() < (sub.log_sum_w - log_sum_w).exp() {
            sample.set(&sub.proposal);
        }
        log_sum_w = log_add_exp(log_sum_w, sub.log_sum_w);
        rho_old.copy_from_slice(&rho);
        add_into(&mut rho, &sub.rho);

        // The new subtree's first point sits next to the old trajectory and
        // its last point is the new outer end.
        let (old_edge, outer_old) = if forward { (&p_right, &p_left) } else { (&p_left, &p_right) };
        let mut ok = no_u_turn(outer_old, &sub.p_end, &rho);
        for ((e, a), b) in ext.iter_mut().zip(&rho_old).zip(&sub.p_beg) {
            *e = a + b;
        }
        ok &= no_u_turn(outer_old, &sub.p_beg, &ext);
        for ((e, a), b) in ext.iter_mut().zip(&sub.rho).zip(old_edge.iter()) {
            *e = a + b;
        }
        ok &= no_u_turn(old_edge, &sub.p_end, &ext);

        if forward {
            p_right.copy_from_slice(&sub.p_end);
        } else {
            p_left.copy_from_slice(&sub.p_end);
        }
        if !ok {
            break;
        }
    }
    let stats = builder.stats;
    current.q.copy_from_slice(&sample.q);
    current.grad.copy_from_slice(&sample.grad);
    current.logp = sample.logp;
    let accept_stat = if stats.n_leapfrog > 0 { stats.sum_accept / stats.n_leapfrog as f64 } else { 0.0 };
    Ok(TransitionStats { accept_stat, divergent: stats.divergent, depth, n_leapfrog: stats.n_leapfrog })
}

/// Heuristic starting step: doubles or halves until the one-step
/// acceptance probability crosses ½.
fn find_reasonable_step<T: LogDensity + ?Sized>(
    target: &T,
    start: &PhasePoint,
    initial: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut eps = initial;
    let p: Vec<f64> = (0..start.q.len()).map(|_| StandardNormal.sample(&mut *rng)).collect();
    let base = PhasePoint { p, ..start.clone() };
    let h0 = base.hamiltonian();
    let log_accept = |eps: f64| -> Result<f64> {
        let mut z = base.clone();
        leapfrog(target, &mut z, eps)?;
        let h = z.hamiltonian();
        Ok(if h.is_finite() { h0 - h } else { f64::NEG_INFINITY })
    };
    let half = 0.5f64.ln();
    let direction = if log_accept(eps)? > half { 1.0 } else { -1.0 };
    for _ in 0..100 {
        let la = log_accept(eps)?;
        if (direction == 1.0 && !(la > half)) || (direction == -1.0 && la > half) {
            break;
        }
        eps = if direction == 1.0 { eps * 2.0 } else { eps * 0.5 };
        if !(1e-12..=1e6).contains(&eps) {
            break;
        }
    }
    Ok(eps.clamp(1e-12, 1e6))
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    diagnostics: ChainDiagnostics,
}

fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    init: &Init,
    seed: &SeedPath,
    chain: usize,
) -> Result<ChainOutput> {
    let q0 = initialize_chain(init, seed, chain);
    if q0.len() != target.dim() {
        return Err(Error::Dimension(format!("initial point of length {} for dimension {}", q0.len(), target.dim())));
    }
    let mut rng = seed.child("chain", chain as u64).rng();
    let mut current = PhasePoint::new(target, q0, vec![0.0; target.dim()])?;
    if !current.logp.is_finite() || current.grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Sampler(format!("chain {chain}: target is not finite at the initial point")));
    }

    let mut eps = config.initial_step;
    if config.warmup > 0 {
        eps = find_reasonable_step(target, &current, eps, &mut rng)?;
    }
    let mut adapter = DualAveraging::new(eps, config.target_accept);
    let mut warmup_divergences = 0;
    for _ in 0..config.warmup {
        let tr = transition(target, &mut current, eps, config.max_depth, &mut rng)?;
        warmup_divergences += usize::from(tr.divergent);
        eps = adapter.update(tr.accept_stat);
    }
    if config.warmup > 0 {
        if warmup_divergences == config.warmup {
            return Err(Error::Sampler(format!("chain {chain}: every warmup transition diverged")));
        }
        eps = adapter.final_step();
    }

    let mut draws = Vec::with_capacity(config.kept_per_chain());
    let (mut sum_accept, mut divergences, mut depth_sum, mut n_leapfrog) = (0.0, 0, 0usize, 0u64);
    for i in 0..config.draws {
        let tr = transition(target, &mut current, eps, config.max_depth, &mut rng)?;
        sum_accept += tr.accept_stat;
        divergences += usize::from(tr.divergent);
        depth_sum += tr.depth;
        n_leapfrog += tr.n_leapfrog;
        if (i + 1) % config.thin == 0 {
            draws.push(current.q.clone());
        }
    }

    let (mut min_ess, mut max_rhat) = (f64::INFINITY, f64::NEG_INFINITY);
    for j in 0..target.dim() {
        let col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
        let e = ess_bulk(&[&col]);
        let r = split_rhat(&[&col]);
        if e.is_finite() {
            min_ess = min_ess.min(e);
        }
        if r.is_finite() {
            max_rhat = max_rhat.max(r);
        }
    }
    let n = config.draws as f64;
    Ok(ChainOutput {
        draws,
        diagnostics: ChainDiagnostics {
            chain,
            mean_accept: sum_accept / n,
            divergences,
            warmup_divergences,
            step_size: eps,
            mean_tree_depth: depth_sum as f64 / n,
            n_leapfrog,
            min_ess: if min_ess.is_finite() { min_ess } else { f64::NAN },
            max_rhat: if max_rhat.is_finite() { max_rhat } else { f64::NAN },
        },
    })
}

/// Runs `config.chains` independent chains on up to `workers` threads.
///
/// Output is a pure function of `(target, config, init, seed)`; the worker
/// count only changes wall-clock time.
pub fn nuts_sample<T: LogDensity + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    init: &Init,
    seed: &SeedPath,
    workers: usize,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let run = || -> Vec<Result<ChainOutput>> {
        (0..config.chains).into_par_iter().map(|c| run_chain(target, config, init, seed, c)).collect()
    };
    let outputs = if workers <= 1 {
        (0..config.chains).map(|c| run_chain(target, config, init, seed, c)).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Sampler(format!("thread pool: {e}")))?
            .install(run)
    };
    let mut data = Vec::new();
    let mut chain_of_draw = Vec::new();
    let mut diagnostics = Vec::new();
    for out in outputs {
        let out = out?;
        for d in &out.draws {
            data.extend_from_slice(d);
            chain_of_draw.push(out.diagnostics.chain);
        }
        diagnostics.push(out.diagnostics);
    }
    let m = chain_of_draw.len();
    if m == 0 {
        return Err(Error::Sampler("no draws retained; increase draws or lower thin".into()));
    }
    PosteriorDraws::new(Matrix::new(m, target.dim(), data)?, chain_of_draw, diagnostics)
}

/// Pooled bulk ESS and split-R̂ of each parameter across all chains.
pub fn pooled_diagnostics(draws: &PosteriorDraws) -> Vec<(f64, f64)> {
    (0..draws.dim())
        .map(|j| {
            let chains = draws.chains_of(j);
            let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
            (ess_bulk(&refs), split_rhat(&refs))
        })
        .collect()
}
