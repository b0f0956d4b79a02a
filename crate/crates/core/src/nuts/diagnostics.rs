//! Convergence diagnostics: split-R̂ and (rank-normalised) bulk ESS.

/// Splits every chain into its first and second halves, dropping the
/// middle draw of odd-length chains.
fn split_chains(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Between/within decomposition: `(W, var⁺)`.
fn variance_parts(chains: &[Vec<f64>]) -> (f64, f64) {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / chains.len() as f64;
    let grand = mean(&means);
    let b_over_n = if chains.len() > 1 {
        means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (chains.len() - 1) as f64
    } else {
        0.0
    };
    (w, w * (n - 1.0) / n + b_over_n)
}

/// Classic split-R̂ of one parameter across chains.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let split = split_chains(chains);
    if split.is_empty() || split[0].len() < 2 {
        return f64::NAN;
    }
    let (w, var_plus) = variance_parts(&split);
    if w <= 0.0 {
        return if var_plus <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    (var_plus / w).sqrt()
}

/// Autocovariance at `lag` with the `1/n` normalisation.
fn autocov(c: &[f64], m: f64, lag: usize) -> f64 {
    let n = c.len();
    c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64
}

/// Effective sample size of already-split chains with Geyer's initial
/// monotone positive-sequence truncation.
fn ess_of(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    if n < 4 {
        return f64::NAN;
    }
    let (w, var_plus) = variance_parts(chains);
    if !(var_plus > 0.0) || !(w > 0.0) {
        return f64::NAN;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov_mean = |lag: usize| -> f64 {
        chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, lag)).sum::<f64>() / m as f64
    };
    let rho_at = |lag: usize| 1.0 - (w - acov_mean(lag)) / var_plus;

    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho_at(1);
    rho[1] = odd;
    let mut t = 0;
    while t + 5 < n && even + odd > 0.0 {
        t += 2;
        even = rho_at(t);
        odd = rho_at(t + 1);
        if even + odd >= 0.0 {
            rho[t] = even;
            rho[t + 1] = odd;
        }
    }
    let max_t = t;
    if even > 0.0 && max_t + 1 < n {
        rho[max_t + 1] = even;
    }
    let mut k = 1;
    while k + 2 <= max_t {
        if rho[k + 1] + rho[k + 2] > rho[k - 1] + rho[k] {
            rho[k + 1] = (rho[k - 1] + rho[k]) / 2.0;
            rho[k + 2] = rho[k + 1];
        }
        k += 2;
    }
    let total = (m * n) as f64;
    let tau = -1.0 + 2.0 * rho[..=max_t].iter().sum::<f64>() + if max_t + 1 < n { rho[max_t + 1] } else { 0.0 };
    let tau = tau.max(1.0 / total.log10());
    total / tau
}

/// ESS of the raw draws of one parameter across chains.
pub fn ess(chains: &[&[f64]]) -> f64 {
    let split = split_chains(chains);
    if split.is_empty() {
        return f64::NAN;
    }
    ess_of(&split)
}

/// Bulk ESS: ESS after pooled rank normalisation.
pub fn ess_bulk(chains: &[&[f64]]) -> f64 {
    let split = split_chains(chains);
    if split.is_empty() || split[0].is_empty() {
        return f64::NAN;
    }
    let len = split[0].len();
    let flat: Vec<f64> = split.iter().flatten().copied().collect();
    let z = rank_normalize(&flat);
    let normalised: Vec<Vec<f64>> = z.chunks(len).map(<[f64]>::to_vec).collect();
    ess_of(&normalised)
}

/// Blom-style normal scores of pooled fractional ranks (ties averaged).
fn rank_normalize(values: &[f64]) -> Vec<f64> {
    let s = values.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks.iter().map(|r| normal_quantile((r - 0.375) / (s as f64 + 0.25))).collect()
}

/// Inverse standard-normal CDF (Acklam's rational approximation followed
/// by one Halley refinement step).
pub(crate) fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] =
        [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let p_low = 0.024_25;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}
