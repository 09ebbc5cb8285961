//! Statistical helpers for the diagnostics and convergence experiments.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Result, SimError};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// One-sample Kolmogorov-Smirnov statistic against a CDF; `samples` need
/// not be sorted.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Asymptotic one-sample KS critical value `c(alpha) / sqrt(n)` with
/// `c = sqrt(-ln(alpha / 2) / 2)` (1.628 at the 1% level).
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

pub fn poisson_pmf(lambda: f64, k: u64) -> f64 {
    let mut log_p = -lambda + k as f64 * lambda.ln();
    for i in 1..=k {
        log_p -= (i as f64).ln();
    }
    log_p.exp()
}

#[derive(Debug, Clone)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub critical: f64,
    pub dof: usize,
    pub pass: bool,
}

/// Chi-square goodness of fit of observed integer counts against a pmf with
/// fully specified parameters. Cells are pooled from the right until every
/// expected count reaches 5.
pub fn chi_square_gof(
    observed: &[u64],
    pmf: impl Fn(u64) -> f64,
    alpha: f64,
) -> Result<ChiSquareResult> {
    chi_square_gof_fitted(observed, pmf, alpha, 0)
}

/// Same test with `fitted` parameters estimated from the data (each one
/// removes a degree of freedom).
pub fn chi_square_gof_fitted(
    observed: &[u64],
    pmf: impl Fn(u64) -> f64,
    alpha: f64,
    fitted: usize,
) -> Result<ChiSquareResult> {
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(SimError::numeric("chi-square test with no observations"));
    }
    let mut cells: Vec<(f64, f64)> = Vec::new(); // (observed, expected)
    let mut tail_p = 1.0;
    for (k, &obs) in observed.iter().enumerate() {
        let p = pmf(k as u64);
        tail_p -= p;
        cells.push((obs as f64, p * n as f64));
    }
    // Everything beyond the observed support goes to one tail cell.
    cells.push((0.0, tail_p.max(0.0) * n as f64));
    // Pool low-expectation cells from the right.
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for &(o, e) in cells.iter().rev() {
        acc.0 += o;
        acc.1 += e;
        if acc.1 >= 5.0 {
            pooled.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => pooled.push(acc),
        }
    }
    if pooled.len() < 2 {
        return Err(SimError::numeric("chi-square test with fewer than 2 cells after pooling"));
    }
    let statistic: f64 = pooled.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    if pooled.len() < 2 + fitted {
        return Err(SimError::numeric("chi-square test with no degrees of freedom left"));
    }
    let dof = pooled.len() - 1 - fitted;
    let chi = ChiSquared::new(dof as f64)
        .map_err(|e| SimError::numeric(format!("chi-square dof {dof}: {e}")))?;
    let critical = chi.inverse_cdf(1.0 - alpha);
    Ok(ChiSquareResult { statistic, critical, dof, pass: statistic < critical })
}

/// Total variation distance between two empirical count histograms.
pub fn tv_distance(a: &[u64], b: &[u64]) -> f64 {
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let len = a.len().max(b.len());
    let mut d = 0.0;
    for k in 0..len {
        let pa = a.get(k).copied().unwrap_or(0) as f64 / na as f64;
        let pb = b.get(k).copied().unwrap_or(0) as f64 / nb as f64;
        d += (pa - pb).abs();
    }
    d / 2.0
}

/// Exact Wasserstein-1 distance between two equally sized sample sets in
/// one dimension: mean absolute difference of sorted samples.
pub fn wasserstein1_samples(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(SimError::numeric(
            "sorted-sample Wasserstein needs two equally sized nonempty sets",
        ));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|p, q| p.partial_cmp(q).unwrap());
    xb.sort_by(|p, q| p.partial_cmp(q).unwrap());
    Ok(xa.iter().zip(&xb).map(|(p, q)| (p - q).abs()).sum::<f64>() / xa.len() as f64)
}

/// Wasserstein-1 between two nonnegative cell densities on a 1-d grid with
/// equal spacing: the L1 distance of their normalized CDFs.
pub fn wasserstein1_grid(a: &[f64], b: &[f64], dx: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(SimError::numeric("grid Wasserstein needs equally sized arrays"));
    }
    let ma: f64 = a.iter().sum::<f64>() * dx;
    let mb: f64 = b.iter().sum::<f64>() * dx;
    if ma <= 0.0 || mb <= 0.0 {
        return Err(SimError::numeric("grid Wasserstein needs positive masses"));
    }
    let (mut ca, mut cb, mut w) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        ca += a[i] * dx / ma;
        cb += b[i] * dx / mb;
        w += (ca - cb).abs() * dx;
    }
    Ok(w)
}

/// Least-squares slope of log(y) against log(x).
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = mean(&lx);
    let my = mean(&ly);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..lx.len() {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    num / den
}
