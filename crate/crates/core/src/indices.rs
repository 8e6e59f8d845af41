//! Trend Direction Index and Excitement Trend Index.
//!
//! For a Gaussian pair `(d', d'')` with means `(m1, m2)`, variances
//! `(v1, v2)` and covariance `c12`, the expected rate of zero-crossings of
//! `d'` is
//!
//! ```text
//! dETI = lambda * phi(m1 / sqrt(v1)) * (2 phi(zeta) + zeta erf(zeta / sqrt 2))
//! lambda = sqrt(v2 / v1) sqrt(1 - omega^2),   omega = c12 / sqrt(v1 v2)
//! zeta   = (m1 sqrt(v2) omega / sqrt(v1) - m2) / (sqrt(v2) sqrt(1 - omega^2))
//! ```
//!
//! i.e. the density of `d'` at zero times `E|d''|` conditional on `d' = 0`.
//! With zero means and `omega = 0` this reduces to Rice's rate
//! `sqrt(v2 / v1) / pi`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::HyperChain;
use crate::ingest::ScoreSeries;
use crate::posterior::{Conditioner, PointwiseMoments, PosteriorMoments};
use crate::special::{erf, norm_cdf, norm_pdf};
use crate::stats::{linspace, quantile_sorted, trapezoid};

pub const DEFAULT_GRID_POINTS: usize = 241;
/// `omega^2` this close to one is treated as a degenerate correlation.
pub const DEGENERATE_OMEGA_TOL: f64 = 1e-12;
/// Default upper bound on hyperparameter draws used for summaries.
pub const DEFAULT_MAX_DRAWS: usize = 500;
/// Fraction of failed draws above which a summary is rejected.
pub const MAX_FAILED_FRACTION: f64 = 0.01;

/// Equidistant grid over `[0, domain_end]`, endpoints included.
pub fn default_grid(domain_end: f64, points: usize) -> Vec<f64> {
    linspace(0.0, domain_end, points)
}

/// `P(d'(t) > 0)` for `d'(t) ~ N(mu1, var1)`.
pub fn tdi_at(mu1: f64, var1: f64) -> f64 {
    if var1 <= 0.0 {
        return if mu1 > 0.0 {
            1.0
        } else if mu1 < 0.0 {
            0.0
        } else {
            0.5
        };
    }
    norm_cdf(mu1 / var1.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingIntensityTerms {
    pub lambda: f64,
    pub omega: f64,
    pub zeta: f64,
}

/// `lambda`, `omega` and `zeta` of the crossing-rate formula.
pub fn crossing_terms(var1: f64, var2: f64, cov12: f64, mu1: f64, mu2: f64) -> Result<CrossingIntensityTerms> {
    if !(var1 > 0.0 && var2 > 0.0) {
        return Err(Error::InvalidInput(format!("variances must be positive ({var1}, {var2})")));
    }
    let (s1, s2) = (var1.sqrt(), var2.sqrt());
    let omega = cov12 / (s1 * s2);
    if !omega.is_finite() || 1.0 - omega * omega <= DEGENERATE_OMEGA_TOL {
        return Err(Error::DegenerateCorrelation(omega));
    }
    let root = (1.0 - omega * omega).sqrt();
    let lambda = s2 / s1 * root;
    let zeta = (mu1 * s2 * omega / s1 - mu2) / (s2 * root);
    Ok(CrossingIntensityTerms { lambda, omega, zeta })
}

/// `E|Z|` factor `2 phi(z) + z erf(z / sqrt 2)`; non-negative for all `z`.
pub fn abs_moment_factor(z: f64) -> f64 {
    2.0 * norm_pdf(z) + z * erf(z / std::f64::consts::SQRT_2)
}

/// Expected zero-crossing intensity of `d'` at one time point.
pub fn deti_at(mu1: f64, mu2: f64, var1: f64, var2: f64, cov12: f64) -> Result<f64> {
    let ct = crossing_terms(var1, var2, cov12, mu1, mu2)?;
    let factor = abs_moment_factor(ct.zeta);
    debug_assert!(factor >= 0.0, "abs-moment factor negative at zeta = {}", ct.zeta);
    Ok(ct.lambda * norm_pdf(mu1 / var1.sqrt()) * factor.max(0.0))
}

/// TDI curve, dETI curve and ETI for one hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendIndices {
    pub grid: Vec<f64>,
    pub tdi: Vec<f64>,
    pub deti: Vec<f64>,
    pub eti: f64,
    /// Grid indices where a zero variance or degenerate correlation forced
    /// the limiting values.
    pub flagged: Vec<usize>,
}

pub fn trend_indices_pointwise(m: &PointwiseMoments) -> TrendIndices {
    let p = m.grid.len();
    let mut tdi = Vec::with_capacity(p);
    let mut deti = Vec::with_capacity(p);
    let mut flagged = Vec::new();
    for i in 0..p {
        tdi.push(tdi_at(m.mu_d1[i], m.var_d1[i]));
        if m.var_d1[i] <= 0.0 || m.var_d2[i] <= 0.0 {
            flagged.push(i);
            deti.push(0.0);
            continue;
        }
        match deti_at(m.mu_d1[i], m.mu_d2[i], m.var_d1[i], m.var_d2[i], m.cov_d1d2[i]) {
            Ok(v) => deti.push(v),
            Err(e) => {
                log::debug!("dETI set to 0 at t = {}: {e}", m.grid[i]);
                flagged.push(i);
                deti.push(0.0);
            }
        }
    }
    let eti = trapezoid(&m.grid, &deti);
    TrendIndices { grid: m.grid.clone(), tdi, deti, eti, flagged }
}

pub fn trend_indices(m: &PosteriorMoments) -> TrendIndices {
    trend_indices_pointwise(&m.pointwise())
}

/// Posterior summaries of the indices over hyperparameter draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexPosteriorSummary {
    pub grid: Vec<f64>,
    pub tdi_mean: Vec<f64>,
    pub tdi_q025: Vec<f64>,
    pub tdi_q05: Vec<f64>,
    pub tdi_q25: Vec<f64>,
    pub tdi_q50: Vec<f64>,
    pub tdi_q75: Vec<f64>,
    pub tdi_q95: Vec<f64>,
    pub tdi_q975: Vec<f64>,
    pub deti_q50: Vec<f64>,
    pub eti_median: f64,
    pub eti_mean: f64,
    pub eti_q025: f64,
    pub eti_q975: f64,
    pub n_draws: usize,
    pub n_failed: usize,
}

/// Indices of `n` draws kept after thinning down to at most `max_draws`.
pub fn thin_indices(n: usize, max_draws: usize) -> Vec<usize> {
    let stride = n.div_ceil(max_draws.max(1)).max(1);
    (0..n).step_by(stride).collect()
}

/// Pointwise mean and quantiles of a set of curves plus summaries of their
/// scalar integrals.
pub fn summarize_indices(per_draw: &[TrendIndices], n_failed: usize) -> Result<IndexPosteriorSummary> {
    let first = per_draw.first().ok_or_else(|| Error::InsufficientData("no successful draws".into()))?;
    let p = first.grid.len();
    let n = per_draw.len();
    let mut out = IndexPosteriorSummary {
        grid: first.grid.clone(),
        tdi_mean: vec![0.0; p],
        tdi_q025: vec![0.0; p],
        tdi_q05: vec![0.0; p],
        tdi_q25: vec![0.0; p],
        tdi_q50: vec![0.0; p],
        tdi_q75: vec![0.0; p],
        tdi_q95: vec![0.0; p],
        tdi_q975: vec![0.0; p],
        deti_q50: vec![0.0; p],
        eti_median: 0.0,
        eti_mean: 0.0,
        eti_q025: 0.0,
        eti_q975: 0.0,
        n_draws: n,
        n_failed,
    };
    let mut col = vec![0.0; n];
    for i in 0..p {
        for (c, ti) in col.iter_mut().zip(per_draw) {
            *c = ti.tdi[i];
        }
        col.sort_by(f64::total_cmp);
        // keep the mean inside the sample range despite summation roundoff
        out.tdi_mean[i] = (col.iter().sum::<f64>() / n as f64).clamp(col[0], col[n - 1]);
        out.tdi_q025[i] = quantile_sorted(&col, 0.025);
        out.tdi_q05[i] = quantile_sorted(&col, 0.05);
        out.tdi_q25[i] = quantile_sorted(&col, 0.25);
        out.tdi_q50[i] = quantile_sorted(&col, 0.5);
        out.tdi_q75[i] = quantile_sorted(&col, 0.75);
        out.tdi_q95[i] = quantile_sorted(&col, 0.95);
        out.tdi_q975[i] = quantile_sorted(&col, 0.975);
        for (c, ti) in col.iter_mut().zip(per_draw) {
            *c = ti.deti[i];
        }
        col.sort_by(f64::total_cmp);
        out.deti_q50[i] = quantile_sorted(&col, 0.5);
    }
    let mut eti: Vec<f64> = per_draw.iter().map(|t| t.eti).collect();
    eti.sort_by(f64::total_cmp);
    out.eti_mean = eti.iter().sum::<f64>() / n as f64;
    out.eti_median = quantile_sorted(&eti, 0.5);
    out.eti_q025 = quantile_sorted(&eti, 0.025);
    out.eti_q975 = quantile_sorted(&eti, 0.975);
    Ok(out)
}

/// Run posterior moments and indices for (thinned) draws of a chain and
/// summarize them. Draws whose factorization fails are skipped; more than
/// 1% failures is an error.
pub fn summarize_over_chain(
    s: &ScoreSeries,
    chain: &HyperChain,
    grid: &[f64],
    max_draws: usize,
) -> Result<IndexPosteriorSummary> {
    if chain.draws.is_empty() {
        return Err(Error::InsufficientData("empty chain".into()));
    }
    let keep = thin_indices(chain.draws.len(), max_draws);
    let results: Vec<Option<TrendIndices>> = keep
        .par_iter()
        .map(|&i| {
            Conditioner::new(&s.times, &s.diffs, &chain.draws[i])
                .and_then(|c| c.pointwise(grid))
                .map(|m| trend_indices_pointwise(&m))
                .ok()
        })
        .collect();
    let total = results.len();
    let per_draw: Vec<TrendIndices> = results.into_iter().flatten().collect();
    let failed = total - per_draw.len();
    if failed as f64 > MAX_FAILED_FRACTION * total as f64 {
        return Err(Error::TooManyFailedDraws { failed, total });
    }
    summarize_indices(&per_draw, failed)
}
