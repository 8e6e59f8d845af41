use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::ingest::ScoreSeries;
use crate::kernel::{gram, Hyperparams};
use crate::linalg::JitteredCholesky;

fn observation_cov(times: &[f64], theta: &Hyperparams) -> Result<nalgebra::DMatrix<f64>> {
    let mut k = gram(0, 0, times, times, theta)?;
    for i in 0..times.len() {
        k[(i, i)] += theta.sigma * theta.sigma;
    }
    Ok(k)
}

/// `-1/2 log|C + sigma^2 I| - 1/2 r^T (C + sigma^2 I)^-1 r` with
/// `r = diffs - beta`; the `2 pi` constant is dropped.
pub fn log_marginal_likelihood(times: &[f64], diffs: &[f64], theta: &Hyperparams) -> Result<f64> {
    theta.validate()?;
    if times.is_empty() || times.len() != diffs.len() {
        return Err(Error::InvalidInput("times and diffs must be non-empty and of equal length".into()));
    }
    let k = observation_cov(times, theta)?;
    let chol = JitteredCholesky::new(&k, theta.alpha * theta.alpha)?;
    let r = DVector::from_iterator(diffs.len(), diffs.iter().map(|d| d - theta.beta));
    let z = chol.forward_vec(&r);
    Ok(-0.5 * chol.log_det() - 0.5 * z.norm_squared())
}

pub fn marginal_loglik(theta: &Hyperparams, s: &ScoreSeries) -> Result<f64> {
    log_marginal_likelihood(&s.times, &s.diffs, theta)
}

/// Log marginal likelihood and its gradient with respect to the
/// unconstrained coordinates `(beta, ln alpha, ln rho, ln sigma)`.
pub fn marginal_loglik_grad(times: &[f64], diffs: &[f64], theta: &Hyperparams) -> Result<(f64, [f64; 4])> {
    theta.validate()?;
    let n = times.len();
    if n == 0 || n != diffs.len() {
        return Err(Error::InvalidInput("times and diffs must be non-empty and of equal length".into()));
    }
    let c = gram(0, 0, times, times, theta)?;
    let mut k = c.clone();
    let s2 = theta.sigma * theta.sigma;
    for i in 0..n {
        k[(i, i)] += s2;
    }
    let chol = JitteredCholesky::new(&k, theta.alpha * theta.alpha)?;
    let r = DVector::from_iterator(n, diffs.iter().map(|d| d - theta.beta));
    let w = chol.solve(&r);
    let value = -0.5 * chol.log_det() - 0.5 * r.dot(&w);
    let kinv = chol.inverse();

    let rho2 = theta.rho * theta.rho;
    // dK/d ln alpha = 2C, dK/d ln rho = C .* (t_i - t_j)^2 / rho^2, dK/d ln sigma = 2 sigma^2 I
    let (mut g_alpha, mut g_rho, mut g_sigma) = (0.0, 0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            let a = w[i] * w[j] - kinv[(i, j)];
            let cij = c[(i, j)];
            g_alpha += a * 2.0 * cij;
            let lag = times[i] - times[j];
            g_rho += a * cij * lag * lag / rho2;
        }
        g_sigma += (w[j] * w[j] - kinv[(j, j)]) * 2.0 * s2;
    }
    Ok((value, [w.sum(), 0.5 * g_alpha, 0.5 * g_rho, 0.5 * g_sigma]))
}
