//! Constant prior mean and squared-exponential covariance, with the mixed
//! partial derivatives needed to couple the latent process with its first
//! and second time derivatives.
//!
//! With `u = (s - t) / rho`, every mixed partial of the squared-exponential
//! kernel has the closed form
//!
//! ```text
//! d^a/ds^a d^b/dt^b C(s, t) = alpha^2 (-1)^a rho^-(a+b) He_{a+b}(u) exp(-u^2 / 2)
//! ```
//!
//! where `He_n` is the probabilists' Hermite polynomial.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest derivative order supported in either argument.
pub const MAX_ORDER: usize = 2;

/// Hyperparameters of the latent process and the observation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Constant prior mean of the score difference.
    pub beta: f64,
    /// Kernel amplitude (standard deviation, score units).
    pub alpha: f64,
    /// Length-scale in minutes.
    pub rho: f64,
    /// Observation noise standard deviation.
    pub sigma: f64,
}

impl Hyperparams {
    pub fn new(beta: f64, alpha: f64, rho: f64, sigma: f64) -> Result<Self> {
        let h = Self { beta, alpha, rho, sigma };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() {
            return Err(Error::InvalidHyperparams(format!("beta = {}", self.beta)));
        }
        for (name, v) in [("alpha", self.alpha), ("rho", self.rho), ("sigma", self.sigma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidHyperparams(format!("{name} = {v}")));
            }
        }
        Ok(())
    }

    /// Map to the unconstrained coordinates `(beta, ln alpha, ln rho, ln sigma)`.
    pub fn to_unconstrained(&self) -> [f64; 4] {
        [self.beta, self.alpha.ln(), self.rho.ln(), self.sigma.ln()]
    }

    pub fn from_unconstrained(x: &[f64; 4]) -> Self {
        Self { beta: x[0], alpha: x[1].exp(), rho: x[2].exp(), sigma: x[3].exp() }
    }
}

/// Probabilists' Hermite polynomial `He_n(u)` for `n <= 4`.
#[inline]
fn hermite(n: usize, u: f64) -> f64 {
    let u2 = u * u;
    match n {
        0 => 1.0,
        1 => u,
        2 => u2 - 1.0,
        3 => u * (u2 - 3.0),
        4 => u2 * (u2 - 6.0) + 3.0,
        _ => unreachable!("order checked by caller"),
    }
}

fn check_order(a: usize, b: usize) -> Result<()> {
    if a > MAX_ORDER || b > MAX_ORDER {
        return Err(Error::UnsupportedOrder(a, b));
    }
    Ok(())
}

#[inline]
fn partial_unchecked(a: usize, b: usize, s: f64, t: f64, theta: &Hyperparams) -> f64 {
    let n = a + b;
    let u = (s - t) / theta.rho;
    let mut v = theta.alpha * theta.alpha * (-0.5 * u * u).exp() * hermite(n, u);
    if n > 0 {
        v /= theta.rho.powi(n as i32);
    }
    if a % 2 == 1 {
        -v
    } else {
        v
    }
}

/// `C(s, t) = alpha^2 exp(-(s - t)^2 / (2 rho^2))`.
pub fn se_cov(s: f64, t: f64, theta: &Hyperparams) -> f64 {
    partial_unchecked(0, 0, s, t, theta)
}

/// Partial derivative of order `a` in the first and `b` in the second
/// argument of the squared-exponential kernel.
pub fn se_cov_partial(a: usize, b: usize, s: f64, t: f64, theta: &Hyperparams) -> Result<f64> {
    check_order(a, b)?;
    Ok(partial_unchecked(a, b, s, t, theta))
}

/// Derivatives of the constant prior mean.
pub fn mean_fn(order: usize, _t: f64, theta: &Hyperparams) -> f64 {
    if order == 0 {
        theta.beta
    } else {
        0.0
    }
}

/// Matrix of `se_cov_partial(a, b, grid1[i], grid2[j])`.
pub fn gram(a: usize, b: usize, grid1: &[f64], grid2: &[f64], theta: &Hyperparams) -> Result<DMatrix<f64>> {
    check_order(a, b)?;
    if grid1.is_empty() || grid2.is_empty() {
        return Err(Error::InvalidInput("gram: empty grid".into()));
    }
    Ok(DMatrix::from_fn(grid1.len(), grid2.len(), |i, j| {
        partial_unchecked(a, b, grid1[i], grid2[j], theta)
    }))
}
