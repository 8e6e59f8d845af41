//! Independent location-scale Student-t hyperpriors centred at the
//! maximum-likelihood estimates. `beta` is untruncated; `alpha`, `rho` and
//! `sigma` are truncated to the positive half-line and renormalized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Hyperparams;
use crate::special::{student_t_cdf, student_t_ln_pdf};

pub const DEFAULT_PRIOR_SCALE: f64 = 5.0;
pub const DEFAULT_PRIOR_DF: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub beta_loc: f64,
    pub alpha_loc: f64,
    pub rho_loc: f64,
    pub sigma_loc: f64,
    /// Common scale of all four components.
    pub scale: f64,
    pub df: f64,
}

impl PriorSpec {
    pub fn new(locs: Hyperparams, scale: f64, df: f64) -> Result<Self> {
        let p = Self {
            beta_loc: locs.beta,
            alpha_loc: locs.alpha,
            rho_loc: locs.rho,
            sigma_loc: locs.sigma,
            scale,
            df,
        };
        p.validate()?;
        Ok(p)
    }

    /// Priors centred at an MLE with the default scale 5 and 4 degrees of freedom.
    pub fn centred_at(mle: Hyperparams) -> Result<Self> {
        Self::new(mle, DEFAULT_PRIOR_SCALE, DEFAULT_PRIOR_DF)
    }

    pub fn validate(&self) -> Result<()> {
        Hyperparams::new(self.beta_loc, self.alpha_loc, self.rho_loc, self.sigma_loc)?;
        if !(self.scale.is_finite() && self.scale > 0.0 && self.df.is_finite() && self.df > 0.0) {
            return Err(Error::InvalidInput(format!("prior scale {} / df {}", self.scale, self.df)));
        }
        Ok(())
    }

    pub fn locations(&self) -> [f64; 4] {
        [self.beta_loc, self.alpha_loc, self.rho_loc, self.sigma_loc]
    }

    /// Log densities of the four components.
    pub fn component_logpdfs(&self, theta: &Hyperparams) -> [f64; 4] {
        [
            t_logpdf(theta.beta, self.beta_loc, self.scale, self.df, false),
            t_logpdf(theta.alpha, self.alpha_loc, self.scale, self.df, true),
            t_logpdf(theta.rho, self.rho_loc, self.scale, self.df, true),
            t_logpdf(theta.sigma, self.sigma_loc, self.scale, self.df, true),
        ]
    }
}

/// Log density of a location-scale Student-t, optionally truncated to `(0, inf)`.
pub fn t_logpdf(x: f64, loc: f64, scale: f64, df: f64, positive: bool) -> f64 {
    if positive && x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut lp = student_t_ln_pdf((x - loc) / scale, df) - scale.ln();
    if positive {
        // mass above zero, 1 - F(-loc / scale) = F(loc / scale)
        lp -= student_t_cdf(loc / scale, df).ln();
    }
    lp
}

/// CDF matching [`t_logpdf`].
pub fn t_cdf(x: f64, loc: f64, scale: f64, df: f64, positive: bool) -> f64 {
    if !positive {
        return student_t_cdf((x - loc) / scale, df);
    }
    if x <= 0.0 {
        return 0.0;
    }
    let below_zero = student_t_cdf(-loc / scale, df);
    (student_t_cdf((x - loc) / scale, df) - below_zero) / (1.0 - below_zero)
}

/// Sum of the four independent component log densities.
pub fn prior_logpdf(theta: &Hyperparams, psi: &PriorSpec) -> f64 {
    psi.component_logpdfs(theta).iter().sum()
}
