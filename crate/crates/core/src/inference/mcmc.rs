//! Adaptive random-walk Metropolis over `(beta, ln alpha, ln rho, ln sigma)`.
//!
//! The target in unconstrained coordinates is
//! `loglik + logprior + ln alpha + ln rho + ln sigma`; the last three terms
//! are the log Jacobian of the exponential map, so draws mapped back to the
//! constrained space follow the posterior exactly. During warm-up a
//! full-covariance Gaussian proposal is re-estimated from the chain at the end of each
//! adaptation window and its global scale is tuned toward `target_accept`
//! by a Robbins-Monro recursion. After warm-up the proposal is frozen.

use std::io::Write;

use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagnostics::{effective_sample_size, split_rhat};
use super::likelihood::marginal_loglik;
use super::prior::{prior_logpdf, PriorSpec};
use crate::error::{Error, Result};
use crate::ingest::ScoreSeries;
use crate::kernel::Hyperparams;

pub const RHAT_WARN: f64 = 1.01;
pub const ESS_WARN: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcOptions {
    pub n_chains: usize,
    /// Iterations per chain including warm-up.
    pub n_iter: usize,
    pub warmup_frac: f64,
    pub target_accept: f64,
    /// Keep every `thin`-th post-warm-up iteration.
    pub thin: usize,
}

impl Default for McmcOptions {
    fn default() -> Self {
        Self { n_chains: 4, n_iter: 5000, warmup_frac: 0.5, target_accept: 0.3, thin: 1 }
    }
}

impl McmcOptions {
    pub fn n_warmup(&self) -> usize {
        (self.n_iter as f64 * self.warmup_frac).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 || self.thin == 0 {
            return Err(Error::InvalidInput("n_chains and thin must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) || !(0.0 < self.target_accept && self.target_accept < 1.0) {
            return Err(Error::InvalidInput("warmup_frac in [0, 1) and target_accept in (0, 1) required".into()));
        }
        if self.n_iter <= self.n_warmup() + self.thin {
            return Err(Error::InvalidInput("not enough post-warm-up iterations".into()));
        }
        Ok(())
    }
}

/// Per-parameter convergence diagnostics in the order `(beta, alpha, rho, sigma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub rhat: [f64; 4],
    pub ess: [f64; 4],
    pub acceptance: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Post-warm-up draws of all chains, concatenated chain by chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperChain {
    pub draws: Vec<Hyperparams>,
    /// `marginal_loglik + prior_logpdf` of each draw (no Jacobian term).
    pub log_post: Vec<f64>,
    pub n_chains: usize,
    pub n_iter: usize,
    pub n_warmup: usize,
    pub thin: usize,
    pub diagnostics: ChainDiagnostics,
}

impl HyperChain {
    pub fn draws_per_chain(&self) -> usize {
        self.draws.len() / self.n_chains
    }

    pub fn chain(&self, c: usize) -> &[Hyperparams] {
        let k = self.draws_per_chain();
        &self.draws[c * k..(c + 1) * k]
    }

    /// One vector per chain of a single parameter (0 = beta .. 3 = sigma).
    pub fn param_chains(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains)
            .map(|c| self.chain(c).iter().map(|h| param_value(h, param)).collect())
            .collect()
    }

    /// CSV with columns `chain,iter,beta,alpha,rho,sigma,log_post`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["chain", "iter", "beta", "alpha", "rho", "sigma", "log_post"])?;
        let k = self.draws_per_chain();
        for (i, (h, lp)) in self.draws.iter().zip(&self.log_post).enumerate() {
            wtr.serialize((i / k, i % k, h.beta, h.alpha, h.rho, h.sigma, lp))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub(crate) fn param_value(h: &Hyperparams, param: usize) -> f64 {
    match param {
        0 => h.beta,
        1 => h.alpha,
        2 => h.rho,
        _ => h.sigma,
    }
}

/// Decomposed log density of a constrained point: `(loglik, logprior)`.
type Target<'a> = dyn Fn(&Hyperparams) -> Option<(f64, f64)> + Sync + 'a;

struct ChainOut {
    draws: Vec<Hyperparams>,
    log_post: Vec<f64>,
    acceptance: f64,
}

fn log_jacobian(x: &[f64; 4]) -> f64 {
    x[1] + x[2] + x[3]
}

fn run_chain(target: &Target, init: [f64; 4], init_sd: [f64; 4], opts: &McmcOptions, seed: u64, chain: usize) -> Result<ChainOut> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);

    let eval = |x: &[f64; 4]| -> Option<(f64, f64, f64)> {
        if x.iter().any(|v| !v.is_finite()) || x[1..].iter().any(|v| v.abs() > 30.0) {
            return None;
        }
        let (ll, lp) = target(&Hyperparams::from_unconstrained(x))?;
        let total = ll + lp + log_jacobian(x);
        total.is_finite().then_some((total, ll, lp))
    };

    // start from the supplied point with small jitter
    let mut x = init;
    let mut cur = None;
    for attempt in 0..100 {
        let mut cand = init;
        if attempt > 0 || chain > 0 {
            for (v, sd) in cand.iter_mut().zip(&init_sd) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += 0.5 * sd * z;
            }
        }
        if let Some(e) = eval(&cand) {
            x = cand;
            cur = Some(e);
            break;
        }
    }
    let (mut lp_total, mut ll, mut lpr) = cur.ok_or_else(|| Error::ChainDiverged {
        chain,
        reason: "no finite starting point".into(),
    })?;

    let d = 4.0f64;
    let n_warmup = opts.n_warmup();
    // proposal factor, re-estimated from the warm-up draws of each window
    let mut chol = Matrix4::from_diagonal(&Vector4::from(init_sd));
    let mut log_scale = (2.38 / d.sqrt()).ln();
    // adaptation windows double in length, starting at 1/16 of warm-up
    let mut window_start = 0;
    let mut window_len = (n_warmup / 16).max(20);
    let (mut w_n, mut w_mean, mut w_m2) = (0usize, Vector4::zeros(), Matrix4::zeros());

    let mut draws = Vec::new();
    let mut log_post = Vec::new();
    let mut accepted = 0usize;
    let mut nonfinite = 0usize;
    for it in 0..opts.n_iter {
        let scale = log_scale.exp();
        let z = Vector4::from_fn(|_, _| StandardNormal.sample(&mut rng));
        let step = chol * z * scale;
        let prop = [x[0] + step[0], x[1] + step[1], x[2] + step[2], x[3] + step[3]];
        let accept_prob = match eval(&prop) {
            Some((t, pll, plp)) => {
                let a = (t - lp_total).min(0.0).exp();
                if rng.random::<f64>() < a {
                    x = prop;
                    lp_total = t;
                    ll = pll;
                    lpr = plp;
                    if it >= n_warmup {
                        accepted += 1;
                    }
                }
                a
            }
            None => {
                nonfinite += 1;
                0.0
            }
        };
        if it < n_warmup {
            let gamma = 1.0 / ((it + 1) as f64).powf(0.6);
            log_scale += gamma * (accept_prob - opts.target_accept);
            w_n += 1;
            let xv = Vector4::from(x);
            let delta = xv - w_mean;
            w_mean += delta / w_n as f64;
            w_m2 += delta * (xv - w_mean).transpose();
            if it + 1 == window_start + window_len && it + 1 < n_warmup {
                let n = w_n as f64;
                // shrink towards a small multiple of the identity
                let cov = w_m2 / (n - 1.0).max(1.0) * (n / (n + 5.0)) + Matrix4::identity() * (1e-3 * 5.0 / (n + 5.0));
                if let Some(c) = cov.cholesky() {
                    if c.l().iter().all(|v| v.is_finite()) {
                        chol = c.l();
                    }
                }
                log_scale = (2.38 / d.sqrt()).ln();
                window_start = it + 1;
                window_len = (window_len * 2).min(n_warmup - window_start);
                w_n = 0;
                w_mean = Vector4::zeros();
                w_m2 = Matrix4::zeros();
            }
        } else if (it - n_warmup) % opts.thin == 0 {
            draws.push(Hyperparams::from_unconstrained(&x));
            log_post.push(ll + lpr);
        }
    }
    if nonfinite * 2 > opts.n_iter {
        return Err(Error::ChainDiverged {
            chain,
            reason: format!("{nonfinite} of {} proposals had a non-finite target", opts.n_iter),
        });
    }
    let post = opts.n_iter - n_warmup;
    Ok(ChainOut { draws, log_post, acceptance: accepted as f64 / post as f64 })
}

fn run_chains(target: &Target, init: [f64; 4], init_sd: [f64; 4], opts: &McmcOptions, seed: u64) -> Result<HyperChain> {
    opts.validate()?;
    let outs: Vec<ChainOut> = (0..opts.n_chains)
        .into_par_iter()
        .map(|c| run_chain(target, init, init_sd, opts, seed, c))
        .collect::<Result<_>>()?;
    let k = outs.iter().map(|o| o.draws.len()).min().unwrap_or(0);
    let mut draws = Vec::with_capacity(k * outs.len());
    let mut log_post = Vec::with_capacity(k * outs.len());
    for o in &outs {
        draws.extend_from_slice(&o.draws[..k]);
        log_post.extend_from_slice(&o.log_post[..k]);
    }
    let mut chain = HyperChain {
        draws,
        log_post,
        n_chains: opts.n_chains,
        n_iter: opts.n_iter,
        n_warmup: opts.n_warmup(),
        thin: opts.thin,
        diagnostics: ChainDiagnostics {
            rhat: [f64::NAN; 4],
            ess: [f64::NAN; 4],
            acceptance: outs.iter().map(|o| o.acceptance).collect(),
            warnings: Vec::new(),
        },
    };
    const NAMES: [&str; 4] = ["beta", "alpha", "rho", "sigma"];
    for p in 0..4 {
        let per_chain = chain.param_chains(p);
        chain.diagnostics.rhat[p] = split_rhat(&per_chain);
        chain.diagnostics.ess[p] = effective_sample_size(&per_chain);
        if chain.diagnostics.rhat[p] > RHAT_WARN {
            chain.diagnostics.warnings.push(format!("split R-hat of {} is {:.4}", NAMES[p], chain.diagnostics.rhat[p]));
        }
        if chain.diagnostics.ess[p] < ESS_WARN {
            chain.diagnostics.warnings.push(format!("ESS of {} is {:.0}", NAMES[p], chain.diagnostics.ess[p]));
        }
    }
    for w in &chain.diagnostics.warnings {
        log::debug!("{w}");
    }
    Ok(chain)
}

fn prior_scale_sd(psi: &PriorSpec) -> [f64; 4] {
    let rel = |loc: f64| (psi.scale / loc).clamp(0.05, 1.0) * 0.5;
    [psi.scale * 0.5, rel(psi.alpha_loc), rel(psi.rho_loc), rel(psi.sigma_loc)]
}

/// Sample the hyperparameter posterior `p(theta | D) ~ L(theta) H(theta | psi)`.
///
/// Chains start at the prior locations (the MLE) with jitter; chain `c`
/// draws from stream `c` of a ChaCha generator seeded with `seed`.
pub fn sample_hyper_posterior(s: &ScoreSeries, psi: &PriorSpec, opts: &McmcOptions, seed: u64) -> Result<HyperChain> {
    psi.validate()?;
    let target = |h: &Hyperparams| -> Option<(f64, f64)> {
        let ll = marginal_loglik(h, s).ok()?;
        Some((ll, prior_logpdf(h, psi)))
    };
    let init = Hyperparams::new(psi.beta_loc, psi.alpha_loc, psi.rho_loc, psi.sigma_loc)?.to_unconstrained();
    let mut sd = [0.5, 0.1, 0.1, 0.1];
    sd[0] = 0.5f64.max(0.1 * psi.sigma_loc);
    run_chains(&target, init, sd, opts, seed)
}

/// Same sampler with the likelihood switched off; the draws then follow the
/// prior itself. Used to check the sampler and the Jacobian handling.
pub fn sample_hyper_prior(psi: &PriorSpec, opts: &McmcOptions, seed: u64) -> Result<HyperChain> {
    psi.validate()?;
    let target = |h: &Hyperparams| -> Option<(f64, f64)> { Some((0.0, prior_logpdf(h, psi))) };
    let init = Hyperparams::new(psi.beta_loc, psi.alpha_loc, psi.rho_loc, psi.sigma_loc)?.to_unconstrained();
    run_chains(&target, init, prior_scale_sd(psi), opts, seed)
}
