//! Hyperparameter inference: marginal likelihood, maximum-likelihood fit,
//! Student-t hyperpriors and random-walk Metropolis sampling.

pub mod diagnostics;
pub mod likelihood;
pub mod mcmc;
pub mod mle;
pub mod prior;

pub use diagnostics::{effective_sample_size, split_rhat};
pub use likelihood::{log_marginal_likelihood, marginal_loglik, marginal_loglik_grad};
pub use mcmc::{sample_hyper_posterior, sample_hyper_prior, HyperChain, McmcOptions};
pub use mle::{fit_mle, MleFit, MleOptions};
pub use prior::{prior_logpdf, PriorSpec};
