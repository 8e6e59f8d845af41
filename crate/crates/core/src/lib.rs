//! Latent Gaussian-process model for the running score difference of a
//! two-team match.
//!
//! The crate fits a constant-mean, squared-exponential Gaussian process to the
//! away-minus-home score difference, derives the joint posterior of the latent
//! process and its first two time derivatives, and turns those moments into
//! two indices:
//!
//! * the **Trend Direction Index** (TDI), the posterior probability that the
//!   score difference is currently increasing, and
//! * the **Excitement Trend Index** (ETI), the expected number of
//!   monotonicity changes over the match.
//!
//! Hyperparameters are estimated by marginal maximum likelihood and then
//! sampled with an adaptive random-walk Metropolis sampler under
//! heavy-tailed Student-t priors centred at the estimates. The `season`
//! module batches whole seasons and clusters teams by leave-one-out RMSEP.

pub mod bundle;
pub mod config;
pub mod error;
pub mod indices;
pub mod inference;
pub mod ingest;
pub mod kernel;
pub mod linalg;
pub mod posterior;
pub mod season;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use ingest::ScoreSeries;
pub use kernel::Hyperparams;
pub use posterior::PosteriorMoments;
