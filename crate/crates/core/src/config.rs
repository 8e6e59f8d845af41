//! Run configuration shared by the library pipeline and the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::indices::{DEFAULT_GRID_POINTS, DEFAULT_MAX_DRAWS};
use crate::inference::prior::{DEFAULT_PRIOR_DF, DEFAULT_PRIOR_SCALE};
use crate::inference::{McmcOptions, MleOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Number of equidistant evaluation points on `[0, domain_end]`.
    pub grid_points: usize,
    /// Regulation length of a match in minutes; later events are dropped.
    pub domain_end: f64,
    pub prior_scale: f64,
    pub prior_df: f64,
    pub mcmc: McmcOptions,
    pub mle: MleOptions,
    /// Upper bound on hyperparameter draws used for index summaries.
    pub max_draws: usize,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    /// Worker threads for batch runs; 0 uses all available cores.
    pub workers: usize,
    /// Largest group count tried when clustering teams.
    pub c_max: usize,
    /// RMSEP improvement below which adding a group is not worth it.
    pub cluster_tol: f64,
    /// Fraction of failed matches above which a season run fails.
    pub max_failed_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            domain_end: 48.0,
            prior_scale: DEFAULT_PRIOR_SCALE,
            prior_df: DEFAULT_PRIOR_DF,
            mcmc: McmcOptions::default(),
            mle: MleOptions::default(),
            max_draws: DEFAULT_MAX_DRAWS,
            out_dir: None,
            seed: 0,
            workers: 0,
            c_max: 8,
            cluster_tol: 1e-3,
            max_failed_fraction: 0.05,
        }
    }
}

impl RunConfig {
    /// Load from a `.toml` or `.json` file (by extension; TOML otherwise).
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?,
            _ => toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 2 {
            return Err(Error::Config("grid_points must be at least 2".into()));
        }
        if !(self.domain_end.is_finite() && self.domain_end > 0.0) {
            return Err(Error::Config("domain_end must be positive".into()));
        }
        if !(self.prior_scale > 0.0 && self.prior_df > 0.0) {
            return Err(Error::Config("prior scale and df must be positive".into()));
        }
        if self.max_draws == 0 || self.c_max == 0 || self.mle.starts == 0 {
            return Err(Error::Config("max_draws, c_max and mle.starts must be positive".into()));
        }
        if !(self.cluster_tol >= 0.0) || !(0.0..=1.0).contains(&self.max_failed_fraction) {
            return Err(Error::Config("cluster_tol must be >= 0 and max_failed_fraction in [0, 1]".into()));
        }
        self.mcmc.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn grid(&self) -> Vec<f64> {
        crate::indices::default_grid(self.domain_end, self.grid_points)
    }

    /// Hex SHA-256 over every setting that affects per-match results.
    pub fn result_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        c.workers = 0;
        c.c_max = 0;
        c.cluster_tol = 0.0;
        c.max_failed_fraction = 0.0;
        let text = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Deterministic sub-seed for a labelled job.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.grid().len(), 241);
        assert_eq!(c.grid()[240], 48.0);
    }

    #[test]
    fn toml_partial_override() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "grid_points = 3\nseed = 9\n[mcmc]\nn_chains = 2\n").unwrap();
        let c = RunConfig::from_path(&p).unwrap();
        assert_eq!(c.grid(), vec![0.0, 24.0, 48.0]);
        assert_eq!(c.seed, 9);
        assert_eq!(c.mcmc.n_chains, 2);
        assert_eq!(c.mcmc.n_iter, 5000);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"grid_pts": 3}"#).unwrap();
        assert!(matches!(RunConfig::from_path(&p), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_output_settings() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = Some("x".into());
        b.workers = 7;
        assert_eq!(a.result_hash(), b.result_hash());
        b.seed = 1;
        assert_ne!(a.result_hash(), b.result_hash());
    }

    #[test]
    fn seeds_fan_out() {
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
    }
}
