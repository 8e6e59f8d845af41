//! On-disk result bundle of one fitted match and the plot-data table built
//! from it.
//!
//! A bundle directory holds `series.json`, `mle.json`, `chain.csv`,
//! `posterior_mle.json` and `indices.json`. Every file is written to a
//! temporary sibling and renamed into place.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indices::IndexPosteriorSummary;
use crate::inference::{HyperChain, MleFit, PriorSpec};
use crate::ingest::ScoreSeries;
use crate::kernel::Hyperparams;
use crate::posterior::PointwiseMoments;

pub const SERIES_FILE: &str = "series.json";
pub const MLE_FILE: &str = "mle.json";
pub const CHAIN_FILE: &str = "chain.csv";
pub const POSTERIOR_FILE: &str = "posterior_mle.json";
pub const INDICES_FILE: &str = "indices.json";

/// `Phi^{-1}(0.975)`.
pub const Z975: f64 = 1.959_963_984_540_054;

/// Everything produced by fitting one match.
#[derive(Debug, Clone)]
pub struct MatchBundle {
    pub series: ScoreSeries,
    pub mle: MleFit,
    pub prior: PriorSpec,
    pub chain: HyperChain,
    pub posterior_mle: PointwiseMoments,
    pub summary: IndexPosteriorSummary,
}

#[derive(Serialize)]
struct MleFile<'a> {
    theta: &'a Hyperparams,
    loglik: f64,
    starts: &'a [Hyperparams],
    /// Non-finite values (failed starts) are written as null.
    start_logliks: Vec<Option<f64>>,
    prior: &'a PriorSpec,
    diagnostics: &'a crate::inference::mcmc::ChainDiagnostics,
}

#[derive(Deserialize)]
struct MleTheta {
    theta: Hyperparams,
}

/// Write `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

impl MatchBundle {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join(SERIES_FILE), self.series.to_json()?.as_bytes())?;
        let mle = MleFile {
            theta: &self.mle.theta,
            loglik: self.mle.loglik,
            starts: &self.mle.starts,
            start_logliks: self.mle.start_logliks.iter().map(|l| l.is_finite().then_some(*l)).collect(),
            prior: &self.prior,
            diagnostics: &self.chain.diagnostics,
        };
        write_json_atomic(&dir.join(MLE_FILE), &mle)?;
        let mut csv = Vec::new();
        self.chain.write_csv(&mut csv)?;
        write_atomic(&dir.join(CHAIN_FILE), &csv)?;
        write_json_atomic(&dir.join(POSTERIOR_FILE), &self.posterior_mle)?;
        write_json_atomic(&dir.join(INDICES_FILE), &self.summary)
    }
}

/// The parts of a bundle needed for plot data.
#[derive(Debug, Clone)]
pub struct BundleView {
    pub theta: Hyperparams,
    pub posterior_mle: PointwiseMoments,
    pub summary: IndexPosteriorSummary,
}

fn read_part(dir: &Path, name: &str) -> Result<String> {
    std::fs::read_to_string(dir.join(name)).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingBundle(dir.join(name).display().to_string()),
        _ => Error::Io(e),
    })
}

pub fn read_bundle(dir: &Path) -> Result<BundleView> {
    if !dir.is_dir() {
        return Err(Error::MissingBundle(dir.display().to_string()));
    }
    let theta = serde_json::from_str::<MleTheta>(&read_part(dir, MLE_FILE)?)?.theta;
    let posterior_mle: PointwiseMoments = serde_json::from_str(&read_part(dir, POSTERIOR_FILE)?)?;
    let summary: IndexPosteriorSummary = serde_json::from_str(&read_part(dir, INDICES_FILE)?)?;
    if posterior_mle.grid != summary.grid {
        return Err(Error::InvalidInput("posterior and index grids differ".into()));
    }
    Ok(BundleView { theta, posterior_mle, summary })
}

/// One row per grid point; bounds are central 95% intervals at the MLE, the
/// predictive ones adding the observation noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub t: f64,
    pub mu_d: f64,
    pub cred_lower: f64,
    pub cred_upper: f64,
    pub pred_lower: f64,
    pub pred_upper: f64,
    pub tdi_mean: f64,
    pub tdi_q025: f64,
    pub tdi_q05: f64,
    pub tdi_q50: f64,
    pub tdi_q95: f64,
    pub tdi_q975: f64,
    pub deti_q50: f64,
}

pub fn plot_rows(view: &BundleView) -> Vec<PlotRow> {
    let m = &view.posterior_mle;
    let s = &view.summary;
    let pred_var = m.predictive_var(view.theta.sigma);
    (0..m.grid.len())
        .map(|i| {
            let half = Z975 * m.var_d[i].sqrt();
            let pred_half = Z975 * pred_var[i].sqrt();
            PlotRow {
                t: m.grid[i],
                mu_d: m.mu_d[i],
                cred_lower: m.mu_d[i] - half,
                cred_upper: m.mu_d[i] + half,
                pred_lower: m.mu_d[i] - pred_half,
                pred_upper: m.mu_d[i] + pred_half,
                tdi_mean: s.tdi_mean[i],
                tdi_q025: s.tdi_q025[i],
                tdi_q05: s.tdi_q05[i],
                tdi_q50: s.tdi_q50[i],
                tdi_q95: s.tdi_q95[i],
                tdi_q975: s.tdi_q975[i],
                deti_q50: s.deti_q50[i],
            }
        })
        .collect()
}

pub fn write_plot_csv(path: &Path, rows: &[PlotRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}
