//! Season-level aggregation: ETI distribution summaries, per-team tables,
//! team clustering and the batch runner.

pub mod batch;
pub mod cluster;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub use batch::{fit_match, run_season, SeasonReport};
pub use cluster::{cluster_teams, loo_rmsep, loo_rmsep_grouped, Clustering, Partition};

/// Median posterior ETI of one match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEtiRecord {
    pub match_id: String,
    pub date: Option<String>,
    pub home_team: String,
    pub away_team: String,
    pub eti_median: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub skewness: f64,
    pub min: f64,
    pub max: f64,
}

/// Distribution summary of the per-match ETI medians.
pub fn season_stats(records: &[MatchEtiRecord]) -> Result<SeasonStats> {
    if records.len() < 2 {
        return Err(Error::InsufficientData(format!("{} records, need at least 2", records.len())));
    }
    let xs: Vec<f64> = records.iter().map(|r| r.eti_median).collect();
    Ok(SeasonStats {
        n: xs.len(),
        mean: stats::mean(&xs),
        median: stats::median(&xs),
        sd: stats::sd(&xs),
        skewness: stats::skewness(&xs),
        min: xs.iter().copied().fold(f64::INFINITY, f64::min),
        max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamSummary {
    pub team: String,
    pub matches: usize,
    pub average: f64,
    /// `n - 1` denominator; 0 for a team with a single match.
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub group_label: Option<String>,
}

/// ETI medians of every team's matches, each sorted ascending.
pub(crate) fn team_values(records: &[MatchEtiRecord]) -> BTreeMap<String, Vec<f64>> {
    let mut by_team: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_team.entry(r.home_team.clone()).or_default().push(r.eti_median);
        by_team.entry(r.away_team.clone()).or_default().push(r.eti_median);
    }
    for v in by_team.values_mut() {
        v.sort_by(f64::total_cmp);
    }
    by_team
}

/// Per-team summaries, each match counting for both of its teams, sorted by
/// average descending and then by team name.
pub fn team_table(records: &[MatchEtiRecord]) -> Result<Vec<TeamSummary>> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no records".into()));
    }
    if let Some(r) = records.iter().find(|r| !(r.eti_median.is_finite() && r.eti_median >= 0.0)) {
        return Err(Error::InvalidInput(format!("eti_median {} of match {}", r.eti_median, r.match_id)));
    }
    let mut rows: Vec<TeamSummary> = team_values(records)
        .into_iter()
        .map(|(team, v)| TeamSummary {
            team,
            matches: v.len(),
            average: stats::mean(&v),
            sd: stats::sd(&v),
            q025: stats::quantile_sorted(&v, 0.025),
            q50: stats::quantile_sorted(&v, 0.5),
            q975: stats::quantile_sorted(&v, 0.975),
            group_label: None,
        })
        .collect();
    rows.sort_by(|a, b| b.average.total_cmp(&a.average).then_with(|| a.team.cmp(&b.team)));
    Ok(rows)
}
