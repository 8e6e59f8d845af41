//! Batch fitting of a season with a resumable on-disk cache.
//!
//! Each match is an independent job: MLE, hyperprior, MCMC, index summary.
//! Finished matches leave a bundle under `matches/<id>/` and a cache entry
//! under `cache/` keyed by the match id and a hash of the result-relevant
//! configuration; rerunning with the same configuration skips them.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cluster::{cluster_teams, Clustering};
use super::{season_stats, team_table, MatchEtiRecord, SeasonStats, TeamSummary};
use crate::bundle::{write_atomic, write_json_atomic, MatchBundle};
use crate::config::{derive_seed, RunConfig};
use crate::error::{Error, Result};
use crate::indices::summarize_over_chain;
use crate::inference::{fit_mle, sample_hyper_posterior, PriorSpec};
use crate::ingest::{parse_play_by_play, read_play_by_play, split_matches, ScoreSeries};
use crate::posterior::pointwise_moments;

pub const SEASON_ETI_FILE: &str = "season_eti.csv";
pub const TEAM_TABLE_FILE: &str = "team_table.csv";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const SEASON_STATS_FILE: &str = "season_stats.json";

/// Full per-match pipeline with sub-seeds derived from `seed`.
pub fn fit_match(s: &ScoreSeries, cfg: &RunConfig, seed: u64) -> Result<MatchBundle> {
    let grid = cfg.grid();
    let mut mle_opts = cfg.mle;
    mle_opts.seed = derive_seed(seed, "mle");
    let mle = fit_mle(s, &mle_opts)?;
    let prior = PriorSpec::new(mle.theta, cfg.prior_scale, cfg.prior_df)?;
    let chain = sample_hyper_posterior(s, &prior, &cfg.mcmc, derive_seed(seed, "mcmc"))?;
    for w in &chain.diagnostics.warnings {
        log::warn!("match {}: {w}", s.match_id);
    }
    let posterior_mle = pointwise_moments(s, &mle.theta, &grid)?;
    let summary = summarize_over_chain(s, &chain, &grid, cfg.max_draws)?;
    Ok(MatchBundle { series: s.clone(), mle, prior, chain, posterior_mle, summary })
}

/// Seed of a match derived from the run seed and its id.
pub fn match_seed(cfg: &RunConfig, match_id: &str) -> u64 {
    derive_seed(cfg.seed, match_id)
}

/// One match read from the season input, or the reason it could not be read.
#[derive(Debug)]
pub struct MatchInput {
    pub match_id: String,
    pub series: Result<ScoreSeries>,
}

fn inputs_from_csv(path: &Path, domain_end: f64) -> Vec<MatchInput> {
    let rows = File::open(path).map_err(Error::from).and_then(read_play_by_play);
    match rows {
        Ok(rows) => split_matches(rows)
            .into_iter()
            .map(|(id, rows)| MatchInput { match_id: id, series: parse_play_by_play(&rows, domain_end) })
            .collect(),
        Err(e) => vec![MatchInput { match_id: path.display().to_string(), series: Err(e) }],
    }
}

fn input_from_json(path: &Path) -> MatchInput {
    let series = std::fs::read_to_string(path).map_err(Error::from).and_then(|t| ScoreSeries::from_json(&t));
    let match_id = match &series {
        Ok(s) => s.match_id.clone(),
        Err(_) => path.display().to_string(),
    };
    MatchInput { match_id, series }
}

/// Read a play-by-play CSV, a series JSON, or a directory of either
/// (files in name order).
pub fn load_matches(path: &Path, domain_end: f64) -> Result<Vec<MatchInput>> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        v.retain(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv") | Some("json")));
        v.sort();
        v
    } else if path.is_file() {
        vec![path.to_path_buf()]
    } else {
        return Err(Error::InvalidInput(format!("input {} does not exist", path.display())));
    };
    let mut out = Vec::new();
    for f in files {
        if f.extension().and_then(|e| e.to_str()) == Some("json") {
            out.push(input_from_json(&f));
        } else {
            out.extend(inputs_from_csv(&f, domain_end));
        }
    }
    let mut seen = HashSet::new();
    for m in &mut out {
        if !seen.insert(m.match_id.clone()) && m.series.is_ok() {
            m.series = Err(Error::InvalidInput(format!("duplicate match id {}", m.match_id)));
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("no match files under {}", path.display())));
    }
    Ok(out)
}

/// File-system-safe rendering of a match id.
pub fn safe_name(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    if s.is_empty() || s.starts_with('.') {
        format!("_{s}")
    } else {
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheEntry {
    match_id: String,
    config_hash: String,
    record: MatchEtiRecord,
}

fn cache_path(out: &Path, match_id: &str, config_hash: &str) -> PathBuf {
    let mut h = Sha256::new();
    h.update(match_id.as_bytes());
    h.update([0u8]);
    h.update(config_hash.as_bytes());
    let key: String = h.finalize()[..12].iter().map(|b| format!("{b:02x}")).collect();
    out.join("cache").join(format!("{key}.json"))
}

fn read_cache(path: &Path, match_id: &str, config_hash: &str) -> Option<MatchEtiRecord> {
    let text = std::fs::read_to_string(path).ok()?;
    let e: CacheEntry = serde_json::from_str(&text).ok()?;
    (e.match_id == match_id && e.config_hash == config_hash).then_some(e.record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchFailure {
    pub match_id: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SeasonReport {
    /// Successful matches in input order.
    pub records: Vec<MatchEtiRecord>,
    pub failures: Vec<MatchFailure>,
    pub cache_hits: usize,
    pub stats: Option<SeasonStats>,
    pub teams: Vec<TeamSummary>,
    pub clustering: Option<Clustering>,
}

impl SeasonReport {
    pub fn total(&self) -> usize {
        self.records.len() + self.failures.len()
    }

    pub fn failed_fraction(&self) -> f64 {
        self.failures.len() as f64 / self.total().max(1) as f64
    }
}

enum Outcome {
    Done(MatchEtiRecord, bool),
    Failed(MatchFailure),
}

fn run_one(m: &MatchInput, cfg: &RunConfig, out: &Path, config_hash: &str) -> Outcome {
    let fail = |e: &Error| {
        log::warn!("match {} failed: {e}", m.match_id);
        Outcome::Failed(MatchFailure { match_id: m.match_id.clone(), kind: e.kind().to_string(), message: e.to_string() })
    };
    let s = match &m.series {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let cpath = cache_path(out, &m.match_id, config_hash);
    if let Some(rec) = read_cache(&cpath, &m.match_id, config_hash) {
        log::info!("cache hit for match {}", m.match_id);
        return Outcome::Done(rec, true);
    }
    let res = fit_match(s, cfg, match_seed(cfg, &m.match_id)).and_then(|b| {
        b.write(&out.join("matches").join(safe_name(&m.match_id)))?;
        let record = MatchEtiRecord {
            match_id: s.match_id.clone(),
            date: s.date.clone(),
            home_team: s.home_team.clone(),
            away_team: s.away_team.clone(),
            eti_median: b.summary.eti_median,
        };
        let entry = CacheEntry { match_id: m.match_id.clone(), config_hash: config_hash.to_string(), record };
        write_json_atomic(&cpath, &entry)?;
        Ok(entry.record)
    });
    match res {
        Ok(rec) => {
            log::info!("match {} done, eti_median {:.3}", m.match_id, rec.eti_median);
            Outcome::Done(rec, false)
        }
        Err(e) => fail(&e),
    }
}

/// Fit every match on a bounded worker pool, then write `season_eti.csv`,
/// `team_table.csv`, `clusters.json` and `season_stats.json` under `out`.
pub fn run_season(inputs: &[MatchInput], cfg: &RunConfig, out: &Path) -> Result<SeasonReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let config_hash = cfg.result_hash();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let outcomes: Vec<Outcome> = pool.install(|| inputs.par_iter().map(|m| run_one(m, cfg, out, &config_hash)).collect());

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut cache_hits = 0;
    for o in outcomes {
        match o {
            Outcome::Done(r, hit) => {
                cache_hits += hit as usize;
                records.push(r);
            }
            Outcome::Failed(f) => failures.push(f),
        }
    }
    let mut report = SeasonReport { records, failures, cache_hits, stats: None, teams: Vec::new(), clustering: None };
    write_season_outputs(&mut report, cfg, out)?;
    Ok(report)
}

/// Aggregate the records of a report and write the season files.
pub fn write_season_outputs(report: &mut SeasonReport, cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &report.records {
        w.serialize(r)?;
    }
    if report.records.is_empty() {
        w.write_record(["match_id", "date", "home_team", "away_team", "eti_median"])?;
    }
    write_atomic(&out.join(SEASON_ETI_FILE), &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;

    report.stats = season_stats(&report.records).map_err(|e| log::warn!("no season statistics: {e}")).ok();
    if let Some(st) = &report.stats {
        write_json_atomic(&out.join(SEASON_STATS_FILE), st)?;
    }
    if report.records.is_empty() {
        return Ok(());
    }
    report.teams = team_table(&report.records)?;
    report.clustering = cluster_teams(&report.records, cfg.c_max, cfg.cluster_tol)
        .map_err(|e| log::warn!("no clustering: {e}"))
        .ok();
    if let Some(cl) = &report.clustering {
        let labels: HashMap<String, String> = cl.labels(cl.selected_c).into_iter().collect();
        for t in &mut report.teams {
            t.group_label = labels.get(&t.team).cloned();
        }
        write_json_atomic(&out.join(CLUSTERS_FILE), &cl.to_json_value())?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in &report.teams {
        w.serialize(t)?;
    }
    write_atomic(&out.join(TEAM_TABLE_FILE), &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
}
