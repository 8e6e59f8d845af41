//! Clustering of ETI-ranked teams into contiguous groups by leave-one-out
//! RMSEP of a group-mean model.
//!
//! Each match contributes one observation per participating team, assigned
//! to that team's group. Under a group-mean model the leave-one-out residual
//! of observation `i` in a group of size `n` is `n / (n - 1) * (y_i - mean)`,
//! so a partition is scored in closed form.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{team_table, team_values, MatchEtiRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub c: usize,
    /// Ranks at which a new group starts, strictly increasing in `1..n`.
    pub cut_ranks: Vec<usize>,
    /// `+inf` when some group holds a single observation.
    pub rmsep: f64,
    /// In-sample residual sum of squares around the group means.
    pub rss: f64,
}

impl Partition {
    /// Group index of every rank in `0..n`.
    pub fn assignment(&self, n: usize) -> Vec<usize> {
        let mut g = 0;
        (0..n)
            .map(|r| {
                while g < self.cut_ranks.len() && r >= self.cut_ranks[g] {
                    g += 1;
                }
                g
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    LooRmsep,
    InSampleRss,
}

/// `A, B, ..., Z, AA, AB, ...`
pub fn group_label(i: usize) -> String {
    let mut i = i + 1;
    let mut s = Vec::new();
    while i > 0 {
        i -= 1;
        s.push(b'A' + (i % 26) as u8);
        i /= 26;
    }
    s.reverse();
    String::from_utf8(s).expect("ascii")
}

/// LOO RMSEP of observations given as `(group, value)` pairs.
pub fn loo_rmsep_grouped(obs: &[(usize, f64)]) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::InsufficientData("no observations".into()));
    }
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &(g, y) in obs {
        groups.entry(g).or_default().push(y);
    }
    let mut total = 0.0;
    for v in groups.values_mut() {
        if v.len() < 2 {
            return Err(Error::SingletonGroupObservation);
        }
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let f = n / (n - 1.0);
        total += v.iter().map(|y| (f * (y - m)).powi(2)).sum::<f64>();
    }
    Ok((total / obs.len() as f64).sqrt())
}

fn rss_grouped(obs: &[(usize, f64)]) -> f64 {
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &(g, y) in obs {
        groups.entry(g).or_default().push(y);
    }
    groups
        .values_mut()
        .map(|v| {
            v.sort_by(f64::total_cmp);
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|y| (y - m).powi(2)).sum::<f64>()
        })
        .sum()
}

/// LOO RMSEP of a team partition over match records (one observation per
/// team-match).
pub fn loo_rmsep(records: &[MatchEtiRecord], groups: &HashMap<String, usize>) -> Result<f64> {
    let mut obs = Vec::with_capacity(2 * records.len());
    for (team, vals) in team_values(records) {
        let g = *groups
            .get(&team)
            .ok_or_else(|| Error::InvalidInput(format!("team {team} has no group")))?;
        obs.extend(vals.into_iter().map(|y| (g, y)));
    }
    loo_rmsep_grouped(&obs)
}

/// Teams in ranking order with their sorted observations and prefix sums for
/// constant-time segment scoring.
#[derive(Debug, Clone)]
pub struct RankedTeams {
    pub teams: Vec<String>,
    pub averages: Vec<f64>,
    values: Vec<Vec<f64>>,
    cnt: Vec<f64>,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

impl RankedTeams {
    /// Rank teams by season-average ETI, highest first.
    pub fn from_records(records: &[MatchEtiRecord]) -> Result<Self> {
        let table = team_table(records)?;
        let mut by_team = team_values(records);
        let teams: Vec<String> = table.iter().map(|t| t.team.clone()).collect();
        let averages = table.iter().map(|t| t.average).collect();
        let values: Vec<Vec<f64>> = teams.iter().map(|t| by_team.remove(t).unwrap_or_default()).collect();
        let all: usize = values.iter().map(Vec::len).sum();
        // centring keeps the sum-of-squares differences well conditioned
        let shift = values.iter().flatten().sum::<f64>() / all as f64;
        let (mut cnt, mut sum, mut sumsq) = (vec![0.0], vec![0.0], vec![0.0]);
        for v in &values {
            let s: f64 = v.iter().map(|y| y - shift).sum();
            let q: f64 = v.iter().map(|y| (y - shift).powi(2)).sum();
            cnt.push(cnt.last().unwrap() + v.len() as f64);
            sum.push(sum.last().unwrap() + s);
            sumsq.push(sumsq.last().unwrap() + q);
        }
        Ok(Self { teams, averages, values, cnt, sum, sumsq })
    }

    pub fn len(&self) -> usize {
        self.teams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.teams.is_empty()
    }

    pub fn n_obs(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    fn segment_cost(&self, i: usize, j: usize, objective: Objective) -> f64 {
        let n = self.cnt[j] - self.cnt[i];
        let s = self.sum[j] - self.sum[i];
        let ss = (self.sumsq[j] - self.sumsq[i] - s * s / n).max(0.0);
        match objective {
            Objective::InSampleRss => ss,
            Objective::LooRmsep if n < 2.0 => f64::INFINITY,
            Objective::LooRmsep => (n / (n - 1.0)).powi(2) * ss,
        }
    }

    fn observations(&self, cut_ranks: &[usize]) -> Vec<(usize, f64)> {
        let p = Partition { c: cut_ranks.len() + 1, cut_ranks: cut_ranks.to_vec(), rmsep: 0.0, rss: 0.0 };
        p.assignment(self.len())
            .into_iter()
            .zip(&self.values)
            .flat_map(|(g, v)| v.iter().map(move |&y| (g, y)))
            .collect()
    }

    /// Score a cut vector directly from the observations.
    pub fn evaluate(&self, cut_ranks: &[usize]) -> Partition {
        let obs = self.observations(cut_ranks);
        let rmsep = match loo_rmsep_grouped(&obs) {
            Ok(r) => r,
            Err(_) => f64::INFINITY,
        };
        Partition { c: cut_ranks.len() + 1, cut_ranks: cut_ranks.to_vec(), rmsep, rss: rss_grouped(&obs) }
    }

    /// Exhaustive search over the `choose(n - 1, c - 1)` contiguous
    /// partitions; ties keep the lexicographically smallest cut vector.
    pub fn best(&self, c: usize, objective: Objective) -> Result<Partition> {
        let n = self.len();
        if c == 0 || c > n {
            return Err(Error::InvalidInput(format!("group count {c} outside 1..={n}")));
        }
        let k = c - 1;
        let mut cuts: Vec<usize> = (1..=k).collect();
        let mut best_cuts = cuts.clone();
        let mut best_score = f64::INFINITY;
        let mut first = true;
        loop {
            let mut score = 0.0;
            let mut start = 0;
            for &e in cuts.iter().chain(std::iter::once(&n)) {
                score += self.segment_cost(start, e, objective);
                start = e;
            }
            if first || score < best_score {
                best_score = score;
                best_cuts.clone_from(&cuts);
                first = false;
            }
            // next combination of k values from 1..n in lexicographic order
            let mut i = k;
            while i > 0 && cuts[i - 1] == n - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            cuts[i - 1] += 1;
            for j in i..k {
                cuts[j] = cuts[j - 1] + 1;
            }
        }
        Ok(self.evaluate(&best_cuts))
    }
}

/// Best partition per group count and the selected count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    /// Teams ordered by season-average ETI, highest first.
    pub ranking: Vec<String>,
    pub averages: Vec<f64>,
    /// Entry `c - 1` is the best partition into `c` groups.
    pub partitions: Vec<Partition>,
    pub selected_c: usize,
}

impl Clustering {
    pub fn selected(&self) -> &Partition {
        &self.partitions[self.selected_c - 1]
    }

    /// Group label of every team under the partition into `c` groups.
    pub fn labels(&self, c: usize) -> Vec<(String, String)> {
        let p = &self.partitions[c - 1];
        p.assignment(self.ranking.len())
            .into_iter()
            .zip(&self.ranking)
            .map(|(g, t)| (t.clone(), group_label(g)))
            .collect()
    }

    /// JSON document with per-`c` scores, cuts and labelled groups.
    pub fn to_json_value(&self) -> serde_json::Value {
        let parts: Vec<serde_json::Value> = self
            .partitions
            .iter()
            .map(|p| {
                let assign = p.assignment(self.ranking.len());
                let groups: Vec<serde_json::Value> = (0..p.c)
                    .map(|g| {
                        let teams: Vec<&String> =
                            self.ranking.iter().zip(&assign).filter(|(_, &a)| a == g).map(|(t, _)| t).collect();
                        serde_json::json!({ "label": group_label(g), "teams": teams })
                    })
                    .collect();
                serde_json::json!({
                    "c": p.c,
                    // JSON has no infinity
                    "rmsep": if p.rmsep.is_finite() { Some(p.rmsep) } else { None },
                    "rss": p.rss,
                    "cut_ranks": p.cut_ranks,
                    "groups": groups,
                })
            })
            .collect();
        serde_json::json!({
            "ranking": self.ranking,
            "averages": self.averages,
            "selected_c": self.selected_c,
            "partitions": parts,
        })
    }
}

/// Cluster ETI-ranked teams for `c = 1..=c_max` and select the smallest `c`
/// after which the RMSEP improves by less than `tol`.
pub fn cluster_teams(records: &[MatchEtiRecord], c_max: usize, tol: f64) -> Result<Clustering> {
    let ranked = RankedTeams::from_records(records)?;
    let c_max = c_max.min(ranked.len()).max(1);
    let partitions = (1..=c_max)
        .map(|c| ranked.best(c, Objective::LooRmsep))
        .collect::<Result<Vec<_>>>()?;
    let selected_c = select_c(&partitions.iter().map(|p| p.rmsep).collect::<Vec<_>>(), tol)
        .ok_or_else(|| Error::InsufficientData("every partition has a singleton group".into()))?;
    Ok(Clustering { ranking: ranked.teams, averages: ranked.averages, partitions, selected_c })
}

/// Smallest `c` (1-based) with finite score whose successor improves by
/// less than `tol`.
pub fn select_c(rmsep: &[f64], tol: f64) -> Option<usize> {
    (0..rmsep.len())
        .find(|&i| rmsep[i].is_finite() && (i + 1 == rmsep.len() || rmsep[i] - rmsep[i + 1] < tol))
        .map(|i| i + 1)
}
