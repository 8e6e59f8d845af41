//! Play-by-play ingestion.
//!
//! Input rows carry cumulative scores; a [`ScoreSeries`] carries the
//! away-minus-home difference after each scoring event, restricted to the
//! time domain `(0, domain_end]`.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DOMAIN_END: f64 = 48.0;

/// One row of the play-by-play CSV
/// (`match_id,date,home_team,away_team,minute,home_score,away_score`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayRow {
    pub match_id: String,
    #[serde(default)]
    pub date: String,
    pub home_team: String,
    pub away_team: String,
    /// Minutes elapsed since tip-off.
    pub minute: f64,
    pub home_score: f64,
    pub away_score: f64,
}

/// Scoring times and away-minus-home score differences of one match.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub match_id: String,
    pub date: Option<String>,
    pub home_team: String,
    pub away_team: String,
    pub times: Vec<f64>,
    pub diffs: Vec<f64>,
    pub domain_end: f64,
}

#[derive(Serialize, Deserialize)]
struct EventJson {
    t: f64,
    d: f64,
}

#[derive(Serialize, Deserialize)]
struct SeriesJson {
    match_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    date: Option<String>,
    home_team: String,
    away_team: String,
    domain_end: f64,
    events: Vec<EventJson>,
}

impl ScoreSeries {
    pub fn new(
        match_id: impl Into<String>,
        home_team: impl Into<String>,
        away_team: impl Into<String>,
        times: Vec<f64>,
        diffs: Vec<f64>,
        domain_end: f64,
    ) -> Result<Self> {
        let s = Self {
            match_id: match_id.into(),
            date: None,
            home_team: home_team.into(),
            away_team: away_team.into(),
            times,
            diffs,
            domain_end,
        };
        s.check()?;
        Ok(s)
    }

    /// Build a series from bare vectors, e.g. for synthetic data.
    pub fn from_events(times: Vec<f64>, diffs: Vec<f64>, domain_end: f64) -> Result<Self> {
        Self::new("synthetic", "home", "away", times, diffs, domain_end)
    }

    fn check(&self) -> Result<()> {
        if !(self.domain_end.is_finite() && self.domain_end > 0.0) {
            return Err(Error::InvalidInput(format!("domain_end = {}", self.domain_end)));
        }
        if self.times.len() != self.diffs.len() {
            return Err(Error::InvalidInput("times and diffs differ in length".into()));
        }
        if self.times.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "match {} has {} events, need at least 2",
                self.match_id,
                self.times.len()
            )));
        }
        if self.times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("times are not sorted".into()));
        }
        if let Some(t) = self.times.iter().find(|&&t| !(t > 0.0 && t <= self.domain_end)) {
            return Err(Error::InvalidInput(format!("time {t} outside (0, {}]", self.domain_end)));
        }
        if self.diffs.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidInput("non-finite score difference".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The same match seen from the home team: all differences negated.
    pub fn flipped(&self) -> Self {
        let mut s = self.clone();
        s.diffs.iter_mut().for_each(|d| *d = -*d);
        std::mem::swap(&mut s.home_team, &mut s.away_team);
        s
    }

    /// Canonical JSON `{match_id, home_team, away_team, domain_end, events: [{t, d}]}`.
    pub fn to_json(&self) -> Result<String> {
        let j = SeriesJson {
            match_id: self.match_id.clone(),
            date: self.date.clone(),
            home_team: self.home_team.clone(),
            away_team: self.away_team.clone(),
            domain_end: self.domain_end,
            events: self.times.iter().zip(&self.diffs).map(|(&t, &d)| EventJson { t, d }).collect(),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: SeriesJson = serde_json::from_str(text)?;
        let mut s = Self::new(
            j.match_id,
            j.home_team,
            j.away_team,
            j.events.iter().map(|e| e.t).collect(),
            j.events.iter().map(|e| e.d).collect(),
            j.domain_end,
        )?;
        s.date = j.date;
        Ok(s)
    }
}

/// Read play-by-play rows from CSV with a header line.
pub fn read_play_by_play<R: Read>(reader: R) -> Result<Vec<PlayRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Group rows by `match_id`, keeping matches in order of first appearance
/// and rows in input order.
pub fn split_matches(rows: Vec<PlayRow>) -> Vec<(String, Vec<PlayRow>)> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut out: Vec<(String, Vec<PlayRow>)> = Vec::new();
    for row in rows {
        match index.get(&row.match_id) {
            Some(&i) => out[i].1.push(row),
            None => {
                index.insert(row.match_id.clone(), out.len());
                out.push((row.match_id.clone(), vec![row]));
            }
        }
    }
    out
}

/// Turn the rows of one match into a [`ScoreSeries`].
///
/// Rows are stably sorted by minute, rows after `domain_end` (overtime) and
/// rows at minute 0 are dropped, and each remaining row contributes
/// `away_score - home_score`.
pub fn parse_play_by_play(rows: &[PlayRow], domain_end: f64) -> Result<ScoreSeries> {
    let first = rows.first().ok_or_else(|| Error::InvalidInput("no rows for match".into()))?;
    let match_id = first.match_id.clone();
    if let Some(r) = rows.iter().find(|r| r.match_id != match_id) {
        return Err(Error::InvalidInput(format!(
            "rows of several matches passed together ({match_id}, {})",
            r.match_id
        )));
    }
    for r in rows {
        if !(r.minute.is_finite() && r.minute >= 0.0) {
            return Err(Error::InvalidInput(format!("bad minute {} in match {match_id}", r.minute)));
        }
        if !(r.home_score.is_finite() && r.away_score.is_finite()) {
            return Err(Error::InvalidInput(format!("bad score in match {match_id}")));
        }
    }
    let mut sorted: Vec<&PlayRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.minute.total_cmp(&b.minute));
    let kept: Vec<&PlayRow> = sorted
        .into_iter()
        .filter(|r| r.minute > 0.0 && r.minute <= domain_end)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyAfterTruncation(match_id));
    }
    for w in kept.windows(2) {
        if w[1].home_score < w[0].home_score || w[1].away_score < w[0].away_score {
            return Err(Error::NonMonotoneScores { match_id, minute: w[1].minute });
        }
    }
    let mut s = ScoreSeries::new(
        match_id,
        first.home_team.clone(),
        first.away_team.clone(),
        kept.iter().map(|r| r.minute).collect(),
        kept.iter().map(|r| r.away_score - r.home_score).collect(),
        domain_end,
    )?;
    if !first.date.is_empty() {
        s.date = Some(first.date.clone());
    }
    Ok(s)
}

/// Minutes elapsed at a point given as (period, seconds left on the clock),
/// with NBA period lengths (4 x 12 minutes, 5-minute overtimes).
pub fn nba_minutes_elapsed(period: u32, seconds_remaining: f64) -> f64 {
    const REGULATION: u32 = 4;
    let (start, len) = if period <= REGULATION {
        (12.0 * (period.saturating_sub(1)) as f64, 12.0)
    } else {
        (48.0 + 5.0 * (period - REGULATION - 1) as f64, 5.0)
    };
    start + len - seconds_remaining / 60.0
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeriesWarning {
    DuplicateTimestamp { t: f64 },
    ShortSeries { events: usize },
    LargeDifference { max_abs: f64 },
}

impl fmt::Display for SeriesWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeriesWarning::DuplicateTimestamp { t } => write!(f, "duplicate timestamp at t = {t}"),
            SeriesWarning::ShortSeries { events } => write!(f, "short series ({events} events)"),
            SeriesWarning::LargeDifference { max_abs } => {
                write!(f, "large score difference (max |diff| = {max_abs})")
            }
        }
    }
}

/// Sanity checks that do not reject a series.
pub fn validate_series(s: &ScoreSeries) -> Vec<SeriesWarning> {
    let mut out = Vec::new();
    let mut last_dup = None;
    for w in s.times.windows(2) {
        if w[0] == w[1] && last_dup != Some(w[0]) {
            out.push(SeriesWarning::DuplicateTimestamp { t: w[0] });
            last_dup = Some(w[0]);
        }
    }
    if s.len() < 10 {
        out.push(SeriesWarning::ShortSeries { events: s.len() });
    }
    let max_abs = s.diffs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if max_abs > 100.0 {
        out.push(SeriesWarning::LargeDifference { max_abs });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(minute: f64, home: f64, away: f64) -> PlayRow {
        PlayRow {
            match_id: "m1".into(),
            date: "2020-10-11".into(),
            home_team: "MIA".into(),
            away_team: "LAL".into(),
            minute,
            home_score: home,
            away_score: away,
        }
    }

    #[test]
    fn difference_is_away_minus_home() {
        let s = parse_play_by_play(&[row(0.5, 2.0, 0.0), row(1.0, 2.0, 3.0)], 48.0).unwrap();
        assert_eq!(s.diffs, vec![-2.0, 1.0]);
        assert_eq!(s.date.as_deref(), Some("2020-10-11"));
    }

    #[test]
    fn overtime_rows_dropped() {
        let rows = [row(1.0, 2.0, 0.0), row(30.0, 50.0, 52.0), row(49.2, 110.0, 108.0)];
        let s = parse_play_by_play(&rows, 48.0).unwrap();
        assert_eq!(s.times, vec![1.0, 30.0]);
    }

    #[test]
    fn sorted_input_is_identity() {
        let rows = [row(0.4, 0.0, 2.0), row(0.9, 3.0, 2.0), row(2.0, 3.0, 4.0)];
        let s = parse_play_by_play(&rows, 48.0).unwrap();
        assert_eq!(s.times, vec![0.4, 0.9, 2.0]);
        assert_eq!(s.diffs, vec![2.0, -1.0, 1.0]);
    }

    #[test]
    fn unsorted_with_ties_keeps_input_order() {
        let rows = [row(3.0, 2.0, 2.0), row(1.0, 2.0, 0.0), row(3.0, 2.0, 3.0)];
        let s = parse_play_by_play(&rows, 48.0).unwrap();
        assert_eq!(s.times, vec![1.0, 3.0, 3.0]);
        assert_eq!(s.diffs, vec![-2.0, 0.0, 1.0]);
    }

    #[test]
    fn all_overtime_is_empty() {
        let rows = [row(49.0, 2.0, 0.0), row(50.0, 2.0, 2.0)];
        assert!(matches!(parse_play_by_play(&rows, 48.0), Err(Error::EmptyAfterTruncation(_))));
    }

    #[test]
    fn decreasing_score_rejected() {
        let rows = [row(1.0, 2.0, 0.0), row(2.0, 0.0, 2.0)];
        assert!(matches!(parse_play_by_play(&rows, 48.0), Err(Error::NonMonotoneScores { .. })));
    }

    #[test]
    fn negative_minute_rejected() {
        assert!(parse_play_by_play(&[row(-1.0, 0.0, 0.0), row(1.0, 2.0, 0.0)], 48.0).is_err());
    }

    #[test]
    fn csv_reading() {
        let text = "match_id,date,home_team,away_team,minute,home_score,away_score\n\
                    g1,2020-10-11,MIA,LAL,0.5,2,0\n\
                    g1,2020-10-11,MIA,LAL,1.25,2,3\n\
                    g2,2020-10-12,BOS,TOR,0.7,0,2\n";
        let rows = read_play_by_play(text.as_bytes()).unwrap();
        let groups = split_matches(rows);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].0, "g1");
        assert_eq!(groups[0].1.len(), 2);
    }

    #[test]
    fn warnings() {
        let s = ScoreSeries::from_events(vec![1.0, 12.0, 12.0], vec![2.0, 0.0, 3.0], 48.0).unwrap();
        let w = validate_series(&s);
        assert!(w.contains(&SeriesWarning::DuplicateTimestamp { t: 12.0 }));
        assert!(w.contains(&SeriesWarning::ShortSeries { events: 3 }));
        assert!(w[0].to_string().contains("duplicate timestamp"));

        let times: Vec<f64> = (1..=200).map(|i| i as f64 * 0.2).collect();
        let diffs: Vec<f64> = (1..=200).map(|i| ((i as f64) / 9.0).sin() * 12.0).collect();
        let s = ScoreSeries::from_events(times, diffs, 48.0).unwrap();
        assert!(validate_series(&s).is_empty());
    }

    #[test]
    fn period_clock_helper() {
        assert_eq!(nba_minutes_elapsed(1, 720.0), 0.0);
        assert_eq!(nba_minutes_elapsed(2, 360.0), 18.0);
        assert_eq!(nba_minutes_elapsed(4, 0.0), 48.0);
        assert_eq!(nba_minutes_elapsed(5, 150.0), 50.5);
    }

    fn rows_strategy() -> impl Strategy<Value = Vec<PlayRow>> {
        prop::collection::vec((0.01..55.0f64, 0..2u8, 1..4u8), 2..40).prop_flat_map(|events| {
            let mut sorted = events.clone();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut h, mut a) = (0.0, 0.0);
            let out: Vec<PlayRow> = sorted
                .into_iter()
                .map(|(m, team, pts)| {
                    if team == 0 { h += pts as f64 } else { a += pts as f64 }
                    row((m * 100.0).round() / 100.0, h, a)
                })
                .collect();
            Just(out).prop_shuffle()
        })
    }

    proptest! {
        #[test]
        fn json_roundtrip_is_idempotent(rows in rows_strategy()) {
            if let Ok(s) = parse_play_by_play(&rows, 48.0) {
                let again = ScoreSeries::from_json(&s.to_json().unwrap()).unwrap();
                prop_assert_eq!(&again, &s);
                let twice = ScoreSeries::from_json(&again.to_json().unwrap()).unwrap();
                prop_assert_eq!(twice, again);
            }
        }

        #[test]
        fn truncation_commutes_with_sorting(rows in rows_strategy()) {
            let mut sorted = rows.clone();
            sorted.sort_by(|a, b| a.minute.total_cmp(&b.minute));
            let truncated: Vec<PlayRow> = rows.iter().filter(|r| r.minute <= 48.0).cloned().collect();
            let a: Vec<PlayRow> = sorted.into_iter().filter(|r| r.minute <= 48.0).collect();
            let mut b = truncated;
            b.sort_by(|x, y| x.minute.total_cmp(&y.minute));
            prop_assert_eq!(&a, &b);
            match (parse_play_by_play(&b, 48.0), parse_play_by_play(&rows, 48.0)) {
                (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "parse disagrees"),
            }
        }
    }
}
