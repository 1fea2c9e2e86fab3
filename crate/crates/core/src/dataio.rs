//! CSV formats: contest results, ballot manifests and trajectory exports.
//!
//! Contest files have the header
//! `contest_id,district,candidate,party,votes,total_ballots`, one row per
//! candidate. Rows of a contest need not be adjacent but must agree on
//! district and `total_ballots`. An empty `votes` cell means no reported
//! total. Manifests have the header `ballot_id` or `ballot_id,vote`.

use crate::engine::AuditSession;
use crate::population::{synthetic_votes, Candidate, ContestResult, PopulationError};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::path::Path;
use thiserror::Error;

pub const CONTEST_HEADER: [&str; 6] = [
    "contest_id",
    "district",
    "candidate",
    "party",
    "votes",
    "total_ballots",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("missing columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("contest `{contest_id}` (line {line}): {source}")]
    Contest {
        contest_id: String,
        line: u64,
        source: PopulationError,
    },
}

/// Contests parsed from a file plus any non-fatal warnings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContestLoad {
    pub contests: Vec<ContestResult>,
    pub warnings: Vec<String>,
}

fn csv_error(e: csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    DataError::Csv {
        line,
        message: e.to_string(),
    }
}

fn column_index(headers: &csv::StringRecord, required: &[&str]) -> Result<Vec<usize>, DataError> {
    let mut missing = Vec::new();
    let mut idx = Vec::new();
    for name in required {
        match headers.iter().position(|h| h.trim() == *name) {
            Some(i) => idx.push(i),
            None => missing.push((*name).to_string()),
        }
    }
    if missing.is_empty() {
        Ok(idx)
    } else {
        Err(DataError::MissingColumns(missing))
    }
}

fn parse_count(field: &str, what: &str, line: u64) -> Result<u64, DataError> {
    let field = field.trim();
    if field.starts_with('-') {
        return Err(DataError::Row {
            line,
            message: format!("negative {what} `{field}`"),
        });
    }
    field.parse().map_err(|_| DataError::Row {
        line,
        message: format!("{what} `{field}` is not a whole number"),
    })
}

/// Parses contest CSV text.
pub fn parse_contests(text: &str) -> Result<ContestLoad, DataError> {
    let mut load = ContestLoad::default();
    if text.trim().is_empty() {
        load.warnings.push("contest file is empty".into());
        return Ok(load);
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(csv_error)?.clone();
    let cols = column_index(&headers, &CONTEST_HEADER)?;

    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, (ContestResult, u64)> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let get = |k: usize| record.get(cols[k]).unwrap_or("");
        let contest_id = get(0).to_string();
        if contest_id.is_empty() {
            return Err(DataError::Row {
                line,
                message: "empty contest_id".into(),
            });
        }
        let name = get(2).to_string();
        if name.is_empty() {
            return Err(DataError::Row {
                line,
                message: "empty candidate name".into(),
            });
        }
        let votes = match get(4) {
            "" => None,
            v => Some(parse_count(v, "votes", line)?),
        };
        let total = parse_count(get(5), "total_ballots", line)?;
        let party = Some(get(3).to_string()).filter(|p| !p.is_empty());

        let entry = by_id.entry(contest_id.clone()).or_insert_with(|| {
            order.push(contest_id.clone());
            (
                ContestResult {
                    contest_id: contest_id.clone(),
                    district: get(1).to_string(),
                    candidates: Vec::new(),
                    total_ballots: total,
                },
                line,
            )
        });
        let (contest, last_line) = entry;
        if contest.total_ballots != total {
            return Err(DataError::Row {
                line,
                message: format!(
                    "total_ballots {total} disagrees with {} on earlier rows of `{contest_id}`",
                    contest.total_ballots
                ),
            });
        }
        if contest.district != get(1) {
            return Err(DataError::Row {
                line,
                message: format!("district differs from earlier rows of `{contest_id}`"),
            });
        }
        if contest.candidate(&name).is_some() {
            return Err(DataError::Row {
                line,
                message: format!("candidate `{name}` listed twice in `{contest_id}`"),
            });
        }
        if name.eq_ignore_ascii_case(crate::population::INVALID_VOTE) {
            return Err(DataError::Row {
                line,
                message: format!("`{name}` is reserved for ballots without a valid vote"),
            });
        }
        contest.candidates.push(Candidate { name, party, votes });
        *last_line = line;
    }

    for id in order {
        let (contest, line) = by_id.remove(&id).expect("recorded id");
        contest.validate().map_err(|source| DataError::Contest {
            contest_id: id.clone(),
            line,
            source,
        })?;
        if contest.candidates.len() < 2 {
            load.warnings
                .push(format!("contest `{id}` lists fewer than two candidates"));
        }
        load.contests.push(contest);
    }
    if load.contests.is_empty() {
        load.warnings.push("contest file has no rows".into());
    }
    Ok(load)
}

pub fn load_contests(path: impl AsRef<Path>) -> Result<ContestLoad, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_contests(&text)
}

pub fn contests_to_csv(contests: &[ContestResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CONTEST_HEADER).expect("in-memory write");
    for c in contests {
        for cand in &c.candidates {
            w.write_record([
                c.contest_id.as_str(),
                c.district.as_str(),
                cand.name.as_str(),
                cand.party.as_deref().unwrap_or(""),
                &cand.votes.map_or(String::new(), |v| v.to_string()),
                &c.total_ballots.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub ballot_id: String,
    /// Known vote, for replays and demonstrations.
    pub vote: Option<String>,
}

/// Ordered ballot ids, optionally with the votes they carry.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.ballot_id.clone()).collect()
    }

    /// Whether the ids are exactly `1..=N` in order.
    pub fn has_default_ids(&self) -> bool {
        self.entries
            .iter()
            .enumerate()
            .all(|(i, e)| e.ballot_id == (i + 1).to_string())
    }

    pub fn votes(&self) -> HashMap<&str, &str> {
        self.entries
            .iter()
            .filter_map(|e| e.vote.as_deref().map(|v| (e.ballot_id.as_str(), v)))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["ballot_id", "vote"])
            .expect("in-memory write");
        for e in &self.entries {
            w.write_record([e.ballot_id.as_str(), e.vote.as_deref().unwrap_or("")])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

pub fn parse_manifest(text: &str) -> Result<Manifest, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(csv_error)?.clone();
    let id_col = column_index(&headers, &["ballot_id"])?[0];
    let vote_col = headers.iter().position(|h| h.trim() == "vote");
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let ballot_id = record.get(id_col).unwrap_or("").to_string();
        if ballot_id.is_empty() {
            return Err(DataError::Row {
                line,
                message: "empty ballot_id".into(),
            });
        }
        if !seen.insert(ballot_id.clone()) {
            return Err(DataError::Row {
                line,
                message: format!("duplicate ballot_id `{ballot_id}`"),
            });
        }
        let vote = vote_col
            .and_then(|c| record.get(c))
            .filter(|v| !v.is_empty())
            .map(str::to_string);
        entries.push(ManifestEntry { ballot_id, vote });
    }
    Ok(Manifest { entries })
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_manifest(&text)
}

/// Manifest with ids `1..=N` whose votes match the reported totals: each
/// candidate's ballots in listing order, then the invalid ones.
pub fn synthetic_manifest(contest: &ContestResult) -> Result<Manifest, PopulationError> {
    let votes = synthetic_votes(contest)?;
    Ok(Manifest {
        entries: votes
            .iter()
            .enumerate()
            .map(|(i, v)| ManifestEntry {
                ballot_id: (i + 1).to_string(),
                vote: Some(v.token().to_string()),
            })
            .collect(),
    })
}

/// Header of [`export_trajectories`] for a session.
pub fn trajectory_header(session: &AuditSession) -> Vec<String> {
    let mut header = vec!["t".to_string(), "assertion".into(), "lower".into()];
    if session.config().mode == crate::engine::Mode::Rlt {
        header.push("upper".into());
    }
    header.push("p_value".into());
    for null in &session.config().extra_nulls {
        header.push(format!("p_value@{null}"));
    }
    header
}

/// One row per `(t, assertion)` from `t = 0`; the p-value is the running
/// anytime p-value at the assertion threshold.
pub fn export_trajectories(session: &AuditSession) -> String {
    export_trajectory_rows(session, session.trajectory())
}

/// Same columns as [`export_trajectories`], for a subset of rows.
pub fn export_trajectory_rows(
    session: &AuditSession,
    rows: &[crate::engine::TrajectoryRow],
) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(trajectory_header(session))
        .expect("in-memory write");
    for row in rows {
        let mut record = vec![
            row.t.to_string(),
            row.assertion.clone(),
            row.lower.to_string(),
        ];
        if let Some(u) = row.upper {
            record.push(u.to_string());
        }
        record.push(row.p_value.to_string());
        record.extend(row.extra_p_values.iter().map(|p| p.to_string()));
        w.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Mode, SessionConfig, StrategyKind};

    const SAMPLE: &str = "\
contest_id,district,candidate,party,votes,total_ballots
w,Waterloo,A,Liberal,60,100
w,Waterloo,B,Conservative,30,100
x,Elsewhere,C,,5,10
x,Elsewhere,D,,,10
";

    #[test]
    fn parses_and_groups() {
        let load = parse_contests(SAMPLE).unwrap();
        assert!(load.warnings.is_empty());
        assert_eq!(load.contests.len(), 2);
        assert_eq!(load.contests[0].candidates.len(), 2);
        assert_eq!(
            load.contests[0].candidates[0].party.as_deref(),
            Some("Liberal")
        );
        assert_eq!(load.contests[1].candidates[1].votes, None);
        let again = parse_contests(&contests_to_csv(&load.contests)).unwrap();
        assert_eq!(again, load);
    }

    #[test]
    fn empty_file_warns() {
        let load = parse_contests("").unwrap();
        assert!(load.contests.is_empty());
        assert_eq!(load.warnings.len(), 1);
        let load =
            parse_contests("contest_id,district,candidate,party,votes,total_ballots\n").unwrap();
        assert!(load.contests.is_empty());
        assert_eq!(load.warnings.len(), 1);
    }

    #[test]
    fn row_errors_carry_line_numbers() {
        let bad = "contest_id,district,candidate,party,votes,total_ballots\nw,W,A,,-3,10\n";
        assert_eq!(
            parse_contests(bad),
            Err(DataError::Row {
                line: 2,
                message: "negative votes `-3`".into()
            })
        );
        let over =
            "contest_id,district,candidate,party,votes,total_ballots\nw,W,A,,8,10\nw,W,B,,5,10\n";
        match parse_contests(over) {
            Err(DataError::Contest {
                contest_id, line, ..
            }) => {
                assert_eq!(contest_id, "w");
                assert_eq!(line, 3);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            parse_contests("contest_id,candidate\nw,A\n"),
            Err(DataError::MissingColumns(vec![
                "district".into(),
                "party".into(),
                "votes".into(),
                "total_ballots".into()
            ]))
        );
    }

    #[test]
    fn manifests() {
        let m = parse_manifest("ballot_id,vote\nb1,A\nb2,\nb3,invalid\n").unwrap();
        assert_eq!(m.ids(), vec!["b1", "b2", "b3"]);
        assert_eq!(m.votes().get("b3"), Some(&"invalid"));
        assert!(!m.has_default_ids());
        assert!(parse_manifest("ballot_id\nb1\nb1\n").is_err());
        assert_eq!(parse_manifest(&m.to_csv()).unwrap(), m);

        let c = ContestResult::from_counts("c", &[("A", 2), ("B", 1)], 4).unwrap();
        let s = synthetic_manifest(&c).unwrap();
        assert!(s.has_default_ids());
        let votes: Vec<_> = s.entries.iter().map(|e| e.vote.clone().unwrap()).collect();
        assert_eq!(votes, vec!["A", "A", "B", "invalid"]);
    }

    #[test]
    fn export_at_t_zero() {
        let c = ContestResult::from_counts("c", &[("A", 5), ("B", 3), ("C", 1)], 10).unwrap();
        let mut config = SessionConfig::new(0.05, StrategyKind::Sqkelly, Mode::Rla, 1);
        config.extra_nulls = vec![0.45, 0.48, 0.5];
        let s = AuditSession::create(c, config).unwrap();
        let csv = export_trajectories(&s);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "t,assertion,lower,p_value,p_value@0.45,p_value@0.48,p_value@0.5"
        );
        assert_eq!(lines[1], "0,A>B,0,1,1,1,1");
        assert_eq!(lines.len(), 3);
    }
}
