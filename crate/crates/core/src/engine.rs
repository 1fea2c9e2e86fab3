//! Audit sessions: seeded sampling without replacement, one confidence
//! sequence per pairwise assertion, and certification.
//!
//! In an RLA every reported winner is compared with every reported loser and
//! each comparison is tested at the full risk limit; the contest is certified
//! once all comparisons are. In an RLT the comparisons use two-sided
//! confidence sequences at level `alpha / K` for `K` assertions.
//!
//! An assertion `(threshold, u]` is certified as soon as the threshold (and so
//! every value below it) lies outside the confidence set. Certified
//! assertions stay certified. After the last ballot the statuses are settled
//! from the full count.

use crate::confseq::{
    ConfidenceSequence, ConfseqError, CsConfig, PValueTracker, DEFAULT_TOLERANCE,
};
use crate::martingale::{
    apriori_kelly_lambda, BettingStrategy, MartingaleError, WeightKind, DEFAULT_GRID_SIZE,
};
use crate::population::{Assertion, ContestResult, PopulationError, Vote, INVALID_VOTE};
use crate::rng::BallotRng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Snapshot format identifier and version.
pub const SNAPSHOT_FORMAT: &str = "csaudit-session";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("risk limit must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("contest needs at least two candidates and one ballot")]
    TooSmall,
    #[error("no unique reported winner; pass winners explicitly")]
    NoReportedWinner,
    #[error("unknown winner `{0}`")]
    UnknownWinner(String),
    #[error("a priori Kelly needs reported vote totals for every candidate")]
    MissingTotals,
    #[error("a priori Kelly depends on reported totals and cannot be used in a tally")]
    ApkInTally,
    #[error("extra null {0} lies outside [0, 1]")]
    BadNull(f64),
    #[error("ballot manifest: {0}")]
    BadManifest(String),
    #[error("all ballots have been drawn")]
    Exhausted,
    #[error("unknown ballot id `{0}`")]
    UnknownBallot(String),
    #[error("ballot `{0}` was already recorded")]
    AlreadyRecorded(String),
    #[error("ballot `{ballot}` is not the pending draw (pending: {})", pending.as_deref().unwrap_or("none"))]
    NotPending {
        ballot: String,
        pending: Option<String>,
    },
    #[error("invalid vote `{token}`; valid tokens: {}", valid.join(", "))]
    InvalidVote { token: String, valid: Vec<String> },
    #[error("snapshot version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("corrupted snapshot: {0}")]
    Corrupted(String),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Martingale(#[from] MartingaleError),
    #[error(transparent)]
    Confseq(#[from] ConfseqError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rla,
    Rlt,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rla" => Ok(Mode::Rla),
            "rlt" => Ok(Mode::Rlt),
            other => Err(format!("unknown mode `{other}`; valid modes: rla, rlt")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(match self {
            Mode::Rla => "rla",
            Mode::Rlt => "rlt",
        })
    }
}

/// Named betting strategies exposed on the CLI and service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Apk,
    Dkelly,
    Sqkelly,
    Linkelly,
}

impl StrategyKind {
    pub const NAMES: [&'static str; 4] = ["apk", "dkelly", "sqkelly", "linkelly"];

    pub fn weight_kind(self) -> Option<WeightKind> {
        match self {
            StrategyKind::Apk => None,
            StrategyKind::Dkelly => Some(WeightKind::Constant),
            StrategyKind::Sqkelly => Some(WeightKind::Square),
            StrategyKind::Linkelly => Some(WeightKind::Linear),
        }
    }
}

impl FromStr for StrategyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "apk" => Ok(Self::Apk),
            "dkelly" => Ok(Self::Dkelly),
            "sqkelly" => Ok(Self::Sqkelly),
            "linkelly" => Ok(Self::Linkelly),
            other => Err(format!(
                "unknown strategy `{other}`; valid strategies: {}",
                Self::NAMES.join(", ")
            )),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(match self {
            Self::Apk => "apk",
            Self::Dkelly => "dkelly",
            Self::Sqkelly => "sqkelly",
            Self::Linkelly => "linkelly",
        })
    }
}

fn default_grid() -> usize {
    DEFAULT_GRID_SIZE
}

fn default_beta() -> f64 {
    0.5
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub alpha: f64,
    pub strategy: StrategyKind,
    pub mode: Mode,
    pub seed: u64,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    /// Weight on the plus side of two-sided mixtures.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Reported winners; defaults to the candidate with the most reported votes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winners: Option<Vec<String>>,
    /// Extra nulls whose anytime p-values are tracked per assertion.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_nulls: Vec<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl SessionConfig {
    pub fn new(alpha: f64, strategy: StrategyKind, mode: Mode, seed: u64) -> Self {
        Self {
            alpha,
            strategy,
            mode,
            seed,
            grid_size: DEFAULT_GRID_SIZE,
            beta: 0.5,
            winners: None,
            extra_nulls: Vec::new(),
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssertionStatus {
    Open,
    Certified,
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverallStatus {
    Open,
    Certified,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionReport {
    pub assertion: String,
    pub winner: String,
    pub loser: String,
    pub threshold: f64,
    /// Level at which this assertion is tested.
    pub level: f64,
    pub status: AssertionStatus,
    pub stopping_index: Option<u64>,
    pub lower: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub ballots_recorded: u64,
    pub population_size: u64,
    pub overall: OverallStatus,
    /// Largest per-assertion stopping index, once every assertion is certified.
    pub certified_at: Option<u64>,
    pub assertions: Vec<AssertionReport>,
}

/// One row of the confidence-sequence trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: u64,
    pub assertion: String,
    pub lower: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub p_value: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_p_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub index: u64,
    pub ballot_id: String,
    pub vote: String,
}

#[derive(Debug, Clone)]
struct AssertionTrack {
    assertion: Assertion,
    strategy: BettingStrategy,
    level: f64,
    cs: ConfidenceSequence,
    at_threshold: PValueTracker,
    extra: Vec<PValueTracker>,
    status: AssertionStatus,
    stopping_index: Option<u64>,
    values_sum: f64,
}

impl AssertionTrack {
    fn lower(&self) -> f64 {
        if self.status == AssertionStatus::Certified && !self.cs.strategy().is_two_sided() {
            self.cs.lower().max(self.assertion.threshold)
        } else {
            self.cs.lower()
        }
    }

    fn threshold_excluded(&self) -> bool {
        self.at_threshold
            .state()
            .rejects_at_most(&self.strategy, -self.level.ln())
    }

    fn row(&self, t: u64, two_sided: bool) -> TrajectoryRow {
        TrajectoryRow {
            t,
            assertion: self.assertion.label(),
            lower: self.lower(),
            upper: two_sided.then(|| self.cs.upper()),
            p_value: self.at_threshold.p_value(),
            extra_p_values: self.extra.iter().map(|p| p.p_value()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BallotState {
    Unseen,
    Pending,
    Recorded,
}

/// A running audit of one contest.
#[derive(Debug, Clone)]
pub struct AuditSession {
    contest: ContestResult,
    config: SessionConfig,
    ballot_ids: Vec<String>,
    custom_ids: bool,
    lookup: HashMap<String, usize>,
    ballot_state: Vec<BallotState>,
    remaining: Vec<usize>,
    rng: BallotRng,
    pending: Option<usize>,
    log: Vec<LogEntry>,
    tracks: Vec<AssertionTrack>,
    trajectory: Vec<TrajectoryRow>,
}

pub(crate) fn build_strategy(
    contest: &ContestResult,
    config: &SessionConfig,
    assertion: &Assertion,
) -> Result<BettingStrategy, EngineError> {
    match (config.strategy.weight_kind(), config.mode) {
        (None, Mode::Rlt) => Err(EngineError::ApkInTally),
        (None, Mode::Rla) => {
            if !contest.has_reported_totals() {
                return Err(EngineError::MissingTotals);
            }
            let lambda = apriori_kelly_lambda(
                contest.votes_for(&assertion.winner)?,
                contest.votes_for(&assertion.loser)?,
            )
            .unwrap_or(0.0);
            Ok(BettingStrategy::fixed(lambda)?)
        }
        (Some(kind), Mode::Rla) => Ok(BettingStrategy::convex(kind, config.grid_size)?),
        (Some(kind), Mode::Rlt) => Ok(BettingStrategy::symmetric_two_sided(
            kind,
            config.grid_size,
            config.beta,
        )?),
    }
}

impl AuditSession {
    /// Creates a session with ballot ids `1..=N`.
    pub fn create(contest: ContestResult, config: SessionConfig) -> Result<Self, EngineError> {
        Self::create_with_ids(contest, config, None)
    }

    /// Creates a session whose ballots carry the given manifest ids.
    pub fn create_with_ids(
        contest: ContestResult,
        config: SessionConfig,
        ballot_ids: Option<Vec<String>>,
    ) -> Result<Self, EngineError> {
        if !(config.alpha > 0.0 && config.alpha < 1.0) {
            return Err(EngineError::BadAlpha(config.alpha));
        }
        contest.validate()?;
        let n = contest.total_ballots;
        if n == 0 || contest.candidates.len() < 2 {
            return Err(EngineError::TooSmall);
        }
        if let Some(bad) = config
            .extra_nulls
            .iter()
            .find(|m| !(0.0..=1.0).contains(*m))
        {
            return Err(EngineError::BadNull(*bad));
        }
        let winners = match &config.winners {
            Some(w) if !w.is_empty() => w.clone(),
            _ => contest
                .reported_winners(1)
                .ok_or(EngineError::NoReportedWinner)?,
        };
        for w in &winners {
            if contest.candidate(w).is_none() {
                return Err(EngineError::UnknownWinner(w.clone()));
            }
        }
        let assertions: Vec<Assertion> = winners
            .iter()
            .flat_map(|w| {
                contest
                    .candidates
                    .iter()
                    .filter(|c| !winners.contains(&c.name))
                    .map(move |l| Assertion::pairwise(w.clone(), l.name.clone()))
            })
            .collect();
        if assertions.is_empty() {
            return Err(EngineError::TooSmall);
        }
        let level = match config.mode {
            Mode::Rla => config.alpha,
            Mode::Rlt => config.alpha / assertions.len() as f64,
        };
        let cs_config = CsConfig::with_tolerance(level, config.tolerance)?;

        let mut tracks = Vec::with_capacity(assertions.len());
        for assertion in assertions {
            let strategy = build_strategy(&contest, &config, &assertion)?;
            let u = assertion.upper_bound;
            let cs = ConfidenceSequence::new(strategy.clone(), n, u, cs_config)?;
            let at_threshold = PValueTracker::new(&strategy, n, u, assertion.threshold)?;
            let extra = config
                .extra_nulls
                .iter()
                .map(|&m| PValueTracker::new(&strategy, n, u, m))
                .collect::<Result<_, _>>()?;
            tracks.push(AssertionTrack {
                assertion,
                strategy,
                level,
                cs,
                at_threshold,
                extra,
                status: AssertionStatus::Open,
                stopping_index: None,
                values_sum: 0.0,
            });
        }

        let custom_ids = ballot_ids.is_some();
        let ballot_ids = match ballot_ids {
            Some(ids) => {
                if ids.len() as u64 != n {
                    return Err(EngineError::BadManifest(format!(
                        "{} ids for {} ballots",
                        ids.len(),
                        n
                    )));
                }
                ids
            }
            None => (1..=n).map(|i| i.to_string()).collect(),
        };
        let mut lookup = HashMap::with_capacity(ballot_ids.len());
        for (i, id) in ballot_ids.iter().enumerate() {
            if lookup.insert(id.clone(), i).is_some() {
                return Err(EngineError::BadManifest(format!(
                    "duplicate ballot id `{id}`"
                )));
            }
        }

        let two_sided = config.mode == Mode::Rlt;
        let trajectory = tracks.iter().map(|t| t.row(0, two_sided)).collect();
        Ok(Self {
            rng: BallotRng::new(config.seed),
            ballot_state: vec![BallotState::Unseen; ballot_ids.len()],
            remaining: (0..ballot_ids.len()).collect(),
            contest,
            config,
            ballot_ids,
            custom_ids,
            lookup,
            pending: None,
            log: Vec::new(),
            tracks,
            trajectory,
        })
    }

    pub fn contest(&self) -> &ContestResult {
        &self.contest
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn population_size(&self) -> u64 {
        self.contest.total_ballots
    }

    pub fn ballots_recorded(&self) -> u64 {
        self.log.len() as u64
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn trajectory(&self) -> &[TrajectoryRow] {
        &self.trajectory
    }

    pub fn pending(&self) -> Option<&str> {
        self.pending.map(|i| self.ballot_ids[i].as_str())
    }

    pub fn is_exhausted(&self) -> bool {
        self.log.len() as u64 == self.population_size()
    }

    pub fn assertion_labels(&self) -> Vec<String> {
        self.tracks.iter().map(|t| t.assertion.label()).collect()
    }

    /// Candidate names plus the invalid-ballot token.
    pub fn vote_tokens(&self) -> Vec<String> {
        self.contest
            .candidates
            .iter()
            .map(|c| c.name.clone())
            .chain(std::iter::once(INVALID_VOTE.to_string()))
            .collect()
    }

    /// Draws the next ballot uniformly from those not yet drawn. While a draw
    /// is awaiting its vote, the same id is returned again.
    pub fn draw_next(&mut self) -> Result<String, EngineError> {
        if let Some(i) = self.pending {
            return Ok(self.ballot_ids[i].clone());
        }
        if self.remaining.is_empty() {
            return Err(EngineError::Exhausted);
        }
        let j = self.rng.uniform_index(self.remaining.len() as u64) as usize;
        let i = self.remaining.swap_remove(j);
        self.ballot_state[i] = BallotState::Pending;
        self.pending = Some(i);
        Ok(self.ballot_ids[i].clone())
    }

    /// Records the vote on the pending ballot and updates every assertion.
    pub fn record_ballot(
        &mut self,
        ballot_id: &str,
        vote: &str,
    ) -> Result<CertificationReport, EngineError> {
        let &i = self
            .lookup
            .get(ballot_id)
            .ok_or_else(|| EngineError::UnknownBallot(ballot_id.to_string()))?;
        if self.ballot_state[i] == BallotState::Recorded {
            return Err(EngineError::AlreadyRecorded(ballot_id.to_string()));
        }
        if self.pending != Some(i) {
            return Err(EngineError::NotPending {
                ballot: ballot_id.to_string(),
                pending: self.pending().map(str::to_string),
            });
        }
        let vote = Vote::parse(vote, &self.contest).ok_or_else(|| EngineError::InvalidVote {
            token: vote.to_string(),
            valid: self.vote_tokens(),
        })?;

        let t = self.log.len() as u64 + 1;
        let n = self.population_size();
        let two_sided = self.config.mode == Mode::Rlt;
        for track in &mut self.tracks {
            let x = track.assertion.assort(&vote);
            track.values_sum += x;
            track.cs.push(x)?;
            track.at_threshold.push(&track.strategy, x)?;
            for p in &mut track.extra {
                p.push(&track.strategy, x)?;
            }
            if track.status == AssertionStatus::Open {
                let excluded = track.threshold_excluded();
                let threshold = track.assertion.threshold;
                let certified = if two_sided {
                    track.cs.lower() > threshold || (excluded && track.cs.lower() >= threshold)
                } else {
                    excluded
                };
                if certified {
                    track.status = AssertionStatus::Certified;
                    track.stopping_index = Some(t);
                } else if t == n {
                    let mean = track.values_sum / n as f64;
                    if track.assertion.holds_for_mean(mean) {
                        track.status = AssertionStatus::Certified;
                        track.stopping_index = Some(t);
                    } else {
                        track.status = AssertionStatus::Exhausted;
                    }
                }
            }
            self.trajectory.push(track.row(t, two_sided));
        }

        self.ballot_state[i] = BallotState::Recorded;
        self.pending = None;
        self.log.push(LogEntry {
            index: t,
            ballot_id: ballot_id.to_string(),
            vote: vote.token().to_string(),
        });
        Ok(self.status())
    }

    pub fn status(&self) -> CertificationReport {
        let two_sided = self.config.mode == Mode::Rlt;
        let assertions: Vec<AssertionReport> = self
            .tracks
            .iter()
            .map(|t| AssertionReport {
                assertion: t.assertion.label(),
                winner: t.assertion.winner.clone(),
                loser: t.assertion.loser.clone(),
                threshold: t.assertion.threshold,
                level: t.level,
                status: t.status,
                stopping_index: t.stopping_index,
                lower: t.lower(),
                upper: two_sided.then(|| t.cs.upper()),
                p_value: t.at_threshold.p_value(),
            })
            .collect();
        let all_certified = assertions
            .iter()
            .all(|a| a.status == AssertionStatus::Certified);
        let (overall, certified_at) = if all_certified {
            let at = assertions.iter().filter_map(|a| a.stopping_index).max();
            (OverallStatus::Certified, at)
        } else if self.is_exhausted() {
            (OverallStatus::Exhausted, None)
        } else {
            (OverallStatus::Open, None)
        };
        CertificationReport {
            ballots_recorded: self.ballots_recorded(),
            population_size: self.population_size(),
            overall,
            certified_at,
            assertions,
        }
    }

    fn to_snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            contest: self.contest.clone(),
            config: self.config.clone(),
            ballot_ids: self.custom_ids.then(|| self.ballot_ids.clone()),
            rng: RngSnapshot {
                seed: self.config.seed,
                word_pos: self.rng.word_pos().to_string(),
            },
            pending: self.pending().map(str::to_string),
            log: self.log.clone(),
            assertions: self
                .tracks
                .iter()
                .map(|t| AssertionSnapshot {
                    assertion: t.assertion.label(),
                    status: t.status,
                    stopping_index: t.stopping_index,
                    lower: t.lower(),
                    upper: t.cs.upper(),
                    at_threshold: t.at_threshold.clone(),
                    extra_nulls: t.extra.clone(),
                })
                .collect(),
            trajectory: self.trajectory.clone(),
        }
    }

    /// Serialises the full session as versioned JSON.
    pub fn snapshot(&self) -> String {
        serde_json::to_string_pretty(&self.to_snapshot()).expect("snapshot serialises")
    }

    /// Rebuilds a session from [`AuditSession::snapshot`] output.
    ///
    /// The log is replayed through a fresh session with the same seed; every
    /// draw, martingale state, endpoint and trajectory row must reproduce the
    /// stored values exactly, otherwise the payload is rejected as corrupted.
    pub fn restore(json: &str) -> Result<Self, EngineError> {
        let raw: serde_json::Value =
            serde_json::from_str(json).map_err(|e| EngineError::Corrupted(e.to_string()))?;
        if raw.get("format").and_then(|f| f.as_str()) != Some(SNAPSHOT_FORMAT) {
            return Err(EngineError::Corrupted("not a session snapshot".into()));
        }
        let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if version != SNAPSHOT_VERSION as u64 {
            return Err(EngineError::VersionMismatch {
                found: version,
                expected: SNAPSHOT_VERSION,
            });
        }
        let snap: SessionSnapshot =
            serde_json::from_value(raw).map_err(|e| EngineError::Corrupted(e.to_string()))?;
        if snap.rng.seed != snap.config.seed {
            return Err(EngineError::Corrupted(
                "generator seed differs from config".into(),
            ));
        }

        let mut session = Self::create_with_ids(
            snap.contest.clone(),
            snap.config.clone(),
            snap.ballot_ids.clone(),
        )?;
        for entry in &snap.log {
            let drawn = session.draw_next()?;
            if drawn != entry.ballot_id {
                return Err(EngineError::Corrupted(format!(
                    "draw {} replays as `{drawn}` but the log has `{}`",
                    entry.index, entry.ballot_id
                )));
            }
            session.record_ballot(&entry.ballot_id, &entry.vote)?;
        }
        if let Some(pending) = &snap.pending {
            let drawn = session.draw_next()?;
            if &drawn != pending {
                return Err(EngineError::Corrupted(
                    "pending draw does not replay".into(),
                ));
            }
        }
        let rebuilt = session.to_snapshot();
        if rebuilt.rng != snap.rng {
            return Err(EngineError::Corrupted("generator position mismatch".into()));
        }
        if rebuilt.assertions != snap.assertions {
            return Err(EngineError::Corrupted("martingale state mismatch".into()));
        }
        if rebuilt.trajectory != snap.trajectory {
            return Err(EngineError::Corrupted("trajectory mismatch".into()));
        }
        Ok(session)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RngSnapshot {
    seed: u64,
    /// ChaCha20 word counter, decimal.
    word_pos: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AssertionSnapshot {
    assertion: String,
    status: AssertionStatus,
    stopping_index: Option<u64>,
    lower: f64,
    upper: f64,
    at_threshold: PValueTracker,
    #[serde(default)]
    extra_nulls: Vec<PValueTracker>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SessionSnapshot {
    format: String,
    version: u32,
    contest: ContestResult,
    config: SessionConfig,
    #[serde(default)]
    ballot_ids: Option<Vec<String>>,
    rng: RngSnapshot,
    pending: Option<String>,
    log: Vec<LogEntry>,
    assertions: Vec<AssertionSnapshot>,
    trajectory: Vec<TrajectoryRow>,
}
