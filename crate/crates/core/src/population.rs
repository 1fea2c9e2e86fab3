//! Encodings of election data into bounded finite populations.
//!
//! A pairwise plurality comparison between a reported winner `w` and a
//! reported loser `l` becomes a list of numbers in `[0, 1]`: a ballot for `w`
//! is `1`, a ballot for `l` is `0`, and anything else (another candidate, an
//! invalid or blank ballot) is `1/2`. The winner really beat the loser iff the
//! mean of that list is strictly greater than `1/2`.
//!
//! The values `{0, 1/2, 1}` are exactly representable as `f64`, so sums over
//! these encodings are exact for any realistic population size.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Token used for a ballot that carries no valid vote in the contest.
pub const INVALID_VOTE: &str = "invalid";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PopulationError {
    #[error("population is empty")]
    Empty,
    #[error("upper bound must be positive and finite, got {0}")]
    BadUpperBound(f64),
    #[error("value {value} at position {index} lies outside [0, {upper}]")]
    OutOfRange {
        index: usize,
        value: f64,
        upper: f64,
    },
    #[error("unknown candidate `{0}`")]
    UnknownCandidate(String),
    #[error("winner and loser must differ (both `{0}`)")]
    SameCandidate(String),
    #[error("candidate `{0}` has no reported vote count")]
    MissingCount(String),
    #[error("reported votes ({votes}) exceed total ballots ({total})")]
    CountsExceedTotal { votes: u64, total: u64 },
    #[error("assertion threshold {threshold} must lie in [0, {upper})")]
    BadThreshold { threshold: f64, upper: f64 },
}

/// A nonempty list of values in `[0, u]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssorterPopulation {
    values: Vec<f64>,
    upper_bound: f64,
}

impl AssorterPopulation {
    pub fn new(values: Vec<f64>, upper_bound: f64) -> Result<Self, PopulationError> {
        if !(upper_bound.is_finite() && upper_bound > 0.0) {
            return Err(PopulationError::BadUpperBound(upper_bound));
        }
        if values.is_empty() {
            return Err(PopulationError::Empty);
        }
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=upper_bound).contains(&value) {
                return Err(PopulationError::OutOfRange {
                    index,
                    value,
                    upper: upper_bound,
                });
            }
        }
        Ok(Self {
            values,
            upper_bound,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Arithmetic mean of the population.
    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    /// Divides every value (and the bound) by `u`. Thresholds of assertions
    /// on this population must be rescaled by the caller in the same way.
    pub fn rescale_to_unit(&self) -> Self {
        let u = self.upper_bound;
        Self {
            values: self.values.iter().map(|v| v / u).collect(),
            upper_bound: 1.0,
        }
    }
}

/// Mean of a population; fails only on an empty slice.
pub fn population_mean(values: &[f64]) -> Result<f64, PopulationError> {
    if values.is_empty() {
        return Err(PopulationError::Empty);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// One candidate line of a contest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub party: Option<String>,
    /// Reported vote total; `None` when only the ballot manifest is known.
    #[serde(default)]
    pub votes: Option<u64>,
}

/// Reported results of one plurality contest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContestResult {
    pub contest_id: String,
    #[serde(default)]
    pub district: String,
    pub candidates: Vec<Candidate>,
    pub total_ballots: u64,
}

impl ContestResult {
    /// Builds a contest from `(name, votes)` pairs.
    pub fn from_counts(
        contest_id: impl Into<String>,
        counts: &[(&str, u64)],
        total_ballots: u64,
    ) -> Result<Self, PopulationError> {
        let contest = Self {
            contest_id: contest_id.into(),
            district: String::new(),
            candidates: counts
                .iter()
                .map(|(name, votes)| Candidate {
                    name: (*name).to_string(),
                    party: None,
                    votes: Some(*votes),
                })
                .collect(),
            total_ballots,
        };
        contest.validate()?;
        Ok(contest)
    }

    pub fn validate(&self) -> Result<(), PopulationError> {
        let votes: u64 = self.candidates.iter().filter_map(|c| c.votes).sum();
        if votes > self.total_ballots {
            return Err(PopulationError::CountsExceedTotal {
                votes,
                total: self.total_ballots,
            });
        }
        Ok(())
    }

    pub fn candidate(&self, name: &str) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.name == name)
    }

    pub fn candidate_index(&self, name: &str) -> Option<usize> {
        self.candidates.iter().position(|c| c.name == name)
    }

    pub fn has_reported_totals(&self) -> bool {
        !self.candidates.is_empty() && self.candidates.iter().all(|c| c.votes.is_some())
    }

    pub fn votes_for(&self, name: &str) -> Result<u64, PopulationError> {
        let candidate = self
            .candidate(name)
            .ok_or_else(|| PopulationError::UnknownCandidate(name.to_string()))?;
        candidate
            .votes
            .ok_or_else(|| PopulationError::MissingCount(name.to_string()))
    }

    /// Ballots that carry no vote for any listed candidate.
    pub fn invalid_ballots(&self) -> Option<u64> {
        if !self.has_reported_totals() {
            return None;
        }
        let votes: u64 = self.candidates.iter().filter_map(|c| c.votes).sum();
        Some(self.total_ballots.saturating_sub(votes))
    }

    /// The `k` candidates with the most reported votes, ties broken by
    /// listing order. `None` if totals are missing or the k-th and (k+1)-th
    /// places are tied.
    pub fn reported_winners(&self, k: usize) -> Option<Vec<String>> {
        if !self.has_reported_totals() || k == 0 || k >= self.candidates.len() {
            return None;
        }
        let mut order: Vec<&Candidate> = self.candidates.iter().collect();
        order.sort_by_key(|c| std::cmp::Reverse(c.votes));
        if order[k - 1].votes == order[k].votes {
            return None;
        }
        Some(order[..k].iter().map(|c| c.name.clone()).collect())
    }
}

/// A ballot's selection in a single-winner plurality contest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Vote {
    Candidate(String),
    Invalid,
}

impl Vote {
    /// Parses a raw vote token against the contest's candidate list.
    pub fn parse(token: &str, contest: &ContestResult) -> Option<Vote> {
        let token = token.trim();
        if token.eq_ignore_ascii_case(INVALID_VOTE) {
            return Some(Vote::Invalid);
        }
        contest
            .candidate(token)
            .map(|c| Vote::Candidate(c.name.clone()))
    }

    pub fn token(&self) -> &str {
        match self {
            Vote::Candidate(name) => name,
            Vote::Invalid => INVALID_VOTE,
        }
    }
}

/// Ballot-by-ballot votes matching the reported totals: candidates in listing
/// order, then the invalid ballots. Ballot `i` (zero-based) carries entry `i`.
pub fn synthetic_votes(contest: &ContestResult) -> Result<Vec<Vote>, PopulationError> {
    let mut votes = Vec::with_capacity(contest.total_ballots as usize);
    for c in &contest.candidates {
        let n = contest.votes_for(&c.name)?;
        votes.extend(std::iter::repeat_n(
            Vote::Candidate(c.name.clone()),
            n as usize,
        ));
    }
    let invalid = contest.total_ballots as usize - votes.len();
    votes.extend(std::iter::repeat_n(Vote::Invalid, invalid));
    Ok(votes)
}

/// "`winner` received more votes than `loser`", i.e. the pairwise assorter
/// mean lies in `(threshold, u]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub winner: String,
    pub loser: String,
    pub threshold: f64,
    pub upper_bound: f64,
}

impl Assertion {
    pub fn pairwise(winner: impl Into<String>, loser: impl Into<String>) -> Self {
        Self {
            winner: winner.into(),
            loser: loser.into(),
            threshold: 0.5,
            upper_bound: 1.0,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self, PopulationError> {
        if !(0.0..self.upper_bound).contains(&threshold) {
            return Err(PopulationError::BadThreshold {
                threshold,
                upper: self.upper_bound,
            });
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn label(&self) -> String {
        format!("{}>{}", self.winner, self.loser)
    }

    /// Assorter value of one ballot for this assertion.
    pub fn assort(&self, vote: &Vote) -> f64 {
        match vote {
            Vote::Candidate(name) if *name == self.winner => 1.0,
            Vote::Candidate(name) if *name == self.loser => 0.0,
            _ => 0.5,
        }
    }

    pub fn holds_for_mean(&self, mean: f64) -> bool {
        mean > self.threshold
    }
}

/// Pairwise plurality encoding: `count(w)` ones, `count(l)` zeros, and the
/// remaining `N - count(w) - count(l)` ballots as halves.
pub fn encode_plurality_pairwise(
    result: &ContestResult,
    winner: &str,
    loser: &str,
) -> Result<AssorterPopulation, PopulationError> {
    if winner == loser {
        return Err(PopulationError::SameCandidate(winner.to_string()));
    }
    let ones = result.votes_for(winner)?;
    let zeros = result.votes_for(loser)?;
    let total = result.total_ballots;
    if ones + zeros > total {
        return Err(PopulationError::CountsExceedTotal {
            votes: ones + zeros,
            total,
        });
    }
    let halves = total - ones - zeros;
    let mut values = Vec::with_capacity(total as usize);
    values.extend(std::iter::repeat_n(1.0, ones as usize));
    values.extend(std::iter::repeat_n(0.0, zeros as usize));
    values.extend(std::iter::repeat_n(0.5, halves as usize));
    AssorterPopulation::new(values, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alice_bob(a: u64, b: u64, n: u64) -> ContestResult {
        ContestResult::from_counts("ab", &[("Alice", a), ("Bob", b)], n).unwrap()
    }

    #[test]
    fn encodes_two_candidate_contest() {
        let pop = encode_plurality_pairwise(&alice_bob(2750, 2250, 5000), "Alice", "Bob").unwrap();
        let ones = pop.values().iter().filter(|&&v| v == 1.0).count();
        let zeros = pop.values().iter().filter(|&&v| v == 0.0).count();
        assert_eq!((ones, zeros, pop.len()), (2750, 2250, 5000));
        assert!((pop.mean() - 0.55).abs() < 1e-15);
    }

    #[test]
    fn all_invalid_is_exactly_half() {
        let pop = encode_plurality_pairwise(&alice_bob(0, 0, 10), "Alice", "Bob").unwrap();
        assert!(pop.values().iter().all(|&v| v == 0.5));
        assert_eq!(pop.mean(), 0.5);
        assert!(!Assertion::pairwise("Alice", "Bob").holds_for_mean(pop.mean()));
    }

    #[test]
    fn encodes_multi_candidate_with_halves() {
        let contest = ContestResult::from_counts(
            "waterloo",
            &[
                ("Liberal", 31085),
                ("PC", 15615),
                ("NDP", 10333),
                ("Green", 5097),
                ("PPC", 1078),
                ("Independent", 500),
                ("Bloc", 0),
            ],
            63708,
        )
        .unwrap();
        let pop = encode_plurality_pairwise(&contest, "Liberal", "PC").unwrap();
        let halves = pop.values().iter().filter(|&&v| v == 0.5).count();
        assert_eq!(halves, 63708 - 31085 - 15615);
        assert_eq!(pop.values().iter().filter(|&&v| v == 1.0).count(), 31085);
    }

    #[test]
    fn encoding_errors() {
        let c = alice_bob(3, 2, 5);
        assert_eq!(
            encode_plurality_pairwise(&c, "Alice", "Alice"),
            Err(PopulationError::SameCandidate("Alice".into()))
        );
        assert_eq!(
            encode_plurality_pairwise(&c, "Alice", "Carol"),
            Err(PopulationError::UnknownCandidate("Carol".into()))
        );
    }

    #[test]
    fn rescale_examples() {
        let pop = AssorterPopulation::new(vec![0.0, 1.0, 0.5], 1.0).unwrap();
        assert_eq!(pop.rescale_to_unit(), pop);
        let pop = AssorterPopulation::new(vec![0.0, 1.0, 2.0], 2.0).unwrap();
        assert_eq!(pop.rescale_to_unit().values(), &[0.0, 0.5, 1.0]);
        let pop = AssorterPopulation::new(vec![2.0, 2.0], 2.0).unwrap();
        assert_eq!(pop.rescale_to_unit().mean(), 1.0);
    }

    #[test]
    fn mean_examples() {
        assert_eq!(population_mean(&[1.0, 0.0, 0.5, 0.5]).unwrap(), 0.5);
        assert_eq!(population_mean(&[2.0]).unwrap(), 2.0);
        assert_eq!(population_mean(&[]), Err(PopulationError::Empty));
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(matches!(
            AssorterPopulation::new(vec![0.2, 1.5], 1.0),
            Err(PopulationError::OutOfRange { index: 1, .. })
        ));
        assert!(AssorterPopulation::new(vec![0.2], 0.0).is_err());
    }

    #[test]
    fn reported_winners_handles_ties() {
        let c = alice_bob(5, 5, 10);
        assert_eq!(c.reported_winners(1), None);
        let c = alice_bob(6, 4, 10);
        assert_eq!(c.reported_winners(1), Some(vec!["Alice".to_string()]));
    }

    #[test]
    fn vote_parsing_and_assorting() {
        let c = ContestResult::from_counts("x", &[("A", 1), ("B", 1), ("C", 1)], 4).unwrap();
        let a = Assertion::pairwise("A", "B");
        assert_eq!(a.assort(&Vote::parse("A", &c).unwrap()), 1.0);
        assert_eq!(a.assort(&Vote::parse("B", &c).unwrap()), 0.0);
        assert_eq!(a.assort(&Vote::parse("C", &c).unwrap()), 0.5);
        assert_eq!(a.assort(&Vote::parse("INVALID", &c).unwrap()), 0.5);
        assert!(Vote::parse("D", &c).is_none());
    }
}
