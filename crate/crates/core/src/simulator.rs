//! Monte Carlo studies: audit workload, risk of certifying a false outcome,
//! and time-uniform coverage of two-sided sequences.
//!
//! A two-candidate scenario is the urn of `winner_votes` ones, `loser_votes`
//! zeros and `nuisance_ballots` halves. Replication `r` draws from the urn
//! with ChaCha20 stream `r` of the scenario seed, and every method in the
//! scenario sees the same draws, so methods are compared on common paths.
//!
//! The BRAVO baseline multiplies its likelihood ratio by `2p` for a ballot
//! for the reported winner and by `2(1 - p)` for one for the reported loser,
//! where `p` is the winner's reported share of the two candidates' votes.
//! Nuisance ballots count toward workload but leave the ratio unchanged.
//! Ballots are still drawn without replacement.

use crate::engine::{build_strategy, Mode, SessionConfig, StrategyKind};
use crate::martingale::{
    apriori_kelly_lambda, BettingStrategy, MartingaleError, MartingaleState, WeightKind,
    DEFAULT_GRID_SIZE,
};
use crate::population::{synthetic_votes, Assertion, ContestResult, PopulationError};
use crate::rng::BallotRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const DEFAULT_WORKLOAD_REPLICATIONS: usize = 500;
pub const DEFAULT_RISK_REPLICATIONS: usize = 10_000;
/// Offset above the threshold used to tell which side of a two-sided set
/// excluded it.
const SIDE_PROBE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("risk limit must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("replications must be at least 1")]
    NoReplications,
    #[error("scenario has no ballots")]
    EmptyPopulation,
    #[error("scenario lists no methods")]
    NoMethods,
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("BRAVO needs the reported winner strictly ahead of the loser")]
    DegenerateReport,
    #[error("workload runs need a true assertion, but the true mean is {0}")]
    AssertionFalse(f64),
    #[error("risk runs need a false assertion, but the true mean is {0}")]
    AssertionTrue(f64),
    #[error("coverage runs need a convex-grid method, got {0}")]
    NotTwoSided(Method),
    #[error("contest simulation: {0}")]
    Contest(String),
    #[error("scenario file: {0}")]
    Parse(String),
    #[error(transparent)]
    Martingale(#[from] MartingaleError),
    #[error(transparent)]
    Population(#[from] PopulationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Apk,
    Dkelly,
    Sqkelly,
    Linkelly,
    Bravo,
}

impl Method {
    pub const NAMES: [&'static str; 5] = ["apk", "dkelly", "sqkelly", "linkelly", "bravo"];

    fn weight_kind(self) -> Option<WeightKind> {
        match self {
            Method::Dkelly => Some(WeightKind::Constant),
            Method::Sqkelly => Some(WeightKind::Square),
            Method::Linkelly => Some(WeightKind::Linear),
            Method::Apk | Method::Bravo => None,
        }
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "apk" => Ok(Method::Apk),
            "dkelly" => Ok(Method::Dkelly),
            "sqkelly" => Ok(Method::Sqkelly),
            "linkelly" => Ok(Method::Linkelly),
            "bravo" => Ok(Method::Bravo),
            other => Err(format!(
                "unknown method `{other}`; valid methods: {}",
                Method::NAMES.join(", ")
            )),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        let name = match self {
            Method::Apk => "apk",
            Method::Dkelly => "dkelly",
            Method::Sqkelly => "sqkelly",
            Method::Linkelly => "linkelly",
            Method::Bravo => "bravo",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Analysis {
    Workload,
    Risk,
    Coverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportedTotals {
    pub winner_votes: u64,
    pub loser_votes: u64,
}

fn default_name() -> String {
    "scenario".to_string()
}

fn default_grid() -> usize {
    DEFAULT_GRID_SIZE
}

fn default_beta() -> f64 {
    0.5
}

fn default_bins() -> usize {
    20
}

/// A two-candidate Monte Carlo scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    /// True votes for the reported winner.
    pub winner_votes: u64,
    /// True votes for the reported loser.
    pub loser_votes: u64,
    #[serde(default)]
    pub nuisance_ballots: u64,
    /// Reported totals used by `apk` and `bravo`; the truth when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported: Option<ReportedTotals>,
    pub methods: Vec<Method>,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    pub seed: u64,
    /// Inferred from the true mean when absent (coverage must be explicit).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<Analysis>,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    /// Plus-side weight for two-sided coverage runs.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
}

impl Scenario {
    pub fn new(winner_votes: u64, loser_votes: u64, nuisance_ballots: u64) -> Self {
        Self {
            name: default_name(),
            winner_votes,
            loser_votes,
            nuisance_ballots,
            reported: None,
            methods: vec![Method::Sqkelly],
            alpha: 0.05,
            replications: None,
            seed: 0,
            analysis: None,
            grid_size: DEFAULT_GRID_SIZE,
            beta: 0.5,
            histogram_bins: default_bins(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, SimulationError> {
        let s: Self = toml::from_str(text).map_err(|e| SimulationError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, SimulationError> {
        let s: Self =
            serde_json::from_str(text).map_err(|e| SimulationError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn population_size(&self) -> u64 {
        self.winner_votes + self.loser_votes + self.nuisance_ballots
    }

    pub fn true_mean(&self) -> f64 {
        (self.winner_votes as f64 + 0.5 * self.nuisance_ballots as f64)
            / self.population_size() as f64
    }

    pub fn reported_totals(&self) -> ReportedTotals {
        self.reported.unwrap_or(ReportedTotals {
            winner_votes: self.winner_votes,
            loser_votes: self.loser_votes,
        })
    }

    pub fn analysis(&self) -> Analysis {
        self.analysis.unwrap_or(if self.true_mean() > 0.5 {
            Analysis::Workload
        } else {
            Analysis::Risk
        })
    }

    pub fn replications(&self) -> usize {
        self.replications.unwrap_or(match self.analysis() {
            Analysis::Workload => DEFAULT_WORKLOAD_REPLICATIONS,
            Analysis::Risk | Analysis::Coverage => DEFAULT_RISK_REPLICATIONS,
        })
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SimulationError::BadAlpha(self.alpha));
        }
        if self.replications == Some(0) {
            return Err(SimulationError::NoReplications);
        }
        if self.population_size() == 0 {
            return Err(SimulationError::EmptyPopulation);
        }
        if self.methods.is_empty() {
            return Err(SimulationError::NoMethods);
        }
        if self.histogram_bins == 0 {
            return Err(SimulationError::NoBins);
        }
        Ok(())
    }
}

/// Sampling without replacement from category counts.
#[derive(Debug, Clone)]
struct Urn {
    ones: u64,
    zeros: u64,
    halves: u64,
}

impl Urn {
    fn of(s: &Scenario) -> Self {
        Self {
            ones: s.winner_votes,
            zeros: s.loser_votes,
            halves: s.nuisance_ballots,
        }
    }

    fn draw(&mut self, rng: &mut BallotRng) -> f64 {
        let k = rng.uniform_index(self.ones + self.zeros + self.halves);
        if k < self.ones {
            self.ones -= 1;
            1.0
        } else if k < self.ones + self.zeros {
            self.zeros -= 1;
            0.0
        } else {
            self.halves -= 1;
            0.5
        }
    }
}

#[derive(Debug, Clone)]
enum Runner {
    Betting {
        strategy: BettingStrategy,
        state: MartingaleState,
    },
    Bravo {
        log_up: f64,
        log_down: f64,
        log_wealth: f64,
    },
}

impl Runner {
    fn new(method: Method, scenario: &Scenario) -> Result<Self, SimulationError> {
        let n = scenario.population_size();
        let reported = scenario.reported_totals();
        let strategy = match method {
            Method::Bravo => {
                let (w, l) = (reported.winner_votes, reported.loser_votes);
                if w <= l {
                    return Err(SimulationError::DegenerateReport);
                }
                let p = w as f64 / (w + l) as f64;
                return Ok(Runner::Bravo {
                    log_up: (2.0 * p).ln(),
                    log_down: (2.0 * (1.0 - p)).ln(),
                    log_wealth: 0.0,
                });
            }
            Method::Apk => BettingStrategy::fixed(apriori_kelly_lambda(
                reported.winner_votes,
                reported.loser_votes,
            )?)?,
            other => BettingStrategy::convex(
                other.weight_kind().expect("grid method"),
                scenario.grid_size,
            )?,
        };
        Ok(Runner::Betting {
            state: MartingaleState::new(&strategy, n, 1.0)?,
            strategy,
        })
    }

    /// Incorporates `x` and reports whether the threshold is now rejected.
    fn step(&mut self, x: f64, log_level: f64) -> Result<bool, SimulationError> {
        match self {
            Runner::Betting { strategy, state } => {
                state.observe(strategy, x, 0.5)?;
                Ok(state.rejects_at_most(strategy, log_level))
            }
            Runner::Bravo {
                log_up,
                log_down,
                log_wealth,
            } => {
                if x == 1.0 {
                    *log_wealth += *log_up;
                } else if x == 0.0 {
                    *log_wealth += *log_down;
                }
                Ok(*log_wealth >= log_level)
            }
        }
    }
}

/// Stopping times of every method on replication `r`; `None` means the
/// population was exhausted without certification.
fn run_replication(
    scenario: &Scenario,
    runners: &[Runner],
    r: usize,
) -> Result<Vec<Option<u64>>, SimulationError> {
    let n = scenario.population_size();
    let log_level = -scenario.alpha.ln();
    let mut rng = BallotRng::with_stream(scenario.seed, r as u64);
    let mut urn = Urn::of(scenario);
    let mut runners = runners.to_vec();
    let mut stops = vec![None; runners.len()];
    let mut open = runners.len();
    for t in 1..=n {
        let x = urn.draw(&mut rng);
        for (runner, stop) in runners.iter_mut().zip(stops.iter_mut()) {
            if stop.is_none() && runner.step(x, log_level)? {
                *stop = Some(t);
                open -= 1;
            }
        }
        if open == 0 {
            break;
        }
    }
    Ok(stops)
}

fn runners_for(scenario: &Scenario) -> Result<Vec<Runner>, SimulationError> {
    scenario
        .methods
        .iter()
        .map(|&m| Runner::new(m, scenario))
        .collect()
}

/// Per-method stopping times, replication-major.
fn stopping_matrix(scenario: &Scenario) -> Result<Vec<Vec<Option<u64>>>, SimulationError> {
    scenario.validate()?;
    let runners = runners_for(scenario)?;
    (0..scenario.replications())
        .into_par_iter()
        .map(|r| run_replication(scenario, &runners, r))
        .collect()
}

/// Stopping times of one method over all replications of `scenario`.
pub fn stopping_times(
    scenario: &Scenario,
    method: Method,
) -> Result<Vec<Option<u64>>, SimulationError> {
    let single = Scenario {
        methods: vec![method],
        ..scenario.clone()
    };
    Ok(stopping_matrix(&single)?
        .into_iter()
        .map(|row| row[0])
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_lower: u64,
    pub bin_upper: u64,
    pub count: usize,
}

/// Equal-width bins over `1..=n`.
pub fn histogram(workloads: &[u64], n: u64, bins: usize) -> Vec<HistogramBin> {
    let bins = bins.max(1) as u64;
    let width = n.div_ceil(bins).max(1);
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|k| HistogramBin {
            bin_lower: k * width + 1,
            bin_upper: ((k + 1) * width).min(n),
            count: 0,
        })
        .filter(|b| b.bin_lower <= b.bin_upper)
        .collect();
    for &w in workloads {
        let k = ((w.max(1) - 1) / width) as usize;
        if let Some(bin) = out.get_mut(k) {
            bin.count += 1;
        }
    }
    out
}

/// Linearly interpolated sample quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSummary {
    pub method: Method,
    pub runs: usize,
    pub certified: usize,
    pub exhausted: usize,
    pub fraction_exhausted: f64,
    /// Workload statistics count exhausted runs as a full count of `N`.
    pub mean: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub stopping_times: Vec<Option<u64>>,
    pub histogram: Vec<HistogramBin>,
}

impl WorkloadSummary {
    fn new(method: Method, stops: Vec<Option<u64>>, n: u64, bins: usize) -> Self {
        let workloads: Vec<u64> = stops.iter().map(|s| s.unwrap_or(n)).collect();
        let mut sorted: Vec<f64> = workloads.iter().map(|&w| w as f64).collect();
        sorted.sort_by(f64::total_cmp);
        let runs = stops.len();
        let exhausted = stops.iter().filter(|s| s.is_none()).count();
        Self {
            method,
            runs,
            certified: runs - exhausted,
            exhausted,
            fraction_exhausted: exhausted as f64 / runs as f64,
            mean: sorted.iter().sum::<f64>() / runs as f64,
            median: quantile(&sorted, 0.5),
            q10: quantile(&sorted, 0.1),
            q90: quantile(&sorted, 0.9),
            histogram: histogram(&workloads, n, bins),
            stopping_times: stops,
        }
    }
}

/// `alpha + 3 sqrt(alpha (1 - alpha) / runs)`.
pub fn risk_bound(alpha: f64, runs: usize) -> f64 {
    alpha + 3.0 * (alpha * (1.0 - alpha) / runs as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSummary {
    pub method: Method,
    pub runs: usize,
    pub certified: usize,
    pub rate: f64,
    /// Binomial standard error of `rate`.
    pub standard_error: f64,
    pub bound: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub method: Method,
    pub runs: usize,
    /// Runs in which the true mean was ever excluded.
    pub miscovered: usize,
    pub miscoverage_rate: f64,
    pub bound: f64,
    pub within_bound: bool,
    /// Mean time at which the two-sided set first lies above the threshold
    /// (exhausted runs count as `N`).
    pub mean_two_sided_workload: f64,
    /// Mean stopping time of the one-sided audit on the same draws.
    pub mean_one_sided_workload: f64,
    /// Runs where the two-sided crossing came strictly later.
    pub two_sided_later: usize,
    /// Runs where it came strictly earlier.
    pub two_sided_earlier: usize,
    pub two_sided_times: Vec<Option<u64>>,
    pub one_sided_times: Vec<Option<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenario: Scenario,
    pub analysis: Analysis,
    pub population_size: u64,
    pub true_mean: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub workload: Vec<WorkloadSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub risk: Vec<RiskSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coverage: Vec<CoverageSummary>,
}

impl SimulationReport {
    fn empty(scenario: &Scenario, analysis: Analysis) -> Self {
        Self {
            scenario: scenario.clone(),
            analysis,
            population_size: scenario.population_size(),
            true_mean: scenario.true_mean(),
            workload: Vec::new(),
            risk: Vec::new(),
            coverage: Vec::new(),
        }
    }

    pub fn workload_for(&self, method: Method) -> Option<&WorkloadSummary> {
        self.workload.iter().find(|w| w.method == method)
    }

    pub fn risk_for(&self, method: Method) -> Option<&RiskSummary> {
        self.risk.iter().find(|w| w.method == method)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

fn transpose(matrix: Vec<Vec<Option<u64>>>, methods: usize) -> Vec<Vec<Option<u64>>> {
    let mut columns = vec![Vec::with_capacity(matrix.len()); methods];
    for row in matrix {
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }
    columns
}

/// Workload distribution of each method on a scenario whose assertion is true.
pub fn simulate_workload(scenario: &Scenario) -> Result<SimulationReport, SimulationError> {
    scenario.validate()?;
    if scenario.true_mean() <= 0.5 {
        return Err(SimulationError::AssertionFalse(scenario.true_mean()));
    }
    let n = scenario.population_size();
    let columns = transpose(stopping_matrix(scenario)?, scenario.methods.len());
    let mut report = SimulationReport::empty(scenario, Analysis::Workload);
    report.workload = scenario
        .methods
        .iter()
        .zip(columns)
        .map(|(&m, stops)| WorkloadSummary::new(m, stops, n, scenario.histogram_bins))
        .collect();
    Ok(report)
}

/// Rate of (wrongly) certifying a scenario whose assertion is false.
pub fn simulate_risk(scenario: &Scenario) -> Result<SimulationReport, SimulationError> {
    scenario.validate()?;
    if scenario.true_mean() > 0.5 {
        return Err(SimulationError::AssertionTrue(scenario.true_mean()));
    }
    let runs = scenario.replications();
    let columns = transpose(stopping_matrix(scenario)?, scenario.methods.len());
    let mut report = SimulationReport::empty(scenario, Analysis::Risk);
    report.risk = scenario
        .methods
        .iter()
        .zip(columns)
        .map(|(&method, stops)| {
            let certified = stops.iter().filter(|s| s.is_some()).count();
            let rate = certified as f64 / runs as f64;
            let bound = risk_bound(scenario.alpha, runs);
            RiskSummary {
                method,
                runs,
                certified,
                rate,
                standard_error: (rate * (1.0 - rate) / runs as f64).sqrt(),
                bound,
                within_bound: rate <= bound,
            }
        })
        .collect();
    Ok(report)
}

#[derive(Debug, Clone, Copy)]
struct CoverageRun {
    miscovered: bool,
    two_sided: Option<u64>,
    one_sided: Option<u64>,
}

fn coverage_replication(
    scenario: &Scenario,
    two: &BettingStrategy,
    one: &BettingStrategy,
    r: usize,
) -> Result<CoverageRun, SimulationError> {
    let n = scenario.population_size();
    let mu_star = scenario.true_mean();
    let log_level = -scenario.alpha.ln();
    let mut rng = BallotRng::with_stream(scenario.seed, r as u64);
    let mut urn = Urn::of(scenario);
    let mut at_truth = MartingaleState::new(two, n, 1.0)?;
    let mut at_half = at_truth.clone();
    let mut above_half = at_truth.clone();
    let mut one_sided = MartingaleState::new(one, n, 1.0)?;
    let mut run = CoverageRun {
        miscovered: false,
        two_sided: None,
        one_sided: None,
    };
    for t in 1..=n {
        let x = urn.draw(&mut rng);
        if !run.miscovered {
            at_truth.observe(two, x, mu_star)?;
            run.miscovered = at_truth.log_value_at_least(two, log_level);
        }
        if run.two_sided.is_none() {
            at_half.observe(two, x, 0.5)?;
            above_half.observe(two, x, 0.5 + SIDE_PROBE)?;
            // The threshold is out and the sublevel interval lies above it.
            if at_half.rejects_at_most(two, log_level)
                && above_half.log_value(two) < at_half.log_value(two)
            {
                run.two_sided = Some(t);
            }
        }
        if run.one_sided.is_none() {
            one_sided.observe(one, x, 0.5)?;
            if one_sided.rejects_at_most(one, log_level) {
                run.one_sided = Some(t);
            }
        }
        if run.miscovered && run.two_sided.is_some() && run.one_sided.is_some() {
            break;
        }
    }
    Ok(run)
}

/// Time-uniform miscoverage of the two-sided sequence at the true mean, and
/// how its crossing of one half compares with the one-sided audit.
pub fn simulate_coverage(scenario: &Scenario) -> Result<SimulationReport, SimulationError> {
    scenario.validate()?;
    let n = scenario.population_size();
    let runs = scenario.replications();
    let mut report = SimulationReport::empty(scenario, Analysis::Coverage);
    for &method in &scenario.methods {
        let kind = method
            .weight_kind()
            .ok_or(SimulationError::NotTwoSided(method))?;
        let two = BettingStrategy::symmetric_two_sided(kind, scenario.grid_size, scenario.beta)?;
        let one = BettingStrategy::convex(kind, scenario.grid_size)?;
        let results: Vec<CoverageRun> = (0..runs)
            .into_par_iter()
            .map(|r| coverage_replication(scenario, &two, &one, r))
            .collect::<Result<_, _>>()?;
        let miscovered = results.iter().filter(|r| r.miscovered).count();
        let rate = miscovered as f64 / runs as f64;
        let bound = risk_bound(scenario.alpha, runs);
        let mean = |f: fn(&CoverageRun) -> Option<u64>| {
            results
                .iter()
                .map(|r| f(r).unwrap_or(n) as f64)
                .sum::<f64>()
                / runs as f64
        };
        let later = results
            .iter()
            .filter(|r| r.two_sided.unwrap_or(n + 1) > r.one_sided.unwrap_or(n + 1))
            .count();
        let earlier = results
            .iter()
            .filter(|r| r.two_sided.unwrap_or(n + 1) < r.one_sided.unwrap_or(n + 1))
            .count();
        report.coverage.push(CoverageSummary {
            method,
            runs,
            miscovered,
            miscoverage_rate: rate,
            bound,
            within_bound: rate <= bound,
            mean_two_sided_workload: mean(|r| r.two_sided),
            mean_one_sided_workload: mean(|r| r.one_sided),
            two_sided_later: later,
            two_sided_earlier: earlier,
            two_sided_times: results.iter().map(|r| r.two_sided).collect(),
            one_sided_times: results.iter().map(|r| r.one_sided).collect(),
        });
    }
    Ok(report)
}

/// Runs whichever analysis the scenario calls for.
pub fn simulate(scenario: &Scenario) -> Result<SimulationReport, SimulationError> {
    match scenario.analysis() {
        Analysis::Workload => simulate_workload(scenario),
        Analysis::Risk => simulate_risk(scenario),
        Analysis::Coverage => simulate_coverage(scenario),
    }
}

/// One BRAVO audit on stream 0 of `seed`.
pub fn bravo_stopping_time(
    reported: ReportedTotals,
    truth: (u64, u64, u64),
    alpha: f64,
    seed: u64,
) -> Result<Option<u64>, SimulationError> {
    let scenario = Scenario {
        reported: Some(reported),
        methods: vec![Method::Bravo],
        alpha,
        seed,
        replications: Some(1),
        ..Scenario::new(truth.0, truth.1, truth.2)
    };
    scenario.validate()?;
    let runners = runners_for(&scenario)?;
    Ok(run_replication(&scenario, &runners, 0)?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub mean: f64,
    pub median: f64,
}

/// Rows are scenarios, columns methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub methods: Vec<Method>,
    pub rows: Vec<(String, Vec<Option<ComparisonCell>>)>,
}

impl ComparisonTable {
    pub fn cell(&self, scenario: &str, method: Method) -> Option<&ComparisonCell> {
        let col = self.methods.iter().position(|&m| m == method)?;
        let (_, cells) = self.rows.iter().find(|(name, _)| name == scenario)?;
        cells[col].as_ref()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["scenario".to_string()];
        for m in &self.methods {
            header.push(format!("{m}_mean"));
            header.push(format!("{m}_median"));
        }
        w.write_record(&header).expect("in-memory write");
        for (name, cells) in &self.rows {
            let mut record = vec![name.clone()];
            for cell in cells {
                match cell {
                    Some(c) => {
                        record.push(c.mean.to_string());
                        record.push(c.median.to_string());
                    }
                    None => record.extend([String::new(), String::new()]),
                }
            }
            w.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Mean and median workload of every method across scenarios.
pub fn compare_methods(scenarios: &[Scenario]) -> Result<ComparisonTable, SimulationError> {
    let mut methods: Vec<Method> = Vec::new();
    for s in scenarios {
        for &m in &s.methods {
            if !methods.contains(&m) {
                methods.push(m);
            }
        }
    }
    let mut rows = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let report = simulate_workload(s)?;
        let cells = methods
            .iter()
            .map(|&m| {
                report.workload_for(m).map(|w| ComparisonCell {
                    mean: w.mean,
                    median: w.median,
                })
            })
            .collect();
        rows.push((s.name.clone(), cells));
    }
    Ok(ComparisonTable { methods, rows })
}

/// Mann-Whitney rank-sum test of "`x` tends to exceed `y`", normal
/// approximation with tie and continuity corrections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankTest {
    pub u_statistic: f64,
    pub z: f64,
    pub p_value: f64,
}

pub fn rank_sum_test(x: &[f64], y: &[f64]) -> RankTest {
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let mut pooled: Vec<(f64, bool)> = x
        .iter()
        .map(|&v| (v, true))
        .chain(y.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pooled.len();
    let mut rank_sum_x = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let ties = (j - i + 1) as f64;
        tie_term += ties * ties * ties - ties;
        rank_sum_x += avg_rank * pooled[i..=j].iter().filter(|p| p.1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_x - nx * (nx + 1.0) / 2.0;
    let total = nx + ny;
    let var = nx * ny / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    let z = if var > 0.0 {
        (u - nx * ny / 2.0 - 0.5) / var.sqrt()
    } else {
        0.0
    };
    let normal = Normal::standard();
    RankTest {
        u_statistic: u,
        z,
        p_value: 1.0 - normal.cdf(z),
    }
}

/// One multi-candidate audit run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContestRun {
    pub seed: u64,
    /// Index at which the last pairwise assertion was certified.
    pub certified_at: Option<u64>,
}

/// Ballot-polling audits of a whole contest whose ballots match its reported
/// totals, one per seed. Draws follow the audit engine exactly, so run `s`
/// reproduces an engine session with seed `s` fed from the synthetic manifest.
pub fn simulate_contest(
    contest: &ContestResult,
    strategy: StrategyKind,
    alpha: f64,
    seeds: &[u64],
) -> Result<Vec<ContestRun>, SimulationError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SimulationError::BadAlpha(alpha));
    }
    let votes = synthetic_votes(contest)?;
    let winners = contest
        .reported_winners(1)
        .ok_or_else(|| SimulationError::Contest("no unique reported winner".into()))?;
    let config = SessionConfig::new(alpha, strategy, Mode::Rla, 0);
    let mut plan: Vec<(Assertion, BettingStrategy)> = Vec::new();
    for c in &contest.candidates {
        if winners.contains(&c.name) {
            continue;
        }
        let a = Assertion::pairwise(winners[0].clone(), c.name.clone());
        let s = build_strategy(contest, &config, &a)
            .map_err(|e| SimulationError::Contest(e.to_string()))?;
        plan.push((a, s));
    }
    let n = contest.total_ballots;
    let log_level = -alpha.ln();
    seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = BallotRng::new(seed);
            let mut remaining: Vec<usize> = (0..votes.len()).collect();
            let mut states = plan
                .iter()
                .map(|(_, s)| MartingaleState::new(s, n, 1.0))
                .collect::<Result<Vec<_>, _>>()?;
            let mut done = vec![false; plan.len()];
            let mut open = plan.len();
            for t in 1..=n {
                let j = rng.uniform_index(remaining.len() as u64) as usize;
                let vote = &votes[remaining.swap_remove(j)];
                for ((state, (a, s)), done) in states.iter_mut().zip(&plan).zip(done.iter_mut()) {
                    if *done {
                        continue;
                    }
                    state.observe(s, a.assort(vote), a.threshold)?;
                    if state.rejects_at_most(s, log_level) {
                        *done = true;
                        open -= 1;
                    }
                }
                if open == 0 {
                    return Ok(ContestRun {
                        seed,
                        certified_at: Some(t),
                    });
                }
            }
            Ok(ContestRun {
                seed,
                certified_at: None,
            })
        })
        .collect()
}

/// Summary rows, one per method.
pub fn summary_csv(report: &SimulationReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let name = &report.scenario.name;
    match report.analysis {
        Analysis::Workload => {
            w.write_record([
                "scenario",
                "method",
                "runs",
                "certified",
                "exhausted",
                "fraction_exhausted",
                "mean",
                "median",
                "q10",
                "q90",
            ])
            .expect("in-memory write");
            for s in &report.workload {
                w.write_record([
                    name.clone(),
                    s.method.to_string(),
                    s.runs.to_string(),
                    s.certified.to_string(),
                    s.exhausted.to_string(),
                    s.fraction_exhausted.to_string(),
                    s.mean.to_string(),
                    s.median.to_string(),
                    s.q10.to_string(),
                    s.q90.to_string(),
                ])
                .expect("in-memory write");
            }
        }
        Analysis::Risk => {
            w.write_record([
                "scenario",
                "method",
                "runs",
                "certified",
                "rate",
                "standard_error",
                "bound",
                "within_bound",
            ])
            .expect("in-memory write");
            for s in &report.risk {
                w.write_record([
                    name.clone(),
                    s.method.to_string(),
                    s.runs.to_string(),
                    s.certified.to_string(),
                    s.rate.to_string(),
                    s.standard_error.to_string(),
                    s.bound.to_string(),
                    s.within_bound.to_string(),
                ])
                .expect("in-memory write");
            }
        }
        Analysis::Coverage => {
            w.write_record([
                "scenario",
                "method",
                "runs",
                "miscovered",
                "miscoverage_rate",
                "bound",
                "within_bound",
                "mean_two_sided_workload",
                "mean_one_sided_workload",
                "two_sided_later",
                "two_sided_earlier",
            ])
            .expect("in-memory write");
            for s in &report.coverage {
                w.write_record([
                    name.clone(),
                    s.method.to_string(),
                    s.runs.to_string(),
                    s.miscovered.to_string(),
                    s.miscoverage_rate.to_string(),
                    s.bound.to_string(),
                    s.within_bound.to_string(),
                    s.mean_two_sided_workload.to_string(),
                    s.mean_one_sided_workload.to_string(),
                    s.two_sided_later.to_string(),
                    s.two_sided_earlier.to_string(),
                ])
                .expect("in-memory write");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// One row per replication and one column per method; empty cells are
/// exhausted runs.
pub fn stopping_times_csv(report: &SimulationReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["replication".to_string()];
    header.extend(report.workload.iter().map(|s| s.method.to_string()));
    w.write_record(&header).expect("in-memory write");
    let runs = report.workload.first().map_or(0, |s| s.runs);
    for r in 0..runs {
        let mut row = vec![r.to_string()];
        row.extend(
            report
                .workload
                .iter()
                .map(|s| s.stopping_times[r].map_or(String::new(), |t| t.to_string())),
        );
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn histogram_csv(report: &SimulationReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "bin_lower", "bin_upper", "count"])
        .expect("in-memory write");
    for s in &report.workload {
        for b in &s.histogram {
            w.write_record([
                s.method.to_string(),
                b.bin_lower.to_string(),
                b.bin_upper.to_string(),
                b.count.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
