//! Betting capital processes for sampling without replacement.
//!
//! For a population of `N` values in `[0, u]` and a hypothesised mean `mu`,
//! the process
//!
//! ```text
//! M_t(mu) = prod_{i <= t} (1 + lambda_i * (X_i - C_i(mu)))
//! C_i(mu) = (N * mu - sum_{j < i} X_j) / (N - i + 1)
//! ```
//!
//! is a nonnegative martingale starting at one when `mu` is the true mean and
//! every bet `lambda_i` lies in `[0, 1 / C_i(mu)]` and only depends on the
//! past. `C_i(mu)` is the mean of the next draw if the population mean were
//! `mu`.
//!
//! Three betting schemes are provided:
//!
//! * a fixed bet `lambda'` truncated to `1 / C_i(mu)` at each step (the
//!   "a priori Kelly" bet derived from reported totals),
//! * a convex mixture over the implicit grid `lambda_d = d / ((D + 1) C_i(mu))`,
//! * a two-sided mixture `beta * M^+ + (1 - beta) * M^-` whose minus side bets
//!   `d / ((D + 1) (u - C_i(mu)))` against the null from above.
//!
//! Each mixture component keeps its wealth in log space; mixtures are formed
//! with log-sum-exp so that populations of tens of thousands of ballots never
//! overflow.

use crate::population::AssorterPopulation;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of grid points for mixture strategies.
pub const DEFAULT_GRID_SIZE: usize = 100;

/// Absolute bisection tolerance for [`kelly_lambda_numeric`].
pub const KELLY_ROOT_TOLERANCE: f64 = 1e-9;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MartingaleError {
    #[error("population of {0} ballots is exhausted")]
    Exhausted(u64),
    #[error("non-finite input: {0}")]
    NotANumber(&'static str),
    #[error("observation {x} lies outside [0, {upper}]")]
    OutOfRange { x: f64, upper: f64 },
    #[error("population size must be at least 1")]
    EmptyPopulation,
    #[error("grid size must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("all weights are zero for {kind:?} weights with D = {grid}")]
    DegenerateWeights { kind: WeightKind, grid: usize },
    #[error("weights must be nonnegative and sum to one (sum = {0})")]
    BadWeights(f64),
    #[error("bet {0} is negative or not finite")]
    BadLambda(f64),
    #[error("mixing weight beta = {0} is outside [0, 1]")]
    BadBeta(f64),
    #[error("reported counts are both zero")]
    NoValidVotes,
    #[error("state has {found} components but the strategy needs {expected}")]
    StrategyMismatch { expected: usize, found: usize },
}

/// Slack used when deciding whether a null is arithmetically impossible.
///
/// Sums of the encoded values are exact, but `N * mu` is rounded; nulls within
/// this distance (in sum units) of a feasibility boundary count as feasible.
pub fn feasibility_tolerance(population_size: u64, upper_bound: f64) -> f64 {
    1e-9 * (population_size as f64 * upper_bound).max(1.0)
}

/// Position in the sample together with the running sum of observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMeanState {
    pub population_size: u64,
    /// 1-based index of the next draw.
    pub t: u64,
    pub prefix_sum: f64,
}

impl ConditionalMeanState {
    pub fn new(population_size: u64) -> Self {
        Self {
            population_size,
            t: 1,
            prefix_sum: 0.0,
        }
    }

    pub fn remaining(&self) -> u64 {
        self.population_size + 1 - self.t
    }

    /// `(N mu - prefix_sum) / (N - t + 1)`; may fall outside `[0, u]`.
    pub fn conditional_mean(&self, mu: f64) -> Result<f64, MartingaleError> {
        if self.t > self.population_size {
            return Err(MartingaleError::Exhausted(self.population_size));
        }
        Ok((self.population_size as f64 * mu - self.prefix_sum) / self.remaining() as f64)
    }
}

/// Free-function form of [`ConditionalMeanState::conditional_mean`].
pub fn conditional_mean(state: &ConditionalMeanState, mu: f64) -> Result<f64, MartingaleError> {
    state.conditional_mean(mu)
}

/// True iff no arrangement of the unseen ballots in `[0, u]` has mean `mu`.
pub fn logical_refutation_check(state: &ConditionalMeanState, mu: f64, upper_bound: f64) -> bool {
    let tol = feasibility_tolerance(state.population_size, upper_bound);
    let still_needed = state.population_size as f64 * mu - state.prefix_sum;
    let unseen = (state.population_size + 1).saturating_sub(state.t) as f64;
    still_needed < -tol || still_needed > upper_bound * unseen + tol
}

/// The bet that maximises `prod (1 + lambda (x_i - 1/2))` when the reported
/// counts are correct: `2 (N_w - N_l) / (N_w + N_l)`, clamped to `[0, 2]`.
pub fn apriori_kelly_lambda(winner_votes: u64, loser_votes: u64) -> Result<f64, MartingaleError> {
    let total = winner_votes + loser_votes;
    if total == 0 {
        return Err(MartingaleError::NoValidVotes);
    }
    let lambda = 2.0 * (winner_votes as f64 - loser_votes as f64) / total as f64;
    Ok(lambda.clamp(0.0, 2.0))
}

/// Root of `sum (x_i - 1/2) / (1 + lambda (x_i - 1/2)) = 0` over
/// `[0, lambda_max]`, by bisection.
///
/// `lambda_max = 1 / (1/2 - min x)` when some value is below one half, where
/// the log-wealth proxy diverges to minus infinity; otherwise the objective is
/// increasing everywhere and `2 / u` is returned.
pub fn kelly_lambda_numeric(proxy: &AssorterPopulation) -> f64 {
    let values = proxy.values();
    let slope = |lambda: f64| -> f64 {
        values
            .iter()
            .map(|&x| (x - 0.5) / (1.0 + lambda * (x - 0.5)))
            .sum()
    };
    if slope(0.0) <= 0.0 {
        return 0.0;
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= 0.5 {
        return 2.0 / proxy.upper_bound();
    }
    let (mut lo, mut hi) = (0.0, 1.0 / (0.5 - min));
    while hi - lo > KELLY_ROOT_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Constant,
    Linear,
    Square,
}

/// Convex weights `theta_1..theta_D` over the bet grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self, MartingaleError> {
        if weights.len() < 2 {
            return Err(MartingaleError::GridTooSmall(weights.len()));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE
        {
            return Err(MartingaleError::BadWeights(sum));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            log_weights,
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = MartingaleError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.weights
    }
}

/// Builds constant, truncated-linear or truncated-square weights on a grid of
/// `D` points. With grid fraction `f_d = d / (D + 1)`:
///
/// * constant: `1 / D`
/// * linear: `max(0, 1 - 2 f_d)`
/// * square: `(1/3 - f_d)^2` for `f_d <= 1/3`, else `0`
///
/// each normalised by its own sum.
pub fn make_weights(kind: WeightKind, grid: usize) -> Result<WeightVector, MartingaleError> {
    if grid < 2 {
        return Err(MartingaleError::GridTooSmall(grid));
    }
    let raw: Vec<f64> = (1..=grid)
        .map(|d| {
            let f = d as f64 / (grid + 1) as f64;
            match kind {
                WeightKind::Constant => 1.0,
                WeightKind::Linear => (1.0 - 2.0 * f).max(0.0),
                WeightKind::Square if f <= 1.0 / 3.0 => (1.0 / 3.0 - f).powi(2),
                WeightKind::Square => 0.0,
            }
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        return Err(MartingaleError::DegenerateWeights { kind, grid });
    }
    WeightVector::new(raw.into_iter().map(|g| g / sum).collect())
}

/// How bets are placed at each draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BettingStrategy {
    /// `lambda_t = min(lambda, 1 / C_t(mu))`.
    FixedLambda { lambda: f64 },
    /// Mixture over `lambda_d = d / ((D + 1) C_t(mu))`.
    ConvexGrid { weights: WeightVector },
    /// `beta M^+ + (1 - beta) M^-`.
    TwoSided {
        plus: WeightVector,
        minus: WeightVector,
        beta: f64,
    },
}

impl BettingStrategy {
    pub fn fixed(lambda: f64) -> Result<Self, MartingaleError> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(MartingaleError::BadLambda(lambda));
        }
        Ok(Self::FixedLambda { lambda })
    }

    pub fn convex(kind: WeightKind, grid: usize) -> Result<Self, MartingaleError> {
        Ok(Self::ConvexGrid {
            weights: make_weights(kind, grid)?,
        })
    }

    pub fn two_sided(
        plus: WeightVector,
        minus: WeightVector,
        beta: f64,
    ) -> Result<Self, MartingaleError> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(MartingaleError::BadBeta(beta));
        }
        Ok(Self::TwoSided { plus, minus, beta })
    }

    /// Same weight family on both sides.
    pub fn symmetric_two_sided(
        kind: WeightKind,
        grid: usize,
        beta: f64,
    ) -> Result<Self, MartingaleError> {
        let w = make_weights(kind, grid)?;
        Self::two_sided(w.clone(), w, beta)
    }

    pub fn is_two_sided(&self) -> bool {
        matches!(self, Self::TwoSided { .. })
    }

    fn component_counts(&self) -> (usize, usize) {
        match self {
            Self::FixedLambda { .. } => (1, 0),
            Self::ConvexGrid { weights } => (weights.len(), 0),
            Self::TwoSided { plus, minus, .. } => (plus.len(), minus.len()),
        }
    }
}

/// `log(exp(a) + exp(b))` that returns `a` unchanged when `b` is `-inf`.
fn log_add(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log sum_d theta_d exp(w_d)`.
fn log_mix(log_weights: &[f64], log_wealth: &[f64]) -> f64 {
    let max = log_weights
        .iter()
        .zip(log_wealth)
        .map(|(lw, w)| lw + w)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = log_weights
        .iter()
        .zip(log_wealth)
        .map(|(lw, w)| (lw + w - max).exp())
        .sum();
    max + sum.ln()
}

fn max_component(log_weights: &[f64], log_wealth: &[f64]) -> f64 {
    log_weights
        .iter()
        .zip(log_wealth)
        .map(|(lw, w)| lw + w)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Running state of `M_t(mu)` for one null `mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleState {
    population_size: u64,
    upper_bound: f64,
    observed: u64,
    prefix_sum: f64,
    #[serde(with = "crate::serde_float::vec")]
    log_wealth_plus: Vec<f64>,
    #[serde(with = "crate::serde_float::vec")]
    log_wealth_minus: Vec<f64>,
    logically_refuted: bool,
    /// The refutation came from `mu` being too large for the observations.
    #[serde(default)]
    refuted_high: bool,
}

impl MartingaleState {
    /// Every component starts with wealth one.
    pub fn new(
        strategy: &BettingStrategy,
        population_size: u64,
        upper_bound: f64,
    ) -> Result<Self, MartingaleError> {
        if population_size == 0 {
            return Err(MartingaleError::EmptyPopulation);
        }
        if !(upper_bound.is_finite() && upper_bound > 0.0) {
            return Err(MartingaleError::NotANumber("upper bound"));
        }
        let (plus, minus) = strategy.component_counts();
        Ok(Self {
            population_size,
            upper_bound,
            observed: 0,
            prefix_sum: 0.0,
            log_wealth_plus: vec![0.0; plus],
            log_wealth_minus: vec![0.0; minus],
            logically_refuted: false,
            refuted_high: false,
        })
    }

    pub fn population_size(&self) -> u64 {
        self.population_size
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    /// Number of observations incorporated so far.
    pub fn observed(&self) -> u64 {
        self.observed
    }

    pub fn prefix_sum(&self) -> f64 {
        self.prefix_sum
    }

    pub fn is_refuted(&self) -> bool {
        self.logically_refuted
    }

    /// Refuted because the unseen ballots cannot lift the mean up to `mu`.
    pub fn is_refuted_high(&self) -> bool {
        self.refuted_high
    }

    pub fn log_wealth_plus(&self) -> &[f64] {
        &self.log_wealth_plus
    }

    pub fn log_wealth_minus(&self) -> &[f64] {
        &self.log_wealth_minus
    }

    pub fn conditional_mean_state(&self) -> ConditionalMeanState {
        ConditionalMeanState {
            population_size: self.population_size,
            t: self.observed + 1,
            prefix_sum: self.prefix_sum,
        }
    }

    fn check_strategy(&self, strategy: &BettingStrategy) -> Result<(), MartingaleError> {
        let (plus, minus) = strategy.component_counts();
        if plus != self.log_wealth_plus.len() || minus != self.log_wealth_minus.len() {
            return Err(MartingaleError::StrategyMismatch {
                expected: plus + minus,
                found: self.log_wealth_plus.len() + self.log_wealth_minus.len(),
            });
        }
        Ok(())
    }

    fn infeasible(&self, still_needed: f64, unseen: u64) -> bool {
        let tol = feasibility_tolerance(self.population_size, self.upper_bound);
        still_needed < -tol || still_needed > self.upper_bound * unseen as f64 + tol
    }

    /// Incorporates the next draw `x` and returns `M_t(mu)`.
    ///
    /// Once `mu` is arithmetically impossible given the observations, the
    /// state is marked refuted and `M_t(mu) = +inf` from then on. When the
    /// null forces every unseen value to `0` (or to `u`), the side whose bet
    /// would be unbounded contributes a factor of one: the draw is then
    /// deterministic under the null.
    pub fn update(
        &mut self,
        strategy: &BettingStrategy,
        x: f64,
        mu: f64,
    ) -> Result<f64, MartingaleError> {
        self.observe(strategy, x, mu)?;
        Ok(self.value(strategy))
    }

    /// [`MartingaleState::update`] without evaluating the mixture afterwards.
    pub fn observe(
        &mut self,
        strategy: &BettingStrategy,
        x: f64,
        mu: f64,
    ) -> Result<(), MartingaleError> {
        if x.is_nan() {
            return Err(MartingaleError::NotANumber("observation"));
        }
        if mu.is_nan() {
            return Err(MartingaleError::NotANumber("null mean"));
        }
        if !(0.0..=self.upper_bound).contains(&x) {
            return Err(MartingaleError::OutOfRange {
                x,
                upper: self.upper_bound,
            });
        }
        if self.observed >= self.population_size {
            return Err(MartingaleError::Exhausted(self.population_size));
        }
        self.check_strategy(strategy)?;

        let unseen = self.population_size - self.observed;
        let still_needed = self.population_size as f64 * mu - self.prefix_sum;
        self.observed += 1;
        self.prefix_sum += x;
        if self.logically_refuted
            || self.infeasible(still_needed, unseen)
            || self.infeasible(still_needed - x, unseen - 1)
        {
            if !self.logically_refuted {
                let tol = feasibility_tolerance(self.population_size, self.upper_bound);
                self.refuted_high = still_needed - x > self.upper_bound * (unseen - 1) as f64 + tol
                    || still_needed > self.upper_bound * unseen as f64 + tol;
            }
            self.logically_refuted = true;
            return Ok(());
        }

        let u = self.upper_bound;
        let tol = feasibility_tolerance(self.population_size, u);
        let c = (still_needed / unseen as f64).clamp(0.0, u);
        let plus_degenerate = still_needed <= tol;
        let minus_degenerate = u * unseen as f64 - still_needed <= tol;

        match strategy {
            BettingStrategy::FixedLambda { lambda } => {
                if !plus_degenerate {
                    let bet = lambda.min(1.0 / c);
                    self.log_wealth_plus[0] += (1.0 + bet * (x - c)).ln();
                }
            }
            BettingStrategy::ConvexGrid { .. } => {
                if !plus_degenerate {
                    grid_step(&mut self.log_wealth_plus, (x - c) / c);
                }
            }
            BettingStrategy::TwoSided { .. } => {
                if !plus_degenerate {
                    grid_step(&mut self.log_wealth_plus, (x - c) / c);
                }
                if !minus_degenerate {
                    grid_step(&mut self.log_wealth_minus, -(x - c) / (u - c));
                }
            }
        }
        Ok(())
    }

    /// `log M_t(mu)`.
    pub fn log_value(&self, strategy: &BettingStrategy) -> f64 {
        if self.logically_refuted {
            return f64::INFINITY;
        }
        match strategy {
            BettingStrategy::FixedLambda { .. } => self.log_wealth_plus[0],
            BettingStrategy::ConvexGrid { weights } => {
                log_mix(weights.log_weights(), &self.log_wealth_plus)
            }
            BettingStrategy::TwoSided { plus, minus, beta } => {
                let p = beta.ln() + log_mix(plus.log_weights(), &self.log_wealth_plus);
                let m = (1.0 - beta).ln() + log_mix(minus.log_weights(), &self.log_wealth_minus);
                log_add(p, m)
            }
        }
    }

    pub fn value(&self, strategy: &BettingStrategy) -> f64 {
        self.log_value(strategy).exp()
    }

    /// `log M_t(mu) >= log_level`, skipping the full log-sum-exp when the
    /// largest weighted component already decides it.
    pub fn log_value_at_least(&self, strategy: &BettingStrategy, log_level: f64) -> bool {
        if self.logically_refuted {
            return true;
        }
        let (lead, spread) = match strategy {
            BettingStrategy::FixedLambda { .. } => return self.log_wealth_plus[0] >= log_level,
            BettingStrategy::ConvexGrid { weights } => (
                max_component(weights.log_weights(), &self.log_wealth_plus),
                (weights.len() as f64).ln(),
            ),
            BettingStrategy::TwoSided { plus, minus, beta } => {
                let p = beta.ln() + max_component(plus.log_weights(), &self.log_wealth_plus);
                let m =
                    (1.0 - beta).ln() + max_component(minus.log_weights(), &self.log_wealth_minus);
                (p.max(m), ((plus.len() + minus.len()) as f64).ln())
            }
        };
        if lead >= log_level {
            return true;
        }
        if lead + spread < log_level {
            return false;
        }
        self.log_value(strategy) >= log_level
    }

    /// Evidence against every mean at or below `mu`. A refutation only counts
    /// when `mu` is too small for the observations; one from above says the
    /// mean lies below `mu`.
    pub fn rejects_at_most(&self, strategy: &BettingStrategy, log_level: f64) -> bool {
        !self.refuted_high && self.log_value_at_least(strategy, log_level)
    }
}

/// Adds `log(1 + d / (D + 1) * ratio)` to every grid component.
fn grid_step(log_wealth: &mut [f64], ratio: f64) {
    let scale = 1.0 / (log_wealth.len() + 1) as f64;
    for (i, w) in log_wealth.iter_mut().enumerate() {
        *w += (1.0 + (i + 1) as f64 * scale * ratio).ln();
    }
}

/// Free-function form of [`MartingaleState::new`].
pub fn init_state(
    strategy: &BettingStrategy,
    population_size: u64,
    upper_bound: f64,
) -> Result<MartingaleState, MartingaleError> {
    MartingaleState::new(strategy, population_size, upper_bound)
}

/// Free-function form of [`MartingaleState::update`]; returns the new state
/// and `M_t(mu)`.
pub fn update_martingale(
    state: &MartingaleState,
    strategy: &BettingStrategy,
    x: f64,
    mu: f64,
) -> Result<(MartingaleState, f64), MartingaleError> {
    let mut next = state.clone();
    let value = next.update(strategy, x, mu)?;
    Ok((next, value))
}

/// Replays `prefix` from scratch and returns `log M_t(mu)`.
pub fn log_wealth_of_prefix(
    prefix: &[f64],
    strategy: &BettingStrategy,
    population_size: u64,
    upper_bound: f64,
    mu: f64,
) -> Result<f64, MartingaleError> {
    let mut state = MartingaleState::new(strategy, population_size, upper_bound)?;
    for &x in prefix {
        state.observe(strategy, x, mu)?;
        if state.is_refuted() {
            return Ok(f64::INFINITY);
        }
    }
    Ok(state.log_value(strategy))
}
