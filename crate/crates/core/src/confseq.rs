//! Confidence sequences and anytime p-values from betting martingales.
//!
//! The confidence set at time `t` is `C_t = { mu : M_t(mu) < 1/alpha }`. For
//! the one-sided strategies `M_t(mu)` is nonincreasing in `mu` on the feasible
//! range, and for the two-sided mixture it is convex there, so `C_t` is an
//! interval whose endpoints are found by bisection on the `mu` axis.
//!
//! Reported sets are the running intersection of `C_s` for `s <= t`: the lower
//! endpoint never decreases and the upper endpoint never increases. Endpoints
//! are rounded outward by at most the bisection tolerance.

use crate::martingale::{log_wealth_of_prefix, BettingStrategy, MartingaleError, MartingaleState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bisection tolerance on the `mu` axis.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

const GOLDEN_ITERATIONS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfseqError {
    #[error("risk limit must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error(transparent)]
    Martingale(#[from] MartingaleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    TwoSided,
}

impl Side {
    pub fn of(strategy: &BettingStrategy) -> Self {
        if strategy.is_two_sided() {
            Side::TwoSided
        } else {
            Side::Lower
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsConfig {
    pub alpha: f64,
    pub tolerance: f64,
}

impl CsConfig {
    pub fn new(alpha: f64) -> Result<Self, ConfseqError> {
        Self::with_tolerance(alpha, DEFAULT_TOLERANCE)
    }

    pub fn with_tolerance(alpha: f64, tolerance: f64) -> Result<Self, ConfseqError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ConfseqError::BadAlpha(alpha));
        }
        if !(tolerance > 0.0 && tolerance.is_finite()) {
            return Err(ConfseqError::BadTolerance(tolerance));
        }
        Ok(Self { alpha, tolerance })
    }

    /// `log(1 / alpha)`, the rejection level for `log M_t`.
    pub fn log_level(&self) -> f64 {
        -self.alpha.ln()
    }
}

/// Incrementally maintained confidence sequence for one population mean.
#[derive(Debug, Clone)]
pub struct ConfidenceSequence {
    strategy: BettingStrategy,
    population_size: u64,
    upper_bound: f64,
    config: CsConfig,
    prefix: Vec<f64>,
    prefix_sum: f64,
    lower: f64,
    upper: f64,
    anchor: Option<f64>,
    flagged_empty: bool,
    /// Size of the last move of the lower endpoint, used as the first probe.
    last_move: f64,
}

impl ConfidenceSequence {
    pub fn new(
        strategy: BettingStrategy,
        population_size: u64,
        upper_bound: f64,
        config: CsConfig,
    ) -> Result<Self, ConfseqError> {
        // Validates the population size and bound.
        MartingaleState::new(&strategy, population_size, upper_bound)?;
        Ok(Self {
            strategy,
            population_size,
            upper_bound,
            config,
            prefix: Vec::new(),
            prefix_sum: 0.0,
            lower: 0.0,
            upper: upper_bound,
            anchor: None,
            flagged_empty: false,
            last_move: 0.0,
        })
    }

    pub fn strategy(&self) -> &BettingStrategy {
        &self.strategy
    }

    pub fn config(&self) -> &CsConfig {
        &self.config
    }

    pub fn side(&self) -> Side {
        Side::of(&self.strategy)
    }

    pub fn t(&self) -> usize {
        self.prefix.len()
    }

    pub fn prefix(&self) -> &[f64] {
        &self.prefix
    }

    /// Every `mu` below this value has been excluded at some time.
    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// Every `mu` above this value has been excluded (statistically or by
    /// arithmetic) at some time.
    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Set when the raw confidence set became empty and the endpoints were
    /// widened by the tolerance instead.
    pub fn flagged_empty(&self) -> bool {
        self.flagged_empty
    }

    /// `log M_t(mu)` for the current prefix.
    pub fn log_wealth(&self, mu: f64) -> f64 {
        log_wealth_of_prefix(
            &self.prefix,
            &self.strategy,
            self.population_size,
            self.upper_bound,
            mu,
        )
        .unwrap_or(f64::INFINITY)
    }

    /// Whether the level-alpha test rejects `mu` at the current time.
    pub fn excludes(&self, mu: f64) -> bool {
        self.log_wealth(mu) >= self.config.log_level()
    }

    /// Largest `mu` that is still arithmetically possible.
    fn feasible_max(&self) -> f64 {
        let unseen = (self.population_size - self.prefix.len() as u64) as f64;
        ((self.prefix_sum + self.upper_bound * unseen) / self.population_size as f64)
            .min(self.upper_bound)
    }

    fn feasible_min(&self) -> f64 {
        self.prefix_sum / self.population_size as f64
    }

    /// Adds one observation and returns the updated `(lower, upper)`.
    pub fn push(&mut self, x: f64) -> Result<(f64, f64), ConfseqError> {
        if x.is_nan() {
            return Err(MartingaleError::NotANumber("observation").into());
        }
        if !(0.0..=self.upper_bound).contains(&x) {
            return Err(MartingaleError::OutOfRange {
                x,
                upper: self.upper_bound,
            }
            .into());
        }
        if self.prefix.len() as u64 >= self.population_size {
            return Err(MartingaleError::Exhausted(self.population_size).into());
        }
        self.prefix.push(x);
        self.prefix_sum += x;
        match self.side() {
            Side::Lower => self.refresh_lower(),
            Side::TwoSided => self.refresh_two_sided(),
        }
        Ok((self.lower, self.upper))
    }

    fn refresh_lower(&mut self) {
        let eps = self.config.tolerance;
        let hi = self.feasible_max();
        self.upper = self.upper.min(hi);
        let start = self.lower;
        if !self.excludes(start) {
            return;
        }
        if hi <= start || self.excludes(hi) {
            self.flagged_empty = true;
            self.lower = start.max(hi - eps).min(self.upper);
            return;
        }
        // Gallop up from the old endpoint, then bisect the last bracket.
        let mut a = start;
        let mut step = self.last_move.max(16.0 * eps);
        loop {
            let b = a + step;
            if b >= hi {
                self.lower = self.bisect(a, hi);
                break;
            }
            if self.excludes(b) {
                a = b;
                step *= 2.0;
            } else {
                self.lower = self.bisect(a, b);
                break;
            }
        }
        self.last_move = self.lower - start;
    }

    fn refresh_two_sided(&mut self) {
        let eps = self.config.tolerance;
        let (lo_f, hi_f) = (self.feasible_min(), self.feasible_max());
        self.lower = self.lower.max(lo_f);
        self.upper = self.upper.min(hi_f);
        let (lo, hi) = (self.lower, self.upper);
        let lower_out = self.excludes(lo);
        let upper_out = self.excludes(hi);
        if !lower_out && !upper_out {
            return;
        }
        let (a, b) = (lo.max(lo_f), hi.min(hi_f));
        let interior = self
            .anchor
            .filter(|&m| m >= a && m <= b && !self.excludes(m))
            .or_else(|| {
                if a > b {
                    return None;
                }
                let m = self.argmin(a, b);
                (!self.excludes(m)).then_some(m)
            });
        let Some(m) = interior else {
            self.flagged_empty = true;
            let centre = if a <= b {
                self.argmin(a, b)
            } else {
                0.5 * (a + b)
            };
            self.lower = (centre - eps).max(lo).min(hi);
            self.upper = (centre + eps).min(hi).max(self.lower);
            return;
        };
        self.anchor = Some(m);
        if lower_out {
            self.lower = self.bisect(lo, m);
        }
        if upper_out {
            self.upper = self.bisect_down(m, hi);
        }
    }

    /// `excluded` at `a`, not at `b` (`a < b`); returns an excluded point
    /// within tolerance of the crossing.
    fn bisect(&self, mut a: f64, mut b: f64) -> f64 {
        while b - a > self.config.tolerance {
            let mid = 0.5 * (a + b);
            if self.excludes(mid) {
                a = mid;
            } else {
                b = mid;
            }
        }
        a
    }

    /// Not excluded at `a`, excluded at `b`; returns an excluded point.
    fn bisect_down(&self, mut a: f64, mut b: f64) -> f64 {
        while b - a > self.config.tolerance {
            let mid = 0.5 * (a + b);
            if self.excludes(mid) {
                b = mid;
            } else {
                a = mid;
            }
        }
        b
    }

    /// Golden-section search for the minimiser of the convex `log M_t` on `[a, b]`.
    fn argmin(&self, mut a: f64, mut b: f64) -> f64 {
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - ratio * (b - a);
        let mut x2 = a + ratio * (b - a);
        let mut f1 = self.log_wealth(x1);
        let mut f2 = self.log_wealth(x2);
        for _ in 0..GOLDEN_ITERATIONS {
            if b - a <= self.config.tolerance * 1e-2 {
                break;
            }
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - ratio * (b - a);
                f1 = self.log_wealth(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + ratio * (b - a);
                f2 = self.log_wealth(x2);
            }
        }
        if f1 <= f2 {
            x1
        } else {
            x2
        }
    }
}

/// Lower endpoint `L_t` of the running-intersection confidence sequence.
pub fn lower_bound(
    prefix: &[f64],
    strategy: &BettingStrategy,
    population_size: u64,
    upper_bound: f64,
    config: CsConfig,
) -> Result<f64, ConfseqError> {
    let mut cs = ConfidenceSequence::new(strategy.clone(), population_size, upper_bound, config)?;
    for &x in prefix {
        cs.push(x)?;
    }
    Ok(cs.lower())
}

/// `(L_t, U_t)` of the running-intersection confidence sequence.
pub fn interval(
    prefix: &[f64],
    strategy: &BettingStrategy,
    population_size: u64,
    upper_bound: f64,
    config: CsConfig,
) -> Result<(f64, f64), ConfseqError> {
    let mut cs = ConfidenceSequence::new(strategy.clone(), population_size, upper_bound, config)?;
    for &x in prefix {
        cs.push(x)?;
    }
    Ok((cs.lower(), cs.upper()))
}

/// Running-minimum anytime p-value `min(1, min_{s<=t} 1 / M_s(mu0))` for one null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueTracker {
    #[serde(with = "crate::serde_float")]
    null: f64,
    state: MartingaleState,
    #[serde(with = "crate::serde_float")]
    p_value: f64,
}

impl PValueTracker {
    pub fn new(
        strategy: &BettingStrategy,
        population_size: u64,
        upper_bound: f64,
        null: f64,
    ) -> Result<Self, ConfseqError> {
        Ok(Self {
            null,
            state: MartingaleState::new(strategy, population_size, upper_bound)?,
            p_value: 1.0,
        })
    }

    pub fn null(&self) -> f64 {
        self.null
    }

    pub fn state(&self) -> &MartingaleState {
        &self.state
    }

    pub fn p_value(&self) -> f64 {
        self.p_value
    }

    pub fn push(&mut self, strategy: &BettingStrategy, x: f64) -> Result<f64, ConfseqError> {
        self.state.update(strategy, x, self.null)?;
        let p = (-self.state.log_value(strategy)).exp();
        self.p_value = self.p_value.min(p).min(1.0);
        Ok(self.p_value)
    }

    /// Whether the null has been rejected at level `alpha` at some time.
    pub fn rejected(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

pub fn anytime_p_value(
    prefix: &[f64],
    strategy: &BettingStrategy,
    population_size: u64,
    upper_bound: f64,
    null: f64,
) -> Result<f64, ConfseqError> {
    let mut tracker = PValueTracker::new(strategy, population_size, upper_bound, null)?;
    for &x in prefix {
        tracker.push(strategy, x)?;
    }
    Ok(tracker.p_value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::martingale::{make_weights, WeightKind};

    fn sq() -> BettingStrategy {
        BettingStrategy::convex(WeightKind::Square, 100).unwrap()
    }

    #[test]
    fn empty_prefix() {
        let cfg = CsConfig::new(0.05).unwrap();
        assert_eq!(lower_bound(&[], &sq(), 100, 1.0, cfg).unwrap(), 0.0);
        let two = BettingStrategy::symmetric_two_sided(WeightKind::Square, 100, 0.5).unwrap();
        assert_eq!(interval(&[], &two, 100, 1.0, cfg).unwrap(), (0.0, 1.0));
        assert_eq!(anytime_p_value(&[], &sq(), 100, 1.0, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn config_validation() {
        assert_eq!(CsConfig::new(1.0), Err(ConfseqError::BadAlpha(1.0)));
        assert_eq!(CsConfig::new(0.0), Err(ConfseqError::BadAlpha(0.0)));
        assert!(CsConfig::with_tolerance(0.1, 0.0).is_err());
    }

    #[test]
    fn full_count_pins_the_mean() {
        let cfg = CsConfig::new(0.05).unwrap();
        let prefix = [1.0, 1.0, 1.0, 0.0];
        let l = lower_bound(&prefix, &sq(), 4, 1.0, cfg).unwrap();
        assert!(l >= 0.75 - cfg.tolerance, "L = {l}");
        assert!(l <= 0.75);
    }

    #[test]
    fn tie_interval_contains_half() {
        let cfg = CsConfig::new(0.05).unwrap();
        let two = BettingStrategy::symmetric_two_sided(WeightKind::Square, 20, 0.5).unwrap();
        let prefix: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
        let (l, u) = interval(&prefix, &two, 10, 1.0, cfg).unwrap();
        assert!(l <= 0.5 && 0.5 <= u, "[{l}, {u}]");
    }

    #[test]
    fn beta_one_has_no_upper_power() {
        let cfg = CsConfig::new(0.05).unwrap();
        let w = make_weights(WeightKind::Square, 30).unwrap();
        let two = BettingStrategy::two_sided(w.clone(), w.clone(), 1.0).unwrap();
        let one = BettingStrategy::ConvexGrid { weights: w };
        let prefix = [0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let n = 1000;
        let (l2, u2) = interval(&prefix, &two, n, 1.0, cfg).unwrap();
        let l1 = lower_bound(&prefix, &one, n, 1.0, cfg).unwrap();
        // Only arithmetic can shrink the upper end.
        let feasible = (1.5 + (n - 10) as f64) / n as f64;
        assert!((u2 - feasible).abs() < 1e-12, "{u2} vs {feasible}");
        assert!((l1 - l2).abs() <= cfg.tolerance);
    }

    #[test]
    fn refuted_null_has_zero_p_value() {
        let s = sq();
        assert_eq!(anytime_p_value(&[1.0, 1.0], &s, 4, 1.0, 0.25).unwrap(), 0.0);
    }

    #[test]
    fn p_value_is_nonincreasing() {
        let s = sq();
        let mut tracker = PValueTracker::new(&s, 200, 1.0, 0.5).unwrap();
        let mut last = 1.0;
        for i in 0..100 {
            let x = if i % 3 == 0 { 0.0 } else { 1.0 };
            let p = tracker.push(&s, x).unwrap();
            assert!(p <= last);
            last = p;
        }
        assert!(tracker.rejected(0.05));
    }
}
