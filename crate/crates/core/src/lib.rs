//! Risk-limiting audits and tallies by betting.
//!
//! Ballots are sampled uniformly without replacement. Each pairwise
//! comparison between a reported winner and loser is turned into a bounded
//! population whose mean exceeds one half exactly when the winner beat the
//! loser. A capital process bets against each candidate mean; the means it
//! has not refuted at level `alpha` form an anytime-valid confidence
//! sequence, and the audit stops once every comparison's threshold is
//! excluded.

pub mod confseq;
pub mod dataio;
pub mod engine;
pub mod martingale;
pub mod population;
pub mod rng;
pub(crate) mod serde_float;
pub mod service;
pub mod simulator;
