//! Replayable ballot sampling.
//!
//! The generator is ChaCha20 (20 rounds, RFC 7539 block function as used by
//! `rand_chacha`) keyed with the 64-bit audit seed in little-endian order in
//! the first 8 key bytes and zeros elsewhere, stream (nonce) 0. Output words
//! are consumed as little-endian `u64`s.
//!
//! A uniform index in `[0, n)` is drawn by rejection: draw `r`; reject while
//! `r < 2^64 mod n`; return `r mod n`. Replicating an audit in another
//! implementation only requires ChaCha20 and these two rules. The generator
//! position is a single 128-bit word counter, which session snapshots store.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn key(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key
}

#[derive(Debug, Clone)]
pub struct BallotRng {
    seed: u64,
    inner: ChaCha20Rng,
}

impl BallotRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha20Rng::from_seed(key(seed)),
        }
    }

    /// Independent stream for replication `stream` of a Monte Carlo study.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = Self::new(seed);
        rng.inner.set_stream(stream);
        rng
    }

    /// Restores a generator at a recorded word position (stream 0).
    pub fn at_position(seed: u64, word_pos: u128) -> Self {
        let mut rng = Self::new(seed);
        rng.inner.set_word_pos(word_pos);
        rng
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn word_pos(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn uniform_index(&mut self, n: u64) -> u64 {
        assert!(n > 0, "uniform_index over an empty range");
        let reject_below = n.wrapping_neg() % n;
        loop {
            let r = self.next_u64();
            if r >= reject_below {
                return r % n;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_restorable() {
        let mut a = BallotRng::new(42);
        let first: Vec<u64> = (0..5).map(|_| a.uniform_index(1000)).collect();
        let mut b = BallotRng::new(42);
        assert_eq!(
            first,
            (0..5).map(|_| b.uniform_index(1000)).collect::<Vec<_>>()
        );

        let pos = a.word_pos();
        let next = a.uniform_index(17);
        let mut c = BallotRng::at_position(42, pos);
        assert_eq!(c.uniform_index(17), next);
    }

    #[test]
    fn streams_differ() {
        let mut a = BallotRng::with_stream(7, 0);
        let mut b = BallotRng::with_stream(7, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn index_in_range_and_roughly_uniform() {
        let mut rng = BallotRng::new(1);
        let mut counts = [0u32; 3];
        for _ in 0..30_000 {
            counts[rng.uniform_index(3) as usize] += 1;
        }
        assert!(
            counts.iter().all(|&c| (9_500..10_500).contains(&c)),
            "{counts:?}"
        );
        assert_eq!(rng.uniform_index(1), 0);
    }
}
