//! Seeded random streams.
//!
//! Every run owns one 64-bit seed. Independent sub-streams (coordinate
//! sampling, rollouts, network initialisation, ...) are derived from it by
//! a counter scheme: stream `k` of seed `s` is xoshiro256++ seeded through
//! SplitMix64 from the key `s + k * 0x9E3779B97F4A7C15 (mod 2^64)`.
//! Any implementation of xoshiro256++ and SplitMix64 reproduces the same
//! draws.

use rand::{Rng, SeedableRng};
pub use rand_xoshiro::Xoshiro256PlusPlus as StreamRng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Environment = 1,
    Coordinates = 2,
    Rollouts = 3,
    Init = 4,
    Actions = 5,
    Critic = 6,
}

pub fn stream_rng(seed: u64, stream: Stream) -> StreamRng {
    StreamRng::seed_from_u64(seed.wrapping_add((stream as u64).wrapping_mul(GOLDEN_GAMMA)))
}

/// Samples an index from a probability vector with a single uniform draw.
///
/// Rounding slack at the top end falls on the last index with positive mass.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn xoshiro256pp_reference_outputs() {
        // Reference vector for state [1, 2, 3, 4].
        let mut seed = [0u8; 32];
        for (i, word) in [1u64, 2, 3, 4].iter().enumerate() {
            seed[i * 8..(i + 1) * 8].copy_from_slice(&word.to_le_bytes());
        }
        let mut rng = StreamRng::from_seed(seed);
        let expected = [
            41943041u64,
            58720359,
            3588806011781223,
            3591011842654386,
            9228616714210784205,
            9973669472204895162,
        ];
        for e in expected {
            assert_eq!(rng.next_u64(), e);
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a1 = stream_rng(7, Stream::Rollouts).next_u64();
        let a2 = stream_rng(7, Stream::Rollouts).next_u64();
        let b = stream_rng(7, Stream::Coordinates).next_u64();
        let c = stream_rng(8, Stream::Rollouts).next_u64();
        assert_eq!(a1, a2);
        assert_ne!(a1, b);
        assert_ne!(a1, c);
    }

    #[test]
    fn sample_index_never_picks_zero_mass() {
        let mut rng = stream_rng(1, Stream::Actions);
        for _ in 0..10_000 {
            let i = sample_index(&[0.0, 0.3, 0.0, 0.7, 0.0], &mut rng);
            assert!(i == 1 || i == 3);
        }
    }
}
