//! Deterministic random streams.
//!
//! Every source of randomness in a run draws from its own ChaCha8 generator.
//! Stream `k` is seeded with `master + k * STREAM_STRIDE` (wrapping), expanded
//! by `SeedableRng::seed_from_u64`. The same master seed therefore reproduces
//! every draw bit for bit, and streams never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Generator behind every stream.
pub type StreamRng = ChaCha8Rng;

/// Name recorded in run metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9) via seed_from_u64";

/// Fixed offset between the seeds of consecutive streams (2^64 / golden ratio).
pub const STREAM_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Context,
    Action,
    Keep,
    Pairing,
    Environment,
}

impl Stream {
    pub const ALL: [Stream; 5] = [
        Stream::Context,
        Stream::Action,
        Stream::Keep,
        Stream::Pairing,
        Stream::Environment,
    ];

    pub fn index(self) -> u64 {
        match self {
            Stream::Context => 1,
            Stream::Action => 2,
            Stream::Keep => 3,
            Stream::Pairing => 4,
            Stream::Environment => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stream::Context => "context",
            Stream::Action => "action",
            Stream::Keep => "keep",
            Stream::Pairing => "pairing",
            Stream::Environment => "environment",
        }
    }

    pub fn seed(self, master: u64) -> u64 {
        master.wrapping_add(self.index().wrapping_mul(STREAM_STRIDE))
    }
}

/// The independent substreams of one run.
#[derive(Debug, Clone)]
pub struct RngStreams {
    master_seed: u64,
    pub context: StreamRng,
    pub action: StreamRng,
    pub keep: StreamRng,
    pub pairing: StreamRng,
    pub environment: StreamRng,
}

/// Seeds recorded alongside a run.
#[derive(Debug, Clone, Serialize)]
pub struct StreamSeeds {
    pub algorithm: &'static str,
    pub master: u64,
    pub stride: u64,
    pub context: u64,
    pub action: u64,
    pub keep: u64,
    pub pairing: u64,
    pub environment: u64,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        let make = |s: Stream| StreamRng::seed_from_u64(s.seed(master_seed));
        Self {
            master_seed,
            context: make(Stream::Context),
            action: make(Stream::Action),
            keep: make(Stream::Keep),
            pairing: make(Stream::Pairing),
            environment: make(Stream::Environment),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn seeds(&self) -> StreamSeeds {
        let m = self.master_seed;
        StreamSeeds {
            algorithm: RNG_ALGORITHM,
            master: m,
            stride: STREAM_STRIDE,
            context: Stream::Context.seed(m),
            action: Stream::Action.seed(m),
            keep: Stream::Keep.seed(m),
            pairing: Stream::Pairing.seed(m),
            environment: Stream::Environment.seed(m),
        }
    }
}

/// SplitMix64 finalizer. Environments use it to turn `(seed, indices...)`
/// into losses without materializing the loss tensor.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a seed and a tuple of indices to a well-mixed 64-bit value.
pub(crate) fn hash_indices(seed: u64, indices: &[u64]) -> u64 {
    indices.iter().fold(mix64(seed), |h, &i| {
        mix64(h ^ i.wrapping_add(STREAM_STRIDE).wrapping_mul(0xD6E8_FEB8_6659_FD93))
    })
}

/// Maps a 64-bit hash to a uniform value in `[0, 1)`.
pub(crate) fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn same_master_reproduces_streams() {
        let mut a = RngStreams::new(42);
        let mut b = RngStreams::new(42);
        for _ in 0..100 {
            assert_eq!(a.context.next_u64(), b.context.next_u64());
            assert_eq!(a.action.next_u64(), b.action.next_u64());
            assert_eq!(a.keep.next_u64(), b.keep.next_u64());
            assert_eq!(a.pairing.next_u64(), b.pairing.next_u64());
            assert_eq!(a.environment.next_u64(), b.environment.next_u64());
        }
    }

    #[test]
    fn streams_are_distinct() {
        let mut s = RngStreams::new(0);
        let firsts = [
            s.context.next_u64(),
            s.action.next_u64(),
            s.keep.next_u64(),
            s.pairing.next_u64(),
            s.environment.next_u64(),
        ];
        for i in 0..firsts.len() {
            for j in i + 1..firsts.len() {
                assert_ne!(firsts[i], firsts[j]);
            }
        }
    }

    #[test]
    fn advancing_one_stream_leaves_others_alone() {
        let mut a = RngStreams::new(9);
        let mut b = RngStreams::new(9);
        for _ in 0..17 {
            a.action.next_u64();
        }
        assert_eq!(a.context.next_u64(), b.context.next_u64());
        assert_eq!(a.keep.next_u64(), b.keep.next_u64());
    }

    #[test]
    fn recorded_seeds_match_offsets() {
        let seeds = RngStreams::new(5).seeds();
        assert_eq!(seeds.context, 5u64.wrapping_add(STREAM_STRIDE));
        assert_eq!(seeds.environment, 5u64.wrapping_add(5u64.wrapping_mul(STREAM_STRIDE)));
    }

    #[test]
    fn unit_interval_bounds() {
        assert_eq!(unit_interval(0), 0.0);
        assert!(unit_interval(u64::MAX) < 1.0);
    }
}
