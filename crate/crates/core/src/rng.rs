//! Reproducible random streams.
//!
//! Every stochastic draw in the crate comes from a [`ChaCha8Rng`] stream keyed
//! by `(root_seed, domain, index)`. The 256-bit ChaCha key is expanded from the
//! root seed with SplitMix64 and the 64-bit ChaCha stream id is a SplitMix64
//! mix of `domain` and `index`. Within a stream, draws are consumed in program
//! order, so any draw is identified by `(seed, domain, episode, draw position)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream domains used by the library. Values are part of the reproducibility
/// contract: changing them changes every downstream result.
pub mod domain {
    pub const NETWORK_INIT: u64 = 1;
    pub const EPISODE: u64 = 2;
    pub const REPLAY: u64 = 3;
    pub const COLLOCATION: u64 = 4;
    pub const BOUNDARY: u64 = 5;
    pub const EXPLORATION: u64 = 6;
    pub const ROLLOUT: u64 = 7;
    pub const EVALUATION: u64 = 8;
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Root of a family of independent, reproducible random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Stream for `(domain, index)`.
    pub fn stream(&self, domain: u64, index: u64) -> StreamRng {
        let mut key = [0u8; 32];
        let mut state = self.root;
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(splitmix64(splitmix64(domain) ^ index));
        rng
    }

    /// Child tree, e.g. one per experiment seed in a sweep.
    pub fn child(&self, index: u64) -> SeedTree {
        SeedTree::new(splitmix64(self.root ^ splitmix64(index.wrapping_add(0xA5A5))))
    }
}
