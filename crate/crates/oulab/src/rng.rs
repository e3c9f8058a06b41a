//! Reproducible, splittable random streams.
//!
//! Every draw in the crate is a pure function of a master seed plus a small
//! tuple of stream labels (experiment, path, mode, step). Streams with
//! distinct labels are independent and may be consumed in any order, which
//! makes path ensembles embarrassingly parallel without shared state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Master seed plus the experiment label under which sub-streams are keyed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub experiment: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        SeedSpec {
            master_seed,
            experiment: 0,
        }
    }

    pub fn with_experiment(self, experiment: u64) -> Self {
        SeedSpec { experiment, ..self }
    }

    /// Stream keyed by (experiment, path, mode, step).
    pub fn stream(&self, path: u64, mode: u64, step: u64) -> ChaCha8Rng {
        stream_rng(self.master_seed, [self.experiment, path, mode, step])
    }

    /// Independent sub-experiment keyed by `tag`, for nested estimators
    /// that must not share streams with their caller.
    pub fn derive(&self, tag: u64) -> SeedSpec {
        let mut s = self.experiment ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        SeedSpec {
            master_seed: self.master_seed,
            experiment: splitmix64(&mut s),
        }
    }
}

pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a ChaCha8 stream from a master seed and four labels.
pub fn stream_rng(master: u64, labels: [u64; 4]) -> ChaCha8Rng {
    let mut state = master ^ 0x6c62_272e_07bb_0142;
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        state ^= splitmix64(&mut state) ^ labels[i % 4].wrapping_mul(2 * i as u64 + 1);
        let word = splitmix64(&mut state);
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
