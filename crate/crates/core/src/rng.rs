//! Seeded, splittable random streams.
//!
//! Every stochastic routine in the crate takes an [`RngStream`] by reference
//! and builds its own generator from it, so results depend only on
//! `(seed, stream_id)` and never on call order elsewhere in the program.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Concrete generator type handed to sampling code.
pub type StreamRng = ChaCha12Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream keyed by `key`. Distinct keys give independent streams and
    /// the mapping is a pure function of `(seed, stream_id, key)`.
    pub fn derive(&self, key: u64) -> RngStream {
        let seed = splitmix64(self.seed ^ splitmix64(self.stream_id.wrapping_add(0xA076_1D64_78BD_642F)));
        RngStream {
            seed,
            stream_id: key,
        }
    }
}
