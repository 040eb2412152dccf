//! Counter-based random streams.
//!
//! Every sample of an experiment is keyed by `(master seed, sample index)`.
//! The key selects a ChaCha stream, so draws for sample `i` never depend on
//! how many other samples were generated before it or on which thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What a stream is used for. Separate purposes get disjoint key material,
/// so choosing a component never shifts the draws of the realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Component,
    Realization,
    Auxiliary,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Component => 0x636f_6d70,
            Purpose::Realization => 0x7265_616c,
            Purpose::Auxiliary => 0x6175_7869,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStream {
    pub master: u64,
    pub index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedStream {
    pub fn new(master: u64, index: u64) -> Self {
        Self { master, index }
    }

    /// Independent generator for `purpose`.
    pub fn rng(&self, purpose: Purpose) -> ChaCha8Rng {
        let key = splitmix64(self.master ^ splitmix64(purpose.tag()));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(self.index);
        rng
    }

    pub fn child(&self, index: u64) -> SeedStream {
        SeedStream { master: splitmix64(self.master ^ splitmix64(self.index)), index }
    }
}
