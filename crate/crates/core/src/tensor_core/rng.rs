//! Named random streams.
//!
//! Each consumer (initialization, dropout, episode sampling, shuffling,
//! interpolation draws) gets its own ChaCha stream derived from the run seed
//! and the consumer's name, so drawing more numbers in one consumer never
//! shifts another's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStreams {
    seed: u64,
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, name: &str) -> StreamRng {
        self.stream_indexed(name, 0)
    }

    /// A separate stream per `(name, index)`, e.g. one per episode.
    pub fn stream_indexed(&self, name: &str, index: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let id = fnv1a(name.bytes().chain(index.to_le_bytes()));
        rng.set_stream(id);
        rng
    }
}
