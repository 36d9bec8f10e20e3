//! Named random substreams derived from one run seed.
//!
//! Each consumer of randomness draws from its own ChaCha stream, so changing
//! how much one component consumes never shifts another's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    EnglishEmbeddings = 3,
    HindiEmbeddings = 4,
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
