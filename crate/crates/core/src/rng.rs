//! Deterministic random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived from
//! the master seed and a stream id. Streams are counter-based: adding a client
//! never perturbs the stream of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags mixed into the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Dataset = 1,
    Partition = 2,
    MainInit = 3,
    MainTrain = 4,
    SeedInit = 5,
    SeedTrain = 6,
    Server = 7,
}

/// Stream for a purpose that is not tied to a client.
pub fn stream(master_seed: u64, purpose: Purpose) -> Rng {
    client_stream(master_seed, purpose, u32::MAX)
}

/// Stream for `(purpose, client)`; the pair maps injectively onto the ChaCha stream id.
pub fn client_stream(master_seed: u64, purpose: Purpose, client: u32) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((purpose as u64) << 32) | client as u64);
    rng
}
