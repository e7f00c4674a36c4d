//! Seeded random streams.
//!
//! Every consumer derives its generator from the run seed and a stream id,
//! so results do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for `stream` under `seed`; distinct streams never overlap.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stable stream id for a labelled unit of work (e.g. an input file).
pub fn stream_id(label: &str) -> u64 {
    // FNV-1a; stable across platforms and releases.
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed for the `index`-th unit of work under `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore as _;
    stream_rng(seed, index).next_u64()
}
