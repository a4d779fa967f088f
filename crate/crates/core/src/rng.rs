//! Seeded random streams. Every consumer derives its generator from an
//! experiment seed plus a stream id so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Packs a (domain, round, index) triple into a stream id.
pub fn stream_id(domain: u16, round: u64, index: u32) -> u64 {
    ((domain as u64) << 48) ^ ((round & 0xffff) << 32) ^ index as u64
}
