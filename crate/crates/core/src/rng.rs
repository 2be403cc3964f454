//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit generator. Per-sample streams are
//! derived from a master seed so results do not depend on processing order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` derived from `master`.
pub fn substream(master: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index.wrapping_add(1));
    rng
}
