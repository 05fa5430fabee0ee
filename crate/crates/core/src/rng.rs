//! Counter-based random streams keyed on `(seed, domain, index)`.
//!
//! Each key selects an independent ChaCha stream, so draws never depend on
//! the order in which samples, batches or parameters are generated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. The top 16 bits of the ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Domain {
    TrainSamples = 1,
    TestSamples = 2,
    ParamInit = 3,
    Shuffle = 4,
    GradientCheck = 5,
    ProjectionTrials = 6,
}

pub fn keyed_rng(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    debug_assert!(index < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 48) | (index & ((1 << 48) - 1)));
    rng
}
