//! Keyed deterministic random streams.
//!
//! Every random decision is drawn from a ChaCha stream seeded by hashing the
//! run seed together with a purpose tag and the decision's coordinates, so all
//! robots derive identical shared draws without communicating.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    SampleTime,
    PickEventually,
    Restart,
    Jitter,
    FinalState,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn keyed(seed: u64, purpose: Purpose, key: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix(seed ^ 0x5eed);
    h = splitmix(h ^ purpose as u64);
    for k in key {
        h = splitmix(h ^ *k);
    }
    ChaCha8Rng::seed_from_u64(h)
}
