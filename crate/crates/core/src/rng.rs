// SPDX-License-Identifier: Apache-2.0

//! Named random streams derived from one user seed.
//!
//! A stream is keyed by `(seed ^ index, name)`: the index picks the ChaCha
//! key and the name picks one of its 2^64 independent streams. Circuit `k`
//! of a dataset therefore draws the same numbers no matter which worker
//! generates it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const GEN: &str = "gen";
pub const TRAIN: &str = "train";
pub const SAMPLE: &str = "sample";
pub const INIT: &str = "init";

fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn stream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index);
    rng.set_stream(fnv1a(name));
    rng
}
