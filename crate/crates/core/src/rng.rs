//! Named, independent random streams derived from one master seed.
//!
//! Every consumer of randomness (data generation, initialisation, batching,
//! dropout, fold splitting) draws from its own stream so changing one of them
//! leaves the others untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const DATA_GEN: &str = "data-gen";
pub const INIT: &str = "init";
pub const BATCHING: &str = "batching";
pub const DROPOUT: &str = "dropout";
pub const SPLIT: &str = "split";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed of stream `label`/`index` under `master`.
pub fn substream_seed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a(label)).wrapping_add(splitmix64(index)))
}

pub fn substream(master: u64, label: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(substream_seed(master, label, index))
}
