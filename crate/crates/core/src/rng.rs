//! Counter-based random streams.
//!
//! Every consumer of randomness derives its generator from the run seed, a
//! component name and an index (site or path). Streams are independent of
//! the order in which sites or paths are materialized, so a site's
//! parameters do not change when the environment is extended and a path's
//! trajectory does not depend on how many other paths were simulated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Generator for `(seed, component, index)`.
pub fn stream(seed: u64, component: &str, index: u64) -> StreamRng {
    let w0 = splitmix64(seed);
    let w1 = splitmix64(fnv1a(component));
    let w2 = splitmix64(w0 ^ w1.rotate_left(23));
    let w3 = splitmix64(w2 ^ w0.rotate_left(41));
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip([w0, w1, w2, w3]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
