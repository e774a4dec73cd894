//! Seeded, hierarchically derived random streams.
//!
//! Every replicate of every experiment gets its own ChaCha stream derived
//! from `(master seed, stream label, indices...)`. Derivation is a pure
//! function, so results are independent of scheduling and worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// One replicate-grade random stream.
pub type Stream = ChaCha12Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over a label so stream families can be named by string.
pub fn label_id(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive an independent stream from a master seed and a path of indices.
///
/// The 256-bit ChaCha key is filled by chaining splitmix64 over the master
/// seed and every path component, so distinct paths give unrelated streams.
pub fn derive_stream(master: u64, path: &[u64]) -> Stream {
    let mut state = master ^ 0x6a09_e667_f3bc_c908;
    let mut mixed = splitmix64(&mut state);
    for part in path {
        state ^= part.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        mixed = splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        mixed = splitmix64(&mut state);
        chunk.copy_from_slice(&mixed.to_le_bytes());
    }
    let _ = mixed;
    Stream::from_seed(seed)
}

/// Stream for replicate `rep` of the experiment named `label`.
pub fn replicate_stream(master: u64, label: &str, rep: u64) -> Stream {
    derive_stream(master, &[label_id(label), rep])
}
