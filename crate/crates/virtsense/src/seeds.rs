//! Deterministic seed derivation for parallel and nested RNG streams.
//!
//! Every parallel task (block clustering, per-ant mutation, per-dataset
//! generation) gets its own seed derived from the run seed and the task
//! indices, so results do not depend on thread scheduling.

/// splitmix64 finalizer; full-period mixer over u64.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent seed from a base seed and one stream index.
pub fn derive(base: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(base).wrapping_add(stream))
}

/// Derive an independent seed from a base seed and two stream indices.
pub fn derive2(base: u64, a: u64, b: u64) -> u64 {
    derive(derive(base, a), b)
}
