//! Per-trial seed derivation.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one trial of one grid point. Distinct inputs give independent
/// looking streams without any bookkeeping.
pub fn trial_seed(base_seed: u64, grid_index: u64, trial: u64) -> u64 {
    mix(mix(mix(base_seed) ^ grid_index) ^ trial)
}

/// A further derived seed for a sub-stream of a trial (e.g. one repeat).
pub fn child_seed(seed: u64, stream: u64) -> u64 {
    mix(seed ^ mix(stream.wrapping_add(0x5851_F42D_4C95_7F2D)))
}
