//! Deterministic derivation of independent sub-seeds from one base seed.

/// SplitMix64 finalizer applied to `base ⊕ stream`-derived state.
pub fn sub_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Named streams so callers do not collide.
pub mod streams {
    pub const PARAMS: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const DATA: u64 = 3;
    pub const EVAL: u64 = 4;
}
