//! Deterministic seed derivation.
//!
//! Experiment cells and sampling calls each get their own RNG stream derived
//! from a master seed. The derivation is a fixed bit-mixing function rather
//! than `std`'s hasher so that seeds are stable across toolchain versions.

/// SplitMix64 step.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `base` and a salt.
pub fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut state = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    splitmix64(&mut state)
}

/// Fold a sequence of parts into one seed, order-sensitively.
pub fn combine_seed(base: u64, parts: &[u64]) -> u64 {
    let mut acc = base;
    for (i, &p) in parts.iter().enumerate() {
        acc = mix_seed(acc, p ^ ((i as u64) << 56));
    }
    acc
}
