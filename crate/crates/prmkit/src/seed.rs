//! Deterministic seed derivation.
//!
//! All randomness in a run flows from a single root seed; per-problem and
//! per-sample seeds are derived with a fixed mixing function so that runs are
//! reproducible across processes and platforms.

/// One round of the splitmix64 output function.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a root seed and a string label (e.g. problem id).
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h = root;
    for b in label.as_bytes() {
        h = splitmix64(h ^ u64::from(*b));
    }
    splitmix64(h)
}
