//! Deterministic, cross-platform seed derivation.
//!
//! Everything stochastic in this crate — synthetic cohorts, dataset splits,
//! evaluation draws — must reproduce bit-for-bit from a single `u64` master
//! seed, on any platform, regardless of thread count. Two ingredients make
//! that possible:
//!
//! 1. A fixed generator algorithm: [`ChaCha8Rng`]. ChaCha8 is seedable from
//!    32 explicit bytes, has no platform-dependent state, and its output
//!    stream is specified independently of word size or endianness.
//! 2. A fixed mixing rule, implemented here, that maps
//!    `(master_seed, context tags…)` to those 32 bytes.
//!
//! The mixing rule is SplitMix64 applied over the master seed and each tag
//! in sequence:
//!
//! ```text
//! state = splitmix64(master)
//! for tag in tags: state = splitmix64(state ^ splitmix64(tag))
//! seed bytes = 4 further splitmix64 outputs, little-endian
//! ```
//!
//! Tags are small integers with positional meaning chosen by the caller
//! (e.g. `[subject, session]` for per-recording streams, `[k, draw]` for
//! evaluation draws). Distinct tag sequences give statistically independent
//! streams; the same sequence always gives the same stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One step of the SplitMix64 output function (Steele, Lea & Flood's
/// finalizer, also used by `java.util.SplittableRandom`).
#[inline]
#[must_use]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives the 32-byte ChaCha seed for `(master, tags…)` per the module
/// mixing rule.
#[must_use]
pub fn derive_seed_bytes(master: u64, tags: &[u64]) -> [u8; 32] {
    let mut state = splitmix64(master);
    for &tag in tags {
        state = splitmix64(state ^ splitmix64(tag));
    }
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    bytes
}

/// Builds the deterministic generator for `(master, tags…)`.
///
/// This is the only constructor for randomness used anywhere in the crate.
#[must_use]
pub fn derive_rng(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed_bytes(master, tags))
}

/// Derives a single 64-bit sub-seed for `(master, tags…)`, for stages that
/// take a plain seed and derive their own streams from it.
#[must_use]
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let bytes = derive_seed_bytes(master, tags);
    u64::from_le_bytes(bytes[..8].try_into().expect("slice of 8 bytes"))
}
