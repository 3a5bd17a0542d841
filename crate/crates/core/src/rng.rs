//! Counter-based deterministic random numbers.
//!
//! Draws are keyed by `(seed, episode, period)` so every value is independent
//! of evaluation order: episode 7, period 3 produces the same uniform no
//! matter which episodes ran before it or on which thread.

/// SplitMix64 finalizer; full-period bijection on `u64`.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform in `[0, 1)` for the given key triple.
#[inline]
pub fn unit(seed: u64, episode: u64, period: u64) -> f64 {
    let k = mix(seed ^ mix(episode.wrapping_add(0x5851_f42d_4c95_7f2d) ^ mix(period)));
    // 53 high bits -> dyadic rational in [0,1)
    (k >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `[lo, hi)`.
#[inline]
pub fn range(seed: u64, episode: u64, period: u64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(seed, episode, period)
}

/// Order-insensitive digest accumulator for trace hashing.
#[inline]
pub fn digest_step(acc: u64, item: u64) -> u64 {
    mix(acc ^ item.wrapping_mul(0x2545_f491_4f6c_dd1d))
}
