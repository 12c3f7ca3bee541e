//! Counter-based pseudorandom functions.
//!
//! Everything random about an environment is a pure function of a 64-bit key
//! and a counter, so any edge can be decided in O(1) without storing state.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer. Bijective on `u64` with full avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keyed PRF over a 64-bit counter.
#[inline]
pub fn prf(key: u64, counter: u64) -> u64 {
    mix64(key ^ mix64(counter.wrapping_add(GOLDEN)))
}

/// Keyed PRF over a 128-bit counter given as two lanes.
#[inline]
pub fn prf128(key: u64, hi: u64, lo: u64) -> u64 {
    mix64(key ^ mix64(lo ^ mix64(hi.wrapping_add(GOLDEN))))
}

/// Uniform integer in `0..n` from a 64-bit word (multiply-high; bias below 2^-56 for small n).
#[inline]
pub fn below(word: u64, n: u64) -> u64 {
    ((word as u128 * n as u128) >> 64) as u64
}

/// Uniform double in `[0, 1)` from the top 53 bits.
#[inline]
pub fn unit(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Derive a sub-key for a named domain so that streams under one seed never overlap.
#[inline]
pub fn domain_key(seed: u64, domain: u64) -> u64 {
    mix64(seed ^ mix64(domain.wrapping_mul(GOLDEN)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn below_stays_in_range() {
        for i in 0..10_000u64 {
            assert!(below(mix64(i), 3) < 3);
        }
        assert_eq!(below(u64::MAX, 5), 4);
        assert_eq!(below(0, 5), 0);
    }

    #[test]
    fn unit_is_half_open() {
        assert_eq!(unit(0), 0.0);
        assert!(unit(u64::MAX) < 1.0);
    }

    #[test]
    fn prf_bits_are_balanced() {
        let n = 100_000u64;
        let ones: u64 = (0..n).map(|i| prf(7, i) & 1).sum();
        let frac = ones as f64 / n as f64;
        assert!((frac - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }
}
