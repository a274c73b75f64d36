//! Counter-based pseudo-randomness.
//!
//! Every random quantity in an experiment is a pure function of the master
//! seed and a handful of integer coordinates (stream, replica, site, visit
//! index). Hashing the coordinates through a 64-bit finalizer gives the same
//! value no matter in which order, on how many threads, or how many times it
//! is queried. This is what makes parallel runs byte-identical to sequential
//! ones.

/// Stream tags separating the independent random sources of an experiment.
///
/// Two hashes with different tags never see the same input words, so the
/// p-values of sites, their cookie counts, the walk's coin flips and the
/// per-replica draws of the annealed experiments are mutually independent
/// for all practical purposes.
pub mod stream {
    /// Background transition probability of a site.
    pub const SITE_P: u64 = 0x01;
    /// Cookie count of a site.
    pub const SITE_M: u64 = 0x02;
    /// Walk coin flips.
    pub const FLIP: u64 = 0x03;
    /// Per-replica environment seeds of annealed ensembles.
    pub const REPLICA_ENV: u64 = 0x04;
    /// Per-generation offspring parameter draws of direct branching runs.
    pub const GEN_P: u64 = 0x05;
    /// Per-generation immigration draws of direct branching runs.
    pub const GEN_M: u64 = 0x06;
    /// Seed material for the offspring-sum sampler.
    pub const OFFSPRING_RNG: u64 = 0x07;
}

/// SplitMix64 finalizer: a bijective 64-bit scrambler with full avalanche.
#[inline]
pub const fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Hashes a short word sequence into one 64-bit value.
///
/// Words are absorbed left to right through [`splitmix64`]; prepending the
/// master seed and a stream tag yields the per-coordinate randomness used
/// throughout the crate.
#[inline]
pub fn mix(words: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &w in words {
        h = splitmix64(h ^ w);
    }
    h
}

/// Maps a hash to the open unit interval.
///
/// The top 52 bits are centred on the grid `(j + 1/2) / 2^52`. Every
/// midpoint `j + 1/2` with `j < 2^52` is exactly representable and the
/// scale is a power of two, so no rounding ever occurs and the result is
/// always strictly inside `(0, 1)`; samplers that reject the endpoints
/// never see them. (A 53-bit grid would round its top midpoint up to 1.)
#[inline]
pub fn unit_open(h: u64) -> f64 {
    ((h >> 12) as f64 + 0.5) * (1.0 / 4_503_599_627_370_496.0)
}
