//! Small numeric helpers used by the scoring and training inner loops.

/// Dense dot product.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Logistic function σ(x) = 1 / (1 + e^{−x}).
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// ln σ(x), computed as −softplus(−x) so it stays finite for large |x|.
#[inline]
pub fn ln_sigmoid(x: f64) -> f64 {
    let z = -x;
    -(z.max(0.0) + (-z.abs()).exp().ln_1p())
}

/// SplitMix64 finalizer; used to derive stateless per-pair pseudo-random
/// scores (the RAND baseline) without carrying RNG state.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Map a hash to a uniform f64 in [0, 1).
#[inline]
pub fn hash_to_unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}
