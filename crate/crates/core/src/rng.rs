//! Seeded randomness shared by every randomized step.
//!
//! All draws go through ChaCha8 seeded with `seed_from_u64`, and integer
//! draws use plain rejection sampling on raw `u64` output so another
//! implementation can reproduce partitions without depending on `rand`'s
//! distribution internals.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Name recorded in partition and report metadata.
pub const PRNG_ALGORITHM: &str = "chacha8-seed_from_u64/rejection-u64/fisher-yates-v1";

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform integer in `0..n` by rejection on the largest multiple of `n`.
pub fn uniform_below<R: RngCore>(rng: &mut R, n: u64) -> u64 {
    assert!(n > 0, "empty range");
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % n;
        }
    }
}

/// Fisher-Yates shuffle, drawing from the back of the slice forward.
pub fn shuffle<T, R: RngCore>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = uniform_below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// SplitMix64 finalizer; used for seeded per-row hashing.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_is_a_permutation_and_reproducible() {
        let mut a: Vec<usize> = (0..50).collect();
        let mut b = a.clone();
        shuffle(&mut seeded(9), &mut a);
        shuffle(&mut seeded(9), &mut b);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn uniform_below_stays_in_range() {
        let mut rng = seeded(1);
        for n in 1..40 {
            for _ in 0..20 {
                assert!(uniform_below(&mut rng, n) < n);
            }
        }
    }
}
