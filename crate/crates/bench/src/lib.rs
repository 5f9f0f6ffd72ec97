//! Seeded profile fixtures shared by the benchmarks.

use partcert::ensemble::{LogitProfile, VoteProfile};
use partcert::rng;

/// `t` submodels with logits drawn uniformly from `0..16` per label.
pub fn random_logits(t: usize, num_labels: usize, seed: u64) -> LogitProfile {
    let mut r = rng::seeded(seed);
    let rows = (0..t)
        .map(|_| (0..num_labels).map(|_| rng::uniform_below(&mut r, 16) as f64).collect())
        .collect();
    LogitProfile::new(rows).expect("non-empty finite logits")
}

/// Votes of [`random_logits`].
pub fn random_votes(t: usize, num_labels: usize, seed: u64) -> VoteProfile {
    random_logits(t, num_labels, seed).vote_profile()
}
