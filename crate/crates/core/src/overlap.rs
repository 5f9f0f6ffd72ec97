//! Certificates for overlapping feature sets with a fixed spread degree.
//!
//! Every fine feature subset feeds exactly `phi` submodels, so perturbing one
//! subset can move up to `phi` votes. The bound for a challenger `y'` sorts
//! the per-subset damage `phi + countPart(y, l) - countPart(y', l)` in
//! descending order and finds how many subsets fit inside the vote gap.

use crate::certify::{gap_vote, Certificate, Guarantee, Method};
use crate::ensemble::VoteProfile;
use crate::error::{Error, Result};
use crate::partition::SpreadMap;

/// Votes of `phi * T` submodels together with which fine subsets feed them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverlapProfile {
    votes: VoteProfile,
    spread: usize,
    /// `part_counts[l][y]`: submodels using subset `l` that vote `y`.
    part_counts: Vec<Vec<usize>>,
    users: Vec<Vec<usize>>,
}

impl OverlapProfile {
    pub fn new(votes: VoteProfile, map: &SpreadMap) -> Result<Self> {
        if votes.num_submodels() != map.len() {
            return Err(Error::argument(format!(
                "{} votes for a spread map over {} submodels",
                votes.num_submodels(),
                map.len()
            )));
        }
        let part_counts = map
            .assignment()
            .iter()
            .map(|users| {
                let mut row = vec![0; votes.num_labels()];
                for &s in users {
                    row[votes.votes()[s]] += 1;
                }
                row
            })
            .collect();
        Ok(Self {
            spread: map.spread(),
            part_counts,
            users: map.assignment().to_vec(),
            votes,
        })
    }

    pub fn votes(&self) -> &VoteProfile {
        &self.votes
    }

    pub fn spread(&self) -> usize {
        self.spread
    }

    pub fn num_subsets(&self) -> usize {
        self.part_counts.len()
    }

    pub fn count_part(&self, y: usize, l: usize) -> usize {
        self.part_counts[l][y]
    }

    /// Submodels that read fine subset `l`.
    pub fn users_of(&self, l: usize) -> &[usize] {
        &self.users[l]
    }
}

/// Per-subset damage entries `phi + countPart(y, l) - countPart(other, l)`.
pub fn overlap_multiset(profile: &OverlapProfile, y: usize, other: usize) -> Result<Vec<usize>> {
    let num_labels = profile.votes.num_labels();
    if y == other {
        return Err(Error::argument(format!("damage multiset of label {y} against itself")));
    }
    if y >= num_labels || other >= num_labels {
        return Err(Error::argument(format!("labels {y}, {other} outside 0..{num_labels}")));
    }
    Ok(profile
        .part_counts
        .iter()
        .map(|row| profile.spread + row[y] - row[other])
        .collect())
}

/// Radius for the plurality label over all `phi * T` submodels.
pub fn certify_overlap(profile: &OverlapProfile) -> Result<Certificate> {
    let votes = &profile.votes;
    if votes.num_labels() < 2 {
        return Err(Error::argument("certification needs at least two labels"));
    }
    let y = votes.plurality();
    let mut radius = profile.num_subsets();
    for other in (0..votes.num_labels()).filter(|&o| o != y) {
        let gap = gap_vote(votes, y, other)?;
        let mut damage = overlap_multiset(profile, y, other)?;
        damage.sort_unstable_by(|a, b| b.cmp(a));
        let mut fits = 0;
        let mut total = 0i64;
        for d in damage {
            total += d as i64;
            if total > gap {
                break;
            }
            fits += 1;
        }
        radius = radius.min(fits);
    }
    Ok(Certificate {
        label: y,
        radius: radius as u32,
        guarantee: Guarantee::Feature,
        method: Method::Overlap(profile.spread),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::certify_plurality;
    use crate::partition::spread_assignment;
    use proptest::prelude::*;

    fn profile(votes: Vec<usize>, labels: usize, map: &SpreadMap) -> OverlapProfile {
        OverlapProfile::new(VoteProfile::from_votes(votes, labels).unwrap(), map).unwrap()
    }

    #[test]
    fn single_spread_entries() {
        let map = SpreadMap::from_offsets(3, 1, vec![3]).unwrap();
        let p = profile(vec![0, 1, 2], 3, &map);
        let mut m = overlap_multiset(&p, 0, 1).unwrap();
        m.sort_unstable();
        assert_eq!(m, vec![0, 1, 2]);
        assert!(overlap_multiset(&p, 1, 1).is_err());
    }

    #[test]
    fn unanimous_spread_two() {
        let map = SpreadMap::from_offsets(3, 2, vec![1, 4]).unwrap();
        let p = profile(vec![0; 6], 3, &map);
        assert_eq!(overlap_multiset(&p, 0, 2).unwrap(), vec![4; 6]);
        // Gap to label 1 is 6 - 0 - 0 = 6, so one entry of 4 fits.
        let c = certify_overlap(&p).unwrap();
        assert_eq!((c.label, c.radius, c.method), (0, 1, Method::Overlap(2)));
    }

    fn fitting_prefix(p: &OverlapProfile, y: usize, other: usize) -> usize {
        let gap = gap_vote(p.votes(), y, other).unwrap();
        let mut m = overlap_multiset(p, y, other).unwrap();
        m.sort_unstable_by(|a, b| b.cmp(a));
        m.iter()
            .scan(0i64, |acc, &d| {
                *acc += d as i64;
                Some(*acc)
            })
            .take_while(|&s| s <= gap)
            .count()
    }

    #[test]
    fn minimum_can_come_from_a_label_other_than_runner_up() {
        let map = SpreadMap::from_offsets(4, 3, vec![2, 6, 10]).unwrap();
        let p = profile(vec![1, 2, 2, 0, 1, 1, 1, 0, 2, 1, 1, 1], 3, &map);
        assert_eq!(p.votes().counts(), &[2, 7, 3]);
        assert_eq!((p.votes().plurality(), p.votes().runner_up()), (1, 2));
        assert_eq!(fitting_prefix(&p, 1, 2), 1);
        assert_eq!(fitting_prefix(&p, 1, 0), 0);
        assert_eq!(certify_overlap(&p).unwrap().radius, 0);
    }

    proptest! {
        #[test]
        fn part_counts_sum_to_spread(t in 1usize..5, phi in 1usize..4, seed: u64, raw in prop::collection::vec(0usize..3, 16)) {
            let map = spread_assignment(t, phi, seed).unwrap();
            let votes: Vec<usize> = raw.into_iter().cycle().take(map.len()).collect();
            let p = profile(votes.clone(), 3, &map);
            for l in 0..p.num_subsets() {
                let direct: Vec<usize> = (0..3)
                    .map(|y| map.users_of(l).iter().filter(|&&s| votes[s] == y).count())
                    .collect();
                prop_assert_eq!(direct.iter().sum::<usize>(), phi);
                for (y, &n) in direct.iter().enumerate() {
                    prop_assert_eq!(p.count_part(y, l), n);
                }
                for (y, o) in [(0, 1), (1, 2), (2, 0)] {
                    let m = overlap_multiset(&p, y, o).unwrap();
                    prop_assert_eq!(m[l], phi + direct[y] - direct[o]);
                    prop_assert!(m[l] <= 2 * phi);
                }
            }
        }

        #[test]
        fn spread_one_matches_plurality(votes in prop::collection::vec(0usize..4, 1..9), offset in 1usize..9) {
            let t = votes.len();
            let map = SpreadMap::from_offsets(t, 1, vec![(offset - 1) % t + 1]).unwrap();
            let p = profile(votes, 4, &map);
            let o = certify_overlap(&p).unwrap();
            let pl = certify_plurality(p.votes()).unwrap();
            prop_assert_eq!((o.label, o.radius), (pl.label, pl.radius));
        }

        #[test]
        fn never_exceeds_plurality_ignoring_overlap(t in 1usize..5, phi in 1usize..4, seed: u64, raw in prop::collection::vec(0usize..3, 16)) {
            let map = spread_assignment(t, phi, seed).unwrap();
            let votes: Vec<usize> = raw.into_iter().cycle().take(map.len()).collect();
            let p = profile(votes, 3, &map);
            prop_assert!(certify_overlap(&p).unwrap().radius <= certify_plurality(p.votes()).unwrap().radius);
        }

        #[test]
        fn switching_a_vote_to_the_winner_never_lowers_the_radius(t in 1usize..5, phi in 1usize..4, seed: u64, raw in prop::collection::vec(0usize..3, 16), pick: usize) {
            let map = spread_assignment(t, phi, seed).unwrap();
            let mut votes: Vec<usize> = raw.into_iter().cycle().take(map.len()).collect();
            let before = certify_overlap(&profile(votes.clone(), 3, &map)).unwrap();
            let s = pick % votes.len();
            votes[s] = before.label;
            let after = certify_overlap(&profile(votes, 3, &map)).unwrap();
            prop_assert_eq!(after.label, before.label);
            prop_assert!(after.radius >= before.radius);
        }
    }
}
