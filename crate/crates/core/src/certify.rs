//! Pointwise certificates computed from vote and logit profiles.
//!
//! A radius `r` certifies that perturbing any `r` feature dimensions, counted
//! once across the training matrix and the test vector, leaves the
//! prediction unchanged. With disjoint feature subsets each perturbed
//! dimension reaches at most one submodel, so every bound below is a count
//! of submodels the adversary may fully control.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ensemble::{LogitProfile, TrainingMode, VoteProfile};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Guarantee {
    /// Feature perturbations in training and test data.
    Feature,
    /// Feature perturbations and training-label flips, in any mix.
    FeatureLabelFlip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Plurality,
    Runoff,
    TopK(usize),
    /// Overlapping feature sets with the given spread degree.
    Overlap(usize),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Plurality => f.write_str("plurality"),
            Method::Runoff => f.write_str("runoff"),
            Method::TopK(k) => write!(f, "topk({k})"),
            Method::Overlap(phi) => write!(f, "overlap({phi})"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let param = |prefix: &str| -> Option<usize> {
            s.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?.parse().ok()
        };
        match s {
            "plurality" => Ok(Method::Plurality),
            "runoff" => Ok(Method::Runoff),
            _ => param("topk")
                .map(Method::TopK)
                .or_else(|| param("overlap").map(Method::Overlap))
                .ok_or_else(|| Error::argument(format!("unknown certification method `{s}`"))),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A predicted label with a certified radius.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub label: usize,
    pub radius: u32,
    pub guarantee: Guarantee,
    pub method: Method,
}

fn check_pair(num_labels: usize, y: usize, other: usize) -> Result<()> {
    if y == other {
        return Err(Error::argument(format!("gap between label {y} and itself")));
    }
    if y >= num_labels || other >= num_labels {
        return Err(Error::argument(format!("labels {y}, {other} outside 0..{num_labels}")));
    }
    Ok(())
}

/// Submodel vote gap: `count(y) - count(other) - [other < y]`.
pub fn gap_vote(votes: &VoteProfile, y: usize, other: usize) -> Result<i64> {
    check_pair(votes.num_labels(), y, other)?;
    Ok(vote_gap_unchecked(votes.counts(), y, other))
}

fn vote_gap_unchecked(counts: &[usize], y: usize, other: usize) -> i64 {
    counts[y] as i64 - counts[other] as i64 - i64::from(other < y)
}

/// Logit vote gap: strict pairwise logit wins of `y` over `other`, minus the
/// reverse, minus `[other < y]`.
pub fn gap_logit(logits: &LogitProfile, y: usize, other: usize) -> Result<i64> {
    check_pair(logits.num_labels(), y, other)?;
    Ok(logits.count_logit(y, other) as i64 - logits.count_logit(other, y) as i64 - i64::from(other < y))
}

fn half_floor(gap: i64) -> i64 {
    gap.div_euclid(2)
}

/// Plurality certificate: `floor(gap_vote(pl, ru) / 2)`.
pub fn certify_plurality(votes: &VoteProfile) -> Result<Certificate> {
    if votes.num_labels() < 2 {
        return Err(Error::argument("certification needs at least two labels"));
    }
    let (pl, ru) = (votes.plurality(), votes.runner_up());
    let gap = vote_gap_unchecked(votes.counts(), pl, ru);
    debug_assert!(gap >= 0, "the plurality label is preferred over every other label");
    Ok(Certificate {
        label: pl,
        radius: half_floor(gap) as u32,
        guarantee: Guarantee::Feature,
        method: Method::Plurality,
    })
}

/// Memoized bound on how many submodels can flip while at least one of two
/// vote gaps stays non-negative.
///
/// `dp(a, b) = 0` when `max(a, b) <= 1` and `(a, b) != (1, 1)`, otherwise
/// `1 + min(dp(a - 2, b - 1), dp(a - 1, b - 2))`. Arguments below -2 are
/// clamped to -2, which leaves every value unchanged because the recursion
/// no longer depends on how negative a gap is.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DpTable {
    max_gap: i64,
    width: usize,
    values: Vec<u32>,
}

const DP_FLOOR: i64 = -2;

impl DpTable {
    /// Table covering gaps in `-2..=num_submodels`.
    pub fn new(num_submodels: usize) -> Self {
        let max_gap = num_submodels as i64;
        let width = (max_gap - DP_FLOOR + 1) as usize;
        let mut table = Self {
            max_gap,
            width,
            values: vec![0; width * width],
        };
        for a in DP_FLOOR..=max_gap {
            for b in DP_FLOOR..=max_gap {
                let v = if a.max(b) <= 1 && (a, b) != (1, 1) {
                    0
                } else {
                    1 + table.at(a - 2, b - 1).min(table.at(a - 1, b - 2))
                };
                let idx = table.index(a, b);
                table.values[idx] = v;
            }
        }
        table
    }

    pub fn max_gap(&self) -> i64 {
        self.max_gap
    }

    fn index(&self, a: i64, b: i64) -> usize {
        let a = (a.max(DP_FLOOR) - DP_FLOOR) as usize;
        let b = (b.max(DP_FLOOR) - DP_FLOOR) as usize;
        a * self.width + b
    }

    fn at(&self, a: i64, b: i64) -> u32 {
        self.values[self.index(a, b)]
    }

    /// `dp(a, b)`; panics if either gap exceeds the table's submodel count.
    pub fn get(&self, a: i64, b: i64) -> u32 {
        assert!(
            a <= self.max_gap && b <= self.max_gap,
            "dp({a}, {b}) outside a table built for T = {}",
            self.max_gap
        );
        self.at(a, b)
    }
}

/// Run-off certificate, building the dp table on the fly.
pub fn certify_runoff(votes: &VoteProfile, logits: &LogitProfile) -> Result<Certificate> {
    certify_runoff_with(votes, logits, &DpTable::new(votes.num_submodels()))
}

/// Run-off certificate: the smaller of the round-two overtaking bound and the
/// bound on ejecting the winner from the round-one top two.
///
/// With two labels nobody can be ejected from the top two; the ejection term
/// then uses the lone remaining label paired with itself, which is never
/// smaller than the overtaking term.
pub fn certify_runoff_with(votes: &VoteProfile, logits: &LogitProfile, table: &DpTable) -> Result<Certificate> {
    let num_labels = votes.num_labels();
    if num_labels < 2 {
        return Err(Error::argument("run-off needs at least two labels"));
    }
    if logits.num_submodels() != votes.num_submodels() || logits.num_labels() != num_labels {
        return Err(Error::argument("vote and logit profiles disagree in shape"));
    }
    if table.max_gap() < votes.num_submodels() as i64 {
        return Err(Error::argument("dp table built for fewer submodels than the profile"));
    }
    let counts = votes.counts();
    let (pl, ru) = (votes.plurality(), votes.runner_up());
    let (winner, loser) = if gap_logit(logits, pl, ru)? >= 0 { (pl, ru) } else { (ru, pl) };

    // Overtaken in round two: the challenger must reach the top two and win
    // the pairwise logit vote.
    let mut overtake = i64::MAX;
    for y in (0..num_labels).filter(|&y| y != winner) {
        let reach = if y == loser { 0 } else { half_floor(vote_gap_unchecked(counts, loser, y)) };
        let win = half_floor(gap_logit(logits, winner, y)?);
        overtake = overtake.min(reach.max(win));
    }

    // Ejected in round one: two labels must both overtake the winner.
    let gaps: Vec<(usize, i64)> = (0..num_labels)
        .filter(|&y| y != winner)
        .map(|y| (y, vote_gap_unchecked(counts, winner, y)))
        .collect();
    let mut eject = u32::MAX;
    if gaps.len() == 1 {
        eject = table.get(gaps[0].1, gaps[0].1);
    }
    for (i, &(_, a)) in gaps.iter().enumerate() {
        for &(_, b) in &gaps[i + 1..] {
            eject = eject.min(table.get(a, b));
        }
    }

    let radius = overtake.min(i64::from(eject));
    debug_assert!(radius >= 0);
    Ok(Certificate {
        label: winner,
        radius: radius as u32,
        guarantee: Guarantee::Feature,
        method: Method::Runoff,
    })
}

/// Whether `y` ranks in the top `k` (count descending, index ascending).
fn in_top_k(counts: &[usize], y: usize, k: usize) -> bool {
    let ahead = counts
        .iter()
        .enumerate()
        .filter(|&(z, &c)| c > counts[y] || (c == counts[y] && z < y))
        .count();
    ahead < k
}

fn ranked(counts: &[usize], position: usize) -> usize {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order[position]
}

/// Greedy top-k radius for target label `y` under plurality voting.
///
/// Each step moves one vote onto the label ranked `k + 1`, taking it from
/// `y` while `y` still has votes and from the current plurality label
/// otherwise. Returns -1 when `y` is not in the top `k` to begin with.
pub fn certify_topk(votes: &VoteProfile, y: usize, k: usize) -> Result<i64> {
    let t = votes.num_submodels();
    let num_labels = votes.num_labels();
    if k == 0 || k >= t {
        return Err(Error::argument(format!("top-k needs 1 <= k < T, got k = {k}, T = {t}")));
    }
    if k >= num_labels {
        return Err(Error::argument(format!(
            "top-k needs k < |Y|, got k = {k}, |Y| = {num_labels}"
        )));
    }
    if y >= num_labels {
        return Err(Error::argument(format!("label {y} outside 0..{num_labels}")));
    }
    let mut counts = votes.counts().to_vec();
    let mut radius = -1i64;
    while in_top_k(&counts, y, k) {
        let next = ranked(&counts, k);
        if counts[y] > 0 {
            counts[y] -= 1;
        } else {
            let pl = ranked(&counts, 0);
            counts[pl] -= 1;
        }
        counts[next] += 1;
        radius += 1;
    }
    Ok(radius)
}

/// Upgrades a certificate to cover training-label flips. Only ensembles that
/// partition training rows qualify, since there one flipped label reaches a
/// single submodel.
pub fn tag_label_flip(cert: Certificate, mode: TrainingMode) -> Result<Certificate> {
    match mode {
        TrainingMode::InstancePartition { .. } => Ok(Certificate {
            guarantee: Guarantee::FeatureLabelFlip,
            ..cert
        }),
        other => Err(Error::InvalidUpgrade(format!(
            "{other:?} ensembles share every training label across submodels"
        ))),
    }
}
