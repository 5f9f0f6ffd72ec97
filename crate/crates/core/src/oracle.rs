//! Exhaustive worst-case adversary over submodel outputs.
//!
//! The adversary replaces exactly `m` submodels with outputs of its choice.
//! Replacing a submodel by its own output is allowed, so "exactly `m`" also
//! covers every smaller budget. The search runs on aggregates: each
//! submodel contributes a small integer vector (its vote, plus its strict
//! pairwise logit wins for run-off), a budget `m` removes the contributions
//! of `m` chosen submodels and adds any `m` contributions from the
//! alphabet of possible outputs. Removals and additions are deduplicated
//! before the cross product is checked.
//!
//! Winners are recomputed here from raw aggregates without the profile
//! helpers used by the certificates.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::Serialize;

use crate::certify::{certify_plurality, certify_runoff, certify_topk, Method};
use crate::ensemble::{LogitProfile, VoteProfile};
use crate::error::{Error, Result};
use crate::overlap::{certify_overlap, OverlapProfile};
use crate::partition::spread_assignment;
use crate::rng;

/// Limits on exhaustive search. Removal choices grow like `C(T, m)` and
/// run-off additions like `75^m` weak orders for four labels before
/// deduplication, so raising either cap quickly becomes expensive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleConfig {
    pub max_submodels: usize,
    pub max_labels: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            max_submodels: 9,
            max_labels: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Alphabet {
    Votes,
    WeakOrders,
}

type Contribution = Vec<i32>;
type AdditionCache = HashMap<(Alphabet, usize, usize), Arc<Vec<Contribution>>>;

/// Exhaustive oracle with a cache of addition sets shared across calls.
#[derive(Debug, Default)]
pub struct Oracle {
    config: OracleConfig,
    additions: Mutex<AdditionCache>,
}

fn vote_contribution(label: usize, num_labels: usize) -> Contribution {
    let mut c = vec![0; num_labels];
    c[label] = 1;
    c
}

fn first_max(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Vote followed by the row-major strict-win matrix.
fn logit_contribution(logits: &[f64]) -> Contribution {
    let n = logits.len();
    let mut c = vec![0; n + n * n];
    c[first_max(logits)] = 1;
    for a in 0..n {
        for b in 0..n {
            if logits[a] > logits[b] {
                c[n + a * n + b] = 1;
            }
        }
    }
    c
}

/// Every weak order over `num_labels` labels, as contributions.
fn weak_orders(num_labels: usize) -> Vec<Contribution> {
    let total = num_labels.pow(num_labels as u32);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for code in 0..total {
        let levels: Vec<f64> = (0..num_labels)
            .map(|i| -(((code / num_labels.pow(i as u32)) % num_labels) as f64))
            .collect();
        let c = logit_contribution(&levels);
        if seen.insert(c.clone()) {
            out.push(c);
        }
    }
    out
}

fn add(a: &[i32], b: &[i32]) -> Contribution {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Index sets of size `m` drawn from `0..n`, in lexicographic order.
fn combinations(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(m);
    fn walk(start: usize, n: usize, m: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == m {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            if n - i < m - current.len() {
                break;
            }
            current.push(i);
            walk(i + 1, n, m, current, out);
            current.pop();
        }
    }
    walk(0, n, m, &mut current, &mut out);
    out
}

/// Distinct sums of the contributions of each `m`-subset of `parts`.
fn removals(parts: &[Contribution], m: usize) -> Vec<Contribution> {
    let width = parts.first().map_or(0, Vec::len);
    let set: HashSet<Contribution> = combinations(parts.len(), m)
        .into_iter()
        .map(|idx| idx.iter().fold(vec![0; width], |acc, &i| add(&acc, &parts[i])))
        .collect();
    set.into_iter().collect()
}

fn plurality_winner(counts: &[i32]) -> usize {
    let mut best = 0;
    for (y, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = y;
        }
    }
    best
}

fn runner_up_of(counts: &[i32], winner: usize) -> usize {
    let mut best: Option<usize> = None;
    for (y, &c) in counts.iter().enumerate() {
        if y != winner && best.map_or(true, |b| c > counts[b]) {
            best = Some(y);
        }
    }
    best.expect("at least two labels")
}

fn runoff_winner(state: &[i32], num_labels: usize) -> usize {
    let (counts, wins) = state.split_at(num_labels);
    let pl = plurality_winner(counts);
    let ru = runner_up_of(counts, pl);
    let gap = wins[pl * num_labels + ru] - wins[ru * num_labels + pl] - i32::from(ru < pl);
    if gap >= 0 {
        pl
    } else {
        ru
    }
}

fn in_top_k(counts: &[i32], y: usize, k: usize) -> bool {
    let ahead = (0..counts.len())
        .filter(|&z| counts[z] > counts[y] || (counts[z] == counts[y] && z < y))
        .count();
    ahead < k
}

fn holds_everywhere(
    state: &[i32],
    removals: &[Contribution],
    additions: &[Contribution],
    keep: impl Fn(&[i32]) -> bool,
) -> bool {
    let mut scratch = vec![0; state.len()];
    removals.iter().all(|r| {
        additions.iter().all(|a| {
            for i in 0..state.len() {
                scratch[i] = state[i] - r[i] + a[i];
            }
            keep(&scratch)
        })
    })
}

fn sum_of(parts: &[Contribution]) -> Contribution {
    let width = parts.first().map_or(0, Vec::len);
    parts.iter().fold(vec![0; width], |acc, p| add(&acc, p))
}

impl Oracle {
    pub fn new(config: OracleConfig) -> Self {
        Self {
            config,
            additions: Mutex::default(),
        }
    }

    pub fn config(&self) -> OracleConfig {
        self.config
    }

    fn check_caps(&self, num_submodels: usize, num_labels: usize) -> Result<()> {
        if num_submodels > self.config.max_submodels {
            return Err(Error::Capacity(format!(
                "{num_submodels} submodels exceed the oracle cap of {}",
                self.config.max_submodels
            )));
        }
        if num_labels > self.config.max_labels {
            return Err(Error::Capacity(format!(
                "{num_labels} labels exceed the oracle cap of {}",
                self.config.max_labels
            )));
        }
        if num_labels < 2 {
            return Err(Error::argument("the oracle needs at least two labels"));
        }
        Ok(())
    }

    fn additions(&self, alphabet: Alphabet, num_labels: usize, m: usize) -> Arc<Vec<Contribution>> {
        let key = (alphabet, num_labels, m);
        if let Some(hit) = self.additions.lock().expect("cache lock").get(&key) {
            return hit.clone();
        }
        let letters = match alphabet {
            Alphabet::Votes => (0..num_labels).map(|y| vote_contribution(y, num_labels)).collect(),
            Alphabet::WeakOrders => weak_orders(num_labels),
        };
        let built = if m == 0 {
            vec![vec![0; letters[0].len()]]
        } else {
            let previous = self.additions(alphabet, num_labels, m - 1);
            let set: HashSet<Contribution> = previous
                .iter()
                .flat_map(|p| letters.iter().map(move |l| add(p, l)))
                .collect();
            set.into_iter().collect()
        };
        let built = Arc::new(built);
        self.additions.lock().expect("cache lock").insert(key, built.clone());
        built
    }

    fn vote_parts(votes: &VoteProfile) -> Vec<Contribution> {
        votes
            .votes()
            .iter()
            .map(|&y| vote_contribution(y, votes.num_labels()))
            .collect()
    }

    /// Whether the plurality label survives every reassignment of `m` votes.
    pub fn plurality(&self, votes: &VoteProfile, m: usize) -> Result<bool> {
        let (t, l) = (votes.num_submodels(), votes.num_labels());
        self.check_caps(t, l)?;
        if m > t {
            return Err(Error::argument(format!("budget {m} exceeds {t} submodels")));
        }
        let parts = Self::vote_parts(votes);
        let state = sum_of(&parts);
        let original = plurality_winner(&state);
        let adds = self.additions(Alphabet::Votes, l, m);
        Ok(holds_everywhere(&state, &removals(&parts, m), &adds, |s| plurality_winner(s) == original))
    }

    /// Whether the run-off winner survives `m` submodels taking any vote and
    /// any weak order over the labels.
    pub fn runoff(&self, logits: &LogitProfile, m: usize) -> Result<bool> {
        let (t, l) = (logits.num_submodels(), logits.num_labels());
        self.check_caps(t, l)?;
        if m > t {
            return Err(Error::argument(format!("budget {m} exceeds {t} submodels")));
        }
        let parts: Vec<Contribution> = logits.rows().iter().map(|row| logit_contribution(row)).collect();
        let state = sum_of(&parts);
        let original = runoff_winner(&state, l);
        let adds = self.additions(Alphabet::WeakOrders, l, m);
        Ok(holds_everywhere(&state, &removals(&parts, m), &adds, |s| runoff_winner(s, l) == original))
    }

    /// Whether `y` stays in the top `k` under every reassignment of `m` votes.
    pub fn topk(&self, votes: &VoteProfile, y: usize, k: usize, m: usize) -> Result<bool> {
        let (t, l) = (votes.num_submodels(), votes.num_labels());
        self.check_caps(t, l)?;
        if k == 0 || y >= l || m > t {
            return Err(Error::argument(format!("invalid top-k query y = {y}, k = {k}, m = {m}")));
        }
        let parts = Self::vote_parts(votes);
        let state = sum_of(&parts);
        let adds = self.additions(Alphabet::Votes, l, m);
        Ok(holds_everywhere(&state, &removals(&parts, m), &adds, |s| in_top_k(s, y, k)))
    }

    /// Whether the plurality label survives perturbation of any `m` fine
    /// subsets, each handing every submodel that reads it to the adversary.
    pub fn overlap(&self, profile: &OverlapProfile, m: usize) -> Result<bool> {
        let votes = profile.votes();
        let (t, l) = (votes.num_submodels(), votes.num_labels());
        self.check_caps(t, l)?;
        let n = profile.num_subsets();
        if m > n {
            return Err(Error::argument(format!("budget {m} exceeds {n} fine subsets")));
        }
        let parts = Self::vote_parts(votes);
        let state = sum_of(&parts);
        let original = plurality_winner(&state);

        let mut by_size: HashMap<usize, HashSet<Contribution>> = HashMap::new();
        for chosen in combinations(n, m) {
            let controlled: HashSet<usize> = chosen.iter().flat_map(|&f| profile.users_of(f).iter().copied()).collect();
            let removed = controlled.iter().fold(vec![0; l], |acc, &s| add(&acc, &parts[s]));
            by_size.entry(controlled.len()).or_default().insert(removed);
        }
        for (size, removed) in by_size {
            let removed: Vec<Contribution> = removed.into_iter().collect();
            let adds = self.additions(Alphabet::Votes, l, size);
            if !holds_everywhere(&state, &removed, &adds, |s| plurality_winner(s) == original) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Largest budget at which `stable` holds, or -1 if it fails at zero.
    fn max_stable(limit: usize, mut stable: impl FnMut(usize) -> Result<bool>) -> Result<i64> {
        for m in 0..=limit {
            if !stable(m)? {
                return Ok(m as i64 - 1);
            }
        }
        Ok(limit as i64)
    }

    pub fn max_stable_plurality(&self, votes: &VoteProfile) -> Result<i64> {
        Self::max_stable(votes.num_submodels(), |m| self.plurality(votes, m))
    }

    pub fn max_stable_runoff(&self, logits: &LogitProfile) -> Result<i64> {
        Self::max_stable(logits.num_submodels(), |m| self.runoff(logits, m))
    }

    pub fn max_stable_topk(&self, votes: &VoteProfile, y: usize, k: usize) -> Result<i64> {
        Self::max_stable(votes.num_submodels(), |m| self.topk(votes, y, k, m))
    }

    pub fn max_stable_overlap(&self, profile: &OverlapProfile) -> Result<i64> {
        Self::max_stable(profile.num_subsets(), |m| self.overlap(profile, m))
    }
}

pub fn oracle_plurality(votes: &VoteProfile, m: usize) -> Result<bool> {
    Oracle::default().plurality(votes, m)
}

pub fn oracle_runoff(logits: &LogitProfile, m: usize) -> Result<bool> {
    Oracle::default().runoff(logits, m)
}

pub fn oracle_topk(votes: &VoteProfile, y: usize, k: usize, m: usize) -> Result<bool> {
    Oracle::default().topk(votes, y, k, m)
}

pub fn oracle_overlap(profile: &OverlapProfile, m: usize) -> Result<bool> {
    Oracle::default().overlap(profile, m)
}

/// One certificate compared against the oracle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SweepRecord {
    pub profile_hash: String,
    pub method: Method,
    /// Target label for top-k rows, the predicted label otherwise.
    pub label: usize,
    pub certified: i64,
    pub oracle: i64,
    pub equal: bool,
}

impl SweepRecord {
    /// A certificate above the oracle's stable budget is unsound.
    pub fn sound(&self) -> bool {
        self.certified <= self.oracle
    }
}

/// Order-sensitive 64-bit digest of a profile.
pub fn profile_hash(votes: &VoteProfile, logits: Option<&LogitProfile>) -> String {
    let mut h = rng::mix64(votes.num_labels() as u64);
    for &v in votes.votes() {
        h = rng::mix64(h ^ v as u64);
    }
    for row in logits.map(LogitProfile::rows).unwrap_or_default() {
        for x in row {
            h = rng::mix64(h ^ x.to_bits());
        }
    }
    format!("{h:016x}")
}

fn random_weak_order_logits<R: Rng>(rng: &mut R, num_labels: usize) -> Vec<f64> {
    (0..num_labels)
        .map(|_| -(rng::uniform_below(rng, num_labels as u64) as f64))
        .collect()
}

/// Compares certificates with the oracle on `profiles` random profiles.
///
/// Votes are uniform; run-off profiles draw each submodel's logits as a
/// random weak order and vote by argmax; overlap profiles use a fresh
/// spread map per profile over `num_submodels` base submodels.
pub fn run_sweep(
    oracle: &Oracle,
    method: Method,
    num_submodels: usize,
    num_labels: usize,
    profiles: usize,
    seed: u64,
) -> Result<Vec<SweepRecord>> {
    let mut rng = rng::seeded(seed);
    let mut records = Vec::new();
    let random_votes = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> Result<VoteProfile> {
        let votes = (0..n).map(|_| rng::uniform_below(rng, num_labels as u64) as usize).collect();
        VoteProfile::from_votes(votes, num_labels)
    };
    for _ in 0..profiles {
        match method {
            Method::Plurality => {
                let votes = random_votes(&mut rng, num_submodels)?;
                let cert = certify_plurality(&votes)?;
                let exact = oracle.max_stable_plurality(&votes)?;
                records.push(record(profile_hash(&votes, None), method, cert.label, cert.radius.into(), exact));
            }
            Method::Runoff => {
                let rows = (0..num_submodels)
                    .map(|_| random_weak_order_logits(&mut rng, num_labels))
                    .collect();
                let logits = LogitProfile::new(rows)?;
                let votes = logits.vote_profile();
                let cert = certify_runoff(&votes, &logits)?;
                let exact = oracle.max_stable_runoff(&logits)?;
                records.push(record(profile_hash(&votes, Some(&logits)), method, cert.label, cert.radius.into(), exact));
            }
            Method::TopK(k) => {
                let votes = random_votes(&mut rng, num_submodels)?;
                let hash = profile_hash(&votes, None);
                for y in 0..num_labels {
                    let certified = certify_topk(&votes, y, k)?;
                    let exact = oracle.max_stable_topk(&votes, y, k)?;
                    records.push(record(hash.clone(), method, y, certified, exact));
                }
            }
            Method::Overlap(phi) => {
                let map = spread_assignment(num_submodels, phi, rng.gen())?;
                let votes = random_votes(&mut rng, map.len())?;
                let profile = OverlapProfile::new(votes, &map)?;
                let cert = certify_overlap(&profile)?;
                let exact = oracle.max_stable_overlap(&profile)?;
                records.push(record(profile_hash(profile.votes(), None), method, cert.label, cert.radius.into(), exact));
            }
        }
    }
    Ok(records)
}

fn record(profile_hash: String, method: Method, label: usize, certified: i64, oracle: i64) -> SweepRecord {
    SweepRecord {
        profile_hash,
        method,
        label,
        certified,
        oracle,
        equal: certified == oracle,
    }
}

/// Writes sweep records as CSV with a header row.
pub fn write_sweep_csv<W: Write>(out: W, records: &[SweepRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for r in records {
        writer
            .serialize(r)
            .map_err(|e| Error::data(format!("writing sweep report: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| Error::data(format!("writing sweep report: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::SpreadMap;
    use proptest::prelude::*;

    fn counts(c: &[usize]) -> VoteProfile {
        VoteProfile::from_counts(c)
    }

    #[test]
    fn zero_budget_is_stable() {
        let v = counts(&[2, 2, 1]);
        assert!(oracle_plurality(&v, 0).unwrap());
        assert!(oracle_topk(&v, 1, 2, 0).unwrap());
        assert!(!oracle_topk(&v, 2, 2, 0).unwrap());
    }

    #[test]
    fn single_flip_breaks_narrow_lead() {
        assert!(!oracle_plurality(&counts(&[3, 2]), 1).unwrap());
        assert_eq!(Oracle::default().max_stable_plurality(&counts(&[6, 0, 0])).unwrap(), 3);
    }

    #[test]
    fn weak_order_counts() {
        let sizes: Vec<usize> = (1..=4).map(|l| weak_orders(l).len()).collect();
        assert_eq!(sizes, vec![1, 3, 13, 75]);
    }

    #[test]
    fn caps_raise_capacity_errors() {
        let big = counts(&[10, 0]);
        assert!(matches!(oracle_plurality(&big, 1), Err(Error::Capacity(_))));
        let wide = counts(&[1, 1, 1, 1, 1]);
        assert!(matches!(oracle_plurality(&wide, 1), Err(Error::Capacity(_))));
        let roomy = Oracle::new(OracleConfig {
            max_submodels: 10,
            max_labels: 4,
        });
        assert!(roomy.plurality(&big, 1).unwrap());
    }

    #[test]
    fn binary_runoff_oracle_matches_plurality_oracle() {
        let logits = LogitProfile::new(vec![
            vec![0.9, 0.1],
            vec![0.8, 0.2],
            vec![0.3, 0.7],
            vec![0.6, 0.4],
            vec![0.55, 0.45],
        ])
        .unwrap();
        let o = Oracle::default();
        let votes = logits.vote_profile();
        for m in 0..=5 {
            assert_eq!(o.runoff(&logits, m).unwrap(), o.plurality(&votes, m).unwrap());
        }
    }

    #[test]
    fn overlap_oracle_with_unit_spread_is_plurality() {
        let map = SpreadMap::from_offsets(5, 1, vec![2]).unwrap();
        let votes = VoteProfile::from_votes(vec![0, 0, 1, 0, 2], 3).unwrap();
        let p = OverlapProfile::new(votes.clone(), &map).unwrap();
        let o = Oracle::default();
        assert_eq!(o.max_stable_overlap(&p).unwrap(), o.max_stable_plurality(&votes).unwrap());
    }

    #[test]
    fn sweep_csv_has_header_and_rows() {
        let o = Oracle::default();
        let rows = run_sweep(&o, Method::Plurality, 5, 3, 4, 9).unwrap();
        assert!(rows.iter().all(|r| r.equal));
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("profile_hash,method,label,certified,oracle,equal\n"));
        assert_eq!(text.lines().count(), 5);
        assert_eq!(run_sweep(&o, Method::Plurality, 5, 3, 4, 9).unwrap(), rows);
    }

    proptest! {
        #[test]
        fn stability_is_antitone(votes in prop::collection::vec(0usize..3, 1..7)) {
            let v = VoteProfile::from_votes(votes, 3).unwrap();
            let o = Oracle::default();
            let flags: Vec<bool> = (0..=v.num_submodels()).map(|m| o.plurality(&v, m).unwrap()).collect();
            for w in flags.windows(2) {
                prop_assert!(w[0] || !w[1]);
            }
        }

        #[test]
        fn unused_labels_follow_tie_break_order(votes in prop::collection::vec(0usize..3, 1..7)) {
            let o = Oracle::default();
            let narrow = VoteProfile::from_votes(votes.clone(), 3).unwrap();
            // An unused label appended last changes nothing; one prepended
            // first wins every tie and can only help the adversary.
            let wide = VoteProfile::from_votes(votes.iter().map(|&y| y + 1).collect(), 4).unwrap();
            let shifted = VoteProfile::from_votes(votes, 4).unwrap();
            prop_assert_eq!(o.max_stable_plurality(&narrow).unwrap(), o.max_stable_plurality(&shifted).unwrap());
            prop_assert!(o.max_stable_plurality(&wide).unwrap() <= o.max_stable_plurality(&narrow).unwrap());
        }
    }
}
