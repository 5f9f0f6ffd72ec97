//! Feature partitions: which submodel sees which feature columns.
//!
//! Feature indices are 0-based everywhere in memory and on disk. The strided
//! rule is written against 1-based feature numbers (`j mod T = t - 1`), so
//! [`strided_partition`] converts internally; [`FeaturePartition::one_based`]
//! gives the 1-based view for display.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A disjoint cover of `0..num_features` by non-empty, sorted subsets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturePartition {
    num_features: usize,
    subsets: Vec<Vec<usize>>,
}

impl FeaturePartition {
    /// Validates disjointness and coverage of `0..num_features`.
    pub fn new(num_features: usize, mut subsets: Vec<Vec<usize>>) -> Result<Self> {
        if num_features == 0 {
            return Err(Error::config("feature count must be positive"));
        }
        if subsets.is_empty() {
            return Err(Error::config("a partition needs at least one subset"));
        }
        let mut seen = vec![false; num_features];
        for (t, subset) in subsets.iter_mut().enumerate() {
            if subset.is_empty() {
                return Err(Error::config(format!("subset {t} is empty")));
            }
            subset.sort_unstable();
            for &j in subset.iter() {
                if j >= num_features {
                    return Err(Error::config(format!(
                        "subset {t} references feature {j} but d = {num_features}"
                    )));
                }
                if std::mem::replace(&mut seen[j], true) {
                    return Err(Error::config(format!("feature {j} appears in two subsets")));
                }
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::config(format!("feature {j} is not assigned to any subset")));
        }
        Ok(Self {
            num_features,
            subsets,
        })
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_subsets(&self) -> usize {
        self.subsets.len()
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn subset(&self, t: usize) -> &[usize] {
        &self.subsets[t]
    }

    /// Subsets as 1-based feature numbers.
    pub fn one_based(&self) -> Vec<Vec<usize>> {
        self.subsets
            .iter()
            .map(|s| s.iter().map(|j| j + 1).collect())
            .collect()
    }

    /// Index of the subset holding feature `j`.
    pub fn owner_of(&self, j: usize) -> Option<usize> {
        self.subsets.iter().position(|s| s.binary_search(&j).is_ok())
    }
}

/// Spread map from fine subsets to the submodels that use them.
///
/// With spread degree `phi` and base count `T` there are `phi * T` fine
/// subsets and `phi * T` submodels. Fine subset `l` (1-based) goes to
/// submodels `{tau + l mod phi*T : tau in offsets}`, with residue 0 read as
/// `phi * T`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpreadMap {
    spread: usize,
    base_submodels: usize,
    /// The drawn offset set, 1-based, sorted.
    offsets: Vec<usize>,
    /// `assignment[l]` lists the 0-based submodels using fine subset `l`.
    assignment: Vec<Vec<usize>>,
}

impl SpreadMap {
    pub fn from_offsets(base_submodels: usize, spread: usize, mut offsets: Vec<usize>) -> Result<Self> {
        if spread == 0 {
            return Err(Error::config("spread degree must be at least 1"));
        }
        if base_submodels == 0 {
            return Err(Error::config("submodel count must be at least 1"));
        }
        let n = spread * base_submodels;
        offsets.sort_unstable();
        offsets.dedup();
        if offsets.len() != spread || offsets.iter().any(|&o| o == 0 || o > n) {
            return Err(Error::config(format!(
                "spread offsets must be {spread} distinct values in 1..={n}"
            )));
        }
        let assignment = (1..=n)
            .map(|l| {
                let mut users: Vec<usize> = offsets
                    .iter()
                    .map(|&tau| match (tau + l) % n {
                        0 => n - 1,
                        r => r - 1,
                    })
                    .collect();
                users.sort_unstable();
                users
            })
            .collect();
        Ok(Self {
            spread,
            base_submodels,
            offsets,
            assignment,
        })
    }

    pub fn spread(&self) -> usize {
        self.spread
    }

    pub fn base_submodels(&self) -> usize {
        self.base_submodels
    }

    /// Number of fine subsets, which equals the number of submodels.
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Submodels (0-based) that use fine subset `l` (0-based).
    pub fn users_of(&self, l: usize) -> &[usize] {
        &self.assignment[l]
    }

    pub fn assignment(&self) -> &[Vec<usize>] {
        &self.assignment
    }

    /// Fine subsets (0-based) held by submodel `s`.
    pub fn subsets_of(&self, s: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&l| self.assignment[l].binary_search(&s).is_ok())
            .collect()
    }
}

/// A fine disjoint partition plus the spread map that overlaps it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverlappingPartition {
    pub fine: FeaturePartition,
    pub spread: SpreadMap,
}

impl OverlappingPartition {
    pub fn num_submodels(&self) -> usize {
        self.spread.len()
    }

    /// Union of the fine subsets held by submodel `s`, sorted.
    pub fn effective_set(&self, s: usize) -> Vec<usize> {
        let mut features: Vec<usize> = self
            .spread
            .subsets_of(s)
            .into_iter()
            .flat_map(|l| self.fine.subset(l).iter().copied())
            .collect();
        features.sort_unstable();
        features
    }
}

/// Feature sets for every submodel of an ensemble.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FeatureLayout {
    Disjoint(FeaturePartition),
    Overlapping(OverlappingPartition),
}

impl FeatureLayout {
    pub fn num_features(&self) -> usize {
        match self {
            FeatureLayout::Disjoint(p) => p.num_features(),
            FeatureLayout::Overlapping(o) => o.fine.num_features(),
        }
    }

    pub fn num_submodels(&self) -> usize {
        match self {
            FeatureLayout::Disjoint(p) => p.num_subsets(),
            FeatureLayout::Overlapping(o) => o.num_submodels(),
        }
    }

    pub fn feature_sets(&self) -> Vec<Vec<usize>> {
        match self {
            FeatureLayout::Disjoint(p) => p.subsets().to_vec(),
            FeatureLayout::Overlapping(o) => (0..o.num_submodels()).map(|s| o.effective_set(s)).collect(),
        }
    }

    pub fn spread_map(&self) -> Option<&SpreadMap> {
        match self {
            FeatureLayout::Disjoint(_) => None,
            FeatureLayout::Overlapping(o) => Some(&o.spread),
        }
    }
}

fn check_counts(d: usize, t: usize) -> Result<()> {
    if t == 0 {
        return Err(Error::config("submodel count T must be at least 1"));
    }
    if t > d {
        return Err(Error::config(format!(
            "submodel count T = {t} exceeds feature count d = {d}"
        )));
    }
    Ok(())
}

/// Strided partition: 1-based feature `j` goes to submodel `t` when
/// `j mod T = t - 1`.
pub fn strided_partition(d: usize, t: usize) -> Result<FeaturePartition> {
    check_counts(d, t)?;
    let mut subsets = vec![Vec::new(); t];
    for j in 0..d {
        subsets[(j + 1) % t].push(j);
    }
    FeaturePartition::new(d, subsets)
}

/// Balanced random partition; subset sizes are `floor(d/T)` or `ceil(d/T)`.
pub fn random_partition(d: usize, t: usize, seed: u64) -> Result<FeaturePartition> {
    check_counts(d, t)?;
    let mut order: Vec<usize> = (0..d).collect();
    rng::shuffle(&mut rng::seeded(seed), &mut order);
    let (base, extra) = (d / t, d % t);
    let mut subsets = Vec::with_capacity(t);
    let mut rest = order.as_slice();
    for i in 0..t {
        let (head, tail) = rest.split_at(base + usize::from(i < extra));
        subsets.push(head.to_vec());
        rest = tail;
    }
    FeaturePartition::new(d, subsets)
}

/// Draws `phi` distinct offsets from `1..=phi*T` and builds the spread map.
pub fn spread_assignment(t: usize, phi: usize, seed: u64) -> Result<SpreadMap> {
    if phi == 0 {
        return Err(Error::config("spread degree must be at least 1"));
    }
    if t == 0 {
        return Err(Error::config("submodel count T must be at least 1"));
    }
    let n = phi * t;
    let mut pool: Vec<usize> = (1..=n).collect();
    rng::shuffle(&mut rng::seeded(seed), &mut pool);
    SpreadMap::from_offsets(t, phi, pool[..phi].to_vec())
}

/// Random fine partition into `phi*T` subsets plus its spread map.
///
/// The spread offsets are drawn from a stream seeded with `mix64(seed)` so
/// they are independent of the feature shuffle.
pub fn overlapping_partition(d: usize, t: usize, phi: usize, seed: u64) -> Result<OverlappingPartition> {
    if phi == 0 || t == 0 {
        return Err(Error::config("T and spread degree must both be at least 1"));
    }
    if phi * t > d {
        return Err(Error::config(format!(
            "phi * T = {} exceeds feature count d = {d}; some fine subsets would be empty",
            phi * t
        )));
    }
    let fine = random_partition(d, phi * t, seed)?;
    let spread = spread_assignment(t, phi, rng::mix64(seed))?;
    Ok(OverlappingPartition { fine, spread })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionKind {
    Disjoint,
    Overlapping,
}

/// On-disk partition document. Subsets are 0-based feature indices; for the
/// overlapping kind they are the fine subsets and `offsets` rebuilds the
/// spread map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub format: String,
    pub index_base: u8,
    pub prng: String,
    pub d: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub kind: PartitionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<usize>>,
    pub subsets: Vec<Vec<usize>>,
}

pub const PARTITION_FORMAT: &str = "partcert-partition/1";

impl PartitionFile {
    pub fn from_layout(layout: &FeatureLayout, seed: Option<u64>) -> Self {
        let (kind, t, phi, offsets, subsets) = match layout {
            FeatureLayout::Disjoint(p) => (PartitionKind::Disjoint, p.num_subsets(), None, None, p.subsets().to_vec()),
            FeatureLayout::Overlapping(o) => (
                PartitionKind::Overlapping,
                o.spread.base_submodels(),
                Some(o.spread.spread()),
                Some(o.spread.offsets().to_vec()),
                o.fine.subsets().to_vec(),
            ),
        };
        Self {
            format: PARTITION_FORMAT.to_string(),
            index_base: 0,
            prng: rng::PRNG_ALGORITHM.to_string(),
            d: layout.num_features(),
            t,
            kind,
            phi,
            seed,
            offsets,
            subsets,
        }
    }

    pub fn to_layout(&self) -> Result<FeatureLayout> {
        if self.index_base != 0 {
            return Err(Error::data("partition files must use 0-based indices"));
        }
        let fine = FeaturePartition::new(self.d, self.subsets.clone())?;
        match self.kind {
            PartitionKind::Disjoint => {
                if fine.num_subsets() != self.t {
                    return Err(Error::data(format!(
                        "T = {} but file lists {} subsets",
                        self.t,
                        fine.num_subsets()
                    )));
                }
                Ok(FeatureLayout::Disjoint(fine))
            }
            PartitionKind::Overlapping => {
                let phi = self.phi.ok_or_else(|| Error::data("overlapping partition without phi"))?;
                let offsets = self
                    .offsets
                    .clone()
                    .ok_or_else(|| Error::data("overlapping partition without offsets"))?;
                let spread = SpreadMap::from_offsets(self.t, phi, offsets)?;
                if spread.len() != fine.num_subsets() {
                    return Err(Error::data(format!(
                        "phi * T = {} but file lists {} fine subsets",
                        spread.len(),
                        fine.num_subsets()
                    )));
                }
                Ok(FeatureLayout::Overlapping(OverlappingPartition { fine, spread }))
            }
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}
