//! Ensembles of restricted submodels and the per-instance vote and logit
//! profiles that certification works from.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::learners::{self, argmax, SubmodelSpec, TrainedSubmodel, TrainingTargets};
use crate::partition::{FeatureLayout, PartitionFile};
use crate::rng;

/// Submodel label votes for one instance.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VoteProfile {
    votes: Vec<usize>,
    counts: Vec<usize>,
}

impl VoteProfile {
    pub fn from_votes(votes: Vec<usize>, num_labels: usize) -> Result<Self> {
        if num_labels == 0 {
            return Err(Error::argument("a vote profile needs at least one label"));
        }
        let mut counts = vec![0; num_labels];
        for (t, &v) in votes.iter().enumerate() {
            if v >= num_labels {
                return Err(Error::argument(format!("submodel {t} voted {v}, outside 0..{num_labels}")));
            }
            counts[v] += 1;
        }
        Ok(Self { votes, counts })
    }

    /// Profile with the given per-label counts; votes are listed label by label.
    pub fn from_counts(counts: &[usize]) -> Self {
        let votes = counts
            .iter()
            .enumerate()
            .flat_map(|(y, &c)| std::iter::repeat(y).take(c))
            .collect();
        Self {
            votes,
            counts: counts.to_vec(),
        }
    }

    pub fn num_submodels(&self) -> usize {
        self.votes.len()
    }

    pub fn num_labels(&self) -> usize {
        self.counts.len()
    }

    pub fn votes(&self) -> &[usize] {
        &self.votes
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn count(&self, y: usize) -> usize {
        self.counts[y]
    }

    /// Labels ordered by vote count, highest first, smaller index first on ties.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.counts.len()).collect();
        order.sort_by(|&a, &b| self.counts[b].cmp(&self.counts[a]).then(a.cmp(&b)));
        order
    }

    pub fn plurality(&self) -> usize {
        let mut best = 0;
        for y in 1..self.counts.len() {
            if self.counts[y] > self.counts[best] {
                best = y;
            }
        }
        best
    }

    /// Most-voted label other than the plurality label; needs two labels.
    pub fn runner_up(&self) -> usize {
        let pl = self.plurality();
        let mut best: Option<usize> = None;
        for y in (0..self.counts.len()).filter(|&y| y != pl) {
            if best.map_or(true, |b| self.counts[y] > self.counts[b]) {
                best = Some(y);
            }
        }
        best.expect("runner-up needs at least two labels")
    }
}

/// Per-submodel logit vectors for one instance, `T x |Y|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitProfile {
    logits: Vec<Vec<f64>>,
}

impl LogitProfile {
    pub fn new(logits: Vec<Vec<f64>>) -> Result<Self> {
        let width = logits.first().map_or(0, Vec::len);
        for (t, row) in logits.iter().enumerate() {
            if row.len() != width {
                return Err(Error::argument(format!("submodel {t} has {} logits, expected {width}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::argument(format!("submodel {t} has a non-finite logit")));
            }
        }
        Ok(Self { logits })
    }

    /// Logits from rank vectors: rank 0 is the most preferred label and equal
    /// ranks tie.
    pub fn from_ranks(ranks: &[Vec<usize>]) -> Result<Self> {
        Self::new(
            ranks
                .iter()
                .map(|r| r.iter().map(|&k| -(k as f64)).collect())
                .collect(),
        )
    }

    pub fn num_submodels(&self) -> usize {
        self.logits.len()
    }

    pub fn num_labels(&self) -> usize {
        self.logits.first().map_or(0, Vec::len)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.logits
    }

    /// Number of submodels whose logit for `y` is strictly above that of `other`.
    pub fn count_logit(&self, y: usize, other: usize) -> usize {
        self.logits.iter().filter(|l| l[y] > l[other]).count()
    }

    /// Each submodel's argmax label.
    pub fn vote_profile(&self) -> VoteProfile {
        let votes = self.logits.iter().map(|l| argmax(l)).collect();
        VoteProfile::from_votes(votes, self.num_labels().max(1)).expect("argmax stays in range")
    }
}

/// Plurality prediction: the most-voted label, smallest index on ties.
pub fn predict_plurality(votes: &VoteProfile) -> usize {
    votes.plurality()
}

/// Two-round run-off: the top two vote getters meet in a pairwise logit vote.
pub fn predict_runoff(votes: &VoteProfile, logits: &LogitProfile) -> Result<usize> {
    if votes.num_labels() < 2 {
        return Err(Error::argument("run-off needs at least two labels"));
    }
    let (pl, ru) = (votes.plurality(), votes.runner_up());
    let gap = crate::certify::gap_logit(logits, pl, ru)?;
    Ok(if gap >= 0 { pl } else { ru })
}

/// How training rows reach the submodels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstanceHash {
    /// Row `i` goes to submodel `i mod T`.
    RowModulo,
    /// Row `i` goes to submodel `mix64(seed ^ mix64(i)) mod T`.
    Seeded { seed: u64 },
}

impl InstanceHash {
    pub fn assign(&self, row: usize, num_submodels: usize) -> usize {
        match *self {
            InstanceHash::RowModulo => row % num_submodels,
            InstanceHash::Seeded { seed } => {
                (rng::mix64(seed ^ rng::mix64(row as u64)) % num_submodels as u64) as usize
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum TrainingMode {
    /// Every submodel trains on all rows, restricted to its features.
    FeaturePartition,
    /// Every submodel trains only on the rows the instance hash gives it.
    InstancePartition { hash: InstanceHash },
    /// Real-valued submodels aggregated by the median; `T` must be odd.
    Regression,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    layout: FeatureLayout,
    submodels: Vec<TrainedSubmodel>,
    mode: TrainingMode,
    spec: SubmodelSpec,
    feature_names: Vec<String>,
    label_names: Option<Vec<String>>,
    seed: u64,
}

/// Trains one submodel per feature set in `layout`. Submodels train in
/// parallel; the result does not depend on scheduling.
pub fn train_ensemble(
    dataset: &Dataset,
    layout: &FeatureLayout,
    spec: &SubmodelSpec,
    mode: TrainingMode,
    seed: u64,
) -> Result<Ensemble> {
    if layout.num_features() != dataset.d() {
        return Err(Error::data(format!(
            "partition covers {} features but the dataset has {}",
            layout.num_features(),
            dataset.d()
        )));
    }
    let t = layout.num_submodels();
    match (mode, dataset.targets()) {
        (TrainingMode::Regression, Targets::Values(_)) => {
            if t % 2 == 0 {
                return Err(Error::config(format!("regression needs an odd submodel count, got {t}")));
            }
            if spec.family.is_classifier() {
                return Err(Error::config("regression needs the linear-least-squares learner"));
            }
        }
        (TrainingMode::Regression, Targets::Labels { .. }) => {
            return Err(Error::config("regression mode needs real-valued targets"))
        }
        (_, Targets::Values(_)) => {
            return Err(Error::config("classification modes need categorical labels"))
        }
        (_, Targets::Labels { .. }) => {
            if !spec.family.is_classifier() {
                return Err(Error::config("classification needs a classifier learner"));
            }
        }
    }

    let rows_for: Vec<Vec<usize>> = match mode {
        TrainingMode::InstancePartition { hash } => {
            let mut rows = vec![Vec::new(); t];
            for i in 0..dataset.n() {
                rows[hash.assign(i, t)].push(i);
            }
            if let Some(empty) = rows.iter().position(Vec::is_empty) {
                return Err(Error::Training(format!(
                    "submodel {empty} received no training rows under instance partitioning"
                )));
            }
            rows
        }
        _ => vec![(0..dataset.n()).collect(); t],
    };

    let feature_sets = layout.feature_sets();
    let submodels = feature_sets
        .par_iter()
        .zip(rows_for.par_iter())
        .enumerate()
        .map(|(s, (features, rows))| {
            let columns = dataset.restrict(rows, features);
            let sub = dataset.select_rows(rows);
            let targets = match sub.targets() {
                Targets::Labels { labels, names } => TrainingTargets::Labels {
                    labels,
                    num_labels: names.len(),
                },
                Targets::Values(v) => TrainingTargets::Values(v),
            };
            learners::train_submodel(spec, dataset.d(), features, &columns, targets)
                .map_err(|e| match e {
                    Error::Training(msg) => Error::Training(format!("submodel {s}: {msg}")),
                    other => other,
                })
        })
        .collect::<Result<Vec<_>>>()?;

    let label_names = match dataset.targets() {
        Targets::Labels { names, .. } => Some(names.clone()),
        Targets::Values(_) => None,
    };
    Ok(Ensemble {
        layout: layout.clone(),
        submodels,
        mode,
        spec: spec.clone(),
        feature_names: dataset.feature_names().to_vec(),
        label_names,
        seed,
    })
}

impl Ensemble {
    pub fn num_submodels(&self) -> usize {
        self.submodels.len()
    }

    pub fn num_labels(&self) -> Option<usize> {
        self.label_names.as_ref().map(Vec::len)
    }

    pub fn label_names(&self) -> Option<&[String]> {
        self.label_names.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn submodels(&self) -> &[TrainedSubmodel] {
        &self.submodels
    }

    pub fn mode(&self) -> TrainingMode {
        self.mode
    }

    pub fn spec(&self) -> &SubmodelSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn logit_profile(&self, x: &[f64]) -> Result<LogitProfile> {
        let rows = self
            .submodels
            .iter()
            .map(|m| m.logits(x))
            .collect::<Result<Vec<_>>>()?;
        LogitProfile::new(rows)
    }

    pub fn vote_profile(&self, x: &[f64]) -> Result<VoteProfile> {
        Ok(self.logit_profile(x)?.vote_profile())
    }

    /// Real-valued outputs of a regression ensemble.
    pub fn outputs(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.submodels.iter().map(|m| m.predict_value(x)).collect()
    }

    /// Median of the submodel outputs.
    pub fn predict_value(&self, x: &[f64]) -> Result<f64> {
        crate::regression::median_decision(&self.outputs(x)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        PartitionFile::from_layout(&self.layout, None).write(&dir.join(PARTITION_FILE))?;
        let mut files = Vec::with_capacity(self.submodels.len());
        for (t, m) in self.submodels.iter().enumerate() {
            let name = format!("submodel_{t:04}.json");
            write_json(&dir.join(&name), m)?;
            files.push(name);
        }
        let manifest = Manifest {
            format: BUNDLE_FORMAT.to_string(),
            partition: PARTITION_FILE.to_string(),
            mode: self.mode,
            num_labels: self.num_labels(),
            label_names: self.label_names.clone(),
            feature_names: self.feature_names.clone(),
            seed: self.seed,
            learner: self.spec.clone(),
            submodels: files,
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
        if manifest.format != BUNDLE_FORMAT {
            return Err(Error::data(format!("unsupported bundle format {}", manifest.format)));
        }
        let layout = PartitionFile::read(&dir.join(&manifest.partition))?.to_layout()?;
        let submodels = manifest
            .submodels
            .iter()
            .map(|f| read_json::<TrainedSubmodel>(&dir.join(f)))
            .collect::<Result<Vec<_>>>()?;
        if submodels.len() != layout.num_submodels() {
            return Err(Error::data("bundle submodel count does not match its partition"));
        }
        for (s, (m, features)) in submodels.iter().zip(layout.feature_sets()).enumerate() {
            if m.features != features {
                return Err(Error::data(format!("submodel {s} features disagree with the partition")));
            }
        }
        Ok(Self {
            layout,
            submodels,
            mode: manifest.mode,
            spec: manifest.learner,
            feature_names: manifest.feature_names,
            label_names: manifest.label_names,
            seed: manifest.seed,
        })
    }
}

pub const BUNDLE_FORMAT: &str = "partcert-ensemble/1";
const MANIFEST_FILE: &str = "manifest.json";
const PARTITION_FILE: &str = "partition.json";

/// `manifest.json` inside an ensemble bundle directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub partition: String,
    pub mode: TrainingMode,
    pub num_labels: Option<usize>,
    pub label_names: Option<Vec<String>>,
    pub feature_names: Vec<String>,
    pub seed: u64,
    pub learner: SubmodelSpec,
    pub submodels: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}
