//! Experiment configuration in a line-oriented `key = value` format.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may appear at
//! most once; unknown keys are rejected. Relative dataset paths resolve
//! against the directory of the config file.
//!
//! | key | values | default |
//! |-----|--------|---------|
//! | `dataset` | path to a CSV file with a header row | required |
//! | `target` | name of the label or target column | required |
//! | `delimiter` | one character, or `tab` | `,` |
//! | `task` | `classification`, `regression` | `classification` |
//! | `partition` | `strided`, `random`, `overlapping` | `random` |
//! | `submodels` | `T >= 1` | required |
//! | `spread` | spread degree for `overlapping` | required there |
//! | `learner` | `multinomial-logistic`, `nearest-centroid`, `linear-least-squares` | by task |
//! | `learning_rate`, `iterations`, `ridge` | learner hyperparameters | `0.1`, `500`, `0` |
//! | `training` | `feature`, `instance` | `feature` |
//! | `instance_hash` | `row-modulo`, `seeded` | `row-modulo` |
//! | `decision` | `plurality`, `runoff` | `plurality` |
//! | `topk` | comma-separated list of `k` | empty |
//! | `interval` | `absolute:XI` or `relative:XI` (regression) | required for regression |
//! | `test_fraction` | in `(0, 1)` | `0.2` |
//! | `psi_max` | largest radius on the accuracy curve | `T` |
//! | `seed` | unsigned 64-bit seed | required to run |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::ensemble::InstanceHash;
use crate::error::{Error, Result};
use crate::learners::{LearnerFamily, SubmodelSpec};
use crate::regression::IntervalRule;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PartitionStrategy {
    Strided,
    Random,
    Overlapping { spread: usize },
}

impl PartitionStrategy {
    pub fn is_randomized(self) -> bool {
        !matches!(self, PartitionStrategy::Strided)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Plurality,
    Runoff,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceHashKind {
    RowModulo,
    Seeded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Training {
    Feature,
    Instance,
}

/// Column layout of a CSV dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CsvSchema {
    pub target: String,
    pub delimiter: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub schema: CsvSchema,
    pub task: Task,
    pub partition: PartitionStrategy,
    pub submodels: usize,
    pub learner: SubmodelSpec,
    pub training: Training,
    pub instance_hash: InstanceHashKind,
    pub decision: Decision,
    pub topk: Vec<usize>,
    pub interval: Option<IntervalRule>,
    pub test_fraction: f64,
    pub psi_max: Option<u32>,
    pub seed: Option<u64>,
}

const KEYS: &[&str] = &[
    "dataset",
    "target",
    "delimiter",
    "task",
    "partition",
    "submodels",
    "spread",
    "learner",
    "learning_rate",
    "iterations",
    "ridge",
    "training",
    "instance_hash",
    "decision",
    "topk",
    "interval",
    "test_fraction",
    "psi_max",
    "seed",
];

/// Raw `key = value` pairs with the line each came from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", i + 1)))?;
            kv.insert(key.trim(), value.trim(), i + 1)?;
        }
        Ok(kv)
    }

    fn insert(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::config(format!("line {line}: unknown key `{key}`")));
        }
        if let Some((first, _)) = self.entries.get(key) {
            return Err(Error::config(format!("line {line}: `{key}` already set on line {first}")));
        }
        self.entries.insert(key.to_string(), (line, value.to_string()));
        Ok(())
    }

    /// Sets or replaces a key, as command-line overrides do.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.entries.remove(key);
        self.insert(key, value, 0)
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn get<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => parse(v).map(Some).ok_or_else(|| {
                let at = if *line == 0 { "override".to_string() } else { format!("line {line}") };
                Error::config(format!("{at}: invalid value `{v}` for `{key}`"))
            }),
        }
    }

    fn require<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<T> {
        self.get(key, parse)?
            .ok_or_else(|| Error::config(format!("missing required key `{key}`")))
    }
}

fn parse_delimiter(s: &str) -> Option<u8> {
    match s {
        "tab" => Some(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Some(s.as_bytes()[0]),
        _ => None,
    }
}

fn parse_interval(s: &str) -> Option<IntervalRule> {
    let (kind, xi) = s.split_once(':')?;
    let xi: f64 = xi.trim().parse().ok()?;
    match kind.trim() {
        "absolute" => Some(IntervalRule::Absolute { xi }),
        "relative" => Some(IntervalRule::Relative { xi }),
        _ => None,
    }
}

fn parse_list(s: &str) -> Option<Vec<usize>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(|k| k.trim().parse().ok()).collect()
}

impl ExperimentConfig {
    /// Reads a config file; a relative `dataset` resolves next to it.
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with(path, &[])
    }

    /// Like [`ExperimentConfig::load`], then applies `key=value` overrides.
    pub fn load_with(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut kv = KeyValues::parse(&text)?;
        for (k, v) in overrides {
            kv.set(k, v)?;
        }
        let mut config = Self::from_key_values(&kv)?;
        if config.dataset.is_relative() && kv.entries.get("dataset").is_some_and(|(line, _)| *line > 0) {
            if let Some(dir) = path.parent() {
                config.dataset = dir.join(&config.dataset);
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_key_values(&KeyValues::parse(text)?)
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let task = kv
            .get("task", |s| match s {
                "classification" => Some(Task::Classification),
                "regression" => Some(Task::Regression),
                _ => None,
            })?
            .unwrap_or(Task::Classification);
        let spread = kv.get("spread", |s| s.parse::<usize>().ok())?;
        let partition = kv
            .get("partition", |s| match s {
                "strided" => Some(PartitionStrategy::Strided),
                "random" => Some(PartitionStrategy::Random),
                "overlapping" => Some(PartitionStrategy::Overlapping { spread: 0 }),
                _ => None,
            })?
            .unwrap_or(PartitionStrategy::Random);
        let partition = match (partition, spread) {
            (PartitionStrategy::Overlapping { .. }, Some(spread)) => PartitionStrategy::Overlapping { spread },
            (PartitionStrategy::Overlapping { .. }, None) => {
                return Err(Error::config("overlapping partitions need `spread`"))
            }
            (_, Some(_)) => return Err(Error::config("`spread` only applies to overlapping partitions")),
            (p, None) => p,
        };
        let default_family = match task {
            Task::Classification => LearnerFamily::MultinomialLogistic,
            Task::Regression => LearnerFamily::LinearLeastSquares,
        };
        let family = kv
            .get("learner", |s| serde_json::from_value(serde_json::Value::String(s.into())).ok())?
            .unwrap_or(default_family);
        let mut learner = SubmodelSpec::new(family);
        if let Some(lr) = kv.get("learning_rate", |s| s.parse().ok())? {
            learner.learning_rate = lr;
        }
        if let Some(it) = kv.get("iterations", |s| s.parse().ok())? {
            learner.iterations = it;
        }
        if let Some(r) = kv.get("ridge", |s| s.parse().ok())? {
            learner.ridge = r;
        }
        let config = Self {
            dataset: PathBuf::from(kv.require("dataset", |s| Some(s.to_string()))?),
            schema: CsvSchema {
                target: kv.require("target", |s| Some(s.to_string()))?,
                delimiter: kv.get("delimiter", parse_delimiter)?.unwrap_or(b','),
            },
            task,
            partition,
            submodels: kv.require("submodels", |s| s.parse().ok())?,
            learner,
            training: kv
                .get("training", |s| match s {
                    "feature" => Some(Training::Feature),
                    "instance" => Some(Training::Instance),
                    _ => None,
                })?
                .unwrap_or(Training::Feature),
            instance_hash: kv
                .get("instance_hash", |s| match s {
                    "row-modulo" => Some(InstanceHashKind::RowModulo),
                    "seeded" => Some(InstanceHashKind::Seeded),
                    _ => None,
                })?
                .unwrap_or(InstanceHashKind::RowModulo),
            decision: kv
                .get("decision", |s| match s {
                    "plurality" => Some(Decision::Plurality),
                    "runoff" => Some(Decision::Runoff),
                    _ => None,
                })?
                .unwrap_or(Decision::Plurality),
            topk: kv.get("topk", parse_list)?.unwrap_or_default(),
            interval: kv.get("interval", parse_interval)?,
            test_fraction: kv.get("test_fraction", |s| s.parse().ok())?.unwrap_or(0.2),
            psi_max: kv.get("psi_max", |s| s.parse().ok())?,
            seed: kv.get("seed", |s| s.parse().ok())?,
        };
        if kv.raw("instance_hash").is_some() && config.training != Training::Instance {
            return Err(Error::config("`instance_hash` only applies to instance training"));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.submodels;
        if t == 0 {
            return Err(Error::config("`submodels` must be at least 1"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config("`test_fraction` must lie strictly between 0 and 1"));
        }
        self.learner.validate()?;
        if let Some(rule) = self.interval {
            rule.validate()?;
        }
        let overlapping = matches!(self.partition, PartitionStrategy::Overlapping { .. });
        if let PartitionStrategy::Overlapping { spread } = self.partition {
            if spread == 0 {
                return Err(Error::config("`spread` must be at least 1"));
            }
        }
        match self.task {
            Task::Regression => {
                if t % 2 == 0 {
                    return Err(Error::config(format!("regression needs an odd `submodels`, got {t}")));
                }
                if self.learner.family.is_classifier() {
                    return Err(Error::config("regression needs `learner = linear-least-squares`"));
                }
                if self.decision != Decision::Plurality || !self.topk.is_empty() {
                    return Err(Error::config("regression certifies the median only; drop `decision` and `topk`"));
                }
                if self.interval.is_none() {
                    return Err(Error::config("regression needs an `interval` rule"));
                }
                if overlapping || self.training == Training::Instance {
                    return Err(Error::config("regression supports disjoint feature training only"));
                }
            }
            Task::Classification => {
                if !self.learner.family.is_classifier() {
                    return Err(Error::config("classification needs a classifier learner"));
                }
                if self.interval.is_some() {
                    return Err(Error::config("`interval` only applies to regression"));
                }
                if let Some(&k) = self.topk.iter().find(|&&k| k == 0 || k >= t) {
                    return Err(Error::config(format!("top-k needs 1 <= k < submodels, got k = {k}")));
                }
                if overlapping && (self.decision != Decision::Plurality || !self.topk.is_empty()) {
                    return Err(Error::config("overlapping partitions certify plurality voting only"));
                }
                if overlapping && self.training == Training::Instance {
                    return Err(Error::config("instance training needs a disjoint partition"));
                }
            }
        }
        Ok(())
    }

    /// The seed, which every run needs for the train/test split.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::config("a seed is required; set `seed` or pass --seed"))
    }

    /// Independent seeds for each randomized stage.
    pub fn stage_seed(seed: u64, stage: Stage) -> u64 {
        rng::mix64(seed ^ rng::mix64(stage as u64 + 1))
    }

    pub fn instance_hash(&self, seed: u64) -> InstanceHash {
        match self.instance_hash {
            InstanceHashKind::RowModulo => InstanceHash::RowModulo,
            InstanceHashKind::Seeded => InstanceHash::Seeded {
                seed: Self::stage_seed(seed, Stage::InstanceHash),
            },
        }
    }

    pub fn psi_max(&self) -> u32 {
        self.psi_max.unwrap_or(self.submodels as u32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Split,
    Partition,
    InstanceHash,
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
# toy run
dataset = data.csv
target = label
submodels = 5
seed = 7
";

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(c.task, Task::Classification);
        assert_eq!(c.partition, PartitionStrategy::Random);
        assert_eq!(c.learner.family, LearnerFamily::MultinomialLogistic);
        assert_eq!(c.schema.delimiter, b',');
        assert_eq!(c.psi_max(), 5);
        assert_eq!(c.require_seed().unwrap(), 7);
    }

    #[test]
    fn full_classification_config() {
        let text = format!(
            "{BASE}partition = strided\ndecision = runoff\ntopk = 1, 2\nlearner = nearest-centroid\n\
             delimiter = tab\ntraining = instance\ninstance_hash = seeded\ntest_fraction = 0.5\n"
        );
        let c = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(c.decision, Decision::Runoff);
        assert_eq!(c.topk, vec![1, 2]);
        assert_eq!(c.schema.delimiter, b'\t');
        assert_eq!(c.learner.family, LearnerFamily::NearestCentroid);
        assert!(matches!(c.instance_hash(1), InstanceHash::Seeded { .. }));
    }

    #[test]
    fn regression_rules() {
        let ok = "dataset = d.csv\ntarget = y\ntask = regression\nsubmodels = 5\ninterval = relative:0.15\n";
        let c = ExperimentConfig::parse(ok).unwrap();
        assert_eq!(c.interval, Some(IntervalRule::Relative { xi: 0.15 }));
        assert_eq!(c.learner.family, LearnerFamily::LinearLeastSquares);
        let even = ok.replace("submodels = 5", "submodels = 4");
        assert!(matches!(ExperimentConfig::parse(&even), Err(Error::InvalidConfiguration(_))));
        let runoff = format!("{ok}decision = runoff\n");
        assert!(ExperimentConfig::parse(&runoff).is_err());
        let no_interval = ok.replace("interval = relative:0.15\n", "");
        assert!(ExperimentConfig::parse(&no_interval).is_err());
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in [
            format!("{BASE}colour = blue\n"),
            format!("{BASE}seed = 8\n"),
            format!("{BASE}submodels\n"),
            format!("{BASE}topk = 5\n"),
            format!("{BASE}partition = overlapping\n"),
            format!("{BASE}spread = 2\n"),
            format!("{BASE}test_fraction = 1.5\n"),
            format!("{BASE}instance_hash = seeded\n"),
            BASE.replace("target = label\n", ""),
        ] {
            let err = ExperimentConfig::parse(&bad).unwrap_err();
            assert!(matches!(err, Error::InvalidConfiguration(_)), "{bad}: {err}");
        }
    }

    #[test]
    fn overrides_replace_values() {
        let mut kv = KeyValues::parse(BASE).unwrap();
        kv.set("submodels", "9").unwrap();
        assert_eq!(ExperimentConfig::from_key_values(&kv).unwrap().submodels, 9);
        assert!(kv.set("nope", "1").is_err());
    }

    #[test]
    fn stage_seeds_differ() {
        let a = ExperimentConfig::stage_seed(1, Stage::Split);
        let b = ExperimentConfig::stage_seed(1, Stage::Partition);
        assert_ne!(a, b);
    }
}
