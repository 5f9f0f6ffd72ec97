//! End-to-end runs: load, split, partition, train, certify, summarize.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{certify_plurality, certify_runoff_with, certify_topk, tag_label_flip, DpTable, Guarantee, Method};
use crate::data::{Dataset, Targets};
use crate::ensemble::{train_ensemble, Ensemble, TrainingMode};
use crate::error::{Error, Result};
use crate::harness::config::{Decision, ExperimentConfig, PartitionStrategy, Stage, Task, Training};
use crate::harness::csvio::load_csv;
use crate::harness::metrics::{self, CurvePoint};
use crate::overlap::{certify_overlap, OverlapProfile};
use crate::partition::{overlapping_partition, random_partition, strided_partition, FeatureLayout};
use crate::regression::{certify_interval, IntervalRule, RegressionVotes, Robustness};
use crate::rng;

/// One certificate for one test instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    /// Row index within the evaluated file, counting from 0.
    pub instance_id: usize,
    pub method: Method,
    pub guarantee: Guarantee,
    /// Predicted label; for top-k, the true label whose membership is certified.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    /// Median output of a regression ensemble.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub radius: Robustness,
    pub correct: bool,
}

/// Which certificates to compute for each instance.
#[derive(Clone, Debug)]
pub struct CertifyPlan {
    pub decision: Decision,
    pub topk: Vec<usize>,
    pub interval: Option<IntervalRule>,
    dp: DpTable,
}

impl CertifyPlan {
    pub fn new(ensemble: &Ensemble, decision: Decision, topk: Vec<usize>, interval: Option<IntervalRule>) -> Result<Self> {
        let t = ensemble.num_submodels();
        match ensemble.num_labels() {
            Some(labels) => {
                if interval.is_some() {
                    return Err(Error::config("interval rules apply to regression ensembles only"));
                }
                if let Some(&k) = topk.iter().find(|&&k| k == 0 || k >= t || k >= labels) {
                    return Err(Error::config(format!(
                        "top-k needs 1 <= k < min(T, |Y|) = {}, got k = {k}",
                        t.min(labels)
                    )));
                }
                if ensemble.layout().spread_map().is_some() && (decision != Decision::Plurality || !topk.is_empty()) {
                    return Err(Error::config("overlapping partitions certify plurality voting only"));
                }
            }
            None => {
                if interval.is_none() {
                    return Err(Error::config("regression certification needs an interval rule"));
                }
                if decision != Decision::Plurality || !topk.is_empty() {
                    return Err(Error::config("regression certifies the median only"));
                }
            }
        }
        Ok(Self {
            decision,
            topk,
            interval,
            dp: DpTable::new(if decision == Decision::Runoff { t } else { 0 }),
        })
    }

    pub fn from_config(config: &ExperimentConfig, ensemble: &Ensemble) -> Result<Self> {
        Self::new(ensemble, config.decision, config.topk.clone(), config.interval)
    }
}

/// Certificates for instance `instance_id` of `dataset`.
pub fn certify_instance(
    ensemble: &Ensemble,
    plan: &CertifyPlan,
    dataset: &Dataset,
    instance_id: usize,
) -> Result<Vec<InstanceRecord>> {
    let x = dataset.row(instance_id);
    match dataset.targets() {
        Targets::Values(values) => {
            let rule = plan
                .interval
                .ok_or_else(|| Error::config("regression certification needs an interval rule"))?;
            let votes = RegressionVotes::new(ensemble.outputs(x)?)?;
            let cert = certify_interval(&votes, rule.interval(values[instance_id])?)?;
            Ok(vec![InstanceRecord {
                instance_id,
                method: Method::Plurality,
                guarantee: Guarantee::Feature,
                label: None,
                value: Some(cert.median),
                radius: cert.radius,
                correct: cert.radius != Robustness::NegInfinity,
            }])
        }
        Targets::Labels { labels, .. } => {
            let truth = labels[instance_id];
            let logits = ensemble.logit_profile(x)?;
            let votes = logits.vote_profile();
            let mut cert = match (ensemble.layout().spread_map(), plan.decision) {
                (Some(map), _) => certify_overlap(&OverlapProfile::new(votes.clone(), map)?)?,
                (None, Decision::Plurality) => certify_plurality(&votes)?,
                (None, Decision::Runoff) => certify_runoff_with(&votes, &logits, &plan.dp)?,
            };
            let label_flips = matches!(ensemble.mode(), TrainingMode::InstancePartition { .. });
            if label_flips {
                cert = tag_label_flip(cert, ensemble.mode())?;
            }
            let correct = cert.label == truth;
            let mut records = vec![InstanceRecord {
                instance_id,
                method: cert.method,
                guarantee: cert.guarantee,
                label: Some(cert.label),
                value: None,
                radius: if correct { Robustness::Finite(cert.radius) } else { Robustness::NegInfinity },
                correct,
            }];
            for &k in &plan.topk {
                let r = certify_topk(&votes, truth, k)?;
                records.push(InstanceRecord {
                    instance_id,
                    method: Method::TopK(k),
                    guarantee: cert.guarantee,
                    label: Some(truth),
                    value: None,
                    radius: if r >= 0 { Robustness::Finite(r as u32) } else { Robustness::NegInfinity },
                    correct: r >= 0,
                });
            }
            Ok(records)
        }
    }
}

/// Certifies every row of `dataset` in parallel; records keep row order.
pub fn certify_dataset(ensemble: &Ensemble, plan: &CertifyPlan, dataset: &Dataset) -> Result<Vec<InstanceRecord>> {
    let per_row = (0..dataset.n())
        .into_par_iter()
        .map(|i| certify_instance(ensemble, plan, dataset, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_row.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub guarantee: Guarantee,
    pub instances: usize,
    pub accuracy: f64,
    pub median_radius: Robustness,
    pub curve: Vec<CurvePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub psi_max: u32,
    pub records: Vec<InstanceRecord>,
    pub summaries: Vec<MethodSummary>,
}

impl EvaluationReport {
    /// Builds the per-method summaries from the records alone.
    pub fn from_records(records: Vec<InstanceRecord>, psi_max: u32) -> Result<Self> {
        let mut methods: Vec<(Method, Guarantee)> = Vec::new();
        for r in &records {
            if !methods.iter().any(|&(m, _)| m == r.method) {
                methods.push((r.method, r.guarantee));
            }
        }
        let summaries = methods
            .into_iter()
            .map(|(method, guarantee)| {
                let radii: Vec<Robustness> = records
                    .iter()
                    .filter(|r| r.method == method)
                    .map(|r| r.radius)
                    .collect();
                Ok(MethodSummary {
                    method,
                    guarantee,
                    instances: radii.len(),
                    accuracy: metrics::accuracy(&radii),
                    median_radius: metrics::median_certified_robustness(&radii)?,
                    curve: metrics::accuracy_curve(&radii, psi_max),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            psi_max,
            records,
            summaries,
        })
    }

    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    /// Writes `records.jsonl`, `summary.json` and one `curve-<method>.csv`
    /// per method into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("records.jsonl");
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(|e| Error::json(&path, e))?;
            out.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        out.flush().map_err(|e| Error::io(&path, e))?;

        #[derive(Serialize)]
        struct Summary<'a> {
            psi_max: u32,
            methods: &'a [MethodSummary],
        }
        let path = dir.join("summary.json");
        let text = serde_json::to_string_pretty(&Summary {
            psi_max: self.psi_max,
            methods: &self.summaries,
        })
        .map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;

        for s in &self.summaries {
            metrics::write_curve_csv(&dir.join(curve_file_name(s.method)), &s.curve)?;
        }
        Ok(())
    }
}

/// `curve-plurality.csv`, `curve-topk-2.csv`, ...
pub fn curve_file_name(method: Method) -> String {
    let tag = method.to_string().replace('(', "-").replace(')', "");
    format!("curve-{tag}.csv")
}

/// Shuffles row indices with `seed` and returns `(train, test)`, each sorted.
pub fn split_rows(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::data(format!("need at least two rows to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::seeded(seed), &mut order);
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

pub fn build_layout(config: &ExperimentConfig, d: usize, seed: u64) -> Result<FeatureLayout> {
    let t = config.submodels;
    let part_seed = ExperimentConfig::stage_seed(seed, Stage::Partition);
    Ok(match config.partition {
        PartitionStrategy::Strided => FeatureLayout::Disjoint(strided_partition(d, t)?),
        PartitionStrategy::Random => FeatureLayout::Disjoint(random_partition(d, t, part_seed)?),
        PartitionStrategy::Overlapping { spread } => {
            FeatureLayout::Overlapping(overlapping_partition(d, t, spread, part_seed)?)
        }
    })
}

pub fn training_mode(config: &ExperimentConfig, seed: u64) -> TrainingMode {
    match (config.task, config.training) {
        (Task::Regression, _) => TrainingMode::Regression,
        (Task::Classification, Training::Feature) => TrainingMode::FeaturePartition,
        (Task::Classification, Training::Instance) => TrainingMode::InstancePartition {
            hash: config.instance_hash(seed),
        },
    }
}

/// Loaded data split into its training and test parts.
pub struct SplitData {
    pub train: Dataset,
    pub test: Dataset,
    /// Original row index of every test row.
    pub test_rows: Vec<usize>,
}

pub fn load_and_split(config: &ExperimentConfig, seed: u64) -> Result<SplitData> {
    let dataset = load_csv(&config.dataset, &config.schema, config.task.into()).map_err(|e| e.in_stage("load"))?;
    let (train, test) = split_rows(dataset.n(), config.test_fraction, ExperimentConfig::stage_seed(seed, Stage::Split))
        .map_err(|e| e.in_stage("split"))?;
    Ok(SplitData {
        train: dataset.select_rows(&train),
        test: dataset.select_rows(&test),
        test_rows: test,
    })
}

/// Trains the configured ensemble on `train`.
pub fn train_from_config(config: &ExperimentConfig, train: &Dataset, seed: u64) -> Result<Ensemble> {
    let layout = build_layout(config, train.d(), seed).map_err(|e| e.in_stage("partition"))?;
    train_ensemble(train, &layout, &config.learner, training_mode(config, seed), seed).map_err(|e| e.in_stage("train"))
}

/// Runs one configuration end to end. Identical configs and seeds give
/// identical reports.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EvaluationReport> {
    config.validate()?;
    let seed = config.require_seed()?;
    let split = load_and_split(config, seed)?;
    let ensemble = train_from_config(config, &split.train, seed)?;
    let plan = CertifyPlan::from_config(config, &ensemble).map_err(|e| e.in_stage("certify"))?;
    let mut records = certify_dataset(&ensemble, &plan, &split.test).map_err(|e| e.in_stage("certify"))?;
    for r in &mut records {
        r.instance_id = split.test_rows[r.instance_id];
    }
    EvaluationReport::from_records(records, config.psi_max()).map_err(|e| e.in_stage("report"))
}

/// Best certified accuracy per radius across several runs.
pub fn emit_envelope(reports: &[EvaluationReport], method: Method) -> Vec<CurvePoint> {
    let curves: Vec<Vec<CurvePoint>> = reports
        .iter()
        .filter_map(|r| r.summary(method).map(|s| s.curve.clone()))
        .collect();
    metrics::envelope(&curves)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (train, test) = split_rows(10, 0.3, 4).unwrap();
        assert_eq!(test.len(), 3);
        assert_eq!(train.len(), 7);
        assert!(test.iter().all(|i| !train.contains(i)));
        assert_eq!(split_rows(10, 0.3, 4).unwrap(), (train, test));
        assert!(split_rows(1, 0.5, 0).is_err());
        assert_eq!(split_rows(3, 0.01, 0).unwrap().1.len(), 1);
    }

    #[test]
    fn curve_names() {
        assert_eq!(curve_file_name(Method::TopK(2)), "curve-topk-2.csv");
        assert_eq!(curve_file_name(Method::Runoff), "curve-runoff.csv");
    }

    #[test]
    fn summaries_recompute_from_records() {
        let rec = |id, method, radius: Robustness| InstanceRecord {
            instance_id: id,
            method,
            guarantee: Guarantee::Feature,
            label: Some(0),
            value: None,
            radius,
            correct: radius != Robustness::NegInfinity,
        };
        let records = vec![
            rec(0, Method::Plurality, Robustness::Finite(2)),
            rec(0, Method::TopK(2), Robustness::Finite(3)),
            rec(1, Method::Plurality, Robustness::NegInfinity),
            rec(1, Method::TopK(2), Robustness::Finite(1)),
            rec(2, Method::Plurality, Robustness::Finite(0)),
            rec(2, Method::TopK(2), Robustness::NegInfinity),
        ];
        let report = EvaluationReport::from_records(records, 3).unwrap();
        let pl = report.summary(Method::Plurality).unwrap();
        assert_eq!(pl.instances, 3);
        assert_eq!(pl.median_radius, Robustness::Finite(0));
        assert!((pl.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(pl.curve.len(), 4);
        let again = EvaluationReport::from_records(report.records.clone(), 3).unwrap();
        assert_eq!(again, report);
    }
}
