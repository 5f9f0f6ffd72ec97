//! Deterministic submodels that see only their own feature columns.
//!
//! Every family standardizes its columns with the training mean and
//! population standard deviation; a zero-variance column is mapped to 0.
//! Training never draws randomness, so a fixed (data, spec) pair always
//! yields bit-identical parameters.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerFamily {
    MultinomialLogistic,
    NearestCentroid,
    LinearLeastSquares,
}

impl LearnerFamily {
    pub fn is_classifier(self) -> bool {
        !matches!(self, LearnerFamily::LinearLeastSquares)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmodelSpec {
    pub family: LearnerFamily,
    pub learning_rate: f64,
    pub iterations: usize,
    pub ridge: f64,
    /// Kept with the spec for provenance; none of the families draw randomness.
    pub seed: u64,
}

impl SubmodelSpec {
    pub fn new(family: LearnerFamily) -> Self {
        Self {
            family,
            learning_rate: 0.1,
            iterations: 500,
            ridge: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive and finite"));
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(Error::config("ridge coefficient must be non-negative"));
        }
        Ok(())
    }
}

/// What a submodel is trained to predict.
#[derive(Clone, Copy, Debug)]
pub enum TrainingTargets<'a> {
    Labels { labels: &'a [usize], num_labels: usize },
    Values(&'a [f64]),
}

impl TrainingTargets<'_> {
    fn len(&self) -> usize {
        match self {
            TrainingTargets::Labels { labels, .. } => labels.len(),
            TrainingTargets::Values(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Reciprocal standard deviation, 0 for constant columns.
    pub inv_std: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let (mut mean, mut inv_std) = (Vec::new(), Vec::new());
        for col in x.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let sd = var.sqrt();
            mean.push(m);
            inv_std.push(if sd > 0.0 && sd.is_finite() { 1.0 / sd } else { 0.0 });
        }
        Self { mean, inv_std }
    }

    fn apply_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| (x[(r, c)] - self.mean[c]) * self.inv_std[c])
    }

    fn apply(&self, raw: impl Iterator<Item = f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.mean.len(),
            raw.zip(self.mean.iter().zip(&self.inv_std))
                .map(|(v, (m, s))| (v - m) * s),
        )
    }
}

/// Learned parameters for each family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Parameters {
    /// `weights` is row-major `num_labels x k`.
    MultinomialLogistic { weights: Vec<f64>, bias: Vec<f64> },
    /// `None` for classes absent from the training rows.
    NearestCentroid { centroids: Vec<Option<Vec<f64>>> },
    LinearLeastSquares { weights: Vec<f64>, intercept: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedSubmodel {
    /// Width of the full feature vectors this submodel is queried with.
    pub input_dim: usize,
    /// Sorted 0-based feature indices this submodel reads.
    pub features: Vec<usize>,
    pub num_labels: Option<usize>,
    pub standardizer: Standardizer,
    pub parameters: Parameters,
}

fn check_finite(x: &DMatrix<f64>) -> Result<()> {
    if let Some(idx) = x.iter().position(|v| !v.is_finite()) {
        let (r, c) = (idx % x.nrows(), idx / x.nrows());
        return Err(Error::data(format!("non-finite feature value at (row {r}, column {c})")));
    }
    Ok(())
}

/// Trains one submodel on the columns of `features` (full-width indices
/// listed in `feature_subset`, in the same order as `columns`' columns).
pub fn train_submodel(
    spec: &SubmodelSpec,
    input_dim: usize,
    feature_subset: &[usize],
    columns: &DMatrix<f64>,
    targets: TrainingTargets<'_>,
) -> Result<TrainedSubmodel> {
    train_submodel_traced(spec, input_dim, feature_subset, columns, targets).map(|(m, _)| m)
}

/// Like [`train_submodel`], also returning the per-iteration training loss
/// for the logistic family (empty for the closed-form families).
pub fn train_submodel_traced(
    spec: &SubmodelSpec,
    input_dim: usize,
    feature_subset: &[usize],
    columns: &DMatrix<f64>,
    targets: TrainingTargets<'_>,
) -> Result<(TrainedSubmodel, Vec<f64>)> {
    spec.validate()?;
    if columns.nrows() == 0 {
        return Err(Error::Training("empty training set".into()));
    }
    if columns.ncols() != feature_subset.len() {
        return Err(Error::data(format!(
            "{} columns supplied for a {}-feature subset",
            columns.ncols(),
            feature_subset.len()
        )));
    }
    if let Some(&j) = feature_subset.iter().find(|&&j| j >= input_dim) {
        return Err(Error::data(format!("feature {j} outside input width {input_dim}")));
    }
    if feature_subset.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::data("feature subset must be strictly increasing"));
    }
    if targets.len() != columns.nrows() {
        return Err(Error::data(format!(
            "{} rows but {} targets",
            columns.nrows(),
            targets.len()
        )));
    }
    check_finite(columns)?;

    let standardizer = Standardizer::fit(columns);
    let z = standardizer.apply_matrix(columns);
    let (parameters, num_labels, trace) = match (spec.family, targets) {
        (LearnerFamily::MultinomialLogistic, TrainingTargets::Labels { labels, num_labels }) => {
            check_labels(labels, num_labels)?;
            let (p, trace) = fit_logistic(spec, &z, labels, num_labels);
            (p, Some(num_labels), trace)
        }
        (LearnerFamily::NearestCentroid, TrainingTargets::Labels { labels, num_labels }) => {
            check_labels(labels, num_labels)?;
            (fit_centroids(&z, labels, num_labels), Some(num_labels), Vec::new())
        }
        (LearnerFamily::LinearLeastSquares, TrainingTargets::Values(values)) => {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::data("non-finite regression target"));
            }
            (fit_least_squares(spec, &z, values)?, None, Vec::new())
        }
        (family, _) => {
            return Err(Error::config(format!(
                "learner {family:?} does not match the target type"
            )))
        }
    };
    let model = TrainedSubmodel {
        input_dim,
        features: feature_subset.to_vec(),
        num_labels,
        standardizer,
        parameters,
    };
    Ok((model, trace))
}

fn check_labels(labels: &[usize], num_labels: usize) -> Result<()> {
    if num_labels < 2 {
        return Err(Error::config("classification needs at least two labels"));
    }
    if let Some(i) = labels.iter().position(|&y| y >= num_labels) {
        return Err(Error::data(format!("label at row {i} is outside 0..{num_labels}")));
    }
    Ok(())
}

fn softmax_rows(logits: &mut DMatrix<f64>) {
    for mut row in logits.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

fn logistic_loss(probs: &DMatrix<f64>, labels: &[usize], weights: &DMatrix<f64>, ridge: f64) -> f64 {
    let n = labels.len() as f64;
    let nll: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs[(i, y)].max(f64::MIN_POSITIVE).ln())
        .sum();
    nll / n + 0.5 * ridge * weights.norm_squared()
}

/// Full-batch gradient descent on mean cross-entropy plus an L2 penalty on
/// the weights, starting from zero.
fn fit_logistic(spec: &SubmodelSpec, x: &DMatrix<f64>, labels: &[usize], num_labels: usize) -> (Parameters, Vec<f64>) {
    let (n, k) = x.shape();
    let mut weights = DMatrix::<f64>::zeros(num_labels, k);
    let mut bias = DVector::<f64>::zeros(num_labels);
    let mut onehot = DMatrix::<f64>::zeros(n, num_labels);
    for (i, &y) in labels.iter().enumerate() {
        onehot[(i, y)] = 1.0;
    }
    let forward = |w: &DMatrix<f64>, b: &DVector<f64>| {
        let mut z = x * w.transpose();
        for mut row in z.row_iter_mut() {
            row += b.transpose();
        }
        softmax_rows(&mut z);
        z
    };
    let mut trace = Vec::with_capacity(spec.iterations + 1);
    let mut probs = forward(&weights, &bias);
    for _ in 0..spec.iterations {
        trace.push(logistic_loss(&probs, labels, &weights, spec.ridge));
        let residual = &probs - &onehot;
        let grad_w = residual.transpose() * x / n as f64 + &weights * spec.ridge;
        let grad_b = residual.row_sum().transpose() / n as f64;
        weights -= grad_w * spec.learning_rate;
        bias -= grad_b * spec.learning_rate;
        probs = forward(&weights, &bias);
    }
    trace.push(logistic_loss(&probs, labels, &weights, spec.ridge));
    let params = Parameters::MultinomialLogistic {
        weights: weights.transpose().as_slice().to_vec(),
        bias: bias.as_slice().to_vec(),
    };
    (params, trace)
}

fn fit_centroids(x: &DMatrix<f64>, labels: &[usize], num_labels: usize) -> Parameters {
    let k = x.ncols();
    let mut sums = vec![vec![0.0; k]; num_labels];
    let mut counts = vec![0usize; num_labels];
    for (i, &y) in labels.iter().enumerate() {
        counts[y] += 1;
        for (s, v) in sums[y].iter_mut().zip(x.row(i).iter()) {
            *s += v;
        }
    }
    let centroids = sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| (c > 0).then(|| s.into_iter().map(|v| v / c as f64).collect()))
        .collect();
    Parameters::NearestCentroid { centroids }
}

/// Ridge least squares on centred targets; the intercept is the target mean
/// because the columns are standardized. Rank-deficient systems fall back to
/// the minimum-norm solution.
fn fit_least_squares(spec: &SubmodelSpec, x: &DMatrix<f64>, values: &[f64]) -> Result<Parameters> {
    let n = values.len() as f64;
    let intercept = values.iter().sum::<f64>() / n;
    let y = DVector::from_iterator(values.len(), values.iter().map(|v| v - intercept));
    let k = x.ncols();
    let gram = x.transpose() * x + DMatrix::<f64>::identity(k, k) * (spec.ridge * n);
    let rhs = x.transpose() * y;
    let weights = gram
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Training(format!("least squares solve failed: {e}")))?;
    Ok(Parameters::LinearLeastSquares {
        weights: weights.as_slice().to_vec(),
        intercept,
    })
}

impl TrainedSubmodel {
    fn standardized_input(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::data(format!(
                "feature vector has {} entries, expected {}",
                x.len(),
                self.input_dim
            )));
        }
        let raw = self.features.iter().map(|&j| x[j]);
        if self.features.iter().any(|&j| !x[j].is_finite()) {
            return Err(Error::data("non-finite feature value in query"));
        }
        Ok(self.standardizer.apply(raw))
    }

    /// Per-label logits for the full feature vector `x`.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.standardized_input(x)?;
        match &self.parameters {
            Parameters::MultinomialLogistic { weights, bias } => {
                let k = z.len();
                Ok(bias
                    .iter()
                    .enumerate()
                    .map(|(y, b)| b + weights[y * k..(y + 1) * k].iter().zip(z.iter()).map(|(w, v)| w * v).sum::<f64>())
                    .collect())
            }
            Parameters::NearestCentroid { centroids } => Ok(centroids
                .iter()
                .map(|c| match c {
                    Some(c) => -c.iter().zip(z.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
                    None => -f64::MAX,
                })
                .collect()),
            Parameters::LinearLeastSquares { .. } => {
                Err(Error::config("a regression submodel has no logits"))
            }
        }
    }

    /// Predicted label: argmax of the logits, smallest index on ties.
    pub fn predict_label(&self, x: &[f64]) -> Result<usize> {
        self.logits(x).map(|l| argmax(&l))
    }

    /// Real-valued output of a regression submodel.
    pub fn predict_value(&self, x: &[f64]) -> Result<f64> {
        let z = self.standardized_input(x)?;
        match &self.parameters {
            Parameters::LinearLeastSquares { weights, intercept } => {
                Ok(intercept + weights.iter().zip(z.iter()).map(|(w, v)| w * v).sum::<f64>())
            }
            _ => Err(Error::config("a classification submodel has no real-valued output")),
        }
    }
}

/// Index of the largest value, smallest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(values.len(), 1, values)
    }

    #[test]
    fn logistic_separates_one_dimensional_classes() {
        let xs: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let spec = SubmodelSpec::new(LearnerFamily::MultinomialLogistic);
        let (m, trace) = train_submodel_traced(
            &spec,
            1,
            &[0],
            &column(&xs),
            TrainingTargets::Labels { labels: &labels, num_labels: 2 },
        )
        .unwrap();
        for (x, y) in xs.iter().zip(&labels) {
            assert_eq!(m.predict_label(&[*x]).unwrap(), *y);
        }
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn nearest_centroid_picks_closer_class_and_breaks_ties_low() {
        let spec = SubmodelSpec::new(LearnerFamily::NearestCentroid);
        let m = train_submodel(
            &spec,
            1,
            &[0],
            &column(&[0.0, 10.0]),
            TrainingTargets::Labels { labels: &[0, 1], num_labels: 2 },
        )
        .unwrap();
        assert_eq!(m.predict_label(&[1.0]).unwrap(), 0);
        assert_eq!(m.predict_label(&[9.0]).unwrap(), 1);
        let l = m.logits(&[5.0]).unwrap();
        assert_eq!(l[0], l[1]);
        assert_eq!(m.predict_label(&[5.0]).unwrap(), 0);
    }

    #[test]
    fn least_squares_recovers_a_line() {
        let xs = [0.0, 1.0, 2.0, 4.0, 5.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let spec = SubmodelSpec::new(LearnerFamily::LinearLeastSquares);
        let m = train_submodel(&spec, 1, &[0], &column(&xs), TrainingTargets::Values(&ys)).unwrap();
        assert!((m.predict_value(&[3.0]).unwrap() - 6.0).abs() < 1e-6);
    }

    #[test]
    fn only_subset_columns_matter() {
        let spec = SubmodelSpec::new(LearnerFamily::MultinomialLogistic);
        let cols = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 1.0, 0.5, 2.0, -1.0, 3.0, 0.0]);
        let m = train_submodel(
            &spec,
            5,
            &[1, 3],
            &cols,
            TrainingTargets::Labels { labels: &[0, 0, 1, 1], num_labels: 3 },
        )
        .unwrap();
        let a = m.logits(&[9.0, 1.5, -4.0, 0.25, 7.0]).unwrap();
        let b = m.logits(&[-3.0, 1.5, 100.0, 0.25, 0.0]).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn retraining_is_bit_identical() {
        let spec = SubmodelSpec::new(LearnerFamily::MultinomialLogistic);
        let cols = DMatrix::from_row_slice(3, 2, &[0.3, 1.0, 1.7, 0.5, 2.1, -1.0]);
        let targets = TrainingTargets::Labels { labels: &[0, 1, 2], num_labels: 3 };
        let a = train_submodel(&spec, 2, &[0, 1], &cols, targets).unwrap();
        let b = train_submodel(&spec, 2, &[0, 1], &cols, targets).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn error_paths() {
        let spec = SubmodelSpec::new(LearnerFamily::NearestCentroid);
        let empty = DMatrix::<f64>::zeros(0, 1);
        let err = train_submodel(&spec, 1, &[0], &empty, TrainingTargets::Labels { labels: &[], num_labels: 2 });
        assert!(matches!(err, Err(Error::Training(_))));

        let nan = column(&[f64::NAN]);
        let err = train_submodel(&spec, 1, &[0], &nan, TrainingTargets::Labels { labels: &[0], num_labels: 2 });
        assert!(matches!(err, Err(Error::Data(_))));

        let ok = train_submodel(&spec, 2, &[1], &column(&[1.0]), TrainingTargets::Labels { labels: &[0], num_labels: 2 })
            .unwrap();
        assert!(matches!(ok.logits(&[1.0]), Err(Error::Data(_))));
        // Class 1 never appeared: its logit is finite but never wins.
        let l = ok.logits(&[0.0, 1.0]).unwrap();
        assert!(l[1].is_finite() && l[1] < l[0]);
    }

    #[test]
    fn constant_columns_standardize_to_zero() {
        let spec = SubmodelSpec::new(LearnerFamily::LinearLeastSquares);
        let cols = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let m = train_submodel(&spec, 2, &[0, 1], &cols, TrainingTargets::Values(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(m.standardizer.inv_std[1], 0.0);
        assert!((m.predict_value(&[2.0, 123.0]).unwrap() - 2.0).abs() < 1e-9);
    }
}
