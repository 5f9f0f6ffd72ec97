//! In-memory tabular datasets.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training or evaluation targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    /// Class indices in `0..names.len()`; `names[k]` is the label's text.
    Labels { labels: Vec<usize>, names: Vec<String> },
    Values(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Labels { labels, .. } => labels.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_labels(&self) -> Option<usize> {
        match self {
            Targets::Labels { names, .. } => Some(names.len()),
            Targets::Values(_) => None,
        }
    }

    fn select(&self, rows: &[usize]) -> Targets {
        match self {
            Targets::Labels { labels, names } => Targets::Labels {
                labels: rows.iter().map(|&i| labels[i]).collect(),
                names: names.clone(),
            },
            Targets::Values(v) => Targets::Values(rows.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// Row-major feature matrix with one target per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    features: Vec<f64>,
    targets: Targets,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, targets: Targets) -> Result<Self> {
        let d = feature_names.len();
        if d == 0 {
            return Err(Error::data("dataset has no feature columns"));
        }
        if rows.len() != targets.len() {
            return Err(Error::data(format!(
                "{} feature rows but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        let mut features = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != d {
                return Err(Error::data(format!("row {i} has {} features, expected {d}", row.len())));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::data(format!("non-finite value at (row {i}, column {j})")));
            }
            features.extend(row);
        }
        match &targets {
            Targets::Labels { labels, names } => {
                if let Some(i) = labels.iter().position(|&y| y >= names.len()) {
                    return Err(Error::data(format!("row {i} has label index out of range")));
                }
            }
            Targets::Values(v) => {
                if let Some(i) = v.iter().position(|t| !t.is_finite()) {
                    return Err(Error::data(format!("non-finite target at row {i}")));
                }
            }
        }
        Ok(Self {
            feature_names,
            features,
            targets,
        })
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    pub fn d(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.d();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.d())
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let d = self.d();
        self.features[i * d + j] = value;
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Labels { labels, .. } => Some(labels),
            Targets::Values(_) => None,
        }
    }

    pub fn labels_mut(&mut self) -> Option<&mut Vec<usize>> {
        match &mut self.targets {
            Targets::Labels { labels, .. } => Some(labels),
            Targets::Values(_) => None,
        }
    }

    pub fn values(&self) -> Option<&[f64]> {
        match &self.targets {
            Targets::Values(v) => Some(v),
            Targets::Labels { .. } => None,
        }
    }

    /// Sub-dataset made of `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let d = self.d();
        let mut features = Vec::with_capacity(rows.len() * d);
        for &i in rows {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            feature_names: self.feature_names.clone(),
            features,
            targets: self.targets.select(rows),
        }
    }

    /// The `rows x columns` sub-matrix.
    pub fn restrict(&self, rows: &[usize], columns: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), columns.len(), |r, c| self.row(rows[r])[columns[c]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]],
            Targets::Labels {
                labels: vec![0, 1, 0],
                names: vec!["x".into(), "y".into()],
            },
        )
        .unwrap()
    }

    #[test]
    fn shapes_and_restriction() {
        let ds = toy();
        assert_eq!((ds.n(), ds.d()), (3, 2));
        let m = ds.restrict(&[2, 0], &[1]);
        assert_eq!(m.shape(), (2, 1));
        assert_eq!(m[(0, 0)], 6.0);
        assert_eq!(m[(1, 0)], 2.0);
        let sub = ds.select_rows(&[1]);
        assert_eq!(sub.row(0), &[3.0, 4.0]);
        assert_eq!(sub.labels().unwrap(), &[1]);
    }

    #[test]
    fn rejects_non_finite_and_ragged_rows() {
        let bad = Dataset::new(
            vec!["a".into()],
            vec![vec![f64::NAN]],
            Targets::Values(vec![1.0]),
        );
        assert!(matches!(bad, Err(Error::Data(_))));
        let ragged = Dataset::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0]],
            Targets::Values(vec![1.0]),
        );
        assert!(matches!(ragged, Err(Error::Data(_))));
    }
}
