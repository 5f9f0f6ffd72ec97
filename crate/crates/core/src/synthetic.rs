//! Seeded synthetic datasets for tests, benchmarks and demos.

use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::rng;

fn normal(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn feature_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

/// Gaussian blobs with unit noise around class centres of scale
/// `separation`. Row `i` belongs to class `i % classes`.
pub fn gaussian_blobs(n: usize, d: usize, classes: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 || d == 0 {
        return Err(Error::argument("blobs need d >= 1 and at least two classes"));
    }
    let mut rng = rng::seeded(seed);
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..d).map(|_| separation * normal(&mut rng)).collect())
        .collect();
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let rows = labels
        .iter()
        .map(|&y| centres[y].iter().map(|c| c + normal(&mut rng)).collect())
        .collect();
    Dataset::new(
        feature_names(d),
        rows,
        Targets::Labels {
            labels,
            names: (0..classes).map(|k| format!("c{k}")).collect(),
        },
    )
}

/// `y = w . x + noise * e` with standard normal `x`, `w` and `e`.
pub fn linear_regression(n: usize, d: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if d == 0 {
        return Err(Error::argument("regression data needs d >= 1"));
    }
    let mut rng = rng::seeded(seed);
    let w: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        let y = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + noise * normal(&mut rng);
        rows.push(x);
        targets.push(y);
    }
    Dataset::new(feature_names(d), rows, Targets::Values(targets))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_deterministic() {
        let a = gaussian_blobs(30, 4, 3, 3.0, 7).unwrap();
        let b = gaussian_blobs(30, 4, 3, 3.0, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gaussian_blobs(30, 4, 3, 3.0, 8).unwrap());
        assert_eq!(a.labels().unwrap()[..4], [0, 1, 2, 0]);
    }

    #[test]
    fn regression_shape() {
        let ds = linear_regression(10, 3, 0.1, 1).unwrap();
        assert_eq!((ds.n(), ds.d()), (10, 3));
        assert!(ds.values().is_some());
    }
}
