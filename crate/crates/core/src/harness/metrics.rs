//! Aggregate robustness metrics over per-instance radii.
//!
//! Misclassified instances carry [`Robustness::NegInfinity`], so every
//! metric here reads correctness off the radius alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::Robustness;

/// Median radius; an even count takes the lower of the two middle values.
pub fn median_certified_robustness(radii: &[Robustness]) -> Result<Robustness> {
    if radii.is_empty() {
        return Err(Error::argument("median of an empty set of radii"));
    }
    let mut sorted = radii.to_vec();
    sorted.sort_unstable();
    Ok(sorted[(sorted.len() - 1) / 2])
}

/// Fraction of instances that are correct with radius at least `psi`.
/// An empty set has accuracy 0.
pub fn certified_accuracy(radii: &[Robustness], psi: u32) -> f64 {
    if radii.is_empty() {
        return 0.0;
    }
    radii.iter().filter(|r| r.reaches(psi)).count() as f64 / radii.len() as f64
}

/// Fraction of correct instances.
pub fn accuracy(radii: &[Robustness]) -> f64 {
    certified_accuracy(radii, 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub psi: u32,
    pub certified_accuracy: f64,
}

/// Certified accuracy at `psi = 0..=psi_max`.
pub fn accuracy_curve(radii: &[Robustness], psi_max: u32) -> Vec<CurvePoint> {
    (0..=psi_max)
        .map(|psi| CurvePoint {
            psi,
            certified_accuracy: certified_accuracy(radii, psi),
        })
        .collect()
}

/// Pointwise maximum over curves on the union of their grids. A curve
/// without a point at some `psi` contributes 0 there.
pub fn envelope(curves: &[Vec<CurvePoint>]) -> Vec<CurvePoint> {
    let mut best = std::collections::BTreeMap::<u32, f64>::new();
    for curve in curves {
        for p in curve {
            let slot = best.entry(p.psi).or_insert(0.0);
            *slot = slot.max(p.certified_accuracy);
        }
    }
    best.into_iter()
        .map(|(psi, certified_accuracy)| CurvePoint { psi, certified_accuracy })
        .collect()
}

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let fail = |e: csv::Error| Error::data(format!("{}: {e}", path.display()));
    let mut writer = csv::Writer::from_path(path).map_err(fail)?;
    for p in curve {
        writer.serialize(p).map_err(fail)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurvePoint>> {
    let fail = |e: csv::Error| Error::data(format!("{}: {e}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(fail)?;
    let curve: Vec<CurvePoint> = reader.deserialize().collect::<Result<_, _>>().map_err(fail)?;
    if let Some(p) = curve.iter().find(|p| !(0.0..=1.0).contains(&p.certified_accuracy)) {
        return Err(Error::data(format!(
            "{}: certified accuracy {} at psi {} outside [0, 1]",
            path.display(),
            p.certified_accuracy,
            p.psi
        )));
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Robustness::{Finite, NegInfinity};

    #[test]
    fn median_examples() {
        assert_eq!(median_certified_robustness(&[NegInfinity, Finite(0), Finite(2)]).unwrap(), Finite(0));
        assert_eq!(median_certified_robustness(&[NegInfinity, NegInfinity]).unwrap(), NegInfinity);
        assert_eq!(
            median_certified_robustness(&[Finite(5), Finite(1), Finite(3), Finite(1)]).unwrap(),
            Finite(1)
        );
        assert!(matches!(median_certified_robustness(&[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn accuracy_examples() {
        let radii = [NegInfinity, Finite(0), Finite(2), Finite(3)];
        assert_eq!(accuracy(&radii), 0.75);
        assert_eq!(certified_accuracy(&radii, 2), 0.5);
        assert_eq!(certified_accuracy(&radii, 4), 0.0);
    }

    #[test]
    fn envelope_of_one_curve_is_itself() {
        let c = accuracy_curve(&[Finite(1), Finite(4), NegInfinity], 5);
        assert_eq!(envelope(std::slice::from_ref(&c)), c);
    }

    #[test]
    fn envelope_fills_missing_points_with_zero() {
        let short = vec![CurvePoint { psi: 0, certified_accuracy: 0.4 }];
        let long = vec![
            CurvePoint { psi: 0, certified_accuracy: 0.3 },
            CurvePoint { psi: 2, certified_accuracy: 0.1 },
        ];
        let e = envelope(&[short, long]);
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].certified_accuracy, 0.4);
        assert_eq!(e[1], CurvePoint { psi: 2, certified_accuracy: 0.1 });
    }

    #[test]
    fn curve_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let c = accuracy_curve(&[Finite(1), Finite(2), NegInfinity], 3);
        write_curve_csv(&path, &c).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("psi,certified_accuracy\n"));
        assert_eq!(read_curve_csv(&path).unwrap(), c);
    }

    fn radius() -> impl Strategy<Value = Robustness> {
        prop_oneof![Just(NegInfinity), (0u32..10).prop_map(Finite)]
    }

    proptest! {
        #[test]
        fn certified_accuracy_is_antitone(radii in prop::collection::vec(radius(), 1..40)) {
            let curve = accuracy_curve(&radii, 12);
            for w in curve.windows(2) {
                prop_assert!(w[1].certified_accuracy <= w[0].certified_accuracy);
            }
        }

        #[test]
        fn envelope_dominates_inputs(a in prop::collection::vec(radius(), 1..20), b in prop::collection::vec(radius(), 1..20)) {
            let ca = accuracy_curve(&a, 6);
            let cb = accuracy_curve(&b, 9);
            let e = envelope(&[ca.clone(), cb.clone()]);
            for p in ca.iter().chain(&cb) {
                let q = e.iter().find(|q| q.psi == p.psi).unwrap();
                prop_assert!(q.certified_accuracy >= p.certified_accuracy);
            }
        }

        #[test]
        fn median_is_an_order_statistic(radii in prop::collection::vec(radius(), 1..30)) {
            let m = median_certified_robustness(&radii).unwrap();
            let below = radii.iter().filter(|&&r| r < m).count();
            let at_most = radii.iter().filter(|&&r| r <= m).count();
            let k = (radii.len() - 1) / 2;
            prop_assert!(below <= k && k < at_most);
        }
    }
}
