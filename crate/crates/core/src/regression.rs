//! Certified regression through the median of submodel outputs.
//!
//! For an odd number of outputs, `median <= theta` holds exactly when the
//! majority of outputs are `<= theta`, so each side of an interval reduces
//! to a two-label plurality certificate.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::certify::certify_plurality;
use crate::ensemble::VoteProfile;
use crate::error::{Error, Result};

/// A certified radius extended with a failure sentinel below every radius.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Robustness {
    /// Wrong prediction, or a regression output outside its interval.
    NegInfinity,
    Finite(u32),
}

impl Robustness {
    pub fn finite(self) -> Option<u32> {
        match self {
            Robustness::NegInfinity => None,
            Robustness::Finite(r) => Some(r),
        }
    }

    /// Whether the instance counts toward certified accuracy at `psi`.
    pub fn reaches(self, psi: u32) -> bool {
        matches!(self, Robustness::Finite(r) if r >= psi)
    }
}

impl fmt::Display for Robustness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Robustness::NegInfinity => f.write_str("-inf"),
            Robustness::Finite(r) => write!(f, "{r}"),
        }
    }
}

impl Serialize for Robustness {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Robustness::NegInfinity => serializer.serialize_str("-inf"),
            Robustness::Finite(r) => serializer.serialize_u32(*r),
        }
    }
}

impl<'de> Deserialize<'de> for Robustness {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Finite(u32),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Finite(r) => Ok(Robustness::Finite(r)),
            Raw::Text(s) if s == "-inf" => Ok(Robustness::NegInfinity),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("invalid radius `{s}`"))),
        }
    }
}

/// An odd-sized multiset of finite submodel outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionVotes {
    values: Vec<f64>,
}

impl RegressionVotes {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() % 2 == 0 {
            return Err(Error::config(format!(
                "median decision needs an odd number of outputs, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::argument(format!("output {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn median(&self) -> f64 {
        let mut sorted = self.values.clone();
        let mid = sorted.len() / 2;
        *sorted.select_nth_unstable_by(mid, f64::total_cmp).1
    }
}

/// Middle order statistic of an odd number of outputs.
pub fn median_decision(values: &[f64]) -> Result<f64> {
    Ok(RegressionVotes::new(values.to_vec())?.median())
}

/// Two-label profile: label 0 for `v <= theta`, label 1 for `v > theta`.
pub fn binarize(values: &[f64], theta: f64) -> VoteProfile {
    let votes = values.iter().map(|&v| usize::from(v > theta)).collect();
    VoteProfile::from_votes(votes, 2).expect("binary votes are in range")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalSpec {
    pub lower: f64,
    pub upper: f64,
}

impl IntervalSpec {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower > upper {
            return Err(Error::argument(format!("invalid interval [{lower}, {upper}]")));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// How an interval is derived from the true target `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum IntervalRule {
    /// `y - xi ..= y + xi`.
    Absolute { xi: f64 },
    /// `y - xi*|y| ..= y + xi*|y|`.
    Relative { xi: f64 },
}

impl IntervalRule {
    pub fn validate(&self) -> Result<()> {
        let (IntervalRule::Absolute { xi } | IntervalRule::Relative { xi }) = *self;
        if !xi.is_finite() || xi < 0.0 {
            return Err(Error::config(format!("interval width must be finite and >= 0, got {xi}")));
        }
        Ok(())
    }

    pub fn interval(&self, y: f64) -> Result<IntervalSpec> {
        self.validate()?;
        let half = match *self {
            IntervalRule::Absolute { xi } => xi,
            IntervalRule::Relative { xi } => xi * y.abs(),
        };
        IntervalSpec::new(y - half, y + half)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalCertificate {
    pub median: f64,
    /// Radius for `median <= upper`; `NegInfinity` if it already fails.
    pub upper: Robustness,
    /// Radius for `median >= lower`; `NegInfinity` if it already fails.
    pub lower: Robustness,
    pub radius: Robustness,
}

fn one_side(profile: &VoteProfile) -> Result<Robustness> {
    let cert = certify_plurality(profile)?;
    Ok(if cert.label == 0 {
        Robustness::Finite(cert.radius)
    } else {
        Robustness::NegInfinity
    })
}

/// Certifies `lower <= median <= upper`.
///
/// The upper side binarizes at `upper`; the lower side binarizes the negated
/// outputs at `-lower`, so label 0 there means `v >= lower` and both
/// interval endpoints are inclusive.
pub fn certify_interval(votes: &RegressionVotes, spec: IntervalSpec) -> Result<IntervalCertificate> {
    let upper = one_side(&binarize(votes.values(), spec.upper))?;
    let negated: Vec<f64> = votes.values().iter().map(|v| -v).collect();
    let lower = one_side(&binarize(&negated, -spec.lower))?;
    Ok(IntervalCertificate {
        median: votes.median(),
        upper,
        lower,
        radius: upper.min(lower),
    })
}
