//! Certified robustness of partition-based voting ensembles against sparse
//! feature perturbations of training and test data.

pub mod certify;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod learners;
pub mod oracle;
pub mod overlap;
pub mod partition;
pub mod regression;
pub mod rng;
pub mod synthetic;

pub use certify::{certify_plurality, certify_runoff, certify_topk, Certificate, DpTable, Guarantee, Method};
pub use data::{Dataset, Targets};
pub use ensemble::{train_ensemble, Ensemble, InstanceHash, LogitProfile, TrainingMode, VoteProfile};
pub use error::{Error, Result};
pub use learners::{LearnerFamily, SubmodelSpec};
pub use oracle::{Oracle, OracleConfig};
pub use overlap::{certify_overlap, OverlapProfile};
pub use partition::{FeatureLayout, FeaturePartition, OverlappingPartition, SpreadMap};
pub use regression::{certify_interval, IntervalRule, IntervalSpec, RegressionVotes, Robustness};
