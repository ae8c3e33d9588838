//! Detecting modulators of a signaling channel from population samples.
//!
//! A factor set `F` modulates signals `X` when `I(F; X) > 0`. This crate
//! provides exact information measures over discrete joint distributions,
//! a plug-in estimator for binned data, a random-forest classifier, the
//! repeated-partitioning test comparing it against the constant
//! most-frequent-class predictor, permutation importance for choosing small
//! feature subsets, cross-stratum transfer matrices, and a synthetic
//! population generator with known ground truth.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod forest;
pub mod importance;
pub mod info;
pub mod io;
pub mod report;
pub mod rng;
pub mod synth;
pub mod transfer;

pub use data::{Dataset, DatasetView, FactorColumn, FeatureColumn, FeatureKind, Partition};
pub use error::{Error, Result};
pub use evaluation::{repeated_evaluation, EvaluationConfig, EvaluationReport, Verdict};
pub use forest::{train_forest, Forest, ForestParams, MaxFeatures};
pub use importance::{rank_features, select_optimal_subset, ImportanceConfig, ImportanceRanking};
pub use info::{empirical_joint, Axis, JointPmf};
pub use io::{load_csv, write_csv, TableSchema};
pub use synth::{generate, GroundTruth, ScenarioKind, ScenarioSpec};
pub use transfer::{transfer_matrix, TransferConfig, TransferMatrix};
