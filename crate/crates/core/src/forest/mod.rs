//! Random-forest classifier: bootstrap-resampled Gini trees with a random
//! feature subset drawn at every node, combined by majority vote.

mod tree;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetView};
use crate::error::{Error, Result};
use crate::rng;

pub use tree::{best_split, gini_impurity, SplitRule, TrainingData, TreeNode};

pub(crate) use tree::argmax_lowest;
use tree::{grow, GrowParams};

/// Version tag written into serialized forests.
pub const FOREST_FORMAT_VERSION: u32 = 1;

/// Number of candidate features examined at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `⌈√d⌉`
    #[default]
    Sqrt,
    All,
    Fixed(usize),
}

impl MaxFeatures {
    /// Resolved candidate count for `d` features, always in `1..=d`.
    pub fn resolve(self, d: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => ceil_sqrt(d),
            MaxFeatures::All => d,
            MaxFeatures::Fixed(k) => k,
        };
        k.clamp(1, d.max(1))
    }
}

fn ceil_sqrt(d: usize) -> usize {
    let mut k = (d as f64).sqrt() as usize;
    while k * k < d {
        k += 1;
    }
    while k > 0 && (k - 1) * (k - 1) >= d {
        k -= 1;
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            min_samples_split: 2,
            max_depth: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn with_n_trees(mut self, n_trees: usize) -> Self {
        self.n_trees = n_trees;
        self
    }

    pub fn with_max_depth(mut self, max_depth: usize) -> Self {
        self.max_depth = Some(max_depth);
        self
    }

    pub fn with_max_features(mut self, max_features: MaxFeatures) -> Self {
        self.max_features = max_features;
        self
    }

    pub fn with_bootstrap(mut self, bootstrap: bool) -> Self {
        self.bootstrap = bootstrap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be at least 1".into()));
        }
        if let MaxFeatures::Fixed(0) = self.max_features {
            return Err(Error::InvalidParameter("max_features must be at least 1".into()));
        }
        if self.max_depth == Some(0) {
            return Err(Error::InvalidParameter("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// A trained forest. Immutable; safe to share between threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub format_version: u32,
    pub target: String,
    pub categories: Vec<String>,
    pub feature_names: Vec<String>,
    pub params: ForestParams,
    pub train_seed: u64,
    pub trees: Vec<TreeNode>,
}

/// Trains a forest on the rows and features of `view`, predicting
/// `target_factor`.
///
/// Tree `t` draws its bootstrap sample and node feature subsets from the
/// stream derived from `(seed, t)`, so the result does not depend on how
/// the trees are scheduled across threads.
pub fn train_forest(
    view: &DatasetView<'_>,
    target_factor: &str,
    params: &ForestParams,
    seed: u64,
) -> Result<Forest> {
    params.validate()?;
    let target = view.dataset().factor(target_factor)?;
    if view.n_rows() < 2 {
        return Err(Error::SingleSample);
    }
    if view.n_features() == 0 {
        return Err(Error::NoFeatures);
    }
    let columns = view.columns();
    let data = TrainingData {
        columns: &columns,
        labels: target.values(),
        n_classes: target.n_categories(),
    };
    let grow_params = GrowParams {
        max_features: params.max_features.resolve(view.n_features()),
        min_samples_split: params.min_samples_split.max(2),
        max_depth: params.max_depth,
    };
    let rows = view.rows();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::child_stream(seed, rng::tag::TREE, t as u64);
            let mut sample = bootstrap_rows(rows, params.bootstrap, &mut rng);
            grow(&data, &mut sample, &grow_params, 0, &mut rng)
        })
        .collect();
    Ok(Forest {
        format_version: FOREST_FORMAT_VERSION,
        target: target_factor.to_string(),
        categories: target.categories().to_vec(),
        feature_names: view.feature_names(),
        params: params.clone(),
        train_seed: seed,
        trees,
    })
}

/// `rows.len()` draws with replacement, or a copy of `rows`.
pub(crate) fn bootstrap_rows<R: Rng + ?Sized>(rows: &[usize], bootstrap: bool, rng: &mut R) -> Vec<usize> {
    if bootstrap {
        (0..rows.len())
            .map(|_| rows[rng.random_range(0..rows.len())])
            .collect()
    } else {
        rows.to_vec()
    }
}

impl Forest {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.categories.len()
    }

    /// Majority vote over the trees' leaf classes; ties go to the lowest
    /// category id.
    pub fn predict(&self, sample: &[f64]) -> Result<usize> {
        if sample.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: sample.len(),
            });
        }
        Ok(self.vote(|j| sample[j]))
    }

    pub(crate) fn vote(&self, value: impl Fn(usize) -> f64 + Copy) -> usize {
        let mut votes = vec![0usize; self.n_classes()];
        for t in &self.trees {
            votes[t.predict_with(value)] += 1;
        }
        argmax_lowest(&votes)
    }

    /// Positions in `ds.features()` of this forest's features.
    pub fn column_map(&self, ds: &Dataset) -> Result<Vec<usize>> {
        self.feature_names
            .iter()
            .map(|n| ds.feature_index(n))
            .collect()
    }

    /// Predictions for `rows` of a dataset containing the forest's features
    /// (matched by name).
    pub fn predict_rows(&self, ds: &Dataset, rows: &[usize]) -> Result<Vec<usize>> {
        let map = self.column_map(ds)?;
        let cols: Vec<&[f64]> = map.iter().map(|&j| ds.features()[j].values()).collect();
        Ok(rows
            .iter()
            .map(|&r| self.vote(|j| cols[j][r]))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: Forest = serde_json::from_str(s)?;
        if f.format_version != FOREST_FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported forest format version {}",
                f.format_version
            )));
        }
        for t in &f.trees {
            let mut bad = false;
            t.visit(&mut |n| match n {
                TreeNode::Internal { rule, .. } => {
                    bad |= rule.feature_index >= f.feature_names.len() || !rule.threshold.is_finite()
                }
                TreeNode::Leaf { class_counts } => bad |= class_counts.len() != f.categories.len(),
            });
            if bad {
                return Err(Error::Serialization("forest references invalid features or classes".into()));
            }
        }
        Ok(f)
    }
}
