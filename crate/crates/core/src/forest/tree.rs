//! Gini-impurity classification trees.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples with `value <= threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub feature_index: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        rule: SplitRule,
        impurity_decrease: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class_counts: Vec<usize>,
    },
}

/// `1 − Σ (cᵢ/n)²`.
pub fn gini_impurity(class_counts: &[usize]) -> Result<f64> {
    let n: usize = class_counts.iter().sum();
    if n == 0 {
        return Err(Error::EmptyNode);
    }
    let n = n as f64;
    Ok(1.0 - class_counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>())
}

/// Index of the largest count, lowest index on ties.
pub(crate) fn argmax_lowest(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

impl TreeNode {
    /// Predicted class for a sample given by a feature accessor.
    pub fn predict_with(&self, value: impl Fn(usize) -> f64) -> usize {
        let mut node = self;
        loop {
            match node {
                TreeNode::Internal {
                    rule, left, right, ..
                } => {
                    node = if value(rule.feature_index) <= rule.threshold {
                        left
                    } else {
                        right
                    };
                }
                TreeNode::Leaf { class_counts } => return argmax_lowest(class_counts),
            }
        }
    }

    pub fn predict(&self, sample: &[f64]) -> usize {
        self.predict_with(|j| sample[j])
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
            TreeNode::Leaf { .. } => 0,
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
            TreeNode::Leaf { .. } => 1,
        }
    }

    /// Feature indices appearing in any split rule.
    pub fn features_used(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.visit(&mut |n| {
            if let TreeNode::Internal { rule, .. } = n {
                out.insert(rule.feature_index);
            }
        });
        out
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a TreeNode)) {
        f(self);
        if let TreeNode::Internal { left, right, .. } = self {
            left.visit(f);
            right.visit(f);
        }
    }
}

/// Column-major training data. `columns[j][row]` is feature `j` of `row`.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub columns: &'a [&'a [f64]],
    pub labels: &'a [usize],
    pub n_classes: usize,
}

/// Split score `Σ c_L²/n_L + Σ c_R²/n_R` held as an exact fraction
/// `num / den`; maximizing it minimizes the count-weighted child Gini.
#[derive(Debug, Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn new(sq_left: u128, n_left: u128, sq_right: u128, n_right: u128) -> Self {
        Self {
            num: sq_left * n_right + sq_right * n_left,
            den: n_left * n_right,
        }
    }

    fn beats(&self, other: &Score) -> bool {
        self.num * other.den > other.num * self.den
    }
}

/// Best Gini split of `rows` over `candidates`.
///
/// Thresholds are midpoints between consecutive distinct sorted values.
/// Returns the rule with the largest impurity decrease (exact rational
/// comparison; ties go to the lower feature index, then the lower
/// threshold) together with that decrease, or `None` when no split lowers
/// the impurity (pure node or constant candidates).
pub fn best_split(
    data: &TrainingData<'_>,
    rows: &[usize],
    candidates: &[usize],
) -> Option<(SplitRule, f64)> {
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let k = data.n_classes;
    let mut parent = vec![0u128; k];
    for &r in rows {
        parent[data.labels[r]] += 1;
    }
    let sq_parent: u128 = parent.iter().map(|c| c * c).sum();
    let n128 = n as u128;

    let mut best: Option<(Score, SplitRule)> = None;
    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut left = vec![0u128; k];
    let mut sorted_candidates = candidates.to_vec();
    sorted_candidates.sort_unstable();
    for &feature in &sorted_candidates {
        let col = data.columns[feature];
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (col[r], data.labels[r])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pairs[0].0 == pairs[n - 1].0 {
            continue;
        }
        left.iter_mut().for_each(|c| *c = 0);
        let mut right = parent.clone();
        let (mut sq_left, mut sq_right) = (0u128, sq_parent);
        for i in 0..n - 1 {
            let c = pairs[i].1;
            sq_left += 2 * left[c] + 1;
            left[c] += 1;
            sq_right -= 2 * right[c] - 1;
            right[c] -= 1;
            let (a, b) = (pairs[i].0, pairs[i + 1].0);
            if a == b {
                continue;
            }
            let n_left = (i + 1) as u128;
            let score = Score::new(sq_left, n_left, sq_right, n128 - n_left);
            // must strictly improve on the parent: score > sq_parent / n
            if score.num * n128 <= sq_parent * score.den {
                continue;
            }
            if best.as_ref().is_none_or(|(s, _)| score.beats(s)) {
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                best = Some((
                    score,
                    SplitRule {
                        feature_index: feature,
                        threshold,
                    },
                ));
            }
        }
    }
    best.map(|(score, rule)| {
        let nf = n as f64;
        let decrease = score.num as f64 / score.den as f64 / nf - sq_parent as f64 / (nf * nf);
        (rule, decrease)
    })
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_features: usize,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
}

/// Grows a tree on the multiset `rows`, drawing a fresh uniform subset of
/// `max_features` features (without replacement) at every node.
pub(crate) fn grow<R: Rng + ?Sized>(
    data: &TrainingData<'_>,
    rows: &mut [usize],
    params: &GrowParams,
    depth: usize,
    rng: &mut R,
) -> TreeNode {
    let mut counts = vec![0usize; data.n_classes];
    for &r in rows.iter() {
        counts[data.labels[r]] += 1;
    }
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    let depth_reached = params.max_depth.is_some_and(|m| depth >= m);
    if pure || rows.len() < params.min_samples_split || depth_reached {
        return TreeNode::Leaf {
            class_counts: counts,
        };
    }
    let d = data.columns.len();
    let mut candidates = rand::seq::index::sample(rng, d, params.max_features.min(d)).into_vec();
    candidates.sort_unstable();
    let Some((rule, impurity_decrease)) = best_split(data, rows, &candidates) else {
        return TreeNode::Leaf {
            class_counts: counts,
        };
    };
    let col = data.columns[rule.feature_index];
    let mut split = 0;
    for i in 0..rows.len() {
        if col[rows[i]] <= rule.threshold {
            rows.swap(i, split);
            split += 1;
        }
    }
    let (l, r) = rows.split_at_mut(split);
    let left = grow(data, l, params, depth + 1, rng);
    let right = grow(data, r, params, depth + 1, rng);
    TreeNode::Internal {
        rule,
        impurity_decrease,
        left: Box::new(left),
        right: Box::new(right),
    }
}
