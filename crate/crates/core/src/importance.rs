//! Permutation feature importance and selection of a small feature subset.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, DatasetView};
use crate::error::{Error, Result};
use crate::evaluation::{self, EvaluationConfig};
use crate::forest::{argmax_lowest, train_forest, Forest, ForestParams};
use crate::report::{fmt_f64, CsvTable};
use crate::rng;

/// Rows on which permuted accuracy is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PermutationScope {
    /// Every row of the dataset, training rows included.
    #[default]
    Full,
    /// Only the rows held out from the forest's training split.
    HeldOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationImportance {
    pub baseline_accuracy: f64,
    pub mean_drop: f64,
    pub drops: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature_name: String,
    pub mean_accuracy_drop: f64,
    pub std: f64,
    pub n_measurements: usize,
}

/// Features sorted by decreasing mean accuracy drop (ties by name).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub entries: Vec<ImportanceEntry>,
    /// Mean unpermuted accuracy over all forests.
    pub baseline_accuracy: f64,
}

impl ImportanceRanking {
    pub fn feature_names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.feature_name.clone()).collect()
    }

    pub fn entry(&self, name: &str) -> Option<&ImportanceEntry> {
        self.entries.iter().find(|e| e.feature_name == name)
    }
}

impl CsvTable for ImportanceRanking {
    fn header(&self) -> Vec<String> {
        ["feature", "mean_drop", "std", "n"].map(String::from).to_vec()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.entries
            .iter()
            .map(|e| {
                vec![
                    e.feature_name.clone(),
                    fmt_f64(e.mean_accuracy_drop),
                    fmt_f64(e.std),
                    e.n_measurements.to_string(),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportanceConfig {
    pub forest: ForestParams,
    pub n_forests: usize,
    pub n_permutations: usize,
    pub train_fraction: f64,
    pub stratified_split: bool,
    pub scope: PermutationScope,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            n_forests: 100,
            n_permutations: 10,
            train_fraction: data::DEFAULT_TRAIN_FRACTION,
            stratified_split: false,
            scope: PermutationScope::Full,
        }
    }
}

/// Sum with Neumaier compensation.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss = compensated_sum(values.iter().map(|x| (x - m) * (x - m)));
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Cached per-tree predictions of one forest on a fixed set of rows, so a
/// permuted column only needs the trees that split on it re-evaluated.
struct Scorer<'a> {
    forest: &'a Forest,
    cols: Vec<&'a [f64]>,
    rows: &'a [usize],
    truths: Vec<usize>,
    tree_preds: Vec<Vec<usize>>,
    votes: Vec<usize>,
    users: Vec<Vec<usize>>,
    baseline_correct: usize,
}

impl<'a> Scorer<'a> {
    fn new(forest: &'a Forest, ds: &'a Dataset, rows: &'a [usize]) -> Result<Self> {
        let labels = ds.factor(&forest.target)?.values();
        let map = forest.column_map(ds)?;
        let cols: Vec<&[f64]> = map.iter().map(|&j| ds.features()[j].values()).collect();
        let k = forest.n_classes();
        let tree_preds: Vec<Vec<usize>> = forest
            .trees
            .iter()
            .map(|t| rows.iter().map(|&r| t.predict_with(|j| cols[j][r])).collect())
            .collect();
        let mut votes = vec![0usize; rows.len() * k];
        for preds in &tree_preds {
            for (pos, &c) in preds.iter().enumerate() {
                votes[pos * k + c] += 1;
            }
        }
        let truths: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
        let baseline_correct = (0..rows.len())
            .filter(|&pos| argmax_lowest(&votes[pos * k..(pos + 1) * k]) == truths[pos])
            .count();
        let mut users = vec![Vec::new(); forest.n_features()];
        for (t, tree) in forest.trees.iter().enumerate() {
            for j in tree.features_used() {
                users[j].push(t);
            }
        }
        Ok(Self {
            forest,
            cols,
            rows,
            truths,
            tree_preds,
            votes,
            users,
            baseline_correct,
        })
    }

    fn n(&self) -> usize {
        self.rows.len()
    }

    fn baseline_accuracy(&self) -> f64 {
        self.baseline_correct as f64 / self.n() as f64
    }

    /// Accuracy drops for `n_permutations` shuffles of forest feature `j`.
    fn drops<R: Rng + ?Sized>(&self, j: usize, n_permutations: usize, rng: &mut R) -> Vec<f64> {
        if self.users[j].is_empty() {
            return vec![0.0; n_permutations];
        }
        let k = self.forest.n_classes();
        let n = self.n();
        let mut vals: Vec<f64> = self.rows.iter().map(|&r| self.cols[j][r]).collect();
        let mut row_votes = vec![0usize; k];
        (0..n_permutations)
            .map(|_| {
                vals.shuffle(rng);
                let mut correct = 0usize;
                for pos in 0..n {
                    row_votes.copy_from_slice(&self.votes[pos * k..(pos + 1) * k]);
                    let r = self.rows[pos];
                    for &t in &self.users[j] {
                        row_votes[self.tree_preds[t][pos]] -= 1;
                        let c = self.forest.trees[t]
                            .predict_with(|f| if f == j { vals[pos] } else { self.cols[f][r] });
                        row_votes[c] += 1;
                    }
                    if argmax_lowest(&row_votes) == self.truths[pos] {
                        correct += 1;
                    }
                }
                (self.baseline_correct as f64 - correct as f64) / n as f64
            })
            .collect()
    }
}

/// Accuracy drop of `forest` on every row of `ds` when `feature_name` is
/// randomly permuted across rows, repeated `n_permutations` times.
///
/// A feature the forest never splits on yields drops of exactly 0.
pub fn permutation_importance<R: Rng + ?Sized>(
    forest: &Forest,
    ds: &Dataset,
    feature_name: &str,
    n_permutations: usize,
    rng: &mut R,
) -> Result<PermutationImportance> {
    if n_permutations == 0 {
        return Err(Error::InvalidParameter("n_permutations must be at least 1".into()));
    }
    ds.feature(feature_name)?;
    if ds.n_samples() == 0 {
        return Err(Error::Empty);
    }
    let rows: Vec<usize> = (0..ds.n_samples()).collect();
    let scorer = Scorer::new(forest, ds, &rows)?;
    let drops = match forest.feature_names.iter().position(|f| f == feature_name) {
        Some(j) => scorer.drops(j, n_permutations, rng),
        None => vec![0.0; n_permutations],
    };
    Ok(PermutationImportance {
        baseline_accuracy: scorer.baseline_accuracy(),
        mean_drop: mean(&drops),
        drops,
    })
}

/// Trains `config.n_forests` forests on the full feature set, each on the
/// training split of its own random partition, and aggregates permutation
/// drops over all forests and permutations.
///
/// Forest `i` uses the same partition and training seed as repetition `i`
/// of [`evaluation::repeated_evaluation`] with the same master seed; the
/// shuffles of feature `j` under forest `i` come from a stream derived from
/// `(master_seed, i, j)`.
pub fn rank_features(
    ds: &Dataset,
    target_factor: &str,
    config: &ImportanceConfig,
    master_seed: u64,
) -> Result<ImportanceRanking> {
    if config.n_forests == 0 || config.n_permutations == 0 {
        return Err(Error::InvalidParameter(
            "n_forests and n_permutations must be at least 1".into(),
        ));
    }
    config.forest.validate()?;
    evaluation::check_target(ds, target_factor)?;
    let d = ds.n_features();
    if d == 0 {
        return Err(Error::NoFeatures);
    }
    let labels = ds.factor(target_factor)?.values();
    let all_rows: Vec<usize> = (0..ds.n_samples()).collect();

    let per_forest = (0..config.n_forests)
        .into_par_iter()
        .map(|i| {
            let mut prng = rng::child_stream(master_seed, rng::tag::PARTITION, i as u64);
            let part = evaluation::split(labels, config.train_fraction, config.stratified_split, &mut prng)?;
            let view = DatasetView::new(ds, part.train_indices.clone(), None::<&[String]>)?;
            let forest_seed = rng::derive_seed(master_seed, rng::tag::FOREST, i as u64);
            let forest = train_forest(&view, target_factor, &config.forest, forest_seed)?;
            let rows = match config.scope {
                PermutationScope::Full => &all_rows[..],
                PermutationScope::HeldOut => &part.test_indices[..],
            };
            let scorer = Scorer::new(&forest, ds, rows)?;
            let perm_seed = rng::derive_seed(master_seed, rng::tag::PERMUTATION, i as u64);
            let drops: Vec<Vec<f64>> = (0..d)
                .map(|j| {
                    let mut r = rng::child_stream(perm_seed, rng::tag::PERMUTATION, j as u64);
                    scorer.drops(j, config.n_permutations, &mut r)
                })
                .collect();
            Ok((scorer.baseline_accuracy(), drops))
        })
        .collect::<Result<Vec<_>>>()?;

    let baselines: Vec<f64> = per_forest.iter().map(|(b, _)| *b).collect();
    let names = ds.feature_names();
    let mut entries: Vec<ImportanceEntry> = (0..d)
        .map(|j| {
            let all: Vec<f64> = per_forest.iter().flat_map(|(_, drops)| drops[j].iter().copied()).collect();
            ImportanceEntry {
                feature_name: names[j].clone(),
                mean_accuracy_drop: mean(&all),
                std: sample_std(&all),
                n_measurements: all.len(),
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.mean_accuracy_drop
            .total_cmp(&a.mean_accuracy_drop)
            .then_with(|| a.feature_name.cmp(&b.feature_name))
    });
    Ok(ImportanceRanking {
        entries,
        baseline_accuracy: mean(&baselines),
    })
}

/// The `m` highest-ranked feature names, in ranking order.
pub fn select_optimal_subset(ranking: &ImportanceRanking, m: usize) -> Result<Vec<String>> {
    let available = ranking.entries.len();
    if m == 0 || m > available {
        return Err(Error::BadSubsetSize { m, available });
    }
    Ok(ranking.entries[..m].iter().map(|e| e.feature_name.clone()).collect())
}

/// Heuristic subset size: cut the ranking at the largest gap between
/// consecutive mean drops. Not part of the selection procedure proper;
/// offered as a convenience when no size is given.
pub fn elbow_subset_size(ranking: &ImportanceRanking) -> Result<usize> {
    let e = &ranking.entries;
    if e.is_empty() {
        return Err(Error::Empty);
    }
    let mut best = (1, f64::NEG_INFINITY);
    for i in 1..e.len() {
        let gap = e[i - 1].mean_accuracy_drop - e[i].mean_accuracy_drop;
        if gap > best.1 {
            best = (i, gap);
        }
    }
    Ok(best.0)
}

/// Largest feature count accepted by [`exhaustive_subset_search`].
pub const MAX_EXHAUSTIVE_FEATURES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub features: Vec<String>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveResult {
    pub best: SubsetScore,
    /// Every evaluated subset, in search order.
    pub evaluated: Vec<SubsetScore>,
}

/// Evaluates every non-empty feature subset (of size `size`, if given) by
/// repeated evaluation and returns the one with the highest mean held-out
/// accuracy. Ties go to the earlier subset in search order: smaller sets
/// first, then by column position.
pub fn exhaustive_subset_search(
    ds: &Dataset,
    target_factor: &str,
    config: &EvaluationConfig,
    size: Option<usize>,
    master_seed: u64,
) -> Result<ExhaustiveResult> {
    let d = ds.n_features();
    if d == 0 {
        return Err(Error::NoFeatures);
    }
    if d > MAX_EXHAUSTIVE_FEATURES {
        return Err(Error::SubsetSearchTooLarge {
            size: d,
            cap: MAX_EXHAUSTIVE_FEATURES,
        });
    }
    if let Some(m) = size {
        if m == 0 || m > d {
            return Err(Error::BadSubsetSize { m, available: d });
        }
    }
    let names = ds.feature_names();
    let mut masks: Vec<u32> = (1..(1u32 << d))
        .filter(|m| size.is_none_or(|s| m.count_ones() as usize == s))
        .collect();
    masks.sort_by_key(|m| (m.count_ones(), m.reverse_bits()));
    let mut evaluated = Vec::with_capacity(masks.len());
    for mask in masks {
        let features: Vec<String> = (0..d)
            .filter(|j| mask & (1 << j) != 0)
            .map(|j| names[j].clone())
            .collect();
        let cfg = EvaluationConfig {
            feature_subset: Some(features.clone()),
            ..config.clone()
        };
        let report = evaluation::repeated_evaluation(ds, target_factor, &cfg, master_seed)?;
        let accs: Vec<f64> = report.records.iter().map(|r| r.acc_model).collect();
        evaluated.push(SubsetScore {
            features,
            mean_accuracy: mean(&accs),
        });
    }
    let mut best = &evaluated[0];
    for s in &evaluated[1..] {
        if s.mean_accuracy > best.mean_accuracy {
            best = s;
        }
    }
    Ok(ExhaustiveResult {
        best: best.clone(),
        evaluated,
    })
}
