//! Cross-stratum transfer: train on one stratum, test on every stratum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, DatasetView};
use crate::error::{Error, Result};
use crate::evaluation::{self, task_f1};
use crate::forest::{train_forest, ForestParams};
use crate::importance::{self, rank_features, select_optimal_subset, ImportanceConfig};
use crate::report::{fmt_f64, CsvTable};
use crate::rng;

/// Per-stratum feature selection applied before training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Subset size; capped at the number of features.
    pub top: usize,
    pub importance: ImportanceConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            top: 4,
            importance: ImportanceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    pub forest: ForestParams,
    pub repetitions: usize,
    pub train_fraction: f64,
    pub stratified_split: bool,
    pub positive_class: usize,
    /// `None` trains every stratum on all features.
    pub selection: Option<SelectionConfig>,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            repetitions: 100,
            train_fraction: data::DEFAULT_TRAIN_FRACTION,
            stratified_split: false,
            positive_class: 1,
            selection: Some(SelectionConfig::default()),
        }
    }
}

/// Mean F1 grid. `f1[r][c]`: forests trained on stratum `c`, tested on
/// stratum `r` (its held-out split when `r == c`, all of it otherwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub stratum_factor: String,
    pub target: String,
    pub strata: Vec<String>,
    /// Features each column's forests were trained on.
    pub features: Vec<Vec<String>>,
    pub repetitions: usize,
    pub f1: Vec<Vec<f64>>,
}

impl TransferMatrix {
    pub fn diagonal_mean(&self) -> f64 {
        let d: Vec<f64> = (0..self.strata.len()).map(|i| self.f1[i][i]).collect();
        importance::mean(&d)
    }

    pub fn off_diagonal_mean(&self) -> f64 {
        let k = self.strata.len();
        let v: Vec<f64> = (0..k)
            .flat_map(|r| (0..k).filter(move |&c| c != r).map(move |c| (r, c)))
            .map(|(r, c)| self.f1[r][c])
            .collect();
        importance::mean(&v)
    }
}

impl CsvTable for TransferMatrix {
    fn header(&self) -> Vec<String> {
        let mut h = vec!["test\\train".to_string()];
        h.extend(self.strata.iter().cloned());
        h
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.strata
            .iter()
            .zip(&self.f1)
            .map(|(name, row)| {
                let mut out = vec![name.clone()];
                out.extend(row.iter().map(|&x| fmt_f64(x)));
                out
            })
            .collect()
    }
}

/// Builds the K×K transfer matrix over the categories of `stratum_factor`.
///
/// Stratum `c` draws its feature selection from `(master_seed, SELECTION,
/// c)` and its repetitions from `(master_seed, STRATUM, c)`. The forests of
/// column `c` are reused for every test stratum.
pub fn transfer_matrix(
    ds: &Dataset,
    stratum_factor: &str,
    target_factor: &str,
    config: &TransferConfig,
    master_seed: u64,
) -> Result<TransferMatrix> {
    if config.repetitions == 0 {
        return Err(Error::InvalidParameter("repetitions must be at least 1".into()));
    }
    if stratum_factor == target_factor {
        return Err(Error::InvalidParameter("stratum and target factors must differ".into()));
    }
    config.forest.validate()?;
    let strata: Vec<String> = ds.factor(stratum_factor)?.categories().to_vec();
    if strata.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "stratum factor {stratum_factor:?} needs at least two categories"
        )));
    }
    let target = ds.factor(target_factor)?;
    let n_classes = target.n_categories();
    if config.positive_class >= n_classes {
        return Err(Error::InvalidParameter(format!(
            "positive class id {} out of range for {n_classes} categories",
            config.positive_class
        )));
    }
    let subsets = strata
        .iter()
        .map(|label| {
            let sub = ds.stratify(stratum_factor, label)?;
            if sub.factor(target_factor)?.distinct_present() < 2 {
                return Err(Error::SingleClassStratum(label.clone()));
            }
            Ok(sub)
        })
        .collect::<Result<Vec<_>>>()?;

    let features = subsets
        .iter()
        .enumerate()
        .map(|(c, sub)| match &config.selection {
            None => Ok(sub.feature_names()),
            Some(sel) => {
                let seed = rng::derive_seed(master_seed, rng::tag::SELECTION, c as u64);
                let ranking = rank_features(sub, target_factor, &sel.importance, seed)?;
                select_optimal_subset(&ranking, sel.top.min(ranking.entries.len()))
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let k = strata.len();
    let jobs: Vec<(usize, usize)> = (0..k)
        .flat_map(|c| (0..config.repetitions).map(move |i| (c, i)))
        .collect();
    // Per job: the F1 on each test stratum, indexed by row.
    let scores = jobs
        .par_iter()
        .map(|&(c, i)| {
            let sub = &subsets[c];
            let stratum_seed = rng::derive_seed(master_seed, rng::tag::STRATUM, c as u64);
            let labels = sub.factor(target_factor)?.values();
            let mut prng = rng::child_stream(stratum_seed, rng::tag::PARTITION, i as u64);
            let part = evaluation::split(labels, config.train_fraction, config.stratified_split, &mut prng)?;
            let view = DatasetView::new(sub, part.train_indices.clone(), Some(&features[c][..]))?;
            let seed = rng::derive_seed(stratum_seed, rng::tag::FOREST, i as u64);
            let forest = train_forest(&view, target_factor, &config.forest, seed)?;
            (0..k)
                .map(|r| {
                    let test = &subsets[r];
                    let rows: Vec<usize> = if r == c {
                        part.test_indices.clone()
                    } else {
                        (0..test.n_samples()).collect()
                    };
                    let truth = test.factor(target_factor)?.values();
                    let truths: Vec<usize> = rows.iter().map(|&x| truth[x]).collect();
                    let preds = forest.predict_rows(test, &rows)?;
                    Ok(task_f1(&preds, &truths, n_classes, config.positive_class)?.value)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let f1 = (0..k)
        .map(|r| {
            (0..k)
                .map(|c| {
                    let vals: Vec<f64> = (0..config.repetitions)
                        .map(|i| scores[c * config.repetitions + i][r])
                        .collect();
                    importance::mean(&vals)
                })
                .collect()
        })
        .collect();

    Ok(TransferMatrix {
        stratum_factor: stratum_factor.to_string(),
        target: target_factor.to_string(),
        strata,
        features,
        repetitions: config.repetitions,
        f1,
    })
}
