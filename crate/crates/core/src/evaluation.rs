//! Classifier metrics, the maximum-a-priori baseline, and the repeated
//! partitioning harness that decides whether a factor is an empirical
//! modulator.
//!
//! A factor counts as an empirical modulator when the median, over `M`
//! random train/test partitionings, of `A_N(forest) / A_N(baseline)`
//! exceeds 1, where `A_N` is accuracy on the `N` held-out samples and the
//! baseline always predicts the most frequent training class.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, DatasetView, Partition};
use crate::error::{Error, Result};
use crate::forest::{train_forest, ForestParams};
use crate::report::{float, fmt_f64, CsvTable};
use crate::rng;

/// K×K confusion counts, `counts[truth][prediction]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

/// One-vs-rest counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn from_predictions(predictions: &[usize], truths: &[usize], n_classes: usize) -> Result<Self> {
        check_lengths(predictions, truths)?;
        let k = predictions
            .iter()
            .chain(truths)
            .copied()
            .max()
            .map_or(n_classes, |m| n_classes.max(m + 1));
        let mut counts = vec![vec![0usize; k]; k];
        for (&p, &t) in predictions.iter().zip(truths) {
            counts[t][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn binary(&self, positive: usize) -> BinaryCounts {
        let k = self.counts.len();
        let mut c = BinaryCounts { tp: 0, fp: 0, tn: 0, fn_: 0 };
        for t in 0..k {
            for p in 0..k {
                let n = self.counts[t][p];
                match (t == positive, p == positive) {
                    (true, true) => c.tp += n,
                    (false, true) => c.fp += n,
                    (true, false) => c.fn_ += n,
                    (false, false) => c.tn += n,
                }
            }
        }
        c
    }
}

impl BinaryCounts {
    /// `2TP / (2TP + FP + FN)`; `None` when the denominator is zero.
    pub fn f1(&self) -> Option<f64> {
        let den = 2 * self.tp + self.fp + self.fn_;
        (den > 0).then(|| 2.0 * self.tp as f64 / den as f64)
    }
}

fn check_lengths(predictions: &[usize], truths: &[usize]) -> Result<()> {
    if predictions.len() != truths.len() {
        return Err(Error::PredictionLengthMismatch(predictions.len(), truths.len()));
    }
    if predictions.is_empty() {
        return Err(Error::Empty);
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn accuracy(predictions: &[usize], truths: &[usize]) -> Result<f64> {
    check_lengths(predictions, truths)?;
    let hits = predictions.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truths.len() as f64)
}

/// F1 for one positive class, with a flag set when there was no support at
/// all (no TP, FP or FN), in which case the score is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1 {
    pub value: f64,
    pub zero_support: bool,
}

pub fn f1_detailed(predictions: &[usize], truths: &[usize], positive: usize) -> Result<F1> {
    let cm = ConfusionMatrix::from_predictions(predictions, truths, positive + 1)?;
    Ok(match cm.binary(positive).f1() {
        Some(value) => F1 { value, zero_support: false },
        None => F1 { value: 0.0, zero_support: true },
    })
}

pub fn f1_score(predictions: &[usize], truths: &[usize], positive: usize) -> Result<f64> {
    Ok(f1_detailed(predictions, truths, positive)?.value)
}

/// Unweighted mean of one-vs-rest F1 over the classes occurring in either
/// vector.
pub fn macro_f1(predictions: &[usize], truths: &[usize]) -> Result<f64> {
    let cm = ConfusionMatrix::from_predictions(predictions, truths, 0)?;
    let k = cm.counts.len();
    let present: Vec<usize> = (0..k)
        .filter(|&c| predictions.contains(&c) || truths.contains(&c))
        .collect();
    let sum: f64 = present
        .iter()
        .map(|&c| cm.binary(c).f1().unwrap_or(0.0))
        .sum();
    Ok(sum / present.len() as f64)
}

/// Binary F1 on `positive` when the target has exactly two categories,
/// macro F1 otherwise.
pub(crate) fn task_f1(predictions: &[usize], truths: &[usize], n_classes: usize, positive: usize) -> Result<F1> {
    if n_classes == 2 {
        f1_detailed(predictions, truths, positive)
    } else {
        Ok(F1 {
            value: macro_f1(predictions, truths)?,
            zero_support: false,
        })
    }
}

/// The constant classifier predicting the modal training class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorEstimator {
    pub class: usize,
}

impl PriorEstimator {
    /// Modal class of `train_labels`; ties go to the lowest category id.
    pub fn fit(train_labels: &[usize]) -> Result<Self> {
        if train_labels.is_empty() {
            return Err(Error::EmptyLabels);
        }
        let k = train_labels.iter().copied().max().unwrap_or(0) + 1;
        let mut counts = vec![0usize; k];
        for &l in train_labels {
            counts[l] += 1;
        }
        Ok(Self {
            class: crate::forest::argmax_lowest(&counts),
        })
    }

    pub fn predict(&self) -> usize {
        self.class
    }

    pub fn predict_many(&self, n: usize) -> Vec<usize> {
        vec![self.class; n]
    }
}

/// `model / baseline`, with `x / 0 = ∞` for `x > 0` and `0 / 0 = 1`.
pub fn ratio(model: f64, baseline: f64) -> f64 {
    if baseline > 0.0 {
        model / baseline
    } else if model > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    EmpiricalModulator,
    NotDetected,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::EmpiricalModulator => "empirical_modulator",
            Verdict::NotDetected => "not_detected",
        }
    }

    pub fn from_ratio(acc_ratio: f64) -> Self {
        if acc_ratio > 1.0 {
            Verdict::EmpiricalModulator
        } else {
            Verdict::NotDetected
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub repetition: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub baseline_class: String,
    pub f1_model: f64,
    pub f1_baseline: f64,
    pub acc_model: f64,
    pub acc_baseline: f64,
    #[serde(with = "float")]
    pub acc_ratio: f64,
    #[serde(with = "float")]
    pub f1_ratio: f64,
    /// Some F1 had no positive support and was scored 0.
    pub f1_zero_support: bool,
    pub verdict: Verdict,
}

/// Quartiles by linear interpolation between order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(with = "float")]
    pub min: f64,
    #[serde(with = "float")]
    pub q1: f64,
    #[serde(with = "float")]
    pub median: f64,
    #[serde(with = "float")]
    pub q3: f64,
    #[serde(with = "float")]
    pub max: f64,
}

/// `q`-quantile of `values` (linear interpolation, `q ∈ [0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || v[lo] == v[hi] {
        return v[lo];
    }
    let w = pos - lo as f64;
    v[lo] + w * (v[hi] - v[lo])
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        Self {
            min: quantile(values, 0.0),
            q1: quantile(values, 0.25),
            median: quantile(values, 0.5),
            q3: quantile(values, 0.75),
            max: quantile(values, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub f1_model: Summary,
    pub f1_baseline: Summary,
    pub acc_model: Summary,
    pub acc_baseline: Summary,
    pub acc_ratio: Summary,
    pub f1_ratio: Summary,
}

impl Aggregates {
    fn of(records: &[RepetitionRecord]) -> Self {
        let col = |f: fn(&RepetitionRecord) -> f64| Summary::of(&records.iter().map(f).collect::<Vec<_>>());
        Self {
            f1_model: col(|r| r.f1_model),
            f1_baseline: col(|r| r.f1_baseline),
            acc_model: col(|r| r.acc_model),
            acc_baseline: col(|r| r.acc_baseline),
            acc_ratio: col(|r| r.acc_ratio),
            f1_ratio: col(|r| r.f1_ratio),
        }
    }
}

/// Settings for [`repeated_evaluation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub forest: ForestParams,
    pub repetitions: usize,
    pub train_fraction: f64,
    /// Restrict training to these features (all features when `None`).
    pub feature_subset: Option<Vec<String>>,
    /// Category id treated as positive for binary F1.
    pub positive_class: usize,
    /// Class-stratified splitting instead of the default unstratified one.
    pub stratified_split: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            repetitions: 100,
            train_fraction: data::DEFAULT_TRAIN_FRACTION,
            feature_subset: None,
            positive_class: 1,
            stratified_split: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub target: String,
    pub categories: Vec<String>,
    pub positive_class: String,
    /// "binary" or "macro".
    pub f1_kind: String,
    pub n_samples: usize,
    /// Held-out set size `N` of an unstratified split.
    pub degree: usize,
    pub features: Vec<String>,
    pub config: EvaluationConfig,
    pub master_seed: u64,
    pub records: Vec<RepetitionRecord>,
    pub aggregates: Aggregates,
    pub verdict: Verdict,
    pub zero_support_repetitions: usize,
}

impl EvaluationReport {
    /// Verdict recomputed from the stored per-repetition records.
    pub fn recompute_verdict(&self) -> Verdict {
        let ratios: Vec<f64> = self.records.iter().map(|r| r.acc_ratio).collect();
        Verdict::from_ratio(quantile(&ratios, 0.5))
    }

    pub fn median_acc_ratio(&self) -> f64 {
        self.aggregates.acc_ratio.median
    }
}

impl CsvTable for EvaluationReport {
    fn header(&self) -> Vec<String> {
        [
            "repetition",
            "n_train",
            "n_test",
            "baseline_class",
            "f1_model",
            "f1_baseline",
            "acc_model",
            "acc_baseline",
            "acc_ratio",
            "f1_ratio",
            "f1_zero_support",
            "verdict",
        ]
        .map(String::from)
        .to_vec()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.records
            .iter()
            .map(|r| {
                vec![
                    r.repetition.to_string(),
                    r.n_train.to_string(),
                    r.n_test.to_string(),
                    r.baseline_class.clone(),
                    fmt_f64(r.f1_model),
                    fmt_f64(r.f1_baseline),
                    fmt_f64(r.acc_model),
                    fmt_f64(r.acc_baseline),
                    fmt_f64(r.acc_ratio),
                    fmt_f64(r.f1_ratio),
                    r.f1_zero_support.to_string(),
                    r.verdict.name().to_string(),
                ]
            })
            .collect()
    }
}

pub(crate) fn split<R: rand::Rng + ?Sized>(
    labels: &[usize],
    train_fraction: f64,
    stratified: bool,
    rng: &mut R,
) -> Result<Partition> {
    if stratified {
        data::partition_stratified(labels, train_fraction, rng)
    } else {
        data::partition(labels.len(), train_fraction, rng)
    }
}

/// Trains and scores one forest and the baseline on one partition.
fn evaluate_partition(
    ds: &Dataset,
    target: &str,
    features: &[String],
    config: &EvaluationConfig,
    partition: &Partition,
    forest_seed: u64,
    repetition: usize,
) -> Result<RepetitionRecord> {
    let factor = ds.factor(target)?;
    let labels = factor.values();
    let view = DatasetView::new(ds, partition.train_indices.clone(), Some(features))?;
    let forest = train_forest(&view, target, &config.forest, forest_seed)?;
    let truths: Vec<usize> = partition.test_indices.iter().map(|&r| labels[r]).collect();
    let preds = forest.predict_rows(ds, &partition.test_indices)?;
    let train_labels: Vec<usize> = partition.train_indices.iter().map(|&r| labels[r]).collect();
    let prior = PriorEstimator::fit(&train_labels)?;
    let base = prior.predict_many(truths.len());

    let k = factor.n_categories();
    let f1_model = task_f1(&preds, &truths, k, config.positive_class)?;
    let f1_base = task_f1(&base, &truths, k, config.positive_class)?;
    let acc_model = accuracy(&preds, &truths)?;
    let acc_baseline = accuracy(&base, &truths)?;
    let acc_ratio = ratio(acc_model, acc_baseline);
    Ok(RepetitionRecord {
        repetition,
        n_train: partition.train_indices.len(),
        n_test: partition.test_indices.len(),
        baseline_class: factor.categories()[prior.class].clone(),
        f1_model: f1_model.value,
        f1_baseline: f1_base.value,
        acc_model,
        acc_baseline,
        acc_ratio,
        f1_ratio: ratio(f1_model.value, f1_base.value),
        f1_zero_support: f1_model.zero_support || f1_base.zero_support,
        verdict: Verdict::from_ratio(acc_ratio),
    })
}

pub(crate) fn check_target(ds: &Dataset, target: &str) -> Result<()> {
    if ds.factor(target)?.distinct_present() < 2 {
        return Err(Error::DegenerateTarget(target.to_string()));
    }
    Ok(())
}

/// Runs `config.repetitions` independent partition/train/evaluate rounds.
///
/// Repetition `i` uses partition stream `(master_seed, PARTITION, i)` and
/// forest seed `(master_seed, FOREST, i)`, so the report does not depend
/// on execution order or thread count.
pub fn repeated_evaluation(
    ds: &Dataset,
    target_factor: &str,
    config: &EvaluationConfig,
    master_seed: u64,
) -> Result<EvaluationReport> {
    if config.repetitions == 0 {
        return Err(Error::InvalidParameter("repetitions must be at least 1".into()));
    }
    config.forest.validate()?;
    check_target(ds, target_factor)?;
    let factor = ds.factor(target_factor)?;
    if config.positive_class >= factor.n_categories() {
        return Err(Error::InvalidParameter(format!(
            "positive class id {} out of range for {} categories",
            config.positive_class,
            factor.n_categories()
        )));
    }
    let features = match &config.feature_subset {
        Some(f) => {
            for name in f {
                ds.feature(name)?;
            }
            f.clone()
        }
        None => ds.feature_names(),
    };
    if features.is_empty() {
        return Err(Error::NoFeatures);
    }
    let degree = ds.n_samples() - data::train_size(ds.n_samples(), config.train_fraction)?;

    let records = (0..config.repetitions)
        .into_par_iter()
        .map(|i| {
            let mut prng = rng::child_stream(master_seed, rng::tag::PARTITION, i as u64);
            let partition = split(factor.values(), config.train_fraction, config.stratified_split, &mut prng)?;
            let forest_seed = rng::derive_seed(master_seed, rng::tag::FOREST, i as u64);
            evaluate_partition(ds, target_factor, &features, config, &partition, forest_seed, i)
        })
        .collect::<Result<Vec<_>>>()?;

    let aggregates = Aggregates::of(&records);
    let verdict = Verdict::from_ratio(aggregates.acc_ratio.median);
    Ok(EvaluationReport {
        target: target_factor.to_string(),
        categories: factor.categories().to_vec(),
        positive_class: factor.categories()[config.positive_class].clone(),
        f1_kind: if factor.n_categories() == 2 { "binary" } else { "macro" }.to_string(),
        n_samples: ds.n_samples(),
        degree,
        features,
        config: config.clone(),
        master_seed,
        zero_support_repetitions: records.iter().filter(|r| r.f1_zero_support).count(),
        records,
        aggregates,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn prior_examples() {
        assert_eq!(PriorEstimator::fit(&[0, 0, 1]).unwrap().class, 0);
        assert_eq!(PriorEstimator::fit(&[0, 1]).unwrap().class, 0);
        assert_eq!(PriorEstimator::fit(&[1, 2, 2]).unwrap().class, 2);
        assert!(matches!(PriorEstimator::fit(&[]), Err(Error::EmptyLabels)));
    }

    #[test]
    fn balanced_baseline_scores() {
        // majority of the training labels is class 0; test set balanced
        let prior = PriorEstimator::fit(&[0, 0, 1]).unwrap();
        let truths = [0, 1, 0, 1, 1, 0];
        let preds = prior.predict_many(truths.len());
        assert_eq!(accuracy(&preds, &truths).unwrap(), 0.5);
        // 2p / (p + 1) at p = 1/2
        assert_eq!(f1_score(&preds, &truths, prior.class).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 1], &[0, 1, 1, 0]).unwrap(), 0.75);
        assert!(matches!(accuracy(&[0], &[0, 1]), Err(Error::PredictionLengthMismatch(1, 2))));
        assert!(matches!(accuracy(&[], &[]), Err(Error::Empty)));
    }

    #[test]
    fn f1_examples() {
        // TP=2, FP=1, FN=1
        let preds = [1, 1, 1, 0, 0];
        let truths = [1, 1, 0, 1, 0];
        assert!((f1_score(&preds, &truths, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_score(&truths, &truths, 1).unwrap(), 1.0);
        let f = f1_detailed(&[0, 0, 0], &[0, 0, 0], 1).unwrap();
        assert_eq!(f, F1 { value: 0.0, zero_support: true });
        assert!(matches!(f1_score(&[0], &[], 1), Err(Error::PredictionLengthMismatch(1, 0))));
    }

    #[test]
    fn macro_f1_averages_present_classes() {
        let preds = [0, 1, 2, 2];
        let truths = [0, 1, 2, 1];
        // class 0: 1.0, class 1: 2/3, class 2: 2/3
        let expected = (1.0 + 2.0 / 3.0 + 2.0 / 3.0) / 3.0;
        assert!((macro_f1(&preds, &truths).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn confusion_matrix_totals() {
        let cm = ConfusionMatrix::from_predictions(&[0, 1, 1], &[0, 0, 1], 2).unwrap();
        assert_eq!(cm.total(), 3);
        assert_eq!(cm.binary(1), BinaryCounts { tp: 1, fp: 1, tn: 1, fn_: 0 });
    }

    #[test]
    fn quantiles() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&[7.0], 0.5), 7.0);
        assert_eq!(quantile(&[1.0, f64::INFINITY, f64::INFINITY], 0.5), f64::INFINITY);
    }

    #[test]
    fn ratio_conventions() {
        assert_eq!(ratio(0.6, 0.5), 1.2);
        assert_eq!(ratio(0.5, 0.0), f64::INFINITY);
        assert_eq!(ratio(0.0, 0.0), 1.0);
    }

    proptest! {
        #[test]
        fn constant_classifier_f1_is_2p_over_p_plus_1(n_major in 1usize..200, n_minor in 0usize..200) {
            prop_assume!(n_major >= n_minor);
            let mut truths = vec![0usize; n_major];
            truths.extend(vec![1usize; n_minor]);
            let prior = PriorEstimator::fit(&truths).unwrap();
            let preds = prior.predict_many(truths.len());
            let p = n_major as f64 / truths.len() as f64;
            let f1 = f1_score(&preds, &truths, prior.class).unwrap();
            prop_assert!((f1 - 2.0 * p / (p + 1.0)).abs() < 1e-12);
            // accuracy of the constant classifier is the share of its class
            prop_assert_eq!(accuracy(&preds, &truths).unwrap(), p);
        }
    }
}
