//! Tabular population samples: factor columns (discrete) and feature columns
//! (non-negative concentrations), plus partitioning, stratification and
//! relative-abundance normalization.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a feature column measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    BacterialAbundance,
    SerumMetabolite,
    ColonMetabolite,
    #[default]
    Generic,
}

/// A discrete factor, stored as category ids into `categories`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorColumn {
    name: String,
    values: Vec<usize>,
    categories: Vec<String>,
    feasible: bool,
}

impl FactorColumn {
    pub fn new(name: impl Into<String>, values: Vec<usize>, categories: Vec<String>) -> Result<Self> {
        let name = name.into();
        if categories.is_empty() {
            return Err(Error::InvalidColumn(format!("factor {name:?} has no categories")));
        }
        let mut seen = HashSet::new();
        for c in &categories {
            if !seen.insert(c.as_str()) {
                return Err(Error::InvalidColumn(format!(
                    "factor {name:?} lists category {c:?} twice"
                )));
            }
        }
        if let Some(&bad) = values.iter().find(|&&v| v >= categories.len()) {
            return Err(Error::InvalidColumn(format!(
                "factor {name:?} has category id {bad} but only {} categories",
                categories.len()
            )));
        }
        Ok(Self {
            name,
            values,
            categories,
            feasible: false,
        })
    }

    /// Encodes string labels; categories are numbered in order of first
    /// appearance.
    pub fn from_labels<S: AsRef<str>>(name: impl Into<String>, labels: &[S]) -> Result<Self> {
        let mut categories: Vec<String> = Vec::new();
        let mut values = Vec::with_capacity(labels.len());
        for l in labels {
            let l = l.as_ref();
            let id = match categories.iter().position(|c| c == l) {
                Some(id) => id,
                None => {
                    categories.push(l.to_string());
                    categories.len() - 1
                }
            };
            values.push(id);
        }
        Self::new(name, values, categories)
    }

    pub fn with_feasible(mut self, feasible: bool) -> Self {
        self.feasible = feasible;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    /// Human annotation: can this factor be set by intervention (e.g. diet)?
    pub fn feasible(&self) -> bool {
        self.feasible
    }

    pub fn label(&self, row: usize) -> &str {
        &self.categories[self.values[row]]
    }

    pub fn category_id(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }

    /// Number of distinct category ids actually present.
    pub fn distinct_present(&self) -> usize {
        let mut seen = vec![false; self.categories.len()];
        for &v in &self.values {
            seen[v] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }

    fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            values: rows.iter().map(|&r| self.values[r]).collect(),
            categories: self.categories.clone(),
            feasible: self.feasible,
        }
    }
}

/// A non-negative real-valued measurement column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    name: String,
    values: Vec<f64>,
    kind: FeatureKind,
}

impl FeatureColumn {
    pub fn new(name: impl Into<String>, values: Vec<f64>, kind: FeatureKind) -> Result<Self> {
        let name = name.into();
        for (row, &v) in values.iter().enumerate() {
            if v.is_nan() {
                return Err(Error::InvalidColumn(format!(
                    "feature {name:?} has a missing value in row {row}"
                )));
            }
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidColumn(format!(
                    "feature {name:?} has invalid value {v} in row {row}"
                )));
            }
        }
        Ok(Self { name, values, kind })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            values: rows.iter().map(|&r| self.values[r]).collect(),
            kind: self.kind,
        }
    }
}

/// Samples × (factors + features). Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    factors: Vec<FactorColumn>,
    features: Vec<FeatureColumn>,
    n_samples: usize,
    provenance: String,
}

impl Dataset {
    pub fn new(
        factors: Vec<FactorColumn>,
        features: Vec<FeatureColumn>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let n_samples = factors
            .first()
            .map(|f| f.values.len())
            .or_else(|| features.first().map(|f| f.values.len()))
            .ok_or(Error::Empty)?;
        if n_samples == 0 {
            return Err(Error::Empty);
        }
        let mut names = HashSet::new();
        let lengths = factors
            .iter()
            .map(|f| (&f.name, f.values.len()))
            .chain(features.iter().map(|f| (&f.name, f.values.len())));
        for (name, len) in lengths {
            if len != n_samples {
                return Err(Error::LengthMismatch {
                    column: name.clone(),
                    expected: n_samples,
                    found: len,
                });
            }
            if !names.insert(name.as_str()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        Ok(Self {
            factors,
            features,
            n_samples,
            provenance: provenance.into(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn factors(&self) -> &[FactorColumn] {
        &self.factors
    }

    pub fn features(&self) -> &[FeatureColumn] {
        &self.features
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn factor(&self, name: &str) -> Result<&FactorColumn> {
        self.factors
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFactor(name.to_string()))
    }

    pub fn feature(&self, name: &str) -> Result<&FeatureColumn> {
        self.features
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    /// New dataset holding only `rows` (in the given order, duplicates kept).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty);
        }
        if let Some(&r) = rows.iter().find(|&&r| r >= self.n_samples) {
            return Err(Error::InvalidParameter(format!(
                "row {r} out of range for {} samples",
                self.n_samples
            )));
        }
        Ok(Self {
            factors: self.factors.iter().map(|f| f.select_rows(rows)).collect(),
            features: self.features.iter().map(|f| f.select_rows(rows)).collect(),
            n_samples: rows.len(),
            provenance: self.provenance.clone(),
        })
    }

    /// New dataset restricted to the named features (factors are kept).
    pub fn select_features<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let features = names
            .iter()
            .map(|n| self.feature(n.as_ref()).cloned())
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.factors.clone(), features, self.provenance.clone())
    }

    /// Rows where `factor_name == category_label`; all columns preserved.
    pub fn stratify(&self, factor_name: &str, category_label: &str) -> Result<Self> {
        let factor = self.factor(factor_name)?;
        let id = factor
            .category_id(category_label)
            .ok_or_else(|| Error::UnknownCategory {
                factor: factor_name.to_string(),
                category: category_label.to_string(),
            })?;
        let rows: Vec<usize> = (0..self.n_samples)
            .filter(|&r| factor.values[r] == id)
            .collect();
        if rows.is_empty() {
            return Err(Error::EmptyStratum {
                factor: factor_name.to_string(),
                category: category_label.to_string(),
            });
        }
        self.select_rows(&rows)
    }

    /// Divides each selected feature by its row's sum over the selected
    /// features. Unselected columns are left untouched.
    pub fn normalize_relative(&self, filter: KindFilter) -> Result<Self> {
        let selected: Vec<usize> = (0..self.features.len())
            .filter(|&j| filter.matches(self.features[j].kind))
            .collect();
        let mut out = self.clone();
        if selected.is_empty() {
            return Ok(out);
        }
        for row in 0..self.n_samples {
            let sum: f64 = selected.iter().map(|&j| self.features[j].values[row]).sum();
            if sum <= 0.0 {
                return Err(Error::ZeroRowSum(row));
            }
            for &j in &selected {
                out.features[j].values[row] = self.features[j].values[row] / sum;
            }
        }
        Ok(out)
    }
}

/// Borrowed selection of rows and feature columns used for training and
/// prediction. Feature order is the order the model sees.
#[derive(Debug, Clone)]
pub struct DatasetView<'a> {
    dataset: &'a Dataset,
    rows: Vec<usize>,
    features: Vec<usize>,
}

impl<'a> DatasetView<'a> {
    /// All rows, all features.
    pub fn full(dataset: &'a Dataset) -> Self {
        Self {
            dataset,
            rows: (0..dataset.n_samples).collect(),
            features: (0..dataset.features.len()).collect(),
        }
    }

    /// `rows` of `dataset` restricted to `feature_names` (all when `None`).
    pub fn new<S: AsRef<str>>(
        dataset: &'a Dataset,
        rows: Vec<usize>,
        feature_names: Option<&[S]>,
    ) -> Result<Self> {
        if let Some(&r) = rows.iter().find(|&&r| r >= dataset.n_samples) {
            return Err(Error::InvalidParameter(format!(
                "row {r} out of range for {} samples",
                dataset.n_samples
            )));
        }
        let features = match feature_names {
            Some(names) => names
                .iter()
                .map(|n| dataset.feature_index(n.as_ref()))
                .collect::<Result<Vec<_>>>()?,
            None => (0..dataset.features.len()).collect(),
        };
        Ok(Self {
            dataset,
            rows,
            features,
        })
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// Full-length value columns of the selected features, in view order.
    pub fn columns(&self) -> Vec<&'a [f64]> {
        self.features
            .iter()
            .map(|&j| self.dataset.features[j].values.as_slice())
            .collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features
            .iter()
            .map(|&j| self.dataset.features[j].name.clone())
            .collect()
    }
}

/// Which feature kinds an operation applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KindFilter {
    #[default]
    All,
    Only(FeatureKind),
}

impl KindFilter {
    pub fn matches(self, kind: FeatureKind) -> bool {
        match self {
            KindFilter::All => true,
            KindFilter::Only(k) => k == kind,
        }
    }
}

/// A disjoint, exhaustive train/test split of sample indices (both sorted).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Default train fraction (3:1).
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.75;

/// Training-set size: round-half-to-even of `n · fraction`, which must leave
/// at least one sample on each side.
pub fn train_size(n: usize, train_fraction: f64) -> Result<usize> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction {train_fraction} is not in (0, 1)"
        )));
    }
    let train = (n as f64 * train_fraction).round_ties_even() as usize;
    if n < 2 || train < 1 || train > n - 1 {
        return Err(Error::DegenerateSplit { n, train });
    }
    Ok(train)
}

/// Uniformly random, unstratified split of `0..n`.
pub fn partition<R: Rng + ?Sized>(n: usize, train_fraction: f64, rng: &mut R) -> Result<Partition> {
    let k = train_size(n, train_fraction)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut train_indices = idx[..k].to_vec();
    let mut test_indices = idx[k..].to_vec();
    train_indices.sort_unstable();
    test_indices.sort_unstable();
    Ok(Partition {
        train_indices,
        test_indices,
    })
}

/// Split that keeps each class's train share close to `train_fraction`.
/// Each class with at least two members contributes
/// `round_ties_even(n_c · fraction)` (clamped to `1..n_c-1`) samples to the
/// training side; singleton classes go to training. The totals can differ
/// from the unstratified size by rounding.
pub fn partition_stratified<R: Rng + ?Sized>(
    labels: &[usize],
    train_fraction: f64,
    rng: &mut R,
) -> Result<Partition> {
    let n = labels.len();
    train_size(n, train_fraction)?;
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut train_indices = Vec::new();
    let mut test_indices = Vec::new();
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..n).filter(|&r| labels[r] == class).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(rng);
        let nc = members.len();
        let k = if nc < 2 {
            nc
        } else {
            ((nc as f64 * train_fraction).round_ties_even() as usize).clamp(1, nc - 1)
        };
        train_indices.extend_from_slice(&members[..k]);
        test_indices.extend_from_slice(&members[k..]);
    }
    if test_indices.is_empty() || train_indices.is_empty() {
        return Err(Error::DegenerateSplit {
            n,
            train: train_indices.len(),
        });
    }
    train_indices.sort_unstable();
    test_indices.sort_unstable();
    Ok(Partition {
        train_indices,
        test_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn cancer_ds() -> Dataset {
        let mut labels = vec!["A375"; 10];
        labels.extend(vec!["WM47"; 6]);
        let factor = FactorColumn::from_labels("cancer", &labels).unwrap();
        let feat = FeatureColumn::new(
            "x",
            (0..16).map(|i| i as f64).collect(),
            FeatureKind::SerumMetabolite,
        )
        .unwrap();
        Dataset::new(vec![factor], vec![feat], "test").unwrap()
    }

    fn rows_ds(rows: &[&[f64]]) -> Dataset {
        let d = rows[0].len();
        let features = (0..d)
            .map(|j| {
                FeatureColumn::new(
                    format!("f{j}"),
                    rows.iter().map(|r| r[j]).collect(),
                    FeatureKind::BacterialAbundance,
                )
                .unwrap()
            })
            .collect();
        Dataset::new(vec![], features, "rows").unwrap()
    }

    #[test]
    fn partition_three_to_one() {
        let p = partition(8, 0.75, &mut rng::stream(1)).unwrap();
        assert_eq!(p.train_indices.len(), 6);
        assert_eq!(p.test_indices.len(), 2);
    }

    #[test]
    fn partition_two_samples_is_degenerate() {
        // round(1.5) = 2 under ties-to-even, which empties the test side
        let err = partition(2, 0.75, &mut rng::stream(1)).unwrap_err();
        assert!(matches!(err, Error::DegenerateSplit { n: 2, train: 2 }));
    }

    #[test]
    fn partition_is_seed_deterministic() {
        let a = partition(100, 0.75, &mut rng::stream(42)).unwrap();
        let b = partition(100, 0.75, &mut rng::stream(42)).unwrap();
        assert_eq!(a, b);
        let c = partition(100, 0.75, &mut rng::stream(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn train_size_rounds_half_to_even() {
        assert_eq!(train_size(10, 0.75).unwrap(), 8); // 7.5 -> 8
        assert_eq!(train_size(6, 0.75).unwrap(), 4); // 4.5 -> 4
        assert!(train_size(10, 1.0).is_err());
    }

    #[test]
    fn stratified_partition_keeps_every_class_on_both_sides() {
        let labels: Vec<usize> = (0..40).map(|i| usize::from(i % 4 == 0)).collect();
        let p = partition_stratified(&labels, 0.75, &mut rng::stream(3)).unwrap();
        for class in 0..2 {
            assert!(p.train_indices.iter().any(|&r| labels[r] == class));
            assert!(p.test_indices.iter().any(|&r| labels[r] == class));
        }
        assert_eq!(p.train_indices.len() + p.test_indices.len(), 40);
    }

    #[test]
    fn stratify_filters_rows() {
        let ds = cancer_ds();
        let a = ds.stratify("cancer", "A375").unwrap();
        assert_eq!(a.n_samples(), 10);
        assert_eq!(a.factor("cancer").unwrap().distinct_present(), 1);
        assert_eq!(a.n_features(), 1);
    }

    #[test]
    fn stratify_errors() {
        let ds = cancer_ds();
        assert!(matches!(ds.stratify("dieet", "A375"), Err(Error::UnknownFactor(_))));
        assert!(matches!(
            ds.stratify("cancer", "WM3000"),
            Err(Error::UnknownCategory { .. })
        ));
    }

    #[test]
    fn stratify_declared_but_absent_category_is_empty() {
        let f = FactorColumn::new("g", vec![0, 0], vec!["a".into(), "b".into()]).unwrap();
        let x = FeatureColumn::new("x", vec![1.0, 2.0], FeatureKind::Generic).unwrap();
        let ds = Dataset::new(vec![f], vec![x], "").unwrap();
        assert!(matches!(ds.stratify("g", "b"), Err(Error::EmptyStratum { .. })));
    }

    #[test]
    fn normalize_examples() {
        let ds = rows_ds(&[&[2.0, 3.0, 5.0]]);
        let n = ds.normalize_relative(KindFilter::All).unwrap();
        let v: Vec<f64> = n.features().iter().map(|f| f.values()[0]).collect();
        assert_eq!(v, vec![0.2, 0.3, 0.5]);

        let zero = rows_ds(&[&[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0]]);
        assert!(matches!(
            zero.normalize_relative(KindFilter::All),
            Err(Error::ZeroRowSum(1))
        ));

        let single = rows_ds(&[&[4.0]]);
        let n = single.normalize_relative(KindFilter::All).unwrap();
        assert_eq!(n.features()[0].values(), &[1.0]);
    }

    #[test]
    fn normalize_leaves_other_kinds() {
        let a = FeatureColumn::new("a", vec![1.0], FeatureKind::BacterialAbundance).unwrap();
        let b = FeatureColumn::new("b", vec![3.0], FeatureKind::BacterialAbundance).unwrap();
        let m = FeatureColumn::new("m", vec![7.0], FeatureKind::SerumMetabolite).unwrap();
        let ds = Dataset::new(vec![], vec![a, b, m], "").unwrap();
        let n = ds
            .normalize_relative(KindFilter::Only(FeatureKind::BacterialAbundance))
            .unwrap();
        assert_eq!(n.features()[0].values(), &[0.25]);
        assert_eq!(n.features()[2].values(), &[7.0]);
    }

    #[test]
    fn construction_rejects_bad_columns() {
        assert!(FeatureColumn::new("x", vec![-0.5], FeatureKind::Generic).is_err());
        assert!(FeatureColumn::new("x", vec![f64::NAN], FeatureKind::Generic).is_err());
        assert!(FactorColumn::new("f", vec![2], vec!["a".into(), "b".into()]).is_err());
        assert!(FactorColumn::new("f", vec![0], vec!["a".into(), "a".into()]).is_err());
        assert!(FactorColumn::new("f", vec![], vec![]).is_err());

        let x = FeatureColumn::new("x", vec![1.0, 2.0], FeatureKind::Generic).unwrap();
        let y = FeatureColumn::new("x", vec![1.0, 2.0], FeatureKind::Generic).unwrap();
        assert!(matches!(
            Dataset::new(vec![], vec![x.clone(), y], ""),
            Err(Error::DuplicateColumn(_))
        ));
        let short = FeatureColumn::new("s", vec![1.0], FeatureKind::Generic).unwrap();
        assert!(matches!(
            Dataset::new(vec![], vec![x, short], ""),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn labels_are_encoded_by_first_appearance() {
        let f = FactorColumn::from_labels("diet", &["ND", "KD", "ND", "LCD"]).unwrap();
        assert_eq!(f.categories(), &["ND", "KD", "LCD"]);
        assert_eq!(f.values(), &[0, 1, 0, 2]);
    }

    proptest! {
        #[test]
        fn partition_is_disjoint_and_exhaustive(n in 2usize..300, frac in 0.05f64..0.95, seed: u64) {
            if let Ok(p) = partition(n, frac, &mut rng::stream(seed)) {
                let mut all: Vec<usize> = p.train_indices.iter().chain(&p.test_indices).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                prop_assert_eq!(p.train_indices.len(), (n as f64 * frac).round_ties_even() as usize);
            }
        }

        #[test]
        fn stratify_count_matches_category_count(labels in proptest::collection::vec(0usize..3, 1..50)) {
            let names: Vec<String> = labels.iter().map(|l| format!("c{l}")).collect();
            let f = FactorColumn::from_labels("g", &names).unwrap();
            let x = FeatureColumn::new("x", vec![1.0; names.len()], FeatureKind::Generic).unwrap();
            let ds = Dataset::new(vec![f], vec![x], "").unwrap();
            for cat in ds.factor("g").unwrap().categories().to_vec() {
                let expected = names.iter().filter(|n| **n == cat).count();
                prop_assert_eq!(ds.stratify("g", &cat).unwrap().n_samples(), expected);
            }
        }

        #[test]
        fn normalize_is_idempotent(rows in proptest::collection::vec(proptest::collection::vec(0.01f64..100.0, 3), 1..20)) {
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let ds = rows_ds(&refs);
            let once = ds.normalize_relative(KindFilter::All).unwrap();
            let twice = once.normalize_relative(KindFilter::All).unwrap();
            for (a, b) in once.features().iter().zip(twice.features()) {
                for (x, y) in a.values().iter().zip(b.values()) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
            for r in 0..once.n_samples() {
                let s: f64 = once.features().iter().map(|f| f.values()[r]).sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }
    }
}
