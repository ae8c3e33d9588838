//! Exact information measures over small discrete joint distributions, and a
//! plug-in estimator that bins a dataset into such a distribution.
//!
//! All quantities are in bits. `0 · log 0` is taken as 0.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Largest number of cells a table may have unless configured otherwise.
pub const DEFAULT_CELL_CAP: usize = 1_000_000;
/// Largest target-axis set searched exhaustively by the modulator checks.
pub const MAX_SUBSET_AXES: usize = 12;
/// Threshold for exact-table modulator checks.
pub const EXACT_EPS: f64 = 1e-9;
/// Default number of equal-frequency bins per continuous feature.
pub const DEFAULT_BINS: usize = 4;

const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub cardinality: usize,
}

/// Dense joint probability table. Cells are stored row-major: the last axis
/// varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPmf")]
pub struct JointPmf {
    axes: Vec<Axis>,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawPmf {
    axes: Vec<Axis>,
    probs: Vec<f64>,
}

impl TryFrom<RawPmf> for JointPmf {
    type Error = Error;

    fn try_from(raw: RawPmf) -> Result<Self> {
        JointPmf::new(raw.axes, raw.probs)
    }
}

fn cell_count(axes: &[Axis]) -> u128 {
    axes.iter().map(|a| a.cardinality as u128).product()
}

impl JointPmf {
    pub fn new(axes: Vec<Axis>, probs: Vec<f64>) -> Result<Self> {
        Self::with_cap(axes, probs, DEFAULT_CELL_CAP)
    }

    pub fn with_cap(axes: Vec<Axis>, probs: Vec<f64>, cell_cap: usize) -> Result<Self> {
        let mut names = HashSet::new();
        for a in &axes {
            if a.cardinality == 0 {
                return Err(Error::InvalidPmf(format!("axis {:?} has cardinality 0", a.name)));
            }
            if !names.insert(a.name.as_str()) {
                return Err(Error::InvalidPmf(format!("axis {:?} appears twice", a.name)));
            }
        }
        let cells = cell_count(&axes);
        if cells > cell_cap as u128 {
            return Err(Error::CellCapExceeded { cells, cap: cell_cap });
        }
        if probs.len() as u128 != cells {
            return Err(Error::InvalidPmf(format!(
                "{} probabilities supplied for {cells} cells",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidPmf(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidPmf(format!("probabilities sum to {total}")));
        }
        Ok(Self { axes, probs })
    }

    /// Normalizes non-negative weights (e.g. counts) into a table.
    pub fn from_weights(axes: Vec<Axis>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidPmf("weights sum to zero".into()));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Self::new(axes, probs)
    }

    /// Product distribution of two tables over disjoint axes.
    pub fn product(a: &JointPmf, b: &JointPmf) -> Result<Self> {
        let mut axes = a.axes.clone();
        axes.extend(b.axes.iter().cloned());
        let probs = a
            .probs
            .iter()
            .flat_map(|&pa| b.probs.iter().map(move |&pb| pa * pb))
            .collect();
        Self::new(axes, probs)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn axis_names(&self) -> Vec<&str> {
        self.axes.iter().map(|a| a.name.as_str()).collect()
    }

    /// Probability of one cell, addressed by one category per axis.
    pub fn prob(&self, index: &[usize]) -> f64 {
        self.probs[self.flat_index(index)]
    }

    fn flat_index(&self, index: &[usize]) -> usize {
        index
            .iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, a)| acc * a.cardinality + i)
    }

    fn resolve(&self, names: &[&str]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(names.len());
        for &n in names {
            let i = self
                .axes
                .iter()
                .position(|a| a.name == n)
                .ok_or_else(|| Error::UnknownAxis(n.to_string()))?;
            if out.contains(&i) {
                return Err(Error::OverlappingAxes(n.to_string()));
            }
            out.push(i);
        }
        Ok(out)
    }

    fn check_disjoint(sets: &[&[usize]], names: &[&[&str]]) -> Result<()> {
        let mut seen = HashSet::new();
        for (set, set_names) in sets.iter().zip(names) {
            for (&i, &n) in set.iter().zip(set_names.iter()) {
                if !seen.insert(i) {
                    return Err(Error::OverlappingAxes(n.to_string()));
                }
            }
        }
        Ok(())
    }

    /// Marginal table over `axes` (given as axis positions, in that order).
    fn marginal(&self, axes: &[usize]) -> Vec<f64> {
        let size: usize = axes.iter().map(|&i| self.axes[i].cardinality).product();
        let mut out = vec![0.0; size];
        if axes.is_empty() {
            out[0] = self.probs.iter().sum();
            return out;
        }
        // Stride of each original axis inside the marginal table.
        let mut mstride = vec![0usize; self.axes.len()];
        let mut s = 1;
        for &i in axes.iter().rev() {
            mstride[i] = s;
            s *= self.axes[i].cardinality;
        }
        let mut counter = vec![0usize; self.axes.len()];
        let mut target = 0usize;
        for &p in &self.probs {
            out[target] += p;
            // odometer increment, last axis fastest
            for ax in (0..self.axes.len()).rev() {
                counter[ax] += 1;
                target += mstride[ax];
                if counter[ax] < self.axes[ax].cardinality {
                    break;
                }
                target -= mstride[ax] * counter[ax];
                counter[ax] = 0;
            }
        }
        out
    }

    fn entropy_of(&self, axes: &[usize]) -> f64 {
        self.marginal(axes)
            .into_iter()
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.log2())
            .sum()
    }

    /// Joint entropy of the marginal over `subset`. Empty subset gives 0.
    pub fn entropy(&self, subset: &[&str]) -> Result<f64> {
        let idx = self.resolve(subset)?;
        Ok(self.entropy_of(&idx))
    }

    /// `H(target | given) = H(target, given) − H(given)`.
    pub fn conditional_entropy(&self, target: &[&str], given: &[&str]) -> Result<f64> {
        let t = self.resolve(target)?;
        let g = self.resolve(given)?;
        Self::check_disjoint(&[&t, &g], &[target, given])?;
        let joint: Vec<usize> = t.iter().chain(&g).copied().collect();
        Ok((self.entropy_of(&joint) - self.entropy_of(&g)).max(0.0))
    }

    /// `I(a; b) = H(a) − H(a | b)`, clamped at 0.
    pub fn mutual_information(&self, a: &[&str], b: &[&str]) -> Result<f64> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::EmptyAxisSet);
        }
        let ia = self.resolve(a)?;
        let ib = self.resolve(b)?;
        Self::check_disjoint(&[&ia, &ib], &[a, b])?;
        let joint: Vec<usize> = ia.iter().chain(&ib).copied().collect();
        let mi = self.entropy_of(&ia) + self.entropy_of(&ib) - self.entropy_of(&joint);
        Ok(mi.max(0.0))
    }

    /// `I(a; b | given) = H(a | given) − H(a | given, b)`, clamped at 0.
    pub fn conditional_mutual_information(
        &self,
        a: &[&str],
        b: &[&str],
        given: &[&str],
    ) -> Result<f64> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::EmptyAxisSet);
        }
        let ia = self.resolve(a)?;
        let ib = self.resolve(b)?;
        let ig = self.resolve(given)?;
        Self::check_disjoint(&[&ia, &ib, &ig], &[a, b, given])?;
        let cat = |xs: &[&[usize]]| xs.concat();
        let h_ag = self.entropy_of(&cat(&[&ia, &ig]));
        let h_g = self.entropy_of(&ig);
        let h_agb = self.entropy_of(&cat(&[&ia, &ig, &ib]));
        let h_gb = self.entropy_of(&cat(&[&ig, &ib]));
        Ok(((h_ag - h_g) - (h_agb - h_gb)).max(0.0))
    }

    /// Smallest non-empty subset of `targets` carrying more than `eps` bits
    /// about `factors`, searched by increasing size. `None` if there is none.
    pub fn modulator_witness(
        &self,
        factors: &[&str],
        targets: &[&str],
        eps: f64,
    ) -> Result<Option<Vec<String>>> {
        self.search_subsets(targets, |subset| self.mutual_information(factors, subset), eps)
    }

    /// Whether some non-empty subset of `targets` has `I(factors; subset) > eps`.
    pub fn is_modulator(&self, factors: &[&str], targets: &[&str], eps: f64) -> Result<bool> {
        Ok(self.modulator_witness(factors, targets, eps)?.is_some())
    }

    /// Like [`modulator_witness`](Self::modulator_witness) with
    /// `I(f1; subset | f2)`.
    pub fn robust_modulator_witness(
        &self,
        f1: &[&str],
        f2: &[&str],
        targets: &[&str],
        eps: f64,
    ) -> Result<Option<Vec<String>>> {
        self.search_subsets(
            targets,
            |subset| self.conditional_mutual_information(f1, subset, f2),
            eps,
        )
    }

    pub fn is_robust_modulator(
        &self,
        f1: &[&str],
        f2: &[&str],
        targets: &[&str],
        eps: f64,
    ) -> Result<bool> {
        Ok(self.robust_modulator_witness(f1, f2, targets, eps)?.is_some())
    }

    fn search_subsets<F>(&self, targets: &[&str], measure: F, eps: f64) -> Result<Option<Vec<String>>>
    where
        F: Fn(&[&str]) -> Result<f64>,
    {
        if targets.is_empty() {
            return Err(Error::EmptyAxisSet);
        }
        if targets.len() > MAX_SUBSET_AXES {
            return Err(Error::SubsetSearchTooLarge {
                size: targets.len(),
                cap: MAX_SUBSET_AXES,
            });
        }
        self.resolve(targets)?;
        let n = targets.len();
        let mut masks: Vec<u32> = (1..(1u32 << n)).collect();
        masks.sort_by_key(|m| (m.count_ones(), *m));
        for mask in masks {
            let subset: Vec<&str> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| targets[i])
                .collect();
            if measure(&subset)? > eps {
                return Ok(Some(subset.into_iter().map(String::from).collect()));
            }
        }
        Ok(None)
    }
}

/// Equal-frequency bin ids for one column.
///
/// Edges sit at the empirical quantiles `sorted[⌊k·n/bins⌋]`, `k = 1..bins`;
/// a value lands in the bin counting the edges it reaches (`x ≥ edge`), so
/// equal values always share a bin. Empty bins are dropped and the rest
/// renumbered densely; a constant column becomes a single bin.
/// Returns `(bin id per row, number of bins)`.
pub fn quantile_bins(values: &[f64], bins: usize) -> (Vec<usize>, usize) {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..bins).map(|k| sorted[(k * n / bins).min(n - 1)]).collect();
    edges.dedup();
    let raw: Vec<usize> = values
        .iter()
        .map(|&x| edges.partition_point(|&e| e <= x))
        .collect();
    let mut present = vec![false; edges.len() + 1];
    for &b in &raw {
        present[b] = true;
    }
    let mut remap = vec![0usize; present.len()];
    let mut next = 0;
    for (i, &p) in present.iter().enumerate() {
        if p {
            remap[i] = next;
            next += 1;
        }
    }
    (raw.into_iter().map(|b| remap[b]).collect(), next)
}

/// Plug-in joint distribution of the named factors (as-is) and features
/// (quantile-binned into `bins` bins). Axes are named after the columns,
/// factors first.
pub fn empirical_joint<S: AsRef<str>>(
    ds: &Dataset,
    factor_names: &[S],
    feature_names: &[S],
    bins: usize,
) -> Result<JointPmf> {
    empirical_joint_with_cap(ds, factor_names, feature_names, bins, DEFAULT_CELL_CAP)
}

pub fn empirical_joint_with_cap<S: AsRef<str>>(
    ds: &Dataset,
    factor_names: &[S],
    feature_names: &[S],
    bins: usize,
    cell_cap: usize,
) -> Result<JointPmf> {
    if !feature_names.is_empty() && bins < 2 {
        return Err(Error::InvalidParameter(format!("bins must be at least 2, got {bins}")));
    }
    joint_from_columns(ds, factor_names, feature_names, |v| quantile_bins(v, bins), cell_cap)
}

/// Bin ids for fixed ascending `edges`: a value's bin is the number of
/// edges it reaches (`x ≥ edge`). Always `edges.len() + 1` bins.
pub fn edge_bins(values: &[f64], edges: &[f64]) -> (Vec<usize>, usize) {
    let ids = values.iter().map(|&x| edges.partition_point(|&e| e <= x)).collect();
    (ids, edges.len() + 1)
}

/// Like [`empirical_joint`], with every feature cut at the same fixed
/// `edges` instead of at its own quantiles.
pub fn empirical_joint_with_edges<S: AsRef<str>>(
    ds: &Dataset,
    factor_names: &[S],
    feature_names: &[S],
    edges: &[f64],
) -> Result<JointPmf> {
    if edges.is_empty() || edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "edges must be finite and strictly increasing".into(),
        ));
    }
    joint_from_columns(ds, factor_names, feature_names, |v| edge_bins(v, edges), DEFAULT_CELL_CAP)
}

fn joint_from_columns<S: AsRef<str>>(
    ds: &Dataset,
    factor_names: &[S],
    feature_names: &[S],
    bin: impl Fn(&[f64]) -> (Vec<usize>, usize),
    cell_cap: usize,
) -> Result<JointPmf> {
    if factor_names.is_empty() && feature_names.is_empty() {
        return Err(Error::EmptyAxisSet);
    }
    let mut axes = Vec::new();
    let mut columns: Vec<Vec<usize>> = Vec::new();
    for name in factor_names {
        let f = ds.factor(name.as_ref())?;
        axes.push(Axis {
            name: f.name().to_string(),
            cardinality: f.n_categories(),
        });
        columns.push(f.values().to_vec());
    }
    for name in feature_names {
        let f = ds.feature(name.as_ref())?;
        let (ids, k) = bin(f.values());
        axes.push(Axis {
            name: f.name().to_string(),
            cardinality: k,
        });
        columns.push(ids);
    }
    let cells = cell_count(&axes);
    if cells > cell_cap as u128 {
        return Err(Error::CellCapExceeded { cells, cap: cell_cap });
    }
    let mut counts = vec![0.0; cells as usize];
    for row in 0..ds.n_samples() {
        let flat = columns
            .iter()
            .zip(&axes)
            .fold(0, |acc, (col, a)| acc * a.cardinality + col[row]);
        counts[flat] += 1.0;
    }
    let n = ds.n_samples() as f64;
    let probs = counts.into_iter().map(|c| c / n).collect();
    JointPmf::with_cap(axes, probs, cell_cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FactorColumn, FeatureColumn, FeatureKind};
    use proptest::prelude::*;

    fn ax(name: &str, k: usize) -> Axis {
        Axis {
            name: name.into(),
            cardinality: k,
        }
    }

    fn binary_pair(p00: f64, p01: f64, p10: f64, p11: f64) -> JointPmf {
        JointPmf::new(vec![ax("F", 2), ax("S", 2)], vec![p00, p01, p10, p11]).unwrap()
    }

    /// Enumerates a joint over three binary axes from a function of the outcome.
    fn three_bits(names: [&str; 3], f: impl Fn(usize, usize, usize) -> f64) -> JointPmf {
        let mut probs = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    probs.push(f(a, b, c));
                }
            }
        }
        JointPmf::new(names.iter().map(|n| ax(n, 2)).collect(), probs).unwrap()
    }

    // Direct summation oracles, independent of the marginalization code.
    fn h(ps: &[f64]) -> f64 {
        ps.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
    }

    #[test]
    fn entropy_examples() {
        let p = binary_pair(0.25, 0.25, 0.25, 0.25);
        assert!((p.entropy(&["F"]).unwrap() - 1.0).abs() < 1e-12);
        let point = binary_pair(1.0, 0.0, 0.0, 0.0);
        assert_eq!(point.entropy(&["F", "S"]).unwrap(), 0.0);
        let skew = binary_pair(0.4, 0.4, 0.1, 0.1);
        // -0.8 log2 0.8 - 0.2 log2 0.2
        let oracle = -0.8 * 0.8f64.log2() - 0.2 * 0.2f64.log2();
        assert!((oracle - 0.721_928_094_887_362_3).abs() < 1e-15);
        assert!((skew.entropy(&["F"]).unwrap() - oracle).abs() < 1e-12);
        assert!(matches!(p.entropy(&["Q"]), Err(Error::UnknownAxis(_))));
    }

    #[test]
    fn conditional_entropy_examples() {
        let indep = JointPmf::product(
            &JointPmf::new(vec![ax("F", 2)], vec![0.3, 0.7]).unwrap(),
            &JointPmf::new(vec![ax("S", 3)], vec![0.2, 0.5, 0.3]).unwrap(),
        )
        .unwrap();
        let hf = indep.entropy(&["F"]).unwrap();
        assert!((indep.conditional_entropy(&["F"], &["S"]).unwrap() - hf).abs() < 1e-12);

        let det = binary_pair(0.5, 0.0, 0.0, 0.5);
        assert!(det.conditional_entropy(&["F"], &["S"]).unwrap().abs() < 1e-12);

        // H(F|S) = Σ_s p(s) H(F|S=s); each column is (0.8, 0.2).
        let p = binary_pair(0.4, 0.1, 0.1, 0.4);
        let oracle = 0.5 * h(&[0.8, 0.2]) + 0.5 * h(&[0.2, 0.8]);
        assert!((p.conditional_entropy(&["F"], &["S"]).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - 0.721_928).abs() < 1e-6);

        assert!(matches!(
            p.conditional_entropy(&["F"], &["F"]),
            Err(Error::OverlappingAxes(_))
        ));
    }

    #[test]
    fn mutual_information_examples() {
        let corr = binary_pair(0.5, 0.0, 0.0, 0.5);
        assert!((corr.mutual_information(&["F"], &["S"]).unwrap() - 1.0).abs() < 1e-12);
        let indep = binary_pair(0.25, 0.25, 0.25, 0.25);
        assert!(indep.mutual_information(&["F"], &["S"]).unwrap().abs() < 1e-12);
        let p = binary_pair(0.4, 0.1, 0.1, 0.4);
        let oracle = 1.0 - h(&[0.8, 0.2]);
        assert!((oracle - 0.278_072).abs() < 1e-6);
        assert!((p.mutual_information(&["F"], &["S"]).unwrap() - oracle).abs() < 1e-12);
        assert!(matches!(p.mutual_information(&[], &["S"]), Err(Error::EmptyAxisSet)));
        assert!(matches!(
            p.mutual_information(&["F"], &["F"]),
            Err(Error::OverlappingAxes(_))
        ));
    }

    #[test]
    fn cmi_examples() {
        // a -> g -> b, each link a binary symmetric channel with flip 0.2
        let chain = three_bits(["a", "g", "b"], |a, g, b| {
            let flip = |x: usize, y: usize| if x == y { 0.8 } else { 0.2 };
            0.5 * flip(a, g) * flip(g, b)
        });
        assert!(chain.conditional_mutual_information(&["a"], &["b"], &["g"]).unwrap() < 1e-12);
        assert!(chain.mutual_information(&["a"], &["b"]).unwrap() > 0.01);

        // given independent of (a, b)
        let ab = binary_pair(0.4, 0.1, 0.1, 0.4);
        let g = JointPmf::new(vec![ax("G", 2)], vec![0.3, 0.7]).unwrap();
        let joint = JointPmf::product(&ab, &g).unwrap();
        let cmi = joint.conditional_mutual_information(&["F"], &["S"], &["G"]).unwrap();
        let mi = joint.mutual_information(&["F"], &["S"]).unwrap();
        assert!((cmi - mi).abs() < 1e-10);

        // b = a xor g, enumerated over the 8 outcomes
        let xor = three_bits(["a", "g", "b"], |a, g, b| if b == a ^ g { 0.25 } else { 0.0 });
        assert!((xor.conditional_mutual_information(&["a"], &["b"], &["g"]).unwrap() - 1.0).abs() < 1e-12);
        assert!(xor.mutual_information(&["a"], &["b"]).unwrap() < 1e-12);
    }

    #[test]
    fn modulator_examples() {
        let indep = JointPmf::product(
            &JointPmf::new(vec![ax("F", 2)], vec![0.5, 0.5]).unwrap(),
            &three_bits(["S1", "S2", "S3"], |_, _, _| 0.125),
        )
        .unwrap();
        assert!(!indep.is_modulator(&["F"], &["S1", "S2", "S3"], EXACT_EPS).unwrap());

        // F copied into S2
        let mut probs = Vec::new();
        for f in 0..2 {
            for s1 in 0..2 {
                for s2 in 0..2 {
                    for _s3 in 0..2 {
                        let _ = s1;
                        probs.push(if s2 == f { 1.0 / 8.0 } else { 0.0 });
                    }
                }
            }
        }
        let copy = JointPmf::new(vec![ax("F", 2), ax("S1", 2), ax("S2", 2), ax("S3", 2)], probs).unwrap();
        assert_eq!(
            copy.modulator_witness(&["F"], &["S1", "S2", "S3"], EXACT_EPS).unwrap(),
            Some(vec!["S2".to_string()])
        );

        // F = S1 xor S2: no singleton is informative, the pair is
        let xor = three_bits(["F", "S1", "S2"], |f, s1, s2| if f == s1 ^ s2 { 0.25 } else { 0.0 });
        assert!(xor.mutual_information(&["F"], &["S1"]).unwrap() < 1e-12);
        assert!(xor.mutual_information(&["F"], &["S2"]).unwrap() < 1e-12);
        assert_eq!(
            xor.modulator_witness(&["F"], &["S1", "S2"], EXACT_EPS).unwrap(),
            Some(vec!["S1".to_string(), "S2".to_string()])
        );
    }

    #[test]
    fn robust_modulator_examples() {
        // F1 -> F2 -> S
        let chain = three_bits(["F1", "F2", "S"], |a, g, b| {
            let flip = |x: usize, y: usize| if x == y { 0.9 } else { 0.1 };
            0.5 * flip(a, g) * flip(g, b)
        });
        assert!(!chain.is_robust_modulator(&["F1"], &["F2"], &["S"], EXACT_EPS).unwrap());
        assert!(chain.is_modulator(&["F1"], &["S"], EXACT_EPS).unwrap());

        // constant F2: robust verdict equals the plain one
        let base = binary_pair(0.4, 0.1, 0.1, 0.4);
        let c = JointPmf::new(vec![ax("C", 1)], vec![1.0]).unwrap();
        let with_c = JointPmf::product(&base, &c).unwrap();
        assert_eq!(
            with_c.is_robust_modulator(&["F"], &["C"], &["S"], EXACT_EPS).unwrap(),
            with_c.is_modulator(&["F"], &["S"], EXACT_EPS).unwrap()
        );

        let xor = three_bits(["F1", "F2", "S"], |a, g, s| if s == a ^ g { 0.25 } else { 0.0 });
        assert!(xor.is_robust_modulator(&["F1"], &["F2"], &["S"], EXACT_EPS).unwrap());
        assert!(!xor.is_modulator(&["F1"], &["S"], EXACT_EPS).unwrap());
    }

    #[test]
    fn subset_search_is_capped() {
        let axes: Vec<Axis> = (0..14).map(|i| ax(&format!("S{i}"), 1)).chain([ax("F", 2)]).collect();
        let p = JointPmf::new(axes, vec![0.5, 0.5]).unwrap();
        let targets: Vec<String> = (0..13).map(|i| format!("S{i}")).collect();
        let refs: Vec<&str> = targets.iter().map(String::as_str).collect();
        assert!(matches!(
            p.is_modulator(&["F"], &refs, EXACT_EPS),
            Err(Error::SubsetSearchTooLarge { size: 13, .. })
        ));
    }

    #[test]
    fn pmf_validation() {
        assert!(JointPmf::new(vec![ax("F", 2)], vec![0.5, 0.6]).is_err());
        assert!(JointPmf::new(vec![ax("F", 2)], vec![1.5, -0.5]).is_err());
        assert!(JointPmf::new(vec![ax("F", 0)], vec![]).is_err());
        assert!(matches!(
            JointPmf::with_cap(vec![ax("F", 10), ax("G", 10)], vec![0.01; 100], 50),
            Err(Error::CellCapExceeded { .. })
        ));
        let json = r#"{"axes":[{"name":"F","cardinality":2}],"probs":[0.5,0.4]}"#;
        assert!(serde_json::from_str::<JointPmf>(json).is_err());
    }

    #[test]
    fn quantile_binning() {
        let (ids, k) = quantile_bins(&[5.0, 1.0, 3.0, 7.0], 2);
        assert_eq!(k, 2);
        assert_eq!(ids, vec![1, 0, 0, 1]);
        let (ids, k) = quantile_bins(&[2.0; 6], 4);
        assert_eq!(k, 1);
        assert_eq!(ids, vec![0; 6]);
        let (ids, k) = quantile_bins(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 4);
        assert_eq!(k, 2);
        assert_eq!(ids, vec![0, 0, 0, 1, 1, 1]);
    }

    fn small_ds(labels: &[&str], x: &[f64]) -> Dataset {
        Dataset::new(
            vec![FactorColumn::from_labels("F", labels).unwrap()],
            vec![FeatureColumn::new("x", x.to_vec(), FeatureKind::Generic).unwrap()],
            "",
        )
        .unwrap()
    }

    #[test]
    fn empirical_joint_examples() {
        let ds = small_ds(&["a", "a", "b", "b"], &[0.1, 0.2, 0.8, 0.9]);
        let p = empirical_joint(&ds, &["F"], &["x"], 2).unwrap();
        assert!((p.mutual_information(&["F"], &["x"]).unwrap() - 1.0).abs() < 1e-12);

        let ds = small_ds(&["a", "a", "a", "b"], &[1.0, 2.0, 3.0, 4.0]);
        let p = empirical_joint::<&str>(&ds, &["F"], &[], 4).unwrap();
        assert_eq!(p.probs(), &[0.75, 0.25]);

        let constant = small_ds(&["a", "b", "a", "b"], &[3.0; 4]);
        let p = empirical_joint(&constant, &["F"], &["x"], 4).unwrap();
        assert_eq!(p.axes()[1].cardinality, 1);
        assert_eq!(p.mutual_information(&["F"], &["x"]).unwrap(), 0.0);

        assert!(matches!(
            empirical_joint_with_cap(&ds, &["F"], &["x"], 4, 3),
            Err(Error::CellCapExceeded { .. })
        ));
        assert!(matches!(
            empirical_joint(&ds, &["F"], &["x"], 1),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn fixed_edges() {
        let (ids, k) = edge_bins(&[0.5, 1.0, 1.5, 3.0], &[1.0, 2.0]);
        assert_eq!((ids, k), (vec![0, 1, 1, 2], 3));
        let ds = small_ds(&["a", "b", "a", "b"], &[0.2, 1.2, 0.9, 5.0]);
        let p = empirical_joint_with_edges(&ds, &["F"], &["x"], &[1.0]).unwrap();
        assert!((p.mutual_information(&["F"], &["x"]).unwrap() - 1.0).abs() < 1e-12);
        for bad in [&[][..], &[2.0, 1.0][..], &[f64::NAN][..]] {
            assert!(matches!(
                empirical_joint_with_edges(&ds, &["F"], &["x"], bad),
                Err(Error::InvalidParameter(_))
            ));
        }
    }

    fn random_pmf(weights: &[f64], k: usize) -> JointPmf {
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        // three axes of cardinality k, 2, k
        JointPmf::from_weights(vec![ax("a", k), ax("m", 2), ax("b", k)], probs).unwrap()
    }

    /// Σ p(a,b,g) log2 [p(a,b,g) p(g) / (p(a,g) p(b,g))] for axes (a, g, b).
    fn cmi_by_summation(p: &JointPmf) -> f64 {
        let (ka, kg, kb) = (p.axes()[0].cardinality, p.axes()[1].cardinality, p.axes()[2].cardinality);
        let mut pg = vec![0.0; kg];
        let mut pag = vec![vec![0.0; kg]; ka];
        let mut pbg = vec![vec![0.0; kg]; kb];
        for a in 0..ka {
            for g in 0..kg {
                for b in 0..kb {
                    let v = p.prob(&[a, g, b]);
                    pg[g] += v;
                    pag[a][g] += v;
                    pbg[b][g] += v;
                }
            }
        }
        let mut s = 0.0;
        for a in 0..ka {
            for g in 0..kg {
                for b in 0..kb {
                    let v = p.prob(&[a, g, b]);
                    if v > 0.0 {
                        s += v * (v * pg[g] / (pag[a][g] * pbg[b][g])).log2();
                    }
                }
            }
        }
        s
    }

    proptest! {
        #[test]
        fn mi_symmetric_and_bounded(w in proptest::collection::vec(0.0f64..1.0, 18)) {
            prop_assume!(w.iter().sum::<f64>() > 0.1);
            let p = random_pmf(&w, 3);
            let ab = p.mutual_information(&["a"], &["b", "m"]).unwrap();
            let ba = p.mutual_information(&["b", "m"], &["a"]).unwrap();
            prop_assert!((ab - ba).abs() < 1e-10);
            let ha = p.entropy(&["a"]).unwrap();
            let hb = p.entropy(&["b", "m"]).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!(ab <= ha.min(hb) + 1e-12);
        }

        #[test]
        fn markov_chain_has_zero_cmi(
            pa in proptest::collection::vec(0.01f64..1.0, 3),
            chan1 in proptest::collection::vec(0.01f64..1.0, 6),
            chan2 in proptest::collection::vec(0.01f64..1.0, 6),
        ) {
            // p(a) p(m|a) p(b|m) with random channel matrices
            let norm = |v: &[f64]| { let s: f64 = v.iter().sum(); v.iter().map(|x| x / s).collect::<Vec<_>>() };
            let pa = norm(&pa);
            let rows1: Vec<Vec<f64>> = chan1.chunks(2).map(norm).collect();
            let rows2: Vec<Vec<f64>> = chan2.chunks(3).map(norm).collect();
            let mut w = Vec::new();
            for a in 0..3 { for m in 0..2 { for b in 0..3 { w.push(pa[a] * rows1[a][m] * rows2[m][b]); } } }
            let p = random_pmf(&w, 3);
            prop_assert!(p.conditional_mutual_information(&["a"], &["b"], &["m"]).unwrap() <= 1e-12);
        }

        #[test]
        fn cmi_matches_summation(w in proptest::collection::vec(0.0f64..1.0, 18)) {
            prop_assume!(w.iter().sum::<f64>() > 0.1);
            let p = random_pmf(&w, 3);
            let cmi = p.conditional_mutual_information(&["a"], &["b"], &["m"]).unwrap();
            prop_assert!((cmi - cmi_by_summation(&p).max(0.0)).abs() < 1e-10);
        }
    }
}
