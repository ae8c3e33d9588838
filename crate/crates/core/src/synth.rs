//! Synthetic populations with known dependence structure.
//!
//! Every feature is log-normal: `x = exp(shift + noise_sd · z)` with `z`
//! standard normal and a class-dependent `shift`. Information measures are
//! invariant under the monotone map `exp`, so the ground truth for the
//! continuous kinds is computed on the log scale, in units of `noise_sd`,
//! where each class-conditional density is a mixture of unit normals.
//!
//! Column order is always noise features first, then signal features.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FactorColumn, FeatureColumn, FeatureKind};
use crate::error::{Error, Result};
use crate::info::{Axis, JointPmf};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Binary factor `F`, all features independent noise.
    Independent,
    /// `F` shifts the mean of `signal_0` by `effect_size · noise_sd`.
    DirectModulation,
    /// `F1 → F2` through a binary symmetric channel with flip probability
    /// `flip_prob`; `signal_0` is shifted by `F2` only.
    MarkovChain,
    /// `signal_0` and `signal_1` have independent fair signs whose XOR is `F`.
    XorPair,
    /// `signal_0` lies above 1 for one class and below 1 for the other,
    /// with a gap of `effect_size · noise_sd` on the log scale.
    Separable,
    /// Four signal features, each shifted by `effect_size · noise_sd`.
    CurseOfDim,
    /// Binary strata `S`; in stratum `s0` only `signal_0` carries `F`, in
    /// `s1` only `signal_1`.
    StratifiedTransfer,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Independent => "independent",
            ScenarioKind::DirectModulation => "direct_modulation",
            ScenarioKind::MarkovChain => "markov_chain",
            ScenarioKind::XorPair => "xor_pair",
            ScenarioKind::Separable => "separable",
            ScenarioKind::CurseOfDim => "curse_of_dim",
            ScenarioKind::StratifiedTransfer => "stratified_transfer",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_").to_ascii_lowercase();
        [
            ScenarioKind::Independent,
            ScenarioKind::DirectModulation,
            ScenarioKind::MarkovChain,
            ScenarioKind::XorPair,
            ScenarioKind::Separable,
            ScenarioKind::CurseOfDim,
            ScenarioKind::StratifiedTransfer,
        ]
        .into_iter()
        .find(|k| k.name() == norm)
        .ok_or_else(|| Error::InvalidSpec(format!("unknown scenario {s:?}")))
    }
}

/// Number of signal features in a curse-of-dimensionality scenario.
pub const CURSE_SIGNALS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n_samples: usize,
    pub n_noise_features: usize,
    pub effect_size: f64,
    pub noise_sd: f64,
    /// `P(F = case)`.
    pub class_balance: f64,
    /// Channel flip probability (Markov chain only).
    pub flip_prob: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::DirectModulation,
            n_samples: 1000,
            n_noise_features: 5,
            effect_size: 2.0,
            noise_sd: 1.0,
            class_balance: 0.5,
            flip_prob: 0.1,
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, n_samples: usize, seed: u64) -> Self {
        Self {
            kind,
            n_samples,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_samples < 4 {
            return bad(format!("n_samples must be at least 4, got {}", self.n_samples));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd > 0.0) {
            return bad(format!("noise_sd must be positive, got {}", self.noise_sd));
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return bad(format!("class_balance must lie in (0, 1), got {}", self.class_balance));
        }
        if !(self.effect_size.is_finite() && self.effect_size >= 0.0) {
            return bad(format!("effect_size must be finite and non-negative, got {}", self.effect_size));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return bad(format!("flip_prob must lie in [0, 1], got {}", self.flip_prob));
        }
        if self.kind == ScenarioKind::Independent && self.n_noise_features == 0 {
            return bad("the independent scenario needs at least one noise feature".into());
        }
        Ok(())
    }
}

/// What the generator knows about the population it sampled from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub kind: ScenarioKind,
    /// Factor whose dependence the measures below describe.
    pub target: String,
    /// `I(target; all features)` in bits.
    pub mi: Option<f64>,
    /// Conditional MI in bits: given `F2` for the Markov chain, given `S`
    /// for the stratified scenario.
    pub cmi: Option<f64>,
    /// Exact table over the generator's discrete variables (value 1 is the
    /// `case` / `high` / set-bit state; ids are not dataset category ids).
    pub pmf: Option<JointPmf>,
    pub informative_features: Vec<String>,
    /// Accuracy of the Bayes classifier of `target` from the features.
    pub bayes_accuracy: Option<f64>,
}

const CLASS_LABELS: [&str; 2] = ["ctrl", "case"];
const MEDIATOR_LABELS: [&str; 2] = ["low", "high"];
const STRATUM_LABELS: [&str; 2] = ["s0", "s1"];

fn normal<R: Rng>(r: &mut R) -> f64 {
    r.sample(StandardNormal)
}

fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Samples a dataset and its ground truth. Identical specs give identical
/// datasets.
pub fn generate(spec: &ScenarioSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let mut r = rng::child_stream(spec.seed, rng::tag::SCENARIO, 0);
    let n = spec.n_samples;
    let sd = spec.noise_sd;
    let pi = spec.class_balance;
    let delta = spec.effect_size;
    let n_signals = match spec.kind {
        ScenarioKind::Independent => 0,
        ScenarioKind::DirectModulation | ScenarioKind::MarkovChain | ScenarioKind::Separable => 1,
        ScenarioKind::XorPair | ScenarioKind::StratifiedTransfer => 2,
        ScenarioKind::CurseOfDim => CURSE_SIGNALS,
    };
    let n_noise = spec.n_noise_features;
    let mut cols = vec![Vec::with_capacity(n); n_noise + n_signals];
    let mut target = Vec::with_capacity(n);
    let mut second = Vec::with_capacity(n);

    for _ in 0..n {
        let f = r.random_bool(pi);
        target.push(CLASS_LABELS[f as usize]);
        for col in cols.iter_mut().take(n_noise) {
            let z = normal(&mut r);
            col.push((sd * z).exp());
        }
        let sig = &mut cols[n_noise..];
        match spec.kind {
            ScenarioKind::Independent => {}
            ScenarioKind::DirectModulation => {
                sig[0].push((sd * (delta * f as u8 as f64 + normal(&mut r))).exp());
            }
            ScenarioKind::MarkovChain => {
                let f2 = f ^ r.random_bool(spec.flip_prob);
                second.push(MEDIATOR_LABELS[f2 as usize]);
                let z = normal(&mut r);
                sig[0].push((sd * (delta * f2 as u8 as f64 + z)).exp());
            }
            ScenarioKind::XorPair => {
                let b1 = r.random_bool(0.5);
                let b2 = b1 ^ f;
                for (col, b) in sig.iter_mut().zip([b1, b2]) {
                    let z = normal(&mut r);
                    let sign = if b { 1.0 } else { -1.0 };
                    col.push((sign * sd * z.abs()).exp());
                }
            }
            ScenarioKind::Separable => {
                let sign = if f { 1.0 } else { -1.0 };
                sig[0].push((sign * sd * (delta / 2.0 + normal(&mut r).abs())).exp());
            }
            ScenarioKind::CurseOfDim => {
                for col in sig.iter_mut() {
                    let z = normal(&mut r);
                    col.push((sd * (delta * f as u8 as f64 + z)).exp());
                }
            }
            ScenarioKind::StratifiedTransfer => {
                let s = r.random_bool(0.5);
                second.push(STRATUM_LABELS[s as usize]);
                for (k, col) in sig.iter_mut().enumerate() {
                    let active = (k == 1) == s;
                    let shift = if active { delta * f as u8 as f64 } else { 0.0 };
                    let z = normal(&mut r);
                    col.push((sd * (shift + z)).exp());
                }
            }
        }
    }

    let mut names: Vec<String> = (0..n_noise).map(|k| format!("noise_{k}")).collect();
    let signals: Vec<String> = (0..n_signals).map(|k| format!("signal_{k}")).collect();
    names.extend(signals.iter().cloned());
    let features = names
        .iter()
        .zip(cols)
        .map(|(name, values)| FeatureColumn::new(name.clone(), values, FeatureKind::Generic))
        .collect::<Result<Vec<_>>>()?;

    let (target_name, factors) = match spec.kind {
        ScenarioKind::MarkovChain => (
            "F1",
            vec![
                FactorColumn::from_labels("F1", &target)?,
                FactorColumn::from_labels("F2", &second)?,
            ],
        ),
        ScenarioKind::StratifiedTransfer => (
            "F",
            vec![
                FactorColumn::from_labels("S", &second)?,
                FactorColumn::from_labels("F", &target)?,
            ],
        ),
        _ => ("F", vec![FactorColumn::from_labels("F", &target)?]),
    };
    let provenance = format!("synthetic:{}:seed={}", spec.kind.name(), spec.seed);
    let ds = Dataset::new(factors, features, provenance)?;

    let truth = ground_truth(spec, target_name, signals)?;
    Ok((ds, truth))
}

fn ground_truth(spec: &ScenarioSpec, target: &str, signals: Vec<String>) -> Result<GroundTruth> {
    let pi = spec.class_balance;
    let priors = [1.0 - pi, pi];
    let delta = spec.effect_size;
    let shifted = |d: f64| MixtureModel::new(priors.to_vec(), vec![vec![(1.0, 0.0)], vec![(1.0, d)]]);
    let mut truth = GroundTruth {
        kind: spec.kind,
        target: target.to_string(),
        mi: None,
        cmi: None,
        pmf: None,
        informative_features: signals,
        bayes_accuracy: None,
    };
    match spec.kind {
        ScenarioKind::Independent => {
            truth.mi = Some(0.0);
            truth.bayes_accuracy = Some(pi.max(1.0 - pi));
        }
        ScenarioKind::DirectModulation => {
            let m = shifted(delta);
            truth.mi = Some(m.mutual_information());
            truth.bayes_accuracy = Some(m.bayes_accuracy());
        }
        ScenarioKind::CurseOfDim => {
            // The sum of the signal log-values is sufficient for F; it is
            // normal with a class shift of `CURSE_SIGNALS · delta` and sd
            // `√CURSE_SIGNALS`.
            let m = shifted(delta * (CURSE_SIGNALS as f64).sqrt());
            truth.mi = Some(m.mutual_information());
            truth.bayes_accuracy = Some(m.bayes_accuracy());
        }
        ScenarioKind::MarkovChain => {
            let p = spec.flip_prob;
            let m = MixtureModel::new(
                priors.to_vec(),
                vec![
                    vec![(1.0 - p, 0.0), (p, delta)],
                    vec![(p, 0.0), (1.0 - p, delta)],
                ],
            );
            truth.mi = Some(m.mutual_information());
            truth.cmi = Some(0.0);
            truth.bayes_accuracy = Some(m.bayes_accuracy());
            let axes = vec![
                Axis {
                    name: "F1".into(),
                    cardinality: 2,
                },
                Axis {
                    name: "F2".into(),
                    cardinality: 2,
                },
            ];
            let probs = vec![
                (1.0 - pi) * (1.0 - p),
                (1.0 - pi) * p,
                pi * p,
                pi * (1.0 - p),
            ];
            truth.pmf = Some(JointPmf::from_weights(axes, probs)?);
        }
        ScenarioKind::XorPair => {
            truth.mi = Some(binary_entropy(pi));
            truth.bayes_accuracy = Some(1.0);
            let axes = ["F", "signal_0", "signal_1"]
                .map(|name| Axis {
                    name: name.into(),
                    cardinality: 2,
                })
                .to_vec();
            let mut probs = vec![0.0; 8];
            for f in 0..2usize {
                for b1 in 0..2usize {
                    let b2 = b1 ^ f;
                    probs[f * 4 + b1 * 2 + b2] = priors[f] * 0.5;
                }
            }
            truth.pmf = Some(JointPmf::from_weights(axes, probs)?);
        }
        ScenarioKind::Separable => {
            truth.mi = Some(binary_entropy(pi));
            truth.bayes_accuracy = Some(1.0);
        }
        ScenarioKind::StratifiedTransfer => {
            let m = shifted(delta);
            truth.cmi = Some(m.mutual_information());
            truth.bayes_accuracy = Some(m.bayes_accuracy());
        }
    }
    Ok(truth)
}

/// Classes with prior weights, each a mixture of unit-variance normals
/// given as `(weight, mean)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    priors: Vec<f64>,
    classes: Vec<Vec<(f64, f64)>>,
}

/// Absolute error target of the adaptive quadrature, per segment.
const QUAD_TOL: f64 = 1e-10;
/// Integration range beyond the outermost component means, in sd.
const QUAD_REACH: f64 = 12.0;

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl MixtureModel {
    pub fn new(priors: Vec<f64>, classes: Vec<Vec<(f64, f64)>>) -> Self {
        Self { priors, classes }
    }

    fn density(&self, class: usize, x: f64) -> f64 {
        self.classes[class].iter().map(|&(w, m)| w * normal_pdf(x - m)).sum()
    }

    fn all_classes_equal(&self) -> bool {
        self.classes.windows(2).all(|w| w[0] == w[1])
    }

    /// Component means, sorted, bracketed by the integration limits.
    fn breakpoints(&self) -> Vec<f64> {
        let mut means: Vec<f64> = self.classes.iter().flatten().map(|&(_, m)| m).collect();
        means.sort_by(f64::total_cmp);
        means.dedup();
        let lo = means[0] - QUAD_REACH;
        let hi = means[means.len() - 1] + QUAD_REACH;
        let mut pts = vec![lo];
        pts.extend(means);
        pts.push(hi);
        pts
    }

    fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.breakpoints()
            .windows(2)
            .map(|w| adaptive_simpson(&f, w[0], w[1], QUAD_TOL))
            .sum()
    }

    /// `I(class; x)` in bits.
    pub fn mutual_information(&self) -> f64 {
        if self.all_classes_equal() {
            return 0.0;
        }
        let k = self.priors.len();
        let mi = self.integrate(|x| {
            let dens: Vec<f64> = (0..k).map(|c| self.density(c, x)).collect();
            let mix: f64 = (0..k).map(|c| self.priors[c] * dens[c]).sum();
            if mix <= 0.0 {
                return 0.0;
            }
            (0..k)
                .filter(|&c| dens[c] > 0.0 && self.priors[c] > 0.0)
                .map(|c| self.priors[c] * dens[c] * (dens[c] / mix).log2())
                .sum()
        });
        mi.max(0.0)
    }

    /// `∫ max_c π_c f_c(x) dx`.
    pub fn bayes_accuracy(&self) -> f64 {
        let k = self.priors.len();
        self.integrate(|x| {
            (0..k)
                .map(|c| self.priors[c] * self.density(c, x))
                .fold(0.0, f64::max)
        })
        .min(1.0)
    }
}

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, a, b);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(fa, flm, fm, a, m);
    let right = simpson(fm, frm, fb, m, b);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}
