//! Cross-module checks: generators against their oracles, estimators
//! against the generators, reports against their files.

use modkit::data::{Dataset, DatasetView, FactorColumn, FeatureColumn, FeatureKind};
use modkit::evaluation::{repeated_evaluation, EvaluationConfig, EvaluationReport, Verdict};
use modkit::forest::{train_forest, ForestParams, MaxFeatures};
use modkit::importance::{permutation_importance, rank_features, ImportanceConfig};
use modkit::info::{empirical_joint_with_edges, Axis, JointPmf};
use modkit::io::{load_csv, write_csv, TableSchema};
use modkit::report::{read_report, to_csv_string, write_report, Envelope, Format};
use modkit::rng;
use modkit::synth::{generate, ScenarioKind, ScenarioSpec};
use modkit::transfer::{transfer_matrix, TransferConfig};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn xor_pair_estimates_match_the_exact_table() {
    let spec = ScenarioSpec {
        kind: ScenarioKind::XorPair,
        n_samples: 50_000,
        seed: 11,
        ..Default::default()
    };
    let (ds, truth) = generate(&spec).unwrap();
    let pmf = truth.pmf.unwrap();
    let exact_pair = pmf.mutual_information(&["F"], &["signal_0", "signal_1"]).unwrap();
    assert!((exact_pair - truth.mi.unwrap()).abs() < 1e-12);
    // Binning at the sign boundary recovers the generator's bits.
    let est = empirical_joint_with_edges(&ds, &["F"], &["signal_0", "signal_1"], &[1.0]).unwrap();
    let pair = est.mutual_information(&["F"], &["signal_0", "signal_1"]).unwrap();
    assert!((pair - exact_pair).abs() <= 0.02, "pair {pair} vs {exact_pair}");
    for s in ["signal_0", "signal_1"] {
        let exact = pmf.mutual_information(&["F"], &[s]).unwrap();
        let single = est.mutual_information(&["F"], &[s]).unwrap();
        assert!(exact.abs() < 1e-12);
        assert!((single - exact).abs() <= 0.02, "{s}: {single}");
    }
}

#[test]
fn markov_chain_factor_table_matches_frequencies() {
    let spec = ScenarioSpec {
        kind: ScenarioKind::MarkovChain,
        n_samples: 50_000,
        class_balance: 0.3,
        flip_prob: 0.2,
        seed: 4,
        ..Default::default()
    };
    let (ds, truth) = generate(&spec).unwrap();
    let pmf = truth.pmf.unwrap();
    let (f1, f2) = (ds.factor("F1").unwrap(), ds.factor("F2").unwrap());
    let mut counts = [[0usize; 2]; 2];
    for row in 0..ds.n_samples() {
        let a = usize::from(f1.label(row) == "case");
        let b = usize::from(f2.label(row) == "high");
        counts[a][b] += 1;
    }
    for (a, row) in counts.iter().enumerate() {
        for (b, &c) in row.iter().enumerate() {
            let freq = c as f64 / ds.n_samples() as f64;
            assert!((freq - pmf.prob(&[a, b])).abs() < 0.01, "cell ({a},{b})");
        }
    }
}

#[test]
fn separable_is_solved_by_a_single_stump() {
    let train = generate(&ScenarioSpec::new(ScenarioKind::Separable, 200, 1)).unwrap().0;
    let fresh = generate(&ScenarioSpec::new(ScenarioKind::Separable, 500, 2)).unwrap().0;
    let params = ForestParams::default()
        .with_n_trees(1)
        .with_max_depth(1)
        .with_max_features(MaxFeatures::All)
        .with_bootstrap(false);
    let forest = train_forest(&DatasetView::full(&train), "F", &params, 0).unwrap();
    for ds in [&train, &fresh] {
        let rows: Vec<usize> = (0..ds.n_samples()).collect();
        let preds = forest.predict_rows(ds, &rows).unwrap();
        // Category ids agree: both datasets list "ctrl" and "case" in
        // order of first appearance, so compare labels.
        let truth = ds.factor("F").unwrap();
        let hits = rows
            .iter()
            .filter(|&&r| forest.categories[preds[r]] == truth.label(r))
            .count();
        assert_eq!(hits, ds.n_samples());
    }
}

#[test]
fn stratified_scenario_carries_conditional_information() {
    let (ds, truth) = generate(&ScenarioSpec::new(ScenarioKind::StratifiedTransfer, 300, 0)).unwrap();
    assert_eq!(ds.factors()[0].name(), "S");
    assert!(truth.cmi.unwrap() > 0.1);
    assert_eq!(truth.informative_features, vec!["signal_0", "signal_1"]);
}

/// Uniform F is needed for information to imply a better-than-prior
/// decision: with an 80/20 prior this feature carries information yet the
/// Bayes rule predicts the majority class everywhere.
#[test]
fn information_without_accuracy_gain_under_skewed_prior() {
    let axes = vec![
        Axis {
            name: "F".into(),
            cardinality: 2,
        },
        Axis {
            name: "X".into(),
            cardinality: 2,
        },
    ];
    let pmf = JointPmf::new(axes, vec![0.8 * 0.7, 0.8 * 0.3, 0.2 * 0.4, 0.2 * 0.6]).unwrap();
    let mi = pmf.mutual_information(&["F"], &["X"]).unwrap();
    assert!(mi > 0.01, "{mi}");
    for x in 0..2 {
        assert!(pmf.prob(&[0, x]) > pmf.prob(&[1, x]));
    }
}

#[test]
fn generated_data_survives_a_csv_round_trip() {
    let (ds, _) = generate(&ScenarioSpec::new(ScenarioKind::StratifiedTransfer, 120, 9)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_csv(&ds, &path).unwrap();
    let back = load_csv(&path, &TableSchema::for_dataset(&ds)).unwrap();
    assert_eq!(back.factors(), ds.factors());
    assert_eq!(back.features(), ds.features());
    let first = std::fs::read(&path).unwrap();
    write_csv(&back, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
}

#[test]
fn evaluation_report_files() {
    let (ds, _) = generate(&ScenarioSpec::new(ScenarioKind::DirectModulation, 80, 3)).unwrap();
    let cfg = EvaluationConfig {
        forest: ForestParams::default().with_n_trees(10),
        repetitions: 20,
        ..Default::default()
    };
    let report = repeated_evaluation(&ds, "F", &cfg, 3).unwrap();
    let csv = to_csv_string(&report).unwrap();
    assert_eq!(csv.lines().count(), 21);
    assert!(csv.starts_with("repetition,"));

    let env = Envelope::new("evaluation", serde_json::to_value(&cfg).unwrap(), Some(3), report.clone());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    write_report(&env, &path, Format::Json).unwrap();
    let back: Envelope<EvaluationReport> = read_report(&path).unwrap();
    assert_eq!(back.result, report);
    assert_eq!(back.master_seed, Some(3));
    assert_eq!(back.tool.version, env!("CARGO_PKG_VERSION"));
}

fn four_strata(seed: u64) -> Dataset {
    let mut r = rng::stream(seed);
    let (mut s, mut y, mut cols) = (vec![], vec![], vec![vec![]; 4]);
    for k in 0..4 {
        for _ in 0..40 {
            let cls = r.random_bool(0.5);
            s.push(format!("g{k}"));
            y.push(if cls { "pos" } else { "neg" });
            for (j, col) in cols.iter_mut().enumerate() {
                let shift = if j == k && cls { 2.0 } else { 1.0 };
                col.push(shift + r.random::<f64>() * 0.8);
            }
        }
    }
    Dataset::new(
        vec![
            FactorColumn::from_labels("S", &s).unwrap(),
            FactorColumn::new("Y", y.iter().map(|l| usize::from(*l == "pos")).collect(), vec!["neg".into(), "pos".into()])
                .unwrap(),
        ],
        cols.into_iter()
            .enumerate()
            .map(|(j, v)| FeatureColumn::new(format!("x{j}"), v, FeatureKind::Generic).unwrap())
            .collect(),
        "four",
    )
    .unwrap()
}

#[test]
fn four_strata_transfer_table_is_square() {
    let ds = four_strata(0);
    let cfg = TransferConfig {
        forest: ForestParams::default().with_n_trees(10),
        repetitions: 3,
        selection: None,
        ..Default::default()
    };
    let m = transfer_matrix(&ds, "S", "Y", &cfg, 0).unwrap();
    let csv = to_csv_string(&m).unwrap();
    let lines: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(lines.len(), 5);
    assert!(lines.iter().all(|l| l.len() == 5));
    assert_eq!(lines[0], vec!["test\\train", "g0", "g1", "g2", "g3"]);
    for (r, line) in lines[1..].iter().enumerate() {
        assert_eq!(line[0], format!("g{r}"));
    }
    assert!(m.diagonal_mean() > m.off_diagonal_mean());
}

fn random_dataset(seed: u64, n: usize, d: usize) -> Dataset {
    let mut r = rng::stream(seed);
    let y: Vec<usize> = (0..n).map(|i| if i < 2 { i } else { r.random_range(0..2) }).collect();
    let features = (0..d)
        .map(|j| {
            let vals = y
                .iter()
                .map(|&c| if j == 0 { c as f64 + r.random::<f64>() } else { r.random::<f64>() })
                .collect();
            FeatureColumn::new(format!("f{j}"), vals, FeatureKind::Generic).unwrap()
        })
        .collect();
    Dataset::new(
        vec![FactorColumn::new("Y", y, vec!["a".into(), "b".into()]).unwrap()],
        features,
        "random",
    )
    .unwrap()
}

fn renamed(ds: &Dataset, rename: impl Fn(&str) -> String) -> Dataset {
    let features = ds
        .features()
        .iter()
        .map(|f| FeatureColumn::new(rename(f.name()), f.values().to_vec(), f.kind()).unwrap())
        .collect();
    Dataset::new(ds.factors().to_vec(), features, ds.provenance()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn verdict_follows_the_records(seed in 0u64..1000, n in 12usize..40) {
        let ds = random_dataset(seed, n, 3);
        let cfg = EvaluationConfig {
            forest: ForestParams::default().with_n_trees(5),
            repetitions: 5,
            ..Default::default()
        };
        let report = repeated_evaluation(&ds, "Y", &cfg, seed).unwrap();
        prop_assert_eq!(report.records.len(), 5);
        prop_assert_eq!(report.verdict, report.recompute_verdict());
        prop_assert_eq!(report.verdict, Verdict::from_ratio(report.median_acc_ratio()));
    }

    #[test]
    fn ranking_is_equivariant_under_renaming(seed in 0u64..1000) {
        let ds = random_dataset(seed, 30, 4);
        let cfg = ImportanceConfig {
            forest: ForestParams::default().with_n_trees(5),
            n_forests: 3,
            n_permutations: 2,
            ..Default::default()
        };
        let rename = |n: &str| format!("renamed_{}", n.chars().rev().collect::<String>());
        let a = rank_features(&ds, "Y", &cfg, seed).unwrap();
        let b = rank_features(&renamed(&ds, rename), "Y", &cfg, seed).unwrap();
        prop_assert_eq!(a.baseline_accuracy, b.baseline_accuracy);
        for e in &a.entries {
            let other = b.entry(&rename(&e.feature_name)).unwrap();
            prop_assert_eq!(e.mean_accuracy_drop, other.mean_accuracy_drop);
            prop_assert_eq!(e.std, other.std);
        }
    }

    #[test]
    fn unused_features_have_exactly_zero_drop(seed in 0u64..1000) {
        let ds = random_dataset(seed, 25, 6);
        let params = ForestParams::default().with_n_trees(3).with_max_depth(2);
        let forest = train_forest(&DatasetView::full(&ds), "Y", &params, seed).unwrap();
        let used: std::collections::BTreeSet<usize> =
            forest.trees.iter().flat_map(|t| t.features_used()).collect();
        let mut r = rng::stream(seed);
        for j in 0..ds.n_features() {
            let name = ds.features()[j].name().to_string();
            let imp = permutation_importance(&forest, &ds, &name, 4, &mut r).unwrap();
            if !used.contains(&j) {
                prop_assert!(imp.drops.iter().all(|&x| x == 0.0));
            }
        }
    }
}
