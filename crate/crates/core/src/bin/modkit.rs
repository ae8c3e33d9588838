use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use modkit::error::{Error, Result};
use modkit::evaluation::{repeated_evaluation, EvaluationConfig};
use modkit::forest::{ForestParams, MaxFeatures};
use modkit::importance::{
    elbow_subset_size, exhaustive_subset_search, rank_features, select_optimal_subset, ExhaustiveResult,
    ImportanceConfig, ImportanceRanking, PermutationScope,
};
use modkit::info::{self, JointPmf};
use modkit::io::{self, TableSchema};
use modkit::report::{self, fmt_f64, CsvTable, Envelope, Format};
use modkit::synth::{self, GroundTruth, ScenarioSpec};
use modkit::transfer::{transfer_matrix, SelectionConfig, TransferConfig};
use modkit::Dataset;

/// Modulator detection from population samples.
#[derive(Debug, Parser)]
#[command(name = "modkit", version)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON file with option values; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a synthetic population with known ground truth.
    Simulate(SimulateArgs),
    /// Repeated train/test evaluation of a forest against the prior baseline.
    ModulatorTest(ModulatorTestArgs),
    /// Permutation-importance ranking and top-m feature selection.
    SelectFeatures(SelectArgs),
    /// Cross-stratum transfer matrix of mean F1 (rows test, columns train).
    Transfer(TransferArgs),
    /// Plug-in (conditional) mutual information on binned data.
    Mi(MiArgs),
    /// Exact (conditional) mutual information of a probability table.
    ExactMi(ExactMiArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
struct InputArgs {
    /// Input CSV table.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Table schema (JSON).
    #[arg(long, conflicts_with = "factors")]
    schema: Option<PathBuf>,
    /// Factor columns; all other columns become features.
    #[arg(long, value_delimiter = ',')]
    factors: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
struct ForestArgs {
    /// Trees per forest.
    #[arg(long)]
    n_trees: Option<usize>,
    /// Candidate features per node: sqrt, all or a count.
    #[arg(long)]
    max_features: Option<String>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    min_samples_split: Option<usize>,
    /// Train every tree on the training rows themselves.
    #[arg(long)]
    no_bootstrap: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
struct OutputArgs {
    /// Report path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// json or csv (default: from the file extension).
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
struct SimulateArgs {
    /// independent, direct_modulation, markov_chain, xor_pair, separable,
    /// curse_of_dim or stratified_transfer.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    n_noise_features: Option<usize>,
    #[arg(long)]
    effect_size: Option<f64>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    class_balance: Option<f64>,
    #[arg(long)]
    flip_prob: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth report (JSON).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Schema describing the written CSV (JSON).
    #[arg(long)]
    schema_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
struct ModulatorTestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: InputArgs,
    /// Factor to predict.
    #[arg(long)]
    target: Option<String>,
    /// Restrict training to these features.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Category counted as positive by binary F1 (default: the second).
    #[arg(long)]
    positive: Option<String>,
    /// Preserve class proportions when splitting.
    #[arg(long)]
    stratified: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    forest: ForestArgs,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
struct SelectArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: InputArgs,
    #[arg(long)]
    target: Option<String>,
    /// Forests trained for the ranking.
    #[arg(long)]
    forests: Option<usize>,
    /// Shuffles per feature per forest.
    #[arg(long)]
    permutations: Option<usize>,
    /// Subset size.
    #[arg(long, conflicts_with = "elbow")]
    top: Option<usize>,
    /// Choose the subset size at the largest gap in the ranking.
    #[arg(long)]
    elbow: bool,
    /// Measure accuracy drops on held-out rows only.
    #[arg(long)]
    held_out: bool,
    /// Also score every subset of the chosen size (at most 12 features).
    #[arg(long)]
    exhaustive: bool,
    /// Repetitions per subset in the exhaustive search.
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    forest: ForestArgs,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
struct TransferArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: InputArgs,
    /// Factor whose categories define the strata.
    #[arg(long)]
    stratum: Option<String>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    positive: Option<String>,
    /// Per-stratum subset size.
    #[arg(long)]
    top: Option<usize>,
    /// Train on all features instead of a per-stratum selection.
    #[arg(long)]
    no_selection: bool,
    #[arg(long)]
    forests: Option<usize>,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    forest: ForestArgs,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
struct MiArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: InputArgs,
    /// Two or three comma-separated groups `a,b[,given]`; join several
    /// columns of one group with '+'.
    #[arg(long)]
    axes: Option<String>,
    /// Equal-frequency bins per feature.
    #[arg(long, conflicts_with = "edges")]
    bins: Option<usize>,
    /// Fixed ascending bin edges shared by all features.
    #[arg(long, value_delimiter = ',')]
    edges: Option<Vec<f64>>,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
struct ExactMiArgs {
    /// Probability table JSON, or a ground-truth report holding one.
    #[arg(long)]
    pmf: Option<PathBuf>,
    /// Comma-separated axis names.
    #[arg(long, value_delimiter = ',')]
    a: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    b: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    given: Option<Vec<String>>,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

/// Overlays the flags that were given onto the config file's values.
fn merge_config<T: Serialize + DeserializeOwned>(flags: T, file: Option<&Path>) -> Result<T> {
    let Some(path) = file else {
        return Ok(flags);
    };
    let text = std::fs::read_to_string(path)?;
    let from_file: Value = serde_json::from_str(&text)?;
    let Value::Object(file_map) = from_file else {
        return Err(Error::InvalidParameter("config file must hold a JSON object".into()));
    };
    let Value::Object(flag_map) = serde_json::to_value(&flags)? else {
        return Err(Error::Invariant("arguments did not serialize to an object".into()));
    };
    for key in file_map.keys() {
        if !flag_map.contains_key(key) {
            return Err(Error::InvalidParameter(format!("unknown config key {key:?}")));
        }
    }
    let mut merged = file_map;
    for (k, v) in flag_map {
        let unset = v.is_null() || v == Value::Bool(false);
        if !unset || !merged.contains_key(&k) {
            merged.insert(k, v);
        }
    }
    Ok(serde_json::from_value(Value::Object(merged))?)
}

fn required<T: Clone>(value: &Option<T>, flag: &str) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| Error::InvalidParameter(format!("--{flag} is required")))
}

/// Config echo for the report: every input setting except output locations.
fn config_echo<T: Serialize>(args: &T, resolved: Value) -> Result<Value> {
    let mut v = serde_json::to_value(args)?;
    if let Value::Object(m) = &mut v {
        for key in ["out", "format", "truth", "schema_out"] {
            m.remove(key);
        }
    }
    Ok(json!({ "args": v, "resolved": resolved }))
}

fn seed_or_random(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random)
}

fn load_dataset(input: &InputArgs) -> Result<Dataset> {
    let data = required(&input.data, "data")?;
    let schema = match (&input.schema, &input.factors) {
        (Some(path), _) => TableSchema::from_json_file(path)?,
        (None, Some(f)) => TableSchema::with_factors(f),
        (None, None) => {
            return Err(Error::InvalidParameter("either --schema or --factors is required".into()))
        }
    };
    io::load_csv(&data, &schema)
}

fn parse_max_features(s: &str) -> Result<MaxFeatures> {
    match s {
        "sqrt" => Ok(MaxFeatures::Sqrt),
        "all" => Ok(MaxFeatures::All),
        n => n
            .parse()
            .map(MaxFeatures::Fixed)
            .map_err(|_| Error::InvalidParameter(format!("invalid --max-features {s:?}"))),
    }
}

fn forest_params(args: &ForestArgs) -> Result<ForestParams> {
    let d = ForestParams::default();
    let p = ForestParams {
        n_trees: args.n_trees.unwrap_or(d.n_trees),
        max_features: match &args.max_features {
            Some(s) => parse_max_features(s)?,
            None => d.max_features,
        },
        min_samples_split: args.min_samples_split.unwrap_or(d.min_samples_split),
        max_depth: args.max_depth.or(d.max_depth),
        bootstrap: !args.no_bootstrap,
    };
    p.validate()?;
    Ok(p)
}

fn positive_id(ds: &Dataset, target: &str, label: &Option<String>) -> Result<usize> {
    let factor = ds.factor(target)?;
    match label {
        None => Ok(1),
        Some(l) => factor.category_id(l).ok_or_else(|| Error::UnknownCategory {
            factor: target.to_string(),
            category: l.clone(),
        }),
    }
}

fn emit<T: Serialize + CsvTable>(envelope: &Envelope<T>, output: &OutputArgs) -> Result<()> {
    let format = match (&output.format, &output.out) {
        (Some(f), _) if f.eq_ignore_ascii_case("json") => Format::Json,
        (Some(f), _) if f.eq_ignore_ascii_case("csv") => Format::Csv,
        (Some(f), _) => return Err(Error::InvalidParameter(format!("unknown format {f:?}"))),
        (None, Some(p)) => Format::from_path(p),
        (None, None) => Format::Json,
    };
    match &output.out {
        Some(path) => report::write_report(envelope, path, format),
        None => {
            let text = match format {
                Format::Json => report::to_json_string(envelope)?,
                Format::Csv => report::to_csv_string(&envelope.result)?,
            };
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let d = ScenarioSpec::default();
    let out = required(&args.out, "out")?;
    let seed = seed_or_random(args.seed);
    let spec = ScenarioSpec {
        kind: match &args.scenario {
            Some(s) => s.parse()?,
            None => return Err(Error::InvalidParameter("--scenario is required".into())),
        },
        n_samples: args.n_samples.unwrap_or(d.n_samples),
        n_noise_features: args.n_noise_features.unwrap_or(d.n_noise_features),
        effect_size: args.effect_size.unwrap_or(d.effect_size),
        noise_sd: args.noise_sd.unwrap_or(d.noise_sd),
        class_balance: args.class_balance.unwrap_or(d.class_balance),
        flip_prob: args.flip_prob.unwrap_or(d.flip_prob),
        seed,
    };
    let (ds, truth) = synth::generate(&spec)?;
    io::write_csv(&ds, &out)?;
    if let Some(path) = &args.schema_out {
        std::fs::write(path, serde_json::to_string_pretty(&TableSchema::for_dataset(&ds))? + "\n")?;
    }
    let config = config_echo(&args, serde_json::to_value(&spec)?)?;
    let envelope: Envelope<GroundTruth> = Envelope::new("truth", config, Some(seed), truth);
    match &args.truth {
        Some(path) => report::write_json(&envelope, path)?,
        None if args.seed.is_none() => eprintln!("seed: {seed}"),
        None => {}
    }
    Ok(())
}

fn modulator_test(args: ModulatorTestArgs) -> Result<()> {
    let ds = load_dataset(&args.input)?;
    let target = required(&args.target, "target")?;
    let seed = seed_or_random(args.seed);
    let d = EvaluationConfig::default();
    let config = EvaluationConfig {
        forest: forest_params(&args.forest)?,
        repetitions: args.repetitions.unwrap_or(d.repetitions),
        train_fraction: args.train_fraction.unwrap_or(d.train_fraction),
        feature_subset: args.features.clone(),
        positive_class: positive_id(&ds, &target, &args.positive)?,
        stratified_split: args.stratified,
    };
    let report = repeated_evaluation(&ds, &target, &config, seed)?;
    let echo = config_echo(&args, serde_json::to_value(&config)?)?;
    emit(&Envelope::new("evaluation", echo, Some(seed), report), &args.output)
}

#[derive(Debug, Serialize, Deserialize)]
struct Selection {
    ranking: ImportanceRanking,
    /// How `m` was chosen: "fixed" or "elbow".
    m_rule: String,
    m: usize,
    selected: Vec<String>,
    exhaustive: Option<ExhaustiveResult>,
}

impl CsvTable for Selection {
    fn header(&self) -> Vec<String> {
        let mut h = self.ranking.header();
        h.push("selected".into());
        h
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.ranking
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| {
                r.push((i < self.m).to_string());
                r
            })
            .collect()
    }
}

fn select_features(args: SelectArgs) -> Result<()> {
    let ds = load_dataset(&args.input)?;
    let target = required(&args.target, "target")?;
    let seed = seed_or_random(args.seed);
    let d = ImportanceConfig::default();
    let config = ImportanceConfig {
        forest: forest_params(&args.forest)?,
        n_forests: args.forests.unwrap_or(d.n_forests),
        n_permutations: args.permutations.unwrap_or(d.n_permutations),
        train_fraction: args.train_fraction.unwrap_or(d.train_fraction),
        stratified_split: false,
        scope: if args.held_out {
            PermutationScope::HeldOut
        } else {
            PermutationScope::Full
        },
    };
    let ranking = rank_features(&ds, &target, &config, seed)?;
    let (m_rule, m) = if args.elbow {
        ("elbow", elbow_subset_size(&ranking)?)
    } else {
        ("fixed", args.top.unwrap_or(4).min(ranking.entries.len()))
    };
    let selected = select_optimal_subset(&ranking, m)?;
    let mut resolved = json!({ "importance": config, "m": m, "m_rule": m_rule });
    let exhaustive = if args.exhaustive {
        let eval = EvaluationConfig {
            forest: config.forest.clone(),
            repetitions: args.repetitions.unwrap_or(20),
            train_fraction: config.train_fraction,
            ..Default::default()
        };
        resolved["exhaustive"] = serde_json::to_value(&eval)?;
        Some(exhaustive_subset_search(&ds, &target, &eval, Some(m), seed)?)
    } else {
        None
    };
    let result = Selection {
        ranking,
        m_rule: m_rule.into(),
        m,
        selected,
        exhaustive,
    };
    let echo = config_echo(&args, resolved)?;
    emit(&Envelope::new("importance", echo, Some(seed), result), &args.output)
}

fn transfer(args: TransferArgs) -> Result<()> {
    let ds = load_dataset(&args.input)?;
    let stratum = required(&args.stratum, "stratum")?;
    let target = required(&args.target, "target")?;
    let seed = seed_or_random(args.seed);
    let forest = forest_params(&args.forest)?;
    let d = TransferConfig::default();
    let imp = ImportanceConfig::default();
    let config = TransferConfig {
        forest: forest.clone(),
        repetitions: args.repetitions.unwrap_or(d.repetitions),
        train_fraction: args.train_fraction.unwrap_or(d.train_fraction),
        stratified_split: false,
        positive_class: positive_id(&ds, &target, &args.positive)?,
        selection: if args.no_selection {
            None
        } else {
            Some(SelectionConfig {
                top: args.top.unwrap_or(SelectionConfig::default().top),
                importance: ImportanceConfig {
                    forest,
                    n_forests: args.forests.unwrap_or(imp.n_forests),
                    n_permutations: args.permutations.unwrap_or(imp.n_permutations),
                    ..imp
                },
            })
        },
    };
    let matrix = transfer_matrix(&ds, &stratum, &target, &config, seed)?;
    let echo = config_echo(&args, serde_json::to_value(&config)?)?;
    emit(&Envelope::new("transfer", echo, Some(seed), matrix), &args.output)
}

/// Result of the `mi` and `exact-mi` commands.
#[derive(Debug, Serialize, Deserialize)]
struct InfoResult {
    a: Vec<String>,
    b: Vec<String>,
    given: Vec<String>,
    /// `I(a; b)` or `I(a; b | given)` in bits.
    value: f64,
    entropy_a: f64,
    entropy_b: f64,
}

impl CsvTable for InfoResult {
    fn header(&self) -> Vec<String> {
        ["a", "b", "given", "value", "entropy_a", "entropy_b"]
            .map(String::from)
            .to_vec()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.a.join("+"),
            self.b.join("+"),
            self.given.join("+"),
            fmt_f64(self.value),
            fmt_f64(self.entropy_a),
            fmt_f64(self.entropy_b),
        ]]
    }
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn info_result(pmf: &JointPmf, a: Vec<String>, b: Vec<String>, given: Vec<String>) -> Result<InfoResult> {
    let (ra, rb, rg) = (refs(&a), refs(&b), refs(&given));
    let value = if given.is_empty() {
        pmf.mutual_information(&ra, &rb)?
    } else {
        pmf.conditional_mutual_information(&ra, &rb, &rg)?
    };
    Ok(InfoResult {
        entropy_a: pmf.entropy(&ra)?,
        entropy_b: pmf.entropy(&rb)?,
        a,
        b,
        given,
        value,
    })
}

fn mi(args: MiArgs) -> Result<()> {
    let ds = load_dataset(&args.input)?;
    let axes = required(&args.axes, "axes")?;
    let groups: Vec<Vec<String>> = axes
        .split(',')
        .map(|g| g.split('+').map(|s| s.trim().to_string()).collect())
        .collect();
    if !(2..=3).contains(&groups.len()) || groups.iter().flatten().any(String::is_empty) {
        return Err(Error::InvalidParameter(format!(
            "--axes expects a,b or a,b,given, got {axes:?}"
        )));
    }
    let names: Vec<String> = groups.iter().flatten().cloned().collect();
    let mut factors = Vec::new();
    let mut features = Vec::new();
    for n in &names {
        if ds.factor(n).is_ok() {
            factors.push(n.clone());
        } else if ds.feature(n).is_ok() {
            features.push(n.clone());
        } else {
            return Err(Error::UnknownAxis(n.clone()));
        }
    }
    factors.dedup();
    features.dedup();
    let bins = args.bins.unwrap_or(info::DEFAULT_BINS);
    let pmf = match &args.edges {
        Some(edges) => info::empirical_joint_with_edges(&ds, &factors, &features, edges)?,
        None => info::empirical_joint(&ds, &factors, &features, bins)?,
    };
    let mut it = groups.into_iter();
    let (a, b) = (it.next().unwrap_or_default(), it.next().unwrap_or_default());
    let given = it.next().unwrap_or_default();
    let result = info_result(&pmf, a, b, given)?;
    let resolved = match &args.edges {
        Some(e) => json!({ "edges": e, "n_samples": ds.n_samples() }),
        None => json!({ "bins": bins, "n_samples": ds.n_samples() }),
    };
    let echo = config_echo(&args, resolved)?;
    emit(&Envelope::new("mi", echo, None, result), &args.output)
}

fn load_pmf(path: &Path) -> Result<JointPmf> {
    let text = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text)?;
    if let Some(pmf) = value.get("result").and_then(|r| r.get("pmf")) {
        if pmf.is_null() {
            return Err(Error::InvalidPmf("ground-truth report carries no table".into()));
        }
        return Ok(serde_json::from_value(pmf.clone())?);
    }
    Ok(serde_json::from_value(value)?)
}

fn exact_mi(args: ExactMiArgs) -> Result<()> {
    let pmf = load_pmf(&required(&args.pmf, "pmf")?)?;
    let result = info_result(
        &pmf,
        required(&args.a, "a")?,
        required(&args.b, "b")?,
        args.given.clone().unwrap_or_default(),
    )?;
    let echo = config_echo(&args, Value::Null)?;
    emit(&Envelope::new("exact_mi", echo, None, result), &args.output)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidParameter("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Invariant(e.to_string()))?;
    }
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::Simulate(a) => simulate(merge_config(a, cfg)?),
        Command::ModulatorTest(a) => modulator_test(merge_config(a, cfg)?),
        Command::SelectFeatures(a) => select_features(merge_config(a, cfg)?),
        Command::Transfer(a) => transfer(merge_config(a, cfg)?),
        Command::Mi(a) => mi(merge_config(a, cfg)?),
        Command::ExactMi(a) => exact_mi(merge_config(a, cfg)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
