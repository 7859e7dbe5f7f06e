//! `conceptforge`: fit and query concept hierarchies, score labelled
//! partitions, generate synthetic data and run the pathology experiments.
//!
//! Exit status: 0 on success, 1 when an experiment or report has a failed
//! check, 2 on any usage or input error.

mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value as Json};

use conceptforge::canon::{format_float, to_canonical_string};
use conceptforge::data::{load_dataset, read_csv, Dataset, HeaderPolicy, Record, Value};
use conceptforge::eval::{
    asymmetric_eval_stats, symmetric_eval, Aggregator, AsymmetricConfig, EvalConfig, FirstStep, Variant,
    DEFAULT_ACUITY,
};
use conceptforge::lab::{
    bivariate_experiment, closure_degeneration_check, density_shift_experiment, pairing_merge_map, random_stats,
    rescaling_experiment, uniform_ideal_experiment, BivariateParams, ClosureParams, DensityParams, ExperimentReport,
    LabError, QuadratureSpec, RescaleParams, SplitModel, UniformParams,
};
use conceptforge::schema::Schema;
use conceptforge::stats::collect_stats;
use conceptforge::synth::{generate, Generator, SyntheticSpec, RNG_ALGORITHM};
use conceptforge::tree::{ConceptTree, PredictedValue};

/// Seed used when neither `--seed` nor `CONCEPTFORGE_SEED` is given.
const DEFAULT_SEED: u64 = 1991;

#[derive(Parser, Debug)]
#[command(name = "conceptforge", version, about = "Incremental concept formation and evaluation-function experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a concept hierarchy from a dataset and save it as JSON.
    Fit(FitArgs),
    /// Classify partial records with a saved hierarchy.
    Predict(PredictArgs),
    /// Score the partition induced by a label column.
    Eval(EvalArgs),
    /// Run a pathology experiment and write its report.
    Experiment(ExperimentArgs),
    /// Write a synthetic dataset with its schema.
    Gen(GenArgs),
    /// Print a saved experiment report as a table.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// CSV file with a header row; `?` marks a missing entry.
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON describing every column.
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Fisher,
    Gennari,
    Scalefree,
    Asymmetric,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Fisher => Variant::Fisher,
            VariantArg::Gennari => Variant::Gennari,
            VariantArg::Scalefree => Variant::ScaleFree,
            VariantArg::Asymmetric => Variant::Asymmetric,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct EvalFlags {
    /// Evaluation function.
    #[arg(long = "eval", value_enum)]
    variant: VariantArg,
    /// Floor on every standard deviation.
    #[arg(long, default_value_t = DEFAULT_ACUITY)]
    acuity: f64,
    /// Weight of the classification term of the asymmetric criterion.
    #[arg(long, default_value_t = 1.0)]
    class_weight: f64,
    /// Combine predicting accuracies by the mean of the n largest instead of the maximum.
    #[arg(long)]
    top_n: Option<usize>,
}

impl EvalFlags {
    fn config(&self) -> EvalConfig {
        EvalConfig {
            variant: self.variant.into(),
            acuity: self.acuity,
            asym: AsymmetricConfig {
                class_weight: self.class_weight,
                aggregator: self.top_n.map_or(Aggregator::Max, |n| Aggregator::TopN { n }),
                first_step: FirstStep::UnitDenominator,
            },
        }
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    input: DataArgs,
    #[command(flatten)]
    eval: EvalFlags,
    /// Tree JSON to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Tree JSON written by `fit`.
    #[arg(long)]
    tree: PathBuf,
    /// CSV of partial records; its header may name any subset of the schema.
    #[arg(long)]
    data: PathBuf,
    /// Predictions CSV to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    input: DataArgs,
    #[command(flatten)]
    eval: EvalFlags,
    /// Discrete column whose values define the classes; it is not scored.
    #[arg(long = "class")]
    class: String,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(value_enum)]
    name: ExperimentName,
    /// Report JSON to write; a directory for `all`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "CONCEPTFORGE_SEED")]
    seed: Option<u64>,
    #[command(flatten)]
    params: ExperimentFlags,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ExperimentName {
    Closure,
    Rescale,
    Uniform,
    Density,
    Bivariate,
    All,
}

#[derive(Args, Debug, Clone)]
struct ExperimentFlags {
    /// closure, rescale: dataset CSV (generated when absent).
    #[arg(long, requires = "schema")]
    data: Option<PathBuf>,
    /// closure, rescale: schema of `--data`.
    #[arg(long, requires = "data")]
    schema: Option<PathBuf>,
    /// closure: binary attributes of the generated dataset (2^k distinct objects).
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// closure: leave out the constant columns.
    #[arg(long)]
    drop_constants: bool,
    /// rescale: label column defining the classes of `--data`.
    #[arg(long = "class")]
    class: Option<String>,
    /// rescale: attribute of `--data` whose values are paired.
    #[arg(long)]
    attribute: Option<String>,
    /// rescale: Monte-Carlo trials.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// rescale: give the first fine value this share instead of a uniform random split.
    #[arg(long)]
    split_p: Option<f64>,
    /// uniform: number of classes M.
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// uniform: interval lengths, one per attribute.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    deltas: Vec<f64>,
    /// density: length of the first interval.
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    /// density: length of the second interval.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    /// density: density on the first interval.
    #[arg(long, default_value_t = 1.0)]
    d1: f64,
    /// density: density on the second interval.
    #[arg(long, default_value_t = 2.0)]
    d2: f64,
    /// density: grid steps over the second interval.
    #[arg(long, default_value_t = 1000)]
    grid: usize,
    /// bivariate: standard deviation of the predicted attribute.
    #[arg(long, default_value_t = 1.0)]
    sigma_y: f64,
    /// bivariate: correlations to evaluate.
    #[arg(long = "r", value_delimiter = ',', allow_hyphen_values = true, default_value = "0,0.3,0.5,0.7")]
    correlations: Vec<f64>,
    /// bivariate: integration half-width in standard deviations.
    #[arg(long, default_value_t = 8.0)]
    half_width: f64,
    /// bivariate: target absolute error of the quadrature.
    #[arg(long, default_value_t = 1e-9)]
    target_error: f64,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(subcommand)]
    generator: GenCommand,
    /// CSV to write; the schema goes next to it as `<stem>.schema.json`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, env = "CONCEPTFORGE_SEED")]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum GenCommand {
    /// Classes own disjoint, equal-mass slices of every attribute's interval.
    IdealUniform {
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        deltas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        class_mass: Option<Vec<f64>>,
        #[arg(long, default_value_t = 300)]
        n: usize,
    },
    /// Two neighbouring uniform intervals with different densities.
    TwoDensity {
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        d1: f64,
        #[arg(long, default_value_t = 2.0)]
        d2: f64,
        #[arg(long, default_value_t = 300)]
        n: usize,
    },
    /// Correlated normal pair.
    Bivariate {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        mu_x: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        mu_y: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_x: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_y: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        r: f64,
        #[arg(long, default_value_t = 300)]
        n: usize,
    },
    /// Binary attributes with a label correlated to them.
    Boolean {
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 8)]
        n: usize,
    },
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Report JSON written by `experiment`.
    path: PathBuf,
}

/// A run either completes with some checks failing or not at all.
enum Outcome {
    Done,
    ChecksFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Fit(args) => fit(args),
        Command::Predict(args) => predict(args),
        Command::Eval(args) => eval(args),
        Command::Experiment(args) => experiment(args),
        Command::Gen(args) => gen(args),
        Command::Report(args) => report::print_report(&args.path),
    }
}

fn read_dataset(input: &DataArgs) -> Result<Dataset> {
    let csv = fs::File::open(&input.data).with_context(|| format!("opening {}", input.data.display()))?;
    let schema = fs::File::open(&input.schema).with_context(|| format!("opening {}", input.schema.display()))?;
    load_dataset(csv, schema).with_context(|| format!("loading {}", input.data.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Provenance block embedded in (or written beside) every artifact.
fn audit(command: &str, config: Json) -> Json {
    json!({
        "tool": "conceptforge",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
    })
}

fn path_json(path: &Path) -> Json {
    Json::String(path.display().to_string())
}

fn fit(args: FitArgs) -> Result<Outcome> {
    let dataset = read_dataset(&args.input)?;
    let config = args.eval.config();
    let tree = ConceptTree::fit(&dataset, config)?;
    let mut doc = tree.to_json_value();
    doc["audit"] = audit(
        "fit",
        json!({
            "data": path_json(&args.input.data),
            "schema": path_json(&args.input.schema),
            "eval": config,
            "out": path_json(&args.out),
        }),
    );
    write_file(&args.out, &to_canonical_string(&doc))?;
    Ok(Outcome::Done)
}

fn load_tree(path: &Path) -> Result<ConceptTree> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut doc: Json = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(object) = doc.as_object_mut() {
        object.remove("audit");
    }
    ConceptTree::from_json_str(&doc.to_string()).with_context(|| format!("loading tree {}", path.display()))
}

fn csv_field(value: &PredictedValue) -> String {
    match value {
        PredictedValue::Discrete(v) => v.clone(),
        PredictedValue::Continuous(x) => format_float(*x),
        PredictedValue::Missing => "?".to_string(),
    }
}

fn predict(args: PredictArgs) -> Result<Outcome> {
    let tree = load_tree(&args.tree)?;
    let csv = fs::File::open(&args.data).with_context(|| format!("opening {}", args.data.display()))?;
    let partial = read_csv(csv, tree.schema().clone(), HeaderPolicy::Subset)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let predicted: Vec<&str> =
        tree.schema().attributes().iter().filter(|a| a.role.is_predicted()).map(|a| a.name.as_str()).collect();

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["row", "path"].into_iter().chain(predicted.iter().copied()))?;
    for (row, record) in partial.records().iter().enumerate() {
        let prediction = tree.predict(record)?;
        let path = prediction.path.iter().map(usize::to_string).collect::<Vec<_>>().join("/");
        let mut fields = vec![(row + 1).to_string(), path];
        fields.extend(prediction.values.iter().map(|(_, v)| csv_field(v)));
        writer.write_record(&fields)?;
    }
    let bytes = writer.into_inner().context("flushing predictions")?;
    fs::write(&args.out, bytes).with_context(|| format!("writing {}", args.out.display()))?;
    let sidecar = audit(
        "predict",
        json!({ "tree": path_json(&args.tree), "data": path_json(&args.data), "out": path_json(&args.out) }),
    );
    write_file(&sidecar_path(&args.out, "audit.json"), &to_canonical_string(&sidecar))?;
    Ok(Outcome::Done)
}

/// `dir/name.csv` → `dir/name.<suffix>`.
fn sidecar_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Splits off the label column: the remaining dataset plus one class
/// index per record, classes numbered by label value order.
fn label_partition(dataset: &Dataset, class: &str) -> Result<(Dataset, Vec<usize>)> {
    let schema = dataset.schema();
    let Some(j) = schema.index_of(class) else { bail!("unknown class column {class:?}") };
    if !schema.get(j).is_discrete() {
        bail!("class column {class:?} is not discrete");
    }
    let mut labels = Vec::with_capacity(dataset.len());
    for (row, record) in dataset.records().iter().enumerate() {
        match record.values[j] {
            Value::Discrete(v) => labels.push(v),
            _ => bail!("row {}: class column {class:?} is missing", row + 1),
        }
    }
    let mut observed = labels.clone();
    observed.sort_unstable();
    observed.dedup();
    let assignment = labels.iter().map(|v| observed.binary_search(v).expect("observed label")).collect();

    let attributes = schema.attributes().iter().enumerate().filter(|&(i, _)| i != j).map(|(_, a)| a.clone()).collect();
    let records = dataset
        .records()
        .iter()
        .map(|r| Record::new(r.values.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, v)| *v).collect()))
        .collect();
    Ok((Dataset::new(Schema::new(attributes)?, records)?, assignment))
}

fn labelled_score(dataset: &Dataset, class: &str, config: &EvalConfig) -> Result<f64> {
    config.validate()?;
    let (rest, assignment) = label_partition(dataset, class)?;
    let stats = collect_stats(&rest, &assignment)?;
    let schema = rest.schema();
    Ok(match config.variant {
        Variant::Asymmetric => asymmetric_eval_stats(&stats, schema, None, &config.asym)?.0,
        variant => {
            let discrete = variant == Variant::Fisher;
            let attrs: Vec<usize> = (0..schema.len())
                .filter(|&i| schema.get(i).role.is_predicting() && schema.get(i).is_discrete() == discrete)
                .collect();
            symmetric_eval(&stats.select(&attrs), config)?
        }
    })
}

fn eval(args: EvalArgs) -> Result<Outcome> {
    let dataset = read_dataset(&args.input)?;
    println!("{}", labelled_score(&dataset, &args.class, &args.eval.config())?);
    Ok(Outcome::Done)
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or(DEFAULT_SEED)
}

/// Runs one named experiment; parameter and data errors are usage errors.
fn run_experiment(name: ExperimentName, flags: &ExperimentFlags, seed: u64) -> Result<ExperimentReport> {
    let loaded = match (&flags.data, &flags.schema) {
        (Some(data), Some(schema)) => Some(read_dataset(&DataArgs { data: data.clone(), schema: schema.clone() })?),
        _ => None,
    };
    let report = match name {
        ExperimentName::Closure => {
            let dataset = match loaded {
                Some(d) => d,
                None => {
                    let n = 1usize.checked_shl(flags.k as u32).filter(|_| flags.k < 5).context("--k must be at most 4")?;
                    generate(&SyntheticSpec::new(Generator::BooleanDiagnostic { k: flags.k, n }, seed))?
                }
            };
            closure_degeneration_check(&dataset, ClosureParams { drop_constants: flags.drop_constants })
        }
        ExperimentName::Rescale => {
            let split = flags.split_p.map_or(SplitModel::Uniform, |p| SplitModel::Fixed { p });
            let params = RescaleParams { trials: flags.trials, seed, split };
            let (stats, attribute) = match loaded {
                Some(d) => {
                    let class = flags.class.as_deref().context("--class is required with --data")?;
                    let attribute = flags.attribute.clone().context("--attribute is required with --data")?;
                    let (rest, assignment) = label_partition(&d, class)?;
                    (collect_stats(&rest, &assignment)?, attribute)
                }
                None => (random_stats(seed), "A".to_string()),
            };
            let values = stats.discrete(&attribute).map_err(LabError::from)?.values().to_vec();
            let map = pairing_merge_map(&values)?;
            rescaling_experiment(&stats, &attribute, &map, &params)
        }
        ExperimentName::Uniform => {
            uniform_ideal_experiment(&UniformParams { classes: flags.classes, deltas: flags.deltas.clone() })
        }
        ExperimentName::Density => density_shift_experiment(&DensityParams {
            b: flags.b,
            a: flags.a,
            d1: flags.d1,
            d2: flags.d2,
            grid: flags.grid,
        }),
        ExperimentName::Bivariate => bivariate_experiment(&BivariateParams {
            sigma_y: flags.sigma_y,
            correlations: flags.correlations.clone(),
            quadrature: QuadratureSpec { half_width: flags.half_width, target_error: flags.target_error },
        }),
        ExperimentName::All => unreachable!("expanded by the caller"),
    };
    Ok(report?)
}

fn experiment_document(report: &ExperimentReport, name: ExperimentName, flags: &ExperimentFlags, seed: u64) -> Json {
    let mut doc = serde_json::to_value(report).expect("reports serialize");
    let inputs: BTreeMap<&str, Json> = [("data", &flags.data), ("schema", &flags.schema)]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|p| (k, path_json(p))))
        .collect();
    doc["audit"] = audit(
        "experiment",
        json!({
            "experiment": format!("{name:?}").to_lowercase(),
            "inputs": inputs,
            "rng": RNG_ALGORITHM,
            "seed": seed,
        }),
    );
    doc
}

fn experiment(args: ExperimentArgs) -> Result<Outcome> {
    let seed = resolve_seed(args.seed);
    let names = if args.name == ExperimentName::All {
        vec![
            ExperimentName::Closure,
            ExperimentName::Rescale,
            ExperimentName::Uniform,
            ExperimentName::Density,
            ExperimentName::Bivariate,
        ]
    } else {
        vec![args.name]
    };
    if args.name == ExperimentName::All {
        if let Some(dir) = &args.out {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    let mut failed = false;
    for name in names {
        let report = run_experiment(name, &args.params, seed)?;
        let label = format!("{name:?}").to_lowercase();
        let doc = to_canonical_string(&experiment_document(&report, name, &args.params, seed));
        match &args.out {
            Some(dir) if args.name == ExperimentName::All => write_file(&dir.join(format!("{label}.json")), &doc)?,
            Some(path) => write_file(path, &doc)?,
            None => print!("{doc}"),
        }
        for check in report.failed() {
            eprintln!("{label}: check {check} failed");
        }
        failed |= !report.all_pass();
    }
    Ok(if failed { Outcome::ChecksFailed } else { Outcome::Done })
}

fn gen(args: GenArgs) -> Result<Outcome> {
    let seed = resolve_seed(args.seed);
    let generator = match args.generator {
        GenCommand::IdealUniform { classes, deltas, class_mass, n } => {
            Generator::IdealUniform { classes, deltas, n, class_mass }
        }
        GenCommand::TwoDensity { b, a, d1, d2, n } => Generator::TwoDensity { b, a, d1, d2, n },
        GenCommand::Bivariate { mu_x, mu_y, sigma_x, sigma_y, r, n } => {
            Generator::BivariateNormal { mu_x, mu_y, sigma_x, sigma_y, r, n }
        }
        GenCommand::Boolean { k, n } => Generator::BooleanDiagnostic { k, n },
    };
    let spec = SyntheticSpec::new(generator, seed);
    let dataset = generate(&spec)?;
    let csv = dataset.to_csv_string()?;
    let schema = to_canonical_string(&dataset.schema().to_json_value());
    let Some(out) = args.out else {
        print!("{csv}");
        return Ok(Outcome::Done);
    };
    let schema_path = sidecar_path(&out, "schema.json");
    write_file(&out, &csv)?;
    write_file(&schema_path, &schema)?;
    let sidecar = audit(
        "gen",
        json!({ "spec": spec, "rng": RNG_ALGORITHM, "out": path_json(&out), "schema": path_json(&schema_path) }),
    );
    write_file(&sidecar_path(&out, "audit.json"), &to_canonical_string(&sidecar))?;
    Ok(Outcome::Done)
}
