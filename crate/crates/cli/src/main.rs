//! `partcert`: partition, train, certify and evaluate voting ensembles.
//!
//! Exit codes: 0 success, 1 I/O failure or oracle-check violation,
//! 2 data error, 3 invalid configuration or arguments, 4 capacity error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use partcert::certify::Method;
use partcert::ensemble::{train_ensemble, Ensemble};
use partcert::harness::config::Decision;
use partcert::harness::experiment::{self, CertifyPlan, EvaluationReport};
use partcert::harness::metrics::{envelope, read_curve_csv, write_curve_csv};
use partcert::harness::{load_csv, run_experiment, CsvSchema, ExperimentConfig, TargetKind};
use partcert::oracle::{run_sweep, write_sweep_csv, Oracle, OracleConfig};
use partcert::partition::{
    overlapping_partition, random_partition, strided_partition, FeatureLayout, PartitionFile,
};
use partcert::regression::IntervalRule;
use partcert::{Error, Result};

#[derive(Parser)]
#[command(name = "partcert", version, about = "Certified robustness for partition-based voting ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split feature columns into submodel subsets and write them as JSON.
    Partition(PartitionArgs),
    /// Train an ensemble on the training split of a configured dataset.
    Train(TrainArgs),
    /// Certify every row of a CSV file with a trained ensemble.
    Certify(CertifyArgs),
    /// Run a configuration end to end and write its report.
    Evaluate(EvaluateArgs),
    /// Compare certificates against the exhaustive oracle on random profiles.
    OracleCheck(OracleArgs),
    /// Pointwise best certified accuracy over several curve files.
    Envelope(EnvelopeArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration in `key = value` format.
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set submodels=7`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for the train/test split, partition and instance hashing.
    #[arg(long)]
    seed: u64,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = self
            .overrides
            .iter()
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| Error::InvalidConfiguration(format!("--set expects KEY=VALUE, got `{kv}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        overrides.push(("seed".into(), self.seed.to_string()));
        ExperimentConfig::load_with(&self.config, &overrides)
    }
}

#[derive(Args)]
struct PartitionArgs {
    /// Number of feature columns.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    features: Option<usize>,
    /// Take the feature count from a CSV file's header.
    #[arg(long, requires = "target")]
    data: Option<PathBuf>,
    /// Target column to exclude when reading `--data`.
    #[arg(long)]
    target: Option<String>,
    #[arg(long, default_value = ",")]
    delimiter: String,
    #[arg(long)]
    submodels: usize,
    /// `strided`, `random` or `overlapping`.
    #[arg(long, default_value = "random")]
    strategy: String,
    /// Spread degree for `overlapping`.
    #[arg(long)]
    spread: Option<usize>,
    /// Required for `random` and `overlapping`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Use a partition file instead of the configured strategy.
    #[arg(long)]
    partition: Option<PathBuf>,
    /// Bundle directory; held-out rows are written to `heldout.csv` in it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CertifyArgs {
    /// Ensemble bundle directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long, default_value = ",")]
    delimiter: String,
    /// `plurality` or `runoff`.
    #[arg(long, default_value = "plurality")]
    decision: String,
    /// Comma-separated top-k values to certify for the true label.
    #[arg(long, default_value = "")]
    topk: String,
    /// Regression interval, `absolute:XI` or `relative:XI`.
    #[arg(long)]
    interval: Option<String>,
    /// Largest radius on the accuracy curves; defaults to the submodel count.
    #[arg(long)]
    psi_max: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    /// `plurality`, `runoff`, `topk(K)` or `overlap(PHI)`.
    #[arg(long)]
    method: String,
    /// Submodel count; for `overlap(PHI)` the base count before spreading.
    #[arg(long)]
    submodels: usize,
    #[arg(long)]
    labels: usize,
    #[arg(long, default_value_t = 1000)]
    profiles: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = OracleConfig::default().max_submodels)]
    max_submodels: usize,
    #[arg(long, default_value_t = OracleConfig::default().max_labels)]
    max_labels: usize,
    /// CSV report path; a summary is printed either way.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnvelopeArgs {
    /// Curve files with `psi,certified_accuracy` columns.
    #[arg(required = true)]
    curves: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn delimiter(s: &str) -> Result<u8> {
    match s {
        "tab" | "\\t" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(Error::InvalidConfiguration(format!("delimiter must be one character, got `{s}`"))),
    }
}

fn partition(args: PartitionArgs) -> Result<()> {
    let d = match (&args.data, args.features) {
        (Some(path), _) => {
            let schema = CsvSchema {
                target: args.target.clone().unwrap_or_default(),
                delimiter: delimiter(&args.delimiter)?,
            };
            load_csv(path, &schema, TargetKind::Labels)?.d()
        }
        (None, Some(d)) => d,
        (None, None) => unreachable!("clap requires --features or --data"),
    };
    let t = args.submodels;
    let need_seed = || {
        args.seed
            .ok_or_else(|| Error::InvalidConfiguration(format!("--seed is required for `{}` partitions", args.strategy)))
    };
    let layout = match (args.strategy.as_str(), args.spread) {
        ("strided", None) => FeatureLayout::Disjoint(strided_partition(d, t)?),
        ("random", None) => FeatureLayout::Disjoint(random_partition(d, t, need_seed()?)?),
        ("overlapping", Some(phi)) => FeatureLayout::Overlapping(overlapping_partition(d, t, phi, need_seed()?)?),
        ("overlapping", None) => return Err(Error::InvalidConfiguration("overlapping partitions need --spread".into())),
        ("strided" | "random", Some(_)) => {
            return Err(Error::InvalidConfiguration("--spread only applies to overlapping partitions".into()))
        }
        (other, _) => return Err(Error::InvalidConfiguration(format!("unknown partition strategy `{other}`"))),
    };
    PartitionFile::from_layout(&layout, args.seed).write(&args.out)?;
    println!("wrote {} submodel feature sets over {d} features to {}", layout.num_submodels(), args.out.display());
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let config = args.config.load()?;
    let seed = config.require_seed()?;
    let split = experiment::load_and_split(&config, seed)?;
    let ensemble = match &args.partition {
        None => experiment::train_from_config(&config, &split.train, seed)?,
        Some(path) => {
            let layout = PartitionFile::read(path)?.to_layout().map_err(|e| e.in_stage("partition"))?;
            let mode = experiment::training_mode(&config, seed);
            train_ensemble(&split.train, &layout, &config.learner, mode, seed).map_err(|e| e.in_stage("train"))?
        }
    };
    ensemble.save(&args.out)?;
    let heldout = args.out.join("heldout.csv");
    partcert::harness::write_csv(&heldout, &split.test, &config.schema)?;
    println!(
        "trained {} submodels on {} rows; {} held-out rows in {}",
        ensemble.num_submodels(),
        split.train.n(),
        split.test.n(),
        heldout.display()
    );
    Ok(())
}

fn parse_decision(s: &str) -> Result<Decision> {
    match s {
        "plurality" => Ok(Decision::Plurality),
        "runoff" => Ok(Decision::Runoff),
        _ => Err(Error::InvalidConfiguration(format!("unknown decision `{s}`"))),
    }
}

fn parse_topk(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|k| !k.is_empty())
        .map(|k| k.parse().map_err(|_| Error::InvalidConfiguration(format!("invalid top-k value `{k}`"))))
        .collect()
}

fn parse_interval(s: &str) -> Result<IntervalRule> {
    let bad = || Error::InvalidConfiguration(format!("interval must be `absolute:XI` or `relative:XI`, got `{s}`"));
    let (kind, xi) = s.split_once(':').ok_or_else(bad)?;
    let xi: f64 = xi.parse().map_err(|_| bad())?;
    let rule = match kind {
        "absolute" => IntervalRule::Absolute { xi },
        "relative" => IntervalRule::Relative { xi },
        _ => return Err(bad()),
    };
    rule.validate()?;
    Ok(rule)
}

fn print_summary(report: &EvaluationReport) {
    println!("{:<14} {:>9} {:>9} {:>8}", "method", "instances", "accuracy", "r_med");
    for s in &report.summaries {
        println!(
            "{:<14} {:>9} {:>9.4} {:>8}",
            s.method.to_string(),
            s.instances,
            s.accuracy,
            s.median_radius.to_string()
        );
    }
}

fn certify(args: CertifyArgs) -> Result<()> {
    let ensemble = Ensemble::load(&args.model)?;
    let kind = match ensemble.label_names() {
        Some(names) => TargetKind::KnownLabels(names.to_vec()),
        None => TargetKind::Values,
    };
    let schema = CsvSchema {
        target: args.target.clone(),
        delimiter: delimiter(&args.delimiter)?,
    };
    let data = load_csv(&args.data, &schema, kind)?;
    if data.feature_names() != ensemble.feature_names() {
        return Err(Error::Data(format!(
            "{} has feature columns {:?}, the model expects {:?}",
            args.data.display(),
            data.feature_names(),
            ensemble.feature_names()
        )));
    }
    let interval = args.interval.as_deref().map(parse_interval).transpose()?;
    let plan = CertifyPlan::new(&ensemble, parse_decision(&args.decision)?, parse_topk(&args.topk)?, interval)?;
    let records = experiment::certify_dataset(&ensemble, &plan, &data)?;
    let psi_max = args.psi_max.unwrap_or(ensemble.num_submodels() as u32);
    let report = EvaluationReport::from_records(records, psi_max)?;
    report.write(&args.out)?;
    print_summary(&report);
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let config = args.config.load()?;
    let report = run_experiment(&config)?;
    report.write(&args.out)?;
    print_summary(&report);
    Ok(())
}

/// Returns whether every certificate was sound.
fn oracle_check(args: OracleArgs) -> Result<bool> {
    let method: Method = args
        .method
        .parse()
        .map_err(|_| Error::InvalidConfiguration(format!("unknown method `{}`", args.method)))?;
    let oracle = Oracle::new(OracleConfig {
        max_submodels: args.max_submodels,
        max_labels: args.max_labels,
    });
    let records = run_sweep(&oracle, method, args.submodels, args.labels, args.profiles, args.seed)?;
    if let Some(path) = &args.out {
        let file = std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        write_sweep_csv(file, &records)?;
    }
    let unsound = records.iter().filter(|r| !r.sound()).count();
    let equal = records.iter().filter(|r| r.equal).count();
    println!(
        "{method}: {} certificates, {equal} equal to the oracle, {} below, {unsound} above",
        records.len(),
        records.len() - equal - unsound
    );
    Ok(unsound == 0)
}

fn envelope_cmd(args: EnvelopeArgs) -> Result<()> {
    let curves = args.curves.iter().map(|p| read_curve_csv(p)).collect::<Result<Vec<_>>>()?;
    let best = envelope(&curves);
    write_curve_csv(&args.out, &best)?;
    println!("wrote envelope of {} curves ({} points) to {}", curves.len(), best.len(), args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Partition(a) => partition(a).map(|_| true),
        Command::Train(a) => train(a).map(|_| true),
        Command::Certify(a) => certify(a).map(|_| true),
        Command::Evaluate(a) => evaluate(a).map(|_| true),
        Command::OracleCheck(a) => oracle_check(a),
        Command::Envelope(a) => envelope_cmd(a).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(3);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
