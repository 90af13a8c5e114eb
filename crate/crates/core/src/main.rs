//! Command-line interface for fitting estimators and running the seeded
//! experiment protocols.
//!
//! Exit codes: 0 success, 2 bad arguments, 3 data error, 4 numerical error
//! (all trials failed).

use clap::{Args, Parser, Subcommand};
use semiproj::{
    emit_report, fit_estimator, impute_median, load_csv, run_cross_validation,
    run_learning_curve, run_loss_ratio, sample_split, DataError, Dataset, EstimatorKind,
    ExperimentConfig, HarnessError, ReportFormat, ReportRow, Seed,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "semiproj",
    about = "Safe semi-supervised least squares classification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a single estimator on a seeded split and write the weights as a
    /// JSON array.
    Fit(FitArgs),
    /// Run an experiment protocol and write a report.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Args)]
struct FitArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the label column.
    #[arg(long = "label-col")]
    label_col: String,
    /// One of: supervised, self_learning, projection, icls, transductive,
    /// oracle.
    #[arg(long)]
    estimator: EstimatorKind,
    /// Ridge strength; the bias weight is never penalized.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Number of labeled rows to draw (without replacement); the remaining
    /// rows form the unlabeled block.
    #[arg(long = "n-labeled")]
    n_labeled: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the weight vector (JSON array).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Resample labeled/unlabeled/test blocks and report loss ratios against
    /// the supervised fit on the combined train block and the test block.
    LossRatio(LossRatioArgs),
    /// Report test loss and error for growing unlabeled subsets.
    LearningCurve(LearningCurveArgs),
    /// Repeated k-fold cross-validation with a small labeled budget per
    /// fold.
    CrossValidate(CrossValidateArgs),
}

#[derive(Args)]
struct CommonDataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the label column.
    #[arg(long = "label-col")]
    label_col: String,
    /// Z-score features using labeled+unlabeled statistics.
    #[arg(long)]
    standardize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LossRatioArgs {
    #[command(flatten)]
    common: CommonDataArgs,
    /// Comma-separated estimator list.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "supervised,self_learning,projection"
    )]
    estimators: Vec<EstimatorKind>,
    #[arg(long, default_value_t = 100)]
    repeats: usize,
    #[arg(long = "n-unlabeled", default_value_t = 1000)]
    n_unlabeled: usize,
    #[arg(long = "n-test", default_value_t = 1000)]
    n_test: usize,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value = "csv")]
    format: ReportFormatArg,
}

#[derive(Args)]
struct LearningCurveArgs {
    #[command(flatten)]
    common: CommonDataArgs,
    /// Comma-separated unlabeled subset sizes.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64,128,256,512")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    repeats: usize,
}

#[derive(Args)]
struct CrossValidateArgs {
    #[command(flatten)]
    common: CommonDataArgs,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 20)]
    repeats: usize,
    /// Labeled rows per fold; defaults to d+5.
    #[arg(long)]
    labeled: Option<usize>,
}

#[derive(Clone, Copy)]
struct ReportFormatArg(ReportFormat);

impl std::str::FromStr for ReportFormatArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.parse::<ReportFormat>().map(ReportFormatArg)
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string())
}

fn load_dataset(path: &Path, label_col: &str) -> Result<Dataset, DataError> {
    let ds = load_csv(path, label_col)?;
    impute_median(&ds)
}

fn run_fit(args: &FitArgs) -> Result<(), CliError> {
    let ds = load_dataset(&args.data, &args.label_col)?;
    if args.n_labeled == 0 || args.n_labeled > ds.n_rows() {
        return Err(CliError::Data(DataError::InsufficientRows {
            requested: args.n_labeled.max(1),
            available: ds.n_rows(),
        }));
    }
    let n_unlabeled = ds.n_rows() - args.n_labeled;
    let split = sample_split(
        &ds,
        args.n_labeled,
        n_unlabeled,
        0,
        Seed(args.seed),
        false,
        false,
    )?;
    let ridge = semiproj::RidgeConfig { lambda: args.lambda, penalize_bias: false };
    let fitted = fit_estimator(
        args.estimator,
        &split,
        &ridge,
        &semiproj::HARNESS_QP_OPTIONS,
        100,
    )
    .map_err(CliError::Numerical)?;
    let weights: Vec<f64> = fitted.w.as_vector().iter().copied().collect();
    let json = serde_json::to_string(&weights).expect("weights serialize");
    std::fs::write(&args.out, json + "\n").map_err(|e| CliError::Data(DataError::Io(e)))?;
    eprintln!(
        "fit {} on {} labeled / {} unlabeled rows (converged: {}); weights -> {}",
        args.estimator,
        args.n_labeled,
        n_unlabeled,
        fitted.converged,
        args.out.display()
    );
    Ok(())
}

fn write_report(rows: &[ReportRow], format: ReportFormat, out: &Path) -> Result<(), CliError> {
    emit_report(rows, format, out).map_err(CliError::from)?;
    eprintln!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn run_experiment(cmd: &ExperimentCommand) -> Result<(), CliError> {
    match cmd {
        ExperimentCommand::LossRatio(args) => {
            let ds = load_dataset(&args.common.data, &args.common.label_col)?;
            let mut cfg = ExperimentConfig::loss_ratio(Seed(args.common.seed));
            cfg.dataset_name = dataset_name(&args.common.data);
            cfg.estimators = args.estimators.clone();
            cfg.n_repeats = args.repeats;
            cfg.n_unlabeled = args.n_unlabeled;
            cfg.n_test = args.n_test;
            cfg.lambda = args.lambda;
            cfg.standardize = args.common.standardize;
            let rows = run_loss_ratio(&ds, &cfg)?;
            write_report(&rows, args.format.0, &args.common.out)
        }
        ExperimentCommand::LearningCurve(args) => {
            let ds = load_dataset(&args.common.data, &args.common.label_col)?;
            let mut cfg = ExperimentConfig::learning_curve(Seed(args.common.seed));
            cfg.dataset_name = dataset_name(&args.common.data);
            cfg.n_repeats = args.repeats;
            cfg.sizes = args.sizes.clone();
            cfg.standardize = args.common.standardize;
            let rows = run_learning_curve(&ds, &cfg)?;
            write_report(&rows, ReportFormat::Csv, &args.common.out)
        }
        ExperimentCommand::CrossValidate(args) => {
            let ds = load_dataset(&args.common.data, &args.common.label_col)?;
            let mut cfg = ExperimentConfig::cross_validation(Seed(args.common.seed));
            cfg.dataset_name = dataset_name(&args.common.data);
            cfg.folds = args.folds;
            cfg.n_repeats = args.repeats;
            cfg.n_labeled = args.labeled;
            cfg.standardize = args.common.standardize;
            let rows = run_cross_validation(&ds, &cfg)?;
            write_report(&rows, ReportFormat::Csv, &args.common.out)
        }
    }
}

enum CliError {
    Data(DataError),
    Numerical(semiproj::EstimatorError),
    Harness(HarnessError),
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e)
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Data(d) => CliError::Data(d),
            other => CliError::Harness(other),
        }
    }
}

impl CliError {
    fn report(&self) -> (u8, String) {
        match self {
            CliError::Data(e) => (3, format!("data error: {e}")),
            CliError::Numerical(e) => (4, format!("numerical error: {e}")),
            CliError::Harness(e) => {
                let code = match e {
                    HarnessError::AllTrialsFailed | HarnessError::GuaranteeViolated { .. } => 4,
                    HarnessError::InvalidConfig(_) => 2,
                    _ => 3,
                };
                (code, format!("{e}"))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Fit(args) => run_fit(args),
        Command::Experiment(cmd) => run_experiment(cmd),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, message) = e.report();
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
