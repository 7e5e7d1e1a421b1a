//! The `bicause` command line: fit, estimate, audit, explain, simulate and
//! benchmark.
//!
//! Exit codes are 0 on success, 2 for usage, configuration and I/O
//! problems, and 3 when the data violates a contract of the method (a single
//! treatment arm, missing values, a singular covariance and so on).

mod commands;
mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use bicause_tree::stats::TestPolicy;
use bicause_tree::tree::{FeatureSelection, PositivityKind};
use bicause_tree::{ColumnSchema, FitConfig};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] bicause_tree::Error),

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config file {path}: {msg}")]
    Config { path: PathBuf, msg: String },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use bicause_tree::Error as E;
        match self {
            CliError::Core(
                E::SingleArm(..)
                | E::EmptyGroup(_)
                | E::InvalidData(_)
                | E::ZeroMargin
                | E::SingularCovariance(_)
                | E::Logistic(_),
            ) => EXIT_DATA,
            _ => EXIT_USAGE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bicause", version, about = "Balancing trees for average treatment effect estimation")]
pub struct Cli {
    /// Flat `key = value` file; its entries act as flags given before the command line ones.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a tree and write it as JSON.
    Fit(FitArgs),
    /// Estimate the average treatment effect with a fitted tree.
    Estimate(EstimateArgs),
    /// Report the leaves flagged for positivity violations.
    Audit(AuditArgs),
    /// Print the rule that leads to each leaf.
    Explain(ExplainArgs),
    /// Write a simulated dataset as CSV.
    Simulate(SimulateArgs),
    /// Replicated train/test bias benchmark.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SchemaFlags {
    #[arg(long, default_value = "T")]
    pub treatment: String,
    #[arg(long, default_value = "Y")]
    pub outcome: String,
    /// Feature columns, comma separated; default is every other column.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Potential-outcome columns. `y0` and `y1` are picked up when present.
    #[arg(long)]
    pub y0: Option<String>,
    #[arg(long)]
    pub y1: Option<String>,
}

impl SchemaFlags {
    pub fn schema(&self) -> ColumnSchema {
        let mut s = ColumnSchema::new(&self.treatment, &self.outcome);
        if let Some(f) = &self.features {
            s = s.with_features(f.clone());
        }
        s
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SelectionArg {
    MaxAsmd,
    Random,
    CombinedSq,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PositivityArg {
    Crump,
    SymmetricPrevalence,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TestArg {
    Cochran,
    Fisher,
    ChiSquared,
}

#[derive(Debug, Clone, Args)]
pub struct FitFlags {
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub asmd_threshold: Option<f64>,
    #[arg(long)]
    pub min_treat_group_size: Option<usize>,
    #[arg(long)]
    pub min_leaf_population: Option<usize>,
    /// Family-wise error rate for pruning.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub positivity: Option<PositivityArg>,
    #[arg(long)]
    pub crump_segments: Option<usize>,
    #[arg(long)]
    pub sp_alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub feature_selection: Option<SelectionArg>,
    #[arg(long)]
    pub max_split_candidates: Option<usize>,
    #[arg(long, value_enum)]
    pub test: Option<TestArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl FitFlags {
    pub fn config(&self) -> FitConfig {
        let d = FitConfig::default();
        FitConfig {
            max_depth: self.max_depth.unwrap_or(d.max_depth),
            asmd_threshold: self.asmd_threshold.unwrap_or(d.asmd_threshold),
            min_treat_group_size: self.min_treat_group_size.unwrap_or(d.min_treat_group_size),
            min_leaf_population: self.min_leaf_population.unwrap_or(d.min_leaf_population),
            alpha: self.alpha.unwrap_or(d.alpha),
            correction: d.correction,
            positivity_method: match self.positivity {
                None => d.positivity_method,
                Some(PositivityArg::Crump) => PositivityKind::Crump,
                Some(PositivityArg::SymmetricPrevalence) => PositivityKind::SymmetricPrevalence,
            },
            crump_segments: self.crump_segments.unwrap_or(d.crump_segments),
            sp_alpha: self.sp_alpha.unwrap_or(d.sp_alpha),
            feature_selection: match self.feature_selection {
                None => d.feature_selection,
                Some(SelectionArg::MaxAsmd) => FeatureSelection::MaxAsmd,
                Some(SelectionArg::Random) => FeatureSelection::Random,
                Some(SelectionArg::CombinedSq) => FeatureSelection::CombinedSq,
            },
            max_split_candidates: self.max_split_candidates.or(d.max_split_candidates),
            test_policy: match self.test {
                None => d.test_policy,
                Some(TestArg::Cochran) => TestPolicy::Cochran,
                Some(TestArg::Fisher) => TestPolicy::AlwaysFisher,
                Some(TestArg::ChiSquared) => TestPolicy::AlwaysChiSquared,
            },
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub schema: SchemaFlags,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Where to write the tree JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a Graphviz rendering of the tree.
    #[arg(long, value_name = "FILE")]
    pub emit_dot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EstimatorArg {
    Marginal,
    Ipw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TextFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub schema: SchemaFlags,
    #[arg(long, value_enum, default_value = "marginal")]
    pub estimator: EstimatorArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub format: TextFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub tree: PathBuf,
    /// A single leaf id; every leaf when omitted.
    #[arg(long)]
    pub leaf: Option<usize>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: TextFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimKind {
    NaturalExperiment,
    Positivity,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub kind: SimKind,
    #[arg(long, default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub noise_features: usize,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchMode {
    Bias,
    DepthSweep,
    Ablation,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_enum, conflicts_with = "data")]
    pub kind: Option<SimKind>,
    /// CSV with potential outcomes, instead of a simulated kind.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Known true effect for a CSV without potential outcomes.
    #[arg(long, requires = "data")]
    pub true_ate: Option<f64>,
    #[command(flatten)]
    pub schema: SchemaFlags,
    #[arg(long, default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    /// Comma separated method names, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub methods: Vec<String>,
    #[arg(long, value_enum, default_value = "bias")]
    pub mode: BenchMode,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,8,10")]
    pub depths: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub noise_features: usize,
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
    /// Propensity clipping bounds `lo,hi` for the ipw-lr baseline.
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.999")]
    pub ipw_clip: Vec<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Main CSV (bias, depth bias or ablation table); standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Weighted-ASMD table of a depth sweep.
    #[arg(long)]
    pub balance_out: Option<PathBuf>,
}

fn command() -> clap::Command {
    Cli::command()
        .args_override_self(true)
        .mut_subcommands(|s| s.args_override_self(true))
}

/// Flag tokens that a config file's `text` contributes to `subcommand`.
pub fn config_tokens(text: &str, subcommand: &str) -> Result<Vec<OsString>, CliError> {
    let cmd = command();
    let sub = cmd
        .find_subcommand(subcommand)
        .ok_or_else(|| CliError::Usage(format!("unknown subcommand `{subcommand}`")))?;
    config::tokens(Path::new("<config>"), text, sub)
}

/// Parses `args` (program name first), applying any config file.
pub fn parse<I, T>(args: I) -> Result<Result<Cli, clap::Error>, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let mut args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cmd = command();
    if let (Some(path), Some(sub_idx)) = config::locate(&args) {
        let name = args[sub_idx].to_string_lossy().into_owned();
        if let Some(sub) = cmd.find_subcommand(&name) {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let extra = config::tokens(&path, &text, sub)?;
            args.splice(sub_idx + 1..sub_idx + 1, extra);
        }
    }
    Ok(cmd
        .try_get_matches_from(args)
        .and_then(|m| Cli::from_arg_matches(&m)))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::Audit(a) => commands::audit(&a),
        Command::Explain(a) => commands::explain(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Benchmark(a) => commands::benchmark(&a),
    }
}

/// Full entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let cli = match parse(args) {
        Ok(Ok(cli)) => cli,
        Ok(Err(e)) => {
            let _ = e.print();
            return e.exit_code();
        }
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
