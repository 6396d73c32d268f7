//! Command-line front end. Every command is deterministic in its `--seed`
//! and embeds tool version, resolved configuration and input digests in its
//! artifacts.

pub mod artifact;
pub mod benchmark;
mod commands;
pub mod io;
pub mod preprocess;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CoxError;
use crate::model_selection::{two_step_ipf_factors, IpfConfig};
use crate::penalty::{GroupStructure, PenaltyFamily, PenaltySpec};
use crate::solver::SolverConfig;
use crate::survival::SurvivalDataset;

pub use commands::run;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error at line {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] CoxError),
}

impl CliError {
    /// Process exit code; see FORMATS.md for the table.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Parse { .. } => 4,
            CliError::Schema(_) => 5,
            CliError::Model(e) => match e {
                CoxError::TooFewEvents { .. } => 11,
                CoxError::NonFiniteObjective { .. } => 12,
                CoxError::AllZeroStepOne => 13,
                CoxError::UnknownScenario { .. } => 14,
                CoxError::CovarianceNotPD => 15,
                CoxError::ZeroCensorWeight { .. } => 16,
                CoxError::AllCensored => 17,
                _ => 10,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "excox", version, about = "Penalized Cox regression with group-structured penalties")]
pub struct Cli {
    /// Worker threads for CV folds and replicates (default: logical cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one model at a fixed lambda.
    Fit(FitArgs),
    /// Select lambda by K-fold CV and refit on all data.
    Cv(CvArgs),
    /// Simulate a grouped survival dataset.
    Simulate(SimulateArgs),
    /// Run the simulation benchmark over replicates.
    Benchmark(BenchmarkArgs),
    /// Regularization path as long-format CSV.
    Path(PathArgs),
    /// Keep protected and high-variance columns.
    FilterVariance(FilterArgs),
    /// Selection frequency over random training splits.
    SelectFrequency(FrequencyArgs),
    /// Survival predictions from a fitted model.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

fn parse_family(s: &str) -> Result<PenaltyFamily, String> {
    PenaltyFamily::from_short_name(s)
        .ok_or_else(|| format!("unknown family `{s}` (exclusive|lasso|ridge|elastic|group|ipf)"))
}

/// Comma-separated values given as one argument.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: std::str::FromStr> std::str::FromStr for List<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|x| x.trim().parse().map_err(|_| format!("cannot parse `{x}`")))
            .collect::<Result<_, _>>()
            .map(List)
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Survival data CSV: `time,status,<variables...>`.
    #[arg(long)]
    pub data: PathBuf,
    /// Group file CSV: `variable,group`. Defaults to one group per variable.
    #[arg(long)]
    pub groups: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_sweeps: usize,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub newton_correction: Switch,
}

impl SolverArgs {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            tolerance: self.tolerance,
            max_sweeps: self.max_sweeps,
            newton_correction: self.newton_correction == Switch::On,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FamilyArgs {
    #[arg(long, value_parser = parse_family, default_value = "exclusive")]
    pub family: PenaltyFamily,
    /// Elastic Net mixing weight (1 = Lasso, 0 = Ridge).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Comma-separated IPF factors, one per group. Derived by two-step CV
    /// when omitted.
    #[arg(long)]
    pub ipf_factors: Option<List<f64>>,
    /// First-step family for derived IPF factors (ridge or lasso).
    #[arg(long, value_parser = parse_family, default_value = "ridge")]
    pub ipf_step_one: PenaltyFamily,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 50)]
    pub grid_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub grid_min_ratio: f64,
    /// Explicit comma-separated descending lambdas; overrides the grid.
    #[arg(long)]
    pub lambdas: Option<List<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct FoldArgs {
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Stop CV once the score has not improved for this many grid values
    /// (0 evaluates the whole grid).
    #[arg(long, default_value_t = 0)]
    pub patience: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long)]
    pub lambda: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Seed for the CV used to derive IPF factors.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub family: FamilyArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub folds: FoldArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory for cv.json and model.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Preset grouping design (1, 2 or 3).
    #[arg(long)]
    pub scenario: Option<u8>,
    /// Total signal variables for the preset (5, 10 or 20).
    #[arg(long, default_value_t = 5)]
    pub signals: usize,
    /// Custom group sizes, comma-separated (instead of a preset).
    #[arg(long)]
    pub group_sizes: Option<List<usize>>,
    /// Custom signals per group, comma-separated.
    #[arg(long)]
    pub signals_per_group: Option<List<usize>>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub within_rho: Option<f64>,
    #[arg(long)]
    pub between_rho: Option<f64>,
    #[arg(long)]
    pub censor_rate: Option<f64>,
    #[arg(long)]
    pub baseline_median: Option<f64>,
    /// Give every signal a positive sign instead of a random one.
    #[arg(long)]
    pub positive: bool,
    /// Also write validation.csv with this many subjects under the same
    /// coefficients.
    #[arg(long)]
    pub validation_n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory for data.csv, groups.csv and truth.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Comma-separated `scenario:signals` pairs, e.g. `1:5,2:10`.
    #[arg(long, default_value = "1:5")]
    pub scenarios: String,
    /// Comma-separated families.
    #[arg(long, default_value = "exclusive,ipf,elastic,group")]
    pub families: String,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub n_validation: usize,
    /// Training size per replicate (defaults to the preset's 500).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 50)]
    pub grid_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub grid_min_ratio: f64,
    /// CV early-stopping patience (0 evaluates the whole grid).
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// CV repeats for the IPF lambda.
    #[arg(long, default_value_t = 10)]
    pub ipf_repeats: usize,
    /// Elastic Net mixing weight.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_parser = parse_family, default_value = "ridge")]
    pub ipf_step_one: PenaltyFamily,
    /// Upper end of the IBS time grid (default: last validation event).
    #[arg(long)]
    pub ibs_horizon: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory for results.csv, summary.csv, summary.txt and
    /// benchmark.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PathArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub family: FamilyArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "path.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Group file; needed to name protected groups.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Group whose variables always survive (repeatable).
    #[arg(long)]
    pub protected: Vec<String>,
    /// Number of unprotected variables to keep, by sample variance.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Minimum sample variance of kept unprotected variables.
    #[arg(long)]
    pub min_var: Option<f64>,
    #[arg(long, default_value = "filtered.csv")]
    pub out: PathBuf,
    /// Where to write the group file restricted to kept variables.
    #[arg(long)]
    pub groups_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FrequencyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Training fraction of each random split.
    #[arg(long, default_value_t = 0.7)]
    pub fraction: f64,
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 50)]
    pub grid_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub grid_min_ratio: f64,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "frequency.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model JSON written by `fit` or `cv`.
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with a header naming (at least) the model's variables.
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated times at which to predict survival.
    #[arg(long)]
    pub times: List<f64>,
    #[arg(long, default_value = "predictions.csv")]
    pub out: PathBuf,
}

/// Penalty template (lambda = 0) for `family`; IPF factors come from
/// `ipf_factors` or a two-step fit on `data`.
pub fn family_template(
    family: PenaltyFamily,
    alpha: Option<f64>,
    ipf_factors: Option<Vec<f64>>,
    data: &SurvivalDataset,
    groups: &GroupStructure,
    ipf: &IpfConfig,
) -> crate::error::Result<PenaltySpec> {
    if alpha.is_some() && family != PenaltyFamily::ElasticNet {
        return Err(CoxError::InvalidPenalty(format!("alpha applies only to elastic, not {family}")));
    }
    if ipf_factors.is_some() && family != PenaltyFamily::Ipf {
        return Err(CoxError::InvalidPenalty(format!("IPF factors given for {family}")));
    }
    let spec = match family {
        PenaltyFamily::ElasticNet => match alpha {
            Some(a) => PenaltySpec::elastic_net(0.0, a),
            None => PenaltySpec::for_family(family, 0.0),
        },
        PenaltyFamily::Ipf => match ipf_factors {
            Some(f) => PenaltySpec::ipf(0.0, f),
            None => PenaltySpec::ipf(0.0, two_step_ipf_factors(data, groups, ipf)?),
        },
        other => PenaltySpec::for_family(other, 0.0),
    };
    spec.validate(groups)?;
    Ok(spec)
}
