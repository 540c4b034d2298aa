//! Command-line front end.
//!
//! A TOML config file may hold the global keys (`seed`, `jobs`, `out`) at
//! top level and one table per subcommand whose keys are that subcommand's
//! flag names. Config values are appended as flags the user did not pass,
//! so flags always win and unknown keys fail like unknown flags.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::data::SyntheticKind;
use crate::error::Error;
use crate::eval::Task;
use crate::gp::MeanPolicy;
use crate::graph::LaplacianVariant;

pub use commands::parse_times;

#[derive(Debug, Parser)]
#[command(
    name = "spde-gp",
    version,
    about = "SPDE-derived Gaussian-process kernels on graphs"
)]
pub struct Cli {
    /// TOML file with default values for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic line-graph dataset.
    Synth(SynthArgs),
    /// Sliding-window backtest of one or more kernels.
    Backtest(BacktestArgs),
    /// Compare a closed-form covariance against Euler–Maruyama paths.
    ValidateKernel(ValidateArgs),
    /// Prior or posterior mean, 95% band and sample paths.
    Sample(SampleArgs),
    /// Maximize the marginal likelihood of one kernel.
    Fit(FitArgs),
}

fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("invalid value `{s}`"))
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct SynthArgs {
    /// heat-line or wave-line.
    #[arg(long, value_parser = kebab::<SyntheticKind>)]
    pub kind: Option<SyntheticKind>,
    /// Vertices on the line (default 21 for heat, 11 for wave).
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Heat conductivity.
    #[arg(long)]
    pub k: Option<f64>,
    /// Wave speed.
    #[arg(long)]
    pub speed: Option<f64>,
    /// Timestamps: `a:b`, `a:b:step` (inclusive) or a comma list.
    #[arg(long)]
    pub t: Option<String>,
    /// Observation noise standard deviation.
    #[arg(long)]
    pub noise_sd: Option<f64>,
}

/// Graph and series files; synthetic data is used when both are absent.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct DataArgs {
    /// Edge list CSV (`src,dst[,weight]`).
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    /// Observations CSV (`node_id,t,y`).
    #[arg(long, value_name = "FILE")]
    pub series: Option<PathBuf>,
    /// Treat edges as directed.
    #[arg(long)]
    pub directed: bool,
}

/// Hyperparameter overrides applied to every kernel that has them.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct KernelArgs {
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Kernel variance (temporal variance for separable kernels).
    #[arg(long)]
    pub variance: Option<f64>,
    /// Temporal lengthscale of separable kernels.
    #[arg(long)]
    pub lengthscale: Option<f64>,
    /// Observation-noise variance.
    #[arg(long)]
    pub noise: Option<f64>,
    /// unnormalized, sym-normalized or random-walk.
    #[arg(long, value_parser = kebab::<LaplacianVariant>)]
    pub laplacian: Option<LaplacianVariant>,
    /// zero or per-node.
    #[arg(long, value_parser = kebab::<MeanPolicy>)]
    pub mean_policy: Option<MeanPolicy>,
    /// Process time given to the earliest training time.
    #[arg(long)]
    pub time_offset: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct OptimizerArgs {
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Random restarts in addition to the initial hyperparameters.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Also optimize ν and κ.
    #[arg(long)]
    pub include_shape: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Kernel names, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub kernels: Vec<String>,
    /// Kernel every other kernel is DM-tested against (default: the first).
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// interpolation and/or extrapolation, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = kebab::<Task>)]
    pub tasks: Vec<Task>,
    /// Share of each window's timepoints held out for interpolation.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Initial value of `c` for every process kernel.
    #[arg(long)]
    pub c: Option<f64>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// Predict with the given hyperparameters instead of fitting each round.
    #[arg(long)]
    pub no_fit: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct GraphArgs {
    /// Edge list CSV (`src,dst[,weight]`); a line graph is used otherwise.
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub directed: bool,
    /// Vertices of the line graph used without `--graph`.
    #[arg(long)]
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct ValidateArgs {
    /// shek or swek.
    #[arg(long)]
    pub kernel: Option<String>,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, value_parser = kebab::<LaplacianVariant>)]
    pub laplacian: Option<LaplacianVariant>,
    /// Largest Euler–Maruyama step.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub paths: Option<usize>,
    /// Times compared pairwise (default: t_end/2 and t_end).
    #[arg(long, value_delimiter = ',')]
    pub times: Vec<f64>,
    /// Pass threshold in standard errors.
    #[arg(long)]
    pub max_z: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct SampleArgs {
    /// Kernel name.
    #[arg(long)]
    pub kernel: Option<String>,
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Time grid: `a:b`, `a:b:step` or a comma list.
    #[arg(long)]
    pub t: Option<String>,
    /// One output file per value of `c`.
    #[arg(long, value_delimiter = ',')]
    pub c: Vec<f64>,
    /// Values to condition on, one per vertex.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub condition: Vec<f64>,
    /// Time of the conditioning snapshot (default: first grid time).
    #[arg(long, allow_negative_numbers = true)]
    pub condition_time: Option<f64>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[command(flatten)]
    pub kernel_args: KernelArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Kernel name.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Initial `c`.
    #[arg(long)]
    pub c: Option<f64>,
    #[command(flatten)]
    pub kernel_args: KernelArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Run(e) if e.is_numeric() => 3,
            CliError::Run(
                Error::InvalidParameter(_) | Error::Unsupported { .. } | Error::NegativeTime(_),
            ) => 1,
            CliError::Run(_) => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn toml_scalar(key: &str, v: &toml::Value) -> CliResult<Option<String>> {
    Ok(Some(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(_) => return Ok(None),
        toml::Value::Array(items) => {
            let parts = items
                .iter()
                .map(|i| {
                    toml_scalar(key, i)?
                        .ok_or_else(|| CliError::Usage(format!("config key `{key}`: nested value")))
                })
                .collect::<CliResult<Vec<_>>>()?;
            parts.join(",")
        }
        _ => {
            return Err(CliError::Usage(format!(
                "config key `{key}` has an unsupported value"
            )))
        }
    }))
}

fn user_set(m: &ArgMatches, id: &str) -> bool {
    m.value_source(id) == Some(ValueSource::CommandLine)
}

/// Appends `--key value` for every config entry whose flag was not given.
fn config_args(path: &std::path::Path, matches: &ArgMatches) -> CliResult<Vec<OsString>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Run(e.into()))?;
    let table: toml::Table = toml::from_str(&text)
        .map_err(|e| CliError::Run(Error::Data(format!("{}: {e}", path.display()))))?;
    let (sub_name, sub_matches) = matches.subcommand().expect("subcommand is required");
    let cmd = Cli::command();
    let sub = cmd.find_subcommand(sub_name).expect("known subcommand");
    let known: Vec<String> = sub
        .get_arguments()
        .map(|a| a.get_id().to_string())
        .collect();
    let globals = ["seed", "jobs", "out"];
    let mut out = Vec::new();
    let mut push = |key: &str, value: &toml::Value, m: &ArgMatches| -> CliResult<()> {
        if user_set(m, key) {
            return Ok(());
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match (value, toml_scalar(key, value)?) {
            (toml::Value::Boolean(true), _) => out.push(flag.into()),
            (_, Some(v)) => out.push(format!("{flag}={v}").into()),
            _ => {}
        }
        Ok(())
    };
    for (key, value) in &table {
        match value {
            toml::Value::Table(section) if key == sub_name => {
                for (k, v) in section {
                    if !known.iter().any(|a| a == k)
                        || globals.contains(&k.as_str())
                        || k == "config"
                    {
                        return Err(CliError::Usage(format!(
                            "unknown key `{k}` in config section [{sub_name}]"
                        )));
                    }
                    push(k, v, sub_matches)?;
                }
            }
            toml::Value::Table(_) => {}
            _ if globals.contains(&key.as_str()) => push(key, value, sub_matches)?,
            _ => {
                return Err(CliError::Usage(format!(
                    "unknown top-level config key `{key}`"
                )))
            }
        }
    }
    Ok(out)
}

fn parse(args: Vec<OsString>) -> std::result::Result<Cli, clap::Error> {
    let matches = Cli::command().try_get_matches_from(&args)?;
    Cli::from_arg_matches(&matches)
}

/// Parses arguments, merges the config file and runs the command.
pub fn run(args: impl IntoIterator<Item = impl Into<OsString>>) -> CliResult<()> {
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let matches = Cli::command()
        .try_get_matches_from(&args)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let cli = match matches.get_one::<PathBuf>("config") {
        Some(path) => {
            let mut merged = args.clone();
            merged.extend(config_args(path, &matches)?);
            parse(merged).map_err(|e| CliError::Usage(e.to_string()))?
        }
        None => Cli::from_arg_matches(&matches).map_err(|e| CliError::Usage(e.to_string()))?,
    };
    commands::dispatch(cli)
}

/// Entry point for the binary: returns the process exit code.
pub fn main_with_args(args: impl IntoIterator<Item = impl Into<OsString>>) -> u8 {
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    if let Err(e) = Cli::command().try_get_matches_from(&args) {
        if matches!(
            e.kind(),
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
        ) {
            let _ = e.print();
            return 0;
        }
    }
    match run(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().trim_start_matches("error: "));
            e.exit_code()
        }
    }
}
