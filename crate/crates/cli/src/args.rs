use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Eigen-inference from the spectrum of sample covariance matrices.
#[derive(Debug, Parser)]
#[command(name = "eigeninfer", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Population and sample moments of a model.
    Moments(MomentsArgs),
    /// Second-order covariance matrix of the trace powers.
    Cov(CovArgs),
    /// Test a hypothesised model (sphericity when none is given).
    Test(TestArgs),
    /// Estimate population eigenvalues and block masses.
    Estimate(EstimateArgs),
    /// Select the number of eigenvalue blocks.
    Order(OrderArgs),
    /// Draw Monte Carlo trace statistics or a raw data matrix.
    Simulate(SimulateArgs),
    /// Rerun the simulation behind one of the reference tables.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Population blocks as `a1:t1,a2:t2,...`; a trailing `?` marks a value as free for `estimate`.
    #[arg(long, conflicts_with = "spike")]
    pub model: Option<String>,
    /// Spiked model `a[,count]` over a bulk at `--lambda`.
    #[arg(long)]
    pub spike: Option<String>,
    /// Bulk level of the spiked model; `free` lets `estimate` fit it.
    #[arg(long, default_value = "1")]
    pub lambda: String,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SizeArgs {
    /// Dimension.
    #[arg(long)]
    pub p: Option<usize>,
    /// Number of samples.
    #[arg(long)]
    pub n: Option<usize>,
    /// 1 for real data, 2 for complex.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub beta: Option<u8>,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub size: SizeArgs,
    /// Aspect ratio p/n; overrides --p/--n.
    #[arg(long)]
    pub c: Option<f64>,
    /// Highest moment order.
    #[arg(long, visible_alias = "q", default_value_t = 6)]
    pub order: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CovArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub size: SizeArgs,
    /// Number of trace powers.
    #[arg(long, default_value_t = 2)]
    pub q: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Trace CSV (from `simulate`) or raw data CSV with samples as columns.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of trace powers.
    #[arg(long, default_value_t = 2)]
    pub q: usize,
    /// Acceptance probability under the null.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Treat raw data as this field regardless of its cells.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub beta: Option<u8>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Trace CSV (first row is used) or raw data CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Fit this many blocks with every parameter free.
    #[arg(long, conflicts_with_all = ["model", "spike"])]
    pub blocks: Option<usize>,
    /// Number of trace powers; defaults to the smallest that identifies the free parameters.
    #[arg(long)]
    pub q: Option<usize>,
    /// Test the estimate on the first half of the samples with this many trace powers.
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub beta: Option<u8>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OrderArgs {
    /// Raw data CSV with samples as columns.
    #[arg(long)]
    pub input: PathBuf,
    /// Largest number of blocks tried.
    #[arg(long, default_value_t = 5)]
    pub k_max: usize,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub beta: Option<u8>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub size: SizeArgs,
    /// Number of trace powers per trial.
    #[arg(long, default_value_t = 4)]
    pub q: usize,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rotate the population eigenbasis by a Haar-random matrix.
    #[arg(long)]
    pub haar: bool,
    /// Emit the raw `p x n` data matrix of this trial instead of trace statistics.
    #[arg(long)]
    pub raw: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Table number: 2, 4, 5, 6, 7, 8, 9 or 10.
    pub table: u32,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Only rows with this dimension.
    #[arg(long)]
    pub p: Option<usize>,
    /// Only rows with this sample count.
    #[arg(long)]
    pub n: Option<usize>,
    /// Only this field (tables with both), or override the table's field.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub beta: Option<u8>,
    /// Largest order tried by order selection (table 7).
    #[arg(long, default_value_t = 5)]
    pub k_max: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}
