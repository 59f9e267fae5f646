//! `faust`: factorize matrices into sparse products and run the recovery and
//! denoising experiments from the command line.
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 when a
//! solver fails numerically.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::CliError;

#[derive(Debug, Parser)]
#[command(name = "faust", version, about = "Multi-layer sparse matrix factorization")]
struct Cli {
    /// Seed for every random choice; runs are reproducible given the seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Hierarchical factorization of a MatrixMarket matrix or a demo matrix.
    Factorize(FactorizeArgs),
    /// Multiply a vector by a stored FAµST.
    Apply(ApplyArgs),
    /// Truncated-SVD error and parameter count for a list of ranks.
    SvdBaseline(SvdArgs),
    /// Support recovery with a planted sparse operator and its approximations.
    Localize(LocalizeArgs),
    /// Patch-based denoising with a learned FAµST dictionary.
    Denoise(DenoiseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Demo {
    Hadamard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideArg {
    Right,
    Left,
}

#[derive(Debug, Args)]
pub struct FactorizeArgs {
    /// Matrix to factorize (MatrixMarket).
    #[arg(long, short)]
    input: Option<PathBuf>,

    /// Built-in test matrix instead of `--input`.
    #[arg(long, value_enum, conflicts_with = "input")]
    demo: Option<Demo>,

    /// Size of the demo matrix.
    #[arg(long, default_value_t = 32)]
    n: usize,

    /// Key/value plan file; command-line flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,

    /// One level as "<residual>;<factor>" constraints; repeat per level.
    #[arg(long = "level", value_name = "RES;FAC")]
    levels: Vec<String>,

    #[arg(long, value_enum)]
    side: Option<SideArg>,

    /// Number of factors J for the k/s/ρ/P schedule.
    #[arg(long = "factors", short = 'J')]
    factors: Option<usize>,

    /// Nonzeros per column of the rightmost factor.
    #[arg(long)]
    k: Option<usize>,

    /// Nonzeros of each intermediate factor.
    #[arg(long)]
    s: Option<usize>,

    /// Residual budget decay.
    #[arg(long)]
    rho: Option<f64>,

    /// Residual budget of the first level.
    #[arg(long = "p", short = 'P')]
    p: Option<f64>,

    /// PALM iterations of each two-factor split.
    #[arg(long)]
    iters: Option<usize>,

    /// PALM iterations of each global refinement.
    #[arg(long)]
    global_iters: Option<usize>,

    #[arg(long)]
    step_margin: Option<f64>,

    /// Stop a PALM run early once Ψ stalls below this decrease.
    #[arg(long)]
    stop_threshold: Option<f64>,

    /// Stop adding factors once the relative error exceeds this value.
    #[arg(long)]
    error_threshold: Option<f64>,

    /// FAµST JSON output.
    #[arg(long, short)]
    output: Option<PathBuf>,

    /// Per-iteration trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,

    /// Per-level summary CSV.
    #[arg(long)]
    levels_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    /// FAµST JSON file.
    #[arg(long)]
    faust: PathBuf,

    /// Whitespace-separated input vector.
    #[arg(long, short)]
    input: PathBuf,

    /// Output vector; printed to stdout if omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,

    /// Multiply by the transpose.
    #[arg(long)]
    transpose: bool,

    /// Print the multiply-add and scaling counts.
    #[arg(long)]
    count_flops: bool,
}

#[derive(Debug, Args)]
pub struct SvdArgs {
    #[arg(long, short)]
    input: PathBuf,

    /// Comma-separated ranks.
    #[arg(long, value_delimiter = ',', required = true)]
    ranks: Vec<usize>,

    /// CSV output; printed to stdout if omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    /// Dimensions of the planted factors, left to right: `m,a,…,n`.
    #[arg(long, value_delimiter = ',', default_values_t = [32, 64, 256])]
    dims: Vec<usize>,

    /// Nonzeros of each planted factor, left to right.
    #[arg(long, value_delimiter = ',', default_values_t = [512, 1024])]
    nnz: Vec<usize>,

    #[arg(long, default_value_t = 500)]
    trials: usize,

    #[arg(long, default_value_t = 2)]
    sources: usize,

    /// Column budget of a hierarchical approximation to add; repeatable.
    #[arg(long = "approx-k")]
    approx_k: Vec<usize>,

    /// PALM iterations for the approximations.
    #[arg(long, default_value_t = 50)]
    iters: usize,

    /// Extra operator as `label=path.json`; repeatable.
    #[arg(long = "operator", value_name = "LABEL=PATH")]
    operators: Vec<String>,

    /// Include the all-zero operator (chance baseline).
    #[arg(long)]
    zero_baseline: bool,

    /// MatrixMarket table with one coordinate row per column of M.
    #[arg(long)]
    coordinates: Option<PathBuf>,

    /// Per-trial CSV.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    /// Input PGM image.
    #[arg(long, short)]
    input: PathBuf,

    /// Add Gaussian noise of this standard deviation to the input first and
    /// score against the noiseless input.
    #[arg(long)]
    sigma: Option<f64>,

    /// Reference image for PSNR.
    #[arg(long, conflicts_with = "sigma")]
    clean: Option<PathBuf>,

    /// Denoised PGM output.
    #[arg(long, short)]
    output: PathBuf,

    /// Report CSV.
    #[arg(long)]
    report: Option<PathBuf>,

    /// Learned dictionary as FAµST JSON.
    #[arg(long)]
    dictionary: Option<PathBuf>,

    /// Also run the dense K-SVD dictionary through the same pipeline.
    #[arg(long)]
    dense_baseline: bool,

    #[arg(long, default_value_t = 8)]
    patch: usize,
    #[arg(long, default_value_t = 10_000)]
    training: usize,
    #[arg(long, default_value_t = 128)]
    atoms: usize,
    /// Atoms per patch.
    #[arg(long, default_value_t = 5)]
    t: usize,
    #[arg(long, default_value_t = 50)]
    ksvd_iters: usize,
    #[arg(long = "factors", short = 'J', default_value_t = 4)]
    factors: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 128)]
    s: usize,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long = "p", short = 'P', default_value_t = 4096.0)]
    p: f64,
    #[arg(long, default_value_t = 50)]
    palm_iters: usize,
    /// Keep patch means in the training and coded data.
    #[arg(long)]
    keep_mean: bool,
    /// Select atoms by normalized correlation.
    #[arg(long)]
    normalize_atoms: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Factorize(a) => commands::factorize(&a, cli.seed),
        Command::Apply(a) => commands::apply(&a),
        Command::SvdBaseline(a) => commands::svd_baseline(&a, cli.seed),
        Command::Localize(a) => commands::localize(&a, cli.seed),
        Command::Denoise(a) => commands::denoise(&a, cli.seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
