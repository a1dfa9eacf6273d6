//! The `lqdec` command-line front end.
//!
//! Every command writes a JSON run manifest next to its outputs. Exit codes:
//! 0 success, 1 usage error, 2 format error, 3 infeasible budget,
//! 4 numerical failure.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::alloc::LoraFormat;
use crate::error::Error;
use crate::factorize::SvdMethod;
use crate::lq::{LqInit, LqOptions};
use crate::quant::QuantConfig;
use crate::tensor_io::{FisherKind, MatrixKind};

pub use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "lqdec", version, about = "Low-rank plus quantized matrix decomposition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic matrices, Fisher diagonals or preset shape lists.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Quantize an LQT1 matrix into an LQQ1 container.
    Quantize(QuantizeArgs),
    /// Expand an LQQ1 container back into an LQT1 matrix.
    Dequantize(DequantizeArgs),
    /// Decompose a matrix into quantized and low-rank parts.
    Decompose(DecomposeArgs),
    /// Decompose every matrix under every grid config and record errors.
    Sweep(SweepArgs),
    /// Choose one config per matrix under a bit budget.
    Allocate(AllocateArgs),
    /// Sweep, allocate and decompose in one run.
    Init(InitArgs),
    /// Storage and effective-bits accounting.
    Report(ReportArgs),
    /// Time the fused dequantize-matmul against the dense path.
    Bench(BenchArgs),
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// A synthetic weight matrix.
    Matrix(GenMatrixArgs),
    /// A synthetic Fisher diagonal.
    Fisher(GenFisherArgs),
    /// The list of matrix shapes of a model preset.
    Preset(GenPresetArgs),
}

#[derive(Debug, Args)]
pub struct GenMatrixArgs {
    /// gaussian, decaying-spectrum, low-rank or on-grid.
    #[arg(long, default_value = "gaussian")]
    pub kind: MatrixKind,
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub cols: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Inner dimension for low-rank matrices.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Singular value ratio for decaying-spectrum matrices.
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    /// Target config for on-grid matrices.
    #[arg(long)]
    pub config: Option<QuantConfig>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenFisherArgs {
    /// uniform, separable or random-nonneg.
    #[arg(long, default_value = "uniform")]
    pub kind: FisherKind,
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub cols: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenPresetArgs {
    #[arg(long)]
    pub name: String,
    /// Write the shape list as JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// `b0,b1,b2,B0,B1`, e.g. `4,8,fp32,64,256`.
    #[arg(long, default_value = "4,8,fp32,64,256")]
    pub config: QuantConfig,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DequantizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Zero,
    Quantized,
}

/// Options shared by every command that runs decompositions.
#[derive(Debug, Args)]
pub struct LqArgs {
    #[arg(long)]
    pub rank: usize,
    /// exact or randomized.
    #[arg(long, default_value = "randomized")]
    pub method: SvdMethod,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
    /// Starting quantized component.
    #[arg(long, value_enum, default_value_t = InitArg::Zero)]
    pub init: InitArg,
}

impl LqArgs {
    pub fn options(&self) -> LqOptions {
        LqOptions {
            max_iters: self.max_iters,
            method: self.method,
            seed: self.seed,
            init: match self.init {
                InitArg::Zero => LqInit::Zero,
                InitArg::Quantized => LqInit::Quantized,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Fisher diagonal for the weighted objective.
    #[arg(long)]
    pub fisher: Option<PathBuf>,
    #[arg(long, default_value = "4,8,fp32,64,256")]
    pub config: QuantConfig,
    #[command(flatten)]
    pub lq: LqArgs,
    /// Receives q.lqq, l1.lqt, l2.lqt, report.json and manifest.json.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long = "in", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// One Fisher diagonal per input, in the same order.
    #[arg(long, num_args = 1..)]
    pub fisher: Vec<PathBuf>,
    /// `default` for the 243-config grid, or a JSON file of configs.
    #[arg(long, default_value = "default")]
    pub grid: String,
    #[command(flatten)]
    pub lq: LqArgs,
    #[arg(long, env = "LQDEC_WORKERS", default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    #[arg(long)]
    pub table: PathBuf,
    /// Average bits per quantized parameter.
    #[arg(long)]
    pub budget: f64,
    #[arg(long)]
    pub no_dominance_pruning: bool,
    #[arg(long)]
    pub node_limit: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long = "in", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub fisher: Vec<PathBuf>,
    #[arg(long, default_value = "default")]
    pub grid: String,
    /// Average bits per quantized parameter.
    #[arg(long)]
    pub budget: f64,
    #[command(flatten)]
    pub lq: LqArgs,
    #[arg(long, env = "LQDEC_WORKERS", default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Model preset whose shapes are reported.
    #[arg(long, conflicts_with_all = ["table", "solution"], requires = "uniform_bits")]
    pub preset: Option<String>,
    /// Bits per parameter applied to every preset matrix, e.g. 2.75.
    #[arg(long, requires = "preset")]
    pub uniform_bits: Option<String>,
    /// Sweep table carrying matrix shapes.
    #[arg(long, requires = "solution")]
    pub table: Option<PathBuf>,
    #[arg(long, requires = "table")]
    pub solution: Option<PathBuf>,
    /// LoRA rank per matrix.
    #[arg(long, default_value_t = 64)]
    pub rank: usize,
    /// fp16 or nf8.
    #[arg(long, default_value = "fp16")]
    pub lora_format: LoraFormat,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 1024)]
    pub rows: usize,
    #[arg(long, default_value_t = 1024)]
    pub cols: usize,
    #[arg(long, default_value = "4,8,fp32,64,256")]
    pub config: QuantConfig,
    /// Rank of random factors added to the quantized matrix; 0 for none.
    #[arg(long, default_value_t = 0)]
    pub rank: usize,
    /// Comma-separated batch sizes.
    #[arg(long, value_delimiter = ',', default_value = "1,16,64")]
    pub batch: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

impl Error {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Argument(_) | Error::Io { .. } | Error::TooLarge(_) => 1,
            Error::Format(_) | Error::Json(_) => 2,
            Error::Infeasible { .. } => 3,
            Error::Numerical(_) => 4,
        }
    }
}

pub fn run(cli: Cli) -> crate::Result<()> {
    match cli.command {
        Command::Gen(GenCommand::Matrix(a)) => commands::gen_matrix(a),
        Command::Gen(GenCommand::Fisher(a)) => commands::gen_fisher(a),
        Command::Gen(GenCommand::Preset(a)) => commands::gen_preset(a),
        Command::Quantize(a) => commands::quantize(a),
        Command::Dequantize(a) => commands::dequantize(a),
        Command::Decompose(a) => commands::decompose(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Allocate(a) => commands::allocate(a),
        Command::Init(a) => commands::init(a),
        Command::Report(a) => commands::report(a),
        Command::Bench(a) => commands::bench(a),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lqdec: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
