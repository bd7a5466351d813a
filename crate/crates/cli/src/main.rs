//! `srab` — train micro SR models, attack them, measure robustness, and
//! evaluate defenses from the command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error.

mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "srab",
    version,
    about = "Adversarial attacks, robustness measurement, and defenses for single-image super-resolution"
)]
struct Cli {
    /// Worker threads for per-image work (0 = automatic). Outputs are
    /// identical regardless of this setting.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a micro SR model on a directory of HR images.
    Train(TrainArgs),
    /// Run an adversarial attack and write attacked/SR images plus a JSON report.
    Attack(AttackArgs),
    /// Sweep attack budgets over a dataset and emit per-image PSNR rows.
    Evaluate(EvaluateArgs),
    /// Pair per-image robustness indices with attacked SR PSNR.
    Robustness(RobustnessArgs),
    /// Super-resolve an (attacked) image through a defense.
    Defend(DefendArgs),
    /// Cross-model transfer matrix of attacked SR PSNR.
    Transfer(TransferArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of HR training images (PNG).
    #[arg(long)]
    data: PathBuf,
    /// Model preset: micro (16ch/4blk) or micro-large (32ch/8blk).
    #[arg(long, default_value = "micro")]
    preset: String,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    /// HR patch edge length (divisible by 4).
    #[arg(long, default_value_t = 96)]
    patch_size: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output weight file; defaults into the SRAB_CACHE directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum AttackKindArg {
    Basic,
    Universal,
    Partial,
    Targeted,
}

#[derive(Args)]
struct AttackArgs {
    /// Weight file, a name resolved in SRAB_CACHE, or "bicubic".
    #[arg(long)]
    weights: String,
    #[arg(long, value_enum, default_value_t = AttackKindArg::Basic)]
    kind: AttackKindArg,
    /// Budget as k/255 (e.g. 8/255) or a float in [0, 1].
    #[arg(long, default_value = "8/255", value_parser = commands::parse_alpha)]
    alpha: f64,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Partial attacks: "center" or a PNG mask at LR resolution.
    #[arg(long)]
    mask: Option<String>,
    /// Targeted attacks: the LR target image.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Universal attacks: crop height (defaults to the smallest image).
    #[arg(long)]
    crop_h: Option<usize>,
    /// Universal attacks: crop width (defaults to the smallest image).
    #[arg(long)]
    crop_w: Option<usize>,
    #[arg(long, default_value = "attack-out")]
    out_dir: PathBuf,
    /// Input LR images (PNG).
    #[arg(required = true)]
    images: Vec<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    weights: String,
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated budgets; bare integers mean k/255.
    #[arg(long, default_value = "1,2,4,8,16,32")]
    alphas: String,
    /// basic or partial (partial uses the central-quarter mask).
    #[arg(long, default_value = "basic")]
    kind: String,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON report path.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct RobustnessArgs {
    #[arg(long)]
    weights: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "1/255", value_parser = commands::parse_alpha)]
    alpha: f64,
    #[arg(long, default_value_t = 1024)]
    samples: usize,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum DefenseMethodArg {
    Resize,
    Ensemble,
}

#[derive(Args)]
struct DefendArgs {
    #[arg(long)]
    weights: String,
    #[arg(long, value_enum)]
    method: DefenseMethodArg,
    /// The (attacked) LR input image.
    #[arg(long)]
    image: PathBuf,
    /// Optional clean LR image; when given, a JSON report compares
    /// defended and undefended SR PSNR against the clean SR output.
    #[arg(long)]
    clean: Option<PathBuf>,
    #[arg(long, default_value = "defend-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TransferArgs {
    /// Two or more weight specs (repeat the flag).
    #[arg(long, required = true, num_args = 1..)]
    weights: Vec<String>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "8/255", value_parser = commands::parse_alpha)]
    alpha: f64,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output path (source x target matrix).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

/// CLI failure split by exit code.
pub enum CliError {
    Usage(String),
    Data(String),
}

impl From<srab_core::Error> for CliError {
    fn from(err: srab_core::Error) -> Self {
        CliError::Data(err.to_string())
    }
}

fn main() {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        // First initialization wins; later calls are no-ops.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    let result = match cli.command {
        Command::Train(args) => commands::train(args),
        Command::Attack(args) => commands::attack(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Robustness(args) => commands::robustness(args),
        Command::Defend(args) => commands::defend(args),
        Command::Transfer(args) => commands::transfer(args),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {}", msg);
            std::process::exit(2);
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {}", msg);
            std::process::exit(3);
        }
    }
}
