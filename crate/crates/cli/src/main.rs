mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "iiae", version, about = "Interaction information auto-encoder toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic paired dataset (IIPD).
    GenData(GenDataArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Translate every source item of a dataset into the other domain.
    Translate(TranslateArgs),
    /// Train all objective variants on one dataset and compare them.
    Ablate(AblateArgs),
    /// Run a verification suite; exits 2 if any property fails.
    #[command(subcommand)]
    Check(CheckCommand),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Also split off a test set written here.
    #[arg(long)]
    pub test_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, value_enum, default_value_t = SplitArg::Rows)]
    pub split_mode: SplitArg,
    #[arg(long, default_value_t = 8192)]
    pub n: usize,
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
    #[arg(long, default_value_t = 32)]
    pub x_dim: usize,
    #[arg(long, default_value_t = 32)]
    pub y_dim: usize,
    #[arg(long, default_value_t = 2)]
    pub excl_x_dim: usize,
    #[arg(long, default_value_t = 2)]
    pub excl_y_dim: usize,
    #[arg(long, default_value_t = 4)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Rows,
    ClassDisjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Default,
    Compact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairingArg {
    /// Use the dataset's row pairing as given.
    Rows,
    /// Re-pair items by shared class every epoch.
    Class,
    /// Pair by shared class once and keep the pairs.
    ClassFixed,
}

/// Optimization and objective flags shared by `train` and `ablate`.
#[derive(Debug, Clone, Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub lambda: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub recon_weight: f64,
    /// Decoder output variance.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub fixed_var: f64,
    #[arg(long, default_value_t = 2e-4, allow_negative_numbers = true)]
    pub lr: f64,
    #[arg(long, default_value_t = 20000)]
    pub steps: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub eval_every: usize,
    #[arg(long, value_enum, default_value_t = ArchArg::Compact)]
    pub arch: ArchArg,
    /// Override all three latent widths.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long, value_enum, default_value_t = PairingArg::Rows)]
    pub pairing: PairingArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Held-out set evaluated at every logged step.
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    #[arg(long, default_value = "iiae")]
    pub variant: String,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long)]
    pub out_ckpt: PathBuf,
    /// JSON-lines training log.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Cross-domain retrieval report.
    Retrieve(RetrieveArgs),
    /// Cross-validated linear probe on one representation.
    Probe(ProbeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RepArg {
    Shared,
    ExclusiveX,
    ExclusiveY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Euclidean,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HitArg {
    /// Only the paired item is relevant.
    Pair,
    /// Every item sharing the query's class is relevant.
    Class,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = RepArg::Shared)]
    pub rep: RepArg,
    #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
    pub metric: MetricArg,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 10])]
    pub k: Vec<usize>,
    #[arg(long, value_enum, default_value_t = HitArg::Class)]
    pub hit: HitArg,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProbeTargetArg {
    Class,
    ExclX,
    ExclY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DomainArg {
    X,
    Y,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = RepArg::Shared)]
    pub rep: RepArg,
    /// Domain whose items are embedded for the shared representation.
    #[arg(long, value_enum, default_value_t = DomainArg::X)]
    pub domain: DomainArg,
    #[arg(long, value_enum, default_value_t = ProbeTargetArg::Class)]
    pub target: ProbeTargetArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    X2y,
    Y2x,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Prior,
    Guided,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = DirectionArg::X2y)]
    pub direction: DirectionArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Prior)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Translated items as a single-domain IIPD file.
    #[arg(long)]
    pub out: PathBuf,
    /// Summary JSON; printed to stdout when absent.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Held-out set; split off `--test-fraction` of `--data` when absent.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
    pub metric: MetricArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CheckCommand {
    /// Analytic gradients against central differences.
    Grads {
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        json: bool,
    },
    /// Closed-form KL divergences against Monte-Carlo estimates.
    Kl {
        #[arg(long, default_value_t = 20)]
        pairs: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Mutual-information decomposition and interaction symmetry.
    MiIdentity {
        #[arg(long, default_value_t = 10)]
        systems: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Direction and tightness of the variational bounds.
    Bounds {
        #[arg(long, default_value_t = 5)]
        systems: usize,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

/// Process outcome apart from success.
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Verification(Vec<String>),
}

impl From<iiae::Error> for Failure {
    fn from(e: iiae::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("IIAE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Invalid(format!("IIAE_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Invalid(format!("thread pool: {e}")))
}

pub fn run(argv: Vec<String>) -> ExitCode {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = init_threads().and_then(|_| commands::dispatch(cli.command, &argv));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Verification(failed)) => {
            eprintln!("verification failed: {} propert{}", failed.len(), if failed.len() == 1 { "y" } else { "ies" });
            for f in failed {
                eprintln!("  {f}");
            }
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    run(std::env::args().collect())
}
