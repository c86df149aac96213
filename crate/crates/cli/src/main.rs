//! `sfpn`: batch front end for embedding extraction, enrolment, pose-aware
//! verification, toy training and gradient checks.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sfpn_core::{Error, ParamScope, Variant};

#[derive(Debug, Parser)]
#[command(name = "sfpn", version, about = "Face embedding network and pose-aware verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the layer-by-layer output shapes.
    Describe {
        #[command(flatten)]
        net: NetArgs,
    },
    /// Print backbone and full learnable parameter counts.
    CountParams {
        #[command(flatten)]
        net: NetArgs,
        /// Print only this scope.
        #[arg(long, value_enum)]
        scope: Option<ScopeArg>,
    },
    /// Embed every manifest image and write an SFPE embeddings file.
    Extract {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
    },
    /// Average embeddings into templates and write them as CSV.
    Enroll {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value_t = 5, value_parser = template_size)]
        template_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the verification protocols and write scores, DET curves and a report.
    Evaluate {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Precomputed embeddings; images are embedded on the fly when absent.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value_t = 5, value_parser = template_size)]
        template_size: usize,
        #[arg(long, value_enum, default_value_t = ProtocolArg::All)]
        protocol: ProtocolArg,
        #[arg(long, default_value_t = sfpn_core::metrics::DEFAULT_FAR_TARGET)]
        far_target: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the synthetic colour-class set and write the epoch log.
    TrainToy {
        #[arg(long, default_value = "base", value_parser = variant)]
        variant: Variant,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 40)]
        per_class: usize,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = commands::TOY_BATCH)]
        batch_size: usize,
        /// Line-delimited JSON epoch log.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Save the trained weights here.
        #[arg(long)]
        weights_out: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients on the miniature network.
    Gradcheck {
        #[arg(long, default_value = "base", value_parser = variant)]
        variant: Variant,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = sfpn_core::training::GRADCHECK_STEP)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Write the full per-group report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct NetArgs {
    /// base, gdc, dwc or dwc-gdc. Taken from the weight file when omitted.
    #[arg(long, value_parser = variant)]
    variant: Option<Variant>,
    /// SFPN weight file; without it the network is randomly initialised from --seed.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Classification head width. Taken from the weight file when omitted.
    #[arg(long)]
    classes: Option<usize>,
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory that relative image paths are resolved against (default: the manifest's directory).
    #[arg(long)]
    image_root: Option<PathBuf>,
    /// Keep only the first N subjects in manifest order.
    #[arg(long)]
    limit_subjects: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScopeArg {
    Backbone,
    Full,
}

impl From<ScopeArg> for ParamScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Backbone => ParamScope::Backbone,
            ScopeArg::Full => ParamScope::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProtocolArg {
    SamePose,
    CrossPose,
    All,
}

fn variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn template_size(s: &str) -> Result<usize, String> {
    match s {
        "1" => Ok(1),
        "5" => Ok(5),
        _ => Err(format!("template size must be 1 or 5, got {s}")),
    }
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

/// Failures surfaced to the shell.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Dimension { .. } | Error::State(_) | Error::Output(_) => Failure::Internal(e.to_string()),
            Error::Refused(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("SFPN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("SFPN_THREADS must be a non-negative integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Internal(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = configure_threads().and_then(|()| commands::run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
