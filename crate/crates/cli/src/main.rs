//! `tfblur` command-line front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "tfblur",
    version,
    about = "Time-frequency blurring and log-mel features"
)]
struct Cli {
    /// Seed for generated signals, augmentation and verification.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML pipeline config (feature lattice, augmentation steps).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; nothing is written outside it.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the log-mel (or power) spectrogram of a WAV file.
    Spectrogram(SpectrogramArgs),
    /// Apply a time-frequency blur to a WAV file.
    Blur(BlurArgs),
    /// Blur the log-mel feature grid of a WAV or feature file.
    Specblur(SpecblurArgs),
    /// Run the augmentation pipeline over a manifest of WAV files.
    Augment(AugmentArgs),
    /// Generate a deterministic test signal.
    Gen(GenArgs),
    /// Run the numerical property suites.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone)]
struct LatticeArgs {
    #[arg(long, value_enum, default_value_t = WindowName::Hann)]
    window: WindowName,
    /// Width of the Gaussian window in samples.
    #[arg(long, default_value_t = 256.0)]
    gaussian_width: f64,
    #[arg(long)]
    window_len: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum WindowName {
    Hann,
    Gaussian,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Raw,
    Csv,
    Pgm,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SpecKind {
    Logmel,
    Power,
}

#[derive(Args, Debug)]
struct SpectrogramArgs {
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = SpecKind::Logmel)]
    kind: SpecKind,
    #[command(flatten)]
    lattice: LatticeArgs,
    #[arg(long)]
    mels: Option<usize>,
    /// Map values onto [0, 1] before writing.
    #[arg(long)]
    normalize: bool,
    /// Output formats; repeat or comma-separate.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "raw")]
    format: Vec<Format>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum KernelName {
    Gaussian,
    Delta,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SynthesisName {
    Dual,
    Tight,
}

#[derive(Args, Debug, Clone)]
struct KernelArgs {
    #[arg(long, value_enum, default_value_t = KernelName::Gaussian)]
    kernel: KernelName,
    /// Kernel spread along time, in frames.
    #[arg(long, default_value_t = 2.0)]
    sigma_t: f64,
    /// Kernel spread along frequency, in channels.
    #[arg(long, default_value_t = 4.0)]
    sigma_f: f64,
    #[arg(long, default_value_t = tfblur::kernels::DEFAULT_TRUNCATION)]
    truncation: f64,
}

#[derive(Args, Debug)]
struct BlurArgs {
    input: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    lattice: LatticeArgs,
    #[arg(long, value_enum, default_value_t = SynthesisName::Dual)]
    synthesis: SynthesisName,
    /// Rescale the output to the input's energy.
    #[arg(long)]
    renormalize: bool,
    /// Also write PGM spectrograms of input and output.
    #[arg(long)]
    side_by_side: bool,
}

#[derive(Args, Debug)]
struct SpecblurArgs {
    /// WAV file or raw feature file with a JSON sidecar.
    input: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, value_enum, default_value_t = BoundaryName::Edge)]
    boundary: BoundaryName,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "raw")]
    format: Vec<Format>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum BoundaryName {
    Edge,
    Circular,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    /// Listing file: one WAV path per line, relative to the listing.
    manifest: PathBuf,
    /// Epoch index; only used when the config keys streams per epoch.
    #[arg(long, default_value_t = 0)]
    epoch: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum GenKind {
    Sine,
    Chirp,
    Noise,
    Impulse,
    Pulse,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(value_enum)]
    kind: GenKind,
    #[arg(long, default_value_t = 16_000)]
    len: usize,
    #[arg(long, default_value_t = tfblur::signal::DEFAULT_SAMPLE_RATE)]
    sample_rate: u32,
    #[arg(long, default_value_t = 440.0)]
    freq: f64,
    #[arg(long, default_value_t = 100.0)]
    f0: f64,
    #[arg(long, default_value_t = 4000.0)]
    f1: f64,
    /// Impulse position or pulse center, in samples.
    #[arg(long)]
    at: Option<usize>,
    /// Pulse width in samples.
    #[arg(long, default_value_t = 400.0)]
    width: f64,
    /// Output file name inside --out.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Run a single suite.
    #[arg(long)]
    suite: Option<String>,
    /// Override every tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// List suite names and exit.
    #[arg(long)]
    list: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
