//! Command-line front end: `simulate`, `estimate`, `mif`, `oracle` and
//! `sweep`.
//!
//! Exit codes: 0 on success, 2 when the data violate a contract (too few
//! samples, unsupported request), 3 on I/O or parse failures, 4 on usage
//! errors.

mod commands;
pub mod config;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{estimate_pair, estimate_report, simulate_model, Estimate, SimulationSpec};
pub use config::{GridArg, MethodChoice, RunConfig, WindowsArg};

pub const SEED_ENV: &str = "SPECTRAL_MI_SEED";

/// Bad flags or configuration; maps to exit code 4.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(name = "spectral-mi", version, about = "Mutual information between time series via spectral increments")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a paired series from one of the simulation models.
    Simulate(SimulateArgs),
    /// Estimate I(X;Y) from a two-column CSV.
    Estimate(EstimateArgs),
    /// Compute only the MI-in-frequency matrix and its significance mask.
    Mif(EstimateArgs),
    /// Print the analytic MI rate of a Gaussian model.
    Oracle(ModelArgs),
    /// Estimate over a parameter grid and several seeds.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// Two-tap filter `h = [beta, 1 - beta]` plus white noise.
    Lowpass,
    /// 33-tap bandpass filter plus white noise.
    Bandpass,
    /// `y = x^2 + w` for a random cosine `x`.
    Cosine2,
    /// `y = x^2 + w` for a sum of two random cosines.
    Twocosine2,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    pub model: Model,
    /// Lowpass coefficient in [0, 1] (lowpass only, required).
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_x: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_w: f64,
    /// First cosine frequency, cycles per sample.
    #[arg(long, default_value_t = 0.125)]
    pub lambda: f64,
    /// Second cosine frequency (two-tone model).
    #[arg(long, default_value_t = 0.1875)]
    pub lambda2: f64,
    /// Samples between redraws of the cosine amplitudes and phases.
    #[arg(long, default_value_t = 32)]
    pub window_len: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of samples.
    #[arg(long, default_value_t = 640_000)]
    pub n: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; a `.json` sidecar is written next to it.
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Estimation flags; unset flags fall back to `--config` and then to the
/// defaults.
#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Two-column CSV with the X and Y series.
    pub input: Option<PathBuf>,
    /// Config JSON (or a previous report.json) to rerun.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_f: Option<usize>,
    /// Number of windows, or `auto`.
    #[arg(long)]
    pub n_s: Option<WindowsArg>,
    #[arg(long)]
    pub gap: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Surrogates per frequency pair.
    #[arg(long)]
    pub n_p: Option<usize>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub grid: Option<GridArg>,
    #[arg(long, value_enum)]
    pub method: Option<MethodChoice>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

impl EstimateArgs {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => {
                let input = self
                    .input
                    .clone()
                    .ok_or_else(|| UsageError("an input CSV or --config is required".into()))?;
                RunConfig::new(input)
            }
        };
        if let Some(v) = &self.input {
            cfg.input = v.clone();
        }
        if let Some(v) = self.n_f {
            cfg.n_f = v;
        }
        if let Some(v) = self.n_s {
            cfg.n_s = v;
        }
        if let Some(v) = self.gap {
            cfg.gap = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.n_p {
            cfg.n_p = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.grid {
            cfg.grid = v;
        }
        if let Some(v) = self.method {
            cfg.method = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Beta,
    SigmaW,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Parameter varied along the grid.
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated grid values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Replicates per grid value; replicate `r` uses seed `seed + r`.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub n_f: usize,
    /// Windows per simulated series.
    #[arg(long, default_value_t = 10_000)]
    pub n_s: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 99)]
    pub n_p: usize,
    #[arg(long, value_enum, default_value_t = GridArg::Half)]
    pub grid: GridArg,
    #[arg(long, value_enum, default_value_t = MethodChoice::Auto)]
    pub method: MethodChoice,
    /// Per-run CSV; the mean curve goes to `<stem>_mean.csv` and the
    /// config to `<stem>.json`.
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Exit code for an error raised while running a command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 4;
        }
        if let Some(e) = cause.downcast_ref::<crate::Error>() {
            return match e {
                crate::Error::Io { .. } | crate::Error::Format(_) | crate::Error::Parse { .. } => 3,
                _ => 2,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() || cause.is::<serde_json::Error>() {
            return 3;
        }
    }
    1
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 4 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(UsageError("--jobs must be at least 1".into()).into());
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build()?;
    pool.install(|| match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Estimate(a) => commands::estimate(&a, true),
        Command::Mif(a) => commands::estimate(&a, false),
        Command::Oracle(a) => commands::oracle(&a),
        Command::Sweep(a) => commands::sweep(&a),
    })
}
