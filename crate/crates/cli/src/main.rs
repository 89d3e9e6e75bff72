mod commands;
mod config;
mod failure;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use translock::analysis::{AllanEstimator, Window};
use translock::fit::FitParameter;

use crate::failure::Failure;

/// Simulation and analysis of a transfer-cavity laser lock and of single-ion
/// excitation spectra.
#[derive(Parser, Debug)]
#[command(name = "translock", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

/// Where and how results are written.
#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Output directory; relative paths are taken under $TRANSLOCK_OUTPUT_ROOT when set.
    #[arg(long)]
    pub out: PathBuf,
    /// Replace an existing run in the output directory.
    #[arg(long)]
    pub force: bool,
    /// Also write SVG plots.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Args, Debug, Clone)]
pub struct SeedArgs {
    /// Overrides the seed in the configuration.
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Sweep of seeds, `a..b` (half-open) or `a..=b`; one subdirectory per seed.
    #[arg(long, value_parser = parse_seeds)]
    pub seeds: Option<SeedList>,
}

#[derive(Debug, Clone)]
pub struct SeedList(pub Vec<u64>);

/// Detuning grid in rad/s.
#[derive(Debug, Clone)]
pub struct Scan(pub Vec<f64>);

#[derive(Subcommand, Debug)]
enum Command {
    /// Short run of the full lock chain at the simulation step.
    SimulateChain {
        #[arg(long)]
        config: PathBuf,
        /// Run length, s (default: chain.duration).
        #[arg(long)]
        duration: Option<f64>,
        #[command(flatten)]
        seeds: SeedArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Multi-rate run of the chain reporting bin means.
    LongRun {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        hours: f64,
        /// Bin length and slow-loop update interval, s.
        #[arg(long, default_value_t = 1.0)]
        decimation: f64,
        #[command(flatten)]
        seeds: SeedArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Allan variance of a frequency trace CSV.
    Allan {
        input: PathBuf,
        /// Trace column (default: the first one after time).
        #[arg(long)]
        column: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Carrier frequency, Hz.
        #[arg(long)]
        carrier: Option<f64>,
        #[arg(long, value_enum)]
        estimator: Option<EstimatorArg>,
        /// Comma-separated averaging times, s.
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
        /// Range of the reported slope, `lo:hi` in s.
        #[arg(long, value_parser = parse_pair)]
        slope_range: Option<(f64, f64)>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Power spectrum of a trace CSV with a peak report.
    Psd {
        input: PathBuf,
        #[arg(long)]
        column: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Hz
        #[arg(long)]
        bandwidth: Option<f64>,
        /// Samples per averaged segment.
        #[arg(long)]
        segment: Option<usize>,
        #[arg(long, value_enum)]
        window: Option<WindowArg>,
        /// Report peaks above this level, dB relative to full scale.
        #[arg(long, allow_hyphen_values = true)]
        threshold_db: Option<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Least-squares discriminator slope from a (frequency, signal) CSV.
    Gauge {
        input: PathBuf,
        /// Frequency column (default: first).
        #[arg(long)]
        x: Option<String>,
        /// Signal column (default: second).
        #[arg(long)]
        y: Option<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Excitation spectrum versus the 866 nm detuning.
    Spectrum {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scan `from:to:step` in MHz (default -70:20:0.5).
        #[arg(long, value_parser = parse_scan, allow_hyphen_values = true)]
        scan: Option<Scan>,
        /// Add Poisson noise, seeded by --seed or detection.shot_noise_seed.
        #[arg(long)]
        shot_noise: bool,
        #[command(flatten)]
        seeds: SeedArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Fit the spectrum model to a counts-versus-detuning CSV.
    Fit {
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated free parameters (default: fit.free).
        #[arg(long, value_delimiter = ',', value_parser = parse_parameter)]
        free: Option<Vec<FitParameter>>,
        /// Tie the 866 nm linewidth to this multiple of the 397 nm one.
        #[arg(long, conflicts_with = "untied")]
        constraint: Option<f64>,
        /// Fit the two laser linewidths independently.
        #[arg(long)]
        untied: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Power-law frequency noise, optionally with added tones.
    Noise {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        samples: usize,
        /// Sample interval, s.
        #[arg(long)]
        dt: f64,
        /// Overrides noise.white_fm, Hz^2/Hz.
        #[arg(long)]
        white: Option<f64>,
        /// Overrides noise.flicker_fm, Hz^2.
        #[arg(long)]
        flicker: Option<f64>,
        /// Overrides noise.random_walk_fm, Hz^3.
        #[arg(long)]
        random_walk: Option<f64>,
        /// Sinusoid `frequency:amplitude` (Hz:Hz) added to the noise; repeatable.
        #[arg(long, value_parser = parse_pair)]
        tone: Vec<(f64, f64)>,
        #[command(flatten)]
        seeds: SeedArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print (or write) the default configuration.
    DefaultConfig {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Check a run directory against its manifest.
    Verify { dir: PathBuf },
}

#[derive(clap::ValueEnum, Debug, Clone, Copy)]
enum EstimatorArg {
    Overlapping,
    NonOverlapping,
}

impl From<EstimatorArg> for AllanEstimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Overlapping => AllanEstimator::Overlapping,
            EstimatorArg::NonOverlapping => AllanEstimator::NonOverlapping,
        }
    }
}

#[derive(clap::ValueEnum, Debug, Clone, Copy)]
enum WindowArg {
    Rectangular,
    Hann,
}

impl From<WindowArg> for Window {
    fn from(w: WindowArg) -> Self {
        match w {
            WindowArg::Rectangular => Window::Rectangular,
            WindowArg::Hann => Window::Hann,
        }
    }
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v.is_finite() { Ok(v) } else { Err(format!("{s:?} is not finite")) }
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected `a:b`")?;
    Ok((number(a)?, number(b)?))
}

/// `from:to:step` in MHz to a grid in rad/s. A step longer than the range
/// gives the single point `from`.
fn parse_scan(s: &str) -> Result<Scan, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [from, to, step] = parts[..] else { return Err("expected `from:to:step` (MHz)".into()) };
    let (from, to, step) = (number(from)?, number(to)?, number(step)?);
    if !(step > 0.0) {
        return Err("scan step must be positive".into());
    }
    if to < from {
        return Err("scan must run from low to high detuning".into());
    }
    let n = ((to - from) / step * (1.0 + 1e-12)).floor() as usize + 1;
    if n > 1_000_000 {
        return Err(format!("{n} scan points is too many"));
    }
    Ok(Scan((0..n).map(|k| std::f64::consts::TAU * 1e6 * (from + k as f64 * step)).collect()))
}

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let (a, b, inclusive) = match s.split_once("..=") {
        Some((a, b)) => (a, b, true),
        None => {
            let (a, b) = s.split_once("..").ok_or("expected `a..b` or `a..=b`")?;
            (a, b, false)
        }
    };
    let a: u64 = a.trim().parse().map_err(|_| format!("{a:?} is not a seed"))?;
    let b: u64 = b.trim().parse().map_err(|_| format!("{b:?} is not a seed"))?;
    let seeds: Vec<u64> = if inclusive { (a..=b).collect() } else { (a..b).collect() };
    if seeds.is_empty() {
        return Err("seed range is empty".into());
    }
    Ok(SeedList(seeds))
}

fn parse_parameter(s: &str) -> Result<FitParameter, String> {
    FitParameter::parse(s.trim()).map_err(|e| e.to_string())
}

fn run(cli: Cli, argv: Vec<String>) -> Result<(), Failure> {
    use commands as c;
    let ctx = c::Context::new(argv);
    match cli.command {
        Command::SimulateChain { config, duration, seeds, run } => c::simulate_chain(&ctx, &config, duration, &seeds, &run),
        Command::LongRun { config, hours, decimation, seeds, run } => c::long_run(&ctx, &config, hours, decimation, &seeds, &run),
        Command::Allan { input, column, config, carrier, estimator, taus, slope_range, run } => {
            let o = c::AllanOptions { carrier, estimator: estimator.map(Into::into), taus, slope_range };
            c::allan(&ctx, &input, column.as_deref(), config.as_deref(), o, &run)
        }
        Command::Psd { input, column, config, bandwidth, segment, window, threshold_db, run } => {
            let o = c::PsdArgs { bandwidth, segment, window: window.map(Into::into), threshold_db };
            c::psd(&ctx, &input, column.as_deref(), config.as_deref(), o, &run)
        }
        Command::Gauge { input, x, y, run } => c::gauge(&ctx, &input, x.as_deref(), y.as_deref(), &run),
        Command::Spectrum { config, scan, shot_noise, seeds, run } => c::spectrum(&ctx, config.as_deref(), scan.map(|s| s.0), shot_noise, &seeds, &run),
        Command::Fit { data, config, free, constraint, untied, run } => {
            let ratio = if untied { Some(None) } else { constraint.map(Some) };
            c::fit(&ctx, &data, config.as_deref(), free, ratio, &run)
        }
        Command::Noise { config, samples, dt, white, flicker, random_walk, tone, seeds, run } => {
            let o = c::NoiseArgs { samples, dt, white, flicker, random_walk, tones: tone };
            c::noise(&ctx, config.as_deref(), o, &seeds, &run)
        }
        Command::DefaultConfig { out, force } => c::default_config(out.as_deref(), force),
        Command::Verify { dir } => c::verify(&dir),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // help and version requests are not failures
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code() as u8)
        }
    }
}
