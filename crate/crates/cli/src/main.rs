//! `mramsim`: reproducible characterization, sweep, image and report runs
//! on simulated toggle-MRAM chips.
//!
//! Exit status is 0 on success, 1 on a domain error (bad profile, failed
//! allocation, mismatched inputs) and 2 on usage or I/O errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::CommonArgs;

/// Error in how the tool was invoked; maps to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "mramsim", version, about = "Approximate toggle-MRAM simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Characterize a chip and write errmap.json and stats.csv.
    Characterize(CharacterizeArgs),
    /// Failed bits and power savings over a list of pulse widths (sweep.csv).
    Sweep(SweepArgs),
    /// Write a PGM image at a reduced pulse width and read it back.
    Image(ImageArgs),
    /// Table-style statistics of evaluation maps against a characterization map.
    Report(ReportArgs),
    /// Print a chip profile as JSON.
    Profile(ProfileArgs),
    /// Fit a chip profile to measured statistics.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
pub struct CharacterizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Reduced write pulse width in ns.
    #[arg(long)]
    pub tw: Option<f64>,
    /// Number of measurement rounds.
    #[arg(long)]
    pub n: Option<usize>,
    /// Data pattern (solid:HHHH, row-striped:HHHH, col-striped:HHHH,
    /// checkerboard:HHHH or random:SEED).
    #[arg(long)]
    pub pattern: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Pulse widths in ns, comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    pub tw: Vec<f64>,
    #[arg(long)]
    pub pattern: Option<String>,
    /// Pulse width the savings are relative to, ns.
    #[arg(long, default_value_t = 20.0)]
    pub t_full: f64,
    /// Normalized current curve CSV (time_ns,normalized_current).
    #[arg(long, value_name = "FILE")]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImageArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Binary PGM (P5, maxval 255) to write.
    #[arg(long, value_name = "FILE")]
    pub image: Option<PathBuf>,
    /// Background written before the image: ones or zeros.
    #[arg(long)]
    pub init: Option<String>,
    /// Address selection: none or strategy1.
    #[arg(long)]
    pub select: Option<String>,
    #[arg(long)]
    pub tw: Option<f64>,
    /// Characterization rounds used to build the pool for strategy1.
    #[arg(long)]
    pub n: Option<usize>,
    /// Characterization pattern used to build the pool for strategy1.
    #[arg(long)]
    pub pattern: Option<String>,
    /// Pack two pixels per word instead of one.
    #[arg(long)]
    pub two_per_word: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Characterization error map.
    #[arg(long = "char", value_name = "FILE")]
    pub char_map: PathBuf,
    /// Evaluation error maps, one output row each.
    #[arg(long, value_name = "FILE", required = true, num_args = 1..)]
    pub eval: Vec<PathBuf>,
    #[arg(long = "out", value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub profile_path: Option<PathBuf>,
    /// Write profile.json here instead of standard output.
    #[arg(long = "out", value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Calibration targets JSON.
    #[arg(long, value_name = "FILE")]
    pub targets: Option<PathBuf>,
    /// Use the built-in targets of a model (C1..C5).
    #[arg(long)]
    pub model: Option<String>,
    /// Write profile.json here instead of standard output.
    #[arg(long = "out", value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn exit_status(err: &anyhow::Error) -> u8 {
    use mramsim_core::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<std::io::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io(_) | E::Parse(_) | E::Json(_) | E::Csv(_) => 2,
                _ => 1,
            };
        }
        if cause.is::<csv::Error>() || cause.is::<tempfile::PersistError>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Characterize(a) => commands::characterize_cmd(a),
        Command::Sweep(a) => commands::sweep_cmd(a),
        Command::Image(a) => commands::image_cmd(a),
        Command::Report(a) => commands::report_cmd(a),
        Command::Profile(a) => commands::profile_cmd(a),
        Command::Calibrate(a) => commands::calibrate_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
