mod commands;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Arbitrage-free gated network option pricing: data preparation, training,
/// evaluation against Levy baselines, and rationality diagnostics.
#[derive(Debug, Parser)]
#[command(name = "gated-pricing", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Global {
    /// Flat `key = value` config file (see `gated-pricing keys`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed; overrides the `seed` config key.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Log progress at debug level.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read an option chain, filter it and write normalized call records.
    Ingest {
        /// Option chain CSV.
        #[arg(long)]
        chain: PathBuf,
        /// `days,rate` CSV; preferred over any per-row rate column.
        #[arg(long)]
        rates: Option<PathBuf>,
        /// Abort when more than this fraction of rows is malformed.
        #[arg(long, default_value_t = 0.25)]
        max_rejected: f64,
    },
    /// Generate a synthetic market priced by a Levy model.
    Synth {
        /// bs, vg or kou; overrides the `generator` key.
        #[arg(long)]
        generator: Option<String>,
        /// Trading dates; overrides `n_dates`.
        #[arg(long)]
        dates: Option<usize>,
    },
    /// Fit a network to call records and write its checkpoint.
    Train {
        #[arg(long)]
        records: PathBuf,
        /// single or multi; overrides `model`.
        #[arg(long)]
        model: Option<String>,
        /// Overrides `epochs`.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Rolling train/test evaluation of one or more methods.
    Eval {
        #[arg(long)]
        records: PathBuf,
        /// Comma-separated: single, multi, bs, vg, kou.
        #[arg(long, value_delimiter = ',', default_value = "multi")]
        method: Vec<String>,
    },
    /// Risk-neutral density implied by a checkpoint.
    Density {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        spot: f64,
        #[arg(long)]
        tau_days: u32,
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
        /// Lowest terminal price, as a fraction of spot.
        #[arg(long, default_value_t = 0.01)]
        lo: f64,
        /// Highest terminal price, as a fraction of spot.
        #[arg(long, default_value_t = 4.0)]
        hi: f64,
        #[arg(long, default_value_t = 4000)]
        points: usize,
    },
    /// Grid checks of the no-arbitrage conditions on a checkpoint.
    Check {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Rate used to discount the upper bound.
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
    },
    /// Calibrate a baseline to one date of call records.
    Calibrate {
        #[arg(long)]
        records: PathBuf,
        /// bs, vg or kou.
        #[arg(long)]
        model: String,
        /// Quote date to fit; defaults to the last date in the file.
        #[arg(long)]
        date: Option<String>,
    },
    /// Baseline call prices over a strike range.
    PriceCurve {
        /// Calibration output or a bare parameter JSON.
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        tau_days: u32,
        #[arg(long)]
        k_min: f64,
        #[arg(long)]
        k_max: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Aggregate per-window results into a method comparison.
    Report {
        /// Window CSVs written by `eval`.
        #[arg(long, num_args = 1.., required = true)]
        windows: Vec<PathBuf>,
    },
    /// List the recognized config keys.
    Keys,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.global.verbose {
            log::LevelFilter::Debug
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            // library errors already print their source; skip causes repeated verbatim
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.ends_with(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
