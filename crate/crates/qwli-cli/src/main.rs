//! `qwli` — simulate and analyze two-photon coincidence interferograms for
//! chromatic-dispersion measurement.
//!
//! Exit codes: 0 success, 2 usage/validation, 3 I/O, 4 numerical
//! non-convergence (outputs with diagnostics are still written).

mod commands;
mod config;
mod error;
mod plot;

use clap::{Parser, Subcommand, ValueEnum};
use plot::PlotKind;
use qwli::estimator::Convention;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConventionArg {
    /// Normalize by √(S_s·S_i).
    Geometric,
    /// Normalize by the signal-channel singles only.
    Single,
}

impl From<ConventionArg> for Convention {
    fn from(arg: ConventionArg) -> Self {
        match arg {
            ConventionArg::Geometric => Convention::GeometricMean,
            ConventionArg::Single => Convention::SingleChannel,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "qwli",
    about = "Quantum white-light interferometry: CD/TOD measurement simulator and estimator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic interferogram (CSV + metadata sidecar).
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Record expected counts instead of Poisson draws.
        #[arg(long)]
        noiseless: bool,
    },
    /// Normalize a dataset and fit the quadratic fringe model.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "geometric")]
        convention: ConventionArg,
        /// Sample length in meters (defaults to the dataset's truth metadata).
        #[arg(long)]
        length: Option<f64>,
    },
    /// Replicate simulate+fit and report ensemble statistics.
    Mc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the pump wavelength and extract TOD from a linear fit of CD.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Sweep start, meters.
        #[arg(long)]
        start: f64,
        /// Sweep stop, meters.
        #[arg(long)]
        stop: f64,
        /// Sweep step, meters.
        #[arg(long)]
        step: f64,
        /// Generator TOD slope dD/dλ_p in ps/(nm²·km).
        #[arg(long, allow_negative_numbers = true)]
        slope: f64,
        /// Independent scans per pump point.
        #[arg(long, default_value_t = 1)]
        runs_per_point: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate first-fringe widths and working zones over (length, CD).
    Rangemap {
        /// Minimum sample length, meters.
        #[arg(long)]
        lmin: f64,
        /// Maximum sample length, meters.
        #[arg(long)]
        lmax: f64,
        /// Minimum CD, ps/(nm·km).
        #[arg(long, allow_negative_numbers = true)]
        dmin: f64,
        /// Maximum CD, ps/(nm·km).
        #[arg(long, allow_negative_numbers = true)]
        dmax: f64,
        #[arg(long, default_value_t = 60)]
        nl: usize,
        #[arg(long, default_value_t = 60)]
        nd: usize,
        /// Pump wavelength, meters.
        #[arg(long, default_value_t = 1560.6e-9)]
        pump: f64,
        /// Coincidence filter bandwidth, meters.
        #[arg(long, default_value_t = 500e-12)]
        filter_bw: f64,
        /// Single-photon source spectral width, meters.
        #[arg(long, default_value_t = 60e-9)]
        source_width: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an SVG figure from a command output.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            noiseless,
        } => commands::cmd_simulate(&config, &out, seed, noiseless),
        Command::Fit {
            input,
            out,
            convention,
            length,
        } => commands::cmd_fit(&input, &out, convention.into(), length),
        Command::Mc { config, runs, out } => commands::cmd_mc(&config, runs, &out),
        Command::Sweep {
            config,
            start,
            stop,
            step,
            slope,
            runs_per_point,
            out,
        } => commands::cmd_sweep(&config, start, stop, step, slope, runs_per_point, &out),
        Command::Rangemap {
            lmin,
            lmax,
            dmin,
            dmax,
            nl,
            nd,
            pump,
            filter_bw,
            source_width,
            out,
        } => commands::cmd_rangemap(
            lmin,
            lmax,
            dmin,
            dmax,
            nl,
            nd,
            pump,
            filter_bw,
            source_width,
            &out,
        ),
        Command::Plot { input, kind, out } => plot::cmd_plot(&input, kind, &out),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
