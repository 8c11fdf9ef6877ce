//! `bragg`: mode reports, spectra, Monte Carlo ensembles, designs and
//! spectrum analysis for cascaded Bragg notch filters.

mod commands;
mod config;
mod failure;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use bragg_cascade::spectra::{BandwidthCriterion, OffbandWindow};
use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::AnalyzeOptions;
use crate::config::{Overrides, RunConfig};
use crate::failure::{Failure, Outcome};

#[derive(Debug, Parser)]
#[command(name = "bragg", version, about = "Cascaded Bragg notch filter simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run document.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,

    /// Fine wavelength step around the notch.
    #[arg(long = "grid-step", global = true, value_name = "NM")]
    grid_step: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Effective indices, group indices and width sensitivities of TE0/TE1.
    Modes,
    /// One spectrum (trial 0) with its metrics.
    Simulate,
    /// Ensemble statistics over `trials` noise realizations.
    Montecarlo,
    /// Section and count meeting the configured design target.
    Design,
    /// Metrics of a spectrum CSV.
    Analyze {
        spectrum: PathBuf,
        /// Off-band range `LO:HI` in nm; repeat for several.
        #[arg(long, value_name = "LO:HI")]
        window: Vec<String>,
        /// Detector floor in dB of transmission, marks clipped minima.
        #[arg(long, value_name = "DB", allow_hyphen_values = true)]
        floor_db: Option<f64>,
        #[arg(long, value_enum)]
        bandwidth: Option<Criterion>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Criterion {
    #[value(name = "3db")]
    ThreeDb,
    NullToNull,
}

impl From<Criterion> for BandwidthCriterion {
    fn from(c: Criterion) -> Self {
        match c {
            Criterion::ThreeDb => BandwidthCriterion::ThreeDb,
            Criterion::NullToNull => BandwidthCriterion::NullToNull,
        }
    }
}

fn parse_window(ranges: &[String]) -> Outcome<Option<OffbandWindow>> {
    if ranges.is_empty() {
        return Ok(None);
    }
    let ranges = ranges
        .iter()
        .map(|r| {
            let bad = || Failure::Validation(format!("--window {r}: expected LO:HI in nm"));
            let (lo, hi) = r.split_once(':').ok_or_else(bad)?;
            let (lo, hi): (f64, f64) = (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?);
            if lo < hi {
                Ok((lo, hi))
            } else {
                Err(bad())
            }
        })
        .collect::<Outcome<Vec<_>>>()?;
    Ok(Some(OffbandWindow { ranges }))
}

fn run(cli: Cli) -> Outcome<String> {
    let overrides = Overrides {
        seed: cli.seed,
        trials: cli.trials,
        grid_step: cli.grid_step,
        out: cli.out.clone(),
    };
    let load = || match &cli.config {
        Some(path) => RunConfig::load(path, &overrides).map(Some),
        None => Ok(None),
    };
    let required = || {
        load()?.ok_or_else(|| Failure::Validation("--config is required for this command".into()))
    };
    match &cli.command {
        Command::Modes => commands::modes(&required()?),
        Command::Simulate => commands::simulate(&required()?),
        Command::Montecarlo => commands::montecarlo(&required()?),
        Command::Design => commands::design(&required()?),
        Command::Analyze {
            spectrum,
            window,
            floor_db,
            bandwidth,
        } => {
            let options = AnalyzeOptions {
                window: parse_window(window)?,
                floor_db: *floor_db,
                bandwidth: bandwidth.map(Into::into),
            };
            commands::analyze(spectrum, load()?.as_ref(), &options, cli.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            let _ = std::io::stdout().lock().write_all(report.as_bytes());
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("{}", failure.to_json());
            failure.exit_code()
        }
    }
}
