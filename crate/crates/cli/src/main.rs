//! `simulate`: batch front end for the two-ensemble squeezing simulator.
//!
//! Reads a sectioned key = value configuration (strictly validated),
//! applies flag overrides, runs one scenario, and writes deterministic
//! CSV/JSON data files plus a manifest describing them.

mod config;
mod emit;
mod error;
mod presets;
mod scenarios;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{Overrides, Scenario, TableFormat};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "simulate",
    version,
    about = "Gaussian dynamics of two spin ensembles exchanging excitations through a lossy cavity",
    after_help = "Exit status: 0 success, 1 runtime failure, 2 bad configuration, \
                  3 refusal to run growing dynamics (see --allow-growing)."
)]
struct Cli {
    /// Run configuration file (sections [run], [parameters],
    /// [distribution], [mode], [output]); optional when flags suffice
    config: Option<PathBuf>,

    /// Scenario to run: evolve|steady|spectrum|adiabatic|output|inhomo|figure
    #[arg(long)]
    scenario: Option<String>,

    /// Figure preset id (implies --scenario figure); see --list-presets
    #[arg(long, value_name = "ID")]
    preset: Option<String>,

    /// Output directory (default: config, then $SIMULATE_OUT_DIR, then .)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Data file format: csv|json (manifests and spectra are always JSON)
    #[arg(long)]
    format: Option<String>,

    /// Run scenarios whose excitations grow without bound
    #[arg(long)]
    allow_growing: bool,

    /// List the figure presets and their embedded parameters, then exit
    #[arg(long)]
    list_presets: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if cli.list_presets {
        for id in presets::ALL {
            println!("{id:<12} {}", presets::describe(id).expect("registered preset"));
        }
        return ExitCode::SUCCESS;
    }

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("simulate: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> error::Result<()> {
    let overrides = Overrides {
        scenario: match (&cli.scenario, &cli.preset) {
            (Some(s), _) => Some(s.parse::<Scenario>()?),
            (None, Some(_)) => Some(Scenario::Figure),
            (None, None) => None,
        },
        figure: cli.preset.clone(),
        out: cli.out.clone(),
        format: cli.format.as_deref().map(str::parse::<TableFormat>).transpose()?,
        allow_growing: cli.allow_growing,
    };

    let text = match &cli.config {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read {}: {e}", path.display()))
        })?),
        None => None,
    };
    if text.is_none() && cli.scenario.is_none() && cli.preset.is_none() {
        return Err(CliError::Config(
            "nothing to do: pass a config file, --scenario, or --preset (see --help)".into(),
        ));
    }

    let resolved = config::resolve(text.as_deref(), &overrides)?;
    scenarios::run(&resolved)
}
