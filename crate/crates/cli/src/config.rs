//! Run configuration: a sectioned key = value file, strictly validated
//! (unknown keys are errors), plus command-line overrides. All rates are
//! in units of the cavity linewidth unless `[run] units = "absolute"`,
//! in which case everything is divided by the given `kappa` on ingest
//! and times are multiplied by it.

use std::path::PathBuf;

use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Evolve,
    Steady,
    Spectrum,
    Adiabatic,
    Output,
    Inhomo,
    Figure,
}

impl std::str::FromStr for Scenario {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "evolve" => Ok(Scenario::Evolve),
            "steady" => Ok(Scenario::Steady),
            "spectrum" => Ok(Scenario::Spectrum),
            "adiabatic" => Ok(Scenario::Adiabatic),
            "output" => Ok(Scenario::Output),
            "inhomo" => Ok(Scenario::Inhomo),
            "figure" => Ok(Scenario::Figure),
            other => Err(CliError::Config(format!(
                "unknown scenario `{other}` (want evolve|steady|spectrum|adiabatic|output|inhomo|figure)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Kappa,
    Absolute,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidthConvention {
    Sigma,
    Fwhm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Coupling,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Json,
}

impl std::str::FromStr for TableFormat {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            other => Err(CliError::Config(format!(
                "unknown format `{other}` (want csv|json)"
            ))),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    parameters: RawParameters,
    #[serde(default)]
    distribution: RawDistribution,
    #[serde(default)]
    mode: RawMode,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    scenario: Option<Scenario>,
    figure: Option<String>,
    allow_growing: Option<bool>,
    units: Option<Units>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParameters {
    g_a: Option<f64>,
    g_b: Option<f64>,
    kappa: Option<f64>,
    delta: Option<f64>,
    t_end: Option<f64>,
    steps: Option<usize>,
    theta: Option<f64>,
    t_pulse: Option<f64>,
    horizon: Option<f64>,
    grid_points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDistribution {
    width: Option<f64>,
    cutoff: Option<f64>,
    bins: Option<usize>,
    convention: Option<WidthConvention>,
    weighting: Option<Weighting>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMode {
    file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    format: Option<TableFormat>,
}

/// Command-line overrides; every field beats the config file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub scenario: Option<Scenario>,
    pub figure: Option<String>,
    pub out: Option<PathBuf>,
    pub format: Option<TableFormat>,
    pub allow_growing: bool,
}

/// Fully resolved run: defaults applied, units normalized to kappa = 1.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub scenario: Scenario,
    pub figure: Option<String>,
    pub allow_growing: bool,
    pub g_a: f64,
    pub g_b: f64,
    pub kappa: f64,
    pub delta: f64,
    pub t_end: f64,
    pub steps: usize,
    pub theta: f64,
    pub t_pulse: Option<f64>,
    pub horizon: f64,
    pub grid_points: usize,
    pub width: f64,
    pub cutoff: f64,
    pub bins: usize,
    pub convention: WidthConvention,
    pub weighting: Weighting,
    pub mode_file: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub format: TableFormat,
}

/// Environment variable consulted for the default output directory.
pub const OUT_DIR_ENV: &str = "SIMULATE_OUT_DIR";

pub fn resolve(config_text: Option<&str>, overrides: &Overrides) -> Result<Resolved> {
    let raw: RawConfig = match config_text {
        Some(text) => toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?,
        None => RawConfig::default(),
    };

    let units = raw.run.units.unwrap_or(Units::Kappa);
    let kappa_in = raw.parameters.kappa.unwrap_or(1.0);
    if !(kappa_in >= 0.0) || !kappa_in.is_finite() {
        return Err(CliError::Config("parameters.kappa must be finite and >= 0".into()));
    }
    // In kappa units the values pass through unchanged; in absolute units
    // everything is rescaled so kappa = 1 internally.
    let (rate_scale, time_scale, kappa) = match units {
        Units::Kappa => (1.0, 1.0, kappa_in),
        Units::Absolute => {
            if kappa_in <= 0.0 {
                return Err(CliError::Config(
                    "units = \"absolute\" needs parameters.kappa > 0 to normalize by".into(),
                ));
            }
            (1.0 / kappa_in, kappa_in, 1.0)
        }
    };

    let scenario = overrides
        .scenario
        .or(raw.run.scenario)
        .unwrap_or(Scenario::Evolve);
    let figure = overrides.figure.clone().or(raw.run.figure);
    if scenario == Scenario::Figure && figure.is_none() {
        return Err(CliError::Config(
            "scenario = \"figure\" needs run.figure (or --preset) to say which one".into(),
        ));
    }

    let out_dir = overrides
        .out
        .clone()
        .or(raw.output.dir)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    let r = Resolved {
        scenario,
        figure,
        allow_growing: overrides.allow_growing || raw.run.allow_growing.unwrap_or(false),
        g_a: raw.parameters.g_a.unwrap_or(4.5) * rate_scale,
        g_b: raw.parameters.g_b.unwrap_or(5.0) * rate_scale,
        kappa,
        delta: raw.parameters.delta.unwrap_or(10.0) * rate_scale,
        t_end: raw.parameters.t_end.unwrap_or(30.0) * time_scale,
        steps: raw.parameters.steps.unwrap_or(1200),
        theta: raw.parameters.theta.unwrap_or(0.0),
        t_pulse: raw.parameters.t_pulse.map(|t| t * time_scale),
        horizon: raw.parameters.horizon.unwrap_or(10.0) * time_scale,
        grid_points: raw.parameters.grid_points.unwrap_or(1000),
        width: raw.distribution.width.unwrap_or(0.0) * rate_scale,
        cutoff: raw.distribution.cutoff.unwrap_or(squeeze_core::inhomo::DEFAULT_CUTOFF),
        bins: raw.distribution.bins.unwrap_or(squeeze_core::inhomo::DEFAULT_BINS),
        convention: raw.distribution.convention.unwrap_or(WidthConvention::Sigma),
        weighting: raw.distribution.weighting.unwrap_or(Weighting::Coupling),
        mode_file: raw.mode.file,
        out_dir,
        format: overrides.format.or(raw.output.format).unwrap_or(TableFormat::Csv),
    };

    for (name, v) in [
        ("parameters.g_a", r.g_a),
        ("parameters.g_b", r.g_b),
        ("parameters.delta", r.delta),
        ("parameters.theta", r.theta),
        ("distribution.width", r.width),
        ("distribution.cutoff", r.cutoff),
    ] {
        if !v.is_finite() {
            return Err(CliError::Config(format!("{name} must be finite")));
        }
    }
    if !(r.t_end > 0.0) || !r.t_end.is_finite() {
        return Err(CliError::Config("parameters.t_end must be positive and finite".into()));
    }
    if r.steps == 0 {
        return Err(CliError::Config("parameters.steps must be positive".into()));
    }
    if r.g_a < 0.0 || r.g_b < 0.0 {
        return Err(CliError::Config("couplings must be non-negative".into()));
    }
    if r.width < 0.0 {
        return Err(CliError::Config("distribution.width must be non-negative".into()));
    }
    Ok(r)
}

impl Resolved {
    /// The ensemble width as a standard deviation, whatever convention
    /// the config used.
    pub fn sigma_width(&self) -> f64 {
        match self.convention {
            WidthConvention::Sigma => self.width,
            // FWHM of a Gaussian is sigma * sqrt(8 ln 2).
            WidthConvention::Fwhm => self.width / (8.0 * std::f64::consts::LN_2).sqrt(),
        }
    }

    pub fn weighting_core(&self) -> squeeze_core::CollectiveWeighting {
        match self.weighting {
            Weighting::Coupling => squeeze_core::CollectiveWeighting::Coupling,
            Weighting::Uniform => squeeze_core::CollectiveWeighting::Uniform,
        }
    }

    /// The parameters block echoed into manifests.
    pub fn parameters_json(&self) -> serde_json::Value {
        serde_json::json!({
            "g_a": self.g_a,
            "g_b": self.g_b,
            "kappa": self.kappa,
            "delta": self.delta,
            "t_end": self.t_end,
            "steps": self.steps,
            "theta": self.theta,
        })
    }
}
