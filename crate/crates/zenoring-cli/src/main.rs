//! `zenoring` command-line interface.
//!
//! Exit codes: 0 success, 2 configuration/validation error, 3
//! non-convergence (steady-state timeout or a fit that did not converge),
//! 1 anything else. Diagnostics go to stderr; data goes to files under
//! `--out` and to stdout.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use zenoring::config::load_config;

#[derive(Parser)]
#[command(
    name = "zenoring",
    version,
    about = "Coupled-mode simulator for Zeno-controlled linear coupling and four-wave mixing in a multimode microring"
)]
pub struct Cli {
    /// Path to the system configuration file.
    #[arg(long, global = true, default_value = "configs/acceptance.toml")]
    pub config: PathBuf,

    /// Directory for output files (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Worker threads for grid evaluation. Output is byte-identical for any
    /// value.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Configuration override `key.path=value`, repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TwmFlag {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// Pump alone: intracavity photon number and pump transmission.
    Pump,
    /// Pump plus weak probe on mode c: probe transmission.
    Probe,
    /// Pump plus seed on mode a with the TWM channel off: converted power.
    Fwm,
    /// Both nonlinearities: converted power and suppression ratio.
    FwmTwm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitModel {
    Lorentzian,
    Zeno,
}

#[derive(Subcommand)]
pub enum Command {
    /// Analytic probe transmission spectrum of mode c at a fixed pump point.
    Spectrum {
        /// Pump wavelength in nm (default: the configured drive wavelength).
        #[arg(long)]
        pump_wavelength_nm: Option<f64>,
        /// Pump power in mW (default: the configured drive power).
        #[arg(long)]
        pump_power_mw: Option<f64>,
        /// Half-width of the detuning axis in units of kappa_c.
        #[arg(long, default_value_t = 12.0)]
        span_kappa: f64,
        /// Number of samples along the detuning axis.
        #[arg(long, default_value_t = 801)]
        points: usize,
    },
    /// Thermal pump sweep: triangle trace and phase-mismatch walk.
    Sweep {
        /// Sweep plan name from the configuration.
        #[arg(long, default_value = "default")]
        plan: String,
        /// Also write one probe spectrum CSV per pump step.
        #[arg(long)]
        spectra: bool,
    },
    /// Stimulated-FWM conversion map over pump x seed wavelength.
    FwmMap {
        /// Whether the TWM channel is active.
        #[arg(long, value_enum)]
        twm: TwmFlag,
        #[arg(long, default_value = "fwm")]
        plan: String,
    },
    /// Suppression-ratio trace: TWM-off over TWM-on column maxima.
    Suppression {
        #[arg(long, default_value = "fwm")]
        plan: String,
    },
    /// Integrate the full equations of motion to steady state and compare
    /// against the closed forms.
    Steady {
        #[arg(long, value_enum, default_value_t = Scenario::Probe)]
        scenario: Scenario,
        /// Probe or seed detuning in units of the target mode linewidth.
        #[arg(long, default_value_t = 0.0)]
        detuning_kappa: f64,
        /// Pump wavelength in nm (default: the configured drive wavelength).
        #[arg(long)]
        pump_wavelength_nm: Option<f64>,
        /// Also write the relaxation trajectory.
        #[arg(long)]
        trajectory: bool,
    },
    /// Fit a measured or synthetic spectrum.
    Fit {
        /// Input spectrum CSV (detuning_hz or wavelength_nm axis).
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        model: FitModel,
        /// Frozen kappa_c in Hz (zeno model).
        #[arg(long)]
        fixed_kappa_c_hz: Option<f64>,
        /// Frozen kappa_c1 in Hz (zeno model).
        #[arg(long)]
        fixed_kappa_c1_hz: Option<f64>,
        /// Frozen line center in Hz on the detuning axis (zeno model).
        #[arg(long)]
        fixed_center_hz: Option<f64>,
    },
}

/// Error carrying the process exit code.
pub enum CliError {
    Validation(String),
    NonConvergence(String),
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::NonConvergence(m) | CliError::Other(m) => m,
        }
    }
}

impl From<zenoring::Error> for CliError {
    fn from(e: zenoring::Error) -> Self {
        use zenoring::Error::*;
        match e {
            Domain(_) | Config(_) | DataFormat(_) | GridMismatch(_) => {
                CliError::Validation(e.to_string())
            }
            StepUnderflow { .. } | Io(_) => CliError::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(format!("i/o error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Validation("--jobs must be at least 1".into()));
        }
        // Ignore the error when a pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }

    let overrides: Vec<(String, String)> = cli
        .overrides
        .iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| {
                    CliError::Validation(format!("override {kv:?} is not of the form KEY=VALUE"))
                })
        })
        .collect::<Result<_, _>>()?;

    let started = std::time::Instant::now();
    let (config, warnings) = load_config(&cli.config, &overrides)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    std::fs::create_dir_all(&cli.out)?;
    let mut manifest = manifest::RunManifest::new(&cli.config, &cli.overrides)?;

    match &cli.command {
        Command::Spectrum { pump_wavelength_nm, pump_power_mw, span_kappa, points } => {
            commands::spectrum(
                &config,
                &cli.out,
                *pump_wavelength_nm,
                *pump_power_mw,
                *span_kappa,
                *points,
                &mut manifest,
            )?
        }
        Command::Sweep { plan, spectra } => {
            commands::sweep(&config, &cli.out, plan, *spectra, &mut manifest)?
        }
        Command::FwmMap { twm, plan } => {
            commands::fwm_map(&config, &cli.out, plan, *twm == TwmFlag::On, &mut manifest)?
        }
        Command::Suppression { plan } => {
            commands::suppression(&config, &cli.out, plan, &mut manifest)?
        }
        Command::Steady { scenario, detuning_kappa, pump_wavelength_nm, trajectory } => {
            commands::steady(
                &config,
                &cli.out,
                *scenario,
                *detuning_kappa,
                *pump_wavelength_nm,
                *trajectory,
                &mut manifest,
            )?
        }
        Command::Fit { input, model, fixed_kappa_c_hz, fixed_kappa_c1_hz, fixed_center_hz } => {
            commands::fit(
                &cli.out,
                input,
                *model,
                *fixed_kappa_c_hz,
                *fixed_kappa_c1_hz,
                *fixed_center_hz,
                &mut manifest,
            )?
        }
    }

    manifest.wall_time_s = started.elapsed().as_secs_f64();
    manifest.write(&cli.out)?;
    Ok(())
}
