//! Coupled-mode theory of a four-mode microring in which a chi(2)
//! three-wave-mixing coupling to a lossy ancillary mode suppresses, through
//! the Zeno effect, both the linear waveguide-to-ring coupling and chi(3)
//! four-wave-mixing photon generation.
//!
//! The crate is organized around one analytic route and one brute-force
//! route to every observable:
//!
//! - [`model`] — constants, domain types, lab-unit conversions;
//! - [`steady`] — closed-form steady states: pump field, Zeno loss and
//!   cooperativity, probe transmission, stimulated-FWM output and its
//!   suppression;
//! - [`dynamics`] — adaptive time-domain integration of the full nonlinear
//!   equations of motion, used as the oracle for every formula in
//!   [`steady`];
//! - [`thermal`] — quasi-static thermal bistability, pump sweeps, probe
//!   spectrum sequences, FWM efficiency maps and the suppression-ratio
//!   trace;
//! - [`fit`] — damped least-squares extraction of lineshape and Zeno
//!   parameters from measured or synthetic spectra;
//! - [`config`] — TOML system configuration with validation;
//! - [`io`] — deterministic CSV emission and ingestion.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod io;
pub mod model;
pub mod steady;
pub mod thermal;

pub use error::{Error, Result};
pub use model::{
    make_drive, lifetime_to_kappa, omega_to_wavelength, wavelength_to_omega, DetuningSet,
    DriveField, ModeLabel, ModeQuartet, NonlinearCouplings, OpticalMode, PhysicalConstants,
    SpectrumTrace, C_LIGHT, HBAR,
};
pub use steady::{
    fwm_output, fwm_suppressed, linear_transmission, pump_beta, zeno_figures, FwmResult,
    PumpFieldSolution, SpectrumPoint, ZenoFigures,
};
