//! Physical constants, shared domain types, and lab-unit conversions.
//!
//! Everything downstream works in angular frequency (rad/s), watts, and
//! seconds. Wavelengths in nm, powers in mW and lifetimes in ps exist only at
//! the configuration and file-format boundary.
//!
//! Decay-rate convention: every `kappa` in this crate is an *amplitude* decay
//! rate (the half-width of the energy resonance), and the photon energy
//! lifetime of a mode is `1 / (2 kappa_total)`.

use std::fmt;

use crate::error::{Error, Result};

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054571817e-34;

/// Vacuum speed of light (m/s).
pub const C_LIGHT: f64 = 2.99792458e8;

/// Fundamental constants bundled as a value type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Reduced Planck constant (J s).
    pub hbar: f64,
    /// Vacuum speed of light (m/s).
    pub c_light: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self { hbar: HBAR, c_light: C_LIGHT }
    }
}

/// Cavity-mode labels. `A`, `B` and `C` are telecom-band modes coupled by the
/// chi(3) process `b + b -> a + c`; `D` is the lossy visible-band ancillary
/// mode reached by the chi(2) process `b + c -> d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeLabel {
    A,
    B,
    C,
    D,
}

impl ModeLabel {
    pub const ALL: [ModeLabel; 4] = [ModeLabel::A, ModeLabel::B, ModeLabel::C, ModeLabel::D];

    /// Position of this mode in state vectors and quartet arrays.
    pub fn index(self) -> usize {
        match self {
            ModeLabel::A => 0,
            ModeLabel::B => 1,
            ModeLabel::C => 2,
            ModeLabel::D => 3,
        }
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModeLabel::A => "a",
            ModeLabel::B => "b",
            ModeLabel::C => "c",
            ModeLabel::D => "d",
        };
        f.write_str(s)
    }
}

/// One cavity resonance: rest frequency and decay budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalMode {
    pub label: ModeLabel,
    /// Angular resonance frequency (rad/s).
    pub omega0: f64,
    /// Intrinsic amplitude decay rate (rad/s).
    pub kappa_intrinsic: f64,
    /// External (waveguide) amplitude decay rate (rad/s).
    pub kappa_external: f64,
}

impl OpticalMode {
    pub fn new(
        label: ModeLabel,
        omega0: f64,
        kappa_intrinsic: f64,
        kappa_external: f64,
    ) -> Result<Self> {
        if !(omega0 > 0.0) {
            return Err(Error::Domain(format!(
                "mode {label}: omega0 must be positive (got {omega0:e})"
            )));
        }
        if !(kappa_intrinsic > 0.0) {
            return Err(Error::Domain(format!(
                "mode {label}: kappa_intrinsic must be positive (got {kappa_intrinsic:e})"
            )));
        }
        if !(kappa_external >= 0.0) {
            return Err(Error::Domain(format!(
                "mode {label}: kappa_external must be non-negative (got {kappa_external:e})"
            )));
        }
        Ok(Self { label, omega0, kappa_intrinsic, kappa_external })
    }

    /// Build a mode from lab quantities: resonance wavelength (m), photon
    /// energy lifetime (s), and the coupling ratio `kappa_external /
    /// kappa_total`.
    pub fn from_lab(
        label: ModeLabel,
        wavelength: f64,
        lifetime: f64,
        coupling_ratio: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&coupling_ratio) {
            return Err(Error::Domain(format!(
                "mode {label}: coupling_ratio must lie in [0, 1] (got {coupling_ratio})"
            )));
        }
        let omega0 = wavelength_to_omega(wavelength)?;
        let kappa = lifetime_to_kappa(lifetime)?;
        let kappa_external = coupling_ratio * kappa;
        Self::new(label, omega0, kappa - kappa_external, kappa_external)
    }

    /// Total amplitude decay rate `kappa_intrinsic + kappa_external` (rad/s).
    pub fn kappa_total(&self) -> f64 {
        self.kappa_intrinsic + self.kappa_external
    }

    /// Copy of this mode with its resonance red-shifted by `shift` (rad/s).
    pub fn red_shifted(&self, shift: f64) -> Self {
        Self { omega0: self.omega0 - shift, ..*self }
    }
}

/// The four interacting resonances of the system.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeQuartet {
    pub a: OpticalMode,
    pub b: OpticalMode,
    pub c: OpticalMode,
    pub d: OpticalMode,
}

impl ModeQuartet {
    pub fn new(a: OpticalMode, b: OpticalMode, c: OpticalMode, d: OpticalMode) -> Result<Self> {
        let want = [ModeLabel::A, ModeLabel::B, ModeLabel::C, ModeLabel::D];
        for (mode, want) in [&a, &b, &c, &d].iter().zip(want) {
            if mode.label != want {
                return Err(Error::Domain(format!(
                    "mode quartet slot {want} holds a mode labelled {}",
                    mode.label
                )));
            }
        }
        Ok(Self { a, b, c, d })
    }

    pub fn get(&self, label: ModeLabel) -> &OpticalMode {
        match label {
            ModeLabel::A => &self.a,
            ModeLabel::B => &self.b,
            ModeLabel::C => &self.c,
            ModeLabel::D => &self.d,
        }
    }
}

/// Single-photon nonlinear coupling rates (rad/s). Phases are absorbed into
/// the mode amplitudes, so both rates are non-negative reals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearCouplings {
    /// Three-wave-mixing rate g2 for `b + c -> d`.
    pub g2: f64,
    /// Four-wave-mixing rate g3 for `b + b -> a + c`.
    pub g3: f64,
}

impl NonlinearCouplings {
    pub fn new(g2: f64, g3: f64) -> Result<Self> {
        if !(g2 >= 0.0) {
            return Err(Error::Domain(format!("g2 must be non-negative (got {g2:e})")));
        }
        if !(g3 >= 0.0) {
            return Err(Error::Domain(format!("g3 must be non-negative (got {g3:e})")));
        }
        Ok(Self { g2, g3 })
    }
}

/// One laser drive: carrier frequency, on-chip power, and the derived input
/// flux amplitude `epsilon = sqrt(2 kappa_ext P / (hbar omega))` in
/// sqrt(photons)/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveField {
    pub target: ModeLabel,
    /// Laser angular frequency (rad/s).
    pub omega_drive: f64,
    /// On-chip power (W).
    pub power_onchip: f64,
    /// Input flux amplitude (sqrt(photons)/s).
    pub epsilon: f64,
}

/// Build a [`DriveField`] addressing `mode` through its waveguide coupling.
pub fn make_drive(mode: &OpticalMode, omega_drive: f64, power_onchip: f64) -> Result<DriveField> {
    if !(omega_drive > 0.0) {
        return Err(Error::Domain(format!(
            "drive on mode {}: omega_drive must be positive (got {omega_drive:e})",
            mode.label
        )));
    }
    if !(power_onchip >= 0.0) {
        return Err(Error::Domain(format!(
            "drive on mode {}: power must be non-negative (got {power_onchip:e})",
            mode.label
        )));
    }
    let epsilon = (2.0 * mode.kappa_external * power_onchip / (HBAR * omega_drive)).sqrt();
    Ok(DriveField { target: mode.label, omega_drive, power_onchip, epsilon })
}

/// Frequency detunings of the four modes plus the TWM phase mismatch, all in
/// rad/s and all following the convention `delta_o = omega_{o,0} - omega_o`
/// (resonance minus light frequency). `delta_d = delta_pm + delta_c` holds by
/// construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetuningSet {
    pub delta_a: f64,
    pub delta_b: f64,
    pub delta_c: f64,
    pub delta_d: f64,
    /// Phase mismatch `omega_{d,0} - (omega_b + omega_{c,0})`.
    pub delta_pm: f64,
}

impl DetuningSet {
    pub fn new(delta_a: f64, delta_b: f64, delta_c: f64, delta_pm: f64) -> Self {
        Self { delta_a, delta_b, delta_c, delta_d: delta_pm + delta_c, delta_pm }
    }
}

/// A sampled transmission (or conversion-efficiency) trace over a detuning
/// axis. `sigma` optionally carries per-point noise estimates for fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTrace {
    /// Detunings (rad/s).
    pub detunings: Vec<f64>,
    /// Dimensionless transmissions, all non-negative.
    pub transmissions: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl SpectrumTrace {
    pub fn new(detunings: Vec<f64>, transmissions: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        if detunings.len() != transmissions.len() {
            return Err(Error::Domain(format!(
                "spectrum trace: {} detunings vs {} transmissions",
                detunings.len(),
                transmissions.len()
            )));
        }
        if let Some(s) = &sigma {
            if s.len() != detunings.len() {
                return Err(Error::Domain(format!(
                    "spectrum trace: {} detunings vs {} sigma entries",
                    detunings.len(),
                    s.len()
                )));
            }
            if s.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Domain("spectrum trace: sigma entries must be positive".into()));
            }
        }
        if transmissions.iter().any(|&t| !(t >= 0.0)) {
            return Err(Error::Domain("spectrum trace: transmissions must be non-negative".into()));
        }
        if detunings.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("spectrum trace: detunings must be finite".into()));
        }
        Ok(Self { detunings, transmissions, sigma })
    }

    pub fn len(&self) -> usize {
        self.detunings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detunings.is_empty()
    }
}

/// Convert a vacuum wavelength (m) to angular frequency (rad/s).
pub fn wavelength_to_omega(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("wavelength must be positive (got {lambda:e} m)")));
    }
    Ok(2.0 * std::f64::consts::PI * C_LIGHT / lambda)
}

/// Convert an angular frequency (rad/s) to vacuum wavelength (m).
pub fn omega_to_wavelength(omega: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("frequency must be positive (got {omega:e} rad/s)")));
    }
    Ok(2.0 * std::f64::consts::PI * C_LIGHT / omega)
}

/// Convert a photon energy lifetime (s) to the amplitude decay rate
/// `kappa = 1 / (2 tau)` (rad/s).
pub fn lifetime_to_kappa(tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("lifetime must be positive (got {tau:e} s)")));
    }
    Ok(1.0 / (2.0 * tau))
}
