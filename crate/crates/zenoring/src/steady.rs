//! Closed-form steady-state predictions for the pumped four-mode system.
//!
//! With mode `b` strongly pumped and treated in the non-depletion
//! approximation, the intracavity pump field is
//! `beta = epsilon_b / (-i delta_b - kappa_b)`. The parametric coupling
//! `g2 beta` to the lossy ancillary mode `d` then acts on the target mode `c`
//! as a complex self-energy `g2^2 |beta|^2 / (-i delta_d - kappa_d)`, which on
//! phase match reduces to an extra loss rate `gamma = g2^2 |beta|^2 / kappa_d`
//! with cooperativity `C = gamma / kappa_c`. The functions here evaluate the
//! probe transmission, the stimulated four-wave-mixing output power, and its
//! Zeno-suppressed counterpart; the time-domain module cross-checks all of
//! them.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{DriveField, OpticalMode};

/// Intracavity pump amplitude under the non-depletion approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpFieldSolution {
    /// Complex pump amplitude (sqrt(photons)).
    pub beta: Complex64,
    /// Intracavity pump photon number `|beta|^2`.
    pub photon_number: f64,
}

impl PumpFieldSolution {
    /// Solution carrying a given photon number with zero phase. Useful when
    /// only `|beta|^2` is known (e.g. from a thermal sweep or a fit).
    pub fn from_photon_number(photon_number: f64) -> Self {
        Self { beta: Complex64::new(photon_number.max(0.0).sqrt(), 0.0), photon_number }
    }
}

/// Zeno figures of merit of the pumped TWM coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZenoFigures {
    /// Extra loss rate `gamma = g2^2 |beta|^2 / kappa_d` seen by mode `c` on
    /// phase match (rad/s).
    pub gamma: f64,
    /// Cooperativity `C = g2^2 |beta|^2 / (kappa_c kappa_d)`.
    pub cooperativity: f64,
}

/// One sample of a transmission spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    /// Probe detuning `delta_c` (rad/s).
    pub detuning: f64,
    /// Normalized power transmission past the waveguide.
    pub transmission: f64,
}

/// Stimulated FWM output with and without the TWM channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwmResult {
    /// Output power in mode `c` with the TWM channel off (W).
    pub p_out: f64,
    /// Output power with the TWM channel on (W).
    pub p_out_suppressed: f64,
    /// `p_out / p_out_suppressed`.
    pub suppression_ratio: f64,
}

/// Steady pump amplitude `beta = epsilon_b / (-i delta_b - kappa_b)` with
/// `delta_b = omega_{b,0} - omega_drive`.
pub fn pump_beta(drive: &DriveField, mode_b: &OpticalMode) -> PumpFieldSolution {
    let delta_b = mode_b.omega0 - drive.omega_drive;
    let beta = Complex64::new(drive.epsilon, 0.0)
        / Complex64::new(-mode_b.kappa_total(), -delta_b);
    PumpFieldSolution { beta, photon_number: beta.norm_sqr() }
}

/// Extra loss rate and cooperativity for a given pump field.
pub fn zeno_figures(
    g2: f64,
    beta: &PumpFieldSolution,
    mode_c: &OpticalMode,
    mode_d: &OpticalMode,
) -> ZenoFigures {
    let g2sq_nb = g2 * g2 * beta.photon_number;
    let gamma = g2sq_nb / mode_d.kappa_total();
    ZenoFigures { gamma, cooperativity: gamma / mode_c.kappa_total() }
}

/// Raw transmission law: `t = |1 + 2 kappa_c1 / (-i delta_c - kappa_c +
/// g2sq_nb / (-i delta_d - kappa_d))|^2`.
pub fn zeno_transmission(
    delta_c: f64,
    delta_d: f64,
    g2sq_nb: f64,
    kappa_c: f64,
    kappa_c1: f64,
    kappa_d: f64,
) -> f64 {
    let denom = Complex64::new(-kappa_c, -delta_c)
        + g2sq_nb / Complex64::new(-kappa_d, -delta_d);
    (1.0 + 2.0 * kappa_c1 / denom).norm_sqr()
}

/// Probe transmission of mode `c` under the pumped TWM coupling, evaluated at
/// one `(delta_c, delta_d)` point. `g2sq_nb` is the composite `g2^2 |beta|^2`
/// in (rad/s)^2; passing 0 recovers the bare Lorentzian.
pub fn linear_transmission(
    delta_c: f64,
    delta_d: f64,
    g2sq_nb: f64,
    mode_c: &OpticalMode,
    mode_d: &OpticalMode,
) -> SpectrumPoint {
    let transmission = zeno_transmission(
        delta_c,
        delta_d,
        g2sq_nb,
        mode_c.kappa_total(),
        mode_c.kappa_external,
        mode_d.kappa_total(),
    );
    SpectrumPoint { detuning: delta_c, transmission }
}

/// Stimulated-FWM output power in mode `c` for a seed laser on mode `a`:
///
/// `P_out = [2 kappa_a1 / (delta_a^2 + kappa_a^2)]
///          [2 kappa_c1 / (delta_c^2 + kappa_c^2)]
///          (omega_c0 / omega_a0) |beta|^4 g3^2 P_seed`.
///
/// The photon-energy ratio uses the mode resonance frequencies; detunings are
/// at most parts in 1e-5 of the optical frequency, so this keeps the
/// expression exactly even in `delta_a`.
pub fn fwm_output(
    delta_a: f64,
    delta_c: f64,
    beta: &PumpFieldSolution,
    g3: f64,
    seed: &DriveField,
    mode_a: &OpticalMode,
    mode_c: &OpticalMode,
) -> Result<f64> {
    if seed.target != mode_a.label {
        return Err(Error::Domain(format!(
            "fwm_output: seed drive targets mode {} but the seeded mode is {}",
            seed.target, mode_a.label
        )));
    }
    let kappa_a = mode_a.kappa_total();
    let kappa_c = mode_c.kappa_total();
    let lorentz_a = 2.0 * mode_a.kappa_external / (delta_a * delta_a + kappa_a * kappa_a);
    let lorentz_c = 2.0 * mode_c.kappa_external / (delta_c * delta_c + kappa_c * kappa_c);
    let nb = beta.photon_number;
    Ok(lorentz_a * lorentz_c * (mode_c.omega0 / mode_a.omega0) * nb * nb * g3 * g3
        * seed.power_onchip)
}

/// Zeno modification of a stimulated-FWM output power:
///
/// `P' = P / |1 + g2sq_nb / ((-i delta_d - kappa_d)(-i delta_c - kappa_c))|^2`.
pub fn fwm_suppressed(
    p_out: f64,
    delta_c: f64,
    delta_d: f64,
    g2sq_nb: f64,
    mode_c: &OpticalMode,
    mode_d: &OpticalMode,
) -> FwmResult {
    let product = Complex64::new(-mode_d.kappa_total(), -delta_d)
        * Complex64::new(-mode_c.kappa_total(), -delta_c);
    let suppression_ratio = (1.0 + g2sq_nb / product).norm_sqr();
    FwmResult { p_out, p_out_suppressed: p_out / suppression_ratio, suppression_ratio }
}
