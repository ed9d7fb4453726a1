//! Quasi-static thermal model and scan orchestration.
//!
//! Absorbed pump light red-shifts every resonance in proportion to the
//! intracavity pump photon number, each mode with its own pull coefficient.
//! On an up-wavelength pump scan this drags the `b` resonance along with the
//! laser, producing the familiar triangle-shaped transmission trace with a
//! single hysteretic drop, and it walks the TWM phase mismatch
//! `delta_pm = omega_d0' - (omega_pump + omega_c0')` through zero somewhere
//! inside the triangle. Each scan step solves the algebraic self-consistency
//! for the pump photon number (a cubic, with continuity-based branch
//! selection) instead of integrating thermal dynamics; photon lifetimes are
//! orders of magnitude shorter than thermal time constants, which are in
//! turn much shorter than a scan-step dwell.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    make_drive, wavelength_to_omega, DriveField, ModeQuartet, NonlinearCouplings, SpectrumTrace,
};
use crate::steady::{fwm_output, fwm_suppressed, zeno_transmission, PumpFieldSolution};

/// A selected root collapsing below this fraction of its predecessor marks
/// the thermal drop.
const DROP_COLLAPSE_FRACTION: f64 = 0.2;

/// Thermal pull coefficients, rad/s of red shift per intracavity pump photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalModel {
    pub eta_a: f64,
    pub eta_b: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    /// Accepted for config compatibility; the only supported regime.
    pub quasi_static: bool,
}

impl ThermalModel {
    pub fn new(eta_a: f64, eta_b: f64, eta_c: f64, eta_d: f64, quasi_static: bool) -> Result<Self> {
        for (name, v) in [("eta_a", eta_a), ("eta_b", eta_b), ("eta_c", eta_c), ("eta_d", eta_d)] {
            if !(v >= 0.0) {
                return Err(Error::Domain(format!(
                    "thermal.{name} must be non-negative (got {v:e}); the model only red-shifts"
                )));
            }
        }
        if !quasi_static {
            return Err(Error::Config(
                "thermal.quasi_static = false is not supported; transient thermal dynamics are out of scope"
                    .into(),
            ));
        }
        Ok(Self { eta_a, eta_b, eta_c, eta_d, quasi_static })
    }

    pub fn zero() -> Self {
        Self { eta_a: 0.0, eta_b: 0.0, eta_c: 0.0, eta_d: 0.0, quasi_static: true }
    }

    /// True when `eta_d` is so close to `eta_b + eta_c` that the phase
    /// mismatch barely moves along the locked thermal branch.
    pub fn delta_pm_is_frozen(&self) -> bool {
        let sum = self.eta_b + self.eta_c;
        (self.eta_d - sum).abs() < 0.05 * sum.max(self.eta_d).max(f64::MIN_POSITIVE)
    }
}

/// One scan protocol: a pump wavelength axis plus a probe-or-seed wavelength
/// axis (the role depends on the scenario the plan is consumed by).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPlan {
    /// Pump axis start (m), inclusive.
    pub pump_start: f64,
    /// Pump axis stop (m), inclusive.
    pub pump_stop: f64,
    pub pump_steps: usize,
    /// Probe/seed axis start (m), inclusive.
    pub scan_start: f64,
    pub scan_stop: f64,
    pub scan_steps: usize,
    /// On-chip pump power (W).
    pub pump_power: f64,
    /// On-chip probe or seed power (W).
    pub scan_power: f64,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        for (name, start, stop, steps) in [
            ("pump", self.pump_start, self.pump_stop, self.pump_steps),
            ("scan", self.scan_start, self.scan_stop, self.scan_steps),
        ] {
            if steps < 2 {
                return Err(Error::Config(format!("sweep {name} axis needs >= 2 steps (got {steps})")));
            }
            if !(start > 0.0 && stop > start) {
                return Err(Error::Config(format!(
                    "sweep {name} axis must satisfy 0 < start < stop (got {start:e}..{stop:e}); \
                     scans run toward increasing wavelength"
                )));
            }
        }
        for (name, p) in [("pump_power", self.pump_power), ("scan_power", self.scan_power)] {
            if !(p >= 0.0) {
                return Err(Error::Config(format!("sweep {name} must be non-negative (got {p:e})")));
            }
        }
        Ok(())
    }

    pub fn pump_wavelengths(&self) -> Vec<f64> {
        linspace(self.pump_start, self.pump_stop, self.pump_steps)
    }

    pub fn scan_wavelengths(&self) -> Vec<f64> {
        linspace(self.scan_start, self.scan_stop, self.scan_steps)
    }
}

fn linspace(start: f64, stop: f64, steps: usize) -> Vec<f64> {
    let dx = (stop - start) / (steps - 1) as f64;
    (0..steps).map(|i| start + i as f64 * dx).collect()
}

/// Which bistability branch a sweep point sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Upper,
    Dropped,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Upper => "upper",
            Branch::Dropped => "dropped",
        }
    }
}

/// One step of a pump sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    /// Pump laser wavelength (m).
    pub pump_wavelength: f64,
    /// Pump power transmission past the waveguide.
    pub pump_transmission: f64,
    /// Intracavity pump photon number `|beta|^2`.
    pub beta_sq: f64,
    /// TWM phase mismatch `omega_d0' - (omega_pump + omega_c0')` with the
    /// thermally shifted resonances (rad/s).
    pub delta_pm: f64,
    pub branch: Branch,
}

/// Real roots (ascending) of the thermal self-consistency
/// `x [(delta - eta x)^2 + kappa^2] = eps^2` in the pump photon number `x`.
pub fn pump_photon_roots(delta_cold: f64, kappa: f64, eps_sq: f64, eta: f64) -> Vec<f64> {
    if eps_sq == 0.0 {
        return vec![0.0];
    }
    if eta == 0.0 {
        return vec![eps_sq / (delta_cold * delta_cold + kappa * kappa)];
    }
    // Substitute u = eta x (units rad/s): u^3 - 2 delta u^2 + (delta^2 +
    // kappa^2) u - eta eps^2 = 0.
    let a2 = -2.0 * delta_cold;
    let a1 = delta_cold * delta_cold + kappa * kappa;
    let a0 = -eta * eps_sq;
    let mut roots = cubic_real_roots(a2, a1, a0);
    roots.retain(|&u| u > 0.0);
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.iter().map(|u| u / eta).collect()
}

/// Real roots of the monic cubic `u^3 + a2 u^2 + a1 u + a0`.
fn cubic_real_roots(a2: f64, a1: f64, a0: f64) -> Vec<f64> {
    // Depressed form t^3 + p t + q with u = t - a2/3.
    let shift = a2 / 3.0;
    let p = a1 - a2 * a2 / 3.0;
    let q = a0 - a2 * a1 / 3.0 + 2.0 * a2 * a2 * a2 / 27.0;
    let disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);

    let mut roots = if disc > 0.0 {
        // One real root; the stable Cardano form avoids cancellation.
        let s = disc.sqrt();
        let w = -q / 2.0 + if q <= 0.0 { s } else { -s };
        let u = w.cbrt();
        let v = if u != 0.0 { -p / (3.0 * u) } else { 0.0 };
        vec![u + v - shift]
    } else {
        // Three real roots via the trigonometric method.
        let m = 2.0 * (-p / 3.0).sqrt();
        if m == 0.0 {
            vec![-shift]
        } else {
            let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
            let phi = arg.acos() / 3.0;
            (0..3)
                .map(|k| {
                    m * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift
                })
                .collect()
        }
    };
    // Newton polish against the undepressed cubic.
    for r in &mut roots {
        for _ in 0..2 {
            let f = ((*r + a2) * *r + a1) * *r + a0;
            let df = (3.0 * *r + 2.0 * a2) * *r + a1;
            if df != 0.0 {
                *r -= f / df;
            }
        }
    }
    roots
}

/// Solve one pump step: self-consistent `|beta|^2` with hysteresis branch
/// selection, pump transmission on the shifted resonance, and the thermally
/// walked phase mismatch.
pub fn thermal_steady_pump(
    pump: &DriveField,
    modes: &ModeQuartet,
    thermal: &ThermalModel,
    previous: Option<&SweepPoint>,
) -> Result<SweepPoint> {
    let kappa_b = modes.b.kappa_total();
    let delta_cold = modes.b.omega0 - pump.omega_drive;
    let roots = pump_photon_roots(delta_cold, kappa_b, pump.epsilon * pump.epsilon, thermal.eta_b);
    if roots.is_empty() {
        return Err(Error::Domain(
            "thermal self-consistency has no physical root; this cannot happen for a \
             driven lossy mode"
                .into(),
        ));
    }
    // With three real roots the middle one is the thermally unstable branch
    // of the S-curve; a physical scan only ever occupies the outer two.
    let stable = if roots.len() == 3 { vec![roots[0], roots[2]] } else { roots };
    let beta_sq = match previous {
        None => stable[0],
        Some(p) => stable
            .iter()
            .copied()
            .min_by(|x, y| {
                (x - p.beta_sq).abs().partial_cmp(&(y - p.beta_sq).abs()).unwrap()
            })
            .unwrap(),
    };

    let branch = match previous {
        Some(p) if p.branch == Branch::Dropped => Branch::Dropped,
        Some(p) if beta_sq < DROP_COLLAPSE_FRACTION * p.beta_sq => Branch::Dropped,
        _ => Branch::Upper,
    };

    let delta_shifted = delta_cold - thermal.eta_b * beta_sq;
    let pump_transmission = zeno_transmission(
        delta_shifted,
        0.0,
        0.0,
        kappa_b,
        modes.b.kappa_external,
        1.0,
    );

    let delta_pm = (modes.d.omega0 - thermal.eta_d * beta_sq)
        - pump.omega_drive
        - (modes.c.omega0 - thermal.eta_c * beta_sq);

    Ok(SweepPoint {
        pump_wavelength: 2.0 * std::f64::consts::PI * crate::model::C_LIGHT / pump.omega_drive,
        pump_transmission,
        beta_sq,
        delta_pm,
        branch,
    })
}

/// Run the pump axis of a plan with hysteresis chaining.
pub fn pump_sweep(
    plan: &SweepPlan,
    modes: &ModeQuartet,
    thermal: &ThermalModel,
) -> Result<Vec<SweepPoint>> {
    plan.validate()?;
    sweep_over(&plan.pump_wavelengths(), plan.pump_power, modes, thermal)
}

/// Run a pump sweep over an explicit wavelength sequence (useful for
/// down-sweeps in hysteresis studies).
pub fn sweep_over(
    wavelengths: &[f64],
    pump_power: f64,
    modes: &ModeQuartet,
    thermal: &ThermalModel,
) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::with_capacity(wavelengths.len());
    for &lambda in wavelengths {
        let omega = wavelength_to_omega(lambda)?;
        let drive = make_drive(&modes.b, omega, pump_power)?;
        let previous = points.last();
        let point = thermal_steady_pump(&drive, modes, thermal, previous)?;
        points.push(point);
    }
    Ok(points)
}

/// A sweep step paired with its probe transmission spectrum.
#[derive(Debug, Clone)]
pub struct ProbeStep {
    pub point: SweepPoint,
    /// Probe spectrum vs `delta_c` (detuning from the thermally shifted `c`
    /// resonance).
    pub trace: SpectrumTrace,
}

/// For every pump step, the probe transmission spectrum of mode `c` computed
/// from that step's `|beta|^2` and phase mismatch. The plan's scan axis is
/// the probe wavelength window.
pub fn probe_sequence(
    plan: &SweepPlan,
    modes: &ModeQuartet,
    thermal: &ThermalModel,
    couplings: NonlinearCouplings,
) -> Result<Vec<ProbeStep>> {
    let sweep = pump_sweep(plan, modes, thermal)?;
    let probe_omegas: Vec<f64> = plan
        .scan_wavelengths()
        .iter()
        .map(|&l| wavelength_to_omega(l))
        .collect::<Result<_>>()?;
    Ok(probe_spectra(&sweep, &probe_omegas, modes, thermal, couplings))
}

/// Probe spectra for precomputed sweep points over an explicit probe
/// frequency axis.
pub fn probe_spectra(
    sweep: &[SweepPoint],
    probe_omegas: &[f64],
    modes: &ModeQuartet,
    thermal: &ThermalModel,
    couplings: NonlinearCouplings,
) -> Vec<ProbeStep> {
    let kappa_c = modes.c.kappa_total();
    let kappa_c1 = modes.c.kappa_external;
    let kappa_d = modes.d.kappa_total();
    sweep
        .par_iter()
        .map(|point| {
            let omega_c_shifted = modes.c.omega0 - thermal.eta_c * point.beta_sq;
            let g2sq_nb = couplings.g2 * couplings.g2 * point.beta_sq;
            let mut detunings = Vec::with_capacity(probe_omegas.len());
            let mut transmissions = Vec::with_capacity(probe_omegas.len());
            for &omega_probe in probe_omegas {
                let delta_c = omega_c_shifted - omega_probe;
                let delta_d = point.delta_pm + delta_c;
                detunings.push(delta_c);
                transmissions.push(zeno_transmission(
                    delta_c, delta_d, g2sq_nb, kappa_c, kappa_c1, kappa_d,
                ));
            }
            let trace = SpectrumTrace::new(detunings, transmissions, None)
                .expect("probe spectra are well-formed by construction");
            ProbeStep { point: *point, trace }
        })
        .collect()
}

/// Stimulated-FWM conversion map over pump wavelength x seed wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct FwmMap {
    /// Pump axis (m).
    pub pump_wavelengths: Vec<f64>,
    /// Seed axis (m).
    pub seed_wavelengths: Vec<f64>,
    /// Output power (W), row-major `[pump][seed]`.
    pub p_out: Vec<f64>,
    pub twm_enabled: bool,
}

impl FwmMap {
    pub fn at(&self, pump_idx: usize, seed_idx: usize) -> f64 {
        self.p_out[pump_idx * self.seed_wavelengths.len() + seed_idx]
    }

    pub fn column_max(&self, pump_idx: usize) -> f64 {
        let n = self.seed_wavelengths.len();
        self.p_out[pump_idx * n..(pump_idx + 1) * n]
            .iter()
            .copied()
            .fold(0.0f64, f64::max)
    }
}

/// FWM output powers for precomputed sweep points over an explicit seed
/// frequency axis; row-major `[pump][seed]`.
pub fn fwm_powers(
    sweep: &[SweepPoint],
    seed_omegas: &[f64],
    seed_power: f64,
    modes: &ModeQuartet,
    thermal: &ThermalModel,
    couplings: NonlinearCouplings,
    twm_enabled: bool,
) -> Result<Vec<f64>> {
    let rows: Vec<Vec<f64>> = sweep
        .par_iter()
        .map(|point| -> Result<Vec<f64>> {
            let x = point.beta_sq;
            let beta = PumpFieldSolution::from_photon_number(x);
            let g2sq_nb = couplings.g2 * couplings.g2 * x;
            let mode_a = modes.a.red_shifted(thermal.eta_a * x);
            let mode_c = modes.c.red_shifted(thermal.eta_c * x);
            let omega_pump = wavelength_to_omega(point.pump_wavelength)?;
            let mut row = Vec::with_capacity(seed_omegas.len());
            for &omega_seed in seed_omegas {
                let seed = make_drive(&mode_a, omega_seed, seed_power)?;
                let delta_a = mode_a.omega0 - omega_seed;
                let omega_gen = 2.0 * omega_pump - omega_seed;
                let delta_c = mode_c.omega0 - omega_gen;
                let p = fwm_output(delta_a, delta_c, &beta, couplings.g3, &seed, &mode_a, &mode_c)?;
                let p = if twm_enabled {
                    let delta_d = point.delta_pm + delta_c;
                    fwm_suppressed(p, delta_c, delta_d, g2sq_nb, &mode_c, &modes.d)
                        .p_out_suppressed
                } else {
                    p
                };
                row.push(p);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Full map over a plan: thermal pump sweep plus the seed axis, with the TWM
/// channel on or off.
pub fn fwm_map(
    plan: &SweepPlan,
    modes: &ModeQuartet,
    thermal: &ThermalModel,
    couplings: NonlinearCouplings,
    twm_enabled: bool,
) -> Result<FwmMap> {
    let sweep = pump_sweep(plan, modes, thermal)?;
    fwm_map_from_sweep(&sweep, plan, modes, thermal, couplings, twm_enabled)
}

/// Map for an already-computed pump sweep (lets TWM-on/off maps share one
/// sweep).
pub fn fwm_map_from_sweep(
    sweep: &[SweepPoint],
    plan: &SweepPlan,
    modes: &ModeQuartet,
    thermal: &ThermalModel,
    couplings: NonlinearCouplings,
    twm_enabled: bool,
) -> Result<FwmMap> {
    let seed_wavelengths = plan.scan_wavelengths();
    let seed_omegas: Vec<f64> = seed_wavelengths
        .iter()
        .map(|&l| wavelength_to_omega(l))
        .collect::<Result<_>>()?;
    let p_out = fwm_powers(
        sweep,
        &seed_omegas,
        plan.scan_power,
        modes,
        thermal,
        couplings,
        twm_enabled,
    )?;
    Ok(FwmMap {
        pump_wavelengths: sweep.iter().map(|p| p.pump_wavelength).collect(),
        seed_wavelengths,
        p_out,
        twm_enabled,
    })
}

/// Ratio of per-pump-wavelength column maxima, TWM-off over TWM-on.
#[derive(Debug, Clone, PartialEq)]
pub struct SuppressionTrace {
    pub pump_wavelengths: Vec<f64>,
    pub ratios: Vec<f64>,
    pub peak_ratio: f64,
    /// Pump wavelength (m) of the peak.
    pub peak_wavelength: f64,
    pub peak_index: usize,
}

pub fn suppression_trace(map_off: &FwmMap, map_on: &FwmMap) -> Result<SuppressionTrace> {
    if map_off.twm_enabled || !map_on.twm_enabled {
        return Err(Error::GridMismatch(
            "suppression_trace expects (twm off, twm on) maps in that order".into(),
        ));
    }
    if map_off.pump_wavelengths != map_on.pump_wavelengths
        || map_off.seed_wavelengths != map_on.seed_wavelengths
    {
        return Err(Error::GridMismatch(
            "suppression_trace requires both maps on identical pump and seed grids".into(),
        ));
    }
    let ratios: Vec<f64> = (0..map_off.pump_wavelengths.len())
        .map(|i| {
            let off = map_off.column_max(i);
            let on = map_on.column_max(i);
            if on == 0.0 {
                if off == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                off / on
            }
        })
        .collect();
    let peak_index = ratios
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(SuppressionTrace {
        peak_ratio: ratios[peak_index],
        peak_wavelength: map_off.pump_wavelengths[peak_index],
        peak_index,
        pump_wavelengths: map_off.pump_wavelengths.clone(),
        ratios,
    })
}

/// Resonant intracavity photon number `eps^2 / kappa_b^2` for a pump at the
/// cold `b` resonance; the up-sweep triangle ends once the thermal shift
/// `eta_b |beta|^2` has consumed roughly this many photons.
pub fn resonant_photon_number(pump_power: f64, modes: &ModeQuartet) -> Result<f64> {
    let drive = make_drive(&modes.b, modes.b.omega0, pump_power)?;
    let kappa = modes.b.kappa_total();
    Ok(drive.epsilon * drive.epsilon / (kappa * kappa))
}

/// Residual shifted pump detuning `delta_b' = delta_cold - eta_b x` on the
/// locked branch at pump photon number `x`, from the self-consistency
/// `x (delta_b'^2 + kappa^2) = eps^2`. Negative: the laser chases the
/// receding resonance from the blue side.
pub fn locked_branch_residual(x: f64, pump_power: f64, modes: &ModeQuartet) -> Result<f64> {
    let drive = make_drive(&modes.b, modes.b.omega0, pump_power)?;
    let kappa = modes.b.kappa_total();
    let eps_sq = drive.epsilon * drive.epsilon;
    let arg = eps_sq / x - kappa * kappa;
    if arg < 0.0 {
        return Err(Error::Domain(format!(
            "photon number {x:e} exceeds the resonant maximum {:e}",
            eps_sq / (kappa * kappa)
        )));
    }
    Ok(-arg.sqrt())
}

/// Cold-resonance phase-mismatch offset `omega_d0 - omega_b0 - omega_c0` that
/// places the `delta_pm = 0` crossing at pump photon number `x_target` on the
/// locked branch.
pub fn phase_match_offset_for_crossing(
    x_target: f64,
    pump_power: f64,
    modes: &ModeQuartet,
    thermal: &ThermalModel,
) -> Result<f64> {
    let residual = locked_branch_residual(x_target, pump_power, modes)?;
    let delta_cold = thermal.eta_b * x_target + residual;
    Ok((thermal.eta_d - thermal.eta_c) * x_target - delta_cold)
}

/// Calibrate `g2` so the on-double-resonance cooperativity at the sweep step
/// nearest `delta_pm = 0` equals `c_target`. Returns the rate and the step
/// index. Fails when the sweep never brings `delta_pm` near zero (no sign
/// change).
pub fn calibrate_g2(
    sweep: &[SweepPoint],
    modes: &ModeQuartet,
    c_target: f64,
) -> Result<(f64, usize)> {
    if sweep.is_empty() {
        return Err(Error::Domain("calibrate_g2: empty sweep".into()));
    }
    let crossed = sweep.windows(2).any(|w| w[0].delta_pm.signum() != w[1].delta_pm.signum());
    if !crossed {
        return Err(Error::Domain(
            "calibrate_g2: the sweep never crosses delta_pm = 0; adjust the thermal \
             coefficients or the mode-d placement"
                .into(),
        ));
    }
    let idx = sweep
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.delta_pm.abs().partial_cmp(&b.1.delta_pm.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let x = sweep[idx].beta_sq;
    if !(x > 0.0) {
        return Err(Error::Domain("calibrate_g2: zero pump field at the crossing step".into()));
    }
    let g2 = (c_target * modes.c.kappa_total() * modes.d.kappa_total() / x).sqrt();
    Ok((g2, idx))
}
