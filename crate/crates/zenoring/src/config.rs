//! System configuration: TOML ingestion, unit conversion, validation.
//!
//! Lab units live in the file (nm, ps, mW); everything is converted to
//! rad/s, W and s at load. Unknown keys are errors, never silently ignored.
//! The full grammar is documented in the repository README.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::dynamics::IntegratorSettings;
use crate::error::{Error, Result};
use crate::model::{ModeLabel, ModeQuartet, NonlinearCouplings, OpticalMode, PhysicalConstants};
use crate::thermal::{SweepPlan, ThermalModel};

const SUPPORTED_VERSION: u32 = 1;
const TAU: f64 = std::f64::consts::TAU;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    config_version: u32,
    modes: RawModes,
    couplings: RawCouplings,
    thermal: RawThermal,
    drive: RawDrive,
    #[serde(default)]
    integrator: RawIntegrator,
    #[serde(default)]
    validation: RawValidation,
    #[serde(default)]
    sweeps: BTreeMap<String, RawSweep>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModes {
    a: RawMode,
    b: RawMode,
    c: RawMode,
    d: RawMode,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMode {
    wavelength_nm: f64,
    lifetime_ps: f64,
    #[serde(default = "default_coupling_ratio")]
    coupling_ratio: f64,
}

fn default_coupling_ratio() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCouplings {
    g2_rad_s: f64,
    g3_rad_s: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThermal {
    eta_a_hz_per_photon: f64,
    eta_b_hz_per_photon: f64,
    eta_c_hz_per_photon: f64,
    eta_d_hz_per_photon: f64,
    #[serde(default = "default_true")]
    quasi_static: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrive {
    pump_power_mw: f64,
    probe_power_mw: f64,
    seed_power_mw: f64,
    /// Defaults to the cold `b` resonance.
    pump_wavelength_nm: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    max_step_s: Option<f64>,
    steady_threshold: Option<f64>,
    max_time_s: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawValidation {
    /// Warn when `|omega_d0 - omega_b0 - omega_c0|` exceeds this many
    /// `kappa_c` with TWM enabled.
    phase_match_warn_kappa_c: f64,
}

impl Default for RawValidation {
    fn default() -> Self {
        Self { phase_match_warn_kappa_c: 200.0 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    pump_start_nm: f64,
    pump_stop_nm: f64,
    pump_steps: usize,
    scan_start_nm: f64,
    scan_stop_nm: f64,
    scan_steps: usize,
    pump_power_mw: Option<f64>,
    scan_power_mw: Option<f64>,
}

/// Fully validated system configuration in internal units.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub modes: ModeQuartet,
    pub couplings: NonlinearCouplings,
    pub thermal: ThermalModel,
    pub constants: PhysicalConstants,
    pub integrator: IntegratorSettings,
    /// Default pump power (W).
    pub pump_power: f64,
    /// Default probe power (W).
    pub probe_power: f64,
    /// Default seed power (W).
    pub seed_power: f64,
    /// Default pump wavelength (m).
    pub pump_wavelength: f64,
    pub sweeps: BTreeMap<String, SweepPlan>,
    pub phase_match_warn_kappa_c: f64,
}

impl SystemConfig {
    pub fn sweep(&self, name: &str) -> Result<&SweepPlan> {
        self.sweeps.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.sweeps.keys().map(String::as_str).collect();
            Error::Config(format!(
                "no sweep plan named {name:?} in the configuration (available: {known:?})"
            ))
        })
    }
}

/// Parse and validate a configuration from TOML text. Returns the config and
/// any non-fatal warnings.
pub fn parse_config(text: &str) -> Result<(SystemConfig, Vec<String>)> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    finish(raw)
}

/// Load a configuration file, optionally applying dotted-path overrides
/// (`modes.b.wavelength_nm=1550.1`) before validation.
pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<(SystemConfig, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    if overrides.is_empty() {
        return parse_config(&text);
    }
    let mut table: toml::Table =
        text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    for (key, raw) in overrides {
        apply_override(&mut table, key, raw)?;
    }
    let raw: RawConfig = table.try_into().map_err(|e: toml::de::Error| {
        Error::Config(format!("after overrides: {e}"))
    })?;
    finish(raw)
}

/// Set `key` (dotted path) to `raw` parsed as a TOML literal; bare words fall
/// back to strings. Creating a key that the schema does not know is caught by
/// the deserializer afterwards.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parsed: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key {key:?}")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        node = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part:?} is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

fn finish(raw: RawConfig) -> Result<(SystemConfig, Vec<String>)> {
    if raw.config_version != SUPPORTED_VERSION {
        return Err(Error::Config(format!(
            "config_version {} is not supported (this build reads version {SUPPORTED_VERSION})",
            raw.config_version
        )));
    }

    let mode = |label: ModeLabel, m: &RawMode, field: &str| -> Result<OpticalMode> {
        OpticalMode::from_lab(label, m.wavelength_nm * 1e-9, m.lifetime_ps * 1e-12, m.coupling_ratio)
            .map_err(|e| Error::Config(format!("modes.{field}: {e}")))
    };
    let modes = ModeQuartet::new(
        mode(ModeLabel::A, &raw.modes.a, "a")?,
        mode(ModeLabel::B, &raw.modes.b, "b")?,
        mode(ModeLabel::C, &raw.modes.c, "c")?,
        mode(ModeLabel::D, &raw.modes.d, "d")?,
    )?;

    let couplings = NonlinearCouplings::new(raw.couplings.g2_rad_s, raw.couplings.g3_rad_s)
        .map_err(|e| Error::Config(format!("couplings: {e}")))?;

    let thermal = ThermalModel::new(
        TAU * raw.thermal.eta_a_hz_per_photon,
        TAU * raw.thermal.eta_b_hz_per_photon,
        TAU * raw.thermal.eta_c_hz_per_photon,
        TAU * raw.thermal.eta_d_hz_per_photon,
        raw.thermal.quasi_static,
    )
    .map_err(|e| Error::Config(format!("thermal: {e}")))?;

    for (name, p) in [
        ("drive.pump_power_mw", raw.drive.pump_power_mw),
        ("drive.probe_power_mw", raw.drive.probe_power_mw),
        ("drive.seed_power_mw", raw.drive.seed_power_mw),
    ] {
        if !(p >= 0.0) {
            return Err(Error::Config(format!("{name} must be non-negative (got {p})")));
        }
    }

    let defaults = IntegratorSettings::default();
    let integrator = IntegratorSettings {
        rel_tol: raw.integrator.rel_tol.unwrap_or(defaults.rel_tol),
        abs_tol: raw.integrator.abs_tol.unwrap_or(defaults.abs_tol),
        max_step: raw.integrator.max_step_s.unwrap_or(defaults.max_step),
        steady_threshold: raw.integrator.steady_threshold.unwrap_or(defaults.steady_threshold),
        max_time: raw.integrator.max_time_s.unwrap_or(defaults.max_time),
    };
    integrator.validate()?;

    let mut sweeps = BTreeMap::new();
    for (name, s) in &raw.sweeps {
        let plan = SweepPlan {
            pump_start: s.pump_start_nm * 1e-9,
            pump_stop: s.pump_stop_nm * 1e-9,
            pump_steps: s.pump_steps,
            scan_start: s.scan_start_nm * 1e-9,
            scan_stop: s.scan_stop_nm * 1e-9,
            scan_steps: s.scan_steps,
            pump_power: s.pump_power_mw.unwrap_or(raw.drive.pump_power_mw) * 1e-3,
            scan_power: s.scan_power_mw.unwrap_or(raw.drive.probe_power_mw) * 1e-3,
        };
        plan.validate().map_err(|e| Error::Config(format!("sweeps.{name}: {e}")))?;
        sweeps.insert(name.clone(), plan);
    }

    let pump_wavelength = match raw.drive.pump_wavelength_nm {
        Some(nm) => {
            if !(nm > 0.0) {
                return Err(Error::Config(format!(
                    "drive.pump_wavelength_nm must be positive (got {nm})"
                )));
            }
            nm * 1e-9
        }
        None => crate::model::omega_to_wavelength(modes.b.omega0)?,
    };

    let config = SystemConfig {
        pump_power: raw.drive.pump_power_mw * 1e-3,
        probe_power: raw.drive.probe_power_mw * 1e-3,
        seed_power: raw.drive.seed_power_mw * 1e-3,
        pump_wavelength,
        phase_match_warn_kappa_c: raw.validation.phase_match_warn_kappa_c,
        modes,
        couplings,
        thermal,
        constants: PhysicalConstants::default(),
        integrator,
        sweeps,
    };

    let mut warnings = Vec::new();
    if config.couplings.g2 > 0.0 {
        let mismatch =
            config.modes.d.omega0 - config.modes.b.omega0 - config.modes.c.omega0;
        let bound = config.phase_match_warn_kappa_c * config.modes.c.kappa_total();
        if mismatch.abs() > bound {
            warnings.push(format!(
                "phase matching unreachable: |omega_d0 - omega_b0 - omega_c0| = {:.3e} rad/s \
                 exceeds {} kappa_c = {:.3e} rad/s; TWM will stay far off resonance",
                mismatch.abs(),
                config.phase_match_warn_kappa_c,
                bound
            ));
        }
        if config.thermal.delta_pm_is_frozen() && config.thermal.eta_b > 0.0 {
            warnings.push(
                "thermal: eta_d is within 5% of eta_b + eta_c, so the phase mismatch barely \
                 moves along a pump sweep; delta_pm = 0 may be unreachable"
                    .to_string(),
            );
        }
    }

    Ok((config, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_toml() -> String {
        r#"
config_version = 1

[modes.a]
wavelength_nm = 1546.0
lifetime_ps = 210.0

[modes.b]
wavelength_nm = 1550.0
lifetime_ps = 210.0

[modes.c]
wavelength_nm = 1554.0207522697795
lifetime_ps = 210.0

[modes.d]
wavelength_nm = 775.9583330516043
lifetime_ps = 45.0

[couplings]
g2_rad_s = 5.4e5
g3_rad_s = 0.1

[thermal]
eta_a_hz_per_photon = 85.0
eta_b_hz_per_photon = 85.0
eta_c_hz_per_photon = 85.0
eta_d_hz_per_photon = 306.0

[drive]
pump_power_mw = 180.0
probe_power_mw = 0.1
seed_power_mw = 0.1

[sweeps.default]
pump_start_nm = 1549.90
pump_stop_nm = 1550.46
pump_steps = 600
scan_start_nm = 1553.95
scan_stop_nm = 1554.52
scan_steps = 800
"#
        .to_string()
    }

    #[test]
    fn base_config_parses_and_converts_units() {
        let (config, warnings) = parse_config(&base_toml()).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        assert!((config.modes.b.kappa_total() - 2.380952380952381e9).abs() < 1.0);
        assert_eq!(config.pump_power, 0.18);
        assert_eq!(config.probe_power, 1e-4);
        let plan = config.sweep("default").unwrap();
        assert_eq!(plan.pump_steps, 600);
        assert!((plan.pump_start - 1549.90e-9).abs() < 1e-18);
        assert_eq!(plan.pump_power, 0.18);
        assert_eq!(plan.scan_power, 1e-4);
    }

    #[test]
    fn zero_intrinsic_loss_is_rejected_with_field_path() {
        let text = base_toml().replace(
            "[modes.c]\nwavelength_nm = 1554.0207522697795\nlifetime_ps = 210.0",
            "[modes.c]\nwavelength_nm = 1554.0207522697795\nlifetime_ps = 210.0\ncoupling_ratio = 1.0",
        );
        let err = parse_config(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("modes.c"), "{msg}");
        assert!(msg.contains("kappa_intrinsic"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = base_toml() + "\n[drive2]\nx = 1\n";
        assert!(parse_config(&text).is_err());
        let text = base_toml().replace("g3_rad_s = 0.1", "g3_rad_s = 0.1\nbogus = 2.0");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_position_information() {
        let err = parse_config("config_version = = 1").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn wrong_version_is_rejected() {
        let text = base_toml().replace("config_version = 1", "config_version = 2");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn far_mode_d_warns_about_phase_matching() {
        // Push omega_d0 about 1000 kappa_c away from omega_b0 + omega_c0:
        // 1000 kappa_c ~ 2.4e12 rad/s ~ 0.78 nm at 775 nm.
        let text = base_toml().replace("wavelength_nm = 775.9583330516043", "wavelength_nm = 774.0");
        let (_, warnings) = parse_config(&text).unwrap();
        assert!(
            warnings.iter().any(|w| w.contains("phase matching unreachable")),
            "{warnings:?}"
        );
        // With TWM disabled the warning disappears.
        let text = text.replace("g2_rad_s = 5.4e5", "g2_rad_s = 0.0");
        let (_, warnings) = parse_config(&text).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
    }

    #[test]
    fn frozen_delta_pm_warns() {
        let text = base_toml().replace("eta_d_hz_per_photon = 306.0", "eta_d_hz_per_photon = 170.0");
        let (_, warnings) = parse_config(&text).unwrap();
        assert!(warnings.iter().any(|w| w.contains("barely")), "{warnings:?}");
    }

    #[test]
    fn overrides_reach_nested_keys_and_reject_unknown_ones() {
        let mut value: toml::Table = base_toml().parse().unwrap();
        apply_override(&mut value, "modes.b.wavelength_nm", "1550.1").unwrap();
        apply_override(&mut value, "drive.pump_power_mw", "90.0").unwrap();
        let raw: RawConfig = value.clone().try_into().unwrap();
        let (config, _) = finish(raw).unwrap();
        assert_eq!(config.pump_power, 0.09);
        assert!((config.modes.b.omega0 - crate::model::wavelength_to_omega(1550.1e-9).unwrap()).abs() < 1.0);

        apply_override(&mut value, "drive.no_such_key", "1.0").unwrap();
        let res: std::result::Result<RawConfig, _> = value.try_into();
        assert!(res.is_err());
    }

    #[test]
    fn missing_required_section_is_an_error() {
        let text = base_toml().replace("[drive]", "[drive_off]");
        assert!(parse_config(&text).is_err());
    }
}
