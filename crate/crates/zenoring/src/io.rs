//! Deterministic CSV emission and ingestion.
//!
//! Every float is serialized with 17 significant digits so files are
//! byte-stable across runs and round-trip exactly through f64. Data files
//! carry no timestamps.

use std::io::{BufRead, Write};

use crate::dynamics::ModeState;
use crate::error::{Error, Result};
use crate::model::{SpectrumTrace, C_LIGHT};
use crate::thermal::{FwmMap, SuppressionTrace, SweepPoint};

const TAU: f64 = std::f64::consts::TAU;

/// Round-trippable float formatting: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header of a probe/transmission spectrum file.
pub const SPECTRUM_HEADER: &str = "probe_detuning_hz,transmission";

/// `detuning` is stored in Hz (`delta_c / 2 pi`).
pub fn write_spectrum_csv<W: Write>(mut w: W, trace: &SpectrumTrace) -> Result<()> {
    match &trace.sigma {
        None => {
            writeln!(w, "{SPECTRUM_HEADER}")?;
            for (d, t) in trace.detunings.iter().zip(&trace.transmissions) {
                writeln!(w, "{},{}", fmt_f64(d / TAU), fmt_f64(*t))?;
            }
        }
        Some(sigma) => {
            writeln!(w, "{SPECTRUM_HEADER},sigma")?;
            for ((d, t), s) in trace.detunings.iter().zip(&trace.transmissions).zip(sigma) {
                writeln!(w, "{},{},{}", fmt_f64(d / TAU), fmt_f64(*t), fmt_f64(*s))?;
            }
        }
    }
    Ok(())
}

/// Detuning axis flavor of a spectrum file accepted by [`read_spectrum_csv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumAxis {
    /// `detuning_hz` (also the `probe_detuning_hz` written by this crate):
    /// converted to rad/s.
    DetuningHz,
    /// `wavelength_nm`: mapped to `-omega` (rad/s) so the axis still
    /// increases with wavelength; the fit's center parameter absorbs the
    /// offset.
    WavelengthNm,
}

/// Read a spectrum CSV with header `detuning_hz|probe_detuning_hz|wavelength_nm,
/// transmission[,sigma]`.
pub fn read_spectrum_csv<R: BufRead>(r: R) -> Result<(SpectrumAxis, SpectrumTrace)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::DataFormat("empty spectrum file".into()))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    let axis = match cols.first().copied() {
        Some("detuning_hz") | Some("probe_detuning_hz") => SpectrumAxis::DetuningHz,
        Some("wavelength_nm") => SpectrumAxis::WavelengthNm,
        other => {
            return Err(Error::DataFormat(format!(
                "unsupported spectrum axis column {other:?}; expected detuning_hz, \
                 probe_detuning_hz or wavelength_nm"
            )))
        }
    };
    if cols.get(1).copied() != Some("transmission") {
        return Err(Error::DataFormat("second column must be `transmission`".into()));
    }
    let has_sigma = match cols.len() {
        2 => false,
        3 if cols[2] == "sigma" => true,
        _ => {
            return Err(Error::DataFormat(format!(
                "unexpected spectrum columns: {header}"
            )))
        }
    };

    let mut detunings = Vec::new();
    let mut transmissions = Vec::new();
    let mut sigma = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        let want = if has_sigma { 3 } else { 2 };
        if fields.len() != want {
            return Err(Error::DataFormat(format!(
                "line {}: expected {want} fields, got {}",
                i + 2,
                fields.len()
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| {
                Error::DataFormat(format!("line {}: cannot parse {what} from {s:?}", i + 2))
            })
        };
        let x = parse(fields[0], "axis value")?;
        detunings.push(match axis {
            SpectrumAxis::DetuningHz => TAU * x,
            SpectrumAxis::WavelengthNm => -TAU * C_LIGHT / (x * 1e-9),
        });
        transmissions.push(parse(fields[1], "transmission")?);
        if has_sigma {
            sigma.push(parse(fields[2], "sigma")?);
        }
    }
    let trace = SpectrumTrace::new(detunings, transmissions, has_sigma.then_some(sigma))?;
    Ok((axis, trace))
}

pub const SWEEP_HEADER: &str = "pump_wavelength_nm,pump_transmission,beta_sq,delta_pm_hz,branch";

pub fn write_sweep_csv<W: Write>(mut w: W, points: &[SweepPoint]) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_f64(p.pump_wavelength * 1e9),
            fmt_f64(p.pump_transmission),
            fmt_f64(p.beta_sq),
            fmt_f64(p.delta_pm / TAU),
            p.branch.as_str()
        )?;
    }
    Ok(())
}

pub const MAP_HEADER: &str = "pump_wavelength_nm,seed_wavelength_nm,p_out_w";

/// Long-form map: one row per (pump, seed) grid point.
pub fn write_map_csv<W: Write>(mut w: W, map: &FwmMap) -> Result<()> {
    writeln!(w, "{MAP_HEADER}")?;
    for (i, pump) in map.pump_wavelengths.iter().enumerate() {
        for (j, seed) in map.seed_wavelengths.iter().enumerate() {
            writeln!(
                w,
                "{},{},{}",
                fmt_f64(pump * 1e9),
                fmt_f64(seed * 1e9),
                fmt_f64(map.at(i, j))
            )?;
        }
    }
    Ok(())
}

pub const SUPPRESSION_HEADER: &str = "pump_wavelength_nm,suppression_ratio";

pub fn write_suppression_csv<W: Write>(mut w: W, trace: &SuppressionTrace) -> Result<()> {
    writeln!(w, "{SUPPRESSION_HEADER}")?;
    for (l, r) in trace.pump_wavelengths.iter().zip(&trace.ratios) {
        writeln!(w, "{},{}", fmt_f64(l * 1e9), fmt_f64(*r))?;
    }
    Ok(())
}

pub const TRAJECTORY_HEADER: &str =
    "time_s,re_a,im_a,re_b,im_b,re_c,im_c,re_d,im_d,n_a,n_b,n_c,n_d";

pub fn write_trajectory_csv<W: Write>(mut w: W, trajectory: &[ModeState]) -> Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for s in trajectory {
        let amps = s.amplitudes();
        let n = s.photon_numbers();
        write!(w, "{}", fmt_f64(s.time))?;
        for a in amps {
            write!(w, ",{},{}", fmt_f64(a.re), fmt_f64(a.im))?;
        }
        for v in n {
            write!(w, ",{}", fmt_f64(v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}
