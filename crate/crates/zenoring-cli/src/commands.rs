//! Subcommand implementations: each maps one library operation onto files
//! under the output directory.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use zenoring::config::SystemConfig;
use zenoring::dynamics::{
    integrate, output_power, probe_transmission, steady_state, CmtSystem, ExternalDrives,
    ModeState, RotatingFrame, SteadyStateResult,
};
use zenoring::fit::{fit_lorentzian, fit_zeno, FitReport, ZenoFixed};
use zenoring::io::{
    fmt_f64, read_spectrum_csv, write_map_csv, write_spectrum_csv, write_suppression_csv,
    write_sweep_csv, write_trajectory_csv, SpectrumAxis,
};
use zenoring::model::{
    make_drive, wavelength_to_omega, DriveField, NonlinearCouplings, SpectrumTrace,
};
use zenoring::steady::{
    fwm_output, fwm_suppressed, linear_transmission, pump_beta, PumpFieldSolution,
};
use zenoring::thermal::{
    fwm_map_from_sweep, probe_spectra, pump_sweep, suppression_trace,
};

use crate::manifest::RunManifest;
use crate::{CliError, FitModel, Scenario};

const TAU: f64 = std::f64::consts::TAU;

fn create(out: &Path, name: &str, manifest: &mut RunManifest) -> Result<BufWriter<File>, CliError> {
    let file = File::create(out.join(name))?;
    manifest.record(name);
    Ok(BufWriter::new(file))
}

pub fn spectrum(
    config: &SystemConfig,
    out: &Path,
    pump_wavelength_nm: Option<f64>,
    pump_power_mw: Option<f64>,
    span_kappa: f64,
    points: usize,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    if points < 2 || !(span_kappa > 0.0) {
        return Err(CliError::Validation(
            "spectrum needs --points >= 2 and --span-kappa > 0".into(),
        ));
    }
    let lambda = pump_wavelength_nm.map(|nm| nm * 1e-9).unwrap_or(config.pump_wavelength);
    let power = pump_power_mw.map(|mw| mw * 1e-3).unwrap_or(config.pump_power);
    let omega_pump = wavelength_to_omega(lambda)?;
    let pump = make_drive(&config.modes.b, omega_pump, power)?;
    let nb = pump_beta(&pump, &config.modes.b).photon_number;
    let g2sq_nb = config.couplings.g2 * config.couplings.g2 * nb;
    let delta_pm = config.modes.d.omega0 - omega_pump - config.modes.c.omega0;

    let kappa_c = config.modes.c.kappa_total();
    let half = span_kappa * kappa_c;
    let dx = 2.0 * half / (points - 1) as f64;
    let mut detunings = Vec::with_capacity(points);
    let mut transmissions = Vec::with_capacity(points);
    for i in 0..points {
        let delta_c = -half + i as f64 * dx;
        let point =
            linear_transmission(delta_c, delta_pm + delta_c, g2sq_nb, &config.modes.c, &config.modes.d);
        detunings.push(delta_c);
        transmissions.push(point.transmission);
    }
    let trace = SpectrumTrace::new(detunings, transmissions, None)?;
    write_spectrum_csv(create(out, "spectrum.csv", manifest)?, &trace)?;
    Ok(())
}

pub fn sweep(
    config: &SystemConfig,
    out: &Path,
    plan_name: &str,
    spectra: bool,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let plan = config.sweep(plan_name)?;
    let points = pump_sweep(plan, &config.modes, &config.thermal)?;
    write_sweep_csv(create(out, "sweep.csv", manifest)?, &points)?;

    if spectra {
        let probe_omegas: Vec<f64> = plan
            .scan_wavelengths()
            .iter()
            .map(|&l| wavelength_to_omega(l))
            .collect::<zenoring::Result<_>>()?;
        let steps =
            probe_spectra(&points, &probe_omegas, &config.modes, &config.thermal, config.couplings);
        for (i, step) in steps.iter().enumerate() {
            let name = format!("spectrum_step_{i:04}.csv");
            write_spectrum_csv(create(out, &name, manifest)?, &step.trace)?;
        }
    }
    Ok(())
}

pub fn fwm_map(
    config: &SystemConfig,
    out: &Path,
    plan_name: &str,
    twm_enabled: bool,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let plan = config.sweep(plan_name)?;
    let sweep = pump_sweep(plan, &config.modes, &config.thermal)?;
    let map = fwm_map_from_sweep(
        &sweep,
        plan,
        &config.modes,
        &config.thermal,
        config.couplings,
        twm_enabled,
    )?;
    let name = if twm_enabled { "fwm_map_twm_on.csv" } else { "fwm_map_twm_off.csv" };
    write_map_csv(create(out, name, manifest)?, &map)?;
    Ok(())
}

pub fn suppression(
    config: &SystemConfig,
    out: &Path,
    plan_name: &str,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let plan = config.sweep(plan_name)?;
    let sweep = pump_sweep(plan, &config.modes, &config.thermal)?;
    let build = |twm| {
        fwm_map_from_sweep(&sweep, plan, &config.modes, &config.thermal, config.couplings, twm)
    };
    let map_off = build(false)?;
    let map_on = build(true)?;
    let trace = suppression_trace(&map_off, &map_on)?;
    write_suppression_csv(create(out, "suppression.csv", manifest)?, &trace)?;
    println!(
        "peak suppression ratio: {} at pump wavelength {} nm",
        fmt_f64(trace.peak_ratio),
        fmt_f64(trace.peak_wavelength * 1e9)
    );
    Ok(())
}

struct ComparisonRow {
    quantity: &'static str,
    analytic: f64,
    ode: f64,
}

fn print_table(rows: &[ComparisonRow]) {
    println!("{:<26} {:>24} {:>24} {:>12}", "quantity", "analytic", "ode", "rel_error");
    for row in rows {
        let denom = row.analytic.abs().max(row.ode.abs()).max(f64::MIN_POSITIVE);
        let rel = (row.ode - row.analytic).abs() / denom;
        println!(
            "{:<26} {:>24} {:>24} {:>12.3e}",
            row.quantity,
            fmt_f64(row.analytic),
            fmt_f64(row.ode),
            rel
        );
    }
}

fn require_converged(result: &SteadyStateResult) -> Result<(), CliError> {
    if !result.converged {
        return Err(CliError::NonConvergence(format!(
            "steady state not reached within max_time (residual {:.3e}); raise \
             integrator.max_time_s or relax integrator.steady_threshold",
            result.residual
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn steady(
    config: &SystemConfig,
    out: &Path,
    scenario: Scenario,
    detuning_kappa: f64,
    pump_wavelength_nm: Option<f64>,
    trajectory: bool,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let lambda = pump_wavelength_nm.map(|nm| nm * 1e-9).unwrap_or(config.pump_wavelength);
    let omega_pump = wavelength_to_omega(lambda)?;
    let modes = &config.modes;
    let pump = make_drive(&modes.b, omega_pump, config.pump_power)?;
    let nb = pump_beta(&pump, &modes.b).photon_number;
    let settings = config.integrator;

    let mut rows = Vec::new();
    let run = |sys: &CmtSystem,
               drives: &[DriveField],
               frame: &RotatingFrame|
     -> Result<SteadyStateResult, CliError> {
        let ext = ExternalDrives::from_drives(drives, frame)?;
        let result = steady_state(sys, &ext, frame, &settings)?;
        require_converged(&result)?;
        Ok(result)
    };

    let dump: (CmtSystem, Vec<DriveField>, RotatingFrame);
    match scenario {
        Scenario::Pump => {
            let frame = RotatingFrame::pump_only(omega_pump);
            let sys = CmtSystem::from_parts(modes, NonlinearCouplings::new(0.0, 0.0).unwrap());
            let result = run(&sys, &[pump], &frame)?;
            rows.push(ComparisonRow {
                quantity: "pump_photon_number",
                analytic: nb,
                ode: result.state.photon_number(zenoring::ModeLabel::B),
            });
            rows.push(ComparisonRow {
                quantity: "pump_transmission",
                analytic: zenoring::steady::zeno_transmission(
                    modes.b.omega0 - omega_pump,
                    0.0,
                    0.0,
                    modes.b.kappa_total(),
                    modes.b.kappa_external,
                    1.0,
                ),
                ode: probe_transmission(&result.state, &pump, &modes.b),
            });
            dump = (sys, vec![pump], frame);
        }
        Scenario::Probe => {
            let delta_c = detuning_kappa * modes.c.kappa_total();
            let omega_probe = modes.c.omega0 - delta_c;
            let frame = RotatingFrame::from_pump_and_probe(omega_pump, omega_probe);
            let probe = make_drive(&modes.c, omega_probe, config.probe_power)?;
            let sys = CmtSystem::from_parts(
                modes,
                NonlinearCouplings::new(config.couplings.g2, 0.0).unwrap(),
            );
            let result = run(&sys, &[pump, probe], &frame)?;
            let delta_d = modes.d.omega0 - omega_pump - omega_probe;
            let g2sq_nb = config.couplings.g2 * config.couplings.g2 * nb;
            rows.push(ComparisonRow {
                quantity: "probe_transmission",
                analytic: linear_transmission(delta_c, delta_d, g2sq_nb, &modes.c, &modes.d)
                    .transmission,
                ode: probe_transmission(&result.state, &probe, &modes.c),
            });
            dump = (sys, vec![pump, probe], frame);
        }
        Scenario::Fwm | Scenario::FwmTwm => {
            let delta_a = detuning_kappa * modes.a.kappa_total();
            let omega_seed = modes.a.omega0 - delta_a;
            let frame = RotatingFrame::from_pump_and_seed(omega_pump, omega_seed);
            let seed = make_drive(&modes.a, omega_seed, config.seed_power)?;
            let delta_c = modes.c.omega0 - frame.frame_c;
            let beta = PumpFieldSolution::from_photon_number(nb);
            let p_eq = fwm_output(
                delta_a,
                delta_c,
                &beta,
                config.couplings.g3,
                &seed,
                &modes.a,
                &modes.c,
            )?;

            let sys_off = CmtSystem::from_parts(
                modes,
                NonlinearCouplings::new(0.0, config.couplings.g3).unwrap(),
            );
            let off = run(&sys_off, &[pump, seed], &frame)?;
            let p_off = output_power(&off.state, &modes.c, frame.frame_c);
            rows.push(ComparisonRow { quantity: "fwm_power_w", analytic: p_eq, ode: p_off });

            if scenario == Scenario::FwmTwm {
                let sys_on = CmtSystem::from_parts(modes, config.couplings);
                let on = run(&sys_on, &[pump, seed], &frame)?;
                let p_on = output_power(&on.state, &modes.c, frame.frame_c);
                let delta_d = modes.d.omega0 - omega_pump - frame.frame_c;
                let g2sq_nb = config.couplings.g2 * config.couplings.g2 * nb;
                let expected =
                    fwm_suppressed(p_eq, delta_c, delta_d, g2sq_nb, &modes.c, &modes.d);
                rows.push(ComparisonRow {
                    quantity: "fwm_power_suppressed_w",
                    analytic: expected.p_out_suppressed,
                    ode: p_on,
                });
                rows.push(ComparisonRow {
                    quantity: "suppression_ratio",
                    analytic: expected.suppression_ratio,
                    ode: p_off / p_on,
                });
                dump = (sys_on, vec![pump, seed], frame);
            } else {
                dump = (sys_off, vec![pump, seed], frame);
            }
        }
    }

    print_table(&rows);

    if trajectory {
        let (sys, drives, frame) = dump;
        let ext = ExternalDrives::from_drives(&drives, &frame)?;
        let kappa_min = modes.a.kappa_total().min(modes.b.kappa_total()).min(
            modes.c.kappa_total().min(modes.d.kappa_total()),
        );
        let horizon = 10.0 / kappa_min;
        let traj = integrate(&ModeState::vacuum(), &sys, &ext, &frame, &settings, horizon)?;
        write_trajectory_csv(create(out, "trajectory.csv", manifest)?, &traj)?;
    }
    Ok(())
}

pub fn fit(
    out: &Path,
    input: &PathBuf,
    model: FitModel,
    fixed_kappa_c_hz: Option<f64>,
    fixed_kappa_c1_hz: Option<f64>,
    fixed_center_hz: Option<f64>,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let file = File::open(input)
        .map_err(|e| CliError::Validation(format!("cannot open {}: {e}", input.display())))?;
    let (axis, trace) = read_spectrum_csv(BufReader::new(file))?;

    let report: FitReport = match model {
        FitModel::Lorentzian => {
            if fixed_kappa_c_hz.is_some() || fixed_kappa_c1_hz.is_some() || fixed_center_hz.is_some()
            {
                return Err(CliError::Validation(
                    "--fixed-* options apply only to the zeno model".into(),
                ));
            }
            fit_lorentzian(&trace, None)?
        }
        FitModel::Zeno => {
            if axis != SpectrumAxis::DetuningHz {
                return Err(CliError::Validation(
                    "the zeno model requires a detuning_hz axis; fit the pump-off trace first \
                     and convert the axis"
                        .into(),
                ));
            }
            let (kc, kc1, center) = match (fixed_kappa_c_hz, fixed_kappa_c1_hz, fixed_center_hz) {
                (Some(a), Some(b), Some(c)) => (a, b, c),
                _ => {
                    return Err(CliError::Validation(
                        "the zeno model needs --fixed-kappa-c-hz, --fixed-kappa-c1-hz and \
                         --fixed-center-hz from a pump-off lorentzian fit"
                            .into(),
                    ))
                }
            };
            let fixed =
                ZenoFixed { kappa_c: TAU * kc, kappa_c1: TAU * kc1, delta0: TAU * center };
            fit_zeno(&trace, &fixed, None)?
        }
    };

    let mut w = create(out, "fit_report.json", manifest)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    w.write_all(json.as_bytes())?;
    w.write_all(b"\n")?;
    drop(w);

    for p in &report.parameters {
        println!("{} = {} +- {} {}", p.name, fmt_f64(p.value), fmt_f64(p.uncertainty), p.unit);
    }
    println!(
        "residual_rms = {}  converged = {}  iterations = {}",
        fmt_f64(report.residual_rms),
        report.converged,
        report.iterations
    );

    if !report.converged {
        return Err(CliError::NonConvergence(
            "fit did not converge; the report was still written".into(),
        ));
    }
    Ok(())
}
