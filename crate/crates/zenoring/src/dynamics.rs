//! Time-domain integration of the classical coupled-mode equations.
//!
//! In a rotating frame fixed by the drive lasers the equations of motion are
//! autonomous:
//!
//! ```text
//! da/dt = (i Da - ka) a - i g3 conj(c) b^2            + eps_a
//! db/dt = (i Db - kb) b - 2 i g3 conj(b) a c - i g2 conj(c) d + eps_b
//! dc/dt = (i Dc - kc) c - i g3 conj(a) b^2   - i g2 conj(b) d + eps_c
//! dd/dt = (i Dd - kd) d - i g2 b c                    + eps_d
//! ```
//!
//! with `Do = frame_o - omega_{o,0}`. The frame must close both mixing
//! processes (`frame_a + frame_c = 2 frame_b`, `frame_d = frame_b + frame_c`)
//! and every drive must sit exactly on its frame frequency, so that all
//! explicit time dependence drops out.
//!
//! Steady states found here are the brute-force oracle for the closed forms
//! in [`crate::steady`]; the lossless undriven flow conserves the
//! Manley-Rowe combinations and the rotating-frame energy, which pins down
//! the relative factors in the mixing terms.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{DriveField, ModeLabel, ModeQuartet, NonlinearCouplings, OpticalMode, HBAR};

/// Acceptable mismatch (rad/s) between a drive frequency and its rotating
/// frame component. A few rad/s covers f64 rounding at optical frequencies
/// while staying many orders below any decay rate.
const FRAME_ALIGN_TOL: f64 = 1e4;

/// Mode parameters as the integrator sees them. Unlike
/// [`crate::model::OpticalMode`] this allows zero loss, so conservation tests
/// can switch dissipation off entirely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmtMode {
    pub omega0: f64,
    pub kappa_total: f64,
    pub kappa_external: f64,
}

impl From<&OpticalMode> for CmtMode {
    fn from(m: &OpticalMode) -> Self {
        Self { omega0: m.omega0, kappa_total: m.kappa_total(), kappa_external: m.kappa_external }
    }
}

/// The full parameter set entering the equations of motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmtSystem {
    /// Modes in label order a, b, c, d.
    pub modes: [CmtMode; 4],
    pub g2: f64,
    pub g3: f64,
}

impl CmtSystem {
    pub fn from_parts(modes: &ModeQuartet, couplings: NonlinearCouplings) -> Self {
        Self {
            modes: [(&modes.a).into(), (&modes.b).into(), (&modes.c).into(), (&modes.d).into()],
            g2: couplings.g2,
            g3: couplings.g3,
        }
    }

    fn kappa_min_positive(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.kappa_total)
            .filter(|&k| k > 0.0)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Rotating-frame frequencies for the four modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatingFrame {
    pub frame_a: f64,
    pub frame_b: f64,
    pub frame_c: f64,
    pub frame_d: f64,
}

impl RotatingFrame {
    /// Validate user-supplied frame frequencies against the two closure
    /// relations that make the equations autonomous.
    pub fn new(frame_a: f64, frame_b: f64, frame_c: f64, frame_d: f64) -> Result<Self> {
        let tol = 1e-12 * frame_b.abs() + 1.0;
        let fwm = (frame_a + frame_c - 2.0 * frame_b).abs();
        let twm = (frame_d - frame_b - frame_c).abs();
        if fwm > tol {
            return Err(Error::Config(format!(
                "rotating frame violates FWM closure: |frame_a + frame_c - 2 frame_b| = {fwm:.3e} rad/s"
            )));
        }
        if twm > tol {
            return Err(Error::Config(format!(
                "rotating frame violates TWM closure: |frame_d - frame_b - frame_c| = {twm:.3e} rad/s"
            )));
        }
        Ok(Self { frame_a, frame_b, frame_c, frame_d })
    }

    /// Frame for a pump on `b` and a probe (or generated light) on `c`.
    pub fn from_pump_and_probe(omega_pump: f64, omega_probe: f64) -> Self {
        let frame_c = omega_probe;
        Self {
            frame_a: 2.0 * omega_pump - omega_probe,
            frame_b: omega_pump,
            frame_c,
            frame_d: omega_pump + frame_c,
        }
    }

    /// Frame for a pump on `b` and a seed on `a`; mode `c` rotates at the
    /// FWM-generated frequency `2 omega_pump - omega_seed`.
    pub fn from_pump_and_seed(omega_pump: f64, omega_seed: f64) -> Self {
        let frame_c = 2.0 * omega_pump - omega_seed;
        Self { frame_a: omega_seed, frame_b: omega_pump, frame_c, frame_d: omega_pump + frame_c }
    }

    /// Degenerate frame for pump-only scenarios.
    pub fn pump_only(omega_pump: f64) -> Self {
        Self::from_pump_and_probe(omega_pump, omega_pump)
    }

    pub fn frame(&self, label: ModeLabel) -> f64 {
        match label {
            ModeLabel::A => self.frame_a,
            ModeLabel::B => self.frame_b,
            ModeLabel::C => self.frame_c,
            ModeLabel::D => self.frame_d,
        }
    }
}

/// Per-mode drive flux amplitudes, already expressed in the rotating frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExternalDrives {
    /// Flux amplitudes in label order (sqrt(photons)/s).
    pub epsilon: [f64; 4],
}

impl ExternalDrives {
    pub fn none() -> Self {
        Self::default()
    }

    /// Collect laser drives, checking each is stationary in `frame`.
    pub fn from_drives(drives: &[DriveField], frame: &RotatingFrame) -> Result<Self> {
        let mut epsilon = [0.0; 4];
        for d in drives {
            let mismatch = (d.omega_drive - frame.frame(d.target)).abs();
            if mismatch > FRAME_ALIGN_TOL {
                return Err(Error::Config(format!(
                    "drive on mode {} at {:.6e} rad/s is not stationary in the rotating frame \
                     ({:.6e} rad/s; mismatch {mismatch:.3e} rad/s)",
                    d.target,
                    d.omega_drive,
                    frame.frame(d.target)
                )));
            }
            epsilon[d.target.index()] += d.epsilon;
        }
        Ok(Self { epsilon })
    }
}

/// Instantaneous state of the four mode amplitudes (sqrt(photons)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeState {
    pub time: f64,
    pub alpha_a: Complex64,
    pub alpha_b: Complex64,
    pub alpha_c: Complex64,
    pub alpha_d: Complex64,
}

impl ModeState {
    pub fn vacuum() -> Self {
        Self::from_amplitudes(0.0, [Complex64::ZERO; 4])
    }

    pub fn from_amplitudes(time: f64, alpha: [Complex64; 4]) -> Self {
        Self { time, alpha_a: alpha[0], alpha_b: alpha[1], alpha_c: alpha[2], alpha_d: alpha[3] }
    }

    pub fn amplitudes(&self) -> [Complex64; 4] {
        [self.alpha_a, self.alpha_b, self.alpha_c, self.alpha_d]
    }

    pub fn amplitude(&self, label: ModeLabel) -> Complex64 {
        self.amplitudes()[label.index()]
    }

    /// Photon number `|alpha_o|^2` of one mode.
    pub fn photon_number(&self, label: ModeLabel) -> f64 {
        self.amplitude(label).norm_sqr()
    }

    pub fn photon_numbers(&self) -> [f64; 4] {
        let a = self.amplitudes();
        [a[0].norm_sqr(), a[1].norm_sqr(), a[2].norm_sqr(), a[3].norm_sqr()]
    }
}

/// Adaptive integrator controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    /// Relative local error tolerance.
    pub rel_tol: f64,
    /// Absolute local error tolerance (sqrt(photons)).
    pub abs_tol: f64,
    /// Largest permitted step (s).
    pub max_step: f64,
    /// Steady-state criterion: integration stops once
    /// `|d alpha_o / dt| / (kappa_min (|alpha_o| + floor)) < steady_threshold`
    /// for every mode.
    pub steady_threshold: f64,
    /// Model-time budget for steady-state searches (s).
    pub max_time: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-8,
            max_step: 1e-9,
            steady_threshold: 1e-9,
            max_time: 1e-6,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("steady_threshold", self.steady_threshold),
            ("max_time", self.max_time),
        ];
        for (name, v) in fields {
            if !(v > 0.0) {
                return Err(Error::Config(format!(
                    "integrator.{name} must be positive (got {v:e})"
                )));
            }
        }
        if self.steady_threshold >= 1.0 {
            return Err(Error::Config(format!(
                "integrator.steady_threshold must be < 1 (got {})",
                self.steady_threshold
            )));
        }
        Ok(())
    }
}

/// Precomputed right-hand-side context.
#[derive(Debug, Clone, Copy)]
struct RhsCtx {
    /// `i Delta_o - kappa_o` per mode.
    lin: [Complex64; 4],
    eps: [f64; 4],
    g2: f64,
    g3: f64,
}

impl RhsCtx {
    fn new(sys: &CmtSystem, drives: &ExternalDrives, frame: &RotatingFrame) -> Self {
        let frames = [frame.frame_a, frame.frame_b, frame.frame_c, frame.frame_d];
        let mut lin = [Complex64::ZERO; 4];
        for i in 0..4 {
            lin[i] = Complex64::new(-sys.modes[i].kappa_total, frames[i] - sys.modes[i].omega0);
        }
        Self { lin, eps: drives.epsilon, g2: sys.g2, g3: sys.g3 }
    }

    #[inline]
    fn eval(&self, y: &[Complex64; 4]) -> [Complex64; 4] {
        let [a, b, c, d] = *y;
        let i = Complex64::I;
        let b2 = b * b;
        [
            self.lin[0] * a - i * self.g3 * c.conj() * b2 + self.eps[0],
            self.lin[1] * b
                - i * 2.0 * self.g3 * b.conj() * a * c
                - i * self.g2 * c.conj() * d
                + self.eps[1],
            self.lin[2] * c - i * self.g3 * a.conj() * b2 - i * self.g2 * b.conj() * d
                + self.eps[2],
            self.lin[3] * d - i * self.g2 * b * c + self.eps[3],
        ]
    }
}

/// Time derivative of the four mode amplitudes at `state`.
pub fn cmt_rhs(
    state: &ModeState,
    sys: &CmtSystem,
    drives: &ExternalDrives,
    frame: &RotatingFrame,
) -> [Complex64; 4] {
    RhsCtx::new(sys, drives, frame).eval(&state.amplitudes())
}

// Dormand-Prince 5(4) coefficients.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the 5th- and 4th-order solutions.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn axpy(y: &[Complex64; 4], h: f64, terms: &[(f64, &[Complex64; 4])]) -> [Complex64; 4] {
    let mut out = *y;
    for (coeff, k) in terms {
        let ch = coeff * h;
        for i in 0..4 {
            out[i] += ch * k[i];
        }
    }
    out
}

struct StepOutcome {
    y_new: [Complex64; 4],
    k_last: [Complex64; 4],
    error: f64,
}

/// One trial Dormand-Prince step from `y` with derivative `k1` already known.
fn dopri5_step(ctx: &RhsCtx, y: &[Complex64; 4], k1: &[Complex64; 4], h: f64, settings: &IntegratorSettings) -> StepOutcome {
    let k2 = ctx.eval(&axpy(y, h, &[(A21, k1)]));
    let k3 = ctx.eval(&axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = ctx.eval(&axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = ctx.eval(&axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = ctx.eval(&axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y_new = axpy(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = ctx.eval(&y_new);

    // Scaled RMS norm of the embedded error estimate over all 8 real
    // components.
    let mut sum = 0.0;
    for i in 0..4 {
        let err = h
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let scale = settings.abs_tol
            + settings.rel_tol * y[i].norm().max(y_new[i].norm());
        let re = err.re / scale;
        let im = err.im / scale;
        sum += re * re + im * im;
    }
    StepOutcome { y_new, k_last: k7, error: (sum / 8.0).sqrt() }
}

/// Initial step guess following the usual `||y|| / ||f||` heuristic.
fn initial_step(y: &[Complex64; 4], f: &[Complex64; 4], settings: &IntegratorSettings, span: f64) -> f64 {
    let norm = |v: &[Complex64; 4]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let d0 = norm(y);
    let d1 = norm(f);
    let guess = if d1 > 0.0 && d0 > 0.0 {
        0.01 * d0 / d1
    } else {
        1e-6 * span
    };
    guess.min(settings.max_step).min(span).max(1e-15 * span)
}

struct Stepper<'a> {
    ctx: RhsCtx,
    settings: &'a IntegratorSettings,
    t: f64,
    y: [Complex64; 4],
    dydt: [Complex64; 4],
    h: f64,
    t_end: f64,
    /// Sum of accepted local error estimates in amplitude units.
    accumulated_error: f64,
    steps: u64,
}

impl<'a> Stepper<'a> {
    fn new(
        state0: &ModeState,
        sys: &CmtSystem,
        drives: &ExternalDrives,
        frame: &RotatingFrame,
        settings: &'a IntegratorSettings,
        t_end: f64,
    ) -> Result<Self> {
        settings.validate()?;
        if !(t_end > state0.time) {
            return Err(Error::Domain(format!(
                "integration horizon {t_end:e} s must exceed the initial time {:e} s",
                state0.time
            )));
        }
        let ctx = RhsCtx::new(sys, drives, frame);
        let y = state0.amplitudes();
        let dydt = ctx.eval(&y);
        let h = initial_step(&y, &dydt, settings, t_end - state0.time);
        Ok(Self {
            ctx,
            settings,
            t: state0.time,
            y,
            dydt,
            h,
            t_end,
            accumulated_error: 0.0,
            steps: 0,
        })
    }

    fn done(&self) -> bool {
        self.t >= self.t_end
    }

    /// Advance by one accepted step. Returns the new state.
    fn advance(&mut self) -> Result<ModeState> {
        let span = self.t_end - self.t;
        loop {
            let h_min = 1e-14 * (self.t_end.abs() + self.t.abs()).max(1e-300);
            if self.h < h_min {
                return Err(Error::StepUnderflow { t: self.t, h: self.h });
            }
            let clipped = self.h >= span;
            let h = if clipped { span } else { self.h };
            let out = dopri5_step(&self.ctx, &self.y, &self.dydt, h, self.settings);
            if out.error <= 1.0 {
                self.t = if clipped { self.t_end } else { self.t + h };
                // Amplitude-scale error actually committed this step.
                let scale = self
                    .y
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0f64, f64::max)
                    .mul_add(self.settings.rel_tol, self.settings.abs_tol);
                self.accumulated_error += out.error * scale;
                self.y = out.y_new;
                self.dydt = out.k_last;
                self.steps += 1;
                let factor = if out.error > 0.0 {
                    (0.9 * out.error.powf(-0.2)).clamp(0.2, 5.0)
                } else {
                    5.0
                };
                self.h = (h * factor).min(self.settings.max_step);
                return Ok(ModeState::from_amplitudes(self.t, self.y));
            }
            let factor = (0.9 * out.error.powf(-0.2)).clamp(0.2, 1.0);
            self.h = h * factor;
        }
    }
}

/// Integrate the equations of motion from `state0` to `t_end`, returning the
/// trajectory at every accepted step (the initial state included).
pub fn integrate(
    state0: &ModeState,
    sys: &CmtSystem,
    drives: &ExternalDrives,
    frame: &RotatingFrame,
    settings: &IntegratorSettings,
    t_end: f64,
) -> Result<Vec<ModeState>> {
    let mut stepper = Stepper::new(state0, sys, drives, frame, settings, t_end)?;
    let mut trajectory = vec![*state0];
    while !stepper.done() {
        trajectory.push(stepper.advance()?);
    }
    Ok(trajectory)
}

/// Result of a steady-state search.
#[derive(Debug, Clone, Copy)]
pub struct SteadyStateResult {
    pub state: ModeState,
    /// Whether the steady criterion was met before `max_time`.
    pub converged: bool,
    /// Last value of the convergence metric.
    pub residual: f64,
    /// Accumulated local-error estimate (sqrt(photons)); a generous bound on
    /// the integration error of the returned amplitudes.
    pub error_estimate: f64,
    pub steps: u64,
}

/// Relax the system from vacuum until the steady criterion is met or
/// `settings.max_time` elapses. A timeout is reported, not an error.
pub fn steady_state(
    sys: &CmtSystem,
    drives: &ExternalDrives,
    frame: &RotatingFrame,
    settings: &IntegratorSettings,
) -> Result<SteadyStateResult> {
    let state0 = ModeState::vacuum();
    let mut stepper = Stepper::new(&state0, sys, drives, frame, settings, settings.max_time)?;
    let kappa_min = sys.kappa_min_positive();
    // Per-field linear rates |i Delta_o - kappa_o|: a residual derivative on
    // a strongly detuned mode is rotation of a tiny offset, not distance to
    // the fixed point, so each field is normalized by its own rate (floored
    // at kappa_min).
    let ctx = RhsCtx::new(sys, drives, frame);
    let rates: [f64; 4] = std::array::from_fn(|i| ctx.lin[i].norm().max(kappa_min));
    let mut residual = f64::INFINITY;
    while !stepper.done() {
        let state = stepper.advance()?;
        residual = convergence_metric(&stepper.y, &stepper.dydt, &rates, kappa_min, settings);
        if residual < settings.steady_threshold {
            return Ok(SteadyStateResult {
                state,
                converged: true,
                residual,
                error_estimate: stepper.accumulated_error,
                steps: stepper.steps,
            });
        }
    }
    Ok(SteadyStateResult {
        state: ModeState::from_amplitudes(stepper.t, stepper.y),
        converged: false,
        residual,
        error_estimate: stepper.accumulated_error,
        steps: stepper.steps,
    })
}

fn convergence_metric(
    y: &[Complex64; 4],
    dydt: &[Complex64; 4],
    rates: &[f64; 4],
    kappa_min: f64,
    settings: &IntegratorSettings,
) -> f64 {
    if !kappa_min.is_finite() {
        return f64::INFINITY;
    }
    let scale = y.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    let floor = 1e-6 * scale + settings.abs_tol;
    let mut metric = 0.0f64;
    for i in 0..4 {
        metric = metric.max(dydt[i].norm() / (rates[i] * (y[i].norm() + floor)));
    }
    metric
}

/// Manley-Rowe photon-bookkeeping invariants of the lossless undriven flow:
/// `N1 = n_a + n_b + n_c + 2 n_d` and `N2 = 2 n_a + n_b + n_d`. Each FWM
/// event changes the photon numbers by (+1, -2, +1, 0) and each TWM event by
/// (0, -1, -1, +1); both combinations annihilate both change vectors.
pub fn manley_rowe(state: &ModeState) -> (f64, f64) {
    let [na, nb, nc, nd] = state.photon_numbers();
    (na + nb + nc + 2.0 * nd, 2.0 * na + nb + nd)
}

/// Rotating-frame energy (divided by hbar) of the classical fields:
/// `H = -sum_o Delta_o n_o + 2 g2 Re(b* c* d) + 2 g3 Re(b*^2 a c)`.
/// Conserved by the lossless undriven flow.
pub fn rotating_energy(state: &ModeState, sys: &CmtSystem, frame: &RotatingFrame) -> f64 {
    let [a, b, c, d] = state.amplitudes();
    let frames = [frame.frame_a, frame.frame_b, frame.frame_c, frame.frame_d];
    let mut h = 0.0;
    for (i, z) in state.amplitudes().iter().enumerate() {
        h -= (frames[i] - sys.modes[i].omega0) * z.norm_sqr();
    }
    h += 2.0 * sys.g2 * (b.conj() * c.conj() * d).re;
    h += 2.0 * sys.g3 * (b.conj() * b.conj() * a * c).re;
    h
}

/// Waveguide power transmission of a probe driving `mode` in steady state:
/// `|1 - 2 kappa_ext alpha / epsilon|^2`.
pub fn probe_transmission(state: &ModeState, probe: &DriveField, mode: &OpticalMode) -> f64 {
    let alpha = state.amplitude(probe.target);
    debug_assert_eq!(probe.target, mode.label);
    (1.0 - 2.0 * mode.kappa_external * alpha / probe.epsilon).norm_sqr()
}

/// Power emitted into the waveguide from one mode radiating at `omega_out`:
/// `P = hbar omega 2 kappa_ext |alpha|^2`.
pub fn output_power(state: &ModeState, mode: &OpticalMode, omega_out: f64) -> f64 {
    HBAR * omega_out * 2.0 * mode.kappa_external * state.photon_number(mode.label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_drive, NonlinearCouplings, OpticalMode};
    use crate::steady;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const C_TARGET: f64 = 4.8738;

    fn paper_modes() -> ModeQuartet {
        let telecom = |label: ModeLabel, lambda: f64| {
            OpticalMode::from_lab(label, lambda, 210e-12, 0.5).unwrap()
        };
        ModeQuartet::new(
            telecom(ModeLabel::A, 1546e-9),
            telecom(ModeLabel::B, 1550e-9),
            telecom(ModeLabel::C, 1554.0207522697795e-9),
            OpticalMode::from_lab(ModeLabel::D, 774.9551528545114e-9, 45e-12, 0.5).unwrap(),
        )
        .unwrap()
    }

    fn tight() -> IntegratorSettings {
        // The residual metric bottoms out at the local-error noise floor, so
        // the steady threshold must sit above what rel_tol/abs_tol allow.
        IntegratorSettings {
            rel_tol: 1e-12,
            abs_tol: 1e-12,
            steady_threshold: 1e-9,
            ..Default::default()
        }
    }

    #[test]
    fn vacuum_is_a_fixed_point() {
        let modes = paper_modes();
        let sys = CmtSystem::from_parts(&modes, NonlinearCouplings::new(1e6, 1.0).unwrap());
        let frame = RotatingFrame::pump_only(modes.b.omega0);
        let rhs = cmt_rhs(&ModeState::vacuum(), &sys, &ExternalDrives::none(), &frame);
        for k in rhs {
            assert_eq!(k, Complex64::ZERO);
        }
    }

    #[test]
    fn frame_closure_is_validated() {
        assert!(RotatingFrame::new(1.0e15, 1.0e15, 1.0e15, 2.0e15).is_ok());
        assert!(RotatingFrame::new(1.0e15, 1.0e15, 1.001e15, 2.0e15).is_err());
        assert!(RotatingFrame::new(1.0e15, 1.0e15, 1.0e15, 2.1e15).is_err());
    }

    #[test]
    fn drives_must_be_stationary_in_frame() {
        let modes = paper_modes();
        let frame = RotatingFrame::pump_only(modes.b.omega0);
        let aligned = make_drive(&modes.b, modes.b.omega0, 1e-3).unwrap();
        assert!(ExternalDrives::from_drives(&[aligned], &frame).is_ok());
        let detuned = make_drive(&modes.b, modes.b.omega0 + 1e9, 1e-3).unwrap();
        assert!(ExternalDrives::from_drives(&[detuned], &frame).is_err());
    }

    #[test]
    fn undriven_vacuum_stays_zero() {
        let modes = paper_modes();
        let sys = CmtSystem::from_parts(&modes, NonlinearCouplings::new(1e6, 1.0).unwrap());
        let frame = RotatingFrame::pump_only(modes.b.omega0);
        let traj = integrate(
            &ModeState::vacuum(),
            &sys,
            &ExternalDrives::none(),
            &frame,
            &tight(),
            1e-9,
        )
        .unwrap();
        for s in &traj {
            assert_eq!(s.amplitudes(), [Complex64::ZERO; 4]);
        }
        // Timestamps strictly increase.
        for w in traj.windows(2) {
            assert!(w[1].time > w[0].time);
        }
    }

    #[test]
    fn free_decay_is_exponential() {
        let modes = paper_modes();
        let sys = CmtSystem::from_parts(&modes, NonlinearCouplings::new(0.0, 0.0).unwrap());
        let frame = RotatingFrame::from_pump_and_probe(modes.b.omega0, modes.c.omega0);
        let settings = tight();
        let kappa = modes.c.kappa_total();
        let mut state0 = ModeState::vacuum();
        state0.alpha_c = Complex64::new(1.0, 0.0);
        let traj = integrate(&state0, &sys, &ExternalDrives::none(), &frame, &settings, 3.0 / kappa)
            .unwrap();
        for s in &traj {
            let expected = (-kappa * s.time).exp();
            // Global error accumulates roughly as step count times the local
            // tolerance.
            assert_relative_eq!(s.alpha_c.norm(), expected, max_relative = 5e-9);
        }
    }

    #[test]
    fn driven_linear_cavity_matches_closed_form_ringdown() {
        let modes = paper_modes();
        let sys = CmtSystem::from_parts(&modes, NonlinearCouplings::new(0.0, 0.0).unwrap());
        let kappa = modes.c.kappa_total();
        let delta = 0.7 * kappa;
        let omega_probe = modes.c.omega0 - delta;
        let frame = RotatingFrame::from_pump_and_probe(modes.b.omega0, omega_probe);
        let probe = make_drive(&modes.c, omega_probe, 0.1e-3).unwrap();
        let drives = ExternalDrives::from_drives(&[probe], &frame).unwrap();
        let settings = IntegratorSettings { rel_tol: 1e-11, abs_tol: 1e-10, ..Default::default() };
        let traj = integrate(&ModeState::vacuum(), &sys, &drives, &frame, &settings, 4.0 / kappa)
            .unwrap();
        // alpha(t) = alpha_ss (1 - exp((i Delta - kappa) t)); Delta = -delta.
        let lin = Complex64::new(-kappa, -delta);
        let alpha_ss = -probe.epsilon / lin;
        for s in &traj {
            let expected = alpha_ss * (1.0 - (lin * s.time).exp());
            let err = (s.alpha_c - expected).norm() / alpha_ss.norm();
            assert!(err < 10.0 * settings.rel_tol, "err = {err:e} at t = {:e}", s.time);
        }
    }

    #[test]
    fn linear_pump_steady_state_matches_pump_beta() {
        let modes = paper_modes();
        let sys = CmtSystem::from_parts(&modes, NonlinearCouplings::new(0.0, 0.0).unwrap());
        let delta_b = 0.8 * modes.b.kappa_total();
        let omega_pump = modes.b.omega0 - delta_b;
        let frame = RotatingFrame::pump_only(omega_pump);
        let pump = make_drive(&modes.b, omega_pump, 20e-3).unwrap();
        let drives = ExternalDrives::from_drives(&[pump], &frame).unwrap();
        let result = steady_state(&sys, &drives, &frame, &tight()).unwrap();
        assert!(result.converged);
        let analytic = steady::pump_beta(&pump, &modes.b);
        assert_relative_eq!(
            result.state.photon_number(ModeLabel::B),
            analytic.photon_number,
            max_relative = 1e-9
        );
    }

    /// Lossless, undriven system for the conservation checks. Mode `d` sits
    /// near twice the telecom frequency, as in the physical system.
    fn lossless_system() -> (CmtSystem, RotatingFrame) {
        let omega = 1.2e15;
        let lossless = |omega0: f64| CmtMode { omega0, kappa_total: 0.0, kappa_external: 0.0 };
        let sys = CmtSystem {
            modes: [
                lossless(omega + 1.3e9),
                lossless(omega - 0.4e9),
                lossless(omega + 0.9e9),
                lossless(2.0 * omega + 2.1e9),
            ],
            g2: 4e8,
            g3: 1.5e8,
        };
        let frame = RotatingFrame::from_pump_and_probe(omega, omega + 0.2e9);
        (sys, frame)
    }

    fn excited_state() -> ModeState {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut phase = || {
            let p: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            Complex64::from_polar(1.0, p)
        };
        ModeState::from_amplitudes(
            0.0,
            [1.0 * phase(), 2.0 * phase(), 1.0 * phase(), 0.0 * phase()],
        )
    }

    #[test]
    fn manley_rowe_discrete_bookkeeping() {
        // (1, 4, 1, 0) photons.
        let s = ModeState::from_amplitudes(
            0.0,
            [
                Complex64::new(1.0, 0.0),
                Complex64::new(2.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::ZERO,
            ],
        );
        assert_eq!(manley_rowe(&s), (6.0, 6.0));
        assert_eq!(manley_rowe(&ModeState::vacuum()), (0.0, 0.0));

        // One TWM event: (0,1,1,0) -> (0,0,0,1) keeps N1 = 2 and N2 = 1.
        let before = ModeState::from_amplitudes(
            0.0,
            [Complex64::ZERO, Complex64::ONE, Complex64::ONE, Complex64::ZERO],
        );
        let after = ModeState::from_amplitudes(
            0.0,
            [Complex64::ZERO, Complex64::ZERO, Complex64::ZERO, Complex64::ONE],
        );
        assert_eq!(manley_rowe(&before), (2.0, 1.0));
        assert_eq!(manley_rowe(&after), (2.0, 1.0));
    }

    #[test]
    fn lossless_flow_conserves_manley_rowe_and_energy() {
        let (sys, frame) = lossless_system();
        let state0 = excited_state();
        let kappa_c = 2.380952380952381e9;
        let settings = IntegratorSettings {
            rel_tol: 1e-12,
            abs_tol: 1e-12,
            max_step: 1e-10,
            ..Default::default()
        };
        let traj = integrate(
            &state0,
            &sys,
            &ExternalDrives::none(),
            &frame,
            &settings,
            10.0 / kappa_c,
        )
        .unwrap();
        let (n1_0, n2_0) = manley_rowe(&state0);
        let h0 = rotating_energy(&state0, &sys, &frame);
        let mut moved = false;
        for s in &traj {
            let (n1, n2) = manley_rowe(s);
            assert_relative_eq!(n1, n1_0, max_relative = 1e-9);
            assert_relative_eq!(n2, n2_0, max_relative = 1e-9);
            let h = rotating_energy(s, &sys, &frame);
            assert_relative_eq!(h, h0, max_relative = 1e-9);
            if (s.photon_number(ModeLabel::D) - state0.photon_number(ModeLabel::D)).abs() > 0.05 {
                moved = true;
            }
        }
        // The check is vacuous unless the nonlinearities actually exchanged
        // photons.
        assert!(moved, "nonlinear exchange too weak to exercise the invariants");
    }

    #[test]
    fn probe_scenario_reproduces_linear_transmission() {
        let modes = paper_modes();
        let pump_power = 20e-3;
        let omega_pump = modes.b.omega0;
        let pump = make_drive(&modes.b, omega_pump, pump_power).unwrap();
        let nb = steady::pump_beta(&pump, &modes.b).photon_number;
        let g2 = (C_TARGET * modes.c.kappa_total() * modes.d.kappa_total() / nb).sqrt();

        let kappa_c = modes.c.kappa_total();
        for (delta_c, delta_pm) in [(0.0, 0.0), (1.7 * kappa_c, -3.0 * kappa_c)] {
            let omega_probe = modes.c.omega0 - delta_c;
            // Place the ancillary resonance to realize the requested mismatch.
            let mut modes = modes.clone();
            modes.d.omega0 = omega_pump + modes.c.omega0 + delta_pm;
            let frame = RotatingFrame::from_pump_and_probe(omega_pump, omega_probe);
            let probe = make_drive(&modes.c, omega_probe, pump_power * 1e-6).unwrap();
            let drives = ExternalDrives::from_drives(&[pump, probe], &frame).unwrap();
            let sys = CmtSystem::from_parts(&modes, NonlinearCouplings::new(g2, 0.0).unwrap());
            let result = steady_state(&sys, &drives, &frame, &tight()).unwrap();
            assert!(result.converged);
            let t_dyn = probe_transmission(&result.state, &probe, &modes.c);
            let t_analytic = steady::linear_transmission(
                delta_c,
                delta_pm + delta_c,
                g2 * g2 * nb,
                &modes.c,
                &modes.d,
            )
            .transmission;
            assert_relative_eq!(t_dyn, t_analytic, max_relative = 1e-6);
        }
    }

    #[test]
    fn seeded_fwm_scenario_reproduces_eq3() {
        let modes = paper_modes();
        let pump_power = 20e-3;
        let omega_pump = modes.b.omega0;
        let pump = make_drive(&modes.b, omega_pump, pump_power).unwrap();
        let nb = steady::pump_beta(&pump, &modes.b).photon_number;
        let kappa_c = modes.c.kappa_total();
        // Keep g3 |beta|^2 well below kappa_c: the parametric back-action on
        // the seed scales as (g3 |beta|^2 / kappa)^2 and must stay under the
        // oracle tolerance.
        let g3 = 0.01 * kappa_c / nb;

        let delta_a = 0.6 * modes.a.kappa_total();
        let omega_seed = modes.a.omega0 - delta_a;
        let frame = RotatingFrame::from_pump_and_seed(omega_pump, omega_seed);
        let delta_c = modes.c.omega0 - frame.frame_c;
        let seed = make_drive(&modes.a, omega_seed, pump_power * 1e-6).unwrap();
        let drives = ExternalDrives::from_drives(&[pump, seed], &frame).unwrap();
        let sys = CmtSystem::from_parts(&modes, NonlinearCouplings::new(0.0, g3).unwrap());
        let result = steady_state(&sys, &drives, &frame, &tight()).unwrap();
        assert!(result.converged);

        let p_dyn = output_power(&result.state, &modes.c, frame.frame_c);
        let beta = steady::PumpFieldSolution::from_photon_number(nb);
        let p_analytic =
            steady::fwm_output(delta_a, delta_c, &beta, g3, &seed, &modes.a, &modes.c).unwrap();
        assert_relative_eq!(p_dyn, p_analytic, max_relative = 1e-4);
    }

    #[test]
    fn twm_on_off_ratio_reproduces_eq4() {
        let modes = paper_modes();
        let pump_power = 20e-3;
        let omega_pump = modes.b.omega0;
        let pump = make_drive(&modes.b, omega_pump, pump_power).unwrap();
        let nb = steady::pump_beta(&pump, &modes.b).photon_number;
        let kappa_c = modes.c.kappa_total();
        let g3 = 0.01 * kappa_c / nb;
        let g2 = (C_TARGET * kappa_c * modes.d.kappa_total() / nb).sqrt();

        // Seed placed so the generated light lands on the c resonance, with
        // the TWM phase matched (delta_c = delta_d = 0).
        let omega_seed = 2.0 * omega_pump - modes.c.omega0;
        let frame = RotatingFrame::from_pump_and_seed(omega_pump, omega_seed);
        let mut modes_pm = modes.clone();
        modes_pm.d.omega0 = omega_pump + frame.frame_c;
        let seed = make_drive(&modes_pm.a, omega_seed, pump_power * 1e-6).unwrap();
        let drives = ExternalDrives::from_drives(&[pump, seed], &frame).unwrap();

        let run = |g2: f64| {
            let sys =
                CmtSystem::from_parts(&modes_pm, NonlinearCouplings::new(g2, g3).unwrap());
            let result = steady_state(&sys, &drives, &frame, &tight()).unwrap();
            assert!(result.converged);
            output_power(&result.state, &modes_pm.c, frame.frame_c)
        };
        let p_off = run(0.0);
        let p_on = run(g2);

        let expected = steady::fwm_suppressed(p_off, 0.0, 0.0, g2 * g2 * nb, &modes_pm.c, &modes_pm.d);
        assert_relative_eq!(p_off / p_on, expected.suppression_ratio, max_relative = 1e-3);
        assert_relative_eq!(
            p_off / p_on,
            (1.0 + C_TARGET).powi(2),
            max_relative = 2e-3
        );
    }

    #[test]
    fn halving_rel_tol_stays_within_error_estimate() {
        let modes = paper_modes();
        let sys = CmtSystem::from_parts(&modes, NonlinearCouplings::new(0.0, 0.0).unwrap());
        let omega_pump = modes.b.omega0 - 0.5 * modes.b.kappa_total();
        let frame = RotatingFrame::pump_only(omega_pump);
        let pump = make_drive(&modes.b, omega_pump, 5e-3).unwrap();
        let drives = ExternalDrives::from_drives(&[pump], &frame).unwrap();
        let coarse = IntegratorSettings { rel_tol: 1e-8, abs_tol: 1e-6, ..Default::default() };
        let fine = IntegratorSettings { rel_tol: 5e-9, ..coarse };
        let r1 = steady_state(&sys, &drives, &frame, &coarse).unwrap();
        let r2 = steady_state(&sys, &drives, &frame, &fine).unwrap();
        let n1 = r1.state.photon_number(ModeLabel::B);
        let n2 = r2.state.photon_number(ModeLabel::B);
        let amp = n1.sqrt();
        assert!(
            (n1 - n2).abs() <= 2.0 * amp * r1.error_estimate + 1e-12,
            "photon-number shift {:e} exceeds error estimate {:e}",
            (n1 - n2).abs(),
            2.0 * amp * r1.error_estimate
        );
    }

    #[test]
    fn steady_state_times_out_gracefully() {
        let modes = paper_modes();
        let sys = CmtSystem::from_parts(&modes, NonlinearCouplings::new(0.0, 0.0).unwrap());
        let frame = RotatingFrame::pump_only(modes.b.omega0);
        let pump = make_drive(&modes.b, modes.b.omega0, 5e-3).unwrap();
        let drives = ExternalDrives::from_drives(&[pump], &frame).unwrap();
        let settings = IntegratorSettings { max_time: 3e-11, ..Default::default() };
        let result = steady_state(&sys, &drives, &frame, &settings).unwrap();
        assert!(!result.converged);
        assert!(result.residual > settings.steady_threshold);
    }

    #[test]
    fn unreachable_tolerance_underflows_the_step() {
        let modes = paper_modes();
        let sys = CmtSystem::from_parts(&modes, NonlinearCouplings::new(0.0, 0.0).unwrap());
        let frame = RotatingFrame::pump_only(modes.b.omega0);
        let pump = make_drive(&modes.b, modes.b.omega0, 5e-3).unwrap();
        let drives = ExternalDrives::from_drives(&[pump], &frame).unwrap();
        let settings = IntegratorSettings {
            rel_tol: 1e-300,
            abs_tol: 1e-300,
            ..Default::default()
        };
        let err = integrate(&ModeState::vacuum(), &sys, &drives, &frame, &settings, 1e-8);
        assert!(matches!(err, Err(Error::StepUnderflow { .. })));
    }

    /// Not asserted: map how the non-depletion approximation degrades as the
    /// probe power approaches the pump power.
    #[test]
    fn depletion_onset_regime_map() {
        let modes = paper_modes();
        let pump_power = 20e-3;
        let omega_pump = modes.b.omega0;
        let pump = make_drive(&modes.b, omega_pump, pump_power).unwrap();
        let nb = steady::pump_beta(&pump, &modes.b).photon_number;
        let g2 = (C_TARGET * modes.c.kappa_total() * modes.d.kappa_total() / nb).sqrt();
        let mut modes = modes.clone();
        modes.d.omega0 = omega_pump + modes.c.omega0; // phase matched
        let frame = RotatingFrame::from_pump_and_probe(omega_pump, modes.c.omega0);
        let sys = CmtSystem::from_parts(&modes, NonlinearCouplings::new(g2, 0.0).unwrap());
        let t_analytic =
            steady::linear_transmission(0.0, 0.0, g2 * g2 * nb, &modes.c, &modes.d).transmission;
        println!("probe/pump power ratio -> |t_ode - t_eq2| / t_eq2");
        for exp in [-6, -5, -4, -3, -2, -1] {
            let ratio = 10f64.powi(exp);
            let probe = make_drive(&modes.c, modes.c.omega0, pump_power * ratio).unwrap();
            let drives = ExternalDrives::from_drives(&[pump, probe], &frame).unwrap();
            let result = steady_state(&sys, &drives, &frame, &tight()).unwrap();
            let t_dyn = probe_transmission(&result.state, &probe, &modes.c);
            println!(
                "  1e{exp:>3}: {:.3e}",
                (t_dyn - t_analytic).abs() / t_analytic
            );
        }
    }

    #[test]
    fn random_lossless_states_conserve_invariants() {
        let (sys, frame) = lossless_system();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let settings = IntegratorSettings {
            rel_tol: 1e-12,
            abs_tol: 1e-12,
            max_step: 1e-10,
            ..Default::default()
        };
        for _ in 0..3 {
            let mut amp = [Complex64::ZERO; 4];
            for slot in &mut amp {
                *slot = Complex64::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            }
            let state0 = ModeState::from_amplitudes(0.0, amp);
            let traj = integrate(&state0, &sys, &ExternalDrives::none(), &frame, &settings, 2e-9)
                .unwrap();
            let (n1_0, n2_0) = manley_rowe(&state0);
            let last = traj.last().unwrap();
            let (n1, n2) = manley_rowe(last);
            assert_relative_eq!(n1, n1_0, max_relative = 1e-9);
            assert_relative_eq!(n2, n2_0, max_relative = 1e-9);
        }
    }

    #[test]
    fn settings_validation_catches_bad_values() {
        let mut s = IntegratorSettings::default();
        s.rel_tol = 0.0;
        assert!(s.validate().is_err());
        let mut s = IntegratorSettings::default();
        s.steady_threshold = 1.5;
        assert!(s.validate().is_err());
    }

    #[test]
    fn trivial_limit_abs_kappa_zero_modes_are_inert() {
        // A mode with zero total loss and no drive keeps its amplitude under
        // pure detuning rotation.
        let (mut sys, frame) = lossless_system();
        sys.g2 = 0.0;
        sys.g3 = 0.0;
        let mut amp = [Complex64::ZERO; 4];
        amp[2] = Complex64::new(0.7, -0.1);
        let state0 = ModeState::from_amplitudes(0.0, amp);
        let traj = integrate(
            &state0,
            &sys,
            &ExternalDrives::none(),
            &frame,
            &IntegratorSettings { rel_tol: 1e-12, abs_tol: 1e-12, ..Default::default() },
            1e-9,
        )
        .unwrap();
        let last = traj.last().unwrap();
        assert_abs_diff_eq!(last.alpha_c.norm(), state0.alpha_c.norm(), epsilon = 1e-9);
    }
}
