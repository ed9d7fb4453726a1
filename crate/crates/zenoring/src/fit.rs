//! Least-squares extraction of lineshape and Zeno parameters from spectra.
//!
//! Two models, fitted in the two-stage protocol the experiment would use:
//! first the pump-off Lorentzian `t = |1 - 2 k1 / (k + i (delta - delta0))|^2`
//! for `(delta0, kappa, kappa1)`, then the pumped transmission law with the
//! linear parameters frozen for `(g2^2 |beta|^2, delta_pm, kappa_d)`. The
//! optimizer is a damped least-squares (Levenberg-Marquardt) loop with a
//! centrally differenced Jacobian, internal parameter scaling, and
//! uncertainties from the normal-equations curvature at the optimum scaled
//! by the residual RMS.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SpectrumTrace;
use crate::steady::zeno_transmission;

/// Fewest samples accepted for a fit.
const MIN_POINTS: usize = 8;

const MAX_ITERATIONS: usize = 200;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_UP: f64 = 10.0;
const LAMBDA_DOWN: f64 = 0.1;
const LAMBDA_MAX: f64 = 1e14;
/// Relative chi^2 decrease below which a successful step counts as converged.
const FTOL: f64 = 1e-14;
/// Scaled step size below which a successful step counts as converged.
const XTOL: f64 = 1e-12;
/// First-order optimality: the undamped Gauss-Newton step (in scaled
/// parameter units) must be below this for a converged report.
const GTOL: f64 = 1e-10;
/// Central-difference step, relative to the parameter scale.
const DIFF_STEP: f64 = 6e-6;

/// One fitted parameter with its one-sigma uncertainty.
#[derive(Debug, Clone, Serialize)]
pub struct FitParameter {
    pub name: &'static str,
    pub value: f64,
    pub uncertainty: f64,
    pub unit: &'static str,
}

/// Outcome of one least-squares fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub parameters: Vec<FitParameter>,
    /// RMS of the (weighted) residuals at the optimum.
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Length of the undamped Gauss-Newton step at the optimum in scaled
    /// parameter units; small values indicate first-order optimality.
    pub gradient_norm: f64,
}

impl FitReport {
    pub fn parameter(&self, name: &str) -> Option<&FitParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Convenience accessor that panics on unknown names; fits always carry
    /// their full parameter set.
    pub fn value(&self, name: &str) -> f64 {
        self.parameter(name).unwrap_or_else(|| panic!("no parameter {name}")).value
    }
}

/// Bare-Lorentzian parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianParams {
    /// Line center on the trace axis (rad/s).
    pub delta0: f64,
    /// Total amplitude decay rate (rad/s).
    pub kappa: f64,
    /// External amplitude decay rate (rad/s).
    pub kappa1: f64,
}

/// `t(delta) = |1 - 2 kappa1 / (kappa + i (delta - delta0))|^2`.
pub fn lorentzian_model(delta: f64, p: &LorentzianParams) -> f64 {
    let d = delta - p.delta0;
    let num = (p.kappa - 2.0 * p.kappa1) * (p.kappa - 2.0 * p.kappa1) + d * d;
    num / (p.kappa * p.kappa + d * d)
}

/// Stage-one results frozen during a Zeno fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZenoFixed {
    pub kappa_c: f64,
    pub kappa_c1: f64,
    /// Line center of the bare resonance on the trace axis (rad/s).
    pub delta0: f64,
}

/// Stage-two parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZenoParams {
    /// Composite coupling `g2^2 |beta|^2` ((rad/s)^2).
    pub g2sq_nb: f64,
    /// TWM phase mismatch (rad/s).
    pub delta_pm: f64,
    /// Ancillary-mode total decay rate (rad/s).
    pub kappa_d: f64,
}

/// Pumped transmission law on the trace axis.
pub fn zeno_model(delta: f64, fixed: &ZenoFixed, p: &ZenoParams) -> f64 {
    let delta_c = delta - fixed.delta0;
    zeno_transmission(
        delta_c,
        p.delta_pm + delta_c,
        p.g2sq_nb,
        fixed.kappa_c,
        fixed.kappa_c1,
        p.kappa_d,
    )
}

fn validate_for_fit(trace: &SpectrumTrace) -> Result<()> {
    if trace.len() < MIN_POINTS {
        return Err(Error::Domain(format!(
            "fitting needs at least {MIN_POINTS} samples (got {})",
            trace.len()
        )));
    }
    Ok(())
}

/// Fit the bare Lorentzian. Without an initial guess the dip location, its
/// half-depth width, and its depth seed the parameters.
///
/// The power transmission constrains the coupling only through
/// `(kappa - 2 kappa1)^2`, so the optimizer works in that variable (in which
/// the model is linear and free of the critical-coupling saddle) and the
/// reported `kappa1` is the under-coupled branch `kappa1 <= kappa/2`. At
/// exact critical coupling the first-order information on `kappa1` vanishes
/// and its uncertainty grows accordingly.
pub fn fit_lorentzian(trace: &SpectrumTrace, initial: Option<LorentzianParams>) -> Result<FitReport> {
    validate_for_fit(trace)?;
    let init = initial.unwrap_or_else(|| lorentzian_guess(trace));
    let scale_rate = init.kappa.abs().max(axis_span(trace) * 1e-3);
    let v_init = (init.kappa - 2.0 * init.kappa1).powi(2);
    let mut report = levenberg_marquardt(
        |delta, p: &[f64; 3]| {
            let d = delta - p[0];
            (p[2] + d * d) / (p[1] * p[1] + d * d)
        },
        trace,
        [init.delta0, init.kappa, v_init],
        [scale_rate, scale_rate, scale_rate * scale_rate],
        [("delta0", "rad/s"), ("kappa", "rad/s"), ("contrast", "(rad/s)^2")],
    );

    // The model is linear in the contrast at fixed (delta0, kappa); closing
    // with the exact conditional optimum avoids sqrt-amplified optimizer
    // dust near critical coupling.
    let delta0 = report.parameters[0].value;
    let kappa = report.parameters[1].value.abs();
    report.parameters[1].value = kappa;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, (d, t)) in trace.detunings.iter().zip(&trace.transmissions).enumerate() {
        let w = trace.sigma.as_ref().map_or(1.0, |s| 1.0 / (s[i] * s[i]));
        let dd = d - delta0;
        let u = 1.0 / (kappa * kappa + dd * dd);
        num += w * u * (t - dd * dd * u);
        den += w * u * u;
    }
    let v = if den > 0.0 { num / den } else { report.parameters[2].value };
    let sigma_v = report.parameters[2].uncertainty;
    let root = v.max(0.0).sqrt();
    let kappa1 = 0.5 * (kappa - root);
    let sigma_kappa1 = if v > sigma_v && v > 0.0 {
        // Delta method through kappa1 = (kappa - sqrt(v)) / 2.
        (0.25 * sigma_v / root).hypot(0.5 * report.parameters[1].uncertainty)
    } else {
        // Near critical coupling v is consistent with zero; quote the
        // quartic-scale bound instead.
        0.5 * sigma_v.max(0.0).sqrt()
    };
    report.parameters[2] =
        FitParameter { name: "kappa1", value: kappa1, uncertainty: sigma_kappa1, unit: "rad/s" };
    Ok(report)
}

/// Fit the pumped transmission law with the stage-one parameters frozen.
pub fn fit_zeno(
    trace: &SpectrumTrace,
    fixed: &ZenoFixed,
    initial: Option<ZenoParams>,
) -> Result<FitReport> {
    validate_for_fit(trace)?;
    let init = initial.unwrap_or_else(|| zeno_guess(trace, fixed));
    let scale_g = (init.kappa_d * fixed.kappa_c).abs().max(1.0);
    let mut report = levenberg_marquardt(
        |delta, p: &[f64; 3]| {
            zeno_model(
                delta,
                fixed,
                &ZenoParams { g2sq_nb: p[0], delta_pm: p[1], kappa_d: p[2] },
            )
        },
        trace,
        [init.g2sq_nb, init.delta_pm, init.kappa_d],
        [scale_g, fixed.kappa_c.abs().max(1.0), init.kappa_d.abs().max(1.0)],
        [("g2sq_nb", "(rad/s)^2"), ("delta_pm", "rad/s"), ("kappa_d", "rad/s")],
    );
    let kappa_d = report.parameters[2].value.abs();
    report.parameters[2].value = kappa_d;
    Ok(report)
}

fn axis_span(trace: &SpectrumTrace) -> f64 {
    let min = trace.detunings.iter().copied().fold(f64::INFINITY, f64::min);
    let max = trace.detunings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (max - min).abs().max(f64::MIN_POSITIVE)
}

fn lorentzian_guess(trace: &SpectrumTrace) -> LorentzianParams {
    let (i_min, t_min) = trace
        .transmissions
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, t)| (i, *t))
        .unwrap();
    let delta0 = trace.detunings[i_min];
    let depth = (1.0 - t_min).clamp(0.0, 1.0 - 1e-12);
    let half_level = 1.0 - 0.5 * depth;

    // Walk outward from the minimum to the half-depth crossings.
    let crossing = |indices: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = i_min;
        for i in indices {
            if trace.transmissions[i] >= half_level {
                // Linear interpolation between prev and i.
                let (t0, t1) = (trace.transmissions[prev], trace.transmissions[i]);
                let (d0, d1) = (trace.detunings[prev], trace.detunings[i]);
                let f = if (t1 - t0).abs() > 0.0 { (half_level - t0) / (t1 - t0) } else { 0.5 };
                return Some(d0 + f * (d1 - d0));
            }
            prev = i;
        }
        None
    };
    let right = crossing(&mut (i_min + 1..trace.len()));
    let left = crossing(&mut (0..i_min).rev());
    let kappa = match (left, right) {
        (Some(l), Some(r)) => 0.5 * (r - l).abs(),
        (Some(l), None) => (delta0 - l).abs(),
        (None, Some(r)) => (r - delta0).abs(),
        (None, None) => 0.25 * axis_span(trace),
    }
    .max(1e-9 * axis_span(trace));
    // depth = 4 k1 (k - k1) / k^2 -> under-coupled root.
    let kappa1 = 0.5 * kappa * (1.0 - (1.0 - depth).sqrt());
    LorentzianParams { delta0, kappa, kappa1 }
}

fn zeno_guess(trace: &SpectrumTrace, fixed: &ZenoFixed) -> ZenoParams {
    // The ancillary resonance sits where the trace deviates most from the
    // frozen bare Lorentzian.
    let bare = LorentzianParams {
        delta0: fixed.delta0,
        kappa: fixed.kappa_c,
        kappa1: fixed.kappa_c1,
    };
    let (i_feat, _) = trace
        .detunings
        .iter()
        .zip(&trace.transmissions)
        .enumerate()
        .map(|(i, (d, t))| (i, (t - lorentzian_model(*d, &bare)).abs()))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    let delta_pm = -(trace.detunings[i_feat] - fixed.delta0);

    // Read the on-resonance fill as an effective extra loss.
    let t0 = trace
        .detunings
        .iter()
        .zip(&trace.transmissions)
        .min_by(|a, b| {
            (a.0 - fixed.delta0).abs().partial_cmp(&(b.0 - fixed.delta0).abs()).unwrap()
        })
        .map(|(_, t)| *t)
        .unwrap();
    let amp = t0.max(0.0).sqrt();
    let kappa_eff = if amp < 1.0 - 1e-9 {
        2.0 * fixed.kappa_c1 / (1.0 - amp)
    } else {
        10.0 * fixed.kappa_c
    };
    let kappa_d = 5.0 * fixed.kappa_c;
    let gamma = (kappa_eff - fixed.kappa_c).max(1e-3 * fixed.kappa_c);
    ZenoParams { g2sq_nb: gamma * kappa_d, delta_pm, kappa_d }
}

/// Damped least squares over `N` parameters with internal scaling.
fn levenberg_marquardt<const N: usize>(
    model: impl Fn(f64, &[f64; N]) -> f64,
    trace: &SpectrumTrace,
    p0: [f64; N],
    scales: [f64; N],
    names: [(&'static str, &'static str); N],
) -> FitReport {
    let m = trace.len();
    let weights: Vec<f64> = match &trace.sigma {
        Some(s) => s.iter().map(|v| 1.0 / v).collect(),
        None => vec![1.0; m],
    };
    // Work in scaled parameters q = p / scale.
    let mut q: [f64; N] = std::array::from_fn(|j| p0[j] / scales[j]);
    let unscale = |q: &[f64; N]| -> [f64; N] { std::array::from_fn(|j| q[j] * scales[j]) };

    let chi2_of = |q: &[f64; N]| -> f64 {
        let p = unscale(q);
        trace
            .detunings
            .iter()
            .zip(&trace.transmissions)
            .zip(&weights)
            .map(|((d, t), w)| {
                let r = (t - model(*d, &p)) * w;
                r * r
            })
            .sum()
    };

    // Residuals r_i = w_i (y_i - f_i) and Jacobian J_ij = d f_i / d q_j by
    // central differences.
    let build = |q: &[f64; N]| -> (Vec<f64>, Vec<[f64; N]>) {
        let p = unscale(q);
        let mut jac = vec![[0.0; N]; m];
        for j in 0..N {
            let h = DIFF_STEP * q[j].abs().max(1.0);
            let mut qp = *q;
            let mut qm = *q;
            qp[j] += h;
            qm[j] -= h;
            let pp = unscale(&qp);
            let pm = unscale(&qm);
            for (i, d) in trace.detunings.iter().enumerate() {
                jac[i][j] = (model(*d, &pp) - model(*d, &pm)) / (2.0 * h) * weights[i];
            }
        }
        let res: Vec<f64> = trace
            .detunings
            .iter()
            .zip(&trace.transmissions)
            .zip(&weights)
            .map(|((d, t), w)| (t - model(*d, &p)) * w)
            .collect();
        (res, jac)
    };

    let normal_equations = |res: &[f64], jac: &[[f64; N]]| -> ([[f64; N]; N], [f64; N]) {
        let mut a = [[0.0; N]; N];
        let mut g = [0.0; N];
        for i in 0..res.len() {
            for j in 0..N {
                g[j] += jac[i][j] * res[i];
                for k in j..N {
                    a[j][k] += jac[i][j] * jac[i][k];
                }
            }
        }
        for j in 1..N {
            for k in 0..j {
                a[j][k] = a[k][j];
            }
        }
        (a, g)
    };

    // Distance to stationarity measured as the per-parameter Gauss-Newton
    // step length in scaled units. Robust for both noiseless (chi^2 ~ 0) and
    // noisy optima. Directions with a vanishing Jacobian column (the model is
    // first-order flat there, e.g. kappa1 at exact critical coupling) carry
    // no first-order information and are excluded; they surface through
    // their uncertainties instead.
    let diag_floor = |a: &[[f64; N]; N]| -> f64 {
        1e-10 * (0..N).map(|j| a[j][j]).fold(0.0f64, f64::max)
    };
    let stationarity = |a: &[[f64; N]; N], g: &[f64; N]| -> f64 {
        let floor = diag_floor(a);
        let mut worst = 0.0f64;
        for j in 0..N {
            if a[j][j] > floor.max(f64::MIN_POSITIVE) {
                worst = worst.max(g[j].abs() / a[j][j]);
            }
        }
        worst
    };

    let mut chi2 = chi2_of(&q);
    let mut lambda = LAMBDA_INIT;
    let mut converged = false;
    let mut iterations = 0;
    let mut grad_cos = f64::INFINITY;

    for iter in 0..MAX_ITERATIONS {
        iterations = iter + 1;
        let (res, jac) = build(&q);
        let (a, g) = normal_equations(&res, &jac);
        grad_cos = stationarity(&a, &g);
        if grad_cos <= GTOL || chi2 <= 1e-28 * m as f64 {
            converged = true;
            break;
        }

        let mut stepped = false;
        while lambda <= LAMBDA_MAX {
            // Flooring the Marquardt diagonal keeps first-order-flat
            // directions from running away under small damping.
            let floor = diag_floor(&a).max(f64::MIN_POSITIVE);
            let mut damped = a;
            for j in 0..N {
                damped[j][j] = a[j][j].max(floor) * (1.0 + lambda);
            }
            let Some(step) = solve(&damped, &g) else {
                lambda *= LAMBDA_UP;
                continue;
            };
            let mut q_new = q;
            for j in 0..N {
                q_new[j] += step[j];
            }
            let chi2_new = chi2_of(&q_new);
            if chi2_new.is_finite() && chi2_new < chi2 {
                let rel_drop = (chi2 - chi2_new) / chi2.max(f64::MIN_POSITIVE);
                let max_step = (0..N)
                    .map(|j| step[j].abs() / (q[j].abs() + 1.0))
                    .fold(0.0f64, f64::max);
                q = q_new;
                chi2 = chi2_new;
                lambda = (lambda * LAMBDA_DOWN).max(1e-12);
                stepped = true;
                if rel_drop < FTOL || max_step < XTOL {
                    converged = true;
                }
                break;
            }
            lambda *= LAMBDA_UP;
        }
        if converged || !stepped {
            // Re-measure optimality at the final point.
            let (res, jac) = build(&q);
            let (a, g) = normal_equations(&res, &jac);
            grad_cos = stationarity(&a, &g);
            converged = converged || grad_cos <= GTOL;
            break;
        }
    }

    // Curvature-based uncertainties at the optimum.
    let (res, jac) = build(&q);
    let (a, _) = normal_equations(&res, &jac);
    let dof = m.saturating_sub(N).max(1) as f64;
    let sigma_sq = chi2 / dof;
    let cov = invert(&a);
    let p = unscale(&q);
    let parameters = (0..N)
        .map(|j| {
            let var = cov.map(|c| c[j][j]).unwrap_or(f64::INFINITY);
            FitParameter {
                name: names[j].0,
                value: p[j],
                uncertainty: (sigma_sq * var.max(0.0)).sqrt() * scales[j].abs(),
                unit: names[j].1,
            }
        })
        .collect();

    FitReport {
        parameters,
        residual_rms: (chi2 / m as f64).sqrt(),
        converged,
        iterations,
        gradient_norm: grad_cos,
    }
}

/// Solve the symmetric positive system `A x = b` by Gaussian elimination
/// with partial pivoting. Returns `None` when singular.
fn solve<const N: usize>(a: &[[f64; N]; N], b: &[f64; N]) -> Option<[f64; N]> {
    let mut m = *a;
    let mut rhs = *b;
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..N {
            let f = m[row][col] / m[col][col];
            for k in col..N {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; N];
    for col in (0..N).rev() {
        let mut s = rhs[col];
        for k in col + 1..N {
            s -= m[col][k] * x[k];
        }
        x[col] = s / m[col][col];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Inverse by column-wise solves; `None` when singular.
fn invert<const N: usize>(a: &[[f64; N]; N]) -> Option<[[f64; N]; N]> {
    let mut inv = [[0.0; N]; N];
    for j in 0..N {
        let mut e = [0.0; N];
        e[j] = 1.0;
        let col = solve(a, &e)?;
        for i in 0..N {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}
