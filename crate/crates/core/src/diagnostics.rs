//! Post-hoc checks on RAAS traces and the theory constants.
//!
//! Everything here reads [`TrialRecord`]s; nothing feeds back into a run.

use alloc::format;
use alloc::vec::Vec;

use crate::linalg;
use crate::math;
use crate::problems::Problem;
use crate::raas::{large_step_threshold, truncation_threshold, RaasParams, TrialRecord};
use crate::{Error, Result};

/// `z_t = x_t + (1−α_{t−1})/α_{t−1}·(1−ϑ)·(x̄_t − x_{t−1})`.
pub fn z_state(x: &[f64], x_prev: &[f64], x_bar: &[f64], alpha_prev: f64, vartheta: f64) -> Vec<f64> {
    let s = (1.0 - alpha_prev) / alpha_prev * (1.0 - vartheta);
    x.iter()
        .zip(x_bar.iter().zip(x_prev))
        .map(|(xi, (bi, pi))| xi + s * (bi - pi))
        .collect()
}

/// `Φ_t = φ(x_t) − φ* + α²_{t−1}/(4θ(1−ϑ)²γ_{t−1})·‖z_t − x*‖²`.
pub fn lyapunov(
    problem: &Problem,
    x: &[f64],
    z: &[f64],
    alpha_prev: f64,
    gamma_prev: f64,
    theta: f64,
    vartheta: f64,
) -> f64 {
    let s = 1.0 - vartheta;
    problem.gap(x) + alpha_prev * alpha_prev / (4.0 * theta * s * s * gamma_prev) * linalg::dist_sq(z, problem.x_star())
}

/// Both sides of `Φ_{t+1} ≤ (1−α_t)Φ_t − T_C + T_E` on one accepted trial.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct QuasiDescentRow {
    pub t: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub t_c: f64,
    pub t_e: f64,
    /// `rhs − lhs`.
    pub residual: f64,
    /// `residual ≥ −1e-9·max(1, Φ_t)`.
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuasiDescentReport {
    pub rows: Vec<QuasiDescentRow>,
    /// Accepted trials outside `ϑ < (1−θ)/(2−θ)`, without a Lyapunov value or
    /// accepted without condition (II).
    pub skipped: usize,
}

impl QuasiDescentReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| !r.holds).count()
    }

    pub fn worst_residual(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.residual).reduce(f64::min)
    }
}

/// `T_C = ϑα/(1−ϑ)·(φ(y) − φ* + μ/2‖y − x*‖²)`.
pub fn compensation_term(rec: &TrialRecord, mu: f64) -> f64 {
    let vt = rec.vartheta;
    vt * rec.alpha / (1.0 - vt) * (rec.y_gap + 0.5 * mu * rec.y_dist_sq)
}

/// `T_E` assembled from the logged oracle errors and tolerances.
pub fn error_term(rec: &TrialRecord) -> f64 {
    let a = rec.alpha;
    let [e_x, e_y, e_xp] = rec.errors;
    a * (rec.grad_error_inner / (1.0 - rec.vartheta) + rec.eps_f + e_y - e_xp)
        + (1.0 - a) * (rec.eps_g + 2.0 * rec.eps_f + e_x - e_xp)
}

/// Evaluates the quasi-descent inequality on every accepted trial in the
/// untruncated regime that passed both acceptance conditions.
pub fn quasi_descent_check(records: &[TrialRecord], mu: f64) -> QuasiDescentReport {
    let mut report = QuasiDescentReport::default();
    for rec in records.iter().filter(|r| r.accepted) {
        let (Some(phi), Some(phi_next)) = (rec.lyapunov, rec.lyapunov_next) else {
            report.skipped += 1;
            continue;
        };
        if rec.vartheta >= truncation_threshold(rec.theta) || rec.check2.is_none() {
            report.skipped += 1;
            continue;
        }
        let t_c = compensation_term(rec, mu);
        let t_e = error_term(rec);
        let rhs = (1.0 - rec.alpha) * phi - t_c + t_e;
        let residual = rhs - phi_next;
        report.rows.push(QuasiDescentRow {
            t: rec.t,
            lhs: phi_next,
            rhs,
            t_c,
            t_e,
            residual,
            holds: residual >= -1e-9 * phi.max(1.0),
        });
    }
    report
}

/// Contraction product and envelopes after one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EnvelopeRow {
    pub t: usize,
    /// `λ_t = Π(1 − Θ_i α_i)`.
    pub lambda: f64,
    /// `γ_t λ_t / α_t²`.
    pub scaled: f64,
    /// `(1 + (α₀/√γ₀)ΣΘ√γ)⁻²` when `μ = 0`.
    pub lower: Option<f64>,
    /// Quadratic envelope when `μ = 0`, exponential one when `μ > 0`.
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnvelopeReport {
    pub rows: Vec<EnvelopeRow>,
    /// Smallest `λ_t − lower` (relative).
    pub worst_lower_slack: Option<f64>,
    /// Smallest `upper − λ_t` (relative).
    pub worst_upper_slack: f64,
    /// Trials where `γλ/α²` increased, or differed from `γ₀/α₀²` when `μ = 0`.
    pub monotonicity_violations: usize,
    /// Trials with `α_t > ᾱ`.
    pub alpha_bound_violations: usize,
    pub alpha_bar: f64,
}

impl EnvelopeReport {
    pub fn holds(&self) -> bool {
        self.worst_lower_slack.is_none_or(|s| s >= -1e-9)
            && self.worst_upper_slack >= -1e-9
            && self.monotonicity_violations == 0
            && self.alpha_bound_violations == 0
    }
}

/// `ᾱ = max{α₀, 2/(√((1−c)²+4ν) + (1−c))}` with `c = θν` when `μ > 0`, else 0.
pub fn alpha_bar(alpha0: f64, nu: f64, theta: f64, mu: f64) -> f64 {
    let c = if mu > 0.0 { theta * nu } else { 0.0 };
    let s = 1.0 - c;
    alpha0.max(2.0 / (math::sqrt(s * s + 4.0 * nu) + s))
}

/// Scans the contraction product of a trace against its envelopes.
pub fn lambda_envelopes(records: &[TrialRecord], params: &RaasParams) -> EnvelopeReport {
    let mu = params.mu;
    let (a0, g0) = (params.alpha0, params.gamma0);
    let a_bar = alpha_bar(a0, params.nu, params.theta, mu);
    let mut report = EnvelopeReport {
        alpha_bar: a_bar,
        worst_upper_slack: f64::INFINITY,
        ..EnvelopeReport::default()
    };
    let mut lambda = 1.0;
    let mut sum_sqrt = 0.0;
    let mut log_env = 0.0;
    let mut prev_scaled = g0 / (a0 * a0);
    let initial_scaled = prev_scaled;
    for rec in records {
        if rec.accepted {
            lambda *= 1.0 - rec.alpha;
            sum_sqrt += math::sqrt(rec.gamma);
            log_env += math::ln_1p(-(1.0 - rec.vartheta) * math::sqrt(2.0 * rec.theta * mu * rec.gamma));
        }
        let scaled = rec.gamma * lambda / (rec.alpha * rec.alpha);
        let tol = 1e-10 * prev_scaled;
        if scaled > prev_scaled + tol || (mu == 0.0 && math::abs(scaled - initial_scaled) > 1e-10 * initial_scaled) {
            report.monotonicity_violations += 1;
        }
        prev_scaled = scaled;
        if rec.alpha > a_bar * (1.0 + 1e-12) {
            report.alpha_bound_violations += 1;
        }
        let (lower, upper) = if mu == 0.0 {
            let k = a0 / math::sqrt(g0) * sum_sqrt;
            let lo = 1.0 / ((1.0 + k) * (1.0 + k));
            let hi = 1.0 / ((1.0 + 0.5 * k) * (1.0 + 0.5 * k));
            (Some(lo), hi)
        } else {
            (None, math::exp(log_env))
        };
        if let Some(lo) = lower {
            let s = (lambda - lo) / lo.max(f64::MIN_POSITIVE);
            report.worst_lower_slack = Some(report.worst_lower_slack.map_or(s, |w: f64| w.min(s)));
        }
        let s = (upper - lambda) / upper.max(f64::MIN_POSITIVE);
        report.worst_upper_slack = report.worst_upper_slack.min(s);
        report.rows.push(EnvelopeRow {
            t: rec.t,
            lambda,
            scaled,
            lower,
            upper,
        });
    }
    report
}

/// `I_t = 1{W ≤ ε_g' and D ≤ ℰ ε_f'}`.
pub fn reliable(w: f64, d: f64, eps_g: f64, eps_f: f64, scale: f64) -> bool {
    w <= eps_g && d <= scale * eps_f
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct IndicatorSummary {
    pub trials: usize,
    pub accepted: usize,
    /// Empirical reliability `(1/T)ΣI_t`.
    pub p_hat: f64,
    /// Trials with `Λ_t` defined.
    pub large_step_defined: usize,
    pub large_steps: usize,
    /// Count of `(1−Λ_t)I_t > Θ_t`.
    pub violations: usize,
}

pub fn indicators(records: &[TrialRecord]) -> IndicatorSummary {
    let n = records.len();
    let reliable = records.iter().filter(|r| r.reliable).count();
    let mut s = IndicatorSummary {
        trials: n,
        accepted: records.iter().filter(|r| r.accepted).count(),
        p_hat: if n == 0 { 0.0 } else { reliable as f64 / n as f64 },
        large_step_defined: 0,
        large_steps: 0,
        violations: 0,
    };
    for r in records {
        if let Some(big) = r.large_step {
            s.large_step_defined += 1;
            if big {
                s.large_steps += 1;
            } else if r.reliable && !r.accepted {
                s.violations += 1;
            }
        }
    }
    s
}

/// First trial with `min{φ(x̂), φ(ŷ)} − φ* ≤ ε_φ` or `‖∇φ(ŷ)‖ ≤ ε_∇`.
pub fn stopping_time(records: &[TrialRecord], eps_phi: f64, eps_grad: f64) -> Option<usize> {
    records
        .iter()
        .find(|r| r.y_gap.min(r.trial_gap) <= eps_phi || r.grad_norm <= eps_grad)
        .map(|r| r.t)
}

/// Realized `max{‖ŷ_t − z_t‖, ‖z_t − x*‖}` over the trace.
pub fn trajectory_bound(records: &[TrialRecord]) -> Option<f64> {
    records
        .iter()
        .filter_map(|r| Some(r.y_z_dist?.max(r.z_dist?)))
        .reduce(f64::max)
}

/// Intrinsic oracle moment parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct OracleMoments {
    pub eps_g: f64,
    pub eps_f: f64,
    pub upsilon_g: f64,
    pub upsilon_f: f64,
    pub delta: f64,
    pub varrho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TheoryInputs {
    pub moments: Option<OracleMoments>,
    pub s_f: f64,
    pub s_g: f64,
    /// Target reliability in `(½, p)`.
    pub p_hat: Option<f64>,
    /// Trajectory bound; an a-posteriori estimate is acceptable.
    pub b: Option<f64>,
}

impl Default for TheoryInputs {
    fn default() -> Self {
        TheoryInputs {
            moments: None,
            s_f: 1.0,
            s_g: 1.0,
            p_hat: None,
            b: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TheoryConstants {
    pub gamma_bar: f64,
    pub d: f64,
    pub alpha_bar: f64,
    pub rho: f64,
    pub c0: f64,
    pub c_lambda: Option<f64>,
    pub c_kappa: Option<f64>,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
    pub c5: Option<f64>,
    pub c3_prime: Option<f64>,
    pub eps_phi_prime: Option<f64>,
    pub eps_grad_prime: Option<f64>,
    pub eps0: Option<f64>,
    pub p: Option<f64>,
    /// `p ≤ ½`: the complexity bounds do not apply.
    pub p_warning: bool,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(format!("{name} must be positive, got {v}")))
    }
}

/// Evaluates the constants of the complexity bounds for `params` on a
/// problem with smoothness `l`.
pub fn theory_constants(params: &RaasParams, l: f64, inputs: &TheoryInputs) -> Result<TheoryConstants> {
    params.validate()?;
    let (mu, theta, vt, nu) = (params.mu, params.theta, params.vartheta, params.nu);
    let (eg, ef) = (params.eps_g, params.eps_f);
    positive("L", l)?;
    if !(vt > 0.0) {
        return Err(Error::config("the constants need vartheta > 0"));
    }
    let gamma_bar = large_step_threshold(l, theta, vt, params.gamma_max)
        .ok_or_else(|| Error::config("gamma_bar is undefined: 1 - 2 vartheta - theta(1 - vartheta) <= 0"))?;
    let d = (math::ln(params.gamma0 / gamma_bar) / math::ln(1.0 / nu)).max(0.0);
    let a_bar = alpha_bar(params.alpha0, nu, theta, mu);
    let rho = params.alpha0 * math::sqrt(params.gamma_max / params.gamma0);
    let c0 = rho * (1.0 + rho);
    let c_lambda = match inputs.p_hat {
        Some(ph) => {
            let excess = positive("p_hat - 1/2", ph - 0.5)?;
            Some(16.0 * params.gamma0 / (gamma_bar * params.alpha0 * params.alpha0) / (excess * excess))
        }
        None => None,
    };

    let p = match inputs.moments {
        Some(m) => {
            let g_den = if mu > 0.0 {
                eg * eg - m.eps_g * m.eps_g
            } else {
                eg - m.eps_g
            };
            let g_den = positive("gradient tolerance margin", g_den)?;
            let f_den = positive("value tolerance margin", ef - m.eps_f)?;
            Some(1.0 - m.upsilon_g / math::powf(g_den, 1.0 + m.delta) - m.upsilon_f / math::powf(f_den, 1.0 + m.varrho))
        }
        None => None,
    };

    let mut c = TheoryConstants {
        gamma_bar,
        d,
        alpha_bar: a_bar,
        rho,
        c0,
        c_lambda,
        c_kappa: None,
        c3: None,
        c4: None,
        c5: None,
        c3_prime: None,
        eps_phi_prime: None,
        eps_grad_prime: None,
        eps0: None,
        p,
        p_warning: p.is_some_and(|p| p <= 0.5),
    };

    if mu > 0.0 {
        let q = (1.0 - vt) * math::sqrt(2.0 * theta * mu * gamma_bar);
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::config(format!(
                "(1-vartheta)sqrt(2 theta mu gamma_bar) = {q} outside (0,1)"
            )));
        }
        let c_kappa = -math::ln_1p(-q);
        let c3 = eg * eg / (2.0 * mu) + 2.0 * ef;
        let c4 = 1.0 / (1.0 - a_bar);
        let c5 = a_bar / (2.0 * mu * (1.0 - a_bar) * vt * (1.0 - vt));
        let c3p = c3 + c4 * ef + c5 * eg * eg;
        c.c_kappa = Some(c_kappa);
        c.c3 = Some(c3);
        c.c4 = Some(c4);
        c.c5 = Some(c5);
        c.c3_prime = Some(c3p);
        c.eps_phi_prime = p.filter(|&p| p > 0.5).map(|p| {
            let tail = (c3p + c4 * inputs.s_f + c5 * inputs.s_g) / (math::exp((p - 0.5) * c_kappa) - 1.0);
            (eg * eg / (2.0 * mu * vt * vt)).max((1.0 - vt) * ef / vt).max(tail)
        });
    } else {
        c.eps_grad_prime = Some(eg / vt);
        if let Some(b) = inputs.b {
            c.eps_phi_prime = Some((b * eg + 2.0 * (1.0 - vt) * ef) / vt);
            if let (Some(cl), Some(m)) = (c_lambda, inputs.moments) {
                c.eps0 = Some(c0 * cl * (2.0 * b / (1.0 - vt) * (m.eps_g + inputs.s_g) + m.eps_f + inputs.s_f));
            }
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_quadratic, QuadraticSpec};

    #[test]
    fn z_examples() {
        assert_eq!(z_state(&[1.0, 2.0], &[0.0, 0.0], &[0.0, 0.0], 0.3, 0.1), vec![1.0, 2.0]);
        assert_eq!(z_state(&[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0], 0.5, 0.0), vec![1.0, 0.0]);
        let z = z_state(&[0.0], &[0.0], &[1.0], 0.5, 1.0 - 1e-12);
        assert!(z[0].abs() < 1e-11);
    }

    #[test]
    fn lyapunov_at_minimizer_is_zero() {
        let p = make_quadratic(&QuadraticSpec::new(10, 3.0, 1)).unwrap();
        let xs = p.x_star().to_vec();
        assert!(lyapunov(&p, &xs, &xs, 0.5, 1.0, 0.4, 0.1).abs() < 1e-12);
    }

    #[test]
    fn alpha_bar_values() {
        assert!((alpha_bar(0.1, 0.9, 0.4, 0.0) - 2.0 / (4.6f64.sqrt() + 1.0)).abs() < 1e-15);
        let s: f64 = 1.0 - 0.36;
        assert!((alpha_bar(0.1, 0.9, 0.4, 1.0) - 2.0 / ((s * s + 3.6).sqrt() + s)).abs() < 1e-15);
        assert_eq!(alpha_bar(0.99, 0.9, 0.4, 0.0), 0.99);
    }

    #[test]
    fn worked_constants() {
        let gmax = 1.0 / (2.0 * 0.81);
        let params = RaasParams::builder(1.0, 0.1)
            .theta(0.5)
            .vartheta(0.1)
            .gamma_max(gmax)
            .build()
            .unwrap();
        let c = theory_constants(&params, 5.0, &TheoryInputs::default()).unwrap();
        assert!((c.gamma_bar - 0.7 / 4.5).abs() < 1e-15);
        assert!((c.gamma_bar - 0.155556).abs() < 1e-6);
        let want = -(1.0 - 0.9 * (c.gamma_bar).sqrt()).ln();
        assert!((c.c_kappa.unwrap() - want).abs() < 1e-14);
        assert!((c.c_kappa.unwrap() - 0.4385).abs() < 1e-4);
        assert_eq!(c.d, 0.0);
    }

    #[test]
    fn zero_vartheta_is_rejected() {
        let params = RaasParams::builder(1.0, 0.1).vartheta(0.0).theta(0.5).build().unwrap();
        assert!(matches!(
            theory_constants(&params, 5.0, &TheoryInputs::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn reliability_boundary() {
        assert!(reliable(0.5, 0.1, 0.5, 0.2, 1.0));
        assert!(!reliable(0.5, 0.3, 0.5, 0.2, 1.0));
    }
}
