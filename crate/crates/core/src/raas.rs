//! The RAAS trial loop.
//!
//! Each trial computes a momentum coefficient from the current trial step,
//! extrapolates, queries the gradient oracle once and the value oracle on the
//! triple `(x_t, ŷ_t, x̂_{t+1})`, and accepts or rejects the step with a
//! relaxed Armijo test (I) and a two-point convexity test (II). Accepted
//! trials enlarge the trial step by `1/ν` (capped at `γ_max`), rejected ones
//! shrink it by `ν` and leave the iterate untouched.

use alloc::format;
use alloc::vec::Vec;

use crate::linalg;
use crate::math;
use crate::oracles::StochasticOracle;
use crate::{Error, Result};

/// How the additive tolerances `ε_f^{(t)}, ε_g^{(t)}` are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ToleranceMode {
    /// `μ = 0`: `ε_f = ε_f'·α̂_t`, `ε_g = ε_g'·‖ŷ_t − x_t‖`.
    /// `μ > 0`: `ε_f = ε_f'`, `ε_g = (ε_g')²/(2μ)`.
    Theory,
    /// `ε_f = ε_g = ε_f'` at every trial.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Momentum {
    /// Extrapolation through `ρ̂_t` and the auxiliary sequence `x̄_t`.
    Parameterized,
    /// `ŷ_t = x_t`; the auxiliary sequence is never updated.
    Disabled,
}

/// Stagnation switch on `(θ, ϑ)`. `None` thresholds disable that switch.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SwitchConfig {
    pub n_vartheta: Option<usize>,
    pub n_theta: Option<usize>,
    pub vartheta_safe: f64,
    pub theta_safe: f64,
    /// Turn condition (II) off once the θ-switch has fired.
    pub disable_check2_on_theta_switch: bool,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig::double()
    }
}

impl SwitchConfig {
    /// ϑ-switch only, after 20 stagnant trials.
    pub fn single() -> Self {
        SwitchConfig {
            n_vartheta: Some(20),
            n_theta: None,
            vartheta_safe: 1.0 - 1e-3,
            theta_safe: 0.5,
            disable_check2_on_theta_switch: false,
        }
    }

    /// ϑ-switch after 20 and θ-switch after 50 stagnant trials.
    pub fn double() -> Self {
        SwitchConfig {
            n_theta: Some(50),
            ..SwitchConfig::single()
        }
    }
}

/// Hyperparameters of one RAAS run. Build with [`RaasParams::builder`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RaasParams {
    pub mu: f64,
    pub nu: f64,
    pub theta: f64,
    pub vartheta: f64,
    pub gamma_max: f64,
    pub gamma0: f64,
    pub alpha0: f64,
    pub tolerance_mode: ToleranceMode,
    pub eps_f: f64,
    pub eps_g: f64,
    pub check2: bool,
    pub momentum: Momentum,
    pub switch: Option<SwitchConfig>,
}

/// Builder for [`RaasParams`]; unset `γ_max` and `α₀` get their defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RaasParamsBuilder {
    mu: f64,
    gamma0: f64,
    nu: f64,
    theta: f64,
    vartheta: f64,
    gamma_max: Option<f64>,
    alpha0: Option<f64>,
    tolerance_mode: ToleranceMode,
    eps_f: f64,
    eps_g: f64,
    check2: bool,
    momentum: Momentum,
    switch: Option<SwitchConfig>,
}

impl RaasParamsBuilder {
    pub fn nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }
    pub fn theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }
    pub fn vartheta(mut self, vartheta: f64) -> Self {
        self.vartheta = vartheta;
        self
    }
    pub fn gamma_max(mut self, gamma_max: f64) -> Self {
        self.gamma_max = Some(gamma_max);
        self
    }
    pub fn alpha0(mut self, alpha0: f64) -> Self {
        self.alpha0 = Some(alpha0);
        self
    }
    pub fn tolerance_mode(mut self, mode: ToleranceMode) -> Self {
        self.tolerance_mode = mode;
        self
    }
    /// Sets `ε_f'` and `ε_g'`.
    pub fn tolerances(mut self, eps_f: f64, eps_g: f64) -> Self {
        self.eps_f = eps_f;
        self.eps_g = eps_g;
        self
    }
    pub fn check2(mut self, enabled: bool) -> Self {
        self.check2 = enabled;
        self
    }
    pub fn momentum(mut self, momentum: Momentum) -> Self {
        self.momentum = momentum;
        self
    }
    pub fn switch(mut self, switch: Option<SwitchConfig>) -> Self {
        self.switch = switch;
        self
    }

    pub fn build(self) -> Result<RaasParams> {
        let gamma_max = match self.gamma_max {
            Some(g) => g,
            None => default_gamma_max(self.mu, self.vartheta, self.gamma0, self.momentum),
        };
        let alpha0 = match self.alpha0 {
            Some(a) => a,
            None => {
                let (lo, hi) = alpha0_interval(
                    self.mu,
                    self.theta,
                    effective_vartheta(self.vartheta, self.momentum),
                    self.gamma0,
                    gamma_max,
                );
                0.5 * (lo + hi.min(1.0))
            }
        };
        let params = RaasParams {
            mu: self.mu,
            nu: self.nu,
            theta: self.theta,
            vartheta: self.vartheta,
            gamma_max,
            gamma0: self.gamma0,
            alpha0,
            tolerance_mode: self.tolerance_mode,
            eps_f: self.eps_f,
            eps_g: self.eps_g,
            check2: self.check2,
            momentum: self.momentum,
            switch: self.switch,
        };
        params.validate()?;
        Ok(params)
    }
}

/// `γ_max`: `1/(2(1−ϑ)²μ)` when `μ > 0`, else `100·γ₀`. The momentum-free
/// configuration also uses `100·γ₀` since its `ϑ` is 1.
pub fn default_gamma_max(mu: f64, vartheta: f64, gamma0: f64, momentum: Momentum) -> f64 {
    if mu > 0.0 && momentum == Momentum::Parameterized {
        let s = 1.0 - vartheta;
        1.0 / (2.0 * s * s * mu)
    } else {
        100.0 * gamma0
    }
}

/// Open interval `((1−ϑ)√(2θμγ₀), √(γ₀/γ_max))` for `α₀`.
pub fn alpha0_interval(mu: f64, theta: f64, vartheta: f64, gamma0: f64, gamma_max: f64) -> (f64, f64) {
    (
        (1.0 - vartheta) * math::sqrt(2.0 * theta * mu * gamma0),
        math::sqrt(gamma0 / gamma_max),
    )
}

fn effective_vartheta(vartheta: f64, momentum: Momentum) -> f64 {
    match momentum {
        Momentum::Parameterized => vartheta,
        Momentum::Disabled => 1.0,
    }
}

fn in_open_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

impl RaasParams {
    /// Defaults: `ν = 0.9`, `θ = 0.4`, `ϑ = 0.1`, constant tolerances
    /// `ε_f' = ε_g' = 0.6`, condition (II) on, no switch.
    pub fn builder(mu: f64, gamma0: f64) -> RaasParamsBuilder {
        RaasParamsBuilder {
            mu,
            gamma0,
            nu: 0.9,
            theta: 0.4,
            vartheta: 0.1,
            gamma_max: None,
            alpha0: None,
            tolerance_mode: ToleranceMode::Constant,
            eps_f: 0.6,
            eps_g: 0.6,
            check2: true,
            momentum: Momentum::Parameterized,
            switch: None,
        }
    }

    /// `γ̂₁ = ν γ₀`.
    pub fn initial_trial_step(&self) -> f64 {
        self.nu * self.gamma0
    }

    /// `ϑ` as seen by the coefficient recursion (1 for the momentum-free path).
    pub fn effective_vartheta(&self) -> f64 {
        effective_vartheta(self.vartheta, self.momentum)
    }

    pub fn validate(&self) -> Result<()> {
        let finite_pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::config(format!("mu must be nonnegative, got {}", self.mu)));
        }
        if !in_open_unit(self.nu) {
            return Err(Error::config(format!("nu must lie in (0,1), got {}", self.nu)));
        }
        if !in_open_unit(self.theta) {
            return Err(Error::config(format!("theta must lie in (0,1), got {}", self.theta)));
        }
        match self.momentum {
            Momentum::Parameterized => {
                if !(self.vartheta >= 0.0 && self.vartheta < 1.0) {
                    return Err(Error::config(format!(
                        "vartheta must lie in [0,1), got {}",
                        self.vartheta
                    )));
                }
            }
            Momentum::Disabled => {
                if self.vartheta != 1.0 {
                    return Err(Error::config("the momentum-free path requires vartheta = 1"));
                }
                if self.switch.is_some() {
                    return Err(Error::config("the momentum-free path has no switch"));
                }
            }
        }
        finite_pos("gamma0", self.gamma0)?;
        finite_pos("gamma_max", self.gamma_max)?;
        if self.initial_trial_step() > self.gamma_max {
            return Err(Error::config(format!(
                "initial trial step nu*gamma0 = {} exceeds gamma_max = {}",
                self.initial_trial_step(),
                self.gamma_max
            )));
        }
        let vt = self.effective_vartheta();
        if self.mu > 0.0 && self.momentum == Momentum::Parameterized {
            let cap = 1.0 / (2.0 * (1.0 - vt) * (1.0 - vt) * self.mu);
            if self.gamma_max > cap * (1.0 + 1e-12) {
                return Err(Error::config(format!(
                    "gamma_max = {} exceeds 1/(2(1-vartheta)^2 mu) = {cap}",
                    self.gamma_max
                )));
            }
        }
        let (lo, hi) = alpha0_interval(self.mu, self.theta, vt, self.gamma0, self.gamma_max);
        if !(lo < hi) {
            return Err(Error::config(format!(
                "alpha0 interval ({lo}, {hi}) is empty; increase gamma_max or decrease gamma0"
            )));
        }
        if !(self.alpha0 > lo && self.alpha0 < hi && self.alpha0 < 1.0) {
            return Err(Error::config(format!(
                "alpha0 = {} outside ({lo}, {})",
                self.alpha0,
                hi.min(1.0)
            )));
        }
        for (name, v) in [("eps_f", self.eps_f), ("eps_g", self.eps_g)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if let Some(s) = &self.switch {
            if !(s.vartheta_safe >= 0.0 && s.vartheta_safe < 1.0) {
                return Err(Error::config("vartheta_safe must lie in [0,1)"));
            }
            if !in_open_unit(s.theta_safe) {
                return Err(Error::config("theta_safe must lie in (0,1)"));
            }
        }
        Ok(())
    }
}

/// Positive root of `α²/γ̂ = (1−α)α_prev²/γ_prev + 2θ(1−ϑ)²μα`.
pub fn solve_alpha(
    gamma_hat: f64,
    gamma_prev: f64,
    alpha_prev: f64,
    theta: f64,
    vartheta: f64,
    mu: f64,
) -> Result<f64> {
    let b = gamma_hat / gamma_prev * alpha_prev * alpha_prev;
    let c = 2.0 * theta * (1.0 - vartheta) * (1.0 - vartheta) * mu * gamma_hat;
    let s = b - c;
    let disc = math::sqrt(s * s + 4.0 * b);
    let alpha = if s >= 0.0 {
        2.0 * b / (s + disc)
    } else {
        0.5 * (disc - s)
    };
    if !in_open_unit(alpha) {
        return Err(Error::invariant(format!(
            "alpha = {alpha} outside (0,1) (b = {b}, c = {c})"
        )));
    }
    Ok(alpha)
}

/// Residual of the defining equation of `α̂`, in the `1/γ` scaling.
pub fn alpha_residual(
    alpha: f64,
    gamma_hat: f64,
    gamma_prev: f64,
    alpha_prev: f64,
    theta: f64,
    vartheta: f64,
    mu: f64,
) -> f64 {
    let c = 2.0 * theta * (1.0 - vartheta) * (1.0 - vartheta) * mu;
    alpha * alpha / gamma_hat - (1.0 - alpha) * alpha_prev * alpha_prev / gamma_prev - c * alpha
}

/// `(ρ̂_t, β̂_t)`.
pub fn momentum_coefficients(
    alpha_hat: f64,
    alpha_prev: f64,
    gamma_hat: f64,
    theta: f64,
    vartheta: f64,
    mu: f64,
) -> Result<(f64, f64)> {
    let s = 1.0 - vartheta;
    let beta = 2.0 * s * s * theta * mu * gamma_hat / alpha_hat;
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invariant(format!("beta_hat = {beta} outside [0,1)")));
    }
    let rho =
        alpha_hat * (1.0 - alpha_prev) * (1.0 - beta) / (alpha_prev * (1.0 - alpha_hat + alpha_hat * (1.0 - beta) / s));
    Ok((rho, beta))
}

/// Threshold `(1−θ)/(2−θ)` above which the truncated branch of `γ'` is active.
pub fn truncation_threshold(theta: f64) -> f64 {
    (1.0 - theta) / (2.0 - theta)
}

/// `γ' = γ(1−α)⁻¹·max{2θ − α(1−ϑ)⁻¹, 2θ + (θ−2)α}`.
pub fn auxiliary_step(gamma: f64, alpha: f64, theta: f64, vartheta: f64) -> f64 {
    let untruncated = 2.0 * theta - alpha / (1.0 - vartheta);
    let truncated = 2.0 * theta + (theta - 2.0) * alpha;
    gamma / (1.0 - alpha) * untruncated.max(truncated)
}

/// `(ε_f^{(t)}, ε_g^{(t)})`.
pub fn tolerances(
    mode: ToleranceMode,
    mu: f64,
    eps_f: f64,
    eps_g: f64,
    alpha_hat: f64,
    extrapolation_norm: f64,
) -> (f64, f64) {
    match mode {
        ToleranceMode::Constant => (eps_f, eps_f),
        ToleranceMode::Theory if mu > 0.0 => (eps_f, eps_g * eps_g / (2.0 * mu)),
        ToleranceMode::Theory => (eps_f * alpha_hat, eps_g * extrapolation_norm),
    }
}

/// Scaling `ℰ_t` of the zeroth-order reliability threshold.
pub fn reliability_scale(mode: ToleranceMode, mu: f64, alpha_hat: f64) -> f64 {
    if mode == ToleranceMode::Theory && mu == 0.0 {
        alpha_hat
    } else {
        1.0
    }
}

/// Condition (I): `f(x̂) ≤ f(ŷ) − γ̂θ‖G‖² + ε_f`.
pub fn armijo_holds(f_y: f64, f_x_next: f64, g_norm_sq: f64, gamma_hat: f64, theta: f64, eps_f: f64) -> bool {
    f_x_next <= f_y - (gamma_hat * theta) * g_norm_sq + eps_f
}

/// Condition (II): `f(ŷ) ≤ f(x) + ⟨G, ŷ − x⟩ + ε_g + ε_f`.
pub fn convexity_holds(f_x: f64, f_y: f64, g: &[f64], y: &[f64], x: &[f64], eps_g: f64, eps_f: f64) -> bool {
    let inner: f64 = g.iter().zip(y.iter().zip(x)).map(|(gi, (yi, xi))| gi * (yi - xi)).sum();
    f_y <= f_x + inner + eps_g + eps_f
}

/// Values and vectors entering the acceptance test of one trial.
#[derive(Debug, Clone, Copy)]
pub struct AcceptanceInput<'a> {
    pub f_x: f64,
    pub f_y: f64,
    pub f_x_next: f64,
    pub g: &'a [f64],
    pub y: &'a [f64],
    pub x: &'a [f64],
    pub gamma_hat: f64,
    pub theta: f64,
    pub eps_f: f64,
    pub eps_g: f64,
    pub check2: bool,
}

/// `Θ_t`.
pub fn check_acceptance(input: &AcceptanceInput<'_>) -> bool {
    let i = input;
    armijo_holds(i.f_y, i.f_x_next, linalg::norm_sq(i.g), i.gamma_hat, i.theta, i.eps_f)
        && (!i.check2 || convexity_holds(i.f_x, i.f_y, i.g, i.y, i.x, i.eps_g, i.eps_f))
}

/// Full backtracking: grow by `1/ν` (capped) after acceptance, shrink by `ν`
/// after rejection.
pub fn step_size_update(gamma_hat: f64, accepted: bool, nu: f64, gamma_max: f64) -> f64 {
    if accepted {
        (gamma_hat / nu).min(gamma_max)
    } else {
        nu * gamma_hat
    }
}

/// Bookkeeping of the stagnation switch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SwitchState {
    pub gamma_rec: f64,
    pub k_stag: usize,
    pub vartheta_switched: bool,
    pub theta_switched: bool,
}

/// One switch update at the start of a trial. Returns the `(θ, ϑ)` in effect.
pub fn switch_update(
    state: &mut SwitchState,
    gamma_hat: f64,
    config: &SwitchConfig,
    theta: f64,
    vartheta: f64,
) -> (f64, f64) {
    let (mut theta, mut vartheta) = (theta, vartheta);
    if gamma_hat > state.gamma_rec {
        state.gamma_rec = gamma_hat;
        state.k_stag = 0;
    } else {
        state.k_stag += 1;
        if let Some(n) = config.n_vartheta {
            if state.k_stag >= n && !state.vartheta_switched {
                vartheta = config.vartheta_safe;
                state.vartheta_switched = true;
            }
        }
        if let Some(n) = config.n_theta {
            if state.k_stag >= n && !state.theta_switched {
                theta = config.theta_safe;
                state.theta_switched = true;
            }
        }
    }
    (theta, vartheta)
}

/// Trial-indexed iterate state.
#[derive(Debug, Clone, PartialEq)]
pub struct RaasState {
    /// Index of the next trial, starting at 1.
    pub t: usize,
    pub x: Vec<f64>,
    /// Iterate preceding the most recent accepted step.
    pub x_prev: Vec<f64>,
    pub x_bar: Vec<f64>,
    /// Retained step `γ_{t−1}`.
    pub gamma_prev: f64,
    /// Trial step `γ̂_t`.
    pub gamma_hat: f64,
    /// Retained coefficient `α_{t−1}`.
    pub alpha_prev: f64,
    pub theta: f64,
    pub vartheta: f64,
    pub switch: SwitchState,
    /// `y` and `γ'/γ` of the most recent accepted trial.
    pub last_accepted: Option<(Vec<f64>, f64)>,
}

impl RaasState {
    /// `x₀ = x₁ = x̄₁`, `γ̂₁ = νγ₀`.
    pub fn new(params: &RaasParams, x0: &[f64]) -> Self {
        RaasState {
            t: 1,
            x: x0.to_vec(),
            x_prev: x0.to_vec(),
            x_bar: x0.to_vec(),
            gamma_prev: params.gamma0,
            gamma_hat: params.initial_trial_step(),
            alpha_prev: params.alpha0,
            theta: params.theta,
            vartheta: params.effective_vartheta(),
            switch: SwitchState::default(),
            last_accepted: None,
        }
    }

    /// `z_t`; equals `x_t` on the momentum-free path.
    pub fn z(&self) -> Vec<f64> {
        let scale = (1.0 - self.alpha_prev) / self.alpha_prev * (1.0 - self.vartheta);
        let mut z = self.x.clone();
        if scale != 0.0 {
            for (zi, (b, p)) in z.iter_mut().zip(self.x_bar.iter().zip(&self.x_prev)) {
                *zi += scale * (b - p);
            }
        }
        z
    }
}

/// Per-trial vectors, captured on request.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialVectors {
    pub x: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub g: Vec<f64>,
    /// `b + σ_g ζ_t` as read from the tape.
    pub gradient_noise: Vec<f64>,
}

/// Everything logged about one trial.
///
/// `gap`, `lyapunov` describe the state entering the trial, `gap_next`,
/// `lyapunov_next` the state leaving it. Exact-oracle quantities are for
/// diagnostics only and never feed back into the algorithm.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TrialRecord {
    pub t: usize,
    pub accepted: bool,
    pub check1: bool,
    pub check2: Option<bool>,
    pub gamma_hat: f64,
    pub gamma_prev: f64,
    pub gamma: f64,
    pub alpha_prev: f64,
    pub alpha_hat: f64,
    pub alpha: f64,
    pub beta_hat: f64,
    pub rho_hat: f64,
    pub gamma_prime: Option<f64>,
    pub theta: f64,
    pub vartheta: f64,
    pub w: f64,
    pub d: f64,
    pub errors: [f64; 3],
    pub eps_f: f64,
    pub eps_g: f64,
    pub reliable: bool,
    pub gamma_bar: Option<f64>,
    pub large_step: Option<bool>,
    pub lyapunov: Option<f64>,
    pub lyapunov_next: Option<f64>,
    pub gap: f64,
    pub gap_next: f64,
    pub y_gap: f64,
    pub trial_gap: f64,
    pub grad_norm: f64,
    pub y_dist_sq: f64,
    pub grad_error_inner: f64,
    pub extrapolation_norm: f64,
    pub truncation_bracket: Option<f64>,
    pub z_dist: Option<f64>,
    pub y_z_dist: Option<f64>,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub vectors: Option<TrialVectors>,
}

/// `γ̄ = min{2(1−2ϑ−θ(1−ϑ))/(L(1−ϑ)), γ_max}`, undefined when the numerator
/// is not positive.
pub fn large_step_threshold(l: f64, theta: f64, vartheta: f64, gamma_max: f64) -> Option<f64> {
    let num = 2.0 * (1.0 - 2.0 * vartheta - theta * (1.0 - vartheta));
    if !(num > 0.0) || vartheta >= 1.0 {
        return None;
    }
    Some((num / (l * (1.0 - vartheta))).min(gamma_max))
}

fn lyapunov_value(gap: f64, z_dist_sq: f64, alpha: f64, gamma: f64, theta: f64, vartheta: f64) -> f64 {
    let s = 1.0 - vartheta;
    gap + alpha * alpha / (4.0 * theta * s * s * gamma) * z_dist_sq
}

/// Executes one trial in place.
pub fn trial(
    state: &mut RaasState,
    oracle: &StochasticOracle<'_>,
    params: &RaasParams,
    capture_vectors: bool,
) -> Result<TrialRecord> {
    let t = state.t;
    trial_inner(state, oracle, params, capture_vectors).map_err(|e| e.at_trial(t))
}

fn trial_inner(
    state: &mut RaasState,
    oracle: &StochasticOracle<'_>,
    params: &RaasParams,
    capture_vectors: bool,
) -> Result<TrialRecord> {
    let problem = oracle.problem();
    let x_star = problem.x_star();
    let t = state.t;
    let momentum = params.momentum == Momentum::Parameterized;

    if let Some(cfg) = &params.switch {
        let (th, vt) = switch_update(&mut state.switch, state.gamma_hat, cfg, state.theta, state.vartheta);
        state.theta = th;
        state.vartheta = vt;
    }
    let (theta, vartheta) = (state.theta, state.vartheta);
    let gamma_hat = state.gamma_hat;

    let alpha_hat = solve_alpha(
        gamma_hat,
        state.gamma_prev,
        state.alpha_prev,
        theta,
        vartheta,
        params.mu,
    )?;
    let (rho_hat, beta_hat) = if momentum {
        momentum_coefficients(alpha_hat, state.alpha_prev, gamma_hat, theta, vartheta, params.mu)?
    } else {
        (0.0, 0.0)
    };

    let mut y = state.x.clone();
    if rho_hat != 0.0 {
        for (yi, (b, p)) in y.iter_mut().zip(state.x_bar.iter().zip(&state.x_prev)) {
            *yi += rho_hat * (b - p);
        }
    }
    let extrapolation_norm = linalg::dist(&y, &state.x);
    let (eps_f, eps_g) = tolerances(
        params.tolerance_mode,
        params.mu,
        params.eps_f,
        params.eps_g,
        alpha_hat,
        extrapolation_norm,
    );

    let grad = oracle.sfo(&y, t)?;
    let x_hat = linalg::add_scaled(&y, -gamma_hat, &grad.g);
    let values = oracle.szo([&state.x, &y, &x_hat], t)?;
    if !(values.f.iter().all(|v| v.is_finite()) && grad.g.iter().all(|v| v.is_finite())) {
        return Err(Error::Numeric("non-finite oracle output".into()));
    }

    let check2_on = params.check2
        && !(state.switch.theta_switched && params.switch.is_some_and(|s| s.disable_check2_on_theta_switch));
    let check1 = armijo_holds(
        values.f[1],
        values.f[2],
        linalg::norm_sq(&grad.g),
        gamma_hat,
        theta,
        eps_f,
    );
    let check2 = check2_on.then(|| convexity_holds(values.f[0], values.f[1], &grad.g, &y, &state.x, eps_g, eps_f));
    let accepted = check1 && check2.unwrap_or(true);

    // Diagnostics on the entering state.
    let gap = problem.gap(&state.x);
    let y_gap = problem.gap(&y);
    let trial_gap = problem.gap(&x_hat);
    let y_minus_star = linalg::sub(&y, x_star);
    let grad_error_inner = -linalg::dot(&y_minus_star, &grad.noise);
    let (lyapunov, z_dist, y_z_dist) = if momentum {
        let z = state.z();
        let zd2 = linalg::dist_sq(&z, x_star);
        (
            Some(lyapunov_value(
                gap,
                zd2,
                state.alpha_prev,
                state.gamma_prev,
                theta,
                vartheta,
            )),
            Some(math::sqrt(zd2)),
            Some(linalg::dist(&y, &z)),
        )
    } else {
        (None, None, None)
    };
    let truncation_bracket = match (&state.last_accepted, momentum) {
        (Some((y_last, ratio)), true) => {
            let a = state.alpha_prev;
            let k = (1.0 - a) / a;
            Some(k * linalg::dist(y_last, &state.x_prev) + k * math::abs(*ratio) * linalg::dist(y_last, &state.x))
        }
        _ => None,
    };
    let gamma_bar = large_step_threshold(problem.l(), theta, vartheta, params.gamma_max);
    let scale = reliability_scale(params.tolerance_mode, params.mu, alpha_hat);
    let reliable = grad.w <= params.eps_g && values.d <= scale * params.eps_f;

    let vectors = capture_vectors.then(|| TrialVectors {
        x: state.x.clone(),
        y_hat: y.clone(),
        g: grad.g.clone(),
        gradient_noise: grad.noise.clone(),
    });

    let gamma_prev = state.gamma_prev;
    let alpha_prev = state.alpha_prev;
    let mut gamma_prime = None;
    if accepted {
        let gp = if momentum {
            let gp = auxiliary_step(gamma_hat, alpha_hat, theta, vartheta);
            state.x_bar = linalg::add_scaled(&y, -gp, &grad.g);
            gamma_prime = Some(gp);
            state.last_accepted = Some((y.clone(), gp / gamma_hat));
            gp
        } else {
            0.0
        };
        let _ = gp;
        state.x_prev = core::mem::replace(&mut state.x, x_hat);
        state.gamma_prev = gamma_hat;
        state.alpha_prev = alpha_hat;
    }
    state.gamma_hat = step_size_update(gamma_hat, accepted, params.nu, params.gamma_max);
    state.t += 1;

    let gap_next = if accepted { trial_gap } else { gap };
    let lyapunov_next = match (momentum, accepted) {
        (false, _) => None,
        (true, false) => lyapunov,
        (true, true) => {
            let zd2 = linalg::dist_sq(&state.z(), x_star);
            Some(lyapunov_value(
                gap_next,
                zd2,
                state.alpha_prev,
                state.gamma_prev,
                theta,
                vartheta,
            ))
        }
    };

    Ok(TrialRecord {
        t,
        accepted,
        check1,
        check2,
        gamma_hat,
        gamma_prev,
        gamma: state.gamma_prev,
        alpha_prev,
        alpha_hat,
        alpha: state.alpha_prev,
        beta_hat,
        rho_hat,
        gamma_prime,
        theta,
        vartheta,
        w: grad.w,
        d: values.d,
        errors: values.errors,
        eps_f,
        eps_g,
        reliable,
        gamma_bar,
        large_step: gamma_bar.map(|gb| gamma_hat >= gb),
        lyapunov,
        lyapunov_next,
        gap,
        gap_next,
        y_gap,
        trial_gap,
        grad_norm: linalg::norm(&grad.exact),
        y_dist_sq: linalg::norm_sq(&y_minus_star),
        grad_error_inner,
        extrapolation_norm,
        truncation_bracket,
        z_dist,
        y_z_dist,
        vectors,
    })
}

/// Diagnostic stopping rule `min{φ(x̂), φ(ŷ)} − φ* ≤ ε_φ or ‖∇φ(ŷ)‖ ≤ ε_∇`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct StopRule {
    pub eps_phi: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub eps_grad: f64,
}

impl StopRule {
    pub fn hit(&self, record: &TrialRecord) -> bool {
        record.y_gap.min(record.trial_gap) <= self.eps_phi || record.grad_norm <= self.eps_grad
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub trials: usize,
    /// Stop at the first trial satisfying the rule.
    pub stop: Option<StopRule>,
    pub capture_vectors: bool,
}

impl RunOptions {
    pub fn trials(trials: usize) -> Self {
        RunOptions {
            trials,
            stop: None,
            capture_vectors: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TrialRecord>,
    /// First trial index meeting the stopping rule.
    pub stopping_index: Option<usize>,
    pub final_state: RaasState,
}

/// Runs RAAS from `x0` for `options.trials` trials or until the stopping rule
/// fires.
pub fn run(oracle: &StochasticOracle<'_>, params: &RaasParams, x0: &[f64], options: &RunOptions) -> Result<Trace> {
    params.validate()?;
    let problem = oracle.problem();
    if x0.len() != problem.dimension() {
        return Err(Error::config("initial point has the wrong dimension"));
    }
    if params.tolerance_mode == ToleranceMode::Theory && params.mu != problem.mu() {
        return Err(Error::config(format!(
            "theory tolerances need mu = problem mu ({}), got {}",
            problem.mu(),
            params.mu
        )));
    }
    if options.trials == 0 {
        return Err(Error::config("at least one trial is required"));
    }
    if oracle.tape().len() < options.trials {
        return Err(Error::TapeExhausted {
            trial: options.trials,
            len: oracle.tape().len(),
        });
    }
    let mut state = RaasState::new(params, x0);
    let mut records = Vec::with_capacity(options.trials);
    let mut stopping_index = None;
    for _ in 0..options.trials {
        let rec = trial(&mut state, oracle, params, options.capture_vectors)?;
        let stop = options.stop.is_some_and(|s| s.hit(&rec));
        if stop {
            stopping_index = Some(rec.t);
        }
        records.push(rec);
        if stop {
            break;
        }
    }
    Ok(Trace {
        records,
        stopping_index,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{NoiseConfig, NoiseTape};
    use crate::problems::{make_quadratic, Problem, QuadraticSpec};

    #[test]
    fn golden_ratio_root() {
        let a = solve_alpha(1.0, 1.0, 1.0, 0.4, 0.1, 0.0).unwrap();
        assert!((a - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert!((a - 0.6180339887).abs() < 1e-10);
    }

    #[test]
    fn quarter_root() {
        // b = 0.25 from γ̂/γ_prev = 1, α_prev = 0.5.
        let a = solve_alpha(1.0, 1.0, 0.5, 0.4, 0.1, 0.0).unwrap();
        assert!((a - 0.3903882032).abs() < 1e-10);
    }

    #[test]
    fn strongly_convex_root_and_residual() {
        // c = 2θ(1−ϑ)²μγ̂ = 0.1 with θ = 0.5, ϑ = 0, μ = 0.1, γ̂ = 1.
        let a = solve_alpha(1.0, 1.0, 0.5, 0.5, 0.0, 0.1).unwrap();
        let want = (-0.15 + (0.0225f64 + 1.0).sqrt()) / 2.0;
        assert!((a - want).abs() < 1e-15);
        assert!((a - 0.4305937104).abs() < 1e-10);
        assert!(alpha_residual(a, 1.0, 1.0, 0.5, 0.5, 0.0, 0.1).abs() < 1e-12);
    }

    #[test]
    fn nesterov_form_at_zero_vartheta() {
        let (rho, beta) = momentum_coefficients(0.4, 0.5, 1.0, 0.4, 0.0, 0.0).unwrap();
        assert_eq!(beta, 0.0);
        assert!((rho - 0.4).abs() < 1e-15);
        let (rho, _) = momentum_coefficients(0.3, 0.3, 1.0, 0.4, 0.0, 0.0).unwrap();
        assert!((rho - 0.7).abs() < 1e-15);
    }

    #[test]
    fn momentum_vanishes_as_vartheta_grows() {
        let (ap, ah) = (0.4, 0.3);
        for &vt in &[0.9, 0.99, 0.999, 0.999_999] {
            let (rho, _) = momentum_coefficients(ah, ap, 0.5, 0.4, vt, 0.0).unwrap();
            assert!(rho <= (1.0 - vt) * (1.0 - ap) / ap * (1.0 + 1e-12));
        }
    }

    #[test]
    fn beta_breach_is_reported() {
        // α̂ below √(Cγ̂) makes β̂ ≥ 1.
        assert!(matches!(
            momentum_coefficients(0.01, 0.5, 1.0, 0.5, 0.0, 1.0),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn auxiliary_step_branches() {
        assert!((auxiliary_step(1.0, 0.5, 0.5, 0.0) - 1.0).abs() < 1e-15);
        let g = auxiliary_step(1.0, 0.4, 0.5, 0.5);
        assert!((g - 0.4 / 0.6).abs() < 1e-15);
        // Past the threshold the value no longer depends on ϑ.
        assert_eq!(g, auxiliary_step(1.0, 0.4, 0.5, 0.9));
        for &vt in &[0.0, 0.3, 0.9] {
            assert!((auxiliary_step(1.0, 1e-9, 0.4, vt) - 0.8).abs() < 1e-8);
        }
        // Branch switch exactly at (1−θ)/(2−θ).
        let theta = 0.4;
        let vt = truncation_threshold(theta);
        let a = 0.3;
        let u = 2.0 * theta - a / (1.0 - vt);
        let tr = 2.0 * theta + (theta - 2.0) * a;
        assert!((u - tr).abs() < 1e-15);
    }

    #[test]
    fn tolerance_schedules() {
        let (f, g) = tolerances(ToleranceMode::Theory, 0.1, 0.3, 0.2, 0.5, 9.0);
        assert_eq!(f, 0.3);
        assert!((g - 0.2).abs() < 1e-15);
        let (f, g) = tolerances(ToleranceMode::Theory, 0.0, 0.3, 0.2, 0.5, 0.0);
        assert_eq!((f, g), (0.15, 0.0));
        assert_eq!(tolerances(ToleranceMode::Constant, 0.0, 0.6, 0.1, 0.5, 3.0), (0.6, 0.6));
    }

    #[test]
    fn acceptance_predicate_examples() {
        assert!(armijo_holds(2.0, 1.0, 1.0, 1.0, 0.5, 0.0));
        let x = [0.0, 1.0];
        assert!(convexity_holds(3.0, 3.0, &[5.0, -2.0], &x, &x, 0.0, 0.0));
        // φ = ½x², y = 1, G = 1, γ = 1, θ = ½: accepted at the boundary.
        let phi = |v: f64| 0.5 * v * v;
        let input = AcceptanceInput {
            f_x: phi(1.0),
            f_y: phi(1.0),
            f_x_next: phi(0.0),
            g: &[1.0],
            y: &[1.0],
            x: &[1.0],
            gamma_hat: 1.0,
            theta: 0.5,
            eps_f: 0.0,
            eps_g: 0.0,
            check2: true,
        };
        assert!(check_acceptance(&input));
    }

    #[test]
    fn step_size_examples() {
        assert!((step_size_update(1.0, true, 0.9, 2.0) - 1.0 / 0.9).abs() < 1e-15);
        assert_eq!(step_size_update(1.9, true, 0.9, 2.0), 2.0);
        assert_eq!(step_size_update(1.0, false, 0.9, 2.0), 0.9);
    }

    #[test]
    fn switch_fires_once_at_thresholds() {
        let cfg = SwitchConfig::double();
        let mut s = SwitchState::default();
        let (mut th, mut vt) = (0.4, 0.1);
        (th, vt) = switch_update(&mut s, 1.0, &cfg, th, vt);
        assert_eq!(s.k_stag, 0);
        for k in 1..=60 {
            (th, vt) = switch_update(&mut s, 0.5, &cfg, th, vt);
            assert_eq!(s.k_stag, k);
            assert_eq!(vt == cfg.vartheta_safe, k >= 20, "k = {k}");
            assert_eq!(th == 0.5, k >= 50, "k = {k}");
        }
        // A new record resets the counter but never undoes a switch.
        (th, vt) = switch_update(&mut s, 2.0, &cfg, th, vt);
        assert_eq!((s.k_stag, th, vt), (0, 0.5, cfg.vartheta_safe));
    }

    #[test]
    fn growing_steps_never_switch() {
        let cfg = SwitchConfig::double();
        let mut s = SwitchState::default();
        let mut g = 0.1;
        for _ in 0..100 {
            let (th, vt) = switch_update(&mut s, g, &cfg, 0.4, 0.1);
            assert_eq!((th, vt, s.k_stag), (0.4, 0.1, 0));
            g *= 1.01;
        }
    }

    fn setup(noise: NoiseConfig) -> (Problem, NoiseTape) {
        let p = make_quadratic(&QuadraticSpec::new(20, 5.0, 3)).unwrap();
        let tape = NoiseTape::generate(42, 20, noise, 200).unwrap();
        (p, tape)
    }

    #[test]
    fn first_trial_is_a_gradient_step() {
        let (p, tape) = setup(NoiseConfig::exact());
        let o = StochasticOracle::new(&p, &tape).unwrap();
        let params = RaasParams::builder(0.0, 0.01).build().unwrap();
        let x0 = crate::problems::initial_point(20, 1);
        let mut st = RaasState::new(&params, &x0);
        let rec = trial(&mut st, &o, &params, true).unwrap();
        assert_eq!(rec.vectors.unwrap().y_hat, x0);
        assert!(rec.accepted);
        assert!(rec.gap_next < rec.gap);
    }

    #[test]
    fn validation_rejects_empty_alpha_interval() {
        // Above the strongly convex cap the α₀ interval would be empty.
        let err = RaasParams::builder(1.0, 0.5).gamma_max(2.0).vartheta(0.1).build();
        assert!(matches!(err, Err(Error::Config(_))));
        let err = RaasParams::builder(0.0, 0.5).gamma_max(2.0).alpha0(0.9).build();
        assert!(matches!(err, Err(Error::Config(_))));
        assert!(RaasParams::builder(0.0, 0.01).nu(1.0).build().is_err());
        assert!(RaasParams::builder(0.0, 0.01).alpha0(0.5).build().is_err());
    }

    #[test]
    fn rejected_trial_is_a_null_step() {
        let (p, tape) = setup(NoiseConfig::heavy_tailed(1.5, 10.0));
        let o = StochasticOracle::new(&p, &tape).unwrap();
        let params = RaasParams::builder(0.0, 0.15 / 5.0)
            .tolerances(0.0, 0.0)
            .build()
            .unwrap();
        let mut st = RaasState::new(&params, &crate::problems::initial_point(20, 1));
        let mut saw_reject = false;
        for _ in 0..100 {
            let before = st.clone();
            let rec = trial(&mut st, &o, &params, false).unwrap();
            if !rec.accepted {
                saw_reject = true;
                assert_eq!(st.x, before.x);
                assert_eq!(st.x_bar, before.x_bar);
                assert_eq!(st.x_prev, before.x_prev);
                assert_eq!(st.gamma_prev.to_bits(), before.gamma_prev.to_bits());
                assert_eq!(rec.lyapunov, rec.lyapunov_next);
                assert_eq!(rec.gamma_prime, None);
            } else {
                assert!(rec.gamma / rec.gamma_prev <= 1.0 / params.nu + 1e-12);
            }
        }
        assert!(saw_reject);
    }
}
