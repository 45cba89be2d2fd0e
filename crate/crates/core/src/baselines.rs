//! Comparison methods.
//!
//! SGD, constant-step Nesterov and clipped Nesterov query the gradient oracle
//! once per iteration and never touch the value oracle. SASS and adp-NAG are
//! restrictions of RAAS and run on the same engine.

use alloc::format;
use alloc::vec::Vec;

use crate::linalg;
use crate::oracles::StochasticOracle;
use crate::raas::{self, Momentum, RaasParams, RunOptions, StopRule, Trace, TrialVectors};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Method {
    Sgd,
    ConsNag,
    AccClip,
    Sass,
    AdpNag,
    Raas,
    RaasSingle,
    RaasDouble,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Sgd,
        Method::ConsNag,
        Method::AccClip,
        Method::Sass,
        Method::AdpNag,
        Method::Raas,
        Method::RaasSingle,
        Method::RaasDouble,
    ];

    /// Label used in tables and plots.
    pub fn label(self) -> &'static str {
        match self {
            Method::Sgd => "SGD",
            Method::ConsNag => "cons-NAG",
            Method::AccClip => "Acc-Clip",
            Method::Sass => "SASS",
            Method::AdpNag => "adp-NAG",
            Method::Raas => "RAAS",
            Method::RaasSingle => "RAAS-Single",
            Method::RaasDouble => "RAAS-Double",
        }
    }

    /// Snake-case tag used in configs and file names.
    pub fn tag(self) -> &'static str {
        match self {
            Method::Sgd => "sgd",
            Method::ConsNag => "cons_nag",
            Method::AccClip => "acc_clip",
            Method::Sass => "sass",
            Method::AdpNag => "adp_nag",
            Method::Raas => "raas",
            Method::RaasSingle => "raas_single",
            Method::RaasDouble => "raas_double",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.tag() == tag)
    }

    /// Whether the method queries the value oracle.
    pub fn uses_values(self) -> bool {
        !matches!(self, Method::Sgd | Method::ConsNag | Method::AccClip)
    }
}

/// `x − ηG`
pub fn sgd_step(x: &[f64], g: &[f64], step: f64) -> Vec<f64> {
    linalg::add_scaled(x, -step, g)
}

/// Extrapolation point `x_t + β(x_t − x_{t−1})`.
pub fn nag_point(x: &[f64], x_prev: &[f64], beta: f64) -> Vec<f64> {
    x.iter().zip(x_prev).map(|(a, b)| a + beta * (a - b)).collect()
}

/// `y − ηG` with `y` from [`nag_point`] and `G` queried at `y`.
pub fn nag_step(y: &[f64], g: &[f64], step: f64) -> Vec<f64> {
    sgd_step(y, g, step)
}

/// `G·min{1, τ/‖G‖}`
pub fn clip(g: &[f64], tau: f64) -> Vec<f64> {
    let n = linalg::norm(g);
    if n <= tau {
        g.to_vec()
    } else {
        linalg::scale(g, tau / n)
    }
}

/// Hyperparameters of a gradient-only method.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FirstOrderParams {
    pub method: Method,
    pub step: f64,
    /// Momentum; ignored by SGD.
    pub beta: f64,
    /// Clip threshold; used by Acc-Clip only.
    pub clip: Option<f64>,
}

impl FirstOrderParams {
    pub fn sgd(step: f64) -> Self {
        FirstOrderParams {
            method: Method::Sgd,
            step,
            beta: 0.0,
            clip: None,
        }
    }

    pub fn cons_nag(step: f64, beta: f64) -> Self {
        FirstOrderParams {
            method: Method::ConsNag,
            step,
            beta,
            clip: None,
        }
    }

    pub fn acc_clip(step: f64, beta: f64, tau: f64) -> Self {
        FirstOrderParams {
            method: Method::AccClip,
            step,
            beta,
            clip: Some(tau),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.method, Method::Sgd | Method::ConsNag | Method::AccClip) {
            return Err(Error::config(format!(
                "{} is not a gradient-only method",
                self.method.label()
            )));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::config(format!("step must be positive, got {}", self.step)));
        }
        if !(self.beta >= 0.0 && self.beta < 1.0) {
            return Err(Error::config(format!("beta must lie in [0,1), got {}", self.beta)));
        }
        match (self.method, self.clip) {
            (Method::AccClip, Some(t)) if t > 0.0 && t.is_finite() => Ok(()),
            (Method::AccClip, _) => Err(Error::config("acc_clip needs a positive clip threshold")),
            _ => Ok(()),
        }
    }
}

/// SASS: no momentum and condition (II) off. Keeps the shared `γ_max` when
/// `μ = 0`; otherwise uses `100γ₀`, since the strongly convex cap degenerates
/// at `ϑ = 1`.
pub fn sass_params(base: &RaasParams) -> Result<RaasParams> {
    let gamma_max = if base.mu == 0.0 {
        base.gamma_max
    } else {
        100.0 * base.gamma0
    };
    RaasParams::builder(base.mu, base.gamma0)
        .nu(base.nu)
        .theta(base.theta)
        .vartheta(1.0)
        .gamma_max(gamma_max)
        .tolerance_mode(base.tolerance_mode)
        .tolerances(base.eps_f, base.eps_g)
        .check2(false)
        .momentum(Momentum::Disabled)
        .switch(None)
        .build()
}

/// adp-NAG: `(θ, ϑ) = (½, 0)` with condition (II) off.
pub fn adp_nag_params(base: &RaasParams) -> Result<RaasParams> {
    let mut b = RaasParams::builder(base.mu, base.gamma0)
        .nu(base.nu)
        .theta(0.5)
        .vartheta(0.0)
        .tolerance_mode(base.tolerance_mode)
        .tolerances(base.eps_f, base.eps_g)
        .check2(false)
        .switch(None);
    if base.mu == 0.0 {
        b = b.gamma_max(base.gamma_max);
    }
    b.build()
}

/// One iteration of a gradient-only method.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct IterRecord {
    pub t: usize,
    /// `φ(x_t) − φ*` before the step.
    pub gap: f64,
    /// `φ(x_{t+1}) − φ*`.
    pub gap_next: f64,
    /// `φ(y_t) − φ*` at the query point.
    pub y_gap: f64,
    /// `‖∇φ(y_t)‖`.
    pub grad_norm: f64,
    pub w: f64,
    /// Whether clipping changed the gradient.
    pub clipped: bool,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub vectors: Option<TrialVectors>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderTrace {
    pub records: Vec<IterRecord>,
    pub stopping_index: Option<usize>,
    pub final_x: Vec<f64>,
}

pub fn run_first_order(
    oracle: &StochasticOracle<'_>,
    params: &FirstOrderParams,
    x0: &[f64],
    options: &RunOptions,
) -> Result<FirstOrderTrace> {
    params.validate()?;
    let problem = oracle.problem();
    if x0.len() != problem.dimension() {
        return Err(Error::config("initial point has the wrong dimension"));
    }
    if oracle.tape().len() < options.trials {
        return Err(Error::TapeExhausted {
            trial: options.trials,
            len: oracle.tape().len(),
        });
    }
    let mut x = x0.to_vec();
    let mut x_prev = x0.to_vec();
    let mut gap = problem.gap(&x);
    let mut records = Vec::with_capacity(options.trials);
    let mut stopping_index = None;
    for t in 1..=options.trials {
        let y = match params.method {
            Method::Sgd => x.clone(),
            _ => nag_point(&x, &x_prev, params.beta),
        };
        let sample = oracle.sfo(&y, t).map_err(|e| e.at_trial(t))?;
        let (step_dir, clipped) = match params.clip {
            Some(tau) if params.method == Method::AccClip => {
                let c = clip(&sample.g, tau);
                let changed = c != sample.g;
                (c, changed)
            }
            _ => (sample.g.clone(), false),
        };
        let x_next = nag_step(&y, &step_dir, params.step);
        if !x_next.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("iterate became non-finite".into()).at_trial(t));
        }
        let gap_next = problem.gap(&x_next);
        let y_gap = if params.method == Method::Sgd {
            gap
        } else {
            problem.gap(&y)
        };
        let rec = IterRecord {
            t,
            gap,
            gap_next,
            y_gap,
            grad_norm: linalg::norm(&sample.exact),
            w: sample.w,
            clipped,
            vectors: options.capture_vectors.then(|| TrialVectors {
                x: x.clone(),
                y_hat: y.clone(),
                g: sample.g.clone(),
                gradient_noise: sample.noise.clone(),
            }),
        };
        x_prev = core::mem::replace(&mut x, x_next);
        gap = gap_next;
        let stop = options
            .stop
            .is_some_and(|s: StopRule| rec.y_gap.min(rec.gap_next) <= s.eps_phi || rec.grad_norm <= s.eps_grad);
        records.push(rec);
        if stop {
            stopping_index = Some(t);
            break;
        }
    }
    Ok(FirstOrderTrace {
        records,
        stopping_index,
        final_x: x,
    })
}

/// Runs SASS or adp-NAG through the RAAS engine.
pub fn run_restricted(
    oracle: &StochasticOracle<'_>,
    method: Method,
    base: &RaasParams,
    x0: &[f64],
    options: &RunOptions,
) -> Result<Trace> {
    let params = match method {
        Method::Sass => sass_params(base)?,
        Method::AdpNag => adp_nag_params(base)?,
        other => {
            return Err(Error::config(format!(
                "{} is not a restricted configuration",
                other.label()
            )))
        }
    };
    raas::run(oracle, &params, x0, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{NoiseConfig, NoiseTape};
    use crate::problems::{initial_point, make_quadratic, QuadraticSpec};

    #[test]
    fn step_examples() {
        assert_eq!(sgd_step(&[1.0, 2.0], &[0.0, 0.0], 0.3), vec![1.0, 2.0]);
        assert_eq!(sgd_step(&[1.0, 0.0], &[1.0, 0.0], 1.0), vec![0.0, 0.0]);
        assert_eq!(nag_point(&[1.0, 2.0], &[1.0, 2.0], 0.9), vec![1.0, 2.0]);
        let y = nag_point(&[1.0, 2.0], &[0.5, 0.0], 0.0);
        assert_eq!(nag_step(&y, &[1.0, 1.0], 0.5), sgd_step(&[1.0, 2.0], &[1.0, 1.0], 0.5));
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip(&[0.3, 0.4], 1.0), vec![0.3, 0.4]);
        let c = clip(&[6.0, 8.0], 5.0);
        assert!((c[0] - 3.0).abs() < 1e-15 && (c[1] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::from_tag(m.tag()), Some(m));
        }
        assert_eq!(Method::from_tag("adam"), None);
    }

    #[test]
    fn restrictions_have_expected_shape() {
        let base = RaasParams::builder(0.0, 0.03).build().unwrap();
        let s = sass_params(&base).unwrap();
        assert_eq!((s.vartheta, s.check2, s.momentum), (1.0, false, Momentum::Disabled));
        assert_eq!(s.gamma_max, 100.0 * base.gamma0);
        let a = adp_nag_params(&base).unwrap();
        assert_eq!((a.theta, a.vartheta, a.check2), (0.5, 0.0, false));
    }

    #[test]
    fn sass_never_extrapolates() {
        let p = make_quadratic(&QuadraticSpec::new(20, 4.0, 2)).unwrap();
        let tape = NoiseTape::generate(1, 20, NoiseConfig::heavy_tailed(0.5, 1.0), 60).unwrap();
        let o = StochasticOracle::new(&p, &tape).unwrap();
        let base = RaasParams::builder(0.0, 0.15 / 4.0).build().unwrap();
        let opts = RunOptions {
            capture_vectors: true,
            ..RunOptions::trials(60)
        };
        let tr = run_restricted(&o, Method::Sass, &base, &initial_point(20, 3), &opts).unwrap();
        for r in &tr.records {
            let v = r.vectors.as_ref().unwrap();
            assert_eq!(v.x, v.y_hat);
            assert_eq!(r.rho_hat, 0.0);
            assert_eq!(r.check2, None);
        }
    }

    #[test]
    fn gradient_methods_share_the_tape() {
        let p = make_quadratic(&QuadraticSpec::new(10, 2.0, 2)).unwrap();
        let tape = NoiseTape::generate(4, 10, NoiseConfig::heavy_tailed(1.0, 1.0), 30).unwrap();
        let o = StochasticOracle::new(&p, &tape).unwrap();
        let x0 = initial_point(10, 1);
        let opts = RunOptions {
            capture_vectors: true,
            ..RunOptions::trials(30)
        };
        let a = run_first_order(&o, &FirstOrderParams::sgd(0.1), &x0, &opts).unwrap();
        let b = run_first_order(&o, &FirstOrderParams::acc_clip(0.1, 0.9, 1.0), &x0, &opts).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(
                ra.vectors.as_ref().unwrap().gradient_noise,
                rb.vectors.as_ref().unwrap().gradient_noise
            );
        }
    }
}
