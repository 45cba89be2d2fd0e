//! Replayable noise tapes and the stochastic oracles that read them.
//!
//! The gradient oracle returns `G(y) = ∇φ(y) + b + σ_g·ζ_t` with `ζ_t`
//! coordinatewise Student-t and `b` a fixed bias. The value oracle returns
//! `f(z) = φ(z) + σ_f·e_t(z)` for each of the three points queried in a trial.
//! Noise depends only on the trial index, never on the query point.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg;
use crate::math;
use crate::problems::Problem;
use crate::rng::{self, streams, TapePosition};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct NoiseConfig {
    pub sigma_g: f64,
    pub k_g: f64,
    pub bias_rel: f64,
    pub sigma_f: f64,
    pub k_f: f64,
}

impl NoiseConfig {
    /// No noise and no bias.
    pub fn exact() -> Self {
        NoiseConfig {
            sigma_g: 0.0,
            k_g: 2.1,
            bias_rel: 0.0,
            sigma_f: 0.0,
            k_f: 2.1,
        }
    }

    /// Unbiased noise with the heavy tails used throughout the experiments.
    pub fn heavy_tailed(sigma_g: f64, sigma_f: f64) -> Self {
        NoiseConfig {
            sigma_g,
            sigma_f,
            ..NoiseConfig::exact()
        }
    }

    pub fn with_bias(mut self, bias_rel: f64) -> Self {
        self.bias_rel = bias_rel;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be finite and nonnegative, got {v}")))
            }
        };
        nonneg("sigma_g", self.sigma_g)?;
        nonneg("sigma_f", self.sigma_f)?;
        nonneg("bias_rel", self.bias_rel)?;
        for (name, k) in [("k_g", self.k_g), ("k_f", self.k_f)] {
            if !(k > 1.0) {
                return Err(Error::config(format!("{name} must exceed 1, got {k}")));
            }
        }
        if self.bias_rel > 0.0 && !(self.k_g > 2.0) {
            return Err(Error::config(format!(
                "bias_rel > 0 needs k_g > 2, got k_g = {}",
                self.k_g
            )));
        }
        Ok(())
    }

    /// `BiasRel · σ_g · √(d k_g / (k_g − 2))`.
    pub fn bias_norm(&self, d: usize) -> f64 {
        if self.bias_rel == 0.0 {
            return 0.0;
        }
        self.bias_rel * self.sigma_g * math::sqrt(d as f64 * self.k_g / (self.k_g - 2.0))
    }
}

/// Fixed gradient bias along a seeded uniformly random direction.
pub fn make_bias(d: usize, config: &NoiseConfig, seed: u64) -> Result<Vec<f64>> {
    config.validate()?;
    let target = config.bias_norm(d);
    if target == 0.0 {
        return Ok(vec![0.0; d]);
    }
    let mut r = rng::seeded_rng(seed, streams::BIAS_DIRECTION);
    let u: Vec<f64> = (0..d).map(|_| rng::standard_normal(&mut r)).collect();
    let un = linalg::norm(&u);
    Ok(u.iter().map(|ui| target * ui / un).collect())
}

/// Pre-generated oracle noise for trials `1..=len`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTape {
    seed: u64,
    d: usize,
    config: NoiseConfig,
    len: usize,
    bias: Vec<f64>,
    /// Unscaled `ζ_t`, `len × d`, row `t − 1` for trial `t`.
    gradient: Vec<f64>,
    /// Unscaled function perturbations for `(x_t, ŷ_t, x̂_{t+1})`.
    function: Vec<[f64; 3]>,
}

impl NoiseTape {
    pub fn generate(seed: u64, d: usize, config: NoiseConfig, len: usize) -> Result<Self> {
        config.validate()?;
        let bias = make_bias(d, &config, seed)?;
        let gradient = if config.sigma_g > 0.0 {
            let mut g = Vec::with_capacity(len * d);
            for i in 0..len as u64 {
                for j in 0..d as u64 {
                    let pos = TapePosition::new(seed, streams::GRADIENT_NOISE, i, j);
                    g.push(rng::sample_student_t(pos, config.k_g));
                }
            }
            g
        } else {
            vec![0.0; len * d]
        };
        let function = if config.sigma_f > 0.0 {
            (0..len as u64)
                .map(|i| {
                    let draw =
                        |c| rng::sample_student_t(TapePosition::new(seed, streams::FUNCTION_NOISE, i, c), config.k_f);
                    [draw(0), draw(1), draw(2)]
                })
                .collect()
        } else {
            vec![[0.0; 3]; len]
        };
        Ok(NoiseTape {
            seed,
            d,
            config,
            len,
            bias,
            gradient,
            function,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn row(&self, trial: usize) -> Result<usize> {
        if trial == 0 || trial > self.len {
            return Err(Error::TapeExhausted { trial, len: self.len });
        }
        Ok(trial - 1)
    }

    /// Unscaled `ζ_t` for trial `t` (1-based).
    pub fn zeta(&self, trial: usize) -> Result<&[f64]> {
        let r = self.row(trial)?;
        Ok(&self.gradient[r * self.d..(r + 1) * self.d])
    }

    /// `b + σ_g·ζ_t`.
    pub fn gradient_error(&self, trial: usize) -> Result<Vec<f64>> {
        let zeta = self.zeta(trial)?;
        let mut e = self.bias.clone();
        if self.config.sigma_g > 0.0 {
            linalg::axpy(self.config.sigma_g, zeta, &mut e);
        }
        Ok(e)
    }

    /// `σ_f·(e_x, e_y, e_x⁺)` for trial `t`.
    pub fn function_errors(&self, trial: usize) -> Result<[f64; 3]> {
        let r = self.row(trial)?;
        let s = self.config.sigma_f;
        let raw = self.function[r];
        Ok([s * raw[0], s * raw[1], s * raw[2]])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub g: Vec<f64>,
    /// `∇φ(y)`, kept for diagnostics only.
    pub exact: Vec<f64>,
    /// `b + σ_g ζ_t` as read from the tape.
    pub noise: Vec<f64>,
    /// `W_t = ‖G_t − ∇φ(y)‖`.
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueSample {
    /// Noisy values at `(x_t, ŷ_t, x̂_{t+1})`.
    pub f: [f64; 3],
    /// Exact values at the same points, diagnostics only.
    pub exact: [f64; 3],
    pub errors: [f64; 3],
    /// `D_t`, the spread of the three errors.
    pub d: f64,
}

/// Oracle pair reading a shared tape.
#[derive(Debug, Clone, Copy)]
pub struct StochasticOracle<'a> {
    problem: &'a Problem,
    tape: &'a NoiseTape,
}

impl<'a> StochasticOracle<'a> {
    pub fn new(problem: &'a Problem, tape: &'a NoiseTape) -> Result<Self> {
        if problem.dimension() != tape.dimension() {
            return Err(Error::config(format!(
                "tape dimension {} does not match problem dimension {}",
                tape.dimension(),
                problem.dimension()
            )));
        }
        Ok(StochasticOracle { problem, tape })
    }

    pub fn problem(&self) -> &'a Problem {
        self.problem
    }

    pub fn tape(&self) -> &'a NoiseTape {
        self.tape
    }

    pub fn sfo(&self, y: &[f64], trial: usize) -> Result<GradientSample> {
        let noise = self.tape.gradient_error(trial)?;
        let exact = self.problem.gradient(y);
        let g = linalg::add_scaled(&exact, 1.0, &noise);
        let w = linalg::norm(&noise);
        Ok(GradientSample { g, exact, noise, w })
    }

    pub fn szo(&self, points: [&[f64]; 3], trial: usize) -> Result<ValueSample> {
        let errors = self.tape.function_errors(trial)?;
        let exact = points.map(|p| self.problem.value(p));
        let f = [exact[0] + errors[0], exact[1] + errors[1], exact[2] + errors[2]];
        Ok(ValueSample {
            f,
            exact,
            errors,
            d: spread(&errors),
        })
    }
}

/// `max − min`, which equals the largest pairwise absolute difference.
pub fn spread(values: &[f64; 3]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}
