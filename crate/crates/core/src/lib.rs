//! Robust accelerated adaptive search (RAAS) for smooth convex minimization
//! under biased, heavy-tailed stochastic first- and zeroth-order oracles.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation:
//!
//! - [`problems`]: the general-convex quadratic and the strongly convex
//!   logistic-regression objectives, with exact value/gradient access and a
//!   deterministic reference solver.
//! - [`oracles`]: replayable noise tapes and the Student-t perturbed
//!   stochastic oracles built on top of them.
//! - [`raas`]: the trial-indexed RAAS state machine, including the
//!   coefficient recursion, momentum parameterization, acceptance tests,
//!   full backtracking and the stagnation switch.
//! - [`baselines`]: SGD, constant-step Nesterov, clipped Nesterov and the
//!   restricted RAAS configurations (SASS, adp-NAG).
//! - [`diagnostics`]: Lyapunov values, contraction envelopes, quasi-descent
//!   residuals, indicator statistics and the theory constants.
//!
//! File formats, orchestration and the command line live in the companion
//! `raas` crate.

#![cfg_attr(not(test), no_std)]
#![warn(missing_debug_implementations)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baselines;
pub mod diagnostics;
mod error;
pub mod linalg;
pub mod math;
pub mod oracles;
pub mod problems;
pub mod raas;
pub mod rng;

pub use error::{Error, Result};
pub use oracles::{NoiseConfig, NoiseTape, StochasticOracle};
pub use problems::Problem;
pub use raas::{RaasParams, RaasState, RunOptions, StopRule, Trace, TrialRecord};
