//! Trace-level checks of the convergence machinery.

use raas_core::diagnostics::{indicators, lambda_envelopes, quasi_descent_check};
use raas_core::raas::Momentum;
use serde::Serialize;

use crate::experiment::{ExperimentResult, MethodTrace};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunVerdict {
    pub label: String,
    pub seed: u64,
    pub envelope_ok: bool,
    pub quasi_descent_rows: usize,
    pub quasi_descent_violations: usize,
    pub worst_quasi_descent_residual: Option<f64>,
    /// Trials with `Φ_t < φ(x_t) − φ*`.
    pub lyapunov_below_gap: usize,
    /// Rejected trials that changed `Φ`.
    pub null_step_changes: usize,
    /// `(1−Λ)I > Θ` events before the stopping time.
    pub indicator_violations: usize,
    pub indicators_enforced: bool,
}

impl RunVerdict {
    pub fn passed(&self) -> bool {
        self.envelope_ok
            && self.quasi_descent_violations == 0
            && self.lyapunov_below_gap == 0
            && self.null_step_changes == 0
            && (!self.indicators_enforced || self.indicator_violations == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub verdicts: Vec<RunVerdict>,
    /// Runs without a Lyapunov structure (gradient-only methods, SASS).
    pub skipped: Vec<String>,
    pub failures: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.verdicts.iter().all(RunVerdict::passed)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

pub fn verify(result: &ExperimentResult) -> VerifyReport {
    let enforce = result.config.verify.indicators;
    let mut verdicts = Vec::new();
    let mut skipped = Vec::new();
    for run in &result.runs {
        let MethodTrace::Raas { params, trace } = &run.trace else {
            skipped.push(format!("{}/{}", run.label, run.seed));
            continue;
        };
        if params.momentum == Momentum::Disabled {
            skipped.push(format!("{}/{}", run.label, run.seed));
            continue;
        }
        let recs = &trace.records;
        let env = lambda_envelopes(recs, params);
        let qd = quasi_descent_check(recs, params.mu);
        let lyapunov_below_gap = recs
            .iter()
            .filter(|r| r.lyapunov.is_some_and(|phi| phi < r.gap - 1e-12 * r.gap.abs().max(1.0)))
            .count();
        let null_step_changes = recs
            .iter()
            .filter(|r| !r.accepted)
            .filter(|r| matches!((r.lyapunov, r.lyapunov_next), (Some(a), Some(b)) if !close(a, b)))
            .count();
        let horizon = run.stopping_time.map_or(recs.len(), |t| t.saturating_sub(1));
        let ind = indicators(&recs[..horizon.min(recs.len())]);
        verdicts.push(RunVerdict {
            label: run.label.clone(),
            seed: run.seed,
            envelope_ok: env.holds(),
            quasi_descent_rows: qd.rows.len(),
            quasi_descent_violations: qd.violations(),
            worst_quasi_descent_residual: qd.worst_residual(),
            lyapunov_below_gap,
            null_step_changes,
            indicator_violations: ind.violations,
            indicators_enforced: enforce,
        });
    }
    VerifyReport {
        verdicts,
        skipped,
        failures: result.failures.len(),
    }
}
