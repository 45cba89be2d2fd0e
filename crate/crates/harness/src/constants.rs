//! Theory constants for the RAAS settings of a config.

use raas_core::diagnostics::{theory_constants, TheoryConstants};

use crate::config::{ExperimentConfig, ResolvedMethod};
use crate::error::HarnessError;
use crate::experiment::prepare;

/// Constants for the first RAAS-engine method of the config.
pub fn constants(config: &ExperimentConfig) -> Result<(String, TheoryConstants), HarnessError> {
    let (problem, resolved) = prepare(config)?;
    for m in &config.methods {
        if let Some(ResolvedMethod::Raas(p)) = resolved.get(m.key()) {
            let c = theory_constants(p, problem.l(), &config.theory)?;
            return Ok((m.key().to_string(), c));
        }
    }
    Err(HarnessError::Invalid(vec!["constants need a RAAS-type method".into()]))
}
