//! Running every (method, seed) pair of a config.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use raas_core::baselines::{run_first_order, FirstOrderParams, FirstOrderTrace, Method};
use raas_core::diagnostics::stopping_time;
use raas_core::problems::{initial_point, make_logistic, make_quadratic};
use raas_core::raas::{self, RaasParams, Trace};
use raas_core::{NoiseConfig, NoiseTape, Problem, RunOptions, StochasticOracle};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ProblemSpec, ResolvedMethod};
use crate::error::HarnessError;

pub fn build_problem(spec: &ProblemSpec) -> raas_core::Result<Problem> {
    match spec {
        ProblemSpec::Quadratic(q) => make_quadratic(q),
        ProblemSpec::Logistic(l) => make_logistic(l),
    }
}

/// SHA-256 of the canonical config, the method label and the seed.
pub fn fingerprint(config: &ExperimentConfig, label: &str, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(config.canonical().as_bytes());
    h.update(b"\n");
    h.update(label.as_bytes());
    h.update(b"\n");
    h.update(seed.to_le_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum MethodTrace {
    Raas {
        params: RaasParams,
        trace: Trace,
    },
    FirstOrder {
        params: FirstOrderParams,
        trace: FirstOrderTrace,
    },
}

impl MethodTrace {
    pub fn len(&self) -> usize {
        match self {
            MethodTrace::Raas { trace, .. } => trace.records.len(),
            MethodTrace::FirstOrder { trace, .. } => trace.records.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `φ(x_{t+1}) − φ*` for every trial.
    pub fn gaps(&self) -> Vec<f64> {
        match self {
            MethodTrace::Raas { trace, .. } => trace.records.iter().map(|r| r.gap_next).collect(),
            MethodTrace::FirstOrder { trace, .. } => trace.records.iter().map(|r| r.gap_next).collect(),
        }
    }

    fn stopping_time(&self, eps_phi: f64, eps_grad: f64) -> Option<usize> {
        match self {
            MethodTrace::Raas { trace, .. } => stopping_time(&trace.records, eps_phi, eps_grad),
            MethodTrace::FirstOrder { trace, .. } => trace
                .records
                .iter()
                .find(|r| r.y_gap.min(r.gap_next) <= eps_phi || r.grad_norm <= eps_grad)
                .map(|r| r.t),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub label: String,
    pub method: Method,
    pub seed: u64,
    pub fingerprint: String,
    pub trace: MethodTrace,
    /// First trial meeting the configured stopping rule.
    pub stopping_time: Option<usize>,
    pub duration: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct RunFailure {
    pub label: String,
    pub seed: u64,
    pub fingerprint: String,
    pub error: String,
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub problem: Problem,
    /// Resolved parameters by label.
    pub resolved: BTreeMap<String, ResolvedMethod>,
    /// Sorted by (label, seed).
    pub runs: Vec<RunTrace>,
    pub failures: Vec<RunFailure>,
}

impl ExperimentResult {
    pub fn runs_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a RunTrace> + 'a {
        self.runs.iter().filter(move |r| r.label == label)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.config.methods.iter().map(|m| m.key()).collect()
    }
}

/// Builds the problem and resolves every method. Errors here abort the
/// experiment; errors inside a run do not.
pub fn prepare(config: &ExperimentConfig) -> Result<(Problem, BTreeMap<String, ResolvedMethod>), HarnessError> {
    config.validate()?;
    let problem = build_problem(&config.problem)?;
    let mut resolved = BTreeMap::new();
    let mut errs = Vec::new();
    for m in &config.methods {
        match config.resolve(m, problem.mu(), problem.l()) {
            Ok(r) => {
                resolved.insert(m.key().to_string(), r);
            }
            Err(HarnessError::Invalid(v)) => errs.extend(v),
            Err(e) => return Err(e),
        }
    }
    if !errs.is_empty() {
        return Err(HarnessError::Invalid(errs));
    }
    Ok((problem, resolved))
}

fn run_one(
    problem: &Problem,
    tape: &NoiseTape,
    resolved: &ResolvedMethod,
    x0: &[f64],
    horizon: usize,
) -> raas_core::Result<MethodTrace> {
    let oracle = StochasticOracle::new(problem, tape)?;
    let options = RunOptions::trials(horizon);
    Ok(match resolved {
        ResolvedMethod::Raas(p) => MethodTrace::Raas {
            params: p.clone(),
            trace: raas::run(&oracle, p, x0, &options)?,
        },
        ResolvedMethod::FirstOrder(p) => MethodTrace::FirstOrder {
            params: *p,
            trace: run_first_order(&oracle, p, x0, &options)?,
        },
    })
}

type SeededTape = (u64, raas_core::Result<NoiseTape>);

/// Runs the config with `noise` in place of `config.noise`, on `jobs`
/// threads (all cores when `None`).
pub fn run_with_noise(
    config: &ExperimentConfig,
    noise: NoiseConfig,
    jobs: Option<usize>,
) -> Result<ExperimentResult, HarnessError> {
    let mut config = config.clone();
    config.noise = noise;
    let (problem, resolved) = prepare(&config)?;
    let x0 = initial_point(problem.dimension(), config.init_seed());
    let d = problem.dimension();
    let len = config.tape_len();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Invalid(vec![format!("thread pool: {e}")]))?;

    let outcomes = pool.install(|| {
        let tapes: Vec<SeededTape> = config
            .seeds
            .par_iter()
            .map(|&s| (s, NoiseTape::generate(s, d, config.noise, len)))
            .collect();
        let pairs: Vec<(&str, Method, &SeededTape)> = config
            .methods
            .iter()
            .flat_map(|m| {
                let method = m.parsed_method().expect("validated");
                tapes.iter().map(move |t| (m.key(), method, t))
            })
            .collect();
        pairs
            .into_par_iter()
            .map(|(label, method, (seed, tape))| {
                let fp = fingerprint(&config, label, *seed);
                let start = Instant::now();
                let outcome = tape
                    .as_ref()
                    .map_err(Clone::clone)
                    .and_then(|tape| run_one(&problem, tape, &resolved[label], &x0, config.horizon));
                match outcome {
                    Ok(trace) => {
                        let stopping_time = config.stop.and_then(|s| trace.stopping_time(s.eps_phi, s.eps_grad));
                        Ok(RunTrace {
                            label: label.to_string(),
                            method,
                            seed: *seed,
                            fingerprint: fp,
                            trace,
                            stopping_time,
                            duration: start.elapsed(),
                        })
                    }
                    Err(e) => Err(RunFailure {
                        label: label.to_string(),
                        seed: *seed,
                        fingerprint: fp,
                        error: e.to_string(),
                    }),
                }
            })
            .collect::<Vec<_>>()
    });

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => runs.push(r),
            Err(f) => failures.push(f),
        }
    }
    runs.sort_by(|a, b| (&a.label, a.seed).cmp(&(&b.label, b.seed)));
    failures.sort_by(|a, b| (&a.label, a.seed).cmp(&(&b.label, b.seed)));
    Ok(ExperimentResult {
        config,
        problem,
        resolved,
        runs,
        failures,
    })
}

pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentResult, HarnessError> {
    run_with_noise(config, config.noise, jobs)
}
