//! Experiment configuration files.
//!
//! A config is a single JSON document. Missing fields take the defaults of
//! the reference protocol (seeds 42–46, horizon 500, tape of five horizons).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use raas_core::baselines::{adp_nag_params, sass_params, FirstOrderParams, Method};
use raas_core::diagnostics::TheoryInputs;
use raas_core::problems::{LogisticSpec, QuadraticSpec};
use raas_core::raas::{RaasParams, StopRule, SwitchConfig, ToleranceMode};
use raas_core::NoiseConfig;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

pub const DEFAULT_SEEDS: [u64; 5] = [42, 43, 44, 45, 46];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    Quadratic(QuadraticSpec),
    Logistic(LogisticSpec),
}

impl ProblemSpec {
    pub fn dimension(&self) -> usize {
        match self {
            ProblemSpec::Quadratic(q) => q.d,
            ProblemSpec::Logistic(l) => l.d,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ProblemSpec::Quadratic(q) => q.seed,
            ProblemSpec::Logistic(l) => l.seed,
        }
    }
}

/// Settings for the RAAS family, SASS and adp-NAG. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaasSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vartheta: Option<f64>,
    /// Absolute initial step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    /// Initial step as a multiple of `1/L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_f: Option<f64>,
    /// Defaults to `eps_f`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance_mode: Option<ToleranceMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check2: Option<bool>,
}

impl RaasSettings {
    pub fn is_empty(&self) -> bool {
        *self == RaasSettings::default()
    }

    /// Field-wise `self` over `base`.
    fn over(&self, base: &RaasSettings) -> RaasSettings {
        RaasSettings {
            mu: self.mu.or(base.mu),
            nu: self.nu.or(base.nu),
            theta: self.theta.or(base.theta),
            vartheta: self.vartheta.or(base.vartheta),
            gamma0: self.gamma0.or(if self.gamma0_l.is_some() { None } else { base.gamma0 }),
            gamma0_l: self
                .gamma0_l
                .or(if self.gamma0.is_some() { None } else { base.gamma0_l }),
            gamma_max: self.gamma_max.or(base.gamma_max),
            alpha0: self.alpha0.or(base.alpha0),
            eps_f: self.eps_f.or(base.eps_f),
            eps_g: self.eps_g.or(base.eps_g),
            tolerance_mode: self.tolerance_mode.or(base.tolerance_mode),
            check2: self.check2.or(base.check2),
        }
    }

    /// Builds RAAS parameters for a problem with modulus `mu` and smoothness `l`.
    pub fn build(&self, problem_mu: f64, l: f64) -> raas_core::Result<RaasParams> {
        let mu = self.mu.unwrap_or(problem_mu);
        let gamma0 = match (self.gamma0, self.gamma0_l) {
            (Some(g), _) => g,
            (None, Some(c)) => c / l,
            (None, None) => 1.0 / l,
        };
        let mut b = RaasParams::builder(mu, gamma0);
        if let Some(v) = self.nu {
            b = b.nu(v);
        }
        if let Some(v) = self.theta {
            b = b.theta(v);
        }
        if let Some(v) = self.vartheta {
            b = b.vartheta(v);
        }
        if let Some(v) = self.gamma_max {
            b = b.gamma_max(v);
        }
        if let Some(v) = self.alpha0 {
            b = b.alpha0(v);
        }
        if let Some(ef) = self.eps_f {
            b = b.tolerances(ef, self.eps_g.unwrap_or(ef));
        } else if let Some(eg) = self.eps_g {
            b = b.tolerances(0.6, eg);
        }
        if let Some(m) = self.tolerance_mode {
            b = b.tolerance_mode(m);
        }
        if let Some(c) = self.check2 {
            b = b.check2(c);
        }
        b.build()
    }
}

/// One method in the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodEntry {
    pub method: String,
    /// Unique key used in file names; defaults to the method tag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Absolute step for gradient-only methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// Step as a multiple of `1/L`; the default is 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch: Option<SwitchConfig>,
    /// Per-method RAAS settings layered over `shared`.
    #[serde(default, skip_serializing_if = "RaasSettings::is_empty")]
    pub params: RaasSettings,
}

impl MethodEntry {
    pub fn new(method: Method) -> Self {
        MethodEntry {
            method: method.tag().to_string(),
            label: None,
            step: None,
            step_l: None,
            beta: None,
            clip: None,
            switch: None,
            params: RaasSettings::default(),
        }
    }

    pub fn key(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.method)
    }

    pub fn parsed_method(&self) -> Option<Method> {
        Method::from_tag(&self.method)
    }
}

/// What to run for one method entry once the problem is known.
#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedMethod {
    FirstOrder(FirstOrderParams),
    Raas(RaasParams),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySettings {
    /// Also fail on `(1−Λ)I > Θ` events before the stopping time.
    #[serde(default)]
    pub indicators: bool,
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

fn default_horizon() -> usize {
    500
}

fn default_tape_factor() -> usize {
    5
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "svg".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub problem: ProblemSpec,
    /// Seed of the initial point; defaults to the problem seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_seed: Option<u64>,
    #[serde(default = "NoiseConfig::exact")]
    pub noise: NoiseConfig,
    /// Noise grid for `sweep`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<NoiseConfig>,
    pub methods: Vec<MethodEntry>,
    #[serde(default)]
    pub shared: RaasSettings,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Number of runs; must equal the number of seeds when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Tape length in multiples of the horizon.
    #[serde(default = "default_tape_factor")]
    pub tape_factor: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
    #[serde(default)]
    pub theory: TheoryInputs,
    #[serde(default)]
    pub verify: VerifySettings,
}

impl ExperimentConfig {
    /// Parses and validates a config document.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The config without output settings, which do not affect results.
    pub fn content(&self) -> ExperimentConfig {
        ExperimentConfig {
            out_dir: None,
            formats: default_formats(),
            ..self.clone()
        }
    }

    /// Canonical single-line form of [`content`](Self::content), used for
    /// fingerprints.
    pub fn canonical(&self) -> String {
        serde_json::to_string(&self.content()).expect("config serializes")
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed.unwrap_or_else(|| self.problem.seed())
    }

    pub fn tape_len(&self) -> usize {
        self.horizon * self.tape_factor
    }

    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }

    /// Checks every semantic rule and reports all violations at once.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut errs = Vec::new();
        if self.methods.is_empty() {
            errs.push("at least one method is required".to_string());
        }
        if self.seeds.is_empty() {
            errs.push("at least one seed is required".to_string());
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            errs.push("seeds must be distinct".to_string());
        }
        if let Some(r) = self.runs {
            if r != self.seeds.len() {
                errs.push(format!("runs = {r} but {} seeds are listed", self.seeds.len()));
            }
        }
        if self.horizon == 0 {
            errs.push("horizon must be positive".to_string());
        }
        if self.tape_factor == 0 {
            errs.push("tape_factor must be positive".to_string());
        }
        for f in &self.formats {
            if f != "csv" && f != "svg" {
                errs.push(format!("unknown output format `{f}`"));
            }
        }
        for (i, n) in std::iter::once(&self.noise).chain(&self.sweep).enumerate() {
            if let Err(e) = n.validate() {
                let what = if i == 0 {
                    "noise".to_string()
                } else {
                    format!("sweep[{}]", i - 1)
                };
                errs.push(format!("{what}: {e}"));
            }
        }
        if self.shared.gamma0.is_some() && self.shared.gamma0_l.is_some() {
            errs.push("shared: give gamma0 or gamma0_l, not both".to_string());
        }
        let mut keys = BTreeSet::new();
        for (i, m) in self.methods.iter().enumerate() {
            let at = format!("methods[{i}]");
            let Some(method) = m.parsed_method() else {
                errs.push(format!("{at}: unknown method tag `{}`", m.method));
                continue;
            };
            if !keys.insert(m.key().to_string()) {
                errs.push(format!("{at}: duplicate label `{}`", m.key()));
            }
            if m.key().is_empty()
                || !m
                    .key()
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                errs.push(format!("{at}: label `{}` must be nonempty [A-Za-z0-9_-]", m.key()));
            }
            if m.params.gamma0.is_some() && m.params.gamma0_l.is_some() {
                errs.push(format!("{at}: give gamma0 or gamma0_l, not both"));
            }
            let first_order = !method.uses_values();
            if first_order && m.params != RaasSettings::default() {
                errs.push(format!("{at}: {} takes only step, step_l, beta and clip", m.method));
            }
            if first_order && m.switch.is_some() {
                errs.push(format!("{at}: {} has no switch", m.method));
            }
            if !first_order && (m.step.is_some() || m.step_l.is_some() || m.beta.is_some() || m.clip.is_some()) {
                errs.push(format!(
                    "{at}: step, step_l, beta and clip apply to gradient-only methods"
                ));
            }
            if m.step.is_some() && m.step_l.is_some() {
                errs.push(format!("{at}: give step or step_l, not both"));
            }
            if m.clip.is_some() && method != Method::AccClip {
                errs.push(format!("{at}: clip applies to acc_clip only"));
            }
            if method == Method::Sgd && m.beta.is_some() {
                errs.push(format!("{at}: sgd has no momentum"));
            }
            if m.switch.is_some() && !matches!(method, Method::RaasSingle | Method::RaasDouble) {
                errs.push(format!("{at}: switch applies to raas_single and raas_double only"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Invalid(errs))
        }
    }

    /// Turns a method entry into concrete parameters for a problem with
    /// modulus `mu` and smoothness `l`.
    pub fn resolve(&self, entry: &MethodEntry, mu: f64, l: f64) -> Result<ResolvedMethod, HarnessError> {
        let method = entry
            .parsed_method()
            .ok_or_else(|| HarnessError::Invalid(vec![format!("unknown method tag `{}`", entry.method)]))?;
        let step = match (entry.step, entry.step_l) {
            (Some(s), _) => s,
            (None, Some(c)) => c / l,
            (None, None) => 1.0 / l,
        };
        let beta = entry.beta.unwrap_or(0.9);
        let core = |r: raas_core::Result<RaasParams>| {
            r.map_err(|e| HarnessError::Invalid(vec![format!("{}: {e}", entry.key())]))
        };
        let settings = entry.params.over(&self.shared);
        Ok(match method {
            Method::Sgd => ResolvedMethod::FirstOrder(FirstOrderParams::sgd(step)),
            Method::ConsNag => ResolvedMethod::FirstOrder(FirstOrderParams::cons_nag(step, beta)),
            Method::AccClip => {
                ResolvedMethod::FirstOrder(FirstOrderParams::acc_clip(step, beta, entry.clip.unwrap_or(1.0)))
            }
            Method::Sass => ResolvedMethod::Raas(core(settings.build(mu, l).and_then(|p| sass_params(&p)))?),
            Method::AdpNag => ResolvedMethod::Raas(core(settings.build(mu, l).and_then(|p| adp_nag_params(&p)))?),
            Method::Raas | Method::RaasSingle | Method::RaasDouble => {
                let mut p = core(settings.build(mu, l))?;
                p.switch = match method {
                    Method::RaasSingle => Some(entry.switch.unwrap_or_else(SwitchConfig::single)),
                    Method::RaasDouble => Some(entry.switch.unwrap_or_else(SwitchConfig::double)),
                    _ => None,
                };
                core(p.validate().map(|_| p.clone()))?;
                ResolvedMethod::Raas(p)
            }
        })
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    ExperimentConfig::from_json(&text)
}
