//! Experiment configuration files (TOML).
//!
//! Unknown keys are rejected, and every parse or validation error names the offending
//! key path, e.g. `algorithms[1].schedule.eta`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::Baseline;
use crate::error::{Error, Result};
use crate::gradconsensus::Schedule;
use crate::graph::DEFAULT_RETRY_BUDGET;

/// Overrides `output.directory` when set.
pub const OUTPUT_DIR_ENV: &str = "GRADCONS_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Repetition `r` offsets the graph and problem seeds by `r · seed_stride`.
    #[serde(default = "default_seed_stride")]
    pub seed_stride: u64,
    pub graph: GraphConfig,
    pub problem: ProblemConfig,
    pub algorithms: Vec<AlgorithmConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Gradient-norm tolerance of the reference solver; defaults to `1e-12 · n`.
    #[serde(default)]
    pub reference_tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub n: usize,
    pub prob: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub diameter_override: Option<usize>,
    #[serde(default = "default_retry_budget")]
    pub retry_budget: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Logistic,
    Quadratic,
}

/// Data-generation parameters. `mu*`, `sigma*` and `samples_per_agent` apply to the
/// logistic problem only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_samples")]
    pub samples_per_agent: usize,
    #[serde(default = "default_mu1")]
    pub mu1: f64,
    #[serde(default = "default_sigma")]
    pub sigma1: f64,
    #[serde(default = "default_mu2")]
    pub mu2: f64,
    #[serde(default = "default_sigma")]
    pub sigma2: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmName {
    GradConsensus,
    Dgd,
    Extra,
    PushPull,
}

impl AlgorithmName {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmName::GradConsensus => "gradconsensus",
            AlgorithmName::Dgd => "dgd",
            AlgorithmName::Extra => "extra",
            AlgorithmName::PushPull => "pushpull",
        }
    }

    pub fn baseline(self) -> Option<Baseline> {
        match self {
            AlgorithmName::GradConsensus => None,
            AlgorithmName::Dgd => Some(Baseline::Dgd),
            AlgorithmName::Extra => Some(Baseline::Extra),
            AlgorithmName::PushPull => Some(Baseline::PushPull),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub name: AlgorithmName,
    /// Trace label and file-name stem; defaults to `name`.
    #[serde(default)]
    pub label: Option<String>,
    /// Per-agent step size; defaults to `n / L_f` (`α̂ = 1/L_f`) for GradConsensus and
    /// `1 / L_h` for the baselines.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Required for `gradconsensus`, rejected otherwise.
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    /// Stop once `f(x̂(k)) - f*` falls to this level.
    #[serde(default)]
    pub stop_target: Option<f64>,
    #[serde(default)]
    pub round_cap: Option<usize>,
}

impl AlgorithmConfig {
    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.name.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Constant,
    Polynomial,
    Geometric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    #[serde(default)]
    pub eps0: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default)]
    pub write_dataset: bool,
    #[serde(default)]
    pub write_edge_list: bool,
    /// Record wall-clock time; off by default so repeated runs are byte-identical.
    #[serde(default)]
    pub wall_time: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: default_directory(), write_dataset: false, write_edge_list: false, wall_time: false }
    }
}

fn default_repetitions() -> usize {
    1
}
fn default_seed_stride() -> u64 {
    1000
}
fn default_retry_budget() -> u32 {
    DEFAULT_RETRY_BUDGET
}
fn default_dim() -> usize {
    10
}
fn default_samples() -> usize {
    20
}
fn default_mu1() -> f64 {
    0.2
}
fn default_mu2() -> f64 {
    -0.2
}
fn default_sigma() -> f64 {
    1.0
}
fn default_max_outer() -> usize {
    1000
}
fn default_directory() -> PathBuf {
    PathBuf::from("output")
}

impl ScheduleConfig {
    /// Converts to a [`Schedule`]; `path` prefixes key paths in errors.
    pub fn to_schedule(&self, path: &str) -> Result<Schedule> {
        let need =
            |v: Option<f64>, key: &str| v.ok_or_else(|| Error::config(format!("{path}.{key}"), "missing required key"));
        let reject = |v: Option<f64>, key: &str| match v {
            Some(_) => Err(Error::config(
                format!("{path}.{key}"),
                format!("not used by a {:?} schedule", self.kind).to_lowercase(),
            )),
            None => Ok(()),
        };
        let schedule = match self.kind {
            ScheduleKind::Constant => {
                reject(self.eta, "eta")?;
                reject(self.mu, "mu")?;
                Schedule::Constant { eps0: need(self.eps0, "eps0")? }
            }
            ScheduleKind::Polynomial => {
                reject(self.mu, "mu")?;
                Schedule::Polynomial { eps0: need(self.eps0, "eps0")?, eta: need(self.eta, "eta")? }
            }
            ScheduleKind::Geometric => {
                reject(self.eps0, "eps0")?;
                reject(self.eta, "eta")?;
                Schedule::Geometric { mu: need(self.mu, "mu")? }
            }
        };
        schedule.validate().map_err(|e| {
            let key = match (self.kind, e.to_string()) {
                (_, m) if m.contains("eta") => "eta",
                (_, m) if m.contains("mu") => "mu",
                _ => "eps0",
            };
            let message = match e {
                Error::InvalidArgument(m) => m,
                other => other.to_string(),
            };
            Error::config(format!("{path}.{key}"), message)
        })?;
        Ok(schedule)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "<document>".to_string() } else { path };
            Error::config(path, e.into_inner().message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config types always serialize")
    }

    /// Resolved output directory, honouring [`OUTPUT_DIR_ENV`].
    pub fn output_directory(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output.directory.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, path: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(path, format!("must be positive and finite, got {v}")))
            }
        };
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        if self.repetitions == 0 {
            return Err(Error::config("repetitions", "must be at least 1"));
        }
        if self.graph.n == 0 {
            return Err(Error::config("graph.n", "need at least one agent"));
        }
        if !(0.0..=1.0).contains(&self.graph.prob) {
            return Err(Error::config("graph.prob", format!("must lie in [0,1], got {}", self.graph.prob)));
        }
        if self.graph.retry_budget == 0 {
            return Err(Error::config("graph.retry_budget", "must be at least 1"));
        }
        let p = &self.problem;
        if p.dim == 0 {
            return Err(Error::config("problem.dim", "must be at least 1"));
        }
        if p.samples_per_agent == 0 {
            return Err(Error::config("problem.samples_per_agent", "must be at least 1"));
        }
        positive(p.sigma1, "problem.sigma1")?;
        positive(p.sigma2, "problem.sigma2")?;
        for (key, v) in [("problem.mu1", p.mu1), ("problem.mu2", p.mu2)] {
            if !v.is_finite() {
                return Err(Error::config(key, format!("must be finite, got {v}")));
            }
        }
        if let Some(tol) = self.reference_tol {
            positive(tol, "reference_tol")?;
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("algorithms", "at least one algorithm is required"));
        }
        let mut labels = std::collections::BTreeSet::new();
        for (i, a) in self.algorithms.iter().enumerate() {
            let at = |key: &str| format!("algorithms[{i}].{key}");
            if let Some(alpha) = a.alpha {
                positive(alpha, &at("alpha"))?;
            }
            if let Some(t) = a.stop_target {
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(Error::config(at("stop_target"), format!("must be non-negative, got {t}")));
                }
            }
            if a.round_cap == Some(0) {
                return Err(Error::config(at("round_cap"), "must be at least 1"));
            }
            match (a.name, &a.schedule) {
                (AlgorithmName::GradConsensus, None) => {
                    return Err(Error::config(at("schedule"), "missing required key"));
                }
                (AlgorithmName::GradConsensus, Some(s)) => {
                    s.to_schedule(&at("schedule"))?;
                }
                (_, Some(_)) => {
                    return Err(Error::config(at("schedule"), "only gradconsensus uses a schedule"));
                }
                (_, None) if a.round_cap.is_some() => {
                    return Err(Error::config(at("round_cap"), "only gradconsensus uses a round cap"));
                }
                _ => {}
            }
            let label = a.label();
            if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(Error::config(at("label"), format!("`{label}` must be non-empty [A-Za-z0-9_-]")));
            }
            if !labels.insert(label.to_string()) {
                return Err(Error::config(at("label"), format!("duplicate label `{label}`")));
            }
        }
        Ok(())
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_toml_str(&text)
}
