//! Experiment and scenario files (TOML).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use prefrank_core::engine::{EngineConfig, SelectionPolicy, Target, TargetSet};
use prefrank_core::sim::{EvaluatorProfile, Latency, SimSetup, TruePreferenceModel};
use prefrank_core::Accuracy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("initial_order is not a permutation of the target ids")]
    InitialOrder,
    #[error("{0}")]
    Invalid(String),
    #[error("scenario has no [simulation] section")]
    NoSimulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEntry {
    pub id: String,
    #[serde(default)]
    pub label: Option<String>,
    pub stimuli: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// Strength per target id.
    StrengthBased { strengths: BTreeMap<String, f64> },
    /// Rows and columns follow the `[[targets]]` declaration order.
    ExplicitMatrix { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub policy: SelectionPolicy,
    #[serde(default = "default_evaluators")]
    pub evaluators: usize,
    #[serde(default)]
    pub abandonment: f64,
    /// Request lifetime in simulated ticks.
    #[serde(default = "default_sim_ttl")]
    pub ttl: u64,
    #[serde(default = "default_latency")]
    pub latency: Latency,
    pub model: ModelSpec,
}

fn default_evaluators() -> usize {
    1
}

fn default_sim_ttl() -> u64 {
    100
}

fn default_latency() -> Latency {
    Latency::Uniform { min: 1, max: 10 }
}

fn default_ttl() -> u64 {
    600
}

fn default_media_root() -> PathBuf {
    PathBuf::from("media")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub epsilon: f64,
    pub delta: f64,
    pub budget: u64,
    /// Seconds.
    #[serde(default = "default_ttl")]
    pub request_ttl: u64,
    #[serde(default = "default_media_root")]
    pub media_root: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub log_path: Option<PathBuf>,
    /// Merge-sort input order; defaults to declaration order.
    #[serde(default)]
    pub initial_order: Option<Vec<String>>,
    pub targets: Vec<TargetEntry>,
    #[serde(default)]
    pub simulation: Option<SimulationSection>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut config = Self::parse(&text)?;
        // relative media paths resolve against the config file
        if config.media_root.is_relative() {
            if let Some(dir) = path.parent() {
                config.media_root = dir.join(&config.media_root);
            }
        }
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.accuracy()?;
        if self.budget == 0 {
            return Err(ConfigError::Invalid("budget must be positive".into()));
        }
        self.ordered_indices()?;
        self.target_set()?;
        Ok(())
    }

    pub fn accuracy(&self) -> Result<Accuracy, ConfigError> {
        Accuracy::new(self.epsilon, self.delta).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Declaration indices in merge-sort input order.
    fn ordered_indices(&self) -> Result<Vec<usize>, ConfigError> {
        let Some(order) = &self.initial_order else {
            return Ok((0..self.targets.len()).collect());
        };
        if order.len() != self.targets.len() {
            return Err(ConfigError::InitialOrder);
        }
        let mut out = Vec::with_capacity(order.len());
        for id in order {
            let idx = self
                .targets
                .iter()
                .position(|t| &t.id == id)
                .ok_or(ConfigError::InitialOrder)?;
            if out.contains(&idx) {
                return Err(ConfigError::InitialOrder);
            }
            out.push(idx);
        }
        Ok(out)
    }

    pub fn target_set(&self) -> Result<TargetSet, ConfigError> {
        let targets = self
            .ordered_indices()?
            .into_iter()
            .map(|i| {
                let t = &self.targets[i];
                Target {
                    id: t.id.clone(),
                    label: t.label.clone().unwrap_or_else(|| t.id.clone()),
                    stimuli: t.stimuli.clone(),
                }
            })
            .collect();
        TargetSet::new(targets).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Engine configuration with the TTL converted to milliseconds.
    pub fn engine_config(&self) -> Result<EngineConfig, ConfigError> {
        Ok(EngineConfig {
            accuracy: self.accuracy()?,
            budget: self.budget,
            policy: SelectionPolicy::Balanced,
            seed: self.seed,
            request_ttl: self.request_ttl.saturating_mul(1000),
        })
    }

    pub fn log_path(&self) -> PathBuf {
        self.log_path
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}.events.jsonl", self.experiment_id)))
    }

    pub fn sim_setup(&self) -> Result<(SimSetup, u64), ConfigError> {
        let sim = self.simulation.as_ref().ok_or(ConfigError::NoSimulation)?;
        let order = self.ordered_indices()?;
        let model = match &sim.model {
            ModelSpec::StrengthBased { strengths } => {
                let values = order
                    .iter()
                    .map(|&i| {
                        let id = &self.targets[i].id;
                        strengths
                            .get(id)
                            .copied()
                            .ok_or_else(|| ConfigError::Invalid(format!("no strength for {id}")))
                    })
                    .collect::<Result<_, _>>()?;
                TruePreferenceModel::StrengthBased(values)
            }
            ModelSpec::ExplicitMatrix { matrix } => {
                let n = self.targets.len();
                if matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
                    return Err(ConfigError::Invalid(format!("matrix must be {n}x{n}")));
                }
                let m = order
                    .iter()
                    .map(|&i| order.iter().map(|&j| matrix[i][j]).collect())
                    .collect();
                TruePreferenceModel::ExplicitMatrix(m)
            }
        };
        let setup = SimSetup {
            targets: self.target_set()?,
            model,
            profile: EvaluatorProfile {
                latency: sim.latency,
                abandonment_prob: sim.abandonment,
                count: sim.evaluators,
                ttl: sim.ttl,
            },
            accuracy: self.accuracy()?,
            budget: self.budget,
            policy: sim.policy,
        };
        Ok((setup, sim.seed))
    }
}
