use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatError {
    #[error("tolerance bias must lie in (0, 0.5], got {0}")]
    Epsilon(f64),
    #[error("error probability must lie in (0, 1), got {0}")]
    Delta(f64),
    #[error("confidence level must lie in (0, 1), got {0}")]
    Confidence(f64),
    #[error("wins ({wins}) exceed received judgments ({received})")]
    Tally { wins: u64, received: u64 },
    #[error("statistic undefined for a pair with no judgments")]
    NoJudgments,
    #[error("sorting complexity undefined for an empty set")]
    EmptySet,
    #[error("planning needs at least 2 targets, got {0}")]
    TooFewTargets(u64),
    #[error("budget {budget} is below the {required} pairs merge sort may need")]
    InfeasibleBudget { budget: u64, required: u64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("need at least 2 targets, got {0}")]
    TooFewTargets(usize),
    #[error("duplicate target id {0:?}")]
    DuplicateTarget(String),
    #[error("target {0:?} has no stimuli")]
    NoStimuli(String),
    #[error("budget must be positive")]
    ZeroBudget,
    #[error(transparent)]
    Stat(#[from] StatError),
}

/// Replay failure, located by the 1-based sequence number of the offending record.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("event log record {seq}: {reason}")]
pub struct ReplayError {
    pub seq: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("preference model covers {model} targets but {targets} were given")]
    ModelSize { model: usize, targets: usize },
    #[error("preference model entry ({0}, {1}) is not a probability or breaks p_ij + p_ji = 1")]
    ModelEntry(usize, usize),
    #[error("at least one evaluator is required")]
    NoEvaluators,
    #[error("abandonment probability must lie in [0, 1), got {0}")]
    Abandonment(f64),
    #[error("invalid latency distribution")]
    Latency,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("orders contain different element sets")]
pub struct OrderMismatch;
