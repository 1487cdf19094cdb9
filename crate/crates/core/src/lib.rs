//! Budgeted merge-rank: identify the total quality order of a set of targets
//! from noisy pairwise preferences collected asynchronously.
//!
//! The crate is `no_std` and needs only `alloc`. IO, configuration files,
//! and the network service live in the `prefrank` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod engine;
pub mod error;
pub mod report;
pub mod sim;
pub mod stats;

pub use engine::{
    Engine, EngineConfig, EvaluationRequest, Event, JoinOutcome, Journal, LoggedEvent, Phase,
    RankedOrder, RequestId, SelectionPolicy, SubmitOutcome, Target, TargetSet,
};
pub use error::{EngineError, ReplayError, SimError, StatError};
pub use stats::{Accuracy, ComplexityBounds, PairTally};
