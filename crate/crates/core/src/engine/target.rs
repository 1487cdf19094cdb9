use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::EngineError;

/// An evaluation target (a system under test) and the media items that represent it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub id: String,
    pub label: String,
    pub stimuli: Vec<String>,
}

impl Target {
    pub fn new(id: impl Into<String>, stimuli: Vec<String>) -> Self {
        let id = id.into();
        Target {
            label: id.clone(),
            id,
            stimuli,
        }
    }

    /// A target with a single stimulus named after it. Handy for simulations.
    pub fn bare(id: impl Into<String>) -> Self {
        let id = id.into();
        let stimulus = alloc::format!("{id}.wav");
        Target::new(id, alloc::vec![stimulus])
    }
}

/// Targets in merge-sort input order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSet {
    targets: Vec<Target>,
}

impl TargetSet {
    pub fn new(targets: Vec<Target>) -> Result<Self, EngineError> {
        if targets.len() < 2 {
            return Err(EngineError::TooFewTargets(targets.len()));
        }
        for (i, t) in targets.iter().enumerate() {
            if targets[..i].iter().any(|o| o.id == t.id) {
                return Err(EngineError::DuplicateTarget(t.id.clone()));
            }
            if t.stimuli.is_empty() {
                return Err(EngineError::NoStimuli(t.id.clone()));
            }
        }
        Ok(TargetSet { targets })
    }

    /// Bare targets from ids, each with one stimulus.
    pub fn from_ids<I, S>(ids: I) -> Result<Self, EngineError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TargetSet::new(ids.into_iter().map(Target::bare).collect())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn get(&self, index: usize) -> &Target {
        &self.targets[index]
    }

    pub fn id(&self, index: usize) -> &str {
        &self.targets[index].id
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.targets.iter().position(|t| t.id == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Target> {
        self.targets.iter()
    }
}
