//! Experiment state behind the HTTP API: sessions, write-ahead logging, and
//! crash recovery. Every mutation is persisted before it is acknowledged.

use std::collections::HashMap;
use std::hash::{BuildHasher, RandomState};
use std::path::Path;

use prefrank_core::engine::{PairStatus, RequestStatus};
use prefrank_core::report::{self, Report};
use prefrank_core::{
    Engine, Event, JoinOutcome, Journal, LoggedEvent, Phase, ReplayError, RequestId, SubmitOutcome,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::log::{self, LogError, LogWriter};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("{0}")]
    Engine(#[from] prefrank_core::EngineError),
}

/// Request-level failures, each mapped to an HTTP status.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ApiError {
    #[error("no experiment loaded")]
    NotLoaded,
    #[error("admin token required")]
    Unauthorized,
    #[error("request {0} belongs to another evaluator")]
    Forbidden(RequestId),
    #[error("unknown request {0}")]
    UnknownRequest(RequestId),
    #[error("evaluator already holds request {0}")]
    Outstanding(RequestId),
    #[error("request {0} was already submitted")]
    Duplicate(RequestId),
    #[error("request {0} expired")]
    Expired(RequestId),
    #[error("{0}")]
    BadRequest(String),
    #[error("event log unavailable: {0}")]
    Storage(String),
}

impl ApiError {
    pub fn status_code(&self) -> u16 {
        match self {
            ApiError::NotLoaded => 503,
            ApiError::Unauthorized => 401,
            ApiError::Forbidden(_) => 403,
            ApiError::UnknownRequest(_) => 404,
            ApiError::Outstanding(_) | ApiError::Duplicate(_) => 409,
            ApiError::Expired(_) => 410,
            ApiError::BadRequest(_) => 400,
            ApiError::Storage(_) => 500,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Session {
    pub issued: Vec<RequestId>,
    pub current: Option<RequestId>,
    pub completed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preference {
    /// The stimulus presented first.
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresentationOrder {
    LeftFirst,
    RightFirst,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairIds {
    pub left: String,
    pub right: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct JoinRequest {
    #[serde(default)]
    pub evaluator_token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JoinResponse {
    Request {
        evaluator_token: String,
        request_id: RequestId,
        pair: PairIds,
        /// Media URLs in presentation order.
        stimuli: [String; 2],
        presentation_order: PresentationOrder,
        deadline: u64,
    },
    Done {
        evaluator_token: String,
        done: bool,
    },
}

#[derive(Debug, Clone, Deserialize)]
pub struct SubmitRequest {
    pub evaluator_token: String,
    pub request_id: RequestId,
    pub preference: Preference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Determined {
    pub pair: String,
    pub winner: String,
    pub at_received: u64,
    pub at_win_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub determined: Option<Determined>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusRow {
    pub pair: String,
    pub left: String,
    pub right: String,
    pub w: u64,
    pub r: u64,
    /// Issued minus expired.
    pub r_requested: u64,
    pub p_hat: f64,
    pub c_hat: f64,
    pub c_hat_hoeffding: Option<f64>,
    pub error_bias: f64,
    pub error_bias_hoeffding: Option<f64>,
    pub status: String,
    pub winner: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusResponse {
    pub experiment_id: String,
    pub phase: Phase,
    pub submitted_total: u64,
    pub budget: u64,
    pub outstanding_count: usize,
    /// Ascending quality.
    pub current_order: Vec<String>,
    pub complete: bool,
    pub pairs: Vec<StatusRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsResponse {
    pub partial: bool,
    #[serde(flatten)]
    pub report: Report,
}

pub fn status_of(experiment_id: &str, engine: &Engine) -> StatusResponse {
    let order = engine.current_order();
    let acc = engine.accuracy();
    let ids = engine.targets();
    let pairs = engine
        .pairs()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let r = p.tally.received();
            let p_hat = p.tally.win_rate();
            let c_hat = acc.interval(r);
            let c_h = acc.hoeffding_interval(r);
            StatusRow {
                pair: engine.pair_key(i),
                left: ids.id(p.left).into(),
                right: ids.id(p.right).into(),
                w: p.tally.wins(),
                r,
                r_requested: p.requested,
                p_hat,
                c_hat,
                c_hat_hoeffding: c_h,
                error_bias: prefrank_core::stats::error_bias(c_hat, p_hat),
                error_bias_hoeffding: c_h.map(|c| prefrank_core::stats::error_bias(c, p_hat)),
                status: match p.status() {
                    PairStatus::Active => "active".into(),
                    PairStatus::Determined => "determined".into(),
                },
                winner: p.determination.as_ref().map(|d| ids.id(d.winner).into()),
            }
        })
        .collect();
    StatusResponse {
        experiment_id: experiment_id.into(),
        phase: engine.phase(),
        submitted_total: engine.submitted_total(),
        budget: engine.config().budget,
        outstanding_count: engine.outstanding_count(),
        current_order: order.ids,
        complete: order.complete,
        pairs,
    }
}

/// A running experiment bound to its event log.
#[derive(Debug)]
pub struct Experiment {
    config: ExperimentConfig,
    journal: Journal,
    writer: LogWriter,
    sessions: HashMap<String, Session>,
    owners: HashMap<RequestId, String>,
    hasher: RandomState,
    minted: u64,
    poisoned: Option<String>,
}

impl Experiment {
    /// Opens `log_path`, replaying it when it already holds events.
    /// Derived events missing from a truncated tail are appended, and requests
    /// whose deadline is before `now` are expired.
    pub fn open(
        config: ExperimentConfig,
        log_path: &Path,
        now: u64,
    ) -> Result<Experiment, ServiceError> {
        let engine = fresh_engine(&config)?;
        let events = if log_path.exists() {
            log::read(log_path)?
        } else {
            Vec::new()
        };
        let replayed = Journal::replay(engine, &events)?;
        let mut exp = Experiment {
            config,
            journal: replayed.journal,
            writer: LogWriter::open(log_path)?,
            sessions: HashMap::new(),
            owners: HashMap::new(),
            hasher: RandomState::new(),
            minted: 0,
            poisoned: None,
        };
        for e in events.iter().chain(&replayed.missing) {
            exp.track(e);
        }
        exp.writer.append(&replayed.missing)?;
        exp.journal.sweep(now);
        let expired = exp.journal.drain();
        for e in &expired {
            exp.track(e);
        }
        exp.writer.append(&expired)?;
        Ok(exp)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn engine(&self) -> &Engine {
        self.journal.engine()
    }

    pub fn last_seq(&self) -> u64 {
        self.journal.last_seq()
    }

    pub fn log_path(&self) -> &Path {
        self.writer.path()
    }

    pub fn session(&self, token: &str) -> Option<&Session> {
        self.sessions.get(token)
    }

    fn track(&mut self, record: &LoggedEvent) {
        match &record.event {
            Event::Issue { token, request } => {
                let s = self.sessions.entry(token.clone()).or_default();
                s.issued.push(request.request_id);
                s.current = Some(request.request_id);
                self.owners.insert(request.request_id, token.clone());
            }
            Event::Join { token } => {
                self.sessions.entry(token.clone()).or_default();
            }
            Event::Submit {
                token, request_id, ..
            } => {
                if let Some(s) = self.sessions.get_mut(token) {
                    s.completed += 1;
                    if s.current == Some(*request_id) {
                        s.current = None;
                    }
                }
            }
            Event::Expire { request_id } => {
                if let Some(s) = self
                    .owners
                    .get(request_id)
                    .and_then(|t| self.sessions.get_mut(t))
                {
                    if s.current == Some(*request_id) {
                        s.current = None;
                    }
                }
            }
            _ => {}
        }
    }

    /// Writes pending events; a failed write poisons the experiment until restart.
    fn persist(&mut self) -> Result<(), ApiError> {
        let events = self.journal.drain();
        if let Err(e) = self.writer.append(&events) {
            let msg = e.to_string();
            self.poisoned = Some(msg.clone());
            return Err(ApiError::Storage(msg));
        }
        for e in &events {
            self.track(e);
        }
        Ok(())
    }

    fn check_healthy(&self) -> Result<(), ApiError> {
        match &self.poisoned {
            Some(msg) => Err(ApiError::Storage(msg.clone())),
            None => Ok(()),
        }
    }

    fn mint_token(&mut self) -> String {
        loop {
            self.minted += 1;
            let token = format!("ev-{:016x}", self.hasher.hash_one(self.minted));
            if !self.sessions.contains_key(&token) {
                return token;
            }
        }
    }

    /// Expires overdue requests.
    pub fn sweep(&mut self, now: u64) -> Result<(), ApiError> {
        self.check_healthy()?;
        self.journal.sweep(now);
        self.persist()
    }

    pub fn join(&mut self, token: Option<&str>, now: u64) -> Result<JoinResponse, ApiError> {
        self.sweep(now)?;
        let token = match token {
            Some("") => return Err(ApiError::BadRequest("empty evaluator token".into())),
            Some(t) => t.to_owned(),
            None => self.mint_token(),
        };
        if let Some(id) = self.sessions.get(&token).and_then(|s| s.current) {
            return Err(ApiError::Outstanding(id));
        }
        let outcome = self.journal.join(&token, now);
        self.persist()?;
        Ok(match outcome {
            JoinOutcome::Done => JoinResponse::Done {
                evaluator_token: token,
                done: true,
            },
            JoinOutcome::Issued(r) => {
                let deadline = r.deadline();
                let left = format!("/media/{}", r.left_stimulus);
                let right = format!("/media/{}", r.right_stimulus);
                let (stimuli, presentation_order) = if r.left_first {
                    ([left, right], PresentationOrder::LeftFirst)
                } else {
                    ([right, left], PresentationOrder::RightFirst)
                };
                JoinResponse::Request {
                    evaluator_token: token,
                    request_id: r.request_id,
                    pair: PairIds {
                        left: r.left,
                        right: r.right,
                    },
                    stimuli,
                    presentation_order,
                    deadline,
                }
            }
        })
    }

    pub fn submit(&mut self, req: &SubmitRequest, now: u64) -> Result<SubmitResponse, ApiError> {
        self.sweep(now)?;
        let id = req.request_id;
        let request = match self.engine().request_status(id) {
            RequestStatus::Unknown => return Err(ApiError::UnknownRequest(id)),
            RequestStatus::Submitted => return Err(ApiError::Duplicate(id)),
            RequestStatus::Expired => return Err(ApiError::Expired(id)),
            RequestStatus::Outstanding => self
                .engine()
                .outstanding_request(id)
                .expect("outstanding request")
                .clone(),
        };
        if self.owners.get(&id).map(String::as_str) != Some(req.evaluator_token.as_str()) {
            return Err(ApiError::Forbidden(id));
        }
        // preference names a display slot; translate to pair orientation
        let first_chosen = req.preference == Preference::Left;
        let left_won = first_chosen == request.left_first;
        let outcome = self.journal.submit(&req.evaluator_token, id, left_won, now);
        self.persist()?;
        let engine = self.engine();
        let determined = outcome.decision().map(|d| Determined {
            pair: engine.pair_key(d.pair),
            winner: engine.targets().id(d.winner).into(),
            at_received: d.at_received,
            at_win_rate: d.at_win_rate,
        });
        Ok(SubmitResponse {
            accepted: outcome.is_accepted(),
            determined,
            converged: matches!(outcome, SubmitOutcome::Converged(_)),
        })
    }

    pub fn status(&self) -> StatusResponse {
        status_of(&self.config.experiment_id, self.engine())
    }

    pub fn results(&self) -> ResultsResponse {
        let report = report::build(self.engine());
        ResultsResponse {
            partial: !report.complete,
            report,
        }
    }

    /// The persisted log, byte for byte.
    pub fn export(&self) -> Result<Vec<u8>, ApiError> {
        std::fs::read(self.writer.path()).map_err(|e| ApiError::Storage(e.to_string()))
    }
}

pub fn fresh_engine(config: &ExperimentConfig) -> Result<Engine, ServiceError> {
    Ok(Engine::new(config.target_set()?, config.engine_config()?)?)
}

/// Replays a log file without modifying it. A truncated tail is completed
/// in memory.
pub fn replay_file(config: &ExperimentConfig, path: &Path) -> Result<Journal, ServiceError> {
    let events = log::read(path)?;
    Ok(Journal::replay(fresh_engine(config)?, &events)?.journal)
}
