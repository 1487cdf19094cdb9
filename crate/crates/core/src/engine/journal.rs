//! Event recording and replay.
//!
//! `Join`, `Issue`, `Submit`, and `Expire` are inputs; `Determine`,
//! `Converge`, and `Exhaust` are derived and are checked against the engine
//! during replay.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Engine, EvaluationRequest, JoinOutcome, RequestId, SubmitOutcome};
use crate::error::ReplayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Event {
    Join {
        token: String,
    },
    Issue {
        token: String,
        request: EvaluationRequest,
    },
    Submit {
        token: String,
        request_id: RequestId,
        left_won: bool,
        /// Tally after the judgment was applied.
        wins: u64,
        received: u64,
    },
    Expire {
        request_id: RequestId,
    },
    Determine {
        pair: String,
        winner: String,
        at_received: u64,
        at_win_rate: f64,
    },
    Converge {
        submitted_total: u64,
    },
    Exhaust {
        submitted_total: u64,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Join { .. } => "Join",
            Event::Issue { .. } => "Issue",
            Event::Submit { .. } => "Submit",
            Event::Expire { .. } => "Expire",
            Event::Determine { .. } => "Determine",
            Event::Converge { .. } => "Converge",
            Event::Exhaust { .. } => "Exhaust",
        }
    }

    pub fn is_derived(&self) -> bool {
        matches!(
            self,
            Event::Determine { .. } | Event::Converge { .. } | Event::Exhaust { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub seq: u64,
    pub timestamp: u64,
    #[serde(flatten)]
    pub event: Event,
}

/// An engine plus the gapless event sequence that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Journal {
    engine: Engine,
    next_seq: u64,
    pending: Vec<LoggedEvent>,
}

/// Result of replaying a (possibly truncated) log.
#[derive(Debug)]
pub struct Replayed {
    pub journal: Journal,
    /// Derived events implied by the last input but absent from the log tail.
    pub missing: Vec<LoggedEvent>,
}

impl Journal {
    pub fn new(engine: Engine) -> Self {
        Journal {
            engine,
            next_seq: 1,
            pending: Vec::new(),
        }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn into_engine(self) -> Engine {
        self.engine
    }

    /// Sequence number of the last recorded event (0 when empty).
    pub fn last_seq(&self) -> u64 {
        self.next_seq - 1
    }

    /// Events recorded since the last drain.
    pub fn pending(&self) -> &[LoggedEvent] {
        &self.pending
    }

    pub fn drain(&mut self) -> Vec<LoggedEvent> {
        core::mem::take(&mut self.pending)
    }

    fn push(&mut self, timestamp: u64, event: Event) {
        self.pending.push(LoggedEvent {
            seq: self.next_seq,
            timestamp,
            event,
        });
        self.next_seq += 1;
    }

    pub fn join(&mut self, token: &str, now: u64) -> JoinOutcome {
        self.push(
            now,
            Event::Join {
                token: token.into(),
            },
        );
        let outcome = self.engine.on_join(now);
        if let JoinOutcome::Issued(request) = &outcome {
            self.push(
                now,
                Event::Issue {
                    token: token.into(),
                    request: request.clone(),
                },
            );
        }
        outcome
    }

    pub fn submit(
        &mut self,
        token: &str,
        id: RequestId,
        left_won: bool,
        now: u64,
    ) -> SubmitOutcome {
        let pair = self.engine.outstanding.get(&id).map(|p| p.pair);
        let outcome = self.engine.on_submit(id, left_won);
        if let Some(pair) = pair.filter(|_| outcome.is_accepted()) {
            let tally = self.engine.pairs[pair].tally;
            self.push(
                now,
                Event::Submit {
                    token: token.into(),
                    request_id: id,
                    left_won,
                    wins: tally.wins(),
                    received: tally.received(),
                },
            );
            for event in derived_events(&self.engine, &outcome) {
                self.push(now, event);
            }
        }
        outcome
    }

    pub fn expire(&mut self, id: RequestId, now: u64) -> bool {
        let expired = self.engine.on_expire(id);
        if expired {
            self.push(now, Event::Expire { request_id: id });
        }
        expired
    }

    /// Expires every outstanding request whose deadline has passed.
    pub fn sweep(&mut self, now: u64) -> usize {
        let ids = self.engine.expired_requests(now);
        for &id in &ids {
            self.expire(id, now);
        }
        ids.len()
    }

    /// Rebuilds a journal by re-applying `events` to a fresh `engine`.
    pub fn replay<'a, I>(engine: Engine, events: I) -> Result<Replayed, ReplayError>
    where
        I: IntoIterator<Item = &'a LoggedEvent>,
    {
        let mut journal = Journal::new(engine);
        let mut expected: VecDeque<Event> = VecDeque::new();
        let mut last_timestamp = 0;
        for record in events {
            let seq = record.seq;
            let fail = |reason: String| ReplayError { seq, reason };
            if seq != journal.next_seq {
                return Err(fail(alloc::format!(
                    "sequence gap: expected {}",
                    journal.next_seq
                )));
            }
            last_timestamp = record.timestamp;
            if record.event.is_derived() {
                match expected.pop_front() {
                    Some(e) if e == record.event => {}
                    Some(e) => {
                        return Err(fail(alloc::format!(
                            "{} does not match replayed {}",
                            record.event.kind(),
                            e.kind()
                        )))
                    }
                    None => {
                        return Err(fail(alloc::format!(
                            "unexpected derived event {}",
                            record.event.kind()
                        )))
                    }
                }
                journal.next_seq += 1;
                continue;
            }
            if let Some(e) = expected.front() {
                return Err(fail(alloc::format!("missing {} before input", e.kind())));
            }
            let engine = &mut journal.engine;
            match &record.event {
                Event::Join { .. } => {}
                Event::Issue { request, .. } => {
                    engine.apply_issue(request.clone()).map_err(fail)?
                }
                Event::Submit {
                    request_id,
                    left_won,
                    wins,
                    received,
                    ..
                } => {
                    let Some(pair) = engine.outstanding.get(request_id).map(|p| p.pair) else {
                        return Err(fail(alloc::format!(
                            "submit for request {request_id} that is not outstanding"
                        )));
                    };
                    let outcome = engine.on_submit(*request_id, *left_won);
                    let tally = engine.pairs[pair].tally;
                    if (tally.wins(), tally.received()) != (*wins, *received) {
                        return Err(fail(alloc::format!(
                            "tally {}/{} disagrees with recorded {wins}/{received}",
                            tally.wins(),
                            tally.received()
                        )));
                    }
                    expected.extend(derived_events(engine, &outcome));
                }
                Event::Expire { request_id } => {
                    if !engine.on_expire(*request_id) {
                        return Err(fail(alloc::format!(
                            "expire for request {request_id} that is not outstanding"
                        )));
                    }
                }
                Event::Determine { .. } | Event::Converge { .. } | Event::Exhaust { .. } => {
                    unreachable!()
                }
            }
            journal.next_seq += 1;
        }
        let missing_events: Vec<Event> = expected.into_iter().collect();
        for event in missing_events {
            journal.push(last_timestamp, event);
        }
        let missing = journal.drain();
        Ok(Replayed { journal, missing })
    }
}

fn derived_events(engine: &Engine, outcome: &SubmitOutcome) -> Vec<Event> {
    let mut out = Vec::new();
    if let Some(d) = outcome.decision() {
        out.push(Event::Determine {
            pair: engine.pair_key(d.pair),
            winner: engine.targets.id(d.winner).into(),
            at_received: d.at_received,
            at_win_rate: d.at_win_rate,
        });
    }
    if matches!(outcome, SubmitOutcome::Converged(_)) {
        out.push(Event::Converge {
            submitted_total: engine.submitted_total,
        });
    }
    if engine.submitted_total == engine.config.budget {
        out.push(Event::Exhaust {
            submitted_total: engine.submitted_total,
        });
    }
    out
}
