//! Label sources: the scripted skip-rate teacher, a perfect teacher and a
//! ticket-based adapter for human labelers.

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::data::{PreferenceLabel, PreferenceTriple, Segment};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Scripted teacher parameters. Queries whose return gap is below
/// `epsilon * horizon * |r_avg|` are skipped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub epsilon: f64,
    pub horizon: usize,
    pub r_avg: f64,
}

impl TeacherConfig {
    pub fn new(epsilon: f64, horizon: usize, r_avg: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "skip rate {epsilon} outside (0, 1)"
            )));
        }
        if !r_avg.is_finite() {
            return Err(Error::InvalidArgument("r_avg must be finite".into()));
        }
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        Ok(Self {
            epsilon,
            horizon,
            r_avg,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.epsilon * self.horizon as f64 * self.r_avg.abs()
    }
}

fn compare(r0: f64, r1: f64, threshold: f64) -> PreferenceLabel {
    let gap = r1 - r0;
    if gap.abs() < threshold || gap == 0.0 {
        PreferenceLabel::NoComparison
    } else if gap > 0.0 {
        PreferenceLabel::PreferSecond
    } else {
        PreferenceLabel::PreferFirst
    }
}

pub fn scripted_label<S: Scalar>(
    seg0: &Segment<S>,
    seg1: &Segment<S>,
    cfg: &TeacherConfig,
) -> Result<PreferenceLabel> {
    for seg in [seg0, seg1] {
        if seg.len() != cfg.horizon {
            return Err(Error::SegmentLength {
                expected: cfg.horizon,
                found: seg.len(),
            });
        }
    }
    Ok(scripted_label_returns(
        seg0.true_return.as_f64(),
        seg1.true_return.as_f64(),
        cfg,
    ))
}

/// Scripted answer from the two true returns directly.
pub fn scripted_label_returns(r0: f64, r1: f64, cfg: &TeacherConfig) -> PreferenceLabel {
    compare(r0, r1, cfg.threshold())
}

pub fn perfect_label<S: Scalar>(seg0: &Segment<S>, seg1: &Segment<S>) -> PreferenceLabel {
    compare(seg0.true_return.as_f64(), seg1.true_return.as_f64(), 0.0)
}

/// Automatic label source used by the experiment loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Teacher {
    Scripted(TeacherConfig),
    Perfect,
}

impl Teacher {
    pub fn label<S: Scalar>(
        &self,
        seg0: &Segment<S>,
        seg1: &Segment<S>,
    ) -> Result<PreferenceLabel> {
        match self {
            Teacher::Scripted(cfg) => scripted_label(seg0, seg1, cfg),
            Teacher::Perfect => Ok(perfect_label(seg0, seg1)),
        }
    }
}

/// Progress of a human labeling session.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub round: usize,
    pub labels_done: usize,
    pub labels_needed: usize,
    pub experiment_id: String,
}

/// A query waiting for a human answer.
#[derive(Clone, Debug)]
pub struct Ticket<S> {
    pub id: u64,
    pub seg0: Arc<Segment<S>>,
    pub seg1: Arc<Segment<S>>,
    pub round: usize,
}

#[derive(Debug)]
struct Session<S> {
    next_id: u64,
    open: BTreeMap<u64, Ticket<S>>,
    answered: BTreeMap<u64, PreferenceTriple<S>>,
    history: Vec<PreferenceTriple<S>>,
    status: SessionStatus,
}

/// Pending-ticket table shared between the experiment loop and the labeling service.
///
/// All mutations happen under one lock, so each ticket is resolved at most once.
#[derive(Debug)]
pub struct HumanLabeler<S> {
    session: Mutex<Session<S>>,
    changed: Condvar,
}

impl<S: Scalar> HumanLabeler<S> {
    pub fn new(experiment_id: impl Into<String>, labels_needed: usize) -> Self {
        Self {
            session: Mutex::new(Session {
                next_id: 1,
                open: BTreeMap::new(),
                answered: BTreeMap::new(),
                history: Vec::new(),
                status: SessionStatus {
                    experiment_id: experiment_id.into(),
                    labels_needed,
                    ..Default::default()
                },
            }),
            changed: Condvar::new(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Session<S>> {
        self.session.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn set_round(&self, round: usize) {
        self.lock().status.round = round;
    }

    pub fn status(&self) -> SessionStatus {
        self.lock().status.clone()
    }

    /// Opens a ticket for the query `(seg0, seg1)`.
    pub fn request(&self, seg0: Arc<Segment<S>>, seg1: Arc<Segment<S>>, round: usize) -> u64 {
        let mut s = self.lock();
        let id = s.next_id;
        s.next_id += 1;
        s.open.insert(
            id,
            Ticket {
                id,
                seg0,
                seg1,
                round,
            },
        );
        id
    }

    /// Oldest open ticket; repeated calls return the same ticket until it is answered.
    pub fn pending(&self) -> Option<Ticket<S>> {
        self.lock().open.values().next().cloned()
    }

    /// Records the answer (`"first"`, `"second"` or `"skip"`) for a ticket.
    pub fn resolve(&self, id: u64, answer: &str) -> Result<PreferenceTriple<S>> {
        let label = PreferenceLabel::parse(answer).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "answer {answer:?} is not one of first, second, skip"
            ))
        })?;
        self.resolve_label(id, label)
    }

    pub fn resolve_label(&self, id: u64, label: PreferenceLabel) -> Result<PreferenceTriple<S>> {
        let mut s = self.lock();
        let Some(ticket) = s.open.remove(&id) else {
            return Err(if s.answered.contains_key(&id) {
                Error::TicketClosed(id)
            } else {
                Error::UnknownTicket(id)
            });
        };
        let triple = PreferenceTriple::new(ticket.seg0, ticket.seg1, label, ticket.round)?;
        s.answered.insert(id, triple.clone());
        s.history.push(triple.clone());
        s.status.labels_done += 1;
        drop(s);
        self.changed.notify_all();
        Ok(triple)
    }

    /// Blocks until every ticket in `ids` is answered, returning the triples in `ids` order.
    pub fn wait_all(
        &self,
        ids: &[u64],
        timeout: Option<Duration>,
    ) -> Result<Vec<PreferenceTriple<S>>> {
        let deadline = timeout.map(|t| Instant::now() + t);
        let mut s = self.lock();
        loop {
            if let Some(&missing) = ids.iter().find(|id| !s.answered.contains_key(id)) {
                if !s.open.contains_key(&missing) {
                    return Err(Error::UnknownTicket(missing));
                }
                s = match deadline {
                    None => self.changed.wait(s).unwrap_or_else(|e| e.into_inner()),
                    Some(d) => {
                        let now = Instant::now();
                        if now >= d {
                            return Err(Error::Timeout);
                        }
                        self.changed
                            .wait_timeout(s, d - now)
                            .unwrap_or_else(|e| e.into_inner())
                            .0
                    }
                };
            } else {
                return Ok(ids.iter().map(|id| s.answered[id].clone()).collect());
            }
        }
    }

    pub fn history(&self) -> Vec<PreferenceTriple<S>> {
        self.lock().history.clone()
    }
}
