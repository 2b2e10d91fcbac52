use serde::{Deserialize, Serialize};

use crate::prox::ProxResult;

/// Master → worker: evaluate the prox of `scenario` at `point`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMessage {
    pub scenario: usize,
    pub point: Vec<f64>,
    /// Master update count when the task was sent.
    pub dispatch_epoch: u64,
}

/// Worker → master.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultMessage {
    pub worker: usize,
    pub scenario: usize,
    pub dispatch_epoch: u64,
    /// Dispatch sequence number assigned by the pool.
    pub sequence: u64,
    pub result: ProxResult,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Completion {
    Done(ResultMessage),
    /// The worker crashed (or had a fault injected) while running the task.
    Poisoned { worker: usize, scenario: usize, dispatch_epoch: u64, sequence: u64, reason: String },
}

impl Completion {
    pub fn worker(&self) -> usize {
        match self {
            Self::Done(r) => r.worker,
            Self::Poisoned { worker, .. } => *worker,
        }
    }

    pub fn scenario(&self) -> usize {
        match self {
            Self::Done(r) => r.scenario,
            Self::Poisoned { scenario, .. } => *scenario,
        }
    }

    pub fn dispatch_epoch(&self) -> u64 {
        match self {
            Self::Done(r) => r.dispatch_epoch,
            Self::Poisoned { dispatch_epoch, .. } => *dispatch_epoch,
        }
    }

    pub fn sequence(&self) -> u64 {
        match self {
            Self::Done(r) => r.sequence,
            Self::Poisoned { sequence, .. } => *sequence,
        }
    }
}
