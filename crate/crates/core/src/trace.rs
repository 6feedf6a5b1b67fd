//! Per-round and per-epoch records of one episode.

use serde::Serialize;

use crate::algo::ParamSchedule;
use crate::error::{Error, Result};
use crate::simplex::SimplexVector;

/// What a round contributes to estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Feeds the importance estimate of the next epoch.
    Freq,
    /// May produce a loss estimate (when its keep coin comes up).
    Loss,
    /// Not part of any pair: the trailing odd round, or every round of a
    /// learner without pair structure.
    Unpaired,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub t: usize,
    pub context: usize,
    pub arm: usize,
    /// The rejection rule replaced the FTRL distribution by the snapshot.
    pub fallback: bool,
    /// Outcome of the keep coin on loss-role rounds of epochs >= 2.
    pub keep: Option<bool>,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    pub start: usize,
    pub len: usize,
    /// Snapshot used by this epoch's rejection rule, one per context.
    pub snapshot: Vec<SimplexVector>,
    /// Importance estimate used by this epoch's loss estimates (absent in epoch 1).
    pub fhat: Option<Vec<f64>>,
    pub completed: bool,
}

/// Everything a learner did over one horizon.
///
/// `p(t)` is the distribution the learner's own rule proposed for the
/// realized context and `q(t)` the one actually sampled from.
#[derive(Debug, Clone)]
pub struct Trace {
    arms: usize,
    contexts: usize,
    horizon: usize,
    schedule: Option<ParamSchedule>,
    rounds: Vec<RoundRecord>,
    p: Vec<f64>,
    q: Vec<f64>,
    epochs: Vec<EpochRecord>,
}

impl Trace {
    pub fn new(arms: usize, contexts: usize, horizon: usize, schedule: Option<ParamSchedule>) -> Self {
        Self {
            arms,
            contexts,
            horizon,
            schedule,
            rounds: Vec::with_capacity(horizon),
            p: Vec::with_capacity(horizon * arms),
            q: Vec::with_capacity(horizon * arms),
            epochs: Vec::new(),
        }
    }

    pub fn push_round(&mut self, record: RoundRecord, p: &[f64], q: &[f64]) -> Result<()> {
        if record.t != self.rounds.len() || record.t >= self.horizon {
            return Err(Error::invalid(format!(
                "round {} appended out of order (have {} of {})",
                record.t,
                self.rounds.len(),
                self.horizon
            )));
        }
        if p.len() != self.arms || q.len() != self.arms {
            return Err(Error::DimensionMismatch(format!(
                "round distributions must have {} arms",
                self.arms
            )));
        }
        if record.context >= self.contexts || record.arm >= self.arms {
            return Err(Error::invalid(format!(
                "round {} has context {} / arm {} out of range",
                record.t, record.context, record.arm
            )));
        }
        self.rounds.push(record);
        self.p.extend_from_slice(p);
        self.q.extend_from_slice(q);
        Ok(())
    }

    pub(crate) fn push_epoch(&mut self, record: EpochRecord) {
        self.epochs.push(record);
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn contexts(&self) -> usize {
        self.contexts
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn schedule(&self) -> Option<&ParamSchedule> {
        self.schedule.as_ref()
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn epochs(&self) -> &[EpochRecord] {
        &self.epochs
    }

    pub fn p(&self, t: usize) -> &[f64] {
        &self.p[t * self.arms..(t + 1) * self.arms]
    }

    pub fn q(&self, t: usize) -> &[f64] {
        &self.q[t * self.arms..(t + 1) * self.arms]
    }

    pub fn is_complete(&self) -> bool {
        self.rounds.len() == self.horizon
    }

    /// Realized context sequence.
    pub fn realized_contexts(&self) -> Vec<usize> {
        self.rounds.iter().map(|r| r.context).collect()
    }

    /// Sum of completed-epoch counts, handy for event statistics.
    pub fn completed_epochs(&self) -> usize {
        self.epochs.iter().filter(|e| e.completed).count()
    }
}
