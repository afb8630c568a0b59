//! Drop-in scorer for an external training loop.
//!
//! A [`BlsSession`] bundles the score handler, the pruning policy and the
//! sampler state. The host loop only needs three calls:
//!
//! ```
//! use bls_core::session::{create_handler, SessionConfig};
//!
//! let mut h = create_handler(100, 0.7, SessionConfig::default()).unwrap();
//! for _epoch in 0..3 {
//!     for batch in h.next_epoch_indices(16, 0).unwrap() {
//!         let loss = batch.len() as f64 * 0.01; // forward pass goes here
//!         let _to_backprop = h.update(loss).unwrap();
//!     }
//! }
//! assert_eq!(h.scores_snapshot().initialized.iter().filter(|&&f| f).count(), 100);
//! ```

use std::collections::VecDeque;

use thiserror::Error;

use crate::pruning::{
    pruned_percent, sampler_for, select_active_set, ActiveSet, CycleSchedule, PruneError,
    PrunePolicy,
};
use crate::score::{BlsHandler, EmaConfig, InitPolicy, SampleId, ScoreError, ScoreSnapshot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error("dataset must contain at least one sample")]
    NoSamples,
}

/// Everything about a session except its size and decay factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SessionConfig {
    pub init: InitPolicy,
    pub policy: PrunePolicy,
    pub schedule: CycleSchedule,
    /// Seed for pruning draws.
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            init: InitPolicy::default(),
            policy: PrunePolicy::Full,
            schedule: CycleSchedule {
                cycle_len_epochs: 1,
                total_epochs: 1,
            },
            seed: 0,
        }
    }
}

/// Creates a session over `n_samples` samples with decay factor `alpha`.
pub fn create_handler(n_samples: usize, alpha: f64, cfg: SessionConfig) -> Result<BlsSession, SessionError> {
    let ema = EmaConfig::new(alpha, cfg.init)?;
    BlsSession::new(n_samples, ema, cfg.policy, cfg.schedule, cfg.seed)
}

#[derive(Clone, Debug)]
pub struct BlsSession {
    handler: BlsHandler,
    policy: PrunePolicy,
    schedule: CycleSchedule,
    seed: u64,
    epoch: usize,
    active: Option<ActiveSet>,
    history: Vec<ActiveSet>,
    queued: VecDeque<Vec<SampleId>>,
}

impl BlsSession {
    pub fn new(
        n_samples: usize,
        ema: EmaConfig,
        policy: PrunePolicy,
        schedule: CycleSchedule,
        seed: u64,
    ) -> Result<Self, SessionError> {
        if n_samples == 0 {
            return Err(SessionError::NoSamples);
        }
        policy.validate()?;
        Ok(Self {
            handler: BlsHandler::new(n_samples, ema),
            policy,
            schedule,
            seed,
            epoch: 0,
            active: None,
            history: Vec::new(),
            queued: VecDeque::new(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.handler.table().len()
    }

    /// Epochs handed out so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn handler(&self) -> &BlsHandler {
        &self.handler
    }

    pub fn active_set(&self) -> Option<&ActiveSet> {
        self.active.as_ref()
    }

    /// One active set per cycle started so far.
    pub fn history(&self) -> &[ActiveSet] {
        &self.history
    }

    pub fn pruned_percent(&self) -> f64 {
        pruned_percent(&self.history, self.n_samples())
    }

    /// Re-selects the active set if this epoch opens a cycle.
    pub fn advance_epoch(&mut self) -> Result<&ActiveSet, SessionError> {
        if self.active.is_none() || self.schedule.is_boundary(self.epoch) {
            let cycle = self.schedule.cycle_of(self.epoch);
            let set = select_active_set(
                self.handler.table(),
                &self.policy,
                cycle,
                &self.schedule,
                self.seed,
            )?;
            self.history.push(set.clone());
            self.active = Some(set);
        }
        self.epoch += 1;
        Ok(self.active.as_ref().expect("active set selected above"))
    }

    /// Batches for the next epoch. They are queued in order; each `update`
    /// call without an explicitly started batch consumes the next one.
    /// Batches left over from a previous epoch are discarded.
    pub fn next_epoch_indices(&mut self, batch_size: usize, seed: u64) -> Result<Vec<Vec<SampleId>>, SessionError> {
        let epoch = self.epoch;
        let active = self.advance_epoch()?;
        let batches = sampler_for(active, batch_size, seed)?.epoch(epoch);
        self.queued = batches.iter().cloned().collect();
        Ok(batches)
    }

    /// Installs `ids` as the batch in flight and returns its loss multiplier.
    pub fn begin_batch(&mut self, ids: Vec<SampleId>) -> Result<f64, SessionError> {
        let scale = self.batch_scale(&ids);
        self.handler.install_batch(ids, scale)?;
        Ok(scale)
    }

    pub fn batch_scale(&self, ids: &[SampleId]) -> f64 {
        self.active.as_ref().map_or(1.0, |a| a.batch_scale(ids))
    }

    /// Folds the mean loss of the batch in flight into the scores and
    /// returns the loss to backpropagate.
    pub fn update(&mut self, mean_batch_loss: f64) -> Result<f64, SessionError> {
        if !self.handler.has_pending() {
            let next = self.queued.pop_front().ok_or(ScoreError::NoBatchInFlight)?;
            self.begin_batch(next)?;
        }
        Ok(self.handler.update(mean_batch_loss)?)
    }

    pub fn scores_snapshot(&self) -> ScoreSnapshot {
        self.handler.snapshot()
    }
}
