//! Per-sample Batch Loss Scores.
//!
//! Every sample carries a score that is only touched when the sample is part
//! of the batch being processed. The update folds the batch's *mean* loss into
//! the sample's score with an exponential moving average:
//!
//! ```text
//! s_i(t) = alpha * s_i(t-1) + (1 - alpha) * L(B_t, t)   if i in B_t
//! s_i(t) = s_i(t-1)                                     otherwise
//! ```
//!
//! No per-sample loss is ever needed, only the scalar the training loop
//! already computes for backpropagation.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a training sample, stable across epochs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(pub usize);

impl SampleId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl From<usize> for SampleId {
    fn from(i: usize) -> Self {
        SampleId(i)
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("non-finite {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },
    #[error("EMA decay factor {0} outside (0, 1]")]
    InvalidAlpha(f64),
    #[error("sample index {index} out of range for table of size {size}")]
    OutOfRange { index: usize, size: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("sample {0} appears more than once in the batch")]
    DuplicateSample(usize),
    #[error("no batch in flight")]
    NoBatchInFlight,
    #[error("a batch is already in flight")]
    BatchInFlight,
    #[error("batch scale factor {0} must be positive and finite")]
    InvalidScale(f64),
}

/// How a sample's score is seeded before its first update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum InitPolicy {
    /// Every score starts at the mean loss of the first batch the table ever
    /// processes, then the EMA runs from there for all samples.
    #[default]
    FirstBatchLoss,
    /// A sample's first score is the first batch loss *it* observes; the EMA
    /// only starts with its second participation.
    FirstObservedBatchLoss,
    /// Every score starts at a fixed constant.
    FixedValue(f64),
}

/// Decay factor and initialization rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmaConfig {
    alpha: f64,
    init: InitPolicy,
}

impl EmaConfig {
    /// `alpha` must lie in `(0, 1]`. With `alpha == 1` scores freeze after
    /// initialization.
    pub fn new(alpha: f64, init: InitPolicy) -> Result<Self, ScoreError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(ScoreError::InvalidAlpha(alpha));
        }
        if let InitPolicy::FixedValue(v) = init {
            check_finite("initial score", v)?;
        }
        Ok(Self { alpha, init })
    }

    /// The "no EMA" ablation: a score is simply the last batch loss the
    /// sample observed (`alpha = 0`).
    pub fn last_loss() -> Self {
        Self {
            alpha: 0.0,
            init: InitPolicy::FirstObservedBatchLoss,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn init(&self) -> InitPolicy {
        self.init
    }

    pub fn is_last_loss(&self) -> bool {
        self.alpha == 0.0
    }
}

impl Default for EmaConfig {
    fn default() -> Self {
        Self {
            alpha: 0.7,
            init: InitPolicy::default(),
        }
    }
}

fn check_finite(what: &'static str, value: f64) -> Result<f64, ScoreError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ScoreError::NonFinite { what, value })
    }
}

/// One EMA step: `alpha * score_prev + (1 - alpha) * batch_loss`.
///
/// `alpha` is accepted on `[0, 1]` so the last-loss ablation can share this
/// path; `EmaConfig` is where the public range is enforced.
pub fn ema_update(score_prev: f64, batch_loss: f64, alpha: f64) -> Result<f64, ScoreError> {
    check_finite("previous score", score_prev)?;
    check_finite("batch loss", batch_loss)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ScoreError::InvalidAlpha(alpha));
    }
    Ok(alpha * score_prev + (1.0 - alpha) * batch_loss)
}

/// One training step's batch membership and mean loss.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchRecord {
    pub step: u64,
    sample_ids: Vec<SampleId>,
    pub mean_loss: f64,
}

impl BatchRecord {
    pub fn new(step: u64, sample_ids: Vec<SampleId>, mean_loss: f64) -> Result<Self, ScoreError> {
        if sample_ids.is_empty() {
            return Err(ScoreError::EmptyBatch);
        }
        let mut seen = HashSet::with_capacity(sample_ids.len());
        for id in &sample_ids {
            if !seen.insert(*id) {
                return Err(ScoreError::DuplicateSample(id.0));
            }
        }
        Ok(Self {
            step,
            sample_ids,
            mean_loss,
        })
    }

    pub fn sample_ids(&self) -> &[SampleId] {
        &self.sample_ids
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }
}

/// Dense per-sample score store.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    scores: Vec<f64>,
    update_count: Vec<u32>,
    initialized: Vec<bool>,
    /// Set once the first batch has been folded in; drives `FirstBatchLoss`.
    seeded: bool,
}

impl ScoreTable {
    pub fn new(n_samples: usize, cfg: &EmaConfig) -> Self {
        let start = match cfg.init {
            InitPolicy::FixedValue(v) => v,
            _ => 0.0,
        };
        Self {
            scores: vec![start; n_samples],
            update_count: vec![0; n_samples],
            initialized: vec![false; n_samples],
            seeded: false,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn score(&self, id: SampleId) -> f64 {
        self.scores[id.0]
    }

    pub fn update_count(&self, id: SampleId) -> u32 {
        self.update_count[id.0]
    }

    /// Whether the sample has taken part in at least one processed batch.
    pub fn is_initialized(&self, id: SampleId) -> bool {
        self.initialized[id.0]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn update_counts(&self) -> &[u32] {
        &self.update_count
    }

    pub fn initialized_flags(&self) -> &[bool] {
        &self.initialized
    }

    pub fn n_initialized(&self) -> usize {
        self.initialized.iter().filter(|&&f| f).count()
    }

    /// Folds one batch into the table. Validation happens before any score
    /// is touched, so a rejected batch leaves the table unchanged.
    pub fn apply_batch(&mut self, batch: &BatchRecord, cfg: &EmaConfig) -> Result<(), ScoreError> {
        self.apply_ids(batch.sample_ids(), batch.mean_loss, cfg)
    }

    pub(crate) fn apply_ids(
        &mut self,
        ids: &[SampleId],
        mean_loss: f64,
        cfg: &EmaConfig,
    ) -> Result<(), ScoreError> {
        check_finite("batch loss", mean_loss)?;
        let size = self.scores.len();
        if let Some(bad) = ids.iter().find(|id| id.0 >= size) {
            return Err(ScoreError::OutOfRange {
                index: bad.0,
                size,
            });
        }

        if !self.seeded {
            if cfg.init == InitPolicy::FirstBatchLoss {
                self.scores.fill(mean_loss);
            }
            self.seeded = true;
        }

        let alpha = cfg.alpha;
        for id in ids {
            let i = id.0;
            let first = !self.initialized[i];
            self.scores[i] = if first && cfg.init == InitPolicy::FirstObservedBatchLoss {
                mean_loss
            } else {
                ema_update(self.scores[i], mean_loss, alpha)?
            };
            self.initialized[i] = true;
            self.update_count[i] += 1;
        }
        Ok(())
    }

    /// A point-in-time copy of the table.
    pub fn snapshot(&self) -> ScoreSnapshot {
        ScoreSnapshot {
            scores: self.scores.clone(),
            update_count: self.update_count.clone(),
            initialized: self.initialized.clone(),
        }
    }
}

/// Owned, read-only copy of a [`ScoreTable`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSnapshot {
    pub scores: Vec<f64>,
    pub update_count: Vec<u32>,
    pub initialized: Vec<bool>,
}

impl ScoreSnapshot {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SampleId, f64, u32)> + '_ {
        self.scores
            .iter()
            .zip(&self.update_count)
            .enumerate()
            .map(|(i, (&s, &c))| (SampleId(i), s, c))
    }
}

#[derive(Clone, Debug)]
struct PendingBatch {
    ids: Vec<SampleId>,
    scale: f64,
}

/// The training-loop side of the scorer: the sampler installs the batch it
/// just handed out, then `update` receives the batch's mean loss, updates the
/// scores, and returns the loss to backpropagate.
#[derive(Clone, Debug)]
pub struct BlsHandler {
    table: ScoreTable,
    cfg: EmaConfig,
    pending: Option<PendingBatch>,
    steps: u64,
}

impl BlsHandler {
    pub fn new(n_samples: usize, cfg: EmaConfig) -> Self {
        Self {
            table: ScoreTable::new(n_samples, &cfg),
            cfg,
            pending: None,
            steps: 0,
        }
    }

    pub fn config(&self) -> &EmaConfig {
        &self.cfg
    }

    pub fn table(&self) -> &ScoreTable {
        &self.table
    }

    pub fn into_table(self) -> ScoreTable {
        self.table
    }

    /// Number of batches folded in so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn has_pending(&self) -> bool {
        self.pending.is_some()
    }

    pub fn pending_ids(&self) -> Option<&[SampleId]> {
        self.pending.as_ref().map(|p| p.ids.as_slice())
    }

    /// Marks `ids` as the batch currently being trained on. `scale` is the
    /// batch-level loss multiplier applied by `update`.
    pub fn install_batch(&mut self, ids: Vec<SampleId>, scale: f64) -> Result<(), ScoreError> {
        if self.pending.is_some() {
            return Err(ScoreError::BatchInFlight);
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(ScoreError::InvalidScale(scale));
        }
        // Validate membership now so `update` cannot fail half-way.
        let _ = BatchRecord::new(self.steps, ids.clone(), 0.0)?;
        let size = self.table.len();
        if let Some(bad) = ids.iter().find(|id| id.0 >= size) {
            return Err(ScoreError::OutOfRange {
                index: bad.0,
                size,
            });
        }
        self.pending = Some(PendingBatch { ids, scale });
        Ok(())
    }

    /// Folds `mean_batch_loss` into the pending batch's scores and returns the
    /// (possibly rescaled) loss. Clears the pending batch.
    pub fn update(&mut self, mean_batch_loss: f64) -> Result<f64, ScoreError> {
        let pending = self.pending.as_ref().ok_or(ScoreError::NoBatchInFlight)?;
        self.table
            .apply_ids(&pending.ids, mean_batch_loss, &self.cfg)?;
        let scale = pending.scale;
        self.pending = None;
        self.steps += 1;
        Ok(if scale == 1.0 {
            mean_batch_loss
        } else {
            mean_batch_loss * scale
        })
    }

    pub fn snapshot(&self) -> ScoreSnapshot {
        self.table.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[usize]) -> Vec<SampleId> {
        v.iter().copied().map(SampleId).collect()
    }

    fn first_observed(alpha: f64) -> EmaConfig {
        EmaConfig::new(alpha, InitPolicy::FirstObservedBatchLoss).unwrap()
    }

    #[test]
    fn ema_fixed_point() {
        for a in [0.1, 0.5, 0.7, 1.0] {
            assert_eq!(ema_update(2.0, 2.0, a).unwrap(), 2.0);
        }
    }

    #[test]
    fn ema_identity_at_alpha_one() {
        assert_eq!(ema_update(5.0, 0.0, 1.0).unwrap(), 5.0);
    }

    #[test]
    fn ema_half() {
        assert_eq!(ema_update(1.0, 3.0, 0.5).unwrap(), 2.0);
    }

    #[test]
    fn ema_rejects_non_finite() {
        let err = ema_update(f64::NAN, 1.0, 0.5).unwrap_err();
        assert!(err.to_string().contains("previous score"));
        let err = ema_update(1.0, f64::INFINITY, 0.5).unwrap_err();
        assert!(err.to_string().contains("batch loss"));
        assert!(err.to_string().contains("inf"));
    }

    #[test]
    fn config_range() {
        assert!(EmaConfig::new(0.0, InitPolicy::FirstBatchLoss).is_err());
        assert!(EmaConfig::new(1.5, InitPolicy::FirstBatchLoss).is_err());
        assert!(EmaConfig::new(f64::NAN, InitPolicy::FirstBatchLoss).is_err());
        assert!(EmaConfig::new(1.0, InitPolicy::FirstBatchLoss).is_ok());
        assert!(EmaConfig::new(0.5, InitPolicy::FixedValue(f64::NAN)).is_err());
    }

    #[test]
    fn batch_record_invariants() {
        assert_eq!(
            BatchRecord::new(0, vec![], 1.0).unwrap_err(),
            ScoreError::EmptyBatch
        );
        assert_eq!(
            BatchRecord::new(0, ids(&[1, 2, 1]), 1.0).unwrap_err(),
            ScoreError::DuplicateSample(1)
        );
    }

    #[test]
    fn non_member_untouched() {
        let cfg = first_observed(0.7);
        let mut t = ScoreTable::new(4, &cfg);
        t.apply_batch(&BatchRecord::new(0, ids(&[0, 1]), 1.0).unwrap(), &cfg)
            .unwrap();
        let before = t.score(SampleId(1));
        t.apply_batch(&BatchRecord::new(1, ids(&[0, 2]), 3.0).unwrap(), &cfg)
            .unwrap();
        assert_eq!(t.score(SampleId(1)), before);
        assert_eq!(t.update_count(SampleId(1)), 1);
        assert_eq!(t.update_count(SampleId(3)), 0);
        assert!(!t.is_initialized(SampleId(3)));
    }

    #[test]
    fn first_observed_initialization() {
        let cfg = first_observed(0.7);
        let mut t = ScoreTable::new(5, &cfg);
        t.apply_batch(&BatchRecord::new(0, ids(&[0, 3, 4]), 0.7).unwrap(), &cfg)
            .unwrap();
        for i in [0, 3, 4] {
            assert_eq!(t.score(SampleId(i)), 0.7);
        }
    }

    #[test]
    fn hand_unrolled_two_steps() {
        let cfg = EmaConfig::new(0.7, InitPolicy::FixedValue(1.0)).unwrap();
        let mut t = ScoreTable::new(2, &cfg);
        t.apply_batch(&BatchRecord::new(0, ids(&[0]), 2.0).unwrap(), &cfg)
            .unwrap();
        assert!((t.score(SampleId(0)) - 1.3).abs() < 1e-15);
        t.apply_batch(&BatchRecord::new(1, ids(&[0]), 4.0).unwrap(), &cfg)
            .unwrap();
        assert!((t.score(SampleId(0)) - 2.11).abs() < 1e-15);
        assert_eq!(t.score(SampleId(1)), 1.0);
    }

    #[test]
    fn first_batch_loss_seeds_everyone() {
        let cfg = EmaConfig::new(0.5, InitPolicy::FirstBatchLoss).unwrap();
        let mut t = ScoreTable::new(3, &cfg);
        t.apply_batch(&BatchRecord::new(0, ids(&[0]), 2.0).unwrap(), &cfg)
            .unwrap();
        assert_eq!(t.scores(), &[2.0, 2.0, 2.0]);
        t.apply_batch(&BatchRecord::new(1, ids(&[1]), 4.0).unwrap(), &cfg)
            .unwrap();
        assert_eq!(t.scores(), &[2.0, 3.0, 2.0]);
        assert!(!t.is_initialized(SampleId(2)));
    }

    #[test]
    fn alpha_one_freezes_after_init() {
        let cfg = first_observed(1.0);
        let mut t = ScoreTable::new(1, &cfg);
        for (s, l) in [0.4, 9.0, 2.0].into_iter().enumerate() {
            t.apply_batch(&BatchRecord::new(s as u64, ids(&[0]), l).unwrap(), &cfg)
                .unwrap();
        }
        assert_eq!(t.score(SampleId(0)), 0.4);
    }

    #[test]
    fn last_loss_tracks_latest() {
        let cfg = EmaConfig::last_loss();
        let mut t = ScoreTable::new(1, &cfg);
        for (s, l) in [0.4, 9.0, 2.0].into_iter().enumerate() {
            t.apply_batch(&BatchRecord::new(s as u64, ids(&[0]), l).unwrap(), &cfg)
                .unwrap();
            assert_eq!(t.score(SampleId(0)), l);
        }
    }

    #[test]
    fn out_of_range_rejected_atomically() {
        let cfg = first_observed(0.7);
        let mut t = ScoreTable::new(3, &cfg);
        let err = t
            .apply_batch(&BatchRecord::new(0, ids(&[0, 7]), 1.0).unwrap(), &cfg)
            .unwrap_err();
        assert_eq!(err, ScoreError::OutOfRange { index: 7, size: 3 });
        assert!(err.to_string().contains('7') && err.to_string().contains('3'));
        assert_eq!(t.update_count(SampleId(0)), 0);
    }

    #[test]
    fn handler_pass_through_and_pending() {
        let mut h = BlsHandler::new(10, first_observed(0.7));
        assert_eq!(h.update(1.0).unwrap_err().to_string(), "no batch in flight");
        h.install_batch(ids(&[1, 2, 3]), 1.0).unwrap();
        let before = h.snapshot();
        assert_eq!(h.update(1.25).unwrap(), 1.25);
        let after = h.snapshot();
        let changed: Vec<usize> = (0..10)
            .filter(|&i| before.update_count[i] != after.update_count[i])
            .collect();
        assert_eq!(changed, vec![1, 2, 3]);
        assert!(!h.has_pending());
        assert_eq!(h.update(1.0).unwrap_err(), ScoreError::NoBatchInFlight);
    }

    #[test]
    fn handler_rescales() {
        let mut h = BlsHandler::new(4, first_observed(0.7));
        h.install_batch(ids(&[0, 1]), 1.5).unwrap();
        assert_eq!(h.update(2.0).unwrap(), 3.0);
        // Scores see the raw batch loss, not the rescaled one.
        assert_eq!(h.table().score(SampleId(0)), 2.0);
    }

    #[test]
    fn handler_rejects_double_install_and_bad_scale() {
        let mut h = BlsHandler::new(4, first_observed(0.7));
        assert!(h.install_batch(ids(&[0]), 0.0).is_err());
        assert!(h.install_batch(ids(&[9]), 1.0).is_err());
        h.install_batch(ids(&[0]), 1.0).unwrap();
        assert_eq!(
            h.install_batch(ids(&[1]), 1.0).unwrap_err(),
            ScoreError::BatchInFlight
        );
    }
}
