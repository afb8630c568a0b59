//! Per-cycle keep/prune decisions.
//!
//! Two policy families are provided, both simplified reconstructions rather
//! than ports of any particular framework:
//!
//! * InfoBatch-like threshold soft pruning: samples scoring strictly below the
//!   mean are dropped at random with a fixed probability, and the survivors of
//!   that group get their loss scaled up to keep the gradient unbiased.
//! * SeTa-like difficulty windows: samples are ranked by score and a
//!   contiguous rank window is kept, optionally sliding from easy to hard.
//!
//! Samples that have never been scored are always kept.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::score::{SampleId, ScoreTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PruneError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("prune probability {0} outside [0, 1]")]
    InvalidPruneProb(f64),
    #[error("anneal tail {0} outside [0, 1)")]
    InvalidAnnealTail(f64),
    #[error("keep fraction {0} outside (0, 1]")]
    InvalidKeepFraction(f64),
    #[error("keep fraction {keep_fraction} keeps less than one of {n_samples} samples")]
    EmptyWindow { keep_fraction: f64, n_samples: usize },
    #[error("cycle length and total epochs must be positive")]
    InvalidSchedule,
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    #[error("active set is empty")]
    EmptyActiveSet,
}

/// Direction of the difficulty window across cycles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowProgress {
    /// Window start moves linearly from the easiest samples at cycle 0 to
    /// the hardest at the final cycle.
    EasyToHard,
    /// Always the lowest-score window.
    Static,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PrunePolicy {
    /// Train on everything; the full-data baseline.
    Full,
    ThresholdSoftPrune {
        prune_prob: f64,
        rescale: bool,
        /// Final fraction of epochs during which nothing is pruned.
        anneal_tail: f64,
    },
    WindowSelect {
        keep_fraction: f64,
        progress: WindowProgress,
    },
}

pub const DEFAULT_ANNEAL_TAIL: f64 = 0.125;

impl PrunePolicy {
    pub fn threshold(prune_prob: f64) -> Self {
        PrunePolicy::ThresholdSoftPrune {
            prune_prob,
            rescale: true,
            anneal_tail: DEFAULT_ANNEAL_TAIL,
        }
    }

    pub fn validate(&self) -> Result<(), PruneError> {
        match *self {
            PrunePolicy::Full => Ok(()),
            PrunePolicy::ThresholdSoftPrune {
                prune_prob,
                anneal_tail,
                ..
            } => {
                if !(0.0..=1.0).contains(&prune_prob) {
                    return Err(PruneError::InvalidPruneProb(prune_prob));
                }
                if !(0.0..1.0).contains(&anneal_tail) {
                    return Err(PruneError::InvalidAnnealTail(anneal_tail));
                }
                Ok(())
            }
            PrunePolicy::WindowSelect { keep_fraction, .. } => {
                if keep_fraction > 0.0 && keep_fraction <= 1.0 {
                    Ok(())
                } else {
                    Err(PruneError::InvalidKeepFraction(keep_fraction))
                }
            }
        }
    }

    /// True when the policy can never prune or rescale anything.
    pub fn is_noop(&self) -> bool {
        match *self {
            PrunePolicy::Full => true,
            PrunePolicy::ThresholdSoftPrune { prune_prob, .. } => prune_prob == 0.0,
            PrunePolicy::WindowSelect { keep_fraction, .. } => keep_fraction == 1.0,
        }
    }
}

/// Cycle layout over a training run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CycleSchedule {
    pub cycle_len_epochs: usize,
    pub total_epochs: usize,
}

impl CycleSchedule {
    pub fn new(cycle_len_epochs: usize, total_epochs: usize) -> Result<Self, PruneError> {
        if cycle_len_epochs == 0 || total_epochs == 0 {
            return Err(PruneError::InvalidSchedule);
        }
        Ok(Self {
            cycle_len_epochs,
            total_epochs,
        })
    }

    pub fn per_epoch(total_epochs: usize) -> Result<Self, PruneError> {
        Self::new(1, total_epochs)
    }

    pub fn n_cycles(&self) -> usize {
        self.total_epochs.div_ceil(self.cycle_len_epochs)
    }

    pub fn cycle_of(&self, epoch: usize) -> usize {
        epoch / self.cycle_len_epochs
    }

    pub fn is_boundary(&self, epoch: usize) -> bool {
        epoch.is_multiple_of(self.cycle_len_epochs)
    }

    pub fn start_epoch(&self, cycle: usize) -> usize {
        cycle * self.cycle_len_epochs
    }

    /// Whether `cycle` starts inside the final `tail` fraction of the epochs.
    pub fn in_tail(&self, cycle: usize, tail: f64) -> bool {
        tail > 0.0 && self.start_epoch(cycle) as f64 >= self.total_epochs as f64 * (1.0 - tail)
    }
}

/// Samples kept for one cycle, with loss-rescale factors for the kept ones.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveSet {
    n_samples: usize,
    /// Ascending.
    kept: Vec<SampleId>,
    /// Only factors different from 1.0 are stored.
    rescale: HashMap<SampleId, f64>,
    pub cycle_index: usize,
}

impl ActiveSet {
    /// Every sample kept with factor 1.0.
    pub fn full(n_samples: usize, cycle_index: usize) -> Self {
        Self {
            n_samples,
            kept: (0..n_samples).map(SampleId).collect(),
            rescale: HashMap::new(),
            cycle_index,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn kept(&self) -> &[SampleId] {
        &self.kept
    }

    pub fn n_kept(&self) -> usize {
        self.kept.len()
    }

    pub fn contains(&self, id: SampleId) -> bool {
        self.kept.binary_search(&id).is_ok()
    }

    /// Loss factor of a kept sample; `None` if the sample is pruned.
    pub fn factor(&self, id: SampleId) -> Option<f64> {
        if self.contains(id) {
            Some(self.rescale.get(&id).copied().unwrap_or(1.0))
        } else {
            None
        }
    }

    /// Kept samples whose factor differs from 1.0.
    pub fn rescaled(&self) -> impl Iterator<Item = (SampleId, f64)> + '_ {
        self.rescale.iter().map(|(&id, &f)| (id, f))
    }

    pub fn pruned_fraction(&self) -> f64 {
        if self.n_samples == 0 {
            0.0
        } else {
            1.0 - self.kept.len() as f64 / self.n_samples as f64
        }
    }

    /// Batch-level loss multiplier: the mean factor over the batch members.
    /// Pruned ids count as 1.0.
    pub fn batch_scale(&self, ids: &[SampleId]) -> f64 {
        if ids.is_empty() || self.rescale.is_empty() {
            return 1.0;
        }
        let sum: f64 = ids
            .iter()
            .map(|id| self.rescale.get(id).copied().unwrap_or(1.0))
            .sum();
        sum / ids.len() as f64
    }

    /// Samples not kept this cycle, ascending.
    pub fn pruned(&self) -> Vec<SampleId> {
        let mut out = Vec::with_capacity(self.n_samples - self.kept.len());
        let mut kept = self.kept.iter().peekable();
        for i in 0..self.n_samples {
            if kept.peek().map(|id| id.0) == Some(i) {
                kept.next();
            } else {
                out.push(SampleId(i));
            }
        }
        out
    }
}

fn cycle_rng(seed: u64, cycle: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cycle as u64);
    rng
}

/// Chooses the samples to train on in `cycle`.
pub fn select_active_set(
    table: &ScoreTable,
    policy: &PrunePolicy,
    cycle: usize,
    schedule: &CycleSchedule,
    seed: u64,
) -> Result<ActiveSet, PruneError> {
    let n = table.len();
    if n == 0 {
        return Err(PruneError::EmptyDataset);
    }
    policy.validate()?;
    match *policy {
        PrunePolicy::Full => Ok(ActiveSet::full(n, cycle)),
        PrunePolicy::ThresholdSoftPrune {
            prune_prob,
            rescale,
            anneal_tail,
        } => {
            if prune_prob == 0.0 || schedule.in_tail(cycle, anneal_tail) {
                return Ok(ActiveSet::full(n, cycle));
            }
            Ok(threshold_prune(table, prune_prob, rescale, cycle, seed))
        }
        PrunePolicy::WindowSelect {
            keep_fraction,
            progress,
        } => window_select(table, keep_fraction, progress, cycle, schedule),
    }
}

fn threshold_prune(table: &ScoreTable, prune_prob: f64, rescale: bool, cycle: usize, seed: u64) -> ActiveSet {
    let n = table.len();
    let scores = table.scores();
    let init = table.initialized_flags();

    let (mut sum, mut count) = (0.0, 0usize);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (&x, _) in scores.iter().zip(init).filter(|(_, &f)| f) {
        sum += x;
        count += 1;
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if count == 0 {
        return ActiveSet::full(n, cycle);
    }
    // Rounding can push a sum-based mean outside [min, max]; with all scores
    // equal that would put every sample below its own mean.
    let mean = (sum / count as f64).clamp(lo, hi);
    let factor = 1.0 / (1.0 - prune_prob);

    let mut rng = cycle_rng(seed, cycle);
    let mut kept = Vec::with_capacity(n);
    let mut factors = HashMap::new();
    for (i, (&s, &f)) in scores.iter().zip(init).enumerate() {
        let id = SampleId(i);
        if f && s < mean {
            if rng.random::<f64>() < prune_prob {
                continue;
            }
            if rescale && factor != 1.0 {
                factors.insert(id, factor);
            }
        }
        kept.push(id);
    }
    ActiveSet {
        n_samples: n,
        kept,
        rescale: factors,
        cycle_index: cycle,
    }
}

fn window_select(
    table: &ScoreTable,
    keep_fraction: f64,
    progress: WindowProgress,
    cycle: usize,
    schedule: &CycleSchedule,
) -> Result<ActiveSet, PruneError> {
    let n = table.len();
    if keep_fraction * (n as f64) < 1.0 {
        return Err(PruneError::EmptyWindow {
            keep_fraction,
            n_samples: n,
        });
    }
    let budget = ((keep_fraction * n as f64).ceil() as usize).min(n);
    let scores = table.scores();
    let init = table.initialized_flags();

    let mut kept: Vec<SampleId> = (0..n).filter(|&i| !init[i]).map(SampleId).collect();
    let mut ranked: Vec<usize> = (0..n).filter(|&i| init[i]).collect();
    ranked.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));

    let width = budget.saturating_sub(kept.len()).min(ranked.len());
    let slack = ranked.len() - width;
    let start = match progress {
        WindowProgress::Static => 0,
        WindowProgress::EasyToHard => {
            let last = schedule.n_cycles().saturating_sub(1);
            if last == 0 {
                0
            } else {
                let t = cycle.min(last) as f64 / last as f64;
                (t * slack as f64).round() as usize
            }
        }
    };
    kept.extend(ranked[start..start + width].iter().map(|&i| SampleId(i)));
    kept.sort_unstable();
    Ok(ActiveSet {
        n_samples: n,
        kept,
        rescale: HashMap::new(),
        cycle_index: cycle,
    })
}

/// Percentage of sample visits skipped over a run:
/// `100 * (1 - sum(|kept|) / (cycles * n_samples))`. Empty history gives 0.
pub fn pruned_percent(history: &[ActiveSet], n_samples: usize) -> f64 {
    if history.is_empty() || n_samples == 0 {
        return 0.0;
    }
    let kept: usize = history.iter().map(ActiveSet::n_kept).sum();
    100.0 * (1.0 - kept as f64 / (history.len() * n_samples) as f64)
}

/// Shuffled, batched iteration over an active set. Each epoch uses its own
/// permutation derived from the seed.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    kept: Vec<SampleId>,
    batch_size: usize,
    seed: u64,
}

impl BatchSampler {
    pub fn new(kept: Vec<SampleId>, batch_size: usize, seed: u64) -> Result<Self, PruneError> {
        if batch_size == 0 {
            return Err(PruneError::ZeroBatchSize);
        }
        if kept.is_empty() {
            return Err(PruneError::EmptyActiveSet);
        }
        Ok(Self {
            kept,
            batch_size,
            seed,
        })
    }

    pub fn n_batches(&self) -> usize {
        self.kept.len().div_ceil(self.batch_size)
    }

    /// The batches of `epoch`; the last one may be short.
    pub fn epoch(&self, epoch: usize) -> Vec<Vec<SampleId>> {
        let mut order = self.kept.clone();
        let mut rng = cycle_rng(self.seed ^ SAMPLER_SALT, epoch);
        order.shuffle(&mut rng);
        order.chunks(self.batch_size).map(<[_]>::to_vec).collect()
    }
}

// Keeps shuffle streams apart from pruning draws made with the same seed.
const SAMPLER_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn sampler_for(active: &ActiveSet, batch_size: usize, seed: u64) -> Result<BatchSampler, PruneError> {
    BatchSampler::new(active.kept.clone(), batch_size, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{BatchRecord, EmaConfig, InitPolicy};

    fn table_with(scores: &[f64]) -> ScoreTable {
        let cfg = EmaConfig::new(0.5, InitPolicy::FirstObservedBatchLoss).unwrap();
        let mut t = ScoreTable::new(scores.len(), &cfg);
        for (i, &s) in scores.iter().enumerate() {
            t.apply_batch(&BatchRecord::new(i as u64, vec![SampleId(i)], s).unwrap(), &cfg)
                .unwrap();
        }
        t
    }

    fn sched() -> CycleSchedule {
        CycleSchedule::per_epoch(8).unwrap()
    }

    #[test]
    fn zero_prob_keeps_everything() {
        let t = table_with(&[1.0, 2.0, 3.0, 0.5]);
        let a = select_active_set(&t, &PrunePolicy::threshold(0.0), 1, &sched(), 7).unwrap();
        assert_eq!(a.n_kept(), 4);
        assert!(a.kept().iter().all(|&id| a.factor(id) == Some(1.0)));
    }

    #[test]
    fn equal_scores_prune_nothing() {
        let t = table_with(&[2.0; 50]);
        let a = select_active_set(&t, &PrunePolicy::threshold(0.9), 1, &sched(), 7).unwrap();
        assert_eq!(a.n_kept(), 50);
        // 240 * 0.1 does not sum to exactly 24.0.
        let t = table_with(&[0.1; 240]);
        assert_ne!([0.1f64; 240].iter().sum::<f64>() / 240.0, 0.1);
        let a = select_active_set(&t, &PrunePolicy::threshold(1.0), 1, &sched(), 7).unwrap();
        assert_eq!(a.n_kept(), 240);
    }

    #[test]
    fn prob_one_prunes_all_below_mean() {
        let t = table_with(&[1.0, 2.0, 3.0, 4.0]);
        let a = select_active_set(&t, &PrunePolicy::threshold(1.0), 0, &sched(), 1).unwrap();
        assert_eq!(a.kept(), &[SampleId(2), SampleId(3)]);
        assert_eq!(a.pruned(), vec![SampleId(0), SampleId(1)]);
        assert_eq!(a.pruned_fraction(), 0.5);
    }

    #[test]
    fn rescale_factor_values() {
        let scores: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let t = table_with(&scores);
        let a = select_active_set(&t, &PrunePolicy::threshold(0.4), 0, &sched(), 3).unwrap();
        for &id in a.kept() {
            let f = a.factor(id).unwrap();
            if scores[id.0] < 99.5 {
                assert_eq!(f, 1.0 / 0.6);
            } else {
                assert_eq!(f, 1.0);
            }
        }
        let no_rescale = PrunePolicy::ThresholdSoftPrune {
            prune_prob: 0.4,
            rescale: false,
            anneal_tail: 0.0,
        };
        let b = select_active_set(&t, &no_rescale, 0, &sched(), 3).unwrap();
        assert_eq!(b.rescaled().count(), 0);
    }

    #[test]
    fn anneal_tail_keeps_all() {
        let scores: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let t = table_with(&scores);
        let policy = PrunePolicy::threshold(0.9);
        // 8 epochs, tail 0.125: only the last epoch (cycle 7) is annealed.
        assert!(select_active_set(&t, &policy, 6, &sched(), 0).unwrap().n_kept() < 100);
        assert_eq!(select_active_set(&t, &policy, 7, &sched(), 0).unwrap().n_kept(), 100);
    }

    #[test]
    fn uninitialized_always_kept() {
        let cfg = EmaConfig::new(0.5, InitPolicy::FirstObservedBatchLoss).unwrap();
        let mut t = ScoreTable::new(6, &cfg);
        t.apply_batch(&BatchRecord::new(0, vec![SampleId(0), SampleId(1)], 0.1).unwrap(), &cfg)
            .unwrap();
        t.apply_batch(&BatchRecord::new(1, vec![SampleId(2)], 5.0).unwrap(), &cfg)
            .unwrap();
        let a = select_active_set(&t, &PrunePolicy::threshold(1.0), 0, &sched(), 0).unwrap();
        assert_eq!(a.kept(), &[2, 3, 4, 5].map(SampleId));
    }

    #[test]
    fn window_static_keeps_easiest() {
        let t = table_with(&[5.0, 1.0, 4.0, 2.0, 3.0]);
        let p = PrunePolicy::WindowSelect {
            keep_fraction: 0.4,
            progress: WindowProgress::Static,
        };
        for c in 0..4 {
            let a = select_active_set(&t, &p, c, &sched(), 0).unwrap();
            assert_eq!(a.kept(), &[SampleId(1), SampleId(3)]);
        }
    }

    #[test]
    fn window_slides_easy_to_hard() {
        let scores: Vec<f64> = (0..10).map(|i| 10.0 - i as f64).collect();
        let t = table_with(&scores);
        let p = PrunePolicy::WindowSelect {
            keep_fraction: 0.3,
            progress: WindowProgress::EasyToHard,
        };
        let s = CycleSchedule::per_epoch(8).unwrap();
        let first = select_active_set(&t, &p, 0, &s, 0).unwrap();
        assert_eq!(first.kept(), &[7, 8, 9].map(SampleId));
        let last = select_active_set(&t, &p, 7, &s, 0).unwrap();
        assert_eq!(last.kept(), &[0, 1, 2].map(SampleId));
        for c in 0..8 {
            assert_eq!(select_active_set(&t, &p, c, &s, 0).unwrap().n_kept(), 3);
        }
    }

    #[test]
    fn window_counts_unscored_inside_budget() {
        let cfg = EmaConfig::new(0.5, InitPolicy::FirstObservedBatchLoss).unwrap();
        let mut t = ScoreTable::new(10, &cfg);
        for i in 0..8 {
            t.apply_batch(&BatchRecord::new(i, vec![SampleId(i as usize)], i as f64).unwrap(), &cfg)
                .unwrap();
        }
        let p = PrunePolicy::WindowSelect {
            keep_fraction: 0.5,
            progress: WindowProgress::Static,
        };
        let a = select_active_set(&t, &p, 0, &sched(), 0).unwrap();
        assert_eq!(a.kept(), &[0, 1, 2, 8, 9].map(SampleId));
    }

    #[test]
    fn window_errors() {
        let t = table_with(&[1.0; 10]);
        let p = PrunePolicy::WindowSelect {
            keep_fraction: 0.05,
            progress: WindowProgress::Static,
        };
        assert!(matches!(
            select_active_set(&t, &p, 0, &sched(), 0),
            Err(PruneError::EmptyWindow { .. })
        ));
        let empty = ScoreTable::new(0, &EmaConfig::default());
        assert_eq!(
            select_active_set(&empty, &PrunePolicy::Full, 0, &sched(), 0).unwrap_err(),
            PruneError::EmptyDataset
        );
    }

    #[test]
    fn pruned_percent_cases() {
        assert_eq!(pruned_percent(&[ActiveSet::full(10, 0), ActiveSet::full(10, 1)], 10), 0.0);
        let t = table_with(&(0..10).map(|i| i as f64).collect::<Vec<_>>());
        let p = PrunePolicy::WindowSelect {
            keep_fraction: 0.7,
            progress: WindowProgress::Static,
        };
        let h: Vec<ActiveSet> = (0..5)
            .map(|c| select_active_set(&t, &p, c, &sched(), 0).unwrap())
            .collect();
        assert!((pruned_percent(&h, 10) - 30.0).abs() < 1e-12);
    }

    #[test]
    fn batch_scale_is_mean_factor() {
        let scores: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let t = table_with(&scores);
        let a = select_active_set(&t, &PrunePolicy::threshold(0.5), 0, &sched(), 11).unwrap();
        let low = a.kept().iter().copied().find(|id| id.0 < 20).unwrap();
        let high = SampleId(35);
        assert_eq!(a.batch_scale(&[low, high]), (2.0 + 1.0) / 2.0);
        assert_eq!(a.batch_scale(&[high]), 1.0);
    }

    #[test]
    fn sampler_covers_kept_once_per_epoch() {
        let kept: Vec<SampleId> = (0..23).map(|i| SampleId(i * 2)).collect();
        let s = BatchSampler::new(kept.clone(), 5, 99).unwrap();
        assert_eq!(s.n_batches(), 5);
        for e in 0..3 {
            let batches = s.epoch(e);
            assert_eq!(batches.len(), 5);
            assert!(batches[..4].iter().all(|b| b.len() == 5));
            assert_eq!(batches[4].len(), 3);
            let mut all: Vec<SampleId> = batches.concat();
            all.sort();
            assert_eq!(all, kept);
        }
        assert_ne!(s.epoch(0), s.epoch(1));
        assert_eq!(s.epoch(2), BatchSampler::new(kept, 5, 99).unwrap().epoch(2));
    }

    #[test]
    fn sampler_errors() {
        assert_eq!(
            BatchSampler::new(vec![SampleId(0)], 0, 0).unwrap_err(),
            PruneError::ZeroBatchSize
        );
        assert_eq!(
            BatchSampler::new(vec![], 4, 0).unwrap_err(),
            PruneError::EmptyActiveSet
        );
    }
}
