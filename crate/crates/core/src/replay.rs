//! Offline reconstruction of scores and pruning decisions from a batch-loss
//! log.

use thiserror::Error;

use crate::log::LogRecord;
use crate::pruning::{select_active_set, ActiveSet, CycleSchedule, PruneError, PrunePolicy};
use crate::score::{EmaConfig, SampleId, ScoreError, ScoreTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("step {step}: {source}")]
    Score {
        step: u64,
        #[source]
        source: ScoreError,
    },
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error("log is empty and no sample count was given")]
    UnknownSize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayOutcome {
    pub table: ScoreTable,
    /// Decisions for the cycle after the log.
    pub active: ActiveSet,
    /// Samples the policy would skip, ascending.
    pub pruned: Vec<SampleId>,
    pub records: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplaySettings {
    pub ema: EmaConfig,
    pub policy: PrunePolicy,
    pub schedule: CycleSchedule,
    /// Cycle index the decisions are made for.
    pub cycle: usize,
    pub seed: u64,
    /// Table size; `None` means one past the largest logged index.
    pub n_samples: Option<usize>,
}

/// Smallest table that holds every logged index.
pub fn inferred_size(records: &[LogRecord]) -> Option<usize> {
    records
        .iter()
        .flat_map(|r| r.indices.iter())
        .map(|id| id.0 + 1)
        .max()
}

/// Folds every record into a fresh table, then selects one active set.
pub fn replay(records: &[LogRecord], settings: &ReplaySettings) -> Result<ReplayOutcome, ReplayError> {
    let n = match settings.n_samples {
        Some(n) => n,
        None => inferred_size(records).ok_or(ReplayError::UnknownSize)?,
    };
    let mut table = ScoreTable::new(n, &settings.ema);
    for rec in records {
        let wrap = |source| ReplayError::Score {
            step: rec.step,
            source,
        };
        let batch = rec.to_batch().map_err(wrap)?;
        table.apply_batch(&batch, &settings.ema).map_err(wrap)?;
    }
    let active = select_active_set(
        &table,
        &settings.policy,
        settings.cycle,
        &settings.schedule,
        settings.seed,
    )?;
    let pruned = active.pruned();
    Ok(ReplayOutcome {
        table,
        active,
        pruned,
        records: records.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::InitPolicy;

    fn settings(policy: PrunePolicy, n: Option<usize>) -> ReplaySettings {
        ReplaySettings {
            ema: EmaConfig::new(0.7, InitPolicy::FirstObservedBatchLoss).unwrap(),
            policy,
            schedule: CycleSchedule::per_epoch(10).unwrap(),
            cycle: 1,
            seed: 0,
            n_samples: n,
        }
    }

    #[test]
    fn single_record_initializes_members() {
        let log = vec![LogRecord::new(0, vec![SampleId(1), SampleId(4)], 0.9)];
        let out = replay(&log, &settings(PrunePolicy::Full, None)).unwrap();
        assert_eq!(out.table.len(), 5);
        assert_eq!(out.table.score(SampleId(1)), 0.9);
        assert_eq!(out.table.score(SampleId(4)), 0.9);
        assert_eq!(out.table.update_count(SampleId(0)), 0);
        assert_eq!(out.active.n_kept(), 5);
        assert!(out.pruned.is_empty());
    }

    #[test]
    fn errors_carry_step() {
        let log = vec![LogRecord::new(3, vec![SampleId(9)], 1.0)];
        let err = replay(&log, &settings(PrunePolicy::Full, Some(4))).unwrap_err();
        assert!(err.to_string().starts_with("step 3:"), "{err}");
        assert_eq!(
            replay(&[], &settings(PrunePolicy::Full, None)).unwrap_err(),
            ReplayError::UnknownSize
        );
    }

    #[test]
    fn threshold_policy_prunes_low_scores() {
        let log: Vec<LogRecord> = (0..6)
            .map(|i| LogRecord::new(i, vec![SampleId(i as usize)], i as f64))
            .collect();
        let out = replay(&log, &settings(PrunePolicy::threshold(1.0), None)).unwrap();
        assert_eq!(out.pruned, vec![SampleId(0), SampleId(1), SampleId(2)]);
    }
}
