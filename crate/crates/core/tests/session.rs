use bls_core::log::LogRecord;
use bls_core::pruning::{CycleSchedule, PrunePolicy};
use bls_core::replay::{replay, ReplaySettings};
use bls_core::score::{EmaConfig, InitPolicy};
use bls_core::{create_handler, SessionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg(policy: PrunePolicy, epochs: usize) -> SessionConfig {
    SessionConfig {
        init: InitPolicy::FirstObservedBatchLoss,
        policy,
        schedule: CycleSchedule::per_epoch(epochs).unwrap(),
        seed: 3,
    }
}

#[test]
fn many_handles_can_be_created_and_dropped() {
    for i in 0..10_000 {
        let h = create_handler(1 + i % 64, 0.9, SessionConfig::default()).unwrap();
        assert_eq!(h.scores_snapshot().len(), 1 + i % 64);
    }
}

#[test]
fn identical_seeds_give_identical_sessions() {
    let run = || {
        let mut h = create_handler(300, 0.8, cfg(PrunePolicy::threshold(0.5), 6)).unwrap();
        let mut batches = Vec::new();
        for e in 0..6 {
            let epoch = h.next_epoch_indices(16, 42).unwrap();
            for (j, b) in epoch.iter().enumerate() {
                let loss = ((b[0].0 * 7 + j + e) % 13) as f64 / 4.0;
                h.update(loss).unwrap();
            }
            batches.push(epoch);
        }
        (batches, h.scores_snapshot(), h.pruned_percent())
    };
    assert_eq!(run(), run());
}

#[test]
fn scripted_stream_matches_offline_replay() {
    let n = 500;
    let mut h = create_handler(n, 0.7, cfg(PrunePolicy::Full, 1000)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut log = Vec::new();
    let mut step = 0u64;
    while step < 10_000 {
        for batch in h.next_epoch_indices(32, 1).unwrap() {
            if step == 10_000 {
                break;
            }
            let loss: f64 = rng.random_range(0.0..5.0);
            h.update(loss).unwrap();
            log.push(LogRecord::new(step, batch, loss));
            step += 1;
        }
    }
    let settings = ReplaySettings {
        ema: EmaConfig::new(0.7, InitPolicy::FirstObservedBatchLoss).unwrap(),
        policy: PrunePolicy::Full,
        schedule: CycleSchedule::per_epoch(1000).unwrap(),
        cycle: 0,
        seed: 3,
        n_samples: Some(n),
    };
    let out = replay(&log, &settings).unwrap();
    assert_eq!(out.table.snapshot(), h.scores_snapshot());
}

#[test]
fn update_returns_scaled_loss() {
    let mut h = create_handler(1000, 0.5, cfg(PrunePolicy::threshold(0.5), 10)).unwrap();
    // First epoch: nothing is scored yet, so everything is kept at scale 1.
    for b in h.next_epoch_indices(10, 0).unwrap() {
        let loss = (b[0].0 % 2) as f64;
        assert_eq!(h.update(loss).unwrap(), loss);
    }
    for b in h.next_epoch_indices(10, 0).unwrap() {
        let scale = h.batch_scale(&b);
        assert!((1.0..=2.0).contains(&scale));
        assert_eq!(h.update(1.5).unwrap(), 1.5 * scale);
    }
}
