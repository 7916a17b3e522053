use std::collections::HashMap;

use lightloc_core::rsd::{EpochAction, RsdConfig, RsdState, StageEpochs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-point losses of one sample in one epoch; a seeded stream so the
/// scheduler and the oracle see identical values.
fn point_losses(seed: u64, id: usize, epoch: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((id as u64) << 20) ^ epoch as u64);
    let scale = 0.5 + (id % 7) as f64;
    (0..9).map(|_| scale * rng.random::<f64>()).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Straight replay of the schedule: record medians of active samples in the
/// two windows, prune to the highest-variance samples, restore at the stop epoch.
fn replay(n: usize, seed: u64) -> Vec<Vec<usize>> {
    let (e1, e2, es, s) = (7, 13, 21, 3);
    let mut active: Vec<usize> = (0..n).collect();
    let mut history: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut per_epoch = Vec::new();
    for epoch in 0..25 {
        if epoch == e1 + s || epoch == e2 + s {
            let mut scored: Vec<(f64, usize)> = active
                .iter()
                .map(|id| {
                    let w = &history[id];
                    let w = &w[w.len() - s..];
                    let mean = w.iter().sum::<f64>() / s as f64;
                    (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / s as f64, *id)
                })
                .collect();
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let keep = active.len() * 3 / 4;
            active = scored[..keep].iter().map(|p| p.1).collect();
            active.sort_unstable();
            history.clear();
        }
        if epoch == es {
            active = (0..n).collect();
        }
        per_epoch.push(active.clone());
        let recording = (e1..e1 + s).contains(&epoch) || (e2..e2 + s).contains(&epoch);
        for &id in &active {
            if recording {
                history.entry(id).or_default().push(median(point_losses(seed, id, epoch)));
            }
        }
    }
    per_epoch
}

#[test]
fn stage_epochs_and_survivors() {
    let cfg = RsdConfig::default();
    assert_eq!(
        cfg.stage_epochs().unwrap(),
        StageEpochs {
            first: 7,
            second: 13,
            stop: 21
        }
    );
    assert_eq!(cfg.survivors(1000), 750);
    assert_eq!(cfg.survivors(750), 562);
}

#[test]
fn scheduler_matches_replay_oracle() {
    for seed in 0..3 {
        let n = 1000;
        let expected = replay(n, seed);
        let mut state = RsdState::new(RsdConfig::default(), 0..n).unwrap();
        for (epoch, want) in expected.iter().enumerate().take(25) {
            let action = state.begin_epoch(epoch).unwrap();
            assert_eq!(&state.active(), want, "seed {seed} epoch {epoch}");
            for id in state.active() {
                state.record_median_loss(id, &point_losses(seed, id, epoch)).unwrap();
            }
            let count = match action {
                EpochAction::Prune if epoch == 10 => Some(750),
                EpochAction::Prune => Some(562),
                EpochAction::RestoreFull => Some(1000),
                EpochAction::NoOp => None,
            };
            if let Some(c) = count {
                assert_eq!(state.active_len(), c);
            }
        }
        let epochs: Vec<usize> = state.transitions().iter().map(|t| t.epoch).collect();
        assert_eq!(epochs, vec![10, 16, 21]);
    }
}

#[test]
fn active_set_never_grows_before_restore() {
    let mut state = RsdState::new(RsdConfig::default(), 0..200).unwrap();
    let mut last = 200;
    for epoch in 0..21 {
        state.begin_epoch(epoch).unwrap();
        assert!(state.active_len() <= last);
        last = state.active_len();
        for id in state.active() {
            state.record_median_loss(id, &point_losses(9, id, epoch)).unwrap();
        }
    }
    assert!(state.begin_epoch(20).is_err());
}
