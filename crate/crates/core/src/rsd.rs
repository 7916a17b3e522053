//! Redundant sample downsampling: per-sample loss statistics collected over
//! short windows decide which training frames to drop for part of training.
//!
//! Over `E` epochs with window `S`, medians are recorded during
//! `[E1, E1+S)` and `[E2, E2+S)`. At the start of epochs `E1+S` and `E2+S`
//! the active set is pruned to the frames whose loss fluctuated most; at
//! the start of `Es` the full set returns.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::stats::{median_of, population_variance};

/// Guards floor/ceil against values such as `25 * 0.28 = 7.000000000000001`.
const EPOCH_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsdConfig {
    pub total_epochs: usize,
    /// Fraction of active samples removed at each pruning.
    pub downsample_ratio: f64,
    pub start_ratio: f64,
    pub stop_ratio: f64,
    pub window: usize,
}

impl Default for RsdConfig {
    fn default() -> Self {
        Self {
            total_epochs: 25,
            downsample_ratio: 0.25,
            start_ratio: 0.25,
            stop_ratio: 0.85,
            window: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageEpochs {
    pub first: usize,
    pub second: usize,
    pub stop: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochAction {
    NoOp,
    Prune,
    RestoreFull,
}

impl RsdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.window < 2 {
            return bad(format!("window {} must be at least 2", self.window));
        }
        if !(0.0 < self.start_ratio && self.start_ratio < self.stop_ratio && self.stop_ratio < 1.0) {
            return bad(format!(
                "need 0 < start ({}) < stop ({}) < 1",
                self.start_ratio, self.stop_ratio
            ));
        }
        if !(0.0 < self.downsample_ratio && self.downsample_ratio < 1.0) {
            return bad(format!("downsample ratio {} outside (0, 1)", self.downsample_ratio));
        }
        let s = self.stage_epochs_unchecked();
        if s.first + self.window > s.second || s.second + self.window > s.stop {
            return bad(format!(
                "stages {:?} leave no room for windows of {} epochs",
                s, self.window
            ));
        }
        if s.stop > self.total_epochs {
            return bad(format!("stop epoch {} beyond {} epochs", s.stop, self.total_epochs));
        }
        Ok(())
    }

    fn stage_epochs_unchecked(&self) -> StageEpochs {
        let e = self.total_epochs as f64;
        StageEpochs {
            first: (e * self.start_ratio - EPOCH_EPS).ceil().max(0.0) as usize,
            second: (e * (self.start_ratio + self.stop_ratio) / 2.0 + EPOCH_EPS).floor() as usize,
            stop: (e * self.stop_ratio + EPOCH_EPS).floor() as usize,
        }
    }

    pub fn stage_epochs(&self) -> Result<StageEpochs> {
        self.validate()?;
        Ok(self.stage_epochs_unchecked())
    }

    /// Number of samples kept when pruning `n` active samples.
    pub fn survivors(&self, n: usize) -> usize {
        ((1.0 - self.downsample_ratio) * n as f64 + EPOCH_EPS).floor() as usize
    }

    /// What happens at the start of epoch `epoch`.
    pub fn action_at(&self, epoch: usize) -> Result<EpochAction> {
        let s = self.stage_epochs()?;
        Ok(action_for(&s, self.window, epoch))
    }

    /// Whether per-sample medians are recorded during `epoch`.
    pub fn records_in(&self, epoch: usize) -> Result<bool> {
        let s = self.stage_epochs()?;
        Ok(recording(&s, self.window, epoch))
    }
}

fn action_for(s: &StageEpochs, window: usize, epoch: usize) -> EpochAction {
    if epoch == s.first + window || epoch == s.second + window {
        EpochAction::Prune
    } else if epoch == s.stop {
        EpochAction::RestoreFull
    } else {
        EpochAction::NoOp
    }
}

fn recording(s: &StageEpochs, window: usize, epoch: usize) -> bool {
    (s.first..s.first + window).contains(&epoch) || (s.second..s.second + window).contains(&epoch)
}

/// Population variance of the last `window` values.
pub fn window_variance(values: &[f64], window: usize) -> Result<f64> {
    if values.len() < window || window == 0 {
        return Err(Error::WindowNotFull {
            have: values.len(),
            need: window.max(1),
        });
    }
    Ok(population_variance(&values[values.len() - window..]).expect("non-empty window"))
}

/// Summary of one epoch transition, kept for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord {
    pub epoch: usize,
    pub action: EpochAction,
    pub active_before: usize,
    pub active_after: usize,
    /// Smallest and largest window variance seen when pruning.
    pub variance_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct RsdState {
    config: RsdConfig,
    stages: StageEpochs,
    full: BTreeSet<usize>,
    active: BTreeSet<usize>,
    windows: BTreeMap<usize, VecDeque<f64>>,
    epoch: usize,
    next_epoch: usize,
    log: Vec<TransitionRecord>,
}

impl RsdState {
    pub fn new(config: RsdConfig, sample_ids: impl IntoIterator<Item = usize>) -> Result<Self> {
        let stages = config.stage_epochs()?;
        let full: BTreeSet<usize> = sample_ids.into_iter().collect();
        Ok(Self {
            config,
            stages,
            active: full.clone(),
            full,
            windows: BTreeMap::new(),
            epoch: 0,
            next_epoch: 0,
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &RsdConfig {
        &self.config
    }

    pub fn stages(&self) -> StageEpochs {
        self.stages
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Active sample ids in ascending order.
    pub fn active(&self) -> Vec<usize> {
        self.active.iter().copied().collect()
    }

    pub fn active_len(&self) -> usize {
        self.active.len()
    }

    pub fn transitions(&self) -> &[TransitionRecord] {
        &self.log
    }

    pub fn is_recording(&self) -> bool {
        recording(&self.stages, self.config.window, self.epoch)
    }

    /// Recorded window of a sample (empty if none).
    pub fn window_of(&self, id: usize) -> Vec<f64> {
        self.windows.get(&id).map(|w| w.iter().copied().collect()).unwrap_or_default()
    }

    /// Enters `epoch` and applies its transition. Epochs must increase.
    pub fn begin_epoch(&mut self, epoch: usize) -> Result<EpochAction> {
        if epoch < self.next_epoch || epoch >= self.config.total_epochs {
            return Err(Error::WrongEpoch { epoch });
        }
        self.epoch = epoch;
        self.next_epoch = epoch + 1;
        let action = action_for(&self.stages, self.config.window, epoch);
        let before = self.active.len();
        let variance_range = match action {
            EpochAction::NoOp => return Ok(action),
            EpochAction::Prune => self.prune()?,
            EpochAction::RestoreFull => {
                self.active = self.full.clone();
                self.windows.clear();
                None
            }
        };
        self.log.push(TransitionRecord {
            epoch,
            action,
            active_before: before,
            active_after: self.active.len(),
            variance_range,
        });
        Ok(action)
    }

    /// Records the median of one forward pass's per-point losses for a sample.
    /// Outside recording windows the median is returned but not stored.
    pub fn record_median_loss(&mut self, id: usize, point_losses: &[f64]) -> Result<f64> {
        if !self.full.contains(&id) {
            return Err(Error::UnknownSample(id));
        }
        let m = median_of(point_losses).ok_or(Error::TooFewSamples { have: 0, need: 1 })?;
        if self.is_recording() && self.active.contains(&id) {
            let w = self.windows.entry(id).or_default();
            w.push_back(m);
            while w.len() > self.config.window {
                w.pop_front();
            }
        }
        Ok(m)
    }

    /// Keeps the `⌊(1−r)·n⌋` active samples with the largest window variance;
    /// ties go to the smaller id. Clears all windows.
    fn prune(&mut self) -> Result<Option<(f64, f64)>> {
        let window = self.config.window;
        let mut scored = Vec::with_capacity(self.active.len());
        for &id in &self.active {
            let values: Vec<f64> = self.window_of(id);
            scored.push((window_variance(&values, window)?, id));
        }
        let range = scored.iter().fold(None, |acc: Option<(f64, f64)>, &(v, _)| {
            Some(acc.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))))
        });
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let keep = self.config.survivors(scored.len());
        self.active = scored[..keep].iter().map(|&(_, id)| id).collect();
        self.windows.clear();
        Ok(range)
    }
}
