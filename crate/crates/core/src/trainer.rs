//! Scene coordinate regression head: training loop and evaluation.

use std::io::{Read, Write};

use log::{debug, info};
use nalgebra::Vector3;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backbone::FrozenBackbone;
use crate::error::{Error, Result};
use crate::formats::{BinReader, BinWriter};
use crate::geometry::{pose_error, PointCloud, Pose, PoseError};
use crate::nn::{Mlp, OneCycle, Optimizer, OptimizerKind, SkipLink};
use crate::rsd::{EpochAction, RsdConfig, RsdState, TransitionRecord};
use crate::scene::Frame;
use crate::scg::{guidance_feature, ClassifierHead};
use crate::solver::{localize, RansacParams};
use crate::stats::{mean, median_of};

pub const REGRESSOR_MAGIC: [u8; 4] = *b"LLRH";
pub const REGRESSOR_VERSION: u16 = 1;

/// Mean L1 distance between predicted and true world points, plus the
/// per-point distances.
pub fn l1_scene_loss(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gt.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::TooFewSamples { have: 0, need: 1 });
    }
    let per_point: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| (p - g).abs().sum()).collect();
    Ok((per_point.iter().sum::<f64>() / pred.len() as f64, per_point))
}

/// MLP mapping per-point inputs to world coordinates through a fixed affine
/// output map `offset + scale · y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRegressor {
    mlp: Mlp,
    feature_dim: usize,
    guidance_dim: usize,
    offset: [f64; 3],
    scale: f64,
}

impl SceneRegressor {
    /// `hidden` widths; a residual link is added between the second and
    /// third hidden layers when their widths match.
    pub fn new(
        feature_dim: usize,
        guidance_dim: usize,
        hidden: &[usize],
        offset: [f64; 3],
        scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("output scale {scale} must be positive")));
        }
        let mut dims = vec![feature_dim + guidance_dim];
        dims.extend_from_slice(hidden);
        dims.push(3);
        let skips = if hidden.len() >= 3 && hidden[1] == hidden[2] {
            vec![SkipLink { from: 2, to: 2 }]
        } else {
            vec![]
        };
        Ok(Self {
            mlp: Mlp::new(&dims, skips, seed)?,
            feature_dim,
            guidance_dim,
            offset,
            scale,
        })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn guidance_dim(&self) -> usize {
        self.guidance_dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn offset(&self) -> [f64; 3] {
        self.offset
    }

    /// Builds `[dense | guidance]` rows.
    pub fn assemble(&self, dense: ArrayView2<f64>, guidance: Option<&[f64]>) -> Result<Array2<f64>> {
        if dense.ncols() != self.feature_dim {
            return Err(Error::ShapeMismatch(format!(
                "dense features have {} columns, regressor expects {}",
                dense.ncols(),
                self.feature_dim
            )));
        }
        let g = guidance.unwrap_or(&[]);
        if g.len() != self.guidance_dim {
            return Err(Error::ShapeMismatch(format!(
                "guidance has {} values, regressor expects {}",
                g.len(),
                self.guidance_dim
            )));
        }
        let mut x = Array2::zeros((dense.nrows(), self.feature_dim + self.guidance_dim));
        x.slice_mut(s![.., ..self.feature_dim]).assign(&dense);
        if !g.is_empty() {
            x.slice_mut(s![.., self.feature_dim..]).assign(&Array1::from(g.to_vec()));
        }
        Ok(x)
    }

    fn to_world(&self, raw: &Array2<f64>) -> Vec<Vector3<f64>> {
        raw.rows()
            .into_iter()
            .map(|r| {
                Vector3::new(
                    self.offset[0] + self.scale * r[0],
                    self.offset[1] + self.scale * r[1],
                    self.offset[2] + self.scale * r[2],
                )
            })
            .collect()
    }

    /// World coordinates for already assembled input rows.
    pub fn predict_rows(&self, inputs: ArrayView2<f64>) -> Result<Vec<Vector3<f64>>> {
        Ok(self.to_world(&self.mlp.forward(inputs)?))
    }

    pub fn predict(&self, dense: ArrayView2<f64>, guidance: Option<&[f64]>) -> Result<Vec<Vector3<f64>>> {
        let x = self.assemble(dense, guidance)?;
        self.predict_rows(x.view())
    }

    /// L1 loss of assembled rows against targets, with parameter gradients.
    pub fn loss_and_grads(
        &self,
        inputs: ArrayView2<f64>,
        targets: &[Vector3<f64>],
    ) -> Result<(f64, Vec<f64>, crate::nn::MlpGrads)> {
        let cache = self.mlp.forward_cached(inputs)?;
        let pred = self.to_world(cache.output());
        let (loss, per_point) = l1_scene_loss(&pred, targets)?;
        let m = pred.len() as f64;
        let mut grad = Array2::zeros((pred.len(), 3));
        for (i, (p, t)) in pred.iter().zip(targets).enumerate() {
            for k in 0..3 {
                grad[[i, k]] = self.scale * sign(p[k] - t[k]) / m;
            }
        }
        let (grads, _) = self.mlp.backward(&cache, grad.view())?;
        Ok((loss, per_point, grads))
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<W> {
        let mut w = BinWriter::new(out, REGRESSOR_MAGIC, REGRESSOR_VERSION)?;
        w.len(self.feature_dim)?;
        w.len(self.guidance_dim)?;
        w.f64s(self.offset)?;
        w.f64(self.scale)?;
        self.mlp.write(&mut w)?;
        Ok(w.finish())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.write_to(Vec::new()).expect("writing to memory cannot fail")
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = BinReader::new(input, REGRESSOR_MAGIC, REGRESSOR_VERSION)?;
        let feature_dim = r.len()?;
        let guidance_dim = r.len()?;
        let o = r.f64s(3)?;
        let scale = r.f64()?;
        let mlp = Mlp::read(&mut r)?;
        if mlp.in_dim() != feature_dim + guidance_dim || mlp.out_dim() != 3 {
            return Err(Error::Parse("regressor network disagrees with header".into()));
        }
        Ok(Self {
            mlp,
            feature_dim,
            guidance_dim,
            offset: [o[0], o[1], o[2]],
            scale,
        })
    }
}

/// Derivative of |x| with the convention sign(0) = 0.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Which frames to skip during the reduced-data part of training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneStrategy {
    /// Every frame in every epoch.
    Full,
    /// Drop low-variance frames on the RSD schedule.
    Rsd,
    /// Drop uniformly random frames on the RSD schedule (same budget).
    Random,
}

/// Random rigid jitter applied to sensor points; world targets stay fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmentation {
    pub probability: f64,
    pub max_translation: f64,
    pub max_roll_pitch_deg: f64,
    pub max_yaw_deg: f64,
}

impl Default for Augmentation {
    fn default() -> Self {
        Self {
            probability: 0.0,
            max_translation: 1.0,
            max_roll_pitch_deg: 5.0,
            max_yaw_deg: 10.0,
        }
    }
}

impl Augmentation {
    fn sample<R: Rng>(&self, rng: &mut R) -> Option<Pose> {
        if self.probability <= 0.0 || rng.random::<f64>() >= self.probability {
            return None;
        }
        let mut u = |m: f64| if m > 0.0 { rng.random_range(-m..m) } else { 0.0 };
        let rp = self.max_roll_pitch_deg.to_radians();
        let roll = u(rp);
        let pitch = u(rp);
        let yaw = u(self.max_yaw_deg.to_radians());
        let t = Vector3::new(u(self.max_translation), u(self.max_translation), 0.0);
        Some(Pose::from_euler(roll, pitch, yaw, t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_frames: usize,
    pub points_per_frame: usize,
    pub hidden: Vec<usize>,
    pub schedule: OneCycle,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
    pub strategy: PruneStrategy,
    pub rsd: RsdConfig,
    pub scg_enabled: bool,
    pub guidance_sigma: f64,
    pub augmentation: Augmentation,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 25,
            batch_frames: 4,
            points_per_frame: 128,
            hidden: vec![96, 96, 96],
            schedule: OneCycle::default(),
            optimizer: OptimizerKind::adamw(),
            weight_decay: 1e-2,
            strategy: PruneStrategy::Full,
            rsd: RsdConfig::default(),
            scg_enabled: false,
            guidance_sigma: 0.1,
            augmentation: Augmentation::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.epochs == 0 || self.batch_frames == 0 || self.points_per_frame == 0 {
            return bad("epochs, batch size and points per frame must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("regressor needs at least one non-empty hidden layer");
        }
        if !(self.weight_decay >= 0.0) || !(self.guidance_sigma >= 0.0) {
            return bad("weight decay and guidance noise must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.augmentation.probability) {
            return bad("augmentation probability must be in [0, 1]");
        }
        self.schedule.validate()?;
        if self.strategy != PruneStrategy::Full {
            if self.rsd.total_epochs != self.epochs {
                return bad("downsampling schedule must span the training epochs");
            }
            self.rsd.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-point L1 loss over every point processed in the epoch.
    pub mean_loss: f64,
    pub active: usize,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub regressor: SceneRegressor,
    pub history: Vec<EpochRecord>,
    pub transitions: Vec<TransitionRecord>,
    /// Frame forward passes performed during training.
    pub sample_evaluations: usize,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |h| h.mean_loss)
    }
}

/// Per-frame quantities computed once before training.
struct FrameCache {
    dense: Array2<f64>,
    p1: Option<Vec<f64>>,
}

/// Level-1 posteriors of the classifier for each frame's global feature.
pub fn level1_posteriors(
    classifier: &ClassifierHead,
    backbone: &FrozenBackbone,
    frames: &[Frame],
) -> Result<Vec<Vec<f64>>> {
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    let mut globals = Array2::zeros((frames.len(), backbone.width()));
    for (i, f) in frames.iter().enumerate() {
        globals.row_mut(i).assign(&backbone.features(&f.sensor)?.global);
    }
    Ok(classifier.predict(globals.view())?.into_iter().map(|p| p.p1).collect())
}

/// Per-axis mean of all training targets and one isotropic spread.
fn target_normalization(frames: &[Frame]) -> ([f64; 3], f64) {
    let pts: Vec<&Vector3<f64>> = frames.iter().flat_map(|f| f.world.points()).collect();
    let n = pts.len().max(1) as f64;
    let mut m = [0.0; 3];
    for p in &pts {
        for k in 0..3 {
            m[k] += p[k] / n;
        }
    }
    let var: f64 = pts.iter().map(|p| (0..3).map(|k| (p[k] - m[k]).powi(2)).sum::<f64>()).sum::<f64>() / (3.0 * n);
    (m, var.sqrt().max(1e-6))
}

pub fn train_scr(
    frames: &[Frame],
    backbone: &FrozenBackbone,
    classifier: Option<&ClassifierHead>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if frames.is_empty() {
        return Err(Error::TooFewSamples { have: 0, need: 1 });
    }
    if let Some(f) = frames.iter().find(|f| f.sensor.len() < config.points_per_frame) {
        return Err(Error::InvalidConfig(format!(
            "frame {} has {} points, fewer than {} per step",
            f.id,
            f.sensor.len(),
            config.points_per_frame
        )));
    }
    let classifier = match (config.scg_enabled, classifier) {
        (true, None) => return Err(Error::InvalidConfig("guidance enabled without a trained classifier".into())),
        (true, Some(c)) => Some(c),
        (false, _) => None,
    };
    let posteriors = match classifier {
        Some(c) => level1_posteriors(c, backbone, frames)?.into_iter().map(Some).collect(),
        None => vec![None; frames.len()],
    };
    let cache: Vec<FrameCache> = frames
        .iter()
        .zip(posteriors)
        .map(|(f, p1)| {
            Ok(FrameCache {
                dense: backbone.dense_features(&f.sensor, None)?,
                p1,
            })
        })
        .collect::<Result<_>>()?;

    let (offset, scale) = target_normalization(frames);
    let guidance_dim = classifier.map_or(0, |c| c.k1());
    let mut regressor = SceneRegressor::new(
        backbone.width(),
        guidance_dim,
        &config.hidden,
        offset,
        scale,
        config.seed,
    )?;
    let mut opt = Optimizer::new(config.optimizer, config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7A41_11E5);
    let mut prune_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x0D0_5EED);

    let ids: Vec<usize> = (0..frames.len()).collect();
    let mut rsd = match config.strategy {
        PruneStrategy::Rsd => Some(RsdState::new(config.rsd, ids.iter().copied())?),
        _ => None,
    };
    let mut random_active = ids.clone();
    let mut random_log = Vec::new();

    let mut history = Vec::with_capacity(config.epochs);
    let mut evaluations = 0;
    let p = config.points_per_frame;
    let width = backbone.width() + guidance_dim;
    for epoch in 0..config.epochs {
        let mut active = match (config.strategy, rsd.as_mut()) {
            (PruneStrategy::Rsd, Some(state)) => {
                state.begin_epoch(epoch)?;
                state.active()
            }
            (PruneStrategy::Random, _) => {
                let action = config.rsd.action_at(epoch)?;
                let before = random_active.len();
                match action {
                    EpochAction::Prune => {
                        let keep = config.rsd.survivors(before);
                        let picked = index::sample(&mut prune_rng, before, keep);
                        let mut next: Vec<usize> = picked.iter().map(|i| random_active[i]).collect();
                        next.sort_unstable();
                        random_active = next;
                    }
                    EpochAction::RestoreFull => random_active = ids.clone(),
                    EpochAction::NoOp => {}
                }
                if action != EpochAction::NoOp {
                    random_log.push(TransitionRecord {
                        epoch,
                        action,
                        active_before: before,
                        active_after: random_active.len(),
                        variance_range: None,
                    });
                }
                random_active.clone()
            }
            _ => ids.clone(),
        };
        active.shuffle(&mut rng);
        let batches = active.len().div_ceil(config.batch_frames);
        let mut loss_sum = 0.0;
        let mut point_count = 0usize;
        let mut lr = config.schedule.lr(epoch as f64 / config.epochs as f64);
        for (b, chunk) in active.chunks(config.batch_frames).enumerate() {
            let rows = chunk.len() * p;
            let mut x = Array2::zeros((rows, width));
            let mut targets = Vec::with_capacity(rows);
            for (j, &id) in chunk.iter().enumerate() {
                let frame = &frames[id];
                let picked = index::sample(&mut rng, frame.sensor.len(), p).into_vec();
                let mut block = x.slice_mut(s![j * p..(j + 1) * p, ..]);
                match config.augmentation.sample(&mut rng) {
                    Some(jitter) => {
                        let moved: Vec<Vector3<f64>> = frame.sensor.points().iter().map(|q| jitter.apply(q)).collect();
                        let feats = backbone.dense_features(&PointCloud::sensor(moved)?, Some(&picked))?;
                        block.slice_mut(s![.., ..backbone.width()]).assign(&feats);
                    }
                    None => {
                        let feats = cache[id].dense.select(Axis(0), &picked);
                        block.slice_mut(s![.., ..backbone.width()]).assign(&feats);
                    }
                }
                if let Some(p1) = &cache[id].p1 {
                    let g = guidance_feature(p1, config.guidance_sigma, &mut rng)?;
                    block.slice_mut(s![.., backbone.width()..]).assign(&Array1::from(g));
                }
                targets.extend(picked.iter().map(|&i| frame.world.points()[i]));
            }
            let (loss, per_point, grads) = regressor.loss_and_grads(x.view(), &targets)?;
            if let Some(state) = rsd.as_mut() {
                for (j, &id) in chunk.iter().enumerate() {
                    state.record_median_loss(id, &per_point[j * p..(j + 1) * p])?;
                }
            }
            loss_sum += loss * rows as f64;
            point_count += rows;
            evaluations += chunk.len();
            lr = config.schedule.lr((epoch as f64 + b as f64 / batches as f64) / config.epochs as f64);
            opt.step(regressor.mlp_mut().param_slices_mut(), &grads.slices(), lr)?;
        }
        let mean_loss = loss_sum / point_count.max(1) as f64;
        debug!("epoch {epoch}: {} frames, mean L1 {mean_loss:.4}, lr {lr:.2e}", active.len());
        history.push(EpochRecord {
            epoch,
            mean_loss,
            active: active.len(),
            lr,
        });
    }
    let transitions = match config.strategy {
        PruneStrategy::Full => Vec::new(),
        PruneStrategy::Rsd => rsd.map(|s| s.transitions().to_vec()).unwrap_or_default(),
        PruneStrategy::Random => random_log,
    };
    info!(
        "trained regressor: final loss {:.4}, {evaluations} frame evaluations",
        history.last().map_or(f64::NAN, |h| h.mean_loss)
    );
    Ok(TrainOutcome {
        regressor,
        history,
        transitions,
        sample_evaluations: evaluations,
    })
}

/// Frame evaluations a schedule performs for `n` frames, computed from the
/// stage epochs alone.
pub fn scheduled_evaluations(config: &RsdConfig, n: usize) -> Result<usize> {
    let mut active = n;
    let mut total = 0;
    for epoch in 0..config.total_epochs {
        match config.action_at(epoch)? {
            EpochAction::Prune => active = config.survivors(active),
            EpochAction::RestoreFull => active = n,
            EpochAction::NoOp => {}
        }
        total += active;
    }
    Ok(total)
}

/// Result of localizing one test frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEval {
    pub id: usize,
    /// `None` when RANSAC found no consensus.
    pub error: Option<PoseError>,
    pub inliers: usize,
    pub estimate: Option<Pose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub frames: Vec<FrameEval>,
    pub failures: usize,
    pub mean: PoseError,
    pub median: PoseError,
}

/// Localizes every frame from predicted world coordinates; RANSAC failures
/// are counted separately and excluded from the aggregates.
pub fn evaluate_with<F>(frames: &[Frame], ransac: &RansacParams, mut predict: F) -> Result<EvalSummary>
where
    F: FnMut(&Frame) -> Result<Vec<Vector3<f64>>>,
{
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let pred = PointCloud::world(predict(frame)?)?;
        let eval = match localize(&pred, &frame.sensor, ransac) {
            Ok(loc) => FrameEval {
                id: frame.id,
                error: Some(pose_error(&loc.pose, &frame.pose)),
                inliers: loc.inlier_count,
                estimate: Some(loc.pose),
            },
            Err(Error::NoConsensus { .. }) => FrameEval {
                id: frame.id,
                error: None,
                inliers: 0,
                estimate: None,
            },
            Err(e) => return Err(e),
        };
        out.push(eval);
    }
    let pos: Vec<f64> = out.iter().filter_map(|f| f.error.map(|e| e.position)).collect();
    let ori: Vec<f64> = out.iter().filter_map(|f| f.error.map(|e| e.orientation_deg)).collect();
    let agg = |f: fn(&[f64]) -> Option<f64>| PoseError {
        position: f(&pos).unwrap_or(f64::NAN),
        orientation_deg: f(&ori).unwrap_or(f64::NAN),
    };
    Ok(EvalSummary {
        failures: out.iter().filter(|f| f.error.is_none()).count(),
        mean: agg(mean),
        median: agg(median_of),
        frames: out,
    })
}

/// World-coordinate predictions for every point of a frame. Guidance is
/// noise-free at inference.
pub fn predict_frame(
    regressor: &SceneRegressor,
    backbone: &FrozenBackbone,
    classifier: Option<&ClassifierHead>,
    sensor: &PointCloud,
) -> Result<Vec<Vector3<f64>>> {
    let feats = backbone.features(sensor)?;
    let guidance = match (regressor.guidance_dim(), classifier) {
        (0, _) => None,
        (_, None) => return Err(Error::InvalidConfig("regressor expects guidance but no classifier given".into())),
        (_, Some(c)) => {
            let pred = c.predict(feats.global.view().insert_axis(Axis(0)))?;
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            Some(guidance_feature(&pred[0].p1, 0.0, &mut rng)?)
        }
    };
    regressor.predict(feats.dense.view(), guidance.as_deref())
}

pub fn evaluate(
    regressor: &SceneRegressor,
    backbone: &FrozenBackbone,
    classifier: Option<&ClassifierHead>,
    frames: &[Frame],
    ransac: &RansacParams,
) -> Result<EvalSummary> {
    evaluate_with(frames, ransac, |f| predict_frame(regressor, backbone, classifier, &f.sensor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn l1_hand_cases() {
        let z = Vector3::zeros();
        assert_eq!(l1_scene_loss(&[z], &[z]).unwrap().0, 0.0);
        assert_eq!(l1_scene_loss(&[Vector3::new(1.0, 1.0, 1.0)], &[z]).unwrap().0, 3.0);
        let (loss, per) = l1_scene_loss(&[Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 2.0, 0.0)], &[z, z]).unwrap();
        assert_eq!(loss, 1.5);
        assert_eq!(per, vec![1.0, 2.0]);
        assert!(matches!(l1_scene_loss(&[z], &[]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn scheduled_evaluation_count() {
        assert_eq!(scheduled_evaluations(&RsdConfig::default(), 1000).unwrap(), 21310);
    }

    #[test]
    fn regressor_gradients_match_finite_differences() {
        use crate::nn::check_gradients;
        use rand::Rng;
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut reg = SceneRegressor::new(4, 2, &[6, 5, 5], [1.0, -2.0, 0.5], 3.0, seed).unwrap();
            for p in reg.mlp_mut().param_slices_mut() {
                p.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
            }
            let x = Array2::from_shape_simple_fn((10, 6), || rng.random_range(-1.0..1.0));
            let targets: Vec<Vector3<f64>> = (0..10)
                .map(|_| Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0)))
                .collect();
            let (_, _, grads) = reg.loss_and_grads(x.view(), &targets).unwrap();
            let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|g| g.to_vec()).collect();
            let report = check_gradients(
                &mut reg,
                |r| r.mlp_mut().param_slices_mut(),
                &analytic,
                |r| Ok(l1_scene_loss(&r.predict_rows(x.view())?, &targets)?.0),
                1e-3,
            )
            .unwrap();
            assert!(report.max_relative_error < 1e-4, "seed {seed}: {report:?}");
            assert!(report.skipped * 10 < report.checked, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn regressor_roundtrip_and_assembly() {
        let reg = SceneRegressor::new(3, 2, &[4, 5, 5], [1.0, 2.0, 3.0], 2.0, 1).unwrap();
        assert_eq!(reg.mlp().skips().len(), 1);
        let x = reg.assemble(array![[1.0, 2.0, 3.0]].view(), Some(&[0.6, 0.8])).unwrap();
        assert_eq!(x, array![[1.0, 2.0, 3.0, 0.6, 0.8]]);
        assert!(reg.assemble(array![[1.0, 2.0, 3.0]].view(), None).is_err());
        let back = SceneRegressor::read_from(&reg.to_bytes()[..]).unwrap();
        assert_eq!(back, reg);
    }
}
