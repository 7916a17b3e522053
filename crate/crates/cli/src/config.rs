//! Run configuration: plain-text `section.key = value` lines.
//!
//! Unknown keys and malformed values are errors. Rendering writes every key
//! in a fixed order with round-trip float formatting, so
//! `parse(render(c)) == c` and the hash of the rendered text identifies a run.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use lightloc_core::backbone::BackboneSpec;
use lightloc_core::fusion::{DriftSpec, FusionConfig};
use lightloc_core::nn::OptimizerKind;
use lightloc_core::rsd::RsdConfig;
use lightloc_core::scene::SceneSpec;
use lightloc_core::scg::ClassifierTrainConfig;
use lightloc_core::solver::RansacParams;
use lightloc_core::trainer::{PruneStrategy, TrainConfig};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct ScgSettings {
    pub enabled: bool,
    pub k1: usize,
    pub k2: usize,
    pub kmeans_iterations: usize,
    /// Standard deviation of the training-time guidance noise.
    pub sigma: f64,
    pub classifier: ClassifierTrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionSettings {
    pub laps: usize,
    pub frames_per_lap: usize,
    /// Emit an observation every `stride` frames.
    pub stride: usize,
    pub drift: DriftSpec,
    pub filter: FusionConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Where artifacts go; excluded from the config hash.
    pub output: PathBuf,
    pub scene: SceneSpec,
    pub backbone: BackboneSpec,
    pub scg: ScgSettings,
    pub rsd: RsdConfig,
    pub train: TrainConfig,
    pub ransac: RansacParams,
    pub fusion: FusionSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: PathBuf::from("lightloc-run"),
            scene: SceneSpec::default(),
            backbone: BackboneSpec::default(),
            scg: ScgSettings {
                enabled: true,
                k1: 4,
                k2: 5,
                kmeans_iterations: 100,
                sigma: 0.1,
                classifier: ClassifierTrainConfig::default(),
            },
            rsd: RsdConfig::default(),
            train: TrainConfig {
                strategy: PruneStrategy::Rsd,
                ..TrainConfig::default()
            },
            ransac: RansacParams::default(),
            fusion: FusionSettings {
                laps: 5,
                frames_per_lap: 100,
                stride: 1,
                drift: DriftSpec::default(),
                filter: FusionConfig::default(),
            },
        }
    }
}

/// Module that receives an independent seed derived from the root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Scene,
    Cluster,
    Classifier,
    Regressor,
    Ransac,
    Odometry,
}

impl Stream {
    fn label(self) -> &'static str {
        match self {
            Stream::Scene => "scene",
            Stream::Cluster => "cluster",
            Stream::Classifier => "classifier",
            Stream::Regressor => "regressor",
            Stream::Ransac => "ransac",
            Stream::Odometry => "odometry",
        }
    }
}

pub fn derive_seed(root: u64, stream: Stream) -> u64 {
    let mut h = Sha256::new();
    h.update(stream.label().as_bytes());
    h.update(root.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn list<T: Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn strategy_name(s: PruneStrategy) -> &'static str {
    match s {
        PruneStrategy::Full => "full",
        PruneStrategy::Rsd => "rsd",
        PruneStrategy::Random => "random",
    }
}

fn optimizer_name(o: OptimizerKind) -> &'static str {
    match o {
        OptimizerKind::Sgd => "sgd",
        OptimizerKind::AdamW { .. } => "adamw",
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> CliResult<T>
where
    T::Err: Display,
{
    raw.parse()
        .map_err(|e| CliError::Config(format!("{key}: cannot parse {raw:?}: {e}")))
}

fn list_value(key: &str, raw: &str) -> CliResult<Vec<usize>> {
    raw.split(',').map(|v| value(key, v.trim())).collect()
}

impl RunConfig {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        let (s, b, g, c, r, t, a, f) = (
            &self.scene,
            &self.backbone,
            &self.scg,
            &self.scg.classifier,
            &self.rsd,
            &self.train,
            &self.ransac,
            &self.fusion,
        );
        put("seed", self.seed.to_string());
        put("output", self.output.display().to_string());
        put("scene.loop_length", s.loop_length.to_string());
        put("scene.frame_count", s.frame_count.to_string());
        put("scene.test_frame_count", s.test_frame_count.to_string());
        put("scene.pole_spacing", s.pole_spacing.to_string());
        put("scene.lateral_offset", s.lateral_offset.to_string());
        put("scene.lateral_wobble", s.lateral_wobble.to_string());
        put("scene.sensor_range", s.sensor_range.to_string());
        put("scene.sensor_height", s.sensor_height.to_string());
        put("scene.code_harmonics", s.code_harmonics.to_string());
        put("scene.aliasing_factor", s.aliasing_factor.to_string());
        put("scene.alias_patch_length", s.alias_patch_length.to_string());
        put("scene.dense_arc_fraction", s.dense_arc_fraction.to_string());
        put("scene.dense_frame_share", s.dense_frame_share.to_string());
        put("scene.point_noise", s.point_noise.to_string());
        put("backbone.width", b.width.to_string());
        put("backbone.neighbor_radius", b.neighbor_radius.to_string());
        put("backbone.bandwidth", b.bandwidth.to_string());
        put("backbone.seed", b.seed.to_string());
        put("scg.enabled", g.enabled.to_string());
        put("scg.k1", g.k1.to_string());
        put("scg.k2", g.k2.to_string());
        put("scg.kmeans_iterations", g.kmeans_iterations.to_string());
        put("scg.sigma", g.sigma.to_string());
        put("scg.epsilon", c.label_smoothing.to_string());
        put("scg.hidden", list(&c.hidden));
        put("scg.epochs", c.epochs.to_string());
        put("scg.batch_size", c.batch_size.to_string());
        put("scg.min_lr", c.schedule.min_lr.to_string());
        put("scg.max_lr", c.schedule.max_lr.to_string());
        put("scg.final_lr", c.schedule.final_lr.to_string());
        put("scg.warmup_fraction", c.schedule.warmup_fraction.to_string());
        put("scg.optimizer", optimizer_name(c.optimizer).into());
        put("scg.weight_decay", c.weight_decay.to_string());
        put("rsd.downsample_ratio", r.downsample_ratio.to_string());
        put("rsd.start_ratio", r.start_ratio.to_string());
        put("rsd.stop_ratio", r.stop_ratio.to_string());
        put("rsd.window", r.window.to_string());
        put("train.strategy", strategy_name(t.strategy).into());
        put("train.epochs", t.epochs.to_string());
        put("train.batch_frames", t.batch_frames.to_string());
        put("train.points_per_frame", t.points_per_frame.to_string());
        put("train.hidden", list(&t.hidden));
        put("train.min_lr", t.schedule.min_lr.to_string());
        put("train.max_lr", t.schedule.max_lr.to_string());
        put("train.final_lr", t.schedule.final_lr.to_string());
        put("train.warmup_fraction", t.schedule.warmup_fraction.to_string());
        put("train.optimizer", optimizer_name(t.optimizer).into());
        put("train.weight_decay", t.weight_decay.to_string());
        put("train.augmentation.probability", t.augmentation.probability.to_string());
        put("train.augmentation.max_translation", t.augmentation.max_translation.to_string());
        put("train.augmentation.max_roll_pitch_deg", t.augmentation.max_roll_pitch_deg.to_string());
        put("train.augmentation.max_yaw_deg", t.augmentation.max_yaw_deg.to_string());
        put("ransac.max_iterations", a.max_iterations.to_string());
        put("ransac.inlier_threshold", a.inlier_threshold.to_string());
        put("ransac.min_inlier_fraction", a.min_inlier_fraction.to_string());
        put("ransac.refit_on_inliers", a.refit_on_inliers.to_string());
        put("fusion.laps", f.laps.to_string());
        put("fusion.frames_per_lap", f.frames_per_lap.to_string());
        put("fusion.stride", f.stride.to_string());
        put("fusion.bias_x", f.drift.bias_per_meter.x.to_string());
        put("fusion.bias_y", f.drift.bias_per_meter.y.to_string());
        put("fusion.bias_z", f.drift.bias_per_meter.z.to_string());
        put("fusion.step_noise", f.drift.step_noise.to_string());
        put("fusion.process_sigma", f.drift.process_sigma.to_string());
        put("fusion.noise_scale", f.filter.noise_scale.to_string());
        put("fusion.confidence_floor", f.filter.confidence_floor.to_string());
        put("fusion.initial_variance", f.filter.initial_variance.to_string());
        out
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, raw: &str) -> CliResult<()> {
        let raw = raw.trim();
        let v = |k: &str| -> CliResult<f64> { value(k, raw) };
        match key {
            "seed" => self.seed = value(key, raw)?,
            "output" => self.output = PathBuf::from(raw),
            "scene.loop_length" => self.scene.loop_length = v(key)?,
            "scene.frame_count" => self.scene.frame_count = value(key, raw)?,
            "scene.test_frame_count" => self.scene.test_frame_count = value(key, raw)?,
            "scene.pole_spacing" => self.scene.pole_spacing = v(key)?,
            "scene.lateral_offset" => self.scene.lateral_offset = v(key)?,
            "scene.lateral_wobble" => self.scene.lateral_wobble = v(key)?,
            "scene.sensor_range" => self.scene.sensor_range = v(key)?,
            "scene.sensor_height" => self.scene.sensor_height = v(key)?,
            "scene.code_harmonics" => self.scene.code_harmonics = value(key, raw)?,
            "scene.aliasing_factor" => self.scene.aliasing_factor = value(key, raw)?,
            "scene.alias_patch_length" => self.scene.alias_patch_length = v(key)?,
            "scene.dense_arc_fraction" => self.scene.dense_arc_fraction = v(key)?,
            "scene.dense_frame_share" => self.scene.dense_frame_share = v(key)?,
            "scene.point_noise" => self.scene.point_noise = v(key)?,
            "backbone.width" => self.backbone.width = value(key, raw)?,
            "backbone.neighbor_radius" => self.backbone.neighbor_radius = v(key)?,
            "backbone.bandwidth" => self.backbone.bandwidth = v(key)?,
            "backbone.seed" => self.backbone.seed = value(key, raw)?,
            "scg.enabled" => self.scg.enabled = value(key, raw)?,
            "scg.k1" => self.scg.k1 = value(key, raw)?,
            "scg.k2" => self.scg.k2 = value(key, raw)?,
            "scg.kmeans_iterations" => self.scg.kmeans_iterations = value(key, raw)?,
            "scg.sigma" => self.scg.sigma = v(key)?,
            "scg.epsilon" => self.scg.classifier.label_smoothing = v(key)?,
            "scg.hidden" => self.scg.classifier.hidden = list_value(key, raw)?,
            "scg.epochs" => self.scg.classifier.epochs = value(key, raw)?,
            "scg.batch_size" => self.scg.classifier.batch_size = value(key, raw)?,
            "scg.min_lr" => self.scg.classifier.schedule.min_lr = v(key)?,
            "scg.max_lr" => self.scg.classifier.schedule.max_lr = v(key)?,
            "scg.final_lr" => self.scg.classifier.schedule.final_lr = v(key)?,
            "scg.warmup_fraction" => self.scg.classifier.schedule.warmup_fraction = v(key)?,
            "scg.optimizer" => self.scg.classifier.optimizer = parse_optimizer(key, raw)?,
            "scg.weight_decay" => self.scg.classifier.weight_decay = v(key)?,
            "rsd.downsample_ratio" => self.rsd.downsample_ratio = v(key)?,
            "rsd.start_ratio" => self.rsd.start_ratio = v(key)?,
            "rsd.stop_ratio" => self.rsd.stop_ratio = v(key)?,
            "rsd.window" => self.rsd.window = value(key, raw)?,
            "train.strategy" => {
                self.train.strategy = match raw {
                    "full" => PruneStrategy::Full,
                    "rsd" => PruneStrategy::Rsd,
                    "random" => PruneStrategy::Random,
                    _ => return Err(CliError::Config(format!("{key}: expected full, rsd or random, found {raw:?}"))),
                }
            }
            "train.epochs" => self.train.epochs = value(key, raw)?,
            "train.batch_frames" => self.train.batch_frames = value(key, raw)?,
            "train.points_per_frame" => self.train.points_per_frame = value(key, raw)?,
            "train.hidden" => self.train.hidden = list_value(key, raw)?,
            "train.min_lr" => self.train.schedule.min_lr = v(key)?,
            "train.max_lr" => self.train.schedule.max_lr = v(key)?,
            "train.final_lr" => self.train.schedule.final_lr = v(key)?,
            "train.warmup_fraction" => self.train.schedule.warmup_fraction = v(key)?,
            "train.optimizer" => self.train.optimizer = parse_optimizer(key, raw)?,
            "train.weight_decay" => self.train.weight_decay = v(key)?,
            "train.augmentation.probability" => self.train.augmentation.probability = v(key)?,
            "train.augmentation.max_translation" => self.train.augmentation.max_translation = v(key)?,
            "train.augmentation.max_roll_pitch_deg" => self.train.augmentation.max_roll_pitch_deg = v(key)?,
            "train.augmentation.max_yaw_deg" => self.train.augmentation.max_yaw_deg = v(key)?,
            "ransac.max_iterations" => self.ransac.max_iterations = value(key, raw)?,
            "ransac.inlier_threshold" => self.ransac.inlier_threshold = v(key)?,
            "ransac.min_inlier_fraction" => self.ransac.min_inlier_fraction = v(key)?,
            "ransac.refit_on_inliers" => self.ransac.refit_on_inliers = value(key, raw)?,
            "fusion.laps" => self.fusion.laps = value(key, raw)?,
            "fusion.frames_per_lap" => self.fusion.frames_per_lap = value(key, raw)?,
            "fusion.stride" => self.fusion.stride = value(key, raw)?,
            "fusion.bias_x" => self.fusion.drift.bias_per_meter.x = v(key)?,
            "fusion.bias_y" => self.fusion.drift.bias_per_meter.y = v(key)?,
            "fusion.bias_z" => self.fusion.drift.bias_per_meter.z = v(key)?,
            "fusion.step_noise" => self.fusion.drift.step_noise = v(key)?,
            "fusion.process_sigma" => self.fusion.drift.process_sigma = v(key)?,
            "fusion.noise_scale" => self.fusion.filter.noise_scale = v(key)?,
            "fusion.confidence_floor" => self.fusion.filter.confidence_floor = v(key)?,
            "fusion.initial_variance" => self.fusion.filter.initial_variance = v(key)?,
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses assignments on top of the defaults. `#` starts a comment line.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), raw)?;
        }
        Ok(cfg)
    }

    /// First 16 hex digits of the SHA-256 of the rendered config without the output path.
    pub fn hash(&self) -> String {
        let text: String = self
            .render()
            .lines()
            .filter(|l| !l.starts_with("output ="))
            .map(|l| format!("{l}\n"))
            .collect();
        hex(&Sha256::digest(text.as_bytes()))[..16].to_string()
    }

    /// Runs every module validator.
    pub fn validate(&self) -> CliResult<()> {
        self.scene_spec().validate()?;
        lightloc_core::backbone::FrozenBackbone::new(self.backbone)?;
        if self.scg.k1 == 0 || self.scg.k2 == 0 || self.scg.kmeans_iterations == 0 {
            return Err(CliError::Config("scg.k1, scg.k2 and scg.kmeans_iterations must be positive".into()));
        }
        if self.scg.classifier.hidden.is_empty() || self.scg.classifier.hidden.contains(&0) {
            return Err(CliError::Config("scg.hidden needs positive layer widths".into()));
        }
        if !(0.0..1.0).contains(&self.scg.classifier.label_smoothing) {
            return Err(CliError::Config("scg.epsilon must be in [0, 1)".into()));
        }
        if self.scg.classifier.batch_size == 0 {
            return Err(CliError::Config("scg.batch_size must be positive".into()));
        }
        self.scg.classifier.schedule.validate()?;
        self.train_config().validate()?;
        self.ransac.validate()?;
        if self.fusion.laps == 0 || self.fusion.frames_per_lap == 0 || self.fusion.stride == 0 {
            return Err(CliError::Config("fusion.laps, fusion.frames_per_lap and fusion.stride must be positive".into()));
        }
        self.fusion.drift.validate()?;
        self.fusion.filter.validate()?;
        Ok(())
    }

    pub fn scene_spec(&self) -> SceneSpec {
        SceneSpec {
            seed: derive_seed(self.seed, Stream::Scene),
            ..self.scene.clone()
        }
    }

    pub fn rsd_config(&self) -> RsdConfig {
        RsdConfig {
            total_epochs: self.train.epochs,
            ..self.rsd
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            rsd: self.rsd_config(),
            scg_enabled: self.scg.enabled,
            guidance_sigma: self.scg.sigma,
            seed: derive_seed(self.seed, Stream::Regressor),
            ..self.train.clone()
        }
    }

    pub fn classifier_config(&self) -> ClassifierTrainConfig {
        ClassifierTrainConfig {
            seed: derive_seed(self.seed, Stream::Classifier),
            ..self.scg.classifier.clone()
        }
    }

    pub fn ransac_params(&self) -> RansacParams {
        RansacParams {
            seed: derive_seed(self.seed, Stream::Ransac),
            ..self.ransac
        }
    }
}

fn parse_optimizer(key: &str, raw: &str) -> CliResult<OptimizerKind> {
    match raw {
        "adamw" => Ok(OptimizerKind::adamw()),
        "sgd" => Ok(OptimizerKind::Sgd),
        _ => Err(CliError::Config(format!("{key}: expected adamw or sgd, found {raw:?}"))),
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
