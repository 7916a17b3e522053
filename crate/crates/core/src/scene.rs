//! Synthetic closed-loop scenes for desk-scale experiments.
//!
//! A sensor drives counter-clockwise around a circular loop lined on both
//! sides by vertical poles. Each pole carries four points; the heights of the
//! upper three vary smoothly with the pole's angle around the loop, so the
//! local geometry of a pole encodes where it stands. Aliased scenes copy
//! pole patches from the first half of the loop onto the opposite half
//! (a rotation by 180° about the loop center), which yields identical
//! sensor-frame geometry at world positions roughly a loop diameter apart.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{transform, PointCloud, Pose};

/// Height of the lowest point of every pole (world z).
pub const POLE_BASE_HEIGHT: f64 = 0.3;
/// Base height and span of the three coded points on a pole.
const CODED_LEVELS: [(f64, f64); 3] = [(1.0, 1.0), (2.4, 1.0), (3.8, 1.0)];
/// Copied patches displace nearby original poles closer than this.
const MIN_POLE_GAP: f64 = 1.2;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub loop_length: f64,
    pub frame_count: usize,
    pub test_frame_count: usize,
    /// Mean spacing of poles along each side of the path.
    pub pole_spacing: f64,
    /// Mean distance of the pole rows from the path.
    pub lateral_offset: f64,
    /// Amplitude of the smooth variation of that distance.
    pub lateral_wobble: f64,
    /// Horizontal sensing radius.
    pub sensor_range: f64,
    pub sensor_height: f64,
    /// Number of harmonics in the pole height codes; more means a harder map.
    pub code_harmonics: usize,
    /// Number of duplicated pole patches.
    pub aliasing_factor: usize,
    pub alias_patch_length: f64,
    /// Fraction of the loop (starting at arc 0) driven slowly...
    pub dense_arc_fraction: f64,
    /// ...and the share of training frames recorded there.
    pub dense_frame_share: f64,
    /// Standard deviation of Gaussian noise on sensor points.
    pub point_noise: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            loop_length: 200.0,
            frame_count: 500,
            test_frame_count: 100,
            pole_spacing: 1.5,
            lateral_offset: 5.0,
            lateral_wobble: 1.0,
            sensor_range: 30.0,
            sensor_height: 1.8,
            code_harmonics: 4,
            aliasing_factor: 0,
            alias_patch_length: 16.0,
            dense_arc_fraction: 0.0,
            dense_frame_share: 0.0,
            point_noise: 0.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn radius(&self) -> f64 {
        self.loop_length / TAU
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        let positive = [
            self.loop_length,
            self.pole_spacing,
            self.lateral_offset,
            self.sensor_range,
            self.sensor_height,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("loop length, pole spacing, offsets, range and height must be positive");
        }
        if self.frame_count == 0 || self.test_frame_count == 0 {
            return bad("frame counts must be positive");
        }
        if self.code_harmonics == 0 {
            return bad("need at least one code harmonic");
        }
        if self.lateral_wobble < 0.0 || self.lateral_wobble >= self.lateral_offset {
            return bad("lateral wobble must be in [0, lateral offset)");
        }
        if self.lateral_offset + self.lateral_wobble >= self.radius() {
            return bad("pole rows do not fit inside the loop");
        }
        if self.pole_spacing < 1.0 {
            return bad("pole spacing below 1 m merges neighboring poles");
        }
        if self.aliasing_factor > 0 {
            let slot = self.loop_length / 2.0 / self.aliasing_factor as f64;
            if !(self.alias_patch_length > 0.0 && self.alias_patch_length < slot) {
                return bad("aliased patches must be shorter than half the loop divided by the factor");
            }
        }
        if !(0.0..1.0).contains(&self.dense_arc_fraction) || !(0.0..1.0).contains(&self.dense_frame_share) {
            return bad("dense arc fraction and frame share must be in [0, 1)");
        }
        if (self.dense_arc_fraction > 0.0) != (self.dense_frame_share > 0.0) {
            return bad("dense arc fraction and frame share must both be zero or both positive");
        }
        if !(self.point_noise >= 0.0 && self.point_noise.is_finite()) {
            return bad("point noise must be non-negative");
        }
        Ok(())
    }
}

/// Smooth periodic functions of the loop angle with values in [0, 1].
#[derive(Debug, Clone)]
struct HarmonicCode {
    cos: Vec<f64>,
    sin: Vec<f64>,
    phase: f64,
    norm: f64,
}

impl HarmonicCode {
    fn random(harmonics: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut cos = Vec::with_capacity(harmonics);
        let mut sin = Vec::with_capacity(harmonics);
        for m in 1..=harmonics {
            let amp = 1.0 / (m as f64).sqrt();
            cos.push(amp * normal.sample(rng));
            sin.push(amp * normal.sample(rng));
        }
        let norm = cos.iter().chain(&sin).map(|c| c.abs()).sum::<f64>().max(1e-9);
        Self {
            cos,
            sin,
            phase: rng.random_range(0.0..TAU),
            norm,
        }
    }

    fn eval(&self, theta: f64) -> f64 {
        let mut s = 0.0;
        for (m, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let k = (m + 1) as f64;
            s += a * (k * theta + self.phase).cos() + b * (k * theta + self.phase).sin();
        }
        0.5 + 0.5 * s / self.norm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pole {
    /// Arc position along the path of the angle the pole stands at.
    pub arc: f64,
    pub inner: bool,
    /// World-frame points, lowest first.
    pub points: [Vector3<f64>; 4],
    /// Index of the aliased pair this pole belongs to, if any.
    pub alias_pair: Option<usize>,
}

impl Pole {
    fn base(&self) -> (f64, f64) {
        (self.points[0].x, self.points[0].y)
    }
}

/// Arc intervals `[start, end)` of a source patch and its copy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AliasPair {
    pub source: (f64, f64),
    pub copy: (f64, f64),
}

impl AliasPair {
    /// Maps a pose inside the source patch to the matching pose at the copy.
    pub fn mirror(pose: &Pose) -> Pose {
        let t = pose.translation();
        let r = pose.rotation();
        let flip = nalgebra::Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        Pose::new(flip * r, Vector3::new(-t.x, -t.y, t.z)).expect("rotation about z preserves validity")
    }
}

/// One recorded frame: sensor-frame points and their exact world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: usize,
    pub arc: f64,
    pub pose: Pose,
    pub sensor: PointCloud,
    pub world: PointCloud,
    /// Index of the pole each point belongs to; empty for recorded frames.
    pub pole_ids: Vec<usize>,
}

impl Frame {
    /// Frame rebuilt from a stored pose and sensor cloud; world points follow from the pose.
    pub fn from_recording(id: usize, arc: f64, pose: Pose, sensor: PointCloud) -> Result<Self> {
        let world = transform(&pose, &sensor)?;
        Ok(Self {
            id,
            arc,
            pose,
            sensor,
            world,
            pole_ids: Vec::new(),
        })
    }

    pub fn position(&self) -> Vector3<f64> {
        *self.pose.translation()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    spec: SceneSpec,
    poles: Vec<Pole>,
    alias_pairs: Vec<AliasPair>,
    pub train: Vec<Frame>,
    pub test: Vec<Frame>,
}

fn wrap_arc(s: f64, length: f64) -> f64 {
    s.rem_euclid(length)
}

fn in_arc(s: f64, range: (f64, f64), length: f64) -> bool {
    let d = wrap_arc(s - range.0, length);
    d < range.1 - range.0
}

impl SyntheticScene {
    pub fn generate(spec: &SceneSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let codes: Vec<[HarmonicCode; 3]> = (0..2)
            .map(|_| std::array::from_fn(|_| HarmonicCode::random(spec.code_harmonics, &mut rng)))
            .collect();
        let wobble_phase = [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)];
        let rho = spec.radius();
        let l = spec.loop_length;
        let mut poles = Vec::new();
        for (side, inner) in [true, false].into_iter().enumerate() {
            let count = (l / spec.pole_spacing).floor() as usize;
            let step = l / count as f64;
            let start = rng.random_range(0.0..step);
            for k in 0..count {
                let jitter = rng.random_range(-0.2..0.2) * step;
                let arc = wrap_arc(start + k as f64 * step + jitter, l);
                let theta = TAU * arc / l;
                let offset = spec.lateral_offset + spec.lateral_wobble * (3.0 * theta + wobble_phase[side]).sin();
                let r = if inner { rho - offset } else { rho + offset };
                let (x, y) = (r * theta.cos(), r * theta.sin());
                let mut points = [Vector3::new(x, y, POLE_BASE_HEIGHT); 4];
                for (j, (lo, span)) in CODED_LEVELS.iter().enumerate() {
                    points[j + 1].z = lo + span * codes[side][j].eval(theta);
                }
                poles.push(Pole {
                    arc,
                    inner,
                    points,
                    alias_pair: None,
                });
            }
        }

        let mut alias_pairs = Vec::new();
        if spec.aliasing_factor > 0 {
            let slot = l / 2.0 / spec.aliasing_factor as f64;
            for i in 0..spec.aliasing_factor {
                let s0 = i as f64 * slot + 0.5 * (slot - spec.alias_patch_length);
                let source = (s0, s0 + spec.alias_patch_length);
                let copy = (source.0 + l / 2.0, source.1 + l / 2.0);
                alias_pairs.push(AliasPair { source, copy });
            }
            let mut copies = Vec::new();
            for (i, pair) in alias_pairs.iter().enumerate() {
                for p in poles.iter_mut().filter(|p| in_arc(p.arc, pair.source, l)) {
                    p.alias_pair = Some(i);
                    let mut c = p.clone();
                    c.arc = wrap_arc(p.arc + l / 2.0, l);
                    for q in &mut c.points {
                        q.x = -q.x;
                        q.y = -q.y;
                    }
                    copies.push(c);
                }
            }
            poles.retain(|p| !alias_pairs.iter().any(|pair| in_arc(p.arc, pair.copy, l)));
            poles.retain(|p| {
                let (x, y) = p.base();
                copies.iter().all(|c| {
                    let (cx, cy) = c.base();
                    (x - cx).hypot(y - cy) >= MIN_POLE_GAP
                })
            });
            poles.extend(copies);
        }
        poles.sort_by(|a, b| a.arc.total_cmp(&b.arc).then(a.inner.cmp(&b.inner)));

        let mut scene = Self {
            spec: spec.clone(),
            poles,
            alias_pairs,
            train: Vec::new(),
            test: Vec::new(),
        };
        let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x00F2_A3E5);
        let train_arcs = training_arcs(spec);
        scene.train = train_arcs
            .iter()
            .enumerate()
            .map(|(id, &arc)| scene.frame_at(id, arc, scene.path_pose(arc, 0.0, 0.0), &mut noise_rng))
            .collect::<Result<_>>()?;
        let n = spec.test_frame_count;
        scene.test = (0..n)
            .map(|j| {
                let arc = (j as f64 + 0.5) * l / n as f64;
                let theta = TAU * arc / l;
                let lateral = 0.3 * (5.0 * theta).sin();
                let yaw = 1.5f64.to_radians() * (7.0 * theta).sin();
                let pose = scene.path_pose(arc, lateral, yaw);
                scene.frame_at(j, arc, pose, &mut noise_rng)
            })
            .collect::<Result<_>>()?;
        Ok(scene)
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn poles(&self) -> &[Pole] {
        &self.poles
    }

    pub fn alias_pairs(&self) -> &[AliasPair] {
        &self.alias_pairs
    }

    /// Sensor pose at arc position `arc`, shifted `lateral` meters outward and
    /// yawed `yaw` radians away from the path tangent.
    pub fn path_pose(&self, arc: f64, lateral: f64, yaw: f64) -> Pose {
        let theta = TAU * arc / self.spec.loop_length;
        let r = self.spec.radius() + lateral;
        Pose::from_yaw(
            theta + PI / 2.0 + yaw,
            Vector3::new(r * theta.cos(), r * theta.sin(), self.spec.sensor_height),
        )
    }

    /// Noise-free observation of every pole within range of `pose`.
    pub fn observe(&self, pose: &Pose) -> Result<(PointCloud, PointCloud, Vec<usize>)> {
        self.observe_with(pose, 0.0, &mut ChaCha8Rng::seed_from_u64(0))
    }

    fn observe_with(
        &self,
        pose: &Pose,
        noise: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(PointCloud, PointCloud, Vec<usize>)> {
        let t = pose.translation();
        let gauss = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("finite sigma");
        let mut sensor = Vec::new();
        let mut pole_ids = Vec::new();
        for (i, pole) in self.poles.iter().enumerate() {
            let (x, y) = pole.base();
            if (x - t.x).hypot(y - t.y) > self.spec.sensor_range {
                continue;
            }
            for p in &pole.points {
                let mut q = pose.apply_inverse(p);
                if noise > 0.0 {
                    q += Vector3::new(gauss.sample(rng), gauss.sample(rng), gauss.sample(rng));
                }
                sensor.push(q);
                pole_ids.push(i);
            }
        }
        if sensor.is_empty() {
            return Err(Error::InvalidSpec("a frame sees no poles; increase the sensor range".into()));
        }
        let sensor = PointCloud::sensor(sensor)?;
        let world = transform(pose, &sensor)?;
        Ok((sensor, world, pole_ids))
    }

    fn frame_at(&self, id: usize, arc: f64, pose: Pose, rng: &mut ChaCha8Rng) -> Result<Frame> {
        let (sensor, world, pole_ids) = self.observe_with(&pose, self.spec.point_noise, rng)?;
        Ok(Frame {
            id,
            arc,
            pose,
            sensor,
            world,
            pole_ids,
        })
    }

    /// Frames along `laps` consecutive traversals of the loop, `frames_per_lap`
    /// each, with a lateral weave that changes from lap to lap. Arc values
    /// keep increasing across laps.
    pub fn drive(&self, laps: usize, frames_per_lap: usize) -> Result<Vec<Frame>> {
        if laps == 0 || frames_per_lap == 0 {
            return Err(Error::InvalidSpec("a drive needs at least one lap and one frame".into()));
        }
        let l = self.spec.loop_length;
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed ^ 0xD21E);
        (0..laps * frames_per_lap)
            .map(|k| {
                let arc = (k as f64 + 0.25) * l / frames_per_lap as f64;
                let theta = TAU * arc / l;
                let lap = (k / frames_per_lap) as f64;
                let lateral = 0.4 * (3.0 * theta + lap).sin();
                let yaw = 2f64.to_radians() * (5.0 * theta + 2.0 * lap).sin();
                let pose = self.path_pose(arc, lateral, yaw);
                self.frame_at(k, arc, pose, &mut rng)
            })
            .collect()
    }

    /// Ground-truth positions of the training frames.
    pub fn train_positions(&self) -> Vec<Vector3<f64>> {
        self.train.iter().map(Frame::position).collect()
    }
}

/// Arc positions of training frames: evenly spaced, or denser along the
/// first `dense_arc_fraction` of the loop when a speed profile is set.
fn training_arcs(spec: &SceneSpec) -> Vec<f64> {
    let n = spec.frame_count;
    let l = spec.loop_length;
    if spec.dense_arc_fraction == 0.0 {
        return (0..n).map(|i| i as f64 * l / n as f64).collect();
    }
    let dense = ((n as f64 * spec.dense_frame_share).round() as usize).clamp(1, n - 1);
    let sparse = n - dense;
    let split = l * spec.dense_arc_fraction;
    let mut arcs: Vec<f64> = (0..dense).map(|i| i as f64 * split / dense as f64).collect();
    arcs.extend((0..sparse).map(|i| split + i as f64 * (l - split) / sparse as f64));
    arcs
}

/// Positions drawn from four isotropic Gaussian blobs on the corners of a
/// square, paired with features from a fixed random linear embedding of the
/// position plus a little noise.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobScene {
    pub positions: Vec<Vec<f64>>,
    pub features: Array2<f64>,
    /// Blob each sample was drawn from.
    pub blob: Vec<usize>,
}

pub fn blob_scene(per_blob: usize, spacing: f64, sigma: f64, feature_dim: usize, seed: u64) -> Result<BlobScene> {
    if per_blob == 0 || feature_dim == 0 || !(spacing > 0.0) || !(sigma >= 0.0) {
        return Err(Error::InvalidSpec("blob scene needs samples, features, positive spacing".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let embed = Array2::from_shape_simple_fn((2, feature_dim), || unit.sample(&mut rng) / spacing);
    let corners = [(0.0, 0.0), (spacing, 0.0), (0.0, spacing), (spacing, spacing)];
    let mut positions = Vec::with_capacity(4 * per_blob);
    let mut blob = Vec::with_capacity(4 * per_blob);
    for (b, &(cx, cy)) in corners.iter().enumerate() {
        for _ in 0..per_blob {
            positions.push(vec![cx + sigma * unit.sample(&mut rng), cy + sigma * unit.sample(&mut rng)]);
            blob.push(b);
        }
    }
    let mut features = Array2::zeros((positions.len(), feature_dim));
    for (mut row, p) in features.rows_mut().into_iter().zip(&positions) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = p[0] * embed[[0, j]] + p[1] * embed[[1, j]] + 0.01 * unit.sample(&mut rng);
        }
    }
    Ok(BlobScene {
        positions,
        features,
        blob,
    })
}
