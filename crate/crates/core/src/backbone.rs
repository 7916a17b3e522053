//! Fixed, untrained feature extractor standing in for a pre-trained backbone.
//!
//! Each point is described by the vertical structure of its neighborhood:
//! its own height above the lowest neighbor and the heights of the other
//! neighbors above that lowest one. This is invariant to sensor yaw and
//! position, so identical local geometry yields identical features wherever
//! it occurs. Descriptors are lifted with random Fourier features; the global
//! feature is their elementwise maximum over the frame.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{Frame, PointCloud};

/// Length of the local descriptor: own offset plus three neighbor offsets.
pub const ENCODING_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackboneSpec {
    pub width: usize,
    /// Horizontal radius that groups points into one neighborhood.
    pub neighbor_radius: f64,
    /// Length scale (meters) of the random Fourier features.
    pub bandwidth: f64,
    pub seed: u64,
}

impl Default for BackboneSpec {
    fn default() -> Self {
        Self {
            width: 64,
            neighbor_radius: 0.5,
            bandwidth: 0.25,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenBackbone {
    spec: BackboneSpec,
    projection: Array2<f64>,
    phase: Array1<f64>,
}

/// Dense per-point features (rows follow the cloud) and the pooled global feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub dense: Array2<f64>,
    pub global: Array1<f64>,
}

impl FrozenBackbone {
    pub fn new(spec: BackboneSpec) -> Result<Self> {
        if spec.width == 0 || !(spec.neighbor_radius > 0.0) || !(spec.bandwidth > 0.0) {
            return Err(Error::InvalidConfig(
                "backbone width, neighbor radius and bandwidth must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, 1.0 / spec.bandwidth).expect("positive bandwidth");
        let projection = Array2::from_shape_simple_fn((ENCODING_DIM, spec.width), || normal.sample(&mut rng));
        let phase = Array1::from_shape_simple_fn(spec.width, || rng.random_range(0.0..std::f64::consts::TAU));
        Ok(Self {
            spec,
            projection,
            phase,
        })
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn width(&self) -> usize {
        self.spec.width
    }

    /// Local descriptors for the points at `indices` (all points if `None`).
    pub fn encodings(&self, cloud: &PointCloud, indices: Option<&[usize]>) -> Result<Array2<f64>> {
        if cloud.frame() != Frame::Sensor {
            return Err(Error::WrongFrame {
                expected: Frame::Sensor,
                found: cloud.frame(),
            });
        }
        if cloud.is_empty() {
            return Err(Error::TooFewSamples { have: 0, need: 1 });
        }
        let pts = cloud.points();
        let all: Vec<usize>;
        let idx = match indices {
            Some(i) => i,
            None => {
                all = (0..pts.len()).collect();
                &all
            }
        };
        let r2 = self.spec.neighbor_radius * self.spec.neighbor_radius;
        let mut out = Array2::zeros((idx.len(), ENCODING_DIM));
        let mut heights = Vec::with_capacity(8);
        for (row, &i) in idx.iter().enumerate() {
            let p = pts.get(i).ok_or(Error::ShapeMismatch(format!("point index {i} out of range")))?;
            heights.clear();
            for q in pts {
                let (dx, dy) = (q.x - p.x, q.y - p.y);
                if dx * dx + dy * dy <= r2 {
                    heights.push(q.z);
                }
            }
            heights.sort_by(f64::total_cmp);
            let low = heights[0];
            out[[row, 0]] = p.z - low;
            for k in 1..ENCODING_DIM {
                out[[row, k]] = heights.get(k).map_or(0.0, |h| h - low);
            }
        }
        Ok(out)
    }

    /// Random Fourier features of local descriptors.
    pub fn lift(&self, encodings: &Array2<f64>) -> Array2<f64> {
        let mut f = encodings.dot(&self.projection) + &self.phase;
        f.mapv_inplace(f64::cos);
        f
    }

    pub fn dense_features(&self, cloud: &PointCloud, indices: Option<&[usize]>) -> Result<Array2<f64>> {
        Ok(self.lift(&self.encodings(cloud, indices)?))
    }

    pub fn features(&self, cloud: &PointCloud) -> Result<FrameFeatures> {
        let dense = self.dense_features(cloud, None)?;
        let global = global_max_pool(&dense);
        Ok(FrameFeatures { dense, global })
    }
}

pub fn global_max_pool(dense: &Array2<f64>) -> Array1<f64> {
    dense.fold_axis(Axis(0), f64::NEG_INFINITY, |&a, &b| a.max(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn pole(x: f64, y: f64, hs: [f64; 4]) -> Vec<Vector3<f64>> {
        hs.iter().map(|&z| Vector3::new(x, y, z)).collect()
    }

    #[test]
    fn encoding_reads_pole_structure() {
        let bb = FrozenBackbone::new(BackboneSpec::default()).unwrap();
        let mut pts = pole(0.0, 0.0, [-1.5, -0.5, 0.7, 2.0]);
        pts.extend(pole(3.0, 0.0, [-1.5, 0.0, 1.0, 2.5]));
        let cloud = PointCloud::sensor(pts).unwrap();
        let e = bb.encodings(&cloud, None).unwrap();
        let close = |row: usize, want: [f64; 4]| {
            for (a, b) in e.row(row).iter().zip(want) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        };
        close(2, [2.2, 1.0, 2.2, 3.5]);
        close(4, [0.0, 1.5, 2.5, 4.0]);
    }

    #[test]
    fn global_feature_ignores_order_and_width_is_fixed() {
        let bb = FrozenBackbone::new(BackboneSpec::default()).unwrap();
        let mut pts = pole(0.0, 0.0, [0.0, 1.0, 2.0, 3.0]);
        pts.extend(pole(2.0, 1.0, [0.0, 1.3, 2.2, 3.9]));
        let a = bb.features(&PointCloud::sensor(pts.clone()).unwrap()).unwrap();
        pts.reverse();
        let b = bb.features(&PointCloud::sensor(pts).unwrap()).unwrap();
        assert_eq!(a.global, b.global);
        assert_eq!(a.dense.ncols(), 64);
        assert!(matches!(
            bb.features(&PointCloud::world(vec![Vector3::zeros()]).unwrap()),
            Err(Error::WrongFrame { .. })
        ));
    }
}
