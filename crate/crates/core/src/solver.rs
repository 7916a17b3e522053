//! Pose estimation from sensor/world correspondences: a Kabsch rigid fit used
//! as the minimal solver inside a seeded RANSAC loop.

use nalgebra::{Matrix3, Vector3};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Frame, PointCloud, Pose};

/// Ratio below which the second singular value of the cross-covariance marks
/// a collinear (rank-deficient) configuration.
const DEGENERACY_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub sensor: Vector3<f64>,
    pub world: Vector3<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(pairs: Vec<Correspondence>) -> Result<Self> {
        let finite = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        if let Some(i) = pairs.iter().position(|c| !finite(&c.sensor) || !finite(&c.world)) {
            return Err(Error::InvalidSpec(format!("correspondence {i} is not finite")));
        }
        Ok(Self { pairs })
    }

    pub fn from_points(sensor: &[Vector3<f64>], world: &[Vector3<f64>]) -> Result<Self> {
        if sensor.len() != world.len() {
            return Err(Error::LengthMismatch {
                left: sensor.len(),
                right: world.len(),
            });
        }
        Self::new(
            sensor
                .iter()
                .zip(world)
                .map(|(s, w)| Correspondence {
                    sensor: *s,
                    world: *w,
                })
                .collect(),
        )
    }

    pub fn pairs(&self) -> &[Correspondence] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub max_iterations: usize,
    /// Inlier distance in meters.
    pub inlier_threshold: f64,
    pub min_inlier_fraction: f64,
    pub seed: u64,
    pub refit_on_inliers: bool,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            max_iterations: 1024,
            inlier_threshold: 0.25,
            min_inlier_fraction: 0.1,
            seed: 0,
            refit_on_inliers: true,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("ransac max_iterations must be >= 1".into()));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::InvalidConfig("ransac inlier_threshold must be > 0".into()));
        }
        if !(self.min_inlier_fraction > 0.0 && self.min_inlier_fraction <= 1.0) {
            return Err(Error::InvalidConfig(
                "ransac min_inlier_fraction must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

fn fit_pairs<'a>(pairs: impl Iterator<Item = &'a Correspondence> + Clone) -> Result<Pose> {
    let mut n = 0usize;
    let mut cs = Vector3::zeros();
    let mut cw = Vector3::zeros();
    for c in pairs.clone() {
        cs += c.sensor;
        cw += c.world;
        n += 1;
    }
    if n < 3 {
        return Err(Error::TooFewSamples { have: n, need: 3 });
    }
    cs /= n as f64;
    cw /= n as f64;

    let mut h = Matrix3::zeros();
    for c in pairs {
        h += (c.sensor - cs) * (c.world - cw).transpose();
    }
    let svd = h.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] < DEGENERACY_RATIO * sv[0] {
        return Err(Error::DegenerateGeometry(format!(
            "cross-covariance singular values {:.3e}, {:.3e}, {:.3e}",
            sv[0], sv[1], sv[2]
        )));
    }
    let u = svd.u.expect("svd u");
    let v = svd.v_t.expect("svd v_t").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    Pose::new(r, cw - r * cs)
}

/// Least-squares rigid transform taking sensor points onto world points.
pub fn rigid_fit(corrs: &CorrespondenceSet) -> Result<Pose> {
    fit_pairs(corrs.pairs.iter())
}

fn residual(pose: &Pose, c: &Correspondence) -> f64 {
    (pose.apply(&c.sensor) - c.world).norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacOutcome {
    pub pose: Pose,
    pub inlier_mask: Vec<bool>,
    pub inlier_count: usize,
    /// Number of hypotheses that could not be fitted (degenerate samples).
    pub degenerate_samples: usize,
}

struct Scored {
    count: usize,
    mean: f64,
}

fn score(pose: &Pose, corrs: &CorrespondenceSet, threshold: f64) -> Scored {
    let mut count = 0;
    let mut sum = 0.0;
    for c in &corrs.pairs {
        let r = residual(pose, c);
        if r <= threshold {
            count += 1;
            sum += r;
        }
    }
    Scored {
        count,
        mean: if count > 0 { sum / count as f64 } else { f64::INFINITY },
    }
}

fn better(a: &Scored, b: &Scored) -> bool {
    a.count > b.count || (a.count == b.count && a.mean < b.mean)
}

/// Seeded RANSAC over 3-point rigid hypotheses.
///
/// The winner maximizes the inlier count, ties going to the lower mean inlier
/// residual. With `refit_on_inliers` the winner is re-estimated on its inlier
/// set; the refit is kept unless it loses inliers. The returned mask is always
/// evaluated under the returned pose.
pub fn ransac_pose(corrs: &CorrespondenceSet, params: &RansacParams) -> Result<RansacOutcome> {
    params.validate()?;
    let n = corrs.len();
    if n < 3 {
        return Err(Error::TooFewSamples { have: n, need: 3 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Pose, Scored)> = None;
    let mut degenerate = 0;
    for _ in 0..params.max_iterations {
        let sample = index::sample(&mut rng, n, 3);
        let picked = [sample.index(0), sample.index(1), sample.index(2)];
        let hypothesis = match fit_pairs(picked.iter().map(|&i| &corrs.pairs[i])) {
            Ok(p) => p,
            Err(_) => {
                degenerate += 1;
                continue;
            }
        };
        let s = score(&hypothesis, corrs, params.inlier_threshold);
        if best.as_ref().is_none_or(|(_, b)| better(&s, b)) {
            best = Some((hypothesis, s));
        }
    }
    let Some((mut pose, mut best_score)) = best else {
        return Err(Error::NoConsensus {
            fraction: 0.0,
            required: params.min_inlier_fraction,
        });
    };
    if params.refit_on_inliers && best_score.count >= 3 {
        let inliers = corrs
            .pairs
            .iter()
            .filter(|c| residual(&pose, c) <= params.inlier_threshold);
        if let Ok(refit) = fit_pairs(inliers) {
            let s = score(&refit, corrs, params.inlier_threshold);
            if s.count >= best_score.count {
                pose = refit;
                best_score = s;
            }
        }
    }
    let fraction = best_score.count as f64 / n as f64;
    if fraction < params.min_inlier_fraction {
        return Err(Error::NoConsensus {
            fraction,
            required: params.min_inlier_fraction,
        });
    }
    let inlier_mask: Vec<bool> = corrs
        .pairs
        .iter()
        .map(|c| residual(&pose, c) <= params.inlier_threshold)
        .collect();
    Ok(RansacOutcome {
        pose,
        inlier_count: inlier_mask.iter().filter(|m| **m).count(),
        inlier_mask,
        degenerate_samples: degenerate,
    })
}

/// RANSAC result plus residual statistics over the inliers.
#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub pose: Pose,
    pub inlier_mask: Vec<bool>,
    pub inlier_count: usize,
    pub mean_inlier_residual: f64,
    pub median_inlier_residual: f64,
}

/// Estimates the sensor pose from per-point world-coordinate predictions.
pub fn localize(
    predicted_world: &PointCloud,
    sensor_points: &PointCloud,
    params: &RansacParams,
) -> Result<Localization> {
    if sensor_points.frame() != Frame::Sensor {
        return Err(Error::WrongFrame {
            expected: Frame::Sensor,
            found: sensor_points.frame(),
        });
    }
    if predicted_world.frame() != Frame::World {
        return Err(Error::WrongFrame {
            expected: Frame::World,
            found: predicted_world.frame(),
        });
    }
    let corrs = CorrespondenceSet::from_points(sensor_points.points(), predicted_world.points())?;
    let outcome = ransac_pose(&corrs, params)?;
    let mut residuals: Vec<f64> = corrs
        .pairs
        .iter()
        .zip(&outcome.inlier_mask)
        .filter(|(_, m)| **m)
        .map(|(c, _)| residual(&outcome.pose, c))
        .collect();
    let mean = residuals.iter().sum::<f64>() / residuals.len().max(1) as f64;
    let median = crate::stats::median(&mut residuals).unwrap_or(0.0);
    Ok(Localization {
        pose: outcome.pose,
        inlier_mask: outcome.inlier_mask,
        inlier_count: outcome.inlier_count,
        mean_inlier_residual: mean,
        median_inlier_residual: median,
    })
}
