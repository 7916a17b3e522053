//! Position-only Kalman filter fusing drifting odometry with leaf-center
//! observations from the hierarchical classifier.
//!
//! The transition is the identity with the odometry translation as additive
//! control; the measurement noise is `I·(1−c)·scale` for confidence `c`.

use log::debug;
use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scg::{confidence, ClusterModel, HeadPrediction};

/// Condition number above which the innovation covariance counts as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
}

impl KalmanState {
    pub fn new(mean: Vector3<f64>, cov: Matrix3<f64>) -> Result<Self> {
        let state = Self { mean, cov };
        if !mean.iter().all(|v| v.is_finite()) || !is_psd(&cov, 1e-9) {
            return Err(Error::InvalidConfig("state covariance must be symmetric PSD".into()));
        }
        Ok(state)
    }

    pub fn isotropic(mean: Vector3<f64>, variance: f64) -> Result<Self> {
        Self::new(mean, Matrix3::identity() * variance)
    }
}

/// Symmetric within `tol` and no eigenvalue below `-tol`.
pub fn is_psd(m: &Matrix3<f64>, tol: f64) -> bool {
    if (m - m.transpose()).abs().max() > tol || !m.iter().all(|v| v.is_finite()) {
        return false;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min() >= -tol
}

fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryStep {
    pub delta: Vector3<f64>,
    pub process_noise: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub z: Vector3<f64>,
    pub confidence: f64,
}

impl Observation {
    pub fn new(z: Vector3<f64>, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidConfig(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self { z, confidence })
    }

    /// Leaf center of the predicted label, with the product of the two levels' top probabilities.
    pub fn from_prediction(model: &ClusterModel, pred: &HeadPrediction) -> Result<Self> {
        if model.dim() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "cluster centers have {} dimensions, observations need 3",
                model.dim()
            )));
        }
        let c = model.leaf_center(pred.label);
        Self::new(Vector3::new(c[0], c[1], c[2]), confidence(&pred.p1, &pred.p2))
    }

    pub fn noise(&self, scale: f64) -> Matrix3<f64> {
        Matrix3::identity() * ((1.0 - self.confidence) * scale)
    }
}

pub fn kf_predict(state: &KalmanState, step: &OdometryStep) -> KalmanState {
    KalmanState {
        mean: state.mean + step.delta,
        cov: state.cov + step.process_noise,
    }
}

/// Measurement update with gain `K = P̂(V + P̂)⁻¹`.
///
/// Evaluated through `I − K = V(V + P̂)⁻¹` so that `V = 0` lands exactly on
/// the measurement with zero covariance.
pub fn kf_update(prior: &KalmanState, obs: &Observation, noise_scale: f64) -> Result<KalmanState> {
    let v = obs.noise(noise_scale);
    let s = symmetrize(&(v + prior.cov));
    let eig = SymmetricEigen::new(s).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularInnovation(condition));
    }
    let inv = s.try_inverse().ok_or(Error::SingularInnovation(condition))?;
    let residual_gain = v * inv;
    let mean = obs.z + residual_gain * (prior.mean - obs.z);
    let cov = symmetrize(&(residual_gain * prior.cov));
    Ok(KalmanState { mean, cov })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSpec {
    /// Error added per meter travelled, as a vector in world coordinates.
    pub bias_per_meter: Vector3<f64>,
    /// Standard deviation of the per-step Gaussian noise on each axis (m).
    pub step_noise: f64,
    /// Process noise `σ_w² · ‖delta‖ · I`, in meters per √meter.
    pub process_sigma: f64,
}

impl Default for DriftSpec {
    fn default() -> Self {
        Self {
            bias_per_meter: Vector3::new(0.05, 0.03, 0.0),
            step_noise: 0.02,
            process_sigma: 0.1,
        }
    }
}

impl DriftSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_noise >= 0.0 && self.process_sigma >= 0.0) || !self.bias_per_meter.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("drift noise levels must be non-negative".into()));
        }
        Ok(())
    }
}

/// Relative motion between consecutive ground-truth positions with bias and noise injected.
pub fn simulate_odometry(gt: &[Vector3<f64>], drift: &DriftSpec, seed: u64) -> Result<Vec<OdometryStep>> {
    drift.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, drift.step_noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(gt
        .windows(2)
        .map(|w| {
            let true_delta = w[1] - w[0];
            let jitter = Vector3::from_fn(|_, _| noise.sample(&mut rng));
            let delta = true_delta + drift.bias_per_meter * true_delta.norm() + jitter;
            OdometryStep {
                delta,
                process_noise: Matrix3::identity() * (drift.process_sigma.powi(2) * delta.norm()),
            }
        })
        .collect())
}

/// Dead-reckoned positions starting at `start`.
pub fn integrate(start: Vector3<f64>, steps: &[OdometryStep]) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(steps.len() + 1);
    out.push(start);
    let mut p = start;
    for s in steps {
        p += s.delta;
        out.push(p);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Multiplier on the dimensionless `I·(1−c)` measurement noise (m²).
    pub noise_scale: f64,
    /// Observations with lower confidence are skipped.
    pub confidence_floor: f64,
    /// Initial covariance `P₀ = variance · I` around the true start.
    pub initial_variance: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            noise_scale: 1.0,
            confidence_floor: 0.0,
            initial_variance: 0.01,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_scale >= 0.0 && self.initial_variance >= 0.0 && (0.0..=1.0).contains(&self.confidence_floor)) {
            return Err(Error::InvalidConfig(
                "fusion noise scale and initial variance must be non-negative, floor in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionReport {
    pub raw_mean_error: f64,
    pub fused_mean_error: f64,
    pub raw_terminal_drift: f64,
    pub updates: usize,
}

impl FusionReport {
    /// Relative reduction of the mean position error, in percent.
    pub fn improvement_percent(&self) -> f64 {
        if self.raw_mean_error > 0.0 {
            100.0 * (1.0 - self.fused_mean_error / self.raw_mean_error)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionRun {
    pub fused: Vec<Vector3<f64>>,
    pub raw: Vec<Vector3<f64>>,
    pub states: Vec<KalmanState>,
    pub report: FusionReport,
}

fn mean_error(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).sum::<f64>() / a.len() as f64
}

/// Runs the filter along `gt`: predict with `odometry[i-1]`, then update with
/// `observations[i]` when present and confident enough.
pub fn run_fusion(
    gt: &[Vector3<f64>],
    odometry: &[OdometryStep],
    observations: &[Option<Observation>],
    config: &FusionConfig,
) -> Result<FusionRun> {
    config.validate()?;
    if gt.is_empty() {
        return Err(Error::TooFewSamples { have: 0, need: 1 });
    }
    if odometry.len() + 1 != gt.len() {
        return Err(Error::LengthMismatch {
            left: odometry.len() + 1,
            right: gt.len(),
        });
    }
    if observations.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: observations.len(),
            right: gt.len(),
        });
    }
    let raw = integrate(gt[0], odometry);
    let mut state = KalmanState::isotropic(gt[0], config.initial_variance)?;
    let mut states = Vec::with_capacity(gt.len());
    let mut updates = 0;
    for (i, obs) in observations.iter().enumerate() {
        if i > 0 {
            state = kf_predict(&state, &odometry[i - 1]);
        }
        if let Some(obs) = obs.filter(|o| o.confidence >= config.confidence_floor) {
            state = kf_update(&state, &obs, config.noise_scale)?;
            updates += 1;
        }
        states.push(state);
    }
    let fused: Vec<Vector3<f64>> = states.iter().map(|s| s.mean).collect();
    let report = FusionReport {
        raw_mean_error: mean_error(&raw, gt),
        fused_mean_error: mean_error(&fused, gt),
        raw_terminal_drift: (raw[raw.len() - 1] - gt[gt.len() - 1]).norm(),
        updates,
    };
    debug!(
        "fusion: raw {:.3} m, fused {:.3} m, {} updates",
        report.raw_mean_error, report.fused_mean_error, updates
    );
    Ok(FusionRun {
        fused,
        raw,
        states,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &Matrix3<f64>, b: &Matrix3<f64>) -> bool {
        (a - b).abs().max() < 1e-12
    }

    #[test]
    fn predict_adds_motion_and_noise() {
        let s = KalmanState::isotropic(Vector3::zeros(), 1.0).unwrap();
        let p = kf_predict(
            &s,
            &OdometryStep {
                delta: Vector3::new(1.0, 0.0, 0.0),
                process_noise: Matrix3::identity(),
            },
        );
        assert_eq!(p.mean, Vector3::new(1.0, 0.0, 0.0));
        assert!(close(&p.cov, &(Matrix3::identity() * 2.0)));
        let still = kf_predict(
            &s,
            &OdometryStep {
                delta: Vector3::zeros(),
                process_noise: Matrix3::zeros(),
            },
        );
        assert_eq!(still, s);
    }

    #[test]
    fn update_reference_gains() {
        let prior = KalmanState::isotropic(Vector3::zeros(), 1.0).unwrap();
        let z = Vector3::new(2.0, -4.0, 1.0);
        let half = kf_update(&prior, &Observation::new(z, 0.0).unwrap(), 1.0).unwrap();
        assert!((half.mean - z * 0.5).norm() < 1e-12);
        let exact = kf_update(&prior, &Observation::new(z, 1.0).unwrap(), 1.0).unwrap();
        assert_eq!(exact.mean, z);
        assert!(close(&exact.cov, &Matrix3::zeros()));
        // V = 0.25 I, so K = 1 / 1.25
        let k = kf_update(&prior, &Observation::new(z, 0.75).unwrap(), 1.0).unwrap();
        assert!((k.mean - z * 0.8).norm() < 1e-12);
    }

    #[test]
    fn singular_innovation_is_reported() {
        let prior = KalmanState::new(Vector3::zeros(), Matrix3::zeros()).unwrap();
        let obs = Observation::new(Vector3::new(1.0, 0.0, 0.0), 1.0).unwrap();
        assert!(matches!(kf_update(&prior, &obs, 1.0), Err(Error::SingularInnovation(_))));
        assert!(Observation::new(Vector3::zeros(), 1.5).is_err());
    }

    #[test]
    fn drift_free_odometry_reproduces_truth() {
        let gt: Vec<Vector3<f64>> = (0..20).map(|i| Vector3::new(i as f64, (i as f64).sin(), 0.0)).collect();
        let spec = DriftSpec {
            bias_per_meter: Vector3::zeros(),
            step_noise: 0.0,
            process_sigma: 0.1,
        };
        let raw = integrate(gt[0], &simulate_odometry(&gt, &spec, 1).unwrap());
        for (a, b) in raw.iter().zip(&gt) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn bias_accumulates_linearly_with_distance() {
        // 1000 steps of 1 m along x with 0.05 m/m bias
        let gt: Vec<Vector3<f64>> = (0..=1000).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let spec = DriftSpec {
            bias_per_meter: Vector3::new(0.0, 0.05, 0.0),
            step_noise: 0.0,
            process_sigma: 0.1,
        };
        let steps = simulate_odometry(&gt, &spec, 0).unwrap();
        let raw = integrate(gt[0], &steps);
        assert!(((raw[1000] - gt[1000]).norm() - 50.0).abs() < 1e-9);
        let noisy = DriftSpec { step_noise: 0.05, ..spec };
        assert_eq!(simulate_odometry(&gt, &noisy, 4).unwrap(), simulate_odometry(&gt, &noisy, 4).unwrap());
    }

    #[test]
    fn fusion_edge_cases() {
        let gt: Vec<Vector3<f64>> = (0..30).map(|i| Vector3::new(i as f64, 0.0, 1.0)).collect();
        let steps = simulate_odometry(&gt, &DriftSpec::default(), 2).unwrap();
        let none = vec![None; gt.len()];
        let run = run_fusion(&gt, &steps, &none, &FusionConfig::default()).unwrap();
        assert_eq!(run.fused, run.raw);
        assert_eq!(run.report.updates, 0);
        let perfect: Vec<Option<Observation>> = gt.iter().map(|&p| Some(Observation::new(p, 1.0).unwrap())).collect();
        let run = run_fusion(&gt, &steps, &perfect, &FusionConfig::default()).unwrap();
        assert_eq!(run.report.fused_mean_error, 0.0);
        assert!(run_fusion(&gt, &steps[1..], &none, &FusionConfig::default()).is_err());
    }

    fn psd_matrix() -> impl Strategy<Value = Matrix3<f64>> {
        prop::array::uniform9(-2.0f64..2.0).prop_map(|a| {
            let m = Matrix3::from_row_slice(&a);
            m * m.transpose() + Matrix3::identity() * 1e-3
        })
    }

    proptest! {
        #[test]
        fn update_shrinks_covariance(
            cov in psd_matrix(),
            c in 0.0f64..0.999,
            z in prop::array::uniform3(-10.0f64..10.0),
        ) {
            let prior = KalmanState::new(Vector3::zeros(), cov).unwrap();
            let post = kf_update(&prior, &Observation::new(Vector3::from(z), c).unwrap(), 1.0).unwrap();
            prop_assert!(is_psd(&post.cov, 1e-9));
            prop_assert!(is_psd(&(prior.cov - post.cov), 1e-9));
        }

        #[test]
        fn isotropic_gain_is_bounded(p in 1e-3f64..1e3, c in 0.0f64..=1.0) {
            let prior = KalmanState::isotropic(Vector3::zeros(), p).unwrap();
            let post = kf_update(&prior, &Observation::new(Vector3::new(1.0, 0.0, 0.0), c).unwrap(), 1.0).unwrap();
            let k = post.mean.x;
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&k));
            prop_assert!((k - p / (1.0 - c + p)).abs() < 1e-9);
        }

        #[test]
        fn confident_update_is_idempotent(cov in psd_matrix(), z in prop::array::uniform3(-10.0f64..10.0)) {
            let obs = Observation::new(Vector3::from(z), 1.0).unwrap();
            let once = kf_update(&KalmanState::new(Vector3::zeros(), cov).unwrap(), &obs, 1.0).unwrap();
            let again = kf_update(&KalmanState { cov: cov * 0.5, ..once }, &obs, 1.0).unwrap();
            prop_assert!((once.mean - obs.z).norm() < 1e-9);
            prop_assert!((again.mean - once.mean).norm() < 1e-9);
        }
    }
}
