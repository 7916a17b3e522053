//! Rigid poses, tagged point clouds and localization error metrics.
//!
//! Rotations are kept as plain 3x3 matrices because both the rigid solver and
//! the geodesic metric work on matrices directly. Quaternions only appear at
//! the file boundary (see [`crate::formats`]).

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Orthonormality tolerance for rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// A rigid transform mapping sensor-frame points into the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    /// Builds a pose, rejecting rotations that are not proper and orthonormal.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("non-finite entry".into()));
        }
        let residual = orthonormality_residual(&rotation);
        if residual > ROTATION_TOLERANCE {
            return Err(Error::InvalidPose(format!(
                "rotation is not orthonormal (residual {residual:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidPose(format!("rotation determinant is {det}")));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation about +z by `yaw` radians, followed by `translation`.
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        let (s, c) = yaw.sin_cos();
        Self {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation,
        }
    }

    /// Z-Y-X (yaw, pitch, roll) Euler angles in radians.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64, translation: Vector3<f64>) -> Self {
        let q = UnitQuaternion::from_euler_angles(roll, pitch, yaw);
        Self {
            rotation: q.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    /// Builds a pose from a (w, x, y, z) quaternion, normalizing it first.
    pub fn from_quaternion(q: [f64; 4], translation: Vector3<f64>) -> Result<Self> {
        let quat = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::InvalidPose(format!("quaternion norm {norm}")));
        }
        let unit = UnitQuaternion::from_quaternion(quat);
        Self::new(project_to_rotation(&unit.to_rotation_matrix().into_inner()), translation)
    }

    /// Rotation as a (w, x, y, z) unit quaternion with non-negative w.
    pub fn quaternion(&self) -> [f64; 4] {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let (w, x, y, z) = (q.w, q.i, q.j, q.k);
        if w < 0.0 {
            [-w, -x, -y, -z]
        } else {
            [w, x, y, z]
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_inverse(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

/// Max elementwise deviation of `RᵀR` from the identity.
pub fn orthonormality_residual(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

/// Nearest rotation matrix in the Frobenius sense (polar decomposition).
pub fn project_to_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let flip = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        r = u * flip * v_t;
    }
    r
}

/// `a ∘ b`: applies `b` first, then `a`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    let mut rotation = a.rotation * b.rotation;
    if orthonormality_residual(&rotation) > ROTATION_TOLERANCE {
        rotation = project_to_rotation(&rotation);
    }
    Pose {
        rotation,
        translation: a.rotation * b.translation + a.translation,
    }
}

pub fn invert(p: &Pose) -> Pose {
    p.inverse()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    Sensor,
    World,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>, frame: Frame) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidSpec(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points, frame })
    }

    pub fn sensor(points: Vec<Vector3<f64>>) -> Result<Self> {
        Self::new(points, Frame::Sensor)
    }

    pub fn world(points: Vec<Vector3<f64>>) -> Result<Self> {
        Self::new(points, Frame::World)
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vector3<f64>> {
        self.points
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn expect_frame(&self, expected: Frame) -> Result<()> {
        if self.frame != expected {
            return Err(Error::WrongFrame {
                expected,
                found: self.frame,
            });
        }
        Ok(())
    }
}

/// Maps a sensor-frame cloud into the world frame: `R·p + t` for each point.
pub fn transform(pose: &Pose, cloud: &PointCloud) -> Result<PointCloud> {
    cloud.expect_frame(Frame::Sensor)?;
    Ok(PointCloud {
        points: cloud.points.iter().map(|p| pose.apply(p)).collect(),
        frame: Frame::World,
    })
}

/// Maps a world-frame cloud back into the sensor frame of `pose`.
pub fn untransform(pose: &Pose, cloud: &PointCloud) -> Result<PointCloud> {
    cloud.expect_frame(Frame::World)?;
    Ok(PointCloud {
        points: cloud.points.iter().map(|p| pose.apply_inverse(p)).collect(),
        frame: Frame::Sensor,
    })
}

/// Position error in meters and orientation error in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseError {
    pub position: f64,
    pub orientation_deg: f64,
}

/// Geodesic angle (radians) of the relative rotation `aᵀb`.
pub fn rotation_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let r = a.transpose() * b;
    let cos = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    // atan2 keeps full precision near 0 and 180 degrees, where acos does not.
    let sin = 0.5
        * Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)])
            .norm();
    sin.atan2(cos)
}

pub fn pose_error(pred: &Pose, gt: &Pose) -> PoseError {
    PoseError {
        position: (pred.translation - gt.translation).norm(),
        orientation_deg: rotation_angle(&pred.rotation, &gt.rotation).to_degrees(),
    }
}
