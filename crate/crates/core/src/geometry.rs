//! Rigid camera poses, pinhole projection and the analytic measurement
//! Jacobians.
//!
//! Poses are world-to-camera transforms. Tangent vectors are ordered
//! `[translation; rotation]` and act by left multiplication, so a pose `T`
//! perturbed by `ξ` is `exp(ξ) · T`.

use nalgebra::{Matrix2x3, Matrix2x6, Matrix3, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum tolerated drift of `RᵀR` from identity before re-orthogonalizing.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// Pinhole camera with an optional rectified horizontal stereo baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
    /// Stereo baseline in meters; zero for a monocular camera.
    pub baseline: f64,
    pub min_depth: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            fx: 460.0,
            fy: 460.0,
            cx: 320.0,
            cy: 240.0,
            width: 640.0,
            height: 480.0,
            baseline: 0.0,
            min_depth: 0.1,
        }
    }
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: f64, height: f64) -> Result<Self> {
        let cam = CameraModel { fx, fy, cx, cy, width, height, ..CameraModel::default() };
        cam.validate()?;
        Ok(cam)
    }

    pub fn with_baseline(mut self, baseline: f64) -> Result<Self> {
        self.baseline = baseline;
        self.validate()?;
        Ok(self)
    }

    pub fn with_min_depth(mut self, min_depth: f64) -> Result<Self> {
        self.min_depth = min_depth;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.fx, self.fy, self.cx, self.cy, self.width, self.height, self.baseline, self.min_depth]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite
            || self.fx <= 0.0
            || self.fy <= 0.0
            || self.width <= 0.0
            || self.height <= 0.0
            || self.baseline < 0.0
            || self.min_depth <= 0.0
        {
            return Err(Error::InvalidInput(format!("invalid camera model {self:?}")));
        }
        Ok(())
    }

    pub fn is_stereo(&self) -> bool {
        self.baseline > 0.0
    }

    /// Whether a pixel lies inside `[0, width) × [0, height)`.
    pub fn in_image(&self, px: &Vector2<f64>) -> bool {
        px.x >= 0.0 && px.x < self.width && px.y >= 0.0 && px.y < self.height
    }

    /// Back-projects a pixel at the given depth into the camera frame.
    pub fn back_project(&self, px: &Vector2<f64>, depth: f64) -> Vector3<f64> {
        Vector3::new((px.x - self.cx) / self.fx * depth, (px.y - self.cy) / self.fy * depth, depth)
    }
}

/// Which image of a rectified stereo pair a measurement lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// Six-dimensional tangent vector `[ρ; φ]`, translation part first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist(pub Vector6<f64>);

impl Twist {
    pub fn new(translation: Vector3<f64>, rotation: Vector3<f64>) -> Self {
        Twist(Vector6::new(translation.x, translation.y, translation.z, rotation.x, rotation.y, rotation.z))
    }

    pub fn zero() -> Self {
        Twist(Vector6::zeros())
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn rotation(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist(-self.0)
    }
}

/// Skew-symmetric matrix with `hat(a) b = a × b`.
pub fn hat(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Coefficients `(sinθ/θ, (1−cosθ)/θ², (θ−sinθ)/θ³)` with series fallbacks.
fn so3_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < 1e-4 {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        (
            1.0 - t2 / 6.0 + t4 / 120.0,
            0.5 - t2 / 24.0 + t4 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        (s / theta, (1.0 - c) / (theta * theta), (theta - s) / (theta * theta * theta))
    }
}

/// Rigid world-to-camera transform `p_cam = R p_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Builds a pose, rejecting rotations that are not orthonormal with unit
    /// determinant to within `1e-9`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite pose".into()));
        }
        let drift = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        let det = rotation.determinant();
        if drift >= ORTHONORMAL_TOLERANCE || (det - 1.0).abs() > ORTHONORMAL_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "rotation is not orthonormal (drift {drift:e}, det {det})"
            )));
        }
        Ok(Pose { rotation, translation })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Exponential map of a twist.
    pub fn exp(xi: &Twist) -> Self {
        let rho = xi.translation();
        let phi = xi.rotation();
        let theta = phi.norm();
        let (a, b, c) = so3_coefficients(theta);
        let w = hat(&phi);
        let w2 = w * w;
        let rotation = Matrix3::identity() + w * a + w2 * b;
        let v = Matrix3::identity() + w * b + w2 * c;
        Pose { rotation, translation: v * rho }.normalized()
    }

    /// Logarithm map, the inverse of [`Pose::exp`] for rotation angles below π.
    pub fn log(&self) -> Twist {
        let r = &self.rotation;
        let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let axis_sin = vee(&(r - r.transpose())) * 0.5;
        let sin_theta = axis_sin.norm();
        let theta = sin_theta.atan2(cos_theta);
        let phi = if theta < 1e-4 {
            // sinθ/θ ≈ 1 − θ²/6
            axis_sin / (1.0 - theta * theta / 6.0)
        } else if std::f64::consts::PI - theta < 1e-6 {
            // near π the antisymmetric part vanishes; read the axis from R + I
            let b = (r + Matrix3::identity()) * 0.5;
            let (col, _) = (0..3)
                .map(|i| (i, b[(i, i)]))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            let axis = b.column(col).into_owned().normalize();
            let axis = if axis.dot(&axis_sin) < 0.0 { -axis } else { axis };
            axis * theta
        } else {
            axis_sin * (theta / sin_theta)
        };
        let (a, b, _) = so3_coefficients(theta);
        let w = hat(&phi);
        let v_inv = if theta < 1e-4 {
            Matrix3::identity() - w * 0.5 + w * w / 12.0
        } else {
            Matrix3::identity() - w * 0.5 + w * w * ((1.0 - a / (2.0 * b)) / (theta * theta))
        };
        Twist::new(v_inv * self.translation, phi)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
        .normalized()
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Left perturbation `exp(ξ) · self`.
    pub fn retract(&self, xi: &Twist) -> Pose {
        Pose::exp(xi).compose(self)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn transform_point(&self, p_world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p_world + self.translation
    }

    /// Re-orthogonalizes the rotation by polar decomposition when it has
    /// drifted past the tolerance.
    pub fn normalized(self) -> Pose {
        let drift = (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm();
        if drift < ORTHONORMAL_TOLERANCE {
            return self;
        }
        let svd = self.rotation.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut rotation = u * v_t;
        if rotation.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            rotation = u * v_t;
        }
        Pose { rotation, translation: self.translation }
    }
}

fn projection_jacobian(cam: &CameraModel, pc: &Vector3<f64>, x_offset: f64) -> Matrix2x3<f64> {
    let inv_z = 1.0 / pc.z;
    let x = pc.x - x_offset;
    Matrix2x3::new(
        cam.fx * inv_z,
        0.0,
        -cam.fx * x * inv_z * inv_z,
        0.0,
        cam.fy * inv_z,
        -cam.fy * pc.y * inv_z * inv_z,
    )
}

fn camera_point(cam: &CameraModel, pose: &Pose, p_world: &Vector3<f64>) -> Result<Vector3<f64>> {
    let pc = pose.transform_point(p_world);
    if !(pc.z >= cam.min_depth) {
        return Err(Error::BehindCamera { depth: pc.z, min_depth: cam.min_depth });
    }
    Ok(pc)
}

fn side_offset(cam: &CameraModel, side: Side) -> f64 {
    match side {
        Side::Left => 0.0,
        Side::Right => cam.baseline,
    }
}

/// Pixel coordinates of a world point in the left (reference) image.
pub fn project_world(cam: &CameraModel, pose: &Pose, p_world: &Vector3<f64>) -> Result<Vector2<f64>> {
    project_side(cam, pose, p_world, Side::Left)
}

/// Projection into either image of a rectified stereo pair. The right camera
/// sits `baseline` meters along the left camera's +x axis, so
/// `u_r = u_l − fx·baseline/Z`.
pub fn project_side(cam: &CameraModel, pose: &Pose, p_world: &Vector3<f64>, side: Side) -> Result<Vector2<f64>> {
    let pc = camera_point(cam, pose, p_world)?;
    let x = pc.x - side_offset(cam, side);
    Ok(Vector2::new(cam.fx * x / pc.z + cam.cx, cam.fy * pc.y / pc.z + cam.cy))
}

/// Jacobians of a projection with respect to the pose tangent and the world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementJacobians {
    /// ∂pixel/∂ξ for the left perturbation `exp(ξ)·T`.
    pub h_x: Matrix2x6<f64>,
    /// ∂pixel/∂p_world.
    pub h_p: Matrix2x3<f64>,
}

pub fn measurement_jacobians(cam: &CameraModel, pose: &Pose, p_world: &Vector3<f64>) -> Result<MeasurementJacobians> {
    measurement_jacobians_side(cam, pose, p_world, Side::Left)
}

pub fn measurement_jacobians_side(
    cam: &CameraModel,
    pose: &Pose,
    p_world: &Vector3<f64>,
    side: Side,
) -> Result<MeasurementJacobians> {
    let pc = camera_point(cam, pose, p_world)?;
    let j = projection_jacobian(cam, &pc, side_offset(cam, side));
    // d(exp(ξ)·pc)/dξ at ξ = 0 is [I | −hat(pc)]
    let mut h_x = Matrix2x6::zeros();
    h_x.fixed_view_mut::<2, 3>(0, 0).copy_from(&j);
    h_x.fixed_view_mut::<2, 3>(0, 3).copy_from(&(-j * hat(&pc)));
    let h_p = j * pose.rotation;
    Ok(MeasurementJacobians { h_x, h_p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_camera() -> CameraModel {
        CameraModel::new(1.0, 1.0, 0.0, 0.0, 10.0, 10.0).unwrap()
    }

    fn random_twist(rng: &mut ChaCha8Rng, scale: f64) -> Twist {
        Twist(Vector6::from_fn(|_, _| rng.random_range(-scale..scale)))
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(Pose::exp(&Twist::zero()), Pose::identity());
    }

    #[test]
    fn exp_of_pure_translation() {
        let p = Pose::exp(&Twist::new(Vector3::new(1.0, 2.0, 3.0), Vector3::zeros()));
        assert_eq!(*p.rotation(), Matrix3::identity());
        assert_eq!(*p.translation(), Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn exp_then_inverse_exp_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let mut xi = random_twist(&mut rng, 1.0);
            if xi.0.norm() > 1.0 {
                xi.0 /= xi.0.norm();
            }
            let id = Pose::exp(&xi).compose(&Pose::exp(&-xi));
            assert!((id.rotation() - Matrix3::identity()).norm() < 1e-12);
            assert!(id.translation().norm() < 1e-12);
        }
    }

    #[test]
    fn log_near_pi() {
        let axis = Vector3::new(1.0, 2.0, -0.5).normalize();
        let phi = axis * (std::f64::consts::PI - 1e-8);
        let xi = Twist::new(Vector3::new(0.3, -0.2, 0.1), phi);
        let back = Pose::exp(&xi).log();
        assert!((back.0 - xi.0).norm() < 1e-6);
    }

    #[test]
    fn invalid_rotation_rejected() {
        let r = Matrix3::identity() * 1.001;
        assert!(Pose::new(r, Vector3::zeros()).is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Pose::new(reflect, Vector3::zeros()).is_err());
    }

    #[test]
    fn normalization_restores_orthonormality() {
        let xi = Twist::new(Vector3::zeros(), Vector3::new(0.3, 0.2, 0.1));
        let p = Pose::exp(&xi);
        let noisy = Pose { rotation: p.rotation() + Matrix3::from_element(1e-6), translation: Vector3::zeros() };
        let fixed = noisy.normalized();
        assert!((fixed.rotation().transpose() * fixed.rotation() - Matrix3::identity()).norm() < 1e-12);
        assert!((fixed.rotation() - p.rotation()).norm() < 1e-5);
    }

    #[test]
    fn projection_examples() {
        let px = project_world(&unit_camera(), &Pose::identity(), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(px, Vector2::new(0.0, 0.0));
        let cam = CameraModel::new(100.0, 100.0, 0.0, 0.0, 640.0, 480.0).unwrap();
        let px = project_world(&cam, &Pose::identity(), &Vector3::new(1.0, 2.0, 4.0)).unwrap();
        assert_eq!(px, Vector2::new(25.0, 50.0));
    }

    #[test]
    fn projection_depth_cutoff() {
        let cam = unit_camera();
        let err = project_world(&cam, &Pose::identity(), &Vector3::new(0.0, 0.0, cam.min_depth / 2.0));
        assert!(matches!(err, Err(Error::BehindCamera { .. })));
        let err = measurement_jacobians(&cam, &Pose::identity(), &Vector3::new(0.0, 0.0, -1.0));
        assert!(matches!(err, Err(Error::BehindCamera { .. })));
    }

    #[test]
    fn point_jacobian_on_axis() {
        let j = measurement_jacobians(&unit_camera(), &Pose::identity(), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(j.h_p, Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn right_projection_shifts_by_disparity() {
        let cam = CameraModel::default().with_baseline(0.12).unwrap();
        let p = Vector3::new(0.0, 0.0, 3.0);
        let l = project_side(&cam, &Pose::identity(), &p, Side::Left).unwrap();
        let r = project_side(&cam, &Pose::identity(), &p, Side::Right).unwrap();
        assert!((r.x - (l.x - cam.fx * cam.baseline / 3.0)).abs() < 1e-12);
        assert_eq!(r.y, l.y);
    }

    #[test]
    fn projection_invariant_under_exp_log_rewrite() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cam = CameraModel::default();
        for _ in 0..100 {
            let pose = Pose::exp(&random_twist(&mut rng, 0.5));
            let rewritten = Pose::exp(&pose.log());
            let p = pose.inverse().transform_point(&Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(2.0..8.0),
            ));
            let a = project_world(&cam, &pose, &p).unwrap();
            let b = project_world(&cam, &rewritten, &p).unwrap();
            assert!((a - b).norm() < 1e-9);
        }
    }
}
