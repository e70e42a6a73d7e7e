use gfmatch::geometry::{
    hat, measurement_jacobians_side, project_side, project_world, CameraModel, Pose, Side, Twist,
};
use nalgebra::{Matrix2x3, Matrix2x6, Matrix3, Rotation3, Vector3, Vector6};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-r..r).prop_map(Vector3::from)
}

fn twist(rho: f64, phi: f64) -> impl Strategy<Value = Twist> {
    (vec3(rho), vec3(phi)).prop_map(|(r, p)| Twist::new(r, p))
}

/// `Σ hat(φ)^n / (n+1)!`, summed until the terms vanish.
fn left_jacobian_series(phi: &Vector3<f64>) -> Matrix3<f64> {
    let w = hat(phi);
    let mut term = Matrix3::identity();
    let mut sum = Matrix3::identity();
    for n in 1..40 {
        term = term * w / (n as f64 + 1.0);
        sum += term;
    }
    sum
}

fn stereo_camera() -> CameraModel {
    CameraModel::default().with_baseline(0.12).unwrap()
}

/// Camera-frame point with depth in [1, 20] expressed in the world frame.
fn world_point(pose: &Pose, x: f64, y: f64, z: f64) -> Vector3<f64> {
    pose.inverse().transform_point(&Vector3::new(x * z, y * z, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn exp_rotation_matches_axis_angle(xi in twist(3.0, 3.0)) {
        let oracle = Rotation3::new(xi.rotation());
        let pose = Pose::exp(&xi);
        prop_assert!((pose.rotation() - oracle.matrix()).norm() < 1e-12);
    }

    #[test]
    fn exp_translation_matches_series(xi in twist(3.0, 3.0)) {
        let expected = left_jacobian_series(&xi.rotation()) * xi.translation();
        prop_assert!((Pose::exp(&xi).translation() - expected).norm() < 1e-11);
    }

    #[test]
    fn log_inverts_exp(xi in twist(5.0, 1.8)) {
        let back = Pose::exp(&xi).log();
        prop_assert!((back.0 - xi.0).norm() < 1e-9, "{:?} vs {:?}", back, xi);
    }

    #[test]
    fn exp_of_negation_is_inverse(xi in twist(0.577, 0.577)) {
        let round = Pose::exp(&xi).compose(&Pose::exp(&-xi));
        prop_assert!((round.rotation() - Matrix3::identity()).norm() < 1e-12);
        prop_assert!(round.translation().norm() < 1e-12);
    }

    #[test]
    fn projection_survives_log_exp_round_trip(
        xi in twist(2.0, 2.5),
        (x, y, z) in (-0.5..0.5f64, -0.4..0.4f64, 1.0..20.0f64),
    ) {
        let cam = CameraModel::default();
        let pose = Pose::exp(&xi);
        let p = world_point(&pose, x, y, z);
        let rebuilt = Pose::exp(&pose.log());
        let a = project_world(&cam, &pose, &p).unwrap();
        let b = project_world(&cam, &rebuilt, &p).unwrap();
        prop_assert!((a - b).norm() < 1e-8);
    }

    #[test]
    fn right_image_shifts_by_disparity(
        xi in twist(2.0, 1.0),
        (x, y, z) in (-0.5..0.5f64, -0.4..0.4f64, 1.0..20.0f64),
    ) {
        let cam = stereo_camera();
        let pose = Pose::exp(&xi);
        let p = world_point(&pose, x, y, z);
        let l = project_side(&cam, &pose, &p, Side::Left).unwrap();
        let r = project_side(&cam, &pose, &p, Side::Right).unwrap();
        let depth = pose.transform_point(&p).z;
        prop_assert!((l.x - r.x - cam.fx * cam.baseline / depth).abs() < 1e-9);
        prop_assert!((l.y - r.y).abs() < 1e-12);
    }

    #[test]
    fn right_jacobians_match_central_differences(
        xi in twist(2.0, 1.0),
        (x, y, z) in (-0.5..0.5f64, -0.4..0.4f64, 1.0..20.0f64),
    ) {
        let cam = stereo_camera();
        let pose = Pose::exp(&xi);
        let p = world_point(&pose, x, y, z);
        let j = measurement_jacobians_side(&cam, &pose, &p, Side::Right).unwrap();
        let h = 1e-6;
        let mut fd_x = Matrix2x6::zeros();
        for c in 0..6 {
            let e = Twist(Vector6::from_fn(|i, _| if i == c { h } else { 0.0 }));
            let plus = project_side(&cam, &pose.retract(&e), &p, Side::Right).unwrap();
            let minus = project_side(&cam, &pose.retract(&-e), &p, Side::Right).unwrap();
            fd_x.set_column(c, &((plus - minus) / (2.0 * h)));
        }
        let mut fd_p = Matrix2x3::zeros();
        for c in 0..3 {
            let e = Vector3::from_fn(|i, _| if i == c { h } else { 0.0 });
            let plus = project_side(&cam, &pose, &(p + e), Side::Right).unwrap();
            let minus = project_side(&cam, &pose, &(p - e), Side::Right).unwrap();
            fd_p.set_column(c, &((plus - minus) / (2.0 * h)));
        }
        prop_assert!((fd_x - j.h_x).norm() / j.h_x.norm() < 1e-5);
        prop_assert!((fd_p - j.h_p).norm() / j.h_p.norm() < 1e-5);
    }
}

#[test]
fn points_behind_the_camera_are_rejected() {
    let cam = CameraModel::default();
    let pose = Pose::identity();
    assert!(project_world(&cam, &pose, &Vector3::new(0.0, 0.0, 0.05)).is_err());
    assert!(project_world(&cam, &pose, &Vector3::new(0.0, 0.0, -3.0)).is_err());
    assert!(measurement_jacobians_side(&cam, &pose, &Vector3::new(1.0, 0.0, -1.0), Side::Left).is_err());
}

#[test]
fn log_near_pi_keeps_the_axis() {
    let axis = Vector3::new(1.0, -2.0, 0.5).normalize();
    for angle in [std::f64::consts::PI - 1e-7, std::f64::consts::PI - 1e-3, 3.0] {
        let xi = Twist::new(Vector3::new(0.3, -0.1, 0.2), axis * angle);
        let back = Pose::exp(&xi).log();
        assert!((back.0 - xi.0).norm() < 1e-5, "angle {angle}: {back:?}");
    }
}
