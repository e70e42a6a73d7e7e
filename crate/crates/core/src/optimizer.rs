//! Pose-only Gauss-Newton with whitened residuals.

use nalgebra::{Matrix2, Matrix2x6, Matrix3, Matrix6, Vector2, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::geometry::{measurement_jacobians_side, project_side, CameraModel, Pose, Side, Twist};
use crate::linalg;
use crate::uncertainty::{residual_factor, RANK_TOLERANCE};

pub const DEFAULT_MAX_ITERATIONS: usize = 20;
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Right-image half of a stereo observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoObservation {
    pub pixel: Vector2<f64>,
    pub sigma_z: Matrix2<f64>,
}

/// A 2D-3D correspondence used by the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedObservation {
    pub map_point: Vector3<f64>,
    pub pixel: Vector2<f64>,
    pub sigma_z: Matrix2<f64>,
    /// Map point covariance folded into the residual weight; zero for a perfect map.
    pub sigma_p: Matrix3<f64>,
    pub pyramid_level: u32,
    pub right: Option<StereoObservation>,
}

impl MatchedObservation {
    pub fn new(map_point: Vector3<f64>, pixel: Vector2<f64>, sigma_z: Matrix2<f64>) -> Self {
        MatchedObservation {
            map_point,
            pixel,
            sigma_z,
            sigma_p: Matrix3::zeros(),
            pyramid_level: 0,
            right: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussNewtonOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for GaussNewtonOptions {
    fn default() -> Self {
        GaussNewtonOptions { max_iterations: DEFAULT_MAX_ITERATIONS, tolerance: DEFAULT_TOLERANCE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub pose: Pose,
    pub iterations: usize,
    pub final_cost: f64,
    pub converged: bool,
}

/// One whitened residual term: inverse weight factor plus the data it applies to.
struct Term {
    side: Side,
    point: Vector3<f64>,
    pixel: Vector2<f64>,
    weight: Matrix2<f64>,
}

fn build_terms(cam: &CameraModel, observations: &[MatchedObservation], init: &Pose) -> Result<Vec<Term>> {
    let mut terms = Vec::with_capacity(observations.len() * 2);
    let mut push = |side: Side, obs: &MatchedObservation, pixel: Vector2<f64>, sigma_z: &Matrix2<f64>| -> Result<()> {
        let jac = measurement_jacobians_side(cam, init, &obs.map_point, side)?;
        let w = residual_factor(&jac.h_p, sigma_z, &obs.sigma_p)?;
        let weight = linalg::forward_substitute(&w, &Matrix2::identity());
        terms.push(Term { side, point: obs.map_point, pixel, weight });
        Ok(())
    };
    for obs in observations {
        push(Side::Left, obs, obs.pixel, &obs.sigma_z)?;
        if let Some(right) = &obs.right {
            push(Side::Right, obs, right.pixel, &right.sigma_z)?;
        }
    }
    Ok(terms)
}

/// Whitened cost `Σ ‖W⁻¹(z − h(x, p))‖²`.
fn cost(cam: &CameraModel, terms: &[Term], pose: &Pose) -> Result<f64> {
    terms.iter().try_fold(0.0, |acc, t| {
        let r = t.weight * (t.pixel - project_side(cam, pose, &t.point, t.side)?);
        Ok(acc + r.norm_squared())
    })
}

fn normal_equations(cam: &CameraModel, terms: &[Term], pose: &Pose) -> Result<(Matrix6<f64>, Vector6<f64>)> {
    let mut a = Matrix6::zeros();
    let mut b = Vector6::zeros();
    for t in terms {
        let jac = measurement_jacobians_side(cam, pose, &t.point, t.side)?;
        let hc: Matrix2x6<f64> = t.weight * jac.h_x;
        let r = t.weight * (t.pixel - project_side(cam, pose, &t.point, t.side)?);
        a += hc.transpose() * hc;
        b += hc.transpose() * r;
    }
    Ok(((a + a.transpose()) * 0.5, b))
}

/// Weighted Gauss-Newton over the camera pose with map points held fixed.
///
/// Residual weights `W_r⁻¹` are computed once at `init`. The update is
/// `x ← exp(Δ)·x` with `Δ` solving the whitened normal equations; no damping
/// is applied. Two consecutive cost increases abort with `Diverged`.
pub fn gauss_newton(
    cam: &CameraModel,
    observations: &[MatchedObservation],
    init: &Pose,
    options: &GaussNewtonOptions,
) -> Result<SolveReport> {
    let terms = build_terms(cam, observations, init)?;
    if terms.len() < 3 {
        return Err(Error::RankDeficient);
    }
    let diverged = |iterations| Error::Diverged { iterations };
    let mut pose = *init;
    let mut current = cost(cam, &terms, &pose)?;
    let mut increases = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iterations {
        let (a, b) = normal_equations(cam, &terms, &pose).map_err(|_| diverged(iterations))?;
        let eig = linalg::symmetric_eigenvalues(&a);
        if !(eig[0] > 0.0) || eig[5] <= RANK_TOLERANCE * eig[0] {
            return Err(Error::RankDeficient);
        }
        let delta = linalg::spd_solve(&a, &b).ok_or(Error::RankDeficient)?;
        iterations += 1;
        pose = pose.retract(&Twist(delta));
        let next = cost(cam, &terms, &pose).map_err(|_| diverged(iterations))?;
        if !next.is_finite() {
            return Err(diverged(iterations));
        }
        if next > current {
            increases += 1;
            if increases >= 2 {
                return Err(diverged(iterations));
            }
        } else {
            increases = 0;
        }
        current = next;
        if delta.norm() < options.tolerance {
            converged = true;
            break;
        }
    }
    Ok(SolveReport { pose, iterations, final_cost: current, converged })
}

/// Per-term whitened Jacobian rows and residuals.
pub type WhitenedSystem = (Vec<Matrix2x6<f64>>, Vec<Vector2<f64>>);

/// Whitened Jacobian and residual stacked at `pose`, with weights fixed at
/// `weights_at`. Exposed for stationarity checks.
pub fn whitened_system(
    cam: &CameraModel,
    observations: &[MatchedObservation],
    weights_at: &Pose,
    pose: &Pose,
) -> Result<WhitenedSystem> {
    let terms = build_terms(cam, observations, weights_at)?;
    let mut rows = Vec::with_capacity(terms.len());
    let mut residuals = Vec::with_capacity(terms.len());
    for t in &terms {
        let jac = measurement_jacobians_side(cam, pose, &t.point, t.side)?;
        rows.push(t.weight * jac.h_x);
        residuals.push(t.weight * (t.pixel - project_side(cam, pose, &t.point, t.side)?));
    }
    Ok((rows, residuals))
}

/// Translational (meters) and rotational (degrees) pose error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    pub translational: f64,
    pub rotational_deg: f64,
}

/// Distance between camera centers and the rotation angle of `R_est R_trueᵀ`.
pub fn pose_error(estimate: &Pose, truth: &Pose) -> PoseError {
    let translational = (estimate.center() - truth.center()).norm();
    let r = estimate.rotation() * truth.rotation().transpose();
    let cos = (r.trace() - 1.0) * 0.5;
    let sin = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm() * 0.5;
    PoseError { translational, rotational_deg: sin.atan2(cos).to_degrees() }
}
