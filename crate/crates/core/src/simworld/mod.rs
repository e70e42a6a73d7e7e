//! Seeded synthetic pose-tracking scenarios.
//!
//! The camera starts at the world origin looking down +z. Map points are
//! spawned in its frustum, the camera then moves by a small random rigid
//! transform, and the visible points are measured with Gaussian pixel noise.
//! The stored map is a copy of the true points with Gaussian position noise.

pub mod fixture;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{measurement_jacobians_side, project_side, CameraModel, Pose, Side, Twist};
use crate::optimizer::{MatchedObservation, StereoObservation};
use crate::uncertainty::{scale_level_cov, whiten_rows, FeatureBlock, DEFAULT_PYRAMID_SCALE};

/// Fewer visible points than this makes a scenario degenerate.
pub const MIN_VISIBLE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_points: usize,
    pub depth_min: f64,
    pub depth_max: f64,
    /// Per-axis half-width of the uniform translation draw, meters.
    pub motion_translation: f64,
    /// Per-axis half-width of the uniform rotation draw, radians.
    pub motion_rotation: f64,
    pub map_sigma: f64,
    /// Pixel noise at pyramid level 0.
    pub pixel_sigma: f64,
    /// Measurements get a uniform level in `0..=max_pyramid_level`; pixel
    /// noise scales by `pyramid_scale_factor^level`.
    pub max_pyramid_level: u32,
    pub pyramid_scale_factor: f64,
    pub camera: CameraModel,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_points: 200,
            depth_min: 2.0,
            depth_max: 10.0,
            motion_translation: 0.1,
            motion_rotation: 0.05,
            map_sigma: 0.02,
            pixel_sigma: 1.5,
            max_pyramid_level: 0,
            pyramid_scale_factor: DEFAULT_PYRAMID_SCALE,
            camera: CameraModel::default(),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        let bad = |what: &str| Err(Error::InvalidInput(format!("scenario config: {what}")));
        if self.n_points == 0 {
            return bad("n_points must be positive");
        }
        if !(self.depth_min > 0.0 && self.depth_min < self.depth_max && self.depth_max.is_finite()) {
            return bad("depth range must be positive and ordered");
        }
        let sigmas = [self.motion_translation, self.motion_rotation, self.map_sigma, self.pixel_sigma];
        if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return bad("motion scales and sigmas must be non-negative");
        }
        if !(self.pyramid_scale_factor > 1.0) {
            return bad("pyramid scale factor must exceed 1");
        }
        Ok(())
    }
}

/// One measured (visible) point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimMeasurement {
    pub point: usize,
    pub pixel: Vector2<f64>,
    pub level: u32,
    /// Right-image pixel for stereo cameras when the point is inside the right image.
    pub right: Option<Vector2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    /// World-to-camera pose after the motion.
    pub true_pose: Pose,
    pub points_true: Vec<Vector3<f64>>,
    /// Noisy copy of the points, as stored in the map.
    pub points_map: Vec<Vector3<f64>>,
    pub visible: Vec<bool>,
    /// One entry per visible point, in point order.
    pub measurements: Vec<SimMeasurement>,
}

pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let cam = &config.camera;
    let n = config.n_points;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let points_true: Vec<Vector3<f64>> = (0..n)
        .map(|_| {
            let u = rng.random_range(0.0..cam.width);
            let v = rng.random_range(0.0..cam.height);
            let depth = rng.random_range(config.depth_min..config.depth_max);
            cam.back_project(&Vector2::new(u, v), depth)
        })
        .collect();

    let motion = Vector6::from_fn(|i, _| {
        let scale = if i < 3 { config.motion_translation } else { config.motion_rotation };
        rng.random_range(-1.0..=1.0) * scale
    });
    let true_pose = Pose::exp(&Twist(motion));

    let points_map: Vec<Vector3<f64>> = points_true
        .iter()
        .map(|p| p + Vector3::from_fn(|_, _| normal(&mut rng)) * config.map_sigma)
        .collect();

    let mut visible = vec![false; n];
    let mut measurements = Vec::with_capacity(n);
    for (i, p) in points_true.iter().enumerate() {
        // draw every variate whether or not the point is visible so that the
        // stream does not depend on visibility
        let level = if config.max_pyramid_level > 0 { rng.random_range(0..=config.max_pyramid_level) } else { 0 };
        let noise_left = Vector2::new(normal(&mut rng), normal(&mut rng));
        let noise_right = Vector2::new(normal(&mut rng), normal(&mut rng));
        let sigma = config.pixel_sigma * config.pyramid_scale_factor.powi(level as i32);

        let Ok(left) = project_side(cam, &true_pose, p, Side::Left) else { continue };
        if !cam.in_image(&left) {
            continue;
        }
        let right = if cam.is_stereo() {
            project_side(cam, &true_pose, p, Side::Right)
                .ok()
                .filter(|r| cam.in_image(r))
                .map(|r| r + noise_right * sigma)
        } else {
            None
        };
        visible[i] = true;
        measurements.push(SimMeasurement { point: i, pixel: left + noise_left * sigma, level, right });
    }
    if measurements.len() < MIN_VISIBLE {
        return Err(Error::Degenerate { visible: measurements.len() });
    }
    Ok(Scenario { config: *config, true_pose, points_true, points_map, visible, measurements })
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

impl Scenario {
    pub fn camera(&self) -> &CameraModel {
        &self.config.camera
    }

    /// The pre-motion pose, used as the prediction for selection and as the
    /// solver's starting point.
    pub fn initial_pose(&self) -> Pose {
        Pose::identity()
    }

    pub fn visible_count(&self) -> usize {
        self.measurements.len()
    }

    /// Pixel sigma used for weighting. A noiseless scenario is weighted as if
    /// it had unit pixel noise so the whitening stays well defined.
    pub fn assumed_pixel_sigma(&self) -> f64 {
        if self.config.pixel_sigma > 0.0 {
            self.config.pixel_sigma
        } else {
            1.0
        }
    }

    pub fn sigma_z(&self, level: u32) -> Matrix2<f64> {
        scale_level_cov(level, self.config.pyramid_scale_factor, self.assumed_pixel_sigma())
    }

    pub fn sigma_p(&self) -> Matrix3<f64> {
        Matrix3::identity() * (self.config.map_sigma * self.config.map_sigma)
    }

    /// Whitened left-image blocks for every measurement, linearized at `pose`
    /// around the map copy of each point. Block `i` belongs to measurement `i`;
    /// its feature id is the point index.
    pub fn blocks_at(&self, pose: &Pose) -> Result<Vec<FeatureBlock>> {
        self.measurements
            .iter()
            .map(|m| {
                let jac = measurement_jacobians_side(self.camera(), pose, &self.points_map[m.point], Side::Left)?;
                let rows = whiten_rows(&jac.h_x, &jac.h_p, &self.sigma_z(m.level), &self.sigma_p())?;
                Ok(FeatureBlock::mono(m.point, rows))
            })
            .collect()
    }

    /// Solver observations for the given measurement indices.
    pub fn observations(&self, indices: &[usize], with_right: bool) -> Vec<MatchedObservation> {
        indices
            .iter()
            .map(|&i| {
                let m = &self.measurements[i];
                let sigma_z = self.sigma_z(m.level);
                MatchedObservation {
                    map_point: self.points_map[m.point],
                    pixel: m.pixel,
                    sigma_z,
                    sigma_p: self.sigma_p(),
                    pyramid_level: m.level,
                    right: if with_right { m.right.map(|pixel| StereoObservation { pixel, sigma_z }) } else { None },
                }
            })
            .collect()
    }

    pub fn all_observations(&self, with_right: bool) -> Vec<MatchedObservation> {
        let all: Vec<usize> = (0..self.measurements.len()).collect();
        self.observations(&all, with_right)
    }
}
