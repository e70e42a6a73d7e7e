//! Active good-feature matching: lazier-greedy selection interleaved with a
//! simulated local-window map-to-frame matcher.
//!
//! Candidates start with a constant unit measurement prior. Each round draws
//! a random batch, tries to match the best candidate in it, and only then
//! re-weights that candidate with the noise of the measurement it matched.

use std::collections::HashMap;
use std::time::Duration;

use nalgebra::{Matrix2, Matrix2x6, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use web_time::Instant;

use crate::error::{Error, Result};
use crate::geometry::{measurement_jacobians_side, project_side, CameraModel, Pose, Side};
use crate::metrics::InfoMatrix;
use crate::optimizer::{MatchedObservation, StereoObservation};
use crate::selection::{sample_positions, sample_size, selection_rng, DEFAULT_EPSILON, DEFAULT_PRIOR_LAMBDA};
use crate::simworld::Scenario;
use crate::uncertainty::{scale_level_cov, whiten_rows, FeatureBlock, DEFAULT_PYRAMID_SCALE};

pub const DEFAULT_TIME_BUDGET: Duration = Duration::from_millis(15);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapPoint {
    pub id: usize,
    pub position: Vector3<f64>,
    pub sigma_p: Matrix3<f64>,
    pub expected_level: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMeasurement {
    pub pixel: Vector2<f64>,
    pub level: u32,
    /// Ground-truth correspondence; `None` for clutter.
    pub point_id: Option<usize>,
}

/// Keypoints of one frame. Right is empty for a monocular frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMeasurements {
    left: Vec<FrameMeasurement>,
    right: Vec<FrameMeasurement>,
    left_index: HashMap<usize, usize>,
    right_index: HashMap<usize, usize>,
}

fn index_of(side: &[FrameMeasurement]) -> HashMap<usize, usize> {
    side.iter().enumerate().filter_map(|(i, m)| m.point_id.map(|id| (id, i))).collect()
}

impl FrameMeasurements {
    pub fn new(left: Vec<FrameMeasurement>, right: Vec<FrameMeasurement>) -> Self {
        let left_index = index_of(&left);
        let right_index = index_of(&right);
        FrameMeasurements { left, right, left_index, right_index }
    }

    pub fn left(&self) -> &[FrameMeasurement] {
        &self.left
    }

    pub fn right(&self) -> &[FrameMeasurement] {
        &self.right
    }

    /// The true measurement of a map point on one side, if it was observed.
    pub fn truth_for(&self, point_id: usize, side: Side) -> Option<&FrameMeasurement> {
        match side {
            Side::Left => self.left_index.get(&point_id).map(|&i| &self.left[i]),
            Side::Right => self.right_index.get(&point_id).map(|&i| &self.right[i]),
        }
    }

    /// Frame and map built from a simulated scenario, with `clutter` decoy
    /// keypoints scattered uniformly over each image.
    pub fn from_scenario(s: &Scenario, clutter: usize, seed: u64) -> (Vec<MapPoint>, FrameMeasurements) {
        let sigma_p = s.sigma_p();
        let mut expected = vec![0; s.points_map.len()];
        let mut left = Vec::with_capacity(s.measurements.len() + clutter);
        let mut right = Vec::new();
        for m in &s.measurements {
            expected[m.point] = m.level;
            left.push(FrameMeasurement { pixel: m.pixel, level: m.level, point_id: Some(m.point) });
            if let Some(px) = m.right {
                right.push(FrameMeasurement { pixel: px, level: m.level, point_id: Some(m.point) });
            }
        }
        let cam = s.camera();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let decoy = |rng: &mut ChaCha8Rng| FrameMeasurement {
            pixel: Vector2::new(rng.random_range(0.0..cam.width), rng.random_range(0.0..cam.height)),
            level: 0,
            point_id: None,
        };
        for _ in 0..clutter {
            left.push(decoy(&mut rng));
            if cam.is_stereo() {
                right.push(decoy(&mut rng));
            }
        }
        let points = s
            .points_map
            .iter()
            .enumerate()
            .map(|(id, &position)| MapPoint { id, position, sigma_p, expected_level: expected[id] })
            .collect();
        (points, FrameMeasurements::new(left, right))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherSim {
    /// Half-width of the square search window, pixels.
    pub window_radius: f64,
    pub miss_probability: f64,
    pub right_miss_probability: f64,
    /// Decoy keypoints added per frame; decoys never match.
    pub clutter: usize,
    pub seed: u64,
}

impl Default for MatcherSim {
    fn default() -> Self {
        MatcherSim { window_radius: 15.0, miss_probability: 0.0, right_miss_probability: 0.0, clutter: 0, seed: 0 }
    }
}

impl MatcherSim {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_radius >= 0.0) {
            return Err(Error::InvalidInput(format!("window radius {} must be non-negative", self.window_radius)));
        }
        for p in [self.miss_probability, self.right_miss_probability] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("miss probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Stateful matcher: one Bernoulli draw per query, so results depend only on
/// the seed and the query order.
#[derive(Debug, Clone)]
pub struct WindowMatcher {
    sim: MatcherSim,
    rng: ChaCha8Rng,
}

impl WindowMatcher {
    pub fn new(sim: MatcherSim) -> Result<Self> {
        sim.validate()?;
        Ok(WindowMatcher { sim, rng: ChaCha8Rng::seed_from_u64(sim.seed) })
    }

    pub fn sim(&self) -> &MatcherSim {
        &self.sim
    }

    pub fn window_match(
        &mut self,
        cam: &CameraModel,
        point: &MapPoint,
        pose_guess: &Pose,
        frame: &FrameMeasurements,
        side: Side,
    ) -> Option<FrameMeasurement> {
        let miss = match side {
            Side::Left => self.sim.miss_probability,
            Side::Right => self.sim.right_miss_probability,
        };
        let hit = self.rng.random_bool(1.0 - miss);
        let predicted = project_side(cam, pose_guess, &point.position, side).ok()?;
        let m = frame.truth_for(point.id, side)?;
        (hit && in_window(&predicted, &m.pixel, self.sim.window_radius)).then_some(*m)
    }
}

/// Chebyshev-distance window test.
pub fn in_window(predicted: &Vector2<f64>, pixel: &Vector2<f64>, radius: f64) -> bool {
    (predicted - pixel).abs().max() <= radius
}

/// Stopping budget for a matching call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Wall(Duration),
    /// One step per gain evaluation and per match attempt; deterministic.
    Steps(u64),
    Unlimited,
}

impl Default for Budget {
    fn default() -> Self {
        Budget::Wall(DEFAULT_TIME_BUDGET)
    }
}

struct Meter {
    budget: Budget,
    start: Instant,
    steps: u64,
}

impl Meter {
    fn exhausted(&self) -> bool {
        match self.budget {
            Budget::Wall(limit) => self.start.elapsed() >= limit,
            Budget::Steps(limit) => self.steps >= limit,
            Budget::Unlimited => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchingOptions {
    pub k: usize,
    pub epsilon: f64,
    pub budget: Budget,
    pub prior_lambda: f64,
    /// Level-0 pixel sigma used when re-weighting a matched candidate.
    pub base_pixel_sigma: f64,
    pub pyramid_scale_factor: f64,
    /// Seed of the batch sampler.
    pub seed: u64,
}

impl MatchingOptions {
    pub fn new(k: usize) -> Self {
        MatchingOptions {
            k,
            epsilon: DEFAULT_EPSILON,
            budget: Budget::default(),
            prior_lambda: DEFAULT_PRIOR_LAMBDA,
            base_pixel_sigma: 1.0,
            pyramid_scale_factor: DEFAULT_PYRAMID_SCALE,
            seed: 0,
        }
    }
}

/// Number of features still wanted after keyframe-to-frame matching.
pub fn remaining_budget(n_good_features: usize, keyframe_matches: usize) -> usize {
    n_good_features.saturating_sub(keyframe_matches)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub map_point_id: usize,
    pub left: FrameMeasurement,
    pub right: Option<FrameMeasurement>,
    /// Block after re-weighting with the matched measurement(s).
    pub block: FeatureBlock,
}

/// Bookkeeping for one accepted match.
#[derive(Debug, Clone, PartialEq)]
pub struct Acceptance {
    pub map_point_id: usize,
    /// Prior-weighted logDet gain of the accepted candidate.
    pub gain: f64,
    /// Prior-weighted gains of every candidate in the batch at acceptance time.
    pub batch_gains: Vec<f64>,
    pub logdet_before: f64,
    pub logdet_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    /// Matches in acceptance order.
    pub matches: Vec<Match>,
    pub trace: Vec<Acceptance>,
    pub gain_evaluations: u64,
    pub match_attempts: u64,
    pub budget_exhausted: bool,
    pub information: InfoMatrix,
    pub wall_time: Duration,
}

impl MatchSet {
    pub fn ids(&self) -> Vec<usize> {
        self.matches.iter().map(|m| m.map_point_id).collect()
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

/// Candidate map points with their unit-prior blocks, in input order.
/// A point is a candidate when its predicted projection falls inside the
/// image grown by the window radius.
pub fn prior_blocks(
    cam: &CameraModel,
    points: &[MapPoint],
    pose_guess: &Pose,
    window_radius: f64,
) -> Vec<(usize, FeatureBlock)> {
    points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let px = project_side(cam, pose_guess, &p.position, Side::Left).ok()?;
            let r = window_radius;
            let inside = px.x >= -r && px.y >= -r && px.x <= cam.width + r && px.y <= cam.height + r;
            if !inside {
                return None;
            }
            let rows = whitened(cam, p, pose_guess, Side::Left, &Matrix2::identity()).ok()?;
            Some((i, FeatureBlock::mono(p.id, rows)))
        })
        .collect()
}

fn whitened(cam: &CameraModel, p: &MapPoint, pose: &Pose, side: Side, sigma_z: &Matrix2<f64>) -> Result<Matrix2x6<f64>> {
    let jac = measurement_jacobians_side(cam, pose, &p.position, side)?;
    whiten_rows(&jac.h_x, &jac.h_p, sigma_z, &p.sigma_p)
}

pub fn good_feature_matching_mono(
    cam: &CameraModel,
    points: &[MapPoint],
    frame: &FrameMeasurements,
    pose_guess: &Pose,
    sim: &MatcherSim,
    options: &MatchingOptions,
) -> Result<MatchSet> {
    run(cam, points, frame, pose_guess, sim, options, false)
}

pub fn good_feature_matching_stereo(
    cam: &CameraModel,
    points: &[MapPoint],
    frame: &FrameMeasurements,
    pose_guess: &Pose,
    sim: &MatcherSim,
    options: &MatchingOptions,
) -> Result<MatchSet> {
    if !cam.is_stereo() {
        return Err(Error::InvalidInput("stereo matching needs a positive baseline".into()));
    }
    run(cam, points, frame, pose_guess, sim, options, true)
}

fn run(
    cam: &CameraModel,
    points: &[MapPoint],
    frame: &FrameMeasurements,
    pose_guess: &Pose,
    sim: &MatcherSim,
    options: &MatchingOptions,
    stereo: bool,
) -> Result<MatchSet> {
    if !(options.epsilon > 0.0 && options.epsilon < 1.0) {
        return Err(Error::InvalidInput(format!("epsilon {} outside (0, 1)", options.epsilon)));
    }
    let mut matcher = WindowMatcher::new(*sim)?;
    let mut meter = Meter { budget: options.budget, start: Instant::now(), steps: 0 };
    let candidates = prior_blocks(cam, points, pose_guess, sim.window_radius);
    let s = sample_size(candidates.len(), options.k, options.epsilon);
    let mut rng = selection_rng(options.seed);
    let mut acc = InfoMatrix::with_prior(options.prior_lambda);
    let mut pool: Vec<usize> = (0..candidates.len()).collect();
    let mut out = MatchSet {
        matches: Vec::new(),
        trace: Vec::new(),
        gain_evaluations: 0,
        match_attempts: 0,
        budget_exhausted: false,
        information: acc,
        wall_time: Duration::ZERO,
    };

    'rounds: while out.matches.len() < options.k && !pool.is_empty() {
        if meter.exhausted() {
            out.budget_exhausted = true;
            break;
        }
        let base = acc.log_det();
        // batch entries are (candidate, logDet of acc with it); scores stay
        // valid until something is accepted
        let mut batch: Vec<(usize, f64)> = Vec::new();
        let mut unscored: Vec<usize> =
            sample_positions(&mut rng, pool.len(), s).into_iter().map(|slot| pool[slot]).collect();
        loop {
            if meter.exhausted() {
                out.budget_exhausted = true;
                break 'rounds;
            }
            for c in unscored.drain(..) {
                meter.steps += 1;
                out.gain_evaluations += 1;
                batch.push((c, acc.with_block(&candidates[c].1).log_det()));
            }
            let Some(best) = best_in_batch(&batch) else { break };
            let (c, score) = batch[best];
            let point = &points[candidates[c].0];
            meter.steps += 1;
            out.match_attempts += 1;
            let found = matcher.window_match(cam, point, pose_guess, frame, Side::Left);
            pool.retain(|&x| x != c);
            match found {
                Some(left) => {
                    let right = if stereo {
                        meter.steps += 1;
                        out.match_attempts += 1;
                        matcher.window_match(cam, point, pose_guess, frame, Side::Right)
                    } else {
                        None
                    };
                    let block = matched_block(cam, point, pose_guess, options, &left, right.as_ref())?;
                    acc.add_block(&block);
                    out.trace.push(Acceptance {
                        map_point_id: point.id,
                        gain: score - base,
                        batch_gains: batch.iter().map(|&(_, v)| v - base).collect(),
                        logdet_before: base,
                        logdet_after: acc.log_det(),
                    });
                    out.matches.push(Match { map_point_id: point.id, left, right, block });
                    continue 'rounds;
                }
                None => {
                    batch.swap_remove(best);
                    let fresh: Vec<usize> =
                        pool.iter().copied().filter(|x| !batch.iter().any(|(b, _)| b == x)).collect();
                    if !fresh.is_empty() {
                        unscored.push(fresh[rng.random_range(0..fresh.len())]);
                    }
                }
            }
        }
    }
    out.information = acc;
    out.wall_time = meter.start.elapsed();
    Ok(out)
}

/// Highest score, ties to the lowest candidate index.
fn best_in_batch(batch: &[(usize, f64)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &(c, v)) in batch.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let (bc, bv) = batch[b];
                match v.total_cmp(&bv) {
                    std::cmp::Ordering::Greater => true,
                    std::cmp::Ordering::Equal => c < bc,
                    std::cmp::Ordering::Less => false,
                }
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

fn matched_block(
    cam: &CameraModel,
    point: &MapPoint,
    pose_guess: &Pose,
    options: &MatchingOptions,
    left: &FrameMeasurement,
    right: Option<&FrameMeasurement>,
) -> Result<FeatureBlock> {
    let cov = |level| scale_level_cov(level, options.pyramid_scale_factor, options.base_pixel_sigma);
    let l = whitened(cam, point, pose_guess, Side::Left, &cov(left.level))?;
    Ok(match right {
        Some(r) => FeatureBlock::stereo(point.id, l, whitened(cam, point, pose_guess, Side::Right, &cov(r.level))?),
        None => FeatureBlock::mono(point.id, l),
    })
}

/// Solver observations for a match set.
pub fn matched_observations(points: &[MapPoint], set: &MatchSet, options: &MatchingOptions) -> Vec<MatchedObservation> {
    let by_id: HashMap<usize, &MapPoint> = points.iter().map(|p| (p.id, p)).collect();
    let cov = |level| scale_level_cov(level, options.pyramid_scale_factor, options.base_pixel_sigma);
    set.matches
        .iter()
        .map(|m| {
            let p = by_id[&m.map_point_id];
            MatchedObservation {
                map_point: p.position,
                pixel: m.left.pixel,
                sigma_z: cov(m.left.level),
                sigma_p: p.sigma_p,
                pyramid_level: m.left.level,
                right: m.right.map(|r| StereoObservation { pixel: r.pixel, sigma_z: cov(r.level) }),
            }
        })
        .collect()
}
