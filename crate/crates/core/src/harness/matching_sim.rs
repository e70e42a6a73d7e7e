//! Active matching followed by pose-only optimization, against matching every
//! visible point.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use web_time::Instant;

use super::report::{Cell as Value, Report};
use super::seeds::{child_seed, trial_seed};
use super::stats::Moments;
use super::{require_grid, run_indexed, Check, ExperimentSpec};
use crate::error::{Error, Result};
use crate::geometry::{Pose, Twist};
use crate::matching::{
    good_feature_matching_mono, good_feature_matching_stereo, matched_observations, prior_blocks, Budget,
    FrameMeasurements, MatcherSim, MatchingOptions,
};
use crate::optimizer::{gauss_newton, pose_error, GaussNewtonOptions, MatchedObservation, PoseError};
use crate::selection::{sample_size, DEFAULT_PRIOR_LAMBDA};
use crate::simworld::{generate_scenario, Scenario, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingSimSpec {
    pub scenario: ScenarioConfig,
    pub ks: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub miss_probabilities: Vec<f64>,
    /// `false` runs the monocular pipeline, `true` the stereo one.
    pub stereo_modes: Vec<bool>,
    /// Baseline given to the camera in stereo mode, meters.
    pub stereo_baseline: f64,
    pub window_radius: f64,
    pub right_miss_probability: f64,
    pub clutter: usize,
    /// Wall-clock budget per frame; `None` disables it.
    pub time_budget_ms: Option<f64>,
    /// Deterministic step budget; takes precedence over the time budget.
    pub step_budget: Option<u64>,
    /// Per-axis half-width of the uniform error of the predicted pose.
    pub guess_translation: f64,
    pub guess_rotation: f64,
    pub prior_lambda: f64,
}

impl Default for MatchingSimSpec {
    fn default() -> Self {
        MatchingSimSpec {
            scenario: ScenarioConfig { n_points: 950, ..ScenarioConfig::default() },
            ks: vec![50, 100, 200],
            epsilons: vec![0.1],
            miss_probabilities: vec![0.0, 0.3],
            stereo_modes: vec![false, true],
            stereo_baseline: 0.11,
            window_radius: 15.0,
            right_miss_probability: 0.0,
            clutter: 100,
            time_budget_ms: Some(15.0),
            step_budget: None,
            guess_translation: 0.01,
            guess_rotation: 0.005,
            prior_lambda: DEFAULT_PRIOR_LAMBDA,
        }
    }
}

impl MatchingSimSpec {
    pub fn validate(&self) -> Result<()> {
        require_grid("k", &self.ks)?;
        require_grid("epsilon", &self.epsilons)?;
        require_grid("miss probability", &self.miss_probabilities)?;
        require_grid("stereo mode", &self.stereo_modes)?;
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::Config(format!("epsilon {e} outside (0, 1)")));
        }
        for p in self.miss_probabilities.iter().chain([&self.right_miss_probability]) {
            if !(0.0..1.0).contains(p) {
                return Err(Error::Config(format!("miss probability {p} outside [0, 1)")));
            }
        }
        if !(self.window_radius > 0.0) {
            return Err(Error::Config("window radius must be positive".into()));
        }
        if self.stereo_modes.contains(&true) && !(self.stereo_baseline > 0.0) {
            return Err(Error::Config("stereo mode needs a positive baseline".into()));
        }
        if self.time_budget_ms.is_some_and(|t| !(t >= 0.0)) {
            return Err(Error::Config("time budget must be non-negative".into()));
        }
        if let Some(k) = self.ks.iter().find(|&&k| k > self.scenario.n_points) {
            return Err(Error::Config(format!("k = {k} exceeds n_points {}", self.scenario.n_points)));
        }
        self.scenario.validate().map_err(|e| Error::Config(e.to_string()))
    }

    fn budget(&self) -> Budget {
        match (self.step_budget, self.time_budget_ms) {
            (Some(steps), _) => Budget::Steps(steps),
            (None, Some(ms)) => Budget::Wall(Duration::from_secs_f64(ms / 1000.0)),
            (None, None) => Budget::Unlimited,
        }
    }

    fn grid_len(&self) -> usize {
        self.ks.len() * self.epsilons.len() * self.miss_probabilities.len()
    }
}

pub const COLUMNS: [&str; 32] = [
    "mode",
    "k",
    "epsilon",
    "miss_probability",
    "right_miss_probability",
    "window_radius",
    "clutter",
    "time_budget_ms",
    "step_budget",
    "n_points",
    "pixel_sigma",
    "map_sigma",
    "guess_translation",
    "guess_rotation",
    "trials",
    "base_seed",
    "successes",
    "failures",
    "mean_visible",
    "mean_sample_size",
    "mean_matches",
    "mean_stereo_matches",
    "mean_gain_evals",
    "mean_match_attempts",
    "attempt_bound_violations",
    "rms_trans_m",
    "rms_rot_deg",
    "baseline_failures",
    "baseline_rms_trans_m",
    "baseline_rms_rot_deg",
    "mean_match_wall_s",
    "mean_solve_wall_s",
];

#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    sample_size: usize,
    matches: usize,
    stereo_matches: usize,
    gain_evaluations: u64,
    match_attempts: u64,
    attempt_bound_ok: bool,
    error: Option<PoseError>,
    match_wall: f64,
    solve_wall: f64,
}

#[derive(Debug, Clone, Default)]
struct Trial {
    visible: Option<usize>,
    baseline: Option<PoseError>,
    cells: Vec<Cell>,
}

fn solve(s: &Scenario, obs: &[MatchedObservation], init: &Pose) -> Option<PoseError> {
    gauss_newton(s.camera(), obs, init, &GaussNewtonOptions::default())
        .ok()
        .map(|r| pose_error(&r.pose, &s.true_pose))
}

fn predicted_pose(spec: &MatchingSimSpec, truth: &Pose, seed: u64) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = nalgebra::Vector6::from_fn(|i, _| {
        let scale = if i < 3 { spec.guess_translation } else { spec.guess_rotation };
        rng.random_range(-1.0..=1.0) * scale
    });
    truth.retract(&Twist(noise))
}

fn run_trial(spec: &MatchingSimSpec, stereo: bool, seed: u64) -> Trial {
    let mut cfg = ScenarioConfig { seed, ..spec.scenario };
    if stereo {
        match cfg.camera.with_baseline(spec.stereo_baseline) {
            Ok(cam) => cfg.camera = cam,
            Err(_) => return Trial { cells: vec![Cell::default(); spec.grid_len()], ..Trial::default() },
        }
    }
    let Ok(s) = generate_scenario(&cfg) else {
        return Trial { cells: vec![Cell::default(); spec.grid_len()], ..Trial::default() };
    };
    let guess = predicted_pose(spec, &s.true_pose, child_seed(seed, 0));
    let (points, frame) = FrameMeasurements::from_scenario(&s, spec.clutter, child_seed(seed, 1));
    let baseline = solve(&s, &s.all_observations(stereo), &guess);
    let n_candidates = prior_blocks(s.camera(), &points, &guess, spec.window_radius).len();

    let mut cells = Vec::with_capacity(spec.grid_len());
    let mut grid = 0u64;
    for &k in &spec.ks {
        for &eps in &spec.epsilons {
            for &miss in &spec.miss_probabilities {
                grid += 1;
                let sim = MatcherSim {
                    window_radius: spec.window_radius,
                    miss_probability: miss,
                    right_miss_probability: spec.right_miss_probability,
                    clutter: spec.clutter,
                    seed: child_seed(seed, 2 * grid),
                };
                let options = MatchingOptions {
                    k,
                    epsilon: eps,
                    budget: spec.budget(),
                    prior_lambda: spec.prior_lambda,
                    base_pixel_sigma: s.assumed_pixel_sigma(),
                    pyramid_scale_factor: cfg.pyramid_scale_factor,
                    seed: child_seed(seed, 2 * grid + 1),
                };
                let run = if stereo { good_feature_matching_stereo } else { good_feature_matching_mono };
                let Ok(set) = run(s.camera(), &points, &frame, &guess, &sim, &options) else {
                    cells.push(Cell::default());
                    continue;
                };
                let s_size = sample_size(n_candidates, k, eps);
                let start = Instant::now();
                let error = solve(&s, &matched_observations(&points, &set, &options), &guess);
                let right_attempts = if stereo { set.len() as u64 } else { 0 };
                let bound = (s_size * k + k) as u64;
                cells.push(Cell {
                    sample_size: s_size,
                    matches: set.len(),
                    stereo_matches: set.matches.iter().filter(|m| m.right.is_some()).count(),
                    gain_evaluations: set.gain_evaluations,
                    match_attempts: set.match_attempts,
                    attempt_bound_ok: set.match_attempts - right_attempts <= bound,
                    error,
                    match_wall: set.wall_time.as_secs_f64(),
                    solve_wall: start.elapsed().as_secs_f64(),
                });
            }
        }
    }
    Trial { visible: Some(s.visible_count()), baseline, cells }
}

/// Sweeps (mode, k, ε, miss probability). Worlds are shared across k, ε and
/// miss probability for the same mode and trial index.
pub fn run_matching_sim(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate_common()?;
    let m = &spec.matching;
    m.validate()?;
    let trials = spec.trials;
    let outcomes = run_indexed(spec.workers, m.stereo_modes.len() * trials, |i| {
        let (mi, t) = (i / trials, i % trials);
        run_trial(m, m.stereo_modes[mi], trial_seed(spec.base_seed, mi as u64, t as u64))
    })?;

    let mut report = Report::new(&COLUMNS);
    for (mi, &stereo) in m.stereo_modes.iter().enumerate() {
        let group = &outcomes[mi * trials..(mi + 1) * trials];
        let mut visible = Moments::default();
        let [mut base_t, mut base_r] = [Moments::default(); 2];
        let mut base_fail = 0usize;
        for t in group {
            if let Some(v) = t.visible {
                visible.push(v as f64);
            }
            match t.baseline {
                Some(e) => {
                    base_t.push(e.translational);
                    base_r.push(e.rotational_deg);
                }
                None => base_fail += 1,
            }
        }
        let mut c = 0;
        for &k in &m.ks {
            for &eps in &m.epsilons {
                for &miss in &m.miss_probabilities {
                    let mut acc = [Moments::default(); 9];
                    let (mut failures, mut violations) = (0usize, 0usize);
                    for t in group {
                        let cell = t.cells[c];
                        if t.visible.is_none() {
                            failures += 1;
                            continue;
                        }
                        violations += usize::from(!cell.attempt_bound_ok);
                        for (a, v) in acc.iter_mut().zip([
                            cell.sample_size as f64,
                            cell.matches as f64,
                            cell.stereo_matches as f64,
                            cell.gain_evaluations as f64,
                            cell.match_attempts as f64,
                            cell.match_wall,
                        ]) {
                            a.push(v);
                        }
                        match cell.error {
                            Some(e) => {
                                acc[6].push(e.translational);
                                acc[7].push(e.rotational_deg);
                                acc[8].push(cell.solve_wall);
                            }
                            None => failures += 1,
                        }
                    }
                    let sc = &m.scenario;
                    // budget actually used: a step budget overrides the wall clock
                    let (time_budget, step_budget) = match m.budget() {
                        Budget::Wall(d) => (d.as_secs_f64() * 1000.0, Value::from("")),
                        Budget::Steps(n) => (f64::INFINITY, Value::from(n)),
                        Budget::Unlimited => (f64::INFINITY, Value::from("")),
                    };
                    report.push(vec![
                        (if stereo { "stereo" } else { "mono" }).into(),
                        k.into(),
                        eps.into(),
                        miss.into(),
                        m.right_miss_probability.into(),
                        m.window_radius.into(),
                        m.clutter.into(),
                        time_budget.into(),
                        step_budget,
                        sc.n_points.into(),
                        sc.pixel_sigma.into(),
                        sc.map_sigma.into(),
                        m.guess_translation.into(),
                        m.guess_rotation.into(),
                        trials.into(),
                        spec.base_seed.into(),
                        (acc[6].count as usize).into(),
                        failures.into(),
                        visible.mean().into(),
                        acc[0].mean().into(),
                        acc[1].mean().into(),
                        acc[2].mean().into(),
                        acc[3].mean().into(),
                        acc[4].mean().into(),
                        violations.into(),
                        acc[6].rms().into(),
                        acc[7].rms().into(),
                        base_fail.into(),
                        base_t.rms().into(),
                        base_r.rms().into(),
                        acc[5].mean().into(),
                        acc[8].mean().into(),
                    ]);
                    c += 1;
                }
            }
        }
    }
    Ok(report)
}

/// For perfect-matcher rows: attempts within `s·k + k` in every trial, and
/// RMS translational error within `1 + tolerance` of the match-all baseline.
pub fn check(report: &Report, tolerance: f64) -> Vec<Check> {
    let mut checks = Vec::new();
    for r in 0..report.rows.len() {
        let get = |c: &str| report.f64_at(r, c).unwrap_or(f64::NAN);
        if get("miss_probability") != 0.0 {
            continue;
        }
        let tag = format!("{} k={} eps={}", report.text_at(r, "mode").unwrap_or("?"), get("k"), get("epsilon"));
        let v = get("attempt_bound_violations");
        checks.push(Check::new(format!("attempts<=s*k+k {tag}"), v == 0.0, format!("{v} violating trials")));
        let (ours, base) = (get("rms_trans_m"), get("baseline_rms_trans_m"));
        checks.push(Check::new(
            format!("rms within {:.0}% of match-all {tag}", tolerance * 100.0),
            ours <= base * (1.0 + tolerance),
            format!("{ours:.4e} vs {base:.4e}"),
        ));
    }
    checks
}
