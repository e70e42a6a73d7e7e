//! Lazier greedy against lazy (and plain) greedy: cost and loss of accuracy.

use serde::{Deserialize, Serialize};

use super::report::Report;
use super::seeds::{child_seed, trial_seed};
use super::stats::{error_ratio, objective_ratio, Moments};
use super::{require_grid, run_indexed, Check, ExperimentSpec};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::optimizer::{gauss_newton, GaussNewtonOptions};
use crate::selection::{
    greedy_select, lazier_greedy_select, lazy_greedy_select, sample_size, SelectionProblem, DEFAULT_PRIOR_LAMBDA,
};
use crate::simworld::{generate_scenario, Scenario, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LazierSpec {
    /// Template world; `n_points` is replaced by `oversample · n` for each `n`.
    pub scenario: ScenarioConfig,
    pub ns: Vec<usize>,
    pub ks: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub worlds: usize,
    pub repeats: usize,
    pub oversample: f64,
    pub prior_lambda: f64,
    /// Also run plain greedy for its evaluation count.
    pub run_greedy: bool,
    /// Which discrepancy `mean_error_ratio` reports and the check thresholds.
    pub error_ratio: ErrorRatioDefinition,
}

/// How the lazier outcome is compared with the lazy baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorRatioDefinition {
    /// Normalized RMS difference of the selection objective (logDet gain).
    Objective,
    /// Normalized RMS distance between the downstream pose estimates.
    Pose,
}

impl std::str::FromStr for ErrorRatioDefinition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "objective" => Ok(ErrorRatioDefinition::Objective),
            "pose" => Ok(ErrorRatioDefinition::Pose),
            _ => Err(Error::Config(format!("unknown error ratio definition `{s}`"))),
        }
    }
}

impl ErrorRatioDefinition {
    pub fn name(self) -> &'static str {
        match self {
            ErrorRatioDefinition::Objective => "objective",
            ErrorRatioDefinition::Pose => "pose",
        }
    }
}

impl Default for LazierSpec {
    fn default() -> Self {
        LazierSpec {
            scenario: ScenarioConfig::default(),
            ns: vec![500, 1500, 2500],
            ks: vec![40, 100, 180],
            epsilons: vec![0.1],
            worlds: 20,
            repeats: 20,
            oversample: 1.6,
            prior_lambda: DEFAULT_PRIOR_LAMBDA,
            run_greedy: true,
            error_ratio: ErrorRatioDefinition::Objective,
        }
    }
}

impl LazierSpec {
    pub fn validate(&self) -> Result<()> {
        require_grid("n", &self.ns)?;
        require_grid("k", &self.ks)?;
        require_grid("epsilon", &self.epsilons)?;
        let min_n = *self.ns.iter().min().expect("grid is non-empty");
        if let Some(k) = self.ks.iter().find(|&&k| k == 0 || k > min_n) {
            return Err(Error::Config(format!("k = {k} must lie in 1..={min_n}")));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::Config(format!("epsilon {e} outside (0, 1)")));
        }
        if self.worlds == 0 || self.repeats == 0 {
            return Err(Error::Config("worlds and repeats must be at least 1".into()));
        }
        if !(self.oversample >= 1.0) {
            return Err(Error::Config("oversample must be at least 1".into()));
        }
        self.scenario.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

pub const COLUMNS: [&str; 28] = [
    "n",
    "k",
    "epsilon",
    "sample_size",
    "pixel_sigma",
    "map_sigma",
    "prior_lambda",
    "worlds",
    "repeats",
    "base_seed",
    "failures",
    "error_ratio_definition",
    "mean_error_ratio",
    "max_error_ratio",
    "mean_objective_error_ratio",
    "mean_pose_error_ratio",
    "max_pose_error_ratio",
    "mean_lazy_logdet",
    "mean_lazier_logdet",
    "mean_greedy_evals",
    "mean_lazy_evals",
    "mean_lazier_evals",
    "max_lazier_evals",
    "lazier_fewer_than_lazy",
    "rms_lazy_trans_m",
    "mean_greedy_wall_s",
    "mean_lazy_wall_s",
    "mean_lazier_wall_s",
];

#[derive(Debug, Clone, Copy, Default)]
struct WorldCell {
    ok: bool,
    error_ratio: f64,
    objective_ratio: f64,
    lazy_logdet: f64,
    lazier_logdet: f64,
    greedy_evals: f64,
    lazy_evals: f64,
    lazier_evals_mean: f64,
    lazier_evals_max: f64,
    lazier_fewer: bool,
    lazy_trans: f64,
    greedy_wall: f64,
    lazy_wall: f64,
    lazier_wall: f64,
}

/// A world whose first `n` visible measurements form the candidate set.
fn world(spec: &LazierSpec, n: usize, seed: u64) -> Result<Scenario> {
    let n_points = ((n as f64) * spec.oversample).ceil() as usize;
    let mut s = generate_scenario(&ScenarioConfig { n_points, seed, ..spec.scenario })?;
    if s.measurements.len() < n {
        return Err(Error::Degenerate { visible: s.measurements.len() });
    }
    s.measurements.truncate(n);
    Ok(s)
}

fn solve(s: &Scenario, chosen: &[usize]) -> Result<Pose> {
    let mut sorted = chosen.to_vec();
    sorted.sort_unstable();
    Ok(gauss_newton(s.camera(), &s.observations(&sorted, false), &s.initial_pose(), &GaussNewtonOptions::default())?.pose)
}

fn run_world_cells(spec: &LazierSpec, n: usize, seed: u64) -> Vec<WorldCell> {
    let cells = spec.ks.len() * spec.epsilons.len();
    let Ok(s) = world(spec, n, seed) else { return vec![WorldCell::default(); cells] };
    let Ok(blocks) = s.blocks_at(&s.initial_pose()) else { return vec![WorldCell::default(); cells] };
    let mut out = Vec::with_capacity(cells);
    for &k in &spec.ks {
        let base = SelectionProblem::new(&blocks, k).with_prior(spec.prior_lambda);
        let greedy = spec.run_greedy.then(|| greedy_select(&base));
        let lazy = lazy_greedy_select(&base);
        for (ei, &eps) in spec.epsilons.iter().enumerate() {
            out.push((|| -> Result<WorldCell> {
                let lazy = lazy.clone()?;
                let lazy_pose = solve(&s, &lazy.chosen)?;
                let mut lazier_poses = Vec::with_capacity(spec.repeats);
                let mut lazier_values = Vec::with_capacity(spec.repeats);
                let (mut evals, mut wall) = (Moments::default(), Moments::default());
                let mut max_evals: f64 = 0.0;
                for r in 0..spec.repeats {
                    let problem = base.with_epsilon(eps).with_seed(child_seed(seed, (k * 1000 + ei * 100 + r) as u64));
                    let res = lazier_greedy_select(&problem)?;
                    lazier_poses.push(solve(&s, &res.chosen)?);
                    lazier_values.push(base.normalized_logdet(&res.chosen));
                    evals.push(res.gain_evaluations as f64);
                    max_evals = max_evals.max(res.gain_evaluations as f64);
                    wall.push(res.wall_time.as_secs_f64());
                }
                let lazy_value = base.normalized_logdet(&lazy.chosen);
                let lazy_poses = vec![lazy_pose; spec.repeats];
                let truths = vec![s.true_pose; spec.repeats];
                let greedy = match &greedy {
                    Some(g) => g.clone()?,
                    None => lazy.clone(),
                };
                Ok(WorldCell {
                    ok: true,
                    error_ratio: error_ratio(&lazier_poses, &lazy_poses, &truths)?,
                    objective_ratio: objective_ratio(&lazier_values, &vec![lazy_value; spec.repeats])?,
                    lazy_logdet: lazy_value,
                    lazier_logdet: lazier_values.iter().sum::<f64>() / spec.repeats as f64,
                    greedy_evals: if spec.run_greedy { greedy.gain_evaluations as f64 } else { f64::NAN },
                    lazy_evals: lazy.gain_evaluations as f64,
                    lazier_evals_mean: evals.mean(),
                    lazier_evals_max: max_evals,
                    lazier_fewer: max_evals < lazy.gain_evaluations as f64,
                    lazy_trans: crate::optimizer::pose_error(&lazy_pose, &s.true_pose).translational,
                    greedy_wall: if spec.run_greedy { greedy.wall_time.as_secs_f64() } else { f64::NAN },
                    lazy_wall: lazy.wall_time.as_secs_f64(),
                    lazier_wall: wall.mean(),
                })
            })()
            .unwrap_or_default());
        }
    }
    out
}

/// Sweeps (n, k, ε). Each world is shared by every k and ε at the same n;
/// lazy greedy runs once per world and lazier greedy `repeats` times.
pub fn run_lazier_benchmark(spec: &ExperimentSpec) -> Result<Report> {
    let l = &spec.lazier;
    l.validate()?;
    let worlds = l.worlds;
    let outcomes = run_indexed(spec.workers, l.ns.len() * worlds, |i| {
        let (ni, w) = (i / worlds, i % worlds);
        run_world_cells(l, l.ns[ni], trial_seed(spec.base_seed, ni as u64, w as u64))
    })?;

    let mut report = Report::new(&COLUMNS);
    for (ni, &n) in l.ns.iter().enumerate() {
        let group = &outcomes[ni * worlds..(ni + 1) * worlds];
        for (ki, &k) in l.ks.iter().enumerate() {
            for (ei, &eps) in l.epsilons.iter().enumerate() {
                let c = ki * l.epsilons.len() + ei;
                let mut m: [Moments; 12] = [Moments::default(); 12];
                let (mut failures, mut fewer, mut max_evals) = (0usize, 0usize, 0.0f64);
                let (mut max_pose, mut max_objective) = (0.0f64, 0.0f64);
                for cell in group.iter().map(|g| g[c]) {
                    if !cell.ok {
                        failures += 1;
                        continue;
                    }
                    for (acc, v) in m.iter_mut().zip([
                        cell.error_ratio,
                        cell.objective_ratio,
                        cell.lazy_logdet,
                        cell.lazier_logdet,
                        cell.greedy_evals,
                        cell.lazy_evals,
                        cell.lazier_evals_mean,
                        cell.lazy_trans,
                        cell.greedy_wall,
                        cell.lazy_wall,
                        cell.lazier_wall,
                        0.0,
                    ]) {
                        acc.push(v);
                    }
                    fewer += usize::from(cell.lazier_fewer);
                    max_pose = max_pose.max(cell.error_ratio);
                    max_objective = max_objective.max(cell.objective_ratio);
                    max_evals = max_evals.max(cell.lazier_evals_max);
                }
                let (selected, selected_max) = match l.error_ratio {
                    ErrorRatioDefinition::Objective => (m[1], max_objective),
                    ErrorRatioDefinition::Pose => (m[0], max_pose),
                };
                report.push(vec![
                    n.into(),
                    k.into(),
                    eps.into(),
                    sample_size(n, k, eps).into(),
                    l.scenario.pixel_sigma.into(),
                    l.scenario.map_sigma.into(),
                    l.prior_lambda.into(),
                    worlds.into(),
                    l.repeats.into(),
                    spec.base_seed.into(),
                    failures.into(),
                    l.error_ratio.name().into(),
                    selected.mean().into(),
                    selected_max.into(),
                    m[1].mean().into(),
                    m[0].mean().into(),
                    max_pose.into(),
                    m[2].mean().into(),
                    m[3].mean().into(),
                    m[4].mean().into(),
                    m[5].mean().into(),
                    m[6].mean().into(),
                    max_evals.into(),
                    fewer.into(),
                    m[7].rms().into(),
                    m[8].mean().into(),
                    m[9].mean().into(),
                    m[10].mean().into(),
                ]);
            }
        }
    }
    Ok(report)
}

/// Error-ratio threshold with the protocol tolerance, the `s·k` evaluation
/// bound, and a tenfold saving over plain greedy.
pub fn check(report: &Report, ratio_threshold: f64) -> Vec<Check> {
    let mut checks = Vec::new();
    for r in 0..report.rows.len() {
        let get = |c: &str| report.f64_at(r, c).unwrap_or(f64::NAN);
        let tag = format!("n={} k={} eps={}", get("n"), get("k"), get("epsilon"));
        let ratio = get("mean_error_ratio");
        checks.push(Check::new(
            format!("error_ratio<{ratio_threshold} {tag}"),
            ratio < ratio_threshold,
            format!(
                "{} mean {ratio:.4e} (objective {:.4e}, pose {:.4e})",
                report.text_at(r, "error_ratio_definition").unwrap_or("?"),
                get("mean_objective_error_ratio"),
                get("mean_pose_error_ratio")
            ),
        ));
        let bound = get("sample_size") * get("k");
        let max_evals = get("max_lazier_evals");
        checks.push(Check::new(format!("lazier_evals<=s*k {tag}"), max_evals <= bound, format!("{max_evals} vs {bound}")));
        let greedy = get("mean_greedy_evals");
        if greedy.is_finite() {
            checks.push(Check::new(
                format!("lazier_evals<=greedy/10 {tag}"),
                max_evals * 10.0 <= greedy,
                format!("{max_evals} vs {greedy}"),
            ));
        }
    }
    checks
}
