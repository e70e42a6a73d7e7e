//! Pose accuracy of each selection metric against random and all-feature baselines.

use web_time::Instant;

use serde::{Deserialize, Serialize};

use super::report::Report;
use super::seeds::{child_seed, trial_seed};
use super::stats::Moments;
use super::{require_grid, run_indexed, Check, ExperimentSpec, Method};
use crate::error::{Error, Result};
use crate::metrics::MetricKind;
use crate::optimizer::{gauss_newton, pose_error, GaussNewtonOptions, PoseError};
use crate::selection::{greedy_select, random_select, SelectionProblem, DEFAULT_PRIOR_LAMBDA};
use crate::simworld::{generate_scenario, Scenario, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseOptSpec {
    pub scenario: ScenarioConfig,
    pub subset_sizes: Vec<usize>,
    pub pixel_sigmas: Vec<f64>,
    pub methods: Vec<Method>,
    pub prior_lambda: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for PoseOptSpec {
    fn default() -> Self {
        PoseOptSpec {
            scenario: ScenarioConfig::default(),
            subset_sizes: vec![80, 120, 160, 200],
            pixel_sigmas: vec![0.5, 1.5, 2.5],
            methods: Method::ALL_METHODS.to_vec(),
            prior_lambda: DEFAULT_PRIOR_LAMBDA,
            max_iterations: 20,
            tolerance: 1e-8,
        }
    }
}

impl PoseOptSpec {
    pub fn validate(&self) -> Result<()> {
        require_grid("subset size", &self.subset_sizes)?;
        require_grid("pixel sigma", &self.pixel_sigmas)?;
        require_grid("method", &self.methods)?;
        if let Some(k) = self.subset_sizes.iter().find(|&&k| k > self.scenario.n_points) {
            return Err(Error::Config(format!("subset size {k} exceeds n_points {}", self.scenario.n_points)));
        }
        if self.pixel_sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("pixel sigmas must be non-negative".into()));
        }
        self.scenario.validate().map_err(|e| Error::Config(e.to_string()))
    }

    fn gn_options(&self) -> GaussNewtonOptions {
        GaussNewtonOptions { max_iterations: self.max_iterations, tolerance: self.tolerance }
    }
}

pub const COLUMNS: [&str; 20] = [
    "method",
    "k",
    "pixel_sigma",
    "n_points",
    "map_sigma",
    "depth_min",
    "depth_max",
    "motion_translation",
    "motion_rotation",
    "prior_lambda",
    "trials",
    "base_seed",
    "successes",
    "failures",
    "mean_visible",
    "rms_trans_m",
    "rms_rot_deg",
    "mean_gain_evals",
    "mean_select_wall_s",
    "mean_solve_wall_s",
];

#[derive(Debug, Clone, Copy, Default)]
struct CellOutcome {
    error: Option<PoseError>,
    gain_evaluations: u64,
    select_wall: f64,
    solve_wall: f64,
}

struct TrialOutcome {
    visible: Option<usize>,
    /// Indexed `[method][k]`.
    cells: Vec<Vec<CellOutcome>>,
}

fn solve(spec: &PoseOptSpec, s: &Scenario, chosen: &mut [usize]) -> (Option<PoseError>, f64) {
    // sorting makes the observation order independent of selection order
    chosen.sort_unstable();
    let start = Instant::now();
    let obs = s.observations(chosen, false);
    let r = gauss_newton(s.camera(), &obs, &s.initial_pose(), &spec.gn_options());
    (r.ok().map(|r| pose_error(&r.pose, &s.true_pose)), start.elapsed().as_secs_f64())
}

fn run_trial(spec: &PoseOptSpec, sigma: f64, seed: u64) -> TrialOutcome {
    let empty = || vec![vec![CellOutcome::default(); spec.subset_sizes.len()]; spec.methods.len()];
    let cfg = ScenarioConfig { pixel_sigma: sigma, seed, ..spec.scenario };
    let Ok(s) = generate_scenario(&cfg) else { return TrialOutcome { visible: None, cells: empty() } };
    let Ok(blocks) = s.blocks_at(&s.initial_pose()) else { return TrialOutcome { visible: None, cells: empty() } };
    let n = blocks.len();

    let mut all_cell = None;
    let cells = spec
        .methods
        .iter()
        .map(|method| {
            spec.subset_sizes
                .iter()
                .enumerate()
                .map(|(ki, &k)| {
                    let k = k.min(n);
                    let problem = SelectionProblem::new(&blocks, k).with_prior(spec.prior_lambda).with_seed(child_seed(seed, ki as u64));
                    let start = Instant::now();
                    let (mut chosen, evals) = match method {
                        Method::All => {
                            if let Some(cell) = all_cell {
                                return cell;
                            }
                            ((0..n).collect::<Vec<_>>(), 0)
                        }
                        Method::Random => match random_select(&problem) {
                            Ok(r) => (r.chosen, r.gain_evaluations),
                            Err(_) => return CellOutcome::default(),
                        },
                        Method::Metric(kind) => match greedy_select(&problem.with_metric(*kind)) {
                            Ok(r) => (r.chosen, r.gain_evaluations),
                            Err(_) => return CellOutcome::default(),
                        },
                    };
                    let select_wall = start.elapsed().as_secs_f64();
                    let (error, solve_wall) = solve(spec, &s, &mut chosen);
                    let cell = CellOutcome { error, gain_evaluations: evals, select_wall, solve_wall };
                    if *method == Method::All {
                        all_cell = Some(cell);
                    }
                    cell
                })
                .collect()
        })
        .collect();
    TrialOutcome { visible: Some(n), cells }
}

/// Sweeps (pixel sigma, method, subset size); one report row per grid point,
/// ordered by sigma, then method, then subset size.
pub fn run_pose_opt_metrics(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate_common()?;
    let p = &spec.pose_opt;
    p.validate()?;
    let trials = spec.trials;
    let outcomes = run_indexed(spec.workers, p.pixel_sigmas.len() * trials, |i| {
        let (si, t) = (i / trials, i % trials);
        run_trial(p, p.pixel_sigmas[si], trial_seed(spec.base_seed, si as u64, t as u64))
    })?;

    let mut report = Report::new(&COLUMNS);
    for (si, &sigma) in p.pixel_sigmas.iter().enumerate() {
        let group = &outcomes[si * trials..(si + 1) * trials];
        let mut visible = Moments::default();
        group.iter().filter_map(|o| o.visible).for_each(|v| visible.push(v as f64));
        for (mi, method) in p.methods.iter().enumerate() {
            for (ki, &k) in p.subset_sizes.iter().enumerate() {
                let [mut trans, mut rot, mut evals, mut sel, mut sol] = [Moments::default(); 5];
                let mut failures = 0usize;
                for o in group {
                    let c = o.cells[mi][ki];
                    match (o.visible, c.error) {
                        (Some(_), Some(e)) => {
                            trans.push(e.translational);
                            rot.push(e.rotational_deg);
                            evals.push(c.gain_evaluations as f64);
                            sel.push(c.select_wall);
                            sol.push(c.solve_wall);
                        }
                        _ => failures += 1,
                    }
                }
                let sc = &p.scenario;
                report.push(vec![
                    method.to_string().into(),
                    k.into(),
                    sigma.into(),
                    sc.n_points.into(),
                    sc.map_sigma.into(),
                    sc.depth_min.into(),
                    sc.depth_max.into(),
                    sc.motion_translation.into(),
                    sc.motion_rotation.into(),
                    p.prior_lambda.into(),
                    trials.into(),
                    spec.base_seed.into(),
                    (trans.count as usize).into(),
                    failures.into(),
                    visible.mean().into(),
                    trans.rms().into(),
                    rot.rms().into(),
                    evals.mean().into(),
                    sel.mean().into(),
                    sol.mean().into(),
                ]);
            }
        }
    }
    Ok(report)
}

/// Max-logDet must not lose to random selection at any subset size, and at
/// `k = n_points` it must match the all-feature result exactly.
pub fn check(report: &Report) -> Vec<Check> {
    let mut checks = Vec::new();
    let name = MetricKind::MaxLogDet.name();
    let find = |method: &str, k: f64, sigma: f64| {
        (0..report.rows.len()).find(|&r| {
            report.text_at(r, "method") == Some(method)
                && report.f64_at(r, "k") == Some(k)
                && report.f64_at(r, "pixel_sigma") == Some(sigma)
        })
    };
    for r in 0..report.rows.len() {
        if report.text_at(r, "method") != Some(name) {
            continue;
        }
        let (k, sigma) = (report.f64_at(r, "k").unwrap_or(f64::NAN), report.f64_at(r, "pixel_sigma").unwrap_or(f64::NAN));
        let ours = report.f64_at(r, "rms_trans_m").unwrap_or(f64::NAN);
        if let Some(rr) = find("Random", k, sigma) {
            let theirs = report.f64_at(rr, "rms_trans_m").unwrap_or(f64::NAN);
            checks.push(Check::new(
                format!("logdet<=random k={k} sigma={sigma}"),
                ours <= theirs,
                format!("{ours:.6e} vs {theirs:.6e}"),
            ));
        }
        if report.f64_at(r, "n_points") == Some(k) {
            if let Some(ra) = find("All", k, sigma) {
                let all = report.f64_at(ra, "rms_trans_m").unwrap_or(f64::NAN);
                checks.push(Check::new(
                    format!("logdet==all k={k} sigma={sigma}"),
                    (ours - all).abs() <= 1e-9,
                    format!("{ours:.9e} vs {all:.9e}"),
                ));
            }
        }
    }
    checks
}
