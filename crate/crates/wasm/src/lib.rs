//! Browser bindings for the demo page in `www/`.
//!
//! Each export returns a JSON string; the plain functions behind them are
//! usable (and tested) natively.

use gfmatch::harness::bounds::zero_point;
use gfmatch::metrics::MetricKind;
use gfmatch::optimizer::{gauss_newton, pose_error, GaussNewtonOptions};
use gfmatch::selection::{
    greedy_select, lazier_greedy_select, lazy_greedy_select, random_select, sample_size, theory_bounds,
    SelectionProblem, SelectionResult,
};
use gfmatch::simworld::{generate_scenario, Scenario, ScenarioConfig};
use gfmatch::{Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const PRIOR_LAMBDA: f64 = 1e-6;

#[derive(Serialize)]
pub struct BoundsCurve {
    pub k: usize,
    pub mu: f64,
    pub zero_point: f64,
    pub epsilon: Vec<f64>,
    pub ratio_expectation: Vec<f64>,
    pub probability: Vec<f64>,
}

pub fn bounds_curve_data(k: usize, mu: f64, steps: usize) -> Result<BoundsCurve> {
    if steps < 2 {
        return Err(Error::InvalidInput("need at least 2 steps".into()));
    }
    let mut curve = BoundsCurve {
        k,
        mu,
        zero_point: zero_point(mu),
        epsilon: Vec::with_capacity(steps),
        ratio_expectation: Vec::with_capacity(steps),
        probability: Vec::with_capacity(steps),
    };
    let (lo, hi) = (0.001, 0.5);
    for i in 0..steps {
        let eps = lo + (hi - lo) * i as f64 / (steps - 1) as f64;
        let b = theory_bounds(k, mu, eps)?;
        curve.epsilon.push(eps);
        curve.ratio_expectation.push(b.ratio_expectation);
        curve.probability.push(b.probability);
    }
    Ok(curve)
}

#[derive(Serialize)]
pub struct FeaturePoint {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    pub selected: bool,
}

#[derive(Serialize)]
pub struct MethodError {
    pub method: String,
    pub translational_m: f64,
    pub rotational_deg: f64,
    pub converged: bool,
}

#[derive(Serialize)]
pub struct FeatureSelection {
    pub width: f64,
    pub height: f64,
    pub visible: usize,
    pub k: usize,
    pub metric: String,
    pub points: Vec<FeaturePoint>,
    pub errors: Vec<MethodError>,
}

fn scenario(n_points: usize, pixel_sigma: f64, seed: u64) -> Result<Scenario> {
    generate_scenario(&ScenarioConfig { n_points, pixel_sigma, seed, ..ScenarioConfig::default() })
}

fn solve(s: &Scenario, method: &str, measurement_indices: &[usize]) -> Result<MethodError> {
    let obs = s.observations(measurement_indices, false);
    let report = gauss_newton(s.camera(), &obs, &s.initial_pose(), &GaussNewtonOptions::default())?;
    let err = pose_error(&report.pose, &s.true_pose);
    Ok(MethodError {
        method: method.to_string(),
        translational_m: err.translational,
        rotational_deg: err.rotational_deg,
        converged: report.converged,
    })
}

pub fn select_features_data(n_points: usize, k: usize, metric: &str, pixel_sigma: f64, seed: u64) -> Result<FeatureSelection> {
    let metric: MetricKind = metric.parse()?;
    let s = scenario(n_points, pixel_sigma, seed)?;
    let pose = s.initial_pose();
    let blocks = s.blocks_at(&pose)?;
    let k = k.min(blocks.len());
    let problem = SelectionProblem::new(&blocks, k).with_metric(metric).with_prior(PRIOR_LAMBDA).with_seed(seed);
    let chosen = greedy_select(&problem)?.chosen_sorted();
    let random = random_select(&problem)?.chosen_sorted();
    let all: Vec<usize> = (0..blocks.len()).collect();

    let mut selected = vec![false; blocks.len()];
    for &i in &chosen {
        selected[i] = true;
    }
    let points = s
        .measurements
        .iter()
        .zip(selected)
        .map(|(m, selected)| FeaturePoint {
            u: m.pixel.x,
            v: m.pixel.y,
            depth: s.true_pose.transform_point(&s.points_true[m.point]).z,
            selected,
        })
        .collect();
    let errors = vec![solve(&s, metric.name(), &chosen)?, solve(&s, "Random", &random)?, solve(&s, "All", &all)?];
    let cam = s.camera();
    Ok(FeatureSelection {
        width: cam.width,
        height: cam.height,
        visible: blocks.len(),
        k,
        metric: metric.name().to_string(),
        points,
        errors,
    })
}

#[derive(Serialize)]
pub struct SelectorRun {
    pub selector: String,
    pub gain_evaluations: u64,
    pub logdet: f64,
    pub wall_ms: f64,
    pub round_evaluations: Vec<u64>,
}

#[derive(Serialize)]
pub struct LazierComparison {
    pub n: usize,
    pub k: usize,
    pub epsilon: f64,
    pub sample_size: usize,
    pub overlap: usize,
    pub runs: Vec<SelectorRun>,
}

fn run_summary(name: &str, r: &SelectionResult) -> SelectorRun {
    SelectorRun {
        selector: name.to_string(),
        gain_evaluations: r.gain_evaluations,
        logdet: r.metric_value,
        wall_ms: r.wall_time.as_secs_f64() * 1e3,
        round_evaluations: r.round_evaluations.clone(),
    }
}

pub fn lazier_vs_lazy_data(n: usize, k: usize, epsilon: f64, seed: u64) -> Result<LazierComparison> {
    // oversample so that roughly n points are visible
    let s = scenario(n + n * 3 / 5, ScenarioConfig::default().pixel_sigma, seed)?;
    let mut blocks = s.blocks_at(&s.initial_pose())?;
    blocks.truncate(n);
    let n = blocks.len();
    let k = k.min(n);
    let problem = SelectionProblem::new(&blocks, k).with_prior(PRIOR_LAMBDA).with_epsilon(epsilon).with_seed(seed);
    let greedy = greedy_select(&problem)?;
    let lazy = lazy_greedy_select(&problem)?;
    let lazier = lazier_greedy_select(&problem)?;
    let lazy_set = lazy.chosen_sorted();
    let overlap = lazier.chosen.iter().filter(|i| lazy_set.binary_search(i).is_ok()).count();
    Ok(LazierComparison {
        n,
        k,
        epsilon,
        sample_size: sample_size(n, k, epsilon),
        overlap,
        runs: vec![run_summary("greedy", &greedy), run_summary("lazy", &lazy), run_summary("lazier", &lazier)],
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn bounds_curve(k: usize, mu: f64, steps: usize) -> std::result::Result<String, JsError> {
    to_js(bounds_curve_data(k, mu, steps))
}

#[wasm_bindgen]
pub fn select_features(
    n_points: usize,
    k: usize,
    metric: &str,
    pixel_sigma: f64,
    seed: u64,
) -> std::result::Result<String, JsError> {
    to_js(select_features_data(n_points, k, metric, pixel_sigma, seed))
}

#[wasm_bindgen]
pub fn lazier_vs_lazy(n: usize, k: usize, epsilon: f64, seed: u64) -> std::result::Result<String, JsError> {
    to_js(lazier_vs_lazy_data(n, k, epsilon, seed))
}
