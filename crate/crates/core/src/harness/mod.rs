//! Seeded simulation experiments producing CSV reports.

pub mod bounds;
pub mod lazier;
pub mod matching_sim;
pub mod pose_opt;
pub mod report;
pub mod seeds;
pub mod stats;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricKind;
use crate::simworld::fixture::write_scenario;
use crate::simworld::{generate_scenario, ScenarioConfig};

pub use bounds::{run_bounds_curve, BoundsSpec};
pub use lazier::{run_lazier_benchmark, ErrorRatioDefinition, LazierSpec};
pub use matching_sim::{run_matching_sim, MatchingSimSpec};
pub use pose_opt::{run_pose_opt_metrics, PoseOptSpec};
pub use report::{format_sig9, Cell, Report};
pub use stats::{error_ratio, objective_ratio};

pub const DEFAULT_TRIALS: usize = 100;
pub const FULL_SCALE_TRIALS: usize = 300;

/// Settings for every experiment; a config file may set any subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub trials: usize,
    pub base_seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub pose_opt: PoseOptSpec,
    pub lazier: LazierSpec,
    pub matching: MatchingSimSpec,
    pub bounds: BoundsSpec,
    pub fixtures: FixtureSpec,
}

/// Scenarios written by the fixture emitter: seeds `base_seed..base_seed + count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSpec {
    pub scenario: ScenarioConfig,
    pub count: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec { scenario: ScenarioConfig::default(), count: 3 }
    }
}

/// File name and text of every fixture described by the experiment settings.
pub fn emit_fixtures(spec: &ExperimentSpec) -> Result<Vec<(String, String)>> {
    let f = &spec.fixtures;
    f.scenario.validate().map_err(|e| Error::Config(e.to_string()))?;
    (0..f.count as u64)
        .map(|i| {
            let seed = spec.base_seed.wrapping_add(i);
            let s = generate_scenario(&ScenarioConfig { seed, ..f.scenario })?;
            Ok((format!("scenario_{seed}.txt"), write_scenario(&s)))
        })
        .collect()
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            trials: DEFAULT_TRIALS,
            base_seed: 0,
            workers: 0,
            pose_opt: PoseOptSpec::default(),
            lazier: LazierSpec::default(),
            matching: MatchingSimSpec::default(),
            bounds: BoundsSpec::default(),
            fixtures: FixtureSpec::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate_common(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        Ok(())
    }
}

/// Selection method compared in the pose experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Metric(MetricKind),
    Random,
    All,
}

impl Method {
    pub const ALL_METHODS: [Method; 6] = [
        Method::Metric(MetricKind::MaxTrace),
        Method::Metric(MetricKind::MinCond),
        Method::Metric(MetricKind::MaxMinEigenValue),
        Method::Metric(MetricKind::MaxLogDet),
        Method::Random,
        Method::All,
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Metric(m) => write!(f, "{m}"),
            Method::Random => f.write_str("Random"),
            Method::All => f.write_str("All"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Method::Random),
            "all" => Ok(Method::All),
            _ => s.parse().map(Method::Metric),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// Maps `f` over `0..n` on a pool of `workers` threads; results keep index order.
pub fn run_indexed<T, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
}

/// Outcome of one acceptance threshold evaluated on a report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub(crate) fn require_grid<T>(name: &str, grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config(format!("{name} grid is empty")));
    }
    Ok(())
}
