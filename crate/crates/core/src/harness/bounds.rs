//! Tabulated lazier-greedy guarantees.

use serde::{Deserialize, Serialize};

use super::report::Report;
use super::{require_grid, Check, ExperimentSpec};
use crate::error::{Error, Result};
use crate::selection::theory_bounds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSpec {
    pub k: usize,
    pub mu: f64,
    pub epsilons: Vec<f64>,
    /// Adds the ε at which the probability bound vanishes, `e^(−μ) − e^(−1)`.
    pub include_zero_point: bool,
}

impl Default for BoundsSpec {
    fn default() -> Self {
        BoundsSpec {
            k: 450,
            mu: 0.8,
            epsilons: (1..100).map(|i| i as f64 * 0.005).collect(),
            include_zero_point: true,
        }
    }
}

/// The ε where the probability bound is exactly zero.
pub fn zero_point(mu: f64) -> f64 {
    (-mu).exp() - (-1.0f64).exp()
}

impl BoundsSpec {
    pub fn grid(&self) -> Result<Vec<f64>> {
        require_grid("epsilon", &self.epsilons)?;
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(Error::Config(format!("mu {} outside (0, 1]", self.mu)));
        }
        let mut grid = self.epsilons.clone();
        let z = zero_point(self.mu);
        if self.include_zero_point && z > 0.0 && !grid.contains(&z) {
            grid.push(z);
        }
        if let Some(e) = grid.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::Config(format!("epsilon {e} outside (0, 1)")));
        }
        grid.sort_by(f64::total_cmp);
        Ok(grid)
    }
}

pub const COLUMNS: [&str; 5] = ["k", "mu", "epsilon", "ratio_expectation", "probability"];

pub fn run_bounds_curve(spec: &ExperimentSpec) -> Result<Report> {
    let b = &spec.bounds;
    let mut report = Report::new(&COLUMNS);
    for eps in b.grid()? {
        let t = theory_bounds(b.k, b.mu, eps).map_err(|e| Error::Config(e.to_string()))?;
        report.push(vec![b.k.into(), b.mu.into(), eps.into(), t.ratio_expectation.into(), t.probability.into()]);
    }
    Ok(report)
}

/// Probability below `1e-9` at the zero point and an affine expectation column
/// with slope −1.
pub fn check(report: &Report) -> Vec<Check> {
    let mut checks = Vec::new();
    let rows = report.rows.len();
    let get = |r: usize, c: &str| report.f64_at(r, c).unwrap_or(f64::NAN);
    if rows == 0 {
        return vec![Check::new("bounds rows", false, "empty report")];
    }
    let z = zero_point(get(0, "mu"));
    match (0..rows).find(|&r| get(r, "epsilon") == z) {
        Some(r) => {
            let p = get(r, "probability");
            checks.push(Check::new("probability zero point", p < 1e-9, format!("p = {p:.3e} at eps = {z:.9}")));
        }
        None => checks.push(Check::new("probability zero point", false, "zero point not in grid")),
    }
    let mut worst: f64 = 0.0;
    for r in 0..rows {
        let expected = 1.0 - (-1.0f64).exp() - get(r, "epsilon");
        worst = worst.max((get(r, "ratio_expectation") - expected).abs());
    }
    checks.push(Check::new("expectation slope -1", worst < 1e-12, format!("max deviation {worst:.3e}")));
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_curve_passes_checks() {
        let report = run_bounds_curve(&ExperimentSpec::default()).unwrap();
        assert_eq!(report.rows.len(), 100);
        assert!(check(&report).iter().all(|c| c.passed));
    }

    #[test]
    fn probability_rises_away_from_zero_point() {
        let report = run_bounds_curve(&ExperimentSpec::default()).unwrap();
        let z = zero_point(0.8);
        let pts: Vec<(f64, f64)> =
            (0..report.rows.len()).map(|r| (report.f64_at(r, "epsilon").unwrap(), report.f64_at(r, "probability").unwrap())).collect();
        for w in pts.windows(2) {
            let ((e0, p0), (e1, p1)) = (w[0], w[1]);
            if e1 <= z {
                assert!(p1 <= p0, "decreasing towards the zero point");
            } else if e0 >= z {
                assert!(p1 >= p0, "increasing past the zero point");
            }
        }
    }

    #[test]
    fn invalid_mu_rejected() {
        let mut spec = ExperimentSpec::default();
        spec.bounds.mu = 0.0;
        assert!(run_bounds_curve(&spec).is_err());
    }
}
