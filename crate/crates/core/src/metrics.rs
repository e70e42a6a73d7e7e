//! Matrix-revealing metrics over the 6×6 pose information matrix.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::linalg;
use crate::uncertainty::FeatureBlock;

/// Information accumulator `λI + Σ H_c(i)ᵀ H_c(i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoMatrix {
    m: Matrix6<f64>,
    prior_lambda: f64,
}

impl InfoMatrix {
    /// The bare prior `λI`.
    pub fn with_prior(prior_lambda: f64) -> Self {
        InfoMatrix { m: Matrix6::identity() * prior_lambda, prior_lambda }
    }

    /// Wraps an already accumulated matrix; `prior_lambda` records the part
    /// of the diagonal that came from the prior. The matrix is symmetrized.
    pub fn from_matrix(m: Matrix6<f64>, prior_lambda: f64) -> Self {
        InfoMatrix { m: (m + m.transpose()) * 0.5, prior_lambda }
    }

    pub fn from_blocks<'a>(prior_lambda: f64, blocks: impl IntoIterator<Item = &'a FeatureBlock>) -> Self {
        let mut info = InfoMatrix::with_prior(prior_lambda);
        for b in blocks {
            info.add_block(b);
        }
        info
    }

    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.m
    }

    pub fn prior_lambda(&self) -> f64 {
        self.prior_lambda
    }

    pub fn add_block(&mut self, block: &FeatureBlock) {
        self.m += block.information();
    }

    pub fn with_block(&self, block: &FeatureBlock) -> InfoMatrix {
        InfoMatrix { m: self.m + block.information(), prior_lambda: self.prior_lambda }
    }

    pub fn diagonal(&self) -> Vector6<f64> {
        self.m.diagonal()
    }

    pub fn log_det(&self) -> f64 {
        linalg::log_det_spd(&self.m)
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vector6<f64> {
        linalg::symmetric_eigenvalues(&self.m)
    }
}

/// The four matrix-revealing metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    MaxTrace,
    MinCond,
    MaxMinEigenValue,
    MaxLogDet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Maximize,
    Minimize,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] =
        [MetricKind::MaxTrace, MetricKind::MinCond, MetricKind::MaxMinEigenValue, MetricKind::MaxLogDet];

    pub fn direction(self) -> Direction {
        match self {
            MetricKind::MinCond => Direction::Minimize,
            _ => Direction::Maximize,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::MaxTrace => "Max-Trace",
            MetricKind::MinCond => "Min-Cond",
            MetricKind::MaxMinEigenValue => "Max-MinEigenValue",
            MetricKind::MaxLogDet => "Max-logDet",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "maxtrace" | "trace" => Ok(MetricKind::MaxTrace),
            "mincond" | "cond" => Ok(MetricKind::MinCond),
            "maxmineigenvalue" | "mineig" | "mineigenvalue" => Ok(MetricKind::MaxMinEigenValue),
            "maxlogdet" | "logdet" => Ok(MetricKind::MaxLogDet),
            _ => Err(Error::Config(format!("unknown metric `{s}`"))),
        }
    }
}

/// Scalar value of a metric. Singular matrices give `-inf` for logDet and
/// `+inf` for the condition number.
pub fn evaluate(kind: MetricKind, m: &InfoMatrix) -> f64 {
    match kind {
        MetricKind::MaxTrace => m.m.trace(),
        MetricKind::MaxLogDet => m.log_det(),
        MetricKind::MinCond => condition_number(&m.eigenvalues()),
        MetricKind::MaxMinEigenValue => m.eigenvalues()[5],
    }
}

fn condition_number(eig: &Vector6<f64>) -> f64 {
    if eig[5] > 0.0 {
        eig[0] / eig[5]
    } else {
        f64::INFINITY
    }
}

/// `logDet(M + BᵀB) − logDet(M)`.
pub fn logdet_gain(m: &InfoMatrix, block: &FeatureBlock) -> f64 {
    m.with_block(block).log_det() - m.log_det()
}

/// Hadamard upper bound `Σ log Q_ii` on the logDet of any SPD matrix with the
/// given diagonal.
pub fn hadamard_bound(diagonal: &Vector6<f64>) -> f64 {
    diagonal.iter().map(|d| d.ln()).sum()
}

/// A metric value oriented so that larger is always better.
///
/// For Min-Cond the primary key is the negated condition number and the
/// secondary key is the smallest eigenvalue, which separates candidates
/// whose accumulators are all singular.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricScore {
    pub primary: f64,
    pub secondary: f64,
}

impl MetricScore {
    pub const WORST: MetricScore = MetricScore { primary: f64::NEG_INFINITY, secondary: f64::NEG_INFINITY };

    pub fn of(kind: MetricKind, m: &InfoMatrix) -> MetricScore {
        match kind {
            MetricKind::MinCond => {
                let eig = m.eigenvalues();
                MetricScore { primary: -condition_number(&eig), secondary: eig[5] }
            }
            _ => MetricScore { primary: evaluate(kind, m), secondary: 0.0 },
        }
    }

    pub fn total_cmp(&self, other: &MetricScore) -> Ordering {
        self.primary.total_cmp(&other.primary).then(self.secondary.total_cmp(&other.secondary))
    }

    pub fn is_better_than(&self, other: &MetricScore) -> bool {
        self.total_cmp(other) == Ordering::Greater
    }
}
