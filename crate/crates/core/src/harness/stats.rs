//! Summary statistics shared by the experiments.

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::optimizer::pose_error;

/// Denominators below this make a normalized ratio meaningless.
pub const RATIO_FLOOR: f64 = 1e-12;

/// Running sums for mean and RMS.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.sum / self.count as f64
        }
    }

    pub fn rms(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            (self.sum_sq / self.count as f64).sqrt()
        }
    }
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let mut m = Moments::default();
    values.for_each(|v| m.push(v));
    m.rms()
}

/// RMS translational distance of the lazier estimates from the lazy ones,
/// normalized by the RMS translational error of the lazy estimates.
pub fn error_ratio(lazier: &[Pose], lazy: &[Pose], truths: &[Pose]) -> Result<f64> {
    if lazier.is_empty() || lazier.len() != lazy.len() || lazy.len() != truths.len() {
        return Err(Error::InvalidInput("error ratio needs equal-length, non-empty sequences".into()));
    }
    let num = rms(lazier.iter().zip(lazy).map(|(a, b)| pose_error(a, b).translational));
    let den = rms(lazy.iter().zip(truths).map(|(a, t)| pose_error(a, t).translational));
    if !(den >= RATIO_FLOOR) {
        return Err(Error::DegenerateBaseline(den));
    }
    Ok(num / den)
}

/// RMS difference of the objective values reached by the lazier runs and the
/// lazy run, normalized by the RMS of the lazy objective values.
pub fn objective_ratio(lazier: &[f64], lazy: &[f64]) -> Result<f64> {
    if lazier.is_empty() || lazier.len() != lazy.len() {
        return Err(Error::InvalidInput("objective ratio needs equal-length, non-empty sequences".into()));
    }
    let num = rms(lazier.iter().zip(lazy).map(|(a, b)| a - b));
    let den = rms(lazy.iter().copied());
    if !(den >= RATIO_FLOOR) {
        return Err(Error::DegenerateBaseline(den));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Twist;
    use nalgebra::Vector3;

    fn shifted(x: f64) -> Pose {
        Pose::exp(&Twist::new(Vector3::new(x, 0.0, 0.0), Vector3::zeros()))
    }

    #[test]
    fn identical_estimates_give_zero() {
        let est = vec![shifted(0.1), shifted(0.2)];
        let truth = vec![Pose::identity(); 2];
        assert_eq!(error_ratio(&est, &est, &truth).unwrap(), 0.0);
    }

    #[test]
    fn lazier_at_truth_gives_one() {
        let truth = vec![shifted(0.3), shifted(-0.1), Pose::identity()];
        let lazy: Vec<Pose> = truth.iter().map(|t| shifted(0.05).compose(t)).collect();
        let r = error_ratio(&truth, &lazy, &truth).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_malformed_inputs() {
        let p = vec![Pose::identity()];
        assert!(matches!(error_ratio(&p, &p, &p), Err(Error::DegenerateBaseline(_))));
        assert!(error_ratio(&[], &[], &[]).is_err());
        assert!(objective_ratio(&[1.0], &[1.0, 2.0]).is_err());
        assert_eq!(objective_ratio(&[2.0, 4.0], &[2.0, 4.0]).unwrap(), 0.0);
    }

    #[test]
    fn moments() {
        let mut m = Moments::default();
        [3.0, 4.0].iter().for_each(|v| m.push(*v));
        assert_eq!(m.mean(), 3.5);
        assert!((m.rms() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(Moments::default().rms().is_nan());
    }
}
