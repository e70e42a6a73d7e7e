//! Residual whitening and pose covariance.
//!
//! A matched feature contributes the residual covariance
//! `Σ_r = Σ_z + H_p Σ_p H_pᵀ`. Pre-multiplying its pose Jacobian by the
//! inverse Cholesky factor of `Σ_r` yields the whitened block `H_c(i)`; the
//! pose covariance is then `(Σ H_c(i)ᵀ H_c(i))⁻¹`.

use nalgebra::{Dyn, Matrix2, Matrix2x3, Matrix2x6, Matrix3, Matrix6, OMatrix, U6};

use crate::error::{Error, Result};
use crate::linalg;

/// Default per-axis standard deviation of map points, meters.
pub const DEFAULT_MAP_SIGMA: f64 = 0.02;
/// Default ratio between consecutive image pyramid levels.
pub const DEFAULT_PYRAMID_SCALE: f64 = 1.2;
/// Relative eigenvalue threshold below which an information matrix counts as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Measurement and map-point noise for a feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma_z: Matrix2<f64>,
    pub sigma_p: Matrix3<f64>,
    pub pyramid_scale_factor: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            sigma_z: Matrix2::identity(),
            sigma_p: Matrix3::identity() * (DEFAULT_MAP_SIGMA * DEFAULT_MAP_SIGMA),
            pyramid_scale_factor: DEFAULT_PYRAMID_SCALE,
        }
    }
}

impl NoiseModel {
    pub fn isotropic(pixel_sigma: f64, map_sigma: f64) -> Result<Self> {
        let model = NoiseModel {
            sigma_z: Matrix2::identity() * (pixel_sigma * pixel_sigma),
            sigma_p: Matrix3::identity() * (map_sigma * map_sigma),
            pyramid_scale_factor: DEFAULT_PYRAMID_SCALE,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks symmetry and positive eigenvalues. `sigma_p` may be zero
    /// (a perfectly known map), which is accepted.
    pub fn validate(&self) -> Result<()> {
        if !is_symmetric(&self.sigma_z) || !is_symmetric(&self.sigma_p) {
            return Err(Error::InvalidInput("noise covariances must be symmetric".into()));
        }
        if linalg::cholesky(&self.sigma_z).is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        if linalg::symmetric_eigenvalues(&self.sigma_p).min() < 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        if !(self.pyramid_scale_factor > 1.0) {
            return Err(Error::InvalidInput("pyramid scale factor must exceed 1".into()));
        }
        Ok(())
    }
}

fn is_symmetric<const N: usize>(m: &nalgebra::SMatrix<f64, N, N>) -> bool {
    (m - m.transpose()).abs().max() <= 1e-12 * m.abs().max().max(1.0)
}

/// Whitened Jacobian rows of one feature: 2×6 for a monocular match, 4×6
/// when a right-image match is stacked below the left rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub feature_id: usize,
    rows: OMatrix<f64, Dyn, U6>,
    information: Matrix6<f64>,
    stereo_matched: bool,
}

impl FeatureBlock {
    pub fn mono(feature_id: usize, rows: Matrix2x6<f64>) -> Self {
        let mut stacked = OMatrix::<f64, Dyn, U6>::zeros(2);
        stacked.fixed_view_mut::<2, 6>(0, 0).copy_from(&rows);
        Self::from_rows(feature_id, stacked, false)
    }

    /// Stacks left rows over right rows.
    pub fn stereo(feature_id: usize, left: Matrix2x6<f64>, right: Matrix2x6<f64>) -> Self {
        let mut rows = OMatrix::<f64, Dyn, U6>::zeros(4);
        rows.fixed_view_mut::<2, 6>(0, 0).copy_from(&left);
        rows.fixed_view_mut::<2, 6>(2, 0).copy_from(&right);
        Self::from_rows(feature_id, rows, true)
    }

    /// Block with arbitrary rows, used for synthetic selection instances.
    pub fn from_row_matrix(feature_id: usize, rows: OMatrix<f64, Dyn, U6>) -> Result<Self> {
        if !(rows.nrows() == 2 || rows.nrows() == 4) || !rows.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "feature block must have 2 or 4 finite rows, got {}",
                rows.nrows()
            )));
        }
        let stereo = rows.nrows() == 4;
        Ok(Self::from_rows(feature_id, rows, stereo))
    }

    fn from_rows(feature_id: usize, rows: OMatrix<f64, Dyn, U6>, stereo_matched: bool) -> Self {
        let information = rows.transpose() * &rows;
        let information = (information + information.transpose()) * 0.5;
        FeatureBlock { feature_id, rows, information, stereo_matched }
    }

    pub fn rows(&self) -> &OMatrix<f64, Dyn, U6> {
        &self.rows
    }

    /// `H_c(i)ᵀ H_c(i)`.
    pub fn information(&self) -> &Matrix6<f64> {
        &self.information
    }

    pub fn stereo_matched(&self) -> bool {
        self.stereo_matched
    }

    pub fn row_count(&self) -> usize {
        self.rows.nrows()
    }

    /// The first two (left-image) rows.
    pub fn left_rows(&self) -> Matrix2x6<f64> {
        self.rows.fixed_rows::<2>(0).into_owned()
    }
}

/// `Σ_r = Σ_z + H_p Σ_p H_pᵀ`, symmetrized.
pub fn residual_covariance(h_p: &Matrix2x3<f64>, sigma_z: &Matrix2<f64>, sigma_p: &Matrix3<f64>) -> Matrix2<f64> {
    let s = sigma_z + h_p * sigma_p * h_p.transpose();
    (s + s.transpose()) * 0.5
}

/// Lower Cholesky factor `W_r` of the residual covariance.
pub fn residual_factor(h_p: &Matrix2x3<f64>, sigma_z: &Matrix2<f64>, sigma_p: &Matrix3<f64>) -> Result<Matrix2<f64>> {
    linalg::cholesky(&residual_covariance(h_p, sigma_z, sigma_p)).ok_or(Error::NotPositiveDefinite)
}

/// `W_r⁻¹ H_x` computed by forward substitution.
pub fn whiten_rows(
    h_x: &Matrix2x6<f64>,
    h_p: &Matrix2x3<f64>,
    sigma_z: &Matrix2<f64>,
    sigma_p: &Matrix3<f64>,
) -> Result<Matrix2x6<f64>> {
    let w = residual_factor(h_p, sigma_z, sigma_p)?;
    Ok(linalg::forward_substitute(&w, h_x))
}

/// Whitened monocular block for one feature.
pub fn residual_whiten(
    feature_id: usize,
    h_x: &Matrix2x6<f64>,
    h_p: &Matrix2x3<f64>,
    sigma_z: &Matrix2<f64>,
    sigma_p: &Matrix3<f64>,
) -> Result<FeatureBlock> {
    Ok(FeatureBlock::mono(feature_id, whiten_rows(h_x, h_p, sigma_z, sigma_p)?))
}

/// Measurement covariance of a keypoint extracted at a pyramid level:
/// `(base_sigma_px · scale_factor^level)² · I`.
pub fn scale_level_cov(level: u32, scale_factor: f64, base_sigma_px: f64) -> Matrix2<f64> {
    let sigma = base_sigma_px * scale_factor.powi(level as i32);
    Matrix2::identity() * (sigma * sigma)
}

/// Sum of the blocks' information matrices.
pub fn stacked_information<'a>(blocks: impl IntoIterator<Item = &'a FeatureBlock>) -> Matrix6<f64> {
    blocks.into_iter().fold(Matrix6::zeros(), |acc, b| acc + b.information())
}

/// `Σ_x = (H_cᵀ H_c)⁻¹` over the stacked blocks.
pub fn pose_covariance(blocks: &[FeatureBlock]) -> Result<Matrix6<f64>> {
    covariance_from_information(&stacked_information(blocks))
}

pub fn covariance_from_information(info: &Matrix6<f64>) -> Result<Matrix6<f64>> {
    let eig = linalg::symmetric_eigenvalues(info);
    let (max, min) = (eig[0], eig[5]);
    if !(max > 0.0) || min <= RANK_TOLERANCE * max {
        return Err(Error::RankDeficient);
    }
    linalg::spd_inverse(info).ok_or(Error::RankDeficient)
}
