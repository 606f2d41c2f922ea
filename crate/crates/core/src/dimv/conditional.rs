//! Regularized conditional Gaussian moments on centered data.
//!
//! For predictors `o` and targets `m` the conditional mean is
//! `Σ_omᵀ (Σ_o + αI)⁻¹ u_o` and the conditional covariance is
//! `Σ_m − Σ_omᵀ (Σ_o + αI)⁻¹ Σ_om`. At `α = 0` these are the exact Gaussian
//! conditionals; for `α > 0` the mean is a ridge-regression prediction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dper::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::linalg::{ridge_block, subcolumn, submatrix, symmetrize, SymmetricFactor};

/// Clip threshold for slightly negative conditional variances.
pub const NEGATIVE_VARIANCE_TOL: f64 = 1e-9;

/// Ridge coefficients of one target on a predictor set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub feature: usize,
    pub predictors: Vec<usize>,
    pub beta: Vec<f64>,
    pub alpha_used: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha >= 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must be finite and >= 0, got {alpha}")))
    }
}

fn factor(sigma: &CovarianceMatrix, predictors: &[usize], alpha: f64) -> Result<SymmetricFactor> {
    check_alpha(alpha)?;
    SymmetricFactor::new(ridge_block(sigma.as_matrix(), predictors, alpha))
        .map_err(|e| e.within(format!("predictors {predictors:?}, alpha {alpha}")))
}

/// `β̂ = (Σ_o + αI)⁻¹ Σ_of` for target `feature` on `predictors`.
pub fn coefficients(
    sigma: &CovarianceMatrix,
    feature: usize,
    predictors: &[usize],
    alpha: f64,
) -> Result<CoefficientReport> {
    let beta = if predictors.is_empty() {
        Vec::new()
    } else {
        let f = factor(sigma, predictors, alpha)?;
        f.solve_vec(&subcolumn(sigma.as_matrix(), predictors, feature))
            .iter()
            .copied()
            .collect()
    };
    Ok(CoefficientReport {
        feature,
        predictors: predictors.to_vec(),
        beta,
        alpha_used: alpha,
    })
}

/// Conditional mean of `feature` for each row of `z_obs` (rows × predictors).
///
/// The system is factorized once for the whole block.
pub fn conditional_ridge_mean(
    sigma: &CovarianceMatrix,
    predictors: &[usize],
    feature: usize,
    z_obs: &DMatrix<f64>,
    alpha: f64,
) -> Result<DVector<f64>> {
    if z_obs.ncols() != predictors.len() {
        return Err(Error::Dimension(format!(
            "block has {} columns for {} predictors",
            z_obs.ncols(),
            predictors.len()
        )));
    }
    let report = coefficients(sigma, feature, predictors, alpha)?;
    Ok(apply_beta(z_obs, &report.beta))
}

pub(crate) fn apply_beta(z_obs: &DMatrix<f64>, beta: &[f64]) -> DVector<f64> {
    if beta.is_empty() {
        return DVector::zeros(z_obs.nrows());
    }
    z_obs * DVector::from_column_slice(beta)
}

/// `Σ_m − Σ_omᵀ (Σ_o + αI)⁻¹ Σ_om`, symmetrized, with diagonal entries in
/// `[−1e-9, 0)` clipped to 0.
pub fn conditional_covariance(
    sigma: &CovarianceMatrix,
    predictors: &[usize],
    targets: &[usize],
    alpha: f64,
) -> Result<DMatrix<f64>> {
    let s = sigma.as_matrix();
    let mut cov = submatrix(s, targets, targets);
    if !predictors.is_empty() && !targets.is_empty() {
        let f = factor(sigma, predictors, alpha)?;
        let cross = submatrix(s, predictors, targets);
        cov -= cross.transpose() * f.solve(&cross);
    }
    symmetrize(&mut cov);
    for i in 0..cov.nrows() {
        if cov[(i, i)] < 0.0 && cov[(i, i)] >= -NEGATIVE_VARIANCE_TOL {
            cov[(i, i)] = 0.0;
        }
    }
    Ok(cov)
}

/// Distribution of the target coordinates given observed predictor values
/// (centered units).
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalGaussian {
    pub targets: Vec<usize>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    alpha: f64,
}

impl ConditionalGaussian {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn conditional_gaussian(
    sigma: &CovarianceMatrix,
    predictors: &[usize],
    observed_values: &[f64],
    targets: &[usize],
    alpha: f64,
) -> Result<ConditionalGaussian> {
    if observed_values.len() != predictors.len() {
        return Err(Error::Dimension(format!(
            "{} observed values for {} predictors",
            observed_values.len(),
            predictors.len()
        )));
    }
    check_alpha(alpha)?;
    let s = sigma.as_matrix();
    let mean = if predictors.is_empty() {
        DVector::zeros(targets.len())
    } else {
        let f = factor(sigma, predictors, alpha)?;
        let w = f.solve_vec(&DVector::from_column_slice(observed_values));
        submatrix(s, predictors, targets).transpose() * w
    };
    Ok(ConditionalGaussian {
        targets: targets.to_vec(),
        mean,
        cov: conditional_covariance(sigma, predictors, targets, alpha)?,
        alpha,
    })
}
