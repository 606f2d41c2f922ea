use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::PIVOT_RTOL;
use crate::stats::chi_square_upper_quantile;

use super::conditional::ConditionalGaussian;

/// Solid ellipsoid `{u : (u − center)ᵀ A (u − center) ≤ threshold}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidSpec {
    pub center: Vec<f64>,
    /// `A`, the inverse of the conditional covariance, row-major.
    pub shape_inverse: Vec<Vec<f64>>,
    pub threshold: f64,
    pub dof: usize,
    pub sig_level: f64,
}

impl EllipsoidSpec {
    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        let d: Vec<f64> = u.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        self.shape_inverse
            .iter()
            .zip(&d)
            .map(|(row, di)| di * row.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        self.quadratic_form(u) <= self.threshold
    }
}

/// `(1 − sig_level)` confidence ellipsoid for the target coordinates.
///
/// Only defined for unregularized conditionals (`α = 0`).
pub fn confidence_region(cond: &ConditionalGaussian, sig_level: f64) -> Result<EllipsoidSpec> {
    if cond.alpha() != 0.0 {
        return Err(Error::Config(format!(
            "confidence regions require alpha = 0, conditional was computed with alpha = {}",
            cond.alpha()
        )));
    }
    if !(sig_level > 0.0 && sig_level < 1.0) {
        return Err(Error::Config(format!("significance level {sig_level} not in (0, 1)")));
    }
    let dim = cond.dim();
    if dim == 0 {
        return Err(Error::Config("no target coordinates".into()));
    }
    let scale = cond.cov.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let singular = || {
        Error::Degenerate(
            "conditional covariance is singular; exclude collinear predictors".into(),
        )
    };
    let chol = Cholesky::new(cond.cov.clone()).ok_or_else(singular)?;
    let l = chol.l_dirty();
    if !(scale > 0.0) || (0..dim).any(|i| l[(i, i)] * l[(i, i)] < PIVOT_RTOL * scale) {
        return Err(singular());
    }
    let inv: DMatrix<f64> = chol.inverse();
    Ok(EllipsoidSpec {
        center: cond.mean.iter().copied().collect(),
        shape_inverse: inv.row_iter().map(|r| r.iter().copied().collect()).collect(),
        threshold: chi_square_upper_quantile(dim, sig_level)?,
        dof: dim,
        sig_level,
    })
}

/// Map an ellipsoid from standardized units back to original units.
pub fn unstandardize_region(spec: &EllipsoidSpec, means: &[f64], scales: &[f64]) -> EllipsoidSpec {
    let center = spec
        .center
        .iter()
        .enumerate()
        .map(|(i, c)| c * scales[i] + means[i])
        .collect();
    let shape_inverse = spec
        .shape_inverse
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, a)| a / (scales[i] * scales[j]))
                .collect()
        })
        .collect();
    EllipsoidSpec {
        center,
        shape_inverse,
        ..spec.clone()
    }
}
