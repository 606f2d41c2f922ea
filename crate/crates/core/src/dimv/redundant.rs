//! Effect of adding one weakly related predictor to a conditional mean.
//!
//! For target `m`, core predictors `O` and an extra predictor `e`, the
//! change in the imputed value from conditioning on `e` as well is
//!
//! ```text
//! (Σ_mo Σ_o⁻¹ Σ_oe − ε)(Σ_eo Σ_o⁻¹ x_o − x_e) / (σ_e − Σ_eo Σ_o⁻¹ Σ_oe)
//! ```
//!
//! where `ε = σ_me`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dper::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::linalg::{ridge_block, subcolumn, SymmetricFactor};

pub const GAMMA_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RedundantFeatureReport {
    /// Imputation with `e` minus imputation without it.
    pub delta: f64,
    pub gamma: f64,
    pub numerator_corr_part: f64,
    pub numerator_resid_part: f64,
}

pub fn redundant_feature_delta(
    sigma: &CovarianceMatrix,
    feature: usize,
    core: &[usize],
    extra: usize,
    x_core: &[f64],
    x_extra: f64,
) -> Result<RedundantFeatureReport> {
    if x_core.len() != core.len() {
        return Err(Error::Dimension(format!(
            "{} values for {} core predictors",
            x_core.len(),
            core.len()
        )));
    }
    if core.contains(&feature) || core.contains(&extra) || extra == feature {
        return Err(Error::Config(
            "target, core predictors and extra predictor must be disjoint".into(),
        ));
    }
    let s = sigma.as_matrix();
    let cross_e = subcolumn(s, core, extra);
    let cross_m = subcolumn(s, core, feature);
    let x_o = DVector::from_column_slice(x_core);

    // Σ_o⁻¹ Σ_oe and Σ_o⁻¹ x_o; an empty core contributes nothing
    let (w_e, w_x) = if core.is_empty() {
        (DVector::zeros(0), DVector::zeros(0))
    } else {
        let f = SymmetricFactor::new(ridge_block(s, core, 0.0))
            .map_err(|e| e.within(format!("core predictors {core:?}")))?;
        (f.solve_vec(&cross_e), f.solve_vec(&x_o))
    };

    let gamma = s[(extra, extra)] - cross_e.dot(&w_e);
    if gamma.abs() <= GAMMA_TOL {
        return Err(Error::Degenerate(format!(
            "feature {extra} is fully explained by {core:?} (gamma = {gamma:.3e})"
        )));
    }
    let corr = cross_m.dot(&w_e) - s[(feature, extra)];
    let resid = cross_e.dot(&w_x) - x_extra;
    Ok(RedundantFeatureReport {
        delta: corr * resid / gamma,
        gamma,
        numerator_corr_part: corr,
        numerator_resid_part: resid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn sigma() -> CovarianceMatrix {
        #[rustfmt::skip]
        let m = DMatrix::from_row_slice(3, 3, &[
            1.0, 0.3, 0.6,
            0.3, 1.0, 0.18,
            0.6, 0.18, 1.0,
        ]);
        CovarianceMatrix::new(m).unwrap()
    }

    #[test]
    fn explained_correlation_gives_zero_delta() {
        // σ_me = σ_mo σ_o⁻¹ σ_oe = 0.6·0.3
        let r = redundant_feature_delta(&sigma(), 2, &[0], 1, &[1.5], -0.4).unwrap();
        assert!(r.numerator_corr_part.abs() < 1e-15);
        assert!(r.delta.abs() < 1e-15);
    }

    #[test]
    fn predicted_extra_value_gives_zero_delta() {
        let mut m = sigma().into_matrix();
        m[(1, 2)] = -0.2;
        m[(2, 1)] = -0.2;
        let s = CovarianceMatrix::new(m).unwrap();
        let r = redundant_feature_delta(&s, 2, &[0], 1, &[2.0], 0.6).unwrap();
        assert!(r.numerator_resid_part.abs() < 1e-15);
        assert!(r.delta.abs() < 1e-15);
    }

    #[test]
    fn degenerate_extra_feature() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.5, 1.0, 1.0, 0.5, 0.5, 0.5, 1.0]);
        let s = CovarianceMatrix::new(m).unwrap();
        assert!(matches!(
            redundant_feature_delta(&s, 2, &[0], 1, &[1.0], 1.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn empty_core() {
        let r = redundant_feature_delta(&sigma(), 2, &[], 1, &[], 2.0).unwrap();
        assert!((r.delta - 0.18 * 2.0).abs() < 1e-15);
    }
}
