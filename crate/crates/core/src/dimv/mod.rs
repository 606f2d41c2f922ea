//! Conditional-distribution imputation with ridge regularization.
//!
//! A [`DimvModel`] holds the train-set standardizer and the covariance of the
//! standardized train data. Imputation walks the features that have missing
//! test entries in ascending order. For each one it stacks test samples with
//! compatible missing patterns into blocks and fills the whole block with one
//! regularized conditional-mean solve.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{MaskedMatrix, MissingPattern, Standardizer};
use crate::dper::{estimate, CovarianceEstimator, CovarianceMatrix};
use crate::error::{Error, Result};
use crate::linalg::{ridge_block, subcolumn, SymmetricFactor};

pub mod conditional;
pub mod confidence;
pub mod redundant;
pub mod selection;

pub use conditional::{
    coefficients, conditional_covariance, conditional_gaussian, conditional_ridge_mean,
    CoefficientReport, ConditionalGaussian,
};
pub use confidence::{confidence_region, unstandardize_region, EllipsoidSpec};
pub use redundant::{redundant_feature_delta, RedundantFeatureReport};
pub use selection::{correlation, select_features};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationConfig {
    /// Correlation threshold for predictor selection, in `[0, 1)`.
    pub tau: f64,
    /// Number of predictors kept when none pass the threshold.
    pub k: usize,
    /// Ridge parameter added to the predictor covariance.
    pub alpha: f64,
    /// Zero-fill missing test entries and impute each feature in one block.
    pub init_with_zero: bool,
    /// Scale features to unit variance before estimation (centering always happens).
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ImputationConfig {
    fn default() -> Self {
        Self {
            tau: 0.0,
            k: 1,
            alpha: 0.0,
            init_with_zero: false,
            standardize: true,
        }
    }
}

impl ImputationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must lie in [0, 1), got {}", self.tau)));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Test samples imputed together for one target feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub feature: usize,
    /// Empty when the seed sample has no usable observed feature; such rows
    /// are imputed with the feature mean.
    pub predictors: Vec<usize>,
    pub row_ids: Vec<usize>,
    /// Standardized predictor values, `row_ids.len() × predictors.len()`.
    pub z_obs: DMatrix<f64>,
    pub seed_pattern: MissingPattern,
}

impl Block {
    pub fn seed_row(&self) -> usize {
        self.row_ids[0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub seed_row: usize,
    pub rows: Vec<usize>,
    /// Coefficients in standardized units.
    pub coefficients: CoefficientReport,
    /// Conditional variance of the target given the predictors, standardized units.
    pub conditional_variance: f64,
}

#[derive(Clone, Debug)]
pub struct ImputationResult {
    pub imputed: DMatrix<f64>,
    pub blocks: Vec<BlockReport>,
}

impl ImputationResult {
    /// Distinct coefficient reports, in feature order.
    pub fn coefficient_reports(&self) -> Vec<&CoefficientReport> {
        let mut out: Vec<&CoefficientReport> = Vec::new();
        for b in &self.blocks {
            if !out.iter().any(|c| {
                c.feature == b.coefficients.feature && c.predictors == b.coefficients.predictors
            }) {
                out.push(&b.coefficients);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DimvModel {
    standardizer: Standardizer,
    sigma: CovarianceMatrix,
    config: ImputationConfig,
}

impl DimvModel {
    pub fn fit(train: &MaskedMatrix, cfg: &ImputationConfig) -> Result<Self> {
        Self::fit_with(train, cfg, CovarianceEstimator::Dper)
    }

    pub fn fit_with(
        train: &MaskedMatrix,
        cfg: &ImputationConfig,
        estimator: CovarianceEstimator,
    ) -> Result<Self> {
        cfg.validate()?;
        let standardizer = if cfg.standardize {
            Standardizer::fit(train)?
        } else {
            Standardizer::fit_centering(train)?
        };
        let (_, sigma) = estimate(&standardizer.apply(train)?, estimator)?;
        Ok(Self {
            standardizer,
            sigma,
            config: cfg.clone(),
        })
    }

    pub fn from_parts(
        standardizer: Standardizer,
        sigma: CovarianceMatrix,
        config: ImputationConfig,
    ) -> Result<Self> {
        config.validate()?;
        if standardizer.len() != sigma.dim() {
            return Err(Error::Dimension(format!(
                "standardizer has {} features, covariance has {}",
                standardizer.len(),
                sigma.dim()
            )));
        }
        Ok(Self {
            standardizer,
            sigma,
            config,
        })
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// Covariance of the standardized train data.
    pub fn sigma(&self) -> &CovarianceMatrix {
        &self.sigma
    }

    pub fn config(&self) -> &ImputationConfig {
        &self.config
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.config.alpha = alpha;
        self.config.validate()?;
        Ok(self)
    }

    pub fn n_features(&self) -> usize {
        self.sigma.dim()
    }

    /// Covariance in original units.
    pub fn original_covariance(&self) -> DMatrix<f64> {
        let s = self.standardizer.scales();
        let m = self.sigma.as_matrix();
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s[i] * s[j])
    }

    /// Blocks for target `feature` over a standardized test matrix.
    pub fn plan_blocks(&self, test_std: &MaskedMatrix, feature: usize) -> Result<Vec<Block>> {
        let patterns = (0..test_std.nrows())
            .map(|i| test_std.pattern_of(i))
            .collect::<Result<Vec<_>>>()?;
        let zero_filled = self.config.init_with_zero.then(|| test_std.zero_filled());
        self.blocks_for(test_std, zero_filled.as_ref(), &patterns, feature)
    }

    fn blocks_for(
        &self,
        test_std: &MaskedMatrix,
        zero_filled: Option<&DMatrix<f64>>,
        patterns: &[MissingPattern],
        feature: usize,
    ) -> Result<Vec<Block>> {
        let p = test_std.ncols();
        let missing_rows: Vec<usize> = (0..test_std.nrows())
            .filter(|&i| patterns[i].is_missing(feature))
            .collect();
        if missing_rows.is_empty() {
            return Ok(Vec::new());
        }

        if let Some(filled) = zero_filled {
            let others: Vec<usize> = (0..p).filter(|&j| j != feature).collect();
            let predictors = match select_features(&self.sigma, feature, &others, &self.config) {
                Ok(f) => f,
                Err(Error::Selection { .. }) => Vec::new(),
                Err(e) => return Err(e),
            };
            return Ok(vec![Block {
                feature,
                z_obs: filled.select_rows(&missing_rows).select_columns(&predictors),
                predictors,
                seed_pattern: patterns[missing_rows[0]].clone(),
                row_ids: missing_rows,
            }]);
        }

        let values = test_std.values();
        let mut pending = missing_rows;
        let mut blocks = Vec::new();
        while let Some(&seed) = pending.first() {
            let seed_pattern = &patterns[seed];
            let observed = seed_pattern.available();
            let (predictors, members): (Vec<usize>, Vec<usize>) = if observed.is_empty() {
                // nothing to condition on: group rows that are equally empty
                let members = pending
                    .iter()
                    .copied()
                    .filter(|&i| patterns[i] == *seed_pattern)
                    .collect();
                (Vec::new(), members)
            } else {
                let predictors = select_features(&self.sigma, feature, &observed, &self.config)?;
                let members = pending
                    .iter()
                    .copied()
                    .filter(|&i| {
                        patterns[i].is_subset_of(seed_pattern)
                            && predictors.iter().all(|&j| !patterns[i].is_missing(j))
                    })
                    .collect();
                (predictors, members)
            };
            pending.retain(|i| !members.contains(i));
            blocks.push(Block {
                feature,
                z_obs: values.select_rows(&members).select_columns(&predictors),
                predictors,
                seed_pattern: seed_pattern.clone(),
                row_ids: members,
            });
        }
        Ok(blocks)
    }

    pub fn impute(&self, test: &MaskedMatrix) -> Result<ImputationResult> {
        if test.ncols() != self.n_features() {
            return Err(Error::Dimension(format!(
                "model has {} features, test has {}",
                self.n_features(),
                test.ncols()
            )));
        }
        let test_std = self.standardizer.apply(test)?;
        let patterns = (0..test.nrows())
            .map(|i| test.pattern_of(i))
            .collect::<Result<Vec<_>>>()?;
        let zero_filled = self.config.init_with_zero.then(|| test_std.zero_filled());

        let features: Vec<usize> = (0..test.ncols())
            .filter(|&j| (0..test.nrows()).any(|i| !test.is_observed(i, j)))
            .collect();
        let per_feature: Vec<Result<(Vec<BlockReport>, Vec<(usize, f64)>)>> = features
            .par_iter()
            .map(|&f| self.impute_feature(&test_std, zero_filled.as_ref(), &patterns, f))
            .collect();

        let mut imputed = test.values().clone();
        let mut blocks = Vec::new();
        for (&f, res) in features.iter().zip(per_feature) {
            let (reports, preds) = res?;
            for (row, v) in preds {
                imputed[(row, f)] = self.standardizer.invert_value(f, v);
            }
            blocks.extend(reports);
        }
        Ok(ImputationResult { imputed, blocks })
    }

    fn impute_feature(
        &self,
        test_std: &MaskedMatrix,
        zero_filled: Option<&DMatrix<f64>>,
        patterns: &[MissingPattern],
        feature: usize,
    ) -> Result<(Vec<BlockReport>, Vec<(usize, f64)>)> {
        let blocks = self.blocks_for(test_std, zero_filled, patterns, feature)?;
        let mut cache: HashMap<Vec<usize>, Arc<RidgeFit>> = HashMap::new();
        let mut reports = Vec::with_capacity(blocks.len());
        let mut preds = Vec::new();
        for block in blocks {
            let fit = match cache.get(&block.predictors) {
                Some(fit) => fit.clone(),
                None => {
                    let fit = Arc::new(
                        RidgeFit::new(&self.sigma, feature, &block.predictors, self.config.alpha)
                            .map_err(|e| {
                                e.within(format!(
                                    "feature {feature}, block seeded at row {}",
                                    block.seed_row()
                                ))
                            })?,
                    );
                    cache.insert(block.predictors.clone(), fit.clone());
                    fit
                }
            };
            let z = conditional::apply_beta(&block.z_obs, fit.beta.as_slice());
            preds.extend(block.row_ids.iter().copied().zip(z.iter().copied()));
            reports.push(BlockReport {
                seed_row: block.seed_row(),
                rows: block.row_ids,
                coefficients: CoefficientReport {
                    feature,
                    predictors: block.predictors,
                    beta: fit.beta.iter().copied().collect(),
                    alpha_used: self.config.alpha,
                },
                conditional_variance: fit.conditional_variance,
            });
        }
        Ok((reports, preds))
    }

    /// Coefficients for `feature` given the `observed` features, after predictor selection.
    pub fn explain(&self, feature: usize, observed: &[usize]) -> Result<CoefficientReport> {
        self.check_feature(feature)?;
        for &j in observed {
            self.check_feature(j)?;
        }
        let predictors = select_features(&self.sigma, feature, observed, &self.config)?;
        coefficients(&self.sigma, feature, &predictors, self.config.alpha)
    }

    fn check_feature(&self, j: usize) -> Result<()> {
        if j >= self.n_features() {
            return Err(Error::Index {
                index: j,
                len: self.n_features(),
            });
        }
        Ok(())
    }
}

/// Ridge coefficients and residual variance for one (target, predictor set).
pub(crate) struct RidgeFit {
    pub(crate) beta: DVector<f64>,
    pub(crate) conditional_variance: f64,
}

impl RidgeFit {
    pub(crate) fn new(
        sigma: &CovarianceMatrix,
        feature: usize,
        predictors: &[usize],
        alpha: f64,
    ) -> Result<Self> {
        let s = sigma.as_matrix();
        if predictors.is_empty() {
            return Ok(Self {
                beta: DVector::zeros(0),
                conditional_variance: s[(feature, feature)],
            });
        }
        let factor = SymmetricFactor::new(ridge_block(s, predictors, alpha))?;
        let cross = subcolumn(s, predictors, feature);
        let beta = factor.solve_vec(&cross);
        let var = s[(feature, feature)] - cross.dot(&beta);
        Ok(Self {
            beta,
            conditional_variance: if (-conditional::NEGATIVE_VARIANCE_TOL..0.0).contains(&var) {
                0.0
            } else {
                var
            },
        })
    }
}

/// Fit on `train` and impute `test` in one call.
pub fn impute(
    train: &MaskedMatrix,
    test: &MaskedMatrix,
    cfg: &ImputationConfig,
) -> Result<ImputationResult> {
    if train.ncols() != test.ncols() {
        return Err(Error::Dimension(format!(
            "train has {} features, test has {}",
            train.ncols(),
            test.ncols()
        )));
    }
    DimvModel::fit(train, cfg)?.impute(test)
}
