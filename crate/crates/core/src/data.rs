//! Masked data matrices, per-row missing patterns and column standardization.
//!
//! Rows are samples and columns are features. Missingness is carried by an
//! explicit boolean mask (`true` = observed); the value stored under a
//! missing entry is unspecified and never read.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct MaskedMatrix {
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
}

/// Equal masks and equal observed values; whatever sits under the mask is ignored.
impl PartialEq for MaskedMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.mask == other.mask
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .zip(self.mask.iter())
                .all(|((a, b), &obs)| !obs || a == b)
    }
}

impl MaskedMatrix {
    /// Pair a value matrix with its observation mask.
    ///
    /// Every observed value must be finite.
    pub fn new(values: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(Error::Dimension(format!(
                "values are {:?} but mask is {:?}",
                values.shape(),
                mask.shape()
            )));
        }
        for j in 0..values.ncols() {
            for i in 0..values.nrows() {
                if mask[(i, j)] && !values[(i, j)].is_finite() {
                    return Err(Error::Validation(format!(
                        "observed entry ({i}, {j}) is not finite: {}",
                        values[(i, j)]
                    )));
                }
            }
        }
        Ok(Self { values, mask })
    }

    /// A fully observed matrix.
    pub fn complete(values: DMatrix<f64>) -> Result<Self> {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), true);
        Self::new(values, mask)
    }

    /// Build from row records where `None` marks a missing value.
    pub fn from_rows(rows: &[Vec<Option<f64>>], p: usize) -> Result<Self> {
        let n = rows.len();
        let mut values = DMatrix::from_element(n, p, f64::NAN);
        let mut mask = DMatrix::from_element(n, p, false);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {p}",
                    row.len()
                )));
            }
            for (j, cell) in row.iter().enumerate() {
                if let Some(v) = cell {
                    values[(i, j)] = *v;
                    mask[(i, j)] = true;
                }
            }
        }
        Self::new(values, mask)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    #[inline]
    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.mask[(row, col)]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.mask[(row, col)].then(|| self.values[(row, col)])
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&o| !o).count()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&o| o)
    }

    /// Observed values of column `col`, in row order.
    pub fn observed_column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.nrows()).filter_map(move |i| self.get(i, col))
    }

    /// Missing-feature pattern of one row.
    pub fn pattern_of(&self, row: usize) -> Result<MissingPattern> {
        if row >= self.nrows() {
            return Err(Error::Index {
                index: row,
                len: self.nrows(),
            });
        }
        Ok(MissingPattern {
            bits: (0..self.ncols()).map(|j| !self.mask[(row, j)]).collect(),
        })
    }

    /// Copy of the values with every missing entry set to zero.
    pub fn zero_filled(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows(), self.ncols(), |i, j| {
            if self.mask[(i, j)] {
                self.values[(i, j)]
            } else {
                0.0
            }
        })
    }

    /// Rows `ids`, in the given order.
    pub fn select_rows(&self, ids: &[usize]) -> MaskedMatrix {
        MaskedMatrix {
            values: self.values.select_rows(ids),
            mask: self.mask.select_rows(ids),
        }
    }
}

/// Missing features of a single sample; `bits[j]` is true when feature `j` is missing.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MissingPattern {
    bits: Vec<bool>,
}

impl MissingPattern {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_missing(&self, feature: usize) -> bool {
        self.bits[feature]
    }

    pub fn missing(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&j| self.bits[j]).collect()
    }

    pub fn available(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&j| !self.bits[j]).collect()
    }

    /// Whether every feature missing here is also missing in `other`.
    pub fn is_subset_of(&self, other: &MissingPattern) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Per-feature centering and scaling fitted on available entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl Standardizer {
    pub fn new(means: Vec<f64>, scales: Vec<f64>) -> Result<Self> {
        if means.len() != scales.len() {
            return Err(Error::Dimension(format!(
                "{} means but {} scales",
                means.len(),
                scales.len()
            )));
        }
        if let Some(j) = scales.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Validation(format!(
                "scale for feature {j} must be positive, got {}",
                scales[j]
            )));
        }
        if let Some(j) = means.iter().position(|m| !m.is_finite()) {
            return Err(Error::Validation(format!("mean for feature {j} is not finite")));
        }
        Ok(Self { means, scales })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            means: vec![0.0; p],
            scales: vec![1.0; p],
        }
    }

    /// Available-entry means and uncorrected standard deviations.
    ///
    /// Columns with zero variance or a single observation get scale 1.
    pub fn fit(x: &MaskedMatrix) -> Result<Self> {
        let mut means = Vec::with_capacity(x.ncols());
        let mut scales = Vec::with_capacity(x.ncols());
        for j in 0..x.ncols() {
            let (mean, var) = available_moments(x, j)?;
            means.push(mean);
            scales.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Ok(Self { means, scales })
    }

    /// Centering only: available-entry means with unit scales.
    pub fn fit_centering(x: &MaskedMatrix) -> Result<Self> {
        let means = (0..x.ncols())
            .map(|j| available_moments(x, j).map(|(m, _)| m))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scales: vec![1.0; means.len()],
            means,
        })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    #[inline]
    pub fn apply_value(&self, feature: usize, v: f64) -> f64 {
        (v - self.means[feature]) / self.scales[feature]
    }

    #[inline]
    pub fn invert_value(&self, feature: usize, v: f64) -> f64 {
        v * self.scales[feature] + self.means[feature]
    }

    pub fn apply(&self, x: &MaskedMatrix) -> Result<MaskedMatrix> {
        self.map(x, |j, v| self.apply_value(j, v))
    }

    pub fn invert(&self, x: &MaskedMatrix) -> Result<MaskedMatrix> {
        self.map(x, |j, v| self.invert_value(j, v))
    }

    fn map(&self, x: &MaskedMatrix, f: impl Fn(usize, f64) -> f64) -> Result<MaskedMatrix> {
        if x.ncols() != self.len() {
            return Err(Error::Dimension(format!(
                "standardizer has {} features, matrix has {}",
                self.len(),
                x.ncols()
            )));
        }
        let values = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            if x.mask[(i, j)] {
                f(j, x.values[(i, j)])
            } else {
                x.values[(i, j)]
            }
        });
        Ok(MaskedMatrix {
            values,
            mask: x.mask.clone(),
        })
    }
}

/// Mean and uncorrected variance of the observed entries of column `j`.
pub(crate) fn available_moments(x: &MaskedMatrix, j: usize) -> Result<(f64, f64)> {
    let mut count = 0usize;
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in x.observed_column(j) {
        count += 1;
        sum += v;
        min = min.min(v);
        max = max.max(v);
    }
    if count == 0 {
        return Err(Error::Estimation {
            feature: j,
            reason: "column has no observed entries".into(),
        });
    }
    let mean = sum / count as f64;
    // a constant column is exactly zero-variance even when the mean rounds
    if min == max {
        return Ok((min, 0.0));
    }
    let var = x.observed_column(j).map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
    Ok((mean, var))
}
