//! Direct maximum-likelihood estimation of the mean vector and covariance
//! matrix from randomly missing data.
//!
//! Means and variances come from the available entries of each feature. Each
//! off-diagonal entry is estimated from its feature pair alone: the
//! stationarity condition of the bivariate profile likelihood in `σ₁₂` is a
//! cubic, and the estimate is the admissible real root with the largest
//! likelihood. Pairs are independent, so they are evaluated in parallel.
//!
//! The assembled matrix is symmetric with every entry inside its correlation
//! bound, but it is not guaranteed to be positive semidefinite.

use nalgebra::{DMatrix, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{available_moments, MaskedMatrix, Standardizer};
use crate::error::{Error, Result};

/// Estimates whose square reaches `σᵢᵢσⱼⱼ` are pulled inside the band by this
/// relative margin.
pub const BOUNDARY_SHRINK: f64 = 1e-12;

/// Relative tolerance under which two likelihood values count as tied.
pub const ETA_TIE_RTOL: f64 = 1e-9;

const IMAG_TOL: f64 = 1e-9;

/// Sufficient statistics of one centered feature pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub s11: f64,
    pub s12: f64,
    pub s22: f64,
    /// Rows where both features are observed.
    pub m: usize,
    /// Rows where the first feature is observed.
    pub n: usize,
    /// Rows where the second feature is observed.
    pub l_other: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanVector(pub Vec<f64>);

impl MeanVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Symmetric covariance estimate. Entries are stored mirrored, so `(i, j)`
/// and `(j, i)` are bitwise equal.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix(DMatrix<f64>);

impl CovarianceMatrix {
    /// Wrap a matrix, checking exact symmetry, finiteness and a nonnegative diagonal.
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::Dimension(format!(
                "covariance must be square, got {:?}",
                sigma.shape()
            )));
        }
        let p = sigma.nrows();
        for i in 0..p {
            if !(sigma[(i, i)] >= 0.0) || !sigma[(i, i)].is_finite() {
                return Err(Error::Validation(format!(
                    "variance of feature {i} is {}",
                    sigma[(i, i)]
                )));
            }
            for j in (i + 1)..p {
                if sigma[(i, j)].to_bits() != sigma[(j, i)].to_bits() {
                    return Err(Error::Validation(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
                if !sigma[(i, j)].is_finite() {
                    return Err(Error::Validation(format!("covariance ({i}, {j}) is not finite")));
                }
            }
        }
        Ok(Self(sigma))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// Pair statistics over a centered matrix (feature means taken as zero).
pub fn pair_stats(x: &MaskedMatrix, i: usize, j: usize) -> PairStats {
    let mut st = PairStats {
        s11: 0.0,
        s12: 0.0,
        s22: 0.0,
        m: 0,
        n: 0,
        l_other: 0,
    };
    for r in 0..x.nrows() {
        match (x.get(r, i), x.get(r, j)) {
            (Some(a), Some(b)) => {
                st.s11 += a * a;
                st.s12 += a * b;
                st.s22 += b * b;
                st.m += 1;
                st.n += 1;
                st.l_other += 1;
            }
            (Some(_), None) => st.n += 1,
            (None, Some(_)) => st.l_other += 1,
            (None, None) => {}
        }
    }
    st
}

/// Profile log-likelihood in `σ₁₂`, up to an additive constant (taken as 0).
pub fn eta(sigma12: f64, stats: &PairStats, sigma11: f64, sigma22: f64) -> Result<f64> {
    if !(sigma11 > 0.0 && sigma22 > 0.0) {
        return Err(Error::Domain(format!(
            "variances must be positive, got {sigma11} and {sigma22}"
        )));
    }
    let cond = sigma22 - sigma12 * sigma12 / sigma11;
    if !(cond > 0.0) {
        return Err(Error::Domain(format!(
            "conditional variance {cond} is not positive at sigma12 = {sigma12}"
        )));
    }
    let r = sigma12 / sigma11;
    let quad = stats.s22 - 2.0 * r * stats.s12 + r * r * stats.s11;
    Ok(-0.5 * stats.m as f64 * cond.ln() - 0.5 * quad / cond)
}

/// Coefficients `[c3, c2, c1, c0]` of the stationarity cubic
/// `m·σ³ − s₁₂·σ² + (s₂₂σ₁₁ + s₁₁σ₂₂ − mσ₁₁σ₂₂)·σ − s₁₂σ₁₁σ₂₂`.
pub fn sigma12_cubic(stats: &PairStats, sigma11: f64, sigma22: f64) -> [f64; 4] {
    let m = stats.m as f64;
    [
        m,
        -stats.s12,
        stats.s22 * sigma11 + stats.s11 * sigma22 - m * sigma11 * sigma22,
        -stats.s12 * sigma11 * sigma22,
    ]
}

/// Real roots of `c3·x³ + c2·x² + c1·x + c0` (with `c3 ≠ 0`) from the
/// eigenvalues of the companion matrix, each refined by Newton steps.
pub fn cubic_real_roots(coeffs: [f64; 4]) -> Vec<f64> {
    let [c3, c2, c1, c0] = coeffs;
    let (a2, a1, a0) = (c2 / c3, c1 / c3, c0 / c3);
    #[rustfmt::skip]
    let companion = Matrix3::new(
        -a2, -a1, -a0,
        1.0, 0.0, 0.0,
        0.0, 1.0, 0.0,
    );
    let poly = |x: f64| ((c3 * x + c2) * x + c1) * x + c0;
    let dpoly = |x: f64| (3.0 * c3 * x + 2.0 * c2) * x + c1;
    companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() < IMAG_TOL * (1.0 + z.re.abs()))
        .map(|z| {
            let mut x = z.re;
            for _ in 0..3 {
                let d = dpoly(x);
                if d == 0.0 {
                    break;
                }
                let next = x - poly(x) / d;
                if !next.is_finite() || poly(next).abs() >= poly(x).abs() {
                    break;
                }
                x = next;
            }
            x
        })
        .collect()
}

/// Maximum-likelihood `σ₁₂` for one pair.
///
/// Among the real roots of the stationarity cubic that lie strictly inside
/// `σ₁₂² < σ₁₁σ₂₂`, returns the one maximizing [`eta`]; ties go to the root
/// closest to `fallback` (the case-deletion estimate). With no co-observed
/// rows the result is 0, and with no admissible root it is `fallback`
/// clipped into the band.
pub fn solve_sigma12(stats: &PairStats, sigma11: f64, sigma22: f64, fallback: f64) -> f64 {
    if stats.m == 0 {
        return 0.0;
    }
    let bound2 = sigma11 * sigma22;
    let mut best: Option<(f64, f64)> = None;
    for root in cubic_real_roots(sigma12_cubic(stats, sigma11, sigma22)) {
        if !(root * root < bound2) {
            continue;
        }
        let Ok(value) = eta(root, stats, sigma11, sigma22) else {
            continue;
        };
        best = Some(match best {
            None => (root, value),
            Some((r0, v0)) => {
                let tol = ETA_TIE_RTOL * v0.abs().max(value.abs()).max(1.0);
                if (value - v0).abs() <= tol {
                    if (root - fallback).abs() < (r0 - fallback).abs() {
                        (root, value)
                    } else {
                        (r0, v0)
                    }
                } else if value > v0 {
                    (root, value)
                } else {
                    (r0, v0)
                }
            }
        });
    }
    match best {
        Some((root, _)) => root,
        None => clip_to_band(fallback, sigma11, sigma22),
    }
}

/// Pull `sigma12` to `(1 − BOUNDARY_SHRINK)·sqrt(σ₁₁σ₂₂)` in magnitude when it
/// reaches or exceeds the correlation bound.
pub fn clip_to_band(sigma12: f64, sigma11: f64, sigma22: f64) -> f64 {
    let bound = (sigma11 * sigma22).sqrt();
    if sigma12.abs() < bound {
        sigma12
    } else {
        (bound * (1.0 - BOUNDARY_SHRINK)).copysign(sigma12)
    }
}

/// Uncorrected covariance over rows where both features are observed,
/// recentered on that subsample; 0 with fewer than two such rows.
pub fn case_deletion_cov(x: &MaskedMatrix, i: usize, j: usize) -> f64 {
    let pairs: Vec<(f64, f64)> = (0..x.nrows())
        .filter_map(|r| Some((x.get(r, i)?, x.get(r, j)?)))
        .collect();
    if pairs.len() < 2 {
        return 0.0;
    }
    let m = pairs.len() as f64;
    let mi = pairs.iter().map(|p| p.0).sum::<f64>() / m;
    let mj = pairs.iter().map(|p| p.1).sum::<f64>() / m;
    pairs.iter().map(|(a, b)| (a - mi) * (b - mj)).sum::<f64>() / m
}

/// How off-diagonal covariance entries are estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceEstimator {
    /// Pairwise maximum likelihood (cubic root selection).
    #[default]
    Dper,
    /// Pairwise case deletion.
    CompleteCase,
}

/// Mean vector and pairwise maximum-likelihood covariance of `x`.
pub fn dper_fit(x: &MaskedMatrix) -> Result<(MeanVector, CovarianceMatrix)> {
    estimate(x, CovarianceEstimator::Dper)
}

pub fn estimate(
    x: &MaskedMatrix,
    estimator: CovarianceEstimator,
) -> Result<(MeanVector, CovarianceMatrix)> {
    let p = x.ncols();
    let centering = Standardizer::fit_centering(x)?;
    let centered = centering.apply(x)?;
    let variances = (0..p)
        .map(|j| available_moments(x, j).map(|(_, v)| v))
        .collect::<Result<Vec<_>>>()?;

    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
    let off: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (sii, sjj) = (variances[i], variances[j]);
            if sii == 0.0 || sjj == 0.0 {
                return 0.0;
            }
            let fallback = case_deletion_cov(&centered, i, j);
            let raw = match estimator {
                CovarianceEstimator::Dper => {
                    solve_sigma12(&pair_stats(&centered, i, j), sii, sjj, fallback)
                }
                CovarianceEstimator::CompleteCase => fallback,
            };
            clip_to_band(raw, sii, sjj)
        })
        .collect();

    let mut sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(variances));
    for (&(i, j), &v) in pairs.iter().zip(&off) {
        sigma[(i, j)] = v;
        sigma[(j, i)] = v;
    }
    Ok((
        MeanVector(centering.means().to_vec()),
        CovarianceMatrix::new(sigma)?,
    ))
}
