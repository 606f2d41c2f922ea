#![allow(dead_code)]

use dimv::{CovarianceMatrix, MaskedMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Five correlated features on different scales and offsets.
pub struct Mvn {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl Mvn {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        let chol = cov.clone().cholesky().expect("SPD covariance").l();
        Self { mean, cov, chol }
    }

    /// Correlations `0.5 + 0.2·0.5^|i−j|` off the diagonal.
    pub fn five() -> Self {
        let scales = [1.0, 2.0, 0.5, 3.0, 1.5];
        let means = [0.0, 5.0, -3.0, 10.0, 1.0];
        let cov = DMatrix::from_fn(5, 5, |i, j| {
            let rho = if i == j { 1.0 } else { 0.5 + 0.2 * 0.5f64.powi((i as i32 - j as i32).abs()) };
            rho * scales[i] * scales[j]
        });
        Self::new(DVector::from_row_slice(&means), cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let p = self.dim();
        let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut x = z * self.chol.transpose();
        for mut row in x.row_iter_mut() {
            row += self.mean.transpose();
        }
        x
    }

    /// Conditional mean of every missing entry given the observed ones, using
    /// the true parameters and a dense inverse.
    pub fn oracle_impute(&self, x: &MaskedMatrix) -> DMatrix<f64> {
        let mut out = x.values().clone();
        for i in 0..x.nrows() {
            let obs: Vec<usize> = (0..self.dim()).filter(|&j| x.is_observed(i, j)).collect();
            let mis: Vec<usize> = (0..self.dim()).filter(|&j| !x.is_observed(i, j)).collect();
            if mis.is_empty() {
                continue;
            }
            if obs.is_empty() {
                for &m in &mis {
                    out[(i, m)] = self.mean[m];
                }
                continue;
            }
            let s_oo = self.cov.select_rows(&obs).select_columns(&obs);
            let inv = s_oo.try_inverse().expect("invertible");
            let d = DVector::from_iterator(obs.len(), obs.iter().map(|&j| x.values()[(i, j)] - self.mean[j]));
            let w = inv * d;
            for &m in &mis {
                let cross = DVector::from_iterator(obs.len(), obs.iter().map(|&j| self.cov[(m, j)]));
                out[(i, m)] = self.mean[m] + cross.dot(&w);
            }
        }
        out
    }
}

/// Random SPD matrix `A Aᵀ + δI` with entries of `A` standard normal.
pub fn random_spd(p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut s = &a * a.transpose() + DMatrix::identity(p, p) * 0.1;
    for i in 0..p {
        for j in 0..i {
            s[(j, i)] = s[(i, j)];
        }
    }
    s
}

pub fn cov(m: DMatrix<f64>) -> CovarianceMatrix {
    CovarianceMatrix::new(m).expect("valid covariance")
}

/// Sample mean and uncorrected covariance of a complete matrix.
pub fn sample_moments(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = c.transpose() * &c / n;
    (mean, cov)
}
