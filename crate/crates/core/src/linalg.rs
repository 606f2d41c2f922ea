use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

/// Pivots smaller than this fraction of the largest diagonal entry are
/// treated as exact zeros.
pub(crate) const PIVOT_RTOL: f64 = 1e-10;

/// Factorization of a symmetric system matrix.
///
/// Covariance estimates assembled pairwise are not always positive
/// definite, so an LU fallback handles indefinite but nonsingular systems.
pub(crate) enum SymmetricFactor {
    Cholesky(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

impl SymmetricFactor {
    pub(crate) fn new(a: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if n == 0 {
            return Err(Error::singular("empty system"));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::singular("system matrix has no positive diagonal entry"));
        }
        if let Some(chol) = Cholesky::new(a.clone()) {
            let l = chol.l_dirty();
            let min_pivot = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
            if min_pivot < PIVOT_RTOL * scale {
                return Err(Error::singular(format!(
                    "relative pivot {:.3e} below {PIVOT_RTOL:.0e}",
                    min_pivot / scale
                )));
            }
            return Ok(SymmetricFactor::Cholesky(chol));
        }
        let lu = a.lu();
        let min_pivot = lu
            .u()
            .diagonal()
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if min_pivot < PIVOT_RTOL * scale {
            return Err(Error::singular(format!(
                "relative pivot {:.3e} below {PIVOT_RTOL:.0e}",
                min_pivot / scale
            )));
        }
        Ok(SymmetricFactor::Lu(lu))
    }

    pub(crate) fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            SymmetricFactor::Cholesky(c) => c.solve(b),
            // nonsingularity was checked on construction
            SymmetricFactor::Lu(lu) => lu.solve(b).expect("nonsingular LU"),
        }
    }

    pub(crate) fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            SymmetricFactor::Cholesky(c) => c.solve(b),
            SymmetricFactor::Lu(lu) => lu.solve(b).expect("nonsingular LU"),
        }
    }
}

pub(crate) fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

/// `a[rows, col]` as a column vector.
pub(crate) fn subcolumn(a: &DMatrix<f64>, rows: &[usize], col: usize) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|&r| a[(r, col)]))
}

/// `a[idx, idx] + ridge * I`.
pub(crate) fn ridge_block(a: &DMatrix<f64>, idx: &[usize], ridge: f64) -> DMatrix<f64> {
    let mut m = submatrix(a, idx, idx);
    for i in 0..idx.len() {
        m[(i, i)] += ridge;
    }
    m
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let f = SymmetricFactor::new(a.clone()).unwrap();
        assert!(matches!(f, SymmetricFactor::Cholesky(_)));
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = f.solve_vec(&b);
        assert!((&a * x - b).norm() < 1e-14);
    }

    #[test]
    fn falls_back_to_lu_for_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let f = SymmetricFactor::new(a.clone()).unwrap();
        assert!(matches!(f, SymmetricFactor::Lu(_)));
        let b = DVector::from_vec(vec![3.0, -1.0]);
        assert!((&a * f.solve_vec(&b) - b).norm() < 1e-14);
    }

    #[test]
    fn rejects_singular_and_nearly_singular() {
        let exact = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(SymmetricFactor::new(exact), Err(Error::Singular { .. })));
        let s = 1.0 - 1e-12;
        let near = DMatrix::from_row_slice(2, 2, &[1.0, s, s, 1.0]);
        assert!(matches!(SymmetricFactor::new(near), Err(Error::Singular { .. })));
        let zero = DMatrix::zeros(2, 2);
        assert!(matches!(SymmetricFactor::new(zero), Err(Error::Singular { .. })));
    }
}
