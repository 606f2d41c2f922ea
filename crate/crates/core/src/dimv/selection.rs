use crate::dper::CovarianceMatrix;
use crate::error::{Error, Result};

use super::ImputationConfig;

/// Pearson correlation implied by `sigma`; 0 when either variance is 0.
pub fn correlation(sigma: &CovarianceMatrix, i: usize, j: usize) -> f64 {
    let (a, b) = (sigma.get(i, i), sigma.get(j, j));
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    sigma.get(i, j) / (a * b).sqrt()
}

/// Predictors for `target` among the `observed` features.
///
/// Keeps features with `|ρ| > τ`; when none qualify, falls back to the `k`
/// features with the largest `|ρ|` (ties to the smaller index). The result
/// is sorted ascending.
pub fn select_features(
    sigma: &CovarianceMatrix,
    target: usize,
    observed: &[usize],
    cfg: &ImputationConfig,
) -> Result<Vec<usize>> {
    let candidates: Vec<(usize, f64)> = observed
        .iter()
        .copied()
        .filter(|&j| j != target)
        .map(|j| (j, correlation(sigma, target, j).abs()))
        .collect();
    if candidates.is_empty() {
        return Err(Error::Selection { feature: target });
    }
    let mut chosen: Vec<usize> = candidates
        .iter()
        .filter(|(_, r)| *r > cfg.tau)
        .map(|(j, _)| *j)
        .collect();
    if chosen.is_empty() {
        let mut ranked = candidates;
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        chosen = ranked.into_iter().take(cfg.k).map(|(j, _)| j).collect();
    }
    chosen.sort_unstable();
    Ok(chosen)
}
