//! Grid search for the ridge parameter.
//!
//! Each candidate is scored by predicting every observed standardized train
//! entry from the other observed entries of its row, using one covariance
//! estimate shared by all candidates. Scores are in-sample and therefore
//! somewhat optimistic.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{MaskedMatrix, Standardizer};
use crate::dimv::{select_features, DimvModel, ImputationConfig, RidgeFit};
use crate::error::{Error, Result};

pub const DEFAULT_GRID: [f64; 6] = [0.0, 0.01, 0.1, 1.0, 10.0, 100.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaGrid {
    candidates: Vec<f64>,
    pub subsample_rows: Option<usize>,
    pub seed: u64,
}

impl AlphaGrid {
    /// Candidates are sorted; they must be nonempty, finite, nonnegative and distinct.
    pub fn new(mut candidates: Vec<f64>, subsample_rows: Option<usize>, seed: u64) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Config("alpha grid is empty".into()));
        }
        if let Some(a) = candidates.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return Err(Error::Config(format!("alpha candidate {a} must be finite and >= 0")));
        }
        candidates.sort_by(f64::total_cmp);
        if candidates.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("alpha grid has duplicate candidates".into()));
        }
        Ok(Self {
            candidates,
            subsample_rows,
            seed,
        })
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }
}

impl Default for AlphaGrid {
    fn default() -> Self {
        Self {
            candidates: DEFAULT_GRID.to_vec(),
            subsample_rows: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningOutcome {
    pub alpha: f64,
    /// `(candidate, rmse)` in grid order; singular candidates score `+inf`.
    pub scores: Vec<(f64, f64)>,
}

/// Pick the candidate with the lowest reconstruction RMSE (ties to the smaller alpha).
///
/// `cfg.alpha` is ignored.
pub fn tune_alpha(train: &MaskedMatrix, cfg: &ImputationConfig, grid: &AlphaGrid) -> Result<TuningOutcome> {
    if train.ncols() < 2 {
        return Err(Error::Tuning("tuning needs at least two features".into()));
    }
    let base = DimvModel::fit(train, &ImputationConfig { alpha: 0.0, ..cfg.clone() })?;
    tune_alpha_with_model(&base, train, grid)
}

/// As [`tune_alpha`] but reusing an already fitted model's covariance.
pub fn tune_alpha_with_model(
    model: &DimvModel,
    train: &MaskedMatrix,
    grid: &AlphaGrid,
) -> Result<TuningOutcome> {
    let std: &Standardizer = model.standardizer();
    let x = std.apply(train)?;
    let rows: Vec<usize> = match grid.subsample_rows {
        Some(budget) if budget < x.nrows() => {
            let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
            let mut r = sample(&mut rng, x.nrows(), budget).into_vec();
            r.sort_unstable();
            r
        }
        _ => (0..x.nrows()).collect(),
    };

    // (target, predictors, row) for every usable observed entry
    let cfg = model.config();
    let mut tasks: Vec<(usize, Vec<usize>, usize)> = Vec::new();
    for &r in &rows {
        let observed: Vec<usize> = (0..x.ncols()).filter(|&j| x.is_observed(r, j)).collect();
        if observed.len() < 2 {
            continue;
        }
        for &f in &observed {
            let others: Vec<usize> = observed.iter().copied().filter(|&j| j != f).collect();
            tasks.push((f, select_features(model.sigma(), f, &others, cfg)?, r));
        }
    }
    if tasks.is_empty() {
        return Err(Error::Tuning(
            "no row has two observed features to validate against".into(),
        ));
    }

    let scores: Vec<(f64, f64)> = grid
        .candidates()
        .par_iter()
        .map(|&alpha| (alpha, score(model, &x, &tasks, alpha)))
        .collect();

    let mut best: Option<(f64, f64)> = None;
    for &(alpha, s) in &scores {
        if s.is_finite() && best.is_none_or(|(_, b)| s < b) {
            best = Some((alpha, s));
        }
    }
    match best {
        Some((alpha, _)) => Ok(TuningOutcome { alpha, scores }),
        None => Err(Error::Tuning(
            "every alpha candidate produced a singular system".into(),
        )),
    }
}

fn score(model: &DimvModel, x: &MaskedMatrix, tasks: &[(usize, Vec<usize>, usize)], alpha: f64) -> f64 {
    let mut fits: HashMap<(usize, &[usize]), Option<RidgeFit>> = HashMap::new();
    let mut sse = 0.0;
    for (f, preds, r) in tasks {
        let fit = fits
            .entry((*f, preds.as_slice()))
            .or_insert_with(|| RidgeFit::new(model.sigma(), *f, preds, alpha).ok());
        let Some(fit) = fit else {
            return f64::INFINITY;
        };
        let pred: f64 = preds
            .iter()
            .zip(fit.beta.iter())
            .map(|(&j, b)| b * x.values()[(*r, j)])
            .sum();
        sse += (pred - x.values()[(*r, *f)]).powi(2);
    }
    (sse / tasks.len() as f64).sqrt()
}
