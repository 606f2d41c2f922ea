//! Scoring, baselines and the benchmark runner.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{available_moments, MaskedMatrix};
use crate::dimv::{DimvModel, ImputationConfig};
use crate::dper::{estimate, CovarianceEstimator, CovarianceMatrix, MeanVector};
use crate::error::{Error, Result};
use crate::missing::{MaskSpec, MissingMask};
use crate::tuner::{tune_alpha_with_model, AlphaGrid};

/// Root mean squared difference over the positions flagged in `eval_mask`.
pub fn rmse_masked(truth: &DMatrix<f64>, imputed: &DMatrix<f64>, eval_mask: &MissingMask) -> Result<f64> {
    if truth.shape() != imputed.shape() || truth.shape() != eval_mask.bits().shape() {
        return Err(Error::Dimension(format!(
            "truth {:?}, imputed {:?}, mask {:?}",
            truth.shape(),
            imputed.shape(),
            eval_mask.bits().shape()
        )));
    }
    let mut sse = 0.0;
    let mut count = 0usize;
    for ((t, v), &m) in truth.iter().zip(imputed.iter()).zip(eval_mask.bits().iter()) {
        if m {
            sse += (t - v).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Scoring("evaluation mask is empty".into()));
    }
    Ok((sse / count as f64).sqrt())
}

/// Fill missing test entries with the available-entry means of `train`.
pub fn mean_impute(train: &MaskedMatrix, test: &MaskedMatrix) -> Result<DMatrix<f64>> {
    if train.ncols() != test.ncols() {
        return Err(Error::Dimension(format!(
            "train has {} features, test has {}",
            train.ncols(),
            test.ncols()
        )));
    }
    let means = (0..train.ncols())
        .map(|j| available_moments(train, j).map(|(m, _)| m))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(test.nrows(), test.ncols(), |i, j| {
        test.get(i, j).unwrap_or(means[j])
    }))
}

/// Means and pairwise case-deletion covariance.
pub fn complete_case_cov(x: &MaskedMatrix) -> Result<(MeanVector, CovarianceMatrix)> {
    estimate(x, CovarianceEstimator::CompleteCase)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Dimv,
    DimvCompleteCaseCov,
    Mean,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Dimv, Method::DimvCompleteCaseCov, Method::Mean];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dimv => "dimv",
            Method::DimvCompleteCaseCov => "dimv-complete-case-cov",
            Method::Mean => "mean",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub imputation: ImputationConfig,
    /// Tune alpha per cell; the tuned value replaces `imputation.alpha`.
    pub tune: Option<AlphaGrid>,
    /// When set, this share of rows (seeded by the mask seed) is held out as
    /// the test split and the model is fitted on the remaining corrupted rows.
    /// Otherwise the corrupted dataset is both train and test.
    pub test_fraction: Option<f64>,
    /// Worker threads for cells; 0 uses the global pool.
    pub workers: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            imputation: ImputationConfig::default(),
            tune: None,
            test_fraction: None,
            workers: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowConfig {
    pub tau: f64,
    pub k: usize,
    pub alpha: f64,
    pub init_with_zero: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub mask: MaskSpec,
    pub rmse: Option<f64>,
    pub wall_time_seconds: f64,
    pub seed: u64,
    pub config: RowConfig,
    pub config_digest: String,
    pub status: RowStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub dataset: String,
    pub created_at: String,
    /// `None` means train and test were the whole corrupted dataset.
    pub test_fraction: Option<f64>,
    pub rows: Vec<ReportRow>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    method: &'a str,
    mask_kind: &'a str,
    mask_level: f64,
    seed: u64,
    tau: f64,
    k: usize,
    alpha: f64,
    init_with_zero: bool,
    rmse: Option<f64>,
    wall_time_seconds: f64,
    status: &'a str,
    config_digest: &'a str,
    error: &'a str,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            let (kind, level) = match &r.mask {
                MaskSpec::Mcar { rate, .. } => ("mcar", *rate),
                MaskSpec::MonotoneCorner { fraction, .. } => ("monotone_corner", *fraction),
            };
            w.serialize(CsvRow {
                method: r.method.name(),
                mask_kind: kind,
                mask_level: level,
                seed: r.seed,
                tau: r.config.tau,
                k: r.config.k,
                alpha: r.config.alpha,
                init_with_zero: r.config.init_with_zero,
                rmse: r.rmse,
                wall_time_seconds: r.wall_time_seconds,
                status: match r.status {
                    RowStatus::Ok => "ok",
                    RowStatus::Failed => "failed",
                },
                config_digest: &r.config_digest,
                error: r.error.as_deref().unwrap_or(""),
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Seed for cell `index` of a run with master seed `master` (SplitMix64 mix).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn digest(method: Method, mask: &MaskSpec, cfg: &BenchmarkConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Key<'a> {
        method: Method,
        mask: &'a MaskSpec,
        imputation: &'a ImputationConfig,
        tune: &'a Option<AlphaGrid>,
        test_fraction: Option<f64>,
    }
    let bytes = serde_json::to_vec(&Key {
        method,
        mask,
        imputation: &cfg.imputation,
        tune: &cfg.tune,
        test_fraction: cfg.test_fraction,
    })?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

struct Cell {
    train: MaskedMatrix,
    test: MaskedMatrix,
    truth: DMatrix<f64>,
    eval: MissingMask,
}

fn prepare(data: &DMatrix<f64>, spec: &MaskSpec, test_fraction: Option<f64>) -> Result<Cell> {
    let mask = spec.generate(data.nrows(), data.ncols())?;
    let corrupted = mask.apply(data)?;
    let Some(share) = test_fraction else {
        return Ok(Cell {
            train: corrupted.clone(),
            test: corrupted,
            truth: data.clone(),
            eval: mask,
        });
    };
    if !(share > 0.0 && share < 1.0) {
        return Err(Error::Config(format!("test fraction {share} not in (0, 1)")));
    }
    let n = data.nrows();
    let n_test = ((share * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed(), u64::MAX));
    let mut test_rows = sample(&mut rng, n, n_test).into_vec();
    test_rows.sort_unstable();
    let train_rows: Vec<usize> = (0..n).filter(|i| test_rows.binary_search(i).is_err()).collect();
    Ok(Cell {
        train: corrupted.select_rows(&train_rows),
        test: corrupted.select_rows(&test_rows),
        truth: data.select_rows(&test_rows),
        eval: MissingMask::new(mask.bits().select_rows(&test_rows)),
    })
}

fn run_method(method: Method, cell: &Cell, cfg: &BenchmarkConfig) -> Result<(DMatrix<f64>, f64)> {
    let estimator = match method {
        Method::Mean => {
            return Ok((mean_impute(&cell.train, &cell.test)?, cfg.imputation.alpha));
        }
        Method::Dimv => CovarianceEstimator::Dper,
        Method::DimvCompleteCaseCov => CovarianceEstimator::CompleteCase,
    };
    let mut model = DimvModel::fit_with(&cell.train, &cfg.imputation, estimator)?;
    if let Some(grid) = &cfg.tune {
        let outcome = tune_alpha_with_model(&model, &cell.train, grid)?;
        model = model.with_alpha(outcome.alpha)?;
    }
    let alpha = model.config().alpha;
    Ok((model.impute(&cell.test)?.imputed, alpha))
}

fn run_cell(data: &DMatrix<f64>, spec: &MaskSpec, method: Method, cfg: &BenchmarkConfig) -> Result<ReportRow> {
    let mut config = RowConfig {
        tau: cfg.imputation.tau,
        k: cfg.imputation.k,
        alpha: cfg.imputation.alpha,
        init_with_zero: cfg.imputation.init_with_zero,
    };
    let config_digest = digest(method, spec, cfg)?;
    let outcome = prepare(data, spec, cfg.test_fraction).and_then(|cell| {
        let start = Instant::now();
        let (imputed, alpha) = run_method(method, &cell, cfg)?;
        let elapsed = start.elapsed().as_secs_f64();
        Ok((rmse_masked(&cell.truth, &imputed, &cell.eval)?, alpha, elapsed))
    });
    let (rmse, wall, status, error) = match outcome {
        Ok((rmse, alpha, wall)) => {
            config.alpha = alpha;
            (Some(rmse), wall, RowStatus::Ok, None)
        }
        Err(e) => (None, 0.0, RowStatus::Failed, Some(e.to_string())),
    };
    Ok(ReportRow {
        method,
        mask: spec.clone(),
        rmse,
        wall_time_seconds: wall,
        seed: spec.seed(),
        config,
        config_digest,
        status,
        error,
    })
}

/// Run every mask × method cell on a complete dataset.
///
/// Rows are ordered by mask, then by method. A failing cell is recorded with
/// its error message and the run continues. When `output` is given the report
/// is written there as JSON, with a CSV mirror next to it.
pub fn run_benchmark(
    dataset: &str,
    data: &DMatrix<f64>,
    masks: &[MaskSpec],
    methods: &[Method],
    cfg: &BenchmarkConfig,
    output: Option<&Path>,
) -> Result<BenchmarkReport> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("benchmark data must be complete and finite".into()));
    }
    if methods.is_empty() || masks.is_empty() {
        return Err(Error::Config("benchmark needs at least one method and one mask".into()));
    }
    cfg.imputation.validate()?;
    let cells: Vec<(&MaskSpec, Method)> = masks
        .iter()
        .flat_map(|m| methods.iter().map(move |&k| (m, k)))
        .collect();
    let run = || {
        cells
            .par_iter()
            .map(|&(spec, method)| run_cell(data, spec, method, cfg))
            .collect::<Result<Vec<_>>>()
    };
    let rows = if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cfg.workers)))?
            .install(run)?
    } else {
        run()?
    };
    let report = BenchmarkReport {
        dataset: dataset.to_string(),
        created_at: chrono::Utc::now().to_rfc3339(),
        test_fraction: cfg.test_fraction,
        rows,
    };
    if let Some(path) = output {
        report.write_json(path)?;
        report.write_csv(&path.with_extension("csv"))?;
    }
    Ok(report)
}
