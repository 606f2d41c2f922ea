use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dimv::dimv::{
    conditional_gaussian, confidence_region, unstandardize_region, CoefficientReport, EllipsoidSpec,
};
use dimv::evaluation::{derive_seed, run_benchmark, BenchmarkConfig, Method};
use dimv::io::{
    read_csv, read_model, write_csv, write_mask_csv, write_masked_csv, write_model, CsvConvention,
};
use dimv::tuner::tune_alpha_with_model;
use dimv::{AlphaGrid, DimvModel, Error, ImputationConfig, MaskSpec, Result};

/// Missing-value imputation with pairwise covariance estimates and conditional Gaussian means.
#[derive(Parser, Debug)]
#[command(name = "dimv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit means and covariance on a training CSV and save the model.
    Estimate(EstimateArgs),
    /// Fill the missing entries of a test CSV.
    Impute(ImputeArgs),
    /// Grid search for the ridge parameter.
    Tune(TuneArgs),
    /// Hide entries of a complete CSV with a seeded mask.
    Simulate(SimulateArgs),
    /// Score imputation methods over a sweep of masks.
    Benchmark(BenchmarkArgs),
    /// Imputation coefficients for one feature given a set of observed features.
    Explain(ExplainArgs),
    /// Confidence ellipsoid for the missing entries of one row.
    Confidence(ConfidenceArgs),
}

#[derive(Args, Debug, Clone)]
struct CsvArgs {
    /// Token marking a missing cell.
    #[arg(long = "na", default_value = "NA")]
    na: String,
    /// Input files have no header row (output files are written without one).
    #[arg(long)]
    no_header: bool,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

impl CsvArgs {
    fn convention(&self) -> Result<CsvConvention> {
        if !self.delimiter.is_ascii() {
            return Err(Error::Config(format!("invalid delimiter {:?}", self.delimiter)));
        }
        let conv = CsvConvention {
            na_token: self.na.clone(),
            has_header: !self.no_header,
            delimiter: self.delimiter as u8,
        };
        conv.validate()?;
        Ok(conv)
    }
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Correlation threshold for predictor selection.
    #[arg(long)]
    tau: Option<f64>,
    /// Predictors kept when none pass the threshold.
    #[arg(long)]
    k: Option<usize>,
    /// Ridge parameter.
    #[arg(long)]
    alpha: Option<f64>,
    /// Zero-fill missing test entries and impute each feature in one block.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    init_zero: Option<bool>,
    /// Only center features, do not scale them to unit variance.
    #[arg(long)]
    no_standardize: bool,
}

impl ModelArgs {
    fn apply(&self, base: &ImputationConfig) -> ImputationConfig {
        ImputationConfig {
            tau: self.tau.unwrap_or(base.tau),
            k: self.k.unwrap_or(base.k),
            alpha: self.alpha.unwrap_or(base.alpha),
            init_with_zero: self.init_zero.unwrap_or(base.init_with_zero),
            standardize: base.standardize && !self.no_standardize,
        }
    }
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    csv: CsvArgs,
}

#[derive(Args, Debug)]
struct ImputeArgs {
    /// Training data; required unless --model is given.
    #[arg(long, required_unless_present = "model")]
    train: Option<PathBuf>,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Use a saved model instead of fitting one.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Pick alpha by grid search on the training data.
    #[arg(long, conflicts_with = "alpha", requires = "train")]
    tune: bool,
    /// Candidates for --tune.
    #[arg(long, value_delimiter = ',', default_values_t = dimv::tuner::DEFAULT_GRID)]
    grid: Vec<f64>,
    /// Write per-block coefficient reports as JSON.
    #[arg(long)]
    coeffs: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    config: ModelArgs,
    #[command(flatten)]
    csv: CsvArgs,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = dimv::tuner::DEFAULT_GRID)]
    grid: Vec<f64>,
    /// Score on a seeded sample of this many rows.
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the tuning outcome here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ModelArgs,
    #[command(flatten)]
    csv: CsvArgs,
}

#[derive(Args, Debug, Clone)]
struct MaskArgs {
    /// Read --rates as bottom-right corner side fractions instead of MCAR rates.
    #[arg(long, requires_all = ["height", "width"])]
    corner: bool,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// Share of images corrupted by --corner.
    #[arg(long, default_value_t = 0.5)]
    share: f64,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mask_out: PathBuf,
    /// Share of entries removed completely at random.
    #[arg(long, conflicts_with = "corner", required_unless_present = "corner")]
    mcar: Option<f64>,
    /// Side fraction of the bottom-right corner removed from each affected image.
    #[arg(long, requires_all = ["height", "width"])]
    corner: Option<f64>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    share: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    csv: CsvArgs,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Complete dataset used as ground truth.
    #[arg(long)]
    data: PathBuf,
    /// Missing rates (or corner fractions): `a..b` in steps of 0.1, or a comma list.
    #[arg(long, default_value = "0.1..0.8", value_parser = parse_rates)]
    rates: Rates,
    #[arg(long, value_delimiter = ',', default_value = "dimv,mean")]
    methods: Vec<Method>,
    /// Seeded repetitions per rate.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Hold out this share of rows as the test split (default: impute the whole corrupted set).
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Tune alpha in every cell (time counted in the cell).
    #[arg(long, conflicts_with = "alpha")]
    tune: bool,
    #[arg(long, value_delimiter = ',', default_values_t = dimv::tuner::DEFAULT_GRID)]
    grid: Vec<f64>,
    /// JSON report path; a CSV mirror is written next to it. Prints JSON when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Concurrent cells (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    mask: MaskArgs,
    #[command(flatten)]
    config: ModelArgs,
    #[command(flatten)]
    csv: CsvArgs,
}

#[derive(Args, Debug)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// Target feature (0-based).
    #[arg(long)]
    feature: usize,
    /// Observed features (0-based, comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    observed: Vec<usize>,
    /// Override the model's ridge parameter.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConfidenceArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV holding one row; missing cells are the region's coordinates.
    #[arg(long)]
    row: PathBuf,
    /// Significance level of the region.
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    csv: CsvArgs,
}

#[derive(Clone, Debug)]
struct Rates(Vec<f64>);

fn parse_rates(s: &str) -> std::result::Result<Rates, String> {
    let check = |v: f64| {
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err(format!("rate {v} not in [0, 1]"))
        }
    };
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    let out = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (check(num(a)?)?, check(num(b)?)?);
        if b < a {
            return Err(format!("empty range {s}"));
        }
        let steps = ((b - a) / 0.1 + 1e-9).floor() as usize;
        (0..=steps).map(|i| ((a + 0.1 * i as f64) * 1e12).round() / 1e12).collect()
    } else {
        s.split(',').map(|t| num(t).and_then(check)).collect::<std::result::Result<Vec<_>, _>>()?
    };
    Ok(Rates(out))
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(())
}

fn grid(candidates: &[f64], subsample: Option<usize>, seed: u64) -> Result<AlphaGrid> {
    AlphaGrid::new(candidates.to_vec(), subsample, seed)
}

fn estimate(a: &EstimateArgs) -> Result<()> {
    let conv = a.csv.convention()?;
    let train = read_csv(&a.train, &conv)?.data;
    let model = DimvModel::fit(&train, &a.model.apply(&ImputationConfig::default()))?;
    write_model(&a.out, &model)
}

fn impute(a: &ImputeArgs) -> Result<()> {
    let conv = a.csv.convention()?;
    let train = a.train.as_ref().map(|p| read_csv(p, &conv)).transpose()?;
    let mut model = match &a.model {
        Some(path) => {
            let saved = read_model(path)?;
            let cfg = a.config.apply(saved.config());
            DimvModel::from_parts(saved.standardizer().clone(), saved.sigma().clone(), cfg)?
        }
        None => {
            let train = train.as_ref().expect("clap requires --train without --model");
            DimvModel::fit(&train.data, &a.config.apply(&ImputationConfig::default()))?
        }
    };
    if a.tune {
        let train = train.as_ref().expect("clap requires --train with --tune");
        let outcome = tune_alpha_with_model(&model, &train.data, &grid(&a.grid, None, a.seed)?)?;
        model = model.with_alpha(outcome.alpha)?;
    }
    let test = read_csv(&a.test, &conv)?;
    let result = model.impute(&test.data)?;
    write_csv(&a.out, &result.imputed, test.header.as_deref(), &conv)?;
    if let Some(path) = &a.coeffs {
        emit(&result.blocks, Some(path))?;
    }
    Ok(())
}

fn tune(a: &TuneArgs) -> Result<()> {
    let conv = a.csv.convention()?;
    let train = read_csv(&a.train, &conv)?.data;
    let cfg = a.config.apply(&ImputationConfig::default());
    let outcome = dimv::tune_alpha(&train, &cfg, &grid(&a.grid, a.subsample, a.seed)?)?;
    emit(&outcome, a.out.as_deref())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let conv = a.csv.convention()?;
    let table = read_csv(&a.input, &conv)?;
    if !table.data.is_complete() {
        return Err(Error::Validation("simulate needs a complete input table".into()));
    }
    let spec = match (a.mcar, a.corner) {
        (Some(rate), _) => MaskSpec::Mcar { rate, seed: a.seed },
        (None, Some(fraction)) => MaskSpec::MonotoneCorner {
            fraction,
            image_height: a.height.unwrap_or(0),
            image_width: a.width.unwrap_or(0),
            affected_share: a.share,
            seed: a.seed,
        },
        (None, None) => unreachable!("clap requires --mcar or --corner"),
    };
    let mask = spec.generate(table.data.nrows(), table.data.ncols())?;
    let corrupted = mask.apply(table.data.values())?;
    write_masked_csv(&a.out, &corrupted, table.header.as_deref(), &conv)?;
    write_mask_csv(&a.mask_out, &mask, &conv)
}

fn benchmark(a: &BenchmarkArgs) -> Result<()> {
    let conv = a.csv.convention()?;
    let table = read_csv(&a.data, &conv)?;
    if !table.data.is_complete() {
        return Err(Error::Validation("benchmark data must be complete".into()));
    }
    let mut masks = Vec::new();
    for (r, &rate) in a.rates.0.iter().enumerate() {
        for t in 0..a.trials {
            let seed = derive_seed(a.seed, (r * a.trials + t) as u64);
            masks.push(if a.mask.corner {
                MaskSpec::MonotoneCorner {
                    fraction: rate,
                    image_height: a.mask.height.unwrap_or(0),
                    image_width: a.mask.width.unwrap_or(0),
                    affected_share: a.mask.share,
                    seed,
                }
            } else {
                MaskSpec::Mcar { rate, seed }
            });
        }
    }
    let cfg = BenchmarkConfig {
        imputation: a.config.apply(&ImputationConfig::default()),
        tune: a.tune.then(|| grid(&a.grid, None, a.seed)).transpose()?,
        test_fraction: a.test_fraction,
        workers: a.workers,
    };
    let dataset = a
        .data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let report = run_benchmark(&dataset, table.data.values(), &masks, &a.methods, &cfg, a.report.as_deref())?;
    if a.report.is_none() {
        emit(&report, None)?;
    }
    Ok(())
}

fn explain(a: &ExplainArgs) -> Result<()> {
    let mut model = read_model(&a.model)?;
    if let Some(alpha) = a.alpha {
        model = model.with_alpha(alpha)?;
    }
    let report: CoefficientReport = model.explain(a.feature, &a.observed)?;
    emit(&report, a.out.as_deref())
}

#[derive(Serialize)]
struct ConfidenceOutput {
    /// Missing features the region spans, in original units.
    targets: Vec<usize>,
    #[serde(flatten)]
    region: EllipsoidSpec,
}

fn confidence(a: &ConfidenceArgs) -> Result<()> {
    let conv = a.csv.convention()?;
    let model = read_model(&a.model)?;
    let row = read_csv(&a.row, &conv)?.data;
    if row.nrows() != 1 {
        return Err(Error::Validation(format!("expected one row, found {}", row.nrows())));
    }
    if row.ncols() != model.n_features() {
        return Err(Error::Dimension(format!(
            "row has {} features, model has {}",
            row.ncols(),
            model.n_features()
        )));
    }
    let z = model.standardizer().apply(&row)?;
    let pattern = z.pattern_of(0)?;
    let (observed, targets) = (pattern.available(), pattern.missing());
    if targets.is_empty() {
        return Err(Error::Validation("row has no missing entries".into()));
    }
    let values: Vec<f64> = observed.iter().map(|&j| z.values()[(0, j)]).collect();
    let cond = conditional_gaussian(model.sigma(), &observed, &values, &targets, model.config().alpha)?;
    let region = confidence_region(&cond, a.level)?;
    let std = model.standardizer();
    let means: Vec<f64> = targets.iter().map(|&j| std.means()[j]).collect();
    let scales: Vec<f64> = targets.iter().map(|&j| std.scales()[j]).collect();
    emit(
        &ConfidenceOutput {
            targets,
            region: unstandardize_region(&region, &means, &scales),
        },
        a.out.as_deref(),
    )
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Impute(a) => impute(a),
        Command::Tune(a) => tune(a),
        Command::Simulate(a) => simulate(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Explain(a) => explain(a),
        Command::Confidence(a) => confidence(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
