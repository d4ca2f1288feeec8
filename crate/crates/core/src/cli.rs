//! Command-line surface. Every command is a plain function so the binary stays a thin
//! argument parser and the commands can be driven from tests.
//!
//! Data files are long-format CSV with header `output_id,x1,...,xD,y`. Test-input files
//! carry the header `x1,...,xD`. Floats are written with Rust's shortest round-trip
//! formatting, so reading a written file recovers the same values.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_full_mgcp, fit_gcp};
use crate::covariance::Inputs;
use crate::data::{Dataset, OutputData, Standardization};
use crate::error::{Error, Result};
use crate::likelihood::{PenaltyConfig, PenaltyKind};
use crate::metrics::mae;
use crate::optimizer::OptimizerConfig;
use crate::orchestrator::{derive_seed, fit_target, predict_target, CvConfig, LambdaChoice, PairFit};
use crate::predict::{FullPredictor, GaussianPrediction, UnivariatePredictor};
use crate::simulate::{gen_setting1, gen_setting2, gen_setting3, linspace, standardize, Simulated};

pub const MODEL_FORMAT: &str = "mgcp-rd-model";
pub const MODEL_VERSION: u32 = 1;
pub const REPORT_FORMAT: &str = "mgcp-rd-benchmark";
pub const REPORT_VERSION: u32 = 1;
/// Evenly spaced test inputs scored per benchmark replicate.
pub const BENCHMARK_TEST_POINTS: usize = 50;

#[derive(Debug, Parser)]
#[command(
    name = "mgcp-rd",
    version,
    about = "Regularized pairwise multivariate Gaussian convolution processes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a simulated dataset as CSV.
    Simulate(SimulateArgs),
    /// Fit the pairwise submodels for one target output.
    Fit(FitArgs),
    /// Predict the target output of a fitted model at new inputs.
    Predict(PredictArgs),
    /// Compare methods over replicated simulations.
    Benchmark(BenchmarkArgs),
    /// Summarize a benchmark report.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    fn enabled(self) -> bool {
        self == Switch::On
    }
}

/// Overrides of the simulation defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct SettingOverrides {
    /// Number of outputs (settings 1 and 2).
    #[arg(long)]
    pub outputs: Option<usize>,
    /// Training points per output.
    #[arg(long)]
    pub points: Option<usize>,
    /// Training points of the target output (setting 2).
    #[arg(long)]
    pub target_points: Option<usize>,
    /// Noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub setting: u8,
    #[command(flatten)]
    pub overrides: SettingOverrides,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Penalty, cross-validation and optimizer flags shared by `fit` and `benchmark`.
#[derive(Debug, Clone, Args)]
pub struct FitOptions {
    #[arg(long, default_value = "l1")]
    pub penalty: PenaltyKind,
    /// Comma-separated λ values; a single value skips cross-validation.
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
}

impl FitOptions {
    fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            max_iters: self.max_iters,
            restarts: self.restarts,
            seed: self.seed,
            ..Default::default()
        }
    }

    fn lambda(&self, seed: u64) -> LambdaChoice {
        match self.lambda_grid.as_deref() {
            Some([single]) => LambdaChoice::Fixed(*single),
            grid => LambdaChoice::CrossValidated(CvConfig {
                folds: self.folds,
                lambda_grid: grid
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(crate::orchestrator::default_lambda_grid),
                seed,
                ..Default::default()
            }),
        }
    }

    fn penalty_config(&self) -> PenaltyConfig {
        PenaltyConfig::new(self.penalty, 0.0)
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Identifier of the output to predict.
    #[arg(long)]
    pub target: String,
    #[command(flatten)]
    pub options: FitOptions,
    #[arg(long, value_enum, default_value = "on")]
    pub standardize: Switch,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with header `x1,...,xD`.
    #[arg(long)]
    pub inputs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gcp,
    Mgcp,
    MgcpRd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gcp => "gcp",
            Method::Mgcp => "mgcp",
            Method::MgcpRd => "mgcp-rd",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub setting: u8,
    #[command(flatten)]
    pub overrides: SettingOverrides,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "gcp,mgcp,mgcp-rd")]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 10)]
    pub replicates: usize,
    #[command(flatten)]
    pub options: FitOptions,
    #[arg(long, value_enum, default_value = "off")]
    pub standardize: Switch,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Benchmark report JSON.
    #[arg(long)]
    pub input: PathBuf,
    /// Optional CSV summary; the table is always printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs a parsed command and returns the text to print on success.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn parse_float(s: &str, line: u64, what: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("{what} '{s}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("{what} must be finite"),
        });
    }
    Ok(v)
}

fn check_x_header(names: &[&str], line: u64) -> Result<()> {
    for (k, name) in names.iter().enumerate() {
        if name.trim() != format!("x{}", k + 1) {
            return Err(Error::Parse {
                line,
                message: format!("expected column 'x{}', found '{name}'", k + 1),
            });
        }
    }
    Ok(())
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(r)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Parses long-format data. Outputs keep the order in which their ids first appear.
pub fn parse_dataset<R: Read>(r: R) -> Result<Dataset> {
    let mut rdr = csv_reader(r);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 3 || cols[0].trim() != "output_id" || cols[cols.len() - 1].trim() != "y" {
        return Err(Error::Parse {
            line: 1,
            message: "header must be output_id,x1,...,xD,y".into(),
        });
    }
    check_x_header(&cols[1..cols.len() - 1], 1)?;
    let dim = cols.len() - 2;
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != dim + 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", dim + 2, rec.len()),
            });
        }
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty output id".into(),
            });
        }
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            (Vec::new(), Vec::new())
        });
        for k in 0..dim {
            entry.0.push(parse_float(&rec[k + 1], line, "input")?);
        }
        entry.1.push(parse_float(&rec[dim + 1], line, "response")?);
    }
    if order.is_empty() {
        return Err(Error::DegenerateData("data file has no rows".into()));
    }
    let outputs = order
        .into_iter()
        .map(|id| {
            let (xs, ys) = rows.remove(&id).expect("id was recorded");
            let n = ys.len();
            OutputData::new(id, Inputs::from_row_slice(n, dim, &xs), ys.into())
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(outputs)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(open(path)?)
}

/// Writes the raw (never standardized) responses in long format.
pub fn write_dataset<W: Write>(dataset: &Dataset, w: W) -> Result<usize> {
    let dataset = crate::simulate::destandardize(dataset);
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["output_id".to_string()];
    header.extend((1..=dataset.dim()).map(|k| format!("x{k}")));
    header.push("y".into());
    wtr.write_record(&header).map_err(csv_io)?;
    let mut rows = 0;
    for o in &dataset.outputs {
        for r in 0..o.len() {
            let mut rec = vec![o.id.clone()];
            rec.extend(o.x.row(r).iter().map(|v| fmt(*v)));
            rec.push(fmt(o.y[r]));
            wtr.write_record(&rec).map_err(csv_io)?;
            rows += 1;
        }
    }
    wtr.flush()?;
    Ok(rows)
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Unsupported(format!("{other:?}")),
    }
}

/// Test inputs, one row per point. An empty file with a header yields no rows.
pub fn parse_inputs<R: Read>(r: R) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut rdr = csv_reader(r);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.is_empty() || cols == [""] {
        return Err(Error::Parse {
            line: 1,
            message: "header must be x1,...,xD".into(),
        });
    }
    check_x_header(&cols, 1)?;
    let dim = cols.len();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != dim {
            return Err(Error::Parse {
                line,
                message: format!("expected {dim} fields, found {}", rec.len()),
            });
        }
        rows.push(
            rec.iter()
                .map(|s| parse_float(s, line, "input"))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((dim, rows))
}

fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| with_path(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| with_path(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| with_path(path, e))?))
}

/// Simulation for a setting with optional overrides of its defaults:
/// setting 1 is `N = 5, p = 10, σ = 0.1`; setting 2 is `N = 50, p = 20`, target `p = 10`,
/// `σ = 1`; setting 3 has fixed shape and `σ = 0.005`.
pub fn simulate_setting(setting: u8, o: &SettingOverrides, seed: u64) -> Result<Simulated> {
    match setting {
        1 => gen_setting1(
            o.outputs.unwrap_or(5),
            o.points.unwrap_or(10),
            o.sigma.unwrap_or(0.1),
            seed,
        ),
        2 => gen_setting2(
            o.outputs.unwrap_or(50),
            o.points.unwrap_or(20),
            o.target_points.unwrap_or(10),
            o.sigma.unwrap_or(1.0),
            seed,
        ),
        3 => {
            if o.outputs.is_some() || o.points.is_some() || o.target_points.is_some() {
                return Err(Error::Argument("setting 3 only accepts a --sigma override".into()));
            }
            gen_setting3(o.sigma.unwrap_or(0.005), seed)
        }
        s => Err(Error::Argument(format!("unknown setting {s}"))),
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<String> {
    let sim = simulate_setting(a.setting, &a.overrides, a.seed)?;
    let rows = write_dataset(&sim.dataset, create(&a.out)?)?;
    Ok(format!("wrote {rows} rows to {}", a.out.display()))
}

/// Training data of one output as stored in a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredOutput {
    pub id: String,
    /// One row per observation.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl StoredOutput {
    fn from_data(o: &OutputData) -> Self {
        StoredOutput {
            id: o.id.clone(),
            x: (0..o.len()).map(|r| o.row(r)).collect(),
            y: o.y.iter().copied().collect(),
        }
    }

    fn to_data(&self, dim: usize) -> Result<OutputData> {
        if self.x.iter().any(|r| r.len() != dim) {
            return Err(Error::Argument(format!(
                "output '{}' has rows of the wrong width",
                self.id
            )));
        }
        let flat: Vec<f64> = self.x.iter().flatten().copied().collect();
        OutputData::new(
            self.id.clone(),
            Inputs::from_row_slice(self.y.len(), dim, &flat),
            self.y.clone().into(),
        )
    }
}

/// Versioned model file: pair fits with named parameters plus the (possibly
/// standardized) training data they condition on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub format: String,
    pub version: u32,
    pub target: String,
    pub dim: usize,
    pub penalty: PenaltyKind,
    pub standardized: bool,
    /// Per-output transforms, present when `standardized`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Vec<Standardization>>,
    pub outputs: Vec<StoredOutput>,
    /// Pair indices refer to positions in `outputs`.
    pub pairs: Vec<PairFit>,
    pub warnings: Vec<String>,
}

impl Model {
    pub fn dataset(&self) -> Result<Dataset> {
        let outputs = self
            .outputs
            .iter()
            .map(|o| o.to_data(self.dim))
            .collect::<Result<Vec<_>>>()?;
        let mut ds = Dataset::new(outputs)?;
        ds.meta = self.meta.clone();
        Ok(ds)
    }

    pub fn target_index(&self) -> Result<usize> {
        self.outputs
            .iter()
            .position(|o| o.id == self.target)
            .ok_or_else(|| Error::Argument(format!("target '{}' missing from model", self.target)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Model = serde_json::from_str(s)?;
        if m.format != MODEL_FORMAT {
            return Err(Error::Unsupported(format!("not a model file (format '{}')", m.format)));
        }
        if m.version != MODEL_VERSION {
            return Err(Error::Unsupported(format!(
                "model version {} is not supported",
                m.version
            )));
        }
        Ok(m)
    }

    /// Predictions in the original response units.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<GaussianPrediction>> {
        if let Some(r) = x.iter().find(|r| r.len() != self.dim) {
            return Err(Error::Argument(format!(
                "test inputs have {} columns but the model expects {}",
                r.len(),
                self.dim
            )));
        }
        if x.is_empty() {
            return Ok(Vec::new());
        }
        let ds = self.dataset()?;
        let t = self.target_index()?;
        let preds = predict_target(&self.pairs, &ds, t, x)?;
        Ok(match &self.meta {
            Some(meta) => preds
                .into_iter()
                .map(|p| destandardize_prediction(p, &meta[t]))
                .collect(),
            None => preds,
        })
    }
}

fn destandardize_prediction(p: GaussianPrediction, s: &Standardization) -> GaussianPrediction {
    GaussianPrediction {
        mean: s.invert(p.mean),
        variance: s.invert_variance(p.variance),
    }
}

/// Fits the `N - 1` submodels for `target` and packages them as a model.
pub fn fit_model(dataset: &Dataset, target: &str, options: &FitOptions, standardize_data: bool) -> Result<Model> {
    let t = dataset
        .index_of(target)
        .ok_or_else(|| Error::Argument(format!("target output '{target}' not found")))?;
    let ds = if standardize_data {
        standardize(dataset)?
    } else {
        dataset.clone()
    };
    let pairs = fit_target(
        &ds,
        t,
        &options.penalty_config(),
        &options.lambda(options.seed),
        &options.optimizer(),
        options.parallelism,
    )?;
    let warnings = pairs
        .iter()
        .filter_map(|p| {
            p.error.as_ref().map(|e| {
                format!(
                    "pair ({}, {}) skipped: {e}",
                    ds.outputs[p.pair.0].id, ds.outputs[p.pair.1].id
                )
            })
        })
        .collect();
    Ok(Model {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        target: target.into(),
        dim: ds.dim(),
        penalty: options.penalty,
        standardized: ds.meta.is_some(),
        meta: ds.meta.clone(),
        outputs: ds.outputs.iter().map(StoredOutput::from_data).collect(),
        pairs,
        warnings,
    })
}

pub fn cmd_fit(a: &FitArgs) -> Result<String> {
    let ds = read_dataset(&a.data)?;
    let model = fit_model(&ds, &a.target, &a.options, a.standardize.enabled())?;
    let mut w = create(&a.out)?;
    w.write_all(model.to_json()?.as_bytes())?;
    w.flush()?;
    let mut msg = format!(
        "fitted {} of {} pairs for target '{}'; model written to {}",
        model.pairs.iter().filter(|p| p.fit.is_some()).count(),
        model.pairs.len(),
        model.target,
        a.out.display()
    );
    for warn in &model.warnings {
        msg.push_str(&format!("\nwarning: {warn}"));
    }
    Ok(msg)
}

pub fn read_model(path: &Path) -> Result<Model> {
    Model::from_json(&read_text(path)?)
}

pub fn cmd_predict(a: &PredictArgs) -> Result<String> {
    let model = read_model(&a.model)?;
    let (dim, x) = parse_inputs(open(&a.inputs)?)?;
    if dim != model.dim {
        return Err(Error::Argument(format!(
            "test inputs have {dim} columns but the model expects {}",
            model.dim
        )));
    }
    let preds = model.predict(&x)?;
    let mut wtr = csv::Writer::from_writer(create(&a.out)?);
    let mut header: Vec<String> = (1..=dim).map(|k| format!("x{k}")).collect();
    header.extend(["mean".to_string(), "variance".to_string()]);
    wtr.write_record(&header).map_err(csv_io)?;
    for (row, p) in x.iter().zip(&preds) {
        let mut rec: Vec<String> = row.iter().map(|v| fmt(*v)).collect();
        rec.extend([fmt(p.mean), fmt(p.variance)]);
        wtr.write_record(&rec).map_err(csv_io)?;
    }
    wtr.flush()?;
    Ok(format!("wrote {} predictions to {}", preds.len(), a.out.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// One value per replicate.
    pub mae: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single replicate.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub seed: u64,
    pub test_x: Vec<f64>,
    pub truth: Vec<f64>,
    /// Predicted means per method at `test_x`.
    pub predictions: BTreeMap<String, Vec<f64>>,
    /// Thresholded pairs `(i, j)` of the pairwise fit.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub zeroed_pairs: Vec<(usize, usize)>,
}

/// Wall-clock seconds per method and replicate; excluded from determinism guarantees.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub format: String,
    pub version: u32,
    pub setting: u8,
    pub seed: u64,
    pub replicates: usize,
    pub standardized: bool,
    pub penalty: PenaltyKind,
    pub methods: Vec<MethodSummary>,
    pub replicate_records: Vec<ReplicateRecord>,
    pub timing: Timing,
}

fn mean_and_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Predicted target means and the pairs whose `ξ₀` was thresholded.
pub type MethodOutcome = (Vec<f64>, Vec<(usize, usize)>);

/// Predicted means of the target output at `test_x` for one method, in original units.
/// Also returns the thresholded pairs of a pairwise fit.
pub fn run_method(
    method: Method,
    sim: &Simulated,
    test_x: &[f64],
    options: &FitOptions,
    standardize_data: bool,
    seed: u64,
) -> Result<MethodOutcome> {
    let ds = if standardize_data {
        standardize(&sim.dataset)?
    } else {
        sim.dataset.clone()
    };
    let t = sim.target();
    let opt = options.optimizer().with_seed(seed);
    let rows: Vec<Vec<f64>> = test_x.iter().map(|x| vec![*x]).collect();
    let (preds, zeroed) = match method {
        Method::Gcp => {
            let fit = fit_gcp(&ds.outputs[t], &opt)?;
            let p = UnivariatePredictor::new(&fit.params, &ds.outputs[t])?;
            (
                rows.iter().map(|x| p.predict(x)).collect::<Result<Vec<_>>>()?,
                Vec::new(),
            )
        }
        Method::Mgcp => {
            let fit = fit_full_mgcp(&ds.outputs, &opt)?;
            let p = FullPredictor::new(&fit.params, &ds.outputs)?;
            (
                rows.iter().map(|x| p.predict(x, t)).collect::<Result<Vec<_>>>()?,
                Vec::new(),
            )
        }
        Method::MgcpRd => {
            let fits = fit_target(
                &ds,
                t,
                &options.penalty_config(),
                &options.lambda(seed),
                &opt,
                options.parallelism,
            )?;
            let zeroed = fits
                .iter()
                .filter(|f| f.fit.as_ref().is_some_and(|r| r.xi0_zeroed))
                .map(|f| f.pair)
                .collect();
            (predict_target(&fits, &ds, t, &rows)?, zeroed)
        }
    };
    let means = match &ds.meta {
        Some(meta) => preds.iter().map(|p| meta[t].invert(p.mean)).collect(),
        None => preds.iter().map(|p| p.mean).collect(),
    };
    Ok((means, zeroed))
}

pub fn run_benchmark(a: &BenchmarkArgs) -> Result<BenchmarkReport> {
    if a.replicates < 1 {
        return Err(Error::Argument("at least one replicate is required".into()));
    }
    let mut methods = a.methods.clone();
    methods.sort();
    methods.dedup();
    if methods.is_empty() {
        return Err(Error::Argument("no methods selected".into()));
    }
    let seed = a.options.seed;
    let mut maes: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    let mut timing = Timing::default();
    let mut records = Vec::with_capacity(a.replicates);
    for r in 0..a.replicates {
        let rep_seed = derive_seed(seed, r as u64);
        let sim = simulate_setting(a.setting, &a.overrides, rep_seed)?;
        let test_x = linspace(sim.test_domain.0, sim.test_domain.1, BENCHMARK_TEST_POINTS);
        let truth_fn = &sim.truths[sim.target()];
        let truth: Vec<f64> = test_x.iter().map(|x| truth_fn.eval(*x)).collect();
        let mut predictions = BTreeMap::new();
        let mut zeroed_pairs = Vec::new();
        for &m in &methods {
            let start = Instant::now();
            let (means, zeroed) = run_method(m, &sim, &test_x, &a.options, a.standardize.enabled(), rep_seed)?;
            timing
                .seconds
                .entry(m.name().into())
                .or_default()
                .push(start.elapsed().as_secs_f64());
            maes.entry(m).or_default().push(mae(&means, &truth)?);
            predictions.insert(m.name().to_string(), means);
            if m == Method::MgcpRd {
                zeroed_pairs = zeroed;
            }
        }
        records.push(ReplicateRecord {
            index: r,
            seed: rep_seed,
            test_x,
            truth,
            predictions,
            zeroed_pairs,
        });
    }
    let methods = maes
        .into_iter()
        .map(|(method, mae)| {
            let (mean, std) = mean_and_std(&mae);
            MethodSummary { method, mae, mean, std }
        })
        .collect();
    Ok(BenchmarkReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        setting: a.setting,
        seed,
        replicates: a.replicates,
        standardized: a.standardize.enabled(),
        penalty: a.options.penalty,
        methods,
        replicate_records: records,
        timing,
    })
}

pub fn cmd_benchmark(a: &BenchmarkArgs) -> Result<String> {
    let report = run_benchmark(a)?;
    let mut w = create(&a.out)?;
    w.write_all(serde_json::to_string_pretty(&report)?.as_bytes())?;
    w.flush()?;
    Ok(format!(
        "{}\nreport written to {}",
        summary_table(&report),
        a.out.display()
    ))
}

fn summary_rows(report: &BenchmarkReport) -> Vec<[String; 5]> {
    report
        .methods
        .iter()
        .map(|m| {
            let secs = report
                .timing
                .seconds
                .get(m.method.name())
                .map(|s| mean_and_std(s).0)
                .unwrap_or(f64::NAN);
            [
                m.method.name().to_string(),
                m.mae.len().to_string(),
                fmt(m.mean),
                fmt(m.std),
                fmt(secs),
            ]
        })
        .collect()
}

const SUMMARY_HEADER: [&str; 5] = ["method", "replicates", "mae_mean", "mae_std", "seconds_mean"];

/// Fixed-width table of per-method MAE statistics and mean fit time.
pub fn summary_table(report: &BenchmarkReport) -> String {
    let mut out = format!(
        "{:<8} {:>10} {:>12} {:>12} {:>12}\n",
        SUMMARY_HEADER[0], SUMMARY_HEADER[1], SUMMARY_HEADER[2], SUMMARY_HEADER[3], SUMMARY_HEADER[4]
    );
    for m in &report.methods {
        let secs = report
            .timing
            .seconds
            .get(m.method.name())
            .map(|s| mean_and_std(s).0)
            .unwrap_or(f64::NAN);
        out.push_str(&format!(
            "{:<8} {:>10} {:>12.6} {:>12.6} {:>12.4}\n",
            m.method.name(),
            m.mae.len(),
            m.mean,
            m.std,
            secs
        ));
    }
    out.pop();
    out
}

pub fn read_report(path: &Path) -> Result<BenchmarkReport> {
    let r: BenchmarkReport = serde_json::from_str(&read_text(path)?)?;
    if r.format != REPORT_FORMAT || r.version != REPORT_VERSION {
        return Err(Error::Unsupported(format!(
            "unsupported report {} v{}",
            r.format, r.version
        )));
    }
    Ok(r)
}

pub fn cmd_report(a: &ReportArgs) -> Result<String> {
    let report = read_report(&a.input)?;
    if let Some(out) = &a.out {
        let mut wtr = csv::Writer::from_writer(create(out)?);
        wtr.write_record(SUMMARY_HEADER).map_err(csv_io)?;
        for row in summary_rows(&report) {
            wtr.write_record(&row).map_err(csv_io)?;
        }
        wtr.flush()?;
    }
    Ok(summary_table(&report))
}
