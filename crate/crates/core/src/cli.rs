//! Batch command-line front end. Every command writes JSON artifacts into
//! `--out` (atomically) and prints a one-line JSON summary on stdout; failures
//! print `{"error": {...}}` on stderr and exit with 2 (config), 3 (data) or
//! 4 (numerical).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{simulate, Dataset, Standardization, SIMULATION_NU};
use crate::error::Error;
use crate::hyperprior::{PriorSpec, DEFAULT_P_BELOW_2};
use crate::laplace::{find_mode_from, LaplaceFit, Objective};
use crate::likelihood::LatentState;
use crate::optimize::{fixed_nu_profile, map_estimate, MapResult, OptimizerConfig, StartOutcome, TracePoint};
use crate::params::HyperParams;
use crate::predict::{evaluate, log_predictive_density, predict_latent, EvalReport, PredictiveQuadrature, PredictiveSummary};
use crate::weibull::{self, DemoReport, WeibullParams};

/// ν used by the Gaussian-like variant.
pub const GAUSSIAN_NU: f64 = 5e4;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum ModelVariant {
    /// Student-t, Hessian Laplace, q1.
    #[serde(rename = "ht-st-1")]
    #[value(name = "ht-st-1")]
    HtSt1,
    /// Student-t, Fisher Laplace, q2.
    #[serde(rename = "ht-st-2")]
    #[value(name = "ht-st-2")]
    HtSt2,
    /// Near-Gaussian: ν fixed at 5·10⁴.
    #[serde(rename = "ht-g")]
    #[value(name = "ht-g")]
    HtG,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Q1,
    Q2,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Q1 => Objective::Q1,
            ObjectiveArg::Q2 => Objective::Q2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub p_below_2: f64,
    pub variance_scale: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            p_below_2: DEFAULT_P_BELOW_2,
            variance_scale: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    pub nu: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { n: 150, nu: SIMULATION_NU }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeibullConfig {
    pub sizes: Vec<usize>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub grid_points: usize,
}

impl Default for WeibullConfig {
    fn default() -> Self {
        Self {
            sizes: vec![3, 15],
            alpha1: 7.0,
            alpha2: 1.5,
            grid_points: 41,
        }
    }
}

/// Everything a command needs. Flags override the `--config` file, which
/// overrides the defaults; the resolved value is echoed in every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelVariant,
    /// Implied by `model` for the Student-t variants.
    pub objective: Option<Objective>,
    pub prior: PriorConfig,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Input CSV: header row, response in the last column.
    pub data: Option<PathBuf>,
    /// Fit artifact consumed by `predict`.
    pub fit: Option<PathBuf>,
    pub out: PathBuf,
    pub test_fraction: f64,
    /// Standardize covariates with the training mean and sd.
    pub standardize: bool,
    pub quadrature_nodes: usize,
    pub simulate: SimulateConfig,
    pub weibull: WeibullConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelVariant::HtSt2,
            objective: None,
            prior: PriorConfig::default(),
            optimizer: OptimizerConfig::default(),
            seed: 0,
            data: None,
            fit: None,
            out: PathBuf::from("out"),
            test_fraction: 0.5,
            standardize: true,
            quadrature_nodes: crate::predict::DEFAULT_GH_NODES,
            simulate: SimulateConfig::default(),
            weibull: WeibullConfig::default(),
        }
    }
}

impl RunConfig {
    /// Checks the invariants and fills in the objective.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        let implied = match self.model {
            ModelVariant::HtSt1 => Some(Objective::Q1),
            ModelVariant::HtSt2 => Some(Objective::Q2),
            ModelVariant::HtG => None,
        };
        self.objective = match (implied, self.objective) {
            (Some(want), Some(got)) if want != got => {
                return Err(CliError::Config(format!(
                    "model {} requires objective {}, got {}",
                    name(&self.model),
                    name(&want),
                    name(&got)
                )))
            }
            (Some(want), _) => Some(want),
            (None, got) => Some(got.unwrap_or(Objective::Q1)),
        };
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CliError::Config(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction)));
        }
        if self.quadrature_nodes < 2 {
            return Err(CliError::Config("quadrature_nodes must be at least 2".into()));
        }
        if self.weibull.grid_points < 2 {
            return Err(CliError::Config("weibull.grid_points must be at least 2".into()));
        }
        PriorSpec::new(self.prior.p_below_2, self.prior.variance_scale).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(self)
    }

    pub fn objective(&self) -> Objective {
        self.objective.unwrap_or(Objective::Q1)
    }

    fn prior_spec(&self) -> PriorSpec {
        PriorSpec::new(self.prior.p_below_2, self.prior.variance_scale).expect("checked in resolve")
    }
}

/// The serialized spelling of a unit enum.
fn name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|j| j.as_str().map(str::to_owned)).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let kind = match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numerical(_) => "numerical",
        };
        json!({"error": {"kind": kind, "code": self.exit_code(), "message": self.to_string()}})
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::Dimension(_) => CliError::Data(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hetgp", version, about = "Heteroscedastic Student-t GP regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub model: Option<ModelVariant>,
    #[arg(long, global = true, value_enum)]
    pub objective: Option<ObjectiveArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw the synthetic heteroscedastic benchmark.
    Simulate(SimulateArgs),
    /// MAP fit of the model parameters.
    Fit(DataArgs),
    /// Predictive summaries from a fit artifact.
    Predict(PredictArgs),
    /// Seeded train/test split, fit, and R1/R2/P.
    Evaluate(EvaluateArgs),
    /// Weibull fits in the common and the orthogonal parametrization.
    WeibullDemo(WeibullArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub nu: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Fit artifact written by `fit`.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Covariates, optionally followed by the response column.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct WeibullArgs {
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
}

/// Resolved configuration for a parsed command line.
pub fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(m) = cli.model {
        cfg.model = m;
        if cli.objective.is_none() {
            cfg.objective = None;
        }
    }
    if let Some(o) = cli.objective {
        cfg.objective = Some(o.into());
    }
    match &cli.command {
        Command::Simulate(a) => {
            cfg.simulate.n = a.n.unwrap_or(cfg.simulate.n);
            cfg.simulate.nu = a.nu.unwrap_or(cfg.simulate.nu);
        }
        Command::Fit(a) => cfg.data = a.data.clone().or(cfg.data),
        Command::Predict(a) => {
            cfg.fit = a.fit.clone().or(cfg.fit);
            cfg.data = a.data.clone().or(cfg.data);
        }
        Command::Evaluate(a) => {
            cfg.data = a.data.clone().or(cfg.data);
            cfg.test_fraction = a.test_fraction.unwrap_or(cfg.test_fraction);
        }
        Command::WeibullDemo(a) => {
            if let Some(s) = &a.sizes {
                cfg.weibull.sizes = s.clone();
            }
        }
    }
    cfg.resolve()
}

/// Natural-scale parameters, length-scales in the units of the input CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalParams {
    pub nu: f64,
    pub sigma1_sq: f64,
    pub ell1: Vec<f64>,
    pub sigma2_sq: f64,
    pub ell2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingData {
    pub covariate_names: Vec<String>,
    pub response_name: String,
    /// Row-major covariates, as read.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub version: String,
    pub config: RunConfig,
    pub model: ModelVariant,
    pub objective: Objective,
    pub fixed_nu: Option<f64>,
    /// Log-parameters on the standardized covariate scale.
    pub theta_hat: HyperParams,
    pub natural: NaturalParams,
    pub objective_value: f64,
    pub log_marginal: f64,
    pub converged: bool,
    pub evaluations: usize,
    pub trace: Vec<TracePoint>,
    pub starts: Vec<StartOutcome>,
    pub standardization: Standardization,
    pub mode_f1: Vec<f64>,
    pub mode_f2: Vec<f64>,
    pub training: TrainingData,
}

impl FitArtifact {
    fn training_dataset(&self) -> Result<Dataset, CliError> {
        let t = &self.training;
        let n = t.y.len();
        let p = t.covariate_names.len();
        if t.x.len() != n || t.x.iter().any(|r| r.len() != p) {
            return Err(CliError::Data("fit artifact has inconsistent training data".into()));
        }
        let flat: Vec<f64> = t.x.iter().flatten().copied().collect();
        let mut d = Dataset::new(DMatrix::from_row_slice(n, p, &flat), DVector::from_vec(t.y.clone()))?;
        d.covariate_names = t.covariate_names.clone();
        d.response_name = t.response_name.clone();
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationArtifact {
    pub version: String,
    pub split: SplitIndices,
    pub fit: FitArtifact,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionArtifact {
    pub version: String,
    pub config: RunConfig,
    pub x: Vec<Vec<f64>>,
    pub predictions: Vec<PredictiveSummary>,
    /// Filled when the input carried a response column.
    pub p_stat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub version: String,
    pub config: RunConfig,
    pub x: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullArtifact {
    pub version: String,
    pub config: RunConfig,
    pub demo: DemoReport,
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    let io = |e: std::io::Error| CliError::Data(format!("cannot write into {}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, &target).map_err(io)?;
    Ok(target)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    path.as_deref().ok_or_else(|| CliError::Config(format!("no {what} given (flag or config)")))
}

/// MAP fit of `data` under `cfg`.
pub fn fit_dataset(data: &Dataset, cfg: &RunConfig) -> Result<FitArtifact, CliError> {
    let standardization = if cfg.standardize {
        Standardization::fit(&data.x)
    } else {
        Standardization::identity(data.input_dim())
    };
    let x = standardization.apply(&data.x)?;
    let prior = cfg.prior_spec();
    let which = cfg.objective();
    let (r, fixed_nu): (MapResult, Option<f64>) = match cfg.model {
        ModelVariant::HtG => (fixed_nu_profile(&data.y, &x, GAUSSIAN_NU, &prior, which, &cfg.optimizer)?, Some(GAUSSIAN_NU)),
        _ => (map_estimate(&data.y, &x, &prior, which, &cfg.optimizer)?, None),
    };
    let th = &r.theta_hat;
    let scale = |ell: Vec<f64>| ell.iter().zip(&standardization.sd).map(|(l, s)| l * s).collect();
    let mode = r.fit.mode();
    Ok(FitArtifact {
        version: VERSION.into(),
        config: cfg.clone(),
        model: cfg.model,
        objective: which,
        fixed_nu,
        natural: NaturalParams {
            nu: th.nu(),
            sigma1_sq: th.sigma1_sq(),
            ell1: scale(th.ell1()),
            sigma2_sq: th.sigma2_sq(),
            ell2: scale(th.ell2()),
        },
        theta_hat: th.clone(),
        objective_value: r.objective,
        log_marginal: r.log_marginal,
        converged: r.converged,
        evaluations: r.evaluations,
        trace: r.trace.clone(),
        starts: r.starts.clone(),
        standardization,
        mode_f1: mode.f1.iter().copied().collect(),
        mode_f2: mode.f2.iter().copied().collect(),
        training: TrainingData {
            covariate_names: data.covariate_names.clone(),
            response_name: data.response_name.clone(),
            x: rows(&data.x),
            y: data.y.iter().copied().collect(),
        },
    })
}

/// Deterministic split: a seeded shuffle, the first `round(n·fraction)`
/// indices become the test set. Both lists are returned sorted.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<SplitIndices, CliError> {
    if n < 4 {
        return Err(CliError::Data(format!("need at least 4 rows to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64 * fraction).round() as usize).clamp(1, n - 3);
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(SplitIndices { train, test })
}

pub fn evaluate_dataset(data: &Dataset, cfg: &RunConfig) -> Result<EvaluationArtifact, CliError> {
    let split = split_indices(data.len(), cfg.test_fraction, cfg.seed)?;
    let fit = fit_dataset(&data.subset(&split.train), cfg)?;
    let test = data.subset(&split.test);
    let laplace = refit(&fit)?;
    let x_test = fit.standardization.apply(&test.x)?;
    let quad = PredictiveQuadrature::new(cfg.quadrature_nodes)?;
    let report = evaluate(&laplace, &x_test, &test.y, &quad)?;
    Ok(EvaluationArtifact {
        version: VERSION.into(),
        split,
        fit,
        report,
    })
}

/// Laplace fit at the stored θ̂, recomputed from the stored training data
/// starting at the stored mode.
pub fn refit(fit: &FitArtifact) -> Result<LaplaceFit, CliError> {
    let data = fit.training_dataset()?;
    let x = fit.standardization.apply(&data.x)?;
    // a cold start need not reach the mode the optimizer tracked
    let init = LatentState::new(DVector::from_vec(fit.mode_f1.clone()), DVector::from_vec(fit.mode_f2.clone()))
        .map_err(|_| CliError::Data("fit artifact mode does not match its training data".into()))?;
    let m = find_mode_from(&data.y, &x, &fit.theta_hat, &fit.config.optimizer.mode, init)?;
    Ok(LaplaceFit::from_mode(m, fit.objective.curvature())?)
}

/// Parses a headed numeric CSV into rows, with line numbers in errors.
fn read_matrix(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read CSV header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::Data(format!("line {line}: {e}")))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| CliError::Data(format!("line {line}: non-numeric or non-finite field")))?;
        out.push(row);
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{} has no data rows", path.display())));
    }
    Ok((header, out))
}

pub fn predict_from(fit: &FitArtifact, header_len: usize, rows_in: &[Vec<f64>], cfg: &RunConfig) -> Result<PredictionArtifact, CliError> {
    let p = fit.training.covariate_names.len();
    let with_y = header_len == p + 1;
    if header_len != p && !with_y {
        return Err(CliError::Data(format!("expected {p} covariate columns (optionally plus a response), found {header_len}")));
    }
    if let Some(i) = rows_in.iter().position(|r| r.len() != header_len) {
        return Err(CliError::Data(format!("line {}: expected {header_len} fields", i + 2)));
    }
    let n = rows_in.len();
    let flat: Vec<f64> = rows_in.iter().flat_map(|r| r[..p].iter().copied()).collect();
    let x_raw = DMatrix::from_row_slice(n, p, &flat);
    let x = fit.standardization.apply(&x_raw)?;
    let laplace = refit(fit)?;
    let mut predictions = predict_latent(&laplace, &x)?;
    let nu = fit.theta_hat.nu();
    let p_stat = if with_y {
        let quad = PredictiveQuadrature::new(cfg.quadrature_nodes)?;
        let mut total = 0.0;
        for (s, r) in predictions.iter_mut().zip(rows_in) {
            let lp = log_predictive_density(s, nu, r[p], &quad)?;
            s.log_pred_density = Some(lp);
            total += lp;
        }
        Some(total)
    } else {
        None
    };
    Ok(PredictionArtifact {
        version: VERSION.into(),
        config: cfg.clone(),
        x: rows(&x_raw),
        predictions,
        p_stat,
    })
}

/// Runs one command; returns the stdout summary.
pub fn run(cli: &Cli) -> Result<serde_json::Value, CliError> {
    let cfg = load_config(cli)?;
    let out = cfg.out.clone();
    match &cli.command {
        Command::Simulate(_) => {
            let sim = simulate(cfg.simulate.n, cfg.seed, cfg.simulate.nu)?;
            let data_path = write_atomic(&out, "data.csv", sim.data.to_csv_string().as_bytes())?;
            let truth = SimulationTruth {
                version: VERSION.into(),
                config: cfg.clone(),
                x: sim.data.x.column(0).iter().copied().collect(),
                f1: sim.f1,
                f2: sim.f2,
            };
            let truth_path = write_json(&out, "truth.json", &truth)?;
            Ok(json!({"command": "simulate", "n": cfg.simulate.n, "data": data_path, "truth": truth_path}))
        }
        Command::Fit(_) => {
            let data = Dataset::read_csv(require(&cfg.data, "data path")?)?;
            let art = fit_dataset(&data, &cfg)?;
            let path = write_json(&out, "fit.json", &art)?;
            Ok(json!({"command": "fit", "natural": art.natural, "objective": art.objective_value,
                      "converged": art.converged, "artifact": path}))
        }
        Command::Predict(_) => {
            let fit_path = require(&cfg.fit, "fit artifact")?;
            let text = fs::read_to_string(fit_path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", fit_path.display())))?;
            let fit: FitArtifact =
                serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", fit_path.display())))?;
            let (header, rows_in) = read_matrix(require(&cfg.data, "data path")?)?;
            let art = predict_from(&fit, header.len(), &rows_in, &cfg)?;
            let path = write_json(&out, "predictions.json", &art)?;
            Ok(json!({"command": "predict", "points": art.predictions.len(), "p_stat": art.p_stat, "artifact": path}))
        }
        Command::Evaluate(_) => {
            let data = Dataset::read_csv(require(&cfg.data, "data path")?)?;
            let art = evaluate_dataset(&data, &cfg)?;
            let path = write_json(&out, "evaluation.json", &art)?;
            Ok(json!({"command": "evaluate", "r1": art.report.r1, "r2": art.report.r2, "p": art.report.p_stat,
                      "artifact": path}))
        }
        Command::WeibullDemo(_) => {
            let w = &cfg.weibull;
            let truth = WeibullParams::new(w.alpha1, w.alpha2).map_err(|e| CliError::Config(e.to_string()))?;
            let demo = weibull::demo(&truth, &w.sizes, cfg.seed, w.grid_points)?;
            let summary: Vec<_> = demo
                .cases
                .iter()
                .map(|c| {
                    json!({"n": c.n, "correlation": c.fits.iter().map(|f| f.correlation).collect::<Vec<_>>(),
                           "gaussian_gap": c.fits.iter().map(|f| f.gaussian_gap).collect::<Vec<_>>()})
                })
                .collect();
            let path = write_json(&out, "weibull.json", &WeibullArtifact {
                version: VERSION.into(),
                config: cfg.clone(),
                demo,
            })?;
            Ok(json!({"command": "weibull-demo", "cases": summary, "artifact": path}))
        }
    }
}

/// Parses `args`, runs, prints, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            eprintln!("{}", CliError::Config(e.to_string()).to_json());
            return 2;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
