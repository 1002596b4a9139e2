//! Command-line arguments and their serialized form.
//!
//! Every subcommand's arguments double as its part of a [`RunConfig`], so
//! `--dump-config` writes exactly what a later `--config` run reads back.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use shrinkage::risk::Ray;
use shrinkage::{EstimatorTemplate, LinearModel, PriorScaling};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_REPS: usize = 10_000;

#[derive(Debug, Parser)]
#[command(name = "shrinkage", version, about = "Shrinkage estimators, predictive densities and their risks")]
pub struct Cli {
    #[command(subcommand)]
    pub task: Option<Task>,

    /// Base seed of every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Monte-Carlo replicates per grid point.
    #[arg(long, global = true)]
    pub reps: Option<usize>,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Report errors as JSON on standard error.
    #[arg(long, global = true)]
    pub json_errors: bool,

    /// Print the resolved run configuration as JSON and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,

    /// Run a configuration written by `--dump-config`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// A complete, reproducible run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub reps: usize,
    pub format: Format,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub task: Task,
}

impl RunConfig {
    /// Merges the command line with an optional config file; explicit flags win.
    pub fn resolve(cli: &Cli) -> Result<Self, CliError> {
        let mut cfg = match (&cli.config, &cli.task) {
            (Some(_), Some(_)) => return Err(CliError::usage("--config cannot be combined with a subcommand")),
            (None, None) => return Err(CliError::usage("a subcommand or --config is required (see --help)")),
            (Some(path), None) => Self::load(path)?,
            (None, Some(task)) => RunConfig {
                seed: DEFAULT_SEED,
                reps: DEFAULT_REPS,
                format: Format::default(),
                out: None,
                task: task.clone(),
            },
        };
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        if let Some(reps) = cli.reps {
            cfg.reps = reps;
        }
        if let Some(format) = cli.format {
            cfg.format = format;
        }
        if cli.out.is_some() {
            cfg.out.clone_from(&cli.out);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Task {
    /// KL risk gap against the uniform-prior predictive along a ray of means.
    RiskCurve(RiskCurveArgs),
    /// Uniform-prior and Bayes predictive densities over a planar grid of y.
    DensitySlice(DensitySliceArgs),
    /// Point estimates of the mean for one observation.
    Estimate(EstimateArgs),
    /// Sign scan of the sufficient minimaxity conditions.
    Diagnose(DiagnoseArgs),
    /// KL risk gap of Bayes predictive densities in a normal linear regression.
    RegressCurve(RegressCurveArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskCurveArgs {
    /// Estimator template; repeat for several curves.
    #[arg(long = "prior", required = true)]
    pub prior: Vec<EstimatorTemplate>,
    #[arg(long, value_delimiter = ',', default_value = "3")]
    pub p: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub vx: f64,
    #[arg(long, default_value_t = 0.2)]
    pub vy: f64,
    #[arg(long, value_enum, default_value_t = RayArg::Ones)]
    pub ray: RayArg,
    /// Values of c: `start:stop:step`, a comma list, or one number.
    #[arg(long, allow_hyphen_values = true)]
    pub c: Grid,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySliceArgs {
    #[arg(long, default_value = "harmonic")]
    pub prior: EstimatorTemplate,
    #[arg(long, default_value_t = 5)]
    pub p: usize,
    #[arg(long, default_value_t = 1.0)]
    pub vx: f64,
    #[arg(long, default_value_t = 0.2)]
    pub vy: f64,
    /// Observed x as a comma list; repeat for several panels.
    #[arg(long = "x", required = true, allow_hyphen_values = true)]
    pub x: Vec<Point>,
    /// The two coordinates of y that vary (0-based).
    #[arg(long, value_delimiter = ',', num_args = 1, default_value = "0,1")]
    pub axes: Vec<usize>,
    #[arg(long, default_value = "-2:6:0.1", allow_hyphen_values = true)]
    pub y1: Grid,
    #[arg(long, default_value = "-4:4:0.1", allow_hyphen_values = true)]
    pub y2: Grid,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateArgs {
    /// `mle`, `js`, `js+`, `lindley`, `lindley+`, or a prior template for the
    /// posterior mean; repeat for several.
    #[arg(long = "estimator", required = true)]
    pub estimator: Vec<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Point,
    /// Sampling variance of x.
    #[arg(long, default_value_t = 1.0)]
    pub v: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub prior: EstimatorTemplate,
    #[arg(long, default_value_t = 5)]
    pub p: usize,
    #[arg(long, default_value_t = 1.0)]
    pub vx: f64,
    #[arg(long, default_value_t = 0.2)]
    pub vy: f64,
    /// Scan points: the origin plus random directions at increasing radii.
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    #[arg(long, default_value_t = 10.0)]
    pub radius: f64,
    /// Variances (or regression weights w) per point.
    #[arg(long, default_value_t = 5)]
    pub v_grid: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    /// Also compare both sides of the risk identity at the origin with `--reps` replicates.
    #[arg(long)]
    pub identity: bool,
    /// Regression design (JSON `{"a": rows, "b": rows}` or CSV); switches to the trace condition.
    #[arg(long, value_parser = load_design)]
    #[serde(default)]
    pub design: Option<LinearModel>,
    #[arg(long, value_enum, default_value_t = ScalingArg::RiskMetric)]
    #[serde(default)]
    pub scaling: ScalingArg,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressCurveArgs {
    /// Regression design (JSON `{"a": rows, "b": rows}` or CSV rows tagged `a` / `b`).
    #[arg(long, value_parser = load_design)]
    pub design: LinearModel,
    /// Prior template; repeat for several curves.
    #[arg(long = "prior", required = true)]
    pub prior: Vec<EstimatorTemplate>,
    #[arg(long, value_enum, default_value_t = ScalingArg::RiskMetric)]
    pub scaling: ScalingArg,
    /// Direction of beta; `1_p` when absent.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub direction: Option<Point>,
    #[arg(long, allow_hyphen_values = true)]
    pub c: Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayArg {
    #[default]
    Ones,
    E1,
}

impl From<RayArg> for Ray {
    fn from(r: RayArg) -> Ray {
        match r {
            RayArg::Ones => Ray::Ones,
            RayArg::E1 => Ray::E1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingArg {
    #[default]
    RiskMetric,
    Rotated,
}

impl From<ScalingArg> for PriorScaling {
    fn from(s: ScalingArg) -> PriorScaling {
        match s {
            ScalingArg::RiskMetric => PriorScaling::RiskMetric,
            ScalingArg::Rotated => PriorScaling::Rotated,
        }
    }
}

/// A list of grid values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Grid(pub Vec<f64>);

impl FromStr for Grid {
    type Err = String;

    /// `start:stop:step` is inclusive of `stop` up to rounding; `stop < start`
    /// gives an empty grid.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Grid(Vec::new()));
        }
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            let [a, b, h] = parts.as_slice() else {
                return Err(format!("range `{s}` must be start:stop:step"));
            };
            let (a, b, h) = (number(a)?, number(b)?, number(h)?);
            if !(h > 0.0 && h.is_finite()) {
                return Err(format!("range step {h} must be positive"));
            }
            if b < a {
                return Ok(Grid(Vec::new()));
            }
            let n = ((b - a) / h + 1e-9).floor() as usize;
            return Ok(Grid((0..=n).map(|i| a + i as f64 * h).collect()));
        }
        s.split(',').map(number).collect::<Result<_, _>>().map(Grid)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text: Vec<String> = self.0.iter().map(f64::to_string).collect();
        f.write_str(&text.join(","))
    }
}

/// A point of `R^p` written as a comma list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl FromStr for Point {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v: Vec<f64> = s.split(',').map(number).collect::<Result<_, _>>()?;
        Ok(Point(v))
    }
}

fn number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

/// Reads a design from JSON, or from headerless CSV whose first field names
/// the matrix (`a` or `b`) and whose remaining fields are one row.
pub fn load_design(path: &str) -> Result<LinearModel, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read design {path}: {e}"))?;
    if text.trim_start().starts_with('{') {
        return serde_json::from_str(&text).map_err(|e| format!("invalid design {path}: {e}"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format!("invalid design {path}: {e}"))?;
        let row = record
            .iter()
            .skip(1)
            .map(number)
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| format!("{path} row {}: {e}", line + 1))?;
        match record.get(0).map(str::to_ascii_lowercase).as_deref() {
            Some("a") => a.push(row),
            Some("b") => b.push(row),
            other => return Err(format!("{path} row {}: expected `a` or `b`, found {other:?}", line + 1)),
        }
    }
    LinearModel::from_rows(&a, &b).map_err(|e| format!("invalid design {path}: {e}"))
}
