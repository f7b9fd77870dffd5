//! Run configuration files.

use std::path::{Path, PathBuf};

use rbfgen::beam::{BeamPriorConfig, BeamProblem, Method, OptimizerConfig};
use rbfgen::priors::PriorTermSpec;
use rbfgen::training::{BasisConfig, TrainConfig};
use rbfgen::{KernelSpec, Placement};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "camelCase")]
pub enum RunConfig {
    Demo1d(Demo1dConfig),
    Beam(BeamConfig),
    Crossval(CrossvalConfig),
    Fit(FitConfig),
    Predict(PredictConfig),
}

impl RunConfig {
    pub fn name(&self) -> &'static str {
        match self {
            RunConfig::Demo1d(_) => "demo1d",
            RunConfig::Beam(_) => "beam",
            RunConfig::Crossval(_) => "crossval",
            RunConfig::Fit(_) => "fit",
            RunConfig::Predict(_) => "predict",
        }
    }
}

/// Settings of the four prior variants of the 1D demo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct Demo1dPriors {
    pub point_x: f64,
    pub point_std: f64,
    pub curvature_at: Vec<f64>,
    pub curvature_step: f64,
    /// Defaults to the true second derivative, 40.
    pub curvature_target: Option<f64>,
    pub curvature_std: f64,
    pub mono_points: usize,
}

impl Default for Demo1dPriors {
    fn default() -> Self {
        Demo1dPriors {
            point_x: 0.3,
            point_std: 1.0,
            curvature_at: vec![0.25, 0.5, 0.75],
            curvature_step: 0.1,
            curvature_target: None,
            curvature_std: 1.0,
            mono_points: 64,
        }
    }
}

pub fn demo_basis() -> BasisConfig {
    BasisConfig {
        kernel: KernelSpec::gaussian(5.0),
        centers: Some(12),
        placement: Some(Placement::UniformGrid),
        seed: 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Demo1dConfig {
    pub out_dir: PathBuf,
    #[serde(default)]
    pub priors: Demo1dPriors,
    #[serde(default)]
    pub train_cfg: TrainConfig,
    #[serde(default = "demo_basis")]
    pub basis: BasisConfig,
    /// Spread of the prior-free ensemble, `alpha = scale * N(0, I)`.
    #[serde(default = "one")]
    pub untrained_scale: f64,
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
}

fn one() -> f64 {
    1.0
}

fn default_curve_points() -> usize {
    101
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BeamConfig {
    pub out_dir: PathBuf,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_ratio")]
    pub ratio: usize,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub train_cfg: TrainConfig,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub baseline_kernel: KernelSpec,
    #[serde(default)]
    pub priors: BeamPriorConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub problem: BeamProblem,
    /// 1-based element indices to draw slice plots for (first seed of each
    /// dimension); empty disables plots.
    #[serde(default = "default_slice_axes")]
    pub slice_axes: Vec<usize>,
}

fn default_dims() -> Vec<usize> {
    vec![10]
}

fn default_ratio() -> usize {
    1
}

fn default_seeds() -> usize {
    5
}

fn default_methods() -> Vec<Method> {
    vec![Method::BaselineRbf, Method::RbfGen]
}

fn default_slice_axes() -> Vec<usize> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CrossvalConfig {
    pub dataset_path: PathBuf,
    pub mono_table_path: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default = "default_ncomp")]
    pub ncomp: usize,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_l2o_train")]
    pub train_cfg: TrainConfig,
    #[serde(default = "default_l2o_basis")]
    pub basis: BasisConfig,
    #[serde(default)]
    pub baseline_kernel: KernelSpec,
    #[serde(default = "default_mono_points")]
    pub mono_points: usize,
    #[serde(default = "one")]
    pub mono_weight: f64,
    #[serde(default = "default_margin")]
    pub bounds_margin: f64,
}

fn default_ncomp() -> usize {
    5
}

fn default_method() -> Method {
    Method::RbfGen
}

fn default_l2o_train() -> TrainConfig {
    rbfgen::eval::L2oConfig::default().train
}

fn default_l2o_basis() -> BasisConfig {
    rbfgen::eval::L2oConfig::default().basis
}

fn default_mono_points() -> usize {
    rbfgen::eval::L2oConfig::default().mono_points
}

fn default_margin() -> f64 {
    rbfgen::eval::L2oConfig::default().bounds_margin
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FitConfig {
    pub dataset_path: PathBuf,
    pub prior_spec: Vec<PriorTermSpec>,
    pub model_out: PathBuf,
    /// Response column; defaults to the first `q` column.
    #[serde(default)]
    pub qoi: Option<String>,
    /// Input box; defaults to the per-column data range.
    #[serde(default)]
    pub bounds: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub train_cfg: TrainConfig,
    #[serde(default)]
    pub basis: BasisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PredictConfig {
    pub model_path: PathBuf,
    pub points_path: PathBuf,
    pub out_csv: PathBuf,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_level() -> f64 {
    0.95
}

fn typed<T: DeserializeOwned>(value: serde_json::Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(if path == "." {
            e.inner().to_string()
        } else {
            format!("{path}: {}", e.inner())
        })
    })
}

/// Parses and validates a config document.
pub fn parse_config_str(text: &str) -> Result<RunConfig, CliError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed JSON: {e}")))?;
    let mut object = match value {
        serde_json::Value::Object(map) => map,
        _ => return Err(CliError::Config("config must be a JSON object".into())),
    };
    let command = match object.remove("command") {
        Some(serde_json::Value::String(s)) => s,
        Some(_) => return Err(CliError::Config("command: expected a string".into())),
        None => return Err(CliError::Config("command: missing field".into())),
    };
    let rest = serde_json::Value::Object(object);
    let config = match command.as_str() {
        "demo1d" => RunConfig::Demo1d(typed(rest)?),
        "beam" => RunConfig::Beam(typed(rest)?),
        "crossval" => RunConfig::Crossval(typed(rest)?),
        "fit" => RunConfig::Fit(typed(rest)?),
        "predict" => RunConfig::Predict(typed(rest)?),
        other => {
            return Err(CliError::Config(format!(
                "command: unknown command `{other}` (expected demo1d, beam, crossval, fit or predict)"
            )))
        }
    };
    validate(&config)?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_str(&text)
}

fn bad(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn check_train(prefix: &str, cfg: &TrainConfig) -> Result<(), CliError> {
    match cfg.invalid_field() {
        Some((field, msg)) => Err(bad(&format!("{prefix}.{field}"), msg)),
        None => Ok(()),
    }
}

fn check_basis(prefix: &str, basis: &BasisConfig) -> Result<(), CliError> {
    basis
        .kernel
        .validate()
        .map_err(|e| bad(&format!("{prefix}.kernel"), e))?;
    if basis.centers == Some(0) {
        return Err(bad(&format!("{prefix}.centers"), "must be positive"));
    }
    Ok(())
}

fn check_file(path_name: &str, path: &Path) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(bad(path_name, format!("file {} does not exist", path.display())));
    }
    Ok(())
}

/// Range checks beyond what the types enforce.
pub fn validate(config: &RunConfig) -> Result<(), CliError> {
    match config {
        RunConfig::Demo1d(c) => {
            check_train("trainCfg", &c.train_cfg)?;
            check_basis("basis", &c.basis)?;
            if c.basis.centers.is_some_and(|k| k <= 4) {
                return Err(bad("basis.centers", "must exceed the 4 data points"));
            }
            if !(c.untrained_scale > 0.0) {
                return Err(bad("untrainedScale", "must be positive"));
            }
            if c.curve_points < 2 {
                return Err(bad("curvePoints", "must be at least 2"));
            }
            let p = &c.priors;
            if !(p.point_std > 0.0) {
                return Err(bad("priors.pointStd", "must be positive"));
            }
            if !(p.curvature_std > 0.0) {
                return Err(bad("priors.curvatureStd", "must be positive"));
            }
            if !(p.curvature_step > 0.0) {
                return Err(bad("priors.curvatureStep", "must be positive"));
            }
            if p.mono_points < 2 {
                return Err(bad("priors.monoPoints", "must be at least 2"));
            }
        }
        RunConfig::Beam(c) => {
            if c.dims.is_empty() || c.dims.contains(&0) {
                return Err(bad("dims", "must be a nonempty list of positive counts"));
            }
            if c.ratio == 0 {
                return Err(bad("ratio", "must be positive"));
            }
            if c.seeds == 0 {
                return Err(bad("seeds", "must be positive"));
            }
            if c.methods.is_empty() {
                return Err(bad("methods", "must not be empty"));
            }
            check_train("trainCfg", &c.train_cfg)?;
            check_basis("basis", &c.basis)?;
            c.baseline_kernel
                .validate()
                .map_err(|e| bad("baselineKernel", e))?;
            if !(c.priors.perturb > 0.0) {
                return Err(bad("priors.perturb", "must be positive"));
            }
            if c.priors.mono_points < 2 || c.priors.slice_points < 1 {
                return Err(bad("priors", "need monoPoints >= 2 and slicePoints >= 1"));
            }
            if c.optimizer.starts == 0 {
                return Err(bad("optimizer.starts", "must be positive"));
            }
            if !(c.optimizer.fd_step > 0.0) {
                return Err(bad("optimizer.fdStep", "must be positive"));
            }
            c.problem.validate().map_err(|e| bad("problem", e))?;
            if let Some(a) = c.slice_axes.iter().find(|a| **a == 0 || c.dims.iter().any(|d| **a > *d)) {
                return Err(bad("sliceAxes", format!("element {a} is outside 1..=D")));
            }
        }
        RunConfig::Crossval(c) => {
            check_file("datasetPath", &c.dataset_path)?;
            check_file("monoTablePath", &c.mono_table_path)?;
            if c.ncomp == 0 {
                return Err(bad("ncomp", "must be positive"));
            }
            check_train("trainCfg", &c.train_cfg)?;
            check_basis("basis", &c.basis)?;
            c.baseline_kernel
                .validate()
                .map_err(|e| bad("baselineKernel", e))?;
            if c.mono_points < 2 {
                return Err(bad("monoPoints", "must be at least 2"));
            }
            if !(c.bounds_margin >= 0.0) {
                return Err(bad("boundsMargin", "must be nonnegative"));
            }
        }
        RunConfig::Fit(c) => {
            check_file("datasetPath", &c.dataset_path)?;
            if c.prior_spec.is_empty() {
                return Err(bad("priorSpec", "needs at least one prior term"));
            }
            check_train("trainCfg", &c.train_cfg)?;
            check_basis("basis", &c.basis)?;
        }
        RunConfig::Predict(c) => {
            check_file("modelPath", &c.model_path)?;
            check_file("pointsPath", &c.points_path)?;
            if !(c.level > 0.0 && c.level < 1.0) {
                return Err(bad("level", "must lie in (0, 1)"));
            }
        }
    }
    Ok(())
}
