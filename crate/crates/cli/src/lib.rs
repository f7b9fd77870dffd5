//! Batch driver for the demo, the beam study, cross-validation and
//! standalone fit/predict runs.

pub mod config;
pub mod demo;
pub mod output;

use std::path::{Path, PathBuf};

use rbfgen::beam::{
    fit_beam_surrogate, run_beam_study, sample_training_data, slice_plot, study_csv, summarize, summary_csv,
    BeamProblem, BeamStudyConfig, BeamSurrogate, Method,
};
use rbfgen::eval::{run_l2o, L2oConfig, MonotonicityTable, MultiQoiData};
use rbfgen::training::predict_with_ci;
use rbfgen::{Bounds, Dataset, SurrogateEnsemble};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{parse_config, parse_config_str, RunConfig};
use config::{BeamConfig, CrossvalConfig, Demo1dConfig, FitConfig, PredictConfig};
use output::Outputs;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{context}: {source}")]
    Run {
        context: &'static str,
        #[source]
        source: rbfgen::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Run { source, .. } if source.is_numerical() => 4,
            CliError::Run { .. } => 3,
        }
    }
}

fn ctx(context: &'static str) -> impl FnOnce(rbfgen::Error) -> CliError {
    move |source| CliError::Run { context, source }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    /// Single worker and zeroed wall times, so reruns are byte-identical.
    pub deterministic: bool,
}

impl RunOptions {
    fn threads(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.jobs.unwrap_or(0)
        }
    }
}

/// Runs a parsed config and returns the paths written.
pub fn run(config: &RunConfig, opts: RunOptions) -> Result<Vec<PathBuf>, CliError> {
    if opts.jobs == Some(0) {
        return Err(CliError::Config("--jobs: must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads())
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))?;
    let (mut outputs, manifest_dir, seeds) = pool.install(|| match config {
        RunConfig::Demo1d(c) => cmd_demo1d(c),
        RunConfig::Beam(c) => cmd_beam(c, opts),
        RunConfig::Crossval(c) => cmd_crossval(c),
        RunConfig::Fit(c) => cmd_fit(c),
        RunConfig::Predict(c) => cmd_predict(c),
    })?;
    let files: Vec<String> = outputs
        .paths()
        .iter()
        .map(|p| p.strip_prefix(&manifest_dir).unwrap_or(p).display().to_string())
        .collect();
    let manifest = json!({
        "command": config.name(),
        "config": config,
        "seeds": seeds,
        "deterministic": opts.deterministic,
        "jobs": pool.current_num_threads(),
        "versions": {
            "rbfgen": rbfgen::VERSION,
            "rbfgen-cli": env!("CARGO_PKG_VERSION"),
        },
        "outputs": files,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    outputs.add(manifest_dir.join("manifest.json"), text + "\n");
    outputs.commit()
}

type Produced = (Outputs, PathBuf, serde_json::Value);

fn parent_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn cmd_demo1d(cfg: &Demo1dConfig) -> Result<Produced, CliError> {
    let mut out = Outputs::new();
    let dir = &cfg.out_dir;
    let data = demo::demo_dataset().map_err(ctx("demo1d"))?;
    let mut data_csv = String::from("x,y\n");
    for i in 0..data.len() {
        data_csv.push_str(&format!("{},{}\n", data.x[(i, 0)], data.y[i]));
    }
    out.add(dir.join("data.csv"), data_csv);
    let grid = demo::unit_grid(cfg.curve_points);
    for variant in demo::DemoVariant::ALL {
        let run = demo::run_variant(variant, cfg).map_err(ctx("demo1d"))?;
        let stem = variant.file_stem();
        out.add(dir.join(format!("{stem}_curves.csv")), demo::curves_csv(&run, &grid));
        out.add(dir.join(format!("{stem}.svg")), demo::overlay_svg(&run, &grid, 50));
        if let Some(loss) = &run.loss {
            out.add(dir.join(format!("{stem}_loss.csv")), loss.to_csv(cfg.train_cfg.loss_log_every));
        }
    }
    let seeds = json!({ "train": cfg.train_cfg.seed, "basis": cfg.basis.seed });
    Ok((out, dir.clone(), seeds))
}

pub fn beam_study_config(cfg: &BeamConfig) -> BeamStudyConfig {
    BeamStudyConfig {
        dims: cfg.dims.clone(),
        ratio: cfg.ratio,
        seeds: cfg.seeds,
        base_seed: cfg.base_seed,
        methods: cfg.methods.clone(),
        train: cfg.train_cfg.clone(),
        basis: cfg.basis.clone(),
        baseline_kernel: cfg.baseline_kernel,
        priors: cfg.priors.clone(),
        optimizer: cfg.optimizer.clone(),
        problem: cfg.problem.clone(),
    }
}

fn cmd_beam(cfg: &BeamConfig, opts: RunOptions) -> Result<Produced, CliError> {
    let study = beam_study_config(cfg);
    let rows = run_beam_study(&study, !opts.deterministic).map_err(ctx("beam"))?;
    let mut out = Outputs::new();
    let dir = &cfg.out_dir;
    out.add(dir.join("study.csv"), study_csv(&rows));
    out.add(dir.join("summary.csv"), summary_csv(&summarize(&rows)));
    if !cfg.slice_axes.is_empty() {
        for &dim in &cfg.dims {
            let problem = BeamProblem {
                elements: dim,
                ..cfg.problem.clone()
            };
            let seed = cfg.base_seed;
            let data = sample_training_data(&problem, cfg.ratio * dim, seed).map_err(ctx("beam"))?;
            let base = fit_beam_surrogate(&problem, &data, Method::BaselineRbf, &study, seed).map_err(ctx("beam"))?;
            let gen = fit_beam_surrogate(&problem, &data, Method::RbfGen, &study, seed).map_err(ctx("beam"))?;
            let (BeamSurrogate::Baseline(base), BeamSurrogate::RbfGen(gen)) = (base, gen) else {
                unreachable!("fit_beam_surrogate returns the requested method");
            };
            for &axis in &cfg.slice_axes {
                let svg = slice_plot(&problem, &data, &base, &gen, axis - 1, 41).map_err(ctx("beam"))?;
                out.add(dir.join(format!("slice_D{dim}_h{axis}.svg")), svg);
            }
        }
    }
    let seeds = json!({
        "base": cfg.base_seed,
        "perCell": (0..cfg.seeds).map(|i| cfg.base_seed.wrapping_add(i as u64)).collect::<Vec<_>>(),
        "train": cfg.train_cfg.seed,
        "basis": cfg.basis.seed,
        "priors": cfg.priors.seed,
    });
    Ok((out, dir.clone(), seeds))
}

pub fn l2o_config(cfg: &CrossvalConfig) -> L2oConfig {
    L2oConfig {
        ncomp: cfg.ncomp,
        train: cfg.train_cfg.clone(),
        basis: cfg.basis.clone(),
        baseline_kernel: cfg.baseline_kernel,
        mono_points: cfg.mono_points,
        mono_weight: cfg.mono_weight,
        bounds_margin: cfg.bounds_margin,
    }
}

fn cmd_crossval(cfg: &CrossvalConfig) -> Result<Produced, CliError> {
    let data = MultiQoiData::from_csv(&read_text(&cfg.dataset_path)?).map_err(ctx("crossval dataset"))?;
    let table = MonotonicityTable::from_csv(&read_text(&cfg.mono_table_path)?).map_err(ctx("crossval table"))?;
    let report = run_l2o(&data, &table, cfg.method, &l2o_config(cfg)).map_err(ctx("crossval"))?;
    let mut out = Outputs::new();
    let dir = &cfg.out_dir;
    out.add(dir.join("report.csv"), report.to_csv());
    out.add(dir.join("predictions.csv"), report.predictions_csv(&data.qoi_names));
    let seeds = json!({ "train": cfg.train_cfg.seed, "basis": cfg.basis.seed });
    Ok((out, dir.clone(), seeds))
}

/// A fitted model as stored by `fit`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SavedModel {
    pub input_names: Vec<String>,
    pub qoi: String,
    pub ensemble: SurrogateEnsemble,
}

fn cmd_fit(cfg: &FitConfig) -> Result<Produced, CliError> {
    let data = MultiQoiData::from_csv(&read_text(&cfg.dataset_path)?).map_err(ctx("fit dataset"))?;
    let qoi = match &cfg.qoi {
        Some(name) => data
            .qoi_names
            .iter()
            .position(|q| q == name)
            .ok_or_else(|| CliError::Config(format!("qoi: `{name}` is not a response column")))?,
        None => 0,
    };
    let bounds = match &cfg.bounds {
        Some(b) if b.len() != data.num_inputs() => {
            return Err(CliError::Config(format!(
                "bounds: {} intervals for {} inputs",
                b.len(),
                data.num_inputs()
            )))
        }
        Some(b) => Bounds::new(b.clone()).map_err(|e| CliError::Config(format!("bounds: {e}")))?,
        None => {
            let intervals = (0..data.num_inputs())
                .map(|j| {
                    let col = data.x.column(j);
                    let (lo, hi) = (col.min(), col.max());
                    if hi > lo {
                        [lo, hi]
                    } else {
                        [lo - 0.5, hi + 0.5]
                    }
                })
                .collect();
            Bounds::new(intervals).map_err(ctx("fit bounds"))?
        }
    };
    let dataset = Dataset::new(data.x.clone(), data.q.column(qoi).into_owned(), bounds.clone()).map_err(ctx("fit dataset"))?;
    let priors = cfg
        .prior_spec
        .iter()
        .enumerate()
        .map(|(i, spec)| spec.resolve(i, &bounds).map_err(|e| CliError::Config(format!("priorSpec[{i}]: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let ensemble = rbfgen::training::fit_rbfgen(&dataset, &priors, &cfg.basis, &cfg.train_cfg).map_err(ctx("fit"))?;
    let loss = ensemble.loss_history.to_csv(cfg.train_cfg.loss_log_every);
    let model = SavedModel {
        input_names: data.input_names.clone(),
        qoi: data.qoi_names[qoi].clone(),
        ensemble,
    };
    let mut out = Outputs::new();
    out.add(&cfg.model_out, serde_json::to_string(&model).expect("model serializes"));
    out.add(cfg.model_out.with_extension("loss.csv"), loss);
    let seeds = json!({ "train": cfg.train_cfg.seed, "basis": cfg.basis.seed });
    Ok((out, parent_dir(&cfg.model_out), seeds))
}

fn cmd_predict(cfg: &PredictConfig) -> Result<Produced, CliError> {
    let model: SavedModel = serde_json::from_str(&read_text(&cfg.model_path)?)
        .map_err(|e| CliError::Io(format!("{}: not a saved model: {e}", cfg.model_path.display())))?;
    let text = read_text(&cfg.points_path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Io(format!("{}: {e}", cfg.points_path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    let d = model.ensemble.system.dim();
    if header.len() != d {
        return Err(CliError::Io(format!(
            "{}: {} columns but the model has {d} inputs",
            cfg.points_path.display(),
            header.len()
        )));
    }
    let mut csv_out = header.join(",") + ",mean,lower,upper\n";
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Io(format!("{}: {e}", cfg.points_path.display())))?;
        let x = record
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|_| CliError::Io(format!("{}: row {} is not numeric", cfg.points_path.display(), line + 2)))?;
        let (mean, lo, hi) = predict_with_ci(&model.ensemble, &x, cfg.level).map_err(ctx("predict"))?;
        let row: Vec<String> = x.iter().map(f64::to_string).collect();
        csv_out.push_str(&format!("{},{mean},{lo},{hi}\n", row.join(",")));
    }
    let mut out = Outputs::new();
    out.add(&cfg.out_csv, csv_out);
    Ok((out, parent_dir(&cfg.out_csv), json!({})))
}
