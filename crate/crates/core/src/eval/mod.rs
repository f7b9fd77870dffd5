//! Leave-two-out cross-validation with PLS input reduction.

mod data;
mod pls;

pub use data::{synthetic_dataset, synthetic_response, MonotonicityTable, MultiQoiData, SYNTHETIC_INPUTS, SYNTHETIC_QOIS};
pub use pls::{pls_reduce, PlsModel};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beam::Method;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::priors::{Direction, PriorKind, PriorTerm, ProbeGrid};
use crate::rbf::Dataset;
use crate::sampling::Bounds;
use crate::training::{fit_rbfgen, BaselineRbf, BasisConfig, EnsembleMean, MinNormRbf, Predictor, TrainConfig};

/// All unordered pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn l2o_folds(n: usize) -> Result<Vec<(usize, usize)>> {
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "leave-two-out needs at least 3 rows, got {n}"
        )));
    }
    Ok((0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect())
}

/// `(ARE, AAE)` over `(prediction, truth)` pairs. Entries with
/// `|truth| < 1e-12` are left out of the relative error.
pub fn metrics(predictions: &[(f64, f64)]) -> Result<(f64, f64)> {
    if predictions.is_empty() {
        return Err(Error::InvalidInput("no predictions to score".into()));
    }
    let aae = predictions.iter().map(|(p, y)| (p - y).abs()).sum::<f64>() / predictions.len() as f64;
    let relative: Vec<f64> = predictions
        .iter()
        .filter(|(_, y)| y.abs() >= 1e-12)
        .map(|(p, y)| (p - y).abs() / y.abs())
        .collect();
    if relative.is_empty() {
        return Err(Error::InvalidInput(
            "relative error undefined: every response is zero".into(),
        ));
    }
    Ok((relative.iter().sum::<f64>() / relative.len() as f64, aae))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct L2oConfig {
    pub ncomp: usize,
    pub train: TrainConfig,
    pub basis: BasisConfig,
    pub baseline_kernel: KernelSpec,
    /// Probe points per monotonicity slice.
    pub mono_points: usize,
    pub mono_weight: f64,
    /// Relative margin added around the reduced training inputs.
    pub bounds_margin: f64,
}

impl Default for L2oConfig {
    fn default() -> Self {
        L2oConfig {
            ncomp: 5,
            train: TrainConfig {
                iterations: 300,
                batch_size: 32,
                learning_rate: 1e-2,
                hidden: vec![32],
                ensemble_size: 64,
                ..TrainConfig::default()
            },
            basis: BasisConfig {
                centers: Some(60),
                ..BasisConfig::default()
            },
            baseline_kernel: KernelSpec::default(),
            mono_points: 16,
            mono_weight: 1.0,
            bounds_margin: 0.5,
        }
    }
}

/// One held-out prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub qoi: usize,
    pub fold: usize,
    pub row: usize,
    pub predicted: f64,
    pub truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoiScore {
    pub name: String,
    pub are: f64,
    pub aae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub method: Method,
    pub qois: Vec<QoiScore>,
    pub overall_are: f64,
    pub overall_aae: f64,
    pub fold_count: usize,
    /// Predictions per QoI.
    pub prediction_count: usize,
    pub predictions: Vec<Prediction>,
}

impl CrossValReport {
    /// `qoi,method,ARE,AAE` per response plus an `overall` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("qoi,method,ARE,AAE\n");
        for s in &self.qois {
            out.push_str(&format!("{},{},{},{}\n", s.name, self.method.name(), s.are, s.aae));
        }
        out.push_str(&format!(
            "overall,{},{},{}\n",
            self.method.name(),
            self.overall_are,
            self.overall_aae
        ));
        out
    }

    pub fn predictions_csv(&self, qoi_names: &[String]) -> String {
        let mut out = String::from("qoi,fold,row,predicted,truth\n");
        for p in &self.predictions {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                qoi_names[p.qoi], p.fold, p.row, p.predicted, p.truth
            ));
        }
        out
    }
}

/// Reduced-space probe points for a monotonicity prior on original input
/// `var`: the variable sweeps its training range, the others sit at their
/// training medians, and each point goes through the PLS projection.
pub fn reduced_slice(model: &PlsModel, train_x: &DMatrix<f64>, var: usize, count: usize) -> Vec<Vec<f64>> {
    let medians: Vec<f64> = (0..train_x.ncols())
        .map(|j| {
            let mut col: Vec<f64> = train_x.column(j).iter().copied().collect();
            col.sort_by(f64::total_cmp);
            crate::beam::median_sorted(&col)
        })
        .collect();
    let lo = train_x.column(var).min();
    let hi = train_x.column(var).max();
    ProbeGrid::slice(&medians, var, lo, hi, count)
        .points
        .iter()
        .map(|p| model.transform(p))
        .collect()
}

fn reduced_bounds(reduced: &DMatrix<f64>, margin: f64) -> Bounds {
    Bounds(
        (0..reduced.ncols())
            .map(|j| {
                let lo = reduced.column(j).min();
                let hi = reduced.column(j).max();
                let pad = if hi > lo { margin * (hi - lo) } else { 0.5 };
                [lo - pad, hi + pad]
            })
            .collect(),
    )
}

fn fold_predictions(
    data: &MultiQoiData,
    table: &MonotonicityTable,
    method: Method,
    cfg: &L2oConfig,
    qoi: usize,
    fold: usize,
    held: (usize, usize),
) -> Result<[Prediction; 2]> {
    let n = data.len();
    let train: Vec<usize> = (0..n).filter(|&i| i != held.0 && i != held.1).collect();
    let train_x = data.x.select_rows(&train);
    let train_y = DVector::from_iterator(train.len(), train.iter().map(|&i| data.q[(i, qoi)]));
    let (model, reduced) = pls_reduce(&train_x, &train_y, cfg.ncomp)?;
    let bounds = reduced_bounds(&reduced, cfg.bounds_margin);
    let dataset = Dataset::new(reduced, train_y, bounds)?;
    let predictor: Box<dyn Predictor> = match method {
        Method::BaselineRbf => Box::new(BaselineRbf::fit(&dataset, cfg.baseline_kernel)?),
        Method::RbfGen => {
            let mut priors = Vec::new();
            for var in 0..data.num_inputs() {
                let direction = match table.entry(var, qoi) {
                    1 => Direction::NonDecreasing,
                    -1 => Direction::NonIncreasing,
                    _ => continue,
                };
                priors.push(PriorTerm::new(
                    format!("mono_{}", data.input_names[var]),
                    PriorKind::Mono { direction },
                    cfg.mono_weight,
                    ProbeGrid::points(reduced_slice(&model, &train_x, var, cfg.mono_points)),
                )?);
            }
            if priors.is_empty() {
                // No expert knowledge for this response: the minimum-norm
                // interpolant of the relaxed basis is the prior-free answer.
                Box::new(MinNormRbf::fit(&dataset, &cfg.basis)?)
            } else {
                let seed = (qoi * 1_000_003 + fold) as u64;
                let train_cfg = TrainConfig {
                    seed: cfg.train.seed.wrapping_add(seed),
                    ..cfg.train.clone()
                };
                let ensemble = fit_rbfgen(&dataset, &priors, &cfg.basis, &train_cfg)?;
                Box::new(EnsembleMean::new(&ensemble))
            }
        }
    };
    let predict = |row: usize| {
        let x: Vec<f64> = data.x.row(row).iter().copied().collect();
        Prediction {
            qoi,
            fold,
            row,
            predicted: predictor.predict(&model.transform(&x)),
            truth: data.q[(row, qoi)],
        }
    };
    Ok([predict(held.0), predict(held.1)])
}

/// Leave-two-out cross-validation of one method over every response.
pub fn run_l2o(
    data: &MultiQoiData,
    table: &MonotonicityTable,
    method: Method,
    cfg: &L2oConfig,
) -> Result<CrossValReport> {
    table.validate()?;
    if table.variables.len() != data.num_inputs() || table.qois.len() != data.num_qois() {
        return Err(Error::Shape(format!(
            "monotonicity table is {}×{} but the data have {} inputs and {} responses",
            table.variables.len(),
            table.qois.len(),
            data.num_inputs(),
            data.num_qois()
        )));
    }
    let folds = l2o_folds(data.len())?;
    let jobs: Vec<(usize, usize)> = (0..data.num_qois())
        .flat_map(|q| (0..folds.len()).map(move |f| (q, f)))
        .collect();
    let predictions: Vec<Prediction> = jobs
        .par_iter()
        .map(|&(q, f)| fold_predictions(data, table, method, cfg, q, f, folds[f]))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut qois = Vec::with_capacity(data.num_qois());
    for (q, name) in data.qoi_names.iter().enumerate() {
        let pairs: Vec<(f64, f64)> = predictions
            .iter()
            .filter(|p| p.qoi == q)
            .map(|p| (p.predicted, p.truth))
            .collect();
        let (are, aae) = metrics(&pairs)?;
        qois.push(QoiScore {
            name: name.clone(),
            are,
            aae,
        });
    }
    let m = qois.len() as f64;
    Ok(CrossValReport {
        method,
        overall_are: qois.iter().map(|s| s.are).sum::<f64>() / m,
        overall_aae: qois.iter().map(|s| s.aae).sum::<f64>() / m,
        fold_count: folds.len(),
        prediction_count: 2 * folds.len(),
        qois,
        predictions,
    })
}
