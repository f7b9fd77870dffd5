//! Cantilever beam benchmark: Euler–Bernoulli FEM compliance, scarce-data
//! sampling, beam priors, surrogate-based optimization and the measured
//! improvement study.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::priors::{Direction, GaussianTarget, PriorKind, PriorTerm, ProbeGrid, Statistic};
use crate::rbf::Dataset;
use crate::sampling::{latin_hypercube, uniform_random, Bounds};
use crate::svg::{Plot, Series};
use crate::training::{fit_rbfgen, mean_and_interval, BaselineRbf, BasisConfig, EnsembleMean, Predictor, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct BeamProblem {
    /// Number of elements, which is also the design dimension.
    pub elements: usize,
    pub length: f64,
    pub width: f64,
    pub youngs_modulus: f64,
    pub load: f64,
    pub height_bounds: [f64; 2],
    pub volume_cap: f64,
    pub train_region: [f64; 2],
}

impl Default for BeamProblem {
    fn default() -> Self {
        BeamProblem {
            elements: 10,
            length: 1.0,
            width: 1.0,
            youngs_modulus: 1.0,
            load: 1.0,
            height_bounds: [0.05, 0.5],
            volume_cap: 0.2,
            train_region: [0.05, 0.1],
        }
    }
}

impl BeamProblem {
    pub fn with_elements(elements: usize) -> Self {
        BeamProblem {
            elements,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.elements < 1 {
            return Err(Error::InvalidInput("beam needs at least one element".into()));
        }
        let positive = [self.length, self.width, self.youngs_modulus, self.load, self.volume_cap];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("beam constants must be positive".into()));
        }
        let [lo, hi] = self.height_bounds;
        let [tlo, thi] = self.train_region;
        if !(lo > 0.0 && hi > lo && tlo >= lo && thi <= hi && thi > tlo) {
            return Err(Error::InvalidInput(
                "need 0 < bounds, and the train region inside the bounds".into(),
            ));
        }
        Ok(())
    }

    pub fn design_bounds(&self) -> Bounds {
        Bounds(vec![self.height_bounds; self.elements])
    }

    pub fn train_bounds(&self) -> Bounds {
        Bounds(vec![self.train_region; self.elements])
    }

    /// Common initial design: the train-region midpoint in every element.
    pub fn initial_design(&self) -> Vec<f64> {
        vec![0.5 * (self.train_region[0] + self.train_region[1]); self.elements]
    }

    /// Volume per unit height, identical for every element.
    fn volume_coefficient(&self) -> f64 {
        self.width * self.length / self.elements as f64
    }
}

/// Tip compliance `f^T d` of the clamped cantilever.
pub fn beam_compliance(problem: &BeamProblem, h: &[f64]) -> Result<f64> {
    let d = problem.elements;
    if h.len() != d {
        return Err(Error::Shape(format!("expected {d} heights, got {}", h.len())));
    }
    if let Some(bad) = h.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("element height must be positive, got {bad}")));
    }
    let le = problem.length / d as f64;
    // Free DOFs are (w, theta) at nodes 1..=d; the root node is clamped.
    let n = 2 * d;
    let mut k = DMatrix::<f64>::zeros(n, n);
    for (e, &he) in h.iter().enumerate() {
        let ei = problem.youngs_modulus * problem.width * he.powi(3) / 12.0;
        let c = ei / le.powi(3);
        let ke = [
            [12.0, 6.0 * le, -12.0, 6.0 * le],
            [6.0 * le, 4.0 * le * le, -6.0 * le, 2.0 * le * le],
            [-12.0, -6.0 * le, 12.0, -6.0 * le],
            [6.0 * le, 2.0 * le * le, -6.0 * le, 4.0 * le * le],
        ];
        // Global DOF 2e, 2e+1 belong to node e; free index = global - 2.
        let dofs: [Option<usize>; 4] = std::array::from_fn(|a| (2 * e + a).checked_sub(2));
        for a in 0..4 {
            for b in 0..4 {
                if let (Some(i), Some(j)) = (dofs[a], dofs[b]) {
                    k[(i, j)] += c * ke[a][b];
                }
            }
        }
    }
    let mut f = DVector::zeros(n);
    f[n - 2] = problem.load;
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::Domain("beam stiffness matrix is singular".into()))?;
    let disp = chol.solve(&f);
    Ok(f.dot(&disp))
}

/// `b (L/D) sum h`.
pub fn beam_volume(problem: &BeamProblem, h: &[f64]) -> f64 {
    problem.volume_coefficient() * h.iter().sum::<f64>()
}

/// Latin hypercube designs in the train region with FEM responses. The
/// dataset carries the full design box as its bounds.
pub fn sample_training_data(problem: &BeamProblem, count: usize, seed: u64) -> Result<Dataset> {
    problem.validate()?;
    if count < 1 {
        return Err(Error::InvalidInput("need at least one training sample".into()));
    }
    let rows = latin_hypercube(&problem.train_bounds(), count, seed);
    let y = rows
        .iter()
        .map(|h| beam_compliance(problem, h))
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_rows(&rows, y, problem.design_bounds())
}

/// Settings for the beam priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct BeamPriorConfig {
    /// Relative width of the slice targets: `sigma = perturb * |mu|`.
    pub perturb: f64,
    pub slice_points: usize,
    pub mono_points: usize,
    pub positivity_probes: usize,
    pub mono_weight: f64,
    pub pos_weight: f64,
    /// Weight of the KL terms, shared across the points of one slice.
    pub kl_weight: f64,
    pub seed: u64,
}

impl Default for BeamPriorConfig {
    fn default() -> Self {
        BeamPriorConfig {
            perturb: 0.3,
            slice_points: 8,
            mono_points: 16,
            positivity_probes: 64,
            mono_weight: 1.0,
            pos_weight: 1.0,
            kl_weight: 1.0,
            seed: 0,
        }
    }
}

/// Monotonicity (non-increasing per element), positivity over random
/// probes, and per-slice-point KL targets around the supplied oracle.
pub fn build_beam_priors(
    problem: &BeamProblem,
    fem: &dyn Fn(&[f64]) -> Result<f64>,
    cfg: &BeamPriorConfig,
) -> Result<Vec<PriorTerm>> {
    problem.validate()?;
    if !(cfg.perturb > 0.0) || cfg.slice_points < 1 || cfg.mono_points < 2 {
        return Err(Error::InvalidInput(
            "beam priors need perturb > 0, slice points >= 1 and mono points >= 2".into(),
        ));
    }
    let anchor = problem.initial_design();
    let [lo, hi] = problem.height_bounds;
    let mut terms = Vec::new();
    for j in 0..problem.elements {
        terms.push(PriorTerm::new(
            format!("mono_h{}", j + 1),
            PriorKind::Mono {
                direction: Direction::NonIncreasing,
            },
            cfg.mono_weight,
            ProbeGrid::slice(&anchor, j, lo, hi, cfg.mono_points),
        )?);
    }
    terms.push(PriorTerm::new(
        "pos",
        PriorKind::Pos { min: 0.0 },
        cfg.pos_weight,
        ProbeGrid::random(&problem.design_bounds(), cfg.positivity_probes, cfg.seed),
    )?);
    let per_point = cfg.kl_weight / cfg.slice_points as f64;
    for j in 0..problem.elements {
        let slice = ProbeGrid::slice(&anchor, j, lo, hi, cfg.slice_points);
        for (k, p) in slice.points.into_iter().enumerate() {
            let mu = fem(&p)?;
            terms.push(PriorTerm::new(
                format!("kl_h{}_{}", j + 1, k),
                PriorKind::Kl {
                    statistic: Statistic::Point,
                    target: GaussianTarget {
                        mean: mu,
                        std: cfg.perturb * mu.abs(),
                    },
                },
                per_point,
                ProbeGrid::points(vec![p]),
            )?);
        }
    }
    Ok(terms)
}

/// Euclidean projection onto the box intersected with the volume halfspace.
///
/// The minimizer has the form `clamp(x - lambda a)`; `lambda` is found by
/// bisection and the feasible end of the bracket is returned.
pub fn project_feasible(problem: &BeamProblem, x: &[f64]) -> Vec<f64> {
    let [lo, hi] = problem.height_bounds;
    let a = problem.volume_coefficient();
    let at = |lambda: f64| -> Vec<f64> { x.iter().map(|v| (v - lambda * a).clamp(lo, hi)).collect() };
    let clamped = at(0.0);
    if beam_volume(problem, &clamped) <= problem.volume_cap {
        return clamped;
    }
    let mut lam_lo = 0.0;
    let mut lam_hi = 1.0;
    while beam_volume(problem, &at(lam_hi)) > problem.volume_cap {
        lam_hi *= 2.0;
        if lam_hi > 1e300 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lam_lo + lam_hi);
        if mid <= lam_lo || mid >= lam_hi {
            break;
        }
        if beam_volume(problem, &at(mid)) > problem.volume_cap {
            lam_lo = mid;
        } else {
            lam_hi = mid;
        }
        if beam_volume(problem, &at(lam_hi)) >= problem.volume_cap - 1e-12 {
            break;
        }
    }
    at(lam_hi)
}

pub fn is_feasible(problem: &BeamProblem, h: &[f64], tol: f64) -> bool {
    let [lo, hi] = problem.height_bounds;
    h.iter().all(|v| *v >= lo - tol && *v <= hi + tol)
        && beam_volume(problem, h) <= problem.volume_cap + tol
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub starts: usize,
    pub max_iterations: usize,
    /// Central-difference step in normalized coordinates.
    pub fd_step: f64,
    /// Initial step, as a fraction of the box width, along the max-normalized
    /// gradient.
    pub initial_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            starts: 8,
            max_iterations: 200,
            fd_step: 1e-4,
            initial_step: 0.25,
        }
    }
}

/// Multi-start projected gradient descent on `objective`. The first start is
/// always the initial design. Returns the best design and its predicted value.
pub fn optimize_on_surrogate(
    objective: &dyn Fn(&[f64]) -> f64,
    problem: &BeamProblem,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    problem.validate()?;
    let mut starts = vec![project_feasible(problem, &problem.initial_design())];
    starts.extend(
        uniform_random(&problem.design_bounds(), cfg.starts.saturating_sub(1), seed)
            .iter()
            .map(|p| project_feasible(problem, p)),
    );
    if !starts.iter().all(|s| is_feasible(problem, s, 1e-10)) {
        return Err(Error::Domain("no feasible starting design".into()));
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let (h, v) = descend(objective, problem, cfg, start);
        if v.is_finite() && best.as_ref().is_none_or(|(_, bv)| v < *bv) {
            best = Some((h, v));
        }
    }
    best.ok_or_else(|| Error::NonFinite {
        iteration: 0,
        term: "surrogate objective".into(),
        value: f64::NAN,
    })
}

fn descend(
    objective: &dyn Fn(&[f64]) -> f64,
    problem: &BeamProblem,
    cfg: &OptimizerConfig,
    mut h: Vec<f64>,
) -> (Vec<f64>, f64) {
    let width = problem.height_bounds[1] - problem.height_bounds[0];
    let step = cfg.fd_step * width;
    let mut fh = objective(&h);
    for _ in 0..cfg.max_iterations {
        // Gradient with respect to normalized coordinates.
        let grad: Vec<f64> = (0..h.len())
            .map(|i| {
                let mut plus = h.clone();
                let mut minus = h.clone();
                plus[i] += step;
                minus[i] -= step;
                (objective(&plus) - objective(&minus)) / (2.0 * cfg.fd_step)
            })
            .collect();
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if !(gmax > 0.0 && gmax.is_finite()) {
            break;
        }
        let mut t = cfg.initial_step;
        let mut accepted = false;
        while t > 1e-8 {
            let trial: Vec<f64> = h
                .iter()
                .zip(&grad)
                .map(|(v, g)| v - t * width * g / gmax)
                .collect();
            let trial = project_feasible(problem, &trial);
            // Armijo condition with the projected step.
            let decrease: f64 = h
                .iter()
                .zip(&trial)
                .zip(&grad)
                .map(|((a, b), g)| g * (a - b) / width)
                .sum();
            let ft = objective(&trial);
            if decrease > 0.0 && ft <= fh - 1e-4 * decrease {
                h = trial;
                fh = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (h, fh)
}

/// Percentage reduction of the true objective relative to the initial design.
pub fn measured_improvement(c_initial: f64, c_final: f64) -> Result<f64> {
    if !(c_initial > 0.0) {
        return Err(Error::Domain(format!(
            "initial compliance must be positive, got {c_initial}"
        )));
    }
    Ok(100.0 * (c_initial - c_final) / c_initial)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Method {
    BaselineRbf,
    RbfGen,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::BaselineRbf => "baselineRbf",
            Method::RbfGen => "rbfGen",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct BeamStudyConfig {
    pub dims: Vec<usize>,
    /// Training samples per design dimension.
    pub ratio: usize,
    pub seeds: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub train: TrainConfig,
    pub basis: BasisConfig,
    pub baseline_kernel: KernelSpec,
    pub priors: BeamPriorConfig,
    pub optimizer: OptimizerConfig,
    pub problem: BeamProblem,
}

impl Default for BeamStudyConfig {
    fn default() -> Self {
        BeamStudyConfig {
            dims: vec![10],
            ratio: 1,
            seeds: 5,
            base_seed: 0,
            methods: vec![Method::BaselineRbf, Method::RbfGen],
            train: TrainConfig::default(),
            basis: BasisConfig::default(),
            baseline_kernel: KernelSpec::default(),
            priors: BeamPriorConfig::default(),
            optimizer: OptimizerConfig::default(),
            problem: BeamProblem::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub dim: usize,
    pub ratio: usize,
    pub method: Method,
    pub seed: u64,
    pub c_initial: f64,
    pub c_final_true: f64,
    pub improvement_pct: f64,
    pub wall_time_s: f64,
}

/// A fitted surrogate for one study cell.
pub enum BeamSurrogate {
    Baseline(BaselineRbf),
    RbfGen(Box<crate::training::SurrogateEnsemble>),
}

impl BeamSurrogate {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            BeamSurrogate::Baseline(b) => b.predict(x),
            BeamSurrogate::RbfGen(e) => EnsembleMean::new(e).predict(x),
        }
    }
}

/// Fits the surrogate of one cell on `data`.
pub fn fit_beam_surrogate(
    problem: &BeamProblem,
    data: &Dataset,
    method: Method,
    cfg: &BeamStudyConfig,
    seed: u64,
) -> Result<BeamSurrogate> {
    match method {
        Method::BaselineRbf => Ok(BeamSurrogate::Baseline(BaselineRbf::fit(data, cfg.baseline_kernel)?)),
        Method::RbfGen => {
            let fem = |h: &[f64]| beam_compliance(problem, h);
            let priors = build_beam_priors(
                problem,
                &fem,
                &BeamPriorConfig {
                    seed: cfg.priors.seed.wrapping_add(seed),
                    ..cfg.priors.clone()
                },
            )?;
            let train = TrainConfig {
                seed: cfg.train.seed.wrapping_add(seed),
                ..cfg.train.clone()
            };
            let basis = BasisConfig {
                seed: cfg.basis.seed.wrapping_add(seed),
                ..cfg.basis.clone()
            };
            Ok(BeamSurrogate::RbfGen(Box::new(fit_rbfgen(data, &priors, &basis, &train)?)))
        }
    }
}

/// One (D, method, seed) cell. `record_time` controls whether the wall time
/// is measured or reported as zero.
pub fn run_beam_cell(
    cfg: &BeamStudyConfig,
    dim: usize,
    method: Method,
    seed_index: usize,
    record_time: bool,
) -> Result<StudyRow> {
    let start = Instant::now();
    let problem = BeamProblem {
        elements: dim,
        ..cfg.problem.clone()
    };
    let seed = cfg.base_seed.wrapping_add(seed_index as u64);
    let data = sample_training_data(&problem, cfg.ratio * dim, seed)?;
    let surrogate = fit_beam_surrogate(&problem, &data, method, cfg, seed)?;
    let (h_star, _) = optimize_on_surrogate(&|h| surrogate.predict(h), &problem, &cfg.optimizer, seed)?;
    let c_initial = beam_compliance(&problem, &problem.initial_design())?;
    let c_final = beam_compliance(&problem, &h_star)?;
    let elapsed = start.elapsed().as_secs_f64();
    log::info!(
        "beam D={dim} {} seed={seed}: improvement {:.2}% in {elapsed:.2}s",
        method.name(),
        measured_improvement(c_initial, c_final)?
    );
    Ok(StudyRow {
        dim,
        ratio: cfg.ratio,
        method,
        seed,
        c_initial,
        c_final_true: c_final,
        improvement_pct: measured_improvement(c_initial, c_final)?,
        wall_time_s: if record_time { elapsed } else { 0.0 },
    })
}

/// All cells of the study, ordered by dimension, then method, then seed.
pub fn run_beam_study(cfg: &BeamStudyConfig, record_time: bool) -> Result<Vec<StudyRow>> {
    if cfg.dims.is_empty() || cfg.dims.contains(&0) {
        return Err(Error::InvalidInput("study needs positive dimensions".into()));
    }
    if cfg.methods.is_empty() || cfg.seeds == 0 || cfg.ratio == 0 {
        return Err(Error::InvalidInput("study needs methods, seeds and a positive ratio".into()));
    }
    let mut cells = Vec::new();
    for &d in &cfg.dims {
        for &m in &cfg.methods {
            for s in 0..cfg.seeds {
                cells.push((d, m, s));
            }
        }
    }
    cells
        .par_iter()
        .map(|&(d, m, s)| run_beam_cell(cfg, d, m, s, record_time))
        .collect()
}

pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from("D,ratio,method,seed,C_initial,C_final_true,improvement_pct,wall_time_s\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.dim,
            r.ratio,
            r.method.name(),
            r.seed,
            r.c_initial,
            r.c_final_true,
            r.improvement_pct,
            r.wall_time_s
        ));
    }
    out
}

/// Mean and median improvement per (D, method).
#[derive(Debug, Clone, PartialEq)]
pub struct StudySummary {
    pub dim: usize,
    pub method: Method,
    pub mean: f64,
    pub median: f64,
}

pub fn summarize(rows: &[StudyRow]) -> Vec<StudySummary> {
    let mut keys: Vec<(usize, Method)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.dim, r.method)) {
            keys.push((r.dim, r.method));
        }
    }
    keys.into_iter()
        .map(|(dim, method)| {
            let mut v: Vec<f64> = rows
                .iter()
                .filter(|r| r.dim == dim && r.method == method)
                .map(|r| r.improvement_pct)
                .collect();
            v.sort_by(f64::total_cmp);
            StudySummary {
                dim,
                method,
                mean: v.iter().sum::<f64>() / v.len() as f64,
                median: median_sorted(&v),
            }
        })
        .collect()
}

pub fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn summary_csv(summary: &[StudySummary]) -> String {
    let mut out = String::from("D,method,mean_improvement_pct,median_improvement_pct\n");
    for s in summary {
        out.push_str(&format!("{},{},{},{}\n", s.dim, s.method.name(), s.mean, s.median));
    }
    out
}

/// Slice plot along element `axis` with the others at the initial design:
/// FEM curve, baseline curve, RBF-Gen mean with a 95% band, training points.
pub fn slice_plot(
    problem: &BeamProblem,
    data: &Dataset,
    baseline: &BaselineRbf,
    ensemble: &crate::training::SurrogateEnsemble,
    axis: usize,
    points: usize,
) -> Result<String> {
    let [lo, hi] = problem.height_bounds;
    let grid = ProbeGrid::slice(&problem.initial_design(), axis, lo, hi, points.max(2));
    let mut fem = Vec::new();
    let mut base = Vec::new();
    let (mut xs, mut mean, mut low, mut high) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for p in &grid.points {
        let x = p[axis];
        fem.push((x, beam_compliance(problem, p)?));
        base.push((x, baseline.predict(p)));
        let (m, l, u) = mean_and_interval(ensemble.member_values(p), 0.95);
        xs.push(x);
        mean.push(m);
        low.push(l);
        high.push(u);
    }
    let train: Vec<(f64, f64)> = (0..data.len()).map(|i| (data.x[(i, axis)], data.y[i])).collect();
    let mut plot = Plot::new(
        &format!("Compliance slice along h{} (D = {})", axis + 1, problem.elements),
        &format!("h{}", axis + 1),
        "compliance",
    );
    plot.push(Series::band("RBF-Gen 95% band", xs.clone(), low, high, "#4c72b0"))
        .push(Series::line("FEM", fem, "black"))
        .push(Series::line("baseline RBF", base, "#dd8452"))
        .push(Series::line("RBF-Gen mean", xs.into_iter().zip(mean).collect(), "#4c72b0"))
        .push(Series::scatter("training data", train, "#c44e52"));
    Ok(plot.render())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_beam_matches_closed_form() {
        for d in [1, 2, 5, 10, 50] {
            let p = BeamProblem::with_elements(d);
            let c = beam_compliance(&p, &vec![0.1; d]).unwrap();
            // P L^3 / (3 E I) times P with I = b h^3 / 12.
            let oracle = 1.0 / (3.0 * (0.1f64.powi(3) / 12.0));
            assert!((c - oracle).abs() <= 1e-9 * oracle, "D={d}: {c}");
        }
    }

    #[test]
    fn compliance_scales_inversely_with_modulus() {
        let mut p = BeamProblem::with_elements(4);
        let h = [0.08, 0.06, 0.09, 0.07];
        let c1 = beam_compliance(&p, &h).unwrap();
        p.youngs_modulus = 2.0;
        let c2 = beam_compliance(&p, &h).unwrap();
        assert!((c1 / c2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_height_is_domain_error() {
        let p = BeamProblem::with_elements(2);
        assert!(matches!(beam_compliance(&p, &[0.1, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(beam_compliance(&p, &[0.1]), Err(Error::Shape(_))));
    }

    #[test]
    fn volume_examples() {
        let p = BeamProblem::with_elements(5);
        assert!((beam_volume(&p, &[0.1; 5]) - 0.1).abs() < 1e-15);
        assert!((beam_volume(&p, &[0.2; 5]) - 0.2).abs() < 1e-15);
        assert_eq!(beam_volume(&p, &[0.0; 5]), 0.0);
    }

    #[test]
    fn training_samples_lie_in_region() {
        let p = BeamProblem::with_elements(6);
        let data = sample_training_data(&p, 12, 3).unwrap();
        assert_eq!(data.len(), 12);
        for i in 0..data.len() {
            assert!(p.train_bounds().contains(&data.row(i), 0.0));
        }
        assert_eq!(data, sample_training_data(&p, 12, 3).unwrap());
        assert!(sample_training_data(&p, 0, 3).is_err());
    }

    #[test]
    fn projection_is_feasible_and_idempotent() {
        let p = BeamProblem::with_elements(5);
        let feasible = [0.06, 0.1, 0.2, 0.3, 0.05];
        assert_eq!(project_feasible(&p, &feasible), feasible.to_vec());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-0.5..1.5)).collect();
            let h = project_feasible(&p, &x);
            assert!(is_feasible(&p, &h, 1e-10), "{h:?}");
            let again = project_feasible(&p, &h);
            for (a, b) in h.iter().zip(&again) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn projection_matches_brute_force_kkt() {
        // The projection minimizes the distance: no feasible random point is
        // closer than the returned one.
        let p = BeamProblem::with_elements(3);
        let x = [0.5, 0.4, 0.3];
        let h = project_feasible(&p, &x);
        let dist = |a: &[f64]| a.iter().zip(&x).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20000 {
            let c: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..0.5)).collect();
            if is_feasible(&p, &c, 0.0) {
                assert!(dist(&c) >= dist(&h) - 1e-12);
            }
        }
    }

    #[test]
    fn optimizing_true_model_improves() {
        let p = BeamProblem::with_elements(5);
        let fem = |h: &[f64]| beam_compliance(&p, h).unwrap();
        let (h, c) = optimize_on_surrogate(&fem, &p, &OptimizerConfig::default(), 0).unwrap();
        assert!(is_feasible(&p, &h, 1e-10));
        assert!(c < fem(&p.initial_design()));
        assert_eq!(c, fem(&h));
    }

    #[test]
    fn improvement_examples() {
        assert_eq!(measured_improvement(10.0, 10.0).unwrap(), 0.0);
        assert_eq!(measured_improvement(10.0, 5.0).unwrap(), 50.0);
        assert!(measured_improvement(10.0, 12.0).unwrap() < 0.0);
        assert!(measured_improvement(0.0, 1.0).is_err());
    }

    #[test]
    fn priors_vanish_on_true_model() {
        let p = BeamProblem::with_elements(3);
        let fem = |h: &[f64]| beam_compliance(&p, h);
        let terms = build_beam_priors(&p, &fem, &BeamPriorConfig::default()).unwrap();
        assert_eq!(terms.len(), 3 + 1 + 3 * 8);
        for t in terms.iter().filter(|t| !t.kind.is_kl()) {
            let values: Vec<f64> = t.grid.points.iter().map(|h| fem(h).unwrap()).collect();
            assert_eq!(t.evaluate_single(&values).unwrap(), 0.0, "{}", t.id);
        }
    }

    #[test]
    fn study_csv_has_header_and_rows() {
        let rows = vec![StudyRow {
            dim: 2,
            ratio: 1,
            method: Method::RbfGen,
            seed: 0,
            c_initial: 1.0,
            c_final_true: 0.5,
            improvement_pct: 50.0,
            wall_time_s: 0.0,
        }];
        assert_eq!(
            study_csv(&rows),
            "D,ratio,method,seed,C_initial,C_final_true,improvement_pct,wall_time_s\n2,1,rbfGen,0,1,0.5,50,0\n"
        );
    }
}
