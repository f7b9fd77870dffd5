//! Generator training over the interpolation null space and the resulting
//! surrogate ensembles.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{init_generator, Activation, GeneratorNet, Gradients};
use crate::kernel::KernelSpec;
use crate::priors::{total_loss, PriorTerm, TermValue};
use crate::rbf::{default_center_count, evaluate_surrogate, Dataset, RbfSystem};
use crate::sampling::Placement;

/// Optimizer and generator settings for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Latent samples per optimizer step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: [f64; 2],
    pub seed: u64,
    /// Multiplier on the raw generator output.
    pub alpha_scale: f64,
    pub loss_log_every: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Defaults to `min(8, null-space dimension)`.
    pub latent_dim: Option<usize>,
    /// Members drawn from the trained generator for prediction.
    pub ensemble_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 2000,
            batch_size: 64,
            learning_rate: 1e-3,
            adam_betas: [0.9, 0.999],
            seed: 0,
            alpha_scale: 1.0,
            loss_log_every: 10,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            latent_dim: None,
            ensemble_size: 200,
        }
    }
}

impl TrainConfig {
    /// Returns the dotted name of the first offending field, if any.
    pub fn invalid_field(&self) -> Option<(&'static str, String)> {
        if self.iterations < 1 {
            return Some(("iterations", "must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Some(("batchSize", "must be at least 2".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Some(("learningRate", "must be positive".into()));
        }
        if self.adam_betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Some(("adamBetas", "must lie in [0, 1)".into()));
        }
        if !(self.alpha_scale > 0.0 && self.alpha_scale.is_finite()) {
            return Some(("alphaScale", "must be positive".into()));
        }
        if self.loss_log_every < 1 {
            return Some(("lossLogEvery", "must be at least 1".into()));
        }
        if self.hidden.contains(&0) {
            return Some(("hidden", "widths must be positive".into()));
        }
        if self.latent_dim == Some(0) {
            return Some(("latentDim", "must be positive".into()));
        }
        if self.ensemble_size < 1 {
            return Some(("ensembleSize", "must be at least 1".into()));
        }
        None
    }

    pub fn validate(&self) -> Result<()> {
        match self.invalid_field() {
            Some((field, msg)) => Err(Error::InvalidInput(format!("{field} {msg}"))),
            None => Ok(()),
        }
    }
}

/// Settings for the relaxed RBF basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct BasisConfig {
    pub kernel: KernelSpec,
    /// Number of centers; defaults to `max(3 d, N + 1)`.
    pub centers: Option<usize>,
    /// Defaults to a grid in one dimension and Halton otherwise.
    pub placement: Option<Placement>,
    pub seed: u64,
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig {
            kernel: KernelSpec::default(),
            centers: None,
            placement: None,
            seed: 0,
        }
    }
}

impl BasisConfig {
    pub fn build(&self, data: &Dataset) -> Result<RbfSystem> {
        let k = self
            .centers
            .unwrap_or_else(|| default_center_count(data.dim(), data.len()));
        let placement = self
            .placement
            .unwrap_or_else(|| Placement::default_for(data.dim()));
        RbfSystem::relaxed(data, self.kernel, k, placement, self.seed)
    }
}

/// Affine response scaling `y -> (y - shift) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub shift: f64,
    pub scale: f64,
}

impl Standardizer {
    /// Zero mean and unit (population) variance; a constant response keeps
    /// unit scale.
    pub fn fit(y: &DVector<f64>) -> Self {
        let n = y.len() as f64;
        let mean = y.sum() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let scale = if var.sqrt() > 1e-12 * mean.abs().max(1.0) {
            var.sqrt()
        } else {
            1.0
        };
        Standardizer { shift: mean, scale }
    }

    pub fn identity() -> Self {
        Standardizer {
            shift: 0.0,
            scale: 1.0,
        }
    }

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.shift) / self.scale
    }

    pub fn inverse(&self, v: f64) -> f64 {
        self.shift + self.scale * v
    }

    pub fn apply(&self, data: &Dataset) -> Dataset {
        Dataset {
            x: data.x.clone(),
            y: data.y.map(|v| self.forward(v)),
            bounds: data.bounds.clone(),
        }
    }
}

/// Per-iteration loss record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub term_ids: Vec<String>,
    pub total: Vec<f64>,
    /// `terms[t][j]` is the unweighted value of term `j` at iteration `t`.
    pub terms: Vec<Vec<f64>>,
}

impl LossHistory {
    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }

    /// CSV with columns `iteration,total,<term ids...>`, one row every
    /// `every` iterations plus the final one.
    pub fn to_csv(&self, every: usize) -> String {
        let every = every.max(1);
        let mut out = String::from("iteration,total");
        for id in &self.term_ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        let last = self.total.len().saturating_sub(1);
        for (t, total) in self.total.iter().enumerate() {
            if t % every != 0 && t != last {
                continue;
            }
            out.push_str(&format!("{t},{total}"));
            for v in &self.terms[t] {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Mean of the first and last `window` totals.
    pub fn window_means(&self, window: usize) -> (f64, f64) {
        let w = window.min(self.total.len()).max(1);
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        (
            mean(&self.total[..w]),
            mean(&self.total[self.total.len() - w..]),
        )
    }
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize, lr: f64, betas: [f64; 2]) -> Self {
        Adam {
            lr,
            beta1: betas[0],
            beta2: betas[1],
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// A prior term with its probe values expressed as an affine map of the
/// null-space coefficients: `values = offset + map * alpha`.
struct ProjectedTerm<'a> {
    term: &'a PriorTerm,
    offset: DVector<f64>,
    map: DMatrix<f64>,
}

fn project_terms<'a>(system: &RbfSystem, priors: &'a [PriorTerm]) -> Result<Vec<ProjectedTerm<'a>>> {
    priors
        .iter()
        .map(|term| {
            term.validate()?;
            let phi = system.kernel_matrix(&term.grid.points)?;
            Ok(ProjectedTerm {
                term,
                offset: &phi * &system.w0,
                map: &phi * &system.null_basis,
            })
        })
        .collect()
}

/// Latent batch for one iteration: a ChaCha stream keyed by the iteration.
fn latent_batch(seed: u64, stream: u64, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..count)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

/// Loss and parameter gradient for one latent batch.
struct StepResult {
    total: f64,
    term_values: Vec<f64>,
    grads: Gradients,
}

fn loss_and_gradient(
    net: &GeneratorNet,
    terms: &[ProjectedTerm<'_>],
    latents: &[Vec<f64>],
) -> Result<StepResult> {
    let m = latents.len();
    let r = net.out_dim;
    let mut traces = Vec::with_capacity(m);
    let mut alphas = DMatrix::zeros(r, m);
    for (j, z) in latents.iter().enumerate() {
        let (alpha, trace) = net.forward_traced(z)?;
        alphas.set_column(j, &DVector::from_vec(alpha));
        traces.push(trace);
    }
    let mut d_alpha = DMatrix::zeros(r, m);
    let mut evaluations = Vec::with_capacity(terms.len());
    for pt in terms {
        let mut values = &pt.map * &alphas;
        for mut col in values.column_iter_mut() {
            col += &pt.offset;
        }
        let batch: Vec<Vec<f64>> = values
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect();
        let (value, grads) = pt.term.evaluate_batch(&batch)?;
        evaluations.push(TermValue {
            id: pt.term.id.clone(),
            weight: pt.term.weight,
            value,
        });
        if pt.term.weight != 0.0 && value.is_finite() {
            let g = DMatrix::from_fn(pt.map.nrows(), m, |p, j| grads[j][p]);
            d_alpha += pt.map.transpose() * g * pt.term.weight;
        }
    }
    let total = total_loss(&evaluations)?;
    let mut grads = Gradients::zeros_like(net);
    for (j, trace) in traces.iter().enumerate() {
        let upstream: Vec<f64> = d_alpha.column(j).iter().copied().collect();
        grads.add_assign(&net.backward(trace, &upstream)?);
    }
    Ok(StepResult {
        total,
        term_values: evaluations.iter().map(|e| e.value).collect(),
        grads,
    })
}

/// Total loss of the current generator on a given latent batch, together
/// with its gradient with respect to the flattened parameters.
pub fn batch_loss(
    system: &RbfSystem,
    net: &GeneratorNet,
    priors: &[PriorTerm],
    latents: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    let terms = project_terms(system, priors)?;
    let step = loss_and_gradient(net, &terms, latents)?;
    Ok((step.total, step.grads.flatten()))
}

/// Runs Adam on the generator parameters against the prior loss.
///
/// The priors must already be expressed in the units of `system`'s
/// responses.
pub fn train_rbfgen(
    system: &RbfSystem,
    mut net: GeneratorNet,
    priors: &[PriorTerm],
    cfg: &TrainConfig,
) -> Result<(GeneratorNet, LossHistory)> {
    cfg.validate()?;
    net.validate()?;
    if net.out_dim != system.null_dim() {
        return Err(Error::Shape(format!(
            "generator outputs {} coefficients but the null space has dimension {}",
            net.out_dim,
            system.null_dim()
        )));
    }
    if priors.is_empty() {
        return Err(Error::InvalidInput("training needs at least one prior term".into()));
    }
    let terms = project_terms(system, priors)?;
    let mut adam = Adam::new(net.num_params(), cfg.learning_rate, cfg.adam_betas);
    let mut params = net.flatten();
    let mut history = LossHistory {
        term_ids: priors.iter().map(|p| p.id.clone()).collect(),
        total: Vec::with_capacity(cfg.iterations),
        terms: Vec::with_capacity(cfg.iterations),
    };
    for it in 0..cfg.iterations {
        let latents = latent_batch(cfg.seed, it as u64, cfg.batch_size, net.latent_dim);
        let step = loss_and_gradient(&net, &terms, &latents).map_err(|e| match e {
            Error::NonFinite { term, value, .. } => Error::NonFinite {
                iteration: it,
                term,
                value,
            },
            other => other,
        })?;
        history.total.push(step.total);
        history.terms.push(step.term_values);
        adam.step(&mut params, &step.grads.flatten());
        net.set_flat(&params)?;
        if cfg.loss_log_every > 0 && it % (cfg.loss_log_every * 100) == 0 {
            log::debug!("iteration {it}: loss {}", step.total);
        }
    }
    Ok((net, history))
}

/// `count` weight vectors `w0 + N G(z)` with seeded latents.
pub fn sample_ensemble(
    system: &RbfSystem,
    net: &GeneratorNet,
    count: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    latent_batch(seed, u64::MAX, count, net.latent_dim)
        .iter()
        .map(|z| Ok(system.weights(&DVector::from_vec(net.forward(z)?))))
        .collect()
}

/// Prior-free relaxed ensemble: null-space coefficients drawn directly as
/// `scale * N(0, I)`.
pub fn sample_null_space(
    system: &RbfSystem,
    count: usize,
    scale: f64,
    seed: u64,
) -> Vec<DVector<f64>> {
    latent_batch(seed, u64::MAX - 1, count, system.null_dim())
        .into_iter()
        .map(|z| system.weights(&(DVector::from_vec(z) * scale)))
        .collect()
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Anything that predicts a scalar response at a point.
pub trait Predictor {
    fn predict(&self, x: &[f64]) -> f64;
}

/// A trained generator and a cached ensemble of admissible interpolants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateEnsemble {
    /// System over standardized responses.
    pub system: RbfSystem,
    pub generator: GeneratorNet,
    pub standardizer: Standardizer,
    pub samples: Vec<DVector<f64>>,
    pub loss_history: LossHistory,
}

/// Builds, trains and samples an RBF-Gen surrogate.
///
/// `priors` are given in the original response units.
pub fn fit_rbfgen(
    data: &Dataset,
    priors: &[PriorTerm],
    basis: &BasisConfig,
    cfg: &TrainConfig,
) -> Result<SurrogateEnsemble> {
    cfg.validate()?;
    let standardizer = Standardizer::fit(&data.y);
    let system = basis.build(&standardizer.apply(data))?;
    let out_dim = system.null_dim();
    let latent = cfg.latent_dim.unwrap_or_else(|| out_dim.clamp(1, 8));
    let net = init_generator(latent, out_dim, &cfg.hidden, cfg.activation, cfg.alpha_scale, cfg.seed)?;
    let scaled: Vec<PriorTerm> = priors
        .iter()
        .map(|p| p.standardized(standardizer.shift, standardizer.scale))
        .collect();
    let (generator, loss_history) = train_rbfgen(&system, net, &scaled, cfg)?;
    let samples = sample_ensemble(&system, &generator, cfg.ensemble_size, cfg.seed.wrapping_add(1))?;
    Ok(SurrogateEnsemble {
        system,
        generator,
        standardizer,
        samples,
        loss_history,
    })
}

impl SurrogateEnsemble {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Member values at `x` in original response units.
    pub fn member_values(&self, x: &[f64]) -> Vec<f64> {
        self.samples
            .iter()
            .map(|w| self.standardizer.inverse(evaluate_surrogate(&self.system, w, x)))
            .collect()
    }

    /// Average weight vector; its expansion equals the ensemble mean.
    pub fn mean_weights(&self) -> DVector<f64> {
        let mut acc = DVector::zeros(self.system.num_centers());
        for w in &self.samples {
            acc += w;
        }
        acc / self.samples.len().max(1) as f64
    }

    /// Replaces the cached members with a fresh draw.
    pub fn resample(&mut self, count: usize, seed: u64) -> Result<()> {
        self.samples = sample_ensemble(&self.system, &self.generator, count, seed)?;
        Ok(())
    }
}

/// Ensemble mean and the central `level` interval of member values.
pub fn predict_with_ci(ensemble: &SurrogateEnsemble, x: &[f64], level: f64) -> Result<(f64, f64, f64)> {
    if ensemble.is_empty() {
        return Err(Error::InvalidInput("cannot predict with an empty ensemble".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("confidence level must lie in (0, 1), got {level}")));
    }
    Ok(mean_and_interval(ensemble.member_values(x), level))
}

/// Mean and central interval of a set of values.
pub fn mean_and_interval(mut values: Vec<f64>, level: f64) -> (f64, f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (mean, quantile(&values, tail), quantile(&values, 1.0 - tail))
}

/// Mean prediction of the ensemble.
pub struct EnsembleMean {
    system: RbfSystem,
    weights: DVector<f64>,
    standardizer: Standardizer,
}

impl EnsembleMean {
    pub fn new(ensemble: &SurrogateEnsemble) -> Self {
        EnsembleMean {
            system: ensemble.system.clone(),
            weights: ensemble.mean_weights(),
            standardizer: ensemble.standardizer,
        }
    }
}

impl Predictor for EnsembleMean {
    fn predict(&self, x: &[f64]) -> f64 {
        self.standardizer
            .inverse(evaluate_surrogate(&self.system, &self.weights, x))
    }
}

impl Predictor for SurrogateEnsemble {
    fn predict(&self, x: &[f64]) -> f64 {
        let v = self.member_values(x);
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Classical square RBF interpolant with centers at the data points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRbf {
    pub system: RbfSystem,
    pub standardizer: Standardizer,
}

impl BaselineRbf {
    pub fn fit(data: &Dataset, kernel: KernelSpec) -> Result<Self> {
        let standardizer = Standardizer::fit(&data.y);
        let system = RbfSystem::baseline(&standardizer.apply(data), kernel)?;
        Ok(BaselineRbf {
            system,
            standardizer,
        })
    }
}

impl Predictor for BaselineRbf {
    fn predict(&self, x: &[f64]) -> f64 {
        self.standardizer
            .inverse(evaluate_surrogate(&self.system, &self.system.w0, x))
    }
}

/// Minimum-norm interpolant of the relaxed basis, with no generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinNormRbf {
    pub system: RbfSystem,
    pub standardizer: Standardizer,
}

impl MinNormRbf {
    pub fn fit(data: &Dataset, basis: &BasisConfig) -> Result<Self> {
        let standardizer = Standardizer::fit(&data.y);
        let system = basis.build(&standardizer.apply(data))?;
        Ok(MinNormRbf {
            system,
            standardizer,
        })
    }
}

impl Predictor for MinNormRbf {
    fn predict(&self, x: &[f64]) -> f64 {
        self.standardizer
            .inverse(evaluate_surrogate(&self.system, &self.system.w0, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::{Direction, PriorKind, ProbeGrid};
    use crate::sampling::Bounds;

    fn demo_data() -> Dataset {
        let f = |x: f64| 20.0 * x * x + 20.0 * x + 1.0;
        let xs = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        Dataset::from_rows(
            &xs.iter().map(|&x| vec![x]).collect::<Vec<_>>(),
            xs.iter().map(|&x| f(x)).collect(),
            Bounds::uniform(1, 0.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    fn mono_prior(weight: f64) -> PriorTerm {
        PriorTerm::new(
            "mono",
            PriorKind::Mono {
                direction: Direction::NonDecreasing,
            },
            weight,
            ProbeGrid::slice(&[0.0], 0, 0.0, 1.0, 32),
        )
        .unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            iterations: 20,
            batch_size: 8,
            hidden: vec![8],
            ensemble_size: 16,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        use crate::priors::{GaussianTarget, Statistic};
        use rand::Rng;
        let data = Dataset::from_rows(
            &[vec![0.2], vec![0.7]],
            vec![1.0, -0.5],
            Bounds::uniform(1, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let system = BasisConfig {
            kernel: KernelSpec::gaussian(3.0),
            centers: Some(4),
            ..BasisConfig::default()
        }
        .build(&data)
        .unwrap();
        let mut net = init_generator(2, 2, &[4], Activation::Relu, 1.5, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let vals: Vec<f64> = (0..net.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        net.set_flat(&vals).unwrap();
        let priors = vec![
            PriorTerm::new(
                "mono",
                PriorKind::Mono {
                    direction: Direction::NonIncreasing,
                },
                0.7,
                ProbeGrid::slice(&[0.0], 0, 0.0, 1.0, 12),
            )
            .unwrap(),
            PriorTerm::new(
                "kl",
                PriorKind::Kl {
                    statistic: Statistic::Point,
                    target: GaussianTarget { mean: 0.3, std: 0.5 },
                },
                1.3,
                ProbeGrid::points(vec![vec![0.45]]),
            )
            .unwrap(),
        ];
        let latents = latent_batch(5, 0, 6, 2);
        let (_, analytic) = batch_loss(&system, &net, &priors, &latents).unwrap();
        let h = 1e-6;
        for i in 0..vals.len() {
            let mut plus = vals.clone();
            let mut minus = vals.clone();
            plus[i] += h;
            minus[i] -= h;
            let mut np = net.clone();
            np.set_flat(&plus).unwrap();
            let mut nm = net.clone();
            nm.set_flat(&minus).unwrap();
            let fp = batch_loss(&system, &np, &priors, &latents).unwrap().0;
            let fm = batch_loss(&system, &nm, &priors, &latents).unwrap().0;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            assert!(rel <= 1e-3, "param {i}: {a} vs {numeric}");
        }
    }

    #[test]
    fn zero_weights_leave_parameters_unchanged() {
        let data = demo_data();
        let system = BasisConfig {
            centers: Some(10),
            ..BasisConfig::default()
        }
        .build(&data)
        .unwrap();
        let mut net = init_generator(2, system.null_dim(), &[8], Activation::Tanh, 1.0, 3).unwrap();
        // Nonzero output layer so a nonzero gradient would be visible.
        let n = net.num_params();
        let vals: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        net.set_flat(&vals).unwrap();
        let (trained, history) = train_rbfgen(&system, net.clone(), &[mono_prior(0.0)], &small_cfg()).unwrap();
        assert_eq!(trained, net);
        assert!(history.total.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn outdim_mismatch_is_shape_error() {
        let data = demo_data();
        let system = BasisConfig::default().build(&data).unwrap();
        let net = init_generator(2, system.null_dim() + 1, &[4], Activation::Tanh, 1.0, 0).unwrap();
        assert!(matches!(
            train_rbfgen(&system, net, &[mono_prior(1.0)], &small_cfg()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn empty_priors_rejected() {
        let data = demo_data();
        let system = BasisConfig::default().build(&data).unwrap();
        let net = init_generator(1, system.null_dim(), &[4], Activation::Tanh, 1.0, 0).unwrap();
        assert!(train_rbfgen(&system, net, &[], &small_cfg()).is_err());
    }

    #[test]
    fn nan_loss_reports_iteration_and_term() {
        let data = demo_data();
        let system = BasisConfig::default().build(&data).unwrap();
        let net = init_generator(1, system.null_dim(), &[4], Activation::Tanh, 1.0, 0).unwrap();
        let bad = PriorTerm {
            id: "broken-bnd".into(),
            kind: PriorKind::Bnd {
                targets: vec![f64::NAN],
            },
            weight: 1.0,
            grid: ProbeGrid::points(vec![vec![0.5]]),
        };
        match train_rbfgen(&system, net, &[bad], &small_cfg()) {
            Err(Error::NonFinite { iteration, term, .. }) => {
                assert_eq!(iteration, 0);
                assert_eq!(term, "broken-bnd");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ensemble_members_interpolate() {
        let data = demo_data();
        let ens = fit_rbfgen(&data, &[mono_prior(1.0)], &BasisConfig::default(), &small_cfg()).unwrap();
        for w in &ens.samples {
            let y = ens.standardizer.apply(&data).y;
            assert!(ens.system.residual_inf(w, &y) <= 1e-8 * y.amax().max(1.0));
        }
        for i in 0..data.len() {
            let (mean, lo, hi) = predict_with_ci(&ens, &data.row(i), 0.95).unwrap();
            for v in [mean, lo, hi] {
                assert!((v - data.y[i]).abs() <= 1e-8 * 41.0);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_handles_zero() {
        let data = demo_data();
        let ens = fit_rbfgen(&data, &[mono_prior(1.0)], &BasisConfig::default(), &small_cfg()).unwrap();
        assert!(sample_ensemble(&ens.system, &ens.generator, 0, 1).unwrap().is_empty());
        let a = sample_ensemble(&ens.system, &ens.generator, 5, 9).unwrap();
        let b = sample_ensemble(&ens.system, &ens.generator, 5, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_configs_identical_history() {
        let data = demo_data();
        let a = fit_rbfgen(&data, &[mono_prior(1.0)], &BasisConfig::default(), &small_cfg()).unwrap();
        let b = fit_rbfgen(&data, &[mono_prior(1.0)], &BasisConfig::default(), &small_cfg()).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.generator, b.generator);
    }

    #[test]
    fn empty_and_single_member_intervals() {
        let data = demo_data();
        let mut ens = fit_rbfgen(&data, &[mono_prior(1.0)], &BasisConfig::default(), &small_cfg()).unwrap();
        ens.samples.truncate(1);
        let (m, lo, hi) = predict_with_ci(&ens, &[0.3], 0.9).unwrap();
        assert_eq!(m, lo);
        assert_eq!(m, hi);
        ens.samples.clear();
        assert!(predict_with_ci(&ens, &[0.3], 0.9).is_err());
    }

    #[test]
    fn quantiles_match_sort_oracle() {
        // Values 1..=100: order statistic at h = 99 p, linearly interpolated.
        let values: Vec<f64> = (1..=100).rev().map(|v| v as f64).collect();
        let (mean, lo, hi) = mean_and_interval(values.clone(), 0.95);
        let mut sorted = values;
        sorted.sort_by(f64::total_cmp);
        let oracle = |p: f64| {
            let h = 99.0 * p;
            let i = h.floor() as usize;
            sorted[i] + (h - i as f64) * (sorted[i + 1] - sorted[i])
        };
        assert_eq!(mean, 50.5);
        assert!((lo - oracle(0.025)).abs() < 1e-12);
        assert!((hi - oracle(0.975)).abs() < 1e-12);
        assert!((lo - 3.475).abs() < 1e-12);
        assert!((hi - 97.525).abs() < 1e-12);
    }

    #[test]
    fn loss_csv_layout() {
        let h = LossHistory {
            term_ids: vec!["a".into(), "b".into()],
            total: vec![3.0, 2.0, 1.0],
            terms: vec![vec![1.0, 2.0], vec![0.5, 1.5], vec![0.25, 0.75]],
        };
        assert_eq!(h.to_csv(2), "iteration,total,a,b\n0,3,1,2\n2,1,0.25,0.75\n");
    }

    #[test]
    fn standardizer_handles_constant_response() {
        let s = Standardizer::fit(&DVector::from_vec(vec![5.0, 5.0, 5.0]));
        assert_eq!(s.scale, 1.0);
        assert_eq!(s.forward(5.0), 0.0);
    }
}
