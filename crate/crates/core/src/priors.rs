//! Expert-knowledge terms: structural penalties on generated functions and
//! KL divergences between batch statistics and Gaussian targets.
//!
//! Every term works on function values at its probe grid. For training the
//! terms also return gradients with respect to those values; ReLU kinks and
//! `|.|` at zero take the zero branch.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rbf::RbfSystem;
use crate::sampling::{uniform_random, Bounds};

/// Floor applied to the batch standard deviation inside KL terms.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Direction {
    NonDecreasing,
    NonIncreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ConvexMode {
    Convex,
    Concave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Extremum {
    Max,
    Min,
}

/// What is integrated along a slice by the integral statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Integrand {
    /// `f` itself.
    Value,
    /// `|df/dx|` along the slice (total variation).
    AbsSlope,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GaussianTarget {
    pub mean: f64,
    pub std: f64,
}

/// Functional statistic whose batch distribution a KL term shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "type")]
pub enum Statistic {
    /// Value at the single grid point.
    Point,
    /// Mean over the grid.
    Region,
    Extreme { extremum: Extremum },
    /// Gradient norm from central differences; the grid holds the pairs
    /// `x0 - h e_i, x0 + h e_i` for every axis.
    Gradient,
    /// Second difference `(f(x-h) - 2 f(x) + f(x+h)) / h^2`; the grid holds
    /// those three points in order.
    Curvature,
    /// Trapezoid rule along the grid's axis.
    Integral { integrand: Integrand },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum PriorKind {
    Mono { direction: Direction },
    Pos { min: f64 },
    /// The grid holds consecutive pairs `(p0, p1), (p2, p3), ...`.
    Lip { bound: f64 },
    Curv,
    Conv { mode: ConvexMode },
    Bnd { targets: Vec<f64> },
    Kl { statistic: Statistic, target: GaussianTarget },
}

impl PriorKind {
    pub fn label(&self) -> &'static str {
        match self {
            PriorKind::Mono { .. } => "Mono",
            PriorKind::Pos { .. } => "Pos",
            PriorKind::Lip { .. } => "Lip",
            PriorKind::Curv => "Curv",
            PriorKind::Conv { .. } => "Conv",
            PriorKind::Bnd { .. } => "Bnd",
            PriorKind::Kl { statistic, .. } => match statistic {
                Statistic::Point => "KLPoint",
                Statistic::Region => "KLRegion",
                Statistic::Extreme { .. } => "KLExtreme",
                Statistic::Gradient => "KLGrad",
                Statistic::Curvature => "KLCurv",
                Statistic::Integral { .. } => "KLIntegral",
            },
        }
    }

    pub fn is_kl(&self) -> bool {
        matches!(self, PriorKind::Kl { .. })
    }
}

/// Ordered probe points in original input units. `axis` names the varied
/// coordinate for slice grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub axis: Option<usize>,
}

impl ProbeGrid {
    pub fn points(points: Vec<Vec<f64>>) -> Self {
        ProbeGrid { points, axis: None }
    }

    /// `count` equispaced points along `axis` from `lo` to `hi`, other
    /// coordinates taken from `anchor`.
    pub fn slice(anchor: &[f64], axis: usize, lo: f64, hi: f64, count: usize) -> Self {
        let points = (0..count)
            .map(|k| {
                let t = if count == 1 { 0.5 } else { k as f64 / (count - 1) as f64 };
                let mut p = anchor.to_vec();
                p[axis] = lo + t * (hi - lo);
                p
            })
            .collect();
        ProbeGrid {
            points,
            axis: Some(axis),
        }
    }

    /// Seeded uniform random points in `bounds`.
    pub fn random(bounds: &Bounds, count: usize, seed: u64) -> Self {
        ProbeGrid::points(uniform_random(bounds, count, seed))
    }

    /// `count` seeded random pairs in `bounds`, stored consecutively.
    pub fn random_pairs(bounds: &Bounds, count: usize, seed: u64) -> Self {
        ProbeGrid::points(uniform_random(bounds, 2 * count, seed))
    }

    pub fn gradient_stencil(at: &[f64], step: f64) -> Self {
        let mut points = Vec::with_capacity(2 * at.len());
        for i in 0..at.len() {
            let mut minus = at.to_vec();
            let mut plus = at.to_vec();
            minus[i] -= step;
            plus[i] += step;
            points.push(minus);
            points.push(plus);
        }
        ProbeGrid::points(points)
    }

    pub fn curvature_stencil(at: &[f64], axis: usize, step: f64) -> Self {
        let mut minus = at.to_vec();
        let mut plus = at.to_vec();
        minus[axis] -= step;
        plus[axis] += step;
        ProbeGrid {
            points: vec![minus, at.to_vec(), plus],
            axis: Some(axis),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn axis_coords(&self) -> Option<Vec<f64>> {
        self.axis
            .map(|a| self.points.iter().map(|p| p[a]).collect::<Vec<_>>())
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[inline]
fn relu(v: f64) -> f64 {
    v.max(0.0)
}

#[inline]
fn step(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn need(values: &[f64], min: usize, what: &str) -> Result<()> {
    if values.len() < min {
        return Err(Error::InvalidInput(format!(
            "{what} needs at least {min} values, got {}",
            values.len()
        )));
    }
    Ok(())
}

// Penalties with gradients. Each returns (value, d value / d inputs).

fn mono_grad(values: &[f64], direction: Direction) -> Result<(f64, Vec<f64>)> {
    need(values, 2, "monotonicity penalty")?;
    let gaps = (values.len() - 1) as f64;
    let sgn = match direction {
        Direction::NonDecreasing => -1.0,
        Direction::NonIncreasing => 1.0,
    };
    let mut grad = vec![0.0; values.len()];
    let mut total = 0.0;
    for k in 0..values.len() - 1 {
        let violation = sgn * (values[k + 1] - values[k]);
        total += relu(violation);
        let g = step(violation) * sgn / gaps;
        grad[k + 1] += g;
        grad[k] -= g;
    }
    Ok((total / gaps, grad))
}

fn pos_grad(values: &[f64], min: f64) -> Result<(f64, Vec<f64>)> {
    need(values, 1, "positivity penalty")?;
    let (idx, lowest) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let mut grad = vec![0.0; values.len()];
    grad[idx] = -step(min - lowest);
    Ok((relu(min - lowest), grad))
}

fn lip_grad(points: &[Vec<f64>], values: &[f64], bound: f64) -> Result<(f64, Vec<f64>)> {
    if points.len() != values.len() || points.len() % 2 != 0 || points.is_empty() {
        return Err(Error::InvalidInput(
            "Lipschitz penalty needs a nonempty, even number of paired points".into(),
        ));
    }
    let mut grad = vec![0.0; values.len()];
    let mut total = 0.0;
    for p in 0..points.len() / 2 {
        let (a, b) = (2 * p, 2 * p + 1);
        let dist = distance(&points[a], &points[b]);
        if dist == 0.0 {
            return Err(Error::InvalidInput(format!("Lipschitz pair {p} has coincident points")));
        }
        let diff = values[a] - values[b];
        let excess = diff.abs() / dist - bound;
        total += relu(excess);
        let g = step(excess) * sign(diff) / dist;
        grad[a] += g;
        grad[b] -= g;
    }
    Ok((total, grad))
}

fn curv_grad(values: &[f64]) -> Result<(f64, Vec<f64>)> {
    need(values, 3, "curvature penalty")?;
    let mut grad = vec![0.0; values.len()];
    let mut total = 0.0;
    for k in 1..values.len() - 1 {
        let d2 = values[k + 1] - 2.0 * values[k] + values[k - 1];
        total += d2 * d2;
        grad[k + 1] += 2.0 * d2;
        grad[k] -= 4.0 * d2;
        grad[k - 1] += 2.0 * d2;
    }
    Ok((total, grad))
}

fn conv_grad(values: &[f64], mode: ConvexMode) -> Result<(f64, Vec<f64>)> {
    need(values, 3, "convexity penalty")?;
    let sgn = match mode {
        ConvexMode::Convex => -1.0,
        ConvexMode::Concave => 1.0,
    };
    let mut grad = vec![0.0; values.len()];
    let mut total = 0.0;
    for k in 1..values.len() - 1 {
        let v = sgn * (values[k + 1] - 2.0 * values[k] + values[k - 1]);
        total += relu(v);
        let g = step(v) * sgn;
        grad[k + 1] += g;
        grad[k] -= 2.0 * g;
        grad[k - 1] += g;
    }
    Ok((total, grad))
}

fn bnd_grad(values: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if values.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} boundary values but {} targets",
            values.len(),
            targets.len()
        )));
    }
    let grad: Vec<f64> = values.iter().zip(targets).map(|(v, t)| 2.0 * (v - t)).collect();
    let total = values.iter().zip(targets).map(|(v, t)| (v - t) * (v - t)).sum();
    Ok((total, grad))
}

/// Mean size of monotonicity violations between consecutive grid values.
pub fn pen_mono(values: &[f64], direction: Direction) -> Result<f64> {
    Ok(mono_grad(values, direction)?.0)
}

/// `ReLU(m - min(values))`.
pub fn pen_pos(values: &[f64], min: f64) -> Result<f64> {
    Ok(pos_grad(values, min)?.0)
}

/// A probe pair for the slope bound.
#[derive(Debug, Clone, PartialEq)]
pub struct LipPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub fx: f64,
    pub fy: f64,
}

/// Summed excess of finite-difference slopes over `bound`.
pub fn pen_lip(pairs: &[LipPair], bound: f64) -> Result<f64> {
    let mut points = Vec::with_capacity(2 * pairs.len());
    let mut values = Vec::with_capacity(2 * pairs.len());
    for p in pairs {
        points.push(p.x.clone());
        points.push(p.y.clone());
        values.push(p.fx);
        values.push(p.fy);
    }
    Ok(lip_grad(&points, &values, bound)?.0)
}

/// Sum of squared second differences.
pub fn pen_curv(values: &[f64]) -> Result<f64> {
    Ok(curv_grad(values)?.0)
}

pub fn pen_conv(values: &[f64], mode: ConvexMode) -> Result<f64> {
    Ok(conv_grad(values, mode)?.0)
}

/// Sum of squared deviations from known boundary values.
pub fn pen_bnd(values: &[f64], targets: &[f64]) -> Result<f64> {
    Ok(bnd_grad(values, targets)?.0)
}

/// `KL(N(mu1, sigma1^2) || N(mu2, sigma2^2))`.
pub fn gaussian_kl(mu1: f64, sigma1: f64, mu2: f64, sigma2: f64) -> Result<f64> {
    if !(sigma1 > 0.0 && sigma2 > 0.0) {
        return Err(Error::Domain(format!(
            "Gaussian KL needs positive standard deviations, got {sigma1} and {sigma2}"
        )));
    }
    Ok(gaussian_kl_unchecked(mu1, sigma1, mu2, sigma2))
}

#[inline]
fn gaussian_kl_unchecked(mu1: f64, sigma1: f64, mu2: f64, sigma2: f64) -> f64 {
    let d = mu1 - mu2;
    (sigma2 / sigma1).ln() + (sigma1 * sigma1 + d * d) / (2.0 * sigma2 * sigma2) - 0.5
}

fn statistic_grad(
    statistic: &Statistic,
    grid: &ProbeGrid,
    values: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let n = values.len();
    let mut grad = vec![0.0; n];
    let s = match statistic {
        Statistic::Point => {
            need(values, 1, "point statistic")?;
            grad[0] = 1.0;
            values[0]
        }
        Statistic::Region => {
            need(values, 1, "region statistic")?;
            grad.iter_mut().for_each(|g| *g = 1.0 / n as f64);
            values.iter().sum::<f64>() / n as f64
        }
        Statistic::Extreme { extremum } => {
            need(values, 1, "extreme statistic")?;
            let better = |a: f64, b: f64| match extremum {
                Extremum::Max => a > b,
                Extremum::Min => a < b,
            };
            let mut idx = 0;
            for (i, v) in values.iter().enumerate() {
                if better(*v, values[idx]) {
                    idx = i;
                }
            }
            grad[idx] = 1.0;
            values[idx]
        }
        Statistic::Gradient => {
            if n < 2 || n % 2 != 0 {
                return Err(Error::InvalidInput(
                    "gradient statistic needs a stencil of point pairs".into(),
                ));
            }
            let mut partials = Vec::with_capacity(n / 2);
            for i in 0..n / 2 {
                let h2 = distance(&grid.points[2 * i], &grid.points[2 * i + 1]);
                partials.push(((values[2 * i + 1] - values[2 * i]) / h2, h2));
            }
            let norm = partials.iter().map(|(p, _)| p * p).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (i, (p, h2)) in partials.iter().enumerate() {
                    let g = p / norm / h2;
                    grad[2 * i + 1] = g;
                    grad[2 * i] = -g;
                }
            }
            norm
        }
        Statistic::Curvature => {
            if n != 3 {
                return Err(Error::InvalidInput(
                    "curvature statistic needs a three-point stencil".into(),
                ));
            }
            let h = distance(&grid.points[0], &grid.points[1]);
            let h2 = h * h;
            grad[0] = 1.0 / h2;
            grad[1] = -2.0 / h2;
            grad[2] = 1.0 / h2;
            (values[0] - 2.0 * values[1] + values[2]) / h2
        }
        Statistic::Integral { integrand } => {
            need(values, 2, "integral statistic")?;
            let coords = grid.axis_coords().ok_or_else(|| {
                Error::InvalidInput("integral statistic needs a slice grid with an axis".into())
            })?;
            let mut total = 0.0;
            for k in 0..n - 1 {
                let dx = coords[k + 1] - coords[k];
                match integrand {
                    Integrand::Value => {
                        total += 0.5 * dx * (values[k] + values[k + 1]);
                        grad[k] += 0.5 * dx;
                        grad[k + 1] += 0.5 * dx;
                    }
                    Integrand::AbsSlope => {
                        let dv = values[k + 1] - values[k];
                        total += dv.abs();
                        grad[k + 1] += sign(dv);
                        grad[k] -= sign(dv);
                    }
                }
            }
            total
        }
    };
    Ok((s, grad))
}

/// Batch moments of `stats`, with the standard deviation floored.
/// Returns `(mean, std, floor_engaged)`.
fn batch_moments(stats: &[f64]) -> (f64, f64, bool) {
    let m = stats.len() as f64;
    let mean = stats.iter().sum::<f64>() / m;
    let var = stats.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / m;
    let std = var.sqrt();
    if std < STD_FLOOR {
        (mean, STD_FLOOR, true)
    } else {
        (mean, std, false)
    }
}

/// KL between the Gaussian fitted to batch statistics and the target, with
/// gradients with respect to each member's statistic.
fn kl_of_stats(stats: &[f64], target: &GaussianTarget) -> Result<(f64, Vec<f64>)> {
    if stats.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "KL terms need at least 2 batch members, got {}",
            stats.len()
        )));
    }
    let (mean, std, floored) = batch_moments(stats);
    let kl = gaussian_kl(mean, std, target.mean, target.std)?;
    let m = stats.len() as f64;
    let t2 = target.std * target.std;
    let dmean = (mean - target.mean) / t2;
    let dstd = if floored { 0.0 } else { -1.0 / std + std / t2 };
    let grad = stats
        .iter()
        .map(|s| dmean / m + dstd * (s - mean) / (m * std))
        .collect();
    Ok((kl, grad))
}

/// KL divergence between the batch distribution of a statistic (Gaussian
/// moment match) and a Gaussian target. `batch` holds weight vectors.
pub fn kl_statistic(
    batch: &[DVector<f64>],
    system: &RbfSystem,
    statistic: &Statistic,
    grid: &ProbeGrid,
    target: &GaussianTarget,
) -> Result<f64> {
    if batch.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "KL terms need at least 2 batch members, got {}",
            batch.len()
        )));
    }
    let phi = system.kernel_matrix(&grid.points)?;
    let stats = batch
        .iter()
        .map(|w| {
            let values: Vec<f64> = (&phi * w).iter().copied().collect();
            statistic_grad(statistic, grid, &values).map(|(s, _)| s)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(kl_of_stats(&stats, target)?.0)
}

/// One term of the composite loss as seen by [`total_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct TermValue {
    pub id: String,
    pub weight: f64,
    pub value: f64,
}

/// Weighted sum of penalty and KL values.
pub fn total_loss(terms: &[TermValue]) -> Result<f64> {
    let mut total = 0.0;
    for t in terms {
        if !t.value.is_finite() {
            return Err(Error::NonFinite {
                iteration: 0,
                term: t.id.clone(),
                value: t.value,
            });
        }
        total += t.weight * t.value;
    }
    Ok(total)
}

/// A weighted prior term attached to its probe grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorTerm {
    pub id: String,
    pub kind: PriorKind,
    pub weight: f64,
    pub grid: ProbeGrid,
}

impl PriorTerm {
    pub fn new(id: impl Into<String>, kind: PriorKind, weight: f64, grid: ProbeGrid) -> Result<Self> {
        let term = PriorTerm {
            id: id.into(),
            kind,
            weight,
            grid,
        };
        term.validate()?;
        Ok(term)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidInput(format!("prior `{}`: {msg}", self.id)));
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return fail(format!("weight must be nonnegative, got {}", self.weight));
        }
        if self.grid.is_empty() {
            return fail("empty probe grid".into());
        }
        let dim = self.grid.points[0].len();
        if self.grid.points.iter().any(|p| p.len() != dim) {
            return fail("probe points have inconsistent dimensions".into());
        }
        if let Some(axis) = self.grid.axis {
            if axis >= dim {
                return fail(format!("slice axis {axis} out of range"));
            }
        }
        let ordered = matches!(
            self.kind,
            PriorKind::Mono { .. } | PriorKind::Curv | PriorKind::Conv { .. }
        ) || matches!(
            self.kind,
            PriorKind::Kl {
                statistic: Statistic::Integral { .. },
                ..
            }
        );
        if ordered {
            if let Some(coords) = self.grid.axis_coords() {
                if coords.windows(2).any(|w| w[1] <= w[0]) {
                    return fail("slice grid must be strictly increasing along its axis".into());
                }
            }
        }
        let n = self.grid.len();
        match &self.kind {
            PriorKind::Mono { .. } if n < 2 => fail("needs at least 2 probe points".into()),
            PriorKind::Curv | PriorKind::Conv { .. } if n < 3 => {
                fail("needs at least 3 probe points".into())
            }
            PriorKind::Lip { bound } => {
                if n % 2 != 0 {
                    return fail("needs paired probe points".into());
                }
                if !(*bound > 0.0) {
                    return fail(format!("Lipschitz bound must be positive, got {bound}"));
                }
                Ok(())
            }
            PriorKind::Bnd { targets } if targets.len() != n => {
                fail(format!("{} targets for {n} boundary points", targets.len()))
            }
            PriorKind::Kl { statistic, target } => {
                if !(target.std > 0.0 && target.std.is_finite() && target.mean.is_finite()) {
                    return fail(format!("target std must be positive, got {}", target.std));
                }
                match statistic {
                    Statistic::Point if n != 1 => fail("point statistic needs exactly 1 point".into()),
                    Statistic::Gradient if n % 2 != 0 => fail("gradient stencil must hold pairs".into()),
                    Statistic::Curvature if n != 3 => fail("curvature stencil needs 3 points".into()),
                    Statistic::Integral { .. } if self.grid.axis.is_none() || n < 2 => {
                        fail("integral needs a slice grid of at least 2 points".into())
                    }
                    _ => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    /// Value and value-gradient of the term for one function.
    fn member_grad(&self, values: &[f64]) -> Result<(f64, Vec<f64>)> {
        match &self.kind {
            PriorKind::Mono { direction } => mono_grad(values, *direction),
            PriorKind::Pos { min } => pos_grad(values, *min),
            PriorKind::Lip { bound } => lip_grad(&self.grid.points, values, *bound),
            PriorKind::Curv => curv_grad(values),
            PriorKind::Conv { mode } => conv_grad(values, *mode),
            PriorKind::Bnd { targets } => bnd_grad(values, targets),
            PriorKind::Kl { statistic, .. } => statistic_grad(statistic, &self.grid, values),
        }
    }

    /// Unweighted value of the term on one function given its grid values.
    pub fn evaluate_single(&self, values: &[f64]) -> Result<f64> {
        if self.kind.is_kl() {
            return Err(Error::InvalidInput(format!(
                "prior `{}` is distributional and needs a batch",
                self.id
            )));
        }
        Ok(self.member_grad(values)?.0)
    }

    /// Unweighted term value over a batch (`values[m]` are member `m`'s
    /// grid values) and its gradient with respect to every value.
    ///
    /// Penalties are averaged over the batch; KL terms compare the batch
    /// distribution of the statistic against the target.
    pub fn evaluate_batch(&self, values: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let m = values.len() as f64;
        match &self.kind {
            PriorKind::Kl { target, .. } => {
                let per_member = values
                    .iter()
                    .map(|v| self.member_grad(v))
                    .collect::<Result<Vec<_>>>()?;
                let stats: Vec<f64> = per_member.iter().map(|(s, _)| *s).collect();
                let (kl, dstat) = kl_of_stats(&stats, target)?;
                let grads = per_member
                    .into_iter()
                    .zip(dstat)
                    .map(|((_, ds), g)| ds.into_iter().map(|d| d * g).collect())
                    .collect();
                Ok((kl, grads))
            }
            _ => {
                let mut total = 0.0;
                let mut grads = Vec::with_capacity(values.len());
                for v in values {
                    let (p, g) = self.member_grad(v)?;
                    total += p;
                    grads.push(g.into_iter().map(|x| x / m).collect());
                }
                Ok((total / m, grads))
            }
        }
    }

    /// Re-expresses the term for functions in standardized response units
    /// `(f - shift) / scale`.
    pub fn standardized(&self, shift: f64, scale: f64) -> PriorTerm {
        let affine = |t: &GaussianTarget, offset: f64| GaussianTarget {
            mean: (t.mean - offset) / scale,
            std: t.std / scale,
        };
        let kind = match &self.kind {
            PriorKind::Pos { min } => PriorKind::Pos {
                min: (min - shift) / scale,
            },
            PriorKind::Lip { bound } => PriorKind::Lip {
                bound: bound / scale,
            },
            PriorKind::Bnd { targets } => PriorKind::Bnd {
                targets: targets.iter().map(|t| (t - shift) / scale).collect(),
            },
            PriorKind::Kl { statistic, target } => {
                let offset = match statistic {
                    Statistic::Point | Statistic::Region | Statistic::Extreme { .. } => shift,
                    Statistic::Gradient | Statistic::Curvature => 0.0,
                    Statistic::Integral { integrand } => match integrand {
                        Integrand::Value => {
                            let coords = self.grid.axis_coords().unwrap_or_default();
                            let length = match (coords.first(), coords.last()) {
                                (Some(a), Some(b)) => b - a,
                                _ => 0.0,
                            };
                            shift * length
                        }
                        Integrand::AbsSlope => 0.0,
                    },
                };
                PriorKind::Kl {
                    statistic: *statistic,
                    target: affine(target, offset),
                }
            }
            other => other.clone(),
        };
        PriorTerm {
            id: self.id.clone(),
            kind,
            weight: self.weight,
            grid: self.grid.clone(),
        }
    }
}

/// Declarative probe-grid description used in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "type", deny_unknown_fields)]
pub enum GridSpec {
    /// Equispaced slice along `dim`; range defaults to the bounds and the
    /// anchor to the bounds midpoint.
    #[serde(rename_all = "camelCase")]
    Slice {
        dim: usize,
        #[serde(default = "default_slice_count")]
        count: usize,
        #[serde(default)]
        lo: Option<f64>,
        #[serde(default)]
        hi: Option<f64>,
        #[serde(default)]
        anchor: Option<Vec<f64>>,
    },
    Points { points: Vec<Vec<f64>> },
    Random {
        #[serde(default = "default_slice_count")]
        count: usize,
        #[serde(default)]
        seed: u64,
    },
    Pairs {
        #[serde(default = "default_pair_count")]
        count: usize,
        #[serde(default)]
        seed: u64,
    },
    GradientStencil { at: Vec<f64>, step: f64 },
    CurvatureStencil { at: Vec<f64>, dim: usize, step: f64 },
}

fn default_slice_count() -> usize {
    32
}

fn default_pair_count() -> usize {
    64
}

impl GridSpec {
    pub fn resolve(&self, bounds: &Bounds) -> Result<ProbeGrid> {
        let d = bounds.dim();
        let check_dim = |p: &[f64]| {
            if p.len() != d {
                Err(Error::Shape(format!("grid point has {} coordinates, expected {d}", p.len())))
            } else {
                Ok(())
            }
        };
        Ok(match self {
            GridSpec::Slice {
                dim,
                count,
                lo,
                hi,
                anchor,
            } => {
                if *dim >= d {
                    return Err(Error::InvalidInput(format!("slice dim {dim} out of range")));
                }
                let anchor = anchor.clone().unwrap_or_else(|| bounds.midpoint());
                check_dim(&anchor)?;
                ProbeGrid::slice(
                    &anchor,
                    *dim,
                    lo.unwrap_or(bounds.lo(*dim)),
                    hi.unwrap_or(bounds.hi(*dim)),
                    *count,
                )
            }
            GridSpec::Points { points } => {
                for p in points {
                    check_dim(p)?;
                }
                ProbeGrid::points(points.clone())
            }
            GridSpec::Random { count, seed } => ProbeGrid::random(bounds, *count, *seed),
            GridSpec::Pairs { count, seed } => ProbeGrid::random_pairs(bounds, *count, *seed),
            GridSpec::GradientStencil { at, step } => {
                check_dim(at)?;
                ProbeGrid::gradient_stencil(at, *step)
            }
            GridSpec::CurvatureStencil { at, dim, step } => {
                check_dim(at)?;
                if *dim >= d {
                    return Err(Error::InvalidInput(format!("stencil dim {dim} out of range")));
                }
                ProbeGrid::curvature_stencil(at, *dim, *step)
            }
        })
    }
}

/// Prior kind names accepted in run configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PriorKindName {
    Mono,
    Pos,
    Lip,
    Curv,
    Conv,
    Bnd,
    KlPoint,
    KlRegion,
    KlExtreme,
    KlGrad,
    KlCurv,
    KlIntegral,
}

/// Kind-specific parameters; which ones are required depends on the kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PriorParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    /// Lower bound `m` of the positivity penalty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    /// Lipschitz constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ConvexMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<GaussianTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extremum: Option<Extremum>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrand: Option<Integrand>,
}

/// Declarative prior term: `{id?, kind, weight, grid, params}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PriorTermSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub kind: PriorKindName,
    #[serde(default = "default_weight")]
    pub weight: f64,
    pub grid: GridSpec,
    #[serde(default)]
    pub params: PriorParams,
}

fn default_weight() -> f64 {
    1.0
}

impl PriorTermSpec {
    fn kind(&self) -> Result<PriorKind> {
        fn required<T: Clone>(v: &Option<T>, name: &str, kind: PriorKindName) -> Result<T> {
            v.clone().ok_or_else(|| {
                Error::InvalidInput(format!("prior kind {kind:?} requires params.{name}"))
            })
        }
        let p = &self.params;
        let k = self.kind;
        let kl = |statistic| -> Result<PriorKind> {
            Ok(PriorKind::Kl {
                statistic,
                target: required(&p.target, "target", k)?,
            })
        };
        match k {
            PriorKindName::Mono => Ok(PriorKind::Mono {
                direction: required(&p.direction, "direction", k)?,
            }),
            PriorKindName::Pos => Ok(PriorKind::Pos {
                min: p.min.unwrap_or(0.0),
            }),
            PriorKindName::Lip => Ok(PriorKind::Lip {
                bound: required(&p.bound, "bound", k)?,
            }),
            PriorKindName::Curv => Ok(PriorKind::Curv),
            PriorKindName::Conv => Ok(PriorKind::Conv {
                mode: p.mode.unwrap_or(ConvexMode::Convex),
            }),
            PriorKindName::Bnd => Ok(PriorKind::Bnd {
                targets: required(&p.targets, "targets", k)?,
            }),
            PriorKindName::KlPoint => kl(Statistic::Point),
            PriorKindName::KlRegion => kl(Statistic::Region),
            PriorKindName::KlExtreme => kl(Statistic::Extreme {
                extremum: p.extremum.unwrap_or(Extremum::Max),
            }),
            PriorKindName::KlGrad => kl(Statistic::Gradient),
            PriorKindName::KlCurv => kl(Statistic::Curvature),
            PriorKindName::KlIntegral => kl(Statistic::Integral {
                integrand: p.integrand.unwrap_or(Integrand::Value),
            }),
        }
    }

    pub fn resolve(&self, index: usize, bounds: &Bounds) -> Result<PriorTerm> {
        let kind = self.kind()?;
        let id = self
            .id
            .clone()
            .unwrap_or_else(|| format!("{}{index}", kind.label().to_lowercase()));
        PriorTerm::new(id, kind, self.weight, self.grid.resolve(bounds)?)
    }
}
