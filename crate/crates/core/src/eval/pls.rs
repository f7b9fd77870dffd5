//! NIPALS PLS1 input reduction.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fitted PLS1 projection. New inputs are reduced as
/// `((x - mean) / scale) * weights`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsModel {
    pub mean: DVector<f64>,
    pub scale: DVector<f64>,
    /// Unit-norm weight vectors, d×ncomp.
    pub weights: DMatrix<f64>,
    /// Frobenius norm of the deflated X after each component.
    pub residual_norms: Vec<f64>,
}

impl PlsModel {
    pub fn ncomp(&self) -> usize {
        self.weights.ncols()
    }

    pub fn standardize(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_fn(x.len(), |j, _| (x[j] - self.mean[j]) / self.scale[j])
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        (self.weights.transpose() * self.standardize(x)).iter().copied().collect()
    }

    pub fn transform_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let std = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[j]) / self.scale[j]);
        std * &self.weights
    }
}

fn standardize_columns(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let (n, d) = x.shape();
    let mean = DVector::from_fn(d, |j, _| x.column(j).sum() / n as f64);
    let scale = DVector::from_fn(d, |j, _| {
        let var = x.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n as f64;
        // Constant columns stay at zero after centering.
        if var.sqrt() > 1e-12 * mean[j].abs().max(1.0) {
            var.sqrt()
        } else {
            1.0
        }
    });
    let z = DMatrix::from_fn(n, d, |i, j| (x[(i, j)] - mean[j]) / scale[j]);
    (z, mean, scale)
}

/// NIPALS PLS1 on column-standardized `x` and centered `y`. Returns the
/// model and the reduced inputs `x_std * W`.
pub fn pls_reduce(x: &DMatrix<f64>, y: &DVector<f64>, ncomp: usize) -> Result<(PlsModel, DMatrix<f64>)> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::Shape(format!("x has {n} rows but y has {}", y.len())));
    }
    if ncomp == 0 {
        return Err(Error::InvalidInput("PLS needs at least one component".into()));
    }
    let (z, mean, scale) = standardize_columns(x);
    let svd = SVD::new(z.clone(), false, false);
    let top = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > 1e-10 * top.max(f64::MIN_POSITIVE))
        .count();
    if ncomp > rank {
        return Err(Error::InvalidInput(format!(
            "requested {ncomp} PLS components but the centered inputs have rank {rank}"
        )));
    }
    let y_mean = y.sum() / n as f64;
    let mut yr = y.map(|v| v - y_mean);
    let mut xr = z.clone();
    let mut weights = DMatrix::zeros(d, ncomp);
    let mut residual_norms = Vec::with_capacity(ncomp);
    for a in 0..ncomp {
        let mut w = xr.transpose() * &yr;
        let norm = w.norm();
        if norm <= 1e-14 * z.norm().max(1.0) {
            // y is exhausted; continue with the dominant remaining X direction.
            let svd = SVD::new(xr.clone(), false, true);
            let (imax, _) = svd.singular_values.argmax();
            w = svd.v_t.expect("v requested").row(imax).transpose();
        } else {
            w /= norm;
        }
        let t = &xr * &w;
        let tt = t.dot(&t);
        if tt <= 0.0 {
            return Err(Error::InvalidInput("PLS component has zero score".into()));
        }
        let p = xr.transpose() * &t / tt;
        let q = yr.dot(&t) / tt;
        xr -= &t * p.transpose();
        yr -= &t * q;
        weights.set_column(a, &w);
        residual_norms.push(xr.norm());
    }
    let reduced = &z * &weights;
    Ok((
        PlsModel {
            mean,
            scale,
            weights,
            residual_norms,
        },
        reduced,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_x(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.random::<f64>())
    }

    #[test]
    fn single_informative_column() {
        let mut x = random_x(12, 4, 1);
        for i in 0..12 {
            for j in 1..4 {
                x[(i, j)] = j as f64;
            }
        }
        let y = x.column(0).into_owned();
        let (model, _) = pls_reduce(&x, &y, 1).unwrap();
        let w = model.weights.column(0);
        assert!((w[0].abs() - 1.0).abs() < 1e-12);
        assert!(w.iter().skip(1).all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn full_rank_reproduces_least_squares() {
        let x = random_x(15, 5, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = DVector::from_fn(15, |_, _| rng.random::<f64>());
        let (model, reduced) = pls_reduce(&x, &y, 5).unwrap();
        let yc = y.map(|v| v - y.mean());
        // Least squares on the full standardized design versus on the
        // reduced components: the fitted values must agree.
        let z = DMatrix::from_fn(15, 5, |i, j| (x[(i, j)] - model.mean[j]) / model.scale[j]);
        let fit = |a: &DMatrix<f64>| {
            let beta = (a.transpose() * a).lu().solve(&(a.transpose() * &yc)).unwrap();
            a * beta
        };
        assert!((fit(&z) - fit(&reduced)).amax() < 1e-8);
    }

    #[test]
    fn weights_unit_norm_orthogonal_and_residuals_decrease() {
        let x = random_x(20, 7, 4);
        let y = DVector::from_fn(20, |i, _| x[(i, 0)] * 2.0 - x[(i, 3)] + 0.1 * x[(i, 5)].powi(2));
        let (model, reduced) = pls_reduce(&x, &y, 5).unwrap();
        let gram = model.weights.transpose() * &model.weights;
        assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-10);
        let z = DMatrix::from_fn(20, 7, |i, j| (x[(i, j)] - model.mean[j]) / model.scale[j]);
        let mut prev = z.norm();
        for r in &model.residual_norms {
            assert!(*r <= prev + 1e-12);
            prev = *r;
        }
        let row: Vec<f64> = x.row(4).iter().copied().collect();
        let t = model.transform(&row);
        for (a, b) in t.iter().zip(reduced.row(4).iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((model.transform_matrix(&x) - reduced).amax() < 1e-12);
    }

    #[test]
    fn component_count_validated() {
        let x = random_x(6, 3, 5);
        let y = DVector::from_element(6, 1.0);
        assert!(pls_reduce(&x, &y, 0).is_err());
        assert!(pls_reduce(&x, &y, 4).is_err());
        assert!(pls_reduce(&x, &y, 3).is_ok());
    }

    #[test]
    fn deterministic() {
        let x = random_x(10, 4, 6);
        let y = DVector::from_fn(10, |i, _| x[(i, 1)]);
        assert_eq!(pls_reduce(&x, &y, 2).unwrap(), pls_reduce(&x, &y, 2).unwrap());
    }
}
