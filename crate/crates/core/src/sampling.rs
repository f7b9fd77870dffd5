//! Design-of-experiments helpers: boxes, Halton sequences, grids and Latin
//! hypercube samples.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box, one `[lo, hi]` interval per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds(pub Vec<[f64; 2]>);

impl Bounds {
    pub fn new(intervals: Vec<[f64; 2]>) -> Result<Self> {
        let b = Bounds(intervals);
        b.validate()?;
        Ok(b)
    }

    /// The same interval repeated in every dimension.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![[lo, hi]; dim])
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::InvalidInput("bounds must have at least one dimension".into()));
        }
        for (j, [lo, hi]) in self.0.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidInput(format!(
                    "degenerate bounds in dimension {j}: [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn lo(&self, j: usize) -> f64 {
        self.0[j][0]
    }

    pub fn hi(&self, j: usize) -> f64 {
        self.0[j][1]
    }

    pub fn width(&self, j: usize) -> f64 {
        self.0[j][1] - self.0[j][0]
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.0.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(&self.0)
                .all(|(v, [lo, hi])| *v >= lo - tol && *v <= hi + tol)
    }

    /// Maps unit-cube coordinates into this box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.0)
            .map(|(t, [lo, hi])| lo + t * (hi - lo))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Placement {
    UniformGrid,
    Halton,
}

impl Placement {
    /// Grid in one dimension, Halton otherwise.
    pub fn default_for(dim: usize) -> Self {
        if dim == 1 {
            Placement::UniformGrid
        } else {
            Placement::Halton
        }
    }
}

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131,
];

fn nth_prime(k: usize) -> u64 {
    if k < PRIMES.len() {
        return PRIMES[k];
    }
    let mut count = PRIMES.len();
    let mut candidate = PRIMES[PRIMES.len() - 1] + 2;
    loop {
        let is_prime = (2..)
            .take_while(|p: &u64| p * p <= candidate)
            .all(|p| candidate % p != 0);
        if is_prime {
            if count == k {
                return candidate;
            }
            count += 1;
        }
        candidate += 2;
    }
}

/// Van der Corput radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv_base = 1.0 / base as f64;
    let mut factor = inv_base;
    let mut value = 0.0;
    while index > 0 {
        value += (index % base) as f64 * factor;
        index /= base;
        factor *= inv_base;
    }
    value
}

/// `count` Halton points in the unit cube, starting at sequence index
/// `1 + skip` (index 0 is the origin and is never emitted).
pub fn halton_unit(count: usize, dim: usize, skip: u64) -> Vec<Vec<f64>> {
    let bases: Vec<u64> = (0..dim).map(nth_prime).collect();
    (0..count as u64)
        .map(|i| {
            bases
                .iter()
                .map(|&b| radical_inverse(i + 1 + skip, b))
                .collect()
        })
        .collect()
}

fn perfect_root(k: usize, dim: usize) -> Option<usize> {
    let guess = (k as f64).powf(1.0 / dim as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|g| g.checked_pow(dim as u32) == Some(k))
}

fn grid_unit(per_dim: usize, dim: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = if per_dim == 1 {
        vec![0.5]
    } else {
        (0..per_dim)
            .map(|i| i as f64 / (per_dim - 1) as f64)
            .collect()
    };
    let total = per_dim.pow(dim as u32);
    (0..total)
        .map(|mut flat| {
            let mut p = vec![0.0; dim];
            for slot in p.iter_mut() {
                *slot = axis[flat % per_dim];
                flat /= per_dim;
            }
            p
        })
        .collect()
}

/// Places `k` kernel centers inside `bounds`.
///
/// A uniform grid needs `k` to be a perfect `d`-th power; otherwise the
/// Halton sequence is used instead. For Halton placement the seed skips that
/// many leading sequence points.
pub fn place_centers(
    bounds: &Bounds,
    k: usize,
    strategy: Placement,
    seed: u64,
) -> Result<DMatrix<f64>> {
    bounds.validate()?;
    if k == 0 {
        return Err(Error::InvalidInput("at least one center is required".into()));
    }
    let dim = bounds.dim();
    let unit = match strategy {
        Placement::UniformGrid => match perfect_root(k, dim) {
            Some(per_dim) => grid_unit(per_dim, dim),
            None => {
                log::warn!(
                    "{k} centers is not a perfect {dim}-th power; using Halton placement instead"
                );
                halton_unit(k, dim, seed)
            }
        },
        Placement::Halton => halton_unit(k, dim, seed),
    };
    Ok(rows_to_matrix(
        &unit.iter().map(|u| bounds.from_unit(u)).collect::<Vec<_>>(),
        dim,
    ))
}

/// Seeded Latin hypercube sample of `count` points in `bounds`.
pub fn latin_hypercube(bounds: &Bounds, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let dim = bounds.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut strata: Vec<usize> = (0..count).collect();
        strata.shuffle(&mut rng);
        columns.push(
            strata
                .into_iter()
                .map(|s| (s as f64 + rng.random::<f64>()) / count as f64)
                .collect(),
        );
    }
    (0..count)
        .map(|i| {
            let u: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            bounds.from_unit(&u)
        })
        .collect()
}

/// Seeded uniform random points in `bounds`.
pub fn uniform_random(bounds: &Bounds, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u: Vec<f64> = (0..bounds.dim()).map(|_| rng.random::<f64>()).collect();
            bounds.from_unit(&u)
        })
        .collect()
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_1d_includes_endpoints() {
        let b = Bounds::uniform(1, 0.0, 1.0).unwrap();
        let c = place_centers(&b, 3, Placement::UniformGrid, 0).unwrap();
        assert_eq!(c.as_slice(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn halton_first_two_points() {
        let b = Bounds::uniform(2, 0.0, 1.0).unwrap();
        let c = place_centers(&b, 2, Placement::Halton, 0).unwrap();
        assert!((c[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((c[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((c[(1, 0)] - 0.25).abs() < 1e-15);
        assert!((c[(1, 1)] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_centers_rejected() {
        let b = Bounds::uniform(3, -1.0, 2.0).unwrap();
        assert!(place_centers(&b, 0, Placement::Halton, 0).is_err());
        assert!(place_centers(&b, 0, Placement::UniformGrid, 0).is_err());
    }

    #[test]
    fn grid_falls_back_to_halton_for_non_power() {
        let b = Bounds::uniform(2, 0.0, 1.0).unwrap();
        let grid = place_centers(&b, 9, Placement::UniformGrid, 0).unwrap();
        assert_eq!(grid.nrows(), 9);
        assert!(grid.iter().any(|&v| v == 0.0));
        let fallback = place_centers(&b, 7, Placement::UniformGrid, 0).unwrap();
        let halton = place_centers(&b, 7, Placement::Halton, 0).unwrap();
        assert_eq!(fallback, halton);
    }

    #[test]
    fn centers_inside_box_and_deterministic() {
        let b = Bounds::new(vec![[0.05, 0.5], [-2.0, 3.0], [10.0, 11.0]]).unwrap();
        let a = place_centers(&b, 20, Placement::Halton, 4).unwrap();
        let again = place_centers(&b, 20, Placement::Halton, 4).unwrap();
        assert_eq!(a, again);
        for i in 0..a.nrows() {
            let row: Vec<f64> = a.row(i).iter().copied().collect();
            assert!(b.contains(&row, 0.0));
        }
    }

    #[test]
    fn degenerate_bounds_rejected() {
        assert!(Bounds::new(vec![[1.0, 1.0]]).is_err());
        assert!(Bounds::new(vec![]).is_err());
    }

    #[test]
    fn lhs_one_point_per_stratum() {
        let b = Bounds::uniform(3, 0.0, 1.0).unwrap();
        let pts = latin_hypercube(&b, 10, 7);
        for j in 0..3 {
            let mut strata: Vec<usize> = pts.iter().map(|p| (p[j] * 10.0) as usize).collect();
            strata.sort();
            assert_eq!(strata, (0..10).collect::<Vec<_>>());
        }
        assert_eq!(pts, latin_hypercube(&b, 10, 7));
    }

    #[test]
    fn primes_beyond_table() {
        assert_eq!(nth_prime(32), 137);
        assert_eq!(nth_prime(33), 139);
    }
}
