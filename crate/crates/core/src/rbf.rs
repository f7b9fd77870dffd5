//! Overcomplete RBF interpolation: kernel matrices, the minimum-norm
//! particular solution and an orthonormal basis of the interpolation null
//! space. Every weight vector `w0 + N a` reproduces the training data.

use nalgebra::{DMatrix, DVector, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::sampling::{place_centers, rows_to_matrix, Bounds, Placement};

/// Relative singular-value floor below which a kernel matrix is treated as
/// rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Coordinates closer than this (max-norm, after normalization) count as
/// duplicates.
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;

/// Scarce training data: `x` is N×d, `y` has length N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub bounds: Bounds,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, bounds: Bounds) -> Result<Self> {
        let ds = Dataset { x, y, bounds };
        ds.validate()?;
        Ok(ds)
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>, bounds: Bounds) -> Result<Self> {
        let dim = bounds.dim();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape(format!("every input row must have {dim} entries")));
        }
        Self::new(rows_to_matrix(rows, dim), DVector::from_vec(y), bounds)
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        let (n, d) = self.x.shape();
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput("dataset needs N >= 1 and d >= 1".into()));
        }
        if d != self.bounds.dim() {
            return Err(Error::Shape(format!(
                "inputs have {d} columns but bounds have {} dimensions",
                self.bounds.dim()
            )));
        }
        if self.y.len() != n {
            return Err(Error::Shape(format!("{n} input rows but {} responses", self.y.len())));
        }
        if self.x.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("dataset contains non-finite values".into()));
        }
        let norm = Normalization::from_bounds(&self.bounds);
        let unit = norm.apply_matrix(&self.x);
        for i in 0..n {
            for j in 0..d {
                let u = unit[(i, j)];
                if !(-1e-12..=1.0 + 1e-12).contains(&u) {
                    return Err(Error::InvalidInput(format!(
                        "row {i} lies outside the bounds in dimension {j}"
                    )));
                }
            }
        }
        for i in 0..n {
            for k in (i + 1)..n {
                let gap = (0..d)
                    .map(|j| (unit[(i, j)] - unit[(k, j)]).abs())
                    .fold(0.0, f64::max);
                if gap <= DUPLICATE_TOLERANCE {
                    return Err(Error::InvalidInput(format!(
                        "rows {i} and {k} are duplicates"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The same data mapped into the unit cube.
    pub fn normalized(&self) -> Dataset {
        let norm = Normalization::from_bounds(&self.bounds);
        Dataset {
            x: norm.apply_matrix(&self.x),
            y: self.y.clone(),
            bounds: Bounds(vec![[0.0, 1.0]; self.dim()]),
        }
    }
}

/// Per-dimension affine map `x -> (x - offset) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn from_bounds(bounds: &Bounds) -> Self {
        Normalization {
            offset: bounds.0.iter().map(|b| b[0]).collect(),
            scale: bounds.0.iter().map(|b| b[1] - b[0]).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| (v - o) / s)
            .collect()
    }

    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.offset[j]) / self.scale[j]
        })
    }
}

/// Kernel matrix with entry `(i, j) = phi(|points_i - centers_j|)`.
///
/// Coordinates are used as given; callers normalize beforehand.
pub fn assemble_phi(
    points: &DMatrix<f64>,
    centers: &DMatrix<f64>,
    kernel: &KernelSpec,
) -> Result<DMatrix<f64>> {
    if points.ncols() != centers.ncols() {
        return Err(Error::Shape(format!(
            "points have dimension {} but centers have dimension {}",
            points.ncols(),
            centers.ncols()
        )));
    }
    let (m, k) = (points.nrows(), centers.nrows());
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (0..k)
                .map(|j| {
                    let r2: f64 = points
                        .row(i)
                        .iter()
                        .zip(centers.row(j).iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    kernel.value(r2.sqrt())
                })
                .collect()
        })
        .collect();
    Ok(DMatrix::from_fn(m, k, |i, j| rows[i][j]))
}

fn singular_ratio(sigma: &DVector<f64>, rank: usize) -> f64 {
    let largest = sigma.iter().copied().fold(0.0, f64::max);
    if largest == 0.0 || sigma.len() < rank {
        return 0.0;
    }
    sigma[rank - 1] / largest
}

/// Minimum-norm solution of the (wide) system `phi w = y` via the SVD
/// pseudoinverse, with two steps of iterative refinement.
pub fn min_norm_solution(phi: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, k) = phi.shape();
    if y.len() != n {
        return Err(Error::Shape(format!("system has {n} rows but y has {}", y.len())));
    }
    if n == 0 {
        return Ok(DVector::zeros(k));
    }
    if n > k {
        return Err(Error::RankDeficient {
            ratio: 0.0,
            tolerance: RANK_TOLERANCE,
        });
    }
    let svd = SVD::new(phi.clone(), true, true);
    let ratio = singular_ratio(&svd.singular_values, n);
    if !(ratio >= RANK_TOLERANCE) {
        return Err(Error::RankDeficient {
            ratio,
            tolerance: RANK_TOLERANCE,
        });
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v requested");
    let sigma = &svd.singular_values;
    let pinv_apply = |rhs: &DVector<f64>| -> DVector<f64> {
        let mut coeff = u.transpose() * rhs;
        for (c, s) in coeff.iter_mut().zip(sigma.iter()) {
            *c /= s;
        }
        v_t.transpose() * coeff
    };
    let mut w = pinv_apply(y);
    for _ in 0..2 {
        let residual = y - phi * &w;
        w += pinv_apply(&residual);
    }
    Ok(w)
}

/// Orthonormal basis (K×(K−N)) of the null space of a full-row-rank
/// `phi` (N×K), taken from the trailing right singular vectors. The first
/// non-negligible entry of every column is made positive.
pub fn null_basis(phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, k) = phi.shape();
    if k < n {
        return Err(Error::Shape(format!(
            "null basis needs at least as many centers ({k}) as data points ({n})"
        )));
    }
    if k == n {
        return Ok(DMatrix::zeros(k, 0));
    }
    // Pad with zero rows so the SVD returns the full right singular basis.
    let mut padded = DMatrix::zeros(k, k);
    padded.view_mut((0, 0), (n, k)).copy_from(phi);
    let svd = SVD::new(padded, false, true);
    if n > 0 {
        let ratio = singular_ratio(&svd.singular_values, n);
        if !(ratio >= RANK_TOLERANCE) {
            return Err(Error::RankDeficient {
                ratio,
                tolerance: RANK_TOLERANCE,
            });
        }
    }
    let v_t = svd.v_t.expect("v requested");
    let mut basis = v_t.rows(n, k - n).transpose();
    for mut col in basis.column_iter_mut() {
        let peak = col.amax();
        if let Some(first) = col.iter().copied().find(|v| v.abs() > 1e-12 * peak) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
    Ok(basis)
}

/// Number of centers used when none is requested: three per input
/// dimension, and always more than the number of data points.
pub fn default_center_count(dim: usize, n: usize) -> usize {
    (3 * dim).max(n + 1)
}

/// An interpolation system over a fixed set of centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfSystem {
    /// Centers in original input units, K×d.
    pub centers: DMatrix<f64>,
    pub kernel: KernelSpec,
    /// Kernel matrix at the training inputs, N×K.
    pub phi: DMatrix<f64>,
    pub w0: DVector<f64>,
    /// Orthonormal null-space basis, K×(K−N).
    pub null_basis: DMatrix<f64>,
    pub normalization: Normalization,
    /// Centers after normalization.
    unit_centers: DMatrix<f64>,
}

impl RbfSystem {
    /// Builds the system for `data` with explicitly given centers.
    pub fn with_centers(data: &Dataset, kernel: KernelSpec, centers: DMatrix<f64>) -> Result<Self> {
        kernel.validate()?;
        data.validate()?;
        if centers.ncols() != data.dim() {
            return Err(Error::Shape(format!(
                "centers have dimension {} but data have dimension {}",
                centers.ncols(),
                data.dim()
            )));
        }
        if centers.nrows() < data.len() {
            return Err(Error::InvalidInput(format!(
                "{} centers cannot interpolate {} points",
                centers.nrows(),
                data.len()
            )));
        }
        let normalization = Normalization::from_bounds(&data.bounds);
        let unit_centers = normalization.apply_matrix(&centers);
        let phi = assemble_phi(&normalization.apply_matrix(&data.x), &unit_centers, &kernel)?;
        let w0 = min_norm_solution(&phi, &data.y)?;
        let null_basis = null_basis(&phi)?;
        Ok(RbfSystem {
            centers,
            kernel,
            phi,
            w0,
            null_basis,
            normalization,
            unit_centers,
        })
    }

    /// Relaxed system with `k` centers placed in the data bounds.
    pub fn relaxed(
        data: &Dataset,
        kernel: KernelSpec,
        k: usize,
        placement: Placement,
        seed: u64,
    ) -> Result<Self> {
        if k <= data.len() {
            return Err(Error::InvalidInput(format!(
                "relaxed regime needs more centers than points ({k} <= {})",
                data.len()
            )));
        }
        let centers = place_centers(&data.bounds, k, placement, seed)?;
        Self::with_centers(data, kernel, centers)
    }

    /// Classical square system with one center per data point.
    pub fn baseline(data: &Dataset, kernel: KernelSpec) -> Result<Self> {
        Self::with_centers(data, kernel, data.x.clone())
    }

    pub fn num_centers(&self) -> usize {
        self.centers.nrows()
    }

    pub fn num_points(&self) -> usize {
        self.phi.nrows()
    }

    pub fn null_dim(&self) -> usize {
        self.null_basis.ncols()
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    /// Kernel row vectors for arbitrary points in original units (M×K).
    pub fn kernel_matrix(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::Shape(format!("evaluation points must have dimension {d}")));
        }
        let unit: Vec<Vec<f64>> = points.iter().map(|p| self.normalization.apply(p)).collect();
        assemble_phi(&rows_to_matrix(&unit, d), &self.unit_centers, &self.kernel)
    }

    /// Weights `w0 + N a`.
    pub fn weights(&self, alpha: &DVector<f64>) -> DVector<f64> {
        if self.null_dim() == 0 {
            return self.w0.clone();
        }
        &self.w0 + &self.null_basis * alpha
    }

    /// Interpolation residual `phi w - y` in max norm.
    pub fn residual_inf(&self, w: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (&self.phi * w - y).amax()
    }
}

/// Value of the expansion with weights `w` at a point `x` in original units.
pub fn evaluate_surrogate(system: &RbfSystem, w: &DVector<f64>, x: &[f64]) -> f64 {
    let u = system.normalization.apply(x);
    system
        .unit_centers
        .row_iter()
        .zip(w.iter())
        .map(|(c, wj)| {
            let r2: f64 = c.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum();
            wj * system.kernel.value(r2.sqrt())
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn demo_dataset() -> Dataset {
        let f = |x: f64| 20.0 * x * x + 20.0 * x + 1.0;
        let xs = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        Dataset::from_rows(
            &xs.iter().map(|&x| vec![x]).collect::<Vec<_>>(),
            xs.iter().map(|&x| f(x)).collect(),
            Bounds::uniform(1, 0.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn phi_single_coincident_point() {
        let p = DMatrix::from_row_slice(1, 2, &[0.3, 0.7]);
        let phi = assemble_phi(&p, &p, &KernelSpec::default()).unwrap();
        assert_eq!(phi.as_slice(), &[1.0]);
    }

    #[test]
    fn phi_one_point_two_centers() {
        let p = DMatrix::from_row_slice(1, 1, &[0.0]);
        let c = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let phi = assemble_phi(&p, &c, &KernelSpec::gaussian(1.0)).unwrap();
        assert_eq!(phi[(0, 0)], 1.0);
        assert_abs_diff_eq!(phi[(0, 1)], (-1.0f64).exp(), epsilon = 1e-16);
    }

    #[test]
    fn phi_on_itself_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = DMatrix::from_fn(6, 3, |_, _| rng.random::<f64>());
        let phi = assemble_phi(&p, &p, &KernelSpec::gaussian(1.3)).unwrap();
        assert_eq!(phi, phi.transpose());
    }

    #[test]
    fn phi_dimension_mismatch() {
        let p = DMatrix::zeros(2, 2);
        let c = DMatrix::zeros(2, 3);
        assert!(matches!(
            assemble_phi(&p, &c, &KernelSpec::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn min_norm_of_row_vector() {
        let phi = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let w = min_norm_solution(&phi, &DVector::from_vec(vec![2.0])).unwrap();
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn min_norm_square_is_inverse() {
        let phi = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, -2.0]);
        let w = min_norm_solution(&phi, &y).unwrap();
        let expected = phi.clone().try_inverse().unwrap() * &y;
        assert_abs_diff_eq!((w - expected).amax(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn min_norm_of_zero_rhs_is_zero() {
        let phi = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.3, 2.0]);
        let w = min_norm_solution(&phi, &DVector::zeros(2)).unwrap();
        assert_eq!(w.amax(), 0.0);
    }

    #[test]
    fn rank_deficiency_reports_ratio() {
        let phi = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        match min_norm_solution(&phi, &DVector::from_vec(vec![1.0, 2.0])) {
            Err(Error::RankDeficient { ratio, .. }) => assert!(ratio < 1e-12),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        assert!(null_basis(&phi).is_err());
    }

    #[test]
    fn null_basis_of_row_vector() {
        let phi = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let n = null_basis(&phi).unwrap();
        assert_eq!(n.shape(), (2, 1));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(n[(0, 0)], h, epsilon = 1e-14);
        assert_abs_diff_eq!(n[(1, 0)], -h, epsilon = 1e-14);
    }

    #[test]
    fn null_basis_of_square_is_empty() {
        let phi = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        assert_eq!(null_basis(&phi).unwrap().shape(), (2, 0));
    }

    #[test]
    fn demo_surrogate_reproduces_samples() {
        let data = demo_dataset();
        assert_abs_diff_eq!(data.y[1], 20.0 / 9.0 + 20.0 / 3.0 + 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(data.y[2], 80.0 / 9.0 + 40.0 / 3.0 + 1.0, epsilon = 1e-12);
        let sys = RbfSystem::relaxed(&data, KernelSpec::default(), 12, Placement::UniformGrid, 0)
            .unwrap();
        let alpha = DVector::from_fn(sys.null_dim(), |i, _| (i as f64 * 0.7).sin());
        for w in [sys.w0.clone(), sys.weights(&alpha)] {
            for i in 0..data.len() {
                let v = evaluate_surrogate(&sys, &w, &data.row(i));
                assert!((v - data.y[i]).abs() <= 1e-8 * 41.0, "row {i}: {v}");
            }
        }
    }

    #[test]
    fn zero_weights_give_zero() {
        let data = demo_dataset();
        let sys = RbfSystem::relaxed(&data, KernelSpec::default(), 6, Placement::UniformGrid, 0)
            .unwrap();
        let w = DVector::zeros(sys.num_centers());
        assert_eq!(evaluate_surrogate(&sys, &w, &[0.42]), 0.0);
    }

    #[test]
    fn baseline_is_square() {
        let data = demo_dataset();
        let sys = RbfSystem::baseline(&data, KernelSpec::default()).unwrap();
        assert_eq!(sys.num_centers(), 4);
        assert_eq!(sys.null_dim(), 0);
        assert!(sys.residual_inf(&sys.w0, &data.y) <= 1e-8 * 41.0);
    }

    #[test]
    fn dataset_rejects_duplicates_and_out_of_bounds() {
        let b = Bounds::uniform(1, 0.0, 1.0).unwrap();
        assert!(Dataset::from_rows(&[vec![0.2], vec![0.2]], vec![1.0, 2.0], b.clone()).is_err());
        assert!(Dataset::from_rows(&[vec![1.5]], vec![1.0], b.clone()).is_err());
        assert!(Dataset::from_rows(&[vec![0.5]], vec![1.0, 2.0], b).is_err());
    }

    #[test]
    fn relaxed_requires_more_centers() {
        let data = demo_dataset();
        assert!(RbfSystem::relaxed(&data, KernelSpec::default(), 4, Placement::Halton, 0).is_err());
    }

    fn random_system(seed: u64) -> (RbfSystem, Dataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(1..=4);
        let n = rng.random_range(1..=6);
        let bounds = Bounds::uniform(d, -1.0, 2.0).unwrap();
        let rows: Vec<Vec<f64>> = crate::sampling::uniform_random(&bounds, n, seed + 1);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let data = Dataset::from_rows(&rows, y, bounds).unwrap();
        let k = 3 * n + 1;
        let sys = RbfSystem::relaxed(&data, KernelSpec::gaussian(2.0), k, Placement::Halton, seed)
            .unwrap();
        (sys, data)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn interpolation_holds_for_any_alpha(seed in 0u64..10_000, scale in 0.0f64..50.0) {
            let (sys, data) = random_system(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let alpha = DVector::from_fn(sys.null_dim(), |_, _| scale * (rng.random::<f64>() - 0.5));
            let tol = 1e-8 * data.y.amax().max(1.0);
            prop_assert!(sys.residual_inf(&sys.weights(&alpha), &data.y) <= tol);
        }

        #[test]
        fn min_norm_is_shortest(seed in 0u64..10_000) {
            let (sys, _) = random_system(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 99);
            let alpha = DVector::from_fn(sys.null_dim(), |_, _| rng.random::<f64>() - 0.5);
            prop_assume!(alpha.norm() > 1e-6);
            prop_assert!(sys.w0.norm() <= sys.weights(&alpha).norm());
        }

        #[test]
        fn null_space_captures_every_solution(seed in 0u64..10_000) {
            // Any other solution of phi w = y differs from w0 by a null vector.
            let (sys, data) = random_system(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
            let k = sys.num_centers();
            // Build another solution: strip the row-space part of a random
            // vector using a QR factorization of phi^T, independently of the SVD.
            let v = DVector::from_fn(k, |_, _| rng.random::<f64>() - 0.5);
            let q = sys.phi.transpose().qr().q();
            let correction = &q * (q.transpose() * &v);
            let w_star = &sys.w0 + (&v - correction);
            prop_assert!(sys.residual_inf(&w_star, &data.y) <= 1e-8 * data.y.amax().max(1.0));
            let diff = &w_star - &sys.w0;
            let proj = &sys.null_basis * (sys.null_basis.transpose() * &diff);
            prop_assert!((&diff - proj).norm() <= 1e-8);
        }

        #[test]
        fn kernel_matrix_transpose_symmetry(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(4, 2, |_, _| rng.random::<f64>());
            let b = DMatrix::from_fn(3, 2, |_, _| rng.random::<f64>());
            for kernel in [KernelSpec::gaussian(0.8), KernelSpec::thin_plate()] {
                let ab = assemble_phi(&a, &b, &kernel).unwrap();
                let ba = assemble_phi(&b, &a, &kernel).unwrap();
                prop_assert_eq!(ab.transpose(), ba);
            }
        }

        #[test]
        fn normalizing_is_idempotent(seed in 0u64..1000) {
            let (_, data) = random_system(seed);
            let once = data.normalized();
            prop_assert_eq!(once.normalized(), once);
        }
    }
}
