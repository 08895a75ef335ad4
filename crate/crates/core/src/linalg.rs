//! Dense and matrix-free symmetric eigensolvers and subspace comparisons.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Problems up to this size are solved by a dense eigendecomposition.
pub const DENSE_EIGEN_LIMIT: usize = 400;

/// Symmetric linear operator on `R^n`, applied to the columns of a block.
pub trait SymOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64>;

    fn to_dense(&self) -> Array2<f64> {
        self.apply(Array2::eye(self.dim()).view())
    }
}

impl SymOperator for Array2<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.dot(&x)
    }

    fn to_dense(&self) -> Array2<f64> {
        self.clone()
    }
}

fn to_nalgebra(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_nalgebra(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues ascending.
pub fn eigh(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigendecomposition of a non-finite matrix".into()));
    }
    let eig = to_nalgebra(a.view()).symmetric_eigen();
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = from_nalgebra(&eig.eigenvectors).select(Axis(1), &order);
    Ok((values, vectors))
}

/// The `k` largest eigenpairs of a dense symmetric matrix, eigenvalues in
/// descending order and eigenvectors as columns.
pub fn top_eigen_dense(a: &Array2<f64>, k: usize) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if k == 0 || k > n {
        return Err(Error::arg(format!("requested {k} eigenpairs of a {n}x{n} matrix")));
    }
    let sym = (a + &a.t()) * 0.5;
    let (vals, vecs) = eigh(&sym)?;
    let order: Vec<usize> = (0..n).rev().take(k).collect();
    let values = order.iter().map(|&i| vals[i]).collect();
    let vectors = vecs.select(Axis(1), &order);
    Ok((values, vectors))
}

/// The `k` largest eigenpairs of a symmetric operator: dense below
/// [`DENSE_EIGEN_LIMIT`], block Lanczos above.
pub fn top_eigen(op: &dyn SymOperator, k: usize, seed: u64) -> Result<(Array1<f64>, Array2<f64>)> {
    if op.dim() <= DENSE_EIGEN_LIMIT {
        top_eigen_dense(&op.to_dense(), k)
    } else {
        top_eigen_lanczos(op, k, 1e-9, seed)
    }
}

/// Block Lanczos with full reorthogonalization and Rayleigh-Ritz
/// extraction. The block has `k + 2` columns, so eigenvalues of multiplicity
/// up to that size are resolved. Stops once the `k` leading Ritz pairs have
/// residuals `|A v - theta v|` below `tol * max |theta|`.
pub fn top_eigen_lanczos(
    op: &dyn SymOperator,
    k: usize,
    tol: f64,
    seed: u64,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::arg(format!("requested {k} eigenpairs of a {n}x{n} operator")));
    }
    let width = (k + 2).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut block = Array2::<f64>::from_shape_fn((n, width), |_| StandardNormal.sample(&mut rng));
    let mut basis: Vec<Array1<f64>> = Vec::new();
    let mut images: Vec<Array1<f64>> = Vec::new();
    loop {
        let mut fresh = Vec::new();
        for col in block.columns() {
            let mut v = col.to_owned();
            let original = v.dot(&v).sqrt();
            for _ in 0..2 {
                for q in basis.iter().chain(&fresh) {
                    let c = q.dot(&v);
                    v.scaled_add(-c, q);
                }
            }
            let norm = v.dot(&v).sqrt();
            if norm > 1e-10 * original.max(f64::MIN_POSITIVE) {
                fresh.push(v / norm);
            }
        }
        let exhausted = fresh.is_empty();
        if !exhausted {
            let mut q = Array2::zeros((n, fresh.len()));
            for (j, v) in fresh.iter().enumerate() {
                q.column_mut(j).assign(v);
            }
            block = op.apply(q.view());
            images.extend(block.columns().into_iter().map(|c| c.to_owned()));
            basis.extend(fresh);
        }
        let m = basis.len();
        if m < k {
            if exhausted {
                return Err(Error::Numerical("Krylov space smaller than the requested rank".into()));
            }
            continue;
        }
        if !exhausted && m < n && m < 3 * k {
            continue;
        }
        let mut q = Array2::zeros((n, m));
        let mut aq = Array2::zeros((n, m));
        for j in 0..m {
            q.column_mut(j).assign(&basis[j]);
            aq.column_mut(j).assign(&images[j]);
        }
        let t = q.t().dot(&aq);
        let (values, y) = top_eigen_dense(&t, k)?;
        let vectors = q.dot(&y);
        let residual = aq.dot(&y) - &vectors * &values;
        let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        let converged = residual.columns().into_iter().all(|r| r.dot(&r).sqrt() <= tol * scale);
        if converged || exhausted || m >= n {
            return Ok((values, vectors));
        }
    }
}

/// Orthonormal basis of the column span of `a` (`n x k`, `k <= n`).
pub fn orthonormal_columns(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let q = to_nalgebra(a).qr().q();
    Ok(from_nalgebra(&q).slice(s![.., ..a.ncols()]).to_owned())
}

/// Largest principal angle between the column spans of `a` and `b`, computed
/// through the sine route so that tiny angles keep full precision.
pub fn max_principal_angle(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::arg("subspaces live in different ambient dimensions"));
    }
    // project the smaller span onto the larger one
    if b.ncols() > a.ncols() {
        return max_principal_angle(b, a);
    }
    let qa = orthonormal_columns(a)?;
    let qb = orthonormal_columns(b)?;
    let residual = &qb - &qa.dot(&qa.t().dot(&qb));
    let sv = to_nalgebra(residual.view()).singular_values();
    let largest = sv.iter().fold(0.0f64, |m, &v| m.max(v));
    Ok(largest.min(1.0).asin())
}

/// Smallest accepted ratio between the extreme eigenvalues in [`spd_inverse`].
pub const SPD_CONDITION_FLOOR: f64 = 1e-13;

/// Inverse of a symmetric positive definite matrix, through its
/// eigendecomposition. Fails when the matrix is numerically singular.
pub fn spd_inverse(a: &Array2<f64>) -> Result<Array2<f64>> {
    let (values, vectors) = eigh(a)?;
    let largest = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let smallest = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smallest > SPD_CONDITION_FLOOR * largest) {
        return Err(Error::Numerical(format!(
            "matrix is not positive definite (eigenvalues in [{smallest:.3e}, {largest:.3e}]); \
             increase the ridge parameter eps"
        )));
    }
    let scaled = &vectors * &values.mapv(f64::recip);
    Ok(scaled.dot(&vectors.t()))
}

/// `M^T M` for an `n x d` matrix.
pub fn gram(x: ArrayView2<f64>) -> Array2<f64> {
    x.t().dot(&x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_sym(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((n, n), |_| StandardNormal.sample(&mut rng));
        &a + &a.t()
    }

    #[test]
    fn dense_eigen_descending() {
        let a = array![[2.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, -1.0]];
        let (vals, vecs) = top_eigen_dense(&a, 2).unwrap();
        assert_eq!(vals.to_vec(), vec![5.0, 2.0]);
        assert!((vecs[[1, 0]].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lanczos_matches_dense() {
        let a = random_sym(120, 4);
        let (dv, dvec) = top_eigen_dense(&a, 4).unwrap();
        let (lv, lvec) = top_eigen_lanczos(&a, 4, 1e-10, 1).unwrap();
        for (x, y) in dv.iter().zip(lv.iter()) {
            assert!((x - y).abs() < 1e-8 * x.abs().max(1.0), "{x} vs {y}");
        }
        assert!(max_principal_angle(dvec.view(), lvec.view()).unwrap() < 1e-6);
    }

    #[test]
    fn lanczos_resolves_repeated_eigenvalues() {
        // three disjoint blocks share the leading eigenvalue
        let n = 450;
        let a = Array2::<f64>::from_shape_fn((n, n), |(i, j)| {
            if i / 150 == j / 150 { 1.0 / 150.0 } else { 0.0 }
        }) + Array2::from_diag(&Array1::from_shape_fn(n, |i| 1e-3 * (i % 7) as f64));
        let (dv, dvec) = top_eigen_dense(&a, 3).unwrap();
        let (lv, lvec) = top_eigen_lanczos(&a, 3, 1e-10, 2).unwrap();
        for (x, y) in dv.iter().zip(lv.iter()) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
        assert!(max_principal_angle(dvec.view(), lvec.view()).unwrap() < 1e-6);
    }

    #[test]
    fn principal_angle_examples() {
        let e1 = array![[1.0], [0.0], [0.0]];
        let e2 = array![[0.0], [1.0], [0.0]];
        let mixed = array![[1.0], [1.0], [0.0]];
        assert!(max_principal_angle(e1.view(), e1.view()).unwrap() < 1e-15);
        assert!((max_principal_angle(e1.view(), e2.view()).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((max_principal_angle(e1.view(), mixed.view()).unwrap() - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        let tiny = array![[1.0], [1e-9], [0.0]];
        let angle = max_principal_angle(e1.view(), tiny.view()).unwrap();
        assert!((angle - 1e-9).abs() < 1e-15, "{angle}");
    }

    #[test]
    fn spd_inverse_reports_singular_input() {
        let singular = array![[1.0, 1.0], [1.0, 1.0]];
        let err = spd_inverse(&singular).unwrap_err().to_string();
        assert!(err.contains("eps"), "{err}");
        let inv = spd_inverse(&array![[4.0, 0.0], [0.0, 2.0]]).unwrap();
        assert!((&inv - &array![[0.25, 0.0], [0.0, 0.5]]).iter().all(|v| v.abs() < 1e-15));
    }
}
