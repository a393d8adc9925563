//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{real, to_f64, Scalar};

/// Force exact symmetry by averaging with the transpose.
pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let half = real::<T>(0.5);
    (m + m.transpose()) * half
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> DVector<T> {
    let mut ev = symmetrize(m).symmetric_eigen().eigenvalues;
    ev.as_mut_slice().sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Minimum eigenvalue of a symmetric matrix.
pub fn min_eig<T: Scalar>(m: &DMatrix<T>) -> T {
    sym_eigenvalues(m)[0]
}

/// Maximum eigenvalue of a symmetric matrix.
pub fn max_eig<T: Scalar>(m: &DMatrix<T>) -> T {
    let ev = sym_eigenvalues(m);
    ev[ev.len() - 1]
}

/// Symmetric PSD square root via eigendecomposition.
///
/// Eigenvalues in `[-clamp_tol, 0)` are clamped to zero; anything below
/// `-clamp_tol` is rejected as a genuinely indefinite matrix.
pub fn psd_sqrt<T: Scalar>(m: &DMatrix<T>, clamp_tol: T, what: &str) -> Result<DMatrix<T>> {
    let eig = symmetrize(m).symmetric_eigen();
    let mut vals = eig.eigenvalues;
    for v in vals.iter_mut() {
        if *v < -clamp_tol {
            return Err(Error::InvalidCovariance {
                what: what.into(),
                min_eig: to_f64(*v),
            });
        }
        *v = v.max(T::zero()).sqrt();
    }
    let q = eig.eigenvectors;
    Ok(&q * DMatrix::from_diagonal(&vals) * q.transpose())
}

/// Project a nearly-PSD symmetric matrix onto the PSD cone.
///
/// Same tolerance contract as [`psd_sqrt`]: small negative eigenvalues are
/// zeroed, larger violations are errors.
pub fn clamp_psd<T: Scalar>(m: &DMatrix<T>, clamp_tol: T, what: &str) -> Result<DMatrix<T>> {
    let eig = symmetrize(m).symmetric_eigen();
    let mut vals = eig.eigenvalues;
    let mut dirty = false;
    for v in vals.iter_mut() {
        if *v < -clamp_tol {
            return Err(Error::InvalidCovariance {
                what: what.into(),
                min_eig: to_f64(*v),
            });
        }
        if *v < T::zero() {
            *v = T::zero();
            dirty = true;
        }
    }
    if !dirty {
        return Ok(symmetrize(m));
    }
    let q = eig.eigenvectors;
    Ok(&q * DMatrix::from_diagonal(&vals) * q.transpose())
}

/// Block diagonal of two matrices.
pub fn blkdiag<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

/// Column-stacking vectorization.
pub fn vec_mat<T: Scalar>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_mat`]: reshape a vector into an `rows x cols` matrix.
pub fn unvec<T: Scalar>(v: &DVector<T>, rows: usize, cols: usize) -> Result<DMatrix<T>> {
    if v.len() != rows * cols {
        return Err(Error::dim(format!(
            "cannot reshape length-{} vector into {}x{}",
            v.len(),
            rows,
            cols
        )));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Solve `X W = B` for `X`, i.e. `X = B W^{-1}`, with `W` symmetric positive
/// definite.
pub fn solve_spd_right<T: Scalar>(w: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    let chol = w
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NumericalTrouble("SPD solve: matrix not positive definite".into()))?;
    // X = B W^{-1}  <=>  X' = W^{-1} B'
    Ok(chol.solve(&b.transpose()).transpose())
}
