//! Dense Cholesky factorization and the solves built on it.

use super::matrix::{axpy, dot, DenseMatrix};
use crate::error::{GpError, Result};

/// Lower-triangular factor `L` with `L Lᵀ = A + jitter·I`.
///
/// `A` must be square and symmetric to within `1e-10` relative; only the
/// lower triangle is read.
pub fn cholesky_factor(a: &DenseMatrix, jitter: f64) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(GpError::DimensionMismatch(format!(
            "cholesky of {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_symmetric(1e-10) {
        return Err(GpError::DimensionMismatch("cholesky input is not symmetric".into()));
    }
    let n = a.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = dot(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                let pivot = a[(i, i)] + jitter - s;
                if pivot <= 0.0 || !pivot.is_finite() {
                    return Err(GpError::NotPositiveDefinite { pivot: i, value: pivot });
                }
                l[(i, i)] = pivot.sqrt();
            } else {
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Solves `L Y = B` in place (`B` is overwritten with `Y`).
pub fn forward_substitute(l: &DenseMatrix, b: &mut DenseMatrix) -> Result<()> {
    check_rhs(l, b)?;
    let m = b.cols();
    for i in 0..l.rows() {
        let (done, rest) = b.as_mut_slice().split_at_mut(i * m);
        let bi = &mut rest[..m];
        for k in 0..i {
            let lik = l[(i, k)];
            if lik != 0.0 {
                axpy(-lik, &done[k * m..(k + 1) * m], bi);
            }
        }
        let d = l[(i, i)];
        bi.iter_mut().for_each(|v| *v /= d);
    }
    Ok(())
}

/// Solves `Lᵀ X = Y` in place.
pub fn backward_substitute(l: &DenseMatrix, y: &mut DenseMatrix) -> Result<()> {
    check_rhs(l, y)?;
    let m = y.cols();
    let n = l.rows();
    for i in (0..n).rev() {
        let (head, done) = y.as_mut_slice().split_at_mut((i + 1) * m);
        let yi = &mut head[i * m..];
        for k in i + 1..n {
            let lki = l[(k, i)];
            if lki != 0.0 {
                axpy(-lki, &done[(k - i - 1) * m..(k - i) * m], yi);
            }
        }
        let d = l[(i, i)];
        yi.iter_mut().for_each(|v| *v /= d);
    }
    Ok(())
}

fn check_rhs(l: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if !l.is_square() || l.rows() != b.rows() {
        return Err(GpError::DimensionMismatch(format!(
            "factor {}x{} against rhs {}x{}",
            l.rows(),
            l.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// Returns `X` with `(L Lᵀ) X = B`.
pub fn solve_posdef(l: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let mut x = b.clone();
    forward_substitute(l, &mut x)?;
    backward_substitute(l, &mut x)?;
    Ok(x)
}

/// Vector convenience wrapper around [`solve_posdef`].
pub fn solve_posdef_vec(l: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    Ok(solve_posdef(l, &DenseMatrix::column(b))?.into_vec())
}

/// `log |L Lᵀ| = 2 Σ log Lᵢᵢ`.
pub fn logdet_from_chol(l: &DenseMatrix) -> f64 {
    2.0 * l.diag().iter().map(|d| d.ln()).sum::<f64>()
}

/// Inverse of a lower-triangular matrix.
pub fn lower_triangular_inverse(l: &DenseMatrix) -> DenseMatrix {
    let n = l.rows();
    let mut inv = DenseMatrix::zeros(n, n);
    let mut acc = vec![0.0; n];
    for i in 0..n {
        acc[..=i].iter_mut().for_each(|v| *v = 0.0);
        acc[i] = 1.0;
        for k in 0..i {
            let lik = l[(i, k)];
            if lik != 0.0 {
                axpy(-lik, &inv.row(k)[..=k], &mut acc[..=k]);
            }
        }
        let d = l[(i, i)];
        let row = inv.row_mut(i);
        for j in 0..=i {
            row[j] = acc[j] / d;
        }
    }
    inv
}

/// `(L Lᵀ)⁻¹` assembled as `L⁻ᵀ L⁻¹`; symmetric by construction.
pub fn inverse_from_chol(l: &DenseMatrix) -> DenseMatrix {
    let n = l.rows();
    let linv = lower_triangular_inverse(l);
    let mut out = DenseMatrix::zeros(n, n);
    for k in 0..n {
        let row_k = linv.row(k);
        for i in 0..=k {
            let a = row_k[i];
            if a == 0.0 {
                continue;
            }
            axpy(a, &row_k[..=i], &mut out.row_mut(i)[..=i]);
        }
    }
    out.symmetrize_from_lower();
    out
}
