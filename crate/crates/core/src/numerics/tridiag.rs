//! Symmetric tridiagonal matrices and their eigen-decomposition.
//!
//! Only the first row of the eigenvector matrix is tracked: quadrature
//! rules of the form `e₁ᵀ f(T) e₁ = Σᵢ wᵢ² f(λᵢ)` need nothing else.

use super::matrix::DenseMatrix;
use crate::error::{GpError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    diag: Vec<f64>,
    offdiag: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(GpError::DimensionMismatch("empty tridiagonal".into()));
        }
        if offdiag.len() + 1 != diag.len() {
            return Err(GpError::DimensionMismatch(format!(
                "tridiagonal with {} diagonal and {} off-diagonal entries",
                diag.len(),
                offdiag.len()
            )));
        }
        if diag.iter().chain(&offdiag).any(|v| !v.is_finite()) {
            return Err(GpError::DimensionMismatch("non-finite tridiagonal entry".into()));
        }
        Ok(Self { diag, offdiag })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    /// Leading `j × j` block (`1 ≤ j ≤ dim`).
    pub fn leading(&self, j: usize) -> SymTridiagonal {
        assert!(j >= 1 && j <= self.dim(), "leading block {j} of {}", self.dim());
        SymTridiagonal {
            diag: self.diag[..j].to_vec(),
            offdiag: self.offdiag[..j - 1].to_vec(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.dim();
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.offdiag[i];
                m[(i + 1, i)] = self.offdiag[i];
            }
        }
        m
    }
}

/// Eigenvalues (ascending) and the first component of each unit eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagEigen {
    pub eigenvalues: Vec<f64>,
    pub first_components: Vec<f64>,
}

impl TridiagEigen {
    /// `e₁ᵀ f(T) e₁`.
    pub fn quadrature(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.first_components)
            .map(|(&lam, &w)| w * w * f(lam))
            .sum()
    }
}

/// Implicit-shift QL with Wilkinson shifts; at most `30·J` sweeps in total.
pub fn eig_sym_tridiag(t: &SymTridiagonal) -> Result<TridiagEigen> {
    let n = t.dim();
    let mut d = t.diag.clone();
    let mut e = t.offdiag.clone();
    e.push(0.0);
    let mut z = vec![0.0; n];
    z[0] = 1.0;

    let budget = 30 * n;
    let mut sweeps = 0usize;
    for l in 0..n {
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > budget {
                return Err(GpError::ConvergenceFailure { iterations: budget });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    Ok(TridiagEigen {
        eigenvalues: order.iter().map(|&k| d[k]).collect(),
        first_components: order.iter().map(|&k| z[k]).collect(),
    })
}
