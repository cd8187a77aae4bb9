//! Cholesky-based ground truth: log marginal likelihood, its gradient and
//! the predictive posterior.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernels::{cross_kernel, kernel_matrix, kernel_with_grads, Dataset, Hyperparams};
use crate::numerics::{
    cholesky_factor, dot, forward_substitute, inverse_from_chol, logdet_from_chol,
    solve_posdef_vec, DenseMatrix,
};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// The two data-dependent terms of the negative log marginal likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MllTerms {
    /// `log |K̂|`
    pub logdet: f64,
    /// `yᵀ K̂⁻¹ y`
    pub invquad: f64,
    /// `½ (logdet + invquad + N log 2π)`
    pub total_nll: f64,
}

impl MllTerms {
    pub fn new(logdet: f64, invquad: f64, n: usize) -> Self {
        Self { logdet, invquad, total_nll: total_nll(logdet, invquad, n) }
    }
}

pub fn total_nll(logdet: f64, invquad: f64, n: usize) -> f64 {
    0.5 * (logdet + invquad + n as f64 * LN_2PI)
}

pub fn mll_exact(data: &Dataset, theta: &Hyperparams) -> Result<MllTerms> {
    let k = kernel_matrix(&data.x, theta, true)?;
    mll_from_kernel(&k, &data.y)
}

/// Exact terms for an already-assembled SPD matrix.
pub fn mll_from_kernel(k: &DenseMatrix, y: &[f64]) -> Result<MllTerms> {
    let l = cholesky_factor(k, 0.0)?;
    terms_from_factor(&l, y)
}

/// Gradient of `total_nll` with respect to the raw hyperparameters,
/// `½ [tr(K̂⁻¹ ∂K̂) − αᵀ ∂K̂ α]` with `α = K̂⁻¹ y`.
pub fn grad_exact(data: &Dataset, theta: &Hyperparams) -> Result<Vec<f64>> {
    let (k, grads) = kernel_with_grads(&data.x, theta)?;
    grad_from_kernel(&k, &grads, &data.y)
}

pub fn grad_from_kernel(k: &DenseMatrix, grads: &[DenseMatrix], y: &[f64]) -> Result<Vec<f64>> {
    let l = cholesky_factor(k, 0.0)?;
    Ok(grad_from_factor(&l, grads, y))
}

fn grad_from_factor(l: &DenseMatrix, grads: &[DenseMatrix], y: &[f64]) -> Vec<f64> {
    let kinv = inverse_from_chol(l);
    let alpha = kinv.matvec(y);
    grads
        .iter()
        .map(|dk| 0.5 * (kinv.frobenius_dot(dk) - dk.bilinear(&alpha, &alpha)))
        .collect()
}

fn terms_from_factor(l: &DenseMatrix, y: &[f64]) -> Result<MllTerms> {
    let mut w = DenseMatrix::column(y);
    forward_substitute(l, &mut w)?;
    let invquad = dot(w.as_slice(), w.as_slice());
    Ok(MllTerms::new(logdet_from_chol(l), invquad, y.len()))
}

/// Exact terms and gradient from one factorization.
pub fn mll_and_grad_exact(data: &Dataset, theta: &Hyperparams) -> Result<(MllTerms, Vec<f64>)> {
    let (k, grads) = kernel_with_grads(&data.x, theta)?;
    let l = cholesky_factor(&k, 0.0)?;
    Ok((terms_from_factor(&l, &data.y)?, grad_from_factor(&l, &grads, &data.y)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mean: Vec<f64>,
    /// Predictive variance of a noisy observation (includes `σ²`).
    pub variance: Vec<f64>,
}

pub fn posterior_predict(data: &Dataset, theta: &Hyperparams, x_star: &DenseMatrix) -> Result<Posterior> {
    let k = kernel_matrix(&data.x, theta, true)?;
    let l = cholesky_factor(&k, 0.0)?;
    let alpha = solve_posdef_vec(&l, &data.y)?;
    let ks = cross_kernel(x_star, &data.x, theta)?;
    let mean = ks.matvec(&alpha);
    // v = L⁻¹ K*ᵀ, variance = k** − ‖v_col‖² + σ²
    let mut v = ks.transpose();
    forward_substitute(&l, &mut v)?;
    let m = x_star.rows();
    let mut reduction = vec![0.0; m];
    for i in 0..v.rows() {
        for (r, vij) in reduction.iter_mut().zip(v.row(i)) {
            *r += vij * vij;
        }
    }
    let prior = theta.outputscale_sq;
    let variance = reduction
        .iter()
        .map(|r| (prior - r).max(0.0) + theta.noise_sq)
        .collect();
    Ok(Posterior { mean, variance })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_case() {
        let data = Dataset::new(DenseMatrix::zeros(1, 1), vec![2.0]).unwrap();
        let theta = Hyperparams::isotropic(1.0, 1.0, 1.0).unwrap();
        let t = mll_exact(&data, &theta).unwrap();
        assert!((t.logdet - 2f64.ln()).abs() < 1e-15);
        assert!((t.invquad - 2.0).abs() < 1e-15);
        let expected = 0.5 * (2f64.ln() + 2.0 + (2.0 * std::f64::consts::PI).ln());
        assert!((t.total_nll - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_targets_zero_invquad() {
        let x = DenseMatrix::from_fn(5, 1, |i, _| i as f64 * 0.3);
        let data = Dataset::new(x, vec![0.0; 5]).unwrap();
        let theta = Hyperparams::isotropic(1.0, 0.5, 0.1).unwrap();
        assert_eq!(mll_exact(&data, &theta).unwrap().invquad, 0.0);
    }

    #[test]
    fn noise_gradient_positive_at_zero_targets() {
        let x = DenseMatrix::from_fn(6, 1, |i, _| i as f64 * 0.1);
        let data = Dataset::new(x, vec![0.0; 6]).unwrap();
        let theta = Hyperparams::isotropic(5.0, 1.0, 0.2).unwrap();
        let g = grad_exact(&data, &theta).unwrap();
        assert!(g[2] > 0.0);
    }

    #[test]
    fn far_prediction_recovers_prior() {
        let x = DenseMatrix::from_fn(6, 1, |i, _| i as f64 * 0.1);
        let data = Dataset::new(x, vec![0.3, -0.2, 0.5, 0.1, 0.0, 0.4]).unwrap();
        let theta = Hyperparams::isotropic(2.0, 0.2, 0.05).unwrap();
        let xs = DenseMatrix::from_rows(&[vec![1e3]]).unwrap();
        let p = posterior_predict(&data, &theta, &xs).unwrap();
        assert!(p.mean[0].abs() < 1e-10);
        assert!((p.variance[0] - 2.05).abs() < 1e-10);
    }

    #[test]
    fn interpolates_at_small_noise() {
        let x = DenseMatrix::from_fn(5, 1, |i, _| i as f64 * 0.25);
        let y = vec![0.1, 0.7, -0.3, 0.2, 0.9];
        let data = Dataset::new(x.clone(), y.clone()).unwrap();
        let theta = Hyperparams::isotropic(1.0, 0.3, 1e-8).unwrap();
        let p = posterior_predict(&data, &theta, &x).unwrap();
        for (m, yi) in p.mean.iter().zip(&y) {
            assert!((m - yi).abs() < 1e-3);
        }
    }
}
