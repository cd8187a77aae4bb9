//! Squared-exponential (RBF/ARD) kernel, noisy Gram matrices and their
//! derivatives with respect to the raw hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{GpError, Result};
use crate::numerics::DenseMatrix;

/// Kernel hyperparameters in their raw (constrained, positive) form.
///
/// Flattened order used by every gradient in the crate:
/// `[o², ℓ₁, …, ℓ_L, σ²]` where `L` is 1 (shared lengthscale) or `d` (ARD).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub outputscale_sq: f64,
    pub lengthscales: Vec<f64>,
    pub noise_sq: f64,
}

/// One coordinate of [`Hyperparams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamId {
    OutputscaleSq,
    Lengthscale(usize),
    NoiseSq,
}

impl Hyperparams {
    pub fn new(outputscale_sq: f64, lengthscales: Vec<f64>, noise_sq: f64) -> Result<Self> {
        let theta = Self { outputscale_sq, lengthscales, noise_sq };
        theta.validate()?;
        Ok(theta)
    }

    /// Shared-lengthscale convenience constructor.
    pub fn isotropic(outputscale_sq: f64, lengthscale: f64, noise_sq: f64) -> Result<Self> {
        Self::new(outputscale_sq, vec![lengthscale], noise_sq)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(GpError::NonPositiveParam { name, value: v })
            }
        };
        ok("outputscale_sq", self.outputscale_sq)?;
        ok("noise_sq", self.noise_sq)?;
        if self.lengthscales.is_empty() {
            return Err(GpError::InvalidConfig("at least one lengthscale required".into()));
        }
        for &l in &self.lengthscales {
            ok("lengthscale", l)?;
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.lengthscales.len() + 2
    }

    pub fn param_id(&self, index: usize) -> Result<ParamId> {
        let l = self.lengthscales.len();
        match index {
            0 => Ok(ParamId::OutputscaleSq),
            i if i <= l => Ok(ParamId::Lengthscale(i - 1)),
            i if i == l + 1 => Ok(ParamId::NoiseSq),
            i => Err(GpError::UnknownParam(i)),
        }
    }

    pub fn param_index(&self, id: ParamId) -> usize {
        match id {
            ParamId::OutputscaleSq => 0,
            ParamId::Lengthscale(k) => 1 + k,
            ParamId::NoiseSq => self.lengthscales.len() + 1,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.push(self.outputscale_sq);
        v.extend_from_slice(&self.lengthscales);
        v.push(self.noise_sq);
        v
    }

    /// Inverse of [`Hyperparams::to_vec`] with `values.len() - 2` lengthscales.
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() < 3 {
            return Err(GpError::DimensionMismatch(format!(
                "{} hyperparameter values, need at least 3",
                values.len()
            )));
        }
        let n = values.len();
        Self::new(values[0], values[1..n - 1].to_vec(), values[n - 1])
    }

    /// Lengthscale applied to input dimension `k`.
    #[inline]
    pub fn lengthscale_for(&self, k: usize) -> f64 {
        if self.lengthscales.len() == 1 {
            self.lengthscales[0]
        } else {
            self.lengthscales[k]
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        let l = self.lengthscales.len();
        if l == 1 || l == d {
            Ok(())
        } else {
            Err(GpError::DimensionMismatch(format!("{l} lengthscales for {d} input dimensions")))
        }
    }

    pub fn param_name(&self, index: usize) -> String {
        match self.param_id(index) {
            Ok(ParamId::OutputscaleSq) => "outputscale_sq".into(),
            Ok(ParamId::Lengthscale(_)) if self.lengthscales.len() == 1 => "lengthscale".into(),
            Ok(ParamId::Lengthscale(k)) => format!("lengthscale_{k}"),
            Ok(ParamId::NoiseSq) => "noise_sq".into(),
            Err(_) => format!("param_{index}"),
        }
    }
}

/// z-score metadata; `original = standardized · scale + mean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x_means: Vec<f64>,
    pub x_scales: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
}

impl Standardization {
    pub fn apply_x(&self, x: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| {
            (x[(i, j)] - self.x_means[j]) / self.x_scales[j]
        })
    }

    pub fn apply_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.y_mean) / self.y_scale).collect()
    }

    pub fn unapply_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.y_scale + self.y_mean).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    pub standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(x: DenseMatrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() == 0 {
            return Err(GpError::EmptyData);
        }
        if x.rows() != y.len() {
            return Err(GpError::DimensionMismatch(format!(
                "{} input rows but {} targets",
                x.rows(),
                y.len()
            )));
        }
        if x.as_slice().iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(GpError::InvalidConfig("dataset contains non-finite values".into()));
        }
        Ok(Self { x, y, standardization: None })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Z-scores every input column and the targets; constant columns keep scale 1.
    pub fn standardized(&self) -> Dataset {
        let d = self.dim();
        let mut x_means = vec![0.0; d];
        let mut x_scales = vec![1.0; d];
        for j in 0..d {
            let col = self.x.col(j);
            let (m, s) = mean_sd(&col);
            x_means[j] = m;
            x_scales[j] = if s > 0.0 { s } else { 1.0 };
        }
        let (y_mean, y_sd) = mean_sd(&self.y);
        let st = Standardization {
            x_means,
            x_scales,
            y_mean,
            y_scale: if y_sd > 0.0 { y_sd } else { 1.0 },
        };
        Dataset { x: st.apply_x(&self.x), y: st.apply_y(&self.y), standardization: Some(st) }
    }
}

/// Mean and population standard deviation.
fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn scaled_sq_dist(xi: &[f64], xj: &[f64], theta: &Hyperparams) -> f64 {
    xi.iter()
        .zip(xj)
        .enumerate()
        .map(|(k, (a, b))| {
            let r = (a - b) / theta.lengthscale_for(k);
            r * r
        })
        .sum()
}

/// `k(x, x') = o² exp(-½ Σₖ (xₖ - x'ₖ)² / ℓₖ²)`.
pub fn rbf(xi: &[f64], xj: &[f64], theta: &Hyperparams) -> f64 {
    theta.outputscale_sq * (-0.5 * scaled_sq_dist(xi, xj, theta)).exp()
}

/// Gram matrix, optionally with `σ²` added to the diagonal.
pub fn kernel_matrix(x: &DenseMatrix, theta: &Hyperparams, include_noise: bool) -> Result<DenseMatrix> {
    theta.check_dim(x.cols())?;
    let n = x.rows();
    let mut k = DenseMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = theta.outputscale_sq + if include_noise { theta.noise_sq } else { 0.0 };
        for j in 0..i {
            k[(i, j)] = rbf(x.row(i), x.row(j), theta);
        }
    }
    k.symmetrize_from_lower();
    Ok(k)
}

/// `∂K̂/∂param` with respect to the raw parameter.
pub fn kernel_grad(x: &DenseMatrix, theta: &Hyperparams, param: ParamId) -> Result<DenseMatrix> {
    theta.check_dim(x.cols())?;
    let n = x.rows();
    match param {
        ParamId::NoiseSq => Ok(DenseMatrix::identity(n)),
        ParamId::OutputscaleSq => {
            let mut k = kernel_matrix(x, theta, false)?;
            k.scale(1.0 / theta.outputscale_sq);
            Ok(k)
        }
        ParamId::Lengthscale(idx) => {
            if idx >= theta.lengthscales.len() {
                return Err(GpError::UnknownParam(theta.param_index(param)));
            }
            let ell = theta.lengthscales[idx];
            let shared = theta.lengthscales.len() == 1;
            let mut g = DenseMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..i {
                    let (xi, xj) = (x.row(i), x.row(j));
                    let dist = if shared {
                        xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                    } else {
                        (xi[idx] - xj[idx]).powi(2)
                    };
                    g[(i, j)] = rbf(xi, xj, theta) * dist / ell.powi(3);
                }
            }
            g.symmetrize_from_lower();
            Ok(g)
        }
    }
}

/// Noisy Gram matrix together with every derivative matrix, in
/// [`Hyperparams::to_vec`] order.
pub fn kernel_with_grads(x: &DenseMatrix, theta: &Hyperparams) -> Result<(DenseMatrix, Vec<DenseMatrix>)> {
    let k = kernel_matrix(x, theta, true)?;
    let grads = (0..theta.num_params())
        .map(|p| kernel_grad(x, theta, theta.param_id(p)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((k, grads))
}

/// Noisy Gram matrix, its derivative matrices and the targets, assembled
/// once and shared by every estimator evaluated at the same `θ`.
#[derive(Debug, Clone)]
pub struct KernelSystem {
    pub k: DenseMatrix,
    pub grads: Vec<DenseMatrix>,
    pub y: Vec<f64>,
    pub noise_sq: f64,
}

impl KernelSystem {
    pub fn new(data: &Dataset, theta: &Hyperparams) -> Result<Self> {
        let (k, grads) = kernel_with_grads(&data.x, theta)?;
        Ok(Self { k, grads, y: data.y.clone(), noise_sq: theta.noise_sq })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn num_params(&self) -> usize {
        self.grads.len()
    }

    pub fn preconditioner(
        &self,
        kind: crate::krylov::PreconditionerKind,
    ) -> Result<crate::krylov::Preconditioner> {
        let mut noiseless = self.k.clone();
        noiseless.add_diag(-self.noise_sq);
        crate::krylov::Preconditioner::build(kind, &noiseless, self.noise_sq)
    }
}

/// `M × N` noiseless cross-covariance between `x_star` and `x`.
pub fn cross_kernel(x_star: &DenseMatrix, x: &DenseMatrix, theta: &Hyperparams) -> Result<DenseMatrix> {
    if x_star.cols() != x.cols() {
        return Err(GpError::DimensionMismatch(format!(
            "test inputs have {} columns, training inputs {}",
            x_star.cols(),
            x.cols()
        )));
    }
    theta.check_dim(x.cols())?;
    Ok(DenseMatrix::from_fn(x_star.rows(), x.rows(), |i, j| {
        rbf(x_star.row(i), x.row(j), theta)
    }))
}
