//! Random Fourier features for the RBF kernel and the low-rank likelihood
//! path (Woodbury identity plus matrix determinant lemma).
//!
//! Frequencies are kept as standard-normal base draws `b` and rescaled at
//! use time, `ωᵢₖ = bᵢₖ / ℓₖ`, so the features stay differentiable in the
//! lengthscale with the randomness frozen. Feature columns are interleaved
//! `[cos ω₁ᵀx, sin ω₁ᵀx, cos ω₂ᵀx, …]`, which makes every prefix of `m`
//! frequencies a valid `m`-frequency draw.

use crate::error::{GpError, Result};
use crate::exact_gp::MllTerms;
use crate::kernels::{Dataset, Hyperparams, ParamId};
use crate::numerics::{
    backward_substitute, cholesky_factor, dot, forward_substitute, inverse_from_chol,
    logdet_from_chol, standard_normal_vec, stream_rng, DenseMatrix,
};

const FEATURE_STREAM: u64 = 0xF0_0F;

#[derive(Debug, Clone, PartialEq)]
pub struct RffFeatures {
    /// `(J/2) × d` standard-normal base draws.
    pub base: DenseMatrix,
    pub seed: u64,
    pub theta_at_draw: Hyperparams,
}

impl RffFeatures {
    /// Number of frequencies (feature pairs) available.
    pub fn num_pairs(&self) -> usize {
        self.base.rows()
    }

    /// Number of basis functions `J = 2 · pairs`.
    pub fn num_basis(&self) -> usize {
        2 * self.num_pairs()
    }

    pub fn omega(&self) -> DenseMatrix {
        self.omega_for(&self.theta_at_draw)
    }

    /// Frequencies under `theta`'s lengthscales, with the base draws frozen.
    pub fn omega_for(&self, theta: &Hyperparams) -> DenseMatrix {
        DenseMatrix::from_fn(self.base.rows(), self.base.cols(), |i, k| {
            self.base[(i, k)] / theta.lengthscale_for(k)
        })
    }
}

/// Draws `num_basis / 2` frequencies from the RBF spectral density.
pub fn sample_features(theta: &Hyperparams, d: usize, num_basis: usize, seed: u64) -> Result<RffFeatures> {
    if num_basis < 2 || num_basis % 2 != 0 {
        return Err(GpError::OddFeatureCount(num_basis));
    }
    theta.check_dim(d)?;
    let pairs = num_basis / 2;
    let mut rng = stream_rng(seed, FEATURE_STREAM);
    let base = DenseMatrix::from_vec(pairs, d, standard_normal_vec(&mut rng, pairs * d))?;
    Ok(RffFeatures { base, seed, theta_at_draw: theta.clone() })
}

/// Unscaled features `[cos, sin]` of the first `pairs` frequencies plus the
/// scale `√(o²/pairs)` that turns them into `Φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub phi: DenseMatrix,
    pub scale: f64,
}

impl FeatureMatrix {
    /// `Φ = scale · phi`, so that `Φ Φᵀ ≈ K`.
    pub fn scaled(&self) -> DenseMatrix {
        self.phi.scaled(self.scale)
    }

    pub fn num_basis(&self) -> usize {
        self.phi.cols()
    }
}

pub fn feature_map(x: &DenseMatrix, features: &RffFeatures, pairs: usize) -> Result<FeatureMatrix> {
    feature_map_with(x, features, pairs, &features.theta_at_draw)
}

/// Feature map under `theta` with the frozen base draws.
pub fn feature_map_with(
    x: &DenseMatrix,
    features: &RffFeatures,
    pairs: usize,
    theta: &Hyperparams,
) -> Result<FeatureMatrix> {
    if pairs == 0 || pairs > features.num_pairs() {
        return Err(GpError::PrefixOutOfRange { requested: pairs, available: features.num_pairs() });
    }
    if x.cols() != features.base.cols() {
        return Err(GpError::DimensionMismatch(format!(
            "inputs have {} columns, features were drawn for {}",
            x.cols(),
            features.base.cols()
        )));
    }
    let omega = features.omega_for(theta);
    let mut phi = DenseMatrix::zeros(x.rows(), 2 * pairs);
    for n in 0..x.rows() {
        let xn = x.row(n);
        let row = phi.row_mut(n);
        for i in 0..pairs {
            let (s, c) = dot(omega.row(i), xn).sin_cos();
            row[2 * i] = c;
            row[2 * i + 1] = s;
        }
    }
    Ok(FeatureMatrix { phi, scale: (theta.outputscale_sq / pairs as f64).sqrt() })
}

/// Log-determinant and inverse quadratic of `K̃ = Φ Φᵀ + σ² I` in
/// `O(N J² + J³)`:
///
/// ```text
/// A        = ΦᵀΦ + σ² I_J
/// log|K̃|  = log|A| + (N − J) log σ²
/// yᵀK̃⁻¹y = (yᵀy − (Φᵀy)ᵀ A⁻¹ (Φᵀy)) / σ²
/// ```
pub fn mll_rff(features: &FeatureMatrix, y: &[f64], noise_sq: f64) -> Result<MllTerms> {
    if !(noise_sq > 0.0) {
        return Err(GpError::NonPositiveParam { name: "noise_sq", value: noise_sq });
    }
    let phi = features.scaled();
    if phi.rows() != y.len() {
        return Err(GpError::DimensionMismatch("feature rows vs targets".into()));
    }
    let (n, j) = (phi.rows(), phi.cols());
    let la = inner_factor(&phi, noise_sq)?;
    let mut w = DenseMatrix::column(&phi.tr_matvec(y));
    forward_substitute(&la, &mut w)?;
    let invquad = (dot(y, y) - dot(w.as_slice(), w.as_slice())) / noise_sq;
    let logdet = logdet_from_chol(&la) + (n as f64 - j as f64) * noise_sq.ln();
    Ok(MllTerms::new(logdet, invquad, n))
}

fn inner_factor(phi: &DenseMatrix, noise_sq: f64) -> Result<DenseMatrix> {
    let mut a = phi.gram();
    a.add_diag(noise_sq);
    cholesky_factor(&a, 0.0).map_err(|e| match e {
        GpError::NotPositiveDefinite { pivot, value } => {
            GpError::InnerNotPositiveDefinite { pivot, value }
        }
        other => other,
    })
}

/// RFF objective terms together with their gradient in raw `θ`, with the
/// base draws frozen. Uses the `J × J` Woodbury route when `J ≤ N` and the
/// `N × N` dense route otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct RffEvaluation {
    pub terms: MllTerms,
    /// `∂ logdet / ∂θ`
    pub logdet_grad: Vec<f64>,
    /// `∂ invquad / ∂θ`
    pub invquad_grad: Vec<f64>,
}

impl RffEvaluation {
    /// Gradient of `total_nll = ½(logdet + invquad + N log 2π)`.
    pub fn nll_grad(&self) -> Vec<f64> {
        self.logdet_grad
            .iter()
            .zip(&self.invquad_grad)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }
}

pub fn rff_evaluate(
    x: &DenseMatrix,
    y: &[f64],
    theta: &Hyperparams,
    features: &RffFeatures,
    pairs: usize,
) -> Result<RffEvaluation> {
    theta.validate()?;
    let fm = feature_map_with(x, features, pairs, theta)?;
    let phi = fm.scaled();
    let (n, jb) = (phi.rows(), phi.cols());
    let noise = theta.noise_sq;

    // W = K̃⁻¹ Φ, α = K̃⁻¹ y, tr(K̃⁻¹), logdet, invquad
    let (w, alpha, trace_kinv, logdet) = if jb <= n {
        let la = inner_factor(&phi, noise)?;
        // A⁻¹ Φᵀ, then W = Φ A⁻¹ = (A⁻¹ Φᵀ)ᵀ
        let mut ainv_phit = phi.transpose();
        forward_substitute(&la, &mut ainv_phit)?;
        backward_substitute(&la, &mut ainv_phit)?;
        let w = ainv_phit.transpose();
        let proj = w.tr_matvec(y); // A⁻¹ Φᵀ y
        let mut alpha = y.to_vec();
        let corr = phi.matvec(&proj);
        for (a, c) in alpha.iter_mut().zip(&corr) {
            *a = (*a - c) / noise;
        }
        let trace_kinv = (n as f64 - w.frobenius_dot(&phi)) / noise;
        let logdet = logdet_from_chol(&la) + (n as f64 - jb as f64) * noise.ln();
        (w, alpha, trace_kinv, logdet)
    } else {
        let mut kt = phi.outer_gram();
        kt.add_diag(noise);
        let l = cholesky_factor(&kt, 0.0)?;
        let kinv = inverse_from_chol(&l);
        let w = kinv.matmul(&phi)?;
        let alpha = kinv.matvec(y);
        (w, alpha, kinv.trace(), logdet_from_chol(&l))
    };
    let invquad = dot(y, &alpha);
    let phi_t_alpha = phi.tr_matvec(&alpha);

    let p = theta.num_params();
    let mut logdet_grad = vec![0.0; p];
    let mut invquad_grad = vec![0.0; p];
    for idx in 0..p {
        match theta.param_id(idx)? {
            ParamId::NoiseSq => {
                logdet_grad[idx] = trace_kinv;
                invquad_grad[idx] = -dot(&alpha, &alpha);
            }
            id => {
                let dphi = feature_derivative(x, features, pairs, theta, &phi, id);
                logdet_grad[idx] = 2.0 * w.frobenius_dot(&dphi);
                invquad_grad[idx] = -2.0 * dot(&phi_t_alpha, &dphi.tr_matvec(&alpha));
            }
        }
    }
    Ok(RffEvaluation { terms: MllTerms::new(logdet, invquad, n), logdet_grad, invquad_grad })
}

/// `∂Φ/∂param` for the outputscale or a lengthscale.
fn feature_derivative(
    x: &DenseMatrix,
    features: &RffFeatures,
    pairs: usize,
    theta: &Hyperparams,
    phi: &DenseMatrix,
    id: ParamId,
) -> DenseMatrix {
    match id {
        ParamId::OutputscaleSq => phi.scaled(0.5 / theta.outputscale_sq),
        ParamId::Lengthscale(k) => {
            let omega = features.omega_for(theta);
            let shared = theta.lengthscales.len() == 1;
            let ell = theta.lengthscales[k];
            let mut d = DenseMatrix::zeros(phi.rows(), phi.cols());
            for n in 0..x.rows() {
                let xn = x.row(n);
                for i in 0..pairs {
                    // ∂(ωᵢᵀx)/∂ℓ
                    let da = if shared {
                        -dot(omega.row(i), xn) / ell
                    } else {
                        -omega[(i, k)] * xn[k] / ell
                    };
                    let c = phi[(n, 2 * i)];
                    let s = phi[(n, 2 * i + 1)];
                    d[(n, 2 * i)] = -s * da;
                    d[(n, 2 * i + 1)] = c * da;
                }
            }
            d
        }
        ParamId::NoiseSq => unreachable!("noise does not enter Φ"),
    }
}

/// Gradient of the RFF `total_nll` for `pairs` frozen frequencies.
pub fn grad_rff(data: &Dataset, theta: &Hyperparams, features: &RffFeatures, pairs: usize) -> Result<Vec<f64>> {
    Ok(rff_evaluate(&data.x, &data.y, theta, features, pairs)?.nll_grad())
}
