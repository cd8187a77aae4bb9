use serde::{Deserialize, Serialize};

use crate::error::{GpError, Result};
use crate::numerics::{axpy, cholesky_factor, solve_posdef_vec, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PreconditionerKind {
    #[default]
    Identity,
    PivotedCholesky { rank: usize },
}

/// SPD operator approximating `K̂⁻¹`.
#[derive(Debug, Clone)]
pub struct Preconditioner {
    kind: PreconditionerKind,
    low_rank: Option<LowRank>,
}

/// `(L Lᵀ + σ² I)⁻¹` applied through the Woodbury identity.
#[derive(Debug, Clone)]
struct LowRank {
    /// `N × r` pivoted-Cholesky factor.
    factor: DenseMatrix,
    noise_sq: f64,
    /// Cholesky factor of `σ² I_r + Lᵀ L`.
    inner: DenseMatrix,
}

impl Preconditioner {
    pub fn identity() -> Self {
        Self { kind: PreconditionerKind::Identity, low_rank: None }
    }

    pub fn kind(&self) -> PreconditionerKind {
        self.kind
    }

    /// Rank actually reached (pivoted Cholesky may stop early on a numerically
    /// exhausted diagonal).
    pub fn rank(&self) -> usize {
        self.low_rank.as_ref().map_or(0, |lr| lr.factor.cols())
    }

    pub fn is_identity(&self) -> bool {
        self.low_rank.is_none()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match &self.low_rank {
            None => v.to_vec(),
            Some(lr) => {
                let proj = lr.factor.tr_matvec(v);
                let w = solve_posdef_vec(&lr.inner, &proj).expect("inner factor is square");
                let mut out = v.to_vec();
                let corr = lr.factor.matvec(&w);
                axpy(-1.0, &corr, &mut out);
                out.iter_mut().for_each(|x| *x /= lr.noise_sq);
                out
            }
        }
    }

    /// Builds the preconditioner named by `kind` for `K + σ² I`, where
    /// `k_noiseless` is the kernel matrix without the noise diagonal.
    pub fn build(kind: PreconditionerKind, k_noiseless: &DenseMatrix, noise_sq: f64) -> Result<Self> {
        match kind {
            PreconditionerKind::Identity => Ok(Self::identity()),
            PreconditionerKind::PivotedCholesky { rank } => {
                pivoted_cholesky(k_noiseless, rank, noise_sq)
            }
        }
    }
}

/// Greedy diagonal-pivoted partial Cholesky of `k` (noiseless kernel),
/// wrapped as a preconditioner for `k + noise_sq·I`.
pub fn pivoted_cholesky(k: &DenseMatrix, rank: usize, noise_sq: f64) -> Result<Preconditioner> {
    let n = k.rows();
    if !k.is_square() {
        return Err(GpError::DimensionMismatch("pivoted Cholesky of non-square matrix".into()));
    }
    if rank > n {
        return Err(GpError::InvalidConfig(format!("rank {rank} exceeds matrix size {n}")));
    }
    if !(noise_sq > 0.0) {
        return Err(GpError::NonPositiveParam { name: "noise_sq", value: noise_sq });
    }
    let kind = PreconditionerKind::PivotedCholesky { rank };
    if rank == 0 {
        return Ok(Preconditioner { kind, low_rank: None });
    }

    let mut diag = k.diag();
    let scale = diag.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut used = vec![false; n];
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(rank);
    for step in 0..rank {
        let (pivot, &value) = diag
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("rank <= n leaves an unused index");
        if value < -1e-10 * scale {
            return Err(GpError::NegativePivot { step, value });
        }
        if value <= 1e-14 * scale {
            break;
        }
        used[pivot] = true;
        let root = value.sqrt();
        let mut col: Vec<f64> = k.col(pivot);
        for prev in &cols {
            axpy(-prev[pivot], prev, &mut col);
        }
        col.iter_mut().for_each(|v| *v /= root);
        for (i, c) in col.iter().enumerate() {
            diag[i] -= c * c;
        }
        cols.push(col);
    }
    if cols.is_empty() {
        return Ok(Preconditioner { kind, low_rank: None });
    }
    let factor = DenseMatrix::from_columns(&cols)?;
    let mut inner = factor.gram();
    inner.add_diag(noise_sq);
    let inner = cholesky_factor(&inner, 0.0)?;
    Ok(Preconditioner { kind, low_rank: Some(LowRank { factor, noise_sq, inner }) })
}
