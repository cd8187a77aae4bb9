//! Modified batch conjugate gradients (mBCG).
//!
//! Each right-hand side is solved by preconditioned CG started from zero.
//! Besides the solution, every column keeps a [`CgTrace`]: the individual
//! solution increments `γⱼ dⱼ` (so randomized-truncation estimators can
//! reweight them), the step coefficients, and the Lanczos tridiagonal matrix
//! recovered from those coefficients:
//!
//! ```text
//! T[j, j]   = 1/αⱼ + βⱼ₋₁/αⱼ₋₁
//! T[j-1, j] = √βⱼ₋₁ / αⱼ₋₁
//! ```
//!
//! Lanczos vectors are never reorthogonalized.

use rayon::prelude::*;

use super::precond::Preconditioner;
use crate::error::{GpError, Result};
use crate::numerics::{axpy, dot, norm2, DenseMatrix, SymTridiagonal};

/// Curvatures at or below this magnitude mean the Krylov space is exhausted.
const BREAKDOWN_EPS: f64 = 1e-300;

/// Symmetric operator given only through matrix-vector products.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.matvec_into(x, out);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub max_iter: usize,
    /// Stop a column once `‖r‖₂ ≤ tol·‖b‖₂`; `0` runs exactly `max_iter`
    /// iterations unless the recurrence breaks down.
    pub tol: f64,
    /// Keep per-iteration increments and partial solutions. SLQ-only callers
    /// can switch this off to save `O(J N)` memory per column.
    pub record_solutions: bool,
}

impl CgOptions {
    pub fn fixed(max_iter: usize) -> Self {
        Self { max_iter, tol: 0.0, record_solutions: true }
    }

    pub fn converged(max_iter: usize, tol: f64) -> Self {
        Self { max_iter, tol, record_solutions: true }
    }

    pub fn without_solutions(mut self) -> Self {
        self.record_solutions = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgTrace {
    /// `γⱼ dⱼ` per batch iteration; zero vectors after this column stopped.
    pub increments: Vec<Vec<f64>>,
    /// Running sums of `increments`.
    pub partial_solutions: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// `rⱼᵀ M⁻¹ rⱼ` at the start of each active iteration.
    pub rz: Vec<f64>,
    /// Lanczos matrix of the iterations this column actually performed;
    /// `None` when the right-hand side was zero.
    pub tridiag: Option<SymTridiagonal>,
    /// 2-norm of the recurred residual after each active iteration.
    pub residual_norms: Vec<f64>,
    pub rhs_norm: f64,
    /// Number of active iterations if the column stopped early (tolerance
    /// reached or exact breakdown).
    pub converged_at: Option<usize>,
}

impl CgTrace {
    /// Iterations this column actually performed.
    pub fn active_iterations(&self) -> usize {
        self.alphas.len()
    }

    pub fn solution(&self, dim: usize) -> Vec<f64> {
        self.partial_solutions.last().cloned().unwrap_or_else(|| vec![0.0; dim])
    }
}

#[derive(Debug, Clone)]
pub struct MbcgOutput {
    pub solutions: Vec<Vec<f64>>,
    pub traces: Vec<CgTrace>,
    /// Batch iterations (max over columns).
    pub iterations: usize,
}

impl MbcgOutput {
    pub fn solution_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_columns(&self.solutions).expect("equal-length columns")
    }
}

/// Solves `A X = B` column by column; see the module docs.
pub fn mbcg(
    a: &impl LinearOperator,
    b: &DenseMatrix,
    precond: &Preconditioner,
    opts: &CgOptions,
) -> Result<MbcgOutput> {
    let cols: Vec<Vec<f64>> = (0..b.cols()).map(|j| b.col(j)).collect();
    mbcg_columns(a, &cols, precond, opts)
}

pub fn mbcg_columns(
    a: &impl LinearOperator,
    rhs: &[Vec<f64>],
    precond: &Preconditioner,
    opts: &CgOptions,
) -> Result<MbcgOutput> {
    let n = a.dim();
    if let Some(bad) = rhs.iter().find(|b| b.len() != n) {
        return Err(GpError::DimensionMismatch(format!(
            "right-hand side of length {} for a {n}x{n} operator",
            bad.len()
        )));
    }
    if opts.max_iter == 0 {
        return Err(GpError::InvalidConfig("max_iter must be at least 1".into()));
    }
    let mut traces: Vec<CgTrace> = if rhs.len() > 1 && n * opts.max_iter > 4096 {
        rhs.par_iter().map(|b| cg_column(a, b, precond, opts)).collect::<Result<_>>()?
    } else {
        rhs.iter().map(|b| cg_column(a, b, precond, opts)).collect::<Result<_>>()?
    };
    let iterations = traces.iter().map(|t| t.active_iterations()).max().unwrap_or(0);
    if opts.record_solutions {
        for t in &mut traces {
            let last = t.solution(n);
            while t.increments.len() < iterations {
                t.increments.push(vec![0.0; n]);
                t.partial_solutions.push(last.clone());
            }
        }
    }
    let solutions = traces.iter().map(|t| t.solution(n)).collect();
    Ok(MbcgOutput { solutions, traces, iterations })
}

/// Single-column preconditioned CG with full trace.
pub fn cg_column(
    a: &impl LinearOperator,
    b: &[f64],
    precond: &Preconditioner,
    opts: &CgOptions,
) -> Result<CgTrace> {
    let n = a.dim();
    let rhs_norm = norm2(b);
    let mut trace = CgTrace {
        increments: Vec::new(),
        partial_solutions: Vec::new(),
        alphas: Vec::new(),
        betas: Vec::new(),
        rz: Vec::new(),
        tridiag: None,
        residual_norms: Vec::new(),
        rhs_norm,
        converged_at: None,
    };

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = precond.apply(&r);
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let mut v = vec![0.0; n];
    let mut t_diag: Vec<f64> = Vec::new();
    let mut t_off: Vec<f64> = Vec::new();

    for j in 0..opts.max_iter {
        if rz == 0.0 {
            trace.converged_at = Some(j);
            break;
        }
        a.apply(&d, &mut v);
        let curvature = dot(&d, &v);
        if curvature.abs() <= BREAKDOWN_EPS {
            trace.converged_at = Some(j);
            break;
        }
        if curvature < 0.0 {
            return Err(GpError::Breakdown { iteration: j, curvature });
        }
        let alpha = rz / curvature;

        match trace.alphas.last() {
            None => t_diag.push(1.0 / alpha),
            Some(&alpha_prev) => {
                let beta_prev = *trace.betas.last().expect("beta recorded with alpha");
                t_diag.push(1.0 / alpha + beta_prev / alpha_prev);
                t_off.push(beta_prev.sqrt() / alpha_prev);
            }
        }
        trace.alphas.push(alpha);
        trace.rz.push(rz);

        if opts.record_solutions {
            let inc: Vec<f64> = d.iter().map(|di| alpha * di).collect();
            axpy(1.0, &inc, &mut x);
            trace.increments.push(inc);
            trace.partial_solutions.push(x.clone());
        }
        axpy(-alpha, &v, &mut r);
        let rnorm = norm2(&r);
        trace.residual_norms.push(rnorm);

        if opts.tol > 0.0 && rnorm <= opts.tol * rhs_norm {
            trace.converged_at = Some(j + 1);
            break;
        }

        z = precond.apply(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        trace.betas.push(beta);
        for (di, zi) in d.iter_mut().zip(&z) {
            *di = zi + beta * *di;
        }
        rz = rz_new;
    }

    if !t_diag.is_empty() {
        trace.tridiag = Some(SymTridiagonal::new(t_diag, t_off)?);
    }
    Ok(trace)
}

/// Convenience: CG solve of a single system.
pub fn cg_solve(
    a: &impl LinearOperator,
    b: &[f64],
    precond: &Preconditioner,
    opts: &CgOptions,
) -> Result<(Vec<f64>, CgTrace)> {
    let opts = CgOptions { record_solutions: true, ..*opts };
    let trace = cg_column(a, b, precond, &opts)?;
    Ok((trace.solution(a.dim()), trace))
}
