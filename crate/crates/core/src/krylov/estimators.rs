//! Early-truncated CG estimates of the marginal-likelihood terms and of the
//! stochastic gradient.

use super::cg::{mbcg_columns, CgOptions, CgTrace};
use super::precond::{Preconditioner, PreconditionerKind};
use crate::error::{GpError, Result};
use crate::kernels::{Dataset, Hyperparams, KernelSystem};
use crate::numerics::{dot, eig_sym_tridiag, ProbeSet, SymTridiagonal};

/// `u_j = bᵀ x_j` for each active iteration of a trace with right-hand side
/// `b`, accumulated as `Σ_{i<j} αᵢ rᵢᵀzᵢ`. The recurrence form stays monotone
/// in floating point, where `bᵀ x_j` drifts once orthogonality is lost.
pub fn invquad_cg(trace: &CgTrace) -> Vec<f64> {
    trace
        .alphas
        .iter()
        .zip(&trace.rz)
        .scan(0.0, |acc, (a, rz)| {
            *acc += a * rz;
            Some(*acc)
        })
        .collect()
}

/// `scale · e₁ᵀ log(T) e₁`.
pub fn slq_quadrature(t: &SymTridiagonal, scale: f64) -> Result<f64> {
    let eig = eig_sym_tridiag(t)?;
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| !(l > 0.0)) {
        return Err(GpError::NonPositiveRitzValue { value: bad });
    }
    Ok(scale * eig.quadrature(f64::ln))
}

/// Single-probe SLQ value using the leading `j × j` block (or the whole
/// tridiagonal if the probe's Krylov space closed earlier).
pub fn slq_probe_value(trace: &CgTrace, probe_norm_sq: f64, j: usize) -> Result<f64> {
    match &trace.tridiag {
        None => Ok(0.0),
        Some(t) => slq_quadrature(&t.leading(j.clamp(1, t.dim())), probe_norm_sq),
    }
}

/// Probe-averaged SLQ log-determinant estimates `v₁ … v_J`, where `J` is the
/// longest tridiagonal among the traces.
pub fn slq_logdet(traces: &[CgTrace], probes: &ProbeSet) -> Result<Vec<f64>> {
    check_probe_traces(traces, probes)?;
    let depth = traces
        .iter()
        .filter_map(|t| t.tridiag.as_ref().map(SymTridiagonal::dim))
        .max()
        .unwrap_or(1);
    let mut v = vec![0.0; depth];
    for (trace, z) in traces.iter().zip(&probes.probes) {
        let scale = dot(z, z);
        for (j, vj) in v.iter_mut().enumerate() {
            *vj += slq_probe_value(trace, scale, j + 1)?;
        }
    }
    let t = traces.len() as f64;
    v.iter_mut().for_each(|x| *x /= t);
    Ok(v)
}

/// Probe-averaged SLQ estimate at a single truncation depth `j`.
pub fn slq_logdet_at(traces: &[CgTrace], probes: &ProbeSet, j: usize) -> Result<f64> {
    check_probe_traces(traces, probes)?;
    let mut acc = 0.0;
    for (trace, z) in traces.iter().zip(&probes.probes) {
        acc += slq_probe_value(trace, dot(z, z), j)?;
    }
    Ok(acc / traces.len() as f64)
}

fn check_probe_traces(traces: &[CgTrace], probes: &ProbeSet) -> Result<()> {
    if traces.is_empty() || traces.len() != probes.len() {
        return Err(GpError::DimensionMismatch(format!(
            "{} traces for {} probes",
            traces.len(),
            probes.len()
        )));
    }
    Ok(())
}

/// Gradient and objective pieces from one truncated mBCG run.
#[derive(Debug, Clone, PartialEq)]
pub struct CgEstimate {
    pub grad: Vec<f64>,
    /// `u_J`
    pub invquad: f64,
    /// `v_J`, `None` if a Ritz value was not positive.
    pub logdet: Option<f64>,
    pub iterations: usize,
}

/// Biased stochastic gradient with CG capped at `opts.max_iter`:
/// `½ [mean_i (K̂⁻¹zᵢ)ᵀ ∂K̂ zᵢ − (K̂⁻¹y)ᵀ ∂K̂ (K̂⁻¹y)]`.
pub fn stochastic_grad_cg(
    data: &Dataset,
    theta: &Hyperparams,
    probes: &ProbeSet,
    opts: &CgOptions,
    precond: PreconditionerKind,
) -> Result<Vec<f64>> {
    let sys = KernelSystem::new(data, theta)?;
    let pc = sys.preconditioner(precond)?;
    Ok(cg_estimate(&sys, probes, opts, &pc)?.grad)
}

pub fn cg_estimate(
    sys: &KernelSystem,
    probes: &ProbeSet,
    opts: &CgOptions,
    precond: &Preconditioner,
) -> Result<CgEstimate> {
    if probes.is_empty() {
        return Err(GpError::InvalidConfig("at least one probe required".into()));
    }
    let mut rhs = Vec::with_capacity(probes.len() + 1);
    rhs.push(sys.y.clone());
    rhs.extend(probes.probes.iter().cloned());
    let opts = CgOptions { record_solutions: true, ..*opts };
    let out = mbcg_columns(&sys.k, &rhs, precond, &opts)?;

    let alpha = &out.solutions[0];
    let probe_solves = &out.solutions[1..];
    let grad = assemble_gradient(sys, &probes.probes, probe_solves, alpha, alpha);
    let invquad = invquad_cg(&out.traces[0]).last().copied().unwrap_or(0.0);
    let logdet = if precond.is_identity() {
        slq_logdet_at(&out.traces[1..], probes, opts.max_iter).ok()
    } else {
        None
    };
    Ok(CgEstimate { grad, invquad, logdet, iterations: out.iterations })
}

/// `½ [mean_i ẑᵢᵀ ∂K̂ zᵢ − ŷ_leftᵀ ∂K̂ ŷ_right]` for every derivative matrix.
pub(crate) fn assemble_gradient(
    sys: &KernelSystem,
    probes: &[Vec<f64>],
    probe_solves: &[Vec<f64>],
    left: &[f64],
    right: &[f64],
) -> Vec<f64> {
    let t = probes.len() as f64;
    sys.grads
        .iter()
        .map(|dk| {
            let trace_term: f64 = probes
                .iter()
                .zip(probe_solves)
                .map(|(z, s)| dk.bilinear(s, z))
                .sum::<f64>()
                / t;
            0.5 * (trace_term - dk.bilinear(left, right))
        })
        .collect()
}
