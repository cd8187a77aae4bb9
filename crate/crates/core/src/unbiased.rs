//! Bias-free estimators built on randomized truncation.
//!
//! * Russian Roulette CG (RR-CG): CG solves whose increments `γⱼ dⱼ` are
//!   reweighted by survival probabilities of a sampled iteration count.
//! * Single Sample RFF (SS-RFF): one importance-weighted block of the
//!   telescoping series
//!
//! ```text
//! ψ = term(J₀) + Σⱼ [term(J₀ + c·j) − term(J₀ + c·(j−1))] + [exact − term(J₀ + c·(H−1))]
//! ```
//!
//!   where `term(m)` is the RFF objective with the first `m` frequencies of
//!   one nested draw and the closing block `H` uses the dense kernel.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{GpError, Result};
use crate::exact_gp::{mll_and_grad_exact, mll_exact, MllTerms};
use crate::kernels::{Dataset, Hyperparams, KernelSystem};
use crate::krylov::{
    assemble_gradient, cg_column, slq_quadrature, CgOptions, LinearOperator, Preconditioner,
    PreconditionerKind,
};
use crate::numerics::{dot, ProbeSet, SymTridiagonal};
use crate::rff::{feature_map_with, mll_rff, rff_evaluate, sample_features, RffFeatures};
use crate::truncation::{rr_combine, SeriesStep, SeriesSupplier, TruncationDistribution};

/// CG solution increments as a series; runs out with `Converged` when CG
/// terminated exactly before the requested depth.
#[derive(Debug, Clone)]
pub struct IncrementSeries {
    increments: Vec<Vec<f64>>,
    dim: usize,
    pos: usize,
}

impl IncrementSeries {
    pub fn new(increments: Vec<Vec<f64>>, dim: usize) -> Self {
        Self { increments, dim, pos: 0 }
    }
}

impl SeriesSupplier for IncrementSeries {
    type Value = Vec<f64>;

    fn next_term(&mut self) -> Result<SeriesStep<Vec<f64>>> {
        match self.increments.get(self.pos) {
            Some(inc) => {
                self.pos += 1;
                Ok(SeriesStep::Term(inc.clone()))
            }
            None => Ok(SeriesStep::Converged),
        }
    }

    fn zero(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }

    fn consumed(&self) -> usize {
        self.pos
    }
}

/// RR-CG solve of `A x = b` with the truncation depth drawn from `dist`.
pub fn rrcg_solve(
    a: &impl LinearOperator,
    b: &[f64],
    dist: &TruncationDistribution,
    precond: &Preconditioner,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, usize)> {
    let j = dist.sample(rng);
    Ok((rrcg_solve_at(a, b, dist, precond, j)?, j))
}

/// RR-CG solve for a given truncation depth `j`.
pub fn rrcg_solve_at(
    a: &impl LinearOperator,
    b: &[f64],
    dist: &TruncationDistribution,
    precond: &Preconditioner,
    j: usize,
) -> Result<Vec<f64>> {
    let opts = CgOptions { max_iter: j, tol: 0.0, record_solutions: true };
    let trace = cg_column(a, b, precond, &opts)?;
    let mut series = IncrementSeries::new(trace.increments, a.dim());
    rr_combine(&mut series, dist, j)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrcgGradEstimate {
    pub grad: Vec<f64>,
    /// Sampled depth for each probe solve.
    pub probe_depths: Vec<usize>,
    pub left_depth: usize,
    pub right_depth: usize,
}

impl RrcgGradEstimate {
    /// Total CG iterations (matrix-vector products) requested.
    pub fn matvecs(&self) -> usize {
        self.probe_depths.iter().sum::<usize>() + self.left_depth + self.right_depth
    }
}

/// Unbiased gradient of `total_nll` from three independent groups of RR-CG
/// solves: `K̂⁻¹zᵢ`, and two separate solves of `K̂⁻¹y` for the two sides of
/// the quadratic term.
pub fn rrcg_grad(
    data: &Dataset,
    theta: &Hyperparams,
    dist: &TruncationDistribution,
    probes: &ProbeSet,
    precond: PreconditionerKind,
    rng: &mut impl Rng,
) -> Result<RrcgGradEstimate> {
    let sys = KernelSystem::new(data, theta)?;
    let pc = sys.preconditioner(precond)?;
    rrcg_grad_system(&sys, dist, probes, &pc, rng)
}

pub fn rrcg_grad_system(
    sys: &KernelSystem,
    dist: &TruncationDistribution,
    probes: &ProbeSet,
    precond: &Preconditioner,
    rng: &mut impl Rng,
) -> Result<RrcgGradEstimate> {
    rrcg_grad_impl(sys, dist, probes, precond, rng, false)
}

/// Negative control: one RR-CG solve of `K̂⁻¹y` reused on both sides of the
/// quadratic term. The square of an unbiased estimate is biased, so this
/// estimator is not unbiased.
pub fn rrcg_grad_shared_solve(
    sys: &KernelSystem,
    dist: &TruncationDistribution,
    probes: &ProbeSet,
    precond: &Preconditioner,
    rng: &mut impl Rng,
) -> Result<RrcgGradEstimate> {
    rrcg_grad_impl(sys, dist, probes, precond, rng, true)
}

fn rrcg_grad_impl(
    sys: &KernelSystem,
    dist: &TruncationDistribution,
    probes: &ProbeSet,
    precond: &Preconditioner,
    rng: &mut impl Rng,
    shared: bool,
) -> Result<RrcgGradEstimate> {
    if probes.is_empty() {
        return Err(GpError::InvalidConfig("at least one probe required".into()));
    }
    let probe_depths: Vec<usize> = probes.probes.iter().map(|_| dist.sample(rng)).collect();
    let left_depth = dist.sample(rng);
    let right_depth = if shared { left_depth } else { dist.sample(rng) };

    let mut jobs: Vec<(&[f64], usize)> = probes.probes.iter().map(Vec::as_slice).zip(probe_depths.iter().copied()).collect();
    jobs.push((&sys.y, left_depth));
    if !shared {
        jobs.push((&sys.y, right_depth));
    }
    let mut solves: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|(b, j)| rrcg_solve_at(&sys.k, b, dist, precond, *j))
        .collect::<Result<_>>()?;
    let (left, right) = if shared {
        let l = solves.pop().expect("left solve");
        (l.clone(), l)
    } else {
        let r = solves.pop().expect("right solve");
        (solves.pop().expect("left solve"), r)
    };
    let grad = assemble_gradient(sys, &probes.probes, &solves, &left, &right);
    Ok(RrcgGradEstimate { grad, probe_depths, left_depth, right_depth })
}

/// Differences of single-probe SLQ estimates over growing Lanczos blocks.
#[derive(Debug, Clone)]
struct SlqTelescope {
    tridiag: Option<SymTridiagonal>,
    scale: f64,
    prev: f64,
    pos: usize,
}

impl SeriesSupplier for SlqTelescope {
    type Value = f64;

    fn next_term(&mut self) -> Result<SeriesStep<f64>> {
        let Some(t) = &self.tridiag else {
            return Ok(SeriesStep::Converged);
        };
        if self.pos >= t.dim() {
            return Ok(SeriesStep::Converged);
        }
        self.pos += 1;
        let v = slq_quadrature(&t.leading(self.pos), self.scale)?;
        let delta = v - self.prev;
        self.prev = v;
        Ok(SeriesStep::Term(delta))
    }

    fn zero(&self) -> f64 {
        0.0
    }

    fn consumed(&self) -> usize {
        self.pos
    }
}

/// RR-combined telescope of single-probe SLQ log-determinant estimates.
/// Diagnostic only.
pub fn rrcg_logdet_telescope(
    data: &Dataset,
    theta: &Hyperparams,
    dist: &TruncationDistribution,
    probe: &[f64],
    rng: &mut impl Rng,
) -> Result<f64> {
    let sys = KernelSystem::new(data, theta)?;
    let j = dist.sample(rng);
    rrcg_logdet_telescope_at(&sys.k, dist, probe, j)
}

pub fn rrcg_logdet_telescope_at(
    k: &impl LinearOperator,
    dist: &TruncationDistribution,
    probe: &[f64],
    j: usize,
) -> Result<f64> {
    let opts = CgOptions { max_iter: j, tol: 0.0, record_solutions: false };
    let trace = cg_column(k, probe, &Preconditioner::identity(), &opts)?;
    let mut series = SlqTelescope { tridiag: trace.tridiag, scale: dot(probe, probe), prev: 0.0, pos: 0 };
    rr_combine(&mut series, dist, j)
}

/// Single Sample RFF configuration. Blocks are indexed by the support of
/// `dist`; its `support_max` is the closing block.
#[derive(Debug, Clone, PartialEq)]
pub struct SsRffConfig {
    /// `J₀`, frequencies in the base term.
    pub base_pairs: usize,
    /// `c`, frequencies added per block.
    pub step: usize,
    pub dist: TruncationDistribution,
}

impl SsRffConfig {
    pub fn new(base_pairs: usize, step: usize, dist: TruncationDistribution) -> Result<Self> {
        if base_pairs == 0 || step == 0 {
            return Err(GpError::InvalidConfig("SS-RFF base and step must be positive".into()));
        }
        Ok(Self { base_pairs, step, dist })
    }

    /// Index of the closing block when interior blocks may use up to `N/2`
    /// frequencies: `⌊(N/2 − J₀)/c⌋ + 1`.
    pub fn closing_block(n: usize, base_pairs: usize, step: usize) -> Result<usize> {
        if base_pairs == 0 || step == 0 || base_pairs > n / 2 {
            return Err(GpError::InvalidConfig(format!(
                "SS-RFF needs 1 <= base frequencies <= N/2 and a positive step (N={n}, J0={base_pairs}, c={step})"
            )));
        }
        Ok((n / 2 - base_pairs) / step + 1)
    }

    /// Frequencies used by the left endpoint of block `j`.
    pub fn pairs_before(&self, j: usize) -> usize {
        self.base_pairs + self.step * (j - 1)
    }

    /// Size of the nested draw needed for any sampled block.
    pub fn max_pairs(&self) -> usize {
        self.pairs_before(self.dist.support_max())
    }

    pub fn closing(&self) -> usize {
        self.dist.support_max()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let max = self.max_pairs();
        if max > n / 2 {
            return Err(GpError::InvalidConfig(format!(
                "SS-RFF interior blocks need {max} frequencies but N/2 = {}",
                n / 2
            )));
        }
        Ok(())
    }
}

/// Work done by one SS-RFF evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SsRffCost {
    /// Largest frequency count used by a low-rank term.
    pub max_pairs_used: usize,
    /// Whether the `O(N³)` dense closing block was evaluated.
    pub closing_block: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsRffEstimate {
    pub terms: MllTerms,
    /// Gradient of the `total_nll` estimate, if requested.
    pub grad: Option<Vec<f64>>,
    pub block: usize,
    pub cost: SsRffCost,
}

/// Objective pieces of one telescope endpoint.
#[derive(Debug, Clone)]
struct Endpoint {
    logdet: f64,
    invquad: f64,
    grad: Option<Vec<f64>>,
}

impl Endpoint {
    fn combine(parts: &[(f64, &Endpoint)], n: usize) -> (MllTerms, Option<Vec<f64>>) {
        let logdet = parts.iter().map(|(w, e)| w * e.logdet).sum();
        let invquad = parts.iter().map(|(w, e)| w * e.invquad).sum();
        let grad = parts.iter().try_fold(None::<Vec<f64>>, |acc, (w, e)| {
            let g = e.grad.as_ref()?;
            Some(Some(match acc {
                None => g.iter().map(|v| w * v).collect(),
                Some(mut a) => {
                    a.iter_mut().zip(g).for_each(|(x, v)| *x += w * v);
                    a
                }
            }))
        });
        (MllTerms::new(logdet, invquad, n), grad.flatten())
    }
}

fn rff_endpoint(data: &Dataset, theta: &Hyperparams, features: &RffFeatures, pairs: usize, with_grad: bool) -> Result<Endpoint> {
    if with_grad {
        let e = rff_evaluate(&data.x, &data.y, theta, features, pairs)?;
        let grad = e.nll_grad();
        Ok(Endpoint { logdet: e.terms.logdet, invquad: e.terms.invquad, grad: Some(grad) })
    } else {
        let fm = feature_map_with(&data.x, features, pairs, theta)?;
        let t = mll_rff(&fm, &data.y, theta.noise_sq)?;
        Ok(Endpoint { logdet: t.logdet, invquad: t.invquad, grad: None })
    }
}

fn exact_endpoint(data: &Dataset, theta: &Hyperparams, with_grad: bool) -> Result<Endpoint> {
    if with_grad {
        let (t, g) = mll_and_grad_exact(data, theta)?;
        Ok(Endpoint { logdet: t.logdet, invquad: t.invquad, grad: Some(g) })
    } else {
        let t = mll_exact(data, theta)?;
        Ok(Endpoint { logdet: t.logdet, invquad: t.invquad, grad: None })
    }
}

/// SS-RFF estimate for a fixed nested draw and block `j`. Blocks below the
/// support minimum are folded into the base term, so the estimate is
/// `term(J₀ + c·(J_min − 1)) + Δⱼ / P(j)`.
pub fn ssrff_evaluate(
    data: &Dataset,
    theta: &Hyperparams,
    cfg: &SsRffConfig,
    features: &RffFeatures,
    j: usize,
    with_grad: bool,
) -> Result<SsRffEstimate> {
    theta.validate()?;
    cfg.validate(data.len())?;
    let p = cfg.dist.pmf(j);
    if p == 0.0 {
        return Err(GpError::ZeroProbabilitySample(j));
    }
    if cfg.max_pairs() > features.num_pairs() {
        return Err(GpError::PrefixOutOfRange { requested: cfg.max_pairs(), available: features.num_pairs() });
    }
    let n = data.len();
    let base_pairs = cfg.pairs_before(cfg.dist.support_min());
    let lo_pairs = cfg.pairs_before(j);
    let base = rff_endpoint(data, theta, features, base_pairs, with_grad)?;
    let lo = if lo_pairs == base_pairs {
        base.clone()
    } else {
        rff_endpoint(data, theta, features, lo_pairs, with_grad)?
    };
    let closing = j == cfg.closing();
    let (hi, max_pairs_used) = if closing {
        (exact_endpoint(data, theta, with_grad)?, lo_pairs)
    } else {
        let hi_pairs = cfg.pairs_before(j + 1);
        (rff_endpoint(data, theta, features, hi_pairs, with_grad)?, hi_pairs)
    };
    let w = 1.0 / p;
    let (terms, grad) = if lo_pairs == base_pairs {
        Endpoint::combine(&[(1.0 - w, &base), (w, &hi)], n)
    } else {
        Endpoint::combine(&[(1.0, &base), (-w, &lo), (w, &hi)], n)
    };
    Ok(SsRffEstimate { terms, grad, block: j, cost: SsRffCost { max_pairs_used, closing_block: closing } })
}

/// SS-RFF objective estimate for a fixed nested draw and block.
pub fn ssrff_mll_at(data: &Dataset, theta: &Hyperparams, cfg: &SsRffConfig, features: &RffFeatures, j: usize) -> Result<MllTerms> {
    Ok(ssrff_evaluate(data, theta, cfg, features, j, false)?.terms)
}

/// Samples the block, then a fresh nested feature draw, and evaluates.
fn ssrff_sampled(data: &Dataset, theta: &Hyperparams, cfg: &SsRffConfig, rng: &mut impl Rng, with_grad: bool) -> Result<(SsRffEstimate, RffFeatures)> {
    let j = cfg.dist.sample(rng);
    let features = sample_features(theta, data.dim(), 2 * cfg.max_pairs(), rng.random())?;
    let est = ssrff_evaluate(data, theta, cfg, &features, j, with_grad)?;
    Ok((est, features))
}

pub fn ssrff_mll(data: &Dataset, theta: &Hyperparams, cfg: &SsRffConfig, rng: &mut impl Rng) -> Result<SsRffEstimate> {
    Ok(ssrff_sampled(data, theta, cfg, rng, false)?.0)
}

/// Unbiased gradient of `total_nll` with the frequencies frozen.
pub fn ssrff_grad(data: &Dataset, theta: &Hyperparams, cfg: &SsRffConfig, rng: &mut impl Rng) -> Result<SsRffEstimate> {
    Ok(ssrff_sampled(data, theta, cfg, rng, true)?.0)
}
