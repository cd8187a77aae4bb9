//! Hyperparameter optimization: log reparameterization, Adam with a
//! multi-step learning-rate schedule, and the per-method training loop.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{GpError, Result};
use crate::exact_gp::{mll_and_grad_exact, mll_exact, total_nll};
use crate::kernels::{Dataset, Hyperparams, KernelSystem};
use crate::krylov::{cg_estimate, CgOptions, PreconditionerKind};
use crate::numerics::{child_stream, norm2, sample_probes, stream_rng, GpRng, ProbeKind};
use crate::rff::{rff_evaluate, sample_features, RffFeatures};
use crate::truncation::TruncationSpec;
use crate::unbiased::{rrcg_grad_system, ssrff_grad, SsRffConfig};

const TRAIN_STREAM: u64 = 0x7_2A1;

/// Exact telemetry is on by default up to this many points.
pub const EXACT_TELEMETRY_MAX_N: usize = 1500;

/// `u = log θ`, in [`Hyperparams::to_vec`] order.
pub fn to_unconstrained(theta: &Hyperparams) -> Result<Vec<f64>> {
    theta.validate()?;
    Ok(theta.to_vec().iter().map(|v| v.ln()).collect())
}

pub fn from_unconstrained(u: &[f64]) -> Result<Hyperparams> {
    let raw: Vec<f64> = u.iter().map(|v| v.exp()).collect();
    Hyperparams::from_slice(&raw)
}

/// `∂L/∂u = ∂L/∂θ · θ`.
pub fn grad_to_unconstrained(theta: &Hyperparams, grad: &[f64]) -> Vec<f64> {
    theta.to_vec().iter().zip(grad).map(|(t, g)| t * g).collect()
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl OptimState {
    pub fn new(dim: usize) -> Self {
        Self { first_moment: vec![0.0; dim], second_moment: vec![0.0; dim], step_count: 0 }
    }
}

/// Bias-corrected Adam; returns the parameter change and the next state.
pub fn adam_step(state: &OptimState, grad: &[f64], lr: f64) -> Result<(Vec<f64>, OptimState)> {
    if grad.len() != state.first_moment.len() {
        return Err(GpError::DimensionMismatch(format!(
            "gradient of length {} for optimizer of dimension {}",
            grad.len(),
            state.first_moment.len()
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(GpError::NonFiniteGradient(i));
    }
    let t = state.step_count + 1;
    let c1 = 1.0 - ADAM_BETA1.powf(t as f64);
    let c2 = 1.0 - ADAM_BETA2.powf(t as f64);
    let mut next = OptimState { step_count: t, ..state.clone() };
    let mut delta = vec![0.0; grad.len()];
    for (i, g) in grad.iter().enumerate() {
        let m = ADAM_BETA1 * state.first_moment[i] + (1.0 - ADAM_BETA1) * g;
        let v = ADAM_BETA2 * state.second_moment[i] + (1.0 - ADAM_BETA2) * g * g;
        next.first_moment[i] = m;
        next.second_moment[i] = v;
        delta[i] = -lr * (m / c1) / ((v / c2).sqrt() + ADAM_EPS);
    }
    Ok((delta, next))
}

/// Learning rate at 0-based `step`: `base · factor^k`, where `k` counts the
/// milestones `m` with `step ≥ ⌈m · iters⌉`.
pub fn scheduled_lr(base: f64, step: usize, iters: usize, milestones: &[f64], factor: f64) -> f64 {
    let passed = milestones
        .iter()
        .filter(|&&m| step as f64 >= (m * iters as f64).ceil())
        .count();
    base * factor.powi(passed as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cholesky,
    Cg,
    RrCg,
    Rff,
    SsRff,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cholesky => "cholesky",
            Self::Cg => "cg",
            Self::RrCg => "rr_cg",
            Self::Rff => "rff",
            Self::SsRff => "ss_rff",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = GpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholesky" => Ok(Self::Cholesky),
            "cg" => Ok(Self::Cg),
            "rr_cg" => Ok(Self::RrCg),
            "rff" => Ok(Self::Rff),
            "ss_rff" => Ok(Self::SsRff),
            other => Err(GpError::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

/// Which hyperparameter groups the optimizer may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Trainable {
    pub outputscale: bool,
    pub lengthscale: bool,
    pub noise: bool,
}

impl Default for Trainable {
    fn default() -> Self {
        Self { outputscale: true, lengthscale: true, noise: true }
    }
}

impl Trainable {
    pub fn lengthscale_only() -> Self {
        Self { outputscale: false, lengthscale: true, noise: false }
    }

    fn mask(&self, theta: &Hyperparams) -> Vec<bool> {
        let mut m = vec![self.outputscale];
        m.extend(std::iter::repeat(self.lengthscale).take(theta.lengthscales.len()));
        m.push(self.noise);
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub method: Method,
    pub iters: usize,
    pub lr: f64,
    pub schedule_milestones: Vec<f64>,
    pub schedule_factor: f64,
    /// CG iterations per solve for `cg`.
    pub cg_iters: usize,
    /// Truncation over CG iterations for `rr_cg` (upper end defaults to N).
    pub rr_truncation: TruncationSpec,
    /// Basis functions (columns of Φ) for `rff`.
    pub rff_features: usize,
    /// Draw one set of frequencies for the whole run instead of per step.
    pub freeze_features: bool,
    /// `J₀`: frequencies in the SS-RFF base term.
    pub ssrff_base: usize,
    /// `c`: frequencies added per SS-RFF block.
    pub ssrff_step: usize,
    /// Truncation over SS-RFF blocks (upper end defaults to the closing block).
    pub ssrff_truncation: TruncationSpec,
    pub probes: usize,
    pub probe_kind: ProbeKind,
    /// Pivoted-Cholesky preconditioner rank for CG methods; 0 disables it.
    pub precond_rank: usize,
    pub trainable: Trainable,
    /// Defaults to `N ≤ 1500`.
    pub exact_telemetry: Option<bool>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Cholesky,
            iters: 100,
            lr: 0.01,
            schedule_milestones: vec![0.5, 0.7, 0.9],
            schedule_factor: 0.1,
            cg_iters: 10,
            rr_truncation: TruncationSpec::Exponential { lambda: 0.05, min: 80, max: None },
            rff_features: 100,
            freeze_features: false,
            ssrff_base: 10,
            ssrff_step: 10,
            ssrff_truncation: TruncationSpec::Harmonic { min: 1, max: None },
            probes: 1,
            probe_kind: ProbeKind::Rademacher,
            precond_rank: 0,
            trainable: Trainable::default(),
            exact_telemetry: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn for_method(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(GpError::InvalidConfig(format!("lr must be positive, got {}", self.lr)));
        }
        let ms = &self.schedule_milestones;
        if ms.iter().any(|m| !(*m > 0.0 && *m < 1.0)) || ms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GpError::InvalidConfig("milestones must be strictly increasing in (0, 1)".into()));
        }
        if !(self.schedule_factor > 0.0) {
            return Err(GpError::InvalidConfig("schedule factor must be positive".into()));
        }
        if self.probes == 0 && matches!(self.method, Method::Cg | Method::RrCg) {
            return Err(GpError::InvalidConfig("CG methods need at least one probe".into()));
        }
        if self.cg_iters == 0 {
            return Err(GpError::InvalidConfig("cg_iters must be at least 1".into()));
        }
        Ok(())
    }

    pub fn precond_kind(&self) -> PreconditionerKind {
        if self.precond_rank == 0 {
            PreconditionerKind::Identity
        } else {
            PreconditionerKind::PivotedCholesky { rank: self.precond_rank }
        }
    }

    pub fn ssrff_config(&self, n: usize) -> Result<SsRffConfig> {
        let h = SsRffConfig::closing_block(n, self.ssrff_base, self.ssrff_step)?;
        SsRffConfig::new(self.ssrff_base, self.ssrff_step, self.ssrff_truncation.build(h)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Raw hyperparameters at which the gradient was taken.
    pub theta: Vec<f64>,
    pub lr: f64,
    /// The method's own objective estimate, when it produces one.
    pub objective: Option<f64>,
    pub exact_nll: Option<f64>,
    /// Norm of the (masked) gradient in log space.
    pub grad_norm: f64,
    /// Sampled truncation depths or blocks used in this step.
    pub truncations: Vec<usize>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub method: Method,
    pub steps: Vec<StepRecord>,
    pub final_theta: Hyperparams,
    pub final_exact_nll: Option<f64>,
}

impl TrainRecord {
    /// Equality of everything except wall-clock timings.
    pub fn same_trajectory(&self, other: &TrainRecord) -> bool {
        let strip = |r: &TrainRecord| {
            let mut r = r.clone();
            r.steps.iter_mut().for_each(|s| s.wall_time_s = 0.0);
            r
        };
        strip(self) == strip(other)
    }
}

/// One gradient evaluation of the configured method.
#[derive(Debug, Clone)]
pub struct StepEstimate {
    pub grad: Vec<f64>,
    pub objective: Option<f64>,
    pub truncations: Vec<usize>,
    /// Exact objective, when the method computed it anyway.
    pub exact_nll: Option<f64>,
}

/// Gradient of the configured objective at `theta` using randomness from `rng`.
pub fn method_gradient(
    data: &Dataset,
    theta: &Hyperparams,
    cfg: &TrainConfig,
    frozen: Option<&RffFeatures>,
    rng: &mut GpRng,
) -> Result<StepEstimate> {
    use rand::Rng;
    let n = data.len();
    match cfg.method {
        Method::Cholesky => {
            let (terms, grad) = mll_and_grad_exact(data, theta)?;
            Ok(StepEstimate { grad, objective: Some(terms.total_nll), truncations: vec![], exact_nll: Some(terms.total_nll) })
        }
        Method::Cg => {
            let sys = KernelSystem::new(data, theta)?;
            let pc = sys.preconditioner(cfg.precond_kind())?;
            let probes = sample_probes(n, cfg.probes, cfg.probe_kind, rng.random());
            let est = cg_estimate(&sys, &probes, &CgOptions::fixed(cfg.cg_iters), &pc)?;
            let objective = est.logdet.map(|ld| total_nll(ld, est.invquad, n));
            Ok(StepEstimate { grad: est.grad, objective, truncations: vec![est.iterations], exact_nll: None })
        }
        Method::RrCg => {
            let dist = cfg.rr_truncation.build(n)?;
            let sys = KernelSystem::new(data, theta)?;
            let pc = sys.preconditioner(cfg.precond_kind())?;
            let probes = sample_probes(n, cfg.probes, cfg.probe_kind, rng.random());
            let est = rrcg_grad_system(&sys, &dist, &probes, &pc, rng)?;
            let mut truncations = est.probe_depths.clone();
            truncations.extend([est.left_depth, est.right_depth]);
            Ok(StepEstimate { grad: est.grad, objective: None, truncations, exact_nll: None })
        }
        Method::Rff => {
            let drawn;
            let features = match frozen {
                Some(f) => f,
                None => {
                    drawn = sample_features(theta, data.dim(), cfg.rff_features, rng.random())?;
                    &drawn
                }
            };
            let e = rff_evaluate(&data.x, &data.y, theta, features, cfg.rff_features / 2)?;
            Ok(StepEstimate { grad: e.nll_grad(), objective: Some(e.terms.total_nll), truncations: vec![], exact_nll: None })
        }
        Method::SsRff => {
            let ss = cfg.ssrff_config(n)?;
            let est = ssrff_grad(data, theta, &ss, rng)?;
            Ok(StepEstimate {
                grad: est.grad.expect("gradient requested"),
                objective: Some(est.terms.total_nll),
                truncations: vec![est.block],
                exact_nll: None,
            })
        }
    }
}

/// Runs `cfg.iters` Adam steps on `u = log θ`.
pub fn train(data: &Dataset, theta0: &Hyperparams, cfg: &TrainConfig) -> Result<TrainRecord> {
    cfg.validate()?;
    theta0.check_dim(data.dim())?;
    if cfg.method == Method::Rff && (cfg.rff_features < 2 || cfg.rff_features % 2 != 0) {
        return Err(GpError::OddFeatureCount(cfg.rff_features));
    }
    let exact_telemetry = cfg.exact_telemetry.unwrap_or(data.len() <= EXACT_TELEMETRY_MAX_N);
    let mask = cfg.trainable.mask(theta0);
    let frozen = if cfg.method == Method::Rff && cfg.freeze_features {
        Some(sample_features(theta0, data.dim(), cfg.rff_features, child_stream(cfg.seed, u64::MAX))?)
    } else {
        None
    };

    let mut u = to_unconstrained(theta0)?;
    let mut state = OptimState::new(u.len());
    let mut steps = Vec::with_capacity(cfg.iters);
    for step in 0..cfg.iters {
        let started = Instant::now();
        let theta = masked_theta(&u, theta0, &mask)?;
        let mut rng = stream_rng(cfg.seed, child_stream(TRAIN_STREAM, step as u64));
        let est = method_gradient(data, &theta, cfg, frozen.as_ref(), &mut rng)?;
        let mut g = grad_to_unconstrained(&theta, &est.grad);
        g.iter_mut().zip(&mask).filter(|(_, m)| !**m).for_each(|(v, _)| *v = 0.0);
        let exact_nll = match (exact_telemetry, est.exact_nll) {
            (false, _) => None,
            (true, Some(v)) => Some(v),
            (true, None) => Some(exact_telemetry_at(data, &theta, step)?),
        };
        let lr = scheduled_lr(cfg.lr, step, cfg.iters, &cfg.schedule_milestones, cfg.schedule_factor);
        let (delta, next) = adam_step(&state, &g, lr)?;
        state = next;
        for ((ui, d), m) in u.iter_mut().zip(&delta).zip(&mask) {
            if *m {
                *ui += d;
            }
        }
        steps.push(StepRecord {
            step,
            theta: theta.to_vec(),
            lr,
            objective: est.objective,
            exact_nll,
            grad_norm: norm2(&g),
            truncations: est.truncations,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
    }
    let final_theta = masked_theta(&u, theta0, &mask)?;
    let final_exact_nll = if exact_telemetry {
        Some(exact_telemetry_at(data, &final_theta, cfg.iters)?)
    } else {
        None
    };
    Ok(TrainRecord { method: cfg.method, steps, final_theta, final_exact_nll })
}

/// Raw hyperparameters for `u`, with frozen coordinates taken from `theta0`
/// so they survive the log round trip bit for bit.
fn masked_theta(u: &[f64], theta0: &Hyperparams, mask: &[bool]) -> Result<Hyperparams> {
    let mut raw = from_unconstrained(u)?.to_vec();
    for ((r, t), m) in raw.iter_mut().zip(theta0.to_vec()).zip(mask) {
        if !m {
            *r = t;
        }
    }
    Hyperparams::from_slice(&raw)
}

fn exact_telemetry_at(data: &Dataset, theta: &Hyperparams, step: usize) -> Result<f64> {
    mll_exact(data, theta).map(|t| t.total_nll).map_err(|e| match e {
        GpError::NotPositiveDefinite { pivot, value } => GpError::InvalidConfig(format!(
            "exact telemetry failed at step {step}: kernel not positive definite (pivot {pivot}, value {value:e}) at θ = {:?}",
            theta.to_vec()
        )),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_params_map_to_zero() {
        let th = Hyperparams::isotropic(1.0, 1.0, 1.0).unwrap();
        assert_eq!(to_unconstrained(&th).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn round_trip() {
        let th = Hyperparams::new(0.37, vec![2.5, 0.011], 3e-4).unwrap();
        let back = from_unconstrained(&to_unconstrained(&th).unwrap()).unwrap();
        for (a, b) in th.to_vec().iter().zip(back.to_vec()) {
            assert!((a - b).abs() <= 1e-14 * a);
        }
    }

    #[test]
    fn first_adam_step_is_sign_normalized() {
        let (d, s) = adam_step(&OptimState::new(1), &[5.0], 0.01).unwrap();
        assert!((d[0] + 0.01).abs() < 1e-10);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn zero_gradient_no_move() {
        let (d, _) = adam_step(&OptimState::new(2), &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(d, vec![0.0, 0.0]);
    }

    #[test]
    fn adam_deterministic_and_rejects_nan() {
        let s = OptimState { first_moment: vec![0.3], second_moment: vec![0.2], step_count: 4 };
        assert_eq!(adam_step(&s, &[1.5], 0.01).unwrap(), adam_step(&s, &[1.5], 0.01).unwrap());
        assert!(matches!(adam_step(&s, &[f64::NAN], 0.01), Err(GpError::NonFiniteGradient(0))));
    }

    #[test]
    fn schedule_steps_exactly() {
        let ms = [0.5, 0.7, 0.9];
        assert_eq!(scheduled_lr(0.01, 0, 100, &ms, 0.1), 0.01);
        assert_eq!(scheduled_lr(0.01, 49, 100, &ms, 0.1), 0.01);
        assert_eq!(scheduled_lr(0.01, 50, 100, &ms, 0.1), 0.01 * 0.1);
        assert_eq!(scheduled_lr(0.01, 70, 100, &ms, 0.1), 0.01 * 0.1f64.powi(2));
        assert_eq!(scheduled_lr(0.01, 99, 100, &ms, 0.1), 0.01 * 0.1f64.powi(3));
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.schedule_milestones = vec![0.7, 0.5];
        assert!(c.validate().is_err());
        c.schedule_milestones = vec![0.5];
        c.lr = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        assert!(serde_json::from_str::<TrainConfig>(r#"{"method":"cg","bogus":1}"#).is_err());
        let c: TrainConfig = serde_json::from_str(r#"{"method":"rr_cg","iters":5}"#).unwrap();
        assert_eq!(c.method, Method::RrCg);
        assert_eq!(c.lr, 0.01);
    }
}
