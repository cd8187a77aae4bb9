//! Desk-scale experiments: estimator bias sweeps, the learned-lengthscale
//! study and Monte-Carlo or enumeration checks of unbiasedness.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::{fmt_f64, gen_toy_sine, gp_prior_dataset};
use crate::error::{GpError, Result};
use crate::exact_gp::{grad_exact, mll_exact, MllTerms};
use crate::kernels::{Dataset, Hyperparams, KernelSystem};
use crate::krylov::{invquad_cg, mbcg_columns, slq_probe_value, CgOptions, Preconditioner};
use crate::numerics::{
    cholesky_factor, dot, mean_and_se, par_replicas, sample_probes, solve_posdef_vec, stream_rng,
    ProbeKind,
};
use crate::rff::{feature_map, mll_rff, sample_features};
use crate::training::{train, Method, TrainConfig, Trainable};
use crate::truncation::{
    exponential_with_mean, make_harmonic, rr_combine, ss_combine, SliceSeries, TruncationSpec,
};
use crate::unbiased::{
    rrcg_grad_system, rrcg_logdet_telescope_at, rrcg_solve_at, ssrff_mll, ssrff_mll_at, SsRffConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMethod {
    Cg,
    RrCg,
    Rff,
    SsRff,
}

impl SweepMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cg => "cg",
            Self::RrCg => "rr_cg",
            Self::Rff => "rff",
            Self::SsRff => "ss_rff",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub method: SweepMethod,
    /// CG iterations, expected RR-CG iterations, RFF basis functions, or
    /// SS-RFF base basis functions.
    pub j: usize,
    pub logdet_mean: f64,
    pub logdet_se: f64,
    pub invquad_mean: f64,
    pub invquad_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSweepReport {
    pub exact: MllTerms,
    pub replicas: usize,
    pub rows: Vec<BiasRow>,
}

impl BiasSweepReport {
    pub fn row(&self, method: SweepMethod, j: usize) -> Option<&BiasRow> {
        self.rows.iter().find(|r| r.method == method && r.j == j)
    }

    pub const CSV_HEADER: [&'static str; 10] = [
        "method",
        "j",
        "replicas",
        "logdet_mean",
        "logdet_se",
        "logdet_exact",
        "invquad_mean",
        "invquad_se",
        "invquad_exact",
        "total_nll_exact",
    ];

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.method.name().to_owned(),
                    r.j.to_string(),
                    self.replicas.to_string(),
                    fmt_f64(r.logdet_mean),
                    fmt_f64(r.logdet_se),
                    fmt_f64(self.exact.logdet),
                    fmt_f64(r.invquad_mean),
                    fmt_f64(r.invquad_se),
                    fmt_f64(self.exact.invquad),
                    fmt_f64(self.exact.total_nll),
                ]
            })
            .collect()
    }
}

const SWEEP_STREAM: u64 = 0x5EE9;

/// Estimates both objective terms for every `(method, J)` pair.
///
/// * `cg`: `u_J` from the `y` solve (deterministic, SE 0) and SLQ from
///   `replicas` Rademacher probes, all read off one mBCG run per probe.
/// * `rr_cg`: exponential truncation on `{1..N}` with mean `J`; each
///   replica draws independent depths for `yᵀK̂⁻¹y` and the SLQ telescope.
/// * `rff`: `J` basis functions, fresh frequencies per replica.
/// * `ss_rff`: base and step of `J/2` frequencies, harmonic block
///   distribution, fresh nested frequencies per replica.
pub fn bias_sweep(
    data: &Dataset,
    theta: &Hyperparams,
    j_grid: &[usize],
    replicas: usize,
    methods: &[SweepMethod],
    seed: u64,
) -> Result<BiasSweepReport> {
    if replicas < 2 {
        return Err(GpError::InvalidConfig("bias sweep needs at least 2 replicas".into()));
    }
    let exact = mll_exact(data, theta)?;
    let n = data.len();
    let mut rows = Vec::new();
    for &method in methods {
        match method {
            SweepMethod::Cg => rows.extend(cg_rows(data, theta, j_grid, replicas, seed)?),
            SweepMethod::RrCg => {
                let sys = KernelSystem::new(data, theta)?;
                for (gi, &j) in j_grid.iter().enumerate() {
                    let dist = exponential_with_mean(j as f64, 1, n)?;
                    let out = par_replicas(replicas, seed, SWEEP_STREAM ^ (0x100 + gi as u64), |_, rng| {
                        let jy = dist.sample(rng);
                        let sol = rrcg_solve_at(&sys.k, &sys.y, &dist, &Preconditioner::identity(), jy)?;
                        let z = sample_probes(n, 1, ProbeKind::Rademacher, rng.random()).probes.remove(0);
                        let jz = dist.sample(rng);
                        let ld = rrcg_logdet_telescope_at(&sys.k, &dist, &z, jz)?;
                        Ok((ld, dot(&sys.y, &sol)))
                    })?;
                    rows.push(summarize(method, j, &out));
                }
            }
            SweepMethod::Rff => {
                for (gi, &j) in j_grid.iter().enumerate() {
                    let out = par_replicas(replicas, seed, SWEEP_STREAM ^ (0x200 + gi as u64), |_, rng| {
                        let f = sample_features(theta, data.dim(), j, rng.random())?;
                        let t = mll_rff(&feature_map(&data.x, &f, j / 2)?, &data.y, theta.noise_sq)?;
                        Ok((t.logdet, t.invquad))
                    })?;
                    rows.push(summarize(method, j, &out));
                }
            }
            SweepMethod::SsRff => {
                for (gi, &j) in j_grid.iter().enumerate() {
                    let pairs = (j / 2).max(1);
                    let h = SsRffConfig::closing_block(n, pairs, pairs)?;
                    let cfg = SsRffConfig::new(pairs, pairs, make_harmonic(1, h)?)?;
                    let out = par_replicas(replicas, seed, SWEEP_STREAM ^ (0x300 + gi as u64), |_, rng| {
                        let t = ssrff_mll(data, theta, &cfg, rng)?.terms;
                        Ok((t.logdet, t.invquad))
                    })?;
                    rows.push(summarize(method, j, &out));
                }
            }
        }
    }
    Ok(BiasSweepReport { exact, replicas, rows })
}

fn summarize(method: SweepMethod, j: usize, out: &[(f64, f64)]) -> BiasRow {
    let ld: Vec<f64> = out.iter().map(|o| o.0).collect();
    let iq: Vec<f64> = out.iter().map(|o| o.1).collect();
    let (logdet_mean, logdet_se) = mean_and_se(&ld);
    let (invquad_mean, invquad_se) = mean_and_se(&iq);
    BiasRow { method, j, logdet_mean, logdet_se, invquad_mean, invquad_se }
}

fn cg_rows(data: &Dataset, theta: &Hyperparams, j_grid: &[usize], replicas: usize, seed: u64) -> Result<Vec<BiasRow>> {
    let sys = KernelSystem::new(data, theta)?;
    let n = data.len();
    let jmax = j_grid.iter().copied().max().unwrap_or(1);
    let y_trace = mbcg_columns(&sys.k, &[sys.y.clone()], &Preconditioner::identity(), &CgOptions::fixed(jmax))?
        .traces
        .remove(0);
    let u = invquad_cg(&y_trace);
    let per_probe = par_replicas(replicas, seed, SWEEP_STREAM, |_, rng| {
        let z = sample_probes(n, 1, ProbeKind::Rademacher, rng.random()).probes.remove(0);
        let opts = CgOptions::fixed(jmax).without_solutions();
        let trace = mbcg_columns(&sys.k, &[z.clone()], &Preconditioner::identity(), &opts)?.traces.remove(0);
        let scale = dot(&z, &z);
        j_grid.iter().map(|&j| slq_probe_value(&trace, scale, j)).collect::<Result<Vec<f64>>>()
    })?;
    Ok(j_grid
        .iter()
        .enumerate()
        .map(|(gi, &j)| {
            let ld: Vec<f64> = per_probe.iter().map(|v| v[gi]).collect();
            let (logdet_mean, logdet_se) = mean_and_se(&ld);
            let invquad = u.get(j.min(u.len()).max(1) - 1).copied().unwrap_or(0.0);
            BiasRow { method: SweepMethod::Cg, j, logdet_mean, logdet_se, invquad_mean: invquad, invquad_se: 0.0 }
        })
        .collect())
}

/// Settings of the learned-lengthscale study on the toy sine data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LengthscaleStudyConfig {
    pub n: usize,
    pub noise_sd: f64,
    /// Frozen outputscale `o²`; the noise is frozen at `noise_sd²`.
    pub outputscale_sq: f64,
    pub data_seed: u64,
    pub seeds: Vec<u64>,
    pub cg_grid: Vec<usize>,
    pub rff_grid: Vec<usize>,
    pub iters: usize,
    pub lr: f64,
    pub probes: usize,
    /// Basis probes with `probes = n` make the CG trace term exact, so CG
    /// runs differ from Cholesky only through truncation.
    pub probe_kind: ProbeKind,
    /// Lengthscale the Cholesky reference search starts from.
    pub reference_init: f64,
    pub reference_iters: usize,
    pub reference_lr: f64,
    /// Common start as a multiple of the Cholesky optimum.
    pub init_factor: f64,
}

impl Default for LengthscaleStudyConfig {
    fn default() -> Self {
        Self {
            n: 100,
            noise_sd: 0.1,
            outputscale_sq: 0.25,
            data_seed: 0,
            seeds: vec![1, 2, 3],
            cg_grid: vec![5, 15, 45],
            rff_grid: vec![20, 100, 500],
            iters: 500,
            lr: 0.02,
            probes: 100,
            probe_kind: ProbeKind::Basis,
            reference_init: 0.2,
            reference_iters: 600,
            reference_lr: 0.05,
            init_factor: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthscaleRow {
    pub method: Method,
    /// CG iterations or RFF basis functions; 0 for Cholesky.
    pub j: usize,
    pub seed: u64,
    pub lengthscale: f64,
    pub reference: f64,
    /// `log(ℓ_method / ℓ_cholesky)`
    pub log_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthscaleStudy {
    /// Cholesky optimum found from `reference_init`.
    pub optimum: f64,
    pub init: f64,
    pub rows: Vec<LengthscaleRow>,
}

impl LengthscaleStudy {
    pub const CSV_HEADER: [&'static str; 6] = ["method", "j", "seed", "lengthscale", "reference", "log_ratio"];

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.method.name().to_owned(),
                    r.j.to_string(),
                    r.seed.to_string(),
                    fmt_f64(r.lengthscale),
                    fmt_f64(r.reference),
                    fmt_f64(r.log_ratio),
                ]
            })
            .collect()
    }

    pub fn log_ratios(&self, method: Method, j: usize) -> Vec<f64> {
        self.rows.iter().filter(|r| r.method == method && r.j == j).map(|r| r.log_ratio).collect()
    }
}

/// Trains only `ℓ` on toy data under Cholesky, CG and RFF objectives from
/// a common start `init_factor × ℓ*`, where `ℓ*` is the Cholesky optimum.
/// The per-seed Cholesky run from that start is the reference.
pub fn lengthscale_bias_experiment(cfg: &LengthscaleStudyConfig) -> Result<LengthscaleStudy> {
    let data = gen_toy_sine(cfg.n, cfg.noise_sd, &mut stream_rng(cfg.data_seed, 0xDA7A))?;
    let noise_sq = cfg.noise_sd * cfg.noise_sd;
    if !(noise_sq > 0.0) {
        return Err(GpError::InvalidConfig("lengthscale study needs positive noise".into()));
    }
    let base = TrainConfig {
        trainable: Trainable::lengthscale_only(),
        exact_telemetry: Some(false),
        probes: cfg.probes,
        probe_kind: cfg.probe_kind,
        ..TrainConfig::default()
    };
    let reference_cfg = TrainConfig { method: Method::Cholesky, iters: cfg.reference_iters, lr: cfg.reference_lr, ..base.clone() };
    let start = Hyperparams::isotropic(cfg.outputscale_sq, cfg.reference_init, noise_sq)?;
    let optimum = train(&data, &start, &reference_cfg)?.final_theta.lengthscales[0];
    let init = cfg.init_factor * optimum;
    let theta0 = Hyperparams::isotropic(cfg.outputscale_sq, init, noise_sq)?;

    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        jobs.push((Method::Cholesky, 0, seed));
        jobs.extend(cfg.cg_grid.iter().map(|&j| (Method::Cg, j, seed)));
        jobs.extend(cfg.rff_grid.iter().map(|&j| (Method::Rff, j, seed)));
    }
    // With a full basis probe set the CG runs are deterministic, so one run
    // per J serves every seed.
    let deterministic_cg = cfg.probe_kind == ProbeKind::Basis && cfg.probes >= cfg.n;
    let run_seed = |method: Method, seed: u64| match method {
        Method::Cholesky => 0,
        Method::Cg if deterministic_cg => 0,
        _ => seed,
    };
    let mut unique: Vec<(Method, usize, u64)> = jobs.iter().map(|&(m, j, s)| (m, j, run_seed(m, s))).collect();
    unique.sort_by_key(|&(m, j, s)| (m.name(), j, s));
    unique.dedup();
    use rayon::prelude::*;
    let unique_learned: Vec<f64> = unique
        .par_iter()
        .map(|&(method, j, seed)| {
            let tc = TrainConfig {
                method,
                iters: cfg.iters,
                lr: cfg.lr,
                cg_iters: j.max(1),
                rff_features: j.max(2),
                seed,
                ..base.clone()
            };
            Ok(train(&data, &theta0, &tc)?.final_theta.lengthscales[0])
        })
        .collect::<Result<_>>()?;
    let learned: Vec<f64> = jobs
        .iter()
        .map(|&(m, j, s)| {
            let key = (m, j, run_seed(m, s));
            unique_learned[unique.iter().position(|u| *u == key).expect("job scheduled")]
        })
        .collect();
    let reference_for = |seed: u64| {
        jobs.iter()
            .zip(&learned)
            .find(|((m, _, s), _)| *m == Method::Cholesky && *s == seed)
            .map(|(_, l)| *l)
            .expect("cholesky job per seed")
    };
    let rows = jobs
        .iter()
        .zip(&learned)
        .map(|(&(method, j, seed), &lengthscale)| {
            let reference = reference_for(seed);
            LengthscaleRow { method, j, seed, lengthscale, reference, log_ratio: (lengthscale / reference).ln() }
        })
        .collect();
    Ok(LengthscaleStudy { optimum, init, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Rr,
    Ss,
    RrCgSolve,
    RrCgGrad,
    SsRffMll,
}

/// GP regression instance drawn from its own prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub n: usize,
    #[serde(default = "one")]
    pub d: usize,
    pub theta: Hyperparams,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl InstanceSpec {
    pub fn dataset(&self) -> Result<Dataset> {
        gp_prior_dataset(self.n, self.d, &self.theta, &mut stream_rng(self.seed, 0x1257))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorCheckConfig {
    pub kind: CheckKind,
    pub replicas: usize,
    pub dist: TruncationSpec,
    pub instance: InstanceSpec,
    /// SS-RFF base and step (frequencies).
    #[serde(default = "one")]
    pub ssrff_base: usize,
    #[serde(default = "one")]
    pub ssrff_step: usize,
    /// Use exact enumeration when `support size ≤ enumeration_budget`.
    #[serde(default = "default_budget")]
    pub enumeration_budget: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_budget() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub output: String,
    pub mean: f64,
    pub se: f64,
    pub exact: f64,
    /// `(mean − exact)/SE`; for enumeration, 0 when the identity holds.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub kind: CheckKind,
    pub enumerated: bool,
    pub replicas: usize,
    pub rows: Vec<CheckRow>,
    pub pass: bool,
}

impl EstimatorReport {
    pub const CSV_HEADER: [&'static str; 6] = ["output", "mean", "se", "exact", "z", "pass"];

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.output.clone(),
                    fmt_f64(r.mean),
                    fmt_f64(r.se),
                    fmt_f64(r.exact),
                    fmt_f64(r.z),
                    (r.z.abs() <= 3.0).to_string(),
                ]
            })
            .collect()
    }
}

/// Relative tolerance for enumeration identities.
const ENUM_TOL: f64 = 1e-10;

fn enumerated_rows(names: &[String], means: &[f64], exact: &[f64]) -> (Vec<CheckRow>, bool) {
    let mut pass = true;
    let rows = names
        .iter()
        .zip(means.iter().zip(exact))
        .map(|(name, (&m, &e))| {
            let ok = (m - e).abs() <= ENUM_TOL * e.abs().max(1.0);
            pass &= ok;
            CheckRow { output: name.clone(), mean: m, se: 0.0, exact: e, z: if ok { 0.0 } else { f64::INFINITY } }
        })
        .collect();
    (rows, pass)
}

fn monte_carlo_rows(names: &[String], samples: &[Vec<f64>], exact: &[f64]) -> (Vec<CheckRow>, bool) {
    let mut pass = true;
    let rows = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let col: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            let (mean, se) = mean_and_se(&col);
            let z = if se > 0.0 {
                (mean - exact[k]) / se
            } else if (mean - exact[k]).abs() <= ENUM_TOL * exact[k].abs().max(1.0) {
                0.0
            } else {
                f64::INFINITY
            };
            pass &= z.abs() <= 3.0;
            CheckRow { output: name.clone(), mean, se, exact: exact[k], z }
        })
        .collect();
    (rows, pass)
}

/// Checks an estimator against its exact target, by enumerating the
/// truncation when the support is small enough and by Monte Carlo otherwise.
pub fn estimator_check(cfg: &EstimatorCheckConfig) -> Result<EstimatorReport> {
    let n = cfg.instance.n;
    let mut rng = stream_rng(cfg.seed, 0xC4EC);
    let (rows, pass, enumerated) = match cfg.kind {
        CheckKind::Rr | CheckKind::Ss => {
            let dist = cfg.dist.build(n)?;
            let deltas: Vec<f64> = (0..dist.support_max()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let exact: f64 = deltas.iter().sum();
            let mut mean = 0.0;
            for j in dist.support() {
                if dist.pmf(j) == 0.0 {
                    continue;
                }
                let mut s = SliceSeries::scalars(&deltas);
                let v = if cfg.kind == CheckKind::Rr { rr_combine(&mut s, &dist, j)? } else { ss_combine(&mut s, &dist, j)? };
                mean += dist.pmf(j) * v;
            }
            let (rows, pass) = enumerated_rows(&["sum".into()], &[mean], &[exact]);
            (rows, pass, true)
        }
        CheckKind::RrCgSolve => {
            let data = cfg.instance.dataset()?;
            let sys = KernelSystem::new(&data, &cfg.instance.theta)?;
            let dist = cfg.dist.build(n)?;
            let exact = solve_posdef_vec(&cholesky_factor(&sys.k, 0.0)?, &sys.y)?;
            let names: Vec<String> = (0..n).map(|i| format!("x[{i}]")).collect();
            if dist.support().count() <= cfg.enumeration_budget {
                let mut mean = vec![0.0; n];
                for j in dist.support() {
                    let x = rrcg_solve_at(&sys.k, &sys.y, &dist, &Preconditioner::identity(), j)?;
                    mean.iter_mut().zip(&x).for_each(|(m, v)| *m += dist.pmf(j) * v);
                }
                let (rows, pass) = enumerated_rows(&names, &mean, &exact);
                (rows, pass, true)
            } else {
                let samples = par_replicas(cfg.replicas, cfg.seed, 0xC4EC_01, |_, rng| {
                    let j = dist.sample(rng);
                    rrcg_solve_at(&sys.k, &sys.y, &dist, &Preconditioner::identity(), j)
                })?;
                let (rows, pass) = monte_carlo_rows(&names, &samples, &exact);
                (rows, pass, false)
            }
        }
        CheckKind::RrCgGrad => {
            let data = cfg.instance.dataset()?;
            let theta = &cfg.instance.theta;
            let sys = KernelSystem::new(&data, theta)?;
            let dist = cfg.dist.build(n)?;
            let exact = grad_exact(&data, theta)?;
            let names: Vec<String> = (0..theta.num_params()).map(|i| format!("grad[{}]", theta.param_name(i))).collect();
            let samples = par_replicas(cfg.replicas, cfg.seed, 0xC4EC_02, |_, rng| {
                let probes = sample_probes(n, 1, ProbeKind::Rademacher, rng.random());
                Ok(rrcg_grad_system(&sys, &dist, &probes, &Preconditioner::identity(), rng)?.grad)
            })?;
            let (rows, pass) = monte_carlo_rows(&names, &samples, &exact);
            (rows, pass, false)
        }
        CheckKind::SsRffMll => {
            let data = cfg.instance.dataset()?;
            let theta = &cfg.instance.theta;
            let h = SsRffConfig::closing_block(n, cfg.ssrff_base, cfg.ssrff_step)?;
            let ss = SsRffConfig::new(cfg.ssrff_base, cfg.ssrff_step, cfg.dist.build(h)?)?;
            let exact_terms = mll_exact(&data, theta)?;
            let exact = [exact_terms.logdet, exact_terms.invquad];
            let names = ["logdet".to_owned(), "invquad".to_owned()];
            if ss.dist.support().count() <= cfg.enumeration_budget {
                let f = sample_features(theta, data.dim(), 2 * ss.max_pairs(), rng.random())?;
                let (mut ld, mut iq) = (0.0, 0.0);
                for j in ss.dist.support() {
                    let p = ss.dist.pmf(j);
                    if p == 0.0 {
                        continue;
                    }
                    let t = ssrff_mll_at(&data, theta, &ss, &f, j)?;
                    ld += p * t.logdet;
                    iq += p * t.invquad;
                }
                let (rows, pass) = enumerated_rows(&names, &[ld, iq], &exact);
                (rows, pass, true)
            } else {
                let samples = par_replicas(cfg.replicas, cfg.seed, 0xC4EC_03, |_, rng| {
                    let t = ssrff_mll(&data, theta, &ss, rng)?.terms;
                    Ok(vec![t.logdet, t.invquad])
                })?;
                let (rows, pass) = monte_carlo_rows(&names, &samples, &exact);
                (rows, pass, false)
            }
        }
    };
    Ok(EstimatorReport { kind: cfg.kind, enumerated, replicas: if enumerated { 0 } else { cfg.replicas }, rows, pass })
}
