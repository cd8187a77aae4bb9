//! File-level entry points behind the command-line subcommands. Every
//! command writes its outputs plus a `manifest.json` into one directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data::{fmt_f64, fmt_opt, load_csv, load_csv_columns, write_dataset_csv, write_table, SyntheticSpec};
use super::experiments::{
    bias_sweep, estimator_check, lengthscale_bias_experiment, BiasSweepReport, EstimatorCheckConfig,
    EstimatorReport, LengthscaleStudy, LengthscaleStudyConfig, SweepMethod,
};
use crate::error::{GpError, Result};
use crate::exact_gp::posterior_predict;
use crate::kernels::{Dataset, Hyperparams};
use crate::training::{train, TrainConfig, TrainRecord};

/// Where a run's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        spec: SyntheticSpec,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        target: Option<String>,
        #[serde(default = "yes")]
        standardize: bool,
    },
}

fn yes() -> bool {
    true
}

impl DataSource {
    /// Loads the data; `force_raw` disables CSV standardization.
    pub fn load(&self, force_raw: bool) -> Result<Dataset> {
        match self {
            Self::Synthetic { spec, seed } => spec.generate(*seed),
            Self::Csv { path, target, standardize } => {
                Ok(load_csv(path, target.as_deref(), *standardize && !force_raw)?.dataset)
            }
        }
    }

    /// Hyperparameters the data was generated with, if known.
    pub fn true_theta(&self) -> Option<&Hyperparams> {
        match self {
            Self::Synthetic { spec: SyntheticSpec::GpPrior { theta, .. }, .. } => Some(theta),
            _ => None,
        }
    }
}

/// `train` subcommand configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    /// Starting hyperparameters; defaults to `o² = 1`, shared `ℓ = 1`, `σ² = 0.1`.
    #[serde(default)]
    pub init: Option<Hyperparams>,
    #[serde(default)]
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn initial_theta(&self) -> Result<Hyperparams> {
        match &self.init {
            Some(t) => Ok(t.clone()),
            None => Hyperparams::isotropic(1.0, 1.0, 0.1),
        }
    }
}

/// `bias-sweep` subcommand configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BiasSweepConfig {
    pub data: DataSource,
    /// Evaluation point; defaults to the generating θ of synthetic data.
    pub theta: Option<Hyperparams>,
    pub j_grid: Vec<usize>,
    pub replicas: usize,
    pub methods: Vec<SweepMethod>,
    pub seed: u64,
}

impl Default for BiasSweepConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic {
                spec: SyntheticSpec::GpPrior {
                    n: 300,
                    d: 1,
                    theta: Hyperparams::isotropic(1.0, 0.2, 0.01).expect("valid defaults"),
                },
                seed: 0,
            },
            theta: None,
            j_grid: vec![10, 20, 50, 100],
            replicas: 500,
            methods: vec![SweepMethod::Cg, SweepMethod::RrCg, SweepMethod::Rff, SweepMethod::SsRff],
            seed: 0,
        }
    }
}

/// Everything needed to reproduce a command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            threads: Some(rayon::current_num_threads()),
            config: serde_json::to_value(config)?,
            outputs: Vec::new(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path.as_ref())
        .map_err(|e| GpError::Io(format!("{}: {e}", path.as_ref().display())))?;
    serde_json::from_str(&text).map_err(|e| GpError::InvalidConfig(format!("{}: {e}", path.as_ref().display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn finish(dir: &Path, mut manifest: Manifest, files: Vec<PathBuf>) -> Result<Vec<PathBuf>> {
    manifest.outputs = files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect();
    let mut files = files;
    files.push(manifest.write(dir)?);
    Ok(files)
}

/// `gen-data`: writes `data.csv`.
pub fn run_gen_data(spec: &SyntheticSpec, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let data = spec.generate(seed)?;
    let path = out.join("data.csv");
    write_dataset_csv(&path, &data)?;
    finish(out, Manifest::new("gen-data", Some(seed), spec)?, vec![path])
}

/// Column names of the training-record CSV for a given θ shape.
pub fn train_record_header(theta: &Hyperparams) -> Vec<String> {
    let mut h = vec!["step".to_owned()];
    h.extend((0..theta.num_params()).map(|i| theta.param_name(i)));
    h.extend(["lr", "objective", "exact_nll", "grad_norm", "truncations", "wall_time_s"].map(String::from));
    h
}

pub fn write_train_record(path: &Path, record: &TrainRecord) -> Result<()> {
    let header = train_record_header(&record.final_theta);
    let rows: Vec<Vec<String>> = record
        .steps
        .iter()
        .map(|s| {
            let mut r = vec![s.step.to_string()];
            r.extend(s.theta.iter().map(|v| fmt_f64(*v)));
            r.extend([
                fmt_f64(s.lr),
                fmt_opt(s.objective),
                fmt_opt(s.exact_nll),
                fmt_f64(s.grad_norm),
                s.truncations.iter().map(usize::to_string).collect::<Vec<_>>().join(";"),
                fmt_f64(s.wall_time_s),
            ]);
            r
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(path, &header, &rows)
}

/// `train`: writes `train_record.csv`, `theta.json` (final raw θ) and
/// `record.json` (the full record).
pub fn run_train(cfg: &RunConfig, no_standardize: bool, out: &Path) -> Result<(TrainRecord, Vec<PathBuf>)> {
    fs::create_dir_all(out)?;
    let data = cfg.data.load(no_standardize)?;
    let theta0 = cfg.initial_theta()?;
    let record = train(&data, &theta0, &cfg.train)?;
    let csv_path = out.join("train_record.csv");
    write_train_record(&csv_path, &record)?;
    let theta_path = out.join("theta.json");
    write_json(&theta_path, &record.final_theta)?;
    let record_path = out.join("record.json");
    write_json(&record_path, &record)?;
    let mut resolved = cfg.clone();
    if no_standardize {
        if let DataSource::Csv { standardize, .. } = &mut resolved.data {
            *standardize = false;
        }
    }
    let manifest = Manifest::new("train", Some(cfg.train.seed), &resolved)?;
    let files = finish(out, manifest, vec![csv_path, theta_path, record_path])?;
    Ok((record, files))
}

/// `bias-sweep`: writes `bias_sweep.csv`.
pub fn run_bias_sweep(cfg: &BiasSweepConfig, no_standardize: bool, out: &Path) -> Result<(BiasSweepReport, Vec<PathBuf>)> {
    fs::create_dir_all(out)?;
    let data = cfg.data.load(no_standardize)?;
    let theta = cfg
        .theta
        .clone()
        .or_else(|| cfg.data.true_theta().cloned())
        .ok_or_else(|| GpError::InvalidConfig("bias sweep needs theta for non-synthetic data".into()))?;
    let report = bias_sweep(&data, &theta, &cfg.j_grid, cfg.replicas, &cfg.methods, cfg.seed)?;
    let path = out.join("bias_sweep.csv");
    write_table(&path, &BiasSweepReport::CSV_HEADER, &report.csv_rows())?;
    let files = finish(out, Manifest::new("bias-sweep", Some(cfg.seed), cfg)?, vec![path])?;
    Ok((report, files))
}

/// `lengthscale-bias`: writes `lengthscale_bias.csv`.
pub fn run_lengthscale_bias(cfg: &LengthscaleStudyConfig, out: &Path) -> Result<(LengthscaleStudy, Vec<PathBuf>)> {
    fs::create_dir_all(out)?;
    let study = lengthscale_bias_experiment(cfg)?;
    let path = out.join("lengthscale_bias.csv");
    write_table(&path, &LengthscaleStudy::CSV_HEADER, &study.csv_rows())?;
    let files = finish(out, Manifest::new("lengthscale-bias", Some(cfg.data_seed), cfg)?, vec![path])?;
    Ok((study, files))
}

/// `estimator-check`: writes `estimator_check.csv`.
pub fn run_estimator_check(cfg: &EstimatorCheckConfig, out: &Path) -> Result<(EstimatorReport, Vec<PathBuf>)> {
    fs::create_dir_all(out)?;
    let report = estimator_check(cfg)?;
    let path = out.join("estimator_check.csv");
    write_table(&path, &EstimatorReport::CSV_HEADER, &report.csv_rows())?;
    let files = finish(out, Manifest::new("estimator-check", Some(cfg.seed), cfg)?, vec![path])?;
    Ok((report, files))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictArgs {
    pub theta: PathBuf,
    pub train: PathBuf,
    pub test: PathBuf,
    pub target: Option<String>,
    pub standardize: bool,
}

/// `predict`: posterior mean and variance (including noise) at the test
/// inputs, written to `predictions.csv` in original target units.
pub fn run_predict(args: &PredictArgs, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let theta: Hyperparams = read_json(&args.theta)?;
    let train = load_csv(&args.train, args.target.as_deref(), args.standardize)?;
    let mut x_star = load_csv_columns(&args.test, &train.feature_names)?;
    let st = train.dataset.standardization.clone();
    if let Some(st) = &st {
        x_star = st.apply_x(&x_star);
    }
    let post = posterior_predict(&train.dataset, &theta, &x_star)?;
    let (mean, variance) = match &st {
        Some(st) => (st.unapply_y(&post.mean), post.variance.iter().map(|v| v * st.y_scale * st.y_scale).collect()),
        None => (post.mean.clone(), post.variance.clone()),
    };
    let rows: Vec<Vec<String>> = mean.iter().zip(&variance).map(|(m, v)| vec![fmt_f64(*m), fmt_f64(*v)]).collect();
    let path = out.join("predictions.csv");
    write_table(&path, &["mean", "variance"], &rows)?;
    finish(out, Manifest::new("predict", None, args)?, vec![path])
}
