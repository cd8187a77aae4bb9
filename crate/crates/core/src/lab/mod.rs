//! Data generation and ingestion, the bias and estimator experiments, and
//! the file-level commands used by the `bfgp` binary.

mod data;
mod experiments;
mod run;

pub use data::{
    fmt_f64, fmt_opt, gen_toy_sine, gp_prior_dataset, load_csv, load_csv_columns, read_numeric_csv,
    sample_gp_prior, toy_sine_mean, write_dataset_csv, write_table, CsvData, SyntheticSpec, PRIOR_JITTER,
};
pub use experiments::{
    bias_sweep, estimator_check, lengthscale_bias_experiment, BiasRow, BiasSweepReport, CheckKind,
    CheckRow, EstimatorCheckConfig, EstimatorReport, InstanceSpec, LengthscaleRow, LengthscaleStudy,
    LengthscaleStudyConfig, SweepMethod,
};
pub use run::{
    read_json, run_bias_sweep, run_estimator_check, run_gen_data, run_lengthscale_bias, run_predict,
    run_train, train_record_header, write_train_record, BiasSweepConfig, DataSource, Manifest,
    PredictArgs, RunConfig,
};
