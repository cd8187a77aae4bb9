use std::path::PathBuf;
use std::process::ExitCode;

use bfgp::lab::{
    read_json, run_bias_sweep, run_estimator_check, run_gen_data, run_lengthscale_bias, run_predict, run_train,
    BiasSweepConfig, LengthscaleStudyConfig, PredictArgs, RunConfig, SyntheticSpec,
};
use bfgp::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bfgp", version, about = "GP hyperparameter learning with exact, truncated and bias-free estimators")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for replica loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    GenData {
        /// JSON synthetic spec; defaults to the toy sine with 100 points.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train hyperparameters from a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the training seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_standardize: bool,
    },
    /// Bias of the objective-term estimators against Cholesky.
    BiasSweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_standardize: bool,
    },
    /// Learned lengthscale under CG and RFF objectives on the toy sine data.
    LengthscaleBias {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the data seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Unbiasedness check of one estimator.
    EstimatorCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Posterior predictions at test inputs.
    Predict {
        /// Trained hyperparameters (theta.json from `train`).
        #[arg(long)]
        theta: PathBuf,
        /// Training CSV.
        #[arg(long)]
        train: PathBuf,
        /// Test CSV with the training feature columns.
        #[arg(long)]
        test: PathBuf,
        /// Target column name (default: last column).
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        no_standardize: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| bfgp::GpError::InvalidConfig(e.to_string()))?;
    }
    let out = &cli.global.out;
    let files = match cli.command {
        Command::GenData { config, seed } => {
            let spec = match config {
                Some(p) => read_json(p)?,
                None => SyntheticSpec::ToySine { n: 100, noise_sd: 0.1 },
            };
            run_gen_data(&spec, seed, out)?
        }
        Command::Train { config, seed, no_standardize } => {
            let mut cfg: RunConfig = read_json(config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            let (record, files) = run_train(&cfg, no_standardize, out)?;
            if let Some(nll) = record.final_exact_nll {
                println!("final exact total_nll: {nll}");
            }
            println!("final theta: {:?}", record.final_theta.to_vec());
            files
        }
        Command::BiasSweep { config, seed, no_standardize } => {
            let mut cfg: BiasSweepConfig = config.map(read_json).transpose()?.unwrap_or_default();
            if let Some(s) = seed {
                cfg.seed = s;
            }
            run_bias_sweep(&cfg, no_standardize, out)?.1
        }
        Command::LengthscaleBias { config, seed } => {
            let mut cfg: LengthscaleStudyConfig = config.map(read_json).transpose()?.unwrap_or_default();
            if let Some(s) = seed {
                cfg.data_seed = s;
            }
            run_lengthscale_bias(&cfg, out)?.1
        }
        Command::EstimatorCheck { config, seed } => {
            let mut cfg: bfgp::lab::EstimatorCheckConfig = read_json(config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (report, files) = run_estimator_check(&cfg, out)?;
            println!("{}", if report.pass { "PASS" } else { "FAIL" });
            files
        }
        Command::Predict { theta, train, test, target, no_standardize } => {
            let args = PredictArgs { theta, train, test, target, standardize: !no_standardize };
            run_predict(&args, out)?
        }
    };
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
