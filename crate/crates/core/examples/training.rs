//! Adam on log-hyperparameters with each gradient estimator.

use bfgp::kernels::Hyperparams;
use bfgp::lab::gp_prior_dataset;
use bfgp::numerics::stream_rng;
use bfgp::training::{train, Method, TrainConfig};
use bfgp::truncation::TruncationSpec;

fn main() -> bfgp::Result<()> {
    let truth = Hyperparams::isotropic(1.0, 0.1, 0.01)?;
    let data = gp_prior_dataset(200, 1, &truth, &mut stream_rng(5, 0))?;
    let theta0 = Hyperparams::isotropic(0.5, 0.3, 0.1)?;
    println!("truth {:?}\n", truth.to_vec());
    println!("{:<10} {:>12} {:>40}", "method", "final nll", "final θ");
    for method in [Method::Cholesky, Method::Cg, Method::RrCg, Method::Rff, Method::SsRff] {
        let cfg = TrainConfig {
            method,
            iters: 150,
            lr: 0.05,
            probes: 8,
            rff_features: 50,
            ssrff_base: 50,
            ssrff_step: 25,
            rr_truncation: TruncationSpec::Exponential { lambda: 0.1, min: 10, max: None },
            precond_rank: 5,
            seed: 5,
            ..TrainConfig::default()
        };
        let rec = train(&data, &theta0, &cfg)?;
        let th: Vec<String> = rec.final_theta.to_vec().iter().map(|v| format!("{v:.4}")).collect();
        println!("{:<10} {:>12.3} {:>40}", method.name(), rec.final_exact_nll.unwrap_or(f64::NAN), th.join(", "));
    }
    Ok(())
}
