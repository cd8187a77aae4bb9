//! Learned lengthscales under truncated CG and RFF objectives compared with
//! the Cholesky optimum on the toy sine data.

use bfgp::lab::{lengthscale_bias_experiment, LengthscaleStudyConfig};
use bfgp::training::Method;

fn main() -> bfgp::Result<()> {
    let cfg = LengthscaleStudyConfig { seeds: vec![1], iters: 300, ..LengthscaleStudyConfig::default() };
    let study = lengthscale_bias_experiment(&cfg)?;
    println!("cholesky optimum ℓ = {:.4}, common start {:.4}\n", study.optimum, study.init);
    println!("{:<10} {:>5} {:>12} {:>12}", "method", "J", "ℓ", "log ratio");
    for row in study.rows.iter().filter(|r| r.method != Method::Cholesky) {
        println!("{:<10} {:>5} {:>12.4} {:>12.4}", row.method.name(), row.j, row.lengthscale, row.log_ratio);
    }
    Ok(())
}
