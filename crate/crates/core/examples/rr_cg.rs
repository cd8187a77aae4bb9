//! Russian Roulette CG: random truncation depth with survival reweighting
//! gives an unbiased estimate of yᵀK̂⁻¹y at a fraction of the full cost.

use bfgp::kernels::{Hyperparams, KernelSystem};
use bfgp::krylov::Preconditioner;
use bfgp::lab::gp_prior_dataset;
use bfgp::numerics::{dot, mean_and_se, par_replicas, stream_rng};
use bfgp::truncation::exponential_with_mean;
use bfgp::unbiased::rrcg_solve;

fn main() -> bfgp::Result<()> {
    let n = 200;
    let theta = Hyperparams::isotropic(1.0, 0.1, 0.01)?;
    let data = gp_prior_dataset(n, 1, &theta, &mut stream_rng(2, 0))?;
    let sys = KernelSystem::new(&data, &theta)?;
    let exact = bfgp::exact_gp::mll_from_kernel(&sys.k, &sys.y)?.invquad;
    println!("exact yᵀK̂⁻¹y = {exact:.4}\n");
    println!("{:>6} {:>12} {:>10} {:>12}", "E[J]", "mean", "se", "mean depth");
    for mean_depth in [10.0, 20.0, 40.0] {
        let dist = exponential_with_mean(mean_depth, 1, n)?;
        let draws = par_replicas(2000, 2, mean_depth as u64, |_, rng| {
            let (x, j) = rrcg_solve(&sys.k, &sys.y, &dist, &Preconditioner::identity(), rng)?;
            Ok((dot(&x, &sys.y), j as f64))
        })?;
        let (mean, se) = mean_and_se(&draws.iter().map(|d| d.0).collect::<Vec<_>>());
        let (depth, _) = mean_and_se(&draws.iter().map(|d| d.1).collect::<Vec<_>>());
        println!("{mean_depth:>6} {mean:>12.4} {se:>10.4} {depth:>12.1}");
    }
    Ok(())
}
