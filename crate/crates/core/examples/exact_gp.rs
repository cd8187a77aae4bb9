//! Exact GP regression: log marginal likelihood, its gradient, and posterior
//! predictions on the toy sine data.

use bfgp::exact_gp::{grad_exact, mll_exact, posterior_predict};
use bfgp::kernels::Hyperparams;
use bfgp::lab::{toy_sine_mean, SyntheticSpec};
use bfgp::numerics::DenseMatrix;

fn main() -> bfgp::Result<()> {
    let data = SyntheticSpec::ToySine { n: 100, noise_sd: 0.1 }.generate(0)?;
    let theta = Hyperparams::isotropic(0.25, 0.1, 0.01)?;

    let terms = mll_exact(&data, &theta)?;
    println!("logdet   {:>12.4}", terms.logdet);
    println!("invquad  {:>12.4}", terms.invquad);
    println!("nll      {:>12.4}", terms.total_nll);
    for (i, g) in grad_exact(&data, &theta)?.iter().enumerate() {
        println!("d nll / d {:<14} {g:>10.4}", theta.param_name(i));
    }

    let x_star = DenseMatrix::from_fn(5, 1, |i, _| 0.1 + 0.2 * i as f64);
    let post = posterior_predict(&data, &theta, &x_star)?;
    println!("\n{:>6} {:>10} {:>10} {:>10}", "x", "truth", "mean", "sd");
    for i in 0..5 {
        let x = x_star[(i, 0)];
        println!("{x:>6.2} {:>10.4} {:>10.4} {:>10.4}", toy_sine_mean(x), post.mean[i], post.variance[i].sqrt());
    }
    Ok(())
}
