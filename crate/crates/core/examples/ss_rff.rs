//! Single Sample RFF: one importance-weighted block of a telescoping series
//! over growing feature counts, closed by the exact kernel.

use bfgp::exact_gp::mll_exact;
use bfgp::kernels::Hyperparams;
use bfgp::lab::gp_prior_dataset;
use bfgp::numerics::{mean_and_se, par_replicas, stream_rng};
use bfgp::truncation::make_harmonic;
use bfgp::unbiased::{ssrff_mll, SsRffConfig};

fn main() -> bfgp::Result<()> {
    let n = 100;
    let theta = Hyperparams::isotropic(1.0, 0.2, 0.05)?;
    let data = gp_prior_dataset(n, 1, &theta, &mut stream_rng(3, 0))?;
    let exact = mll_exact(&data, &theta)?;
    println!("exact logdet {:.3}, invquad {:.3}\n", exact.logdet, exact.invquad);
    println!("{:>4} {:>4} {:>6} {:>20} {:>20} {:>10}", "J0", "c", "H", "logdet ± se", "invquad ± se", "closing");
    for (base, step) in [(5, 5), (10, 10), (20, 10)] {
        let h = SsRffConfig::closing_block(n, base, step)?;
        let cfg = SsRffConfig::new(base, step, make_harmonic(1, h)?)?;
        let draws = par_replicas(3000, 3, (base * 100 + step) as u64, |_, rng| ssrff_mll(&data, &theta, &cfg, rng))?;
        let (ld, ld_se) = mean_and_se(&draws.iter().map(|d| d.terms.logdet).collect::<Vec<_>>());
        let (iq, iq_se) = mean_and_se(&draws.iter().map(|d| d.terms.invquad).collect::<Vec<_>>());
        let closing = draws.iter().filter(|d| d.cost.closing_block).count() as f64 / draws.len() as f64;
        println!("{base:>4} {step:>4} {h:>6} {ld:>11.3} ± {ld_se:<6.3} {iq:>11.3} ± {iq_se:<6.3} {closing:>10.3}");
    }
    Ok(())
}
