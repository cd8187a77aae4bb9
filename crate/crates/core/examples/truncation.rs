//! Randomized truncation of a scalar series: Russian Roulette and Single
//! Sample estimators recover the full sum in expectation.

use bfgp::numerics::{mean_and_se, par_replicas};
use bfgp::truncation::{make_exponential, make_harmonic, rr_combine, ss_combine, SliceSeries};

fn main() -> bfgp::Result<()> {
    let deltas: Vec<f64> = (1..=50).map(|j| 1.0 / (j * j) as f64).collect();
    let total: f64 = deltas.iter().sum();
    println!("series sum {total:.6}\n");
    println!("{:<24} {:>10} {:>10} {:>10}", "estimator", "mean", "se", "E[J]");
    for (name, dist) in [("exponential(0.1)", make_exponential(0.1, 1, 50)?), ("harmonic", make_harmonic(1, 50)?)] {
        for single in [false, true] {
            let draws = par_replicas(20_000, 4, single as u64, |_, rng| {
                let j = dist.sample(rng);
                let mut s = SliceSeries::scalars(&deltas);
                if single { ss_combine(&mut s, &dist, j) } else { rr_combine(&mut s, &dist, j) }
            })?;
            let (mean, se) = mean_and_se(&draws);
            let label = format!("{} {name}", if single { "ss" } else { "rr" });
            println!("{label:<24} {mean:>10.6} {se:>10.6} {:>10.2}", dist.mean());
        }
    }
    Ok(())
}
