//! Pivoted-Cholesky preconditioning cuts the CG iterations needed to reach
//! a residual tolerance on a small-noise kernel system.

use bfgp::kernels::{Hyperparams, KernelSystem};
use bfgp::krylov::{cg_solve, CgOptions, PreconditionerKind};
use bfgp::lab::gp_prior_dataset;
use bfgp::numerics::stream_rng;

fn main() -> bfgp::Result<()> {
    let theta = Hyperparams::isotropic(1.0, 0.2, 1e-3)?;
    let data = gp_prior_dataset(400, 1, &theta, &mut stream_rng(6, 0))?;
    let sys = KernelSystem::new(&data, &theta)?;
    println!("{:>6} {:>12}", "rank", "iterations");
    for rank in [0, 5, 10, 20, 40] {
        let kind = if rank == 0 { PreconditionerKind::Identity } else { PreconditionerKind::PivotedCholesky { rank } };
        let pc = sys.preconditioner(kind)?;
        let (_, trace) = cg_solve(&sys.k, &sys.y, &pc, &CgOptions::converged(400, 1e-8))?;
        println!("{rank:>6} {:>12}", trace.active_iterations());
    }
    Ok(())
}
