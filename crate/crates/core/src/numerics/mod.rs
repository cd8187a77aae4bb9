//! Dense linear algebra and random-number substrate.

mod cholesky;
mod matrix;
mod random;
mod tridiag;

pub use cholesky::{
    backward_substitute, cholesky_factor, forward_substitute, inverse_from_chol,
    logdet_from_chol, lower_triangular_inverse, solve_posdef, solve_posdef_vec,
};
pub use matrix::{axpy, dot, norm2, DenseMatrix};
pub use random::{
    child_stream, mean_and_se, par_replicas, sample_probes, standard_normal_vec, stream_rng, GpRng, ProbeKind, ProbeSet,
};
pub use tridiag::{eig_sym_tridiag, SymTridiagonal, TridiagEigen};
