//! Krylov machinery: mBCG with traces, preconditioning, SLQ and the
//! early-truncated CG gradient.

mod cg;
mod estimators;
mod precond;

pub use cg::{cg_column, cg_solve, mbcg, mbcg_columns, CgOptions, CgTrace, LinearOperator, MbcgOutput};
pub(crate) use estimators::assemble_gradient;
pub use estimators::{
    cg_estimate, invquad_cg, slq_logdet, slq_logdet_at, slq_probe_value, slq_quadrature,
    stochastic_grad_cg, CgEstimate,
};
pub use precond::{pivoted_cholesky, Preconditioner, PreconditionerKind};
