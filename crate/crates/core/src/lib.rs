//! Gaussian-process hyperparameter learning with exact (Cholesky),
//! early-truncated conjugate-gradient and random-Fourier-feature
//! objectives, plus the bias-free randomized-truncation estimators
//! RR-CG (Russian-roulette CG) and SS-RFF (single-sample RFF).
//!
//! Module map:
//!
//! - [`numerics`]: dense matrices, Cholesky, tridiagonal eigensolver, seeded streams.
//! - [`kernels`]: RBF/ARD kernel, Gram matrices and their derivatives.
//! - [`exact_gp`]: Cholesky ground truth for the objective, gradient and posterior.
//! - [`krylov`]: mBCG with traces, pivoted-Cholesky preconditioning, SLQ.
//! - [`rff`]: random Fourier features and the Woodbury likelihood path.
//! - [`truncation`]: truncation distributions and the RR / SS combiners.
//! - [`unbiased`]: RR-CG and SS-RFF.
//! - [`training`]: log reparameterization, Adam, training loop.
//! - [`lab`]: data generation and ingestion, bias experiments, CSV/JSON I/O.

pub mod error;
pub mod exact_gp;
pub mod kernels;
pub mod krylov;
pub mod lab;
pub mod numerics;
pub mod rff;
pub mod training;
pub mod truncation;
pub mod unbiased;

pub use error::{GpError, Result};
