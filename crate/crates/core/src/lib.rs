//! Cumulant GAN: a two-parameter family of adversarial losses built from
//! cumulant generating functions, with the tools to train and verify it.
//!
//! - [`diffcore`]: dense matrices, a reverse-mode tape with double
//!   backprop, small MLPs.
//! - [`cumulant`]: the loss, its stabilised estimator, sample weights and
//!   the divergence preset table.
//! - [`dynamics`]: exact gradient dynamics for linear discriminators.
//! - [`oracles`]: quadrature ground truth for Rényi/KL/Hellinger/χ².
//! - [`trainer`]: the weighted SGD training loop with gradient penalty.
//! - [`experiments`]: drivers behind the `cumgan` command line.

pub mod cumulant;
pub mod diffcore;
pub mod dynamics;
pub mod experiments;
pub mod oracles;
pub mod trainer;

