//! Quadrature ground truth: densities, divergences and the population
//! (infinite-sample) cumulant loss.

pub mod density;
pub mod divergence;
pub mod quadrature;

use thiserror::Error;

pub use density::{integrate_2d, Component, Component2D, Density1D, Density2D};
pub use divergence::{
    chi2_quadrature, hellinger_quadrature, hellinger_renyi_form, kl_quadrature, log_max_ratio,
    log_power_moment, optimal_discriminator, population_cumulant_loss, renyi_discrete,
    renyi_exact_order, renyi_quadrature, scaled_renyi_trend, DivergenceKind, DivergenceValue,
    LIMIT_THRESHOLD,
};
pub use quadrature::{integrate, Quadrature};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("quadrature did not converge (error {error:e}, target {target:e})")]
    NonConvergence { error: f64, target: f64 },
    #[error("integrand is not finite near x = {at}")]
    NonFiniteIntegrand { at: f64 },
    #[error("bad integration domain: {0}")]
    Domain(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("divergent integral: {0}")]
    Divergent(String),
    #[error("rényi order {0} needs the KL limit form")]
    RenyiEndpoint(f64),
    #[error("rényi order must be finite, got {0}")]
    InvalidOrder(f64),
}
