//! Exact (population-level) gradient dynamics for linear discriminators.
//!
//! Two settings: a Gaussian location game with `D(x) = ηᵀx` and
//! `G(z) = z + θ` ([`linear`]), and covariance learning with
//! `G(z) = Az` ([`covariance`]).

pub mod covariance;
pub mod linear;

use thiserror::Error;

pub use covariance::{
    covariance_descent, covariance_exact_loss, random_spd, shape_error, CovarianceExperimentSpec,
    CovarianceRun, DescentMode,
};
pub use linear::{
    exact_location_loss, run_dynamics, Coefficient, DynamicsRow, DynamicsTrace,
    LinearGaussianState, RateConvention, SigmaUpdate, Violation, ViolationKind,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("covariance is not symmetric positive-definite")]
    NotSpd,
    #[error("learning rate must be positive and finite, got {0}")]
    LearningRate(f64),
    #[error("coefficient {coefficient} outside (0, {upper}) for learning rate {lambda}")]
    CoefficientRange {
        coefficient: f64,
        lambda: f64,
        upper: f64,
    },
    #[error("steps must be at least 1")]
    ZeroSteps,
    #[error("{kind} violated first at t = {t}: {lhs} > {rhs}")]
    Violated {
        kind: ViolationKind,
        t: u64,
        lhs: f64,
        rhs: f64,
    },
    #[error("diverged at iteration {iteration} (error {error})")]
    Diverged { iteration: usize, error: f64 },
    #[error("invalid experiment: {0}")]
    Invalid(String),
}
