//! Gradient descent–ascent on the exact location loss
//! `ηᵀ(μ − θ) − (b/2) ηᵀΣη` with `x ~ N(μ, Σ)`, `z ~ N(0, Σ)`.
//!
//! The update is simultaneous: `η` ascends and `θ` descends from the same
//! iterate. In whitened coordinates `ξ = Lᵀη`, `e = μ − θ` it reads
//! `ξ' = ξ + λ(e − bξ)`, `e' = e − λξ`, and the quadratic
//! `E_k = |ξ|² − k ξᵀe + |e|²` is the Lyapunov function used throughout.
//!
//! With `k = b` the recursion is exact: `E_b' = (1 − λb + λ²) E_b`.
//! [`RateConvention::Stated`] checks the sharper factor `1 − λb` against
//! `E_b` for `b ≤ 1` and `E_{1/b}` above; that factor is not implied by the
//! update, so the stated checks fail and report where.

use std::fmt;
use std::str::FromStr;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::DynamicsError;
use crate::diffcore::{dot, norm_sq, Matrix};

/// Which coefficient multiplies `ηᵀΣη` in the update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coefficient {
    /// `β` alone, with `γ` ignored.
    Beta,
    /// `β + γ`, the full exact loss.
    BetaPlusGamma,
}

/// Update rule when `Σ ≠ I`. Both coincide at `Σ = I`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SigmaUpdate {
    /// `η += λ(L⁻ᵀ(μ − θ) − bη)`, `θ += λLᵀη`: the location game in
    /// whitened coordinates, for which the Cholesky energy is a Lyapunov
    /// function.
    Whitened,
    /// Plain gradients of the exact loss: `η += λ(μ − θ − bΣη)`,
    /// `θ += λη`.
    LossGradient,
}

/// Convergence rate and energy used by [`run_dynamics`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateConvention {
    /// Factor `1 − λb`, energy `E_b` (`b ≤ 1`) or `E_{1/b}` (`b ≥ 1`),
    /// bound constant `2 E(0)`. Defined for `0 < b < 1/λ`.
    Stated,
    /// Factor `1 − λb + λ²`, energy `E_b`, bound constant `2 E(0)` for
    /// `b ≤ 1` and `E(0) / (1 − b/2)` above. Defined for `0 < b < 2`,
    /// `λb < 1`.
    Exact,
}

impl fmt::Display for RateConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RateConvention::Stated => "stated",
            RateConvention::Exact => "exact",
        })
    }
}

impl FromStr for RateConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "stated" => Ok(RateConvention::Stated),
            "exact" => Ok(RateConvention::Exact),
            other => Err(format!("unknown rate convention `{other}` (stated|exact)")),
        }
    }
}

impl FromStr for Coefficient {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "beta" => Ok(Coefficient::Beta),
            "beta-plus-gamma" => Ok(Coefficient::BetaPlusGamma),
            other => Err(format!("unknown coefficient `{other}` (beta|beta-plus-gamma)")),
        }
    }
}

impl FromStr for SigmaUpdate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "whitened" => Ok(SigmaUpdate::Whitened),
            "loss-gradient" => Ok(SigmaUpdate::LossGradient),
            other => Err(format!("unknown sigma update `{other}` (whitened|loss-gradient)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussianState {
    pub eta: Vec<f64>,
    pub theta: Vec<f64>,
    pub t: u64,
    mu: Vec<f64>,
    sigma: Matrix,
    chol: Matrix,
    identity: bool,
    lambda: f64,
    beta: f64,
    gamma: f64,
    coefficient: Coefficient,
    sigma_update: SigmaUpdate,
}

impl LinearGaussianState {
    /// Identity covariance, `(η, θ) = (0, 0)`, coefficient `β`.
    pub fn new(mu: Vec<f64>, lambda: f64, beta: f64, gamma: f64) -> Result<Self, DynamicsError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(DynamicsError::LearningRate(lambda));
        }
        if !(beta.is_finite() && gamma.is_finite()) || mu.iter().any(|m| !m.is_finite()) {
            return Err(DynamicsError::Invalid("non-finite parameter".into()));
        }
        if mu.is_empty() {
            return Err(DynamicsError::Invalid("dimension must be at least 1".into()));
        }
        let d = mu.len();
        Ok(Self {
            eta: vec![0.0; d],
            theta: vec![0.0; d],
            t: 0,
            mu,
            sigma: Matrix::identity(d),
            chol: Matrix::identity(d),
            identity: true,
            lambda,
            beta,
            gamma,
            coefficient: Coefficient::Beta,
            sigma_update: SigmaUpdate::Whitened,
        })
    }

    pub fn with_start(mut self, eta: Vec<f64>, theta: Vec<f64>) -> Result<Self, DynamicsError> {
        check_dim("eta", self.dim(), eta.len())?;
        check_dim("theta", self.dim(), theta.len())?;
        self.eta = eta;
        self.theta = theta;
        Ok(self)
    }

    pub fn with_sigma(mut self, sigma: Matrix) -> Result<Self, DynamicsError> {
        check_dim("sigma", self.dim(), sigma.rows())?;
        check_dim("sigma", self.dim(), sigma.cols())?;
        if !sigma.is_symmetric(1e-12) {
            return Err(DynamicsError::NotSpd);
        }
        let chol = sigma.cholesky().ok_or(DynamicsError::NotSpd)?;
        self.identity = sigma == Matrix::identity(self.dim());
        self.sigma = sigma;
        self.chol = chol;
        Ok(self)
    }

    pub fn with_coefficient(mut self, coefficient: Coefficient) -> Self {
        self.coefficient = coefficient;
        self
    }

    pub fn with_sigma_update(mut self, update: SigmaUpdate) -> Self {
        self.sigma_update = update;
        self
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The coefficient `b` the update actually uses.
    pub fn effective_coefficient(&self) -> f64 {
        match self.coefficient {
            Coefficient::Beta => self.beta,
            Coefficient::BetaPlusGamma => self.beta + self.gamma,
        }
    }

    fn residual(&self) -> Vec<f64> {
        self.mu.iter().zip(&self.theta).map(|(m, t)| m - t).collect()
    }

    fn quad_sigma(&self, v: &[f64]) -> f64 {
        if self.identity {
            norm_sq(v)
        } else {
            dot(v, &self.sigma.matvec(v))
        }
    }

    /// `ηᵀ L e`.
    fn cross(&self, e: &[f64]) -> f64 {
        if self.identity {
            dot(&self.eta, e)
        } else {
            dot(&self.eta, &self.chol.matvec(e))
        }
    }

    /// One simultaneous descent–ascent step.
    pub fn step(&self) -> Self {
        let b = self.effective_coefficient();
        let lam = self.lambda;
        let e = self.residual();
        let mut next = self.clone();
        next.t += 1;
        if self.identity || self.sigma_update == SigmaUpdate::LossGradient {
            let se = if self.identity {
                self.eta.clone()
            } else {
                self.sigma.matvec(&self.eta)
            };
            for i in 0..self.dim() {
                next.eta[i] = self.eta[i] + lam * (e[i] - b * se[i]);
                next.theta[i] = self.theta[i] + lam * self.eta[i];
            }
        } else {
            let drive = self.chol.solve_lower_transposed(&e);
            let push = self.chol.transpose().matvec(&self.eta);
            for i in 0..self.dim() {
                next.eta[i] = self.eta[i] + lam * (drive[i] - b * self.eta[i]);
                next.theta[i] = self.theta[i] + lam * push[i];
            }
        }
        next
    }

    /// `‖θ − μ‖² + ‖η‖²`.
    pub fn distance_sq(&self) -> f64 {
        norm_sq(&self.residual()) + norm_sq(&self.eta)
    }

    /// `‖θ − μ‖² + ηᵀΣη`; equal to [`Self::distance_sq`] at `Σ = I`.
    pub fn metric_distance_sq(&self) -> f64 {
        norm_sq(&self.residual()) + self.quad_sigma(&self.eta)
    }

    /// `ηᵀΣη − k ηᵀL(μ − θ) + ‖μ − θ‖²`.
    pub fn energy_with(&self, k: f64) -> f64 {
        let e = self.residual();
        self.quad_sigma(&self.eta) - k * self.cross(&e) + norm_sq(&e)
    }

    /// Energy with `k = b` for `0 < b ≤ 1` and `k = 1/b` for `1 ≤ b < 1/λ`.
    pub fn energy(&self) -> Result<f64, DynamicsError> {
        let b = self.effective_coefficient();
        let upper = 1.0 / self.lambda;
        if !(b > 0.0 && b < upper) {
            return Err(DynamicsError::CoefficientRange {
                coefficient: b,
                lambda: self.lambda,
                upper,
            });
        }
        Ok(self.energy_with(if b <= 1.0 { b } else { 1.0 / b }))
    }

    /// Energy with `k = b`, positive-definite for `0 < b < 2`.
    pub fn contraction_energy(&self) -> Result<f64, DynamicsError> {
        let b = self.effective_coefficient();
        if !(b > 0.0 && b < 2.0) {
            return Err(DynamicsError::CoefficientRange {
                coefficient: b,
                lambda: self.lambda,
                upper: 2.0,
            });
        }
        Ok(self.energy_with(b))
    }

    /// Per-step energy factor under `convention`, if defined.
    pub fn rate(&self, convention: RateConvention) -> Option<f64> {
        let b = self.effective_coefficient();
        let lam = self.lambda;
        match convention {
            RateConvention::Stated if b > 0.0 && lam * b < 1.0 => Some(1.0 - lam * b),
            RateConvention::Exact if b > 0.0 && b < 2.0 && lam * b < 1.0 => {
                Some(1.0 - lam * b + lam * lam)
            }
            _ => None,
        }
    }

    fn energy_for(&self, convention: RateConvention) -> Result<f64, DynamicsError> {
        match convention {
            RateConvention::Stated => self.energy(),
            RateConvention::Exact => self.contraction_energy(),
        }
    }

    fn bound_constant(&self, convention: RateConvention, e0: f64) -> f64 {
        let b = self.effective_coefficient();
        match convention {
            RateConvention::Exact if b > 1.0 => e0 / (1.0 - b / 2.0),
            _ => 2.0 * e0,
        }
    }
}

/// `ηᵀ(μ − θ) − ((β + γ)/2) ηᵀΣη`.
pub fn exact_location_loss(state: &LinearGaussianState) -> f64 {
    let e = state.residual();
    dot(&state.eta, &e) - 0.5 * (state.beta + state.gamma) * state.quad_sigma(&state.eta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRow {
    pub t: u64,
    pub eta: Vec<f64>,
    pub theta: Vec<f64>,
    pub distance_sq: f64,
    pub metric_distance_sq: f64,
    pub energy: Option<f64>,
    pub bound: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    Bound,
    Energy,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::Bound => "distance bound",
            ViolationKind::Energy => "energy recursion",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub t: u64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsTrace {
    pub convention: RateConvention,
    /// Per-step energy factor; `None` when the coefficient is outside the
    /// convention's range and nothing is checked.
    pub rate: Option<f64>,
    pub rows: Vec<DynamicsRow>,
    pub bound_violation: Option<Violation>,
    pub energy_violation: Option<Violation>,
}

/// Absolute slack on the distance bound.
pub const BOUND_SLACK: f64 = 1e-9;
/// Relative slack on the energy recursion.
pub const ENERGY_SLACK: f64 = 1e-12;

/// Rounding floor for an energy evaluated near the equilibrium: `μ − θ`
/// cancels to an absolute error of a few ulps of `|μ| + |θ|`, which enters
/// `E ≈ |e|²` linearly in `|e| ≤ √(E / (1 − b/2))`.
fn energy_floor(state: &LinearGaussianState, energy: f64) -> f64 {
    let scale = state
        .mu
        .iter()
        .zip(&state.theta)
        .map(|(m, t)| m.abs() + t.abs())
        .fold(1.0, f64::max);
    16.0 * f64::EPSILON * scale * (2.0 * energy.max(0.0)).sqrt()
}

impl DynamicsTrace {
    pub fn checked(&self) -> bool {
        self.rate.is_some()
    }

    pub fn holds(&self) -> bool {
        self.checked() && self.bound_violation.is_none() && self.energy_violation.is_none()
    }

    /// Earliest violation of either check.
    pub fn first_violation(&self) -> Option<Violation> {
        match (self.bound_violation, self.energy_violation) {
            (Some(a), Some(b)) => Some(if b.t < a.t { b } else { a }),
            (a, b) => a.or(b),
        }
    }

    pub fn ensure_holds(&self) -> Result<(), DynamicsError> {
        match self.first_violation() {
            Some(v) => Err(DynamicsError::Violated {
                kind: v.kind,
                t: v.t,
                lhs: v.lhs,
                rhs: v.rhs,
            }),
            None => Ok(()),
        }
    }

    /// `distance²(t+1) / distance²(t)` for every step.
    pub fn growth_factors(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| w[1].distance_sq / w[0].distance_sq)
            .collect()
    }

    pub fn last(&self) -> &DynamicsRow {
        self.rows.last().expect("trace has at least the initial row")
    }

    /// CSV with header `t,distance_sq,energy,bound`; unchecked cells empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,distance_sq,energy,bound")?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                out,
                "{},{:e},{},{}",
                r.t,
                r.distance_sq,
                opt(r.energy),
                opt(r.bound)
            )?;
        }
        Ok(())
    }
}

/// Runs `steps` updates from `state`, recording every iterate and checking
/// the distance bound `c·ρᵗ` and the energy recursion `E' ≤ ρE` whenever
/// the convention defines `ρ` for this coefficient.
pub fn run_dynamics(
    state: &LinearGaussianState,
    steps: u64,
    convention: RateConvention,
) -> Result<DynamicsTrace, DynamicsError> {
    if steps == 0 {
        return Err(DynamicsError::ZeroSteps);
    }
    let rate = state.rate(convention);
    let e0 = match rate {
        Some(_) => Some(state.energy_for(convention)?),
        None => None,
    };
    let c = e0.map(|e| state.bound_constant(convention, e));

    let mut trace = DynamicsTrace {
        convention,
        rate,
        rows: Vec::with_capacity(steps as usize + 1),
        bound_violation: None,
        energy_violation: None,
    };
    let mut cur = state.clone();
    let mut prev_energy: Option<f64> = None;
    for k in 0..=steps {
        let energy = match rate {
            Some(_) => Some(cur.energy_for(convention)?),
            None => None,
        };
        let bound = match (rate, c) {
            (Some(r), Some(c)) => Some(c * r.powi(k as i32)),
            _ => None,
        };
        let row = DynamicsRow {
            t: cur.t,
            eta: cur.eta.clone(),
            theta: cur.theta.clone(),
            distance_sq: cur.distance_sq(),
            metric_distance_sq: cur.metric_distance_sq(),
            energy,
            bound,
        };
        if let Some(b) = bound {
            if trace.bound_violation.is_none() && row.metric_distance_sq > b + BOUND_SLACK {
                trace.bound_violation = Some(Violation {
                    kind: ViolationKind::Bound,
                    t: row.t,
                    lhs: row.metric_distance_sq,
                    rhs: b,
                });
            }
        }
        if let (Some(r), Some(prev), Some(now)) = (rate, prev_energy, energy) {
            let allowed = r * prev;
            let slack = ENERGY_SLACK * allowed.abs() + energy_floor(&cur, prev);
            if trace.energy_violation.is_none() && now > allowed + slack {
                trace.energy_violation = Some(Violation {
                    kind: ViolationKind::Energy,
                    t: row.t,
                    lhs: now,
                    rhs: allowed,
                });
            }
        }
        prev_energy = energy;
        trace.rows.push(row);
        if k < steps {
            cur = cur.step();
        }
    }
    Ok(trace)
}

fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<(), DynamicsError> {
    if expected == found {
        Ok(())
    } else {
        Err(DynamicsError::Dimension {
            context,
            expected,
            found,
        })
    }
}
