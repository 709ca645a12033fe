//! Divergences between 1D densities by quadrature, and the population
//! cumulant loss of a test function.
//!
//! Rényi divergences use the prefactor `1/(α(α−1))`:
//! `R_α(p‖q) = (α(α−1))⁻¹ log ∫ p^α q^{1−α}`, which tends to `KL(p‖q)` as
//! `α → 1` and to `KL(q‖p)` as `α → 0`. With this scaling the cumulant
//! loss at `(β, γ) = (α, 1−α)`, maximised over `D`, equals
//! `R_α(p_g‖p_r)`, attained at `D* = log(p_r/p_g)`.

use serde::{Deserialize, Serialize};

use super::density::{partition, Density1D};
use super::quadrature::{integrate, log_integrate_exp, LogQuadrature};
use super::OracleError;
use crate::cumulant::HyperPair;

/// `|α| < LIMIT_THRESHOLD` or `|α − 1| < LIMIT_THRESHOLD` selects a KL form.
pub const LIMIT_THRESHOLD: f64 = 1e-6;
const REL_TOL: f64 = 1e-13;
const ABS_TOL: f64 = 1e-14;
/// Endpoint integrand (relative to its peak) above which mass is deemed to
/// lie outside the domain, i.e. the integral diverges.
const EDGE_LIMIT: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DivergenceKind {
    Kl,
    ReverseKl,
    Renyi(f64),
    Hellinger,
    Chi2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceValue {
    pub kind: DivergenceKind,
    pub value: f64,
    /// Quadrature error estimate (absolute).
    pub error: f64,
}

fn checked(lq: LogQuadrature, what: &str) -> Result<LogQuadrature, OracleError> {
    if lq.edge > EDGE_LIMIT {
        return Err(OracleError::Divergent(format!(
            "{what}: integrand does not decay on the domain"
        )));
    }
    Ok(lq)
}

/// `log ∫ p^α q^{1−α}`.
pub fn log_power_moment(
    p: &Density1D,
    q: &Density1D,
    alpha: f64,
) -> Result<LogQuadrature, OracleError> {
    let pts = partition(&[p, q]);
    let lq = log_integrate_exp(
        |x| alpha * p.log_pdf(x) + (1.0 - alpha) * q.log_pdf(x),
        &pts,
        REL_TOL,
    )?;
    checked(lq, &format!("∫ p^{alpha} q^{}", 1.0 - alpha))
}

/// `KL(p‖q) = ∫ p log(p/q)`.
pub fn kl_quadrature(p: &Density1D, q: &Density1D) -> Result<DivergenceValue, OracleError> {
    let pts = partition(&[p, q]);
    let integrand = |x: f64| {
        let (lp, lq) = (p.log_pdf(x), q.log_pdf(x));
        let w = lp.exp();
        if w == 0.0 {
            0.0
        } else {
            w * (lp - lq)
        }
    };
    let r = integrate(integrand, &pts, ABS_TOL, REL_TOL)?;
    let (a, b) = (pts[0], pts[pts.len() - 1]);
    if integrand(a).abs().max(integrand(b).abs()) > EDGE_LIMIT {
        return Err(OracleError::Divergent("KL integrand does not decay".into()));
    }
    Ok(DivergenceValue {
        kind: DivergenceKind::Kl,
        value: r.value,
        error: r.error,
    })
}

/// Rényi divergence of order `alpha`, dispatching to KL forms near 0 and 1.
pub fn renyi_quadrature(
    p: &Density1D,
    q: &Density1D,
    alpha: f64,
) -> Result<DivergenceValue, OracleError> {
    if !alpha.is_finite() {
        return Err(OracleError::InvalidOrder(alpha));
    }
    let limit = if (alpha - 1.0).abs() < LIMIT_THRESHOLD {
        Some(kl_quadrature(p, q)?)
    } else if alpha.abs() < LIMIT_THRESHOLD {
        Some(kl_quadrature(q, p)?)
    } else {
        None
    };
    match limit {
        Some(v) => Ok(DivergenceValue {
            kind: DivergenceKind::Renyi(alpha),
            ..v
        }),
        None => renyi_exact_order(p, q, alpha),
    }
}

/// Rényi divergence without limit dispatch; orders within
/// [`LIMIT_THRESHOLD`] of 0 or 1 are rejected.
pub fn renyi_exact_order(
    p: &Density1D,
    q: &Density1D,
    alpha: f64,
) -> Result<DivergenceValue, OracleError> {
    if !alpha.is_finite() {
        return Err(OracleError::InvalidOrder(alpha));
    }
    if alpha.abs() < LIMIT_THRESHOLD || (alpha - 1.0).abs() < LIMIT_THRESHOLD {
        return Err(OracleError::RenyiEndpoint(alpha));
    }
    let lm = log_power_moment(p, q, alpha)?;
    let pre = 1.0 / (alpha * (alpha - 1.0));
    Ok(DivergenceValue {
        kind: DivergenceKind::Renyi(alpha),
        value: pre * lm.log_value,
        error: pre.abs() * lm.rel_error,
    })
}

/// `χ²(p‖q) = ∫ (p − q)²/q`, integrated directly.
pub fn chi2_quadrature(p: &Density1D, q: &Density1D) -> Result<DivergenceValue, OracleError> {
    let pts = partition(&[p, q]);
    let integrand = |x: f64| {
        let (lp, lq) = (p.log_pdf(x), q.log_pdf(x));
        let r = (lp - lq).exp_m1();
        lq.exp() * r * r
    };
    let r = integrate(integrand, &pts, ABS_TOL, REL_TOL)?;
    let (a, b) = (pts[0], pts[pts.len() - 1]);
    if !(integrand(a).max(integrand(b)) <= EDGE_LIMIT) {
        return Err(OracleError::Divergent(
            "χ² integrand does not decay; variance of q too small".into(),
        ));
    }
    Ok(DivergenceValue {
        kind: DivergenceKind::Chi2,
        value: r.value,
        error: r.error,
    })
}

/// Squared Hellinger distance `½ ∫ (√p − √q)²`, in `[0, 1]`.
pub fn hellinger_quadrature(p: &Density1D, q: &Density1D) -> Result<DivergenceValue, OracleError> {
    let pts = partition(&[p, q]);
    let r = integrate(
        |x| {
            let d = (0.5 * p.log_pdf(x)).exp() - (0.5 * q.log_pdf(x)).exp();
            0.5 * d * d
        },
        &pts,
        ABS_TOL,
        REL_TOL,
    )?;
    Ok(DivergenceValue {
        kind: DivergenceKind::Hellinger,
        value: r.value,
        error: r.error,
    })
}

/// `−4 log(1 − D_H²)`, which equals `R_{1/2}(p‖q)`.
pub fn hellinger_renyi_form(p: &Density1D, q: &Density1D) -> Result<f64, OracleError> {
    let h = hellinger_quadrature(p, q)?;
    Ok(-4.0 * (-h.value).ln_1p())
}

/// `x ↦ log p(x) − log q(x)`, the maximiser of the variational forms.
pub fn optimal_discriminator<'a>(
    p: &'a Density1D,
    q: &'a Density1D,
) -> impl Fn(f64) -> f64 + 'a {
    move |x| p.log_pdf(x) - q.log_pdf(x)
}

/// `−β⁻¹ log E_{p_r}[e^{−βD}] − γ⁻¹ log E_{p_g}[e^{γD}]` with exact
/// expectations; a zero coefficient uses the plain mean.
pub fn population_cumulant_loss(
    d: &dyn Fn(f64) -> f64,
    p_r: &Density1D,
    p_g: &Density1D,
    hp: HyperPair,
) -> Result<f64, OracleError> {
    let real = cgf_term(d, p_r, -hp.beta, p_g)?;
    let fake = cgf_term(d, p_g, hp.gamma, p_r)?;
    Ok(real - fake)
}

/// `s⁻¹ log E_p[e^{sD}]`, or `E_p[D]` at `s = 0`. `other` only widens the
/// integration domain so both densities share one partition.
fn cgf_term(
    d: &dyn Fn(f64) -> f64,
    p: &Density1D,
    s: f64,
    other: &Density1D,
) -> Result<f64, OracleError> {
    let pts = partition(&[p, other]);
    if s == 0.0 {
        let f = |x: f64| {
            let w = p.pdf(x);
            if w == 0.0 {
                0.0
            } else {
                w * d(x)
            }
        };
        let r = integrate(f, &pts, ABS_TOL, REL_TOL)?;
        return Ok(r.value);
    }
    let lq = log_integrate_exp(|x| p.log_pdf(x) + s * d(x), &pts, REL_TOL)?;
    let lq = checked(lq, "E[exp(s·D)]").map_err(|_| {
        OracleError::Divergent(format!(
            "E[exp({s}·D)] diverges; bound D (e.g. with a clip factor M·tanh(D/M))"
        ))
    })?;
    Ok(lq.log_value / s)
}

/// `R_α` between discrete distributions (same support, positive entries).
pub fn renyi_discrete(p: &[f64], q: &[f64], alpha: f64) -> Result<f64, OracleError> {
    if alpha.abs() < LIMIT_THRESHOLD || (alpha - 1.0).abs() < LIMIT_THRESHOLD {
        return Err(OracleError::RenyiEndpoint(alpha));
    }
    check_discrete(p, q)?;
    let s: f64 = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| (alpha * a.ln() + (1.0 - alpha) * b.ln()).exp())
        .sum();
    Ok(s.ln() / (alpha * (alpha - 1.0)))
}

/// `α·R_α(p‖q)` at each order; nondecreasing in `α > 1` with limit
/// [`log_max_ratio`].
pub fn scaled_renyi_trend(p: &[f64], q: &[f64], alphas: &[f64]) -> Result<Vec<f64>, OracleError> {
    alphas
        .iter()
        .map(|&a| renyi_discrete(p, q, a).map(|r| a * r))
        .collect()
}

/// `log max_i p_i/q_i`, the essential-supremum limit.
pub fn log_max_ratio(p: &[f64], q: &[f64]) -> Result<f64, OracleError> {
    check_discrete(p, q)?;
    Ok(p.iter()
        .zip(q)
        .map(|(&a, &b)| a.ln() - b.ln())
        .fold(f64::NEG_INFINITY, f64::max))
}

fn check_discrete(p: &[f64], q: &[f64]) -> Result<(), OracleError> {
    let ok = |v: &[f64]| {
        !v.is_empty()
            && v.iter().all(|&x| x > 0.0 && x.is_finite())
            && (v.iter().sum::<f64>() - 1.0).abs() < 1e-9
    };
    if p.len() != q.len() || !ok(p) || !ok(q) {
        return Err(OracleError::InvalidDensity(
            "discrete distributions must be positive, normalised and of equal length".into(),
        ));
    }
    Ok(())
}
