//! Learning a covariance with a linear discriminator `D(x) = ηᵀx` and a
//! linear generator `G(z) = Az`.
//!
//! With `x ~ N(0, Σ)` and `z ~ N(0, I_k)` the exact loss is
//! `−½ ηᵀ(βΣ + γAAᵀ)η`; at `(0, 0)` it vanishes and nothing is learned.
//! The loss only constrains `AAᵀ` up to scale (any `γAAᵀ ⪰ −βΣ` makes
//! `η = 0` a best response), so progress is measured by the shape error
//! `‖Σ − Σ̂/‖Σ̂‖_F‖_F` with `Σ̂ = AAᵀ`. The raw error `‖Σ − Σ̂‖_F` is
//! recorded alongside.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::DynamicsError;
use crate::cumulant::{sample_weights, HyperPair};
use crate::diffcore::{dot, Matrix};

/// `‖AAᵀ‖_F` above which a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DescentMode {
    /// Gradients of the exact loss.
    Exact,
    /// Gradients of the batch estimator on a fixed sample of real and
    /// latent draws.
    Stochastic,
}

impl fmt::Display for DescentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DescentMode::Exact => "exact",
            DescentMode::Stochastic => "stochastic",
        })
    }
}

impl FromStr for DescentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "exact" => Ok(DescentMode::Exact),
            "stochastic" => Ok(DescentMode::Stochastic),
            other => Err(format!("unknown mode `{other}` (exact|stochastic)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceExperimentSpec {
    pub sigma: Matrix,
    pub a_init: Matrix,
    pub eta_init: Vec<f64>,
    pub hp: HyperPair,
    pub learning_rate: f64,
    /// Ascent steps on `η` per descent step on `A`.
    pub k_disc: usize,
    /// Sample count per draw in stochastic mode.
    pub samples: usize,
}

impl CovarianceExperimentSpec {
    /// Random `Σ ∝ BBᵀ + 0.1·I` with Gaussian `B`, scaled to unit
    /// Frobenius norm; square `A ~ 0.3·N(0, 1)`; `η ~ 0.1·N(0, 1)`.
    pub fn random<R: Rng + ?Sized>(d: usize, hp: HyperPair, rng: &mut R) -> Self {
        let b = gaussian_matrix(d, d, 1.0, rng);
        let raw = b.matmul_nt(&b).add(&Matrix::identity(d).scale(0.1));
        let sigma = raw.scale(1.0 / raw.frobenius_norm());
        let a_init = gaussian_matrix(d, d, 0.3, rng);
        let eta_init = (0..d).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        Self {
            sigma,
            a_init,
            eta_init,
            hp,
            learning_rate: 1e-3,
            k_disc: 5,
            samples: 10_000,
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma.rows()
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let d = self.dim();
        let dim = |context, found| {
            if found == d {
                Ok(())
            } else {
                Err(DynamicsError::Dimension {
                    context,
                    expected: d,
                    found,
                })
            }
        };
        dim("sigma columns", self.sigma.cols())?;
        dim("generator rows", self.a_init.rows())?;
        dim("eta", self.eta_init.len())?;
        if d == 0 || self.a_init.cols() == 0 {
            return Err(DynamicsError::Invalid("empty dimension".into()));
        }
        if !self.sigma.is_symmetric(1e-12) || self.sigma.cholesky().is_none() {
            return Err(DynamicsError::NotSpd);
        }
        let norm = self.sigma.frobenius_norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(DynamicsError::Invalid(format!(
                "covariance must have unit Frobenius norm, got {norm}"
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(DynamicsError::LearningRate(self.learning_rate));
        }
        if self.k_disc == 0 {
            return Err(DynamicsError::Invalid("k_disc must be at least 1".into()));
        }
        if !self.a_init.is_finite() || self.eta_init.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::Invalid("non-finite initial value".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceRun {
    pub a_final: Matrix,
    pub eta_final: Vec<f64>,
    /// Shape error after each descent step; index 0 is the start.
    pub errors: Vec<f64>,
    /// `‖Σ − AAᵀ‖_F` at the same points.
    pub raw_errors: Vec<f64>,
}

impl CovarianceRun {
    pub fn final_error(&self) -> f64 {
        *self.errors.last().expect("at least the initial error")
    }
}

/// `−½ ηᵀ(βΣ + γAAᵀ)η`.
pub fn covariance_exact_loss(
    eta: &[f64],
    a: &Matrix,
    sigma: &Matrix,
    hp: HyperPair,
) -> Result<f64, DynamicsError> {
    let d = eta.len();
    for (context, found) in [
        ("sigma rows", sigma.rows()),
        ("sigma columns", sigma.cols()),
        ("generator rows", a.rows()),
    ] {
        if found != d {
            return Err(DynamicsError::Dimension {
                context,
                expected: d,
                found,
            });
        }
    }
    let real = dot(eta, &sigma.matvec(eta));
    let at_eta = a.transpose().matvec(eta);
    let fake = dot(&at_eta, &at_eta);
    Ok(-0.5 * (hp.beta * real + hp.gamma * fake))
}

/// `‖Σ − Σ̂/‖Σ̂‖_F‖_F` with `Σ̂ = AAᵀ`; `‖Σ‖_F` when `A = 0`.
pub fn shape_error(sigma: &Matrix, a: &Matrix) -> f64 {
    let est = a.matmul_nt(a);
    let n = est.frobenius_norm();
    if n == 0.0 {
        return sigma.frobenius_norm();
    }
    sigma.sub(&est.scale(1.0 / n)).frobenius_norm()
}

fn raw_error(sigma: &Matrix, a: &Matrix) -> f64 {
    sigma.sub(&a.matmul_nt(a)).frobenius_norm()
}

/// Alternates `k_disc` ascent steps on `η` with one descent step on `A`,
/// `iterations` times. The rng is only used in stochastic mode, to draw
/// the fixed sample.
pub fn covariance_descent<R: Rng + ?Sized>(
    spec: &CovarianceExperimentSpec,
    iterations: usize,
    mode: DescentMode,
    rng: &mut R,
) -> Result<CovarianceRun, DynamicsError> {
    spec.validate()?;
    let d = spec.dim();
    let k = spec.a_init.cols();
    let lam = spec.learning_rate;
    let hp = spec.hp;

    let sample = match mode {
        DescentMode::Exact => None,
        DescentMode::Stochastic => {
            if spec.samples == 0 {
                return Err(DynamicsError::Invalid(
                    "stochastic mode needs a positive sample count".into(),
                ));
            }
            let chol = spec.sigma.cholesky().ok_or(DynamicsError::NotSpd)?;
            let real = gaussian_matrix(spec.samples, d, 1.0, rng).matmul_nt(&chol);
            let latent = gaussian_matrix(spec.samples, k, 1.0, rng);
            Some((real, latent))
        }
    };

    let mut a = spec.a_init.clone();
    let mut eta = spec.eta_init.clone();
    let mut errors = Vec::with_capacity(iterations + 1);
    let mut raw_errors = Vec::with_capacity(iterations + 1);
    errors.push(shape_error(&spec.sigma, &a));
    raw_errors.push(raw_error(&spec.sigma, &a));

    for it in 1..=iterations {
        match &sample {
            None => {
                let aat = a.matmul_nt(&a);
                let curv = spec.sigma.scale(hp.beta).add(&aat.scale(hp.gamma));
                for _ in 0..spec.k_disc {
                    let g = curv.matvec(&eta);
                    for (e, gi) in eta.iter_mut().zip(&g) {
                        *e -= lam * gi;
                    }
                }
                // A ← A + λγ ηηᵀA
                let eta_a = a.transpose().matvec(&eta);
                let step = Matrix::column_vector(&eta)
                    .matmul(&Matrix::row_vector(&eta_a))
                    .scale(lam * hp.gamma);
                a = a.add(&step);
            }
            Some((real, latent)) => {
                let fake = latent.matmul_nt(&a);
                for _ in 0..spec.k_disc {
                    let wr = weights(real, &eta, hp.real_exponent())?;
                    let wf = weights(&fake, &eta, hp.fake_exponent())?;
                    let pull = weighted_mean(real, &wr);
                    let push = weighted_mean(&fake, &wf);
                    for i in 0..d {
                        eta[i] += lam * (pull[i] - push[i]);
                    }
                }
                let wf = weights(&fake, &eta, hp.fake_exponent())?;
                let zbar = weighted_mean(latent, &wf);
                let step = Matrix::column_vector(&eta)
                    .matmul(&Matrix::row_vector(&zbar))
                    .scale(lam);
                a = a.add(&step);
            }
        }
        let spread = a.matmul_nt(&a).frobenius_norm();
        if !a.is_finite() || eta.iter().any(|v| !v.is_finite()) || spread > DIVERGENCE_LIMIT {
            return Err(DynamicsError::Diverged {
                iteration: it,
                error: raw_error(&spec.sigma, &a),
            });
        }
        errors.push(shape_error(&spec.sigma, &a));
        raw_errors.push(raw_error(&spec.sigma, &a));
    }
    Ok(CovarianceRun {
        a_final: a,
        eta_final: eta,
        errors,
        raw_errors,
    })
}

fn weights(batch: &Matrix, eta: &[f64], s: f64) -> Result<Vec<f64>, DynamicsError> {
    let d = batch.matvec(eta);
    sample_weights(&d, s).map_err(|e| DynamicsError::Invalid(e.to_string()))
}

fn weighted_mean(batch: &Matrix, w: &[f64]) -> Vec<f64> {
    Matrix::row_vector(w).matmul(batch).into_vec()
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("length matches shape")
}

/// Random SPD matrix `Q diag(λ) Qᵀ` with Haar-like `Q` (Gram–Schmidt of a
/// Gaussian matrix) and eigenvalues log-uniform on `[1, max_condition]`.
pub fn random_spd<R: Rng + ?Sized>(d: usize, max_condition: f64, rng: &mut R) -> Matrix {
    assert!(max_condition >= 1.0, "condition number below 1");
    let g = gaussian_matrix(d, d, 1.0, rng);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    for i in 0..d {
        let mut v = g.row(i).to_vec();
        for u in &q {
            let p = dot(&v, u);
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= p * ui;
            }
        }
        let n = dot(&v, &v).sqrt();
        q.push(v.into_iter().map(|x| x / n).collect());
    }
    let span = max_condition.ln();
    let eig: Vec<f64> = (0..d).map(|_| (rng.random::<f64>() * span).exp()).collect();
    let mut out = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let v: f64 = (0..d).map(|m| q[m][i] * eig[m] * q[m][j]).sum();
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hp(beta: f64, gamma: f64) -> HyperPair {
        HyperPair::new(beta, gamma).unwrap()
    }

    #[test]
    fn exact_loss_examples() {
        let one = Matrix::identity(1);
        assert_eq!(covariance_exact_loss(&[1.0], &one, &one, hp(2.0, 1.0)), Ok(-1.5));
        let sigma = Matrix::diagonal(&[0.6, 0.8]);
        let a = Matrix::diagonal(&[0.6f64.sqrt(), 0.8f64.sqrt()]);
        let l = covariance_exact_loss(&[0.3, -2.0], &a, &sigma, hp(-1.0, 1.0)).unwrap();
        assert!(l.abs() < 1e-15);
        assert_eq!(covariance_exact_loss(&[0.3, -2.0], &a, &sigma, hp(0.0, 0.0)), Ok(-0.0));
    }

    #[test]
    fn random_spd_respects_condition_number() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 1..=5 {
            let s = random_spd(d, 100.0, &mut rng);
            let ev = s.symmetric_eigenvalues();
            assert!(ev[0] > 0.0 && ev[d - 1] / ev[0] <= 100.0 + 1e-9);
        }
    }

    #[test]
    fn one_dimensional_shape_error_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = CovarianceExperimentSpec::random(1, hp(-20.0, 1.0), &mut rng);
        let run = covariance_descent(&spec, 10, DescentMode::Exact, &mut rng).unwrap();
        assert!(run.final_error() < 1e-12);
    }

    #[test]
    fn wasserstein_leaves_generator_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = CovarianceExperimentSpec::random(2, hp(0.0, 0.0), &mut rng);
        let run = covariance_descent(&spec, 200, DescentMode::Exact, &mut rng).unwrap();
        assert_eq!(run.a_final, spec.a_init);
        assert!(run.errors.iter().all(|&e| e == run.errors[0]));
    }

    #[test]
    fn validation_catches_unnormalised_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut spec = CovarianceExperimentSpec::random(2, hp(-1.0, 1.0), &mut rng);
        spec.sigma = spec.sigma.scale(2.0);
        assert!(matches!(spec.validate(), Err(DynamicsError::Invalid(_))));
    }
}
