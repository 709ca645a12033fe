//! The cumulant loss, its batch estimator and the sample weights of the
//! weighted SGD update.
//!
//! For a batch `v` and a coefficient `s ≠ 0`, the scaled cumulant term is
//! `s⁻¹ log mean exp(s·v)`; at `s = 0` it is the batch mean, which is the
//! limit of the former. The loss combines two of them:
//!
//! ```text
//! L(β, γ) = -β⁻¹ log mean e^{-β D(x)}  -  γ⁻¹ log mean e^{γ D(G(z))}
//! ```
//!
//! and reduces to `mean D(x) - mean D(G(z))` (the Wasserstein critic loss)
//! at `(0, 0)`. The mean sits inside the logarithm.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{NodeId, Tape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CumulantError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite value at batch index {0}")]
    NonFiniteValue(usize),
    #[error("hyper-parameters must be finite, got ({0}, {1})")]
    NonFiniteHyper(f64, f64),
    #[error("unknown divergence preset `{0}`")]
    UnknownPreset(String),
    #[error("rényi order {0} is a limit case; use `kld` or `reverse-kld`")]
    RenyiEndpoint(f64),
}

/// The `(β, γ)` pair of the cumulant loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperPair {
    pub beta: f64,
    pub gamma: f64,
}

impl HyperPair {
    pub const WASSERSTEIN: HyperPair = HyperPair {
        beta: 0.0,
        gamma: 0.0,
    };

    pub fn new(beta: f64, gamma: f64) -> Result<Self, CumulantError> {
        if !(beta.is_finite() && gamma.is_finite()) {
            return Err(CumulantError::NonFiniteHyper(beta, gamma));
        }
        Ok(Self { beta, gamma })
    }

    pub fn has_negative(&self) -> bool {
        self.beta < 0.0 || self.gamma < 0.0
    }

    /// Coefficient applied to the real batch inside the exponential.
    pub fn real_exponent(&self) -> f64 {
        -self.beta
    }

    /// Coefficient applied to the generated batch inside the exponential.
    pub fn fake_exponent(&self) -> f64 {
        self.gamma
    }
}

/// Named points of the `(β, γ)` plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Preset {
    Wasserstein,
    Kld,
    ReverseKld,
    Hellinger,
    Chi2,
    ReverseChi2,
    /// Minimises `R_α(p_r ‖ p_g)`: `(1 - α, α)`.
    Renyi(f64),
    /// Minimises `R_α(p_g ‖ p_r)`: `(α, 1 - α)`.
    ReverseRenyi(f64),
}

impl Preset {
    pub const NAMED: [Preset; 6] = [
        Preset::Wasserstein,
        Preset::Kld,
        Preset::ReverseKld,
        Preset::Hellinger,
        Preset::Chi2,
        Preset::ReverseChi2,
    ];

    pub fn hyper_pair(self) -> Result<HyperPair, CumulantError> {
        let (b, g) = match self {
            Preset::Wasserstein => (0.0, 0.0),
            Preset::Kld => (0.0, 1.0),
            Preset::ReverseKld => (1.0, 0.0),
            Preset::Hellinger => (0.5, 0.5),
            Preset::Chi2 => (-1.0, 2.0),
            Preset::ReverseChi2 => (2.0, -1.0),
            Preset::Renyi(a) | Preset::ReverseRenyi(a) => {
                if !a.is_finite() {
                    return Err(CumulantError::NonFiniteHyper(a, 1.0 - a));
                }
                if a == 0.0 || a == 1.0 {
                    return Err(CumulantError::RenyiEndpoint(a));
                }
                if matches!(self, Preset::Renyi(_)) {
                    (1.0 - a, a)
                } else {
                    (a, 1.0 - a)
                }
            }
        };
        HyperPair::new(b, g)
    }

    pub fn describe(self) -> String {
        match self {
            Preset::Wasserstein => "Wasserstein distance".into(),
            Preset::Kld => "KL(p_r || p_g)".into(),
            Preset::ReverseKld => "KL(p_g || p_r)".into(),
            Preset::Hellinger => "-4 log(1 - H^2(p_g, p_r))".into(),
            Preset::Chi2 => "1/2 log(1 + chi2(p_r || p_g))".into(),
            Preset::ReverseChi2 => "1/2 log(1 + chi2(p_g || p_r))".into(),
            Preset::Renyi(a) => format!("R_{a}(p_r || p_g)"),
            Preset::ReverseRenyi(a) => format!("R_{a}(p_g || p_r)"),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Wasserstein => f.write_str("wasserstein"),
            Preset::Kld => f.write_str("kld"),
            Preset::ReverseKld => f.write_str("reverse-kld"),
            Preset::Hellinger => f.write_str("hellinger"),
            Preset::Chi2 => f.write_str("chi2"),
            Preset::ReverseChi2 => f.write_str("reverse-chi2"),
            Preset::Renyi(a) => write!(f, "renyi:{a}"),
            Preset::ReverseRenyi(a) => write!(f, "reverse-renyi:{a}"),
        }
    }
}

impl FromStr for Preset {
    type Err = CumulantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || CumulantError::UnknownPreset(s.to_string());
        let name = s.trim().to_ascii_lowercase();
        Ok(match name.as_str() {
            "wasserstein" | "wgan" => Preset::Wasserstein,
            "kld" | "kl" => Preset::Kld,
            "reverse-kld" | "rkld" => Preset::ReverseKld,
            "hellinger" => Preset::Hellinger,
            "chi2" => Preset::Chi2,
            "reverse-chi2" => Preset::ReverseChi2,
            other => {
                let (kind, alpha) = other.split_once(':').ok_or_else(unknown)?;
                let alpha: f64 = alpha.trim().parse().map_err(|_| unknown())?;
                let preset = match kind {
                    "renyi" => Preset::Renyi(alpha),
                    "reverse-renyi" => Preset::ReverseRenyi(alpha),
                    _ => return Err(unknown()),
                };
                preset.hyper_pair()?;
                preset
            }
        })
    }
}

/// Looks up a preset by name, e.g. `"hellinger"` or `"renyi:0.3"`.
pub fn preset(name: &str) -> Result<HyperPair, CumulantError> {
    name.parse::<Preset>()?.hyper_pair()
}

fn check_batch(values: &[f64]) -> Result<(), CumulantError> {
    if values.is_empty() {
        return Err(CumulantError::EmptyBatch);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(CumulantError::NonFiniteValue(i));
    }
    Ok(())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Entry maximising `s·v`.
fn pivot(values: &[f64], s: f64) -> f64 {
    if s > 0.0 {
        values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    } else {
        values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `s⁻¹ log mean exp(s·v)`, or `mean(v)` when `s == 0`.
///
/// Shifted by the maximiser `v*` of `s·v` so every exponent is `≤ 0`:
/// `v* + s⁻¹ log1p(mean(expm1(s(v - v*))))`.
pub fn cgf_term(values: &[f64], s: f64) -> Result<f64, CumulantError> {
    check_batch(values)?;
    if s == 0.0 {
        return Ok(mean(values));
    }
    let top = pivot(values, s);
    let acc: f64 = values.iter().map(|&v| (s * (v - top)).exp_m1()).sum();
    let out = top + (acc / values.len() as f64).ln_1p() / s;
    assert!(out.is_finite(), "cumulant term overflowed after shifting");
    Ok(out)
}

/// Batch estimate of the cumulant loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossEstimate {
    /// `-β⁻¹ log mean e^{-β D(x)}`
    pub real_term: f64,
    /// `γ⁻¹ log mean e^{γ D(G(z))}`
    pub fake_term: f64,
    pub total: f64,
    pub real_batch: usize,
    pub fake_batch: usize,
}

pub fn cumulant_loss(
    d_real: &[f64],
    d_fake: &[f64],
    hp: HyperPair,
) -> Result<LossEstimate, CumulantError> {
    let real_term = cgf_term(d_real, hp.real_exponent())?;
    let fake_term = cgf_term(d_fake, hp.fake_exponent())?;
    Ok(LossEstimate {
        real_term,
        fake_term,
        total: real_term - fake_term,
        real_batch: d_real.len(),
        fake_batch: d_fake.len(),
    })
}

/// Softmax weights `exp(s·dᵢ) / Σⱼ exp(s·dⱼ)`.
///
/// Use `s = -β` on the real batch and `s = γ` on the generated batch.
pub fn sample_weights(d_values: &[f64], s: f64) -> Result<Vec<f64>, CumulantError> {
    check_batch(d_values)?;
    let top = pivot(d_values, s);
    let mut w: Vec<f64> = d_values.iter().map(|&d| (s * (d - top)).exp()).collect();
    let z: f64 = w.iter().sum();
    let inv = 1.0 / z;
    for x in &mut w {
        *x *= inv;
    }
    Ok(w)
}

/// Shannon entropy (nats) of a weight vector; `log m` for uniform weights.
pub fn weight_entropy(weights: &[f64]) -> f64 {
    -weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| w * w.ln())
        .sum::<f64>()
}

/// `cgf_term(values, s)` at every grid point. Nondecreasing in `s`.
pub fn chord_slope(values: &[f64], s_grid: &[f64]) -> Result<Vec<f64>, CumulantError> {
    s_grid.iter().map(|&s| cgf_term(values, s)).collect()
}

/// Taped `s⁻¹ log mean exp(s·v)` for a column of values, written the way
/// the reference TensorFlow code writes it (max subtraction, then
/// `log(mean(exp(·)))`).
pub fn cgf_term_on_tape(tape: &mut Tape, values: NodeId, s: f64) -> NodeId {
    if s == 0.0 {
        return tape.mean(values);
    }
    let x = tape.scale(values, s);
    let m = tape.max_reduce(x);
    let shifted = tape.sub_scalar(x, m);
    let e = tape.exp(shifted);
    let mu = tape.mean(e);
    let l = tape.log(mu);
    let t = tape.add(l, m);
    tape.scale(t, 1.0 / s)
}

/// Taped `(real_term, fake_term, total)`.
pub fn cumulant_loss_on_tape(
    tape: &mut Tape,
    d_real: NodeId,
    d_fake: NodeId,
    hp: HyperPair,
) -> (NodeId, NodeId, NodeId) {
    let real = cgf_term_on_tape(tape, d_real, hp.real_exponent());
    let fake = cgf_term_on_tape(tape, d_fake, hp.fake_exponent());
    let total = tape.sub(real, fake);
    (real, fake, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Matrix;

    const E: f64 = std::f64::consts::E;

    #[test]
    fn constant_batch_is_fixed_point() {
        for s in [-3.0, -0.1, 0.0, 1e-9, 0.7, 25.0] {
            assert_eq!(cgf_term(&[2.5; 7], s).unwrap(), 2.5);
        }
    }

    #[test]
    fn two_point_values() {
        let v = [0.0, 1.0];
        let neg = cgf_term(&v, -1.0).unwrap();
        assert!((neg - -((1.0 + 1.0 / E) / 2.0).ln()).abs() < 1e-15);
        assert!((neg - 0.3799).abs() < 1e-4);
        assert_eq!(cgf_term(&v, 0.0).unwrap(), 0.5);
        assert!((cgf_term(&v, 1e-10).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn continuity_near_zero() {
        let v: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin() * 10.0).collect();
        let m = mean(&v);
        assert!((cgf_term(&v, 1e-8).unwrap() - m).abs() <= 1e-6);
        assert!((cgf_term(&v, -1e-12).unwrap() - m).abs() <= 1e-9);
    }

    #[test]
    fn empty_and_non_finite_batches() {
        assert_eq!(cgf_term(&[], 1.0), Err(CumulantError::EmptyBatch));
        assert_eq!(
            cgf_term(&[0.0, f64::NAN], 1.0),
            Err(CumulantError::NonFiniteValue(1))
        );
        assert_eq!(sample_weights(&[], 1.0), Err(CumulantError::EmptyBatch));
    }

    #[test]
    fn extreme_coefficients_do_not_overflow() {
        let v = [-800.0, 0.0, 800.0];
        assert!((cgf_term(&v, 50.0).unwrap() - (800.0 - 3f64.ln() / 50.0)).abs() < 1e-12);
        assert!(cgf_term(&v, -50.0).unwrap().is_finite());
    }

    #[test]
    fn wasserstein_limit() {
        let l = cumulant_loss(&[1.0, 2.0, 3.0], &[0.0, 1.0, 2.0], HyperPair::WASSERSTEIN).unwrap();
        assert_eq!(l.total, 1.0);
    }

    #[test]
    fn constant_batches_cancel() {
        for hp in [(0.3, -2.0), (1.0, 1.0), (0.0, 4.0)] {
            let hp = HyperPair::new(hp.0, hp.1).unwrap();
            assert_eq!(cumulant_loss(&[1.7; 4], &[1.7; 9], hp).unwrap().total, 0.0);
        }
    }

    #[test]
    fn unit_pair_loss_terms() {
        let l = cumulant_loss(&[0.0, 1.0], &[0.0, 1.0], HyperPair::new(1.0, 1.0).unwrap()).unwrap();
        let real = -((1.0 + 1.0 / E) / 2.0).ln();
        let fake = ((1.0 + E) / 2.0).ln();
        assert!((l.real_term - real).abs() < 1e-15);
        assert!((l.fake_term - fake).abs() < 1e-15);
        assert!((l.total - (real - fake)).abs() < 1e-15);
        assert!((l.fake_term - 0.6201).abs() < 1e-4);
        assert!((l.total + 0.2402).abs() < 1e-4);
    }

    #[test]
    fn weights() {
        assert_eq!(sample_weights(&[3.0, -1.0, 8.0, 0.5], 0.0).unwrap(), vec![0.25; 4]);
        let w = sample_weights(&[0.0, 2f64.ln()], -1.0).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 3.0).abs() < 1e-15);
        let a = sample_weights(&[0.25, 1.5, -2.0], 1.3).unwrap();
        let b = sample_weights(&[10.25, 11.5, 8.0], 1.3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn entropy_of_uniform_weights() {
        let w = sample_weights(&[1.0; 8], 2.0).unwrap();
        assert!((weight_entropy(&w) - 8f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn presets() {
        assert_eq!(preset("hellinger").unwrap(), HyperPair::new(0.5, 0.5).unwrap());
        assert_eq!(preset("chi2").unwrap(), HyperPair::new(-1.0, 2.0).unwrap());
        assert_eq!(preset("reverse-chi2").unwrap(), HyperPair::new(2.0, -1.0).unwrap());
        assert_eq!(preset("wasserstein").unwrap(), HyperPair::WASSERSTEIN);
        assert_eq!(preset("kld").unwrap(), HyperPair::new(0.0, 1.0).unwrap());
        assert_eq!(preset("reverse-kld").unwrap(), HyperPair::new(1.0, 0.0).unwrap());
        assert_eq!(preset("renyi:0.5").unwrap(), preset("reverse-renyi:0.5").unwrap());
        assert_eq!(preset("renyi:0.5").unwrap(), HyperPair::new(0.5, 0.5).unwrap());
        assert_eq!(preset("renyi:0.25").unwrap(), HyperPair::new(0.75, 0.25).unwrap());
        assert_eq!(preset("reverse-renyi:0.25").unwrap(), HyperPair::new(0.25, 0.75).unwrap());
        assert!(matches!(preset("bogus"), Err(CumulantError::UnknownPreset(_))));
        assert_eq!(preset("renyi:1"), Err(CumulantError::RenyiEndpoint(1.0)));
        assert_eq!(preset("renyi:0"), Err(CumulantError::RenyiEndpoint(0.0)));
        for p in Preset::NAMED {
            assert_eq!(p.to_string().parse::<Preset>().unwrap(), p);
        }
    }

    #[test]
    fn chord_slope_ordering() {
        let v = [0.0, 1.0];
        let c = chord_slope(&v, &[-1.0, 0.0, 1.0]).unwrap();
        assert!(c[0] <= c[1] && c[1] <= c[2]);
        assert!((c[0] - 0.37989).abs() < 1e-5 && (c[2] - 0.62011).abs() < 1e-5);
        assert_eq!(chord_slope(&[4.0; 3], &[-2.0, 0.0, 3.0]).unwrap(), vec![4.0; 3]);
        for s in [0.1, 1.0, 10.0] {
            assert!(cgf_term(&[0.3, -1.0, 2.0], s).unwrap() >= mean(&[0.3, -1.0, 2.0]));
        }
    }

    #[test]
    fn taped_term_matches_closed_form() {
        let v = [0.2, -1.3, 0.9, 2.2];
        for s in [-2.0, -0.5, 0.0, 0.3, 3.0] {
            let mut t = Tape::new();
            let n = t.constant(Matrix::column_vector(&v));
            let c = cgf_term_on_tape(&mut t, n, s);
            assert!((t.value(c).item() - cgf_term(&v, s).unwrap()).abs() < 1e-14);
        }
    }
}
