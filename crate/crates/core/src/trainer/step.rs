//! One discriminator or generator gradient, and the gradient penalty.
//!
//! The discriminator ascends the batch loss and the generator descends
//! it; both are expressed as a surrogate to minimise so one optimiser
//! serves both. In [`GradientForm::Weighted`] the surrogate is
//! `Σ wᵞᵢ D(G(zᵢ)) − Σ wᵝᵢ D(xᵢ)` with the softmax weights held constant,
//! whose gradient is exactly the chain-rule gradient of `−L̂`.

use rand::{Rng, RngCore};

use super::config::{GradientForm, Lipschitz, TrainConfig};
use super::TrainError;
use crate::cumulant::{
    cgf_term, cgf_term_on_tape, cumulant_loss, cumulant_loss_on_tape, sample_weights,
    weight_entropy, HyperPair, LossEstimate,
};
use crate::diffcore::{norm_sq, BoundMlp, Matrix, MlpParams, NodeId, Tape};

#[derive(Clone, Debug, PartialEq)]
pub struct DiscStep {
    pub loss: LossEstimate,
    /// Penalty value (0 when disabled).
    pub gp: f64,
    pub entropy_beta: f64,
    pub entropy_gamma: f64,
    /// Gradient of the minimised surrogate, in flat parameter order.
    pub grad: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenStep {
    /// `γ⁻¹ log mean e^{γ D(G(z))}`.
    pub fake_term: f64,
    pub entropy_gamma: f64,
    pub grad: Vec<f64>,
}

fn values(tape: &Tape, id: NodeId) -> Vec<f64> {
    tape.value(id).as_slice().to_vec()
}

/// `Σ wᵢ dᵢ` with `w` entering as a constant.
fn weighted_sum(tape: &mut Tape, d: NodeId, w: &[f64]) -> NodeId {
    let wc = tape.constant(Matrix::column_vector(w));
    let p = tape.mul(d, wc);
    tape.sum(p)
}

/// Records `coefficient · mean((‖∇ₓD(x̂)‖ − 1)²)` on `tape`, with
/// `x̂ = x + α(x̃ − x)`, one `α ~ U(0, 1)` per pair. Batches are paired
/// row by row and truncated to the shorter one.
pub fn penalty_on_tape(
    tape: &mut Tape,
    disc: &BoundMlp,
    real: &Matrix,
    fake: &Matrix,
    coefficient: f64,
    rng: &mut dyn RngCore,
) -> Result<NodeId, TrainError> {
    let n = real.rows().min(fake.rows());
    let d = real.cols();
    let mut hat = Matrix::zeros(n, d);
    for i in 0..n {
        let a: f64 = rng.random();
        let (x, y) = (real.row(i), fake.row(i));
        for (j, h) in hat.row_mut(i).iter_mut().enumerate() {
            *h = x[j] + a * (y[j] - x[j]);
        }
    }
    let xh = tape.var(hat);
    let dh = disc.forward(tape, xh);
    let total = tape.sum(dh);
    let one = tape.constant(Matrix::scalar(1.0));
    let g = tape.grad_nodes(total, one, &[xh])?[0];
    let norms = tape.norm_rows(g);
    let dev = tape.offset(norms, -1.0);
    let sq = tape.mul(dev, dev);
    let m = tape.mean(sq);
    Ok(tape.scale(m, coefficient))
}

/// Penalty value and its gradient with respect to the discriminator
/// parameters.
pub fn gradient_penalty(
    disc: &MlpParams,
    real: &Matrix,
    fake: &Matrix,
    coefficient: f64,
    rng: &mut dyn RngCore,
) -> Result<(f64, Vec<f64>), TrainError> {
    let mut tape = Tape::new();
    let bound = disc.bind(&mut tape, true);
    let p = penalty_on_tape(&mut tape, &bound, real, fake, coefficient, rng)?;
    let value = tape.value(p).item();
    let grads = tape.gradient(p, &bound.param_nodes())?;
    Ok((value, BoundMlp::flatten(&grads)))
}

/// Gradient of the discriminator surrogate (including the penalty).
pub fn disc_gradient(
    disc: &MlpParams,
    real: &Matrix,
    fake: &Matrix,
    cfg: &TrainConfig,
    rng: &mut dyn RngCore,
) -> Result<DiscStep, TrainError> {
    let hp = cfg.hp;
    let mut tape = Tape::new();
    let bound = disc.bind(&mut tape, true);
    let xr = tape.constant(real.clone());
    let xf = tape.constant(fake.clone());
    let dr = bound.forward(&mut tape, xr);
    let df = bound.forward(&mut tape, xf);
    let (vr, vf) = (values(&tape, dr), values(&tape, df));
    let loss = cumulant_loss(&vr, &vf, hp)?;
    let wr = sample_weights(&vr, hp.real_exponent())?;
    let wf = sample_weights(&vf, hp.fake_exponent())?;

    let mut surrogate = match cfg.gradient_form {
        GradientForm::Weighted => {
            let a = weighted_sum(&mut tape, df, &wf);
            let b = weighted_sum(&mut tape, dr, &wr);
            tape.sub(a, b)
        }
        GradientForm::Autodiff => {
            let (_, _, total) = cumulant_loss_on_tape(&mut tape, dr, df, hp);
            tape.scale(total, -1.0)
        }
        GradientForm::PlainMean => {
            let a = tape.mean(df);
            let b = tape.mean(dr);
            tape.sub(a, b)
        }
    };
    let mut gp = 0.0;
    if let Lipschitz::Gp(c) = cfg.lipschitz {
        if c > 0.0 {
            let p = penalty_on_tape(&mut tape, &bound, real, fake, c, rng)?;
            gp = tape.value(p).item();
            surrogate = tape.add(surrogate, p);
        }
    }
    let grads = tape.gradient(surrogate, &bound.param_nodes())?;
    Ok(DiscStep {
        loss,
        gp,
        entropy_beta: weight_entropy(&wr),
        entropy_gamma: weight_entropy(&wf),
        grad: BoundMlp::flatten(&grads),
    })
}

/// Gradient of the generator surrogate `−Σ wᵞᵢ D(G(zᵢ))` (or its
/// autodiff/plain-mean counterpart).
pub fn gen_gradient(
    gen: &MlpParams,
    disc: &MlpParams,
    noise: &Matrix,
    cfg: &TrainConfig,
) -> Result<GenStep, TrainError> {
    let gamma = cfg.hp.fake_exponent();
    let mut tape = Tape::new();
    let g = gen.bind(&mut tape, true);
    let d = disc.bind(&mut tape, false);
    let z = tape.constant(noise.clone());
    let x = g.forward(&mut tape, z);
    let df = d.forward(&mut tape, x);
    let vf = values(&tape, df);
    let wf = sample_weights(&vf, gamma)?;
    let fake_term = cgf_term(&vf, gamma)?;
    let objective = match cfg.gradient_form {
        GradientForm::Weighted => weighted_sum(&mut tape, df, &wf),
        GradientForm::Autodiff => cgf_term_on_tape(&mut tape, df, gamma),
        GradientForm::PlainMean => tape.mean(df),
    };
    let surrogate = tape.scale(objective, -1.0);
    let grads = tape.gradient(surrogate, &g.param_nodes())?;
    Ok(GenStep {
        fake_term,
        entropy_gamma: weight_entropy(&wf),
        grad: BoundMlp::flatten(&grads),
    })
}

pub fn grad_norm(g: &[f64]) -> f64 {
    norm_sq(g).sqrt()
}

/// Gradient of the batch loss `L̂` itself (not the surrogate) with respect
/// to the discriminator parameters, by reverse mode through the stabilised
/// estimator.
pub fn loss_gradient(
    disc: &MlpParams,
    real: &Matrix,
    fake: &Matrix,
    hp: HyperPair,
) -> Result<(f64, Vec<f64>), TrainError> {
    let mut tape = Tape::new();
    let bound = disc.bind(&mut tape, true);
    let xr = tape.constant(real.clone());
    let xf = tape.constant(fake.clone());
    let dr = bound.forward(&mut tape, xr);
    let df = bound.forward(&mut tape, xf);
    let (_, _, total) = cumulant_loss_on_tape(&mut tape, dr, df, hp);
    let value = tape.value(total).item();
    let grads = tape.gradient(total, &bound.param_nodes())?;
    Ok((value, BoundMlp::flatten(&grads)))
}
