//! Helpers shared by the gradient checks and the acceptance suite.

#![allow(dead_code)]

use cumgan::cumulant::{cumulant_loss, HyperPair};
use cumgan::diffcore::{Activation, Matrix, MlpParams, MlpSpec};
use cumgan::trainer::{
    disc_gradient, gen_gradient, loss_gradient, GradientForm, Lipschitz, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const H: f64 = 1e-5;

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// A small network with random widths; `smooth` picks tanh hidden layers.
pub fn random_net(input: usize, output: usize, smooth: bool, rng: &mut ChaCha8Rng) -> MlpParams {
    let hidden = rng.random_range(2..6);
    let act = if smooth { Activation::Tanh } else { Activation::Relu };
    let mut spec = MlpSpec::relu(&[input, hidden, hidden, output], Activation::Linear);
    spec.activations[0] = act;
    spec.activations[1] = act;
    if rng.random_bool(0.3) {
        spec.clip = Some(rng.random_range(0.5..5.0));
    }
    MlpParams::init(spec, rng).unwrap()
}

pub fn random_hp(rng: &mut ChaCha8Rng) -> HyperPair {
    let pick = |rng: &mut ChaCha8Rng| match rng.random_range(0..4) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random_range(-2.0..2.0),
    };
    HyperPair::new(pick(rng), pick(rng)).unwrap()
}

/// `‖a − b‖ / ‖b‖`, with `‖b‖` floored at 1e-4 so that a vanishing
/// gradient (a dead ReLU network, say) is compared absolutely.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1e-4)
}

pub fn central_difference(params: &MlpParams, f: impl Fn(&MlpParams) -> f64) -> Vec<f64> {
    let flat = params.to_flat();
    let mut p = params.clone();
    (0..flat.len())
        .map(|i| {
            let mut v = flat.clone();
            v[i] = flat[i] + H;
            p.set_flat(&v).unwrap();
            let up = f(&p);
            v[i] = flat[i] - H;
            p.set_flat(&v).unwrap();
            let down = f(&p);
            (up - down) / (2.0 * H)
        })
        .collect()
}

pub fn batch_loss(disc: &MlpParams, real: &Matrix, fake: &Matrix, hp: HyperPair) -> f64 {
    let dr = disc.forward_batch(real).unwrap().into_vec();
    let df = disc.forward_batch(fake).unwrap().into_vec();
    cumulant_loss(&dr, &df, hp).unwrap().total
}

/// Relative error of the reverse-mode loss gradient against central
/// differences on one random `(net, batch, hp)` triple.
pub fn fd_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..4);
    let disc = random_net(d, 1, true, &mut rng);
    let m = rng.random_range(2..9);
    let real = gaussian(m, d, &mut rng);
    let fake = gaussian(m, d, &mut rng);
    let hp = random_hp(&mut rng);
    let (value, grad) = loss_gradient(&disc, &real, &fake, hp).unwrap();
    assert!((value - batch_loss(&disc, &real, &fake, hp)).abs() < 1e-12);
    let fd = central_difference(&disc, |p| batch_loss(p, &real, &fake, hp));
    rel_err(&grad, &fd)
}

fn config(hp: HyperPair, form: GradientForm) -> TrainConfig {
    TrainConfig {
        hp,
        gradient_form: form,
        lipschitz: Lipschitz::None,
        ..TrainConfig::default()
    }
}

/// Weighted-sample discriminator update against reverse mode through the
/// estimator and against the negated loss gradient, then the same for the
/// generator.
pub fn weighted_check(seed: u64) -> [f64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
    let d = rng.random_range(1..4);
    let disc = random_net(d, 1, rng.random_bool(0.5), &mut rng);
    let gen = random_net(3, d, rng.random_bool(0.5), &mut rng);
    let m = rng.random_range(2..17);
    let real = gaussian(m, d, &mut rng);
    let noise = gaussian(m, 3, &mut rng);
    let fake = gen.forward_batch(&noise).unwrap();
    let hp = random_hp(&mut rng);
    let mut r = ChaCha8Rng::seed_from_u64(0);

    let w = disc_gradient(&disc, &real, &fake, &config(hp, GradientForm::Weighted), &mut r).unwrap();
    let a = disc_gradient(&disc, &real, &fake, &config(hp, GradientForm::Autodiff), &mut r).unwrap();
    let (_, direct) = loss_gradient(&disc, &real, &fake, hp).unwrap();
    let ascent: Vec<f64> = direct.iter().map(|g| -g).collect();

    let gw = gen_gradient(&gen, &disc, &noise, &config(hp, GradientForm::Weighted)).unwrap();
    let ga = gen_gradient(&gen, &disc, &noise, &config(hp, GradientForm::Autodiff)).unwrap();
    [rel_err(&w.grad, &a.grad), rel_err(&w.grad, &ascent), rel_err(&gw.grad, &ga.grad)]
}
