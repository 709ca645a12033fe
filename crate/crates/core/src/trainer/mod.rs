//! The cumulant GAN training loop: `k_disc` discriminator updates per
//! generator update, softmax-weighted gradients, Lipschitz control and a
//! per-iteration trace.
//!
//! Everything is driven by one seeded ChaCha stream, so identical
//! configurations produce bit-identical parameters and traces. Snapshots
//! draw from a separate stream and never perturb training.

pub mod config;
pub mod optim;
pub mod step;
pub mod trace;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::cumulant::CumulantError;
use crate::diffcore::{DiffError, Matrix, MlpParams, MlpSpec};

pub use config::{GradientForm, Lipschitz, OptimizerConfig, TrainConfig, DEFAULT_CLIP_FACTOR};
pub use optim::Optimizer;
pub use step::{
    disc_gradient, gen_gradient, gradient_penalty, loss_gradient, DiscStep, GenStep,
};
pub use trace::{Snapshot, TraceRow, TrainingTrace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Cumulant(#[from] CumulantError),
    #[error("training aborted at iteration {iteration} ({phase}): {reason}")]
    Aborted {
        iteration: usize,
        phase: &'static str,
        reason: String,
    },
}

/// A source of batches, one sample per row.
pub trait Sampler {
    fn dim(&self) -> usize;
    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Matrix;
}

/// Standard normal noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GaussianNoise {
    pub dim: usize,
}

impl Sampler for GaussianNoise {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Matrix {
        let data = (0..n * self.dim)
            .map(|_| rand::Rng::sample::<f64, _>(rng, StandardNormal))
            .collect();
        Matrix::from_vec(n, self.dim, data).expect("length matches shape")
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub gen: MlpParams,
    pub disc: MlpParams,
    pub trace: TrainingTrace,
    pub snapshots: Vec<Snapshot>,
    pub warnings: Vec<String>,
}

fn abort(iteration: usize, phase: &'static str) -> impl Fn(TrainError) -> TrainError {
    move |e| TrainError::Aborted {
        iteration,
        phase,
        reason: e.to_string(),
    }
}

/// Runs `cfg.iterations` generator iterations. The discriminator's output
/// clip is taken from `cfg.clip_factor` when set.
pub fn train(
    cfg: &TrainConfig,
    real: &dyn Sampler,
    noise: &dyn Sampler,
    gen_spec: MlpSpec,
    disc_spec: MlpSpec,
) -> Result<TrainOutcome, TrainError> {
    let warnings = cfg.validate()?;
    gen_spec.validate()?;
    disc_spec.validate()?;
    let dims = [
        ("generator input", gen_spec.input_width(), noise.dim()),
        ("generator output", gen_spec.output_width(), real.dim()),
        ("discriminator input", disc_spec.input_width(), real.dim()),
        ("discriminator output", disc_spec.output_width(), 1),
    ];
    for (what, got, want) in dims {
        if got != want {
            return Err(TrainError::Config(format!(
                "{what} width is {got}, expected {want}"
            )));
        }
    }
    let disc_spec = match cfg.clip_factor {
        Some(m) => disc_spec.with_clip(Some(m)),
        None => disc_spec,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut snap_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    snap_rng.set_stream(1);

    let mut gen = MlpParams::init(gen_spec, &mut rng)?;
    let mut disc = MlpParams::init(disc_spec, &mut rng)?;
    let mut gen_opt = Optimizer::new(cfg.gen_optimizer, gen.num_params());
    let mut disc_opt = Optimizer::new(cfg.disc_optimizer, disc.num_params());

    let mut trace = TrainingTrace::default();
    let mut snapshots = Vec::new();
    let take_snapshot = |gen: &MlpParams, it: usize, rng: &mut ChaCha8Rng| {
        let z = noise.sample(cfg.snapshot_size, rng);
        gen.forward_batch(&z).map(|samples| Snapshot {
            iteration: it,
            samples,
        })
    };
    if cfg.snapshot_at.contains(&0) {
        snapshots.push(take_snapshot(&gen, 0, &mut snap_rng)?);
    }

    let m = cfg.batch_size;
    for it in 1..=cfg.iterations {
        let mut last = None;
        for _ in 0..cfg.k_disc {
            let xr = real.sample(m, &mut rng);
            let z = noise.sample(m, &mut rng);
            let xf = gen.forward_batch(&z)?;
            let step = step::disc_gradient(&disc, &xr, &xf, cfg, &mut rng)
                .map_err(abort(it, "discriminator"))?;
            let mut flat = disc.to_flat();
            disc_opt.step(&mut flat, &step.grad);
            disc.set_flat(&flat).map_err(|e| abort(it, "discriminator")(e.into()))?;
            if let Lipschitz::Clip(c) = cfg.lipschitz {
                disc = disc.weight_clip(c)?;
            }
            last = Some(step);
        }
        let ds = last.expect("k_disc >= 1");

        let z = noise.sample(m, &mut rng);
        let gs = step::gen_gradient(&gen, &disc, &z, cfg).map_err(abort(it, "generator"))?;
        let mut flat = gen.to_flat();
        gen_opt.step(&mut flat, &gs.grad);
        gen.set_flat(&flat).map_err(|e| abort(it, "generator")(e.into()))?;

        let snap = cfg.snapshot_at.contains(&it);
        if snap {
            snapshots.push(take_snapshot(&gen, it, &mut snap_rng)?);
        }
        if it % cfg.log_every == 0 || it == cfg.iterations || snap {
            let row = TraceRow {
                iteration: it,
                real_term: ds.loss.real_term,
                fake_term: ds.loss.fake_term,
                disc_loss: ds.loss.total,
                gen_fake_term: gs.fake_term,
                entropy_beta: ds.entropy_beta,
                entropy_gamma: ds.entropy_gamma,
                disc_grad_norm: step::grad_norm(&ds.grad),
                gen_grad_norm: step::grad_norm(&gs.grad),
                gp: ds.gp,
                snapshot: snap.then_some(it),
            };
            if let Some(field) = row.non_finite_field() {
                return Err(TrainError::Aborted {
                    iteration: it,
                    phase: "trace",
                    reason: format!("{field} is not finite"),
                });
            }
            trace.rows.push(row);
        }
    }
    Ok(TrainOutcome {
        gen,
        disc,
        trace,
        snapshots,
        warnings,
    })
}
