//! `ring8`: cumulant GAN training on the ring of Gaussians.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use super::ring::{mode_coverage, ModeCoverageReport, RingMixtureSpec};
use super::{write_file, ExperimentError};
use crate::cumulant::{HyperPair, Preset};
use crate::diffcore::{Activation, MlpSpec};
use crate::trainer::{
    train, GaussianNoise, Lipschitz, OptimizerConfig, TrainConfig, TrainError, DEFAULT_CLIP_FACTOR,
};

/// Snapshot iterations used unless overridden.
pub const DEFAULT_SNAPSHOTS: [usize; 5] = [0, 100, 500, 1000, 2000];

#[derive(Clone, Debug, PartialEq)]
pub struct Ring8Options {
    pub preset: Preset,
    /// Generator iterations.
    pub iters: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Snapshot iterations; the final iteration is always added.
    pub snapshots: Vec<usize>,
    pub ring: RingMixtureSpec,
    pub threshold: f64,
    pub lr: f64,
    pub b1: f64,
    pub b2: f64,
    pub batch: usize,
    pub k_disc: usize,
    pub noise_dim: usize,
    pub hidden: usize,
    pub gp: f64,
    /// Discriminator output bound; `None` picks the preset default.
    pub clip: Option<f64>,
    pub snapshot_size: usize,
}

impl Default for Ring8Options {
    fn default() -> Self {
        Self {
            preset: Preset::Kld,
            iters: 2000,
            seed: 0,
            out_dir: None,
            snapshots: DEFAULT_SNAPSHOTS.to_vec(),
            ring: RingMixtureSpec::default(),
            threshold: 0.02,
            lr: 3e-3,
            b1: 0.5,
            b2: 0.9,
            batch: 256,
            k_disc: 5,
            noise_dim: 8,
            hidden: 32,
            gp: 10.0,
            clip: None,
            snapshot_size: 1000,
        }
    }
}

impl Ring8Options {
    pub fn train_config(&self) -> Result<TrainConfig, ExperimentError> {
        let hp = self
            .preset
            .hyper_pair()
            .map_err(|e| ExperimentError::Usage(e.to_string()))?;
        let opt = OptimizerConfig::Adam {
            lr: self.lr,
            b1: self.b1,
            b2: self.b2,
            eps: 1e-8,
        };
        let mut snapshot_at: Vec<usize> = self
            .snapshots
            .iter()
            .copied()
            .filter(|&s| s <= self.iters)
            .chain([self.iters])
            .collect();
        snapshot_at.sort_unstable();
        snapshot_at.dedup();
        Ok(TrainConfig {
            hp,
            k_disc: self.k_disc,
            batch_size: self.batch,
            disc_optimizer: opt,
            gen_optimizer: opt,
            lipschitz: if self.gp > 0.0 {
                Lipschitz::Gp(self.gp)
            } else {
                Lipschitz::None
            },
            clip_factor: self
                .clip
                .or(hp.has_negative().then_some(DEFAULT_CLIP_FACTOR)),
            iterations: self.iters,
            seed: self.seed,
            snapshot_at,
            snapshot_size: self.snapshot_size,
            log_every: 1,
            ..TrainConfig::default()
        })
    }

    fn specs(&self) -> (MlpSpec, MlpSpec) {
        let h = self.hidden;
        (
            MlpSpec::relu(&[self.noise_dim, h, h, 2], Activation::Linear),
            MlpSpec::relu(&[2, h, h, 1], Activation::Linear),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ring8Report {
    pub preset: String,
    pub hp: HyperPair,
    pub seed: u64,
    pub coverage: Vec<ModeCoverageReport>,
    pub warnings: Vec<String>,
}

impl Ring8Report {
    pub fn final_coverage(&self) -> &ModeCoverageReport {
        self.coverage.last().expect("the final iteration is always snapshotted")
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "preset {} (beta = {}, gamma = {}), seed {}",
            self.preset, self.hp.beta, self.hp.gamma, self.seed
        );
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        for c in &self.coverage {
            let _ = writeln!(
                s,
                "iteration {:>6}: {} modes covered, high-quality fraction {:.3}",
                c.iteration, c.modes_covered, c.high_quality_fraction
            );
        }
        s
    }
}

/// Trains, scores every snapshot and, with `out_dir`, writes
/// `trace.jsonl`, `coverage.jsonl` and `snapshot_<iteration>.csv`.
pub fn run_ring8(opts: &Ring8Options) -> Result<Ring8Report, ExperimentError> {
    opts.ring.validate().map_err(ExperimentError::Usage)?;
    if !(opts.threshold > 0.0 && opts.threshold <= 1.0) {
        return Err(ExperimentError::Usage(format!(
            "--threshold must be in (0, 1], got {}",
            opts.threshold
        )));
    }
    let cfg = opts.train_config()?;
    let (gen_spec, disc_spec) = opts.specs();
    let out = train(
        &cfg,
        &opts.ring,
        &GaussianNoise {
            dim: opts.noise_dim,
        },
        gen_spec,
        disc_spec,
    )
    .map_err(|e| match e {
        TrainError::Config(_) => ExperimentError::Usage(e.to_string()),
        _ => ExperimentError::Runtime(e.to_string()),
    })?;

    let coverage: Vec<ModeCoverageReport> = out
        .snapshots
        .iter()
        .map(|s| mode_coverage(&opts.ring, &s.samples, opts.threshold, s.iteration))
        .collect();

    if let Some(dir) = &opts.out_dir {
        let mut buf = Vec::new();
        out.trace.write_jsonl(&mut buf).expect("writing to memory");
        write_file(&dir.join("trace.jsonl"), &buf)?;
        let mut buf = Vec::new();
        for c in &coverage {
            serde_json::to_writer(&mut buf, c).expect("serialisable");
            buf.push(b'\n');
        }
        write_file(&dir.join("coverage.jsonl"), &buf)?;
        for s in &out.snapshots {
            let mut buf = Vec::new();
            s.write_csv(&mut buf).expect("writing to memory");
            write_file(&dir.join(format!("snapshot_{:06}.csv", s.iteration)), &buf)?;
        }
    }

    Ok(Ring8Report {
        preset: opts.preset.to_string(),
        hp: cfg.hp,
        seed: opts.seed,
        coverage,
        warnings: out.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_iterations_snapshot_the_initial_generator() {
        let r = run_ring8(&Ring8Options {
            iters: 0,
            snapshot_size: 200,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(r.coverage.len(), 1);
        assert_eq!(r.coverage[0].iteration, 0);
        assert_eq!(r.coverage[0].samples, 200);
    }

    #[test]
    fn snapshot_schedule_is_clamped_to_budget() {
        let cfg = Ring8Options {
            iters: 300,
            ..Default::default()
        }
        .train_config()
        .unwrap();
        assert_eq!(cfg.snapshot_at, vec![0, 100, 300]);
        let neg = Ring8Options {
            preset: Preset::Chi2,
            ..Default::default()
        };
        assert_eq!(neg.train_config().unwrap().clip_factor, Some(10.0));
    }
}
