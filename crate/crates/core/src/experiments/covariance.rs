//! `covariance`: sweeps `(β, γ)` for the linear covariance-learning game.
//!
//! Repetition `r` draws its `Σ`, initial point and (in stochastic mode)
//! its fixed sample from stream `r` of the seed, so every `(β, γ)` pair
//! sees the same problems and the output does not depend on the pool
//! size.

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{write_file, ExperimentError};
use crate::cumulant::HyperPair;
use crate::dynamics::{covariance_descent, CovarianceExperimentSpec, DescentMode, DynamicsError};

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceOptions {
    pub mode: DescentMode,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub d: usize,
    pub reps: usize,
    pub samples: usize,
    /// Alternating updates (one generator step each).
    pub iters: usize,
    pub lr: f64,
    pub k_disc: usize,
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
    /// Mean error curve every `trace_every` updates.
    pub trace_every: usize,
    pub out: Option<PathBuf>,
}

impl Default for CovarianceOptions {
    fn default() -> Self {
        Self {
            mode: DescentMode::Exact,
            betas: vec![-1.0, -2.0, -5.0, -10.0, -20.0, -50.0],
            gammas: vec![0.5, 1.0, 2.0],
            d: 2,
            reps: 10,
            samples: 10_000,
            iters: 5000,
            lr: 1e-3,
            k_disc: 5,
            seed: 0,
            workers: 0,
            trace_every: 100,
            out: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub beta: f64,
    pub gamma: f64,
    /// Final shape error per repetition; `None` where the run diverged.
    pub finals: Vec<Option<f64>>,
    /// Mean over the repetitions that stayed finite.
    pub mean_error: f64,
    pub mean_raw_error: f64,
    pub diverged: usize,
    /// `(iteration, mean error)` over repetitions that stayed finite.
    pub curve: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovarianceReport {
    pub mode: String,
    pub d: usize,
    pub points: Vec<SweepPoint>,
}

impl CovarianceReport {
    pub fn point(&self, beta: f64, gamma: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.beta == beta && p.gamma == gamma)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode {}, d = {}", self.mode, self.d);
        let _ = writeln!(s, "beta,gamma,mean_error,mean_raw_error,diverged");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{}",
                p.beta, p.gamma, p.mean_error, p.mean_raw_error, p.diverged
            );
        }
        s
    }

    /// `beta,gamma,iteration,frobenius_error` rows of the mean curves.
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("beta,gamma,iteration,frobenius_error\n");
        for p in &self.points {
            for (it, e) in &p.curve {
                let _ = writeln!(s, "{},{},{},{:e}", p.beta, p.gamma, it, e);
            }
        }
        s
    }
}

/// The problem of repetition `rep`.
pub fn repetition_spec(
    opts: &CovarianceOptions,
    hp: HyperPair,
    rep: usize,
) -> (CovarianceExperimentSpec, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(rep as u64);
    let mut spec = CovarianceExperimentSpec::random(opts.d, hp, &mut rng);
    spec.learning_rate = opts.lr;
    spec.k_disc = opts.k_disc;
    spec.samples = opts.samples;
    (spec, rng)
}

struct RepResult {
    errors: Option<(Vec<f64>, f64)>,
}

fn run_rep(
    opts: &CovarianceOptions,
    hp: HyperPair,
    rep: usize,
) -> Result<RepResult, ExperimentError> {
    let (spec, mut rng) = repetition_spec(opts, hp, rep);
    match covariance_descent(&spec, opts.iters, opts.mode, &mut rng) {
        Ok(run) => {
            let raw = *run.raw_errors.last().expect("initial error present");
            Ok(RepResult {
                errors: Some((run.errors, raw)),
            })
        }
        Err(DynamicsError::Diverged { .. }) => Ok(RepResult { errors: None }),
        Err(e) => Err(ExperimentError::Runtime(e.to_string())),
    }
}

fn validate(opts: &CovarianceOptions) -> Result<Vec<HyperPair>, ExperimentError> {
    let usage = |m: &str| Err(ExperimentError::Usage(m.into()));
    if opts.d == 0 {
        return usage("--d must be at least 1");
    }
    if opts.reps == 0 {
        return usage("--reps must be at least 1");
    }
    if opts.iters == 0 {
        return usage("--iters must be at least 1");
    }
    if opts.trace_every == 0 {
        return usage("--trace-every must be at least 1");
    }
    if opts.mode == DescentMode::Stochastic && opts.samples < 2 {
        return usage("--samples must be at least 2");
    }
    let mut pairs = Vec::new();
    for &g in &opts.gammas {
        for &b in &opts.betas {
            pairs.push(HyperPair::new(b, g).map_err(|e| ExperimentError::Usage(e.to_string()))?);
        }
    }
    // Catch bad learning rates and the like before fanning out.
    repetition_spec(opts, pairs[0], 0)
        .0
        .validate()
        .map_err(|e| ExperimentError::Usage(e.to_string()))?;
    Ok(pairs)
}

/// Runs every `(β, γ, repetition)` job on a pool of `opts.workers`
/// threads and writes the mean curves as CSV when `opts.out` is set.
pub fn run_covariance(opts: &CovarianceOptions) -> Result<CovarianceReport, ExperimentError> {
    let pairs = validate(opts)?;
    let jobs: Vec<(usize, usize)> = (0..pairs.len())
        .flat_map(|p| (0..opts.reps).map(move |r| (p, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| ExperimentError::Runtime(format!("worker pool: {e}")))?;
    let results: Vec<RepResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, r)| run_rep(opts, pairs[p], r))
            .collect::<Result<_, _>>()
    })?;

    let points = pairs
        .iter()
        .enumerate()
        .map(|(p, hp)| {
            let reps = &results[p * opts.reps..(p + 1) * opts.reps];
            let ok: Vec<&(Vec<f64>, f64)> = reps.iter().filter_map(|r| r.errors.as_ref()).collect();
            let n = ok.len() as f64;
            let mean = |f: &dyn Fn(&(Vec<f64>, f64)) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / n
                }
            };
            let curve = (0..=opts.iters)
                .filter(|i| i % opts.trace_every == 0 || *i == opts.iters)
                .map(|i| (i, mean(&|r| r.0[i])))
                .collect();
            SweepPoint {
                beta: hp.beta,
                gamma: hp.gamma,
                finals: reps
                    .iter()
                    .map(|r| r.errors.as_ref().map(|e| *e.0.last().unwrap()))
                    .collect(),
                mean_error: mean(&|r| *r.0.last().unwrap()),
                mean_raw_error: mean(&|r| r.1),
                diverged: reps.len() - ok.len(),
                curve,
            }
        })
        .collect();
    let report = CovarianceReport {
        mode: opts.mode.to_string(),
        d: opts.d,
        points,
    };
    if let Some(path) = &opts.out {
        write_file(path, report.curve_csv().as_bytes())?;
    }
    Ok(report)
}
