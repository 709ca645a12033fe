//! Command-line surface: `cumgan <converge|ring8|covariance|divcheck>`.
//!
//! Every flag can also be set in the `--config` file under its long name;
//! flags win over the file, the file over built-in defaults. The seed
//! additionally falls back to `CUMGAN_SEED`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::{ConfigFile, List};
use super::converge::{run_converge, ConvergeOptions, SigmaSpec};
use super::covariance::{run_covariance, CovarianceOptions};
use super::divcheck::{run_divcheck, DivcheckOptions, GaussianPair};
use super::ring::RingMixtureSpec;
use super::ring8::{run_ring8, Ring8Options};
use super::ExperimentError;
use crate::cumulant::Preset;
use crate::dynamics::{Coefficient, DescentMode, RateConvention, SigmaUpdate};

#[derive(Debug, Parser)]
#[command(name = "cumgan", version, about = "Cumulant GAN experiments")]
pub struct Cli {
    /// Flat `key = value` file; keys are long flag names.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Linear-Gaussian dynamics against the convergence bound.
    Converge(ConvergeArgs),
    /// GAN training on the ring of eight Gaussians.
    Ring8(Ring8Args),
    /// (beta, gamma) sweep of covariance learning.
    Covariance(CovarianceArgs),
    /// Variational loss at the optimum against quadrature divergences.
    Divcheck(DivcheckArgs),
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct ConvergeArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    /// identity | diag:a,b,.. | random:COND | rows `a,b;c,d`
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<SigmaSpec>,
    /// Real mean, comma-separated (default all ones).
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<List<f64>>,
    /// beta | beta-plus-gamma
    #[arg(long)]
    pub coefficient: Option<Coefficient>,
    /// whitened | loss-gradient
    #[arg(long)]
    pub sigma_update: Option<SigmaUpdate>,
    /// exact | stated
    #[arg(long)]
    pub rate: Option<RateConvention>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trace CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct Ring8Args {
    /// wasserstein | kld | reverse-kld | hellinger | chi2 | renyi:A | ...
    #[arg(long)]
    pub preset: Option<Preset>,
    /// Generator iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Snapshot iterations, comma-separated.
    #[arg(long)]
    pub snapshots: Option<List<usize>>,
    #[arg(long)]
    pub modes: Option<usize>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub sd: Option<f64>,
    /// Fraction of samples a mode needs to count as covered.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub b1: Option<f64>,
    #[arg(long)]
    pub b2: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Discriminator steps per generator step.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub noise_dim: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Gradient penalty coefficient; 0 disables it.
    #[arg(long)]
    pub gp: Option<f64>,
    /// Discriminator output bound M in M·tanh(D/M).
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub snapshot_size: Option<usize>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct CovarianceArgs {
    /// exact | stochastic
    #[arg(long)]
    pub mode: Option<DescentMode>,
    #[arg(long, allow_hyphen_values = true)]
    pub betas: Option<List<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub gammas: Option<List<f64>>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0: one per core).
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub trace_every: Option<usize>,
    /// Mean error curves as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct DivcheckArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub alphas: Option<List<f64>>,
    /// shift | scale | mixed | identical | mr:sr/mg:sg, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    pub pairs: Option<List<GaussianPair>>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// JSON-lines copy of the records.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ConvergeArgs {
    pub fn resolve(self, cfg: &ConfigFile, env_seed: Option<&str>) -> Result<ConvergeOptions, ExperimentError> {
        let d = ConvergeOptions::default();
        Ok(ConvergeOptions {
            d: cfg.resolve("d", self.d, d.d)?,
            lambda: cfg.resolve("lambda", self.lambda, d.lambda)?,
            beta: cfg.resolve("beta", self.beta, d.beta)?,
            gamma: cfg.resolve("gamma", self.gamma, d.gamma)?,
            steps: cfg.resolve("steps", self.steps, d.steps)?,
            sigma: cfg.resolve("sigma", self.sigma, d.sigma)?,
            mu: cfg.resolve_opt("mu", self.mu)?.map(|l| l.0),
            coefficient: cfg.resolve("coefficient", self.coefficient, d.coefficient)?,
            sigma_update: cfg.resolve("sigma-update", self.sigma_update, d.sigma_update)?,
            rate: cfg.resolve("rate", self.rate, d.rate)?,
            seed: cfg.resolve_seed(self.seed, env_seed)?,
            out: cfg.resolve_opt("out", self.out)?,
        })
    }
}

impl Ring8Args {
    pub fn resolve(self, cfg: &ConfigFile, env_seed: Option<&str>) -> Result<Ring8Options, ExperimentError> {
        let d = Ring8Options::default();
        Ok(Ring8Options {
            preset: cfg.resolve("preset", self.preset, d.preset)?,
            iters: cfg.resolve("iters", self.iters, d.iters)?,
            seed: cfg.resolve_seed(self.seed, env_seed)?,
            out_dir: cfg.resolve_opt("out-dir", self.out_dir)?,
            snapshots: cfg.resolve("snapshots", self.snapshots, List(d.snapshots))?.0,
            ring: RingMixtureSpec {
                modes: cfg.resolve("modes", self.modes, d.ring.modes)?,
                radius: cfg.resolve("radius", self.radius, d.ring.radius)?,
                sd: cfg.resolve("sd", self.sd, d.ring.sd)?,
            },
            threshold: cfg.resolve("threshold", self.threshold, d.threshold)?,
            lr: cfg.resolve("lr", self.lr, d.lr)?,
            b1: cfg.resolve("b1", self.b1, d.b1)?,
            b2: cfg.resolve("b2", self.b2, d.b2)?,
            batch: cfg.resolve("batch", self.batch, d.batch)?,
            k_disc: cfg.resolve("k", self.k, d.k_disc)?,
            noise_dim: cfg.resolve("noise-dim", self.noise_dim, d.noise_dim)?,
            hidden: cfg.resolve("hidden", self.hidden, d.hidden)?,
            gp: cfg.resolve("gp", self.gp, d.gp)?,
            clip: cfg.resolve_opt("clip", self.clip)?,
            snapshot_size: cfg.resolve("snapshot-size", self.snapshot_size, d.snapshot_size)?,
        })
    }
}

impl CovarianceArgs {
    pub fn resolve(self, cfg: &ConfigFile, env_seed: Option<&str>) -> Result<CovarianceOptions, ExperimentError> {
        let d = CovarianceOptions::default();
        Ok(CovarianceOptions {
            mode: cfg.resolve("mode", self.mode, d.mode)?,
            betas: cfg.resolve("betas", self.betas, List(d.betas))?.0,
            gammas: cfg.resolve("gammas", self.gammas, List(d.gammas))?.0,
            d: cfg.resolve("d", self.d, d.d)?,
            reps: cfg.resolve("reps", self.reps, d.reps)?,
            samples: cfg.resolve("samples", self.samples, d.samples)?,
            iters: cfg.resolve("iters", self.iters, d.iters)?,
            lr: cfg.resolve("lr", self.lr, d.lr)?,
            k_disc: cfg.resolve("k", self.k, d.k_disc)?,
            seed: cfg.resolve_seed(self.seed, env_seed)?,
            workers: cfg.resolve("workers", self.workers, d.workers)?,
            trace_every: cfg.resolve("trace-every", self.trace_every, d.trace_every)?,
            out: cfg.resolve_opt("out", self.out)?,
        })
    }
}

impl DivcheckArgs {
    pub fn resolve(self, cfg: &ConfigFile) -> Result<DivcheckOptions, ExperimentError> {
        let d = DivcheckOptions::default();
        Ok(DivcheckOptions {
            alphas: cfg.resolve("alphas", self.alphas, List(d.alphas))?.0,
            pairs: cfg.resolve("pairs", self.pairs, List(d.pairs))?.0,
            tol: cfg.resolve("tol", self.tol, d.tol)?,
            out: cfg.resolve_opt("out", self.out)?,
        })
    }
}

fn dispatch(cli: Cli, env_seed: Option<&str>, out: &mut dyn Write) -> Result<i32, ExperimentError> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let io = |source| ExperimentError::Io {
        path: "stdout".into(),
        source,
    };
    let (text, ok) = match cli.command {
        Command::Converge(a) => {
            let r = run_converge(&a.resolve(&cfg, env_seed)?)?;
            (r.summary(), r.passed)
        }
        Command::Ring8(a) => {
            let r = run_ring8(&a.resolve(&cfg, env_seed)?)?;
            (r.summary(), true)
        }
        Command::Covariance(a) => {
            let r = run_covariance(&a.resolve(&cfg, env_seed)?)?;
            (r.summary(), true)
        }
        Command::Divcheck(a) => {
            let r = run_divcheck(&a.resolve(&cfg)?)?;
            (r.jsonl(), r.passed)
        }
    };
    out.write_all(text.as_bytes()).map_err(io)?;
    Ok(if ok { 0 } else { 1 })
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. `env_seed` is the value of `CUMGAN_SEED`, if set.
pub fn run<I, T>(args: I, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli, env_seed, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "cumgan: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(
            std::iter::once("cumgan").chain(args.iter().copied()),
            None,
            &mut o,
            &mut e,
        );
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(call(&["bogus"]).0, 2);
        assert_eq!(call(&["converge", "--lambda", "x"]).0, 2);
        assert_eq!(call(&["converge", "--beta", "15", "--lambda", "0.1"]).0, 2);
        assert_eq!(call(&["--help"]).0, 0);
    }

    #[test]
    fn negative_values_parse() {
        let cli = Cli::try_parse_from([
            "cumgan", "covariance", "--betas", "-1,-20", "--gammas", "1",
        ])
        .unwrap();
        let Command::Covariance(a) = cli.command else {
            panic!("wrong subcommand")
        };
        assert_eq!(a.betas.unwrap().0, vec![-1.0, -20.0]);
        let cli = Cli::try_parse_from(["cumgan", "converge", "--beta", "-0.5"]).unwrap();
        let Command::Converge(a) = cli.command else {
            panic!("wrong subcommand")
        };
        assert_eq!(a.beta, Some(-0.5));
    }

    #[test]
    fn converge_reports() {
        let (code, out, _) = call(&["converge", "--steps", "200"]);
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("PASS"));
        let (code, out, _) = call(&["converge", "--beta", "0", "--steps", "10"]);
        assert_eq!(code, 1);
        assert!(out.contains("no convergence"));
    }
}
