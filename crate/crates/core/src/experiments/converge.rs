//! `converge`: the linear-Gaussian descent–ascent dynamics against their
//! convergence bound.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{write_file, ExperimentError};
use crate::diffcore::Matrix;
use crate::dynamics::{
    random_spd, run_dynamics, Coefficient, DynamicsError, LinearGaussianState, RateConvention,
    SigmaUpdate, Violation,
};

/// Covariance of the real data.
#[derive(Clone, Debug, PartialEq)]
pub enum SigmaSpec {
    Identity,
    Diagonal(Vec<f64>),
    /// Rows separated by `;`, entries by `,`.
    Full(Vec<Vec<f64>>),
    /// Seeded random SPD matrix with this maximum condition number.
    Random(f64),
}

impl FromStr for SigmaSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let nums = |t: &str| -> Result<Vec<f64>, String> {
            t.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
                .collect()
        };
        if s == "identity" {
            Ok(SigmaSpec::Identity)
        } else if let Some(rest) = s.strip_prefix("diag:") {
            Ok(SigmaSpec::Diagonal(nums(rest)?))
        } else if let Some(rest) = s.strip_prefix("random:") {
            let c: f64 = rest.trim().parse().map_err(|e| format!("`{rest}`: {e}"))?;
            if !(c >= 1.0 && c.is_finite()) {
                return Err(format!("condition number must be at least 1, got {c}"));
            }
            Ok(SigmaSpec::Random(c))
        } else {
            Ok(SigmaSpec::Full(s.split(';').map(nums).collect::<Result<_, _>>()?))
        }
    }
}

impl SigmaSpec {
    pub fn build(&self, d: usize, seed: u64) -> Result<Matrix, ExperimentError> {
        let usage = |m: String| ExperimentError::Usage(m);
        let m = match self {
            SigmaSpec::Identity => Matrix::identity(d),
            SigmaSpec::Diagonal(v) => Matrix::diagonal(v),
            SigmaSpec::Full(rows) => {
                Matrix::from_rows(rows).map_err(|e| usage(format!("--sigma: {e}")))?
            }
            SigmaSpec::Random(c) => random_spd(d, *c, &mut ChaCha8Rng::seed_from_u64(seed)),
        };
        if m.rows() != d || m.cols() != d {
            return Err(usage(format!(
                "--sigma is {}x{}, expected {d}x{d}",
                m.rows(),
                m.cols()
            )));
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergeOptions {
    pub d: usize,
    pub lambda: f64,
    pub beta: f64,
    pub gamma: f64,
    pub steps: u64,
    pub sigma: SigmaSpec,
    /// Real mean; all ones when unset.
    pub mu: Option<Vec<f64>>,
    pub coefficient: Coefficient,
    pub sigma_update: SigmaUpdate,
    pub rate: RateConvention,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for ConvergeOptions {
    fn default() -> Self {
        Self {
            d: 1,
            lambda: 0.1,
            beta: 0.5,
            gamma: 0.0,
            steps: 1000,
            sigma: SigmaSpec::Identity,
            mu: None,
            coefficient: Coefficient::Beta,
            sigma_update: SigmaUpdate::Whitened,
            rate: RateConvention::Exact,
            seed: 0,
            out: None,
        }
    }
}

/// Outcome of one convention's check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConventionVerdict {
    pub convention: String,
    /// `None` when the convention does not cover this coefficient.
    pub rate: Option<f64>,
    pub holds: Option<bool>,
    pub first_violation: Option<Violation>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergeReport {
    pub coefficient: f64,
    pub lambda: f64,
    pub steps: u64,
    pub initial_distance_sq: f64,
    pub final_distance_sq: f64,
    /// Mean per-step growth of the squared distance.
    pub mean_growth: f64,
    pub stated: ConventionVerdict,
    pub exact: ConventionVerdict,
    /// Convention that decided `passed`.
    pub judged_by: String,
    pub converges: bool,
    pub passed: bool,
}

impl ConvergeReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "coefficient b = {}, lambda = {}", self.coefficient, self.lambda);
        let _ = writeln!(
            s,
            "distance^2: {:.6e} -> {:.6e} over {} steps (mean growth {:.12})",
            self.initial_distance_sq, self.final_distance_sq, self.steps, self.mean_growth
        );
        if !self.converges {
            let _ = writeln!(
                s,
                "growth factor 1 + lambda^2 = {:.12} per step: no convergence",
                1.0 + self.lambda * self.lambda
            );
        }
        for v in [&self.stated, &self.exact] {
            match (v.rate, v.holds) {
                (Some(r), Some(true)) => {
                    let _ = writeln!(s, "{} rate {r:.12}: bound holds at every step", v.convention);
                }
                (Some(r), _) => {
                    let at = v
                        .first_violation
                        .map(|x| format!(" ({} violated at t = {}: {:.6e} > {:.6e})", x.kind, x.t, x.lhs, x.rhs))
                        .unwrap_or_default();
                    let _ = writeln!(s, "{} rate {r:.12}: bound fails{at}", v.convention);
                }
                (None, _) => {
                    let _ = writeln!(s, "{} rate: not defined for this coefficient", v.convention);
                }
            }
        }
        let _ = writeln!(
            s,
            "{} (judged by the {} rate)",
            if self.passed { "PASS" } else { "FAIL" },
            self.judged_by
        );
        s
    }
}

fn state(opts: &ConvergeOptions) -> Result<LinearGaussianState, ExperimentError> {
    let usage = |e: DynamicsError| ExperimentError::Usage(e.to_string());
    if opts.d == 0 {
        return Err(ExperimentError::Usage("--d must be at least 1".into()));
    }
    if opts.steps == 0 {
        return Err(ExperimentError::Usage("--steps must be at least 1".into()));
    }
    let mu = opts.mu.clone().unwrap_or_else(|| vec![1.0; opts.d]);
    if mu.len() != opts.d {
        return Err(ExperimentError::Usage(format!(
            "--mu has {} entries, expected {}",
            mu.len(),
            opts.d
        )));
    }
    let sigma = opts.sigma.build(opts.d, opts.seed)?;
    let st = LinearGaussianState::new(mu, opts.lambda, opts.beta, opts.gamma)
        .map_err(usage)?
        .with_sigma(sigma)
        .map_err(usage)?
        .with_coefficient(opts.coefficient)
        .with_sigma_update(opts.sigma_update);
    let b = st.effective_coefficient();
    if opts.lambda * b >= 1.0 {
        return Err(ExperimentError::Usage(format!(
            "coefficient {b} must be below 1/lambda = {}",
            1.0 / opts.lambda
        )));
    }
    Ok(st)
}

fn verdict(
    st: &LinearGaussianState,
    steps: u64,
    convention: RateConvention,
) -> Result<(ConventionVerdict, crate::dynamics::DynamicsTrace), ExperimentError> {
    let trace = run_dynamics(st, steps, convention)
        .map_err(|e| ExperimentError::Runtime(e.to_string()))?;
    let v = ConventionVerdict {
        convention: convention.to_string(),
        rate: trace.rate,
        holds: trace.checked().then(|| trace.holds()),
        first_violation: trace.first_violation(),
    };
    Ok((v, trace))
}

/// Runs the dynamics under both conventions and judges by `opts.rate`,
/// falling back to the stated rate when the exact one is undefined.
/// Writes the judged trace as CSV when `opts.out` is set.
pub fn run_converge(opts: &ConvergeOptions) -> Result<ConvergeReport, ExperimentError> {
    let st = state(opts)?;
    let (stated, stated_trace) = verdict(&st, opts.steps, RateConvention::Stated)?;
    let (exact, exact_trace) = verdict(&st, opts.steps, RateConvention::Exact)?;
    let (judge, trace) = match opts.rate {
        RateConvention::Exact if exact.rate.is_some() => (&exact, &exact_trace),
        _ => (&stated, &stated_trace),
    };
    let first = trace.rows[0].distance_sq;
    let last = trace.last().distance_sq;
    let b = st.effective_coefficient();
    let converges = b > 0.0;
    let passed = converges && judge.holds == Some(true);
    if let Some(path) = &opts.out {
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).expect("writing to memory");
        write_file(path, &buf)?;
    }
    Ok(ConvergeReport {
        coefficient: b,
        lambda: opts.lambda,
        steps: opts.steps,
        initial_distance_sq: first,
        final_distance_sq: last,
        mean_growth: if first > 0.0 {
            (last / first).powf(1.0 / opts.steps as f64)
        } else {
            1.0
        },
        judged_by: judge.convention.clone(),
        stated,
        exact,
        converges,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_specs_parse() {
        assert_eq!("identity".parse::<SigmaSpec>().unwrap(), SigmaSpec::Identity);
        assert_eq!(
            "diag:1,4".parse::<SigmaSpec>().unwrap(),
            SigmaSpec::Diagonal(vec![1.0, 4.0])
        );
        assert_eq!(
            "2,0.5;0.5,1".parse::<SigmaSpec>().unwrap(),
            SigmaSpec::Full(vec![vec![2.0, 0.5], vec![0.5, 1.0]])
        );
        assert_eq!("random:50".parse::<SigmaSpec>().unwrap(), SigmaSpec::Random(50.0));
        assert!("random:0.5".parse::<SigmaSpec>().is_err());
        assert!("diag:x".parse::<SigmaSpec>().is_err());
    }

    #[test]
    fn default_run_passes_exact_and_fails_stated() {
        let r = run_converge(&ConvergeOptions::default()).unwrap();
        assert!(r.passed);
        assert_eq!(r.exact.holds, Some(true));
        assert_eq!(r.stated.holds, Some(false));
        assert_eq!(r.stated.first_violation.unwrap().t, 1);
    }

    #[test]
    fn zero_beta_reports_growth() {
        let r = run_converge(&ConvergeOptions {
            beta: 0.0,
            steps: 50,
            ..Default::default()
        })
        .unwrap();
        assert!(!r.converges && !r.passed);
        assert!((r.mean_growth - 1.01).abs() < 1e-12);
        assert!(r.summary().contains("no convergence"));
    }

    #[test]
    fn rejects_large_coefficient() {
        let e = run_converge(&ConvergeOptions {
            beta: 15.0,
            ..Default::default()
        })
        .unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = run_converge(&ConvergeOptions {
            d: 2,
            sigma: SigmaSpec::Diagonal(vec![1.0, -1.0]),
            ..Default::default()
        })
        .unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn exact_rate_undefined_falls_back_to_stated() {
        let r = run_converge(&ConvergeOptions {
            beta: 5.0,
            steps: 20,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(r.exact.rate, None);
        assert_eq!(r.judged_by, "stated");
    }
}
