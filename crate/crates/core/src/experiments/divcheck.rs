//! `divcheck`: the cumulant loss at the optimal discriminator against
//! Rényi divergences computed by quadrature.
//!
//! For `(β, γ) = (α, 1 − α)` and `D* = log(p_r/p_g)` the population loss
//! equals `R_α(p_g ‖ p_r)`; at `α = 0` and `α = 1` the divergence is the
//! matching KL.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use super::{write_file, ExperimentError};
use crate::cumulant::HyperPair;
use crate::oracles::{
    chi2_quadrature, optimal_discriminator, population_cumulant_loss, renyi_quadrature, Density1D,
};

/// A real/generated pair of 1D Gaussians.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPair {
    pub name: String,
    pub real: (f64, f64),
    pub fake: (f64, f64),
}

impl GaussianPair {
    pub fn named(name: &str) -> Option<Self> {
        let (real, fake) = match name {
            "shift" => ((0.0, 1.0), (1.0, 1.0)),
            "scale" => ((0.0, 1.0), (0.5, 1.2)),
            "mixed" => ((-0.3, 0.8), (0.4, 1.0)),
            "identical" => ((0.0, 1.0), (0.0, 1.0)),
            _ => return None,
        };
        Some(Self {
            name: name.into(),
            real,
            fake,
        })
    }

    pub fn densities(&self) -> Result<(Density1D, Density1D), ExperimentError> {
        let g = |(m, s): (f64, f64)| {
            Density1D::gaussian(m, s).map_err(|e| ExperimentError::Usage(format!("{}: {e}", self.name)))
        };
        Ok((g(self.real)?, g(self.fake)?))
    }
}

/// A name (`shift`, `scale`, `mixed`, `identical`) or
/// `mr:sr/mg:sg` for `N(mr, sr²)` against `N(mg, sg²)`.
impl FromStr for GaussianPair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(p) = Self::named(s) {
            return Ok(p);
        }
        let bad = || format!("unknown pair `{s}` (shift|scale|mixed|identical|mr:sr/mg:sg)");
        let parse = |t: &str| -> Result<(f64, f64), String> {
            let (m, sd) = t.split_once(':').ok_or_else(bad)?;
            Ok((
                m.trim().parse().map_err(|_| bad())?,
                sd.trim().parse().map_err(|_| bad())?,
            ))
        };
        let (r, f) = s.split_once('/').ok_or_else(bad)?;
        Ok(Self {
            name: s.into(),
            real: parse(r)?,
            fake: parse(f)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DivcheckOptions {
    pub alphas: Vec<f64>,
    pub pairs: Vec<GaussianPair>,
    pub tol: f64,
    pub out: Option<PathBuf>,
}

impl Default for DivcheckOptions {
    fn default() -> Self {
        Self {
            alphas: vec![-1.0, 0.5, 2.0],
            pairs: ["shift", "scale", "mixed"]
                .iter()
                .map(|n| GaussianPair::named(n).unwrap())
                .collect(),
            tol: 1e-6,
            out: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivcheckRecord {
    pub alpha: f64,
    pub pair: String,
    pub lhs_variational: f64,
    pub rhs_quadrature: f64,
    pub abs_diff: f64,
    /// `½ log(1 + χ²(p_g ‖ p_r))` at `α = 2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi2_form: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivcheckReport {
    pub records: Vec<DivcheckRecord>,
    pub passed: bool,
}

impl DivcheckReport {
    pub fn jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            let _ = writeln!(s, "{}", serde_json::to_string(r).expect("serialisable"));
        }
        s
    }
}

/// One record per `(α, pair)`.
pub fn run_divcheck(opts: &DivcheckOptions) -> Result<DivcheckReport, ExperimentError> {
    if !(opts.tol > 0.0 && opts.tol.is_finite()) {
        return Err(ExperimentError::Usage(format!(
            "--tol must be positive, got {}",
            opts.tol
        )));
    }
    let runtime = |e: crate::oracles::OracleError| ExperimentError::Runtime(e.to_string());
    let mut records = Vec::new();
    for pair in &opts.pairs {
        let (p_r, p_g) = pair.densities()?;
        let d_star = optimal_discriminator(&p_r, &p_g);
        for &alpha in &opts.alphas {
            let hp = HyperPair::new(alpha, 1.0 - alpha)
                .map_err(|e| ExperimentError::Usage(e.to_string()))?;
            let lhs = population_cumulant_loss(&d_star, &p_r, &p_g, hp).map_err(runtime)?;
            let rhs = renyi_quadrature(&p_g, &p_r, alpha).map_err(runtime)?.value;
            let chi2_form = if alpha == 2.0 {
                Some(0.5 * chi2_quadrature(&p_g, &p_r).map_err(runtime)?.value.ln_1p())
            } else {
                None
            };
            let abs_diff = (lhs - rhs).abs();
            records.push(DivcheckRecord {
                alpha,
                pair: pair.name.clone(),
                lhs_variational: lhs,
                rhs_quadrature: rhs,
                abs_diff,
                chi2_form,
                pass: abs_diff <= opts.tol,
            });
        }
    }
    let report = DivcheckReport {
        passed: records.iter().all(|r| r.pass),
        records,
    };
    if let Some(path) = &opts.out {
        write_file(path, report.jsonl().as_bytes())?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_parse() {
        assert_eq!("shift".parse::<GaussianPair>().unwrap().fake, (1.0, 1.0));
        let p: GaussianPair = "0:1/2:0.5".parse().unwrap();
        assert_eq!((p.real, p.fake), ((0.0, 1.0), (2.0, 0.5)));
        assert!("nope".parse::<GaussianPair>().is_err());
    }

    #[test]
    fn identical_pair_is_zero_on_both_sides() {
        let r = run_divcheck(&DivcheckOptions {
            pairs: vec![GaussianPair::named("identical").unwrap()],
            ..Default::default()
        })
        .unwrap();
        assert!(r.passed);
        for rec in &r.records {
            assert!(rec.lhs_variational.abs() < 1e-12 && rec.rhs_quadrature.abs() < 1e-12);
        }
    }
}
