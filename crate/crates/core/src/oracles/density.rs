//! Analytic densities with the integration domains and breakpoints the
//! quadrature needs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::quadrature::integrate;
use super::OracleError;

/// Half-width of the integration envelope, in standard deviations.
pub const ENVELOPE_SIGMAS: f64 = 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// A one-dimensional Gaussian or Gaussian mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Density1D {
    Gaussian { mean: f64, sd: f64 },
    Mixture(Vec<Component>),
}

fn gaussian_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

impl Density1D {
    pub fn gaussian(mean: f64, sd: f64) -> Result<Self, OracleError> {
        if !(mean.is_finite() && sd > 0.0 && sd.is_finite()) {
            return Err(OracleError::InvalidDensity(format!(
                "N({mean}, {sd}²) is not a valid Gaussian"
            )));
        }
        Ok(Density1D::Gaussian { mean, sd })
    }

    /// Mixture with weights normalised to sum to one.
    pub fn mixture(components: Vec<Component>) -> Result<Self, OracleError> {
        let total: f64 = components.iter().map(|c| c.weight).sum();
        let bad = components.is_empty()
            || components
                .iter()
                .any(|c| !(c.weight >= 0.0 && c.sd > 0.0 && c.mean.is_finite()))
            || !(total > 0.0 && total.is_finite());
        if bad {
            return Err(OracleError::InvalidDensity("bad mixture components".into()));
        }
        Ok(Density1D::Mixture(
            components
                .into_iter()
                .map(|c| Component {
                    weight: c.weight / total,
                    ..c
                })
                .collect(),
        ))
    }

    pub fn family(&self) -> &'static str {
        match self {
            Density1D::Gaussian { .. } => "gaussian",
            Density1D::Mixture(_) => "gaussian-mixture",
        }
    }

    fn components(&self) -> Vec<Component> {
        match self {
            Density1D::Gaussian { mean, sd } => vec![Component {
                weight: 1.0,
                mean: *mean,
                sd: *sd,
            }],
            Density1D::Mixture(c) => c.clone(),
        }
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        match self {
            Density1D::Gaussian { mean, sd } => gaussian_log_pdf(x, *mean, *sd),
            Density1D::Mixture(cs) => log_sum_exp(
                cs.iter()
                    .filter(|c| c.weight > 0.0)
                    .map(|c| c.weight.ln() + gaussian_log_pdf(x, c.mean, c.sd)),
            ),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    /// `[min(μ − Kσ), max(μ + Kσ)]` over components.
    pub fn support(&self) -> (f64, f64) {
        self.components().iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), c| {
                (
                    lo.min(c.mean - ENVELOPE_SIGMAS * c.sd),
                    hi.max(c.mean + ENVELOPE_SIGMAS * c.sd),
                )
            },
        )
    }

    /// Component means and `±2σ, ±6σ` points.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for c in self.components() {
            for k in [-6.0, -2.0, 0.0, 2.0, 6.0] {
                out.push(c.mean + k * c.sd);
            }
        }
        out
    }

    pub fn total_mass(&self) -> Result<f64, OracleError> {
        let pts = partition(&[self]);
        Ok(integrate(|x| self.pdf(x), &pts, 1e-13, 1e-13)?.value)
    }
}

/// Sorted, de-duplicated partition covering every density's support,
/// with all their breakpoints inside.
pub fn partition(densities: &[&Density1D]) -> Vec<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut pts = Vec::new();
    for d in densities {
        let (a, b) = d.support();
        lo = lo.min(a);
        hi = hi.max(b);
        pts.extend(d.breakpoints());
    }
    pts.push(lo);
    pts.push(hi);
    pts.retain(|p| *p >= lo && *p <= hi);
    pts.sort_by(f64::total_cmp);
    let span = hi - lo;
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * span);
    pts
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component2D {
    pub weight: f64,
    pub mean: [f64; 2],
    /// Isotropic standard deviation.
    pub sd: f64,
}

/// An isotropic Gaussian mixture in the plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Density2D {
    components: Vec<Component2D>,
}

impl Density2D {
    pub fn mixture(components: Vec<Component2D>) -> Result<Self, OracleError> {
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if components.is_empty()
            || components.iter().any(|c| !(c.weight >= 0.0 && c.sd > 0.0))
            || !(total > 0.0 && total.is_finite())
        {
            return Err(OracleError::InvalidDensity("bad mixture components".into()));
        }
        Ok(Self {
            components: components
                .into_iter()
                .map(|c| Component2D {
                    weight: c.weight / total,
                    ..c
                })
                .collect(),
        })
    }

    /// Equal-weight ring of `modes` components of radius `radius`.
    pub fn ring(modes: usize, radius: f64, sd: f64) -> Result<Self, OracleError> {
        Self::mixture(
            (0..modes)
                .map(|i| {
                    let a = 2.0 * PI * i as f64 / modes as f64;
                    Component2D {
                        weight: 1.0,
                        mean: [radius * a.cos(), radius * a.sin()],
                        sd,
                    }
                })
                .collect(),
        )
    }

    pub fn components(&self) -> &[Component2D] {
        &self.components
    }

    pub fn log_pdf(&self, x: f64, y: f64) -> f64 {
        log_sum_exp(self.components.iter().map(|c| {
            c.weight.ln()
                + gaussian_log_pdf(x, c.mean[0], c.sd)
                + gaussian_log_pdf(y, c.mean[1], c.sd)
        }))
    }

    pub fn pdf(&self, x: f64, y: f64) -> f64 {
        self.log_pdf(x, y).exp()
    }

    /// Per-axis marginal as a 1D mixture; used for domains and breakpoints.
    pub fn marginal(&self, axis: usize) -> Density1D {
        Density1D::Mixture(
            self.components
                .iter()
                .map(|c| Component {
                    weight: c.weight,
                    mean: c.mean[axis],
                    sd: c.sd,
                })
                .collect(),
        )
    }
}

/// `∫∫ f(x, y)` by nested adaptive quadrature over the joint support of
/// `densities`.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    densities: &[&Density2D],
    tol: f64,
) -> Result<f64, OracleError> {
    let mx: Vec<Density1D> = densities.iter().map(|d| d.marginal(0)).collect();
    let my: Vec<Density1D> = densities.iter().map(|d| d.marginal(1)).collect();
    let px = partition(&mx.iter().collect::<Vec<_>>());
    let py = partition(&my.iter().collect::<Vec<_>>());
    let inner_failure = std::cell::Cell::new(None);
    let outer = integrate(
        |x| match integrate(|y| f(x, y), &py, tol * 1e-2, tol * 1e-2) {
            Ok(q) => q.value,
            Err(e) => {
                inner_failure.set(Some(e));
                0.0
            }
        },
        &px,
        tol,
        tol,
    )?;
    if let Some(e) = inner_failure.take() {
        return Err(e);
    }
    Ok(outer.value)
}
