//! The ring-of-Gaussians target and its mode-coverage metric.

use std::f64::consts::PI;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffcore::Matrix;
use crate::trainer::Sampler;

/// Equiprobable isotropic Gaussians at equal angles on a circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingMixtureSpec {
    pub modes: usize,
    pub radius: f64,
    pub sd: f64,
}

impl Default for RingMixtureSpec {
    fn default() -> Self {
        Self {
            modes: 8,
            radius: 2.0,
            sd: 0.02,
        }
    }
}

impl RingMixtureSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.modes == 0 {
            return Err("ring needs at least one mode".into());
        }
        if !(self.radius > 0.0 && self.radius.is_finite() && self.sd > 0.0 && self.sd.is_finite())
        {
            return Err(format!(
                "radius and sd must be positive, got {} and {}",
                self.radius, self.sd
            ));
        }
        Ok(())
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        (0..self.modes)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / self.modes as f64;
                [self.radius * a.cos(), self.radius * a.sin()]
            })
            .collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        vec![1.0 / self.modes as f64; self.modes]
    }
}

impl Sampler for RingMixtureSpec {
    fn dim(&self) -> usize {
        2
    }

    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Matrix {
        let centers = self.centers();
        let mut out = Matrix::zeros(n, 2);
        for i in 0..n {
            let c = centers[rng.random_range(0..self.modes)];
            let row = out.row_mut(i);
            row[0] = c[0] + self.sd * rng.sample::<f64, _>(StandardNormal);
            row[1] = c[1] + self.sd * rng.sample::<f64, _>(StandardNormal);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeCoverageReport {
    pub iteration: usize,
    /// Modes holding at least `threshold` of the samples within 3σ.
    pub modes_covered: usize,
    /// Fraction of samples within 3σ of some center.
    pub high_quality_fraction: f64,
    /// Samples assigned to each center by nearest distance.
    pub histogram: Vec<usize>,
    /// Of those, the ones within 3σ.
    pub within: Vec<usize>,
    pub samples: usize,
    pub threshold: f64,
}

/// Scores `samples` (one point per row) against the ring.
pub fn mode_coverage(
    ring: &RingMixtureSpec,
    samples: &Matrix,
    threshold: f64,
    iteration: usize,
) -> ModeCoverageReport {
    let centers = ring.centers();
    let mut histogram = vec![0; ring.modes];
    let mut within = vec![0; ring.modes];
    let r2 = (3.0 * ring.sd).powi(2);
    for i in 0..samples.rows() {
        let p = samples.row(i);
        let (best, d2) = centers
            .iter()
            .map(|c| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2))
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (j, d)| if d < acc.1 { (j, d) } else { acc });
        histogram[best] += 1;
        if d2 <= r2 {
            within[best] += 1;
        }
    }
    let n = samples.rows();
    let need = threshold * n as f64;
    let modes_covered = within
        .iter()
        .filter(|&&w| w > 0 && w as f64 >= need)
        .count();
    let good: usize = within.iter().sum();
    ModeCoverageReport {
        iteration,
        modes_covered,
        high_quality_fraction: if n == 0 { 0.0 } else { good as f64 / n as f64 },
        histogram,
        within,
        samples: n,
        threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn centers_are_equidistant() {
        let r = RingMixtureSpec::default();
        let c = r.centers();
        let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        for i in 0..8 {
            assert!((d(c[i], [0.0, 0.0]) - 2.0).abs() < 1e-12);
            assert!((d(c[i], c[(i + 1) % 8]) - d(c[0], c[1])).abs() < 1e-12);
        }
        assert!((r.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn target_samples_cover_every_mode() {
        let r = RingMixtureSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = r.sample(4000, &mut rng);
        let rep = mode_coverage(&r, &s, 0.02, 0);
        assert_eq!(rep.modes_covered, 8);
        assert!(rep.high_quality_fraction > 0.98);
        assert_eq!(rep.histogram.iter().sum::<usize>(), 4000);
    }

    #[test]
    fn collapsed_samples_cover_one_mode() {
        let r = RingMixtureSpec::default();
        let s = Matrix::from_rows(&vec![vec![2.0, 0.01]; 50]).unwrap();
        let rep = mode_coverage(&r, &s, 0.02, 7);
        assert_eq!(rep.modes_covered, 1);
        assert_eq!(rep.high_quality_fraction, 1.0);
        let far = Matrix::from_rows(&vec![vec![0.0, 0.0]; 10]).unwrap();
        assert_eq!(mode_coverage(&r, &far, 0.02, 0).modes_covered, 0);
    }
}
