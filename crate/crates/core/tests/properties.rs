//! Randomised invariants of the estimator, the oracles and the dynamics.

use cumgan::cumulant::{cgf_term, chord_slope, sample_weights, weight_entropy, HyperPair};
use cumgan::diffcore::{Activation, Matrix, MlpParams, MlpSpec};
use cumgan::dynamics::{
    covariance_exact_loss, run_dynamics, LinearGaussianState, RateConvention,
};
use cumgan::experiments::{mode_coverage, RingMixtureSpec};
use cumgan::oracles::{
    optimal_discriminator, population_cumulant_loss, renyi_quadrature, Density1D,
};
use cumgan::trainer::Sampler;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn batch() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cgf_shift_equivariance(v in batch(), s in -5.0..5.0f64, c in -20.0..20.0f64) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let a = cgf_term(&shifted, s).unwrap();
        let b = cgf_term(&v, s).unwrap() + c;
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + c.abs() + b.abs()));
    }

    #[test]
    fn cgf_is_continuous_at_zero(v in batch(), s in -1e-3..1e-3f64) {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        // |Λ(s)/s − mean| ≤ |s|·max|v|² covers the second-order term.
        let bound = s.abs() * (var + max * max) + 1e-12;
        prop_assert!((cgf_term(&v, s).unwrap() - mean).abs() <= bound);
    }

    #[test]
    fn chord_slope_is_monotone(v in batch(), mut grid in prop::collection::vec(-5.0..5.0f64, 2..10)) {
        grid.sort_by(f64::total_cmp);
        let c = chord_slope(&v, &grid).unwrap();
        for w in c.windows(2) {
            prop_assert!(w[0] <= w[1] + 1e-12);
        }
    }

    #[test]
    fn weights_concentrate_unless_coefficient_is_zero(v in batch(), s in -5.0..5.0f64) {
        let w = sample_weights(&v, s).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let h = weight_entropy(&w);
        let log_m = (v.len() as f64).ln();
        let spread = v.iter().any(|x| (x - v[0]).abs() > 1e-3);
        if s.abs() > 1e-3 && spread {
            prop_assert!(h < log_m);
        }
        let flat = weight_entropy(&sample_weights(&v, 0.0).unwrap());
        prop_assert!((flat - log_m).abs() < 1e-12);
    }

    #[test]
    fn renyi_symmetry(
        m1 in -1.0..1.0f64, s1 in 0.7..1.4f64,
        m2 in -1.0..1.0f64, s2 in 0.7..1.4f64,
        alpha in -0.8..1.8f64,
    ) {
        // Finite only when α/σ_p² + (1 − α)/σ_q² > 0; near zero the
        // integrand outlives the quadrature envelope and the oracle refuses.
        prop_assume!(alpha / (s1 * s1) + (1.0 - alpha) / (s2 * s2) > 0.5);
        let p = Density1D::gaussian(m1, s1).unwrap();
        let q = Density1D::gaussian(m2, s2).unwrap();
        let a = renyi_quadrature(&p, &q, alpha).unwrap().value;
        let b = renyi_quadrature(&q, &p, 1.0 - alpha).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        prop_assert!(a >= -1e-12);
    }

    #[test]
    fn variational_dominance(
        m in -1.0..1.0f64, s in 0.8..1.25f64,
        alpha in -0.8..1.8f64,
        a in -2.0..2.0f64, b in -2.0..2.0f64, bounded in any::<bool>(),
    ) {
        prop_assume!(alpha / (s * s) + (1.0 - alpha) > 0.5);
        let p_r = Density1D::gaussian(0.0, 1.0).unwrap();
        let p_g = Density1D::gaussian(m, s).unwrap();
        let hp = HyperPair::new(alpha, 1.0 - alpha).unwrap();
        let rhs = renyi_quadrature(&p_g, &p_r, alpha).unwrap().value;
        let d = move |x: f64| if bounded { 3.0 * (a * x + b).tanh() } else { a * x + b };
        let lhs = population_cumulant_loss(&d, &p_r, &p_g, hp).unwrap();
        prop_assert!(lhs <= rhs + 1e-8, "{lhs} > {rhs}");
        let at_opt = population_cumulant_loss(&optimal_discriminator(&p_r, &p_g), &p_r, &p_g, hp).unwrap();
        prop_assert!((at_opt - rhs).abs() <= 1e-8);
    }

    #[test]
    fn exact_rate_energy_recursion(seed in any::<u64>(), d in 1usize..6, lambda_idx in 0usize..2, b in 0.05..1.95f64) {
        let lambda = [0.05, 0.1][lambda_idx];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
        let (mu, eta, theta) = (draw(d), draw(d), draw(d));
        let st = LinearGaussianState::new(mu, lambda, b, 0.0).unwrap().with_start(eta, theta).unwrap();
        let tr = run_dynamics(&st, 300, RateConvention::Exact).unwrap();
        prop_assert!(tr.holds(), "{:?}", tr.first_violation());
    }

    #[test]
    fn coverage_report_invariants(seed in any::<u64>(), n in 1usize..400, spread in 0.0..0.5f64) {
        let ring = RingMixtureSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = ring.sample(n, &mut rng);
        for v in pts.as_mut_slice() {
            *v += spread * rng.sample::<f64, _>(StandardNormal);
        }
        let r = mode_coverage(&ring, &pts, 0.02, 0);
        prop_assert_eq!(r.histogram.iter().sum::<usize>(), n);
        prop_assert!(r.modes_covered <= 8);
        prop_assert!((0.0..=1.0).contains(&r.high_quality_fraction));
        prop_assert!(r.high_quality_fraction + 1e-12 >= r.modes_covered as f64 * r.threshold);
    }

    #[test]
    fn clipped_output_stays_inside_the_bound(seed in any::<u64>(), m in 0.1..5.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = MlpSpec::relu(&[2, 6, 1], Activation::Linear);
        let raw = MlpParams::init(spec.clone(), &mut rng).unwrap();
        let layers = raw.layers().to_vec();
        let scaled = |c: Option<f64>| {
            MlpParams::from_layers(spec.clone().with_clip(c), layers.clone()).unwrap()
        };
        let x = Matrix::from_vec(50, 2, (0..100).map(|_| 20.0 * rng.sample::<f64, _>(StandardNormal)).collect()).unwrap();
        let clipped = scaled(Some(m)).forward_batch(&x).unwrap();
        // tanh rounds to exactly ±1 once |D|/M exceeds about 19, so the
        // bound is attained in floating point.
        prop_assert!(clipped.as_slice().iter().all(|v| v.abs() <= m));
        let loose = scaled(Some(1e6)).forward_batch(&x).unwrap();
        let plain = raw.forward_batch(&x).unwrap();
        // M·tanh(D/M) = D − D³/(3M²) + …
        for (l, p) in loose.as_slice().iter().zip(plain.as_slice()) {
            prop_assert!((l - p).abs() <= p.abs().powi(3) / 3e12 + 1e-9 * (1.0 + p.abs()), "{l} vs {p}");
        }
    }
}

/// The batch estimator with a linear discriminator converges to the exact
/// covariance loss.
#[test]
fn covariance_estimator_matches_exact_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 100_000;
    let d = 2;
    let sigma = Matrix::from_rows(&[vec![0.8, 0.3], vec![0.3, 0.5]]).unwrap();
    let l = sigma.cholesky().unwrap();
    let a = Matrix::from_rows(&[vec![0.4, -0.2], vec![0.1, 0.6]]).unwrap();
    let eta = [0.3, -0.4];
    for (beta, gamma) in [(1.0, 1.0), (-2.0, 0.5), (0.5, -1.0), (2.0, 2.0), (0.0, 1.0)] {
        let hp = HyperPair::new(beta, gamma).unwrap();
        let mut dr = Vec::with_capacity(n);
        let mut df = Vec::with_capacity(n);
        for _ in 0..n {
            let e: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let x = l.matvec(&e);
            let g = a.matvec(&z);
            dr.push(eta[0] * x[0] + eta[1] * x[1]);
            df.push(eta[0] * g[0] + eta[1] * g[1]);
        }
        let est = cumgan::cumulant::cumulant_loss(&dr, &df, hp).unwrap().total;
        let exact = covariance_exact_loss(&eta, &a, &sigma, hp).unwrap();
        // The exact loss drops the first-moment terms, which vanish here.
        assert!((est - exact).abs() <= 0.01, "({beta}, {gamma}): {est} vs {exact}");
    }
}
