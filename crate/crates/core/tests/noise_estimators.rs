use noisy_gp::noise::{
    chebyshev_bound, difference_table_noise, global_noise_level, max_abs_bound, pointwise_noise_level,
    range_bound,
};
use noisy_gp::stochastic::{
    AdditiveNoise, AdditiveNoiseOracle, BatchHandle, BatchSource, EffortCounter, ExactProblem,
};
use noisy_gp::{NoisyOracle, Result};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Square;

impl ExactProblem for Square {
    fn value(&self, x: &[f64]) -> f64 {
        x[0] * x[0]
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![2.0 * x[0]]
    }
    fn lipschitz(&self) -> f64 {
        2.0
    }
}

/// `x^2 + N(0, sigma^2)`, fresh draw per call.
struct GaussianSquare {
    sigma: f64,
    batches: BatchSource,
    counter: EffortCounter,
}

impl NoisyOracle for GaussianSquare {
    fn dim(&self) -> usize {
        1
    }
    fn batch_size(&self) -> usize {
        1
    }
    fn batches(&self) -> &BatchSource {
        &self.batches
    }
    fn counter(&self) -> &EffortCounter {
        &self.counter
    }
    fn value_on(&self, x: &[f64], batch: BatchHandle) -> Result<f64> {
        let n = Normal::new(0.0, self.sigma).unwrap();
        Ok(x[0] * x[0] + n.sample(&mut batch.rng()))
    }
    fn reference_value(&self, x: &[f64], _stream: u64) -> Result<f64> {
        Ok(x[0] * x[0])
    }
}

fn normal_draws(rng: &mut ChaCha8Rng, mean: f64, std: f64, m: usize) -> Vec<f64> {
    let n = Normal::new(mean, std).unwrap();
    (0..m).map(|_| n.sample(rng)).collect()
}

#[test]
fn pointwise_level_recovers_gaussian_std() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let hits = (0..100)
        .filter(|_| {
            let v = pointwise_noise_level(&normal_draws(&mut rng, 5.0, 0.01, 10_000)).unwrap().value;
            (0.009..=0.011).contains(&v)
        })
        .count();
    assert!(hits >= 95, "{hits}/100 trials in band");
}

#[test]
fn chebyshev_bound_on_gaussian_deltas() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut values: Vec<f64> = (0..100)
        .map(|_| chebyshev_bound(&normal_draws(&mut rng, 0.0, 0.01, 1000), 3).unwrap().value)
        .collect();
    values.sort_by(|a, b| a.total_cmp(b));
    let median = values[50];
    assert!((0.025..=0.035).contains(&median), "median {median}");
    let inside = values.iter().filter(|v| (0.025..=0.035).contains(*v)).count();
    assert!(inside >= 90, "{inside}/100");
}

#[test]
fn max_abs_bound_on_uniform_deltas() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let d: Vec<f64> = (0..1000).map(|_| rng.random_range(-0.5..0.5)).collect();
        let v = max_abs_bound(&d).unwrap().value;
        assert!((0.49..=0.5).contains(&v), "{v}");
    }
}

#[test]
fn range_bound_on_uniform_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let eps = 1e-3;
    for _ in 0..50 {
        let d: Vec<f64> = (0..1000).map(|_| rng.random_range(-eps..eps)).collect();
        let v = range_bound(&d).unwrap().value;
        assert!(v >= 1.9 * eps && v <= 2.0 * eps, "{v}");
    }
}

#[test]
fn difference_table_on_gaussian_noise() {
    let target = 1e-3;
    let mut within = 0;
    for seed in 0..100 {
        let oracle = GaussianSquare {
            sigma: target,
            batches: BatchSource::new(seed),
            counter: EffortCounter::default(),
        };
        if let Ok(e) = difference_table_noise(&oracle, &[0.5], &[1.0], 1e-2, 8) {
            if e.value >= target / 3.0 && e.value <= target * 3.0 {
                within += 1;
            }
        }
    }
    assert!(within >= 90, "{within}/100 seeds within a factor of 3");
}

#[test]
fn difference_table_on_computational_noise() {
    let bound = 1e-4;
    let target = bound / 3f64.sqrt();
    let mut within = 0;
    for seed in 0..100 {
        let oracle =
            AdditiveNoiseOracle::new(Box::new(Square), 1, AdditiveNoise::Computational { bound, seed }, seed)
                .unwrap();
        if let Ok(e) = difference_table_noise(&oracle, &[0.5], &[1.0], 1e-2, 8) {
            if e.value >= target / 3.0 && e.value <= target * 3.0 {
                within += 1;
            }
        }
    }
    assert!(within >= 90, "{within}/100 seeds within a factor of 3");
}

#[test]
fn estimators_reject_short_or_non_finite_input() {
    assert!(pointwise_noise_level(&[1.0]).is_err());
    assert!(range_bound(&[1.0]).is_err());
    assert!(max_abs_bound(&[]).is_err());
    assert!(chebyshev_bound(&[1.0, f64::NAN], 2).is_err());
    assert!(global_noise_level(&[]).is_err());
}

fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, 2..40)
}

proptest! {
    #[test]
    fn estimators_scale_with_data(v in samples(), s in 1e-3..1e3f64) {
        let scaled: Vec<f64> = v.iter().map(|x| s * x).collect();
        let pairs = [
            (pointwise_noise_level(&v).unwrap().value, pointwise_noise_level(&scaled).unwrap().value),
            (chebyshev_bound(&v, 3).unwrap().value, chebyshev_bound(&scaled, 3).unwrap().value),
            (max_abs_bound(&v).unwrap().value, max_abs_bound(&scaled).unwrap().value),
            (range_bound(&v).unwrap().value, range_bound(&scaled).unwrap().value),
        ];
        for (a, b) in pairs {
            prop_assert!((b - s * a).abs() <= 1e-9 * (1.0 + s * a.abs()), "{} vs {}", b, s * a);
        }
    }

    #[test]
    fn estimators_ignore_sample_order(v in samples(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = v.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs());
        prop_assert!(close(pointwise_noise_level(&v).unwrap().value, pointwise_noise_level(&shuffled).unwrap().value));
        prop_assert!(close(chebyshev_bound(&v, 2).unwrap().value, chebyshev_bound(&shuffled, 2).unwrap().value));
        prop_assert_eq!(max_abs_bound(&v).unwrap().value, max_abs_bound(&shuffled).unwrap().value);
        prop_assert_eq!(range_bound(&v).unwrap().value, range_bound(&shuffled).unwrap().value);
    }

    #[test]
    fn chebyshev_is_monotone_in_lambda(v in samples(), l in 1u32..10) {
        prop_assert!(chebyshev_bound(&v, l).unwrap().value <= chebyshev_bound(&v, l + 1).unwrap().value);
    }

    #[test]
    fn range_is_largest_pairwise_difference(v in prop::collection::vec(-100.0..100.0f64, 2..=10)) {
        let mut best = 0.0f64;
        for a in &v {
            for b in &v {
                best = best.max(a - b);
            }
        }
        prop_assert_eq!(range_bound(&v).unwrap().value, best);
    }

    #[test]
    fn global_level_is_mean_of_pointwise(levels in prop::collection::vec(0.0..1.0f64, 1..20)) {
        let per_point: Vec<_> = levels
            .iter()
            .map(|&s| pointwise_noise_level(&[0.0, s * 2f64.sqrt()]).unwrap())
            .collect();
        let g = global_noise_level(&per_point).unwrap().value;
        let mean = levels.iter().sum::<f64>() / levels.len() as f64;
        prop_assert!((g - mean).abs() <= 1e-12);
    }
}
