use cliffclimb_core::study::{failure_curve, failure_probability, normalize, trade_metrics, LoadModel, TradeStudyConfig};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn monte_carlo_matches_normal_approximation() {
    // sum of 30 U(1,2) against 4 * 3 * 3.71 N
    let demand: f64 = 4.0 * 3.0 * 3.71;
    let z = (demand - 45.0) / (30.0f64 / 12.0).sqrt();
    let oracle = Normal::standard().cdf(z);
    let p = failure_probability(4, 1, 10, 100_000, 99, &LoadModel::default()).unwrap();
    assert!((p - oracle).abs() < 0.03, "{p} vs {oracle}");
    assert!((oracle - 0.38).abs() < 0.01);
}

#[test]
fn estimates_are_independent_of_thread_count() {
    let load = LoadModel::default();
    let ks: Vec<usize> = (1..20).collect();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| failure_curve(5, 2, &ks, 20_000, 3, &load).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn single_point_agrees_with_curve() {
    let load = LoadModel::default();
    let curve = failure_curve(3, 1, &[7, 8, 9], 5_000, 1, &load).unwrap();
    let p = failure_probability(3, 1, 8, 5_000, 1, &load).unwrap();
    assert_eq!(curve[1].probability, p);
}

#[test]
fn metric_trends_over_system_size() {
    let config = TradeStudyConfig { hop_batch: 2, ..TradeStudyConfig::default() };
    let rows: Vec<_> = (3..=8).map(|n| trade_metrics(&config, n).unwrap()).collect();
    for w in rows.windows(2) {
        assert_eq!(w[0].distance, w[1].distance);
        assert!(w[1].time >= w[0].time);
        assert!(w[1].links > w[0].links);
    }
}

proptest! {
    #[test]
    fn normalization_ignores_affine_rescale(
        values in prop::collection::vec(-100.0f64..100.0, 2..8),
        scale in 0.01f64..100.0,
        shift in -50.0f64..50.0,
        higher in any::<bool>(),
    ) {
        let rescaled: Vec<f64> = values.iter().map(|v| scale * v + shift).collect();
        let a = normalize(&values, higher);
        let b = normalize(&rescaled, higher);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(x));
        }
    }
}
