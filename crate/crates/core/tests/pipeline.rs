use powersum_ldp::experiments::{monte_carlo_risk, Distribution, ExperimentConfig, SimulationMode};
use powersum_ldp::{
    estimate_from_sample, laplace_channel, power_sum, renyi_entropy, sample_categorical, Branch, EstimatorKind, Power,
    PrivacyBudget, ProbabilityVector,
};
use proptest::prelude::*;

fn budget(alpha: f64) -> PrivacyBudget {
    PrivacyBudget::new(alpha).unwrap()
}

#[test]
fn noiseless_estimators_recover_the_empirical_functional() {
    let p = ProbabilityVector::new(vec![0.5, 0.3, 0.2], false).unwrap();
    let x = sample_categorical(&p, 1000, 9).unwrap();
    let mut freq = [0.0; 3];
    for &c in &x {
        freq[c] += 1.0 / 1000.0;
    }
    let g = Power::new(2.0).unwrap();
    let r = estimate_from_sample(EstimatorKind::PlugIn, &x, 3, g, &budget(f64::INFINITY), 1.0, 4).unwrap();
    let direct: f64 = freq.iter().map(|f| f * f).sum();
    assert!((r.value - direct).abs() < 1e-12);
}

#[test]
fn plugin_risk_shrinks_with_n() {
    let g = Power::new(2.0).unwrap();
    let at = |n| {
        let c = ExperimentConfig::new(g, 8, n, budget(1.0), EstimatorKind::PlugIn, 400, 5);
        monte_carlo_risk(&c).unwrap().mse
    };
    assert!(at(16_384) < at(1024) / 4.0);
}

#[test]
fn combined_reports_branch_and_kind() {
    let p = ProbabilityVector::uniform(4).unwrap();
    let x = sample_categorical(&p, 2000, 1).unwrap();
    let r = estimate_from_sample(EstimatorKind::Combined, &x, 4, Power::new(2.0).unwrap(), &budget(0.5), 1.0, 2).unwrap();
    assert_eq!(r.kind, EstimatorKind::Combined);
    assert_eq!(r.diagnostics.branch, Some(Branch::PlugIn));
}

#[test]
fn hard_instance_distributions_feed_the_simulator() {
    let g = Power::new(1.5).unwrap();
    for d in [
        Distribution::TwoPoint { c_tilde: 0.1, second: true },
        Distribution::PerturbationFamily { nu_seed: 3 },
        Distribution::Custom(vec![0.1, 0.2, 0.3, 0.4]),
    ] {
        let c = ExperimentConfig::new(g, 4, 500, budget(0.5), EstimatorKind::Interactive, 20, 8)
            .with_distribution(d)
            .with_mode(SimulationMode::Individual);
        let r = monte_carlo_risk(&c).unwrap();
        assert!(r.true_value > 0.0 && r.true_value <= 1.0);
        assert_eq!(r.trial_count, 20);
    }
}

#[test]
fn renyi_entropy_of_uniform_is_log_k() {
    let p = ProbabilityVector::uniform(16).unwrap();
    for g in [0.5, 2.0, 3.0] {
        let h = renyi_entropy(&p, Power::new(g).unwrap()).unwrap();
        assert!((h - 16f64.ln()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bin_means_are_column_averages(n in 1usize..40, k in 1usize..6, seed in any::<u64>(), alpha in 0.1f64..3.0) {
        let p = ProbabilityVector::uniform(k).unwrap();
        let x = sample_categorical(&p, n, seed).unwrap();
        let batch = laplace_channel(&x, k, &budget(alpha), seed ^ 1).unwrap();
        for j in 0..k {
            let col: f64 = batch.rows().map(|r| r[j]).sum::<f64>() / n as f64;
            prop_assert!((col - batch.bin_means()[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn clipped_estimates_are_bounded(n in 2usize..200, k in 1usize..8, seed in any::<u64>(), g in 0.2f64..3.0) {
        prop_assume!((g - 1.0).abs() > 1e-6);
        let gamma = Power::new(g).unwrap();
        let p = ProbabilityVector::uniform(k).unwrap();
        let x = sample_categorical(&p, n, seed).unwrap();
        for kind in [EstimatorKind::PlugIn, EstimatorKind::Thresholded] {
            let r = estimate_from_sample(kind, &x, k, gamma, &budget(1.0), 1.0, seed).unwrap();
            prop_assert!(r.value >= 0.0 && r.value <= k as f64 * 2f64.powf(g));
        }
        // the interactive branch averages signed releases and is not clipped
        let r = estimate_from_sample(EstimatorKind::Combined, &x, k, gamma, &budget(1.0), 1.0, seed).unwrap();
        prop_assert!(r.value.is_finite());
        prop_assert!(power_sum(&p, gamma) > 0.0);
    }
}
