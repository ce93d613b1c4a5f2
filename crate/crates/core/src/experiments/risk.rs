use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{ExperimentConfig, SimulationMode};
use crate::aggregate::{laplace_bin_means, multinomial_counts, stage_two_mean};
use crate::channels::{stage_one_values_from_means, z_alpha};
use crate::error::{Error, Result};
use crate::estimators::{
    combined_branch, empirical_threshold, estimate_from_sample, plugin_from_means, small_gamma_keeps_plugin,
    thresholded_from_means, Branch, EstimatorKind,
};
use crate::model::{power_sum, sample_categorical, ProbabilityVector, ThresholdSpec};
use crate::rng::{derive_seed, seeded, tag};

const BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskReport {
    pub config: ExperimentConfig,
    pub true_value: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    /// Batch-means standard error of `mse`.
    pub mse_stderr: f64,
    pub trial_count: usize,
}

/// Estimate produced by trial `index` of `config` on the law `p`.
pub fn run_trial(config: &ExperimentConfig, p: &ProbabilityVector, index: usize) -> Result<f64> {
    let seed = derive_seed(config.seed, index as u64);
    match config.mode {
        SimulationMode::Individual => {
            let x = sample_categorical(p, config.n, derive_seed(seed, tag::SAMPLE))?;
            let r = estimate_from_sample(
                config.estimator,
                &x,
                config.k,
                config.gamma,
                &config.budget,
                config.threshold_c,
                seed,
            )?;
            Ok(r.value)
        }
        SimulationMode::Aggregated => aggregated_trial(config, p, &mut seeded(seed)),
    }
}

fn aggregated_trial<R: Rng>(config: &ExperimentConfig, p: &ProbabilityVector, rng: &mut R) -> Result<f64> {
    let g = config.gamma.value();
    let budget = &config.budget;
    let n = config.n;
    let half = n / 2;
    let branch = match config.estimator {
        EstimatorKind::PlugIn => Branch::PlugIn,
        EstimatorKind::Thresholded => Branch::Thresholded,
        EstimatorKind::Interactive => Branch::Interactive,
        EstimatorKind::Combined => combined_branch(config.gamma, config.k, n, budget.alpha()),
    };
    match branch {
        Branch::PlugIn => {
            let means = laplace_bin_means(&multinomial_counts(p, n, rng), n, budget, rng)?;
            Ok(plugin_from_means(&means, g))
        }
        Branch::Thresholded if g <= 1.0 => {
            // the combined estimator only ever reads the first half here
            let m = if config.estimator == EstimatorKind::Combined { half } else { n };
            if m == 0 {
                return Err(Error::ZeroSampleSize);
            }
            let spec = ThresholdSpec::new(config.threshold_c, budget, m)?;
            if config.gamma.is_trivial() || small_gamma_keeps_plugin(config.k, &spec) {
                let means = laplace_bin_means(&multinomial_counts(p, m, rng), m, budget, rng)?;
                Ok(plugin_from_means(&means, g))
            } else {
                Ok(0.0)
            }
        }
        Branch::Thresholded => {
            if half == 0 {
                return Err(Error::ZeroSampleSize);
            }
            let screen = laplace_bin_means(&multinomial_counts(p, half, rng), half, budget, rng)?;
            let est = laplace_bin_means(&multinomial_counts(p, half, rng), half, budget, rng)?;
            let tau_hat = empirical_threshold(config.k, half, budget);
            Ok(thresholded_from_means(&screen, &est, g, tau_hat).0)
        }
        Branch::Interactive => {
            if half == 0 {
                return Err(Error::ZeroSampleSize);
            }
            let z = z_alpha(budget, config.gamma)?;
            let means = laplace_bin_means(&multinomial_counts(p, half, rng), half, budget, rng)?;
            let values = stage_one_values_from_means(&means, g);
            stage_two_mean(&multinomial_counts(p, half, rng), &values, z, rng)
        }
        Branch::TrivialZero => Ok(0.0),
    }
}

/// Runs `config.trials` independent pipelines and summarizes their error
/// against F_γ(p). Trials may run in parallel; the summary is reduced in
/// trial-index order, so the report does not depend on scheduling.
pub fn monte_carlo_risk(config: &ExperimentConfig) -> Result<RiskReport> {
    config.validate()?;
    let p = config.distribution.resolve(config.k, config.n, &config.budget, config.gamma)?;
    if p.len() != config.k {
        return Err(Error::DimensionMismatch(format!("distribution has {} entries, K = {}", p.len(), config.k)));
    }
    let estimates = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            run_trial(config, &p, i).map_err(|e| Error::Trial {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let truth = power_sum(&p, config.gamma);
    Ok(summarize(config.clone(), truth, &estimates))
}

pub(crate) fn summarize(config: ExperimentConfig, truth: f64, estimates: &[f64]) -> RiskReport {
    let t = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / t;
    let variance = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / t;
    let bias = mean - truth;
    let sq: Vec<f64> = estimates.iter().map(|e| (e - truth).powi(2)).collect();
    let mse = sq.iter().sum::<f64>() / t;
    RiskReport {
        config,
        true_value: truth,
        mean_estimate: mean,
        bias,
        variance,
        mse,
        mse_stderr: batch_means_stderr(&sq),
        trial_count: estimates.len(),
    }
}

/// Standard error of the mean of `x` from up to 20 contiguous batches.
fn batch_means_stderr(x: &[f64]) -> f64 {
    let b = BATCHES.min(x.len());
    if b < 2 {
        return 0.0;
    }
    let size = x.len() / b;
    let means: Vec<f64> = (0..b)
        .map(|j| x[j * size..(j + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let m = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Distribution;
    use crate::model::{Power, PrivacyBudget};

    fn cfg(kind: EstimatorKind, gamma: f64, k: usize, n: usize, alpha: f64, trials: usize) -> ExperimentConfig {
        ExperimentConfig::new(
            Power::new(gamma).unwrap(),
            k,
            n,
            PrivacyBudget::new(alpha).unwrap(),
            kind,
            trials,
            11,
        )
    }

    #[test]
    fn noiseless_point_mass_is_exact() {
        for mode in [SimulationMode::Individual, SimulationMode::Aggregated] {
            let c = cfg(EstimatorKind::PlugIn, 2.0, 2, 50, f64::INFINITY, 10)
                .with_distribution(Distribution::PointMass)
                .with_mode(mode);
            let r = monte_carlo_risk(&c).unwrap();
            assert_eq!(r.bias, 0.0);
            assert_eq!(r.mse, 0.0);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let c = cfg(EstimatorKind::Interactive, 2.0, 8, 256, 0.5, 50).with_mode(SimulationMode::Individual);
        assert_eq!(monte_carlo_risk(&c).unwrap(), monte_carlo_risk(&c).unwrap());
        let c = c.with_mode(SimulationMode::Aggregated);
        assert_eq!(monte_carlo_risk(&c).unwrap(), monte_carlo_risk(&c).unwrap());
    }

    #[test]
    fn thread_count_does_not_matter() {
        let c = cfg(EstimatorKind::Thresholded, 1.5, 16, 500, 1.0, 40);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| monte_carlo_risk(&c)).unwrap();
        let b = four.install(|| monte_carlo_risk(&c)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decomposition_identity() {
        for kind in [EstimatorKind::PlugIn, EstimatorKind::Interactive, EstimatorKind::Combined] {
            let r = monte_carlo_risk(&cfg(kind, 2.0, 16, 1000, 0.5, 200)).unwrap();
            assert!(((r.bias * r.bias + r.variance) - r.mse).abs() <= 1e-9 * r.mse);
            assert!(r.mse_stderr > 0.0);
        }
    }

    #[test]
    fn interactive_precision_target() {
        let r = monte_carlo_risk(&cfg(EstimatorKind::Interactive, 2.0, 64, 1 << 12, 0.5, 2000)).unwrap();
        assert!(r.mse_stderr / r.mse < 0.1, "{}", r.mse_stderr / r.mse);
    }

    #[test]
    fn batch_means_oracle() {
        // iid squared errors: the batch-means error should be close to sd/sqrt(T)
        let x: Vec<f64> = (0..20_000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
        let t = x.len() as f64;
        let m = x.iter().sum::<f64>() / t;
        let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (t - 1.0)).sqrt();
        let se = batch_means_stderr(&x);
        assert!(se < 3.0 * sd / t.sqrt());
        assert_eq!(batch_means_stderr(&[1.0]), 0.0);
    }

    #[test]
    fn trials_validated() {
        assert!(monte_carlo_risk(&cfg(EstimatorKind::PlugIn, 2.0, 4, 10, 1.0, 1)).is_err());
        let bad = cfg(EstimatorKind::Interactive, 1.0, 4, 10, 1.0, 5);
        assert_eq!(monte_carlo_risk(&bad), Err(Error::GammaOneUnsupported));
    }

    /// Both simulation modes sample the same law: their mean and variance
    /// must agree within Monte Carlo error.
    #[test]
    fn modes_agree_in_distribution() {
        let cases = [
            (EstimatorKind::PlugIn, 0.5, 8, 400),
            (EstimatorKind::Interactive, 2.0, 8, 400),
            (EstimatorKind::Combined, 1.5, 8, 400),
        ];
        for (kind, g, k, n) in cases {
            let base = cfg(kind, g, k, n, 1.0, 3000);
            let a = monte_carlo_risk(&base.clone().with_mode(SimulationMode::Individual)).unwrap();
            let b = monte_carlo_risk(&base.with_mode(SimulationMode::Aggregated)).unwrap();
            let se = ((a.variance + b.variance) / 3000.0).sqrt();
            assert!((a.mean_estimate - b.mean_estimate).abs() < 4.0 * se + 1e-12, "{kind}: {a:?} {b:?}");
            let ratio = a.variance / b.variance;
            assert!((0.85..1.18).contains(&ratio), "{kind}: variance ratio {ratio}");
        }
    }
}
