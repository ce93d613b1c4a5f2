use rayon::prelude::*;

use super::hard::pair_term;
use super::{CheckReport, HardInstance, InstanceKind, SimulationMode};
use crate::aggregate::{laplace_bin_means, multinomial_counts};
use crate::channels::laplace_channel;
use crate::error::{invalid, Error, Result};
use crate::model::{clamp02, pow0, power_sum, sample_categorical, Power, PrivacyBudget, ProbabilityVector};
use crate::rng::{derive_seed, seeded, tag};

/// Bin means of one Laplace release of `n` draws from `p`.
fn release_means(p: &ProbabilityVector, n: usize, budget: &PrivacyBudget, mode: SimulationMode, seed: u64) -> Result<Vec<f64>> {
    match mode {
        SimulationMode::Individual => {
            let x = sample_categorical(p, n, derive_seed(seed, tag::SAMPLE))?;
            Ok(laplace_channel(&x, p.len(), budget, derive_seed(seed, tag::STAGE_ONE))?.bin_means().to_vec())
        }
        SimulationMode::Aggregated => {
            let mut rng = seeded(seed);
            let counts = multinomial_counts(p, n, &mut rng);
            laplace_bin_means(&counts, n, budget, &mut rng)
        }
    }
}

fn releases(
    p: &ProbabilityVector,
    n: usize,
    budget: &PrivacyBudget,
    trials: usize,
    mode: SimulationMode,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            release_means(p, n, budget, mode, derive_seed(seed, t as u64)).map_err(|e| Error::Trial {
                index: t,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Draws `samples` sign vectors ν and checks the sign of every pair term of
/// F_γ(p^(ν)) − F_γ(p): ≤ 0 for γ < 1, ≥ 0 for 1 < γ < 2. Reports the
/// smallest ratio |F_γ(p^(ν)) − F_γ(p)| / R seen.
pub fn separation_check(instance: &HardInstance, gamma: Power, samples: usize, seed: u64) -> Result<CheckReport> {
    if instance.kind != InstanceKind::PerturbationFamily {
        return Err(invalid("instance", "separation check needs a perturbation-family instance"));
    }
    let g = gamma.value();
    if !(g > 0.0 && g < 2.0) || gamma.is_trivial() {
        return Err(Error::GammaOutOfRange(g));
    }
    let mut report = CheckReport::new("separation");
    let base = instance.base();
    let f_base = power_sum(base, gamma);
    let r: f64 = (0..instance.pairs())
        .map(|j| {
            let d = instance.delta[2 * j + 1];
            if d == 0.0 {
                0.0
            } else {
                base.entries()[2 * j + 1].powf(g - 2.0) * d * d
            }
        })
        .sum();
    let mut rng = seeded(seed);
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = 0.0f64;
    let mut violations = 0usize;
    let mut terms_checked = 0usize;
    for s in 0..samples {
        let nu = instance.random_nu(&mut rng);
        let member = instance.member(&nu)?;
        let mut sum = 0.0;
        for j in 0..nu.len() {
            // the term is symmetric in ν_j
            let term = pair_term(base.entries()[2 * j + 1], instance.delta[2 * j + 1], g);
            terms_checked += 1;
            let ok = if g < 1.0 { term <= 0.0 } else { term >= 0.0 };
            if !ok {
                violations += 1;
                if violations <= 5 {
                    report.fail(format!("sample {s}, pair {j}: term {term:e} has the wrong sign"));
                }
            }
            sum += term;
        }
        let direct = (power_sum(&member, gamma) - f_base).abs();
        if (direct - sum.abs()).abs() > 1e-9 * f_base.max(1.0) {
            report.fail(format!("sample {s}: pair terms sum to {sum:e}, direct difference {direct:e}"));
        }
        if r > 0.0 {
            min_ratio = min_ratio.min(sum.abs() / r);
            max_ratio = max_ratio.max(sum.abs() / r);
        }
    }
    report.metric("samples", samples as f64);
    report.metric("terms_checked", terms_checked as f64);
    report.metric("sign_violations", violations as f64);
    report.metric("witness_r", r);
    report.metric("separation", instance.separation);
    if r > 0.0 && samples > 0 {
        report.metric("min_ratio", min_ratio);
        report.metric("max_ratio", max_ratio);
    }
    Ok(report)
}

/// 96 σ sqrt(log(K n^{1/3}) / ((α² ∧ 1) n)).
pub fn concentration_threshold(k: usize, n: usize, budget: &PrivacyBudget) -> f64 {
    let nf = n as f64;
    let a2 = budget.alpha().powi(2).min(1.0);
    96.0 * budget.sigma() * ((k as f64 * nf.cbrt()).ln() / (a2 * nf)).sqrt()
}

/// Frequency of |ẑ_k − p_k| above the concentration threshold, per bin,
/// against the tail bound 6/(K³n) plus three binomial standard errors.
pub fn concentration_check(
    p: &ProbabilityVector,
    n: usize,
    budget: &PrivacyBudget,
    trials: usize,
    seed: u64,
    mode: SimulationMode,
) -> Result<CheckReport> {
    if n == 0 {
        return Err(Error::ZeroSampleSize);
    }
    let k = p.len();
    let mut report = CheckReport::new("concentration");
    let nf = n as f64;
    if nf < (k as f64 * nf.cbrt()).ln() {
        report.warnings.push(format!("n = {n} < log(K n^(1/3)), the tail bound is not guaranteed"));
    }
    let threshold = concentration_threshold(k, n, budget);
    let bound = 6.0 / ((k as f64).powi(3) * nf);
    let slack = 3.0 * (bound * (1.0 - bound) / trials as f64).sqrt();
    let all = releases(p, n, budget, trials, mode, seed)?;
    let mut exceed = vec![0usize; k];
    for means in &all {
        for (j, (&z, &pj)) in means.iter().zip(p.entries()).enumerate() {
            if (z - pj).abs() > threshold {
                exceed[j] += 1;
            }
        }
    }
    report.metric("threshold", threshold);
    report.metric("bound", bound);
    report.metric("allowed", bound + slack);
    let mut worst = 0.0f64;
    for (j, &c) in exceed.iter().enumerate() {
        let freq = c as f64 / trials as f64;
        worst = worst.max(freq);
        if freq > bound + slack {
            report.fail(format!("bin {j}: exceedance frequency {freq} > {}", bound + slack));
        }
    }
    report.metric("exceedances", exceed.iter().sum::<usize>() as f64);
    report.metric("max_frequency", worst);
    Ok(report)
}

/// Per-bin E|ẑ_k − p_k|² (α² ∧ 1) n at `n_fit` and `n_verify`. The constant
/// fitted at `n_fit` (largest bin plus three standard errors) must still
/// bound every bin at `n_verify`.
pub fn moment_check(
    p: &ProbabilityVector,
    budget: &PrivacyBudget,
    n_fit: usize,
    n_verify: usize,
    trials: usize,
    seed: u64,
    mode: SimulationMode,
) -> Result<CheckReport> {
    if trials < 2 {
        return Err(invalid("trials", "need at least 2 trials"));
    }
    let a2 = budget.alpha().powi(2).min(1.0);
    let scaled = |n: usize, s: u64| -> Result<Vec<(f64, f64)>> {
        let all = releases(p, n, budget, trials, mode, s)?;
        let t = trials as f64;
        Ok((0..p.len())
            .map(|j| {
                let sq: Vec<f64> = all.iter().map(|m| (m[j] - p.entries()[j]).powi(2) * a2 * n as f64).collect();
                let mean = sq.iter().sum::<f64>() / t;
                let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0);
                (mean, (var / t).sqrt())
            })
            .collect())
    };
    let fit = scaled(n_fit, derive_seed(seed, 1))?;
    let verify = scaled(n_verify, derive_seed(seed, 2))?;
    let constant = fit.iter().map(|(m, se)| m + 3.0 * se).fold(0.0, f64::max);
    let mut report = CheckReport::new("moment");
    report.metric("fitted_constant", constant);
    let worst = verify.iter().map(|(m, _)| *m).fold(0.0, f64::max);
    report.metric("verify_max", worst);
    for (j, (m, _)) in verify.iter().enumerate() {
        if *m > constant {
            report.fail(format!("bin {j}: scaled second moment {m} at n = {n_verify} exceeds {constant}"));
        }
    }
    Ok(report)
}

/// Pairwise covariances of the plug-in components T[ẑ_k]^γ over `trials`
/// releases; each must be ≤ 3 standard errors.
pub fn negative_association_check(
    p: &ProbabilityVector,
    n: usize,
    budget: &PrivacyBudget,
    gamma: Power,
    trials: usize,
    seed: u64,
    mode: SimulationMode,
) -> Result<CheckReport> {
    if trials < 2 {
        return Err(invalid("trials", "need at least 2 trials"));
    }
    let k = p.len();
    let g = gamma.value();
    let comps: Vec<Vec<f64>> = releases(p, n, budget, trials, mode, seed)?
        .into_iter()
        .map(|m| m.into_iter().map(|z| pow0(clamp02(z), g)).collect())
        .collect();
    let t = trials as f64;
    let means: Vec<f64> = (0..k).map(|j| comps.iter().map(|c| c[j]).sum::<f64>() / t).collect();
    let mut report = CheckReport::new("negative-association");
    let mut max_z = f64::NEG_INFINITY;
    for a in 0..k {
        for b in a + 1..k {
            let prods: Vec<f64> = comps.iter().map(|c| (c[a] - means[a]) * (c[b] - means[b])).collect();
            let cov = prods.iter().sum::<f64>() / t;
            let sd = (prods.iter().map(|v| (v - cov).powi(2)).sum::<f64>() / (t - 1.0)).sqrt();
            let se = sd / t.sqrt();
            report.metric(format!("cov_{a}_{b}"), cov);
            if se > 0.0 {
                max_z = max_z.max(cov / se);
            }
            if cov > 3.0 * se {
                report.fail(format!("bins {a},{b}: covariance {cov:e} > 3 * {se:e}"));
            }
        }
    }
    if max_z.is_finite() {
        report.metric("max_z", max_z);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::perturbation_family;

    fn budget(a: f64) -> PrivacyBudget {
        PrivacyBudget::new(a).unwrap()
    }

    #[test]
    fn separation_signs() {
        let b = budget(0.5);
        for (g, k) in [(0.5, 8), (1.5, 8), (0.5, 1000), (1.5, 1000)] {
            let gamma = Power::new(g).unwrap();
            let inst = perturbation_family(k, 100, &b, gamma).unwrap();
            let r = separation_check(&inst, gamma, 50, 9).unwrap();
            assert!(r.passed, "{r:?}");
            assert!(r.get("min_ratio").unwrap() > 0.0);
        }
    }

    #[test]
    fn separation_null_perturbation() {
        let b = budget(0.5);
        let gamma = Power::new(1.5).unwrap();
        let inst = perturbation_family(8, 100, &b, gamma).unwrap().scaled(0.0, &b).unwrap();
        let r = separation_check(&inst, gamma, 5, 1).unwrap();
        assert!(r.passed);
        assert_eq!(r.get("witness_r"), Some(0.0));
        assert_eq!(r.get("min_ratio"), None);
    }

    #[test]
    fn concentration_threshold_value() {
        let t = concentration_threshold(4, 10_000, &budget(1.0));
        let oracle = 192.0 * ((4.0f64 * 10_000f64.powf(1.0 / 3.0)).ln() / 1e4).sqrt();
        assert!((t - oracle).abs() < 1e-12);
    }

    #[test]
    fn concentration_point_mass() {
        let p = ProbabilityVector::point_mass(4, 2).unwrap();
        let r = concentration_check(&p, 1000, &budget(1.0), 500, 3, SimulationMode::Aggregated).unwrap();
        assert!(r.passed);
        assert_eq!(r.get("exceedances"), Some(0.0));
    }

    #[test]
    fn moment_constant_is_stable() {
        let p = ProbabilityVector::uniform(4).unwrap();
        let r = moment_check(&p, &budget(0.5), 1 << 10, 1 << 14, 2000, 4, SimulationMode::Aggregated).unwrap();
        assert!(r.passed, "{r:?}");
        // oracle: α² p(1−p) + 2σ² ≈ 8.05 for every bin
        let c = r.get("fitted_constant").unwrap();
        assert!((c - 8.05).abs() < 1.5, "{c}");
    }

    #[test]
    fn negative_association_small() {
        let p = ProbabilityVector::uniform(3).unwrap();
        let r = negative_association_check(&p, 64, &budget(1.0), Power::new(2.0).unwrap(), 2000, 5, SimulationMode::Individual)
            .unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.get("cov_0_1").is_some());
    }
}
