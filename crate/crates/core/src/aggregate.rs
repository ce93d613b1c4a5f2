//! Sufficient-statistic simulation of the channels.
//!
//! The estimators only read bin means (non-interactive) or per-category
//! counts of `+z_α` releases (interactive). These samplers draw those
//! statistics directly with the same joint law as the per-individual path:
//!
//! - category counts are Multinomial(n, p), drawn as conditional binomials;
//! - a sum of n standard Laplace variables is Gamma(n,1) − Gamma(n,1);
//! - the `+z_α` count among the c_k stage-two members of bin k is
//!   Binomial(c_k, (1 + v_k/z_α)/2).
//!
//! Cost is O(K) per release instead of O(nK).

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma};

use crate::error::{Error, Result};
use crate::model::{ProbabilityVector, PrivacyBudget};

pub fn multinomial_counts<R: Rng + ?Sized>(p: &ProbabilityVector, n: usize, rng: &mut R) -> Vec<u64> {
    let k = p.len();
    let last = p.entries().iter().rposition(|&x| x > 0.0).unwrap_or(k - 1);
    let mut counts = vec![0u64; k];
    let mut remaining = n as u64;
    let mut mass = 1.0f64;
    for (j, &pj) in p.entries().iter().enumerate().take(last + 1) {
        if j == last {
            counts[j] = remaining;
            break;
        }
        let q = if mass > 0.0 { (pj / mass).clamp(0.0, 1.0) } else { 0.0 };
        let c = binomial(remaining, q, rng);
        counts[j] = c;
        remaining -= c;
        mass -= pj;
    }
    counts
}

fn binomial<R: Rng + ?Sized>(trials: u64, q: f64, rng: &mut R) -> u64 {
    if q <= 0.0 || trials == 0 {
        0
    } else if q >= 1.0 {
        trials
    } else {
        Binomial::new(trials, q).expect("q in (0,1)").sample(rng)
    }
}

/// Sum of `n` i.i.d. standard Laplace variables.
pub fn laplace_sum<R: Rng + ?Sized>(n: usize, rng: &mut R) -> f64 {
    let g = Gamma::new(n as f64, 1.0).expect("shape n >= 1");
    g.sample(rng) - g.sample(rng)
}

/// Bin means ẑ_k of a Laplace release of `n` individuals with the given
/// category counts.
pub fn laplace_bin_means<R: Rng + ?Sized>(
    counts: &[u64],
    n: usize,
    budget: &PrivacyBudget,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::ZeroSampleSize);
    }
    let total: u64 = counts.iter().sum();
    if total != n as u64 {
        return Err(Error::DimensionMismatch(format!("counts sum to {total}, expected {n}")));
    }
    let scale = budget.noise_scale();
    let nf = n as f64;
    Ok(counts
        .iter()
        .map(|&c| {
            let noise = laplace_sum(n, rng);
            c as f64 / nf + scale * noise / nf
        })
        .collect())
}

/// Mean of the stage-two releases given per-category counts of the second
/// group.
pub fn stage_two_mean<R: Rng + ?Sized>(counts: &[u64], values: &[f64], z_alpha: f64, rng: &mut R) -> Result<f64> {
    if counts.len() != values.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} counts for {} stage-one values",
            counts.len(),
            values.len()
        )));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::EmptyStageTwo);
    }
    let plus: u64 = counts
        .iter()
        .zip(values)
        .map(|(&c, &v)| binomial(c, 0.5 * (1.0 + v / z_alpha), rng))
        .sum();
    let nf = n as f64;
    Ok(z_alpha * (2.0 * plus as f64 - nf) / nf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn counts_sum_to_n() {
        let mut rng = seeded(1);
        let p = ProbabilityVector::new(vec![0.1, 0.0, 0.5, 0.4, 0.0], false).unwrap();
        for n in [1usize, 7, 1000] {
            let c = multinomial_counts(&p, n, &mut rng);
            assert_eq!(c.iter().sum::<u64>(), n as u64);
            assert_eq!(c[1], 0);
            assert_eq!(c[4], 0);
        }
    }

    #[test]
    fn multinomial_frequencies() {
        let mut rng = seeded(2);
        let p = ProbabilityVector::new(vec![0.2, 0.3, 0.5], false).unwrap();
        let n = 1_000_000;
        let c = multinomial_counts(&p, n, &mut rng);
        for (ck, pk) in c.iter().zip(p.entries()) {
            let f = *ck as f64 / n as f64;
            assert!((f - pk).abs() < 4.0 * (pk * (1.0 - pk) / n as f64).sqrt());
        }
    }

    #[test]
    fn laplace_sum_moments() {
        let mut rng = seeded(3);
        let reps = 20_000;
        let n = 50;
        let s: Vec<f64> = (0..reps).map(|_| laplace_sum(n, &mut rng)).collect();
        let mean = s.iter().sum::<f64>() / reps as f64;
        let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / reps as f64;
        let target = 2.0 * n as f64;
        assert!(mean.abs() < 4.0 * (target / reps as f64).sqrt());
        assert!((var - target).abs() < 4.0 * target * (2.2 / reps as f64).sqrt());
    }

    #[test]
    fn stage_two_mean_matches_values() {
        let mut rng = seeded(4);
        let z = 5.0;
        let m = stage_two_mean(&[100_000], &[1.5], z, &mut rng).unwrap();
        assert!((m - 1.5).abs() < 4.0 * z / (1e5f64).sqrt());
        assert_eq!(stage_two_mean(&[0, 0], &[1.0, 1.0], z, &mut rng), Err(Error::EmptyStageTwo));
    }
}
