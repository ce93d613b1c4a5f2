//! Probability vectors, the power-sum functional and the closed-form rate
//! expressions used to predict convergence exponents.

use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Absolute tolerance for the simplex constraint.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A point of the probability simplex of dimension `K = len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbabilityVector {
    entries: Vec<f64>,
}

impl ProbabilityVector {
    /// Validates `values` as a probability vector. With `normalize` the values
    /// are divided by their sum first; otherwise they must already sum to 1.
    pub fn new(values: Vec<f64>, normalize: bool) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteEntry { index });
            }
            if value < 0.0 {
                return Err(Error::NegativeEntry { index, value });
            }
        }
        let sum: f64 = values.iter().sum();
        let entries = if normalize {
            if sum == 0.0 {
                return Err(Error::AllZero);
            }
            values.into_iter().map(|v| v / sum).collect()
        } else {
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::SumNotOne { sum });
            }
            values
        };
        Ok(Self { entries })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(Self {
            entries: vec![1.0 / k as f64; k],
        })
    }

    /// Unit mass on category `at` (0-based).
    pub fn point_mass(k: usize, at: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyInput);
        }
        if at >= k {
            return Err(invalid("point mass location", format!("{at} >= K = {k}")));
        }
        let mut entries = vec![0.0; k];
        entries[at] = 1.0;
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Alphabet size K.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ProbabilityVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values, false)
    }
}

impl From<ProbabilityVector> for Vec<f64> {
    fn from(p: ProbabilityVector) -> Self {
        p.entries
    }
}

/// Exponent γ > 0 of the functional.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Power(f64);

impl Power {
    pub fn new(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(invalid("gamma", "gamma must be > 0"));
        }
        Ok(Self(gamma))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// F_1 = 1 for every law, so γ = 1 carries no information.
    pub fn is_trivial(self) -> bool {
        self.0 == 1.0
    }
}

impl TryFrom<f64> for Power {
    type Error = Error;

    fn try_from(gamma: f64) -> Result<Self> {
        Self::new(gamma)
    }
}

impl From<Power> for f64 {
    fn from(p: Power) -> f64 {
        p.0
    }
}

/// Privacy level α and the Laplace scale multiplier σ of the
/// non-interactive channel (noise scale σ/α).
///
/// `alpha = +inf` is accepted as the noiseless limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    alpha: f64,
    sigma: f64,
}

pub const DEFAULT_SIGMA: f64 = 2.0;

impl PrivacyBudget {
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_sigma(alpha, DEFAULT_SIGMA)
    }

    /// σ < 2 is accepted so misconfigured channels can be audited; see
    /// [`PrivacyBudget::is_calibrated`].
    pub fn with_sigma(alpha: f64, sigma: f64) -> Result<Self> {
        if alpha.is_nan() || alpha <= 0.0 {
            return Err(invalid("alpha", "alpha must be > 0"));
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(invalid("sigma", "sigma must be > 0"));
        }
        Ok(Self { alpha, sigma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Laplace scale σ/α of the non-interactive channel.
    pub fn noise_scale(&self) -> f64 {
        self.sigma / self.alpha
    }

    /// σ ≥ 2 makes the Laplace channel α-LDP.
    pub fn is_calibrated(&self) -> bool {
        self.sigma >= 2.0
    }

    /// Flags for settings outside α ∈ (0,1), α²n ≥ 1, σ ≥ 2.
    pub fn regime_warnings(&self, n: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.alpha >= 1.0 {
            out.push(format!("alpha = {} is outside (0, 1)", self.alpha));
        }
        if self.alpha.is_finite() && self.alpha * self.alpha * (n as f64) < 1.0 {
            out.push(format!("alpha^2 n = {} < 1", self.alpha * self.alpha * n as f64));
        }
        if !self.is_calibrated() {
            out.push(format!("sigma = {} < 2, Laplace channel is not alpha-LDP", self.sigma));
        }
        out
    }
}

/// Noise-level threshold τ = c / sqrt(α² n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    c: f64,
    tau: f64,
}

impl ThresholdSpec {
    pub fn new(c: f64, budget: &PrivacyBudget, n: usize) -> Result<Self> {
        if !(c >= 1.0) || !c.is_finite() {
            return Err(invalid("c", "threshold constant must be >= 1"));
        }
        if n == 0 {
            return Err(Error::ZeroSampleSize);
        }
        let tau = c / (budget.alpha() * budget.alpha() * n as f64).sqrt();
        Ok(Self { c, tau })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// x^γ with the convention 0^γ = 0.
pub(crate) fn pow0(x: f64, gamma: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.powf(gamma)
    }
}

/// F_γ(p) = Σ_k p_k^γ.
pub fn power_sum(p: &ProbabilityVector, gamma: Power) -> f64 {
    p.entries.iter().map(|&x| pow0(x, gamma.value())).sum()
}

/// Rényi entropy log(F_γ) / (1 − γ).
pub fn renyi_entropy(p: &ProbabilityVector, gamma: Power) -> Result<f64> {
    if gamma.is_trivial() {
        return Err(Error::GammaOne);
    }
    let f = power_sum(p, gamma);
    if f <= 0.0 {
        return Err(Error::DegenerateFunctional);
    }
    Ok(f.ln() / (1.0 - gamma.value()))
}

/// `n` i.i.d. categories (0-based) drawn from `p`, deterministic in `seed`.
pub fn sample_categorical(p: &ProbabilityVector, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::ZeroSampleSize);
    }
    let cumulative: Vec<f64> = p
        .entries
        .iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect();
    let last_support = p.entries.iter().rposition(|&x| x > 0.0).unwrap_or(0);
    let unit = Uniform::new(0.0f64, 1.0);
    let mut rng = rng::seeded(seed);
    Ok((0..n)
        .map(|_| {
            let u = unit.sample(&mut rng);
            let j = cumulative.partition_point(|&c| c <= u);
            j.min(last_support)
        })
        .collect())
}

/// Projection onto [0, 2].
pub fn clip02(y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::NonFiniteInput(y));
    }
    Ok(clamp02(y))
}

#[inline]
pub(crate) fn clamp02(y: f64) -> f64 {
    y.max(0.0).min(2.0)
}

/// Σ_k p_k^r restricted to p_k ≥ τ (`above`) or p_k < τ.
pub fn thresholded_norm(p: &ProbabilityVector, tau: f64, r: f64, above: bool) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(invalid("tau", "threshold must be >= 0"));
    }
    Ok(p.entries
        .iter()
        .filter(|&&x| (x >= tau) == above)
        .map(|&x| pow0(x, r))
        .sum())
}

/// Regime-appropriate risk bound for the combined estimator, implicit
/// constant 1. Only its exponents are meaningful.
pub fn theoretical_rate(gamma: Power, k: usize, n: usize, alpha: f64) -> Result<f64> {
    if gamma.is_trivial() {
        return Err(Error::GammaOne);
    }
    if k == 0 {
        return Err(Error::EmptyInput);
    }
    if n == 0 {
        return Err(Error::ZeroSampleSize);
    }
    let g = gamma.value();
    let kf = k as f64;
    let eff = alpha * alpha * n as f64;
    let rate = if g < 1.0 {
        kf.powf(2.0 * (1.0 - g)).min(kf * kf / eff.powf(g))
    } else if g < 2.0 {
        let small_k = kf * kf / eff.powf(g) + kf.powf(3.0 - 2.0 * g).max(1.0) / eff;
        eff.powf(1.0 - g).min(small_k)
    } else {
        1.0 / eff
    };
    Ok(rate)
}
