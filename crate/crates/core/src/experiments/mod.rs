//! Monte Carlo risk, rate fitting, lower-bound instances and property checks.

mod checks;
mod hard;
mod rate;
mod risk;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::EstimatorKind;
use crate::model::{Power, PrivacyBudget, ProbabilityVector};
use crate::rng::seeded;

pub use checks::{concentration_check, concentration_threshold, moment_check, negative_association_check, separation_check};
pub use hard::{kl_budget, perturbation_family, two_point_instance, HardInstance, InstanceKind, KlBudget, Regime, MAX_C_TILDE};
pub use rate::{fit_power_law, predicted_slope, rate_scan, Axis, PowerLawFit, RatePoint, RateScanResult};
pub use risk::{monte_carlo_risk, run_trial, RiskReport};

/// How a trial produces its release.
///
/// `Individual` privatizes every individual. `Aggregated` draws the
/// sufficient statistics (category counts, Laplace sums, stage-two plus
/// counts) directly; the estimator sees the same joint law at O(K) cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimulationMode {
    Individual,
    #[default]
    Aggregated,
}

impl fmt::Display for SimulationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimulationMode::Individual => "individual",
            SimulationMode::Aggregated => "aggregated",
        })
    }
}

impl FromStr for SimulationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "individual" => Ok(SimulationMode::Individual),
            "aggregated" => Ok(SimulationMode::Aggregated),
            other => Err(invalid("mode", format!("unknown simulation mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    Uniform,
    /// All mass on the first category.
    PointMass,
    /// `p` (or `q` when `second`) of the two-point lower-bound instance.
    TwoPoint { c_tilde: f64, second: bool },
    /// A member p^(ν) of the perturbation family, ν drawn from `nu_seed`.
    PerturbationFamily { nu_seed: u64 },
    Custom(Vec<f64>),
}

impl Distribution {
    pub fn resolve(&self, k: usize, n: usize, budget: &PrivacyBudget, gamma: Power) -> Result<ProbabilityVector> {
        match self {
            Distribution::Uniform => ProbabilityVector::uniform(k),
            Distribution::PointMass => ProbabilityVector::point_mass(k, 0),
            Distribution::TwoPoint { c_tilde, second } => {
                let inst = two_point_instance(k, n, budget, gamma, *c_tilde)?;
                Ok(inst.vectors[usize::from(*second)].clone())
            }
            Distribution::PerturbationFamily { nu_seed } => {
                let fam = perturbation_family(k, n, budget, gamma)?;
                let nu = fam.random_nu(&mut seeded(*nu_seed));
                fam.member(&nu)
            }
            Distribution::Custom(v) => {
                if v.len() != k {
                    return Err(Error::DimensionMismatch(format!("custom distribution has {} entries, K = {k}", v.len())));
                }
                ProbabilityVector::new(v.clone(), false)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Distribution::Uniform => "uniform",
            Distribution::PointMass => "point-mass",
            Distribution::TwoPoint { .. } => "two-point",
            Distribution::PerturbationFamily { .. } => "perturbation-family",
            Distribution::Custom(_) => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub gamma: Power,
    pub k: usize,
    /// Raw sample size per trial.
    pub n: usize,
    pub budget: PrivacyBudget,
    pub distribution: Distribution,
    pub estimator: EstimatorKind,
    pub trials: usize,
    pub seed: u64,
    /// Constant c of the γ < 1 threshold τ = c / sqrt(α² n).
    pub threshold_c: f64,
    pub mode: SimulationMode,
}

impl ExperimentConfig {
    pub fn new(
        gamma: Power,
        k: usize,
        n: usize,
        budget: PrivacyBudget,
        estimator: EstimatorKind,
        trials: usize,
        seed: u64,
    ) -> Self {
        Self {
            gamma,
            k,
            n,
            budget,
            distribution: Distribution::Uniform,
            estimator,
            trials,
            seed,
            threshold_c: 1.0,
            mode: SimulationMode::default(),
        }
    }

    pub fn with_distribution(mut self, d: Distribution) -> Self {
        self.distribution = d;
        self
    }

    pub fn with_mode(mut self, mode: SimulationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 2 {
            return Err(invalid("trials", "need at least 2 trials to estimate a variance"));
        }
        if self.k == 0 {
            return Err(invalid("K", "must be >= 1"));
        }
        if self.n == 0 {
            return Err(Error::ZeroSampleSize);
        }
        if !(self.threshold_c >= 1.0) {
            return Err(invalid("c", "threshold constant must be >= 1"));
        }
        let split = matches!(self.estimator, EstimatorKind::Interactive)
            || (self.estimator == EstimatorKind::Thresholded && self.gamma.value() > 1.0);
        if split && self.n < 2 {
            return Err(invalid("n", "sample splitting needs n >= 2"));
        }
        if self.estimator == EstimatorKind::Interactive && self.gamma.is_trivial() {
            return Err(Error::GammaOneUnsupported);
        }
        Ok(())
    }
}

/// Outcome of one property check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    /// Named quantities measured by the check.
    pub metrics: Vec<(String, f64)>,
    /// One line per violated invariant.
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
}

impl CheckReport {
    pub(crate) fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            passed: true,
            metrics: Vec::new(),
            failures: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub(crate) fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push((name.into(), value));
    }

    pub(crate) fn fail(&mut self, msg: impl Into<String>) {
        self.passed = false;
        self.failures.push(msg.into());
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}
