//! Estimators of F_γ built on the channel releases, and the sample-splitting
//! orchestration that feeds them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channels::{interactive_channel, laplace_channel, InteractiveTranscript, PrivatizedBatch};
use crate::error::{invalid, Error, Result};
use crate::model::{clamp02, pow0, Power, PrivacyBudget, ThresholdSpec};
use crate::rng::{derive_seed, tag};

/// Constant in front of the empirical screening threshold.
pub const THRESHOLD_CONSTANT: f64 = 192.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    PlugIn,
    Thresholded,
    Interactive,
    Combined,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::PlugIn => "plug-in",
            EstimatorKind::Thresholded => "thresholded",
            EstimatorKind::Interactive => "interactive",
            EstimatorKind::Combined => "combined",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "plug-in" | "plugin" => Ok(EstimatorKind::PlugIn),
            "thresholded" | "threshold" => Ok(EstimatorKind::Thresholded),
            "interactive" => Ok(EstimatorKind::Interactive),
            "combined" => Ok(EstimatorKind::Combined),
            other => Err(invalid("estimator", format!("unknown estimator '{other}'"))),
        }
    }
}

/// Which computation actually produced the value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    PlugIn,
    TrivialZero,
    Thresholded,
    Interactive,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch: Option<Branch>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surviving_bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_effective: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub value: f64,
    pub kind: EstimatorKind,
    /// Individuals whose data entered the estimate.
    pub n_used: usize,
    pub diagnostics: Diagnostics,
}

/// Σ_k T[ẑ_k]^γ.
pub fn plugin_from_means(means: &[f64], gamma: f64) -> f64 {
    means.iter().map(|&m| pow0(clamp02(m), gamma)).sum()
}

pub fn plugin_estimate(batch: &PrivatizedBatch, gamma: Power) -> EstimateResult {
    EstimateResult {
        value: plugin_from_means(batch.bin_means(), gamma.value()),
        kind: EstimatorKind::PlugIn,
        n_used: batch.n(),
        diagnostics: Diagnostics {
            branch: Some(Branch::PlugIn),
            n_effective: Some(batch.n()),
            ..Default::default()
        },
    }
}

/// τ̂ = 192 σ sqrt(log(Kn) / (α² n)).
pub fn empirical_threshold(k: usize, n: usize, budget: &PrivacyBudget) -> f64 {
    let nf = n as f64;
    let a = budget.alpha();
    THRESHOLD_CONSTANT * budget.sigma() * ((k as f64 * nf).ln() / (a * a * nf)).sqrt()
}

/// Screening is only guaranteed for n ≥ 2 log K.
pub fn threshold_valid(k: usize, n: usize) -> bool {
    n as f64 >= 2.0 * (k as f64).ln()
}

/// Σ_k T[ẑ2_k · 1{ẑ1_k ≥ τ̂}]^γ and the number of bins that pass the screen.
pub fn thresholded_from_means(screen: &[f64], estimate: &[f64], gamma: f64, tau_hat: f64) -> (f64, usize) {
    let mut survivors = 0;
    let value = screen
        .iter()
        .zip(estimate)
        .map(|(&s, &e)| {
            let kept = if s >= tau_hat {
                survivors += 1;
                e
            } else {
                0.0
            };
            pow0(clamp02(kept), gamma)
        })
        .sum();
    (value, survivors)
}

/// The γ < 1 rule: plug-in when K ≤ 1/τ, else the constant 0.
pub fn small_gamma_keeps_plugin(k: usize, threshold: &ThresholdSpec) -> bool {
    k as f64 <= 1.0 / threshold.tau()
}

/// Thresholded estimator. For γ > 1, `batch1` screens bins against τ̂ and
/// `batch2` estimates the survivors. For γ ≤ 1 only `batch1` is read.
pub fn thresholded_estimate(
    batch1: &PrivatizedBatch,
    batch2: &PrivatizedBatch,
    gamma: Power,
    budget: &PrivacyBudget,
    threshold: &ThresholdSpec,
) -> Result<EstimateResult> {
    if batch1.k() != batch2.k() {
        return Err(Error::DimensionMismatch(format!(
            "batches have K = {} and K = {}",
            batch1.k(),
            batch2.k()
        )));
    }
    let k = batch1.k();
    let g = gamma.value();
    let mut diagnostics = Diagnostics::default();

    if g <= 1.0 {
        diagnostics.threshold = Some(threshold.tau());
        diagnostics.n_effective = Some(batch1.n());
        let value = if gamma.is_trivial() || small_gamma_keeps_plugin(k, threshold) {
            diagnostics.branch = Some(Branch::PlugIn);
            diagnostics.surviving_bins = Some(k);
            plugin_from_means(batch1.bin_means(), g)
        } else {
            diagnostics.branch = Some(Branch::TrivialZero);
            diagnostics.surviving_bins = Some(0);
            0.0
        };
        return Ok(EstimateResult {
            value,
            kind: EstimatorKind::Thresholded,
            n_used: batch1.n(),
            diagnostics,
        });
    }

    let tau_hat = empirical_threshold(k, batch1.n(), budget);
    if !threshold_valid(k, batch1.n()) {
        diagnostics
            .warnings
            .push(format!("n = {} < 2 log K, screening guarantee does not apply", batch1.n()));
    }
    if tau_hat > 2.0 {
        diagnostics
            .warnings
            .push(format!("empirical threshold {tau_hat} exceeds 2, every bin is screened out"));
    }
    let (value, survivors) = thresholded_from_means(batch1.bin_means(), batch2.bin_means(), g, tau_hat);
    diagnostics.branch = Some(Branch::Thresholded);
    diagnostics.threshold = Some(tau_hat);
    diagnostics.surviving_bins = Some(survivors);
    diagnostics.n_effective = Some(batch1.n());
    Ok(EstimateResult {
        value,
        kind: EstimatorKind::Thresholded,
        n_used: batch1.n() + batch2.n(),
        diagnostics,
    })
}

/// Mean of the stage-two releases.
pub fn interactive_estimate(transcript: &InteractiveTranscript) -> Result<EstimateResult> {
    if transcript.stage2.is_empty() {
        return Err(Error::EmptyStageTwo);
    }
    let n2 = transcript.stage2.len();
    let value = transcript.stage2.iter().sum::<f64>() / n2 as f64;
    Ok(EstimateResult {
        value,
        kind: EstimatorKind::Interactive,
        n_used: transcript.stage1.n() + n2,
        diagnostics: Diagnostics {
            branch: Some(Branch::Interactive),
            z_alpha: Some(transcript.z_alpha),
            n_effective: Some(n2),
            ..Default::default()
        },
    })
}

/// Branch of the combined estimator for a raw sample of size `n_total`:
/// plug-in when K ≤ sqrt(α² n_total), otherwise thresholded (γ < 1) or
/// interactive (γ > 1). γ = 1 always falls back to the plug-in.
pub fn combined_branch(gamma: Power, k: usize, n_total: usize, alpha: f64) -> Branch {
    let eff = (alpha * alpha * n_total as f64).sqrt();
    let g = gamma.value();
    if k as f64 <= eff || g == 1.0 {
        Branch::PlugIn
    } else if g < 1.0 {
        Branch::Thresholded
    } else {
        Branch::Interactive
    }
}

/// Splits a raw sample in two halves of ⌊N/2⌋, dropping the last
/// individual when N is odd.
pub fn split_halves(x: &[usize]) -> Result<(&[usize], &[usize])> {
    let half = x.len() / 2;
    if half == 0 {
        return Err(Error::ZeroSampleSize);
    }
    Ok((&x[..half], &x[half..2 * half]))
}

/// Privatizes `x` and applies estimator `kind`, splitting the sample where
/// the estimator needs two independent groups.
pub fn estimate_from_sample(
    kind: EstimatorKind,
    x: &[usize],
    k: usize,
    gamma: Power,
    budget: &PrivacyBudget,
    c: f64,
    seed: u64,
) -> Result<EstimateResult> {
    let g = gamma.value();
    match kind {
        EstimatorKind::PlugIn => {
            let batch = laplace_channel(x, k, budget, derive_seed(seed, tag::STAGE_ONE))?;
            Ok(plugin_estimate(&batch, gamma))
        }
        EstimatorKind::Thresholded if g <= 1.0 => {
            let batch = laplace_channel(x, k, budget, derive_seed(seed, tag::STAGE_ONE))?;
            let spec = ThresholdSpec::new(c, budget, batch.n())?;
            thresholded_estimate(&batch, &batch, gamma, budget, &spec)
        }
        EstimatorKind::Thresholded => {
            let (x1, x2) = split_halves(x)?;
            let b1 = laplace_channel(x1, k, budget, derive_seed(seed, tag::STAGE_ONE))?;
            let b2 = laplace_channel(x2, k, budget, derive_seed(seed, tag::STAGE_TWO))?;
            let spec = ThresholdSpec::new(c, budget, b1.n())?;
            thresholded_estimate(&b1, &b2, gamma, budget, &spec)
        }
        EstimatorKind::Interactive => {
            if gamma.is_trivial() {
                return Err(Error::GammaOneUnsupported);
            }
            let (x1, x2) = split_halves(x)?;
            let t = interactive_channel(x1, x2, k, budget, gamma, seed)?;
            interactive_estimate(&t)
        }
        EstimatorKind::Combined => combined_estimate(x, k, gamma, budget, c, seed),
    }
}

/// Combined estimator: picks a branch from (K, N, α, γ) and runs it.
pub fn combined_estimate(
    x: &[usize],
    k: usize,
    gamma: Power,
    budget: &PrivacyBudget,
    c: f64,
    seed: u64,
) -> Result<EstimateResult> {
    let branch = combined_branch(gamma, k, x.len(), budget.alpha());
    let large_k = (k as f64) > (budget.alpha().powi(2) * x.len() as f64).sqrt();
    let mut result = match branch {
        Branch::PlugIn => estimate_from_sample(EstimatorKind::PlugIn, x, k, gamma, budget, c, seed)?,
        Branch::Thresholded => {
            let (x1, x2) = split_halves(x)?;
            let b1 = laplace_channel(x1, k, budget, derive_seed(seed, tag::STAGE_ONE))?;
            let b2 = laplace_channel(x2, k, budget, derive_seed(seed, tag::STAGE_TWO))?;
            let spec = ThresholdSpec::new(c, budget, b1.n())?;
            thresholded_estimate(&b1, &b2, gamma, budget, &spec)?
        }
        Branch::Interactive => estimate_from_sample(EstimatorKind::Interactive, x, k, gamma, budget, c, seed)?,
        Branch::TrivialZero => unreachable!("combined_branch never selects the zero estimator directly"),
    };
    if gamma.is_trivial() && large_k {
        result
            .diagnostics
            .warnings
            .push("gamma = 1 with K > sqrt(alpha^2 n): using the plug-in".to_string());
    }
    // keep the sub-estimator's branch but report the combined kind
    if result.diagnostics.branch.is_none() {
        result.diagnostics.branch = Some(branch);
    }
    result.kind = EstimatorKind::Combined;
    Ok(result)
}
