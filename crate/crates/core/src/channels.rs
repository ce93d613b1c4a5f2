//! The two α-LDP release mechanisms and exact checks of their likelihood
//! ratio bounds.
//!
//! Non-interactive: every individual publishes the K-vector
//! `z_ik = 1{x_i = k} + (σ/α) w_ik` with `w_ik` standard Laplace.
//!
//! Interactive: a first group publishes through the Laplace channel, the
//! clipped bin means are turned into `v_k = T[ẑ_k]^(γ-1)`, and every member
//! of the second group publishes a single `±z_α` whose sign is biased by
//! `v_{x_i}`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{clamp02, pow0, Power, PrivacyBudget};
use crate::rng::{self, derive_seed, tag, RowStreams};

/// One non-interactive release: the n×K matrix `z` (row-major) and its
/// column means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivatizedBatch {
    z: Vec<f64>,
    n: usize,
    k: usize,
    noise_scale: f64,
    bin_means: Vec<f64>,
}

impl PrivatizedBatch {
    /// Wraps an existing release matrix and recomputes the bin means.
    pub fn from_matrix(z: Vec<f64>, n: usize, k: usize, noise_scale: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroSampleSize);
        }
        if k == 0 {
            return Err(Error::EmptyInput);
        }
        if z.len() != n * k {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} entries, expected {n}x{k}",
                z.len()
            )));
        }
        let bin_means = column_means(&z, n, k);
        Ok(Self {
            z,
            n,
            k,
            noise_scale,
            bin_means,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    /// ẑ_k = (1/n) Σ_i z_ik.
    pub fn bin_means(&self) -> &[f64] {
        &self.bin_means
    }

    pub fn matrix(&self) -> &[f64] {
        &self.z
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.z.chunks_exact(self.k)
    }

    /// Bin means recomputed from the matrix agree with the stored ones.
    pub fn is_consistent(&self) -> bool {
        column_means(&self.z, self.n, self.k)
            .iter()
            .zip(&self.bin_means)
            .all(|(a, b)| (a - b).abs() <= 1e-12)
    }
}

fn column_means(z: &[f64], n: usize, k: usize) -> Vec<f64> {
    let mut sums = vec![0.0; k];
    for row in z.chunks_exact(k) {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    sums.iter().map(|s| s / n as f64).collect()
}

fn check_categories(x: &[usize], k: usize) -> Result<()> {
    if x.is_empty() {
        return Err(Error::ZeroSampleSize);
    }
    if let Some((index, &value)) = x.iter().enumerate().find(|(_, &c)| c >= k) {
        return Err(Error::CategoryOutOfRange { index, value, k });
    }
    Ok(())
}

/// Privatizes categories `x` (0-based, each `< k`) through the Laplace
/// channel. Row `i` is drawn from ChaCha stream `i` of `seed`, bins in order.
pub fn laplace_channel(x: &[usize], k: usize, budget: &PrivacyBudget, seed: u64) -> Result<PrivatizedBatch> {
    if k == 0 {
        return Err(Error::EmptyInput);
    }
    check_categories(x, k)?;
    let n = x.len();
    let scale = budget.noise_scale();
    let streams = RowStreams::new(seed);
    let mut z = Vec::with_capacity(n * k);
    for (i, &xi) in x.iter().enumerate() {
        let mut r = streams.row(i);
        for bin in 0..k {
            let w = rng::standard_laplace(&mut r);
            let indicator = if bin == xi { 1.0 } else { 0.0 };
            z.push(indicator + scale * w);
        }
    }
    PrivatizedBatch::from_matrix(z, n, k, scale)
}

/// z_α = 2^(γ-1) (e^α + 1)/(e^α − 1), written as 2^(γ-1)/tanh(α/2).
pub fn z_alpha(budget: &PrivacyBudget, gamma: Power) -> Result<f64> {
    let g = gamma.value();
    if g <= 1.0 {
        return Err(Error::GammaNotAboveOne(g));
    }
    Ok(2f64.powf(g - 1.0) / (budget.alpha() / 2.0).tanh())
}

/// Largest admissible stage-one value, 2^(γ-1).
pub fn stage_one_cap(gamma: Power) -> f64 {
    2f64.powf(gamma.value() - 1.0)
}

/// v_k = T[ẑ_k]^(γ-1) for every bin of the first-stage release.
pub fn stage_one_values(batch: &PrivatizedBatch, gamma: Power) -> Result<Vec<f64>> {
    let g = gamma.value();
    if g <= 1.0 {
        return Err(Error::GammaNotAboveOne(g));
    }
    Ok(stage_one_values_from_means(batch.bin_means(), g))
}

pub(crate) fn stage_one_values_from_means(means: &[f64], gamma: f64) -> Vec<f64> {
    means.iter().map(|&m| pow0(clamp02(m), gamma - 1.0)).collect()
}

fn check_stage_one(values: &[f64], cap: f64) -> Result<()> {
    for (bin, &value) in values.iter().enumerate() {
        if !(0.0..=cap).contains(&value) {
            return Err(Error::StageOneValueOutOfRange { bin, value, max: cap });
        }
    }
    Ok(())
}

/// Second-stage releases: individual `i` with category `c` publishes
/// `+z_α` with probability (1 + v_c/z_α)/2 and `−z_α` otherwise.
pub fn interactive_stage2(
    x2: &[usize],
    stage1_values: &[f64],
    budget: &PrivacyBudget,
    gamma: Power,
    seed: u64,
) -> Result<Vec<f64>> {
    let z = z_alpha(budget, gamma)?;
    check_stage_one(stage1_values, stage_one_cap(gamma))?;
    check_categories(x2, stage1_values.len())?;
    let streams = RowStreams::new(seed);
    Ok(x2
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let u = rng::uniform01(&mut streams.row(i));
            let plus = 0.5 * (1.0 + stage1_values[c] / z);
            if u < plus {
                z
            } else {
                -z
            }
        })
        .collect())
}

/// Full two-stage transcript.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractiveTranscript {
    pub stage1: PrivatizedBatch,
    pub stage1_values: Vec<f64>,
    pub stage2: Vec<f64>,
    pub z_alpha: f64,
}

impl InteractiveTranscript {
    /// Checks the structural invariants of a transcript.
    pub fn validate(&self, gamma: Power) -> Result<()> {
        let cap = stage_one_cap(gamma);
        check_stage_one(&self.stage1_values, cap)?;
        if self.stage1_values.len() != self.stage1.k() {
            return Err(Error::DimensionMismatch(format!(
                "{} stage-one values for K = {}",
                self.stage1_values.len(),
                self.stage1.k()
            )));
        }
        if let Some(v) = self.stage2.iter().find(|v| v.abs() != self.z_alpha) {
            return Err(Error::DimensionMismatch(format!(
                "stage-two entry {v} is not +/- {}",
                self.z_alpha
            )));
        }
        Ok(())
    }
}

/// Runs both stages: `x1` through the Laplace channel, `x2` through the
/// binary channel driven by the first-stage plug-in values.
pub fn interactive_channel(
    x1: &[usize],
    x2: &[usize],
    k: usize,
    budget: &PrivacyBudget,
    gamma: Power,
    seed: u64,
) -> Result<InteractiveTranscript> {
    let z = z_alpha(budget, gamma)?;
    let stage1 = laplace_channel(x1, k, budget, derive_seed(seed, tag::STAGE_ONE))?;
    let stage1_values = stage_one_values(&stage1, gamma)?;
    let stage2 = interactive_stage2(x2, &stage1_values, budget, gamma, derive_seed(seed, tag::STAGE_TWO))?;
    Ok(InteractiveTranscript {
        stage1,
        stage1_values,
        stage2,
        z_alpha: z,
    })
}

/// Outcome of a likelihood-ratio audit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdpReport {
    pub mechanism: &'static str,
    pub alpha: f64,
    /// Closed-form supremum of the log likelihood ratio.
    pub worst_case_log_ratio: f64,
    /// Same supremum on the ratio scale.
    pub worst_case_ratio: f64,
    /// Largest log ratio found by the grid scan.
    pub grid_max_log_ratio: f64,
    pub grid_points: usize,
    pub satisfied: bool,
}

const GRID: usize = 1000;
const LDP_TOL: f64 = 1e-12;

/// Audits the Laplace channel. Changing `x_i` moves two coordinates' Laplace
/// location by one unit, so the log ratio is at most 2α/σ.
pub fn verify_ldp_ni(budget: &PrivacyBudget) -> LdpReport {
    let alpha = budget.alpha();
    let scale = budget.noise_scale();
    let closed = 2.0 * alpha / budget.sigma();

    // per coordinate: log f(y; 1) - log f(y; 0) with f the Laplace(scale) density
    let grid_max = if scale > 0.0 {
        let lo = -5.0 * scale - 1.0;
        let hi = 5.0 * scale + 2.0;
        let coord = |mu_num: f64, mu_den: f64| {
            (0..GRID)
                .map(|j| {
                    let y = lo + (hi - lo) * j as f64 / (GRID - 1) as f64;
                    let log_num = -(y - mu_num).abs() / scale - (2.0 * scale).ln();
                    let log_den = -(y - mu_den).abs() / scale - (2.0 * scale).ln();
                    log_num - log_den
                })
                .fold(f64::NEG_INFINITY, f64::max)
        };
        // bin x gains the indicator, bin x' loses it
        coord(1.0, 0.0) + coord(0.0, 1.0)
    } else {
        f64::INFINITY
    };

    let satisfied = closed <= alpha + LDP_TOL && grid_max <= closed + LDP_TOL;
    LdpReport {
        mechanism: "laplace",
        alpha,
        worst_case_log_ratio: closed,
        worst_case_ratio: closed.exp(),
        grid_max_log_ratio: grid_max,
        grid_points: 2 * GRID,
        satisfied,
    }
}

/// Audits the binary stage-two channel. For stage-one values in
/// [−2^(γ-1), 2^(γ-1)] the ratio (z_α ± v)/(z_α ± v') peaks at
/// (z_α + 2^(γ-1))/(z_α − 2^(γ-1)) = e^α.
pub fn verify_ldp_interactive(budget: &PrivacyBudget, gamma: Power) -> Result<LdpReport> {
    let z = z_alpha(budget, gamma)?;
    let alpha = budget.alpha();
    let cap = stage_one_cap(gamma);
    let closed = (z + cap) / (z - cap);
    let target = alpha.exp();

    let values: Vec<f64> = (0..GRID)
        .map(|j| -cap + 2.0 * cap * j as f64 / (GRID - 1) as f64)
        .collect();
    let mut grid_max = 0.0f64;
    for &v in &values {
        for &w in &values {
            let plus = (z + v) / (z + w);
            let minus = (z - v) / (z - w);
            grid_max = grid_max.max(plus).max(minus);
        }
    }

    let tol = LDP_TOL * target.max(1.0);
    let satisfied = (closed - target).abs() <= tol && grid_max <= target + tol;
    Ok(LdpReport {
        mechanism: "interactive",
        alpha,
        worst_case_log_ratio: closed.ln(),
        worst_case_ratio: closed,
        grid_max_log_ratio: grid_max.ln(),
        grid_points: GRID * GRID,
        satisfied,
    })
}
