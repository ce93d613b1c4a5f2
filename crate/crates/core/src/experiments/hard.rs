use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{power_sum, Power, PrivacyBudget, ProbabilityVector};

/// Largest admissible C̃ for the two-point instance, 1/(6√2).
pub const MAX_C_TILDE: f64 = std::f64::consts::FRAC_1_SQRT_2 / 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceKind {
    TwoPoint,
    PerturbationFamily,
}

/// Which construction the perturbation family used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// K < n D², K̃ = K.
    SmallK,
    /// K ≥ n D², γ < 1: uniform base, δ = 1/(2K).
    LargeKConcave,
    /// K ≥ n D², 1 < γ < 2: K̃ ≈ n D² and a zero tail.
    LargeKConvex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlBudget {
    pub value: f64,
    /// ‖δ‖² ≤ 2 / (n D²).
    pub condition_met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardInstance {
    pub kind: InstanceKind,
    pub gamma: Power,
    pub k: usize,
    pub n: usize,
    pub alpha: f64,
    /// Two-point: [p, q]. Family: [base p].
    pub vectors: Vec<ProbabilityVector>,
    /// Two-point: p − q. Family: δ_k, equal within each pair, 0 beyond K̃.
    pub delta: Vec<f64>,
    /// Number of perturbed coordinates K̃ (family only).
    pub k_tilde: usize,
    pub regime: Option<Regime>,
    /// |F_γ(p^(ν)) − F_γ(p)|, the same for every ν, or |F_γ(p) − F_γ(q)|.
    pub separation: f64,
    /// R = Σ_k p_{2k}^(γ−2) δ_{2k}² (family only).
    pub witness: Option<f64>,
    pub kl_budget: f64,
    pub kl_condition_met: bool,
    pub warnings: Vec<String>,
}

/// D = e^{2α} − e^{−2α}.
fn d_alpha(alpha: f64) -> f64 {
    2.0 * (2.0 * alpha).sinh()
}

/// Family-case KL bound n D² ‖δ‖² / 4 and its admissibility flag.
pub fn kl_budget(delta: &[f64], n: usize, budget: &PrivacyBudget) -> Result<KlBudget> {
    if let Some(i) = delta.iter().position(|d| !d.is_finite()) {
        return Err(Error::NonFiniteEntry { index: i });
    }
    let d2 = d_alpha(budget.alpha()).powi(2);
    let norm2: f64 = delta.iter().map(|d| d * d).sum();
    let nd2 = n as f64 * d2;
    Ok(KlBudget {
        value: nd2 * norm2 / 4.0,
        condition_met: norm2 <= 2.0 / nd2,
    })
}

/// Two hypotheses p = (1−τ̃, τ̃, t, …), q = (1−τ̃/2, τ̃/2, t, …) with
/// τ̃ = C̃/sqrt(α² n) and equal tail coordinates t = C̃/(4Kn).
pub fn two_point_instance(
    k: usize,
    n: usize,
    budget: &PrivacyBudget,
    gamma: Power,
    c_tilde: f64,
) -> Result<HardInstance> {
    if gamma.is_trivial() {
        return Err(Error::GammaOne);
    }
    // one part in 1e12 of slack for callers computing 1/(6√2) themselves
    if !(c_tilde > 0.0 && c_tilde <= MAX_C_TILDE * (1.0 + 1e-12)) {
        return Err(Error::CTildeOutOfRange(c_tilde));
    }
    if k < 2 {
        return Err(Error::KTooSmall(k, 2));
    }
    if n == 0 {
        return Err(Error::ZeroSampleSize);
    }
    let alpha = budget.alpha();
    let nf = n as f64;
    let tau = c_tilde / (alpha * alpha * nf).sqrt();
    let tail = c_tilde / (4.0 * k as f64 * nf);
    let head = 1.0 - (k - 2) as f64 * tail;
    let build = |second: f64| {
        let mut v = vec![tail; k];
        v[0] = head - second;
        v[1] = second;
        v
    };
    let pv = build(tau);
    let qv = build(tau / 2.0);
    let delta: Vec<f64> = pv.iter().zip(&qv).map(|(a, b)| a - b).collect();
    let p = ProbabilityVector::new(pv, false)?;
    let q = ProbabilityVector::new(qv, false)?;
    let separation = (power_sum(&p, gamma) - power_sum(&q, gamma)).abs();
    let tv: f64 = delta.iter().map(|d| d.abs()).sum();
    let kl = 4.0 * alpha.exp_m1().powi(2) * nf * tv * tv;
    let mut warnings = Vec::new();
    if alpha > 1.0 {
        warnings.push(format!("alpha = {alpha} > 1: the bound e^a - 1 <= 3a no longer holds"));
    }
    Ok(HardInstance {
        kind: InstanceKind::TwoPoint,
        gamma,
        k,
        n,
        alpha,
        vectors: vec![p, q],
        delta,
        k_tilde: 2,
        regime: None,
        separation,
        witness: None,
        kl_budget: kl,
        kl_condition_met: kl <= 36.0 * c_tilde * c_tilde,
        warnings,
    })
}

/// Base vector and pairwise perturbation δ of the lower-bound family p^(ν).
pub fn perturbation_family(k: usize, n: usize, budget: &PrivacyBudget, gamma: Power) -> Result<HardInstance> {
    let g = gamma.value();
    if !(g > 0.0 && g < 2.0) || gamma.is_trivial() {
        return Err(Error::GammaOutOfRange(g));
    }
    if k < 4 {
        return Err(Error::KTooSmall(k, 4));
    }
    if k % 2 == 1 {
        return Err(Error::OddK(k));
    }
    if n == 0 {
        return Err(Error::ZeroSampleSize);
    }
    let alpha = budget.alpha();
    let d = d_alpha(alpha);
    let nd2 = n as f64 * d * d;
    let kf = k as f64;

    let (regime, k_tilde, step) = if kf < nd2 {
        (Regime::SmallK, k, 1.0 / (4.0 * (kf * n as f64).sqrt() * d))
    } else if g < 1.0 {
        (Regime::LargeKConcave, k, 1.0 / (2.0 * kf))
    } else {
        let mut kt = nd2.max(4.0).ceil() as usize;
        kt += kt % 2;
        (Regime::LargeKConvex, kt, 1.0 / (8.0 * ((kt * n) as f64).sqrt() * d))
    };
    // For n D² < 1/4 the convex step would leave no mass for the last pair;
    // 1/(4K̃) keeps p_k ≥ 2δ_k and only shrinks ‖δ‖.
    let mut warnings = Vec::new();
    let step = if regime == Regime::LargeKConvex && step > 0.25 / k_tilde as f64 {
        warnings.push(format!("n D^2 = {nd2} < 1/4: perturbation capped at 1/(4 K~)"));
        0.25 / k_tilde as f64
    } else {
        step
    };

    let mut base = vec![0.0; k];
    if regime == Regime::LargeKConcave {
        base.fill(1.0 / kf);
    } else {
        for b in base.iter_mut().take(k_tilde - 2) {
            *b = 2.0 * step;
        }
        let rest = (1.0 - (k_tilde - 2) as f64 * 2.0 * step) / 2.0;
        base[k_tilde - 2] = rest;
        base[k_tilde - 1] = rest;
    }
    let mut delta = vec![0.0; k];
    delta[..k_tilde].fill(step);

    let p = ProbabilityVector::new(base, false)?;
    let kl = kl_budget(&delta, n, budget)?;
    let mut inst = HardInstance {
        kind: InstanceKind::PerturbationFamily,
        gamma,
        k,
        n,
        alpha,
        vectors: vec![p],
        delta,
        k_tilde,
        regime: Some(regime),
        separation: 0.0,
        witness: None,
        kl_budget: kl.value,
        kl_condition_met: kl.condition_met,
        warnings,
    };
    inst.refresh_separation();
    Ok(inst)
}

/// (p+δ)^γ + (p−δ)^γ − 2p^γ, evaluated without cancellation.
pub(crate) fn pair_term(p: f64, delta: f64, gamma: f64) -> f64 {
    if delta == 0.0 {
        return 0.0;
    }
    let r = delta / p;
    p.powf(gamma) * ((gamma * r.ln_1p()).exp_m1() + (gamma * (-r).ln_1p()).exp_m1())
}

impl HardInstance {
    pub fn base(&self) -> &ProbabilityVector {
        &self.vectors[0]
    }

    /// Length of ν for the family, K̃/2.
    pub fn pairs(&self) -> usize {
        self.k_tilde / 2
    }

    pub fn random_nu<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i8> {
        (0..self.pairs()).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect()
    }

    /// p^(ν): coordinates 2j, 2j+1 (0-based) move by +ν_j δ and −ν_j δ.
    pub fn member(&self, nu: &[i8]) -> Result<ProbabilityVector> {
        if self.kind != InstanceKind::PerturbationFamily {
            return Err(crate::error::invalid("instance", "members exist only for the perturbation family"));
        }
        if nu.len() != self.pairs() {
            return Err(Error::DimensionMismatch(format!("nu has {} signs, need {}", nu.len(), self.pairs())));
        }
        let mut v = self.base().entries().to_vec();
        for (j, &s) in nu.iter().enumerate() {
            if s != 1 && s != -1 {
                return Err(crate::error::invalid("nu", format!("entry {j} is {s}, expected +1 or -1")));
            }
            let shift = f64::from(s) * self.delta[2 * j + 1];
            v[2 * j] += shift;
            v[2 * j + 1] -= shift;
        }
        ProbabilityVector::new(v, false)
    }

    /// The bracketed terms of F_γ(p^(ν)) − F_γ(p), one per pair. They do not
    /// depend on the signs ν.
    pub fn pair_terms(&self) -> Vec<f64> {
        let p = self.base().entries();
        (0..self.pairs())
            .map(|j| pair_term(p[2 * j + 1], self.delta[2 * j + 1], self.gamma.value()))
            .collect()
    }

    /// Copy with every δ_k multiplied by `factor` ∈ [0, 1].
    pub fn scaled(&self, factor: f64, budget: &PrivacyBudget) -> Result<Self> {
        if !(0.0..=1.0).contains(&factor) {
            return Err(crate::error::invalid("factor", "must lie in [0, 1]"));
        }
        if self.kind != InstanceKind::PerturbationFamily {
            return Err(crate::error::invalid("instance", "only the perturbation family can be rescaled"));
        }
        let mut out = self.clone();
        out.delta.iter_mut().for_each(|d| *d *= factor);
        let kl = kl_budget(&out.delta, out.n, budget)?;
        out.kl_budget = kl.value;
        out.kl_condition_met = kl.condition_met;
        out.refresh_separation();
        Ok(out)
    }

    fn refresh_separation(&mut self) {
        let g = self.gamma.value();
        let separation = self.pair_terms().iter().sum::<f64>().abs();
        let p = self.base().entries();
        let witness = (0..self.pairs())
            .map(|j| {
                let d = self.delta[2 * j + 1];
                if d == 0.0 {
                    0.0
                } else {
                    p[2 * j + 1].powf(g - 2.0) * d * d
                }
            })
            .sum();
        self.separation = separation;
        self.witness = Some(witness);
    }
}
