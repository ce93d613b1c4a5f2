//! Locally differentially private estimation of power sums F_γ(p) = Σ_k p_k^γ
//! of a discrete distribution.
//!
//! Two privatization channels are provided: a non-interactive Laplace channel
//! and a two-stage sequentially interactive channel. The estimators built on
//! them are in [`estimators`]; Monte Carlo risk, rate fitting, lower-bound
//! constructions and property checks are in [`experiments`].

pub mod aggregate;
pub mod channels;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod model;
pub mod rng;

pub use channels::{
    interactive_channel, laplace_channel, verify_ldp_interactive, verify_ldp_ni, z_alpha, InteractiveTranscript,
    LdpReport, PrivatizedBatch,
};
pub use error::{Error, Result};
pub use estimators::{
    combined_estimate, empirical_threshold, estimate_from_sample, interactive_estimate, plugin_estimate,
    thresholded_estimate, Branch, Diagnostics, EstimateResult, EstimatorKind,
};
pub use model::{
    clip02, power_sum, renyi_entropy, sample_categorical, theoretical_rate, thresholded_norm, Power, PrivacyBudget,
    ProbabilityVector, ThresholdSpec,
};
