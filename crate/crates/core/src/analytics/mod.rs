//! Closed-form expectations, variances, and MSE objectives.
//!
//! Two tiers are exposed and recorded in every result:
//!
//! * the **exact conditional tier** evaluates expectations/variances of the
//!   difference-in-means estimator conditioned on an integer-consistent
//!   proportion vector, with no asymptotic approximation — these match
//!   brute-force enumeration to floating-point tolerance;
//! * the **asymptotic marginal tier** evaluates the large-`M`, large-`N_j`
//!   moment polynomial `V_0 + V_1 mu2c + V_2 mu2c^2 + V_3 mu3c +
//!   V_4 (mu4c - mu2c^2)` whose coefficients depend only on cluster-level
//!   summaries.

mod interference;
mod marginal;
mod stratified;
mod sutva;

pub use interference::{
    cond_expectation_interference, cond_mse_interference, cond_variance_interference, CondMse,
    PerfectClusteringMse,
};
pub use marginal::{
    bias_regime, exact_marginal_interference, exact_marginal_mean_interference,
    marginal_bias_interference, variance_coefficients_full, variance_coefficients_simplified,
    BiasRegimeReport, ExactMarginal, MarginalBias, PermutationAverage,
};
pub use stratified::{
    stratified_cond_expectation, stratified_expectation_interference,
    stratified_marginal_variance,
};
pub use sutva::{
    sutva_cond_expectation, sutva_cond_mse, sutva_marginal_variance, sutva_regime, sutva_summary,
    QuadraticForm, SutvaCondMse, SutvaMarginalVariance, SutvaSummary,
};

use serde::{Deserialize, Serialize};

use crate::stats::MomentSummary;

/// Which of the two canonical designs minimizes an objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Stratified,
    ClusterBased,
    Indifferent,
}

/// Relative tolerance for regime tie detection.
pub const REGIME_TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientTier {
    Full,
    SimplifiedBlockFixed,
}

/// Coefficients of the marginal variance polynomial in the centered moments
/// of the proportion vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VarianceCoefficients {
    pub v: [f64; 5],
    pub tier: CoefficientTier,
    pub n: usize,
    pub m: usize,
    pub n_t: usize,
}

/// Evaluate the variance polynomial at the given moments. Small negative
/// values (numerical floor) are clamped to zero.
pub fn variance_from_moments(coeffs: &VarianceCoefficients, m: &MomentSummary) -> f64 {
    let [v0, v1, v2, v3, v4] = coeffs.v;
    let value = v0
        + v1 * m.mu2c
        + v2 * m.mu2c * m.mu2c
        + v3 * m.mu3c
        + v4 * (m.mu4c - m.mu2c * m.mu2c);
    value.max(0.0)
}

/// Compare two objective values with the regime tie tolerance.
pub(crate) fn classify(stratified_value: f64, cluster_value: f64) -> Regime {
    let scale = 1.0 + stratified_value.abs().max(cluster_value.abs());
    if (stratified_value - cluster_value).abs() <= REGIME_TIE_TOL * scale {
        Regime::Indifferent
    } else if stratified_value < cluster_value {
        Regime::Stratified
    } else {
        Regime::ClusterBased
    }
}
