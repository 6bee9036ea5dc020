//! Closed forms for the stratified estimator.

use crate::designs::ProportionVector;
use crate::error::{Error, Result};
use crate::graph::ClusteredGraph;
use crate::outcomes::{OutcomeModel, PotentialTable};
use crate::stats::{harmonic_mean, sample_var, KahanSum};

fn weights_or_default(g: &ClusteredGraph, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    match weights {
        Some(w) => {
            if w.len() != g.m() {
                return Err(Error::InvalidInput(format!(
                    "{} weights for {} clusters",
                    w.len(),
                    g.m()
                )));
            }
            if w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                return Err(Error::InvalidInput("weights must be non-negative".into()));
            }
            Ok(w.to_vec())
        }
        None => Ok((0..g.m())
            .map(|j| g.cluster_size(j) as f64 / g.n() as f64)
            .collect()),
    }
}

/// Conditional (and marginal) expectation of the stratified estimator under
/// SUTVA: `sum_j (lambda_j / N_j) sum_{i in C_j} (Y_i(1) - Y_i(0))`;
/// independent of the proportion vector.
pub fn stratified_cond_expectation(
    table: &PotentialTable,
    g: &ClusteredGraph,
    weights: Option<&[f64]>,
) -> Result<f64> {
    let lambda = weights_or_default(g, weights)?;
    let mut acc = KahanSum::new();
    for j in 0..g.m() {
        let members = g.cluster_members(j);
        let mut diff = KahanSum::new();
        for &i in members {
            diff.add(table.y1[i as usize] - table.y0[i as usize]);
        }
        acc.add(lambda[j] / members.len() as f64 * diff.value());
    }
    Ok(acc.value())
}

/// Marginal variance of the stratified estimator over the permutation design:
/// `sum_j lambda_j^2 (N/N_j) (S_tj/(pi_hm N) + S_cj/((1-pi)_hm N) - S_tcj/N)`
/// with harmonic means of the proportions. Exact for equal cluster sizes and
/// integer-consistent proportions in (0, 1).
pub fn stratified_marginal_variance(
    table: &PotentialTable,
    pi: &ProportionVector,
    g: &ClusteredGraph,
    weights: Option<&[f64]>,
) -> Result<f64> {
    let lambda = weights_or_default(g, weights)?;
    let sizes = g.cluster_sizes();
    let realized = pi.realized(&sizes);
    let p = realized.as_slice();
    for (j, &pj) in p.iter().enumerate() {
        if (pj <= 0.0 || pj >= 1.0) && lambda[j] > 0.0 {
            return Err(Error::Degenerate(format!(
                "stratum {j} has pi = {pj}; the stratified variance needs 0 < pi < 1"
            )));
        }
    }
    let hm_t = harmonic_mean(p)?;
    let one_minus: Vec<f64> = p.iter().map(|&x| 1.0 - x).collect();
    let hm_c = harmonic_mean(&one_minus)?;
    let n = g.n() as f64;
    let mut acc = KahanSum::new();
    for j in 0..g.m() {
        if lambda[j] == 0.0 {
            continue;
        }
        let members = g.cluster_members(j);
        let y1: Vec<f64> = members.iter().map(|&i| table.y1[i as usize]).collect();
        let y0: Vec<f64> = members.iter().map(|&i| table.y0[i as usize]).collect();
        let d: Vec<f64> = y1.iter().zip(&y0).map(|(a, b)| a - b).collect();
        let s_t = sample_var(&y1)?;
        let s_c = sample_var(&y0)?;
        let s_tc = sample_var(&d)?;
        acc.add(
            lambda[j] * lambda[j] * (n / members.len() as f64)
                * (s_t / (hm_t * n) + s_c / (hm_c * n) - s_tc / n),
        );
    }
    Ok(acc.value())
}

/// Exact conditional (and marginal) expectation of the stratified estimator
/// under the linear interference model:
///
/// `sum_j lambda_j [ beta^{(j)}/N_j - (N_j (N_j-1))^{-1} sum_{i in C_j}
///   gamma_i |N_i ∩ C_j| / |N_i| ]`.
///
/// Constant in the proportion vector. Cross-cluster interference cancels
/// within each stratum; intra-cluster terms survive only through the
/// `-1/(N_j(N_j-1))` sampling covariance, so the value tends to the weighted
/// mean of `beta` as cluster sizes grow.
pub fn stratified_expectation_interference(
    model: &OutcomeModel,
    g: &ClusteredGraph,
    weights: Option<&[f64]>,
) -> Result<f64> {
    let lambda = weights_or_default(g, weights)?;
    let mut acc = KahanSum::new();
    for j in 0..g.m() {
        let members = g.cluster_members(j);
        let nj = members.len() as f64;
        let mut beta_sum = KahanSum::new();
        let mut intra = KahanSum::new();
        for &i in members {
            let i = i as usize;
            beta_sum.add(model.beta[i]);
            intra.add(model.gamma[i] * g.intra_fraction(i));
        }
        acc.add(lambda[j] * (beta_sum.value() / nj - intra.value() / (nj * (nj - 1.0))));
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::ProportionVector;
    use crate::outcomes::OutcomeModel;
    use crate::rng::Rng;

    #[test]
    fn sutva_expectation_is_weighted_tte() {
        let g = ClusteredGraph::new(vec![0, 0, 1, 1, 1, 1], &[]).unwrap();
        let mut rng = Rng::seed_from_u64(2);
        let y1: Vec<f64> = (0..6).map(|_| rng.uniform(0.0, 2.0)).collect();
        let y0: Vec<f64> = (0..6).map(|_| rng.uniform(0.0, 2.0)).collect();
        let t = PotentialTable::new(y1.clone(), y0.clone()).unwrap();
        let e = stratified_cond_expectation(&t, &g, None).unwrap();
        assert!((e - t.tte()).abs() < 1e-14);
    }

    #[test]
    fn degenerate_stratum_rejected() {
        let g = ClusteredGraph::new(vec![0, 0, 1, 1], &[]).unwrap();
        let t = PotentialTable::new(vec![1.0; 4], vec![0.0; 4]).unwrap();
        let pi = ProportionVector::new(vec![1.0, 0.5]).unwrap();
        assert!(matches!(
            stratified_marginal_variance(&t, &pi, &g, None),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn interference_expectation_tiny_hand_case() {
        // one cluster of two units joined by an edge: the estimator is
        // -gamma of whichever unit is control, so the mean is -(g1+g2)/2
        let g = ClusteredGraph::new(vec![0, 0], &[(0, 1)]).unwrap();
        let model =
            OutcomeModel::new(vec![0.0; 2], vec![0.0; 2], vec![0.3, 0.9]).unwrap();
        let e = stratified_expectation_interference(&model, &g, None).unwrap();
        assert!((e - (-(0.3 + 0.9) / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn constant_gamma_cross_edges_only() {
        // no intra-cluster edges: interference contributes nothing
        let g = ClusteredGraph::new(vec![0, 0, 1, 1], &[(0, 2), (1, 3)]).unwrap();
        let model =
            OutcomeModel::new(vec![0.0; 4], vec![2.0; 4], vec![5.0; 4]).unwrap();
        let e = stratified_expectation_interference(&model, &g, None).unwrap();
        assert!((e - 2.0).abs() < 1e-14);
    }
}
