//! Point estimators computed from one realized assignment.

use crate::designs::Assignment;
use crate::error::{Error, Result};
use crate::graph::ClusteredGraph;
use crate::stats::KahanSum;

/// Difference in means between treated and control units.
pub fn diff_in_means(y: &[f64], z: &Assignment) -> Result<f64> {
    let n = y.len();
    debug_assert_eq!(z.z.len(), n);
    if z.n_t == 0 || z.n_t == n {
        return Err(Error::Degenerate(format!(
            "diff-in-means undefined with n_t = {} of {n}",
            z.n_t
        )));
    }
    let mut treated = KahanSum::new();
    let mut control = KahanSum::new();
    for i in 0..n {
        if z.z[i] != 0 {
            treated.add(y[i]);
        } else {
            control.add(y[i]);
        }
    }
    Ok(treated.value() / z.n_t as f64 - control.value() / z.n_c() as f64)
}

/// Per-cluster difference in means combined with weights `lambda_j`
/// (default `N_j / N`). Every positively weighted cluster must have both
/// treated and control units.
pub fn stratified_estimator(
    y: &[f64],
    z: &Assignment,
    g: &ClusteredGraph,
    weights: Option<&[f64]>,
) -> Result<f64> {
    let m = g.m();
    if let Some(w) = weights {
        if w.len() != m {
            return Err(Error::InvalidInput(format!(
                "{} weights for {m} clusters",
                w.len()
            )));
        }
    }
    let n = g.n() as f64;
    let mut total = KahanSum::new();
    for j in 0..m {
        let members = g.cluster_members(j);
        let lambda = match weights {
            Some(w) => w[j],
            None => members.len() as f64 / n,
        };
        if lambda == 0.0 {
            continue;
        }
        let nj = z.n_per_cluster[j];
        if nj == 0 || nj == members.len() {
            return Err(Error::Degenerate(format!(
                "stratum {j} has n_j = {nj} of {}",
                members.len()
            )));
        }
        let mut treated = KahanSum::new();
        let mut control = KahanSum::new();
        for &i in members {
            let i = i as usize;
            if z.z[i] != 0 {
                treated.add(y[i]);
            } else {
                control.add(y[i]);
            }
        }
        total.add(lambda * (treated.value() / nj as f64
            - control.value() / (members.len() - nj) as f64));
    }
    Ok(total.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::Assignment;

    fn g2x3() -> ClusteredGraph {
        ClusteredGraph::new(vec![0, 0, 0, 1, 1, 1], &[(0, 1), (3, 4)]).unwrap()
    }

    #[test]
    fn dim_basic() {
        let g = g2x3();
        let z = Assignment::from_z(vec![1, 0, 1, 0, 1, 0], &g);
        assert_eq!(diff_in_means(&[5.0; 6], &z).unwrap(), 0.0);
        let y: Vec<f64> = z.z.iter().map(|&b| b as f64).collect();
        assert_eq!(diff_in_means(&y, &z).unwrap(), 1.0);
        let all = Assignment::from_z(vec![1; 6], &g);
        assert!(diff_in_means(&[0.0; 6], &all).is_err());
    }

    #[test]
    fn stratified_basic() {
        let g = g2x3();
        let z = Assignment::from_z(vec![1, 0, 1, 0, 1, 0], &g);
        assert_eq!(stratified_estimator(&[2.5; 6], &z, &g, None).unwrap(), 0.0);

        // cluster-based assignment -> degenerate stratum
        let z = Assignment::from_z(vec![1, 1, 1, 0, 0, 0], &g);
        assert!(matches!(
            stratified_estimator(&[0.0; 6], &z, &g, None),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn balanced_designs_cancel_constant_shifts() {
        // with n_t = n_c (and n_j = N_j - n_j), adding a constant to Y leaves
        // both estimators unchanged pointwise
        let g = g2x3();
        let z = Assignment::from_z(vec![1, 0, 1, 0, 1, 0], &g);
        // n_t = 3 = n_c; strata 2-1 and 1-2 though, so only test diff_in_means
        let y = [0.3, -1.2, 2.0, 0.7, 0.0, 5.0];
        let shifted: Vec<f64> = y.iter().map(|v| v + 11.0).collect();
        let d1 = diff_in_means(&y, &z).unwrap();
        let d2 = diff_in_means(&shifted, &z).unwrap();
        assert!((d1 - d2).abs() < 1e-12);

        // linearity: estimator(a*y) = a * estimator(y)
        let scaled: Vec<f64> = y.iter().map(|v| -2.0 * v).collect();
        assert!((diff_in_means(&scaled, &z).unwrap() + 2.0 * d1).abs() < 1e-12);
        let g4 = ClusteredGraph::new(vec![0, 0, 1, 1], &[(0, 2)]).unwrap();
        let z4 = Assignment::from_z(vec![1, 0, 0, 1], &g4);
        let y4 = [1.0, 4.0, -2.0, 0.5];
        let s1 = stratified_estimator(&y4, &z4, &g4, None).unwrap();
        let shifted4: Vec<f64> = y4.iter().map(|v| v + 3.0).collect();
        let s2 = stratified_estimator(&shifted4, &z4, &g4, None).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
    }
}
