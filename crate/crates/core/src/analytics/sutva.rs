//! Exact conditional and permutation-marginal analytics under SUTVA.

use serde::{Deserialize, Serialize};

use crate::designs::ProportionVector;
use crate::error::{Error, Result};
use crate::graph::ClusteredGraph;
use crate::stats::{csum, mean, sample_var, KahanSum, MomentSummary};

use super::Regime;

/// Weighted-outcome summary: `W_i = (n_t/N) Y_i(0) + (n_c/N) Y_i(1)`, its
/// cluster totals, the within-cluster variances `N_j S[W^{(j)}]` and the
/// between-cluster variance `M S[W^+]`.
#[derive(Clone, Debug)]
pub struct SutvaSummary {
    pub w: Vec<f64>,
    pub w_cluster: Vec<f64>,
    /// `N_j * S[W^{(j)}]` per cluster.
    pub within: Vec<f64>,
    /// `M * S[W^+]`.
    pub between: f64,
    pub n_t: usize,
}

pub fn sutva_summary(
    table: &crate::outcomes::PotentialTable,
    g: &ClusteredGraph,
    n_t: usize,
) -> Result<SutvaSummary> {
    let n = g.n();
    if table.n() != n {
        return Err(Error::InvalidInput("table/graph size mismatch".into()));
    }
    if n_t == 0 || n_t >= n {
        return Err(Error::InvalidInput(format!("n_t = {n_t} outside (0, {n})")));
    }
    let n_c = n - n_t;
    let w: Vec<f64> = (0..n)
        .map(|i| (n_t as f64 / n as f64) * table.y0[i] + (n_c as f64 / n as f64) * table.y1[i])
        .collect();
    let mut w_cluster = Vec::with_capacity(g.m());
    let mut within = Vec::with_capacity(g.m());
    for j in 0..g.m() {
        let vals: Vec<f64> = g.cluster_members(j).iter().map(|&i| w[i as usize]).collect();
        w_cluster.push(csum(vals.iter().copied()));
        within.push(vals.len() as f64 * sample_var(&vals)?);
    }
    let between = g.m() as f64 * sample_var(&w_cluster)?;
    Ok(SutvaSummary { w, w_cluster, within, between, n_t })
}

/// Conditional expectation of the difference-in-means estimator given the
/// proportion vector: `(1/n_t) sum pi_j Y^{(j)}(1) - (1/n_c) sum (1-pi_j)
/// Y^{(j)}(0)`. Exact for integer-consistent `pi` (matches enumeration).
pub fn sutva_cond_expectation(
    table: &crate::outcomes::PotentialTable,
    pi: &ProportionVector,
    g: &ClusteredGraph,
    n_t: usize,
) -> Result<f64> {
    let sizes = g.cluster_sizes();
    let counts = pi.counts_exact(&sizes)?;
    let total: usize = counts.iter().sum();
    if total != n_t {
        return Err(Error::Inconsistent(format!(
            "pi implies n_t = {total}, expected {n_t}"
        )));
    }
    if n_t == 0 || n_t >= g.n() {
        return Err(Error::Degenerate(format!("n_t = {n_t}")));
    }
    let n_c = (g.n() - n_t) as f64;
    let mut acc = KahanSum::new();
    for j in 0..g.m() {
        let p = counts[j] as f64 / sizes[j] as f64;
        let y1j = csum(g.cluster_members(j).iter().map(|&i| table.y1[i as usize]));
        let y0j = csum(g.cluster_members(j).iter().map(|&i| table.y0[i as usize]));
        acc.add(p * y1j / n_t as f64 - (1.0 - p) * y0j / n_c);
    }
    Ok(acc.value())
}

/// Marginal variance of the estimator over a permutation-based design:
/// `base + slope * mu2c`, exact for equal cluster sizes and
/// integer-consistent proportions.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SutvaMarginalVariance {
    /// `(n_t n_c)^{-1} sum_j N_j S[W^{(j)}]`.
    pub base: f64,
    /// `N^2/(n_t^2 n_c^2) (M S[W^+] - sum_j N_j S[W^{(j)}])`.
    pub slope: f64,
    pub value: f64,
}

pub fn sutva_marginal_variance(
    table: &crate::outcomes::PotentialTable,
    moments: &MomentSummary,
    g: &ClusteredGraph,
    n_t: usize,
) -> Result<SutvaMarginalVariance> {
    if !g.equal_sizes() {
        return Err(Error::Unsupported(
            "permutation marginal requires equal cluster sizes".into(),
        ));
    }
    let s = sutva_summary(table, g, n_t)?;
    let n = g.n() as f64;
    let (nt, nc) = (n_t as f64, (g.n() - n_t) as f64);
    let within_sum = csum(s.within.iter().copied());
    let base = within_sum / (nt * nc);
    let slope = n * n / (nt * nt * nc * nc) * (s.between - within_sum);
    Ok(SutvaMarginalVariance { base, slope, value: base + slope * moments.mu2c })
}

/// Which randomized saturation design minimizes the SUTVA variance:
/// stratified when `S[W^+] >= M^{-1} sum_j N_j S[W^{(j)}]`, cluster-based
/// when `<`, indifferent at equality.
pub fn sutva_regime(
    table: &crate::outcomes::PotentialTable,
    g: &ClusteredGraph,
    n_t: usize,
) -> Result<Regime> {
    if !g.equal_sizes() {
        return Err(Error::Unsupported(
            "variance regime requires equal cluster sizes".into(),
        ));
    }
    let s = sutva_summary(table, g, n_t)?;
    let within_sum = csum(s.within.iter().copied());
    // slope >= 0 (between >= within) <=> minimize mu2c <=> stratified
    let scale = 1.0 + s.between.abs().max(within_sum.abs());
    Ok(if (s.between - within_sum).abs() <= super::REGIME_TIE_TOL * scale {
        Regime::Indifferent
    } else if s.between > within_sum {
        Regime::Stratified
    } else {
        Regime::ClusterBased
    })
}

/// Quadratic form `scale * (pi' Q pi + c' pi)` over the mean-constrained box,
/// consumed by the deterministic-design optimizer.
#[derive(Clone, Debug)]
pub struct QuadraticForm {
    pub q: Vec<Vec<f64>>,
    pub linear: Vec<f64>,
    pub scale: f64,
}

impl QuadraticForm {
    pub fn m(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, pi: &[f64]) -> f64 {
        let mut quad = KahanSum::new();
        for (j, row) in self.q.iter().enumerate() {
            for (l, &qjl) in row.iter().enumerate() {
                quad.add(pi[j] * qjl * pi[l]);
            }
        }
        let lin = csum(self.linear.iter().zip(pi).map(|(&c, &p)| c * p));
        self.scale * (quad.value() + lin)
    }
}

/// Conditional mean-squared error of the difference-in-means estimator under
/// SUTVA, with its quadratic form for the optimizer.
#[derive(Clone, Debug)]
pub struct SutvaCondMse {
    pub bias: f64,
    pub variance: f64,
    pub value: f64,
    /// `Q = W~+ W~+' - diag(S+)`, `c = S+`, scaled by `N^2/(n_t^2 n_c^2)`;
    /// equals bias^2 + variance on the slice `sum_j pi_j N_j = n_t`.
    pub form: QuadraticForm,
}

pub fn sutva_cond_mse(
    table: &crate::outcomes::PotentialTable,
    pi: &ProportionVector,
    g: &ClusteredGraph,
    n_t: usize,
) -> Result<SutvaCondMse> {
    let s = sutva_summary(table, g, n_t)?;
    let sizes = g.cluster_sizes();
    let counts = pi.counts_exact(&sizes)?;
    let total: usize = counts.iter().sum();
    if total != n_t {
        return Err(Error::Inconsistent(format!(
            "pi implies n_t = {total}, expected {n_t}"
        )));
    }
    let n = g.n() as f64;
    let (nt, nc) = (n_t as f64, (g.n() - n_t) as f64);
    let scale = n * n / (nt * nt * nc * nc);

    let tte = table.tte();
    let expectation = sutva_cond_expectation(table, pi, g, n_t)?;
    let bias = expectation - tte;
    let mut var = KahanSum::new();
    for j in 0..g.m() {
        let p = counts[j] as f64 / sizes[j] as f64;
        var.add(p * (1.0 - p) * s.within[j]);
    }
    let variance = scale * var.value();

    let wbar = mean(&s.w);
    let wtilde: Vec<f64> = (0..g.m())
        .map(|j| s.w_cluster[j] - sizes[j] as f64 * wbar)
        .collect();
    let m = g.m();
    let mut q = vec![vec![0.0; m]; m];
    for j in 0..m {
        for l in 0..m {
            q[j][l] = wtilde[j] * wtilde[l];
        }
        q[j][j] -= s.within[j];
    }
    let form = QuadraticForm { q, linear: s.within.clone(), scale };

    Ok(SutvaCondMse { bias, variance, value: bias * bias + variance, form })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::ProportionVector;
    use crate::graph::ClusteredGraph;
    use crate::outcomes::PotentialTable;
    use crate::rng::Rng;

    fn equal_graph(m: usize, size: usize) -> ClusteredGraph {
        let mut membership = Vec::new();
        for j in 0..m {
            membership.extend(std::iter::repeat(j as u32).take(size));
        }
        ClusteredGraph::new(membership, &[]).unwrap()
    }

    fn random_table(n: usize, seed: u64) -> PotentialTable {
        let mut rng = Rng::seed_from_u64(seed);
        PotentialTable::new(
            (0..n).map(|_| rng.uniform(-1.0, 2.0)).collect(),
            (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn stratified_pi_gives_tte() {
        let g = equal_graph(3, 4);
        let t = random_table(12, 5);
        let pi = ProportionVector::new(vec![0.5; 3]).unwrap();
        let e = sutva_cond_expectation(&t, &pi, &g, 6).unwrap();
        assert!((e - t.tte()).abs() < 1e-12);
    }

    #[test]
    fn fully_treated_cluster_is_fine() {
        let g = equal_graph(2, 4);
        let t = random_table(8, 6);
        let pi = ProportionVector::new(vec![1.0, 0.25]).unwrap();
        let e = sutva_cond_expectation(&t, &pi, &g, 5).unwrap();
        assert!(e.is_finite());
    }

    #[test]
    fn non_integer_pi_rejected() {
        let g = equal_graph(2, 4);
        let t = random_table(8, 7);
        let pi = ProportionVector::new(vec![0.3, 0.7]).unwrap();
        assert!(matches!(
            sutva_cond_expectation(&t, &pi, &g, 4),
            Err(Error::Inconsistent(_))
        ));
    }

    #[test]
    fn marginal_variance_degenerate_cases() {
        let g = equal_graph(3, 4);
        let t = random_table(12, 8);
        let m0 = MomentSummary::from_parts(0.5, 0.0, 0.0, 0.0);
        let v = sutva_marginal_variance(&t, &m0, &g, 6).unwrap();
        assert!((v.value - v.base).abs() < 1e-15);

        // constant W across all units -> zero variance everywhere
        let n = 12;
        let t = PotentialTable::new(vec![2.0; n], vec![2.0; n]).unwrap();
        let m = MomentSummary::from_parts(0.5, 0.1, 0.0, 0.02);
        let v = sutva_marginal_variance(&t, &m, &g, 6).unwrap();
        assert!(v.value.abs() < 1e-15);
    }

    #[test]
    fn regime_cases() {
        let g = equal_graph(3, 2);
        // zero within-cluster variance, distinct totals -> stratified
        let t = PotentialTable::new(
            vec![1.0, 1.0, 2.0, 2.0, 5.0, 5.0],
            vec![0.0; 6],
        )
        .unwrap();
        assert_eq!(sutva_regime(&t, &g, 3).unwrap(), Regime::Stratified);

        // identical totals, positive within variance -> cluster-based
        let t = PotentialTable::new(
            vec![0.0, 2.0, -1.0, 3.0, 0.5, 1.5],
            vec![0.0; 6],
        )
        .unwrap();
        assert_eq!(sutva_regime(&t, &g, 3).unwrap(), Regime::ClusterBased);
    }

    #[test]
    fn mse_constant_w_is_zero() {
        let g = equal_graph(2, 4);
        // W constant: choose y1 = y0 = const
        let t = PotentialTable::new(vec![3.0; 8], vec![3.0; 8]).unwrap();
        let pi = ProportionVector::new(vec![0.25, 0.75]).unwrap();
        let mse = sutva_cond_mse(&t, &pi, &g, 4).unwrap();
        assert!(mse.value.abs() < 1e-14);
        assert!(mse.form.objective(pi.as_slice()).abs() < 1e-14);
    }

    #[test]
    fn mse_value_matches_quadratic_form_on_constraint() {
        let g = equal_graph(3, 4);
        let t = random_table(12, 9);
        for (pi, nt) in [
            (vec![0.25, 0.5, 0.75], 6),
            (vec![0.5, 0.5, 0.5], 6),
            (vec![0.0, 0.5, 1.0], 6),
            (vec![0.25, 0.25, 0.5], 4),
        ] {
            let pv = ProportionVector::new(pi).unwrap();
            let mse = sutva_cond_mse(&t, &pv, &g, nt).unwrap();
            assert!(
                (mse.value - mse.form.objective(pv.as_slice())).abs() < 1e-10,
                "value {} form {}",
                mse.value,
                mse.form.objective(pv.as_slice())
            );
        }
    }
}
