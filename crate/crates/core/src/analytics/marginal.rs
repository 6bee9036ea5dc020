//! Asymptotic marginal tier: moment-polynomial variance coefficients, the
//! marginal bias line, regime classifiers, and the exact permutation-marginal
//! oracle the asymptotic formulas are validated against.

use serde::{Deserialize, Serialize};

use crate::designs::ProportionVector;
use crate::error::{Error, Result};
use crate::graph::{cluster_edge_stats, gamma_prime, ClusteredGraph, GraphStats};
use crate::outcomes::{InterferenceTensors, OutcomeModel};
use crate::rng::Rng;
use crate::stats::{csum, mean, sample_cov, sample_var, KahanSum, MomentSummary};

use super::interference::{cond_expectation_counts, cond_variance_counts};
use super::{CoefficientTier, Regime, VarianceCoefficients, REGIME_TIE_TOL};

/// Marginal (permutation-averaged) expectation of the difference-in-means
/// estimator per the asymptotic bias line: `beta-bar + N^2/(n_t n_c)
/// (gamma' - (gamma-bar - gamma')/(M-1)) mu2c`; `bias` is against the TTE.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MarginalBias {
    pub expectation: f64,
    pub bias: f64,
    pub gamma_prime: f64,
}

pub fn marginal_bias_interference(
    model: &OutcomeModel,
    g: &ClusteredGraph,
    moments: &MomentSummary,
    n_t: usize,
) -> Result<MarginalBias> {
    if g.m() < 2 {
        return Err(Error::InvalidInput("bias line needs M >= 2".into()));
    }
    if !g.equal_sizes() {
        return Err(Error::Unsupported("bias line assumes equal cluster sizes".into()));
    }
    let n = g.n() as f64;
    let (nt, nc) = (n_t as f64, (g.n() - n_t) as f64);
    let gp = gamma_prime(g, &model.gamma);
    let gbar = mean(&model.gamma);
    let coeff = gp - (gbar - gp) / (g.m() as f64 - 1.0);
    let expectation = mean(&model.beta) + n * n / (nt * nc) * coeff * moments.mu2c;
    Ok(MarginalBias { expectation, bias: expectation - model.tte(), gamma_prime: gp })
}

/// Bias-minimizing design regime with the minimized bias magnitudes:
/// cluster-based designs reach `M/(M-1) |gamma-bar - gamma'|`, stratified
/// designs `|gamma-bar|`; the smaller wins.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BiasRegimeReport {
    pub regime: Regime,
    pub gamma_prime: f64,
    pub gamma_bar: f64,
    /// `|bias|` of the best cluster-based design.
    pub cluster_based_bias: f64,
    /// `|bias|` of the stratified design.
    pub stratified_bias: f64,
}

pub fn bias_regime(g: &ClusteredGraph, gamma: &[f64]) -> BiasRegimeReport {
    let m = g.m() as f64;
    let gp = gamma_prime(g, gamma);
    let gbar = mean(gamma);
    let cluster = (m / (m - 1.0) * (gbar - gp)).abs();
    let strat = gbar.abs();
    let scale = 1.0 + cluster.max(strat);
    let regime = if (cluster - strat).abs() <= REGIME_TIE_TOL * scale {
        Regime::Indifferent
    } else if cluster < strat {
        Regime::ClusterBased
    } else {
        Regime::Stratified
    };
    BiasRegimeReport {
        regime,
        gamma_prime: gp,
        gamma_bar: gbar,
        cluster_based_bias: cluster,
        stratified_bias: strat,
    }
}

/// Full-tier variance coefficients (no block-fixed assumption).
///
/// Two misprints in the published displays are corrected here, both verified
/// against the exact permutation-marginal oracle: the leading term of `V2`
/// carries a factor `M`, and the last term of `V1` enters with coefficient
/// `N (n_c - n_t) / (2 n_t^2 n_c^2)`.
pub fn variance_coefficients_full(
    tens: &InterferenceTensors,
    g: &ClusteredGraph,
) -> Result<VarianceCoefficients> {
    if !g.equal_sizes() {
        return Err(Error::Unsupported(
            "variance coefficients assume equal cluster sizes".into(),
        ));
    }
    if g.m() < 4 {
        return Err(Error::Unsupported(
            "fourth-order permutation moments need M >= 4".into(),
        ));
    }
    let m = g.m();
    let n = g.n() as f64;
    let nt = tens.n_t as f64;
    let nc = n - nt;
    let mu = nt / n;
    let c2 = n * n / (nt * nt * nc * nc);
    let sizes = g.cluster_sizes();

    let wt: Vec<f64> =
        (0..g.n()).map(|i| tens.w[i] + mu * tens.gamma[i]).collect();
    // within/between variances of W-tilde
    let mut a1 = KahanSum::new(); // sum_j N_j S[Wt^{(j)}]
    let mut wt_plus = Vec::with_capacity(m);
    // D-tilde columns: dl(i, l) - (gamma_i + h_i)/M
    let mut b1 = KahanSum::new(); // sum_{j,l} N_j S[Dt^{(l)(j)}]
    let mut b2 = KahanSum::new(); // sum_j N_j S[Dt^{(j)(j)}]
    let mut e1 = KahanSum::new(); // sum_j N_j S[Wt^{(j)}, Dt^{(j)(j)}]
    let mut c1 = KahanSum::new(); // sum_{j,l} N_j N_l Sx[D_jl]
    let mut c_diag = KahanSum::new(); // sum_j N_j^2 Sx[D_jj]
    let mut f1 = KahanSum::new(); // sum_j S[{D^{(jl)} : l != j}]
    let d_plus: Vec<f64> = (0..m).map(|j| tens.djl[j][j]).collect();

    for j in 0..m {
        let members = g.cluster_members(j);
        let nj = members.len() as f64;
        let wt_vals: Vec<f64> = members.iter().map(|&i| wt[i as usize]).collect();
        wt_plus.push(csum(wt_vals.iter().copied()));
        a1.add(nj * sample_var(&wt_vals)?);
        for l in 0..m {
            let dt_vals: Vec<f64> = members
                .iter()
                .map(|&i| {
                    let i = i as usize;
                    tens.dl_at(i, l) - (tens.gamma[i] + tens.h[i]) / m as f64
                })
                .collect();
            let s = sample_var(&dt_vals)?;
            b1.add(nj * s);
            if l == j {
                b2.add(nj * s);
                e1.add(nj * sample_cov(&wt_vals, &dt_vals)?);
            }
            c1.add(nj * sizes[l] as f64 * tens.s_cross(j, l, &sizes));
            if l == j {
                c_diag.add(nj * nj * tens.s_cross(j, j, &sizes));
            }
        }
        let offdiag: Vec<f64> =
            (0..m).filter(|&l| l != j).map(|l| tens.djl[j][l]).collect();
        f1.add(sample_var(&offdiag)?);
    }
    let a1 = a1.value();
    let a2 = m as f64 * sample_var(&wt_plus)?;
    let (b1, b2, e1) = (b1.value(), b2.value(), e1.value());
    let (c1, c_diag, f1) = (c1.value(), c_diag.value(), f1.value());
    let g1 = m as f64 * sample_var(&d_plus)?;
    let g2 = m as f64 * sample_cov(&wt_plus, &d_plus)?;

    let v0 = a1 / (nt * nc) + c1 / (2.0 * n * n);
    let v1 = c2 * a2 - c2 * a1 + b1 / (nt * nc) - c1 / (nt * nc)
        + 2.0 * n * (nc - nt) / (nt * nt * nc * nc) * e1
        + n * (nc - nt) / (2.0 * nt * nt * nc * nc) * c_diag;
    let v2 = c2 * m as f64 / 2.0 * f1 - c2 * b1 + c2 / 2.0 * c1;
    let v3 = c2 * g2 - 2.0 * c2 * e1 + n * (nc - nt) / (nt * nt * nc * nc) * (b2 - c_diag);
    let v4 = c2 * g1 / 4.0 - c2 * b2 + c2 / 2.0 * c_diag;

    Ok(VarianceCoefficients {
        v: [v0, v1, v2, v3, v4],
        tier: CoefficientTier::Full,
        n: g.n(),
        m,
        n_t: tens.n_t,
    })
}

/// Simplified-tier coefficients under the block-fixed interference
/// assumption, in terms of the row-normalized proxy edge probabilities.
/// The leading term of `V2` carries the corrected factor `M` (see
/// [`variance_coefficients_full`]).
pub fn variance_coefficients_simplified(
    model: &OutcomeModel,
    g: &ClusteredGraph,
    stats: &GraphStats,
    n_t: usize,
) -> Result<VarianceCoefficients> {
    if !g.equal_sizes() {
        return Err(Error::Unsupported(
            "variance coefficients assume equal cluster sizes".into(),
        ));
    }
    let m = g.m();
    if m < 3 {
        return Err(Error::Unsupported("simplified tier needs M >= 3".into()));
    }
    // block-fixed check
    for j in 0..m {
        let members = g.cluster_members(j);
        let first = model.gamma[members[0] as usize];
        for &i in members {
            if (model.gamma[i as usize] - first).abs() > 1e-9 {
                return Err(Error::AssumptionViolated(format!(
                    "gamma varies within cluster {j}: {} vs {first}",
                    model.gamma[i as usize]
                )));
            }
        }
    }
    if stats.q_defined.iter().any(|&d| !d) {
        return Err(Error::Unsupported(
            "simplified tier needs every cluster to have at least one edge".into(),
        ));
    }
    let n = g.n() as f64;
    let (nt, nc) = (n_t as f64, (g.n() - n_t) as f64);
    let ntil = 2.0 * nt * nc / n;
    let sizes = g.cluster_sizes();

    let mut within = Vec::with_capacity(m); // S[alpha^{(j)} + (nc/N) beta^{(j)}]
    let mut totals = Vec::with_capacity(m); // alpha+ + (nc/N) beta+ + (nt/N) gamma+
    let mut gplus = Vec::with_capacity(m);
    for j in 0..m {
        let members = g.cluster_members(j);
        let w_vals: Vec<f64> = members
            .iter()
            .map(|&i| model.alpha[i as usize] + nc / n * model.beta[i as usize])
            .collect();
        within.push(sample_var(&w_vals)?);
        let gj = csum(members.iter().map(|&i| model.gamma[i as usize]));
        gplus.push(gj);
        totals.push(csum(w_vals.iter().copied()) + nt / n * gj);
    }
    let gtilde: Vec<f64> = (0..m).map(|j| stats.q[j][j] * gplus[j]).collect();

    let v0 = 2.0 / ntil * csum((0..m).map(|j| sizes[j] as f64 / n * within[j]));
    let within_nj = csum((0..m).map(|j| sizes[j] as f64 * within[j]));
    let v1 = 4.0 * m as f64 / (ntil * ntil)
        * (sample_var(&totals)? - within_nj / m as f64);
    let mut v2_acc = KahanSum::new();
    for j in 0..m {
        let offdiag: Vec<f64> = (0..m)
            .filter(|&l| l != j)
            .map(|l| stats.q[j][l] * gplus[j] + stats.q[l][j] * gplus[l])
            .collect();
        v2_acc.add(sample_var(&offdiag)?);
    }
    let v2 = 2.0 * m as f64 / (ntil * ntil) * v2_acc.value();
    let v3 = 8.0 * m as f64 / (ntil * ntil) * sample_cov(&totals, &gtilde)?;
    let v4 = 4.0 * m as f64 / (ntil * ntil) * sample_var(&gtilde)?;

    Ok(VarianceCoefficients {
        v: [v0, v1, v2, v3, v4],
        tier: CoefficientTier::SimplifiedBlockFixed,
        n: g.n(),
        m,
        n_t,
    })
}

/// How to average the exact conditional forms over cluster permutations.
#[derive(Clone, Copy, Debug)]
pub enum PermutationAverage {
    /// All distinct arrangements of the proportion vector (feasible for
    /// small M).
    Exhaustive,
    /// Uniformly sampled permutations with reported standard errors.
    MonteCarlo { permutations: usize, seed: u64 },
}

/// Exact marginal mean/variance of the difference-in-means estimator over
/// the permutation design, obtained by averaging the exact conditional
/// forms.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExactMarginal {
    pub mean: f64,
    pub variance: f64,
    /// Standard errors of the estimates (None for exhaustive averaging).
    pub mean_se: Option<f64>,
    pub variance_se: Option<f64>,
    pub permutations: u128,
}

/// Exact marginal mean over all `M!` permutations in closed form: the
/// conditional expectation is quadratic in the proportions, so only the
/// first two symmetric power sums of `pi` enter.
pub fn exact_marginal_mean_interference(
    tens: &InterferenceTensors,
    g: &ClusteredGraph,
    pi: &ProportionVector,
) -> Result<f64> {
    if !g.equal_sizes() {
        return Err(Error::Unsupported(
            "permutation averaging requires equal cluster sizes".into(),
        ));
    }
    let sizes = g.cluster_sizes();
    // every arrangement must be integer-consistent; equal sizes reduce this
    // to a single check
    pi.counts_exact(&sizes)?;
    let m = g.m();
    let mf = m as f64;
    let p = pi.as_slice();
    let s1 = csum(p.iter().copied());
    let s2 = csum(p.iter().map(|&x| x * x));
    let e_p = s1 / mf;
    let e_pp_same = s2 / mf;
    let e_pp_diff = (s1 * s1 - s2) / (mf * (mf - 1.0));

    let n = g.n() as f64;
    let nt = tens.n_t as f64;
    let nc = n - nt;
    let u_total = csum(tens.u.iter().copied());
    let mut t_off = KahanSum::new();
    let mut t_diag = KahanSum::new();
    let mut t_diag_corr = KahanSum::new();
    for j in 0..m {
        for l in 0..m {
            if l == j {
                t_diag.add(tens.tjl[j][j]);
                t_diag_corr.add(tens.tjl[j][j] / (sizes[j] as f64 - 1.0));
            } else {
                t_off.add(tens.tjl[j][l]);
            }
        }
    }
    let value = -n * tens.alpha_bar / nc
        + n / (nt * nc)
            * (u_total * e_p + t_off.value() * e_pp_diff + t_diag.value() * e_pp_same
                - (e_p - e_pp_same) * t_diag_corr.value());
    Ok(value)
}

/// Exact marginal moments over the permutation design by averaging the exact
/// conditional expectation and variance across arrangements.
pub fn exact_marginal_interference(
    tens: &InterferenceTensors,
    g: &ClusteredGraph,
    pi: &ProportionVector,
    avg: PermutationAverage,
) -> Result<ExactMarginal> {
    if !g.equal_sizes() {
        return Err(Error::Unsupported(
            "permutation averaging requires equal cluster sizes".into(),
        ));
    }
    let sizes = g.cluster_sizes();
    let base_counts = pi.counts_exact(&sizes)?;
    match avg {
        PermutationAverage::Exhaustive => {
            let mut counts = base_counts;
            counts.sort_unstable();
            let mut ce = Vec::new();
            let mut cv = Vec::new();
            loop {
                ce.push(cond_expectation_counts(tens, g, &counts));
                cv.push(cond_variance_counts(tens, g, &counts)?);
                if !next_permutation(&mut counts) {
                    break;
                }
            }
            let k = ce.len() as f64;
            let mean_e = csum(ce.iter().copied()) / k;
            let mean_v = csum(cv.iter().copied()) / k;
            let var_e = csum(ce.iter().map(|&x| (x - mean_e) * (x - mean_e))) / k;
            Ok(ExactMarginal {
                mean: mean_e,
                variance: mean_v + var_e,
                mean_se: None,
                variance_se: None,
                permutations: ce.len() as u128,
            })
        }
        PermutationAverage::MonteCarlo { permutations, seed } => {
            if permutations < 2 {
                return Err(Error::InvalidInput("need at least 2 permutations".into()));
            }
            use rayon::prelude::*;
            let samples: Vec<(f64, f64)> = (0..permutations)
                .into_par_iter()
                .map(|r| {
                    let mut counts = base_counts.clone();
                    let mut rng = Rng::keyed(&[seed, r as u64, 2, 0]);
                    rng.shuffle(&mut counts);
                    let e = cond_expectation_counts(tens, g, &counts);
                    let v = cond_variance_counts(tens, g, &counts)
                        .expect("sizes validated above");
                    (e, v)
                })
                .collect();
            let k = samples.len() as f64;
            let mean_e = csum(samples.iter().map(|s| s.0)) / k;
            let mean_v = csum(samples.iter().map(|s| s.1)) / k;
            // sample variance of the conditional expectations
            let var_e = csum(samples.iter().map(|s| (s.0 - mean_e).powi(2))) / (k - 1.0);
            let var_v = csum(samples.iter().map(|s| (s.1 - mean_v).powi(2))) / (k - 1.0);
            let mu4_e = csum(samples.iter().map(|s| (s.0 - mean_e).powi(4))) / k;
            // se of a sample variance: ((mu4 - sigma^4 (k-3)/(k-1)) / k)^(1/2)
            let se_var_e =
                ((mu4_e - var_e * var_e * (k - 3.0) / (k - 1.0)).max(0.0) / k).sqrt();
            let se_mean_v = (var_v / k).sqrt();
            Ok(ExactMarginal {
                mean: mean_e,
                variance: mean_v + var_e,
                mean_se: Some((var_e / k).sqrt()),
                variance_se: Some((se_var_e * se_var_e + se_mean_v * se_mean_v).sqrt()),
                permutations: permutations as u128,
            })
        }
    }
}

/// Lexicographic next permutation of a multiset; false when exhausted.
pub(crate) fn next_permutation<T: Ord>(xs: &mut [T]) -> bool {
    if xs.len() < 2 {
        return false;
    }
    let mut i = xs.len() - 1;
    while i > 0 && xs[i - 1] >= xs[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = xs.len() - 1;
    while xs[j] <= xs[i - 1] {
        j -= 1;
    }
    xs.swap(i - 1, j);
    xs[i..].reverse();
    true
}

/// Number of distinct arrangements of a count vector: `M!` divided by the
/// factorials of the value multiplicities.
pub(crate) fn distinct_permutation_count(counts: &[usize]) -> u128 {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let mut total: u128 = 1;
    for i in 2..=sorted.len() {
        total = total.saturating_mul(i as u128);
    }
    let mut div = 1u128;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        for t in 2..=(j - i) as u128 {
            div = div.saturating_mul(t);
        }
        i = j;
    }
    total / div
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{sbm_generate, BlockMatrix};
    use crate::outcomes::InterferenceTensors;

    #[test]
    fn next_permutation_multiset() {
        let mut xs = vec![1, 1, 2];
        let mut seen = vec![xs.clone()];
        while next_permutation(&mut xs) {
            seen.push(xs.clone());
        }
        assert_eq!(seen, vec![vec![1, 1, 2], vec![1, 2, 1], vec![2, 1, 1]]);
        assert_eq!(distinct_permutation_count(&[1, 1, 2]), 3);
        assert_eq!(distinct_permutation_count(&[1, 2, 3, 4]), 24);
        assert_eq!(distinct_permutation_count(&[2, 2, 2]), 1);
    }

    #[test]
    fn bias_regime_cases() {
        // perfect clustering: gamma' = gamma-bar -> cluster-based, bias 0
        let g = crate::graph::ClusteredGraph::new(
            vec![0, 0, 0, 1, 1, 1],
            &[(0, 1), (1, 2), (3, 4)],
        )
        .unwrap();
        let rep = bias_regime(&g, &[1.0; 6]);
        assert_eq!(rep.regime, Regime::ClusterBased);
        assert!(rep.cluster_based_bias.abs() < 1e-12);

        // no intra edges: gamma' = 0 -> stratified with bias gamma-bar
        let g = crate::graph::ClusteredGraph::new(
            vec![0, 0, 1, 1],
            &[(0, 2), (1, 3), (0, 3)],
        )
        .unwrap();
        let rep = bias_regime(&g, &[2.0; 4]);
        assert_eq!(rep.regime, Regime::Stratified);
        assert!((rep.stratified_bias - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_zero_coefficients_match_sutva() {
        let a = BlockMatrix::from_fn(4, |j, l| if j == l { 0.9 } else { 0.3 }).unwrap();
        let g = sbm_generate(&a, &[6, 6, 6, 6], 21).unwrap();
        let mut rng = Rng::seed_from_u64(3);
        let model = OutcomeModel::new(
            (0..24).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            (0..24).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            vec![0.0; 24],
        )
        .unwrap();
        let tens = InterferenceTensors::new(&model, &g, 12).unwrap();
        let c = variance_coefficients_full(&tens, &g).unwrap();
        assert!(c.v[2].abs() < 1e-14);
        assert!(c.v[3].abs() < 1e-14);
        assert!(c.v[4].abs() < 1e-14);
        // V0/V1 reduce to the SUTVA base/slope
        let table = crate::outcomes::sutva_table(&model).unwrap();
        let m0 = MomentSummary::from_parts(0.5, 0.0, 0.0, 0.0);
        let sv = crate::analytics::sutva_marginal_variance(&table, &m0, &g, 12).unwrap();
        assert!((c.v[0] - sv.base).abs() < 1e-12 * (1.0 + sv.base.abs()));
        assert!((c.v[1] - sv.slope).abs() < 1e-12 * (1.0 + sv.slope.abs()));
    }

    #[test]
    fn simplified_tier_guards() {
        let a = BlockMatrix::from_fn(3, |_, _| 0.5).unwrap();
        let g = sbm_generate(&a, &[5, 5, 5], 9).unwrap();
        let stats = cluster_edge_stats(&g);
        let model = OutcomeModel::new(
            vec![0.0; 15],
            vec![1.0; 15],
            (0..15).map(|i| (i % 5) as f64).collect(), // varies within clusters
        )
        .unwrap();
        assert!(matches!(
            variance_coefficients_simplified(&model, &g, &stats, 7),
            Err(Error::AssumptionViolated(_))
        ));
    }

    #[test]
    fn simplified_v3_v4_vanish_for_constant_gamma_totals() {
        let a = BlockMatrix::from_fn(3, |j, l| if j == l { 1.0 } else { 0.4 }).unwrap();
        let g = sbm_generate(&a, &[6, 6, 6], 17).unwrap();
        let stats = cluster_edge_stats(&g);
        // gamma constant across clusters AND equal q_jj needed for gtilde
        // to be constant; use a fully symmetric graph law and constant gamma
        let model =
            OutcomeModel::new(vec![0.0; 18], vec![1.0; 18], vec![2.0; 18]).unwrap();
        let c = variance_coefficients_simplified(&model, &g, &stats, 9).unwrap();
        // gtilde_j = q_jj * gamma^{(j)}: gamma totals equal, q_jj close but not
        // equal across clusters, so V4 is small but nonzero in general; with a
        // perfectly clustered graph it is exactly zero.
        let gp = crate::graph::ClusteredGraph::new(
            vec![0, 0, 0, 1, 1, 1, 2, 2, 2],
            &[(0, 1), (1, 2), (3, 4), (4, 5), (6, 7), (7, 8)],
        )
        .unwrap();
        let statsp = cluster_edge_stats(&gp);
        let modelp =
            OutcomeModel::new(vec![0.0; 9], vec![1.0; 9], vec![2.0; 9]).unwrap();
        let cp = variance_coefficients_simplified(&modelp, &gp, &statsp, 3).unwrap();
        assert!(cp.v[3].abs() < 1e-14);
        assert!(cp.v[4].abs() < 1e-14);
        // perfect clustering kills V2 entirely
        assert!(cp.v[2].abs() < 1e-14);
        let _ = c;
    }
}
