//! Exact conditional expectation, variance and MSE of the difference-in-means
//! estimator under the linear interference model.
//!
//! The estimator is the linear-plus-quadratic form
//! `tau = -N a-bar / n_c + N/(n_t n_c) [sum_i U_i Z_i + sum_{i,k} T_ik Z_i Z_k]`,
//! so conditional moments reduce to hypergeometric moments of the
//! within-cluster sampling. The variance decomposes the covariance of the
//! quadratic form over all index-coincidence patterns; every term below is
//! exact for integer-consistent proportions (no `O(1/N_j)` residue).

use crate::designs::ProportionVector;
use crate::error::{Error, Result};
use crate::graph::ClusteredGraph;
use crate::outcomes::InterferenceTensors;
use crate::stats::KahanSum;

fn realized_counts(
    tens: &InterferenceTensors,
    pi: &ProportionVector,
    g: &ClusteredGraph,
) -> Result<Vec<usize>> {
    let sizes = g.cluster_sizes();
    let counts = pi.counts_exact(&sizes)?;
    let total: usize = counts.iter().sum();
    if total != tens.n_t {
        return Err(Error::Inconsistent(format!(
            "pi implies n_t = {total} but tensors were built for n_t = {}",
            tens.n_t
        )));
    }
    Ok(counts)
}

/// Exact conditional expectation given per-cluster treated counts.
pub(crate) fn cond_expectation_counts(
    tens: &InterferenceTensors,
    g: &ClusteredGraph,
    counts: &[usize],
) -> f64 {
    let sizes = g.cluster_sizes();
    let m = g.m();
    let n = g.n() as f64;
    let nt = tens.n_t as f64;
    let nc = n - nt;

    let p: Vec<f64> = counts.iter().zip(&sizes).map(|(&c, &s)| c as f64 / s as f64).collect();
    let mut lin = KahanSum::new();
    for j in 0..m {
        let uj: f64 = g.cluster_members(j).iter().map(|&i| tens.u[i as usize]).sum();
        lin.add(uj * p[j]);
    }
    let mut quad = KahanSum::new();
    for j in 0..m {
        for l in 0..m {
            quad.add(p[j] * p[l] * tens.tjl[j][l]);
        }
        quad.add(-p[j] * (1.0 - p[j]) / (sizes[j] as f64 - 1.0) * tens.tjl[j][j]);
    }
    -n * tens.alpha_bar / nc + n / (nt * nc) * (lin.value() + quad.value())
}

/// Exact conditional expectation of the difference-in-means estimator given
/// an integer-consistent proportion vector. Matches enumeration to
/// floating-point tolerance.
pub fn cond_expectation_interference(
    tens: &InterferenceTensors,
    pi: &ProportionVector,
    g: &ClusteredGraph,
) -> Result<f64> {
    let counts = realized_counts(tens, pi, g)?;
    Ok(cond_expectation_counts(tens, g, &counts))
}

/// Hypergeometric product moments `P_s = E[Z_{i_1}..Z_{i_s}]` for `s`
/// distinct units of one cluster with `n` of `a` treated.
#[inline]
fn falling_moments(n: usize, a: usize) -> (f64, f64, f64, f64) {
    let (nf, af) = (n as f64, a as f64);
    let p1 = nf / af;
    let p2 = nf * (nf - 1.0) / (af * (af - 1.0));
    let p3 = if a >= 3 {
        nf * (nf - 1.0) * (nf - 2.0) / (af * (af - 1.0) * (af - 2.0))
    } else {
        0.0
    };
    // for a = 3 there are no 4-distinct-unit tuples and the aggregate this
    // moment multiplies vanishes identically
    let p4 = if a >= 4 {
        nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0)
            / (af * (af - 1.0) * (af - 2.0) * (af - 3.0))
    } else {
        0.0
    };
    (p1, p2, p3, p4)
}

/// Exact conditional variance given per-cluster treated counts.
///
/// `S1` is the linear-term variance, `S2` the linear-quadratic covariance,
/// and `S3` sums the ten index-coincidence cases of the quadratic-quadratic
/// covariance.
pub(crate) fn cond_variance_counts(
    tens: &InterferenceTensors,
    g: &ClusteredGraph,
    counts: &[usize],
) -> Result<f64> {
    let sizes = g.cluster_sizes();
    if let Some(j) = sizes.iter().position(|&s| s < 3) {
        return Err(Error::Unsupported(format!(
            "cluster {j} has {} units; the closed-form conditional variance needs N_j >= 3 \
             (fall back to enumeration)",
            sizes[j]
        )));
    }
    let m = g.m();
    let n = g.n() as f64;
    let nt = tens.n_t as f64;
    let nc = n - nt;

    let p: Vec<f64> = counts.iter().zip(&sizes).map(|(&c, &s)| c as f64 / s as f64).collect();
    let p_sq: Vec<f64> = p.iter().map(|&x| x * x).collect();
    let gvec = tens.g_vector(&p);
    // row-wise sum_l p_l^2 Dl2[i,l]
    let wrow: Vec<f64> = (0..tens.n)
        .map(|i| {
            let row = &tens.dl2[i * m..(i + 1) * m];
            row.iter().zip(&p_sq).map(|(&d, &q)| d * q).sum()
        })
        .collect();

    let mut s1 = KahanSum::new();
    let mut s2 = KahanSum::new();
    let mut s3 = KahanSum::new();

    for j in 0..m {
        let a = sizes[j] as f64;
        let members = g.cluster_members(j);
        let (_, p2, p3, p4) = falling_moments(counts[j], sizes[j]);
        let pj = p[j];
        let pq = pj * (1.0 - pj);

        // per-cluster sums over members
        let mut su = KahanSum::new();
        let mut suu = KahanSum::new();
        let mut sg = KahanSum::new();
        let mut sgg = KahanSum::new();
        let mut sgu = KahanSum::new();
        let mut sd = KahanSum::new();
        let mut sdd = KahanSum::new();
        let mut sdu = KahanSum::new();
        let mut sgd = KahanSum::new();
        let mut s_dg_centered = KahanSum::new(); // sum D_i^{(j)} (G_i - pj D_i^{(j)})
        let mut s_f = KahanSum::new(); // sum (G_i - pj Dl_ij)^2 - (wrow_i - pj^2 Dl2_ij)
        for &iu in members {
            let i = iu as usize;
            let (u, gv, d) = (tens.u[i], gvec[i], tens.dl_at(i, j));
            su.add(u);
            suu.add(u * u);
            sg.add(gv);
            sgg.add(gv * gv);
            sgu.add(gv * u);
            sd.add(d);
            sdd.add(d * d);
            sdu.add(d * u);
            sgd.add(gv * d);
            s_dg_centered.add(d * (gv - pj * d));
            let gi = gv - pj * d;
            s_f.add(gi * gi - (wrow[i] - p_sq[j] * tens.dl2[i * m + j]));
        }
        let (su, suu) = (su.value(), suu.value());
        let (sg, sgg, sgu) = (sg.value(), sgg.value(), sgu.value());
        let (sd, sdd, sdu, sgd) = (sd.value(), sdd.value(), sdu.value(), sgd.value());

        // sample variances/covariances via sums: a*S[x,y] = sxy - sx*sy/a,
        // all scaled by a/(a-1)
        let cvar = |sxy: f64, sx: f64, sy: f64| (sxy - sx * sy / a) * a / (a - 1.0);

        // S1: N_j p(1-p) S[U]
        s1.add(pq * cvar(suu, su, su));
        // S2: 2 p(1-p) N_j (S[G,U] + (2p-1)/(a-2) S[D^{(j)(j)}, U])
        s2.add(2.0 * pq * (cvar(sgu, sg, su) + (2.0 * pj - 1.0) / (a - 2.0) * cvar(sdu, sd, su)));

        // S3 within-cluster cases
        let e2jj = tens.e2[j][j];
        let rsjj = tens.rs[j][j];
        let djljj = tens.djl[j][j];
        // 3a: both pairs identical (same unordered edge)
        s3.add(2.0 * p2 * (1.0 - p2) * e2jj);
        // 3c: common head, two distinct tails in-cluster
        s3.add(4.0 * (p3 - p2 * p2) * (rsjj - e2jj));
        // 3d: common head, one tail in-cluster one outside
        s3.add(8.0 * (1.0 - pj) * p2 * s_dg_centered.value());
        // 3f: common head, both tails outside (distinct clusters)
        s3.add(4.0 * pq * s_f.value());
        // 3g: four distinct units in-cluster
        s3.add((p4 - p2 * p2) * (djljj * djljj - 4.0 * rsjj + 2.0 * e2jj));
        // 3h: three distinct in-cluster, one outside
        let inner_h = (sg * sd - sgd) - pj * (sd * sd - sdd) - (sgd - pj * sdd);
        s3.add(4.0 * (p3 - pj * p2) * inner_h);
        // 3j: two distinct in-cluster, tails in two other clusters;
        // sum_l p_l^2 ((sum_{i in Cj} Dl_il)^2 - sum_{i in Cj} Dl_il^2)
        let t_ll = {
            let mut acc = KahanSum::new();
            for l in 0..m {
                acc.add(p_sq[l] * (tens.djl[j][l] * tens.djl[j][l] - tens.rs[j][l]));
            }
            acc.value()
        };
        let inner_j = (sg * sg - sgg) - 2.0 * pj * (sg * sd - sgd)
            + 2.0 * p_sq[j] * (sd * sd - sdd)
            - t_ll;
        s3.add(4.0 * (p2 - p_sq[j]) * inner_j);

        // cross-cluster cases
        for l in 0..m {
            if l == j {
                continue;
            }
            let (_, p2l, _, _) = falling_moments(counts[l], sizes[l]);
            let pl = p[l];
            // 3b: identical cross pair
            s3.add(2.0 * pj * pl * (1.0 - pj * pl) * tens.e2[j][l]);
            // 3e: common head in C_j, two distinct tails in C_l
            s3.add(4.0 * (pj * p2l - p_sq[j] * p_sq[l]) * (tens.rs[j][l] - tens.e2[j][l]));
            // 3i: two distinct in C_j, two distinct in C_l
            s3.add(
                2.0 * (p2 * p2l - p_sq[j] * p_sq[l])
                    * (tens.djl[j][l] * tens.djl[j][l] - tens.rs[j][l] - tens.rs[l][j]
                        + tens.e2[j][l]),
            );
        }
    }

    let scale = n / (nt * nc);
    Ok((scale * scale * (s1.value() + s2.value() + s3.value() / 4.0)).max(0.0))
}

/// Exact conditional variance of the difference-in-means estimator; `>= 0`,
/// matches enumeration to floating-point tolerance. Needs every `N_j >= 3`.
pub fn cond_variance_interference(
    tens: &InterferenceTensors,
    pi: &ProportionVector,
    g: &ClusteredGraph,
) -> Result<f64> {
    let counts = realized_counts(tens, pi, g)?;
    cond_variance_counts(tens, g, &counts)
}

/// The explicit conditional-MSE objective for perfectly clustered graphs
/// (no cut edges), up to its additive constant: the squared bias proxy is
/// quadratic per cluster and the variance term collects per-cluster sample
/// variances of `W - mu H + pi_j (gamma + H)`.
#[derive(Clone, Debug)]
pub struct PerfectClusteringMse {
    /// `4 / ntilde^2 = N^2 / (n_t^2 n_c^2)`.
    pub scale: f64,
    /// `gamma^{(j)}` (coefficient of `pi_j^2` in the bias proxy).
    pub gamma_cluster: Vec<f64>,
    /// `W^{(j)} - N_j W-bar - (n_t/N) gamma^{(j)}`.
    pub bias_linear: Vec<f64>,
    /// `-(n_t n_c / N) gamma-bar`.
    pub bias_constant: f64,
    /// Per-cluster `S[A^{(j)}]`, `S[A^{(j)}, B^{(j)}]`, `S[B^{(j)}]` with
    /// `A = W - mu H` and `B = gamma + H`.
    pub s_a: Vec<f64>,
    pub s_ab: Vec<f64>,
    pub s_b: Vec<f64>,
    pub sizes: Vec<usize>,
}

impl PerfectClusteringMse {
    pub fn m(&self) -> usize {
        self.sizes.len()
    }

    pub fn bias_proxy(&self, pi: &[f64]) -> f64 {
        let mut acc = KahanSum::new();
        for j in 0..self.m() {
            acc.add(pi[j] * pi[j] * self.gamma_cluster[j] + pi[j] * self.bias_linear[j]);
        }
        acc.value() + self.bias_constant
    }

    pub fn variance_term(&self, pi: &[f64]) -> f64 {
        let mut acc = KahanSum::new();
        for j in 0..self.m() {
            let p = pi[j];
            let s = self.s_a[j] + 2.0 * p * self.s_ab[j] + p * p * self.s_b[j];
            acc.add(self.sizes[j] as f64 * p * (1.0 - p) * s);
        }
        acc.value()
    }

    /// Objective value up to the additive constant `f_0`.
    pub fn objective(&self, pi: &[f64]) -> f64 {
        let b = self.bias_proxy(pi);
        self.scale * (b * b + self.variance_term(pi))
    }
}

/// Conditional MSE: exact squared bias plus exact conditional variance.
#[derive(Clone, Debug)]
pub struct CondMse {
    pub bias: f64,
    pub variance: f64,
    pub value: f64,
    /// Present when the graph has no cut edges.
    pub perfect_clustering_form: Option<PerfectClusteringMse>,
}

/// Build the perfect-clustering objective (valid only when the graph has no
/// cut edges).
pub fn perfect_clustering_mse_form(
    tens: &InterferenceTensors,
    g: &ClusteredGraph,
) -> Result<PerfectClusteringMse> {
    let m = g.m();
    for j in 0..m {
        for l in 0..m {
            if j != l && tens.djl[j][l] != 0.0 {
                return Err(Error::Unsupported(
                    "perfect-clustering MSE form needs a graph with no cut edges".into(),
                ));
            }
        }
    }
    let n = g.n() as f64;
    let nt = tens.n_t as f64;
    let nc = n - nt;
    let mu = nt / n;
    let wbar = crate::stats::mean(&tens.w);
    let sizes = g.cluster_sizes();
    let mut gamma_cluster = Vec::with_capacity(m);
    let mut bias_linear = Vec::with_capacity(m);
    let mut s_a = Vec::with_capacity(m);
    let mut s_ab = Vec::with_capacity(m);
    let mut s_b = Vec::with_capacity(m);
    for j in 0..m {
        let members = g.cluster_members(j);
        let gj: f64 = members.iter().map(|&i| tens.gamma[i as usize]).sum();
        let wj: f64 = members.iter().map(|&i| tens.w[i as usize]).sum();
        gamma_cluster.push(gj);
        bias_linear.push(wj - sizes[j] as f64 * wbar - mu * gj);
        let a_vals: Vec<f64> = members
            .iter()
            .map(|&i| tens.w[i as usize] - mu * tens.h[i as usize])
            .collect();
        let b_vals: Vec<f64> = members
            .iter()
            .map(|&i| tens.gamma[i as usize] + tens.h[i as usize])
            .collect();
        s_a.push(crate::stats::sample_cov(&a_vals, &a_vals)?);
        s_ab.push(crate::stats::sample_cov(&a_vals, &b_vals)?);
        s_b.push(crate::stats::sample_cov(&b_vals, &b_vals)?);
    }
    Ok(PerfectClusteringMse {
        scale: n * n / (nt * nt * nc * nc),
        gamma_cluster,
        bias_linear,
        bias_constant: -nt * nc / n * tens.gamma_bar,
        s_a,
        s_ab,
        s_b,
        sizes,
    })
}

/// Conditional mean-squared error against the total treatment effect:
/// `(E[tau|pi] - TTE)^2 + Var[tau|pi]`, both exact. For perfectly clustered
/// graphs the explicit quadratic objective used by the deterministic-design
/// optimizer is attached.
pub fn cond_mse_interference(
    tens: &InterferenceTensors,
    pi: &ProportionVector,
    g: &ClusteredGraph,
) -> Result<CondMse> {
    let tte = tens.beta_bar + tens.gamma_bar;
    let expectation = cond_expectation_interference(tens, pi, g)?;
    let variance = cond_variance_interference(tens, pi, g)?;
    let bias = expectation - tte;
    let perfect = perfect_clustering_mse_form(tens, g).ok();
    Ok(CondMse {
        bias,
        variance,
        value: bias * bias + variance,
        perfect_clustering_form: perfect,
    })
}
