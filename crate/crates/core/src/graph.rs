//! Clustered interference graph: construction, stochastic-block-model
//! generation, and cluster-level edge statistics.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::stats::{csum, KahanSum};

/// Undirected simple graph with a total partition of the units into clusters.
///
/// Immutable after construction; all statistics are read-only.
#[derive(Clone, Debug)]
pub struct ClusteredGraph {
    membership: Vec<u32>,
    neighbors: Vec<Vec<u32>>,
    clusters: Vec<Vec<u32>>,
}

impl ClusteredGraph {
    /// Build from a membership vector (cluster ids must cover `0..M` with no
    /// gaps) and an edge list. Self-loops are rejected, duplicate edges
    /// collapse to one, and every cluster must have at least two units (the
    /// `N_j - 1` denominators appear throughout the analytics).
    pub fn new(membership: Vec<u32>, edges: &[(u32, u32)]) -> Result<Self> {
        let n = membership.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty membership".into()));
        }
        let m = membership.iter().copied().max().unwrap() as usize + 1;
        let mut clusters: Vec<Vec<u32>> = vec![Vec::new(); m];
        for (i, &j) in membership.iter().enumerate() {
            clusters[j as usize].push(i as u32);
        }
        for (j, c) in clusters.iter().enumerate() {
            if c.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "cluster {j} has {} unit(s); every cluster needs at least 2",
                    c.len()
                )));
            }
        }
        let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u == v {
                return Err(Error::InvalidInput(format!("self-loop at unit {u}")));
            }
            if u as usize >= n || v as usize >= n {
                return Err(Error::InvalidInput(format!("edge ({u},{v}) out of range")));
            }
            neighbors[u as usize].push(v);
            neighbors[v as usize].push(u);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
            nb.dedup();
        }
        Ok(Self { membership, neighbors, clusters })
    }

    pub fn n(&self) -> usize {
        self.membership.len()
    }

    pub fn m(&self) -> usize {
        self.clusters.len()
    }

    #[inline]
    pub fn cluster_of(&self, unit: usize) -> usize {
        self.membership[unit] as usize
    }

    pub fn membership(&self) -> &[u32] {
        &self.membership
    }

    #[inline]
    pub fn neighbors(&self, unit: usize) -> &[u32] {
        &self.neighbors[unit]
    }

    #[inline]
    pub fn degree(&self, unit: usize) -> usize {
        self.neighbors[unit].len()
    }

    pub fn cluster_members(&self, j: usize) -> &[u32] {
        &self.clusters[j]
    }

    pub fn cluster_size(&self, j: usize) -> usize {
        self.clusters[j].len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.len()).collect()
    }

    pub fn equal_sizes(&self) -> bool {
        self.clusters.iter().all(|c| c.len() == self.clusters[0].len())
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(|nb| nb.len()).sum::<usize>() / 2
    }

    /// Fraction of unit `i`'s neighbors inside its own cluster; 0 for
    /// isolated units.
    pub fn intra_fraction(&self, i: usize) -> f64 {
        let deg = self.degree(i);
        if deg == 0 {
            return 0.0;
        }
        let own = self.membership[i];
        let intra = self.neighbors[i]
            .iter()
            .filter(|&&k| self.membership[k as usize] == own)
            .count();
        intra as f64 / deg as f64
    }

    /// Edge list as sorted `(u, v)` pairs with `u < v`.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (u, nb) in self.neighbors.iter().enumerate() {
            for &v in nb {
                if (u as u32) < v {
                    out.push((u as u32, v));
                }
            }
        }
        out
    }

    /// Read a graph from an edge-list CSV (`u,v`) and a membership CSV
    /// (`unit,cluster`), both with a header row and zero-based ids.
    pub fn from_csv_files(edges_path: &Path, membership_path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(membership_path)?;
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let unit: u32 = parse_field(&rec, 0, membership_path)?;
            let cluster: u32 = parse_field(&rec, 1, membership_path)?;
            pairs.push((unit, cluster));
        }
        pairs.sort_unstable();
        let mut membership = vec![0u32; pairs.len()];
        for (idx, (unit, cluster)) in pairs.iter().enumerate() {
            if *unit as usize != idx {
                return Err(Error::InvalidInput(format!(
                    "membership file must cover units 0..{} exactly; saw {unit}",
                    pairs.len()
                )));
            }
            membership[idx] = *cluster;
        }
        let mut rdr = csv::Reader::from_path(edges_path)?;
        let mut edges = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let u: u32 = parse_field(&rec, 0, edges_path)?;
            let v: u32 = parse_field(&rec, 1, edges_path)?;
            edges.push((u, v));
        }
        Self::new(membership, &edges)
    }

    /// Write the edge-list and membership CSVs in the ingestion format.
    pub fn write_csv_files(&self, edges_path: &Path, membership_path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(edges_path)?);
        writeln!(f, "u,v")?;
        for (u, v) in self.edges() {
            writeln!(f, "{u},{v}")?;
        }
        f.flush()?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(membership_path)?);
        writeln!(f, "unit,cluster")?;
        for (i, &j) in self.membership.iter().enumerate() {
            writeln!(f, "{i},{j}")?;
        }
        f.flush()?;
        Ok(())
    }
}

fn parse_field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    path: &Path,
) -> Result<T> {
    rec.get(idx)
        .ok_or_else(|| Error::InvalidInput(format!("{}: missing column {idx}", path.display())))?
        .trim()
        .parse::<T>()
        .map_err(|_| {
            Error::InvalidInput(format!(
                "{}: cannot parse field {idx} in record {:?}",
                path.display(),
                rec
            ))
        })
}

/// Symmetric matrix of block edge probabilities.
#[derive(Clone, Debug)]
pub struct BlockMatrix {
    m: usize,
    a: Vec<f64>,
}

impl BlockMatrix {
    pub fn new(m: usize, a: Vec<f64>) -> Result<Self> {
        if a.len() != m * m {
            return Err(Error::InvalidInput(format!(
                "block matrix needs {} entries, got {}",
                m * m,
                a.len()
            )));
        }
        for j in 0..m {
            for l in 0..m {
                let v = a[j * m + l];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidInput(format!(
                        "block probability A[{j}][{l}] = {v} outside [0,1]"
                    )));
                }
                if (v - a[l * m + j]).abs() > 1e-12 {
                    return Err(Error::InvalidInput("block matrix not symmetric".into()));
                }
            }
        }
        Ok(Self { m, a })
    }

    pub fn from_fn(m: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut a = vec![0.0; m * m];
        for j in 0..m {
            for l in 0..m {
                a[j * m + l] = f(j, l);
            }
        }
        Self::new(m, a)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, j: usize, l: usize) -> f64 {
        self.a[j * self.m + l]
    }

    /// `min_j sum_l A_jl`, the row-sum lower bound used by the assumption
    /// satisfaction probabilities.
    pub fn min_row_sum(&self) -> f64 {
        (0..self.m)
            .map(|j| csum((0..self.m).map(|l| self.get(j, l))))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Sample a stochastic block model: each cross-unit pair `(i, k)` with
/// clusters `(j, l)` is linked independently with probability `A_jl`.
/// Deterministic given the seed.
pub fn sbm_generate(block: &BlockMatrix, sizes: &[usize], seed: u64) -> Result<ClusteredGraph> {
    if sizes.len() != block.m() {
        return Err(Error::InvalidInput(format!(
            "{} sizes for a {}x{} block matrix",
            sizes.len(),
            block.m(),
            block.m()
        )));
    }
    let mut membership = Vec::with_capacity(sizes.iter().sum());
    for (j, &s) in sizes.iter().enumerate() {
        membership.extend(std::iter::repeat(j as u32).take(s));
    }
    let n = membership.len();
    let mut edges = Vec::new();
    // one stream per unit row keeps generation order-independent
    for i in 0..n {
        let mut rng = Rng::keyed(&[seed, 0x5b, i as u64]);
        for k in (i + 1)..n {
            let p = block.get(membership[i] as usize, membership[k] as usize);
            let linked = if p <= 0.0 {
                false
            } else if p >= 1.0 {
                true
            } else {
                rng.next_f64() < p
            };
            if linked {
                edges.push((i as u32, k as u32));
            }
        }
    }
    ClusteredGraph::new(membership, &edges)
}

/// Cluster-level edge statistics: proxy edge probabilities `p_jl`, their
/// row-normalization `q_jl`, per-unit intra-cluster neighbor fractions and
/// their mean.
#[derive(Clone, Debug)]
pub struct GraphStats {
    pub m: usize,
    /// `p_jl`: off-diagonal `edges(C_j, C_l) / (N_j N_l)`; diagonal
    /// `sum_{i in C_j} |N_i ∩ C_j| / N_j^2` (each intra edge counted twice).
    pub p: Vec<Vec<f64>>,
    /// Row-normalized `q_jl = p_jl / sum_k p_jk`; NaN on rows with no edges.
    pub q: Vec<Vec<f64>>,
    pub q_defined: Vec<bool>,
    /// Raw directed intra/inter adjacency counts: `sum_{i in C_j} |N_i ∩ C_l|`.
    pub edge_counts: Vec<Vec<u64>>,
    /// `|N_i ∩ C_{j(i)}| / |N_i|` per unit (0 when isolated).
    pub intra_fraction: Vec<f64>,
    /// Mean intra fraction over units.
    pub rho_c: f64,
}

pub fn cluster_edge_stats(g: &ClusteredGraph) -> GraphStats {
    let m = g.m();
    let mut counts = vec![vec![0u64; m]; m];
    for i in 0..g.n() {
        let j = g.cluster_of(i);
        for &k in g.neighbors(i) {
            counts[j][g.cluster_of(k as usize)] += 1;
        }
    }
    let sizes = g.cluster_sizes();
    let mut p = vec![vec![0.0; m]; m];
    for j in 0..m {
        for l in 0..m {
            // counts[j][l] sums |N_i ∩ C_l| over i in C_j: equal to the
            // undirected cross-edge count for j != l, and to twice the
            // intra-edge count for j == l.
            p[j][l] = counts[j][l] as f64 / (sizes[j] * sizes[l]) as f64;
        }
    }
    let mut q = vec![vec![f64::NAN; m]; m];
    let mut q_defined = vec![false; m];
    for j in 0..m {
        let row_sum = csum(p[j].iter().copied());
        if row_sum > 0.0 {
            q_defined[j] = true;
            for l in 0..m {
                q[j][l] = p[j][l] / row_sum;
            }
        }
    }
    let intra: Vec<f64> = (0..g.n()).map(|i| g.intra_fraction(i)).collect();
    let rho_c = csum(intra.iter().copied()) / g.n() as f64;
    GraphStats { m, p, q, q_defined, edge_counts: counts, intra_fraction: intra, rho_c }
}

/// Clustering-quality functional: the mean of `gamma_i` weighted by each
/// unit's intra-cluster neighbor fraction. Lies in `[0, mean(gamma)]` for
/// non-negative `gamma`; isolated units contribute 0.
pub fn gamma_prime(g: &ClusteredGraph, gamma: &[f64]) -> f64 {
    debug_assert_eq!(gamma.len(), g.n());
    let s = csum((0..g.n()).map(|i| gamma[i] * g.intra_fraction(i)));
    s / g.n() as f64
}

/// Empirical checks of the dense-connection, proxy-edge-probability and
/// network-unconfoundedness assumptions, with the satisfaction-probability
/// lower bounds for the supplied tolerance constants.
#[derive(Clone, Debug)]
pub struct AssumptionReport {
    pub min_degree: usize,
    /// Threshold `eps2 * N / M` the minimum degree is compared against.
    pub dense_threshold: f64,
    pub dense_ok: bool,
    /// `max_{i,l} | |N_i ∩ C_l|/N_l - p_jl | / sqrt(p_jl log(NM) / N_l)`.
    pub edge_prob_max_deviation: f64,
    pub edge_prob_ok: bool,
    /// `max_{k,j} | ... | / sqrt(log(NM)/N_j)` for the supplied function.
    pub unconfoundedness_max_deviation: Option<f64>,
    pub unconfoundedness_ok: Option<bool>,
    /// Satisfaction-probability lower bound for the dense-connection check;
    /// requires a block matrix (the generating law) to evaluate.
    pub dense_bound: Option<f64>,
    /// `1 - (NM)^{1 - eps3^2/3}`, clamped to [0, 1].
    pub edge_prob_bound: f64,
    pub unconfoundedness_bound: Option<f64>,
}

/// Configuration for [`check_assumptions`].
pub struct AssumptionCheck<'a> {
    pub eps2: f64,
    pub eps3: f64,
    /// Bounded test function of `(alpha_i, beta_i, gamma_i)` with its
    /// tolerance constant; requires the outcome model.
    pub f: Option<(&'a dyn Fn(f64, f64, f64) -> f64, f64)>,
    pub model: Option<&'a crate::outcomes::OutcomeModel>,
    /// Generating block matrix, if known; enables the dense-connection bound.
    pub block: Option<&'a BlockMatrix>,
}

pub fn check_assumptions(g: &ClusteredGraph, check: &AssumptionCheck) -> Result<AssumptionReport> {
    if check.f.is_some() && check.model.is_none() {
        return Err(Error::InvalidInput(
            "unconfoundedness check requires the outcome model".into(),
        ));
    }
    let n = g.n();
    let m = g.m();
    let log_nm = ((n * m) as f64).ln();
    let sizes = g.cluster_sizes();
    let stats = cluster_edge_stats(g);

    let min_degree = (0..n).map(|i| g.degree(i)).min().unwrap_or(0);
    let dense_threshold = check.eps2 * n as f64 / m as f64;
    let dense_ok = (min_degree as f64) >= dense_threshold;

    // per-unit cluster-neighbor counts
    let mut max_dev: f64 = 0.0;
    for i in 0..n {
        let j = g.cluster_of(i);
        let mut counts = vec![0usize; m];
        for &k in g.neighbors(i) {
            counts[g.cluster_of(k as usize)] += 1;
        }
        for l in 0..m {
            let p = stats.p[j][l];
            if p <= 0.0 {
                // p_jl = 0 implies no edges at all between the clusters
                continue;
            }
            let scale = (p * log_nm / sizes[l] as f64).sqrt();
            let dev = (counts[l] as f64 / sizes[l] as f64 - p).abs() / scale;
            max_dev = max_dev.max(dev);
        }
    }
    let edge_prob_ok = max_dev <= check.eps3;

    let (unc_dev, unc_ok, unc_bound) = if let Some((f, eps_f)) = check.f {
        let model = check.model.unwrap();
        let fv: Vec<f64> = (0..n)
            .map(|i| f(model.alpha[i], model.beta[i], model.gamma[i]))
            .collect();
        let f_inf = fv.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let fbar: Vec<f64> = (0..m)
            .map(|j| {
                csum(g.cluster_members(j).iter().map(|&i| fv[i as usize])) / sizes[j] as f64
            })
            .collect();
        let mut dev_max: f64 = 0.0;
        for k in 0..n {
            let mut sums = vec![0.0; m];
            let mut cnts = vec![0usize; m];
            for &i in g.neighbors(k) {
                let j = g.cluster_of(i as usize);
                sums[j] += fv[i as usize];
                cnts[j] += 1;
            }
            for j in 0..m {
                let nj = sizes[j] as f64;
                let lhs = (sums[j] / nj - (cnts[j] as f64 / nj) * fbar[j]).abs();
                let dev = lhs / (log_nm / nj).sqrt();
                dev_max = dev_max.max(dev);
            }
        }
        let bound = if f_inf > 0.0 {
            let expo = 1.0 - eps_f * eps_f / (12.0 * f_inf * f_inf);
            (1.0 - ((n * m) as f64).powf(expo)).clamp(0.0, 1.0)
        } else {
            1.0
        };
        (Some(dev_max), Some(dev_max <= eps_f), Some(bound))
    } else {
        (None, None, None)
    };

    let dense_bound = check.block.map(|a| {
        let low = a.min_row_sum();
        let gap = low - check.eps2;
        if gap <= 0.0 || low <= 0.0 {
            0.0
        } else {
            (1.0 - (-(n as f64) * gap * gap / (4.0 * m as f64 * low)).exp()).clamp(0.0, 1.0)
        }
    });
    let edge_prob_bound =
        (1.0 - ((n * m) as f64).powf(1.0 - check.eps3 * check.eps3 / 3.0)).clamp(0.0, 1.0);

    Ok(AssumptionReport {
        min_degree,
        dense_threshold,
        dense_ok,
        edge_prob_max_deviation: max_dev,
        edge_prob_ok,
        unconfoundedness_max_deviation: unc_dev,
        unconfoundedness_ok: unc_ok,
        dense_bound,
        edge_prob_bound,
        unconfoundedness_bound: unc_bound,
    })
}

/// Average degree of cluster `j`'s members (used by invariants/tests).
pub fn average_cluster_degree(g: &ClusteredGraph, j: usize) -> f64 {
    let members = g.cluster_members(j);
    let mut acc = KahanSum::new();
    for &i in members {
        acc.add(g.degree(i as usize) as f64);
    }
    acc.value() / members.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_graph(m: usize, size: usize, edges: &[(u32, u32)]) -> ClusteredGraph {
        let mut membership = Vec::new();
        for j in 0..m {
            membership.extend(std::iter::repeat(j as u32).take(size));
        }
        ClusteredGraph::new(membership, edges).unwrap()
    }

    #[test]
    fn construction_validates() {
        assert!(ClusteredGraph::new(vec![0, 0, 1], &[]).is_err()); // cluster 1 singleton
        assert!(ClusteredGraph::new(vec![0, 0], &[(0, 0)]).is_err()); // self loop
        assert!(ClusteredGraph::new(vec![0, 0], &[(0, 5)]).is_err()); // range
        let g = ClusteredGraph::new(vec![0, 0, 1, 1], &[(0, 1), (1, 0), (1, 2)]).unwrap();
        assert_eq!(g.edge_count(), 2); // duplicate collapsed
        assert!(g.equal_sizes());
    }

    #[test]
    fn sbm_extremes() {
        let m0 = BlockMatrix::from_fn(2, |_, _| 0.0).unwrap();
        let g = sbm_generate(&m0, &[3, 3], 1).unwrap();
        assert_eq!(g.edge_count(), 0);

        let m1 = BlockMatrix::from_fn(2, |_, _| 1.0).unwrap();
        let g = sbm_generate(&m1, &[3, 3], 1).unwrap();
        assert_eq!(g.edge_count(), 6 * 5 / 2);
    }

    #[test]
    fn sbm_deterministic_given_seed() {
        let a = BlockMatrix::from_fn(3, |j, l| if j == l { 0.8 } else { 0.2 }).unwrap();
        let g1 = sbm_generate(&a, &[5, 5, 5], 99).unwrap();
        let g2 = sbm_generate(&a, &[5, 5, 5], 99).unwrap();
        let g3 = sbm_generate(&a, &[5, 5, 5], 100).unwrap();
        assert_eq!(g1.edges(), g2.edges());
        assert_ne!(g1.edges(), g3.edges());
    }

    #[test]
    fn sbm_matches_block_probabilities() {
        // empirical p_jl within 4 binomial standard errors of A_jl
        let m = 6;
        let size = 60;
        let a = BlockMatrix::from_fn(m, |j, l| {
            (-((j as f64 - l as f64).abs()) / 2.0).exp()
        })
        .unwrap();
        let g = sbm_generate(&a, &vec![size; m], 12345).unwrap();
        let stats = cluster_edge_stats(&g);
        for j in 0..m {
            for l in 0..m {
                let pairs = if j == l {
                    (size * (size - 1)) as f64
                } else {
                    (size * size) as f64
                };
                let p_hat = if j == l {
                    // diagonal of p uses N_j^2; rescale to per-pair rate
                    stats.p[j][j] * (size * size) as f64 / pairs
                } else {
                    stats.p[j][l]
                };
                let p = a.get(j, l);
                let se = (p * (1.0 - p) / pairs).sqrt();
                assert!(
                    (p_hat - p).abs() <= 4.0 * se + 1e-12,
                    "block ({j},{l}): {p_hat} vs {p} (se {se})"
                );
            }
        }
    }

    #[test]
    fn edge_stats_hand_cases() {
        // single cluster, 3 units, 2 edges -> p_11 = 2*2/9
        let g = ClusteredGraph::new(vec![0, 0, 0], &[(0, 1), (1, 2)]).unwrap();
        let s = cluster_edge_stats(&g);
        assert!((s.p[0][0] - 4.0 / 9.0).abs() < 1e-15);

        // perfect clustering: q = identity
        let g = pair_graph(2, 3, &[(0, 1), (1, 2), (3, 4), (4, 5)]);
        let s = cluster_edge_stats(&g);
        for j in 0..2 {
            for l in 0..2 {
                let expect = if j == l { 1.0 } else { 0.0 };
                assert!((s.q[j][l] - expect).abs() < 1e-15);
            }
        }

        // empty graph: all q rows undefined
        let g = pair_graph(2, 2, &[]);
        let s = cluster_edge_stats(&g);
        assert!(s.q_defined.iter().all(|d| !d));
        assert!(s.p.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn p_row_sums_give_average_degree() {
        let a = BlockMatrix::from_fn(3, |j, l| if j == l { 0.7 } else { 0.3 }).unwrap();
        let g = sbm_generate(&a, &[8, 8, 8], 7).unwrap();
        let s = cluster_edge_stats(&g);
        let sizes = g.cluster_sizes();
        for j in 0..3 {
            let implied: f64 = (0..3).map(|l| s.p[j][l] * sizes[l] as f64).sum();
            assert!((implied - average_cluster_degree(&g, j)).abs() < 1e-10);
        }
    }

    #[test]
    fn gamma_prime_cases() {
        // no cut edges -> gamma-bar
        let g = pair_graph(2, 3, &[(0, 1), (1, 2), (3, 4), (4, 5)]);
        let gamma = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let gbar = 21.0 / 6.0;
        assert!((gamma_prime(&g, &gamma) - gbar).abs() < 1e-15);

        // clustering placing no unit with a neighbor -> 0
        let g = pair_graph(2, 2, &[(0, 2), (0, 3), (1, 2), (1, 3)]);
        assert_eq!(gamma_prime(&g, &[1.0; 4]), 0.0);

        // linearity in gamma
        let g = pair_graph(2, 3, &[(0, 3), (1, 2), (1, 4), (2, 5)]);
        let base: Vec<f64> = (0..6).map(|i| (i as f64) - 2.0).collect();
        let scaled: Vec<f64> = base.iter().map(|x| 2.5 * x).collect();
        assert!((gamma_prime(&g, &scaled) - 2.5 * gamma_prime(&g, &base)).abs() < 1e-12);

        // constant gamma = c -> c * rho_C
        let s = cluster_edge_stats(&g);
        assert!((gamma_prime(&g, &[3.0; 6]) - 3.0 * s.rho_c).abs() < 1e-14);
    }

    #[test]
    fn gamma_prime_random_clustering_near_gbar_over_m() {
        // dense graph, clusters assigned independently of edges
        let m = 5;
        let size = 40;
        let n = m * size;
        let mut membership = Vec::new();
        for j in 0..m {
            membership.extend(std::iter::repeat(j as u32).take(size));
        }
        let mut rng = Rng::seed_from_u64(8);
        let mut edges = Vec::new();
        for i in 0..n as u32 {
            for k in (i + 1)..n as u32 {
                if rng.bernoulli(0.5) {
                    edges.push((i, k));
                }
            }
        }
        // shuffle membership so clusters are random with respect to edges
        let mut order: Vec<u32> = membership.clone();
        rng.shuffle(&mut order);
        let g = ClusteredGraph::new(order, &edges).unwrap();
        let gp = gamma_prime(&g, &vec![1.0; n]);
        let expect = 1.0 / m as f64;
        assert!((gp - expect).abs() / expect < 0.10, "{gp} vs {expect}");
    }

    #[test]
    fn assumption_checks_extremes() {
        // complete graph: min degree N-1, dense for any eps2 <= M(N-1)/N
        let a = BlockMatrix::from_fn(2, |_, _| 1.0).unwrap();
        let g = sbm_generate(&a, &[4, 4], 3).unwrap();
        let rep = check_assumptions(
            &g,
            &AssumptionCheck { eps2: 1.5, eps3: 2.0, f: None, model: None, block: Some(&a) },
        )
        .unwrap();
        assert!(rep.dense_ok);
        assert_eq!(rep.min_degree, 7);
        assert!(rep.edge_prob_ok); // zero deviation everywhere

        // empty graph: dense fails for any positive eps2
        let g = pair_graph(2, 3, &[]);
        let rep = check_assumptions(
            &g,
            &AssumptionCheck { eps2: 0.1, eps3: 2.0, f: None, model: None, block: None },
        )
        .unwrap();
        assert!(!rep.dense_ok);
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("satgraph-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let g = pair_graph(2, 3, &[(0, 1), (2, 4), (3, 5)]);
        let e = dir.join("edges.csv");
        let m = dir.join("membership.csv");
        g.write_csv_files(&e, &m).unwrap();
        let g2 = ClusteredGraph::from_csv_files(&e, &m).unwrap();
        assert_eq!(g.edges(), g2.edges());
        assert_eq!(g.membership(), g2.membership());
        std::fs::remove_dir_all(&dir).ok();
    }
}
