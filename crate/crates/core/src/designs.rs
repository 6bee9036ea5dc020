//! Treatment-proportion vectors, canonical designs, and the two-stage
//! assignment samplers.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};
use crate::graph::ClusteredGraph;
use crate::rng::Rng;
use crate::stats::{central_moments, MomentSummary};

/// Tolerance absorbed when flooring `pi_j * N_j` to a count.
pub const FLOOR_EPS: f64 = 1e-9;

/// Per-cluster treatment proportions, entries in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProportionVector {
    pi: Vec<f64>,
}

impl ProportionVector {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::InvalidInput("empty proportion vector".into()));
        }
        for (j, &x) in pi.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidInput(format!("pi[{j}] = {x} outside [0,1]")));
            }
        }
        Ok(Self { pi })
    }

    pub fn m(&self) -> usize {
        self.pi.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pi
    }

    pub fn mean(&self) -> f64 {
        crate::stats::mean(&self.pi)
    }

    pub fn moments(&self) -> MomentSummary {
        central_moments(&self.pi).expect("non-empty by construction")
    }

    /// Treated counts `n_j = floor(pi_j N_j + eps)` per cluster.
    pub fn counts(&self, sizes: &[usize]) -> Vec<usize> {
        self.pi
            .iter()
            .zip(sizes)
            .map(|(&p, &s)| ((p * s as f64 + FLOOR_EPS).floor() as usize).min(s))
            .collect()
    }

    /// True when every `pi_j N_j` is within `FLOOR_EPS` of an integer.
    pub fn integer_consistent(&self, sizes: &[usize]) -> bool {
        self.pi.iter().zip(sizes).all(|(&p, &s)| {
            let x = p * s as f64;
            (x - x.round()).abs() <= FLOOR_EPS
        })
    }

    /// Exact per-cluster counts, or an `Inconsistent` error if some
    /// `pi_j N_j` is not an integer.
    pub fn counts_exact(&self, sizes: &[usize]) -> Result<Vec<usize>> {
        if sizes.len() != self.m() {
            return Err(Error::InvalidInput(format!(
                "proportion vector of length {} against {} clusters",
                self.m(),
                sizes.len()
            )));
        }
        if !self.integer_consistent(sizes) {
            return Err(Error::Inconsistent(
                "pi_j * N_j is not an integer for some cluster".into(),
            ));
        }
        Ok(self
            .pi
            .iter()
            .zip(sizes)
            .map(|(&p, &s)| (p * s as f64).round() as usize)
            .collect())
    }

    /// Replace entries by `n_j / N_j` with `n_j` the floored counts.
    pub fn realized(&self, sizes: &[usize]) -> Self {
        let counts = self.counts(sizes);
        Self {
            pi: counts.iter().zip(sizes).map(|(&n, &s)| n as f64 / s as f64).collect(),
        }
    }
}

/// Probability law for the independently-sampled design.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PiDistribution {
    /// Symmetric Beta(lambda, lambda); `lambda = 0` is the fair two-point law
    /// on {0, 1} and `lambda = inf` the point mass at 1/2.
    Beta { lambda: f64 },
    PointMass { value: f64 },
    TwoPoint { lo: f64, hi: f64, weight_hi: f64 },
    /// Uniform over a finite table of values.
    QuantileTable { values: Vec<f64> },
}

impl PiDistribution {
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match self {
            PiDistribution::Beta { lambda } => {
                if *lambda == 0.0 {
                    if rng.bernoulli(0.5) {
                        1.0
                    } else {
                        0.0
                    }
                } else if lambda.is_infinite() {
                    0.5
                } else {
                    beta_inverse_cdf(*lambda, rng.next_f64())
                }
            }
            PiDistribution::PointMass { value } => *value,
            PiDistribution::TwoPoint { lo, hi, weight_hi } => {
                if rng.bernoulli(*weight_hi) {
                    *hi
                } else {
                    *lo
                }
            }
            PiDistribution::QuantileTable { values } => {
                values[rng.next_below(values.len() as u64) as usize]
            }
        }
    }

    /// Finite support as `(value, probability)` pairs, when the law is
    /// discrete (used for exact enumeration of the independent design).
    pub fn finite_support(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            PiDistribution::Beta { lambda } if *lambda == 0.0 => {
                Some(vec![(0.0, 0.5), (1.0, 0.5)])
            }
            PiDistribution::Beta { lambda } if lambda.is_infinite() => {
                Some(vec![(0.5, 1.0)])
            }
            PiDistribution::Beta { .. } => None,
            PiDistribution::PointMass { value } => Some(vec![(*value, 1.0)]),
            PiDistribution::TwoPoint { lo, hi, weight_hi } => {
                Some(vec![(*lo, 1.0 - weight_hi), (*hi, *weight_hi)])
            }
            PiDistribution::QuantileTable { values } => {
                let w = 1.0 / values.len() as f64;
                Some(values.iter().map(|&v| (v, w)).collect())
            }
        }
    }
}

/// The three saturation-design families.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DesignSpec {
    /// Fixed proportions; only the within-cluster stage is random.
    Deterministic { pi: ProportionVector },
    /// Proportions permuted uniformly across clusters before stage 2.
    PermutationBased { pi: ProportionVector },
    /// `pi_j` drawn i.i.d. from the distribution.
    IndependentlySampled { dist: PiDistribution },
}

/// A realized treatment assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    /// 0/1 per unit.
    pub z: Vec<u8>,
    pub n_t: usize,
    /// Realized treated count per cluster.
    pub n_per_cluster: Vec<usize>,
}

impl Assignment {
    pub fn from_z(z: Vec<u8>, g: &ClusteredGraph) -> Self {
        let mut n_per_cluster = vec![0usize; g.m()];
        let mut n_t = 0;
        for (i, &b) in z.iter().enumerate() {
            if b != 0 {
                n_per_cluster[g.cluster_of(i)] += 1;
                n_t += 1;
            }
        }
        Self { z, n_t, n_per_cluster }
    }

    pub fn n_c(&self) -> usize {
        self.z.len() - self.n_t
    }

    pub fn write_csv_file(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "unit,z")?;
        for (i, &b) in self.z.iter().enumerate() {
            writeln!(f, "{i},{b}")?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Constant vector `(mean)_M` (stratified completely randomized design).
pub fn stratified_pi(m: usize, mean: f64) -> Result<ProportionVector> {
    ProportionVector::new(vec![mean; m])
}

/// `{0,1}^M` with the given number of ones (cluster-based design).
pub fn cluster_based_pi(m: usize, treated_clusters: usize) -> Result<ProportionVector> {
    if treated_clusters > m {
        return Err(Error::InvalidInput(format!(
            "{treated_clusters} treated clusters out of {m}"
        )));
    }
    let mut pi = vec![0.0; m];
    for p in pi.iter_mut().take(treated_clusters) {
        *p = 1.0;
    }
    ProportionVector::new(pi)
}

/// Quantile discretization of Beta(lambda, lambda):
/// `pi_j = F^{-1}(j / (M+1))`, sorted ascending, symmetric about 1/2.
/// `lambda = 0` degenerates to half zeros/half ones and `lambda = inf` to the
/// constant 1/2.
pub fn beta_quantile_pi(lambda: f64, m: usize) -> Result<ProportionVector> {
    if lambda < 0.0 || lambda.is_nan() {
        return Err(Error::InvalidInput(format!("lambda = {lambda} must be >= 0")));
    }
    if m == 0 {
        return Err(Error::InvalidInput("M = 0".into()));
    }
    let pi = if lambda == 0.0 {
        let mut v = vec![0.0; m];
        for x in v.iter_mut().skip(m - m / 2) {
            *x = 1.0;
        }
        // odd M: middle entry at the symmetric midpoint
        if m % 2 == 1 {
            v[m / 2] = 0.5;
        }
        v
    } else if lambda.is_infinite() {
        vec![0.5; m]
    } else {
        (1..=m)
            .map(|j| beta_inverse_cdf(lambda, j as f64 / (m + 1) as f64))
            .collect()
    };
    ProportionVector::new(pi)
}

/// Inverse CDF of Beta(lambda, lambda) by bisection on the regularized
/// incomplete beta function, to 1e-12 in x.
pub(crate) fn beta_inverse_cdf(lambda: f64, p: f64) -> f64 {
    debug_assert!(lambda > 0.0 && lambda.is_finite());
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let dist = Beta::new(lambda, lambda).expect("valid Beta shape");
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    // symmetry: F(1/2) = 1/2
    if p == 0.5 {
        return 0.5;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if dist.cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-point member of the symmetric family: half the entries at `mean - d`,
/// half at `mean + d` (odd M keeps the middle entry at the mean).
pub fn symmetric_two_point_pi(m: usize, mean: f64, d: f64) -> Result<ProportionVector> {
    let lo = mean - d;
    let hi = mean + d;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) {
        return Err(Error::InvalidInput(format!(
            "two-point entries {lo}/{hi} outside [0,1]"
        )));
    }
    let half = m / 2;
    let mut pi = vec![lo; half];
    if m % 2 == 1 {
        pi.push(mean);
    }
    pi.extend(std::iter::repeat(hi).take(half));
    ProportionVector::new(pi)
}

/// Three-point member of the symmetric family with extremes `{0, 2 mean}`:
/// a fraction of the entries split evenly between the extremes, the rest at
/// the mean. The realized fraction is rounded to `2k/M`.
pub fn symmetric_three_point_pi(
    m: usize,
    mean: f64,
    fraction_at_extremes: f64,
) -> Result<ProportionVector> {
    if !(0.0..=1.0).contains(&fraction_at_extremes) {
        return Err(Error::InvalidInput(format!(
            "extreme fraction {fraction_at_extremes} outside [0,1]"
        )));
    }
    if mean > 0.5 + 1e-12 {
        return Err(Error::InvalidInput(
            "three-point family needs mean <= 1/2 (apply the pi -> 1-pi symmetry)".into(),
        ));
    }
    let hi = 2.0 * mean;
    if hi > 1.0 + 1e-12 {
        return Err(Error::InvalidInput(format!("extreme {hi} outside [0,1]")));
    }
    let k = ((fraction_at_extremes * m as f64) / 2.0).round() as usize;
    if 2 * k > m {
        return Err(Error::InvalidInput("extreme fraction too large".into()));
    }
    let mut pi = vec![0.0; k];
    pi.extend(std::iter::repeat(mean).take(m - 2 * k));
    pi.extend(std::iter::repeat(hi.min(1.0)).take(k));
    ProportionVector::new(pi)
}

/// Draw one assignment. Stage 1 resolves the per-cluster proportions
/// according to the design mode; stage 2 picks exactly `n_j` units per
/// cluster uniformly without replacement. Deterministic given
/// `(seed, replication)`; streams are keyed per (stage, cluster) so
/// replications are order-independent and parallel-safe.
pub fn sample_assignment(
    spec: &DesignSpec,
    g: &ClusteredGraph,
    seed: u64,
    replication: u64,
) -> Assignment {
    let sizes = g.cluster_sizes();
    let pi: Vec<f64> = match spec {
        DesignSpec::Deterministic { pi } => pi.as_slice().to_vec(),
        DesignSpec::PermutationBased { pi } => {
            let mut v = pi.as_slice().to_vec();
            let mut rng = Rng::keyed(&[seed, replication, 0, 0]);
            rng.shuffle(&mut v);
            v
        }
        DesignSpec::IndependentlySampled { dist } => (0..g.m())
            .map(|j| {
                let mut rng = Rng::keyed(&[seed, replication, 0, j as u64 + 1]);
                dist.sample(&mut rng)
            })
            .collect(),
    };
    let mut z = vec![0u8; g.n()];
    let mut n_per_cluster = vec![0usize; g.m()];
    for j in 0..g.m() {
        let nj = ((pi[j] * sizes[j] as f64 + FLOOR_EPS).floor() as usize).min(sizes[j]);
        n_per_cluster[j] = nj;
        if nj == 0 {
            continue;
        }
        let mut rng = Rng::keyed(&[seed, replication, 1, j as u64]);
        let members = g.cluster_members(j);
        for idx in rng.sample_without_replacement(members.len(), nj) {
            z[members[idx] as usize] = 1;
        }
    }
    let n_t = n_per_cluster.iter().sum();
    Assignment { z, n_t, n_per_cluster }
}
