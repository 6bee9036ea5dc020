//! Potential-outcome models and the interference tensors derived from them.

use std::io::Write;
use std::path::Path;

use crate::designs::Assignment;
use crate::error::{Error, Result};
use crate::graph::ClusteredGraph;
use crate::stats::{csum, mean, KahanSum};

/// Linear interference model: `Y_i = alpha_i + beta_i Z_i + gamma_i rho_i`,
/// with `rho_i` the treated fraction of unit i's neighborhood.
#[derive(Clone, Debug)]
pub struct OutcomeModel {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl OutcomeModel {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let n = alpha.len();
        if beta.len() != n || gamma.len() != n {
            return Err(Error::InvalidInput("alpha/beta/gamma length mismatch".into()));
        }
        for v in alpha.iter().chain(&beta).chain(&gamma) {
            if !v.is_finite() {
                return Err(Error::InvalidInput("non-finite outcome parameter".into()));
            }
        }
        Ok(Self { alpha, beta, gamma })
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    /// Total treatment effect `mean(beta) + mean(gamma)`.
    pub fn tte(&self) -> f64 {
        mean(&self.beta) + mean(&self.gamma)
    }

    pub fn is_sutva(&self) -> bool {
        self.gamma.iter().all(|&g| g == 0.0)
    }

    /// Read outcome parameters from a CSV with columns `unit,alpha,beta,gamma`.
    pub fn from_csv_file(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut rows: Vec<(usize, f64, f64, f64)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let get = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::InvalidInput(format!("missing column {i}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("bad number in {rec:?}")))
            };
            let unit: usize = rec
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::InvalidInput(format!("bad unit id in {rec:?}")))?;
            rows.push((unit, get(1)?, get(2)?, get(3)?));
        }
        rows.sort_by_key(|r| r.0);
        for (idx, row) in rows.iter().enumerate() {
            if row.0 != idx {
                return Err(Error::InvalidInput(format!(
                    "outcome file must cover units 0..{} exactly",
                    rows.len()
                )));
            }
        }
        OutcomeModel::new(
            rows.iter().map(|r| r.1).collect(),
            rows.iter().map(|r| r.2).collect(),
            rows.iter().map(|r| r.3).collect(),
        )
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "unit,alpha,beta,gamma")?;
        for i in 0..self.n() {
            writeln!(f, "{i},{},{},{}", self.alpha[i], self.beta[i], self.gamma[i])?;
        }
        f.flush()?;
        Ok(())
    }
}

/// SUTVA potential outcomes `Y(1)`, `Y(0)`.
#[derive(Clone, Debug)]
pub struct PotentialTable {
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
}

impl PotentialTable {
    pub fn new(y1: Vec<f64>, y0: Vec<f64>) -> Result<Self> {
        if y1.len() != y0.len() {
            return Err(Error::InvalidInput("Y(1)/Y(0) length mismatch".into()));
        }
        if y1.iter().chain(&y0).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite potential outcome".into()));
        }
        Ok(Self { y1, y0 })
    }

    pub fn n(&self) -> usize {
        self.y1.len()
    }

    pub fn tte(&self) -> f64 {
        mean(&self.y1) - mean(&self.y0)
    }
}

/// Bridge a SUTVA model (`gamma = 0`) to its potential table: `Y(1) = alpha +
/// beta`, `Y(0) = alpha`. Errors if any interference coefficient is nonzero,
/// since the table would misrepresent the model.
pub fn sutva_table(model: &OutcomeModel) -> Result<PotentialTable> {
    if let Some(i) = model.gamma.iter().position(|&g| g != 0.0) {
        return Err(Error::ModelMismatch(format!(
            "gamma[{i}] = {} is nonzero; SUTVA table undefined",
            model.gamma[i]
        )));
    }
    PotentialTable::new(
        model.alpha.iter().zip(&model.beta).map(|(a, b)| a + b).collect(),
        model.alpha.clone(),
    )
}

/// Realized outcomes under an assignment; isolated units get no interference
/// term.
pub fn evaluate(model: &OutcomeModel, g: &ClusteredGraph, z: &Assignment) -> Vec<f64> {
    debug_assert_eq!(model.n(), g.n());
    debug_assert_eq!(z.z.len(), g.n());
    (0..g.n())
        .map(|i| {
            let mut y = model.alpha[i] + model.beta[i] * z.z[i] as f64;
            let deg = g.degree(i);
            if deg > 0 && model.gamma[i] != 0.0 {
                let treated: u32 = g.neighbors(i).iter().map(|&k| z.z[k as usize] as u32).sum();
                y += model.gamma[i] * treated as f64 / deg as f64;
            }
            y
        })
        .collect()
}

/// Per-(model, graph, n_t) derived quantities for the interference analytics.
///
/// `T_ik = gamma_i/|N_i|` on edges is row-constant, so it is stored as the
/// per-unit scalar `t`. All cluster-pair aggregates consumed by the exact
/// conditional variance are precomputed here.
#[derive(Clone, Debug)]
pub struct InterferenceTensors {
    pub n_t: usize,
    pub n: usize,
    pub m: usize,
    pub alpha_bar: f64,
    pub beta_bar: f64,
    pub gamma_bar: f64,
    /// Copy of the interference coefficients (the variance coefficients need
    /// them next to `h`).
    pub gamma: Vec<f64>,
    /// `gamma_i / |N_i|` (0 for isolated units).
    pub t: Vec<f64>,
    /// `H_i = sum_{k in N_i} gamma_k/|N_k|`.
    pub h: Vec<f64>,
    /// `W_i = alpha_i + (n_c/N) beta_i`.
    pub w: Vec<f64>,
    /// `U_i = W_i - (n_t/N) H_i`.
    pub u: Vec<f64>,
    /// Dense N x M row-major `D_i^{(l)} = sum_{k in C_l} (T_ik + T_ki)`.
    pub dl: Vec<f64>,
    /// Elementwise squares of `dl` (hot in the variance evaluation).
    pub dl2: Vec<f64>,
    /// M x M cluster-pair totals `D^{(jl)}`.
    pub djl: Vec<Vec<f64>>,
    /// M x M totals of the asymmetric coefficients `sum T_ik` per block.
    pub tjl: Vec<Vec<f64>>,
    /// M x M sums of squared entries `sum D_ik^2` per block.
    pub e2: Vec<Vec<f64>>,
    /// M x M row-square sums `sum_{i in C_j} (D_i^{(l)})^2`.
    pub rs: Vec<Vec<f64>>,
}

impl InterferenceTensors {
    pub fn new(model: &OutcomeModel, g: &ClusteredGraph, n_t: usize) -> Result<Self> {
        let n = g.n();
        let m = g.m();
        if model.n() != n {
            return Err(Error::InvalidInput("model/graph size mismatch".into()));
        }
        if n_t == 0 || n_t >= n {
            return Err(Error::InvalidInput(format!("n_t = {n_t} outside (0, {n})")));
        }
        let n_c = n - n_t;
        let mu = n_t as f64 / n as f64;

        let t: Vec<f64> = (0..n)
            .map(|i| {
                let d = g.degree(i);
                if d == 0 {
                    0.0
                } else {
                    model.gamma[i] / d as f64
                }
            })
            .collect();
        let mut h = vec![0.0; n];
        for i in 0..n {
            h[i] = csum(g.neighbors(i).iter().map(|&k| t[k as usize]));
        }
        let w: Vec<f64> = (0..n)
            .map(|i| model.alpha[i] + (n_c as f64 / n as f64) * model.beta[i])
            .collect();
        let u: Vec<f64> = (0..n).map(|i| w[i] - mu * h[i]).collect();

        let mut dl = vec![0.0; n * m];
        let mut tjl = vec![vec![0.0; m]; m];
        let mut e2 = vec![vec![0.0; m]; m];
        for i in 0..n {
            let ji = g.cluster_of(i);
            for &k in g.neighbors(i) {
                let k = k as usize;
                let jk = g.cluster_of(k);
                let d_ik = t[i] + t[k];
                dl[i * m + jk] += d_ik;
                tjl[ji][jk] += t[i];
                e2[ji][jk] += d_ik * d_ik;
            }
        }
        let dl2: Vec<f64> = dl.iter().map(|&x| x * x).collect();
        let mut djl = vec![vec![KahanSum::new(); m]; m];
        let mut rs = vec![vec![KahanSum::new(); m]; m];
        for i in 0..n {
            let ji = g.cluster_of(i);
            for l in 0..m {
                djl[ji][l].add(dl[i * m + l]);
                rs[ji][l].add(dl2[i * m + l]);
            }
        }
        let djl: Vec<Vec<f64>> =
            djl.into_iter().map(|row| row.into_iter().map(|s| s.value()).collect()).collect();
        let rs: Vec<Vec<f64>> =
            rs.into_iter().map(|row| row.into_iter().map(|s| s.value()).collect()).collect();

        let tens = Self {
            n_t,
            n,
            m,
            alpha_bar: mean(&model.alpha),
            beta_bar: mean(&model.beta),
            gamma_bar: mean(&model.gamma),
            gamma: model.gamma.clone(),
            t,
            h,
            w,
            u,
            dl,
            dl2,
            djl,
            tjl,
            e2,
            rs,
        };
        tens.debug_check(model, g);
        Ok(tens)
    }

    #[inline]
    pub fn dl_at(&self, i: usize, l: usize) -> f64 {
        self.dl[i * self.m + l]
    }

    /// `G_i = sum_l pi_l D_i^{(l)}` for a given proportion vector.
    pub fn g_vector(&self, pi: &[f64]) -> Vec<f64> {
        debug_assert_eq!(pi.len(), self.m);
        let mut g = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.dl[i * self.m..(i + 1) * self.m];
            g[i] = row.iter().zip(pi).map(|(&d, &p)| d * p).sum();
        }
        g
    }

    /// Mean squared interaction of the `(j, l)` block of `D`, from the
    /// precomputed aggregates.
    pub fn s_cross(&self, j: usize, l: usize, sizes: &[usize]) -> f64 {
        let nj = sizes[j] as f64;
        let nl = sizes[l] as f64;
        let ss = self.e2[j][l] - self.rs[j][l] / nl - self.rs[l][j] / nj
            + self.djl[j][l] * self.djl[j][l] / (nj * nl);
        (ss / ((nj - 1.0) * (nl - 1.0))).max(0.0)
    }

    fn debug_check(&self, model: &OutcomeModel, g: &ClusteredGraph) {
        if cfg!(debug_assertions) {
            // sum_i H_i = N * gamma-bar, restricted to non-isolated units
            let h_sum = csum(self.h.iter().copied());
            let g_sum = csum((0..self.n).map(|i| {
                if g.degree(i) > 0 {
                    model.gamma[i]
                } else {
                    0.0
                }
            }));
            debug_assert!(
                (h_sum - g_sum).abs() <= 1e-9 * (1.0 + g_sum.abs()),
                "sum H = {h_sum} vs sum gamma (non-isolated) = {g_sum}"
            );
            // row sums of Dl: gamma_i 1{deg>0} + H_i
            for i in 0..self.n {
                let row = csum((0..self.m).map(|l| self.dl_at(i, l)));
                let expect =
                    if g.degree(i) > 0 { model.gamma[i] } else { 0.0 } + self.h[i];
                debug_assert!(
                    (row - expect).abs() <= 1e-9 * (1.0 + expect.abs()),
                    "Dl row {i}: {row} vs {expect}"
                );
            }
            // Djl symmetry (two computation routes agree through symmetry of D)
            for j in 0..self.m {
                for l in 0..self.m {
                    debug_assert!(
                        (self.djl[j][l] - self.djl[l][j]).abs() <= 1e-12 * (1.0 + self.djl[j][l].abs()),
                        "Djl asymmetry at ({j},{l})"
                    );
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::Assignment;

    fn graph3() -> ClusteredGraph {
        // two clusters of 3; a triangle in cluster 0, a path in cluster 1,
        // one cut edge
        ClusteredGraph::new(
            vec![0, 0, 0, 1, 1, 1],
            &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (2, 3)],
        )
        .unwrap()
    }

    fn assignment_from_bits(g: &ClusteredGraph, bits: &[u8]) -> Assignment {
        Assignment::from_z(bits.to_vec(), g)
    }

    #[test]
    fn evaluate_extremes() {
        let g = graph3();
        let model = OutcomeModel::new(
            vec![0.1; 6],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![0.5; 6],
        )
        .unwrap();
        let all1 = assignment_from_bits(&g, &[1; 6]);
        let y = evaluate(&model, &g, &all1);
        for i in 0..6 {
            assert!((y[i] - (0.1 + model.beta[i] + 0.5)).abs() < 1e-15);
        }
        let all0 = assignment_from_bits(&g, &[0; 6]);
        let y = evaluate(&model, &g, &all0);
        for yi in y {
            assert!((yi - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn evaluate_sutva_reduction() {
        let g = graph3();
        let model =
            OutcomeModel::new(vec![0.3; 6], vec![2.0; 6], vec![0.0; 6]).unwrap();
        let z = assignment_from_bits(&g, &[1, 0, 1, 0, 1, 0]);
        let y = evaluate(&model, &g, &z);
        for i in 0..6 {
            assert!((y[i] - (0.3 + 2.0 * z.z[i] as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn tte_cases() {
        let m = OutcomeModel::new(vec![0.0; 4], vec![1.0; 4], vec![1.0; 4]).unwrap();
        assert!((m.tte() - 2.0).abs() < 1e-15);
        let m = OutcomeModel::new(vec![0.0; 4], vec![2.0; 4], vec![0.0; 4]).unwrap();
        assert!((m.tte() - 2.0).abs() < 1e-15);
        let m =
            OutcomeModel::new(vec![0.0; 2], vec![1.5, -0.5], vec![-1.5, 0.5]).unwrap();
        assert!(m.tte().abs() < 1e-15);
    }

    #[test]
    fn sutva_table_guard() {
        let ok = OutcomeModel::new(vec![1.0, 2.0], vec![3.0, 4.0], vec![0.0, 0.0]).unwrap();
        let t = sutva_table(&ok).unwrap();
        assert_eq!(t.y1, vec![4.0, 6.0]);
        assert_eq!(t.y0, vec![1.0, 2.0]);

        let bad = OutcomeModel::new(vec![0.0; 2], vec![0.0; 2], vec![0.0, 0.1]).unwrap();
        assert!(matches!(sutva_table(&bad), Err(Error::ModelMismatch(_))));
    }

    #[test]
    fn tensors_small_cases() {
        // two units, one edge: D_12 = g1 + g2
        let g = ClusteredGraph::new(vec![0, 0], &[(0, 1)]).unwrap();
        let model =
            OutcomeModel::new(vec![0.0; 2], vec![0.0; 2], vec![0.7, -0.2]).unwrap();
        let tens = InterferenceTensors::new(&model, &g, 1).unwrap();
        assert!((tens.dl_at(0, 0) - 0.5).abs() < 1e-15);
        assert!((tens.djl[0][0] - 1.0).abs() < 1e-15);

        // perfect clustering: off-diagonal Djl = 0
        let g = ClusteredGraph::new(vec![0, 0, 1, 1], &[(0, 1), (2, 3)]).unwrap();
        let model = OutcomeModel::new(vec![0.0; 4], vec![0.0; 4], vec![1.0; 4]).unwrap();
        let tens = InterferenceTensors::new(&model, &g, 2).unwrap();
        assert_eq!(tens.djl[0][1], 0.0);
        assert_eq!(tens.djl[1][0], 0.0);
    }

    #[test]
    fn tensors_invariants_random() {
        let g = graph3();
        let model = OutcomeModel::new(
            vec![0.2, -1.0, 0.5, 0.0, 1.5, -0.3],
            vec![1.0; 6],
            vec![0.3, 1.2, -0.7, 0.9, 0.1, 2.0],
        )
        .unwrap();
        let tens = InterferenceTensors::new(&model, &g, 3).unwrap();
        // sum_i H_i = N * gamma-bar (no isolated units here)
        let h_sum: f64 = tens.h.iter().sum();
        let g_sum: f64 = model.gamma.iter().sum();
        assert!((h_sum - g_sum).abs() < 1e-12);
        // Djl via rows equals direct edge sweep (computed independently)
        let mut djl_direct = vec![vec![0.0; 2]; 2];
        for i in 0..6 {
            for &k in g.neighbors(i) {
                let d = tens.t[i] + tens.t[k as usize];
                djl_direct[g.cluster_of(i)][g.cluster_of(k as usize)] += d;
            }
        }
        for j in 0..2 {
            for l in 0..2 {
                assert!((djl_direct[j][l] - tens.djl[j][l]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tensor_nt_bounds() {
        let g = graph3();
        let model = OutcomeModel::new(vec![0.0; 6], vec![0.0; 6], vec![0.0; 6]).unwrap();
        assert!(InterferenceTensors::new(&model, &g, 0).is_err());
        assert!(InterferenceTensors::new(&model, &g, 6).is_err());
    }
}
