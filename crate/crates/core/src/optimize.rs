//! Design optimizers: the closed-form symmetric-family optimum, the
//! Beta-shape search, and a multi-start solver for (possibly indefinite)
//! quadratic objectives over the mean-constrained box.

use serde::{Deserialize, Serialize};

use crate::analytics::{variance_from_moments, PerfectClusteringMse, VarianceCoefficients};
use crate::designs::{
    beta_quantile_pi, symmetric_three_point_pi, symmetric_two_point_pi, ProportionVector,
};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::stats::{csum, MomentSummary};

/// Tight bounds on `mu2c` for a proportion vector with the given mean: the
/// maximum `mean (1 - mean)` is attained by {0,1}-valued vectors.
pub fn variance_bound_pi(mean: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&mean) {
        return Err(Error::InvalidInput(format!("mean {mean} outside [0,1]")));
    }
    Ok((0.0, mean * (1.0 - mean)))
}

/// Bounds on the excess fourth moment `mu4c - mu2c^2` within the symmetric
/// family at fixed `mu2c`: the minimum 0 is attained by two-point members,
/// the maximum `mean^2 mu2c - mu2c^2` by three-point members with extremes
/// `{0, 2 mean}` (requires `mean <= 1/2`).
pub fn fourth_moment_bound(mu2c: f64, mean: f64) -> Result<(f64, f64)> {
    if mean > 0.5 + 1e-12 {
        return Err(Error::InvalidInput(
            "fourth-moment bound stated for mean <= 1/2 (use the pi -> 1-pi symmetry)".into(),
        ));
    }
    let cap = mean * mean;
    if !(0.0..=cap + 1e-12).contains(&mu2c) {
        return Err(Error::InvalidInput(format!(
            "mu2c = {mu2c} outside [0, mean^2 = {cap}]"
        )));
    }
    Ok((0.0, (cap * mu2c - mu2c * mu2c).max(0.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetricCase {
    TwoPoint,
    ThreePoint,
}

/// Variance-minimizing member of the symmetric family.
#[derive(Clone, Debug)]
pub struct SymmetricOptimum {
    /// Discretized vector for the requested `M` (exact moments for even-`M`
    /// two-point optima; three-point portions round to multiples of `1/M`).
    pub pi_star: ProportionVector,
    /// Displacement from the mean.
    pub d: f64,
    pub case: SymmetricCase,
    /// Moments of the continuous optimum (`mu3c = 0` by symmetry).
    pub moments: MomentSummary,
    /// Objective at the continuous optimum's moments.
    pub objective_value: f64,
    /// Objective re-evaluated at the discretized vector's moments.
    pub snapped_objective: f64,
}

/// Argmin of `c1 v + c2 v^2` over `v in [0, v_max]` (candidates: both ends
/// and the interior stationary point), ties toward smaller `v`.
fn quadratic_argmin(c1: f64, c2: f64, v_max: f64) -> f64 {
    let eval = |v: f64| c1 * v + c2 * v * v;
    let mut best_v = 0.0;
    let mut best = 0.0f64; // value at v = 0
    let f_end = eval(v_max);
    if f_end < best {
        best = f_end;
        best_v = v_max;
    }
    if c2 != 0.0 {
        let v_int = -c1 / (2.0 * c2);
        if v_int > 0.0 && v_int < v_max && eval(v_int) < best {
            best_v = v_int;
        }
    }
    best_v
}

/// Closed-form optimizer over the symmetric family: two-point allocation
/// when `V4 >= 0` (minimum excess fourth moment), three-point with extremes
/// `{0, 2 mean}` when `V4 < 0` (maximum excess). Requires `mean <= 1/2`;
/// apply the `pi -> 1 - pi` symmetry otherwise.
pub fn symmetric_family_optimum(
    coeffs: &VarianceCoefficients,
    mean: f64,
    m: usize,
) -> Result<SymmetricOptimum> {
    if !(0.0..=0.5 + 1e-12).contains(&mean) {
        return Err(Error::InvalidInput(
            "symmetric optimum stated for mean <= 1/2 (use the pi -> 1-pi symmetry)".into(),
        ));
    }
    let [_, v1, v2, _, v4] = coeffs.v;
    let v_max = mean * mean;
    let (case, v_opt) = if v4 >= 0.0 {
        (SymmetricCase::TwoPoint, quadratic_argmin(v1, v2, v_max))
    } else {
        (
            SymmetricCase::ThreePoint,
            quadratic_argmin(v1 + v4 * mean * mean, v2 - v4, v_max),
        )
    };
    let d = v_opt.sqrt();
    let (moments, pi_star) = match case {
        SymmetricCase::TwoPoint => {
            let mom = MomentSummary::from_parts(mean, v_opt, 0.0, v_opt * v_opt);
            (mom, symmetric_two_point_pi(m, mean, d)?)
        }
        SymmetricCase::ThreePoint => {
            // delta in {0, mean^2}; fraction at extremes f = v / mean^2
            let f = if v_max > 0.0 { v_opt / v_max } else { 0.0 };
            let mu4c = f * v_max * v_max; // E delta^2
            let mom = MomentSummary::from_parts(mean, v_opt, 0.0, mu4c);
            (mom, symmetric_three_point_pi(m, mean, f)?)
        }
    };
    let objective_value = variance_from_moments(coeffs, &moments);
    let snapped_objective = variance_from_moments(coeffs, &pi_star.moments());
    Ok(SymmetricOptimum { pi_star, d, case, moments, objective_value, snapped_objective })
}

/// Shape-parameter search over quantile-discretized Beta(lambda, lambda)
/// designs: evaluates the variance polynomial over a grid and refines around
/// the best grid point by golden-section to `1e-4` in lambda.
pub struct BetaShapeResult {
    pub lambda_star: f64,
    pub objective_star: f64,
    /// The evaluated `(lambda, objective)` grid curve.
    pub curve: Vec<(f64, f64)>,
}

pub fn default_lambda_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.02).collect();
    grid.extend([0.6, 0.8, 1.0, 1.5, 2.0, 5.0, f64::INFINITY]);
    grid
}

pub fn beta_shape_search(
    coeffs: &VarianceCoefficients,
    m: usize,
    grid: Option<&[f64]>,
) -> Result<BetaShapeResult> {
    let grid: Vec<f64> = match grid {
        Some(g) => g.to_vec(),
        None => default_lambda_grid(),
    };
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty lambda grid".into()));
    }
    let objective = |lambda: f64| -> Result<f64> {
        let pi = beta_quantile_pi(lambda, m)?;
        Ok(variance_from_moments(coeffs, &pi.moments()))
    };
    let mut curve = Vec::with_capacity(grid.len());
    for &l in &grid {
        curve.push((l, objective(l)?));
    }
    let (mut best_idx, mut best) = (0usize, curve[0].1);
    for (i, &(_, v)) in curve.iter().enumerate() {
        if v < best {
            best = v;
            best_idx = i;
        }
    }
    let mut lambda_star = curve[best_idx].0;
    let mut objective_star = best;
    // golden-section refinement between the finite neighbors of the best
    // grid point
    if lambda_star.is_finite() {
        let lo = if best_idx > 0 && curve[best_idx - 1].0.is_finite() {
            curve[best_idx - 1].0
        } else {
            (lambda_star - 0.5).max(0.0)
        };
        let hi = if best_idx + 1 < curve.len() && curve[best_idx + 1].0.is_finite() {
            curve[best_idx + 1].0
        } else {
            lambda_star * 2.0 + 0.5
        };
        let phi = (5.0f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        let mut x1 = b - phi * (b - a);
        let mut x2 = a + phi * (b - a);
        let mut f1 = objective(x1)?;
        let mut f2 = objective(x2)?;
        while b - a > 1e-4 {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = objective(x1)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = objective(x2)?;
            }
        }
        let mid = 0.5 * (a + b);
        let f_mid = objective(mid)?;
        if f_mid < objective_star {
            lambda_star = mid;
            objective_star = f_mid;
        }
    }
    Ok(BetaShapeResult { lambda_star, objective_star, curve })
}

/// Result of the deterministic-design solver.
#[derive(Clone, Debug)]
pub struct QpResult {
    pub pi_hat: ProportionVector,
    pub objective: f64,
    pub starts_tried: usize,
    /// Whether the solution weakly dominates the stratified point and the
    /// best cluster-based vertex tried.
    pub dominated_stratified: bool,
    pub dominated_cluster_based: bool,
    /// Nearest integer-consistent vector (per-cluster counts) and its
    /// objective, when cluster sizes are supplied.
    pub snapped: Option<(ProportionVector, f64)>,
}

/// Objective for the deterministic solver: a quadratic form or the
/// perfect-clustering conditional MSE (quartic; handled by sequential
/// quadratic approximation).
pub enum DeterministicObjective<'a> {
    Quadratic(&'a crate::analytics::QuadraticForm),
    ConditionalMse(&'a PerfectClusteringMse),
}

impl DeterministicObjective<'_> {
    fn m(&self) -> usize {
        match self {
            DeterministicObjective::Quadratic(q) => q.m(),
            DeterministicObjective::ConditionalMse(f) => f.m(),
        }
    }

    fn value(&self, pi: &[f64]) -> f64 {
        match self {
            DeterministicObjective::Quadratic(q) => q.objective(pi),
            DeterministicObjective::ConditionalMse(f) => f.objective(pi),
        }
    }

    /// Gradient of the objective.
    fn gradient(&self, pi: &[f64]) -> Vec<f64> {
        match self {
            DeterministicObjective::Quadratic(q) => {
                let m = q.m();
                let mut grad = vec![0.0; m];
                for j in 0..m {
                    let mut acc = q.linear[j];
                    for l in 0..m {
                        acc += (q.q[j][l] + q.q[l][j]) * pi[l];
                    }
                    grad[j] = q.scale * acc;
                }
                grad
            }
            DeterministicObjective::ConditionalMse(f) => {
                let m = f.m();
                let b = f.bias_proxy(pi);
                let mut grad = vec![0.0; m];
                for j in 0..m {
                    let db = 2.0 * pi[j] * f.gamma_cluster[j] + f.bias_linear[j];
                    // variance term: N_j d/dp [ p(1-p)(sA + 2p sAB + p^2 sB) ]
                    let p = pi[j];
                    let s = f.s_a[j] + 2.0 * p * f.s_ab[j] + p * p * f.s_b[j];
                    let ds = 2.0 * f.s_ab[j] + 2.0 * p * f.s_b[j];
                    let dv = f.sizes[j] as f64 * ((1.0 - 2.0 * p) * s + p * (1.0 - p) * ds);
                    grad[j] = f.scale * (2.0 * b * db + dv);
                }
                grad
            }
        }
    }
}

/// Euclidean projection onto `{ sum pi = target, 0 <= pi <= 1 }` by bisection
/// on the dual shift.
pub(crate) fn project_capped_simplex(y: &[f64], target: f64) -> Vec<f64> {
    let m = y.len();
    debug_assert!(target >= -1e-9 && target <= m as f64 + 1e-9);
    let sum_at = |theta: f64| -> f64 {
        csum(y.iter().map(|&v| (v - theta).clamp(0.0, 1.0)))
    };
    let (mut lo, mut hi) = (-2.0, 2.0);
    let max_abs = y.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    lo -= max_abs;
    hi += max_abs;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum_at(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let theta = 0.5 * (lo + hi);
    y.iter().map(|&v| (v - theta).clamp(0.0, 1.0)).collect()
}

/// Dense symmetric linear solve (Gaussian elimination with partial pivoting)
/// for the small KKT systems of the active-set refinement.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        for r in (col + 1)..n {
            let f = a[r][col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in (r + 1)..n {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    Some(x)
}

struct PgdOutcome {
    pi: Vec<f64>,
    value: f64,
}

/// Projected gradient descent with exact line search on a local quadratic
/// model, followed by an equality-constrained refinement on the free set.
fn pgd_from(obj: &DeterministicObjective, start: &[f64], target: f64) -> PgdOutcome {
    let m = start.len();
    let mut x = project_capped_simplex(start, target);
    let mut fx = obj.value(&x);
    let mut step = 1.0;
    for _ in 0..600 {
        let grad = obj.gradient(&x);
        let trial: Vec<f64> = x.iter().zip(&grad).map(|(&xi, &gi)| xi - step * gi).collect();
        let proj = project_capped_simplex(&trial, target);
        let dir: Vec<f64> = proj.iter().zip(&x).map(|(&p, &xi)| p - xi).collect();
        let dir_norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        if dir_norm < 1e-12 {
            break;
        }
        // exact line search on eta in [0,1] for quadratics; backtracking
        // otherwise (the segment stays feasible by convexity of the set)
        let g_dot_d: f64 = grad.iter().zip(&dir).map(|(&g, &d)| g * d).sum();
        let mut eta = 1.0;
        match obj {
            DeterministicObjective::Quadratic(q) => {
                // f(x + eta d) = f(x) + eta g'd + eta^2 d'Qd * scale
                let mut dqd = 0.0;
                for j in 0..m {
                    for l in 0..m {
                        dqd += dir[j] * q.q[j][l] * dir[l];
                    }
                }
                dqd *= q.scale;
                if dqd > 0.0 {
                    eta = (-g_dot_d / (2.0 * dqd)).clamp(0.0, 1.0);
                    if eta == 0.0 {
                        eta = 1.0;
                    }
                } else {
                    eta = 1.0; // concave along d: endpoint
                }
                let cand: Vec<f64> =
                    x.iter().zip(&dir).map(|(&xi, &d)| xi + eta * d).collect();
                let f_cand = obj.value(&cand);
                let end: Vec<f64> = x.iter().zip(&dir).map(|(&xi, &d)| xi + d).collect();
                let f_end = obj.value(&end);
                if f_end < f_cand.min(fx) {
                    x = end;
                    fx = f_end;
                } else if f_cand < fx {
                    x = cand;
                    fx = f_cand;
                } else {
                    step *= 0.5;
                    if step < 1e-10 {
                        break;
                    }
                    continue;
                }
            }
            DeterministicObjective::ConditionalMse(_) => {
                let mut improved = false;
                for _ in 0..30 {
                    let cand: Vec<f64> =
                        x.iter().zip(&dir).map(|(&xi, &d)| xi + eta * d).collect();
                    let f_cand = obj.value(&cand);
                    if f_cand < fx - 1e-16 * (1.0 + fx.abs()) {
                        x = cand;
                        fx = f_cand;
                        improved = true;
                        break;
                    }
                    eta *= 0.5;
                }
                if !improved {
                    if g_dot_d >= -1e-12 {
                        break;
                    }
                    step *= 0.5;
                    if step < 1e-10 {
                        break;
                    }
                    continue;
                }
            }
        }
        step = (step * 1.3).min(1e3);
    }

    // active-set refinement for the quadratic case: solve the KKT system on
    // the free coordinates, keep only on improvement
    if let DeterministicObjective::Quadratic(q) = obj {
        let free: Vec<usize> = (0..m).filter(|&j| x[j] > 1e-9 && x[j] < 1.0 - 1e-9).collect();
        if free.len() >= 2 {
            let k = free.len();
            let mut a = vec![vec![0.0; k + 1]; k + 1];
            let mut rhs = vec![0.0; k + 1];
            let fixed_sum: f64 = (0..m).filter(|j| !free.contains(j)).map(|j| x[j]).sum();
            for (r, &jr) in free.iter().enumerate() {
                for (c, &jc) in free.iter().enumerate() {
                    a[r][c] = q.q[jr][jc] + q.q[jc][jr];
                }
                a[r][k] = 1.0;
                a[k][r] = 1.0;
                let mut lin = q.linear[jr];
                for j in 0..m {
                    if !free.contains(&j) {
                        lin += (q.q[jr][j] + q.q[j][jr]) * x[j];
                    }
                }
                rhs[r] = -lin;
            }
            rhs[k] = target - fixed_sum;
            if let Some(sol) = solve_dense(a, rhs) {
                let mut cand = x.clone();
                let mut ok = true;
                for (r, &jr) in free.iter().enumerate() {
                    if !(0.0..=1.0).contains(&sol[r]) {
                        ok = false;
                        break;
                    }
                    cand[jr] = sol[r];
                }
                if ok {
                    let f_cand = obj.value(&cand);
                    if f_cand < fx {
                        x = cand;
                        fx = f_cand;
                    }
                }
            }
        }
    }
    PgdOutcome { pi: x, value: fx }
}

/// Minimize a (possibly indefinite) objective over
/// `{ 0 <= pi_j <= 1, sum pi_j = M * mean }` by multi-start local descent.
/// Starts: the stratified point, distinct cluster-based vertices (up to a
/// cap), and random feasible points. The result weakly dominates both
/// canonical baselines because they are included as starts and descent never
/// increases the objective. Deterministic given the seed; ties break toward
/// the smaller start index.
pub fn deterministic_qp(
    objective: &DeterministicObjective,
    mean: f64,
    extra_starts: usize,
    seed: u64,
    sizes: Option<&[usize]>,
) -> Result<QpResult> {
    let m = objective.m();
    let target = mean * m as f64;
    if !(0.0..=m as f64).contains(&target) {
        return Err(Error::InvalidInput(format!(
            "infeasible mean {mean} for M = {m}"
        )));
    }

    let mut starts: Vec<Vec<f64>> = Vec::new();
    starts.push(vec![mean; m]); // stratified
    // cluster-based vertices: target treated count must be integral to be
    // feasible as a vertex; otherwise the projection moves one coordinate
    let k = target.round() as usize;
    let vertex_feasible = (target - k as f64).abs() < 1e-9 && k <= m;
    let mut rng = Rng::keyed(&[seed, 0x9f]);
    let vertex_cap = (2 * m).min(64);
    if vertex_feasible {
        // deterministic sweep of contiguous-ish vertices plus random ones
        for shift in 0..m.min(vertex_cap / 2) {
            let mut v = vec![0.0; m];
            for t in 0..k {
                v[(shift + t) % m] = 1.0;
            }
            starts.push(v);
        }
        for _ in 0..vertex_cap / 2 {
            let mut v = vec![0.0; m];
            for idx in rng.sample_without_replacement(m, k) {
                v[idx] = 1.0;
            }
            starts.push(v);
        }
    }
    for _ in 0..extra_starts.max(2) {
        let raw: Vec<f64> = (0..m).map(|_| rng.next_f64()).collect();
        starts.push(project_capped_simplex(&raw, target));
    }

    let mut best: Option<PgdOutcome> = None;
    let mut strat_value = f64::INFINITY;
    let mut vertex_value = f64::INFINITY;
    for (idx, s) in starts.iter().enumerate() {
        let out = pgd_from(objective, s, target);
        if idx == 0 {
            strat_value = objective.value(&starts[0]);
        }
        if vertex_feasible && idx >= 1 && idx <= vertex_cap {
            vertex_value = vertex_value.min(objective.value(s));
        }
        let better = match &best {
            None => true,
            Some(b) => out.value < b.value,
        };
        if better {
            best = Some(out);
        }
    }
    let best = best.expect("at least one start");
    let starts_tried = starts.len();

    let snapped = sizes.map(|sz| {
        let snapped_pi = snap_to_counts(&best.pi, sz, target);
        let val = objective.value(snapped_pi.as_slice());
        (snapped_pi, val)
    });

    Ok(QpResult {
        objective: best.value,
        dominated_stratified: best.value <= strat_value + 1e-10,
        dominated_cluster_based: best.value <= vertex_value + 1e-10,
        pi_hat: ProportionVector::new(
            best.pi.iter().map(|&x| x.clamp(0.0, 1.0)).collect(),
        )?,
        starts_tried,
        snapped,
    })
}

/// Round to per-cluster counts while preserving the total treated count
/// (largest-remainder apportionment).
pub fn snap_to_counts(pi: &[f64], sizes: &[usize], target_mean_times_m: f64) -> ProportionVector {
    let total_units: usize = sizes.iter().sum();
    let nt = (target_mean_times_m / pi.len() as f64 * total_units as f64).round() as i64;
    let raw: Vec<f64> = pi.iter().zip(sizes).map(|(&p, &s)| p * s as f64).collect();
    let mut counts: Vec<i64> = raw.iter().map(|&x| x.floor() as i64).collect();
    let mut rem: Vec<(f64, usize)> =
        raw.iter().enumerate().map(|(j, &x)| (x - x.floor(), j)).collect();
    rem.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut deficit = nt - counts.iter().sum::<i64>();
    let mut idx = 0;
    while deficit > 0 && idx < rem.len() {
        let j = rem[idx].1;
        if counts[j] < sizes[j] as i64 {
            counts[j] += 1;
            deficit -= 1;
        }
        idx += 1;
    }
    // deficit < 0: remove from the smallest remainders
    idx = rem.len();
    while deficit < 0 && idx > 0 {
        idx -= 1;
        let j = rem[idx].1;
        if counts[j] > 0 {
            counts[j] -= 1;
            deficit += 1;
        }
    }
    ProportionVector::new(
        counts.iter().zip(sizes).map(|(&c, &s)| c as f64 / s as f64).collect(),
    )
    .expect("counts within range")
}
