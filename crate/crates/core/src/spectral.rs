//! Constrained spectral clustering and k-medoids bus allocation.
//!
//! The generalized problem `L_N v = λ B v` with `B = Q_N - (β/vol) I` is
//! solved as a definite pencil. `L_N` is only semi-definite and `B` is
//! usually indefinite, but some combination `A = L_N + c B` is positive
//! definite whenever the problem is feasible. With `A = G Gᵀ`,
//! `B v = ν A v` becomes the ordinary symmetric problem
//! `G⁻¹ B G⁻ᵀ y = ν y`, and `λ = 1/ν - c`.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{canonical_sign, sym_eigen, sym_eigenvalues, sym_norm, symmetrize};

/// Default fraction of the constraint-spectrum scale used for β.
pub const DEFAULT_BETA_ALPHA: f64 = 0.15;

/// `D^-1/2 Q D^-1/2`
pub fn normalize_constraints(q: &DMatrix<f64>, degrees: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = q.nrows();
    if q.ncols() != n || degrees.len() != n {
        return Err(Error::invalid("constraint matrix and degree vector sizes differ"));
    }
    if let Some(i) = degrees.iter().position(|&d| d <= 0.0) {
        return Err(Error::invalid(format!("degree of row {i} is not positive")));
    }
    let s: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    Ok(symmetrize(&DMatrix::from_fn(n, n, |i, j| s[i] * q[(i, j)] * s[j])))
}

/// `β = α · vol · μ`, with `μ` the `(k-1)`-th largest eigenvalue of `Q_N`
/// (the largest for k = 2). Requiring `k-1` directions with `vᵀQ_N v > β`
/// only makes sense below that eigenvalue.
pub fn default_beta(q_n: &DMatrix<f64>, vol: f64, k: usize, alpha: f64) -> f64 {
    let ev = sym_eigenvalues(q_n);
    let idx = ev.len().saturating_sub(k.saturating_sub(1).max(1));
    alpha * vol * ev.get(idx).copied().unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSolution {
    /// Every positive eigenvalue found, ascending.
    pub eigenvalues: Vec<f64>,
    /// The `k-1` retained eigenvalues.
    pub selected_values: Vec<f64>,
    /// Retained eigenvectors as columns, each scaled to `vᵀv = vol`.
    #[serde(skip)]
    pub selected: DMatrix<f64>,
    pub beta: f64,
    pub vol: f64,
    /// Shift `c` making `L_N + cB` positive definite.
    pub shift: f64,
}

fn definite_shift(l_n: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(f64, f64)> {
    let lev = sym_eigenvalues(l_n);
    let l_norm = lev.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let b_norm = sym_norm(b).max(f64::MIN_POSITIVE);
    let gap = lev
        .iter()
        .copied()
        .find(|&x| x > 1e-9 * l_norm)
        .unwrap_or(l_norm)
        .max(1e-12);
    let mut best: Option<(f64, f64)> = None;
    for sign in [1.0, -1.0] {
        for s in 0..60 {
            let scale = 1e-3 * 10f64.powf(4.0 * s as f64 / 59.0);
            let c = sign * scale * gap / b_norm;
            let a = l_n + b * c;
            let m = sym_eigenvalues(&a)[0];
            if best.is_none_or(|(bm, _)| m > bm) {
                best = Some((m, c));
            }
        }
    }
    let (m, c) = best.unwrap_or((0.0, 0.0));
    if m <= 1e-12 * l_norm.max(1.0) {
        return Err(Error::Infeasible(format!(
            "no definite combination of L_N and Q_N - (beta/vol) I found (best min eigenvalue {m:.3e})"
        )));
    }
    Ok((c, m))
}

/// Solve `L_N v = λ (Q_N - (β/vol) I) v`, keep positive-λ pairs, normalize
/// to `vᵀv = vol`, and retain the `k-1` with smallest λ.
pub fn solve_constrained(
    l_n: &DMatrix<f64>,
    q_n: &DMatrix<f64>,
    beta: f64,
    vol: f64,
    k: usize,
) -> Result<SpectralSolution> {
    let n = l_n.nrows();
    if k < 2 {
        return Err(Error::invalid(format!("k = {k}, at least 2 islands are required")));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds the {n} buses")));
    }
    if q_n.nrows() != n || q_n.ncols() != n || l_n.ncols() != n {
        return Err(Error::invalid("L_N and Q_N shapes differ"));
    }
    if !beta.is_finite() || !vol.is_finite() || vol <= 0.0 {
        return Err(Error::invalid("beta and vol must be finite, vol positive"));
    }
    let q_n = symmetrize(q_n);
    let l_n = symmetrize(l_n);
    let q_max = sym_eigenvalues(&q_n).last().copied().unwrap_or(0.0);
    if beta >= vol * q_max {
        return Err(Error::Infeasible(format!(
            "beta = {beta:.6} must be below vol * lambda_max(Q_N) = {:.6}; lower --beta",
            vol * q_max
        )));
    }
    let b = &q_n - DMatrix::identity(n, n) * (beta / vol);
    let (c, _) = definite_shift(&l_n, &b)?;
    let a = &l_n + &b * c;
    let chol = Cholesky::new(symmetrize(&a))
        .ok_or_else(|| Error::Numerical("shifted pencil lost definiteness".into()))?;
    let g = chol.l();
    // C = G⁻¹ B G⁻ᵀ
    let gi_b = g
        .solve_lower_triangular(&b)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let cmat = g
        .solve_lower_triangular(&gi_b.transpose())
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let (nus, ys) = sym_eigen(&cmat);
    let gt = g.transpose();

    let l_norm = sym_norm(&l_n);
    let tol = 1e-9 * l_norm / sym_norm(&b).max(f64::MIN_POSITIVE);
    let mut pairs: Vec<(f64, DVector<f64>)> = Vec::new();
    for (j, &nu) in nus.iter().enumerate() {
        if nu.abs() <= f64::EPSILON * nus.iter().fold(0.0f64, |m, x| m.max(x.abs())) {
            continue;
        }
        let lambda = 1.0 / nu - c;
        if lambda <= tol {
            continue;
        }
        let y = ys.column(j).into_owned();
        let mut v = gt
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::Numerical("back-substitution failed".into()))?;
        v *= vol.sqrt() / v.norm();
        canonical_sign(&mut v);
        pairs.push((lambda, v));
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    if pairs.len() < k - 1 {
        return Err(Error::Infeasible(format!(
            "{} positive eigenpairs, {} needed; use a smaller beta or fewer islands",
            pairs.len(),
            k - 1
        )));
    }
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let selected_values = eigenvalues[..k - 1].to_vec();
    let selected =
        DMatrix::from_columns(&pairs[..k - 1].iter().map(|p| p.1.clone()).collect::<Vec<_>>());
    Ok(SpectralSolution {
        eigenvalues,
        selected_values,
        selected,
        beta,
        vol,
        shift: c,
    })
}

/// `u = D^-1/2 v`, applied column-wise.
pub fn recover_indicator(v: &DMatrix<f64>, degrees: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] / degrees[i].sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMedoids {
    /// Point index of each medoid.
    pub medoids: Vec<usize>,
    /// Cluster per point, numbered by first appearance in point order.
    pub labels: Vec<usize>,
    pub cost: f64,
    pub iterations: usize,
    /// Fewer than k distinct points.
    pub degenerate: bool,
}

pub const KMEDOIDS_MAX_ITER: usize = 100;

fn assignment_cost(dist: &DMatrix<f64>, medoids: &[usize]) -> f64 {
    (0..dist.nrows())
        .map(|i| medoids.iter().map(|&m| dist[(i, m)]).fold(f64::INFINITY, f64::min))
        .sum()
}

/// Farthest-first seeding from `start`, then steepest-descent single swaps.
fn pam_from(dist: &DMatrix<f64>, k: usize, start: usize) -> (Vec<usize>, f64, usize) {
    let n = dist.nrows();
    let mut medoids = vec![start];
    while medoids.len() < k {
        let mut best = (f64::NEG_INFINITY, 0);
        for i in 0..n {
            if medoids.contains(&i) {
                continue;
            }
            let d = medoids.iter().map(|&m| dist[(i, m)]).fold(f64::INFINITY, f64::min);
            if d > best.0 {
                best = (d, i);
            }
        }
        medoids.push(best.1);
    }
    let mut cost = assignment_cost(dist, &medoids);
    let mut iterations = 0;
    while iterations < KMEDOIDS_MAX_ITER {
        let mut best: Option<(f64, usize, usize)> = None;
        for slot in 0..k {
            for cand in 0..n {
                if medoids.contains(&cand) {
                    continue;
                }
                let mut trial = medoids.clone();
                trial[slot] = cand;
                let c = assignment_cost(dist, &trial);
                if c < best.map_or(cost, |b| b.0) {
                    best = Some((c, slot, cand));
                }
            }
        }
        let Some((c, slot, cand)) = best else { break };
        // guard against cycling on round-off
        if c >= cost - 1e-12 * cost.abs().max(1.0) {
            break;
        }
        medoids[slot] = cand;
        cost = c;
        iterations += 1;
    }
    (medoids, cost, iterations)
}

/// PAM local search restarted from a farthest-first seeding at every point
/// in index order; the cheapest result wins, earlier starts on ties.
/// Rows of `points` are observations; distance is Euclidean.
pub fn kmedoids_assign(points: &DMatrix<f64>, k: usize) -> Result<KMedoids> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} outside [1, {n}]")));
    }
    let dist = DMatrix::from_fn(n, n, |i, j| (points.row(i) - points.row(j)).norm());

    let mut distinct = 0;
    for i in 0..n {
        if (0..i).all(|j| dist[(i, j)] > 0.0) {
            distinct += 1;
        }
    }
    let degenerate = distinct < k;
    if degenerate {
        log::warn!("k-medoids: {distinct} distinct points for k = {k}");
    }

    let mut best: Option<(Vec<usize>, f64, usize)> = None;
    for start in 0..n {
        let run = pam_from(&dist, k, start);
        if best.as_ref().is_none_or(|b| run.1 < b.1) {
            best = Some(run);
        }
    }
    let (medoids, cost, iterations) = best.unwrap_or_default();

    let raw: Vec<usize> = (0..n)
        .map(|i| {
            let mut best = (f64::INFINITY, usize::MAX, 0);
            for (slot, &m) in medoids.iter().enumerate() {
                let d = dist[(i, m)];
                if d < best.0 || (d == best.0 && m < best.1) {
                    best = (d, m, slot);
                }
            }
            best.2
        })
        .collect();
    let labels = crate::coherency::canonical_labels(&raw);
    Ok(KMedoids {
        medoids,
        labels,
        cost,
        iterations,
        degenerate,
    })
}
