//! Dynamic time warping with squared local distance.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[inline]
pub fn local_distance(a: f64, b: f64) -> f64 {
    let d = a - b;
    d * d
}

/// Local distance of every sample pair, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceGrid {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<f64>,
}

impl DistanceGrid {
    pub fn new(p: &[f64], q: &[f64]) -> Self {
        let cells = p
            .iter()
            .flat_map(|&a| q.iter().map(move |&b| local_distance(a, b)))
            .collect();
        Self {
            rows: p.len(),
            cols: q.len(),
            cells,
        }
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.cells[m * self.cols + n]
    }
}

/// Zero-based `(row, col)` cells from `(0,0)` to `(rows-1, cols-1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpingPath(pub Vec<(usize, usize)>);

impl WarpingPath {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Check boundary, continuity, monotonicity and the no-zero-step rule.
    pub fn is_valid(&self, rows: usize, cols: usize) -> bool {
        let cells = &self.0;
        if cells.first() != Some(&(0, 0)) || cells.last() != Some(&(rows - 1, cols - 1)) {
            return false;
        }
        cells.windows(2).all(|w| {
            let dr = w[1].0 as i64 - w[0].0 as i64;
            let dc = w[1].1 as i64 - w[0].1 as i64;
            (0..=1).contains(&dr) && (0..=1).contains(&dc) && dr + dc > 0
        })
    }

    /// Sum of local distances along the path, accumulated in path order.
    pub fn cost(&self, grid: &DistanceGrid) -> f64 {
        let mut s = 0.0;
        for &(m, n) in &self.0 {
            s += grid.get(m, n);
        }
        s
    }

    pub fn transposed(&self) -> WarpingPath {
        WarpingPath(self.0.iter().map(|&(m, n)| (n, m)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwOutcome {
    pub distance: f64,
    pub path: WarpingPath,
}

fn check(p: &[f64], q: &[f64], band: Option<usize>) -> Result<()> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::invalid("DTW needs non-empty series"));
    }
    if let Some(b) = band {
        let diff = p.len().abs_diff(q.len());
        if b < diff {
            return Err(Error::InfeasibleBand { band: b, diff });
        }
    }
    Ok(())
}

#[inline]
fn in_band(m: usize, n: usize, band: Option<usize>) -> bool {
    band.is_none_or(|b| m.abs_diff(n) <= b)
}

/// Predecessor choice with ties resolved diagonal, then row-advance
/// `(m-1, n)`, then column-advance `(m, n-1)`.
#[inline]
fn best_of(diag: f64, up: f64, left: f64) -> (f64, u8) {
    let mut best = (diag, 0u8);
    if up < best.0 {
        best = (up, 1);
    }
    if left < best.0 {
        best = (left, 2);
    }
    best
}

/// Exact DTW with path recovery over the full cumulative-cost table.
pub fn dtw(p: &[f64], q: &[f64], band: Option<usize>) -> Result<DtwOutcome> {
    check(p, q, band)?;
    let (i, k) = (p.len(), q.len());
    let w = k + 1;
    let mut acc = vec![f64::INFINITY; (i + 1) * w];
    acc[0] = 0.0;
    for m in 1..=i {
        for n in 1..=k {
            if !in_band(m - 1, n - 1, band) {
                continue;
            }
            let (prev, _) = best_of(
                acc[(m - 1) * w + n - 1],
                acc[(m - 1) * w + n],
                acc[m * w + n - 1],
            );
            acc[m * w + n] = prev + local_distance(p[m - 1], q[n - 1]);
        }
    }
    let distance = acc[i * w + k];
    if !distance.is_finite() {
        return Err(Error::Numerical("non-finite DTW cost".into()));
    }

    let mut path = Vec::with_capacity(i + k);
    let (mut m, mut n) = (i, k);
    loop {
        path.push((m - 1, n - 1));
        if m == 1 && n == 1 {
            break;
        }
        let (_, step) = best_of(
            acc[(m - 1) * w + n - 1],
            acc[(m - 1) * w + n],
            acc[m * w + n - 1],
        );
        match step {
            0 => {
                m -= 1;
                n -= 1;
            }
            1 => m -= 1,
            _ => n -= 1,
        }
    }
    path.reverse();
    Ok(DtwOutcome {
        distance,
        path: WarpingPath(path),
    })
}

/// Distance only, keeping two rows of the table. Bit-identical to [`dtw`].
pub fn dtw_distance(p: &[f64], q: &[f64], band: Option<usize>) -> Result<f64> {
    check(p, q, band)?;
    let k = q.len();
    let mut prev = vec![f64::INFINITY; k + 1];
    let mut cur = vec![f64::INFINITY; k + 1];
    prev[0] = 0.0;
    for (m, &a) in p.iter().enumerate() {
        cur[0] = f64::INFINITY;
        for n in 1..=k {
            cur[n] = if in_band(m, n - 1, band) {
                let (best, _) = best_of(prev[n - 1], prev[n], cur[n - 1]);
                best + local_distance(a, q[n - 1])
            } else {
                f64::INFINITY
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[k];
    if !d.is_finite() {
        return Err(Error::Numerical("non-finite DTW cost".into()));
    }
    Ok(d)
}

/// Symmetric matrix of DTW distances; pairs are evaluated in parallel and
/// written back by index, so the result does not depend on scheduling.
pub fn pairwise_dtw<T: AsRef<[f64]> + Sync>(ts: &[T], band: Option<usize>) -> Result<DMatrix<f64>> {
    let n = ts.len();
    if n < 2 {
        return Err(Error::invalid("pairwise DTW needs at least two series"));
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .collect();
    let dists: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| dtw_distance(ts[a].as_ref(), ts[b].as_ref(), band))
        .collect::<Result<_>>()?;
    let mut out = DMatrix::zeros(n, n);
    for (&(a, b), &d) in pairs.iter().zip(&dists) {
        out[(a, b)] = d;
        out[(b, a)] = d;
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::local_distance;

    /// Minimum cost over every warping path, by explicit enumeration.
    pub fn brute_force(p: &[f64], q: &[f64], band: Option<usize>) -> Option<f64> {
        fn walk(
            p: &[f64],
            q: &[f64],
            band: Option<usize>,
            m: usize,
            n: usize,
            acc: f64,
            best: &mut Option<f64>,
        ) {
            if let Some(b) = band {
                if m.abs_diff(n) > b {
                    return;
                }
            }
            let acc = acc + local_distance(p[m], q[n]);
            if m + 1 == p.len() && n + 1 == q.len() {
                if best.is_none_or(|b| acc < b) {
                    *best = Some(acc);
                }
                return;
            }
            if m + 1 < p.len() && n + 1 < q.len() {
                walk(p, q, band, m + 1, n + 1, acc, best);
            }
            if m + 1 < p.len() {
                walk(p, q, band, m + 1, n, acc, best);
            }
            if n + 1 < q.len() {
                walk(p, q, band, m, n + 1, acc, best);
            }
        }
        let mut best = None;
        walk(p, q, band, 0, 0, 0.0, &mut best);
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn local_distance_examples() {
        assert_eq!(local_distance(3.0, 5.0), 4.0);
        assert_eq!(local_distance(1.25, 1.25), 0.0);
        assert_eq!(local_distance(0.0, -2.0), 4.0);
    }

    #[test]
    fn identical_series_diagonal_path() {
        let out = dtw(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], None).unwrap();
        assert_eq!(out.distance, 0.0);
        assert_eq!(out.path.0, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn two_by_two_example() {
        let out = dtw(&[0.0, 1.0], &[0.0, 2.0], None).unwrap();
        assert_eq!(out.distance, 1.0);
        assert_eq!(out.path.0, vec![(0, 0), (1, 1)]);
        assert_eq!(oracle::brute_force(&[0.0, 1.0], &[0.0, 2.0], None), Some(1.0));
    }

    #[test]
    fn narrow_band_rejected() {
        assert!(matches!(
            dtw(&[0.0; 5], &[0.0; 2], Some(2)),
            Err(Error::InfeasibleBand { band: 2, diff: 3 })
        ));
        assert!(dtw(&[0.0; 5], &[0.0; 2], Some(3)).is_ok());
    }

    #[test]
    fn tie_prefers_diagonal_then_row() {
        // all-zero grid: every path costs 0, diagonal moves must win
        let out = dtw(&[0.0; 3], &[0.0; 5], None).unwrap();
        assert_eq!(out.path.0, vec![(0, 0), (0, 1), (0, 2), (1, 3), (2, 4)]);
        let out = dtw(&[0.0; 5], &[0.0; 3], None).unwrap();
        assert_eq!(out.path.0, vec![(0, 0), (1, 0), (2, 0), (3, 1), (4, 2)]);
    }

    #[test]
    fn pairwise_block_structure() {
        let a = vec![0.0, 1.0, 2.0, 1.0];
        let b = vec![5.0, 5.0, 5.0];
        let m = pairwise_dtw(&[a.clone(), a, b], None).unwrap();
        assert_eq!(m[(0, 1)], 0.0);
        assert!(m[(0, 2)] > 0.0);
        assert_eq!(m, m.transpose());
        assert!((0..3).all(|i| m[(i, i)] == 0.0));
    }

    #[test]
    fn pairwise_unequal_lengths() {
        let series: Vec<Vec<f64>> = (0..10)
            .map(|g| (0..(40 + g * 3)).map(|t| (t as f64 * 0.1 * (g + 1) as f64).sin()).collect())
            .collect();
        let m = pairwise_dtw(&series, None).unwrap();
        assert!(m.iter().all(|x| x.is_finite()));
    }

    fn series(max: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-std::f64::consts::PI..std::f64::consts::PI, 1..=max)
    }

    proptest! {
        #[test]
        fn matches_enumeration(p in series(6), q in series(6)) {
            let dp = dtw(&p, &q, None).unwrap();
            prop_assert_eq!(Some(dp.distance), oracle::brute_force(&p, &q, None));
            prop_assert_eq!(dtw_distance(&p, &q, None).unwrap(), dp.distance);
        }

        #[test]
        fn banded_matches_enumeration(p in series(6), q in series(6), extra in 0usize..3) {
            let band = p.len().abs_diff(q.len()) + extra;
            let dp = dtw(&p, &q, Some(band)).unwrap();
            prop_assert_eq!(Some(dp.distance), oracle::brute_force(&p, &q, Some(band)));
            prop_assert!(dp.path.0.iter().all(|&(m, n)| m.abs_diff(n) <= band));
        }

        #[test]
        fn path_valid_and_cost_exact(p in series(30), q in series(30)) {
            let out = dtw(&p, &q, None).unwrap();
            prop_assert!(out.path.is_valid(p.len(), q.len()));
            let grid = DistanceGrid::new(&p, &q);
            prop_assert_eq!(out.path.cost(&grid).to_bits(), out.distance.to_bits());
        }

        #[test]
        fn symmetric_and_bounded(p in series(20), q in series(20)) {
            let d = dtw_distance(&p, &q, None).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert_eq!(dtw_distance(&q, &p, None).unwrap(), d);
            prop_assert_eq!(dtw_distance(&p, &p, None).unwrap(), 0.0);
            if p.len() == q.len() {
                let diag: f64 = p.iter().zip(&q).map(|(a, b)| local_distance(*a, *b)).sum();
                prop_assert!(d <= diag);
            }
        }

        #[test]
        fn widening_band_never_increases(p in series(15), q in series(15)) {
            let base = p.len().abs_diff(q.len());
            let mut last = f64::INFINITY;
            for b in base..base + 16 {
                let d = dtw_distance(&p, &q, Some(b)).unwrap();
                prop_assert!(d <= last);
                last = d;
            }
            prop_assert_eq!(last, dtw_distance(&p, &q, None).unwrap());
        }
    }
}
