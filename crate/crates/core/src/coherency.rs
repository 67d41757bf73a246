//! Coherent-group identification from a DTW distance matrix, the
//! must-link / cannot-link matrix, and the correlation baseline.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::NetworkCase;
use crate::rotor::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherencyModel {
    pub k: usize,
    /// Generator ids per group. Groups are ordered by their first member's
    /// position in the input, members keep input order.
    pub groups: Vec<Vec<String>>,
    /// Bus-indexed constraint matrix, rows in `NetworkCase::buses` order.
    #[serde(skip)]
    pub q: DMatrix<f64>,
}

/// One agglomeration step: clusters `a` and `b` (member lists) joined at
/// `height`.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub height: f64,
}

/// Complete-linkage dendrogram over `n` points.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

fn check_square(d: &DMatrix<f64>) -> Result<usize> {
    if d.nrows() != d.ncols() {
        return Err(Error::invalid("distance matrix must be square"));
    }
    if d.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::invalid("distance matrix must be finite and non-negative"));
    }
    Ok(d.nrows())
}

impl Dendrogram {
    /// Agglomerate until one cluster remains. Among equally close cluster
    /// pairs the one whose members come first in input order merges first.
    pub fn complete_linkage(d: &DMatrix<f64>) -> Result<Dendrogram> {
        let n = check_square(d)?;
        let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut merges = Vec::with_capacity(n.saturating_sub(1));
        let linkage = |a: &[usize], b: &[usize]| {
            let mut m = 0.0f64;
            for &i in a {
                for &j in b {
                    m = m.max(d[(i, j)].max(d[(j, i)]));
                }
            }
            m
        };
        while clusters.len() > 1 {
            let mut best = (f64::INFINITY, 0, 1);
            for x in 0..clusters.len() {
                for y in x + 1..clusters.len() {
                    let h = linkage(&clusters[x], &clusters[y]);
                    if h < best.0 {
                        best = (h, x, y);
                    }
                }
            }
            let (height, x, y) = best;
            let b = clusters.remove(y);
            let a = clusters[x].clone();
            clusters[x].extend(&b);
            clusters[x].sort_unstable();
            merges.push(Merge { a, b, height });
        }
        Ok(Dendrogram { n, merges })
    }

    /// Height of the merge that left `c` clusters; 0 for `c == n`.
    pub fn merge_dist(&self, c: usize) -> f64 {
        if c >= self.n || c == 0 {
            return 0.0;
        }
        self.merges[self.n - c - 1].height
    }

    /// Cluster label per point after undoing all but the first `n - k`
    /// merges. Labels are numbered by first appearance.
    pub fn cut(&self, k: usize) -> Vec<usize> {
        let mut owner: Vec<usize> = (0..self.n).collect();
        for m in self.merges.iter().take(self.n.saturating_sub(k)) {
            let target = owner[m.a[0]];
            for &i in &m.b {
                let from = owner[i];
                for o in owner.iter_mut() {
                    if *o == from {
                        *o = target;
                    }
                }
            }
        }
        canonical_labels(&owner)
    }
}

/// Relabel so labels appear as 0, 1, 2, ... in index order.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

pub fn groups_from_labels(labels: &[usize], ids: &[String]) -> Vec<Vec<String>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); k];
    for (l, id) in labels.iter().zip(ids) {
        groups[*l].push(id.clone());
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: usize,
    /// `(k, gap)` for every candidate, ascending k.
    pub gaps: Vec<(usize, f64)>,
    /// All off-diagonal distances equal; `k` fell back to 2.
    pub degenerate: bool,
}

/// Choose k as the largest jump in complete-linkage merge height,
/// `merge_dist(k-1) - merge_dist(k)`, ties toward smaller k.
pub fn select_k_detail(d: &DMatrix<f64>, k_max: usize) -> Result<KSelection> {
    let n = check_square(d)?;
    if n < 3 || k_max < 2 || k_max > n - 1 {
        return Err(Error::invalid(format!(
            "k_max {k_max} outside [2, n-1] for n = {n}"
        )));
    }
    let first = if n > 1 { d[(0, 1)] } else { 0.0 };
    let degenerate = (0..n).all(|i| (0..n).all(|j| i == j || d[(i, j)] == first));
    if degenerate {
        log::warn!("all pairwise distances equal; defaulting to k = 2");
        return Ok(KSelection {
            k: 2,
            gaps: (2..=k_max).map(|k| (k, 0.0)).collect(),
            degenerate: true,
        });
    }
    let dendro = Dendrogram::complete_linkage(d)?;
    let gaps: Vec<(usize, f64)> = (2..=k_max)
        .map(|k| (k, dendro.merge_dist(k - 1) - dendro.merge_dist(k)))
        .collect();
    let mut best = gaps[0];
    for &g in &gaps[1..] {
        if g.1 > best.1 {
            best = g;
        }
    }
    Ok(KSelection {
        k: best.0,
        gaps,
        degenerate: false,
    })
}

pub fn select_k(d: &DMatrix<f64>, k_max: usize) -> Result<usize> {
    select_k_detail(d, k_max).map(|s| s.k)
}

/// Group labels from cutting the complete-linkage dendrogram at `k`.
pub fn group_generators(d: &DMatrix<f64>, k: usize) -> Result<Vec<usize>> {
    let n = check_square(d)?;
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} outside [1, {n}]")));
    }
    Ok(Dendrogram::complete_linkage(d)?.cut(k))
}

/// Bus-indexed matrix with +1 between buses hosting generators of the same
/// group (including a generator bus with itself), -1 across groups and 0
/// elsewhere. Generators not in any group impose no constraint.
pub fn build_constraints(groups: &[Vec<String>], case: &NetworkCase) -> Result<DMatrix<f64>> {
    let bus_index = case.bus_index();
    let n = case.n_buses();
    let mut bus_group: HashMap<usize, usize> = HashMap::new();
    let mut seen = std::collections::HashSet::new();
    for (gi, group) in groups.iter().enumerate() {
        for id in group {
            if !seen.insert(id.as_str()) {
                return Err(Error::Duplicate(format!("generator {id} in two groups")));
            }
            let g = case
                .generator(id)
                .ok_or_else(|| Error::UnknownGenerator(id.clone()))?;
            let b = *bus_index.get(&g.bus).ok_or_else(|| Error::UnknownBus {
                what: format!("generator {id}"),
                bus: g.bus,
            })?;
            if let Some(&other) = bus_group.get(&b) {
                if other != gi {
                    return Err(Error::ConstraintViolation(format!(
                        "bus {} hosts generators of groups {} and {}",
                        g.bus,
                        other + 1,
                        gi + 1
                    )));
                }
            }
            bus_group.insert(b, gi);
        }
    }
    let mut q = DMatrix::zeros(n, n);
    for (&i, &gi) in &bus_group {
        for (&j, &gj) in &bus_group {
            q[(i, j)] = if gi == gj { 1.0 } else { -1.0 };
        }
    }
    Ok(q)
}

impl CoherencyModel {
    pub fn new(groups: Vec<Vec<String>>, case: &NetworkCase) -> Result<Self> {
        if groups.iter().any(Vec::is_empty) {
            return Err(Error::invalid("empty coherent group"));
        }
        let q = build_constraints(&groups, case)?;
        Ok(Self {
            k: groups.len(),
            groups,
            q,
        })
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa.sqrt() * sbb.sqrt())
}

/// Pairwise Pearson correlation matrix. Requires equal lengths.
pub fn correlation_matrix(ts: &[Trajectory]) -> Result<DMatrix<f64>> {
    let n = ts.len();
    if n < 2 {
        return Err(Error::invalid("correlation baseline needs at least two trajectories"));
    }
    let len = ts[0].len();
    if let Some(t) = ts.iter().find(|t| t.len() != len) {
        return Err(Error::invalid(format!(
            "correlation baseline needs equal-length trajectories ({} has {}, {} has {}); \
             it cannot handle missing data",
            ts[0].gen_id,
            len,
            t.gen_id,
            t.len()
        )));
    }
    for t in ts {
        let first = t.angles[0];
        if t.angles.iter().all(|&a| a == first) {
            return Err(Error::ConstantTrajectory(t.gen_id.clone()));
        }
    }
    let mut c = DMatrix::identity(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let r = pearson(&ts[i].angles, &ts[j].angles);
            c[(i, j)] = r;
            c[(j, i)] = r;
        }
    }
    Ok(c)
}

/// Link pairs whose correlation reaches the mean off-diagonal correlation
/// and return connected components as labels. Pairs exactly at the mean
/// link, so a set of identical trajectories forms one group.
pub fn correlation_baseline(ts: &[Trajectory]) -> Result<Vec<usize>> {
    let c = correlation_matrix(ts)?;
    let n = c.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += c[(i, j)];
            }
        }
    }
    let threshold = sum / (n * (n - 1)) as f64;
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    for start in 0..n {
        if label[start].is_some() {
            continue;
        }
        let mut stack = vec![start];
        label[start] = Some(next);
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if v != u && label[v].is_none() && c[(u, v)] >= threshold {
                    label[v] = Some(next);
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    Ok(label.into_iter().map(|l| l.unwrap_or(0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Bus, Generator};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blocks(sizes: &[usize], inter: &[&[f64]]) -> DMatrix<f64> {
        let n: usize = sizes.iter().sum();
        let mut of = Vec::new();
        for (b, &s) in sizes.iter().enumerate() {
            of.extend(std::iter::repeat_n(b, s));
        }
        DMatrix::from_fn(n, n, |i, j| {
            if of[i] == of[j] {
                0.0
            } else {
                inter[of[i].min(of[j])][of[i].max(of[j])]
            }
        })
    }

    fn traj(id: &str, a: Vec<f64>) -> Trajectory {
        Trajectory {
            gen_id: id.into(),
            t0: 0.0,
            dt: 0.01,
            angles: a,
        }
    }

    #[test]
    fn two_blocks_select_two() {
        let d = blocks(&[3, 7], &[&[0.0, 50.0]]);
        assert_eq!(select_k(&d, 9).unwrap(), 2);
        assert_eq!(
            group_generators(&d, 2).unwrap(),
            vec![0, 0, 0, 1, 1, 1, 1, 1, 1, 1]
        );
    }

    #[test]
    fn three_equidistant_blocks_select_three() {
        let d = blocks(&[3, 3, 4], &[&[0.0, 9.0, 9.0], &[0.0, 0.0, 9.0]]);
        assert_eq!(select_k(&d, 9).unwrap(), 3);
    }

    #[test]
    fn degenerate_matrix_defaults_to_two() {
        let d = DMatrix::from_fn(5, 5, |i, j| if i == j { 0.0 } else { 1.0 });
        let s = select_k_detail(&d, 4).unwrap();
        assert_eq!(s.k, 2);
        assert!(s.degenerate);
    }

    #[test]
    fn k_max_bounds() {
        let d = blocks(&[2, 2], &[&[0.0, 1.0]]);
        assert!(select_k(&d, 4).is_err());
        assert!(select_k(&d, 1).is_err());
        assert!(group_generators(&d, 5).is_err());
    }

    #[test]
    fn gap_matches_exhaustive_scoring() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(3..9);
            let mut d = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in i + 1..n {
                    let v: f64 = rng.random_range(0.0..10.0);
                    d[(i, j)] = v;
                    d[(j, i)] = v;
                }
            }
            // oracle: score each k by re-clustering and reading the heights
            // of the (n-k)th and (n-k+1)th merge from scratch
            let heights = {
                let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
                let mut h = vec![0.0; n + 1];
                while clusters.len() > 1 {
                    let mut best = (f64::INFINITY, 0, 0);
                    for x in 0..clusters.len() {
                        for y in x + 1..clusters.len() {
                            let l = clusters[x]
                                .iter()
                                .flat_map(|&i| clusters[y].iter().map(move |&j| (i, j)))
                                .map(|(i, j)| d[(i, j)])
                                .fold(0.0, f64::max);
                            if l < best.0 {
                                best = (l, x, y);
                            }
                        }
                    }
                    let b = clusters.remove(best.2);
                    clusters[best.1].extend(b);
                    h[clusters.len()] = best.0;
                }
                h
            };
            let k_max = n - 1;
            let mut want = 2;
            for k in 2..=k_max {
                if heights[k - 1] - heights[k] > heights[want - 1] - heights[want] {
                    want = k;
                }
            }
            assert_eq!(select_k(&d, k_max).unwrap(), want);
        }
    }

    fn small_case() -> NetworkCase {
        NetworkCase {
            buses: (1..=4)
                .map(|id| Bus {
                    id,
                    load_p_mw: 0.0,
                    load_q_mvar: 0.0,
                })
                .collect(),
            generators: [("G1", 1), ("G2", 2), ("G3", 3)]
                .iter()
                .map(|&(id, bus)| Generator {
                    gen_id: id.into(),
                    bus,
                    p_capacity_mw: 1.0,
                    q_min_mvar: 0.0,
                    q_max_mvar: 0.0,
                    inertia_h_s: 1.0,
                    xd_prime_pu: 0.1,
                })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn constraint_matrix_entries() {
        let case = small_case();
        let groups = vec![vec!["G1".to_string(), "G2".to_string()], vec!["G3".to_string()]];
        let q = build_constraints(&groups, &case).unwrap();
        assert_eq!(q[(0, 1)], 1.0);
        assert_eq!(q[(0, 2)], -1.0);
        assert_eq!(q[(2, 1)], -1.0);
        assert_eq!(q[(0, 0)], 1.0);
        assert!(q.row(3).iter().all(|&x| x == 0.0));
        assert!(q.column(3).iter().all(|&x| x == 0.0));
        assert_eq!(q, q.transpose());
        // u^T Q u counts every constrained ordered pair once
        let u = nalgebra::DVector::from_vec(vec![1.0, 1.0, -1.0, 0.3]);
        let nonzero = q.iter().filter(|x| **x != 0.0).count() as f64;
        assert_eq!((u.transpose() * &q * &u)[(0, 0)], nonzero);
    }

    #[test]
    fn constraint_matrix_unknown_generator() {
        let groups = vec![vec!["G9".to_string()]];
        assert!(matches!(
            build_constraints(&groups, &small_case()),
            Err(Error::UnknownGenerator(_))
        ));
    }

    #[test]
    fn correlation_identical_single_group() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.2).sin()).collect();
        let ts = vec![traj("A", a.clone()), traj("B", a.clone()), traj("C", a)];
        assert_eq!(correlation_baseline(&ts).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn correlation_antiphase_two_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ts = Vec::new();
        for g in 0..6 {
            let sign = if g < 3 { 1.0 } else { -1.0 };
            let a = (0..200)
                .map(|i| sign * (i as f64 * 0.1).sin() + rng.random_range(-0.05..0.05))
                .collect();
            ts.push(traj(&format!("G{g}"), a));
        }
        assert_eq!(correlation_baseline(&ts).unwrap(), vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn correlation_rejects_constant_and_unequal() {
        let ts = vec![traj("A", vec![1.0, 2.0, 3.0]), traj("B", vec![0.5; 3])];
        assert!(matches!(
            correlation_baseline(&ts),
            Err(Error::ConstantTrajectory(id)) if id == "B"
        ));
        let ts = vec![traj("A", vec![1.0, 2.0, 3.0]), traj("B", vec![1.0, 2.0])];
        assert!(matches!(correlation_baseline(&ts), Err(Error::InvalidInput(_))));
    }

    fn random_series(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let f = rng.random_range(0.5..3.0);
                let a = rng.random_range(0.1..1.0);
                (0..30).map(|t| a * (f * t as f64 * 0.1).sin()).collect()
            })
            .collect()
    }

    fn partition_sets(labels: &[usize], perm: &[usize]) -> Vec<Vec<usize>> {
        let k = labels.iter().max().unwrap() + 1;
        let mut sets = vec![Vec::new(); k];
        for (i, l) in labels.iter().enumerate() {
            sets[*l].push(perm[i]);
        }
        for s in &mut sets {
            s.sort_unstable();
        }
        sets.sort();
        sets
    }

    proptest! {
        #[test]
        fn scale_invariance(seed in 0u64..500, c in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let series = random_series(&mut rng, 7);
            let scaled: Vec<Vec<f64>> =
                series.iter().map(|s| s.iter().map(|x| x * c).collect()).collect();
            let d = crate::dtw::pairwise_dtw(&series, None).unwrap();
            let ds = crate::dtw::pairwise_dtw(&scaled, None).unwrap();
            prop_assert_eq!(select_k(&d, 6).unwrap(), select_k(&ds, 6).unwrap());
            for k in 2..6 {
                prop_assert_eq!(group_generators(&d, k).unwrap(), group_generators(&ds, k).unwrap());
            }
        }

        #[test]
        fn permutation_equivariance(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let series = random_series(&mut rng, 7);
            let mut perm: Vec<usize> = (0..7).collect();
            for i in (1..7).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| series[i].clone()).collect();
            let d = crate::dtw::pairwise_dtw(&series, None).unwrap();
            let dp = crate::dtw::pairwise_dtw(&permuted, None).unwrap();
            let ident: Vec<usize> = (0..7).collect();
            for k in 2..6 {
                prop_assert_eq!(
                    partition_sets(&group_generators(&d, k).unwrap(), &ident),
                    partition_sets(&group_generators(&dp, k).unwrap(), &perm)
                );
            }
        }

        #[test]
        fn duplicates_always_cogrouped(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut series = random_series(&mut rng, 6);
            let dup = series[2].clone();
            series.push(dup);
            let d = crate::dtw::pairwise_dtw(&series, None).unwrap();
            for k in 1..7 {
                let labels = group_generators(&d, k).unwrap();
                prop_assert_eq!(labels[2], labels[6]);
            }
        }
    }
}
