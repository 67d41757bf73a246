//! Flow-weighted graph and Laplacians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ingest::{BusId, NetworkCase};

/// Weight given to a closed branch whose measured flows are both zero.
pub const ZERO_FLOW_FLOOR_MW: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerGraph {
    pub bus_ids: Vec<BusId>,
    pub weights: DMatrix<f64>,
    pub degrees: DVector<f64>,
    pub laplacian: DMatrix<f64>,
    pub laplacian_norm: DMatrix<f64>,
    pub vol: f64,
}

/// `W_ij = (|P_ij| + |P_ji|) / 2` over closed branches, parallel circuits
/// summed, rows in `case.buses` order.
pub fn build_weights(case: &NetworkCase) -> DMatrix<f64> {
    let index = case.bus_index();
    let n = case.n_buses();
    let mut w = DMatrix::zeros(n, n);
    for br in case.branches.iter().filter(|b| b.breaker) {
        let (Some(&i), Some(&j)) = (index.get(&br.from), index.get(&br.to)) else {
            continue;
        };
        if i == j {
            continue;
        }
        let x = br.mean_abs_flow().max(ZERO_FLOW_FLOOR_MW);
        w[(i, j)] += x;
        w[(j, i)] += x;
    }
    w
}

/// `(L, L_N, vol)` with `L = D - W` and `L_N = D^-1/2 L D^-1/2`.
pub fn build_laplacians(
    w: &DMatrix<f64>,
    bus_ids: &[BusId],
) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
    let n = w.nrows();
    if w.ncols() != n || bus_ids.len() != n {
        return Err(Error::invalid("weight matrix shape does not match bus list"));
    }
    let d: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    if let Some(i) = d.iter().position(|&x| x <= 0.0) {
        return Err(Error::IsolatedBus(bus_ids[i]));
    }
    let vol: f64 = d.iter().sum();
    let l = DMatrix::from_fn(n, n, |i, j| if i == j { d[i] - w[(i, i)] } else { -w[(i, j)] });
    let s: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let ln = DMatrix::from_fn(n, n, |i, j| s[i] * l[(i, j)] * s[j]);
    Ok((l, ln, vol))
}

impl PowerGraph {
    pub fn from_case(case: &NetworkCase) -> Result<PowerGraph> {
        let bus_ids: Vec<BusId> = case.buses.iter().map(|b| b.id).collect();
        let weights = build_weights(case);
        let (laplacian, laplacian_norm, vol) = build_laplacians(&weights, &bus_ids)?;
        let degrees = DVector::from_fn(bus_ids.len(), |i, _| weights.row(i).sum());
        Ok(PowerGraph {
            bus_ids,
            weights,
            degrees,
            laplacian,
            laplacian_norm,
            vol,
        })
    }

    pub fn n(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn component_labels(&self) -> Vec<usize> {
        connected_components(&self.weights)
    }
}

/// Component label per vertex of the graph with edges where `w > 0`.
pub fn connected_components(w: &DMatrix<f64>) -> Vec<usize> {
    let n = w.nrows();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if label[v] == usize::MAX && w[(u, v)] > 0.0 {
                    label[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    label
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Branch, Bus};
    use crate::linalg::sym_eigenvalues;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn case(n: u32, branches: &[(u32, u32, f64, f64, bool)]) -> NetworkCase {
        let mut circuits = std::collections::HashMap::new();
        NetworkCase {
            buses: (1..=n)
                .map(|id| Bus {
                    id,
                    load_p_mw: 0.0,
                    load_q_mvar: 0.0,
                })
                .collect(),
            branches: branches
                .iter()
                .map(|&(f, t, pf, pt, closed)| {
                    let c = circuits.entry((f.min(t), f.max(t))).or_insert(0);
                    *c += 1;
                    Branch {
                        from: f,
                        to: t,
                        circuit: *c,
                        p_from_mw: pf,
                        p_to_mw: pt,
                        breaker: closed,
                    }
                })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn loss_averaged_weight() {
        let w = build_weights(&case(2, &[(1, 2, 100.0, -98.0, true)]));
        assert_eq!(w[(0, 1)], 99.0);
        assert_eq!(w[(1, 0)], 99.0);
        assert_eq!(w[(0, 0)], 0.0);
    }

    #[test]
    fn open_branch_excluded_parallel_summed_zero_floored() {
        let c = case(
            3,
            &[
                (1, 2, 10.0, -10.0, true),
                (2, 1, 4.0, -4.0, true),
                (2, 3, 50.0, -50.0, false),
                (1, 3, 0.0, 0.0, true),
            ],
        );
        let w = build_weights(&c);
        assert_eq!(w[(0, 1)], 14.0);
        assert_eq!(w[(1, 2)], 0.0);
        assert_eq!(w[(0, 2)], ZERO_FLOW_FLOOR_MW);
    }

    #[test]
    fn two_bus_laplacian() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 3.0, 0.0]);
        let (l, ln, vol) = build_laplacians(&w, &[1, 2]).unwrap();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[3.0, -3.0, -3.0, 3.0]));
        assert_eq!(vol, 6.0);
        let ev = sym_eigenvalues(&ln);
        assert!(ev[0].abs() < 1e-12 && (ev[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_bus_named() {
        let c = case(3, &[(1, 2, 1.0, -1.0, true)]);
        assert!(matches!(PowerGraph::from_case(&c), Err(Error::IsolatedBus(3))));
        let empty = case(2, &[]);
        assert!(matches!(PowerGraph::from_case(&empty), Err(Error::IsolatedBus(1))));
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            // a spanning edge keeps every vertex non-isolated
            let j = (i + 1) % n;
            let x = rng.random_range(1.0..100.0);
            if i % 5 != 4 {
                w[(i, j)] += x;
                w[(j, i)] += x;
            } else {
                let k = (i + n - 1) % n;
                w[(i, k)] += x;
                w[(k, i)] += x;
            }
            for j in i + 1..n {
                if rng.random_bool(p) {
                    let x = rng.random_range(0.1..100.0);
                    w[(i, j)] += x;
                    w[(j, i)] += x;
                }
            }
        }
        w
    }

    proptest! {
        #[test]
        fn laplacian_invariants(seed in 0u64..1000, n in 3usize..25, p in 0.0f64..0.4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_graph(&mut rng, n, p);
            let ids: Vec<u32> = (1..=n as u32).collect();
            let (l, ln, vol) = build_laplacians(&w, &ids).unwrap();
            for i in 0..n {
                prop_assert!(l.row(i).sum().abs() <= 1e-9 * vol);
            }
            for _ in 0..5 {
                let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                let q = (x.transpose() * &l * &x)[(0, 0)];
                prop_assert!(q >= -1e-9 * vol * x.norm_squared());
            }
            let ev = sym_eigenvalues(&ln);
            prop_assert!(ev.iter().all(|&e| (-1e-9..=2.0 + 1e-9).contains(&e)));
            let comps = connected_components(&w).into_iter().max().unwrap() + 1;
            let zeros = ev.iter().filter(|e| e.abs() < 1e-9).count();
            prop_assert_eq!(zeros, comps);
        }

        #[test]
        fn flow_scaling(seed in 0u64..1000, c in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_graph(&mut rng, 12, 0.3);
            let ids: Vec<u32> = (1..=12).collect();
            let (l, ln, _) = build_laplacians(&w, &ids).unwrap();
            let (l2, ln2, _) = build_laplacians(&(&w * c), &ids).unwrap();
            prop_assert!((&l * c - l2).amax() <= 1e-9 * l.amax() * c);
            prop_assert!((ln - ln2).amax() <= 1e-9);
        }
    }
}
