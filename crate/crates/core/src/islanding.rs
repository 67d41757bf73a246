//! From a bus assignment to an islanding plan: cut-set, disruption,
//! connectivity repair and per-island balance.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BranchKey, BusId, NetworkCase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandReport {
    /// 1-based island label.
    pub island: usize,
    pub buses: Vec<BusId>,
    pub generators: Vec<String>,
    pub gen_capacity_mw: f64,
    pub gen_dispatch_mw: f64,
    pub load_mw: f64,
    pub q_min_mvar: f64,
    pub q_max_mvar: f64,
    pub load_q_mvar: f64,
    /// `max(0, load - capacity)`
    pub load_shed_mw: f64,
    /// `|capacity - load|`
    pub imbalance_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutBranch {
    pub from: BusId,
    pub to: BusId,
    pub circuit: u32,
    pub flow_mw: f64,
}

impl CutBranch {
    pub fn key(&self) -> BranchKey {
        BranchKey::new(self.from, self.to, self.circuit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandingPlan {
    /// `(bus, island)` in case bus order, islands 1-based.
    pub assignment: Vec<(BusId, usize)>,
    pub cutset: Vec<CutBranch>,
    pub disruption_mw: f64,
    pub islands: Vec<IslandReport>,
    pub total_load_shed_mw: f64,
    /// `Σ |dispatch - load|` over islands, with pre-fault dispatch.
    pub dispatch_imbalance_mw: f64,
    /// Buses moved by the connectivity repair.
    pub repaired_buses: Vec<BusId>,
}

fn check_assignment(assignment: &[usize], case: &NetworkCase) -> Result<()> {
    if assignment.len() != case.n_buses() {
        return Err(Error::invalid(format!(
            "assignment covers {} buses, case has {}",
            assignment.len(),
            case.n_buses()
        )));
    }
    Ok(())
}

/// Closed branches whose ends lie in different islands, sorted by
/// `(min bus, max bus, circuit)`, and the disruption they carry.
pub fn extract_cutset(assignment: &[usize], case: &NetworkCase) -> Result<(Vec<CutBranch>, f64)> {
    check_assignment(assignment, case)?;
    let index = case.bus_index();
    let mut cut: Vec<CutBranch> = case
        .branches
        .iter()
        .filter(|b| b.breaker && assignment[index[&b.from]] != assignment[index[&b.to]])
        .map(|b| CutBranch {
            from: b.from.min(b.to),
            to: b.from.max(b.to),
            circuit: b.circuit,
            flow_mw: b.mean_abs_flow(),
        })
        .collect();
    cut.sort_by_key(|c| (c.from, c.to, c.circuit));
    let disruption = cut.iter().map(|c| c.flow_mw).sum();
    Ok((cut, disruption))
}

fn adjacency(case: &NetworkCase) -> Vec<Vec<(usize, f64)>> {
    let index = case.bus_index();
    let mut adj = vec![Vec::new(); case.n_buses()];
    for b in case.branches.iter().filter(|b| b.breaker) {
        let (i, j) = (index[&b.from], index[&b.to]);
        adj[i].push((j, b.mean_abs_flow()));
        adj[j].push((i, b.mean_abs_flow()));
    }
    adj
}

/// Components of each island's induced subgraph over closed branches.
fn fragments(assignment: &[usize], adj: &[Vec<(usize, f64)>]) -> Vec<Vec<usize>> {
    let n = assignment.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &(v, _) in &adj[u] {
                if !seen[v] && assignment[v] == assignment[s] {
                    seen[v] = true;
                    comp.push(v);
                    stack.push(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Make every island connected. Each island keeps the component with the
/// most generators (then most buses, then lowest bus index); every other
/// component moves to the neighbouring island it exchanges the most flow
/// with, which is the move adding the least disruption. A stray component
/// that hosts generators cannot move without breaking coherency and is an
/// error.
pub fn repair_connectivity(assignment: &[usize], case: &NetworkCase) -> Result<Vec<usize>> {
    check_assignment(assignment, case)?;
    let index = case.bus_index();
    let mut gens_at = vec![0usize; case.n_buses()];
    for g in &case.generators {
        gens_at[index[&g.bus]] += 1;
    }
    let adj = adjacency(case);
    let mut out = assignment.to_vec();
    for _ in 0..=case.n_buses() {
        let comps = fragments(&out, &adj);
        let mut main: HashMap<usize, usize> = HashMap::new();
        for (ci, c) in comps.iter().enumerate() {
            let island = out[c[0]];
            let score = |c: &Vec<usize>| {
                (c.iter().map(|&i| gens_at[i]).sum::<usize>(), c.len(), std::cmp::Reverse(c[0]))
            };
            match main.get(&island) {
                Some(&m) if score(&comps[m]) >= score(c) => {}
                _ => {
                    main.insert(island, ci);
                }
            }
        }
        let mut moved = false;
        for (ci, c) in comps.iter().enumerate() {
            let island = out[c[0]];
            if main[&island] == ci {
                continue;
            }
            if let Some(&b) = c.iter().find(|&&i| gens_at[i] > 0) {
                return Err(Error::ConstraintViolation(format!(
                    "island {} is split and the stray part (bus {}) hosts generators",
                    island + 1,
                    case.buses[b].id
                )));
            }
            let mut flow: BTreeMap<usize, f64> = BTreeMap::new();
            for &u in c {
                for &(v, f) in &adj[u] {
                    if out[v] != island {
                        *flow.entry(out[v]).or_default() += f;
                    }
                }
            }
            let Some((&target, _)) = flow
                .iter()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
            else {
                log::warn!(
                    "bus {} has no closed branch to another island; left in place",
                    case.buses[c[0]].id
                );
                continue;
            };
            for &u in c {
                out[u] = target;
            }
            moved = true;
            break;
        }
        if !moved {
            return Ok(out);
        }
    }
    Err(Error::Numerical("connectivity repair did not settle".into()))
}

/// Per-island capacity, dispatch, load and shed.
pub fn balance_report(assignment: &[usize], case: &NetworkCase) -> Result<Vec<IslandReport>> {
    check_assignment(assignment, case)?;
    let index = case.bus_index();
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let mut reports: Vec<IslandReport> = (0..k)
        .map(|i| IslandReport {
            island: i + 1,
            buses: Vec::new(),
            generators: Vec::new(),
            gen_capacity_mw: 0.0,
            gen_dispatch_mw: 0.0,
            load_mw: 0.0,
            q_min_mvar: 0.0,
            q_max_mvar: 0.0,
            load_q_mvar: 0.0,
            load_shed_mw: 0.0,
            imbalance_mw: 0.0,
        })
        .collect();
    for (b, &isl) in case.buses.iter().zip(assignment) {
        let r = &mut reports[isl];
        r.buses.push(b.id);
        r.load_mw += b.load_p_mw;
        r.load_q_mvar += b.load_q_mvar;
    }
    let dispatch = case.generator_dispatch_mw();
    for (g, p) in case.generators.iter().zip(dispatch) {
        let r = &mut reports[assignment[index[&g.bus]]];
        r.generators.push(g.gen_id.clone());
        r.gen_capacity_mw += g.p_capacity_mw;
        r.gen_dispatch_mw += p;
        r.q_min_mvar += g.q_min_mvar;
        r.q_max_mvar += g.q_max_mvar;
    }
    for r in &mut reports {
        r.load_shed_mw = (r.load_mw - r.gen_capacity_mw).max(0.0);
        r.imbalance_mw = (r.gen_capacity_mw - r.load_mw).abs();
    }
    Ok(reports)
}

/// Full plan for a bus assignment. `groups` are the coherent generator
/// groups; the finished plan must keep each group whole and apart.
pub fn build_plan(
    assignment: &[usize],
    case: &NetworkCase,
    groups: &[Vec<String>],
) -> Result<IslandingPlan> {
    let repaired = repair_connectivity(assignment, case)?;
    let repaired_buses = case
        .buses
        .iter()
        .zip(assignment.iter().zip(&repaired))
        .filter(|(_, (a, b))| a != b)
        .map(|(bus, _)| bus.id)
        .collect();
    check_coherency(&repaired, case, groups)?;
    let (cutset, disruption_mw) = extract_cutset(&repaired, case)?;
    let islands = balance_report(&repaired, case)?;
    let total_load_shed_mw = islands.iter().map(|r| r.load_shed_mw).sum();
    let dispatch_imbalance_mw = islands
        .iter()
        .map(|r| (r.gen_dispatch_mw - r.load_mw).abs())
        .sum();
    Ok(IslandingPlan {
        assignment: case
            .buses
            .iter()
            .zip(&repaired)
            .map(|(b, &i)| (b.id, i + 1))
            .collect(),
        cutset,
        disruption_mw,
        islands,
        total_load_shed_mw,
        dispatch_imbalance_mw,
        repaired_buses,
    })
}

/// Must-link pairs share an island, cannot-link pairs do not.
pub fn check_coherency(
    assignment: &[usize],
    case: &NetworkCase,
    groups: &[Vec<String>],
) -> Result<()> {
    let index = case.bus_index();
    let mut island_of_group: Vec<Option<usize>> = vec![None; groups.len()];
    let mut group_of_island: HashMap<usize, usize> = HashMap::new();
    for (gi, group) in groups.iter().enumerate() {
        for id in group {
            let g = case
                .generator(id)
                .ok_or_else(|| Error::UnknownGenerator(id.clone()))?;
            let isl = assignment[index[&g.bus]];
            match island_of_group[gi] {
                None => island_of_group[gi] = Some(isl),
                Some(i) if i != isl => {
                    return Err(Error::ConstraintViolation(format!(
                        "group {} is split across islands {} and {}",
                        gi + 1,
                        i + 1,
                        isl + 1
                    )))
                }
                _ => {}
            }
            if let Some(&other) = group_of_island.get(&isl) {
                if other != gi {
                    return Err(Error::ConstraintViolation(format!(
                        "groups {} and {} share island {}",
                        other + 1,
                        gi + 1,
                        isl + 1
                    )));
                }
            }
            group_of_island.insert(isl, gi);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Branch, Bus, Generator};

    /// 1 -- 2 -- 3 -- 4, plus 2 -- 5 -- 4; generators at 1 and 4.
    fn case() -> NetworkCase {
        let br = |f, t, p: f64| Branch {
            from: f,
            to: t,
            circuit: 1,
            p_from_mw: p,
            p_to_mw: -p * 0.98,
            breaker: true,
        };
        NetworkCase {
            buses: [(1, 0.0), (2, 40.0), (3, 30.0), (4, 0.0), (5, 50.0)]
                .iter()
                .map(|&(id, p)| Bus {
                    id,
                    load_p_mw: p,
                    load_q_mvar: p / 10.0,
                })
                .collect(),
            branches: vec![
                br(1, 2, 120.0),
                br(2, 3, 20.0),
                br(4, 3, 10.0),
                br(2, 5, 30.0),
                br(4, 5, 21.0),
            ],
            generators: vec![
                Generator {
                    gen_id: "GA".into(),
                    bus: 1,
                    p_capacity_mw: 150.0,
                    q_min_mvar: -10.0,
                    q_max_mvar: 60.0,
                    inertia_h_s: 4.0,
                    xd_prime_pu: 0.2,
                },
                Generator {
                    gen_id: "GB".into(),
                    bus: 4,
                    p_capacity_mw: 20.0,
                    q_min_mvar: -5.0,
                    q_max_mvar: 15.0,
                    inertia_h_s: 4.0,
                    xd_prime_pu: 0.2,
                },
            ],
            ..Default::default()
        }
    }

    #[test]
    fn single_island_no_cut() {
        let c = case();
        let (cut, d) = extract_cutset(&[0; 5], &c).unwrap();
        assert!(cut.is_empty());
        assert_eq!(d, 0.0);
    }

    #[test]
    fn cutset_and_disruption() {
        let c = case();
        // {1,2,5} vs {3,4}
        let a = [0, 0, 1, 1, 0];
        let (cut, d) = extract_cutset(&a, &c).unwrap();
        let keys: Vec<(u32, u32)> = cut.iter().map(|c| (c.from, c.to)).collect();
        assert_eq!(keys, vec![(2, 3), (4, 5)]);
        assert!((d - (20.0 * 1.98 / 2.0 + 21.0 * 1.98 / 2.0)).abs() < 1e-12);
        let recomputed: f64 = cut.iter().map(|c| c.flow_mw).sum();
        assert_eq!(recomputed, d);
    }

    #[test]
    fn open_branch_not_in_cutset() {
        let mut c = case();
        c.branches[1].breaker = false;
        let (cut, _) = extract_cutset(&[0, 0, 1, 1, 0], &c).unwrap();
        assert_eq!(cut.len(), 1);
    }

    #[test]
    fn repair_identity_when_connected() {
        let c = case();
        let a = vec![0, 0, 1, 1, 0];
        assert_eq!(repair_connectivity(&a, &c).unwrap(), a);
    }

    #[test]
    fn stranded_bus_joins_its_neighbour() {
        let mut c = case();
        c.branches[4].breaker = false; // 4-5 open: bus 5 only touches bus 2
        let a = vec![0, 0, 1, 1, 1];
        assert_eq!(repair_connectivity(&a, &c).unwrap(), vec![0, 0, 1, 1, 0]);
    }

    #[test]
    fn fragment_picks_lower_disruption_side() {
        let c = case();
        // island 2 = {3, 5} has no internal edge; bus 5 borders islands 0 and 1
        let a = vec![0, 0, 2, 1, 2];
        let r = repair_connectivity(&a, &c).unwrap();
        let moved = |to: usize| {
            let mut x = a.clone();
            x[4] = to;
            extract_cutset(&x, &c).unwrap().1
        };
        let want = if moved(0) <= moved(1) { 0 } else { 1 };
        assert_eq!(r, vec![0, 0, 2, 1, want]);
    }

    #[test]
    fn generator_fragment_is_error() {
        let c = case();
        // GA (bus 1) and GB (bus 4) share an island without a connecting path
        let a = vec![0, 1, 1, 0, 1];
        assert!(matches!(
            repair_connectivity(&a, &c),
            Err(Error::ConstraintViolation(_))
        ));
    }

    #[test]
    fn balance_with_shed() {
        let c = case();
        let a = [0, 0, 1, 1, 0];
        let rep = balance_report(&a, &c).unwrap();
        assert_eq!(rep[0].gen_capacity_mw, 150.0);
        assert_eq!(rep[0].load_mw, 90.0);
        assert_eq!(rep[0].load_shed_mw, 0.0);
        assert_eq!(rep[1].load_mw, 30.0);
        assert_eq!(rep[1].load_shed_mw, 10.0);
        assert_eq!(rep[1].imbalance_mw, 10.0);
        let total: f64 = rep.iter().map(|r| r.load_mw).sum();
        assert_eq!(total, c.buses.iter().map(|b| b.load_p_mw).sum::<f64>());
        assert_eq!(rep[0].q_max_mvar, 60.0);
        assert!((rep[0].load_q_mvar - 9.0).abs() < 1e-12);
    }

    #[test]
    fn island_without_load() {
        let c = case();
        let a = [1, 0, 0, 0, 0];
        let rep = balance_report(&a, &c).unwrap();
        assert_eq!(rep[1].load_mw, 0.0);
        assert_eq!(rep[1].load_shed_mw, 0.0);
        assert_eq!(rep[1].imbalance_mw, 150.0);
    }

    #[test]
    fn plan_enforces_coherency() {
        let c = case();
        let groups = vec![vec!["GA".to_string()], vec!["GB".to_string()]];
        let plan = build_plan(&[0, 0, 1, 1, 0], &c, &groups).unwrap();
        assert_eq!(plan.islands.len(), 2);
        assert_eq!(plan.assignment[2], (3, 2));
        let err = build_plan(&[0; 5], &c, &groups).unwrap_err();
        assert!(matches!(err, Error::ConstraintViolation(_)));
        let together = vec![vec!["GA".to_string(), "GB".to_string()]];
        assert!(build_plan(&[0, 0, 1, 1, 0], &c, &together).is_err());
    }
}
