//! End-to-end orchestration: rotor → dtw → coherency → netgraph → spectral
//! → islanding.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coherency::{
    correlation_baseline, group_generators, groups_from_labels, select_k_detail, CoherencyModel,
    KSelection,
};
use crate::dtw::pairwise_dtw;
use crate::error::{Error, Result};
use crate::ingest::{BranchKey, NetworkCase, PmuRecordSet};
use crate::islanding::{build_plan, IslandingPlan};
use crate::netgraph::PowerGraph;
use crate::rotor::{preprocess, AngleMode, PreprocessOptions, Trajectory};
use crate::spectral::{
    default_beta, kmedoids_assign, normalize_constraints, recover_indicator, solve_constrained,
    KMedoids, SpectralSolution, DEFAULT_BETA_ALPHA,
};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub angle_mode: AngleMode,
    /// Resampling step; `None` keeps the PMU rate.
    pub dt: Option<f64>,
    /// Analysis window `[start, end]`, seconds.
    pub window: Option<(f64, f64)>,
    pub band: Option<usize>,
    /// Fixed number of groups; `None` selects it from the dendrogram.
    pub k: Option<usize>,
    pub k_max: Option<usize>,
    /// Explicit β; `None` uses [`default_beta`] with `beta_alpha`.
    pub beta: Option<f64>,
    pub beta_alpha: f64,
    /// Skip identification and use these groups.
    pub groups: Option<Vec<Vec<String>>>,
    /// Branches open when the islands are formed.
    pub open_branches: Vec<BranchKey>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            angle_mode: AngleMode::Deviation,
            dt: None,
            window: None,
            band: None,
            k: None,
            k_max: None,
            beta: None,
            beta_alpha: DEFAULT_BETA_ALPHA,
            groups: None,
            open_branches: Vec::new(),
        }
    }
}

/// Outcome of the identification stages.
#[derive(Debug, Clone)]
pub struct Identification {
    pub trajectories: Vec<Trajectory>,
    pub dtw_matrix: DMatrix<f64>,
    pub k_selection: Option<KSelection>,
    pub groups: Vec<Vec<String>>,
}

/// Outcome of the partitioning stages.
#[derive(Debug, Clone)]
pub struct Partition {
    pub graph: PowerGraph,
    pub coherency: CoherencyModel,
    pub q_norm: DMatrix<f64>,
    pub solution: SpectralSolution,
    /// Recovered indicator rows `D^-1/2 v` used for allocation.
    pub embedding: DMatrix<f64>,
    pub kmedoids: KMedoids,
    /// Island per bus, 0-based, numbered by coherent group.
    pub assignment: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub identification: Option<Identification>,
    pub partition: Partition,
    pub plan: IslandingPlan,
    pub case: NetworkCase,
}

/// Rotor angles, pairwise DTW, k and groups.
pub fn identify(
    pmu: &PmuRecordSet,
    case: &NetworkCase,
    opts: &PipelineOptions,
) -> Result<Identification> {
    let windowed = match opts.window {
        Some((a, b)) if b > a => pmu.window(a, b),
        Some((a, b)) => return Err(Error::invalid(format!("window [{a}, {b}] is empty"))),
        None => pmu.clone(),
    };
    let trajectories = preprocess(
        &windowed,
        &case.generators,
        &PreprocessOptions {
            mode: opts.angle_mode,
            dt: opts.dt,
            ..Default::default()
        },
    )?;
    let n = trajectories.len();
    if n < 2 {
        return Err(Error::invalid("identification needs at least two generators"));
    }
    let dtw_matrix = pairwise_dtw(&trajectories, opts.band)?;
    let (k, k_selection) = match opts.k {
        Some(k) if k < 2 => {
            return Err(Error::invalid(format!("k = {k}, at least 2 islands are required")))
        }
        Some(k) if k > n => {
            return Err(Error::invalid(format!("k = {k} exceeds the {n} generators")))
        }
        Some(k) => (k, None),
        None => {
            let sel = select_k_detail(&dtw_matrix, opts.k_max.unwrap_or(n - 1))?;
            (sel.k, Some(sel))
        }
    };
    let labels = group_generators(&dtw_matrix, k)?;
    let ids: Vec<String> = trajectories.iter().map(|t| t.gen_id.clone()).collect();
    Ok(Identification {
        groups: groups_from_labels(&labels, &ids),
        trajectories,
        dtw_matrix,
        k_selection,
    })
}

/// Graph, constraints, spectral embedding and bus allocation for `groups`.
pub fn partition(
    case: &NetworkCase,
    groups: &[Vec<String>],
    opts: &PipelineOptions,
) -> Result<Partition> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::invalid(format!(
            "{k} coherent group(s); islanding needs at least 2"
        )));
    }
    let graph = PowerGraph::from_case(case)?;
    let coherency = CoherencyModel::new(groups.to_vec(), case)?;
    let q_norm = normalize_constraints(&coherency.q, &graph.degrees)?;
    let beta = match opts.beta {
        Some(b) => b,
        None => default_beta(&q_norm, graph.vol, k, opts.beta_alpha),
    };
    let solution = solve_constrained(&graph.laplacian_norm, &q_norm, beta, graph.vol, k)?;
    let embedding = recover_indicator(&solution.selected, &graph.degrees);
    let kmedoids = kmedoids_assign(&embedding, k)?;
    let assignment = label_by_group(&kmedoids.labels, case, groups)?;
    Ok(Partition {
        graph,
        coherency,
        q_norm,
        solution,
        embedding,
        kmedoids,
        assignment,
    })
}

/// Rename clusters so island `g` holds coherent group `g`; clusters with no
/// generator follow in label order.
fn label_by_group(labels: &[usize], case: &NetworkCase, groups: &[Vec<String>]) -> Result<Vec<usize>> {
    let index = case.bus_index();
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut cluster_group: Vec<Option<usize>> = vec![None; k];
    for (gi, group) in groups.iter().enumerate() {
        for id in group {
            let g = case
                .generator(id)
                .ok_or_else(|| Error::UnknownGenerator(id.clone()))?;
            let c = labels[index[&g.bus]];
            match cluster_group[c] {
                Some(other) if other != gi => {
                    return Err(Error::ConstraintViolation(format!(
                        "spectral allocation puts groups {} and {} in one island",
                        other + 1,
                        gi + 1
                    )))
                }
                _ => cluster_group[c] = Some(gi),
            }
        }
    }
    let mut rename = vec![0; k];
    let mut next = groups.len();
    for c in 0..k {
        rename[c] = match cluster_group[c] {
            Some(g) => g,
            None => {
                next += 1;
                next - 1
            }
        };
    }
    Ok(labels.iter().map(|&c| rename[c]).collect())
}

/// Full pipeline. Identification runs unless `opts.groups` fixes the groups.
pub fn run_pipeline(
    case: &NetworkCase,
    pmu: Option<&PmuRecordSet>,
    opts: &PipelineOptions,
) -> Result<PipelineOutput> {
    let (identification, groups) = match (&opts.groups, pmu) {
        (Some(g), _) => (None, g.clone()),
        (None, Some(pmu)) => {
            let id = identify(pmu, case, opts)?;
            let g = id.groups.clone();
            (Some(id), g)
        }
        (None, None) => {
            return Err(Error::invalid(
                "either PMU records or fixed coherent groups are required",
            ))
        }
    };
    let topo = case.with_open_branches(&opts.open_branches)?;
    let partition = partition(&topo, &groups, opts)?;
    let plan = build_plan(&partition.assignment, &topo, &groups)?;
    Ok(PipelineOutput {
        identification,
        partition,
        plan,
        case: topo,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub groups: Vec<Vec<String>>,
    pub lines_cut: Option<usize>,
    pub islands: Option<usize>,
    pub dispatch_imbalance_mw: Option<f64>,
    pub load_shed_mw: Option<f64>,
    pub disruption_mw: Option<f64>,
    /// Why the row is incomplete, if it is.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub notes: Vec<String>,
}

fn row(method: &str, groups: Vec<Vec<String>>, plan: Result<IslandingPlan>) -> ComparisonRow {
    match plan {
        Ok(p) => ComparisonRow {
            method: method.into(),
            groups,
            lines_cut: Some(p.cutset.len()),
            islands: Some(p.islands.len()),
            dispatch_imbalance_mw: Some(p.dispatch_imbalance_mw),
            load_shed_mw: Some(p.total_load_shed_mw),
            disruption_mw: Some(p.disruption_mw),
            error: None,
        },
        Err(e) => ComparisonRow {
            method: method.into(),
            groups,
            lines_cut: None,
            islands: None,
            dispatch_imbalance_mw: None,
            load_shed_mw: None,
            disruption_mw: None,
            error: Some(e.to_string()),
        },
    }
}

/// Proposed method against the correlation-threshold grouping, both fed
/// through the same partitioning and planning stages.
pub fn compare_baseline(
    case: &NetworkCase,
    pmu: &PmuRecordSet,
    opts: &PipelineOptions,
) -> Result<Comparison> {
    let mut notes = vec![
        "community-detection baseline not implemented; column omitted".to_string(),
    ];
    let proposed = match run_pipeline(case, Some(pmu), opts) {
        Ok(out) => {
            let groups = opts
                .groups
                .clone()
                .or(out.identification.as_ref().map(|i| i.groups.clone()))
                .unwrap_or_default();
            row("proposed", groups, Ok(out.plan))
        }
        Err(e) => row("proposed", opts.groups.clone().unwrap_or_default(), Err(e)),
    };
    if opts.groups.is_some() {
        notes.push("proposed row uses fixed coherent groups".into());
    }

    let mut id_opts = opts.clone();
    id_opts.groups = None;
    id_opts.k = Some(2);
    let trajectories = identify(pmu, case, &id_opts)?.trajectories;
    let baseline = match correlation_baseline(&trajectories) {
        Ok(labels) => {
            let ids: Vec<String> = trajectories.iter().map(|t| t.gen_id.clone()).collect();
            let groups = groups_from_labels(&labels, &ids);
            let mut b_opts = opts.clone();
            b_opts.groups = Some(groups.clone());
            let plan = run_pipeline(case, None, &b_opts).map(|o| o.plan);
            row("correlation", groups, plan)
        }
        Err(e) => {
            notes.push(format!("correlation baseline limitation: {e}"));
            row("correlation", Vec::new(), Err(e))
        }
    };
    Ok(Comparison {
        rows: vec![proposed, baseline],
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Branch, Bus, Generator, PmuRecord, Samples};

    /// Ring of six buses, generators on 1 and 4, light ties 3-4 and 6-1.
    fn ring() -> NetworkCase {
        let flows = [(1, 2, 80.0), (2, 3, 40.0), (3, 4, 5.0), (4, 5, 70.0), (5, 6, 35.0), (6, 1, 4.0)];
        NetworkCase {
            buses: (1..=6)
                .map(|id| Bus {
                    id,
                    load_p_mw: if id % 3 == 1 { 0.0 } else { 40.0 },
                    load_q_mvar: 0.0,
                })
                .collect(),
            branches: flows
                .iter()
                .map(|&(f, t, p)| Branch {
                    from: f,
                    to: t,
                    circuit: 1,
                    p_from_mw: p,
                    p_to_mw: -p,
                    breaker: true,
                })
                .collect(),
            generators: [("GA", 1), ("GB", 4)]
                .iter()
                .map(|&(id, bus)| Generator {
                    gen_id: id.into(),
                    bus,
                    p_capacity_mw: 100.0,
                    q_min_mvar: 0.0,
                    q_max_mvar: 0.0,
                    inertia_h_s: 5.0,
                    xd_prime_pu: 0.2,
                })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn fixed_groups_cut_light_ties() {
        let case = ring();
        let opts = PipelineOptions {
            groups: Some(vec![vec!["GA".into()], vec!["GB".into()]]),
            ..Default::default()
        };
        let out = run_pipeline(&case, None, &opts).unwrap();
        let cut: Vec<(u32, u32)> = out.plan.cutset.iter().map(|c| (c.from, c.to)).collect();
        assert_eq!(cut, vec![(1, 6), (3, 4)]);
        assert_eq!(out.plan.assignment[0], (1, 1));
        assert_eq!(out.plan.assignment[3], (4, 2));
    }

    #[test]
    fn k_below_two_rejected() {
        let case = ring();
        let pmu = PmuRecordSet {
            records: ["GA", "GB"]
                .iter()
                .map(|id| PmuRecord {
                    gen_id: id.to_string(),
                    times: vec![0.0, 0.1, 0.2],
                    samples: Samples::Angles(vec![0.0, 0.1, 0.3]),
                })
                .collect(),
        };
        let opts = PipelineOptions {
            k: Some(1),
            ..Default::default()
        };
        assert!(matches!(
            run_pipeline(&case, Some(&pmu), &opts),
            Err(Error::InvalidInput(_))
        ));
    }
}
