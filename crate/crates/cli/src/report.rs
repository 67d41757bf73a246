//! Artifact writers: JSON documents, matrix CSVs and plot-data CSVs.

use std::fmt::Write as _;
use std::path::Path;

use islanding_core::islanding::IslandingPlan;
use islanding_core::pipeline::{Comparison, ComparisonRow, Identification, Partition};
use islanding_core::{BranchKey, KSelection, Trajectory};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

/// Square matrix with a label column and header row.
pub fn matrix_csv<L: std::fmt::Display>(corner: &str, labels: &[L], m: &DMatrix<f64>) -> String {
    let mut s = String::from(corner);
    for l in labels {
        let _ = write!(s, ",{l}");
    }
    s.push('\n');
    for (i, l) in labels.iter().enumerate() {
        let _ = write!(s, "{l}");
        for j in 0..m.ncols() {
            let _ = write!(s, ",{}", m[(i, j)]);
        }
        s.push('\n');
    }
    s
}

/// Coherent groups as handed from `identify` to `partition`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupsDoc {
    pub k: usize,
    pub groups: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_selection: Option<KSelection>,
}

impl GroupsDoc {
    pub fn load(path: &Path) -> Result<GroupsDoc, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let doc: GroupsDoc = serde_json::from_str(&text)
            .map_err(|e| CliError::Core(islanding_core::Error::Json(e)))?;
        if doc.groups.len() < 2 {
            return Err(CliError::Usage(format!(
                "{}: at least 2 groups are required",
                path.display()
            )));
        }
        Ok(doc)
    }
}

/// The deterministic plan document. Timing data lives in run_meta.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDoc {
    pub groups: Vec<Vec<String>>,
    pub open_branches: Vec<String>,
    pub plan: IslandingPlan,
}

impl PlanDoc {
    pub fn new(groups: &[Vec<String>], open: &[BranchKey], plan: IslandingPlan) -> PlanDoc {
        PlanDoc {
            groups: groups.to_vec(),
            open_branches: open.iter().map(|k| k.to_string()).collect(),
            plan,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionDoc<'a> {
    pub groups: &'a [Vec<String>],
    pub beta: f64,
    pub vol: f64,
    pub shift: f64,
    pub eigenvalues: &'a [f64],
    pub selected_values: &'a [f64],
    pub kmedoids_cost: f64,
    pub kmedoids_iterations: usize,
    pub medoid_buses: Vec<u32>,
    pub assignment: Vec<(u32, usize)>,
}

impl<'a> PartitionDoc<'a> {
    pub fn new(groups: &'a [Vec<String>], p: &'a Partition) -> PartitionDoc<'a> {
        PartitionDoc {
            groups,
            beta: p.solution.beta,
            vol: p.solution.vol,
            shift: p.solution.shift,
            eigenvalues: &p.solution.eigenvalues,
            selected_values: &p.solution.selected_values,
            kmedoids_cost: p.kmedoids.cost,
            kmedoids_iterations: p.kmedoids.iterations,
            medoid_buses: p.kmedoids.medoids.iter().map(|&i| p.graph.bus_ids[i]).collect(),
            assignment: p
                .graph
                .bus_ids
                .iter()
                .zip(&p.assignment)
                .map(|(&b, &i)| (b, i + 1))
                .collect(),
        }
    }
}

/// `bus,island` rows, islands 1-based.
pub fn assignment_csv(assignment: &[(u32, usize)]) -> String {
    let mut s = String::from("bus,island\n");
    for (b, i) in assignment {
        let _ = writeln!(s, "{b},{i}");
    }
    s
}

pub fn parse_assignment_csv(text: &str) -> Result<Vec<(u32, usize)>, CliError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in rd.deserialize::<(u32, usize)>().enumerate() {
        let row = row.map_err(|e| {
            CliError::Core(islanding_core::Error::parse(i + 2, e.to_string()))
        })?;
        if row.1 == 0 {
            return Err(CliError::Core(islanding_core::Error::parse(
                i + 2,
                "islands are numbered from 1",
            )));
        }
        out.push(row);
    }
    Ok(out)
}

/// Columns are the selected eigenvectors, rows the buses.
pub fn eigenvectors_csv(p: &Partition) -> String {
    let mut s = String::from("bus");
    for j in 0..p.solution.selected.ncols() {
        let _ = write!(s, ",v{},u{}", j + 1, j + 1);
    }
    s.push('\n');
    for (i, b) in p.graph.bus_ids.iter().enumerate() {
        let _ = write!(s, "{b}");
        for j in 0..p.solution.selected.ncols() {
            let _ = write!(s, ",{},{}", p.solution.selected[(i, j)], p.embedding[(i, j)]);
        }
        s.push('\n');
    }
    s
}

pub fn plan_summary_csv(plan: &IslandingPlan) -> String {
    let mut s = String::from(
        "island,buses,generators,gen_capacity_mw,gen_dispatch_mw,load_mw,load_shed_mw,imbalance_mw,q_min_mvar,q_max_mvar,load_q_mvar\n",
    );
    for r in &plan.islands {
        let buses: Vec<String> = r.buses.iter().map(u32::to_string).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.island,
            buses.join(" "),
            r.generators.join(" "),
            r.gen_capacity_mw,
            r.gen_dispatch_mw,
            r.load_mw,
            r.load_shed_mw,
            r.imbalance_mw,
            r.q_min_mvar,
            r.q_max_mvar,
            r.load_q_mvar
        );
    }
    s
}

/// Long-format angle traces tagged with their coherent group.
pub fn angle_trace_csv(trajectories: &[Trajectory], groups: &[Vec<String>]) -> String {
    let group_of = |id: &str| {
        groups
            .iter()
            .position(|g| g.iter().any(|x| x == id))
            .map_or(String::new(), |g| (g + 1).to_string())
    };
    let mut s = String::from("time_s,gen_id,group,angle_rad\n");
    for t in trajectories {
        let g = group_of(&t.gen_id);
        for (i, a) in t.angles.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{}", t.time(i), t.gen_id, g, a);
        }
    }
    s
}

pub fn write_identification(dir: &Path, id: &Identification) -> Result<GroupsDoc, CliError> {
    let ids: Vec<&str> = id.trajectories.iter().map(|t| t.gen_id.as_str()).collect();
    write(dir, "dtw_matrix.csv", &matrix_csv("gen", &ids, &id.dtw_matrix))?;
    write(dir, "angles.csv", &angle_trace_csv(&id.trajectories, &id.groups))?;
    let doc = GroupsDoc {
        k: id.groups.len(),
        groups: id.groups.clone(),
        k_selection: id.k_selection.clone(),
    };
    write(dir, "groups.json", &json(&doc))?;
    Ok(doc)
}

pub fn write_partition(dir: &Path, groups: &[Vec<String>], p: &Partition) -> Result<(), CliError> {
    let buses = &p.graph.bus_ids;
    write(dir, "constraints.csv", &matrix_csv("bus", buses, &p.coherency.q))?;
    write(dir, "eigenvectors.csv", &eigenvectors_csv(p))?;
    let doc = PartitionDoc::new(groups, p);
    write(dir, "assignment.csv", &assignment_csv(&doc.assignment))?;
    write(dir, "partition.json", &json(&doc))
}

pub fn write_plan(dir: &Path, doc: &PlanDoc) -> Result<(), CliError> {
    write(dir, "plan.json", &json(doc))?;
    write(dir, "plan_summary.csv", &plan_summary_csv(&doc.plan))
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.2}"))
}

fn opt_n(x: Option<usize>) -> String {
    x.map_or_else(|| "n/a".into(), |v| v.to_string())
}

/// Metrics as rows, methods as columns.
pub fn comparison_csv(c: &Comparison) -> String {
    let mut s = String::from("metric");
    for r in &c.rows {
        let _ = write!(s, ",{}", r.method);
    }
    s.push('\n');
    type Cell = fn(&ComparisonRow) -> String;
    let lines: [(&str, Cell); 5] = [
        ("lines_cut", |r| opt_n(r.lines_cut)),
        ("islands", |r| opt_n(r.islands)),
        ("dispatch_imbalance_mw", |r| opt(r.dispatch_imbalance_mw)),
        ("load_shed_mw", |r| opt(r.load_shed_mw)),
        ("disruption_mw", |r| opt(r.disruption_mw)),
    ];
    for (name, f) in &lines {
        let _ = write!(s, "{name}");
        for r in &c.rows {
            let _ = write!(s, ",{}", f(r));
        }
        s.push('\n');
    }
    s
}

/// Aligned text rendering of [`comparison_csv`] plus groups and notes.
pub fn comparison_text(c: &Comparison) -> String {
    let rows: Vec<Vec<String>> = comparison_csv(c)
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    let ncol = rows[0].len();
    let widths: Vec<usize> = (0..ncol)
        .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    for r in &rows {
        for (j, cell) in r.iter().enumerate() {
            if j == 0 {
                let _ = write!(s, "{cell:<w$}", w = widths[j]);
            } else {
                let _ = write!(s, "  {cell:>w$}", w = widths[j]);
            }
        }
        s.push('\n');
    }
    for r in &c.rows {
        let groups: Vec<String> = r.groups.iter().map(|g| format!("({})", g.join(", "))).collect();
        let _ = writeln!(s, "{} groups: {}", r.method, groups.join(" "));
        if let Some(e) = &r.error {
            let _ = writeln!(s, "{} failed: {e}", r.method);
        }
    }
    for n in &c.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}
