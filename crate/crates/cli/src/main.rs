//! `islanding`: PMU-driven coherency identification and controlled islanding.

mod config;
mod report;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use islanding_core::islanding::build_plan;
use islanding_core::pipeline::{compare_baseline, identify, partition};
use islanding_core::{
    dtw, load_network_case, load_pmu_records, pairwise_dtw, preprocess, simulate,
    write_pmu_records, Error, NetworkCase, PmuRecordSet, PowerGraph, PreprocessOptions, Scenario,
    Stage, Trajectory,
};
use serde_json::json;

use config::{RunConfig, RunFlags};
use report::{GroupsDoc, PlanDoc};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration.
    Usage(String),
    /// A library error raised while running `phase`.
    Phase(Phase, Error),
    /// Library error outside a pipeline phase.
    Core(Error),
    /// Writing an artifact failed.
    Output(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Ingest,
    Identification,
    Partition,
    Islanding,
    Simulation,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::Ingest => "ingest",
            Phase::Identification => "identification",
            Phase::Partition => "partition",
            Phase::Islanding => "islanding",
            Phase::Simulation => "simulation",
        }
    }

    fn exit_code(self) -> u8 {
        match self {
            Phase::Ingest => 3,
            Phase::Identification => 4,
            Phase::Partition => 5,
            Phase::Islanding => 6,
            Phase::Simulation => 7,
        }
    }

    fn of_stage(s: Stage) -> Phase {
        match s {
            Stage::Ingest => Phase::Ingest,
            Stage::Rotor | Stage::Dtw | Stage::Coherency => Phase::Identification,
            Stage::Netgraph | Stage::Spectral => Phase::Partition,
            Stage::Islanding => Phase::Islanding,
            Stage::Swingsim => Phase::Simulation,
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Phase(p, _) => p.exit_code(),
            CliError::Core(e) => Phase::of_stage(e.stage()).exit_code(),
            CliError::Output(_) => 1,
        }
    }

    fn report(&self) -> String {
        match self {
            CliError::Usage(m) => format!("error: {m}\nhint: see --help"),
            CliError::Phase(p, e) => format!(
                "error: {} failed in module {}: {e}\nhint: {}",
                p.name(),
                e.stage().name(),
                e.remedy()
            ),
            CliError::Core(e) => format!(
                "error in module {}: {e}\nhint: {}",
                e.stage().name(),
                e.remedy()
            ),
            CliError::Output(m) => format!("error: cannot write output: {m}"),
        }
    }
}

trait InPhase<T> {
    fn phase(self, p: Phase) -> Result<T, CliError>;
}

impl<T> InPhase<T> for islanding_core::Result<T> {
    fn phase(self, p: Phase) -> Result<T, CliError> {
        self.map_err(|e| CliError::Phase(p, e))
    }
}

#[derive(Debug, Parser)]
#[command(name = "islanding", version, about, propagate_version = true)]
struct Cli {
    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(flatten)]
    flags: RunFlags,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the swing simulation and write pmu.csv and voltages.csv
    Simulate {
        /// Generators whose leading samples are removed from pmu.csv
        #[arg(long, value_delimiter = ',')]
        drop: Vec<String>,
        /// Fraction of samples removed for each --drop generator
        #[arg(long, default_value_t = 0.2)]
        drop_fraction: f64,
    },
    /// Identify coherent generator groups and write groups.json
    Identify,
    /// DTW distance and warping path for one pair, or the full matrix
    Dtw {
        /// Two generator ids, e.g. G1,G2
        #[arg(long, value_delimiter = ',', num_args = 1)]
        pair: Option<Vec<String>>,
    },
    /// Build the flow-weighted graph
    Graph {
        /// Write W, L and L_N as CSV matrices
        #[arg(long)]
        emit_laplacian: bool,
    },
    /// Constrained spectral partition for fixed groups
    Partition,
    /// Islanding plan from an assignment.csv written by `partition`
    Plan {
        /// Bus allocation CSV (bus,island)
        #[arg(long)]
        assignment: std::path::PathBuf,
    },
    /// Full pipeline: identification, partition and plan
    Run,
    /// Proposed grouping against the correlation baseline
    Compare,
}

fn load_case(cfg: &RunConfig) -> Result<NetworkCase, CliError> {
    load_network_case(cfg.network()?).phase(Phase::Ingest)
}

fn load_scenario(cfg: &RunConfig) -> Result<Option<Scenario>, CliError> {
    cfg.scenario
        .as_deref()
        .map(Scenario::load)
        .transpose()
        .phase(Phase::Ingest)
}

/// PMU records from file, or simulated from the scenario. Simulated records
/// are also written to the output directory.
fn measurements(
    cfg: &RunConfig,
    case: &NetworkCase,
    scenario: Option<&Scenario>,
) -> Result<PmuRecordSet, CliError> {
    if let Some(p) = &cfg.pmu {
        return load_pmu_records(p).phase(Phase::Ingest);
    }
    let Some(s) = scenario else {
        return Err(CliError::Usage("--pmu or --scenario is required".into()));
    };
    let sim = simulate(case, s).phase(Phase::Simulation)?;
    let pmu = sim.to_pmu_records();
    report::write(&cfg.out, "pmu.csv", &write_pmu_records(&pmu).phase(Phase::Simulation)?)?;
    report::write(&cfg.out, "voltages.csv", &sim.voltages_csv())?;
    Ok(pmu)
}

fn fixed_groups(cfg: &RunConfig) -> Result<Option<Vec<Vec<String>>>, CliError> {
    if let Some(g) = &cfg.groups {
        return Ok(Some(g.clone()));
    }
    cfg.groups_file
        .as_deref()
        .map(|p| GroupsDoc::load(p).map(|d| d.groups))
        .transpose()
}

fn trajectories(cfg: &RunConfig, case: &NetworkCase, pmu: &PmuRecordSet) -> Result<Vec<Trajectory>, CliError> {
    let windowed = match cfg.window {
        Some((a, b)) => pmu.window(a, b),
        None => pmu.clone(),
    };
    let opts = PreprocessOptions {
        mode: cfg.angle_mode,
        dt: cfg.dt,
        ..Default::default()
    };
    preprocess(&windowed, &case.generators, &opts).phase(Phase::Identification)
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn cmd_simulate(cfg: &RunConfig, drop: &[String], fraction: f64) -> Result<(), CliError> {
    let case = load_case(cfg)?;
    let scenario = load_scenario(cfg)?
        .ok_or_else(|| CliError::Usage("--scenario is required".into()))?;
    let sim = simulate(&case, &scenario).phase(Phase::Simulation)?;
    let pmu = if drop.is_empty() {
        sim.to_pmu_records()
    } else {
        let ids: Vec<&str> = drop.iter().map(String::as_str).collect();
        sim.to_pmu_records()
            .drop_leading(&ids, fraction)
            .phase(Phase::Simulation)?
    };
    report::write(&cfg.out, "pmu.csv", &write_pmu_records(&pmu).phase(Phase::Simulation)?)?;
    report::write(&cfg.out, "voltages.csv", &sim.voltages_csv())?;
    let meta = json!({
        "stable": sim.stable,
        "final_spread_rad": sim.final_spread_rad,
        "damping": sim.damping,
        "dt": sim.dt,
        "output_rate": sim.output_rate,
        "generators": sim.gen_ids,
        "dropped": drop,
        "drop_fraction": if drop.is_empty() { 0.0 } else { fraction },
    });
    report::write(&cfg.out, "simulation.json", &report::json(&meta))?;
    println!(
        "simulated {} s: {} ({} samples per generator)",
        scenario.duration,
        if sim.stable { "stable" } else { "unstable" },
        sim.times.len()
    );
    Ok(())
}

fn cmd_identify(cfg: &RunConfig) -> Result<(), CliError> {
    let case = load_case(cfg)?;
    let scenario = load_scenario(cfg)?;
    let pmu = measurements(cfg, &case, scenario.as_ref())?;
    let opts = cfg.pipeline_options(scenario.as_ref());
    let id = identify(&pmu, &case, &opts).phase(Phase::Identification)?;
    let topo = case.with_open_branches(&opts.open_branches).phase(Phase::Ingest)?;
    let q = islanding_core::build_constraints(&id.groups, &topo).phase(Phase::Identification)?;
    let bus_ids: Vec<u32> = topo.buses.iter().map(|b| b.id).collect();
    report::write(&cfg.out, "constraints.csv", &report::matrix_csv("bus", &bus_ids, &q))?;
    let doc = report::write_identification(&cfg.out, &id)?;
    print!("{}", report::json(&doc));
    Ok(())
}

fn cmd_dtw(cfg: &RunConfig, pair: Option<&[String]>) -> Result<(), CliError> {
    let case = load_case(cfg)?;
    let scenario = load_scenario(cfg)?;
    let pmu = measurements(cfg, &case, scenario.as_ref())?;
    let ts = trajectories(cfg, &case, &pmu)?;
    match pair {
        Some([a, b]) => {
            let find = |id: &str| {
                ts.iter()
                    .find(|t| t.gen_id == id)
                    .ok_or_else(|| CliError::Phase(Phase::Ingest, Error::UnknownGenerator(id.into())))
            };
            let (ta, tb) = (find(a)?, find(b)?);
            let out = dtw(&ta.angles, &tb.angles, cfg.band).phase(Phase::Identification)?;
            let doc = json!({ "pair": [a, b], "distance": out.distance, "path": out.path });
            println!("{}", serde_json::to_string(&doc).expect("json"));
        }
        Some(p) => {
            return Err(CliError::Usage(format!(
                "--pair takes exactly two generator ids, got {}",
                p.len()
            )))
        }
        None => {
            let m = pairwise_dtw(&ts, cfg.band).phase(Phase::Identification)?;
            let ids: Vec<&str> = ts.iter().map(|t| t.gen_id.as_str()).collect();
            let csv = report::matrix_csv("gen", &ids, &m);
            report::write(&cfg.out, "dtw_matrix.csv", &csv)?;
            print!("{csv}");
        }
    }
    Ok(())
}

fn graph_files(dir: &Path, g: &PowerGraph) -> Result<(), CliError> {
    let ids = &g.bus_ids;
    report::write(dir, "weights.csv", &report::matrix_csv("bus", ids, &g.weights))?;
    report::write(dir, "laplacian.csv", &report::matrix_csv("bus", ids, &g.laplacian))?;
    report::write(dir, "laplacian_norm.csv", &report::matrix_csv("bus", ids, &g.laplacian_norm))
}

fn cmd_graph(cfg: &RunConfig, emit: bool) -> Result<(), CliError> {
    let case = load_case(cfg)?;
    let scenario = load_scenario(cfg)?;
    let open = cfg.open_branches(scenario.as_ref());
    let topo = case.with_open_branches(&open).phase(Phase::Ingest)?;
    let g = PowerGraph::from_case(&topo).phase(Phase::Partition)?;
    if emit {
        graph_files(&cfg.out, &g)?;
    }
    let components = g.component_labels().iter().max().map_or(0, |m| m + 1);
    let doc = json!({
        "buses": g.n(),
        "closed_branches": topo.branches.iter().filter(|b| b.breaker).count(),
        "open_branches": open.iter().map(|k| k.to_string()).collect::<Vec<_>>(),
        "vol": g.vol,
        "components": components,
    });
    print!("{}", report::json(&doc));
    Ok(())
}

fn cmd_partition(cfg: &RunConfig) -> Result<(), CliError> {
    let case = load_case(cfg)?;
    let scenario = load_scenario(cfg)?;
    let groups = fixed_groups(cfg)?
        .ok_or_else(|| CliError::Usage("--groups or --groups-file is required".into()))?;
    let opts = cfg.pipeline_options(scenario.as_ref());
    let topo = case.with_open_branches(&opts.open_branches).phase(Phase::Ingest)?;
    let p = partition(&topo, &groups, &opts).phase(Phase::Partition)?;
    report::write_partition(&cfg.out, &groups, &p)?;
    print!("{}", report::json(&report::PartitionDoc::new(&groups, &p)));
    Ok(())
}

fn cmd_plan(cfg: &RunConfig, assignment: &Path) -> Result<(), CliError> {
    let case = load_case(cfg)?;
    let scenario = load_scenario(cfg)?;
    let groups = fixed_groups(cfg)?
        .ok_or_else(|| CliError::Usage("--groups or --groups-file is required".into()))?;
    let open = cfg.open_branches(scenario.as_ref());
    let topo = case.with_open_branches(&open).phase(Phase::Ingest)?;
    let text = std::fs::read_to_string(assignment)
        .map_err(|e| CliError::Usage(format!("{}: {e}", assignment.display())))?;
    let rows = report::parse_assignment_csv(&text)?;
    let index = topo.bus_index();
    let mut labels = vec![None; topo.n_buses()];
    for (bus, island) in rows {
        let i = *index.get(&bus).ok_or_else(|| {
            CliError::Phase(
                Phase::Ingest,
                Error::UnknownBus {
                    what: "assignment".into(),
                    bus,
                },
            )
        })?;
        labels[i] = Some(island - 1);
    }
    let labels: Vec<usize> = labels
        .iter()
        .zip(&topo.buses)
        .map(|(l, b)| {
            l.ok_or_else(|| {
                CliError::Phase(
                    Phase::Ingest,
                    Error::invalid(format!("assignment has no island for bus {}", b.id)),
                )
            })
        })
        .collect::<Result<_, _>>()?;
    let plan = build_plan(&labels, &topo, &groups).phase(Phase::Islanding)?;
    let doc = PlanDoc::new(&groups, &open, plan);
    report::write_plan(&cfg.out, &doc)?;
    print!("{}", report::plan_summary_csv(&doc.plan));
    Ok(())
}

fn cmd_run(cfg: &RunConfig) -> Result<(), CliError> {
    let started = unix_now();
    let clock = Instant::now();
    let case = load_case(cfg)?;
    let scenario = load_scenario(cfg)?;
    let opts = cfg.pipeline_options(scenario.as_ref());

    let (groups, identified) = match fixed_groups(cfg)? {
        Some(g) => (g, None),
        None => {
            let pmu = measurements(cfg, &case, scenario.as_ref())?;
            let id = identify(&pmu, &case, &opts).phase(Phase::Identification)?;
            report::write_identification(&cfg.out, &id)?;
            (id.groups.clone(), Some(id))
        }
    };
    let topo = case.with_open_branches(&opts.open_branches).phase(Phase::Ingest)?;
    let p = partition(&topo, &groups, &opts).phase(Phase::Partition)?;
    graph_files(&cfg.out, &p.graph)?;
    report::write_partition(&cfg.out, &groups, &p)?;
    let plan = build_plan(&p.assignment, &topo, &groups).phase(Phase::Islanding)?;
    let doc = PlanDoc::new(&groups, &opts.open_branches, plan);
    report::write_plan(&cfg.out, &doc)?;

    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix_s": started,
        "finished_unix_s": unix_now(),
        "elapsed_s": clock.elapsed().as_secs_f64(),
        "network": cfg.network,
        "pmu": cfg.pmu,
        "scenario": cfg.scenario,
        "angle_mode": cfg.angle_mode.to_string(),
        "window": cfg.window,
        "band": cfg.band,
        "k_selected": groups.len(),
        "k_selection": identified.as_ref().and_then(|i| i.k_selection.clone()),
        "beta": p.solution.beta,
        "beta_alpha": opts.beta_alpha,
        "damping": scenario.as_ref().map(|s| s.damping),
        "open_branches": doc.open_branches,
    });
    report::write(&cfg.out, "run_meta.json", &report::json(&meta))?;

    let cut: Vec<String> = doc.plan.cutset.iter().map(|c| c.key().to_string()).collect();
    println!(
        "{} islands, cut {{{}}}, disruption {:.2} MW, load shed {:.2} MW",
        doc.plan.islands.len(),
        cut.join(", "),
        doc.plan.disruption_mw,
        doc.plan.total_load_shed_mw
    );
    println!("plan written to {}", cfg.out.join("plan.json").display());
    Ok(())
}

fn cmd_compare(cfg: &RunConfig) -> Result<(), CliError> {
    let case = load_case(cfg)?;
    let scenario = load_scenario(cfg)?;
    let pmu = measurements(cfg, &case, scenario.as_ref())?;
    let mut opts = cfg.pipeline_options(scenario.as_ref());
    opts.groups = fixed_groups(cfg)?;
    let c = compare_baseline(&case, &pmu, &opts).phase(Phase::Identification)?;
    report::write(&cfg.out, "comparison.json", &report::json(&c))?;
    report::write(&cfg.out, "comparison.csv", &report::comparison_csv(&c))?;
    print!("{}", report::comparison_text(&c));
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    match &cli.command {
        Command::Simulate {
            drop,
            drop_fraction,
        } => cmd_simulate(&cfg, drop, *drop_fraction),
        Command::Identify => cmd_identify(&cfg),
        Command::Dtw { pair } => cmd_dtw(&cfg, pair.as_deref()),
        Command::Graph { emit_laplacian } => cmd_graph(&cfg, *emit_laplacian),
        Command::Partition => cmd_partition(&cfg),
        Command::Plan { assignment } => cmd_plan(&cfg, assignment),
        Command::Run => cmd_run(&cfg),
        Command::Compare => cmd_compare(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn data(rel: &str) -> String {
        let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel);
        p.to_string_lossy().into_owned()
    }

    fn exec(args: &[&str]) -> Result<(), CliError> {
        let cli = Cli::try_parse_from(std::iter::once("islanding").chain(args.iter().copied()))
            .expect("arguments parse");
        dispatch(&cli)
    }

    fn read(dir: &Path, name: &str) -> String {
        std::fs::read_to_string(dir.join(name)).unwrap()
    }

    const CASE1_GROUPS: &str = "G1,G8,G9;G2,G3,G4,G5,G6,G7";

    #[test]
    fn k_below_two_is_a_usage_error() {
        let err = Cli::try_parse_from(["islanding", "--k", "1", "run"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(Cli::try_parse_from(["islanding", "--k", "auto", "run"]).is_ok());
    }

    #[test]
    fn fixed_group_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        exec(&["--config", &data("case1/config.toml"), "--groups", CASE1_GROUPS, "--out", out, "run"])
            .unwrap();
        for f in [
            "plan.json",
            "plan_summary.csv",
            "run_meta.json",
            "partition.json",
            "assignment.csv",
            "eigenvectors.csv",
            "constraints.csv",
            "weights.csv",
            "laplacian.csv",
            "laplacian_norm.csv",
        ] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let plan: PlanDoc = serde_json::from_str(&read(dir.path(), "plan.json")).unwrap();
        let cut: Vec<String> = plan.plan.cutset.iter().map(|c| c.key().to_string()).collect();
        assert_eq!(cut, vec!["3-4"]);
        assert_eq!(plan.open_branches, vec!["17-16", "2-1"]);
        assert!(read(dir.path(), "plan_summary.csv").starts_with("island,buses,"));
        let meta: serde_json::Value = serde_json::from_str(&read(dir.path(), "run_meta.json")).unwrap();
        assert!(meta["started_unix_s"].as_f64().unwrap() > 0.0);
        assert_eq!(meta["beta_alpha"], 0.15);
    }

    #[test]
    fn chained_stages_reproduce_run() {
        let full = tempfile::tempdir().unwrap();
        let cfg = data("case1/config.toml");
        exec(&["--config", &cfg, "--out", full.path().to_str().unwrap(), "run"]).unwrap();

        let staged = tempfile::tempdir().unwrap();
        let s = staged.path().to_str().unwrap();
        exec(&["--config", &cfg, "--out", s, "identify"]).unwrap();
        let groups = staged.path().join("groups.json");
        let groups = groups.to_str().unwrap();
        exec(&["--config", &cfg, "--out", s, "--groups-file", groups, "partition"]).unwrap();
        let assignment = staged.path().join("assignment.csv");
        exec(&[
            "--config",
            &cfg,
            "--out",
            s,
            "--groups-file",
            groups,
            "plan",
            "--assignment",
            assignment.to_str().unwrap(),
        ])
        .unwrap();
        for f in ["groups.json", "dtw_matrix.csv", "assignment.csv", "partition.json", "plan.json"] {
            assert_eq!(read(full.path(), f), read(staged.path(), f), "{f}");
        }
    }

    #[test]
    fn dtw_pair_and_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let cfg = data("case1/config.toml");
        exec(&["--config", &cfg, "--out", out, "dtw", "--pair", "G1,G2"]).unwrap();
        exec(&["--config", &cfg, "--out", out, "dtw"]).unwrap();
        let m = read(dir.path(), "dtw_matrix.csv");
        assert_eq!(m.lines().count(), 11);
        assert!(m.starts_with("gen,G1,G2,"));
        let err = exec(&["--config", &cfg, "--out", out, "dtw", "--pair", "G1"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = exec(&["--config", &cfg, "--out", out, "dtw", "--pair", "G1,G99"]).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn graph_emits_laplacians() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        exec(&["--network", &data("ieee39/network.csv"), "--out", out, "graph", "--emit-laplacian"])
            .unwrap();
        for f in ["weights.csv", "laplacian.csv", "laplacian_norm.csv"] {
            assert_eq!(read(dir.path(), f).lines().count(), 40, "{f}");
        }
    }

    #[test]
    fn simulate_with_data_loss() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        exec(&["--config", &data("case1/config.toml"), "--out", out, "simulate", "--drop", "G3"])
            .unwrap();
        let pmu = load_pmu_records(dir.path().join("pmu.csv")).unwrap();
        let (g3, g4) = (pmu.get("G3").unwrap().len(), pmu.get("G4").unwrap().len());
        assert_eq!(g4, 721);
        assert_eq!(g3, g4 - (0.2 * g4 as f64).round() as usize);
        assert!(read(dir.path(), "voltages.csv").starts_with("time_s,bus,vm_pu\n"));
        let meta: serde_json::Value =
            serde_json::from_str(&read(dir.path(), "simulation.json")).unwrap();
        assert_eq!(meta["damping"], 0.05);
    }

    #[test]
    fn exit_codes_follow_failure_class() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let net = data("ieee39/network.csv");

        let missing = exec(&["--network", "/nonexistent.csv", "graph"]).unwrap_err();
        assert_eq!(missing.exit_code(), 2);

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "#SYSTEM base_mva,freq_hz\n100,60\n#BUS id,load_p_mw,load_q_mvar\n1,x,0\n").unwrap();
        let err = exec(&["--network", bad.to_str().unwrap(), "graph"]).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.report().contains("module ingest"));

        let err = exec(&["--network", &net, "--out", out, "--beta", "1e9", "--groups", CASE1_GROUPS, "partition"])
            .unwrap_err();
        assert_eq!(err.exit_code(), 5);
        assert!(err.report().contains("hint:"));

        let split = dir.path().join("split.csv");
        std::fs::write(&split, "bus,island\n").unwrap();
        let mut rows = String::from("bus,island\n");
        for b in 1..=39 {
            // G1 (bus 30) and G8 (bus 37) in different islands
            let _ = std::fmt::Write::write_fmt(&mut rows, format_args!("{b},{}\n", if b == 37 { 2 } else { 1 }));
        }
        std::fs::write(&split, rows).unwrap();
        let err = exec(&["--network", &net, "--out", out, "--groups", CASE1_GROUPS, "plan", "--assignment", split.to_str().unwrap()])
            .unwrap_err();
        assert_eq!(err.exit_code(), 6);

        let scen = dir.path().join("strand.json");
        std::fs::write(
            &scen,
            r#"{"duration": 1.0, "events": [{"t": 0.5, "kind": "trip_branch", "from": 25, "to": 37}]}"#,
        )
        .unwrap();
        let err = exec(&["--network", &net, "--scenario", scen.to_str().unwrap(), "--out", out, "simulate"])
            .unwrap_err();
        assert_eq!(err.exit_code(), 7);
    }
}
