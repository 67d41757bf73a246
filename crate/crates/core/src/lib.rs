//! Generator coherency identification by dynamic time warping and controlled
//! islanding by constrained spectral clustering.
//!
//! The pipeline runs in order:
//!
//! 1. [`rotor`] turns PMU records into unwrapped rotor-angle trajectories.
//! 2. [`dtw`] measures pairwise trajectory similarity.
//! 3. [`coherency`] picks the number of groups, groups generators and builds
//!    the must-link / cannot-link matrix.
//! 4. [`netgraph`] builds the flow-weighted graph and its Laplacians.
//! 5. [`spectral`] solves the constrained eigenproblem and allocates buses.
//! 6. [`islanding`] extracts the cut-set and the per-island balance.
//!
//! [`swingsim`] produces trajectories for test scenarios and [`pipeline`]
//! wires the stages together.

pub mod coherency;
pub mod dtw;
pub mod error;
pub mod ingest;
pub mod islanding;
pub mod linalg;
pub mod netgraph;
pub mod pipeline;
pub mod rotor;
pub mod spectral;
pub mod swingsim;

pub use coherency::{
    build_constraints, correlation_baseline, group_generators, select_k, CoherencyModel,
    Dendrogram, KSelection,
};
pub use dtw::{dtw, dtw_distance, local_distance, pairwise_dtw, DistanceGrid, DtwOutcome, WarpingPath};
pub use error::{Error, Result, Stage};
pub use ingest::{
    load_network_case, load_pmu_records, parse_network_case, parse_pmu_records, write_network_case,
    write_pmu_records, Branch, BranchKey, Bus, BusId, Generator, NetworkCase, PmuRecord,
    PmuRecordSet, Samples,
};
pub use islanding::{
    balance_report, extract_cutset, repair_connectivity, IslandReport, IslandingPlan,
};
pub use netgraph::{build_laplacians, build_weights, PowerGraph};
pub use pipeline::{compare_baseline, run_pipeline, Comparison, PipelineOptions, PipelineOutput};
pub use rotor::{estimate_rotor_angle, preprocess, AngleMode, PreprocessOptions, Trajectory};
pub use spectral::{
    default_beta, kmedoids_assign, normalize_constraints, recover_indicator, solve_constrained,
    SpectralSolution,
};
pub use swingsim::{apply_data_loss, simulate, Event, Scenario, SimResult};
