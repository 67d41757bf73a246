//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use islanding_core::{load_network_case, NetworkCase, Scenario, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn ieee39() -> NetworkCase {
    load_network_case(data_dir().join("ieee39/network.csv")).expect("bundled 39-bus case")
}

pub fn scenario(name: &str) -> Scenario {
    Scenario::load(data_dir().join(name).join("scenario.json")).expect("bundled scenario")
}

/// Damped random-walk angle traces, reproducible from `seed`.
pub fn random_trajectories(n: usize, len: usize, seed: u64) -> Vec<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|g| {
            let mut a = 0.0;
            let angles = (0..len)
                .map(|_| {
                    a = 0.98 * a + rng.random_range(-0.05..0.05);
                    a
                })
                .collect();
            Trajectory {
                gen_id: format!("G{}", g + 1),
                t0: 0.0,
                dt: 1.0 / 60.0,
                angles,
            }
        })
        .collect()
}

pub fn groups(spec: &[&[u32]]) -> Vec<Vec<String>> {
    spec.iter()
        .map(|g| g.iter().map(|i| format!("G{i}")).collect())
        .collect()
}
