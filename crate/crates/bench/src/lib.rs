//! Shared fixtures for the benchmarks.

use flex_core::{GaussianSpec, LinearSystem, NetworkModel, UncertaintySetSpec};
use std::path::PathBuf;

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

pub fn system(name: &str) -> LinearSystem {
    LinearSystem::from_path(data(name)).expect("bundled system")
}

pub fn set(name: &str) -> UncertaintySetSpec {
    UncertaintySetSpec::from_path(data(name)).expect("bundled set")
}

pub fn gaussian(name: &str) -> GaussianSpec {
    let text = std::fs::read_to_string(data(name)).expect("bundled distribution");
    GaussianSpec::from_json_str(&text).expect("valid distribution")
}

pub fn network(name: &str) -> NetworkModel {
    NetworkModel::from_path(data(name)).expect("bundled network")
}
