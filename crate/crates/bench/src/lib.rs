//! Shared fixtures for the criterion benches.

use std::path::PathBuf;

use endosaa::instance_gen::{generate_instance, load_cities, GenConfig, DEFAULT_STATES};
use endosaa::ndfpp::NdfppInstance;
use endosaa::HighsSolver;

/// The 15-node, 4-facility instance built from the bundled city snapshot.
pub fn desk_instance(levels: u32) -> NdfppInstance {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/se_cities.csv");
    let states: Vec<String> = DEFAULT_STATES.iter().map(|s| s.to_string()).collect();
    let cities = load_cities(&path, &states).expect("city snapshot");
    let cfg = GenConfig { facility_count: 4, levels, ..GenConfig::default() };
    generate_instance(&cities, &cfg, &HighsSolver).expect("desk instance")
}
