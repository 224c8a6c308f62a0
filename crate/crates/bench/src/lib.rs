//! Shared fixtures for the criterion benches.

use cavityflow::reference;
use cavityflow::simulation::Simulation;

/// REF-EGG at `n^3` cells, ready to step.
pub fn reference_simulation(n: usize) -> Simulation {
    let mut config = reference::load(reference::REF_EGG).expect("shipped config parses");
    config.grid = [n; 3];
    Simulation::new(config).expect("shipped config builds")
}
