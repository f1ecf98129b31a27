//! Fixtures shared by the benchmarks.

use skg_core::duhamel::TimeGrid;
use skg_core::kernels::ModelParams;
use skg_core::lattice::{Field, LatticeSpec};
use skg_core::noise::{self, NoiseRealization};
use skg_core::simulator::SimConfig;

/// Quartic double well with light damping and noise.
pub fn params() -> ModelParams {
    ModelParams::new(1.0, -1.0, 1.0, 3, 0.3).expect("valid parameters")
}

pub fn lattice(dim: usize, sites: usize) -> LatticeSpec {
    LatticeSpec::new(dim, sites, 1.0).expect("valid lattice")
}

pub fn random_field(spec: LatticeSpec, seed: u64) -> Field {
    noise::gaussian_field(spec, 1.0, &mut noise::stream(seed))
}

pub fn forcing(spec: LatticeSpec, steps: usize, seed: u64) -> NoiseRealization {
    let grid = TimeGrid::new(0.01, steps).expect("valid grid");
    NoiseRealization::white(spec, grid, 0.3, &mut noise::stream(seed))
}

pub fn sim_config(spec: LatticeSpec) -> SimConfig {
    SimConfig::new(spec, params(), 0.01, 1.0, 7)
}
