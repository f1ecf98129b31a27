//! Damped stochastic Klein–Gordon dynamics on a periodic lattice.
//!
//! The equation
//!
//! ```text
//! φ_tt + γ φ_t − Δ_δ φ + μ² φ + λ φ^p = ξ,   φ(0) = f,  φ_t(0) = g
//! ```
//!
//! is solved four ways that can be checked against each other:
//!
//! * [`kernels`]: exact per-mode propagators `C(t,p)`, `S(t,p)` of the linear part;
//! * [`duhamel`]: the integral equation `φ = −λ S∗φ^p + S∗ξ + C⋆f + S⋆g`,
//!   solved by Picard iteration;
//! * [`perturbation`] and [`trees`]: the formal power series in λ, built either
//!   by the multinomial recursion or as a sum over typed rooted trees;
//! * [`simulator`]: direct Euler–Maruyama time stepping of the first-order system.

pub mod duhamel;
pub mod error;
pub mod kernels;
pub mod lattice;
pub mod noise;
pub mod perturbation;
pub mod simulator;
pub mod trees;
pub mod validate;

pub use duhamel::{
    homogeneous_solution, picard_solve, source_convolve, PicardSolution, SpaceTimeField, TimeGrid,
};
pub use error::{Error, Result};
pub use kernels::{
    build_dispersion, kernel_c, kernel_position, kernel_s, DampedMode, DispersionTable,
    KernelKind, KernelSlice, ModelParams,
};
pub use lattice::{
    dft_forward, dft_inverse, laplacian_apply, spatial_convolve, symbol_omega, Field, LatticeSpec,
    SpectralField,
};
pub use noise::NoiseRealization;
pub use perturbation::{compute_orders, enumerate_partitions, partial_sum, OrderField, PartitionTerm};
pub use simulator::{em_step, ensemble_run, integrate_forcing, observables, run, SimConfig, State, Trace};
pub use trees::{enumerate_trees, evaluate_tree, render_dot, tree_sum, LeafKind, TreeNode, WeightedTree};
pub use validate::{validate_suite, Check, Level, Report};
