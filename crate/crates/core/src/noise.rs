//! Seeded random streams and frozen noise paths.
//!
//! All randomness comes from ChaCha8 streams keyed by a 64-bit seed, and
//! normals are drawn with `rand_distr::StandardNormal`, so a seed fixes every
//! sample bit for bit. Ensemble members get independent streams keyed by
//! [`splitmix`]`(seed, i)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::duhamel::{SpaceTimeField, TimeGrid};
use crate::lattice::{Field, LatticeSpec};

pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The `index`-th output of a SplitMix64 generator started at `seed`.
pub fn splitmix(seed: u64, index: u64) -> u64 {
    splitmix64(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// I.i.d. `Normal(0, std²)` site values.
pub fn gaussian_field(spec: LatticeSpec, std: f64, rng: &mut Stream) -> Field {
    Field::from_fn(spec, |_| std * rng.sample::<f64, _>(StandardNormal))
}

/// Standard normals, one per site.
pub fn fill_standard_normal(out: &mut [f64], rng: &mut Stream) {
    for v in out {
        *v = rng.sample(StandardNormal);
    }
}

/// A fixed space-time sample of white forcing on a time grid.
///
/// Node `n ≥ 1` holds the constant forcing value on `(t_{n−1}, t_n]`, i.e.
/// `σ η / √dt` with standard normal `η`; node 0 is zero. Both the Duhamel
/// solver (which reads it as a source sampled on nodes) and the stepper
/// (which applies node `n+1` while advancing from `t_n` to `t_{n+1}`) see
/// exactly the same path.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    field: SpaceTimeField,
}

impl NoiseRealization {
    pub fn white(spec: LatticeSpec, grid: TimeGrid, sigma: f64, rng: &mut Stream) -> Self {
        let scale = sigma / grid.dt().sqrt();
        let mut field = SpaceTimeField::zeros(spec, grid);
        for n in 1..grid.nodes() {
            let slice = field.slice_mut(n);
            fill_standard_normal(slice.values_mut(), rng);
            for v in slice.values_mut() {
                *v *= scale;
            }
        }
        Self { field }
    }

    pub fn zeros(spec: LatticeSpec, grid: TimeGrid) -> Self {
        Self { field: SpaceTimeField::zeros(spec, grid) }
    }

    pub fn from_field(field: SpaceTimeField) -> Self {
        Self { field }
    }

    /// The realization as a source sampled on grid nodes.
    pub fn as_source(&self) -> &SpaceTimeField {
        &self.field
    }

    pub fn into_source(self) -> SpaceTimeField {
        self.field
    }

    /// Forcing applied while stepping from `t_n` to `t_{n+1}`.
    pub fn cell(&self, n: usize) -> &Field {
        self.field.slice(n + 1)
    }

    pub fn grid(&self) -> &TimeGrid {
        self.field.grid()
    }

    pub fn negated(&self) -> Self {
        Self { field: self.field.map(|v| -v) }
    }
}
