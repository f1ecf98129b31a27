//! Periodic cubic lattice, the nearest-neighbour Laplacian and the discrete
//! Fourier pair used throughout the crate.
//!
//! Sites are stored row-major: site `z = (z_0, …, z_{d−1})` lives at flat
//! index `Σ_j z_j · N^{d−1−j}`, so axis 0 is the slowest. Momentum modes use
//! the same layout with integer momenta `k_j ∈ 0..N`, `p_j = 2π k_j / (N δ)`.
//!
//! Normalization: the forward transform carries `δ^d`,
//! `f̂(k) = Σ_x e^{−i p·x} f(x) δ^d`; the inverse carries `1/(N δ)^d`.
//! With this choice `dft_forward` of a unit spike is `δ^d` in every mode and
//! `(a ⋆ b)^ = â · b̂` with no extra constant.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Hermitian-symmetry tolerance (relative) accepted by [`dft_inverse`].
pub const HERMITIAN_TOL: f64 = 1e-6;

/// Geometry of a periodic `N^d` lattice with spacing `δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    dim: usize,
    sites_per_axis: usize,
    spacing: f64,
    len: usize,
}

impl LatticeSpec {
    pub fn new(dim: usize, sites_per_axis: usize, spacing: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidLattice("dimension must be at least 1".into()));
        }
        if sites_per_axis < 2 {
            return Err(Error::InvalidLattice(format!(
                "need at least 2 sites per axis, got {sites_per_axis}"
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidLattice(format!("spacing must be positive, got {spacing}")));
        }
        let len = u32::try_from(dim)
            .ok()
            .and_then(|d| sites_per_axis.checked_pow(d))
            .ok_or_else(|| {
                Error::InvalidLattice(format!("{sites_per_axis}^{dim} sites overflow the index type"))
            })?;
        Ok(Self { dim, sites_per_axis, spacing, len })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sites_per_axis(&self) -> usize {
        self.sites_per_axis
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total number of sites `N^d`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Cell volume `δ^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Flat-index stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.sites_per_axis.pow((self.dim - 1 - axis) as u32)
    }

    /// Integer coordinates of a flat index.
    pub fn unravel(&self, mut index: usize) -> Vec<usize> {
        let n = self.sites_per_axis;
        let mut coords = vec![0; self.dim];
        for axis in (0..self.dim).rev() {
            coords[axis] = index % n;
            index /= n;
        }
        coords
    }

    /// Flat index of integer coordinates (each reduced mod `N`).
    pub fn ravel(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.dim);
        coords.iter().fold(0, |acc, &c| acc * self.sites_per_axis + c % self.sites_per_axis)
    }

    /// Flat index of the momentum `−k`.
    pub fn negate_index(&self, index: usize) -> usize {
        let n = self.sites_per_axis;
        let coords: Vec<usize> = self.unravel(index).into_iter().map(|k| (n - k) % n).collect();
        self.ravel(&coords)
    }

    /// Physical momentum `p = 2π k / (N δ)` of a mode, components in `[0, 2π/δ)`.
    pub fn momentum(&self, index: usize) -> Vec<f64> {
        let scale = 2.0 * PI / (self.sites_per_axis as f64 * self.spacing);
        self.unravel(index).into_iter().map(|k| k as f64 * scale).collect()
    }

    /// Periodic Euclidean distance of a site from the origin, in lattice units of length.
    pub fn distance_from_origin(&self, index: usize) -> f64 {
        let n = self.sites_per_axis;
        self.unravel(index)
            .into_iter()
            .map(|z| {
                let w = z.min(n - z) as f64 * self.spacing;
                w * w
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// One real value per lattice site.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    spec: LatticeSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn new(spec: LatticeSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::LengthMismatch { expected: spec.len(), got: values.len() });
        }
        if let Some(site) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { site });
        }
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: LatticeSpec) -> Self {
        Self { spec, values: vec![0.0; spec.len()] }
    }

    pub fn constant(spec: LatticeSpec, value: f64) -> Self {
        Self { spec, values: vec![value; spec.len()] }
    }

    /// Unit spike at the origin.
    pub fn spike(spec: LatticeSpec) -> Self {
        let mut field = Self::zeros(spec);
        field.values[0] = 1.0;
        field
    }

    /// Builds a field from a function of the integer site coordinates.
    pub fn from_fn(spec: LatticeSpec, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let values = (0..spec.len()).map(|i| f(&spec.unravel(i))).collect();
        Self { spec, values }
    }

    pub(crate) fn from_vec_unchecked(spec: LatticeSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        Self { spec, values }
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `max_i |self_i − other_i|`.
    pub fn sup_distance(&self, other: &Field) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn scaled(&self, factor: f64) -> Field {
        Field::from_vec_unchecked(self.spec, self.values.iter().map(|v| v * factor).collect())
    }

    /// `self += factor · other`.
    pub fn add_scaled(&mut self, factor: f64, other: &Field) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
    }
}

/// Fourier modes of a field on the dual grid of its lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    spec: LatticeSpec,
    modes: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(spec: LatticeSpec, modes: Vec<Complex64>) -> Result<Self> {
        if modes.len() != spec.len() {
            return Err(Error::LengthMismatch { expected: spec.len(), got: modes.len() });
        }
        Ok(Self { spec, modes })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn modes(&self) -> &[Complex64] {
        &self.modes
    }

    pub fn modes_mut(&mut self) -> &mut [Complex64] {
        &mut self.modes
    }

    /// `max_k |mode(−k) − conj(mode(k))|`, relative to the largest mode magnitude.
    pub fn hermitian_deviation(&self) -> f64 {
        let scale = self.modes.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        let worst = (0..self.modes.len()).fold(0.0_f64, |m, i| {
            let j = self.spec.negate_index(i);
            m.max((self.modes[j] - self.modes[i].conj()).norm())
        });
        worst / scale
    }
}

/// `(Δ_δ φ)_x = δ^{−2} Σ_j (φ_{x+e_j} + φ_{x−e_j} − 2 φ_x)` with periodic wraparound.
pub fn laplacian_apply(field: &Field) -> Field {
    let spec = *field.spec();
    let mut out = vec![0.0; spec.len()];
    laplacian_into(&spec, field.values(), &mut out);
    Field::from_vec_unchecked(spec, out)
}

pub(crate) fn laplacian_into(spec: &LatticeSpec, phi: &[f64], out: &mut [f64]) {
    let n = spec.sites_per_axis();
    let inv_h2 = 1.0 / (spec.spacing() * spec.spacing());
    out.iter_mut().for_each(|o| *o = 0.0);
    for axis in 0..spec.dim() {
        let stride = spec.stride(axis);
        let span = stride * n;
        for (i, o) in out.iter_mut().enumerate() {
            let z = (i / stride) % n;
            let base = i - z * stride;
            let up = base + ((z + 1) % n) * stride;
            let down = base + ((z + n - 1) % n) * stride;
            debug_assert!(up < base + span && down < base + span);
            *o += phi[up] + phi[down] - 2.0 * phi[i];
        }
    }
    for o in out.iter_mut() {
        *o *= inv_h2;
    }
}

/// Fourier symbol of `−Δ_δ`: `Ω_δ(p) = (2/δ²) Σ_j (1 − cos δ p_j)`.
///
/// Evaluated as `(4/δ²) Σ_j sin²(π k_j / N)` to keep relative accuracy at small momenta.
pub fn symbol_omega(spec: &LatticeSpec, k: &[usize]) -> f64 {
    let n = spec.sites_per_axis() as f64;
    let h2 = spec.spacing() * spec.spacing();
    k.iter()
        .map(|&kj| {
            let s = (PI * kj as f64 / n).sin();
            s * s
        })
        .sum::<f64>()
        * 4.0
        / h2
}

/// `Ω_δ` for every mode in flat order.
pub fn symbol_table(spec: &LatticeSpec) -> Vec<f64> {
    (0..spec.len()).map(|i| symbol_omega(spec, &spec.unravel(i))).collect()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Unnormalized in-place d-dimensional FFT, one axis at a time.
pub(crate) fn fft_in_place(spec: &LatticeSpec, data: &mut [Complex64], inverse: bool) {
    let n = spec.sites_per_axis();
    let fft = plan(n, inverse);
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for axis in 0..spec.dim() {
        let stride = spec.stride(axis);
        let outer = spec.len() / (n * stride);
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * n * stride + inner;
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + k * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (k, slot) in line.iter().enumerate() {
                    data[base + k * stride] = *slot;
                }
            }
        }
    }
}

/// `f̂(k) = Σ_x e^{−i p·x} f(x) δ^d`.
pub fn dft_forward(field: &Field) -> SpectralField {
    let spec = *field.spec();
    SpectralField { spec, modes: forward_modes(&spec, field.values()) }
}

pub(crate) fn forward_modes(spec: &LatticeSpec, values: &[f64]) -> Vec<Complex64> {
    let vol = spec.cell_volume();
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v * vol, 0.0)).collect();
    fft_in_place(spec, &mut data, false);
    data
}

/// `f(x) = (N δ)^{−d} Σ_k e^{i p·x} f̂(k)`; rejects spectra that are not Hermitian.
pub fn dft_inverse(spectral: &SpectralField) -> Result<Field> {
    let deviation = spectral.hermitian_deviation();
    if deviation > HERMITIAN_TOL {
        return Err(Error::NonHermitian { deviation });
    }
    let spec = *spectral.spec();
    Ok(Field::from_vec_unchecked(spec, inverse_modes(&spec, spectral.modes().to_vec())))
}

/// Inverse transform of modes already known to be Hermitian; returns the real part.
pub(crate) fn inverse_modes(spec: &LatticeSpec, mut data: Vec<Complex64>) -> Vec<f64> {
    fft_in_place(spec, &mut data, true);
    let norm = 1.0 / (spec.sites_per_axis() as f64 * spec.spacing()).powi(spec.dim() as i32);
    data.into_iter().map(|z| z.re * norm).collect()
}

/// `(a ⋆_δ b)(x) = Σ_y a(x−y) b(y) δ^d`, computed through the Fourier pair.
pub fn spatial_convolve(a: &Field, b: &Field) -> Result<Field> {
    if a.spec() != b.spec() {
        return Err(Error::SpecMismatch);
    }
    let spec = *a.spec();
    let fa = forward_modes(&spec, a.values());
    let fb = forward_modes(&spec, b.values());
    let product = fa.into_iter().zip(fb).map(|(x, y)| x * y).collect();
    Ok(Field::from_vec_unchecked(spec, inverse_modes(&spec, product)))
}
