//! Duhamel representation of the damped equation and its Picard solution.
//!
//! On a uniform time grid `t_n = n·dt` the solution of
//! `L φ + λ φ^p = ξ` satisfies
//!
//! ```text
//! φ(t) = C(t)⋆f + S(t)⋆g + ∫₀ᵗ S(t−s) ⋆ (ξ − λ φ^p)(s) ds
//! ```
//!
//! The time integral is the trapezoid rule on the grid, evaluated modewise in
//! Fourier space. Since `S(0) = 0` the newest node never contributes, and the
//! sum over older nodes is carried forward with the exact one-step propagator
//! of the mode ODE, so each convolution costs `O(steps · N^d)`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{DispersionTable, ModelParams};
use crate::lattice::{self, Field, LatticeSpec};

/// Uniform time grid with nodes `t_n = n·dt`, `n = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter { name: "dt", reason: format!("must be positive, got {dt}") });
        }
        if steps < 2 {
            return Err(Error::InvalidParameter { name: "steps", reason: format!("need at least 2 steps, got {steps}") });
        }
        Ok(Self { dt, steps })
    }

    /// Grid covering `[0, horizon]`; the horizon must be an integer number of steps.
    pub fn from_horizon(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter { name: "horizon", reason: format!("must be positive, got {horizon}") });
        }
        let steps = (horizon / dt).round();
        if (steps * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: format!("{horizon} is not an integer multiple of dt = {dt}"),
            });
        }
        Self::new(dt, steps as usize)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|n| self.time(n))
    }
}

/// One field per node of a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: TimeGrid,
    spec: LatticeSpec,
    slices: Vec<Field>,
}

impl SpaceTimeField {
    pub fn zeros(spec: LatticeSpec, grid: TimeGrid) -> Self {
        Self { grid, spec, slices: vec![Field::zeros(spec); grid.nodes()] }
    }

    pub fn from_slices(grid: TimeGrid, slices: Vec<Field>) -> Result<Self> {
        if slices.len() != grid.nodes() {
            return Err(Error::LengthMismatch { expected: grid.nodes(), got: slices.len() });
        }
        let spec = *slices[0].spec();
        if slices.iter().any(|s| *s.spec() != spec) {
            return Err(Error::SpecMismatch);
        }
        Ok(Self { grid, spec, slices })
    }

    /// Samples `f(t, site)` on every node.
    pub fn from_fn(spec: LatticeSpec, grid: TimeGrid, mut f: impl FnMut(f64, &[usize]) -> f64) -> Self {
        let slices = grid.times().map(|t| Field::from_fn(spec, |z| f(t, z))).collect();
        Self { grid, spec, slices }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn slices(&self) -> &[Field] {
        &self.slices
    }

    pub fn slice(&self, n: usize) -> &Field {
        &self.slices[n]
    }

    pub fn slice_mut(&mut self, n: usize) -> &mut Field {
        &mut self.slices[n]
    }

    pub fn last(&self) -> &Field {
        self.slices.last().expect("grid has at least three nodes")
    }

    pub fn sup_norm(&self) -> f64 {
        self.slices.iter().fold(0.0, |m, s| m.max(s.sup_norm()))
    }

    pub fn sup_distance(&self, other: &SpaceTimeField) -> f64 {
        self.slices.iter().zip(&other.slices).fold(0.0, |m, (a, b)| m.max(a.sup_distance(b)))
    }

    pub fn is_finite(&self) -> bool {
        self.slices.iter().all(Field::is_finite)
    }

    pub fn check_compatible(&self, other: &SpaceTimeField) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::SpecMismatch);
        }
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let slices = self
            .slices
            .iter()
            .map(|s| Field::from_vec_unchecked(self.spec, s.values().iter().map(|&v| f(v)).collect()))
            .collect();
        Self { grid: self.grid, spec: self.spec, slices }
    }

    /// `self += factor · other`.
    pub fn add_scaled(&mut self, factor: f64, other: &SpaceTimeField) {
        for (a, b) in self.slices.iter_mut().zip(&other.slices) {
            a.add_scaled(factor, b);
        }
    }

    /// `self *= other` pointwise in space-time.
    pub fn mul_assign(&mut self, other: &SpaceTimeField) {
        for (a, b) in self.slices.iter_mut().zip(&other.slices) {
            for (x, y) in a.values_mut().iter_mut().zip(b.values()) {
                *x *= y;
            }
        }
    }

    /// Pointwise power `φ^p`.
    pub fn powi(&self, p: u32) -> Self {
        self.map(|v| v.powi(p as i32))
    }
}

fn check_table(spec: &LatticeSpec, table: &DispersionTable) -> Result<()> {
    if spec != table.spec() {
        return Err(Error::SpecMismatch);
    }
    Ok(())
}

/// `φ_hom(t_n) = C(t_n)⋆f + S(t_n)⋆g` on every node.
pub fn homogeneous_solution(f: &Field, g: &Field, table: &DispersionTable, grid: &TimeGrid) -> Result<SpaceTimeField> {
    let spec = *f.spec();
    if g.spec() != &spec {
        return Err(Error::SpecMismatch);
    }
    check_table(&spec, table)?;
    let f_hat = lattice::forward_modes(&spec, f.values());
    let g_hat = lattice::forward_modes(&spec, g.values());
    let slices = (0..grid.nodes())
        .into_par_iter()
        .map(|n| {
            let t = grid.time(n);
            let modes = table
                .modes()
                .iter()
                .zip(f_hat.iter().zip(&g_hat))
                .map(|(m, (fk, gk))| fk * m.c(t) + gk * m.s(t))
                .collect();
            Field::from_vec_unchecked(spec, lattice::inverse_modes(&spec, modes))
        })
        .collect();
    Ok(SpaceTimeField { grid: *grid, spec, slices })
}

/// `ψ(t_n) = ∫₀^{t_n} S(t_n − s) ⋆ h(s) ds` by the trapezoid rule on the grid of `h`.
pub fn source_convolve(h: &SpaceTimeField, table: &DispersionTable) -> Result<SpaceTimeField> {
    let spec = *h.spec();
    check_table(&spec, table)?;
    let grid = *h.grid();
    let dt = grid.dt();

    let h_hat: Vec<Vec<Complex64>> =
        h.slices.par_iter().map(|s| lattice::forward_modes(&spec, s.values())).collect();

    // One-step fundamental matrix [[C, S], [C', S']](dt) per mode.
    let step: Vec<[f64; 4]> = table.modes().iter().map(|m| m.evaluate(dt)).collect();

    let zero = Complex64::new(0.0, 0.0);
    let mut value = vec![zero; spec.len()];
    let mut slope = vec![zero; spec.len()];
    let mut out_hat = Vec::with_capacity(grid.nodes());
    out_hat.push(vec![zero; spec.len()]);
    for n in 1..grid.nodes() {
        let weight = if n == 1 { 0.5 } else { 1.0 };
        let src = &h_hat[n - 1];
        let mut psi = Vec::with_capacity(spec.len());
        for k in 0..spec.len() {
            let [c, s, dc, ds] = step[k];
            let y = value[k];
            let v = slope[k] + src[k] * weight;
            value[k] = y * c + v * s;
            slope[k] = y * dc + v * ds;
            psi.push(value[k] * dt);
        }
        out_hat.push(psi);
    }

    let slices = out_hat
        .into_par_iter()
        .map(|modes| Field::from_vec_unchecked(spec, lattice::inverse_modes(&spec, modes)))
        .collect();
    Ok(SpaceTimeField { grid, spec, slices })
}

/// Zeroth-order field `S∗ξ + C⋆f + S⋆g`.
pub fn zeroth_order(f: &Field, g: &Field, xi: &SpaceTimeField, table: &DispersionTable, grid: &TimeGrid) -> Result<SpaceTimeField> {
    if xi.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let mut phi0 = homogeneous_solution(f, g, table, grid)?;
    phi0.check_compatible(xi)?;
    phi0.add_scaled(1.0, &source_convolve(xi, table)?);
    Ok(phi0)
}

/// Right-hand side `φ₀ − λ S∗φ^p` of the integral equation.
pub fn duhamel_map(phi: &SpaceTimeField, phi0: &SpaceTimeField, params: &ModelParams, table: &DispersionTable) -> Result<SpaceTimeField> {
    let mut next = phi0.clone();
    if params.lambda != 0.0 {
        next.add_scaled(-params.lambda, &source_convolve(&phi.powi(params.power), table)?);
    }
    Ok(next)
}

/// `‖φ − (φ₀ − λ S∗φ^p)‖_∞` over all sites and nodes.
pub fn duhamel_residual(phi: &SpaceTimeField, phi0: &SpaceTimeField, params: &ModelParams, table: &DispersionTable) -> Result<f64> {
    Ok(duhamel_map(phi, phi0, params, table)?.sup_distance(phi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardSolution {
    pub field: SpaceTimeField,
    /// Number of applications of the integral map.
    pub iterations: usize,
    /// Measured fixed-point residual of `field`.
    pub residual: f64,
    /// Sup-distance between successive iterates.
    pub deltas: Vec<f64>,
}

/// Fixed point of `φ = −λ S∗φ^p + S∗ξ + C⋆f + S⋆g`, starting from the zeroth-order field.
///
/// The returned field is the last iterate whose image under the map was
/// computed, so `residual` is measured rather than estimated. Fails with
/// [`Error::NonConvergence`] when `max_iter` is exhausted or the step size
/// fails to shrink three times in a row.
#[allow(clippy::too_many_arguments)]
pub fn picard_solve(
    f: &Field,
    g: &Field,
    xi: &SpaceTimeField,
    params: &ModelParams,
    table: &DispersionTable,
    grid: &TimeGrid,
    max_iter: usize,
    tol: f64,
) -> Result<PicardSolution> {
    let phi0 = zeroth_order(f, g, xi, table, grid)?;
    if params.lambda == 0.0 {
        return Ok(PicardSolution { field: phi0, iterations: 1, residual: 0.0, deltas: vec![0.0] });
    }
    let mut phi = phi0.clone();
    let mut deltas: Vec<f64> = Vec::new();
    let mut stalled = 0;
    for iteration in 1..=max_iter {
        let next = duhamel_map(&phi, &phi0, params, table)?;
        let delta = next.sup_distance(&phi);
        if !delta.is_finite() {
            return Err(Error::NonConvergence { iterations: iteration, last_delta: delta });
        }
        if delta < tol {
            deltas.push(delta);
            return Ok(PicardSolution { field: phi, iterations: iteration, residual: delta, deltas });
        }
        if deltas.last().is_some_and(|&prev| delta >= prev) {
            stalled += 1;
            if stalled >= 3 {
                return Err(Error::NonConvergence { iterations: iteration, last_delta: delta });
            }
        } else {
            stalled = 0;
        }
        deltas.push(delta);
        phi = next;
    }
    Err(Error::NonConvergence { iterations: max_iter, last_delta: deltas.last().copied().unwrap_or(f64::NAN) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::build_dispersion;

    fn setup(n: usize, gamma: f64, mu2: f64) -> (LatticeSpec, DispersionTable) {
        let spec = LatticeSpec::new(1, n, 1.0).unwrap();
        let params = ModelParams::new(gamma, mu2, 0.0, 3, 0.0).unwrap();
        let table = build_dispersion(&spec, &params);
        (spec, table)
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.1, 1).is_err());
        assert!(TimeGrid::new(0.0, 10).is_err());
        let g = TimeGrid::from_horizon(2.0, 1e-3).unwrap();
        assert_eq!(g.steps(), 2000);
        assert!((g.horizon() - 2.0).abs() < 1e-12);
        assert!(TimeGrid::from_horizon(1.0, 0.3).is_err());
    }

    #[test]
    fn zero_data_gives_zero() {
        let (spec, table) = setup(8, 1.0, 1.0);
        let grid = TimeGrid::new(0.1, 10).unwrap();
        let hom = homogeneous_solution(&Field::zeros(spec), &Field::zeros(spec), &table, &grid).unwrap();
        assert_eq!(hom.sup_norm(), 0.0);
        let psi = source_convolve(&SpaceTimeField::zeros(spec, grid), &table).unwrap();
        assert_eq!(psi.sup_norm(), 0.0);
    }

    #[test]
    fn constant_initial_data_follows_zero_mode() {
        let (spec, table) = setup(8, 1.0, 1.0);
        let grid = TimeGrid::new(0.05, 100).unwrap();
        let hom = homogeneous_solution(&Field::constant(spec, 0.7), &Field::zeros(spec), &table, &grid).unwrap();
        let w = 3f64.sqrt() / 2.0;
        for (n, t) in grid.times().enumerate() {
            let expected = 0.7 * (-t / 2.0).exp() * ((w * t).cos() + 0.5 / w * (w * t).sin());
            for &v in hom.slice(n).values() {
                assert!((v - expected).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn initial_slice_and_slope() {
        let (spec, table) = setup(8, 0.5, 2.0);
        let f = Field::from_fn(spec, |z| (z[0] as f64).sin());
        let g = Field::from_fn(spec, |z| (z[0] as f64 * 0.3).cos());
        let grid = TimeGrid::new(1e-4, 4).unwrap();
        let hom = homogeneous_solution(&f, &g, &table, &grid).unwrap();
        assert!(hom.slice(0).sup_distance(&f) < 1e-14);
        for i in 0..8 {
            let slope = (hom.slice(1).values()[i] - f.values()[i]) / 1e-4;
            assert!((slope - g.values()[i]).abs() < 1e-2);
        }
    }

    #[test]
    fn step_response_settles_at_inverse_omega2() {
        let (spec, table) = setup(8, 1.0, 1.0);
        let grid = TimeGrid::from_horizon(10.0, 0.01).unwrap();
        let h = SpaceTimeField::from_fn(spec, grid, |_, _| 1.0);
        let psi = source_convolve(&h, &table).unwrap();
        for &v in psi.last().values() {
            assert!((v - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn recursion_matches_direct_trapezoid_sum() {
        let (spec, table) = setup(8, 0.7, 0.4);
        let grid = TimeGrid::new(0.05, 60).unwrap();
        let h = SpaceTimeField::from_fn(spec, grid, |t, z| (t * 1.3).sin() * (z[0] as f64 * 0.9).cos() + 0.2 * t);
        let psi = source_convolve(&h, &table).unwrap();
        let h_hat: Vec<_> = h.slices().iter().map(lattice::dft_forward).collect();
        for n in [1, 2, 17, 60] {
            let modes = (0..spec.len())
                .map(|k| {
                    let mode = table.modes()[k];
                    (0..=n)
                        .map(|m| {
                            let w = if m == 0 || m == n { 0.5 } else { 1.0 };
                            h_hat[m].modes()[k] * (w * mode.s(grid.time(n - m)))
                        })
                        .sum::<Complex64>()
                        * grid.dt()
                })
                .collect();
            let direct = lattice::dft_inverse(&lattice::SpectralField::new(spec, modes).unwrap()).unwrap();
            assert!(psi.slice(n).sup_distance(&direct) < 1e-12, "n={n}");
        }
    }

    #[test]
    fn time_delta_source_reproduces_kernel() {
        let (spec, table) = setup(8, 1.0, 1.0);
        let grid = TimeGrid::new(0.01, 300).unwrap();
        let m0 = 50;
        let mut h = SpaceTimeField::zeros(spec, grid);
        *h.slice_mut(m0) = Field::constant(spec, 1.0 / grid.dt());
        let psi = source_convolve(&h, &table).unwrap();
        let zero_mode = table.modes()[0];
        for n in 0..grid.nodes() {
            let expected = zero_mode.s(grid.time(n) - grid.time(m0));
            assert!((psi.slice(n).values()[3] - expected).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn linear_problem_needs_one_iteration() {
        let (spec, table) = setup(8, 1.0, 1.0);
        let params = *table.params();
        let grid = TimeGrid::new(0.01, 100).unwrap();
        let f = Field::from_fn(spec, |z| 0.1 * z[0] as f64);
        let g = Field::constant(spec, -0.2);
        let xi = SpaceTimeField::from_fn(spec, grid, |t, z| (t + z[0] as f64).sin());
        let sol = picard_solve(&f, &g, &xi, &params, &table, &grid, 10, 1e-12).unwrap();
        assert_eq!(sol.iterations, 1);
        let mut expected = homogeneous_solution(&f, &g, &table, &grid).unwrap();
        expected.add_scaled(1.0, &source_convolve(&xi, &table).unwrap());
        assert_eq!(sol.field, expected);

        let none = SpaceTimeField::zeros(spec, grid);
        let hom = picard_solve(&f, &g, &none, &params, &table, &grid, 10, 1e-12).unwrap();
        assert_eq!(hom.field, homogeneous_solution(&f, &g, &table, &grid).unwrap());
    }

    #[test]
    fn residual_certificate_holds() {
        let spec = LatticeSpec::new(1, 8, 1.0).unwrap();
        let params = ModelParams::new(1.0, 1.0, 0.05, 3, 0.0).unwrap();
        let table = build_dispersion(&spec, &params);
        let grid = TimeGrid::new(0.01, 150).unwrap();
        let f = Field::from_fn(spec, |z| (z[0] as f64).cos());
        let g = Field::zeros(spec);
        let xi = SpaceTimeField::zeros(spec, grid);
        let sol = picard_solve(&f, &g, &xi, &params, &table, &grid, 50, 1e-11).unwrap();
        let phi0 = zeroth_order(&f, &g, &xi, &table, &grid).unwrap();
        let residual = duhamel_residual(&sol.field, &phi0, &params, &table).unwrap();
        assert_eq!(residual, sol.residual);
        assert!(residual < 1e-11);
        assert!(sol.deltas.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn strong_coupling_is_reported() {
        let spec = LatticeSpec::new(1, 8, 1.0).unwrap();
        let params = ModelParams::new(0.1, 1.0, 50.0, 3, 0.0).unwrap();
        let table = build_dispersion(&spec, &params);
        let grid = TimeGrid::from_horizon(5.0, 0.01).unwrap();
        let f = Field::constant(spec, 2.0);
        let xi = SpaceTimeField::zeros(spec, grid);
        let err = picard_solve(&f, &Field::zeros(spec), &xi, &params, &table, &grid, 40, 1e-10).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let (spec, table) = setup(8, 1.0, 1.0);
        let other = LatticeSpec::new(1, 4, 1.0).unwrap();
        let grid = TimeGrid::new(0.1, 10).unwrap();
        assert_eq!(
            homogeneous_solution(&Field::zeros(other), &Field::zeros(other), &table, &grid),
            Err(Error::SpecMismatch)
        );
        let xi = SpaceTimeField::zeros(spec, TimeGrid::new(0.1, 5).unwrap());
        assert_eq!(
            zeroth_order(&Field::zeros(spec), &Field::zeros(spec), &xi, &table, &grid),
            Err(Error::GridMismatch)
        );
    }
}
