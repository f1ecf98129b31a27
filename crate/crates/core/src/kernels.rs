//! Retarded propagators of the damped lattice Klein–Gordon operator.
//!
//! Every momentum mode obeys `y'' + γ y' + ω² y = 0` with
//! `ω² = Ω_δ(p) + μ²`. Its characteristic roots are
//! `r± = (−γ ± √(γ² − 4ω²)) / 2` and the two fundamental solutions are
//!
//! ```text
//! C(t) = (r₊ e^{r₋t} − r₋ e^{r₊t}) / (r₊ − r₋),   C(0) = 1, C'(0) = 0
//! S(t) = (e^{r₊t} − e^{r₋t}) / (r₊ − r₋),         S(0) = 0, S'(0) = 1
//! ```
//!
//! both zero for `t < 0`. `S` is the retarded Green function in momentum space.
//!
//! Internally both are written as `e^{−γt/2} cosh(a)` and
//! `e^{−γt/2} t sinh(a)/a` with `a = (r₊ − r₋) t / 2`, which is one formula for
//! the under- and overdamped regimes and has a removable singularity at the
//! double root. When `|r₊ − r₋| < 1e−8 · max(1, γ)` the double-root limits
//! `S = t e^{−γt/2}`, `C = (1 + γt/2) e^{−γt/2}` are used directly.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{self, Field, LatticeSpec};

/// Physical constants of the equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Damping γ ≥ 0.
    pub gamma: f64,
    /// Mass squared μ²; negative values give a double-well potential.
    pub mu2: f64,
    /// Coupling λ of the `λ φ^p` term.
    pub lambda: f64,
    /// Exponent p ≥ 1 of the nonlinearity.
    pub power: u32,
    /// Noise intensity σ ≥ 0.
    pub sigma: f64,
}

impl ModelParams {
    pub fn new(gamma: f64, mu2: f64, lambda: f64, power: u32, sigma: f64) -> Result<Self> {
        let params = Self { gamma, mu2, lambda, power, sigma };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| Err(Error::InvalidParameter { name, reason: reason.into() });
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad("gamma", "must be finite and nonnegative");
        }
        if !self.mu2.is_finite() {
            return bad("mu2", "must be finite");
        }
        if !self.lambda.is_finite() {
            return bad("lambda", "must be finite");
        }
        if self.power < 1 {
            return bad("power", "must be at least 1");
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad("sigma", "must be finite and nonnegative");
        }
        Ok(())
    }

    /// `μ² > γ²/4`: every mode is underdamped and decays like `e^{−γt/2}`.
    pub fn has_mass_gap(&self) -> bool {
        self.mu2 > self.gamma * self.gamma / 4.0
    }

    /// Well location `√(−μ²/λ)` of the double-well potential, if there is one.
    pub fn vacuum(&self) -> Option<f64> {
        (self.mu2 < 0.0 && self.lambda > 0.0).then(|| (-self.mu2 / self.lambda).sqrt())
    }
}

/// A single damped oscillator mode `y'' + γ y' + ω² y = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampedMode {
    gamma: f64,
    omega2: f64,
    r_plus: Complex64,
    r_minus: Complex64,
    /// `r₊ − r₋`, exactly real or exactly imaginary.
    gap: Complex64,
    critical: bool,
}

/// Relative width of the double-root window.
pub const CRITICAL_TOL: f64 = 1e-8;

impl DampedMode {
    pub fn new(gamma: f64, omega2: f64) -> Self {
        let disc = gamma * gamma - 4.0 * omega2;
        let (r_plus, r_minus, gap) = if disc < 0.0 {
            let s = (-disc).sqrt();
            (
                Complex64::new(-gamma / 2.0, s / 2.0),
                Complex64::new(-gamma / 2.0, -s / 2.0),
                Complex64::new(0.0, s),
            )
        } else {
            let s = disc.sqrt();
            // r₋ has no cancellation; r₊ follows from r₊ r₋ = ω².
            let r_minus = -(gamma + s) / 2.0;
            let r_plus = if r_minus != 0.0 { omega2 / r_minus } else { 0.0 };
            (Complex64::new(r_plus, 0.0), Complex64::new(r_minus, 0.0), Complex64::new(s, 0.0))
        };
        let critical = gap.norm() < CRITICAL_TOL * gamma.max(1.0);
        Self { gamma, omega2, r_plus, r_minus, gap, critical }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn omega2(&self) -> f64 {
        self.omega2
    }

    pub fn roots(&self) -> (Complex64, Complex64) {
        (self.r_plus, self.r_minus)
    }

    pub fn is_critical(&self) -> bool {
        self.critical
    }

    /// `(e^{−γt/2} cosh a, e^{−γt/2} t sinh(a)/a)` for `t ≥ 0`.
    fn hyperbolic_parts(&self, t: f64) -> (f64, f64) {
        let damp = (-self.gamma * t / 2.0).exp();
        if self.critical {
            return (damp, damp * t);
        }
        let a = self.gap * (t / 2.0);
        if a.norm() < 1e-3 {
            let a2 = a * a;
            let cosh = 1.0 + a2 * (0.5 + a2 * (1.0 / 24.0 + a2 / 720.0));
            let sinhc = 1.0 + a2 * (1.0 / 6.0 + a2 * (1.0 / 120.0 + a2 / 5040.0));
            return (damp * cosh.re, damp * t * sinhc.re);
        }
        let e_plus = (self.r_plus * t).exp();
        let e_minus = (self.r_minus * t).exp();
        (((e_plus + e_minus) * 0.5).re, ((e_plus - e_minus) / self.gap).re)
    }

    /// `C(t)`, zero for `t < 0`.
    pub fn c(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let (ch, sh) = self.hyperbolic_parts(t);
        ch + 0.5 * self.gamma * sh
    }

    /// `S(t)`, zero for `t < 0`.
    pub fn s(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        self.hyperbolic_parts(t).1
    }

    /// `C'(t) = −ω² S(t)` for `t ≥ 0`.
    pub fn dc(&self, t: f64) -> f64 {
        -self.omega2 * self.s(t)
    }

    /// `S'(t) = C(t) − γ S(t)` for `t ≥ 0`.
    pub fn ds(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let (ch, sh) = self.hyperbolic_parts(t);
        ch - 0.5 * self.gamma * sh
    }

    /// All four of `C, S, C', S'` at once.
    pub fn evaluate(&self, t: f64) -> [f64; 4] {
        if t < 0.0 {
            return [0.0; 4];
        }
        let (ch, sh) = self.hyperbolic_parts(t);
        let half = 0.5 * self.gamma * sh;
        [ch + half, sh, -self.omega2 * sh, ch - half]
    }
}

/// Dispersion `ω_δ(p)² = Ω_δ(p) + μ²` and roots for every mode of a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionTable {
    spec: LatticeSpec,
    params: ModelParams,
    modes: Vec<DampedMode>,
}

impl DispersionTable {
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn modes(&self) -> &[DampedMode] {
        &self.modes
    }

    pub fn omega2(&self, mode: usize) -> f64 {
        self.modes[mode].omega2
    }

    pub fn roots(&self, mode: usize) -> (Complex64, Complex64) {
        self.modes[mode].roots()
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

pub fn build_dispersion(spec: &LatticeSpec, params: &ModelParams) -> DispersionTable {
    let modes = lattice::symbol_table(spec)
        .into_iter()
        .map(|omega| DampedMode::new(params.gamma, omega + params.mu2))
        .collect();
    DispersionTable { spec: *spec, params: *params, modes }
}

/// `S(t, p)` for every mode.
pub fn kernel_s(table: &DispersionTable, t: f64) -> Vec<f64> {
    table.modes.iter().map(|m| m.s(t)).collect()
}

/// `C(t, p)` for every mode.
pub fn kernel_c(table: &DispersionTable, t: f64) -> Vec<f64> {
    table.modes.iter().map(|m| m.c(t)).collect()
}

/// Both kernels at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSlice {
    pub time: f64,
    pub c_modes: Vec<f64>,
    pub s_modes: Vec<f64>,
}

impl KernelSlice {
    pub fn at(table: &DispersionTable, time: f64) -> Self {
        let (c_modes, s_modes) = table.modes.iter().map(|m| (m.c(time), m.s(time))).unzip();
        Self { time, c_modes, s_modes }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    C,
    S,
}

/// `C(t, x)` or `S(t, x)`: inverse lattice Fourier transform of the mode table.
pub fn kernel_position(table: &DispersionTable, t: f64, which: KernelKind) -> Result<Field> {
    let values = match which {
        KernelKind::C => kernel_c(table, t),
        KernelKind::S => kernel_s(table, t),
    };
    let modes = values.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
    lattice::dft_inverse(&lattice::SpectralField::new(table.spec, modes)?)
}
