//! Cross-module numerical checks with fixed tolerances.
//!
//! [`validate_suite`] runs every check at the requested level and collects a
//! measured value, a tolerance and a verdict for each. A check that errors
//! is reported as failed with a NaN measurement. Reports depend only on the
//! level and the seed.

use crate::duhamel::{self, TimeGrid};
use crate::error::Result;
use crate::kernels::{build_dispersion, kernel_position, DampedMode, KernelKind, ModelParams};
use crate::lattice::{Field, LatticeSpec};
use crate::noise::{self, NoiseRealization};
use crate::perturbation::{compute_orders, partial_sum};
use crate::simulator::{self, Histogram, SimConfig, State};
use crate::trees::{enumerate_trees, tree_sum};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Fast,
    Full,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::Fast => "fast",
            Level::Full => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `measured <= tolerance`.
    pub fn at_most(name: &str, measured: f64, tolerance: f64) -> Self {
        Self { name: name.into(), measured, tolerance, passed: measured <= tolerance, detail: String::new() }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    fn errored(name: &str, err: impl std::fmt::Display) -> Self {
        Self { name: name.into(), measured: f64::NAN, tolerance: f64::NAN, passed: false, detail: err.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub level: Level,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub const GAMMAS: [f64; 3] = [0.0, 1.0, 2.0];
pub const OMEGA2S: [f64; 3] = [0.5, 1.0, 4.0];

/// Mode-ODE residual, initial values and Abel identity over the kernel grid.
pub fn kernel_checks() -> Vec<Check> {
    let h = 1e-4;
    let mut ode: f64 = 0.0;
    let mut init: f64 = 0.0;
    let mut abel: f64 = 0.0;
    for &gamma in &GAMMAS {
        for &omega2 in &OMEGA2S {
            let m = DampedMode::new(gamma, omega2);
            for i in 1..=500 {
                let t = i as f64 * 0.01;
                for k in [DampedMode::c as fn(&DampedMode, f64) -> f64, DampedMode::s] {
                    let (a, b, c) = (k(&m, t - h), k(&m, t), k(&m, t + h));
                    let d2 = (c - 2.0 * b + a) / (h * h);
                    let d1 = (c - a) / (2.0 * h);
                    ode = ode.max((d2 + gamma * d1 + omega2 * b).abs() / omega2.max(1.0));
                }
            }
            let one_sided = |k: fn(&DampedMode, f64) -> f64| (-3.0 * k(&m, 0.0) + 4.0 * k(&m, h) - k(&m, 2.0 * h)) / (2.0 * h);
            init = init
                .max((m.c(0.0) - 1.0).abs())
                .max(one_sided(DampedMode::c).abs())
                .max(m.s(0.0).abs())
                .max((one_sided(DampedMode::s) - 1.0).abs());
            for i in 0..=500 {
                let t = i as f64 * 0.01;
                let [c, s, dc, ds] = m.evaluate(t);
                let e = (-gamma * t).exp();
                abel = abel.max((c * ds - dc * s - e).abs() / e);
            }
        }
    }
    vec![
        Check::at_most("kernel_ode_residual", ode, 1e-5),
        Check::at_most("kernel_initial_conditions", init, 1e-4),
        Check::at_most("kernel_abel_identity", abel, 1e-8),
    ]
}

/// `C = cos ωt`, `S = sin ωt / ω` at γ = 0 on `[0, 10]`.
pub fn undamped_check() -> Check {
    let mut worst: f64 = 0.0;
    for &omega2 in &OMEGA2S {
        let m = DampedMode::new(0.0, omega2);
        let w = omega2.sqrt();
        for i in 0..=10_000 {
            let t = i as f64 * 1e-3;
            worst = worst.max((m.c(t) - (w * t).cos()).abs()).max((m.s(t) - (w * t).sin() / w).abs());
        }
    }
    Check::at_most("undamped_reduction", worst, 1e-10)
}

/// Envelope ratio of `sup_x |S(t, x)| e^{γt/2}` on `[1, 8]` and spatial monotonicity at `t = 2`.
pub fn decay_checks() -> Result<Vec<Check>> {
    let spec = LatticeSpec::new(1, 256, 1.0)?;
    let params = ModelParams::new(1.0, 1.0, 0.0, 3, 0.0)?;
    let table = build_dispersion(&spec, &params);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for i in 0..=70 {
        let t = 1.0 + 0.1 * i as f64;
        let sup = kernel_position(&table, t, KernelKind::S)?.sup_norm() * (0.5 * t).exp();
        lo = lo.min(sup);
        hi = hi.max(sup);
    }
    let s2 = kernel_position(&table, 2.0, KernelKind::S)?;
    let v = s2.values();
    let n = spec.sites_per_axis();
    let mut rise: f64 = 0.0;
    for x in 5..60 {
        for (near, far) in [(x, x + 1), (n - x, n - x - 1)] {
            rise = rise.max(v[far].abs() - v[near].abs());
        }
    }
    Ok(vec![
        Check::at_most("decay_envelope_ratio", hi / lo, 3.0),
        Check::at_most("decay_spatial_monotone", rise, 1e-12),
    ])
}

/// Picard at λ = 0.01 against its own residual and a fine Euler–Maruyama run on the same noise.
pub fn duhamel_checks(seed: u64) -> Result<Vec<Check>> {
    let spec = LatticeSpec::new(1, 16, 1.0)?;
    let params = ModelParams::new(1.0, 1.0, 0.01, 3, 0.1)?;
    let table = build_dispersion(&spec, &params);
    let grid = TimeGrid::from_horizon(2.0, 1e-3)?;
    let mut rng = noise::stream(seed);
    let f = noise::gaussian_field(spec, 0.1, &mut rng);
    let g = noise::gaussian_field(spec, 0.1, &mut rng);
    let xi = NoiseRealization::white(spec, grid, params.sigma, &mut rng);
    let sol = duhamel::picard_solve(&f, &g, xi.as_source(), &params, &table, &grid, 50, 1e-12)?;
    let em = simulator::integrate_forcing(&State::new(f, g)?, &xi, &params, 10)?;
    Ok(vec![
        Check::at_most("duhamel_fixed_point_residual", sol.residual, 1e-8)
            .with_detail(format!("{} iterations", sol.iterations)),
        Check::at_most("duhamel_vs_euler_maruyama", sol.field.sup_distance(&em), 2e-3),
    ])
}

/// Gap between Picard and the order-2 partial sum at λ and λ/2; ratio near 2³.
pub fn series_check(seed: u64) -> Result<Check> {
    let spec = LatticeSpec::new(1, 8, 1.0)?;
    let base = ModelParams::new(1.0, 1.0, 0.1, 3, 0.3)?;
    let table = build_dispersion(&spec, &base);
    let grid = TimeGrid::from_horizon(2.0, 0.01)?;
    let mut rng = noise::stream(seed ^ 0x5E71E5);
    let f = noise::gaussian_field(spec, 0.5, &mut rng);
    let g = noise::gaussian_field(spec, 0.3, &mut rng);
    let xi = NoiseRealization::white(spec, grid, base.sigma, &mut rng);
    let orders = compute_orders(2, &f, &g, xi.as_source(), &base, &table, &grid)?;
    let gap = |lambda: f64| -> Result<f64> {
        let p = ModelParams { lambda, ..base };
        let sol = duhamel::picard_solve(&f, &g, xi.as_source(), &p, &table, &grid, 200, 1e-13)?;
        Ok(sol.field.sup_distance(&partial_sum(&orders, lambda)))
    };
    let (g1, g2) = (gap(base.lambda)?, gap(base.lambda / 2.0)?);
    let ratio = g1 / g2;
    Ok(Check {
        name: "series_remainder_ratio".into(),
        measured: ratio,
        tolerance: 2.0,
        passed: (6.0..=10.0).contains(&ratio),
        detail: format!("gaps {g1:e} and {g2:e}; accepted range [6, 10]"),
    })
}

/// Weighted tree sums against the recursion for p = 3, orders 0 to 3.
pub fn tree_checks(seed: u64) -> Result<Vec<Check>> {
    let spec = LatticeSpec::new(1, 8, 1.0)?;
    let params = ModelParams::new(1.0, 1.0, 0.1, 3, 0.3)?;
    let table = build_dispersion(&spec, &params);
    let grid = TimeGrid::from_horizon(1.0, 0.01)?;
    let mut rng = noise::stream(seed ^ 0x7EE5);
    let f = noise::gaussian_field(spec, 0.5, &mut rng);
    let g = noise::gaussian_field(spec, 0.5, &mut rng);
    let xi = NoiseRealization::white(spec, grid, params.sigma, &mut rng);
    let orders = compute_orders(3, &f, &g, xi.as_source(), &params, &table, &grid)?;
    let mut worst: f64 = 0.0;
    for (j, order) in orders.iter().enumerate() {
        let sum = tree_sum(3, j, &f, &g, xi.as_source(), &table, &grid)?;
        worst = worst.max(sum.sup_distance(&order.field));
    }
    let weights: u64 = enumerate_trees(3, 1)?.iter().map(|t| t.weight).sum();
    Ok(vec![
        Check::at_most("tree_recursion_equivalence", worst, 1e-9),
        Check {
            name: "tree_weight_sum_order_1".into(),
            measured: weights as f64,
            tolerance: 0.0,
            passed: weights == 27,
            detail: "expected 27".into(),
        },
    ])
}

/// Largest per-step change from `φ ≡ 1, v ≡ 0` in the double well without noise.
pub fn fixed_point_check() -> Result<Check> {
    let spec = LatticeSpec::new(1, 128, 1.0)?;
    let params = ModelParams::new(1.0, -1.0, 1.0, 3, 0.0)?;
    let cfg = SimConfig::new(spec, params, 0.01, 1.0, 0);
    let mut state = State::at_rest(Field::constant(spec, 1.0));
    let eta = Field::zeros(spec);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let next = simulator::em_step(&state, &cfg, &eta)?;
        worst = worst.max(next.phi.sup_distance(&state.phi)).max(next.vel.sup_distance(&state.vel));
        state = next;
    }
    Ok(Check::at_most("simulation_fixed_point", worst, 1e-14))
}

/// Two identical short runs must agree bit for bit.
pub fn determinism_check(seed: u64) -> Result<Check> {
    let spec = LatticeSpec::new(1, 32, 1.0)?;
    let mut cfg = SimConfig::new(spec, ModelParams::new(1.0, -1.0, 1.0, 3, 0.2)?, 0.01, 2.0, seed);
    cfg.ensemble = 3;
    cfg.snapshot_times = vec![1.0, 2.0];
    let a = simulator::ensemble_run(&cfg)?;
    let b = simulator::ensemble_run(&cfg)?;
    let same = a == b && a[0] == simulator::run(&cfg)?;
    Ok(Check {
        name: "determinism".into(),
        measured: if same { 0.0 } else { 1.0 },
        tolerance: 0.0,
        passed: same,
        detail: "repeated ensemble runs compared bitwise".into(),
    })
}

/// The symmetry-breaking run: variance saturation and a bimodal final histogram.
pub fn symmetry_breaking_checks(seed: u64) -> Result<Vec<Check>> {
    let cfg = symmetry_breaking_config(seed)?;
    let trace = simulator::run(&cfg)?;
    let peak = trace.variance.iter().cloned().fold(0.0, f64::max);
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        trace.times.iter().zip(&trace.variance).filter(|(t, _)| **t >= 48.0 - 1e-9).map(|(t, v)| (*t, *v)).unzip();
    let slope = simulator::linear_slope(&xs, &ys);
    let last = &trace.snapshots.last().expect("final snapshot requested").1;
    let hist = Histogram::new(last.values(), -2.0, 2.0, 40);
    let modes = hist.bimodal_modes();
    let offset = modes.map_or(f64::INFINITY, |(l, r)| (l + 1.0).abs().max((r - 1.0).abs()));
    Ok(vec![
        Check::at_most("variance_saturation", slope.abs() / peak, 0.02)
            .with_detail(format!("slope {slope:e} on [48, 60], peak variance {peak}")),
        Check::at_most("bimodal_histogram", offset, 0.3)
            .with_detail(format!("modes {modes:?}")),
    ])
}

/// N = 128, δ = 1, Δt = 0.01, T = 60, γ = 1, μ² = −1, λ = 1, p = 3, σ = 0.2.
pub fn symmetry_breaking_config(seed: u64) -> Result<SimConfig> {
    let spec = LatticeSpec::new(1, 128, 1.0)?;
    let params = ModelParams::new(1.0, -1.0, 1.0, 3, 0.2)?;
    let mut cfg = SimConfig::new(spec, params, 0.01, 60.0, seed);
    cfg.record_every = 10;
    cfg.snapshot_times = vec![60.0];
    Ok(cfg)
}

fn collect(out: &mut Vec<Check>, name: &str, result: Result<Vec<Check>>) {
    match result {
        Ok(checks) => out.extend(checks),
        Err(e) => out.push(Check::errored(name, e)),
    }
}

pub fn validate_suite(level: Level, seed: u64) -> Report {
    let mut checks = kernel_checks();
    checks.push(undamped_check());
    collect(&mut checks, "decay", decay_checks());
    collect(&mut checks, "duhamel", duhamel_checks(seed));
    collect(&mut checks, "series_remainder_ratio", series_check(seed).map(|c| vec![c]));
    collect(&mut checks, "trees", tree_checks(seed));
    collect(&mut checks, "simulation_fixed_point", fixed_point_check().map(|c| vec![c]));
    collect(&mut checks, "determinism", determinism_check(seed).map(|c| vec![c]));
    if level == Level::Full {
        collect(&mut checks, "symmetry_breaking", symmetry_breaking_checks(seed));
    }
    Report { level, seed, checks }
}
