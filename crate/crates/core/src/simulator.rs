//! Euler–Maruyama integration of the first-order system
//!
//! ```text
//! ∂_t φ = v
//! ∂_t v = Δ_δ φ − γ v − μ² φ − λ φ^p + σ ξ
//! ```
//!
//! with the semi-implicit ordering: the velocity is advanced first and the
//! field is advanced with the new velocity.

use rayon::prelude::*;

use crate::duhamel::{SpaceTimeField, TimeGrid};
use crate::error::{Error, Result};
use crate::kernels::ModelParams;
use crate::lattice::{self, Field, LatticeSpec};
use crate::noise::{self, NoiseRealization};

/// Runs abort once `‖φ‖_∞` exceeds this.
pub const BLOW_UP_THRESHOLD: f64 = 1e6;

/// Default standard deviation of the initial fluctuation `ε(x)`.
pub const DEFAULT_INITIAL_AMPLITUDE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub spec: LatticeSpec,
    pub params: ModelParams,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub record_every: usize,
    pub snapshot_times: Vec<f64>,
    pub ensemble: usize,
    /// Standard deviation of the i.i.d. initial field `φ(0, x)`.
    pub initial_amplitude: f64,
}

impl SimConfig {
    pub fn new(spec: LatticeSpec, params: ModelParams, dt: f64, horizon: f64, seed: u64) -> Self {
        Self {
            spec,
            params,
            dt,
            horizon,
            seed,
            record_every: 1,
            snapshot_times: Vec::new(),
            ensemble: 1,
            initial_amplitude: DEFAULT_INITIAL_AMPLITUDE,
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::from_horizon(self.horizon, self.dt)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let grid = self.grid()?;
        if self.record_every == 0 {
            return Err(Error::InvalidParameter { name: "record_every", reason: "must be at least 1".into() });
        }
        if self.ensemble == 0 {
            return Err(Error::InvalidParameter { name: "ensemble", reason: "must be at least 1".into() });
        }
        if !(self.initial_amplitude.is_finite() && self.initial_amplitude >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "initial_amplitude",
                reason: format!("must be non-negative, got {}", self.initial_amplitude),
            });
        }
        for &t in &self.snapshot_times {
            if !(t.is_finite() && (0.0..=grid.horizon()).contains(&t)) {
                return Err(Error::InvalidParameter {
                    name: "snapshot_times",
                    reason: format!("{t} outside [0, {}]", grid.horizon()),
                });
            }
        }
        Ok(())
    }

    /// Message when `dt` exceeds the heuristic `min(0.1, δ/2)`.
    pub fn stability_warning(&self) -> Option<String> {
        let limit = (self.spec.spacing() / 2.0).min(0.1);
        (self.dt > limit).then(|| format!("dt = {} exceeds the stability heuristic {limit}", self.dt))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub phi: Field,
    pub vel: Field,
}

impl State {
    pub fn new(phi: Field, vel: Field) -> Result<Self> {
        if phi.spec() != vel.spec() {
            return Err(Error::SpecMismatch);
        }
        Ok(Self { phi, vel })
    }

    pub fn at_rest(phi: Field) -> Self {
        let vel = Field::zeros(*phi.spec());
        Self { phi, vel }
    }

    pub fn spec(&self) -> &LatticeSpec {
        self.phi.spec()
    }

    pub fn negated(&self) -> Self {
        Self { phi: self.phi.scaled(-1.0), vel: self.vel.scaled(-1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub times: Vec<f64>,
    pub order_param: Vec<f64>,
    pub variance: Vec<f64>,
    pub snapshots: Vec<(f64, Field)>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

// Reusable buffer for the Laplacian.
struct Stepper {
    lap: Vec<f64>,
}

impl Stepper {
    fn new(spec: &LatticeSpec) -> Self {
        Self { lap: vec![0.0; spec.len()] }
    }

    /// `v += (Δφ − γv − μ²φ − λφ^p)dt + kick`, then `φ += v dt`.
    fn advance(&mut self, phi: &mut [f64], vel: &mut [f64], spec: &LatticeSpec, params: &ModelParams, dt: f64, kick: impl Fn(usize) -> f64) {
        lattice::laplacian_into(spec, phi, &mut self.lap);
        let p = params.power as i32;
        for i in 0..phi.len() {
            let x = phi[i];
            let force = self.lap[i] - params.gamma * vel[i] - params.mu2 * x - params.lambda * x.powi(p);
            vel[i] += force * dt + kick(i);
            phi[i] += vel[i] * dt;
        }
    }
}

fn check_blow_up(phi: &[f64], step: usize, time: f64) -> Result<()> {
    let max_abs = phi.iter().fold(0.0_f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) });
    if max_abs.is_nan() || max_abs > BLOW_UP_THRESHOLD {
        return Err(Error::BlowUp { step, time, max_abs });
    }
    Ok(())
}

/// One Euler–Maruyama step; `noise_slice` holds standard normals `η`.
///
/// A blow-up is reported as step 1 at time `dt`, relative to `state`.
pub fn em_step(state: &State, cfg: &SimConfig, noise_slice: &Field) -> Result<State> {
    if state.spec() != &cfg.spec || noise_slice.spec() != &cfg.spec || state.vel.spec() != &cfg.spec {
        return Err(Error::SpecMismatch);
    }
    let mut next = state.clone();
    let amplitude = cfg.params.sigma * cfg.dt.sqrt();
    let eta = noise_slice.values();
    Stepper::new(&cfg.spec).advance(
        next.phi.values_mut(),
        next.vel.values_mut(),
        &cfg.spec,
        &cfg.params,
        cfg.dt,
        |i| amplitude * eta[i],
    );
    check_blow_up(next.phi.values(), 1, cfg.dt)?;
    Ok(next)
}

/// Integrates a frozen forcing path with `substeps` Euler steps per grid cell.
///
/// The forcing already carries its amplitude; `params.sigma` is not used.
/// Cell `n` of `forcing` acts as a constant force on `(t_n, t_{n+1}]`, so with
/// one substep and white noise this is the same update as [`em_step`]. The
/// result holds `φ` on the nodes of the forcing grid.
pub fn integrate_forcing(
    initial: &State,
    forcing: &NoiseRealization,
    params: &ModelParams,
    substeps: usize,
) -> Result<SpaceTimeField> {
    let spec = *initial.spec();
    if forcing.as_source().spec() != &spec {
        return Err(Error::SpecMismatch);
    }
    if substeps == 0 {
        return Err(Error::InvalidParameter { name: "substeps", reason: "must be at least 1".into() });
    }
    let grid = *forcing.grid();
    let h = grid.dt() / substeps as f64;
    let mut phi = initial.phi.values().to_vec();
    let mut vel = initial.vel.values().to_vec();
    let mut stepper = Stepper::new(&spec);
    let mut slices = Vec::with_capacity(grid.nodes());
    slices.push(initial.phi.clone());
    for n in 0..grid.steps() {
        let cell = forcing.cell(n).values();
        for s in 0..substeps {
            stepper.advance(&mut phi, &mut vel, &spec, params, h, |i| cell[i] * h);
            check_blow_up(&phi, n * substeps + s + 1, grid.time(n) + (s + 1) as f64 * h)?;
        }
        slices.push(Field::from_vec_unchecked(spec, phi.clone()));
    }
    SpaceTimeField::from_slices(grid, slices)
}

/// Spatial mean and variance `⟨φ²⟩ − ⟨φ⟩²` of the field.
pub fn observables(state: &State) -> (f64, f64) {
    field_moments(&state.phi)
}

/// Mean and population variance by Welford's update.
pub fn field_moments(field: &Field) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &x) in field.values().iter().enumerate() {
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    let n = field.values().len().max(1) as f64;
    (mean, m2 / n)
}

/// Discrete energy `Σ [v²/2 + |∇φ|²/2 + μ²φ²/2 + λφ^{p+1}/(p+1)] δ^d` with forward differences.
pub fn energy(state: &State, params: &ModelParams) -> f64 {
    let spec = state.spec();
    let delta = spec.spacing();
    let phi = state.phi.values();
    let vel = state.vel.values();
    let p1 = params.power as i32 + 1;
    let mut total = 0.0;
    for i in 0..spec.len() {
        let x = phi[i];
        let mut grad2 = 0.0;
        let coords = spec.unravel(i);
        for axis in 0..spec.dim() {
            let mut next = coords.clone();
            next[axis] = (next[axis] + 1) % spec.sites_per_axis();
            let d = (phi[spec.ravel(&next)] - x) / delta;
            grad2 += d * d;
        }
        total += 0.5 * vel[i] * vel[i] + 0.5 * grad2 + 0.5 * params.mu2 * x * x + params.lambda * x.powi(p1) / p1 as f64;
    }
    total * spec.cell_volume()
}

/// Initial state: `φ(0) = ε` with i.i.d. normal `ε`, `v(0) = 0`.
pub fn initial_state(cfg: &SimConfig, rng: &mut noise::Stream) -> State {
    State::at_rest(noise::gaussian_field(cfg.spec, cfg.initial_amplitude, rng))
}

fn run_member(cfg: &SimConfig, member: u64) -> Result<Trace> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let spec = cfg.spec;
    let mut rng = noise::stream(noise::splitmix(cfg.seed, member));
    let State { phi, vel } = initial_state(cfg, &mut rng);
    let mut phi = phi.into_values();
    let mut vel = vel.into_values();

    let snapshot_steps: Vec<usize> =
        cfg.snapshot_times.iter().map(|t| ((t / grid.dt()).round() as usize).min(grid.steps())).collect();

    let mut trace = Trace::default();
    let record = |n: usize, phi: &[f64], trace: &mut Trace| {
        let field = Field::from_vec_unchecked(spec, phi.to_vec());
        if n.is_multiple_of(cfg.record_every) {
            let (m, var) = field_moments(&field);
            trace.times.push(grid.time(n));
            trace.order_param.push(m);
            trace.variance.push(var);
        }
        for (k, &s) in snapshot_steps.iter().enumerate() {
            if s == n {
                trace.snapshots.push((cfg.snapshot_times[k], field.clone()));
            }
        }
    };
    record(0, &phi, &mut trace);

    let amplitude = cfg.params.sigma * grid.dt().sqrt();
    let mut eta = vec![0.0; spec.len()];
    let mut stepper = Stepper::new(&spec);
    for n in 0..grid.steps() {
        noise::fill_standard_normal(&mut eta, &mut rng);
        stepper.advance(&mut phi, &mut vel, &spec, &cfg.params, grid.dt(), |i| amplitude * eta[i]);
        check_blow_up(&phi, n + 1, grid.time(n + 1))?;
        record(n + 1, &phi, &mut trace);
    }
    trace.snapshots.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(trace)
}

/// Single trajectory; identical to member 0 of [`ensemble_run`].
pub fn run(cfg: &SimConfig) -> Result<Trace> {
    run_member(cfg, 0)
}

/// `cfg.ensemble` independent trajectories, member `i` seeded with `splitmix(seed, i)`.
pub fn ensemble_run(cfg: &SimConfig) -> Result<Vec<Trace>> {
    cfg.validate()?;
    (0..cfg.ensemble as u64).into_par_iter().map(|i| run_member(cfg, i)).collect()
}

/// Equal-width histogram on `[lo, hi)`; values outside are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let mut counts = vec![0u64; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            if v >= lo && v < hi {
                let b = (((v - lo) / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
        }
        Self { lo, hi, counts }
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.lo + (bin as f64 + 0.5) * self.width()
    }

    /// Center and count of the fullest bin with center in `[a, b)`.
    pub fn peak_in(&self, a: f64, b: f64) -> Option<(f64, u64)> {
        (0..self.counts.len())
            .filter(|&k| (a..b).contains(&self.center(k)))
            .max_by(|&i, &j| self.counts[i].cmp(&self.counts[j]).then(j.cmp(&i)))
            .map(|k| (self.center(k), self.counts[k]))
    }

    /// The two modes, one on each half-line, if the bins between them dip
    /// below both peaks.
    pub fn bimodal_modes(&self) -> Option<(f64, f64)> {
        let (left, lc) = self.peak_in(self.lo, 0.0)?;
        let (right, rc) = self.peak_in(0.0, self.hi)?;
        let valley = (0..self.counts.len())
            .filter(|&k| self.center(k) > left && self.center(k) < right)
            .map(|k| self.counts[k])
            .min()?;
        (valley < lc.min(rc)).then_some((left, right))
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn linear_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
