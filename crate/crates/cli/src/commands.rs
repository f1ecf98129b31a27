//! Subcommand bodies. Each writes its CSV files into an [`OutputDir`] and
//! returns a one-line summary plus whether its checks passed.

use anyhow::Result;
use serde_json::json;
use skg_core::duhamel::{SpaceTimeField, TimeGrid};
use skg_core::kernels::{build_dispersion, kernel_position, DispersionTable, KernelKind, ModelParams};
use skg_core::lattice::Field;
use skg_core::noise::{self, NoiseRealization};
use skg_core::perturbation::{compute_orders, partial_sum};
use skg_core::simulator::ensemble_run;
use skg_core::trees::{enumerate_trees, render_dot, tree_sum};
use skg_core::picard_solve;
use skg_core::validate::{validate_suite, Level};

use crate::config::RunConfig;
use crate::output::{num, OutputDir};

pub struct Finished {
    pub summary: String,
    pub passed: bool,
}

impl Finished {
    fn ok(summary: String) -> Self {
        Self { summary, passed: true }
    }
}

/// Tolerance for tree sums against the recursion.
pub const TREE_TOL: f64 = 1e-9;

struct Problem {
    params: ModelParams,
    table: DispersionTable,
    grid: TimeGrid,
    f: Field,
    g: Field,
    xi: NoiseRealization,
}

// Random initial data and noise path, all drawn from one stream keyed by the seed.
fn problem(cfg: &RunConfig) -> Result<Problem> {
    let spec = cfg.spec()?;
    let params = cfg.params()?;
    let grid = cfg.grid()?;
    let table = build_dispersion(&spec, &params);
    let mut rng = noise::stream(cfg.seed);
    let f = noise::gaussian_field(spec, cfg.data_amplitude, &mut rng);
    let g = noise::gaussian_field(spec, cfg.data_amplitude, &mut rng);
    let xi = NoiseRealization::white(spec, grid, params.sigma, &mut rng);
    Ok(Problem { params, table, grid, f, g, xi })
}

fn field_rows<'a>(field: &'a SpaceTimeField, every: usize) -> impl Iterator<Item = Vec<String>> + 'a {
    let grid = *field.grid();
    (0..grid.nodes()).filter(move |n| n % every == 0 || *n == grid.steps()).flat_map(move |n| {
        let t = num(grid.time(n));
        field.slice(n).values().iter().enumerate().map(move |(site, v)| vec![t.clone(), site.to_string(), num(*v)])
    })
}

pub fn kernels(cfg: &RunConfig, out: &mut OutputDir) -> Result<Finished> {
    let spec = cfg.spec()?;
    let params = cfg.params()?;
    let grid = cfg.grid()?;
    let table = build_dispersion(&spec, &params);
    out.write_csv(
        "modes.csv",
        &["mode", "omega2", "root_plus_re", "root_plus_im", "root_minus_re", "root_minus_im"],
        (0..table.len()).map(|k| {
            let (rp, rm) = table.roots(k);
            vec![k.to_string(), num(table.omega2(k)), num(rp.re), num(rp.im), num(rm.re), num(rm.im)]
        }),
    )?;
    let every = cfg.record_every.max(1);
    let nodes: Vec<usize> = (0..grid.nodes()).filter(|n| n % every == 0 || *n == grid.steps()).collect();
    out.write_csv(
        "kernels.csv",
        &["time", "mode", "C", "S"],
        nodes.iter().flat_map(|&n| {
            let t = grid.time(n);
            table.modes().iter().enumerate().map(move |(k, m)| vec![num(t), k.to_string(), num(m.c(t)), num(m.s(t))])
        }),
    )?;
    let times = if cfg.snapshot_times.is_empty() { vec![grid.horizon()] } else { cfg.snapshot_times.clone() };
    let mut rows = Vec::new();
    for &t in &times {
        let c = kernel_position(&table, t, KernelKind::C)?;
        let s = kernel_position(&table, t, KernelKind::S)?;
        for (site, (cv, sv)) in c.values().iter().zip(s.values()).enumerate() {
            rows.push(vec![num(t), site.to_string(), num(*cv), num(*sv)]);
        }
    }
    out.write_csv("position.csv", &["time", "site", "C", "S"], rows)?;
    Ok(Finished::ok(format!("{} modes, {} time nodes, {} position slices", table.len(), nodes.len(), times.len())))
}

pub fn solve(cfg: &RunConfig, out: &mut OutputDir) -> Result<Finished> {
    let p = problem(cfg)?;
    let sol = picard_solve(&p.f, &p.g, p.xi.as_source(), &p.params, &p.table, &p.grid, cfg.max_iter, cfg.tol)?;
    out.write_csv("solution.csv", &["time", "site", "phi"], field_rows(&sol.field, cfg.record_every.max(1)))?;
    out.write_csv(
        "iterations.csv",
        &["iteration", "delta"],
        sol.deltas.iter().enumerate().map(|(i, d)| vec![(i + 1).to_string(), num(*d)]),
    )?;
    Ok(Finished::ok(format!(
        "Picard converged in {} iterations, fixed-point residual {:e}",
        sol.iterations, sol.residual
    )))
}

pub fn perturb(cfg: &RunConfig, out: &mut OutputDir) -> Result<Finished> {
    let p = problem(cfg)?;
    let orders = compute_orders(cfg.order, &p.f, &p.g, p.xi.as_source(), &p.params, &p.table, &p.grid)?;
    let every = cfg.record_every.max(1);
    out.write_csv(
        "orders.csv",
        &["order", "time", "site", "value"],
        orders.iter().flat_map(|o| {
            let j = o.order.to_string();
            field_rows(&o.field, every).map(move |mut row| {
                row.insert(0, j.clone());
                row
            })
        }),
    )?;
    let sum = partial_sum(&orders, p.params.lambda);
    out.write_csv("partial_sum.csv", &["time", "site", "value"], field_rows(&sum, every))?;
    let norms: Vec<String> = orders.iter().map(|o| format!("{:.3e}", o.field.sup_norm())).collect();
    Ok(Finished::ok(format!("orders 0..={} computed, sup norms [{}]", cfg.order, norms.join(", "))))
}

pub fn trees(cfg: &RunConfig, emit_dot: bool, verify: bool, out: &mut OutputDir) -> Result<Finished> {
    let trees = enumerate_trees(cfg.power, cfg.order)?;
    out.write_csv(
        "trees.csv",
        &["index", "order", "weight", "degree_product", "tree"],
        trees.iter().enumerate().map(|(i, wt)| {
            vec![
                i.to_string(),
                cfg.order.to_string(),
                wt.weight.to_string(),
                wt.tree.degree_product().to_string(),
                wt.tree.encode(),
            ]
        }),
    )?;
    if emit_dot {
        for (i, wt) in trees.iter().enumerate() {
            out.write_text(&format!("tree_{}_{i:04}.dot", cfg.order), &render_dot(wt))?;
        }
    }
    let weight_sum: u64 = trees.iter().map(|t| t.weight).sum();
    let mut summary = format!("{} trees of order {} (p = {}), total weight {weight_sum}", trees.len(), cfg.order, cfg.power);
    let mut passed = true;
    if verify {
        let p = problem(cfg)?;
        let orders = compute_orders(cfg.order, &p.f, &p.g, p.xi.as_source(), &p.params, &p.table, &p.grid)?;
        let mut rows = Vec::new();
        let mut worst: f64 = 0.0;
        for (j, order) in orders.iter().enumerate() {
            let gap = tree_sum(cfg.power, j, &p.f, &p.g, p.xi.as_source(), &p.table, &p.grid)?.sup_distance(&order.field);
            worst = worst.max(gap);
            rows.push(vec![j.to_string(), num(gap), num(TREE_TOL), (gap < TREE_TOL).to_string()]);
        }
        out.write_csv("verify.csv", &["order", "max_abs_diff", "tolerance", "passed"], rows)?;
        passed = worst < TREE_TOL;
        summary += &format!("; tree sums match the recursion to {worst:e}");
    }
    Ok(Finished { summary, passed })
}

pub fn simulate(cfg: &RunConfig, out: &mut OutputDir) -> Result<Finished> {
    let sim = cfg.sim_config()?;
    if let Some(warning) = sim.stability_warning() {
        eprintln!("warning: {warning}");
    }
    let traces = ensemble_run(&sim)?;
    let single = traces.len() == 1;
    let mut finals = Vec::new();
    for (i, trace) in traces.iter().enumerate() {
        let tag = if single { String::new() } else { format!("_{i:03}") };
        out.write_csv(
            &format!("trace{tag}.csv"),
            &["time", "m", "var"],
            (0..trace.len()).map(|k| vec![num(trace.times[k]), num(trace.order_param[k]), num(trace.variance[k])]),
        )?;
        for (t, field) in &trace.snapshots {
            out.write_csv(
                &format!("snapshot{tag}_t{}.csv", num(*t)),
                &["site", "value"],
                field.values().iter().enumerate().map(|(site, v)| vec![site.to_string(), num(*v)]),
            )?;
        }
        if let (Some(m), Some(v)) = (trace.order_param.last(), trace.variance.last()) {
            finals.push(format!("m={m:.4} var={v:.4}"));
        }
    }
    Ok(Finished::ok(format!("{} trajectories to t={}: {}", traces.len(), sim.horizon, finals.join("; "))))
}

pub fn validate(level: Level, seed: u64, out: &mut OutputDir) -> Result<Finished> {
    let report = validate_suite(level, seed);
    out.write_csv(
        "report.csv",
        &["check", "measured", "tolerance", "passed", "detail"],
        report.checks.iter().map(|c| {
            vec![c.name.clone(), num(c.measured), num(c.tolerance), c.passed.to_string(), c.detail.clone()]
        }),
    )?;
    let checks: Vec<_> = report
        .checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "measured": num(c.measured),
                "tolerance": num(c.tolerance),
                "passed": c.passed,
                "detail": c.detail,
            })
        })
        .collect();
    let body = json!({ "level": level.name(), "seed": seed, "passed": report.passed(), "checks": checks });
    out.write_text("report.json", &(serde_json::to_string_pretty(&body)? + "\n"))?;
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let summary = if failed.is_empty() {
        format!("all {} checks passed", report.checks.len())
    } else {
        format!("{} of {} checks failed: {}", failed.len(), report.checks.len(), failed.join(", "))
    };
    Ok(Finished { summary, passed: report.passed() })
}
