use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use skg_cli::commands::{self, Finished};
use skg_cli::config::{parse_config_with_base, ConfigError, RunConfig};
use skg_cli::output::OutputDir;
use skg_core::validate::Level;
use toml::Value;

const EXIT_VALIDATION: u8 = 2;
const EXIT_BLOW_UP: u8 = 3;
const EXIT_CONFIG: u8 = 4;

#[derive(Parser)]
#[command(name = "skg", version, about = "Damped stochastic Klein-Gordon lattice toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mode tables and position-space slices of the C and S kernels.
    Kernels(ModelArgs),
    /// Picard solution of the Duhamel equation on seeded random data.
    Solve(ModelArgs),
    /// Perturbative orders φ_0..φ_J and their partial sum.
    Perturb(ModelArgs),
    /// Enumerate weighted trees of one order, optionally checking them against the recursion.
    Trees {
        #[command(flatten)]
        model: ModelArgs,
        /// Write one Graphviz file per tree.
        #[arg(long)]
        emit_dot: bool,
        /// Compare tree sums with the recursion for orders 0..=J.
        #[arg(long)]
        verify: bool,
    },
    /// Euler-Maruyama simulation with observables and snapshots.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        ensemble: Option<usize>,
        #[arg(long)]
        record_every: Option<usize>,
        /// Comma-separated snapshot times.
        #[arg(long, value_delimiter = ',')]
        snapshot_times: Option<Vec<f64>>,
    },
    /// Cross-module numerical checks.
    Validate {
        #[arg(long, value_enum, default_value_t = LevelArg::Fast)]
        level: LevelArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Fast,
    Full,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    mu2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long, visible_alias = "p")]
    power: Option<u32>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n_sites: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

impl ModelArgs {
    fn overrides(&self) -> BTreeMap<String, Value> {
        let mut map = BTreeMap::new();
        let mut real = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                map.insert(k.to_string(), Value::Float(v));
            }
        };
        real("gamma", self.gamma);
        real("mu2", self.mu2);
        real("lambda", self.lambda);
        real("sigma", self.sigma);
        real("delta", self.delta);
        real("dt", self.dt);
        real("horizon", self.horizon);
        real("tol", self.tol);
        for (k, v) in [("power", self.power.map(|p| p as usize)), ("dim", self.dim), ("n_sites", self.n_sites), ("order", self.order)] {
            if let Some(v) = v {
                map.insert(k.to_string(), Value::Integer(v as i64));
            }
        }
        map
    }

    fn resolve(&self, base: &BTreeMap<String, Value>, extra: BTreeMap<String, Value>) -> Result<RunConfig, ConfigError> {
        let mut overrides = self.overrides();
        overrides.extend(extra);
        let mut cfg = parse_config_with_base(base, self.config.as_deref(), &overrides)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn configure_threads() -> Result<(), ConfigError> {
    if let Ok(raw) = std::env::var("SKG_THREADS") {
        let threads: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| ConfigError::Invalid {
            key: "SKG_THREADS".into(),
            reason: format!("expected a positive integer, got {raw:?}"),
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| ConfigError::Invalid { key: "SKG_THREADS".into(), reason: e.to_string() })?;
    }
    Ok(())
}

fn execute(command: Command) -> anyhow::Result<Finished> {
    configure_threads()?;
    let none = BTreeMap::new();
    match command {
        Command::Kernels(args) => {
            let cfg = args.resolve(&none, BTreeMap::new())?;
            finish("kernels", &cfg, &args.out, serde_json::to_value(&cfg)?, commands::kernels)
        }
        Command::Solve(args) => {
            let cfg = args.resolve(&none, BTreeMap::new())?;
            finish("solve", &cfg, &args.out, serde_json::to_value(&cfg)?, commands::solve)
        }
        Command::Perturb(args) => {
            let cfg = args.resolve(&none, BTreeMap::new())?;
            finish("perturb", &cfg, &args.out, serde_json::to_value(&cfg)?, commands::perturb)
        }
        Command::Trees { model, emit_dot, verify } => {
            // Enumeration needs only p and J; the model defaults matter for --verify.
            let base = BTreeMap::from([
                ("gamma".to_string(), Value::Float(1.0)),
                ("mu2".to_string(), Value::Float(1.0)),
                ("lambda".to_string(), Value::Float(0.1)),
            ]);
            let cfg = model.resolve(&base, BTreeMap::new())?;
            let mut snapshot = serde_json::to_value(&cfg)?;
            snapshot["emit_dot"] = emit_dot.into();
            snapshot["verify"] = verify.into();
            finish("trees", &cfg, &model.out, snapshot, |c, o| commands::trees(c, emit_dot, verify, o))
        }
        Command::Simulate { model, ensemble, record_every, snapshot_times } => {
            let mut extra = BTreeMap::new();
            if let Some(n) = ensemble {
                extra.insert("ensemble".to_string(), Value::Integer(n as i64));
            }
            if let Some(n) = record_every {
                extra.insert("record_every".to_string(), Value::Integer(n as i64));
            }
            if let Some(ts) = snapshot_times {
                extra.insert("snapshot_times".to_string(), Value::Array(ts.into_iter().map(Value::Float).collect()));
            }
            let cfg = model.resolve(&none, extra)?;
            finish("simulate", &cfg, &model.out, serde_json::to_value(&cfg)?, commands::simulate)
        }
        Command::Validate { level, seed, out } => {
            let level = match level {
                LevelArg::Fast => Level::Fast,
                LevelArg::Full => Level::Full,
            };
            let mut dir = OutputDir::create(&out)?;
            let done = commands::validate(level, seed, &mut dir)?;
            dir.finish("validate", seed, &serde_json::json!({ "level": level.name(), "seed": seed }))?;
            Ok(done)
        }
    }
}

fn finish(
    name: &str,
    cfg: &RunConfig,
    out: &std::path::Path,
    snapshot: serde_json::Value,
    body: impl FnOnce(&RunConfig, &mut OutputDir) -> anyhow::Result<Finished>,
) -> anyhow::Result<Finished> {
    let mut dir = OutputDir::create(out)?;
    let done = body(cfg, &mut dir).with_context(|| format!("{name} failed"))?;
    dir.finish(name, cfg.seed, &snapshot)?;
    Ok(done)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<skg_core::Error>() {
            return match e {
                skg_core::Error::BlowUp { .. } => EXIT_BLOW_UP,
                skg_core::Error::InvalidParameter { .. } | skg_core::Error::InvalidLattice(_) => EXIT_CONFIG,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(done) => {
            println!("{}", done.summary);
            if done.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VALIDATION)
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
