//! Command-line experiment runner for `quasichaos-core`.

pub mod config;
pub mod experiments;
pub mod output;

use config::{Config, Preset};
use experiments::{Context, Experiment};
use output::{Manifest, OutputEntry, OutputLayout};
use quasichaos_core::Error;
use serde_json::json;
use std::path::PathBuf;
use std::time::Instant;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ACCURACY: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Everything a run needs besides the experiment's own configuration.
#[derive(Debug, Clone)]
pub struct RunArgs {
    pub experiment: Experiment,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub preset: Preset,
    pub seed: Option<u64>,
    pub overrides: Overrides,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub g_ghz: Option<f64>,
    pub omega_d_ghz: Option<f64>,
    pub n_ch: Option<usize>,
    pub ng_samples: Option<usize>,
    pub state_index: Option<usize>,
    pub time_fraction: Option<f64>,
    pub level: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut Config) {
        cfg.ncrit.g_ghz = self.g_ghz.or(cfg.ncrit.g_ghz);
        cfg.ncrit.omega_d_ghz = self.omega_d_ghz.or(cfg.ncrit.omega_d_ghz);
        cfg.ncrit.n_ch = self.n_ch.or(cfg.ncrit.n_ch);
        cfg.level_stats.samples = self.ng_samples.or(cfg.level_stats.samples);
        if let Some(k) = self.state_index {
            cfg.husimi.levels = Some(vec![k]);
        }
        cfg.husimi.time_fraction = self.time_fraction.or(cfg.husimi.time_fraction);
        cfg.dispersion.level = self.level.or(cfg.dispersion.level);
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Configuration(_) | Error::InvalidParameter(_) | Error::InvalidInput(_) | Error::Resource(_) => EXIT_USAGE,
        Error::Accuracy(_) => EXIT_ACCURACY,
        _ => EXIT_NUMERICAL,
    }
}

/// Machine-readable error record printed on stderr.
pub fn error_json(e: &Error) -> String {
    let kind = match e {
        Error::Configuration(_) => "configuration",
        Error::InvalidParameter(_) => "invalid_parameter",
        Error::InvalidInput(_) => "invalid_input",
        Error::Resource(_) => "resource",
        Error::Accuracy(_) => "accuracy",
        Error::NoSolution(_) => "no_solution",
        Error::Linalg(_) => "linalg",
    };
    json!({"error": kind, "message": e.to_string(), "exit_code": exit_code(e)}).to_string()
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Configuration(format!("output: {e}"))
}

/// Runs one experiment and writes its tables and manifest. Returns the manifest.
pub fn run(args: &RunArgs) -> Result<Manifest, Error> {
    let start = Instant::now();
    let mut cfg = match &args.config {
        Some(p) => Config::from_path(p)?,
        None => Config::default(),
    };
    args.overrides.apply(&mut cfg);
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let workers = args.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Error::Configuration("workers must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Resource(e.to_string()))?;
    let cfg_echo = serde_json::to_value(&cfg).map_err(io_err)?;
    let ctx = Context::new(cfg, args.preset, seed)?;
    let outcome = pool.install(|| experiments::run(args.experiment, &ctx))?;

    let name = args.experiment.name();
    let layout = OutputLayout::new(&args.out, name);
    let mut files = Vec::new();
    let mut entries = Vec::new();
    for (i, t) in outcome.tables.iter().enumerate() {
        let path = layout.table_path(i, t);
        files.push((path.clone(), t.render(name).map_err(io_err)?));
        entries.push(OutputEntry { path: path.display().to_string(), rows: t.rows.len() });
    }
    for (key, value) in &outcome.json {
        let path = layout.json_path(key);
        files.push((path.clone(), serde_json::to_vec_pretty(value).map_err(io_err)?));
        entries.push(OutputEntry { path: path.display().to_string(), rows: 1 });
    }
    let manifest = Manifest {
        experiment: name.to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg_echo,
        resolved: serde_json::to_value(ctx.resolved).map_err(io_err)?,
        defaults: outcome.defaults,
        preset: format!("{:?}", args.preset).to_lowercase(),
        seed,
        workers,
        wall_clock_s: start.elapsed().as_secs_f64(),
        outputs: entries,
        failed_points: outcome.failed,
        warnings: outcome.warnings,
    };
    files.push((layout.manifest_path(), serde_json::to_vec_pretty(&manifest).map_err(io_err)?));
    output::write_atomically(&files).map_err(io_err)?;
    Ok(manifest)
}
