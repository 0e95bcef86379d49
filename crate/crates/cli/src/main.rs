use clap::Parser;
use quasichaos::config::Preset;
use quasichaos::experiments::Experiment;
use quasichaos::{error_json, exit_code, run, Overrides, RunArgs};
use std::path::PathBuf;

/// Driven transmon chaos experiments.
#[derive(Debug, Parser)]
#[command(name = "quasichaos", version)]
struct Cli {
    #[arg(value_enum)]
    experiment: Experiment,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, or a `.csv` path naming the primary table.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, env = "QUASICHAOS_WORKERS")]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value = "ci")]
    preset: Preset,
    #[arg(long)]
    seed: Option<u64>,
    /// Override `ncrit.g_GHz`.
    #[arg(long = "g")]
    g_ghz: Option<f64>,
    /// Override `ncrit.omega_d_GHz`.
    #[arg(long = "omega-d")]
    omega_d_ghz: Option<f64>,
    /// Override `ncrit.n_ch`.
    #[arg(long)]
    nch: Option<usize>,
    /// Override `level_stats.samples`.
    #[arg(long)]
    ng_samples: Option<usize>,
    /// Husimi of this undriven level's Floquet continuation only.
    #[arg(long)]
    state_index: Option<usize>,
    /// Override `husimi.time_fraction`.
    #[arg(long)]
    time_fraction: Option<f64>,
    /// Override `dispersion.level`.
    #[arg(long)]
    level: Option<usize>,
}

fn main() {
    let cli = Cli::parse();
    let args = RunArgs {
        experiment: cli.experiment,
        config: cli.config,
        out: cli.out,
        workers: cli.workers,
        preset: cli.preset,
        seed: cli.seed,
        overrides: Overrides {
            g_ghz: cli.g_ghz,
            omega_d_ghz: cli.omega_d_ghz,
            n_ch: cli.nch,
            ng_samples: cli.ng_samples,
            state_index: cli.state_index,
            time_fraction: cli.time_fraction,
            level: cli.level,
        },
    };
    match run(&args) {
        Ok(m) => {
            for o in &m.outputs {
                println!("{}", o.path);
            }
            if !m.failed_points.is_empty() {
                eprintln!("{} sweep point(s) failed; see manifest", m.failed_points.len());
            }
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            std::process::exit(exit_code(&e));
        }
    }
}
