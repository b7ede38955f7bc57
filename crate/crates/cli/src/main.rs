use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use beamswarm::harness::{
    compute_metrics, emit_plots, epsilon_sweep, monte_carlo, run_episode, theory_report, write_episode_csv,
    write_monte_carlo, write_sweep, write_theory, ControllerKind, Manifest,
};
use beamswarm::scenario::{load_config, ScenarioConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "beamswarm", version, about = "Joint trajectory and heading MPC for directional-antenna UAV swarms")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// One closed-loop episode of one controller.
    Run {
        #[arg(long, default_value = "joint")]
        controller: ControllerKind,
        /// Realization index of the seed.
        #[arg(long, default_value_t = 0)]
        realization: u64,
    },
    /// Paired Monte Carlo comparison of controllers.
    Montecarlo {
        #[arg(long)]
        realizations: Option<usize>,
        /// Controllers to compare (repeatable); all when omitted.
        #[arg(long)]
        controller: Vec<ControllerKind>,
    },
    /// Joint MPC across smoothing radii.
    SweepEpsilon {
        #[arg(long)]
        realizations: Option<usize>,
        /// Radii in metres; the configured list when omitted.
        #[arg(long, value_delimiter = ',')]
        epsilons: Vec<f64>,
    },
    /// Lipschitz, quadrature-order and contraction checks.
    Theory,
    /// Print the effective configuration as TOML.
    Config,
    /// Trajectory, distance and capacity plots for one realization.
    Plot {
        #[arg(long, default_value_t = 0)]
        realization: u64,
        /// Controllers to plot (repeatable); all when omitted.
        #[arg(long)]
        controller: Vec<ControllerKind>,
    },
}

fn load(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn controllers(list: Vec<ControllerKind>) -> Vec<ControllerKind> {
    if list.is_empty() {
        ControllerKind::ALL.to_vec()
    } else {
        let mut list = list;
        list.sort();
        list.dedup();
        list
    }
}

fn finish(out: &Path, mut manifest: Manifest, files: &[PathBuf], start: Instant) -> Result<()> {
    manifest.add_files(files);
    if manifest.wall_time_s == 0.0 {
        manifest.wall_time_s = start.elapsed().as_secs_f64();
    }
    manifest.write(out)?;
    for f in files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = load(&cli.common)?;
    let out = cli.common.out.as_path();
    let start = Instant::now();
    match cli.command {
        Command::Run { controller, realization } => {
            let rec = run_episode(&cfg, controller, realization)?;
            let m = compute_metrics(std::slice::from_ref(&rec), cfg.harness.outage_threshold_bps)?;
            let mut files = write_episode_csv(out, std::slice::from_ref(&rec))?;
            files.extend(emit_plots(out, std::slice::from_ref(&rec), cfg.dynamics.d_min)?);
            println!(
                "{}: min distance {:.3} m, capacity {:.3} Gbit/s, outage {:.4}, solver {} ms",
                controller.label(),
                m.min_dist_min,
                m.avg_capacity / 1e9,
                m.outage_prob,
                m.avg_solver_ms.map_or("-".into(), |t| format!("{t:.2}"))
            );
            let mut manifest = Manifest::new("run", &cfg, 1)?;
            manifest.controllers = vec![controller.name().into()];
            if let Some(t) = m.avg_solver_ms {
                manifest.solver_ms.push((controller.name().into(), t));
            }
            finish(out, manifest, &files, start)?;
        }
        Command::Montecarlo { realizations, controller } => {
            let n = realizations.unwrap_or(cfg.harness.realizations);
            let result = monte_carlo(&cfg, &controllers(controller), n)?;
            let files = write_monte_carlo(out, &result, &cfg, n)?;
            print!("{}", std::fs::read_to_string(out.join("summary.txt")).context("reading summary")?);
            for f in &files {
                log::info!("wrote {}", f.display());
            }
        }
        Command::SweepEpsilon { realizations, epsilons } => {
            let n = realizations.unwrap_or(cfg.harness.sweep_realizations);
            let eps = if epsilons.is_empty() {
                cfg.harness.sweep_epsilons_m.clone()
            } else {
                epsilons
            };
            let rows = epsilon_sweep(&cfg, &eps, n)?;
            let files = write_sweep(out, &rows)?;
            print!("{}", std::fs::read_to_string(out.join("sweep.txt")).context("reading sweep table")?);
            let mut manifest = Manifest::new("sweep-epsilon", &cfg, n)?;
            manifest.controllers = vec![ControllerKind::Joint.name().into()];
            finish(out, manifest, &files, start)?;
        }
        Command::Theory => {
            let report = theory_report(&cfg)?;
            print!("{}", report.to_text());
            let files = write_theory(out, &report)?;
            finish(out, Manifest::new("theory", &cfg, 0)?, &files, start)?;
        }
        Command::Config => print!("{}", cfg.to_toml_string()?),
        Command::Plot { realization, controller } => {
            let kinds = controllers(controller);
            let records = kinds
                .iter()
                .map(|&k| run_episode(&cfg, k, realization))
                .collect::<beamswarm::Result<Vec<_>>>()?;
            let files = emit_plots(out, &records, cfg.dynamics.d_min)?;
            let mut manifest = Manifest::new("plot", &cfg, 1)?;
            manifest.controllers = kinds.iter().map(|k| k.name().to_string()).collect();
            finish(out, manifest, &files, start)?;
        }
    }
    Ok(())
}
