//! File outputs. CSV files hold only deterministic quantities; wall times
//! go to the text summary and the JSON manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{AggregateMetrics, EpisodeRecord, MonteCarloResult, SweepRow, TheoryReport};
use crate::scenario::{ScenarioConfig, SCHEMA_VERSION};
use crate::{Error, Result};

/// Version of the CSV column layout documented in the README.
pub const CSV_SCHEMA_VERSION: u32 = 1;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct LinkRow {
    controller: &'static str,
    realization: u64,
    step: usize,
    time_s: f64,
    tx: usize,
    rx: usize,
    capacity_bps: f64,
    misalignment_rad: Option<f64>,
}

#[derive(Serialize)]
struct StepRow {
    controller: &'static str,
    realization: u64,
    step: usize,
    time_s: f64,
    min_distance_m: f64,
    solves: usize,
    converged_solves: usize,
    solver_iterations: usize,
    barrier_capped: bool,
}

#[derive(Serialize)]
struct StateRow {
    controller: &'static str,
    realization: u64,
    step: usize,
    time_s: f64,
    agent: usize,
    x_m: f64,
    y_m: f64,
    z_m: f64,
    vx_mps: f64,
    vy_mps: f64,
    vz_mps: f64,
    yaw_rad: f64,
    ax_mps2: f64,
    ay_mps2: f64,
    az_mps2: f64,
    yaw_rate_radps: f64,
}

/// Writes `links.csv`, `steps.csv` and `states.csv` for `records`.
pub fn write_episode_csv(dir: &Path, records: &[EpisodeRecord]) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let links = dir.join("links.csv");
    write_rows(
        &links,
        records.iter().flat_map(|r| {
            r.steps.iter().flat_map(move |s| {
                r.links.iter().enumerate().map(move |(l, &(tx, rx))| LinkRow {
                    controller: r.controller.name(),
                    realization: r.realization,
                    step: s.step,
                    time_s: s.time_s,
                    tx,
                    rx,
                    capacity_bps: s.capacity[l],
                    misalignment_rad: s.misalignment.as_ref().map(|m| m[l]),
                })
            })
        }),
    )?;
    let steps = dir.join("steps.csv");
    write_rows(
        &steps,
        records.iter().flat_map(|r| {
            r.steps.iter().map(move |s| StepRow {
                controller: r.controller.name(),
                realization: r.realization,
                step: s.step,
                time_s: s.time_s,
                min_distance_m: s.min_distance,
                solves: s.solves.len(),
                converged_solves: s.solves.iter().filter(|d| d.converged).count(),
                solver_iterations: s.solves.iter().map(|d| d.iterations).sum(),
                barrier_capped: s.solves.iter().any(|d| d.barrier_capped),
            })
        }),
    )?;
    let states = dir.join("states.csv");
    write_rows(
        &states,
        records.iter().flat_map(|r| {
            r.steps.iter().flat_map(move |s| {
                s.states.iter().zip(&s.inputs).enumerate().map(move |(i, (x, u))| StateRow {
                    controller: r.controller.name(),
                    realization: r.realization,
                    step: s.step,
                    time_s: s.time_s,
                    agent: i,
                    x_m: x.position.x,
                    y_m: x.position.y,
                    z_m: x.position.z,
                    vx_mps: x.velocity.x,
                    vy_mps: x.velocity.y,
                    vz_mps: x.velocity.z,
                    yaw_rad: x.yaw,
                    ax_mps2: u.accel.x,
                    ay_mps2: u.accel.y,
                    az_mps2: u.accel.z,
                    yaw_rate_radps: u.yaw_rate,
                })
            })
        }),
    )?;
    Ok(vec![links, steps, states])
}

#[derive(Serialize)]
struct SummaryRow {
    controller: &'static str,
    episodes: usize,
    min_dist_avg_m: f64,
    min_dist_var_m2: f64,
    min_dist_min_m: f64,
    avg_capacity_bps: f64,
    outage_prob: f64,
    avg_misalign_deg: Option<f64>,
    avg_effort: f64,
    success_rate: Option<f64>,
}

fn summary_text(metrics: &[(super::ControllerKind, AggregateMetrics)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:>4} {:>9} {:>9} {:>9} {:>10} {:>8} {:>10} {:>9} {:>9} {:>9}",
        "method", "runs", "dmin_avg", "dmin_var", "dmin_min", "cap_gbps", "outage", "misal_deg", "effort", "solve_ms", "success"
    );
    let opt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
    for (k, m) in metrics {
        let _ = writeln!(
            s,
            "{:<10} {:>4} {:>9.3} {:>9.4} {:>9.3} {:>10.3} {:>8.4} {:>10} {:>9.3} {:>9} {:>9}",
            k.label(),
            m.episodes,
            m.min_dist_avg,
            m.min_dist_var,
            m.min_dist_min,
            m.avg_capacity / 1e9,
            m.outage_prob,
            opt(m.avg_misalign.map(f64::to_degrees), 2),
            m.avg_effort,
            opt(m.avg_solver_ms, 2),
            opt(m.success_rate, 4),
        );
    }
    s
}

/// Run manifest: what was run, with which configuration, and how long it took.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub crate_version: String,
    pub config_schema_version: u32,
    pub csv_schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub realizations: usize,
    pub controllers: Vec<String>,
    pub wall_time_s: f64,
    /// Mean local solve time per controller (ms).
    pub solver_ms: Vec<(String, f64)>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &ScenarioConfig, realizations: usize) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config_schema_version: SCHEMA_VERSION,
            csv_schema_version: CSV_SCHEMA_VERSION,
            config_hash: cfg.hash()?,
            seed: cfg.seed,
            realizations,
            controllers: Vec::new(),
            wall_time_s: 0.0,
            solver_ms: Vec::new(),
            files: Vec::new(),
        })
    }

    pub fn add_files(&mut self, paths: &[PathBuf]) {
        self.files.extend(
            paths
                .iter()
                .filter_map(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned()),
        );
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        create_dir(dir)?;
        let path = dir.join("manifest.json");
        write_text(&path, &serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

/// Writes the per-episode CSVs, `summary.csv`, `summary.txt` and `manifest.json`.
pub fn write_monte_carlo(dir: &Path, result: &MonteCarloResult, cfg: &ScenarioConfig, n_real: usize) -> Result<Vec<PathBuf>> {
    let mut files = write_episode_csv(dir, &result.records)?;
    let summary = dir.join("summary.csv");
    write_rows(
        &summary,
        result.metrics.iter().map(|(k, m)| SummaryRow {
            controller: k.name(),
            episodes: m.episodes,
            min_dist_avg_m: m.min_dist_avg,
            min_dist_var_m2: m.min_dist_var,
            min_dist_min_m: m.min_dist_min,
            avg_capacity_bps: m.avg_capacity,
            outage_prob: m.outage_prob,
            avg_misalign_deg: m.avg_misalign.map(f64::to_degrees),
            avg_effort: m.avg_effort,
            success_rate: m.success_rate,
        }),
    )?;
    files.push(summary);
    let mut text = summary_text(&result.metrics);
    for f in &result.failures {
        let _ = writeln!(text, "failed: {} realization {}: {}", f.controller, f.realization, f.message);
    }
    let txt = dir.join("summary.txt");
    write_text(&txt, &text)?;
    files.push(txt);

    let mut manifest = Manifest::new("montecarlo", cfg, n_real)?;
    manifest.controllers = result.metrics.iter().map(|(k, _)| k.name().to_string()).collect();
    manifest.wall_time_s = result.wall_time.as_secs_f64();
    manifest.solver_ms = result
        .metrics
        .iter()
        .filter_map(|(k, m)| m.avg_solver_ms.map(|t| (k.name().to_string(), t)))
        .collect();
    manifest.add_files(&files);
    files.push(manifest.write(dir)?);
    Ok(files)
}

/// Writes `sweep.csv` and an aligned `sweep.txt`.
pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let csv_path = dir.join("sweep.csv");
    write_rows(&csv_path, rows)?;
    let mut text = format!("{:>8} {:>5} {:>9} {:>10} {:>10} {:>8}\n", "eps_cm", "runs", "success", "cap_gbps", "misal_deg", "outage");
    for r in rows {
        let _ = writeln!(
            text,
            "{:>8.1} {:>5} {:>9.4} {:>10.3} {:>10.2} {:>8.4}",
            r.epsilon_m * 100.0,
            r.episodes,
            r.success_rate,
            r.avg_capacity / 1e9,
            r.avg_misalign.to_degrees(),
            r.outage_prob
        );
    }
    let txt_path = dir.join("sweep.txt");
    write_text(&txt_path, &text)?;
    Ok(vec![csv_path, txt_path])
}

#[derive(Serialize)]
struct LipschitzCsv {
    field: String,
    epsilon_m: Option<f64>,
    l_hat: f64,
}

/// Writes `theory.txt`, `lipschitz.csv` and `quadrature.csv`.
pub fn write_theory(dir: &Path, report: &TheoryReport) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let txt = dir.join("theory.txt");
    write_text(&txt, &report.to_text())?;
    let lip = dir.join("lipschitz.csv");
    write_rows(
        &lip,
        report.lipschitz.iter().map(|r| LipschitzCsv {
            field: if r.epsilon_m.is_some() { "smoothed" } else { "raw" }.to_string(),
            epsilon_m: r.epsilon_m,
            l_hat: r.l_hat,
        }),
    )?;
    let quad = dir.join("quadrature.csv");
    write_rows(&quad, &report.quadrature)?;
    Ok(vec![txt, lip, quad])
}
