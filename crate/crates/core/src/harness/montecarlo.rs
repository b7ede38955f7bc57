use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use super::{compute_metrics, record_from_trajectory, simulate, AggregateMetrics, ControllerKind, EpisodeRecord};
use crate::scenario::ScenarioConfig;
use crate::{Error, Result};

/// An episode that returned an error instead of a record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeFailure {
    pub controller: ControllerKind,
    pub realization: u64,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct MonteCarloResult {
    /// Records ordered by controller (as requested), then realization.
    pub records: Vec<EpisodeRecord>,
    pub metrics: Vec<(ControllerKind, AggregateMetrics)>,
    pub failures: Vec<EpisodeFailure>,
    pub wall_time: Duration,
}

impl MonteCarloResult {
    pub fn metrics_for(&self, kind: ControllerKind) -> Option<&AggregateMetrics> {
        self.metrics.iter().find(|(k, _)| *k == kind).map(|(_, m)| m)
    }

    pub fn records_for(&self, kind: ControllerKind) -> impl Iterator<Item = &EpisodeRecord> {
        self.records.iter().filter(move |r| r.controller == kind)
    }
}

type RealizationOutcome = Vec<(ControllerKind, std::result::Result<EpisodeRecord, String>)>;

/// One realization: each distinct closed loop is simulated once and shared
/// by every controller evaluated on it.
fn run_realization(cfg: &ScenarioConfig, kinds: &[ControllerKind], realization: u64, hash: &str) -> RealizationOutcome {
    let mut trajectories = BTreeMap::new();
    kinds
        .iter()
        .map(|&kind| {
            let tk = kind.trajectory_kind();
            let traj = trajectories
                .entry(tk)
                .or_insert_with(|| simulate(cfg, tk, realization).map_err(|e| e.to_string()));
            let rec = match traj {
                Ok(t) => record_from_trajectory(t, kind, cfg, realization, hash).map_err(|e| e.to_string()),
                Err(e) => Err(e.clone()),
            };
            (kind, rec)
        })
        .collect()
}

/// Runs `kinds` on realizations `0..n_real` of `cfg.seed`.
///
/// Realizations run in parallel; results are merged in realization order,
/// so the output is independent of scheduling.
pub fn monte_carlo(cfg: &ScenarioConfig, kinds: &[ControllerKind], n_real: usize) -> Result<MonteCarloResult> {
    if n_real == 0 {
        return Err(Error::invalid("realizations", "must be at least 1"));
    }
    if kinds.is_empty() {
        return Err(Error::invalid("controllers", "need at least one controller"));
    }
    cfg.validate()?;
    let hash = cfg.hash()?;
    let start = Instant::now();
    let outcomes: Vec<RealizationOutcome> = (0..n_real as u64)
        .into_par_iter()
        .map(|r| run_realization(cfg, kinds, r, &hash))
        .collect();
    let wall_time = start.elapsed();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut metrics = Vec::new();
    for &kind in kinds {
        let first = records.len();
        for (r, outcome) in outcomes.iter().enumerate() {
            for (k, rec) in outcome {
                if *k != kind {
                    continue;
                }
                match rec {
                    Ok(rec) => records.push(rec.clone()),
                    Err(message) => failures.push(EpisodeFailure {
                        controller: kind,
                        realization: r as u64,
                        message: message.clone(),
                    }),
                }
            }
        }
        if records.len() > first {
            metrics.push((kind, compute_metrics(&records[first..], cfg.harness.outage_threshold_bps)?));
        }
    }
    Ok(MonteCarloResult {
        records,
        metrics,
        failures,
        wall_time,
    })
}

/// One smoothing radius of the sensitivity sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon_m: f64,
    pub episodes: usize,
    /// Fraction of local solves that met a convergence test.
    pub success_rate: f64,
    pub avg_capacity: f64,
    pub avg_misalign: f64,
    pub outage_prob: f64,
}

/// Joint MPC over `n_real` realizations for each smoothing radius.
pub fn epsilon_sweep(cfg: &ScenarioConfig, epsilons: &[f64], n_real: usize) -> Result<Vec<SweepRow>> {
    epsilons
        .iter()
        .map(|&eps| {
            let mut c = cfg.clone();
            c.smoothing.epsilon = eps;
            let mc = monte_carlo(&c, &[ControllerKind::Joint], n_real)?;
            let m = mc.metrics_for(ControllerKind::Joint).ok_or(Error::NoRecords)?;
            Ok(SweepRow {
                epsilon_m: eps,
                episodes: m.episodes,
                success_rate: m.success_rate.unwrap_or(0.0),
                avg_capacity: m.avg_capacity,
                avg_misalign: m.avg_misalign.unwrap_or(f64::NAN),
                outage_prob: m.outage_prob,
            })
        })
        .collect()
}
