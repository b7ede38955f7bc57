use serde::Serialize;

use super::EpisodeRecord;
use crate::{Error, Result};

/// Metrics aggregated over a set of episodes of one controller.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateMetrics {
    pub episodes: usize,
    /// Mean over episodes of the per-episode global minimum distance (m).
    pub min_dist_avg: f64,
    /// Population variance of the per-episode global minimum distance (m^2).
    pub min_dist_var: f64,
    /// Smallest distance seen in any episode (m).
    pub min_dist_min: f64,
    /// Mean capacity over links, steps and episodes (bit/s).
    pub avg_capacity: f64,
    /// Fraction of link-steps below the outage threshold.
    pub outage_prob: f64,
    /// Mean mechanical misalignment (rad); `None` for omnidirectional controllers.
    pub avg_misalign: Option<f64>,
    /// Mean squared input norm over agents and steps.
    pub avg_effort: f64,
    /// Mean wall time of one local solve (ms); `None` without optimisation.
    pub avg_solver_ms: Option<f64>,
    /// Median wall time of one local solve (ms).
    pub median_solver_ms: Option<f64>,
    /// Fraction of local solves that met a convergence test.
    pub success_rate: Option<f64>,
}

fn mean(sum: f64, n: usize) -> f64 {
    sum / n as f64
}

/// Aggregates `records`; the result does not depend on their order.
pub fn compute_metrics(records: &[EpisodeRecord], outage_threshold_bps: f64) -> Result<AggregateMetrics> {
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    let mins: Vec<f64> = records.iter().map(EpisodeRecord::global_min_distance).collect();
    let min_dist_avg = mean(mins.iter().sum(), mins.len());
    let min_dist_var = mean(mins.iter().map(|m| (m - min_dist_avg).powi(2)).sum(), mins.len());
    let min_dist_min = mins.iter().copied().fold(f64::INFINITY, f64::min);

    let (mut cap_sum, mut cap_n, mut outages) = (0.0, 0usize, 0usize);
    let (mut mis_sum, mut mis_n, mut has_mis) = (0.0, 0usize, false);
    let (mut effort_sum, mut effort_n) = (0.0, 0usize);
    let mut times = Vec::new();
    let mut converged = 0usize;
    for step in records.iter().flat_map(|r| &r.steps) {
        for &c in &step.capacity {
            cap_sum += c;
            cap_n += 1;
            if c < outage_threshold_bps {
                outages += 1;
            }
        }
        if let Some(m) = &step.misalignment {
            has_mis = true;
            mis_sum += m.iter().sum::<f64>();
            mis_n += m.len();
        }
        for u in &step.inputs {
            effort_sum += u.norm_squared();
            effort_n += 1;
        }
        for s in &step.solves {
            times.push(s.wall_ms);
            converged += usize::from(s.converged);
        }
    }
    if cap_n == 0 || effort_n == 0 {
        return Err(Error::NoRecords);
    }
    times.sort_by(f64::total_cmp);
    let median = |v: &[f64]| {
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    };
    let has_solves = !times.is_empty();
    Ok(AggregateMetrics {
        episodes: records.len(),
        min_dist_avg,
        min_dist_var,
        min_dist_min,
        avg_capacity: mean(cap_sum, cap_n),
        outage_prob: mean(outages as f64, cap_n),
        avg_misalign: (has_mis && mis_n > 0).then(|| mean(mis_sum, mis_n)),
        avg_effort: mean(effort_sum, effort_n),
        avg_solver_ms: has_solves.then(|| mean(times.iter().sum(), times.len())),
        median_solver_ms: has_solves.then(|| median(&times)),
        success_rate: has_solves.then(|| mean(converged as f64, times.len())),
    })
}
