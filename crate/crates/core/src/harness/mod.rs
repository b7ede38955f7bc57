//! Closed-loop episodes, Monte Carlo aggregation, sensitivity sweeps,
//! theory checks and file outputs.

mod episode;
mod metrics;
mod montecarlo;
mod output;
mod plots;
mod theory;

pub use episode::{record_from_trajectory, run_episode, simulate, EpisodeRecord, SolveSummary, StepRecord, Trajectory, TrajectoryKind};
pub use metrics::{compute_metrics, AggregateMetrics};
pub use montecarlo::{epsilon_sweep, monte_carlo, EpisodeFailure, MonteCarloResult, SweepRow};
pub use output::{write_episode_csv, write_monte_carlo, write_sweep, write_theory, Manifest, CSV_SCHEMA_VERSION};
pub use plots::emit_plots;
pub use theory::{
    prop1_quadrature_ratio, quadrature_error, theory_report, LipschitzRow, QuadratureCheck, SyntheticField, TheoryReport,
    QUADRATURE_POINT,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Controllers compared by the harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Joint,
    Ideal,
    Ele,
    Std,
    Pid,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 5] = [Self::Joint, Self::Ideal, Self::Ele, Self::Std, Self::Pid];

    pub fn name(self) -> &'static str {
        match self {
            Self::Joint => "joint",
            Self::Ideal => "ideal",
            Self::Ele => "ele",
            Self::Std => "std",
            Self::Pid => "pid",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Joint => "Joint-MPC",
            Self::Ideal => "Ideal-MPC",
            Self::Ele => "Ele-MPC",
            Self::Std => "Std-MPC",
            Self::Pid => "PID",
        }
    }

    /// Which closed-loop simulation produces this controller's trajectory.
    pub fn trajectory_kind(self) -> TrajectoryKind {
        match self {
            Self::Joint => TrajectoryKind::Joint,
            Self::Ideal | Self::Ele | Self::Std => TrajectoryKind::Kinematic,
            Self::Pid => TrajectoryKind::Pid,
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid("controller", format!("unknown controller `{s}`")))
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessConfig {
    pub realizations: usize,
    /// Link-steps below this capacity count as outages (bit/s).
    pub outage_threshold_bps: f64,
    /// Smoothing radii of the sensitivity sweep (m).
    pub sweep_epsilons_m: Vec<f64>,
    pub sweep_realizations: usize,
    /// Radii for the Lipschitz trend check (m).
    pub lipschitz_epsilons_m: Vec<f64>,
    pub lipschitz_samples: usize,
    /// Link range of the Lipschitz sample region (m).
    pub lipschitz_range_m: f64,
    /// Radii for the quadrature-order check (m).
    pub quadrature_epsilons_m: Vec<f64>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            realizations: 50,
            outage_threshold_bps: 1e9,
            sweep_epsilons_m: vec![0.01, 0.03, 0.05, 0.08, 0.15, 0.20],
            sweep_realizations: 10,
            lipschitz_epsilons_m: vec![0.01, 0.05, 0.20],
            lipschitz_samples: 400,
            lipschitz_range_m: 20.0,
            quadrature_epsilons_m: vec![0.02, 0.05, 0.1],
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::invalid("harness.realizations", "must be at least 1"));
        }
        if self.sweep_realizations == 0 {
            return Err(Error::invalid("harness.sweep_realizations", "must be at least 1"));
        }
        if !(self.outage_threshold_bps.is_finite() && self.outage_threshold_bps >= 0.0) {
            return Err(Error::invalid("harness.outage_threshold_bps", "must be non-negative"));
        }
        for (name, list) in [
            ("harness.sweep_epsilons_m", &self.sweep_epsilons_m),
            ("harness.lipschitz_epsilons_m", &self.lipschitz_epsilons_m),
            ("harness.quadrature_epsilons_m", &self.quadrature_epsilons_m),
        ] {
            if list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                return Err(Error::invalid(name, "radii must be positive"));
            }
        }
        if self.lipschitz_samples < 100 {
            return Err(Error::invalid("harness.lipschitz_samples", "need at least 100"));
        }
        if !(self.lipschitz_range_m > 0.0) {
            return Err(Error::invalid("harness.lipschitz_range_m", "must be positive"));
        }
        Ok(())
    }
}
