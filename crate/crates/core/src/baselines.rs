//! Comparison controllers and their antenna evaluations.
//!
//! Ideal, Ele and Std share one kinematic MPC trajectory (communication
//! weight zero) and differ only in how the antenna is evaluated along it. PID
//! is a reactive potential-field controller evaluated with omnidirectional
//! antennas.

use serde::{Deserialize, Serialize};

use crate::beam::{hybrid_gain, link_capacity, los_azimuth};
use crate::channel::{channel_power, LinkBudget};
use crate::cost::CostModel;
use crate::dynamics::{clamp_input, AgentState, ControlInput, DynamicsParams};
use crate::swarm::SwarmTopology;
use crate::{wrap_angle, Error, Result, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    IdealMpc,
    EleMpc,
    StdMpc,
    Pid,
}

/// Below this horizontal speed (m/s) the Ele controller holds its previous yaw.
pub const ELE_HOLD_SPEED: f64 = 0.1;

/// Cost model of the kinematic MPC: the same problem without the comm term.
pub fn kinematic_model(model: &CostModel) -> CostModel {
    CostModel {
        weights: model.weights.without_comm(),
        ..model.clone()
    }
}

/// Per-step, per-link capacities (bit/s), indexed `[t][link]` in `topology.links()` order.
pub type CapacitySeries = Vec<Vec<f64>>;

fn link_capacity_series<G>(trajectory: &[Vec<AgentState>], topology: &SwarmTopology, budget: &LinkBudget, mut gain: G) -> Result<CapacitySeries>
where
    G: FnMut(usize, usize, usize) -> Result<f64>,
{
    let links = topology.links();
    trajectory
        .iter()
        .enumerate()
        .map(|(t, states)| {
            links
                .iter()
                .map(|&(i, j)| {
                    let p = channel_power(&states[i].position, &states[j].position, budget)?;
                    link_capacity(budget.snr0 * p * gain(t, i, j)?, budget)
                })
                .collect()
        })
        .collect()
}

/// Capacity and misalignment of links evaluated with each agent's own yaw.
#[derive(Clone, Debug, PartialEq)]
pub struct AntennaEvaluation {
    pub capacity: CapacitySeries,
    /// `|wrap(psi_LoS - yaw)|` per step and link (rad).
    pub misalignment: Vec<Vec<f64>>,
}

fn evaluate_with_yaws(trajectory: &[Vec<AgentState>], yaws: &[Vec<f64>], topology: &SwarmTopology, budget: &LinkBudget) -> Result<AntennaEvaluation> {
    let links = topology.links();
    let mut misalignment = Vec::with_capacity(trajectory.len());
    for (states, yaw) in trajectory.iter().zip(yaws) {
        misalignment.push(
            links
                .iter()
                .map(|&(i, j)| Ok(wrap_angle(los_azimuth(&states[i].position, &states[j].position)? - yaw[i]).abs()))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    let capacity = link_capacity_series(trajectory, topology, budget, |t, i, j| {
        let s = &trajectory[t];
        Ok(hybrid_gain(wrap_angle(los_azimuth(&s[i].position, &s[j].position)? - yaws[t][i]), budget))
    })?;
    Ok(AntennaEvaluation { capacity, misalignment })
}

/// Links evaluated with the yaw carried in the recorded states (Joint MPC).
pub fn evaluate_actual(trajectory: &[Vec<AgentState>], topology: &SwarmTopology, budget: &LinkBudget) -> Result<AntennaEvaluation> {
    let yaws: Vec<Vec<f64>> = trajectory.iter().map(|s| s.iter().map(|a| a.yaw).collect()).collect();
    evaluate_with_yaws(trajectory, &yaws, topology, budget)
}

/// Perfect, instantaneous alignment: full array gain on every link.
pub fn evaluate_ideal(trajectory: &[Vec<AgentState>], topology: &SwarmTopology, budget: &LinkBudget) -> Result<CapacitySeries> {
    link_capacity_series(trajectory, topology, budget, |_, _, _| Ok(budget.n_ula))
}

/// Omnidirectional antennas: unit gain, yaw ignored.
pub fn evaluate_omni(trajectory: &[Vec<AgentState>], topology: &SwarmTopology, budget: &LinkBudget) -> Result<CapacitySeries> {
    link_capacity_series(trajectory, topology, budget, |_, _, _| Ok(1.0))
}

/// Velocity-aligned yaw for every agent and step, holding the previous yaw at hover.
pub fn velocity_aligned_yaws(trajectory: &[Vec<AgentState>]) -> Vec<Vec<f64>> {
    let mut held: Vec<f64> = trajectory.first().map(|s| s.iter().map(|a| a.yaw).collect()).unwrap_or_default();
    trajectory
        .iter()
        .map(|states| {
            for (h, a) in held.iter_mut().zip(states) {
                if a.velocity.xy().norm() >= ELE_HOLD_SPEED {
                    *h = a.velocity.y.atan2(a.velocity.x);
                }
            }
            held.clone()
        })
        .collect()
}

/// Velocity-aligned flight with electronic steering inside the field of view.
pub fn evaluate_ele(trajectory: &[Vec<AgentState>], topology: &SwarmTopology, budget: &LinkBudget) -> Result<AntennaEvaluation> {
    evaluate_with_yaws(trajectory, &velocity_aligned_yaws(trajectory), topology, budget)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidGains {
    pub kp: f64,
    pub kd: f64,
    /// Repulsion gain (m^3/s^2): acceleration `krep / d^2` away from each close agent.
    pub krep: f64,
    /// Repulsion is active below `repulsion_range_factor * d_min`.
    pub repulsion_range_factor: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 1.2,
            kd: 1.8,
            krep: 30.0,
            repulsion_range_factor: 2.0,
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pid.kp", self.kp),
            ("pid.kd", self.kd),
            ("pid.krep", self.krep),
            ("pid.repulsion_range_factor", self.repulsion_range_factor),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Reactive potential-field inputs for every agent; yaw rate is always zero.
pub fn pid_step(states: &[AgentState], refs: &[Vec3], gains: &PidGains, params: &DynamicsParams) -> Result<Vec<ControlInput>> {
    if refs.len() != states.len() {
        return Err(Error::LengthMismatch {
            what: "PID references",
            expected: states.len(),
            got: refs.len(),
        });
    }
    let range = gains.repulsion_range_factor * params.d_min;
    Ok(states
        .iter()
        .zip(refs)
        .enumerate()
        .map(|(i, (s, r))| {
            let mut a = (r - s.position) * gains.kp - s.velocity * gains.kd;
            for (j, o) in states.iter().enumerate() {
                let d = s.position - o.position;
                let dist = d.norm();
                if j != i && dist < range && dist > 0.0 {
                    a += d * (gains.krep / (dist * dist * dist));
                }
            }
            clamp_input(&ControlInput::new(a, 0.0), params)
        })
        .collect())
}
