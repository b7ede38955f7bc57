//! Discrete-time double integrator with a decoupled yaw integrator.
//!
//! State is `[p, v, psi]` (7 entries) and input is `[a, omega]` (4 entries).
//! Per axis the update is exact for piecewise-constant acceleration:
//!
//! ```text
//! p' = p + v Ts + a Ts^2 / 2
//! v' = v + a Ts
//! psi' = wrap(psi + omega Ts)
//! ```

use serde::{Deserialize, Serialize};

use crate::{wrap_angle, Error, Result, Vec3};

/// Position, velocity and heading of one agent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Heading in `(-pi, pi]`, counter-clockwise from +x.
    pub yaw: f64,
}

impl AgentState {
    pub fn new(position: Vec3, velocity: Vec3, yaw: f64) -> Self {
        Self {
            position,
            velocity,
            yaw: wrap_angle(yaw),
        }
    }

    /// Agent at rest with zero heading.
    pub fn at_rest(position: Vec3) -> Self {
        Self::new(position, Vec3::zeros(), 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.yaw.is_finite()
    }
}

/// Acceleration and yaw-rate command.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ControlInput {
    pub accel: Vec3,
    pub yaw_rate: f64,
}

impl ControlInput {
    pub const DIM: usize = 4;

    pub fn new(accel: Vec3, yaw_rate: f64) -> Self {
        Self { accel, yaw_rate }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.accel.x, self.accel.y, self.accel.z, self.yaw_rate]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(Vec3::new(v[0], v[1], v[2]), v[3])
    }

    pub fn norm_squared(&self) -> f64 {
        self.accel.norm_squared() + self.yaw_rate * self.yaw_rate
    }

    pub fn is_finite(&self) -> bool {
        self.accel.iter().all(|v| v.is_finite()) && self.yaw_rate.is_finite()
    }
}

/// Sampling time, actuation limits and safety distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsParams {
    /// Sampling interval (s).
    pub ts: f64,
    /// Per-axis acceleration limit (m/s^2).
    pub a_max: f64,
    /// Yaw-rate limit (rad/s).
    pub omega_max: f64,
    /// Safety distance (m).
    pub d_min: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            ts: 0.1,
            a_max: 4.0,
            omega_max: 1.5,
            d_min: 3.5,
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dynamics.ts", self.ts),
            ("dynamics.a_max", self.a_max),
            ("dynamics.omega_max", self.omega_max),
            ("dynamics.d_min", self.d_min),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Advances one agent by one sampling interval.
pub fn step(state: &AgentState, input: &ControlInput, params: &DynamicsParams) -> Result<AgentState> {
    if !state.is_finite() {
        return Err(Error::NonFinite("agent state"));
    }
    if !input.is_finite() {
        return Err(Error::NonFinite("control input"));
    }
    let ts = params.ts;
    Ok(AgentState {
        position: state.position + state.velocity * ts + input.accel * (0.5 * ts * ts),
        velocity: state.velocity + input.accel * ts,
        yaw: wrap_angle(state.yaw + input.yaw_rate * ts),
    })
}

/// Predicted states `x(1), ..., x(N)` for the input sequence `u(0), ..., u(N-1)`.
pub fn rollout(x0: &AgentState, inputs: &[ControlInput], params: &DynamicsParams) -> Result<Vec<AgentState>> {
    if inputs.is_empty() {
        return Err(Error::EmptyHorizon);
    }
    let mut out = Vec::with_capacity(inputs.len());
    let mut x = *x0;
    for u in inputs {
        x = step(&x, u, params)?;
        out.push(x);
    }
    Ok(out)
}

/// Projects an input onto the actuation box.
pub fn clamp_input(input: &ControlInput, params: &DynamicsParams) -> ControlInput {
    let a = params.a_max;
    ControlInput {
        accel: input.accel.map(|v| v.clamp(-a, a)),
        yaw_rate: input.yaw_rate.clamp(-params.omega_max, params.omega_max),
    }
}

/// Smallest Euclidean distance between any two agents.
pub fn min_pairwise_distance(states: &[AgentState]) -> Result<f64> {
    min_pairwise_position_distance(states.iter().map(|s| s.position))
}

pub(crate) fn min_pairwise_position_distance(positions: impl IntoIterator<Item = Vec3>) -> Result<f64> {
    let positions: Vec<Vec3> = positions.into_iter().collect();
    if positions.len() < 2 {
        return Err(Error::TooFewAgents {
            needed: 2,
            got: positions.len(),
        });
    }
    let mut best = f64::INFINITY;
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            best = best.min((positions[i] - positions[j]).norm());
        }
    }
    Ok(best)
}
