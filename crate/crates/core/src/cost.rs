//! Per-agent stage cost and horizon objective.
//!
//! Stage `k` is charged at the predicted state `x(k+1)` produced by input
//! `u(k)`:
//!
//! ```text
//! J = sum_k |p(k+1) - r(k+1)|^2_Q + |u(k)|^2_R + J_safe(p(k+1)) - w_comm C_surr(x(k+1)) / unit
//! ```
//!
//! The capacity term is expressed in units of `capacity_unit_bps` so that the
//! published weights (`Q = 2 I`, `w_comm = 1`) balance against a capacity in
//! Gbit/s. The horizon gradient is obtained with an adjoint sweep through the
//! double-integrator dynamics.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::channel::LinkBudget;
use crate::dynamics::{rollout, AgentState, ControlInput, DynamicsParams};
use crate::surrogate::{surrogate_with_gradient, SmoothingConfig};
use crate::{Error, Result, Vec3};

/// Barrier denominators at or below this value switch to a linear extension.
pub const BARRIER_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    /// Position tracking weight, symmetric positive definite.
    pub q_pos: [[f64; 3]; 3],
    /// Input weights `[a_x, a_y, a_z, omega]`.
    pub r_diag: [f64; 4],
    pub w_comm: f64,
    pub w_safe: f64,
    /// Barrier relaxation (m^2).
    pub mu: f64,
    /// Capacity unit used inside the cost (bit/s per cost unit).
    pub capacity_unit_bps: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            q_pos: [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]],
            r_diag: [0.1, 0.1, 0.1, 0.001],
            w_comm: 1.0,
            w_safe: 500.0,
            mu: 0.01,
            capacity_unit_bps: 1e9,
        }
    }
}

impl CostWeights {
    pub fn q_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.q_pos[r][c])
    }

    /// Smallest eigenvalue of the tracking weight.
    pub fn q_min_eigenvalue(&self) -> f64 {
        self.q_matrix().symmetric_eigenvalues().min()
    }

    pub fn without_comm(&self) -> Self {
        Self {
            w_comm: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.q_matrix();
        if (q - q.transpose()).abs().max() > 1e-12 * q.abs().max().max(1.0) {
            return Err(Error::invalid("weights.q_pos", "must be symmetric"));
        }
        if !(self.q_min_eigenvalue() > 0.0) {
            return Err(Error::invalid("weights.q_pos", "must be positive definite"));
        }
        for (i, r) in self.r_diag.iter().enumerate() {
            if !(r.is_finite() && *r >= 0.0) {
                return Err(Error::invalid(format!("weights.r_diag[{i}]"), "must be non-negative"));
            }
        }
        for (name, v) in [("weights.w_comm", self.w_comm), ("weights.w_safe", self.w_safe)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::invalid("weights.mu", "must be positive"));
        }
        if !(self.capacity_unit_bps.is_finite() && self.capacity_unit_bps > 0.0) {
            return Err(Error::invalid("weights.capacity_unit_bps", "must be positive"));
        }
        Ok(())
    }
}

/// An agent's input sequence and predicted trajectory, as shared with
/// neighbours. `states[k]` is the prediction for time index `stamp + k + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonPlan {
    pub inputs: Vec<ControlInput>,
    pub states: Vec<AgentState>,
    pub stamp: u64,
}

impl HorizonPlan {
    pub fn from_inputs(x0: &AgentState, inputs: Vec<ControlInput>, params: &DynamicsParams, stamp: u64) -> Result<Self> {
        let states = rollout(x0, &inputs, params)?;
        Ok(Self { inputs, states, stamp })
    }

    /// Zero-input plan: pure drift from `x0`.
    pub fn cold_start(x0: &AgentState, horizon: usize, params: &DynamicsParams, stamp: u64) -> Result<Self> {
        Self::from_inputs(x0, vec![ControlInput::zero(); horizon], params, stamp)
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    /// Predicted positions for times `now + 1, ..., now + horizon`.
    ///
    /// Times past the end of the plan are extrapolated at constant velocity.
    pub fn predicted_positions(&self, now: u64, horizon: usize, ts: f64) -> Vec<Vec3> {
        let last = self.states.last().copied();
        (0..horizon)
            .map(|m| {
                let target = now + m as u64 + 1;
                // index of the state at `target`
                let idx = target.saturating_sub(self.stamp + 1) as usize;
                match (self.states.get(idx), last) {
                    (Some(s), _) => s.position,
                    (None, Some(l)) => {
                        let extra = (idx + 1 - self.states.len()) as f64;
                        l.position + l.velocity * (extra * ts)
                    }
                    (None, None) => Vec3::zeros(),
                }
            })
            .collect()
    }
}

pub fn tracking_cost(state: &AgentState, ref_pos: &Vec3, input: &ControlInput, weights: &CostWeights) -> f64 {
    let e = state.position - ref_pos;
    let track = (e.transpose() * weights.q_matrix() * e)[(0, 0)];
    let u = input.to_array();
    let reg: f64 = u.iter().zip(&weights.r_diag).map(|(v, r)| r * v * v).sum();
    track + reg
}

/// Interior-penalty safety term of one agent against its neighbours.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SafetyTerm {
    pub value: f64,
    /// Gradient with respect to the agent's position.
    pub grad: Vec3,
    /// Set when any denominator fell to the floor and the linear extension was used.
    pub capped: bool,
}

pub fn safety_cost(pi: &Vec3, neighbor_positions: &[Vec3], weights: &CostWeights, d_min: f64) -> SafetyTerm {
    let mut term = SafetyTerm {
        value: 0.0,
        grad: Vec3::zeros(),
        capped: false,
    };
    if weights.w_safe == 0.0 {
        return term;
    }
    let w = weights.w_safe;
    for pj in neighbor_positions {
        let r = pi - pj;
        let den = r.norm_squared() - d_min * d_min + weights.mu;
        if den > BARRIER_FLOOR {
            term.value += w / den;
            term.grad -= r * (2.0 * w / (den * den));
        } else {
            // C1 linear continuation in the denominator keeps pushing apart.
            let slope = w / (BARRIER_FLOOR * BARRIER_FLOOR);
            term.value += w / BARRIER_FLOOR + slope * (BARRIER_FLOOR - den);
            term.grad -= r * (2.0 * slope);
            term.capped = true;
        }
    }
    term
}

/// Parts of one stage cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageCost {
    pub tracking: f64,
    pub regularization: f64,
    pub safety: f64,
    /// `-w_comm * surrogate / capacity_unit`.
    pub comm: f64,
    pub barrier_capped: bool,
}

impl StageCost {
    pub fn total(&self) -> f64 {
        self.tracking + self.regularization + self.safety + self.comm
    }
}

/// Result of a horizon evaluation; `gradient` is stage-major, 4 entries per stage.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonEval {
    pub cost: f64,
    pub gradient: Vec<f64>,
    pub barrier_capped: bool,
}

/// Everything the stage cost needs besides the states themselves.
#[derive(Clone, Debug, PartialEq)]
pub struct CostModel {
    pub weights: CostWeights,
    pub budget: LinkBudget,
    pub smoothing: SmoothingConfig,
    pub params: DynamicsParams,
}

impl CostModel {
    pub fn new(weights: CostWeights, budget: LinkBudget, smoothing: SmoothingConfig, params: DynamicsParams) -> Self {
        Self {
            weights,
            budget,
            smoothing,
            params,
        }
    }

    pub fn stage_cost(
        &self,
        agent: &AgentState,
        input: &ControlInput,
        ref_pos: &Vec3,
        neighbors: &[Vec3],
    ) -> Result<StageCost> {
        let e = agent.position - ref_pos;
        let tracking = (e.transpose() * self.weights.q_matrix() * e)[(0, 0)];
        let u = input.to_array();
        let regularization = u.iter().zip(&self.weights.r_diag).map(|(v, r)| r * v * v).sum();
        let safety = safety_cost(&agent.position, neighbors, &self.weights, self.params.d_min);
        let comm = if self.weights.w_comm > 0.0 && !neighbors.is_empty() {
            let (c, _) = surrogate_with_gradient(&agent.position, agent.yaw, neighbors, &self.budget, &self.smoothing)?;
            -self.weights.w_comm * c / self.weights.capacity_unit_bps
        } else {
            0.0
        };
        Ok(StageCost {
            tracking,
            regularization,
            safety: safety.value,
            comm,
            barrier_capped: safety.capped,
        })
    }

    /// Stage cost plus its gradient in `(position, yaw)`.
    fn stage_state_gradient(
        &self,
        agent: &AgentState,
        ref_pos: &Vec3,
        neighbors: &[Vec3],
        safety_only: &[Vec3],
    ) -> Result<(f64, Vec3, f64, bool)> {
        let q = self.weights.q_matrix();
        let e = agent.position - ref_pos;
        let qe = q * e;
        let mut value = e.dot(&qe);
        let mut gp = qe * 2.0;
        let mut gyaw = 0.0;
        let safety = safety_cost(&agent.position, neighbors, &self.weights, self.params.d_min);
        let extra = safety_cost(&agent.position, safety_only, &self.weights, self.params.d_min);
        value += safety.value + extra.value;
        gp += safety.grad + extra.grad;
        if self.weights.w_comm > 0.0 && !neighbors.is_empty() {
            let (c, g) = surrogate_with_gradient(&agent.position, agent.yaw, neighbors, &self.budget, &self.smoothing)?;
            let scale = self.weights.w_comm / self.weights.capacity_unit_bps;
            value -= scale * c;
            gp -= g.grad_p * scale;
            gyaw -= g.grad_yaw * scale;
        }
        Ok((value, gp, gyaw, safety.capped || extra.capped))
    }

    /// Total horizon cost and its gradient over all inputs.
    ///
    /// `neighbors[j][k]` is neighbour `j`'s predicted position at stage `k`,
    /// held fixed during this agent's solve.
    pub fn horizon_cost_and_gradient(
        &self,
        x0: &AgentState,
        inputs: &[ControlInput],
        refs: &[Vec3],
        neighbors: &[Vec<Vec3>],
    ) -> Result<HorizonEval> {
        self.horizon_cost_and_gradient_with_safety(x0, inputs, refs, neighbors, &[])
    }

    /// As [`Self::horizon_cost_and_gradient`], with additional tracks that
    /// enter only the safety barrier.
    pub fn horizon_cost_and_gradient_with_safety(
        &self,
        x0: &AgentState,
        inputs: &[ControlInput],
        refs: &[Vec3],
        neighbors: &[Vec<Vec3>],
        safety_only: &[Vec<Vec3>],
    ) -> Result<HorizonEval> {
        let n = inputs.len();
        if refs.len() != n {
            return Err(Error::LengthMismatch {
                what: "reference positions",
                expected: n,
                got: refs.len(),
            });
        }
        for track in neighbors.iter().chain(safety_only) {
            if track.len() != n {
                return Err(Error::LengthMismatch {
                    what: "neighbour prediction",
                    expected: n,
                    got: track.len(),
                });
            }
        }
        let states = rollout(x0, inputs, &self.params)?;
        let mut cost = 0.0;
        let mut capped = false;
        let mut gp = Vec::with_capacity(n);
        let mut gyaw = Vec::with_capacity(n);
        let mut nb = Vec::with_capacity(neighbors.len());
        let mut so = Vec::with_capacity(safety_only.len());
        for k in 0..n {
            nb.clear();
            nb.extend(neighbors.iter().map(|t| t[k]));
            so.clear();
            so.extend(safety_only.iter().map(|t| t[k]));
            let (v, p, y, c) = self.stage_state_gradient(&states[k], &refs[k], &nb, &so)?;
            cost += v;
            gp.push(p);
            gyaw.push(y);
            capped |= c;
        }

        // Adjoint sweep. lam_* hold the costate of x(k+2) entering iteration k.
        let ts = self.params.ts;
        let r = &self.weights.r_diag;
        let mut gradient = vec![0.0; 4 * n];
        let (mut lam_p, mut lam_v, mut lam_yaw) = (Vec3::zeros(), Vec3::zeros(), 0.0);
        for k in (0..n).rev() {
            lam_v += lam_p * ts;
            lam_p += gp[k];
            lam_yaw += gyaw[k];
            let ga = lam_p * (0.5 * ts * ts) + lam_v * ts;
            let u = inputs[k].to_array();
            gradient[4 * k] = ga.x + 2.0 * r[0] * u[0];
            gradient[4 * k + 1] = ga.y + 2.0 * r[1] * u[1];
            gradient[4 * k + 2] = ga.z + 2.0 * r[2] * u[2];
            gradient[4 * k + 3] = lam_yaw * ts + 2.0 * r[3] * u[3];
            cost += r.iter().zip(&u).map(|(w, v)| w * v * v).sum::<f64>();
        }
        if !cost.is_finite() {
            return Err(Error::NonFinite("horizon cost"));
        }
        Ok(HorizonEval {
            cost,
            gradient,
            barrier_capped: capped,
        })
    }

    pub fn horizon_cost(&self, x0: &AgentState, inputs: &[ControlInput], refs: &[Vec3], neighbors: &[Vec<Vec3>]) -> Result<f64> {
        Ok(self.horizon_cost_and_gradient(x0, inputs, refs, neighbors)?.cost)
    }
}
