//! Decentralised coordination by block-coordinate descent.
//!
//! Each control period every agent re-solves its local problem against the
//! latest plans of its neighbours. Under Gauss-Seidel coordination agents
//! update in index order and agent `i` already sees the plans of agents
//! `j < i` from the current sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{CostModel, CostWeights, HorizonPlan};
use crate::dynamics::{step, AgentState, ControlInput};
use crate::solver::{shift_warm_start, solve_fhocp, LocalProblem, SolveDiagnostics, SolverConfig};
use crate::{Error, Result, Vec3};

/// Directed communication graph plus the derived safety neighbourhoods.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwarmTopology {
    neighbor_sets: Vec<Vec<usize>>,
    safety_sets: Vec<Vec<usize>>,
}

impl SwarmTopology {
    /// Builds a topology from out-neighbour lists. Self-loops and duplicates are rejected.
    pub fn new(neighbor_sets: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighbor_sets.len();
        for (i, set) in neighbor_sets.iter().enumerate() {
            for (k, &j) in set.iter().enumerate() {
                if j >= n || j == i || set[..k].contains(&j) {
                    return Err(Error::invalid("topology", format!("bad neighbour {j} for agent {i}")));
                }
            }
        }
        // A link is known to both endpoints, so safety covers in- and out-neighbours.
        let mut safety_sets: Vec<Vec<usize>> = neighbor_sets.clone();
        for (i, set) in neighbor_sets.iter().enumerate() {
            for &j in set {
                if !safety_sets[j].contains(&i) {
                    safety_sets[j].push(i);
                }
            }
        }
        for s in &mut safety_sets {
            s.sort_unstable();
        }
        Ok(Self {
            neighbor_sets,
            safety_sets,
        })
    }

    /// Ring `i -> (i + 1) mod n`.
    pub fn ring(n_agents: usize) -> Self {
        let sets = (0..n_agents)
            .map(|i| if n_agents > 1 { vec![(i + 1) % n_agents] } else { Vec::new() })
            .collect();
        Self::new(sets).expect("ring topology is valid")
    }

    pub fn n_agents(&self) -> usize {
        self.neighbor_sets.len()
    }

    /// Communication partners of agent `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbor_sets[i]
    }

    /// Agents whose separation from `i` enters `i`'s safety barrier.
    pub fn safety_neighbors(&self, i: usize) -> &[usize] {
        &self.safety_sets[i]
    }

    /// All directed links `(i, j)` in agent order.
    pub fn links(&self) -> Vec<(usize, usize)> {
        self.neighbor_sets
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |&j| (i, j)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordination {
    #[default]
    GaussSeidel,
    /// Simultaneous updates against a snapshot. Experimental.
    Jacobi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwarmConfig {
    pub sweeps_per_step: usize,
    pub coordination: Coordination,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            sweeps_per_step: 1,
            coordination: Coordination::GaussSeidel,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps_per_step == 0 {
            return Err(Error::invalid("swarm.sweeps_per_step", "must be at least 1"));
        }
        Ok(())
    }
}

/// Summary of the sweeps run in one control period.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundReport {
    pub sweep_count: usize,
    pub global_cost_before: f64,
    pub global_cost_after: f64,
    /// Largest predicted-position change over all agents in the last sweep (m).
    pub max_plan_delta: f64,
    /// Per-sweep plan deltas.
    pub sweep_deltas: Vec<f64>,
    /// Ratio of the last two sweep deltas, when at least two sweeps ran.
    pub contraction_ratio_estimate: Option<f64>,
    /// Diagnostics of every local solve, in execution order.
    pub solves: Vec<SolveDiagnostics>,
    /// Agents whose local problem returned an error; their plans were kept.
    pub failed_agents: Vec<usize>,
}

/// Everything that stays fixed while the swarm advances one period.
#[derive(Clone, Copy, Debug)]
pub struct SwarmContext<'a> {
    pub topology: &'a SwarmTopology,
    pub model: &'a CostModel,
    pub solver: &'a SolverConfig,
    pub swarm: &'a SwarmConfig,
}

/// Positions, plans and time index of the whole swarm.
#[derive(Clone, Debug, PartialEq)]
pub struct SwarmState {
    pub time_index: u64,
    pub agents: Vec<AgentState>,
    pub plans: Vec<HorizonPlan>,
}

impl SwarmState {
    /// Cold start: every agent drifts with zero inputs.
    pub fn cold_start(agents: Vec<AgentState>, ctx: &SwarmContext) -> Result<Self> {
        let plans = agents
            .iter()
            .map(|a| HorizonPlan::cold_start(a, ctx.solver.horizon, &ctx.model.params, 0))
            .collect::<Result<_>>()?;
        Ok(Self {
            time_index: 0,
            agents,
            plans,
        })
    }
}

fn predictions(plans: &[HorizonPlan], ids: &[usize], now: u64, horizon: usize, ts: f64) -> Vec<Vec<Vec3>> {
    ids.iter().map(|&j| plans[j].predicted_positions(now, horizon, ts)).collect()
}

/// Comm-neighbour tracks followed by the remaining safety-only tracks.
struct NeighborView {
    comm: Vec<Vec<Vec3>>,
    safety_only: Vec<Vec<Vec3>>,
}

fn neighbor_view(i: usize, plans: &[HorizonPlan], ctx: &SwarmContext, now: u64) -> NeighborView {
    let n = ctx.solver.horizon;
    let ts = ctx.model.params.ts;
    let comm_ids = ctx.topology.neighbors(i);
    let safety_only: Vec<usize> = ctx
        .topology
        .safety_neighbors(i)
        .iter()
        .copied()
        .filter(|j| !comm_ids.contains(j))
        .collect();
    NeighborView {
        comm: predictions(plans, comm_ids, now, n, ts),
        safety_only: predictions(plans, &safety_only, now, n, ts),
    }
}

/// One agent's horizon objective against the given plans.
fn local_objective(model: &CostModel, x0: &AgentState, inputs: &[ControlInput], refs: &[Vec3], view: &NeighborView) -> Result<f64> {
    Ok(model
        .horizon_cost_and_gradient_with_safety(x0, inputs, refs, &view.comm, &view.safety_only)?
        .cost)
}

/// Solve agent `i`'s local problem against the given neighbour plans.
pub fn solve_agent(
    i: usize,
    state: &AgentState,
    plans: &[HorizonPlan],
    refs: &[Vec3],
    ctx: &SwarmContext,
    now: u64,
) -> Result<(HorizonPlan, SolveDiagnostics)> {
    let view = neighbor_view(i, plans, ctx, now);
    let warm = warm_start(&plans[i], now, ctx.solver.horizon);
    let problem = LocalProblem {
        x0: *state,
        refs,
        neighbors: &view.comm,
        safety_only: &view.safety_only,
        model: ctx.model,
    };
    solve_fhocp(&problem, Some(&warm), ctx.solver, now)
}

/// Warm start for a solve at time `now`: the plan itself if it is current,
/// otherwise shifted once per elapsed period.
fn warm_start(plan: &HorizonPlan, now: u64, horizon: usize) -> Vec<ControlInput> {
    let mut inputs = plan.inputs.clone();
    if inputs.len() != horizon {
        return vec![ControlInput::zero(); horizon];
    }
    for _ in plan.stamp..now {
        inputs = shift_warm_start(&inputs);
    }
    inputs
}

/// Sum of all agents' horizon objectives for the current plans.
pub fn global_cost(states: &[AgentState], plans: &[HorizonPlan], refs: &[Vec<Vec3>], ctx: &SwarmContext, now: u64) -> Result<f64> {
    let mut total = 0.0;
    for (i, state) in states.iter().enumerate() {
        let view = neighbor_view(i, plans, ctx, now);
        let inputs = warm_start(&plans[i], now, ctx.solver.horizon);
        total += local_objective(ctx.model, state, &inputs, &refs[i], &view)?;
    }
    Ok(total)
}

fn plan_delta(old: &HorizonPlan, new: &HorizonPlan, now: u64, ts: f64) -> f64 {
    let before = old.predicted_positions(now, new.states.len(), ts);
    before
        .iter()
        .zip(&new.states)
        .map(|(a, b)| (a - b.position).norm())
        .fold(0.0, f64::max)
}

/// Outcome of a single sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub max_plan_delta: f64,
    pub solves: Vec<SolveDiagnostics>,
    pub failed_agents: Vec<usize>,
    /// Set when an agent's solve errored; later agents were not updated.
    pub aborted: bool,
}

/// One block-coordinate sweep over all agents, updating `plans` in place.
///
/// A solver error stops the sweep; already-updated plans are kept.
pub fn bcd_sweep(states: &[AgentState], plans: &mut [HorizonPlan], refs: &[Vec<Vec3>], ctx: &SwarmContext, now: u64) -> Result<SweepOutcome> {
    let n = ctx.topology.n_agents();
    if states.len() != n || plans.len() != n || refs.len() != n {
        return Err(Error::LengthMismatch {
            what: "per-agent inputs to sweep",
            expected: n,
            got: states.len().min(plans.len()).min(refs.len()),
        });
    }
    let ts = ctx.model.params.ts;
    let mut out = SweepOutcome {
        max_plan_delta: 0.0,
        solves: Vec::with_capacity(n),
        failed_agents: Vec::new(),
        aborted: false,
    };
    match ctx.swarm.coordination {
        Coordination::GaussSeidel => {
            for i in 0..n {
                match solve_agent(i, &states[i], plans, &refs[i], ctx, now) {
                    Ok((plan, diag)) => {
                        out.max_plan_delta = out.max_plan_delta.max(plan_delta(&plans[i], &plan, now, ts));
                        plans[i] = plan;
                        out.solves.push(diag);
                    }
                    Err(e) => {
                        log::warn!("agent {i} solve failed at step {now}: {e}");
                        out.failed_agents.push(i);
                        out.aborted = true;
                        break;
                    }
                }
            }
        }
        Coordination::Jacobi => {
            let snapshot: Vec<HorizonPlan> = plans.to_vec();
            let results: Vec<_> = (0..n)
                .into_par_iter()
                .map(|i| solve_agent(i, &states[i], &snapshot, &refs[i], ctx, now))
                .collect();
            for (i, r) in results.into_iter().enumerate() {
                match r {
                    Ok((plan, diag)) => {
                        out.max_plan_delta = out.max_plan_delta.max(plan_delta(&snapshot[i], &plan, now, ts));
                        plans[i] = plan;
                        out.solves.push(diag);
                    }
                    Err(e) => {
                        log::warn!("agent {i} solve failed at step {now}: {e}");
                        out.failed_agents.push(i);
                        out.aborted = true;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Run the configured sweeps for the current period without advancing time.
pub fn coordinate(sim: &mut SwarmState, refs: &[Vec<Vec3>], ctx: &SwarmContext) -> Result<RoundReport> {
    let now = sim.time_index;
    let before = global_cost(&sim.agents, &sim.plans, refs, ctx, now)?;
    let mut report = RoundReport {
        sweep_count: 0,
        global_cost_before: before,
        global_cost_after: before,
        max_plan_delta: 0.0,
        sweep_deltas: Vec::new(),
        contraction_ratio_estimate: None,
        solves: Vec::new(),
        failed_agents: Vec::new(),
    };
    for _ in 0..ctx.swarm.sweeps_per_step {
        let sweep = bcd_sweep(&sim.agents, &mut sim.plans, refs, ctx, now)?;
        report.sweep_count += 1;
        report.sweep_deltas.push(sweep.max_plan_delta);
        report.max_plan_delta = sweep.max_plan_delta;
        report.solves.extend(sweep.solves);
        report.failed_agents.extend(sweep.failed_agents);
        if sweep.aborted {
            break;
        }
    }
    // Agents left unsolved still need a plan stamped at `now`.
    for (i, plan) in sim.plans.iter_mut().enumerate() {
        if plan.stamp != now {
            let inputs = warm_start(plan, now, ctx.solver.horizon);
            *plan = HorizonPlan::from_inputs(&sim.agents[i], inputs, &ctx.model.params, now)?;
        }
    }
    if let [.., a, b] = report.sweep_deltas[..] {
        if a > 0.0 {
            report.contraction_ratio_estimate = Some(b / a);
        }
    }
    report.global_cost_after = global_cost(&sim.agents, &sim.plans, refs, ctx, now)?;
    Ok(report)
}

/// Coordinate, apply every agent's first input, and advance one period.
///
/// `refs[i]` holds agent `i`'s reference positions for times `now + 1 ..= now + N`.
pub fn receding_horizon_step(sim: &mut SwarmState, refs: &[Vec<Vec3>], ctx: &SwarmContext) -> Result<(RoundReport, Vec<ControlInput>)> {
    let report = coordinate(sim, refs, ctx)?;
    let applied: Vec<ControlInput> = sim
        .plans
        .iter()
        .map(|p| p.inputs.first().copied().unwrap_or_else(ControlInput::zero))
        .collect();
    for (agent, u) in sim.agents.iter_mut().zip(&applied) {
        *agent = step(agent, u, &ctx.model.params)?;
    }
    sim.time_index += 1;
    Ok((report, applied))
}

/// Sufficient contraction test `w_comm * L / lambda_min(Q) < 1`.
pub fn check_contraction(weights: &CostWeights, l_hat: f64) -> (f64, bool) {
    if weights.w_comm == 0.0 {
        return (0.0, true);
    }
    // L_hat is in bit/s/m^2; the cost sees capacity in `capacity_unit_bps`.
    let ratio = weights.w_comm * (l_hat / weights.capacity_unit_bps) / weights.q_min_eigenvalue();
    (ratio, ratio < 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::LinkBudget;
    use crate::dynamics::DynamicsParams;
    use crate::surrogate::SmoothingConfig;

    fn ctx_parts(weights: CostWeights) -> (SwarmTopology, CostModel, SolverConfig, SwarmConfig) {
        (
            SwarmTopology::ring(3),
            CostModel::new(weights, LinkBudget::default(), SmoothingConfig::default(), DynamicsParams::default()),
            SolverConfig::default(),
            SwarmConfig::default(),
        )
    }

    #[test]
    fn ring_topology() {
        let t = SwarmTopology::ring(3);
        assert_eq!(t.neighbors(0), &[1]);
        assert_eq!(t.neighbors(2), &[0]);
        assert_eq!(t.safety_neighbors(0), &[1, 2]);
        assert_eq!(t.links(), vec![(0, 1), (1, 2), (2, 0)]);
        assert!(SwarmTopology::ring(1).neighbors(0).is_empty());
        assert!(SwarmTopology::new(vec![vec![0]]).is_err());
        assert!(SwarmTopology::new(vec![vec![1, 1], vec![]]).is_err());
    }

    #[test]
    fn contraction_arithmetic() {
        let w = CostWeights {
            capacity_unit_bps: 1.0,
            ..CostWeights::default()
        };
        assert_eq!(check_contraction(&w, 1.5), (0.75, true));
        let (r, s) = check_contraction(&w, 4.0);
        assert_eq!(r, 2.0);
        assert!(!s);
        assert_eq!(check_contraction(&w.without_comm(), 1e9), (0.0, true));
    }

    #[test]
    fn fixed_point_sweep_leaves_plans() {
        let (topo, model, solver, swarm) = ctx_parts(CostWeights {
            w_comm: 0.0,
            w_safe: 0.0,
            ..CostWeights::default()
        });
        let ctx = SwarmContext {
            topology: &topo,
            model: &model,
            solver: &solver,
            swarm: &swarm,
        };
        let agents: Vec<AgentState> = (0..3).map(|i| AgentState::at_rest(Vec3::new(10.0 * i as f64, 0.0, 10.0))).collect();
        let refs: Vec<Vec<Vec3>> = agents.iter().map(|a| vec![a.position; 15]).collect();
        let mut sim = SwarmState::cold_start(agents, &ctx).unwrap();
        let before = sim.plans.clone();
        let report = coordinate(&mut sim, &refs, &ctx).unwrap();
        assert_eq!(report.sweep_count, 1);
        assert!(report.max_plan_delta < solver.step_tol);
        assert_eq!(sim.plans, before);
    }

    #[test]
    fn single_agent_swarm() {
        let (_, model, solver, swarm) = ctx_parts(CostWeights::default());
        let topo = SwarmTopology::ring(1);
        let ctx = SwarmContext {
            topology: &topo,
            model: &model,
            solver: &solver,
            swarm: &swarm,
        };
        let a = AgentState::at_rest(Vec3::new(0.0, 0.0, 10.0));
        let mut sim = SwarmState::cold_start(vec![a], &ctx).unwrap();
        let refs = vec![vec![Vec3::new(1.0, 0.0, 10.0); 15]];
        let (report, applied) = receding_horizon_step(&mut sim, &refs, &ctx).unwrap();
        assert_eq!(report.solves.len(), 1);
        assert!(applied[0].accel.x > 0.0);
        assert_eq!(sim.time_index, 1);
    }

    #[test]
    fn gauss_seidel_is_deterministic_and_monotone() {
        let (topo, model, solver, _) = ctx_parts(CostWeights::default());
        let swarm = SwarmConfig {
            sweeps_per_step: 2,
            ..SwarmConfig::default()
        };
        let ctx = SwarmContext {
            topology: &topo,
            model: &model,
            solver: &solver,
            swarm: &swarm,
        };
        let agents: Vec<AgentState> = (0..3)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / 3.0;
                AgentState::new(Vec3::new(20.0 * a.cos(), 20.0 * a.sin(), 10.0), Vec3::zeros(), a + 2.0)
            })
            .collect();
        let refs: Vec<Vec<Vec3>> = agents.iter().map(|a| vec![a.position * 0.95; 15]).collect();
        let run = || {
            let mut sim = SwarmState::cold_start(agents.clone(), &ctx).unwrap();
            let mut reports = Vec::new();
            for _ in 0..3 {
                let refs_now = refs.clone();
                reports.push(receding_horizon_step(&mut sim, &refs_now, &ctx).unwrap().0);
            }
            (sim, reports)
        };
        let (a, ra) = run();
        let (b, _) = run();
        assert_eq!(a, b);
        for r in &ra {
            assert!(r.solves.iter().all(|d| d.objective <= d.initial_objective));
            for u in a.plans.iter().flat_map(|p| &p.inputs) {
                assert!(u.accel.iter().all(|v| v.abs() <= 4.0) && u.yaw_rate.abs() <= 1.5);
            }
        }
    }
}
