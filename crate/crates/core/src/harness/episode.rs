use serde::Serialize;

use super::ControllerKind;
use crate::baselines::{evaluate_actual, evaluate_ele, evaluate_ideal, evaluate_omni, kinematic_model, pid_step};
use crate::dynamics::{min_pairwise_distance, step, AgentState, ControlInput};
use crate::scenario::{antipodal_scenario, ScenarioConfig};
use crate::swarm::{receding_horizon_step, SwarmContext, SwarmState, SwarmTopology};
use crate::Result;

/// Closed-loop simulations; Ideal, Ele and Std share the kinematic one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Joint,
    Kinematic,
    Pid,
}

/// One local solve, reduced to what the metrics need.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolveSummary {
    pub agent: usize,
    pub converged: bool,
    pub iterations: usize,
    pub wall_ms: f64,
    pub barrier_capped: bool,
}

/// States and inputs of one closed-loop run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    /// `states[t]` is the swarm at time `t * ts`, before `inputs[t]` is applied.
    pub states: Vec<Vec<AgentState>>,
    pub inputs: Vec<Vec<ControlInput>>,
    pub solves: Vec<Vec<SolveSummary>>,
    /// Local solves that returned an error (plan kept from the previous step).
    pub solver_errors: usize,
}

/// Run one closed loop for realization `realization` of `cfg.seed`.
pub fn simulate(cfg: &ScenarioConfig, kind: TrajectoryKind, realization: u64) -> Result<Trajectory> {
    cfg.validate()?;
    let scenario = antipodal_scenario(&cfg.scenario, cfg.seed, realization)?;
    let n_steps = cfg.steps();
    let ts = cfg.dynamics.ts;
    let mut out = Trajectory {
        kind,
        states: Vec::with_capacity(n_steps),
        inputs: Vec::with_capacity(n_steps),
        solves: Vec::with_capacity(n_steps),
        solver_errors: 0,
    };
    if kind == TrajectoryKind::Pid {
        let mut agents = scenario.initial_states.clone();
        for t in 0..n_steps {
            let refs: Vec<_> = (0..agents.len()).map(|i| scenario.reference(i, t as f64 * ts)).collect();
            let u = pid_step(&agents, &refs, &cfg.pid, &cfg.dynamics)?;
            out.states.push(agents.clone());
            agents = agents.iter().zip(&u).map(|(a, u)| step(a, u, &cfg.dynamics)).collect::<Result<_>>()?;
            out.inputs.push(u);
            out.solves.push(Vec::new());
        }
        return Ok(out);
    }

    let topology = SwarmTopology::ring(cfg.scenario.n_agents);
    let joint = cfg.cost_model()?;
    let model = match kind {
        TrajectoryKind::Joint => joint,
        _ => kinematic_model(&joint),
    };
    let ctx = SwarmContext {
        topology: &topology,
        model: &model,
        solver: &cfg.solver,
        swarm: &cfg.swarm,
    };
    let mut sim = SwarmState::cold_start(scenario.initial_states.clone(), &ctx)?;
    for t in 0..n_steps {
        let refs: Vec<_> = (0..sim.agents.len())
            .map(|i| scenario.reference_window(i, t as u64, cfg.solver.horizon, ts))
            .collect();
        out.states.push(sim.agents.clone());
        let (report, applied) = receding_horizon_step(&mut sim, &refs, &ctx)?;
        out.solver_errors += report.failed_agents.len();
        let n = sim.agents.len();
        out.solves.push(
            report
                .solves
                .iter()
                .enumerate()
                .map(|(k, d)| SolveSummary {
                    agent: k % n,
                    converged: d.converged,
                    iterations: d.iterations,
                    wall_ms: d.wall_time.as_secs_f64() * 1e3,
                    barrier_capped: d.barrier_capped,
                })
                .collect(),
        );
        out.inputs.push(applied);
    }
    Ok(out)
}

/// Per-step quantities of an episode as seen by one controller.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time_s: f64,
    pub states: Vec<AgentState>,
    pub inputs: Vec<ControlInput>,
    /// Per link, in `EpisodeRecord::links` order (bit/s).
    pub capacity: Vec<f64>,
    /// Per link `|wrap(psi_LoS - yaw)|` (rad); `None` for omnidirectional controllers.
    pub misalignment: Option<Vec<f64>>,
    pub min_distance: f64,
    pub solves: Vec<SolveSummary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub controller: ControllerKind,
    pub seed: u64,
    pub realization: u64,
    pub config_hash: String,
    pub links: Vec<(usize, usize)>,
    pub steps: Vec<StepRecord>,
    pub solver_errors: usize,
}

impl EpisodeRecord {
    /// Smallest pairwise distance over the whole episode (m).
    pub fn global_min_distance(&self) -> f64 {
        self.steps.iter().map(|s| s.min_distance).fold(f64::INFINITY, f64::min)
    }
}

/// Evaluate `traj` with `controller`'s antenna model.
pub fn record_from_trajectory(
    traj: &Trajectory,
    controller: ControllerKind,
    cfg: &ScenarioConfig,
    realization: u64,
    config_hash: &str,
) -> Result<EpisodeRecord> {
    debug_assert_eq!(traj.kind, controller.trajectory_kind());
    let topology = SwarmTopology::ring(cfg.scenario.n_agents);
    let budget = cfg.link_budget()?;
    let (capacity, misalignment) = match controller {
        ControllerKind::Joint => {
            let e = evaluate_actual(&traj.states, &topology, &budget)?;
            (e.capacity, Some(e.misalignment))
        }
        ControllerKind::Ideal => {
            let c = evaluate_ideal(&traj.states, &topology, &budget)?;
            let zeros = c.iter().map(|row| vec![0.0; row.len()]).collect();
            (c, Some(zeros))
        }
        ControllerKind::Ele => {
            let e = evaluate_ele(&traj.states, &topology, &budget)?;
            (e.capacity, Some(e.misalignment))
        }
        ControllerKind::Std | ControllerKind::Pid => (evaluate_omni(&traj.states, &topology, &budget)?, None),
    };
    let mut misalignment = misalignment.map(|m| m.into_iter());
    let steps = traj
        .states
        .iter()
        .zip(&traj.inputs)
        .zip(&traj.solves)
        .zip(capacity)
        .enumerate()
        .map(|(t, (((states, inputs), solves), capacity))| {
            Ok(StepRecord {
                step: t,
                time_s: t as f64 * cfg.dynamics.ts,
                states: states.clone(),
                inputs: inputs.clone(),
                capacity,
                misalignment: misalignment.as_mut().and_then(|m| m.next()),
                min_distance: min_pairwise_distance(states)?,
                solves: solves.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EpisodeRecord {
        controller,
        seed: cfg.seed,
        realization,
        config_hash: config_hash.to_string(),
        links: topology.links(),
        steps,
        solver_errors: traj.solver_errors,
    })
}

/// Simulate and evaluate one controller on one realization.
pub fn run_episode(cfg: &ScenarioConfig, controller: ControllerKind, realization: u64) -> Result<EpisodeRecord> {
    let traj = simulate(cfg, controller.trajectory_kind(), realization)?;
    record_from_trajectory(&traj, controller, cfg, realization, &cfg.hash()?)
}
