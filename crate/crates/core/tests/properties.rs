//! Property tests of the model invariants, one block per module.

use beamswarm::baselines::{evaluate_ele, evaluate_ideal, evaluate_omni, pid_step, velocity_aligned_yaws, PidGains};
use beamswarm::beam::los_azimuth;
use beamswarm::channel::{channel_gain, channel_power, link_geometry, LinkBudget};
use beamswarm::cost::{safety_cost, tracking_cost, CostWeights};
use beamswarm::dynamics::{clamp_input, rollout, step, AgentState, ControlInput, DynamicsParams};
use beamswarm::harness::{compute_metrics, ControllerKind, EpisodeRecord, SolveSummary, StepRecord};
use beamswarm::scenario::{Akima1d, ScenarioConfig};
use beamswarm::solver::{solve_fhocp, LocalProblem, SolverConfig};
use beamswarm::surrogate::{smooth_field, smoothed_raw_capacity, surrogate_cost, SmoothingConfig};
use beamswarm::swarm::SwarmTopology;
use beamswarm::{wrap_angle, Vec3};
use proptest::prelude::*;

fn vec3(lo: f64, hi: f64) -> impl Strategy<Value = Vec3> {
    (lo..hi, lo..hi, lo..hi).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

/// Position above ground inside a 60 m box.
fn airborne() -> impl Strategy<Value = Vec3> {
    (-30.0..30.0, -30.0..30.0, 1.0..30.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

/// Two airborne positions at least `gap` apart horizontally.
fn link_pair(gap: f64) -> impl Strategy<Value = (Vec3, Vec3)> {
    (airborne(), airborne()).prop_filter("horizontal gap", move |(a, b)| (a.xy() - b.xy()).norm() > gap)
}

fn input() -> impl Strategy<Value = ControlInput> {
    (vec3(-4.0, 4.0), -1.5..1.5f64).prop_map(|(a, w)| ControlInput::new(a, w))
}

// dynamics

proptest! {
    #[test]
    fn constant_input_matches_closed_form(p0 in vec3(-50.0, 50.0), v0 in vec3(-5.0, 5.0), u in input(), k in 1usize..200) {
        let params = DynamicsParams::default();
        let states = rollout(&AgentState::new(p0, v0, 0.0), &vec![u; k], &params).unwrap();
        let t = k as f64 * params.ts;
        let p = p0 + v0 * t + u.accel * (0.5 * t * t);
        let last = states.last().unwrap();
        prop_assert_eq!(states.len(), k);
        prop_assert!((last.position - p).norm() <= 1e-10 * p.norm().max(1.0));
        prop_assert!((last.velocity - (v0 + u.accel * t)).norm() <= 1e-10 * (v0 + u.accel * t).norm().max(1.0));
    }

    #[test]
    fn clamp_is_a_projection(a in vec3(-20.0, 20.0), w in -10.0..10.0f64) {
        let params = DynamicsParams::default();
        let raw = ControlInput::new(a, w);
        let c = clamp_input(&raw, &params);
        prop_assert_eq!(clamp_input(&c, &params), c);
        for (x, y) in c.to_array().iter().zip(raw.to_array()) {
            prop_assert!(x.abs() <= y.abs());
        }
        prop_assert!(c.accel.amax() <= params.a_max && c.yaw_rate.abs() <= params.omega_max);
    }

    #[test]
    fn yaw_stays_in_half_open_interval(yaw in -3.14..3.14f64, rates in proptest::collection::vec(-1.5..1.5f64, 1..300)) {
        let params = DynamicsParams::default();
        let mut s = AgentState::new(Vec3::new(0.0, 0.0, 10.0), Vec3::zeros(), yaw);
        for w in rates {
            s = step(&s, &ControlInput::new(Vec3::zeros(), w), &params).unwrap();
            prop_assert!(s.yaw > -std::f64::consts::PI && s.yaw <= std::f64::consts::PI);
        }
    }
}

// channel

proptest! {
    #[test]
    fn free_space_gain_is_inverse_distance((pi, pj) in link_pair(0.1)) {
        let budget = LinkBudget::default().with_gamma(0.0);
        let h = channel_gain(&pi, &pj, &budget).unwrap();
        let d = (pi - pj).norm();
        prop_assert!((h.norm() * d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflected_path_is_longer((pi, pj) in link_pair(0.0)) {
        let g = link_geometry(&pi, &pj).unwrap();
        prop_assert!(g.d_ref >= g.d_los && g.d_los > 0.0);
        prop_assert!(g.grazing_angle > 0.0 && g.grazing_angle < std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn two_ray_power_below_coherent_sum((pi, pj) in link_pair(0.1)) {
        let budget = LinkBudget::default();
        let g = link_geometry(&pi, &pj).unwrap();
        let bound = (1.0 / g.d_los + 1.0 / g.d_ref).powi(2);
        prop_assert!(channel_power(&pi, &pj, &budget).unwrap() <= bound * (1.0 + 1e-12));
    }
}

// surrogate

proptest! {
    #[test]
    fn stencil_is_exact_on_affine_fields(p in vec3(-50.0, 50.0), k in vec3(-3.0, 3.0), c in -10.0..10.0f64, eps in 1e-3..0.5f64) {
        let cfg = SmoothingConfig::new(eps).unwrap();
        let mean = smooth_field(|q| Ok(k.dot(q) + c), &p, &cfg).unwrap();
        let exact = k.dot(&p) + c;
        prop_assert!((mean - exact).abs() <= 1e-12 * (1.0 + k.norm() * p.norm() + c.abs()));
    }

    #[test]
    fn surrogate_dominates_mean_raw_capacity((pi, pj) in link_pair(1.0), yaw in -3.14..3.14f64, eps in 1e-3..0.3f64) {
        let budget = LinkBudget::default();
        let cfg = SmoothingConfig::new(eps).unwrap();
        let agent = AgentState::new(pi, Vec3::zeros(), yaw);
        let surr = surrogate_cost(&agent, &[pj], &budget, &cfg).unwrap();
        let mean_raw = smoothed_raw_capacity(&pi, yaw, &pj, &budget, &cfg).unwrap();
        prop_assert!(surr >= mean_raw * (1.0 - 1e-12) - 1e-280, "{} < {}", surr, mean_raw);
    }
}

// cost

proptest! {
    #[test]
    fn stage_cost_is_sum_of_independent_parts(
        (pi, pj) in link_pair(4.0),
        yaw in -3.14..3.14f64,
        r in vec3(-30.0, 30.0),
        u in input(),
    ) {
        let model = ScenarioConfig::default().cost_model().unwrap();
        let agent = AgentState::new(pi, Vec3::zeros(), yaw);
        let parts = model.stage_cost(&agent, &u, &r, &[pj]).unwrap();
        let w = &model.weights;
        let track = tracking_cost(&agent, &r, &u, w);
        let safety = safety_cost(&pi, &[pj], w, model.params.d_min).value;
        let comm = -w.w_comm * surrogate_cost(&agent, &[pj], &model.budget, &model.smoothing).unwrap() / w.capacity_unit_bps;
        let expect = track + safety + comm;
        prop_assert!((parts.tracking + parts.regularization - track).abs() <= 1e-12 * track.max(1.0));
        prop_assert!((parts.safety - safety).abs() <= 1e-12 * safety.max(1.0));
        prop_assert!((parts.comm - comm).abs() <= 1e-12 * comm.abs().max(1.0));
        prop_assert!((parts.total() - expect).abs() <= 1e-10 * expect.abs().max(1.0));
    }

    #[test]
    fn barrier_rises_as_agents_close(dir in vec3(-1.0, 1.0), d1 in 0.0..20.0f64, d2 in 0.0..20.0f64) {
        prop_assume!(dir.norm() > 1e-3 && d1 != d2);
        let w = CostWeights::default();
        let unit = dir.normalize();
        let (near, far) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        let at = |d: f64| safety_cost(&(unit * d), &[Vec3::zeros()], &w, 3.5).value;
        prop_assert!(at(near) >= at(far));
        if near > 0.0 {
            // the gradient always points toward larger separation
            let g = safety_cost(&(unit * near), &[Vec3::zeros()], &w, 3.5).grad;
            prop_assert!(g.dot(&unit) < 0.0);
        }
    }
}

// solver

fn solver_case() -> impl Strategy<Value = (AgentState, Vec<Vec3>, Vec3, Vec<ControlInput>)> {
    (vec3(-30.0, 30.0).prop_map(|p| Vec3::new(p.x, p.y, 20.0 + 0.3 * p.z)), vec3(-3.0, 3.0), -3.14..3.14f64, vec3(-5.0, 5.0), 0.0..std::f64::consts::TAU, 5.0..25.0f64, proptest::collection::vec(input(), 6))
        .prop_map(|(p, v, yaw, drift, bearing, range, warm)| {
            let x0 = AgentState::new(p, v, yaw);
            let refs = (1..=6).map(|k| p + drift * (k as f64 / 6.0)).collect();
            let pj = p + Vec3::new(range * bearing.cos(), range * bearing.sin(), 0.0);
            (x0, refs, pj, warm)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solves_are_feasible_monotone_and_deterministic((x0, refs, pj, warm) in solver_case()) {
        let model = ScenarioConfig::default().cost_model().unwrap();
        let neighbors = vec![vec![pj; refs.len()]];
        let problem = LocalProblem { x0, refs: &refs, neighbors: &neighbors, safety_only: &[], model: &model };
        let cfg = SolverConfig { horizon: refs.len(), ..SolverConfig::default() };
        let (plan, diag) = solve_fhocp(&problem, Some(&warm), &cfg, 0).unwrap();
        let start = model.horizon_cost(&x0, &warm.iter().map(|u| clamp_input(u, &model.params)).collect::<Vec<_>>(), &refs, &neighbors).unwrap();
        prop_assert!(diag.objective <= start);
        prop_assert!(diag.objective <= diag.initial_objective);
        for u in &plan.inputs {
            prop_assert!(u.accel.amax() <= model.params.a_max && u.yaw_rate.abs() <= model.params.omega_max);
        }
        let (again, diag2) = solve_fhocp(&problem, Some(&warm), &cfg, 0).unwrap();
        prop_assert_eq!(plan.inputs, again.inputs);
        prop_assert_eq!(diag.objective.to_bits(), diag2.objective.to_bits());
    }
}

// baselines

fn random_trajectory() -> impl Strategy<Value = Vec<Vec<AgentState>>> {
    proptest::collection::vec(proptest::collection::vec((airborne(), vec3(-3.0, 3.0), -3.14..3.14f64), 3), 2..12).prop_map(|steps| {
        steps
            .into_iter()
            .map(|agents| agents.into_iter().map(|(p, v, y)| AgentState::new(p, v, y)).collect())
            .collect()
    })
}

fn separated(traj: &[Vec<AgentState>]) -> bool {
    traj.iter().all(|s| {
        (0..s.len()).all(|i| (0..i).all(|j| (s[i].position.xy() - s[j].position.xy()).norm() > 0.5))
    })
}

proptest! {
    #[test]
    fn ideal_dominates_ele(traj in random_trajectory().prop_filter("separated", |t| separated(t))) {
        let (topo, budget) = (SwarmTopology::ring(3), LinkBudget::default());
        let ideal = evaluate_ideal(&traj, &topo, &budget).unwrap();
        let ele = evaluate_ele(&traj, &topo, &budget).unwrap();
        for (a, b) in ideal.iter().flatten().zip(ele.capacity.iter().flatten()) {
            prop_assert!(*a >= *b && *b >= 0.0);
        }
    }

    #[test]
    fn ele_misalignment_is_velocity_to_los_angle(traj in random_trajectory().prop_filter("separated", |t| separated(t))) {
        let (topo, budget) = (SwarmTopology::ring(3), LinkBudget::default());
        let ele = evaluate_ele(&traj, &topo, &budget).unwrap();
        let yaws = velocity_aligned_yaws(&traj);
        for (t, states) in traj.iter().enumerate() {
            for (l, &(i, j)) in topo.links().iter().enumerate() {
                let los = los_azimuth(&states[i].position, &states[j].position).unwrap();
                prop_assert_eq!(ele.misalignment[t][l], wrap_angle(los - yaws[t][i]).abs());
                if states[i].velocity.xy().norm() >= 0.1 {
                    let heading = states[i].velocity.y.atan2(states[i].velocity.x);
                    prop_assert_eq!(yaws[t][i], heading);
                }
            }
        }
    }

    #[test]
    fn omni_capacity_ignores_yaw(traj in random_trajectory().prop_filter("separated", |t| separated(t)), spin in -3.0..3.0f64) {
        let (topo, budget) = (SwarmTopology::ring(3), LinkBudget::default());
        let turned: Vec<Vec<AgentState>> = traj
            .iter()
            .map(|s| s.iter().map(|a| AgentState::new(a.position, a.velocity, wrap_angle(a.yaw + spin))).collect())
            .collect();
        prop_assert_eq!(evaluate_omni(&traj, &topo, &budget).unwrap(), evaluate_omni(&turned, &topo, &budget).unwrap());
    }

    #[test]
    fn pid_inputs_inside_box(states in proptest::collection::vec((airborne(), vec3(-10.0, 10.0)), 3), refs in proptest::collection::vec(vec3(-100.0, 100.0), 3)) {
        let params = DynamicsParams::default();
        let agents: Vec<AgentState> = states.iter().map(|(p, v)| AgentState::new(*p, *v, 0.0)).collect();
        for u in pid_step(&agents, &refs, &PidGains::default(), &params).unwrap() {
            prop_assert!(u.accel.amax() <= params.a_max);
            prop_assert_eq!(u.yaw_rate, 0.0);
        }
    }
}

// scenario

proptest! {
    #[test]
    fn akima_is_c1_at_interior_knots(steps in proptest::collection::vec(0.1..3.0f64, 5..12), ys in proptest::collection::vec(-10.0..10.0f64, 12)) {
        let mut x = vec![0.0];
        for s in &steps {
            x.push(x.last().unwrap() + s);
        }
        let y = ys[..x.len()].to_vec();
        let spline = Akima1d::new(x.clone(), y.clone()).unwrap();
        for k in 1..x.len() - 1 {
            // The derivative is quadratic on each segment, so three-point
            // extrapolation recovers the one-sided limits exactly.
            let h = 0.1 * (x[k] - x[k - 1]).min(x[k + 1] - x[k]);
            let d = |t: f64| spline.eval_with_derivative(t).1;
            let left = 3.0 * d(x[k] - h) - 3.0 * d(x[k] - 2.0 * h) + d(x[k] - 3.0 * h);
            let right = 3.0 * d(x[k] + h) - 3.0 * d(x[k] + 2.0 * h) + d(x[k] + 3.0 * h);
            let scale = x.windows(2).zip(y.windows(2)).map(|(a, b)| ((b[1] - b[0]) / (a[1] - a[0])).abs()).fold(1.0, f64::max);
            prop_assert!((left - right).abs() <= 1e-9 * scale, "knot {}: {} vs {}", k, left, right);
            prop_assert!((spline.eval(x[k]) - y[k]).abs() <= 1e-12 * y[k].abs().max(1.0));
        }
    }

    #[test]
    fn config_round_trips(seed in any::<u64>(), eps in 1e-3..0.5f64, w_comm in 0.0..10.0f64, iters in 1usize..500) {
        let mut cfg = ScenarioConfig::default();
        cfg.seed = seed;
        cfg.smoothing = SmoothingConfig::new(eps).unwrap();
        cfg.weights.w_comm = w_comm;
        cfg.solver.max_iters = iters;
        let text = cfg.to_toml_string().unwrap();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }
}

// harness

fn synthetic_record(realization: u64, caps: &[f64], dmins: &[f64], misalign: f64) -> EpisodeRecord {
    EpisodeRecord {
        controller: ControllerKind::Joint,
        seed: 0,
        realization,
        config_hash: String::new(),
        links: vec![(0, 1)],
        steps: caps
            .iter()
            .zip(dmins)
            .enumerate()
            .map(|(k, (&c, &d))| StepRecord {
                step: k,
                time_s: k as f64 * 0.1,
                states: vec![AgentState::at_rest(Vec3::new(0.0, 0.0, 10.0)); 2],
                inputs: vec![ControlInput::new(Vec3::new(c / 1e10, 0.0, 0.0), 0.0); 2],
                capacity: vec![c],
                misalignment: Some(vec![misalign]),
                min_distance: d,
                solves: vec![SolveSummary { agent: 0, converged: k % 3 != 0, iterations: k, wall_ms: 1.0, barrier_capped: false }],
            })
            .collect(),
        solver_errors: 0,
    }
}

fn records() -> impl Strategy<Value = Vec<EpisodeRecord>> {
    proptest::collection::vec(
        (proptest::collection::vec((0.0..5e9f64, 0.5..20.0f64), 1..20), 0.0..1.0f64),
        1..8,
    )
    .prop_map(|eps| {
        eps.into_iter()
            .enumerate()
            .map(|(r, (steps, m))| {
                let (caps, dmins): (Vec<f64>, Vec<f64>) = steps.into_iter().unzip();
                synthetic_record(r as u64, &caps, &dmins, m)
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn metrics_ignore_record_order(recs in records(), shift in 0usize..8) {
        let a = compute_metrics(&recs, 1e9).unwrap();
        let mut shuffled = recs.clone();
        let n = shuffled.len();
        shuffled.rotate_left(shift % n);
        shuffled.reverse();
        let b = compute_metrics(&shuffled, 1e9).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300);
        prop_assert!(close(a.avg_capacity, b.avg_capacity));
        prop_assert!(close(a.min_dist_avg, b.min_dist_avg));
        prop_assert!(close(a.min_dist_var, b.min_dist_var) || (a.min_dist_var - b.min_dist_var).abs() < 1e-12);
        prop_assert_eq!(a.min_dist_min, b.min_dist_min);
        prop_assert_eq!(a.outage_prob, b.outage_prob);
        prop_assert_eq!(a.success_rate, b.success_rate);
        prop_assert!(close(a.avg_effort, b.avg_effort));
        prop_assert!((0.0..=1.0).contains(&a.outage_prob));
    }

    #[test]
    fn outage_and_capacity_share_one_series(recs in records()) {
        let m = compute_metrics(&recs, 1e9).unwrap();
        let caps: Vec<f64> = recs.iter().flat_map(|r| r.steps.iter().flat_map(|s| s.capacity.iter().copied())).collect();
        let outage = caps.iter().filter(|&&c| c < 1e9).count() as f64 / caps.len() as f64;
        let mean = caps.iter().sum::<f64>() / caps.len() as f64;
        prop_assert_eq!(m.outage_prob, outage);
        prop_assert!((m.avg_capacity - mean).abs() <= 1e-12 * mean.max(1.0));
    }
}
