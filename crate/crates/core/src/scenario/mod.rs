//! Reference trajectories and the antipodal-crossing scenario.
//!
//! Agents start evenly spaced on a circle, hover, fly straight through the
//! centre to the diametrically opposite point (all crossings meet at the
//! centre), pause, then rotate together around the circle as a formation.

mod akima;
pub mod config;

pub use akima::{Akima1d, AkimaPath, Waypoint};
pub use config::{load_config, ScenarioConfig, SCHEMA_VERSION};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::beam::los_azimuth;
use crate::dynamics::AgentState;
use crate::{Error, Result, Vec3};

/// Geometry and timing of the antipodal crossing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioGeometry {
    pub n_agents: usize,
    /// Episode length (s).
    pub duration_s: f64,
    pub radius_m: f64,
    pub altitude_m: f64,
    /// Standard deviation of the per-realization waypoint jitter (m).
    pub jitter_sigma_m: f64,
    /// Initial hover (s).
    pub hold_s: f64,
    /// Diameter traversal (s).
    pub crossing_s: f64,
    /// Pause at the far side (s).
    pub settle_s: f64,
    /// Formation rotation after the crossing (deg, counter-clockwise).
    pub rotation_deg: f64,
    pub rotation_s: f64,
}

impl Default for ScenarioGeometry {
    fn default() -> Self {
        Self {
            n_agents: 3,
            duration_s: 40.0,
            radius_m: 25.0,
            altitude_m: 10.0,
            jitter_sigma_m: 0.5,
            hold_s: 3.0,
            crossing_s: 10.0,
            settle_s: 2.0,
            rotation_deg: 120.0,
            rotation_s: 15.0,
        }
    }
}

impl ScenarioGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(Error::TooFewAgents {
                needed: 2,
                got: self.n_agents,
            });
        }
        for (name, v) in [
            ("scenario.duration_s", self.duration_s),
            ("scenario.radius_m", self.radius_m),
            ("scenario.altitude_m", self.altitude_m),
            ("scenario.crossing_s", self.crossing_s),
            ("scenario.rotation_s", self.rotation_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("scenario.jitter_sigma_m", self.jitter_sigma_m),
            ("scenario.hold_s", self.hold_s),
            ("scenario.settle_s", self.settle_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        if !self.rotation_deg.is_finite() {
            return Err(Error::invalid("scenario.rotation_deg", "must be finite"));
        }
        Ok(())
    }

    /// Azimuth of agent `i` on the start circle.
    pub fn start_angle(&self, i: usize) -> f64 {
        2.0 * std::f64::consts::PI * i as f64 / self.n_agents as f64
    }

    /// Unjittered waypoints of agent `i`.
    pub fn nominal_waypoints(&self, i: usize) -> Vec<Waypoint> {
        let z = self.altitude_m;
        let on_circle = |angle: f64| Vec3::new(self.radius_m * angle.cos(), self.radius_m * angle.sin(), z);
        let theta = self.start_angle(i);
        let start = on_circle(theta);
        let end = -start + Vec3::new(0.0, 0.0, 2.0 * z);
        let mut wps = vec![Waypoint::new(0.0, start)];
        let mut t = self.hold_s;
        if self.hold_s > 0.0 {
            wps.push(Waypoint::new(t, start));
        }
        for f in [0.25, 0.5, 0.75, 1.0] {
            wps.push(Waypoint::new(t + f * self.crossing_s, start + (end - start) * f));
        }
        t += self.crossing_s;
        if self.settle_s > 0.0 {
            t += self.settle_s;
            wps.push(Waypoint::new(t, end));
        }
        let rot = self.rotation_deg.to_radians();
        let pieces = ((rot.abs() / 30f64.to_radians()).ceil() as usize).max(1);
        let far = theta + std::f64::consts::PI;
        for k in 1..=pieces {
            let f = k as f64 / pieces as f64;
            wps.push(Waypoint::new(t + f * self.rotation_s, on_circle(far + f * rot)));
        }
        t += self.rotation_s;
        if self.duration_s > t {
            let last = wps[wps.len() - 1].position;
            wps.push(Waypoint::new(self.duration_s, last));
        }
        wps
    }
}

/// Reference paths and initial states of one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub waypoints: Vec<Vec<Waypoint>>,
    pub paths: Vec<AkimaPath>,
    pub initial_states: Vec<AgentState>,
}

impl Scenario {
    pub fn n_agents(&self) -> usize {
        self.paths.len()
    }

    pub fn reference(&self, agent: usize, t: f64) -> Vec3 {
        self.paths[agent].position(t)
    }

    /// References for times `(now + 1) ts, ..., (now + horizon) ts`.
    pub fn reference_window(&self, agent: usize, now: u64, horizon: usize, ts: f64) -> Vec<Vec3> {
        (1..=horizon)
            .map(|k| self.reference(agent, (now + k as u64) as f64 * ts))
            .collect()
    }
}

/// Generator for realization `realization` of a run seeded with `seed`.
///
/// Each realization reads its own ChaCha stream, so adding realizations
/// leaves earlier ones unchanged.
pub fn realization_rng(seed: u64, realization: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(realization);
    rng
}

/// Antipodal crossing with seeded waypoint jitter.
///
/// Initial states hover at the first waypoint with the yaw pointing at the
/// agent's ring successor.
pub fn antipodal_scenario(geometry: &ScenarioGeometry, seed: u64, realization: u64) -> Result<Scenario> {
    geometry.validate()?;
    let mut rng = realization_rng(seed, realization);
    let noise = Normal::new(0.0, geometry.jitter_sigma_m).map_err(|e| Error::invalid("scenario.jitter_sigma_m", e.to_string()))?;
    let mut waypoints = Vec::with_capacity(geometry.n_agents);
    for i in 0..geometry.n_agents {
        let mut wps = geometry.nominal_waypoints(i);
        if geometry.jitter_sigma_m > 0.0 {
            for w in &mut wps {
                w.position += Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            }
        }
        waypoints.push(wps);
    }
    let paths = waypoints.iter().map(|w| AkimaPath::new(w)).collect::<Result<Vec<_>>>()?;
    let n = geometry.n_agents;
    let starts: Vec<Vec3> = paths.iter().map(|p| p.position(0.0)).collect();
    let initial_states = (0..n)
        .map(|i| {
            let yaw = los_azimuth(&starts[i], &starts[(i + 1) % n]).unwrap_or(0.0);
            AgentState::new(starts[i], Vec3::zeros(), yaw)
        })
        .collect();
    Ok(Scenario {
        waypoints,
        paths,
        initial_states,
    })
}
