//! Joint trajectory and heading model-predictive control for UAV swarms that
//! communicate over directional millimetre-wave links.
//!
//! The crate is organised bottom-up:
//!
//! * [`dynamics`]: discrete double integrator with yaw, actuation limits.
//! * [`channel`]: two-ray ground-reflection channel and its gradient.
//! * [`beam`]: Gaussian main-lobe proxy, electronic steering, scan loss.
//! * [`surrogate`]: 7-point spatial smoothing and the smoothed capacity
//!   surrogate with its analytic gradient.
//! * [`cost`]: per-agent stage cost and horizon cost with adjoint gradient.
//! * [`solver`]: projected quasi-Newton SQP over the input box.
//! * [`swarm`]: Gauss-Seidel block-coordinate sweeps and receding-horizon
//!   execution.
//! * [`baselines`]: comparison controllers and antenna evaluations.
//! * [`scenario`]: Akima references, the antipodal crossing and config files.
//! * [`harness`]: episodes, Monte Carlo, metrics, theory checks and outputs.

pub mod baselines;
pub mod beam;
pub mod channel;
pub mod cost;
pub mod dynamics;
mod error;
pub mod harness;
pub mod scenario;
pub mod solver;
pub mod surrogate;
pub mod swarm;

pub use error::{Error, Result};

/// Cartesian vector in the world frame: x east, y north, z up (metres).
pub type Vec3 = nalgebra::Vector3<f64>;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = angle.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}
