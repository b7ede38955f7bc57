//! Spatially smoothed capacity surrogate.
//!
//! Fields are averaged over a symmetric 7-point stencil around the agent's
//! own position: the centre plus `+-epsilon` along each world axis. Channel
//! power and hybrid gain are smoothed separately and multiplied, and the
//! surrogate capacity of a link is `W log2(1 + snr0 * P_bar * G_bar)`.
//!
//! By concavity of the logarithm this never falls below the stencil mean of
//! the raw capacity. Because stencil offsets are constant, the gradient of a
//! smoothed field is the stencil mean of the raw gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beam::{hybrid_gain, hybrid_gain_with_gradient, link_capacity, los_azimuth};
use crate::channel::{channel_power, channel_power_and_gradient, LinkBudget};
use crate::dynamics::AgentState;
use crate::{wrap_angle, Error, Result, Vec3};

pub const STENCIL_SIZE: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothingConfig {
    /// Stencil radius (m).
    pub epsilon: f64,
    pub stencil_size: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            stencil_size: STENCIL_SIZE,
        }
    }
}

impl SmoothingConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        let cfg = Self {
            epsilon,
            stencil_size: STENCIL_SIZE,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid(
                "smoothing.epsilon",
                format!("must be positive, got {}", self.epsilon),
            ));
        }
        if self.stencil_size != STENCIL_SIZE {
            return Err(Error::invalid("smoothing.stencil_size", "only the 7-point stencil is supported"));
        }
        Ok(())
    }
}

pub fn stencil_offsets(epsilon: f64) -> [Vec3; STENCIL_SIZE] {
    [
        Vec3::zeros(),
        Vec3::new(epsilon, 0.0, 0.0),
        Vec3::new(-epsilon, 0.0, 0.0),
        Vec3::new(0.0, epsilon, 0.0),
        Vec3::new(0.0, -epsilon, 0.0),
        Vec3::new(0.0, 0.0, epsilon),
        Vec3::new(0.0, 0.0, -epsilon),
    ]
}

pub fn stencil_points(p: &Vec3, cfg: &SmoothingConfig) -> [Vec3; STENCIL_SIZE] {
    stencil_offsets(cfg.epsilon).map(|d| p + d)
}

/// Stencil mean of a scalar field.
pub fn smooth_field<F>(mut field: F, p: &Vec3, cfg: &SmoothingConfig) -> Result<f64>
where
    F: FnMut(&Vec3) -> Result<f64>,
{
    let mut acc = 0.0;
    for q in stencil_points(p, cfg) {
        acc += field(&q)?;
    }
    Ok(acc / STENCIL_SIZE as f64)
}

pub fn smoothed_channel_power(pi: &Vec3, pj: &Vec3, budget: &LinkBudget, cfg: &SmoothingConfig) -> Result<f64> {
    smooth_field(|q| channel_power(q, pj, budget), pi, cfg)
}

/// Stencil mean of the hybrid gain toward `pj` with the yaw held fixed.
pub fn smoothed_hybrid_gain(pi: &Vec3, yaw: f64, pj: &Vec3, budget: &LinkBudget, cfg: &SmoothingConfig) -> Result<f64> {
    smooth_field(
        |q| Ok(hybrid_gain(wrap_angle(los_azimuth(q, pj)? - yaw), budget)),
        pi,
        cfg,
    )
}

/// Smoothed quantities of one link and the resulting surrogate capacity.
///
/// `snr_bar` is the stencil mean of the SNR itself. `p_bar` and `g_eps` are
/// the separately smoothed factors; their product matches `snr_bar / snr0`
/// whenever the gain is nearly constant across the stencil, i.e. inside the
/// field of view, but underestimates it in the Gaussian tail where the two
/// factors are correlated over the stencil.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothedLink {
    pub p_bar: f64,
    pub g_eps: f64,
    pub snr_bar: f64,
    /// bit/s
    pub surrogate_capacity: f64,
}

impl SmoothedLink {
    /// `snr0 * p_bar * g_eps`.
    pub fn decoupled_snr(&self, budget: &LinkBudget) -> f64 {
        budget.snr0 * self.p_bar * self.g_eps
    }
}

pub fn smoothed_snr(pi: &Vec3, yaw: f64, pj: &Vec3, budget: &LinkBudget, cfg: &SmoothingConfig) -> Result<SmoothedLink> {
    let (mut p_bar, mut g_eps, mut snr_sum) = (0.0, 0.0, 0.0);
    for q in stencil_points(pi, cfg) {
        let p = channel_power(&q, pj, budget)?;
        let g = hybrid_gain(wrap_angle(los_azimuth(&q, pj)? - yaw), budget);
        p_bar += p;
        g_eps += g;
        snr_sum += budget.snr0 * p * g;
    }
    let m = STENCIL_SIZE as f64;
    let snr_bar = snr_sum / m;
    Ok(SmoothedLink {
        p_bar: p_bar / m,
        g_eps: g_eps / m,
        snr_bar,
        surrogate_capacity: link_capacity(snr_bar, budget)?,
    })
}

/// Link built from already-smoothed factors under the decoupling `snr_bar = snr0 p_bar g_eps`.
pub fn link_from_factors(p_bar: f64, g_eps: f64, budget: &LinkBudget) -> Result<SmoothedLink> {
    let snr_bar = budget.snr0 * p_bar * g_eps;
    Ok(SmoothedLink {
        p_bar,
        g_eps,
        snr_bar,
        surrogate_capacity: link_capacity(snr_bar, budget)?,
    })
}

/// Stencil mean of the raw capacity `W log2(1 + snr0 |h|^2 G_hyb)`.
pub fn smoothed_raw_capacity(pi: &Vec3, yaw: f64, pj: &Vec3, budget: &LinkBudget, cfg: &SmoothingConfig) -> Result<f64> {
    smooth_field(|q| raw_capacity(q, yaw, pj, budget), pi, cfg)
}

/// Instantaneous capacity of one link with the actual hybrid gain.
pub fn raw_capacity(pi: &Vec3, yaw: f64, pj: &Vec3, budget: &LinkBudget) -> Result<f64> {
    let p = channel_power(pi, pj, budget)?;
    let g = hybrid_gain(wrap_angle(los_azimuth(pi, pj)? - yaw), budget);
    link_capacity(budget.snr0 * p * g, budget)
}

/// Sum of surrogate capacities over the neighbour links (bit/s).
pub fn surrogate_cost(agent: &AgentState, neighbors: &[Vec3], budget: &LinkBudget, cfg: &SmoothingConfig) -> Result<f64> {
    if neighbors.is_empty() {
        log::warn!("surrogate cost requested with an empty neighbour set");
        return Ok(0.0);
    }
    let mut total = 0.0;
    for pj in neighbors {
        total += smoothed_snr(&agent.position, agent.yaw, pj, budget, cfg)?.surrogate_capacity;
    }
    Ok(total)
}

/// Gradient of [`surrogate_cost`] with respect to the agent's own position
/// (bit/s/m) and yaw (bit/s/rad).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateGradient {
    pub grad_p: Vec3,
    pub grad_yaw: f64,
}

pub fn regularized_gradient(
    agent: &AgentState,
    neighbors: &[Vec3],
    budget: &LinkBudget,
    cfg: &SmoothingConfig,
) -> Result<SurrogateGradient> {
    Ok(surrogate_with_gradient(&agent.position, agent.yaw, neighbors, budget, cfg)?.1)
}

/// Surrogate value and gradient in one pass over the stencil.
pub fn surrogate_with_gradient(
    position: &Vec3,
    yaw: f64,
    neighbors: &[Vec3],
    budget: &LinkBudget,
    cfg: &SmoothingConfig,
) -> Result<(f64, SurrogateGradient)> {
    let mut value = 0.0;
    let mut grad = SurrogateGradient {
        grad_p: Vec3::zeros(),
        grad_yaw: 0.0,
    };
    let offsets = stencil_offsets(cfg.epsilon);
    let inv_m = 1.0 / STENCIL_SIZE as f64;
    let log_scale = budget.bandwidth_hz / std::f64::consts::LN_2;
    for pj in neighbors {
        let mut snr_sum = 0.0;
        let mut d_pos = Vec3::zeros();
        let mut d_yaw = 0.0;
        for d in &offsets {
            let q = position + d;
            let (p, dp) = channel_power_and_gradient(&q, pj, budget)?;
            let (g, gy, gp) = hybrid_gain_with_gradient(yaw, &q, pj, budget)?;
            snr_sum += budget.snr0 * p * g;
            d_pos += dp * g + gp * p;
            d_yaw += gy * p;
        }
        let snr = snr_sum * inv_m;
        // Chain-rule weight of the logarithm: (W / ln 2) / (1 + snr).
        let w = log_scale / (1.0 + snr);
        value += log_scale * snr.ln_1p();
        grad.grad_p += d_pos * (budget.snr0 * inv_m * w);
        grad.grad_yaw += d_yaw * budget.snr0 * inv_m * w;
    }
    Ok((value, grad))
}

/// Value and position gradient of the unsmoothed capacity summed over links.
pub fn raw_capacity_with_gradient(position: &Vec3, yaw: f64, neighbors: &[Vec3], budget: &LinkBudget) -> Result<(f64, Vec3)> {
    let log_scale = budget.bandwidth_hz / std::f64::consts::LN_2;
    let mut value = 0.0;
    let mut grad = Vec3::zeros();
    for pj in neighbors {
        let (p, dp) = channel_power_and_gradient(position, pj, budget)?;
        let (g, _, gp) = hybrid_gain_with_gradient(yaw, position, pj, budget)?;
        let snr = budget.snr0 * p * g;
        value += log_scale * snr.ln_1p();
        grad += (dp * g + gp * p) * (budget.snr0 * log_scale / (1.0 + snr));
    }
    Ok((value, grad))
}

/// Which capacity field a Lipschitz estimate is taken on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CapacityField {
    Raw,
    Smoothed(SmoothingConfig),
}

impl CapacityField {
    pub fn position_gradient(&self, position: &Vec3, yaw: f64, neighbors: &[Vec3], budget: &LinkBudget) -> Result<Vec3> {
        match self {
            CapacityField::Raw => Ok(raw_capacity_with_gradient(position, yaw, neighbors, budget)?.1),
            CapacityField::Smoothed(cfg) => Ok(surrogate_with_gradient(position, yaw, neighbors, budget, cfg)?.1.grad_p),
        }
    }
}

/// Box of agent positions sampled by [`estimate_lipschitz`].
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRegion {
    /// Centre of the sampled box of agent positions.
    pub center: Vec3,
    /// Half-width of the box along each axis (m).
    pub half_width: f64,
    /// Fixed neighbour position.
    pub neighbor: Vec3,
    /// Yaw is drawn within this distance of the line-of-sight azimuth (rad).
    pub yaw_spread: f64,
    /// Separation of each sampled pair (m).
    pub pair_distance: f64,
    pub seed: u64,
}

impl SampleRegion {
    /// A link at `range` m between agents at `altitude` m, the box centred on
    /// the transmitter.
    pub fn nominal(range: f64, altitude: f64, seed: u64) -> Self {
        Self {
            center: Vec3::new(0.0, 0.0, altitude),
            half_width: 0.5,
            neighbor: Vec3::new(range, 0.0, altitude),
            yaw_spread: 0.2,
            pair_distance: 1e-4,
            seed,
        }
    }
}

/// Empirical Lipschitz constant of the capacity gradient in position:
/// the largest `|grad(x) - grad(y)| / |x - y|` over sampled nearby pairs.
///
/// Samples are drawn from a seeded stream so the estimate is reproducible
/// and identical sample points are used for every field.
pub fn estimate_lipschitz(
    budget: &LinkBudget,
    field: &CapacityField,
    region: &SampleRegion,
    n_samples: usize,
) -> Result<f64> {
    if n_samples < 100 {
        return Err(Error::invalid("n_samples", "need at least 100 samples"));
    }
    if let CapacityField::Smoothed(cfg) = field {
        cfg.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(region.seed);
    let neighbors = [region.neighbor];
    let mut best: f64 = 0.0;
    for _ in 0..n_samples {
        let x = region.center
            + Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ) * region.half_width;
        let los = los_azimuth(&x, &region.neighbor)?;
        let yaw = los + rng.random_range(-1.0..1.0) * region.yaw_spread;
        let dir = loop {
            let d = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = d.norm();
            if n > 1e-3 && n <= 1.0 {
                break d / n;
            }
        };
        let y = x + dir * region.pair_distance;
        let gx = field.position_gradient(&x, yaw, &neighbors, budget)?;
        let gy = field.position_gradient(&y, yaw, &neighbors, budget)?;
        best = best.max((gx - gy).norm() / region.pair_distance);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn budget() -> LinkBudget {
        LinkBudget::default()
    }

    fn cfg() -> SmoothingConfig {
        SmoothingConfig::default()
    }

    #[test]
    fn stencil_geometry() {
        let pts = stencil_points(&Vec3::zeros(), &cfg());
        assert_eq!(pts[0], Vec3::zeros());
        assert_eq!(pts[1], Vec3::new(0.05, 0.0, 0.0));
        assert_eq!(pts[6], Vec3::new(0.0, 0.0, -0.05));
        let p = Vec3::new(1.3, -2.7, 9.1);
        let sum: Vec3 = stencil_points(&p, &cfg()).iter().map(|q| q - p).sum();
        assert_eq!(sum, Vec3::zeros());
        assert!(SmoothingConfig::new(0.0).is_err());
        assert!(SmoothingConfig::new(-1.0).is_err());
    }

    #[test]
    fn smoothing_constant_linear_quadratic() {
        let c = cfg();
        let p = Vec3::new(0.3, -0.2, 4.0);
        assert!((smooth_field(|_| Ok(2.5), &p, &c).unwrap() - 2.5).abs() < 1e-15);
        let a = Vec3::new(1.5, -3.0, 0.25);
        let lin = smooth_field(|q| Ok(a.dot(q) + 7.0), &p, &c).unwrap();
        assert!((lin - (a.dot(&p) + 7.0)).abs() < 1e-12);
        let quad = smooth_field(|q| Ok(q.x * q.x), &Vec3::zeros(), &c).unwrap();
        assert!((quad - 2.0 / 7.0 * 0.05 * 0.05).abs() < 1e-15);
    }

    #[test]
    fn smoothed_free_space_power_close_to_inverse_square() {
        let b = budget().with_gamma(0.0);
        let pi = Vec3::new(0.0, 0.0, 10.0);
        let pj = Vec3::new(20.0, 0.0, 10.0);
        let p = smoothed_channel_power(&pi, &pj, &b, &cfg()).unwrap();
        let rel = (p - 1.0 / 400.0).abs() * 400.0;
        // O(eps^2 / d^2) relative
        assert!(rel < 10.0 * 0.05f64.powi(2) / 400.0, "rel={rel}");
    }

    #[test]
    fn smoothing_lifts_two_ray_nulls() {
        let b = budget();
        let pj = Vec3::new(25.0, 0.0, 10.0);
        let mut found = 0;
        // Scan altitude for local minima of the raw power.
        let dz = b.wavelength_m / 200.0;
        let raw = |z: f64| channel_power(&Vec3::new(0.0, 0.0, z), &pj, &b).unwrap();
        let mut z = 9.0;
        while z < 9.2 && found < 10 {
            if raw(z) < raw(z - dz) && raw(z) < raw(z + dz) {
                let smoothed = smoothed_channel_power(&Vec3::new(0.0, 0.0, z), &pj, &b, &cfg()).unwrap();
                assert!(smoothed > raw(z), "z={z}");
                found += 1;
            }
            z += dz;
        }
        assert!(found >= 5);
    }

    #[test]
    fn smoothing_error_is_second_order() {
        // Free space keeps the field smooth on the eps scale.
        let b = budget().with_gamma(0.0);
        let pi = Vec3::new(0.0, 0.0, 10.0);
        let pj = Vec3::new(5.0, 3.0, 12.0);
        let raw = channel_power(&pi, &pj, &b).unwrap();
        let err = |e: f64| {
            (smoothed_channel_power(&pi, &pj, &b, &SmoothingConfig::new(e).unwrap()).unwrap() - raw).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 4.0).abs() < 0.1, "ratio={ratio}");
    }

    #[test]
    fn smoothed_gain_near_peak_at_boresight() {
        let b = budget();
        let pi = Vec3::new(0.0, 0.0, 10.0);
        let pj = Vec3::new(30.0, 0.0, 10.0);
        let g = smoothed_hybrid_gain(&pi, 0.0, &pj, &b, &cfg()).unwrap();
        assert!(g <= b.n_ula);
        // azimuth perturbation <= asin(eps/d)
        let da = (0.05f64 / 30.0).asin();
        assert!(b.n_ula - g <= b.n_ula * b.kappa * da * da);
    }

    #[test]
    fn smoothed_gain_matches_raw_to_second_order_along_axis() {
        let b = budget();
        let pi = Vec3::new(0.0, 0.0, 10.0);
        let pj = Vec3::new(10.0, 0.0, 10.0);
        let yaw = 0.3;
        let raw = hybrid_gain(wrap_angle(0.0 - yaw), &b);
        let sm = smoothed_hybrid_gain(&pi, yaw, &pj, &b, &cfg()).unwrap();
        // Only the +-y stencil points change the azimuth, by ~eps/d.
        let da = 0.05 / 10.0;
        let (_, slope) = crate::beam::hybrid_gain_and_slope(-yaw, &b);
        let bound = 2.0 / 7.0 * (slope.abs() * da * da + b.n_ula * 2.0 * da * da);
        assert!((sm - raw).abs() <= bound, "{} > {bound}", (sm - raw).abs());
    }

    #[test]
    fn smoothed_snr_arithmetic() {
        let b = LinkBudget {
            snr0: 6.25,
            ..budget()
        };
        let link = link_from_factors(0.01, 16.0, &b).unwrap();
        assert!((link.snr_bar - 1.0).abs() < 1e-12);
        assert!((link.surrogate_capacity - b.bandwidth_hz).abs() < 1e-3);
        assert_eq!(link_from_factors(0.0, 16.0, &b).unwrap().surrogate_capacity, 0.0);
        assert_eq!(link_from_factors(0.01, 0.0, &b).unwrap().surrogate_capacity, 0.0);
    }

    #[test]
    fn surrogate_additive_over_neighbors() {
        let b = budget();
        let a = AgentState::new(Vec3::new(0.0, 0.0, 10.0), Vec3::zeros(), 0.2);
        let pj = Vec3::new(20.0, 3.0, 11.0);
        let one = surrogate_cost(&a, &[pj], &b, &cfg()).unwrap();
        let link = smoothed_snr(&a.position, a.yaw, &pj, &b, &cfg()).unwrap();
        assert_eq!(one, link.surrogate_capacity);
        let two = surrogate_cost(&a, &[pj, pj], &b, &cfg()).unwrap();
        assert!((two - 2.0 * one).abs() <= 1e-9 * one);
        assert_eq!(surrogate_cost(&a, &[], &b, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn surrogate_on_ring_geometry_is_positive() {
        let b = budget();
        let r = 25.0;
        let pos: Vec<Vec3> = (0..3)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / 3.0;
                Vec3::new(r * th.cos(), r * th.sin(), 10.0)
            })
            .collect();
        for i in 0..3 {
            let j = (i + 1) % 3;
            let yaw = los_azimuth(&pos[i], &pos[j]).unwrap();
            let a = AgentState::new(pos[i], Vec3::zeros(), yaw);
            let v = surrogate_cost(&a, &[pos[j]], &b, &cfg()).unwrap();
            assert!(v.is_finite() && v > 0.0);
        }
    }

    #[test]
    fn stencil_point_on_neighbor_errors() {
        let b = budget();
        let pi = Vec3::new(0.0, 0.0, 10.0);
        let pj = Vec3::new(0.05, 0.0, 10.0);
        assert!(smoothed_channel_power(&pi, &pj, &b, &cfg()).is_err());
        assert!(smoothed_hybrid_gain(&pi, 0.0, &Vec3::new(0.0, 0.0, 5.0), &b, &cfg()).is_err());
    }

    #[test]
    fn jensen_bound_random_geometries() {
        let b = budget();
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let pi = Vec3::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(2.0..20.0));
            let pj = Vec3::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(2.0..20.0));
            if (pi.xy() - pj.xy()).norm() < 1.0 {
                continue;
            }
            let yaw = rng.random_range(-PI..PI);
            let s = smoothed_snr(&pi, yaw, &pj, &b, &c).unwrap();
            let raw_mean = smoothed_raw_capacity(&pi, yaw, &pj, &b, &c).unwrap();
            // absolute slack covers subnormal SNRs deep in the beam tail
            assert!(s.surrogate_capacity >= raw_mean * (1.0 - 1e-12) - 1e-280, "{} {}", s.surrogate_capacity, raw_mean);
        }
    }

    #[test]
    fn decoupled_product_tracks_mean_inside_fov() {
        let b = budget();
        let c = cfg();
        let pi = Vec3::new(0.0, 0.0, 10.0);
        let pj = Vec3::new(18.0, 5.0, 9.0);
        let los = los_azimuth(&pi, &pj).unwrap();
        for k in 0..20 {
            let yaw = los + 0.05 * k as f64;
            let s = smoothed_snr(&pi, yaw, &pj, &b, &c).unwrap();
            let rel = (s.decoupled_snr(&b) - s.snr_bar).abs() / s.snr_bar;
            assert!(rel < 1e-3, "yaw offset {}: rel {rel}", 0.05 * k as f64);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let b = budget();
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        // Phase k (d_ref - d_los) is ~1e4 rad, so values carry ~1e-12 relative
        // noise; a fourth-order difference at a wider step stays below it.
        let h = 2e-5;
        let mut n = 0;
        while n < 500 {
            let pi = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(5.0..15.0));
            let pj = Vec3::new(rng.random_range(10.0..40.0), rng.random_range(-20.0..20.0), rng.random_range(5.0..15.0));
            let los = los_azimuth(&pi, &pj).unwrap();
            let yaw = los + rng.random_range(-1.5..1.5);
            let near_clamp = stencil_points(&pi, &c).iter().any(|q| {
                let m = wrap_angle(los_azimuth(q, &pj).unwrap() - yaw);
                (m.abs() - b.fov_rad).abs() < 1e-3
            });
            if near_clamp {
                continue;
            }
            let a = AgentState::new(pi, Vec3::zeros(), yaw);
            let g = regularized_gradient(&a, &[pj], &b, &c).unwrap();
            let f = |p: Vec3, y: f64| surrogate_cost(&AgentState { position: p, velocity: Vec3::zeros(), yaw: y }, &[pj], &b, &c).unwrap();
            let mut fd = Vec3::zeros();
            for ax in 0..3 {
                let mut e = Vec3::zeros();
                e[ax] = h;
                fd[ax] = (8.0 * (f(pi + e, yaw) - f(pi - e, yaw)) - (f(pi + 2.0 * e, yaw) - f(pi - 2.0 * e, yaw))) / (12.0 * h);
            }
            let fd_yaw = (8.0 * (f(pi, yaw + h) - f(pi, yaw - h)) - (f(pi, yaw + 2.0 * h) - f(pi, yaw - 2.0 * h))) / (12.0 * h);
            let rel = (g.grad_p - fd).norm() / g.grad_p.norm();
            assert!(rel < 1e-5, "rel={rel}");
            let scale = g.grad_yaw.abs().max(1e-6 * b.bandwidth_hz);
            assert!((g.grad_yaw - fd_yaw).abs() / scale < 1e-5);
            n += 1;
        }
    }

    #[test]
    fn log_weight_scaling_at_high_snr() {
        // With snr_bar ~ 100 the chain-rule weight is ~ W / (ln2 snr_bar).
        let mut b = budget().with_gamma(0.0);
        let pi = Vec3::new(0.0, 0.0, 10.0);
        let pj = Vec3::new(20.0, 0.0, 10.0);
        let link = smoothed_snr(&pi, 0.0, &pj, &b, &cfg()).unwrap();
        b.snr0 *= 100.0 / link.snr_bar;
        let link = smoothed_snr(&pi, 0.0, &pj, &b, &cfg()).unwrap();
        assert!((link.snr_bar - 100.0).abs() < 1e-9);
        let (_, g) = surrogate_with_gradient(&pi, 0.0, &[pj], &b, &cfg()).unwrap();
        // moving toward pj raises snr_bar at about 2 snr_bar / d per metre
        let dsnr = 2.0 * link.snr_bar / 20.0;
        let predicted = b.bandwidth_hz / (std::f64::consts::LN_2 * link.snr_bar) * dsnr;
        assert!((g.grad_p.x / predicted - 1.0).abs() < 0.1);
    }

    #[test]
    fn yaw_gradient_vanishes_at_alignment() {
        let b = budget();
        let pi = Vec3::new(0.0, 0.0, 10.0);
        let pj = Vec3::new(20.0, 0.0, 10.0);
        let (_, g) = surrogate_with_gradient(&pi, 0.0, &[pj], &b, &cfg()).unwrap();
        assert!(g.grad_yaw.abs() < 1e-8 * b.bandwidth_hz);
    }
}
