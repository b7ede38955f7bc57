//! Directional gain of a body-fixed phased array with hybrid steering.
//!
//! Angles use the world frame of [`crate::Vec3`]: azimuth is measured
//! counter-clockwise from +x (east) and yaw shares that frame. Elevation is
//! not modelled.
//!
//! The array steers electronically up to `fov_rad` off boresight, paying a
//! scan loss `cos(phi*)^kappa`. Any misalignment beyond the field of view is
//! penalised by the Gaussian main-lobe proxy.

use crate::channel::LinkBudget;
use crate::{wrap_angle, Error, Result, Vec3};

/// Decomposition of the pointing error toward one neighbour.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamAlignment {
    pub los_azimuth: f64,
    /// `wrap(los_azimuth - yaw)`.
    pub mech_misalign: f64,
    pub elec_angle: f64,
    pub residual: f64,
}

impl BeamAlignment {
    pub fn new(pi: &Vec3, yaw: f64, pj: &Vec3, budget: &LinkBudget) -> Result<Self> {
        let los = los_azimuth(pi, pj)?;
        let mech = wrap_angle(los - yaw);
        let elec = electronic_steer(mech, budget);
        Ok(Self {
            los_azimuth: los,
            mech_misalign: mech,
            elec_angle: elec,
            residual: mech - elec,
        })
    }
}

/// Planar azimuth from `pi` toward `pj`.
pub fn los_azimuth(pi: &Vec3, pj: &Vec3) -> Result<f64> {
    let dx = pj.x - pi.x;
    let dy = pj.y - pi.y;
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::UndefinedAzimuth);
    }
    // atan2 returns [-pi, pi]; fold -pi onto pi.
    Ok(wrap_angle(dy.atan2(dx)))
}

/// Gradient of [`los_azimuth`] with respect to `pi`.
pub fn los_azimuth_gradient(pi: &Vec3, pj: &Vec3) -> Result<Vec3> {
    let dx = pj.x - pi.x;
    let dy = pj.y - pi.y;
    let r2 = dx * dx + dy * dy;
    if r2 == 0.0 {
        return Err(Error::UndefinedAzimuth);
    }
    Ok(Vec3::new(dy / r2, -dx / r2, 0.0))
}

/// Pure mechanical pointing: `N exp(-wrap(yaw - azimuth)^2 / (2 sigma^2))`.
pub fn gaussian_gain(yaw: f64, azimuth: f64, budget: &LinkBudget) -> f64 {
    let d = wrap_angle(yaw - azimuth);
    budget.n_ula * (-d * d / (2.0 * budget.sigma_rad * budget.sigma_rad)).exp()
}

/// Electronic steering angle, clamped to the field of view.
pub fn electronic_steer(mech_misalign: f64, budget: &LinkBudget) -> f64 {
    mech_misalign.clamp(-budget.fov_rad, budget.fov_rad)
}

pub fn hybrid_gain(mech_misalign: f64, budget: &LinkBudget) -> f64 {
    hybrid_gain_and_slope(mech_misalign, budget).0
}

/// Gain and its derivative with respect to the misalignment.
///
/// At `|misalign| == fov` the interior (scan-loss) branch is used.
pub fn hybrid_gain_and_slope(mech_misalign: f64, budget: &LinkBudget) -> (f64, f64) {
    let m = wrap_angle(mech_misalign);
    let n = budget.n_ula;
    let kappa = budget.kappa;
    if m.abs() <= budget.fov_rad {
        let (s, c) = m.sin_cos();
        let c = c.max(0.0);
        let gain = n * c.powf(kappa);
        let slope = if c > 0.0 { -n * kappa * c.powf(kappa - 1.0) * s } else { 0.0 };
        (gain, slope)
    } else {
        let steer = budget.fov_rad.copysign(m);
        let res = m - steer;
        let var = budget.sigma_rad * budget.sigma_rad;
        let gain = n * steer.cos().max(0.0).powf(kappa) * (-res * res / (2.0 * var)).exp();
        (gain, -gain * res / var)
    }
}

/// Hybrid gain toward `pj` and its partials `(d/d yaw, d/d pi)`.
pub fn hybrid_gain_gradient(yaw: f64, pi: &Vec3, pj: &Vec3, budget: &LinkBudget) -> Result<(f64, Vec3)> {
    let (_, d_yaw, d_pos) = hybrid_gain_with_gradient(yaw, pi, pj, budget)?;
    Ok((d_yaw, d_pos))
}

/// `(gain, d gain / d yaw, d gain / d pi)`.
pub fn hybrid_gain_with_gradient(yaw: f64, pi: &Vec3, pj: &Vec3, budget: &LinkBudget) -> Result<(f64, f64, Vec3)> {
    let mis = wrap_angle(los_azimuth(pi, pj)? - yaw);
    let (gain, slope) = hybrid_gain_and_slope(mis, budget);
    let daz = los_azimuth_gradient(pi, pj)?;
    Ok((gain, -slope, daz * slope))
}

/// Shannon capacity `W log2(1 + snr)` in bit/s.
pub fn link_capacity(snr: f64, budget: &LinkBudget) -> Result<f64> {
    if snr.is_nan() || snr < 0.0 {
        return Err(Error::NegativeSnr(snr));
    }
    Ok(budget.bandwidth_hz * snr.ln_1p() / std::f64::consts::LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn budget() -> LinkBudget {
        LinkBudget::default()
    }

    #[test]
    fn azimuth_conventions() {
        let o = Vec3::new(0.0, 0.0, 10.0);
        assert_eq!(los_azimuth(&o, &Vec3::new(5.0, 0.0, 10.0)).unwrap(), 0.0);
        assert!((los_azimuth(&o, &Vec3::new(0.0, 5.0, 3.0)).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((los_azimuth(&o, &Vec3::new(-1.0, -1.0, 10.0)).unwrap() + 3.0 * PI / 4.0).abs() < 1e-15);
        assert_eq!(los_azimuth(&o, &Vec3::new(-1.0, 0.0, 10.0)).unwrap(), PI);
        assert!(matches!(
            los_azimuth(&o, &Vec3::new(0.0, 0.0, 20.0)),
            Err(Error::UndefinedAzimuth)
        ));
    }

    #[test]
    fn gaussian_gain_examples() {
        let b = budget();
        assert_eq!(gaussian_gain(0.4, 0.4, &b), 16.0);
        let half = gaussian_gain(b.hpbw_rad / 2.0, 0.0, &b);
        assert!((half - 8.0).abs() < 1e-9);
        let x = 0.03;
        assert!((gaussian_gain(2.0 * PI - x, 0.0, &b) - gaussian_gain(x, 0.0, &b)).abs() < 1e-12);
    }

    #[test]
    fn steering_clamp() {
        let b = budget();
        assert_eq!(electronic_steer(0.3, &b), 0.3);
        assert!((electronic_steer(1.5, &b) - PI / 3.0).abs() < 1e-15);
        assert!((electronic_steer(-2.0, &b) + 1.047).abs() < 1e-3);
        let e = electronic_steer(1.5, &b);
        assert_eq!(electronic_steer(e, &b), e);
    }

    #[test]
    fn hybrid_gain_examples() {
        let b = budget();
        assert_eq!(hybrid_gain(0.0, &b), 16.0);
        let edge = hybrid_gain(PI / 3.0, &b);
        assert!((edge - 16.0 * 0.5f64.powf(1.3)).abs() < 1e-12);
        let sigma_deg = 6.4 / (2.0 * (2.0 * 2f64.ln()).sqrt());
        let analytic = 16.0 * 0.5f64.powf(1.3) * (-(30.0 / sigma_deg).powi(2) / 2.0).exp();
        assert!((hybrid_gain(PI / 2.0, &b) - analytic).abs() < 1e-20);
    }

    #[test]
    fn alignment_residual_zero_inside_fov() {
        let b = budget();
        let a = BeamAlignment::new(&Vec3::new(0.0, 0.0, 10.0), 0.5, &Vec3::new(10.0, 0.0, 10.0), &b).unwrap();
        assert!((a.mech_misalign + 0.5).abs() < 1e-15);
        assert_eq!(a.residual, 0.0);
        let a = BeamAlignment::new(&Vec3::new(0.0, 0.0, 10.0), PI / 2.0, &Vec3::new(10.0, 0.0, 10.0), &b).unwrap();
        assert!((a.elec_angle + PI / 3.0).abs() < 1e-15);
        assert!((a.residual + PI / 6.0).abs() < 1e-12);
    }

    #[test]
    fn continuous_at_fov_boundary() {
        let b = budget();
        let f = b.fov_rad;
        let inside = hybrid_gain(f - 1e-12, &b);
        let outside = hybrid_gain(f + 1e-12, &b);
        assert!((inside - outside).abs() < 1e-9);
    }

    #[test]
    fn boresight_is_stationary() {
        let b = budget();
        let pi = Vec3::new(0.0, 0.0, 10.0);
        let pj = Vec3::new(20.0, 0.0, 10.0);
        let (d_yaw, _) = hybrid_gain_gradient(0.0, &pi, &pj, &b).unwrap();
        assert_eq!(d_yaw, 0.0);
    }

    #[test]
    fn yawing_toward_target_raises_gain() {
        let b = budget();
        let pi = Vec3::new(0.0, 0.0, 10.0);
        let pj = Vec3::new(20.0, 0.0, 10.0);
        // target at azimuth 0, yaw slightly negative => misalignment > 0
        let (d_yaw, _) = hybrid_gain_gradient(-0.2, &pi, &pj, &b).unwrap();
        assert!(d_yaw > 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        use rand::{Rng, SeedableRng};
        let b = budget();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        let mut n = 0;
        while n < 1000 {
            let pi = Vec3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), 10.0);
            let pj = Vec3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), 8.0);
            if (pi.xy() - pj.xy()).norm() < 1.0 {
                continue;
            }
            let yaw = rng.random_range(-PI..PI);
            let mis = wrap_angle(los_azimuth(&pi, &pj).unwrap() - yaw);
            if (mis.abs() - b.fov_rad).abs() < 1e-3 {
                continue;
            }
            let (g, d_yaw, d_pos) = hybrid_gain_with_gradient(yaw, &pi, &pj, &b).unwrap();
            if g < 1e-200 {
                continue;
            }
            let f = |y: f64, p: &Vec3| hybrid_gain(wrap_angle(los_azimuth(p, &pj).unwrap() - y), &b);
            let fd_yaw = (f(yaw + h, &pi) - f(yaw - h, &pi)) / (2.0 * h);
            let mut fd_pos = Vec3::zeros();
            for a in 0..2 {
                let mut e = Vec3::zeros();
                e[a] = h;
                fd_pos[a] = (f(yaw, &(pi + e)) - f(yaw, &(pi - e))) / (2.0 * h);
            }
            // central-difference roundoff is about eps * N / h
            assert!((d_yaw - fd_yaw).abs() <= 1e-5 * d_yaw.abs() + 1e-7, "yaw {d_yaw} vs {fd_yaw} mis={mis}");
            assert!((d_pos - fd_pos).norm() <= 1e-5 * d_pos.norm() + 1e-7, "pos mis={mis}");
            n += 1;
        }
    }

    #[test]
    fn capacity_examples() {
        let b = budget();
        assert_eq!(link_capacity(0.0, &b).unwrap(), 0.0);
        assert!((link_capacity(1.0, &b).unwrap() - 2.16e9).abs() < 1e-3);
        assert!((link_capacity(3.0, &b).unwrap() - 4.32e9).abs() < 1e-3);
        assert!(matches!(link_capacity(-0.1, &b), Err(Error::NegativeSnr(_))));
    }

    proptest! {
        #[test]
        fn gain_bounded_and_even(m in -PI..PI) {
            let b = budget();
            let g = hybrid_gain(m, &b);
            prop_assert!(g >= 0.0 && g <= b.n_ula);
            if m != 0.0 && m.abs() < 3.0 {
                prop_assert!(g > 0.0 || m.abs() > b.fov_rad);
                prop_assert!(g < b.n_ula);
            }
            prop_assert!((g - hybrid_gain(-m, &b)).abs() <= 1e-12 * b.n_ula);
        }

        #[test]
        fn capacity_increasing_concave(s in 0.0..1e3f64, d in 1e-3..10.0f64) {
            let b = budget();
            let c0 = link_capacity(s, &b).unwrap();
            let c1 = link_capacity(s + d, &b).unwrap();
            let c2 = link_capacity(s + 2.0 * d, &b).unwrap();
            prop_assert!(c1 > c0);
            prop_assert!(c1 - c0 >= (c2 - c1) * (1.0 - 1e-12));
        }
    }
}
