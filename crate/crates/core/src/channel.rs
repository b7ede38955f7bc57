//! Two-ray ground-reflection channel.
//!
//! The reflected ray is built with the ground-image construction: the
//! receiver is mirrored through `z = 0` and `d_ref` is the distance from the
//! transmitter to that image. With a real reflection coefficient the power
//! has the closed form
//!
//! ```text
//! |h|^2 = 1/d1^2 + G^2/d2^2 + 2 G cos(k (d2 - d1)) / (d1 d2)
//! ```
//!
//! with `k = 2 pi / lambda`, which is what the gradient below differentiates.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Reference SNR giving `target_bps` on an ideal boresight free-space link
/// at `range_m`: `snr0 = (2^(C/W) - 1) d^2 / N_ula`.
pub fn calibrate_snr0(target_bps: f64, range_m: f64, bandwidth_hz: f64, n_ula: f64) -> f64 {
    ((target_bps / bandwidth_hz).exp2() - 1.0) * range_m * range_m / n_ula
}

/// Serializable physical-layer settings. Angles are in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub n_ula: f64,
    pub hpbw_deg: f64,
    pub fov_deg: f64,
    pub kappa: f64,
    /// Linear SNR at unit distance and unit gain.
    pub snr0: f64,
    pub gamma_refl: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 60e9,
            bandwidth_hz: 2.16e9,
            n_ula: 16.0,
            hpbw_deg: 6.4,
            fov_deg: 60.0,
            kappa: 1.3,
            // calibrate_snr0(4.8e9, 20.0, 2.16e9, 16.0)
            snr0: 91.652_903_957_611_67,
            gamma_refl: -1.0,
        }
    }
}

/// Physical-layer constants with the derived wavelength and Gaussian width.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkBudget {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub wavelength_m: f64,
    pub n_ula: f64,
    pub hpbw_rad: f64,
    pub sigma_rad: f64,
    /// Electronic field of view, half-angle.
    pub fov_rad: f64,
    pub kappa: f64,
    pub snr0: f64,
    pub gamma_refl: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self::from_config(&LinkConfig::default()).expect("default link config is valid")
    }
}

impl LinkBudget {
    pub fn from_config(cfg: &LinkConfig) -> Result<Self> {
        let positive = [
            ("link.carrier_hz", cfg.carrier_hz),
            ("link.bandwidth_hz", cfg.bandwidth_hz),
            ("link.n_ula", cfg.n_ula),
            ("link.hpbw_deg", cfg.hpbw_deg),
            ("link.fov_deg", cfg.fov_deg),
            ("link.kappa", cfg.kappa),
            ("link.snr0", cfg.snr0),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if cfg.fov_deg > 90.0 {
            return Err(Error::invalid("link.fov_deg", "must be at most 90 degrees"));
        }
        if !cfg.gamma_refl.is_finite() || cfg.gamma_refl.abs() > 1.0 {
            return Err(Error::invalid("link.gamma_refl", "must lie in [-1, 1]"));
        }
        let hpbw_rad = cfg.hpbw_deg.to_radians();
        Ok(Self {
            carrier_hz: cfg.carrier_hz,
            bandwidth_hz: cfg.bandwidth_hz,
            wavelength_m: SPEED_OF_LIGHT / cfg.carrier_hz,
            n_ula: cfg.n_ula,
            hpbw_rad,
            sigma_rad: hpbw_rad / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt()),
            fov_rad: cfg.fov_deg.to_radians(),
            kappa: cfg.kappa,
            snr0: cfg.snr0,
            gamma_refl: cfg.gamma_refl,
        })
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength_m
    }

    /// Same budget with a different reflection coefficient.
    pub fn with_gamma(&self, gamma_refl: f64) -> Self {
        Self {
            gamma_refl,
            ..self.clone()
        }
    }
}

/// Direct and ground-reflected path geometry between two agents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkGeometry {
    pub d_los: f64,
    pub d_ref: f64,
    pub grazing_angle: f64,
    pub horizontal_dist: f64,
}

fn mirror(p: &Vec3) -> Vec3 {
    Vec3::new(p.x, p.y, -p.z)
}

pub fn link_geometry(pi: &Vec3, pj: &Vec3) -> Result<LinkGeometry> {
    for z in [pi.z, pj.z] {
        if !(z > 0.0) {
            return Err(Error::NonPositiveAltitude(z));
        }
    }
    let d_los = (pi - pj).norm();
    if d_los == 0.0 {
        return Err(Error::CoincidentPositions);
    }
    let d_ref = (pi - mirror(pj)).norm();
    let horizontal_dist = (pi.xy() - pj.xy()).norm();
    let grazing_angle = if horizontal_dist == 0.0 {
        std::f64::consts::FRAC_PI_2
    } else {
        ((pi.z + pj.z) / horizontal_dist).atan()
    };
    Ok(LinkGeometry {
        d_los,
        d_ref,
        grazing_angle,
        horizontal_dist,
    })
}

pub fn channel_gain(pi: &Vec3, pj: &Vec3, budget: &LinkBudget) -> Result<Complex64> {
    let g = link_geometry(pi, pj)?;
    let k = budget.wavenumber();
    let los = Complex64::from_polar(1.0 / g.d_los, -k * g.d_los);
    let refl = Complex64::from_polar(budget.gamma_refl / g.d_ref, -k * g.d_ref);
    Ok(los + refl)
}

pub fn channel_power(pi: &Vec3, pj: &Vec3, budget: &LinkBudget) -> Result<f64> {
    Ok(channel_power_and_gradient(pi, pj, budget)?.0)
}

/// Gradient of `|h|^2` with respect to the transmitter position `pi`.
pub fn channel_power_gradient(pi: &Vec3, pj: &Vec3, budget: &LinkBudget) -> Result<Vec3> {
    Ok(channel_power_and_gradient(pi, pj, budget)?.1)
}

/// `|h|^2` and its gradient in `pi`, from the closed-form two-ray power.
pub fn channel_power_and_gradient(pi: &Vec3, pj: &Vec3, budget: &LinkBudget) -> Result<(f64, Vec3)> {
    if !(pi.z > 0.0) {
        return Err(Error::NonPositiveAltitude(pi.z));
    }
    if !(pj.z > 0.0) {
        return Err(Error::NonPositiveAltitude(pj.z));
    }
    let r_los = pi - pj;
    let r_ref = pi - mirror(pj);
    let d1 = r_los.norm();
    if d1 == 0.0 {
        return Err(Error::CoincidentPositions);
    }
    let d2 = r_ref.norm();
    let gamma = budget.gamma_refl;
    let k = budget.wavenumber();
    let (s, c) = (k * (d2 - d1)).sin_cos();
    let inv1 = 1.0 / d1;
    let inv2 = 1.0 / d2;

    let power = inv1 * inv1 + gamma * gamma * inv2 * inv2 + 2.0 * gamma * c * inv1 * inv2;
    let dp_dd1 = -2.0 * inv1 * inv1 * inv1 + 2.0 * gamma * inv1 * inv2 * (k * s - c * inv1);
    let dp_dd2 = -2.0 * gamma * gamma * inv2 * inv2 * inv2 - 2.0 * gamma * inv1 * inv2 * (k * s + c * inv2);
    let grad = r_los * (dp_dd1 * inv1) + r_ref * (dp_dd2 * inv2);
    Ok((power.max(0.0), grad))
}
