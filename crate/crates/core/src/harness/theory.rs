//! Numerical checks of the smoothing theory: gradient regularity of the
//! smoothed field, the quadrature order of the stencil, and the BCD
//! contraction test.

use std::fmt::Write as _;

use serde::Serialize;

use crate::scenario::ScenarioConfig;
use crate::surrogate::{estimate_lipschitz, stencil_offsets, CapacityField, SampleRegion, SmoothingConfig};
use crate::swarm::check_contraction;
use crate::{Result, Vec3};

/// Empirical gradient Lipschitz constant of one capacity field.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzRow {
    /// Smoothing radius (m); `None` for the raw field.
    pub epsilon_m: Option<f64>,
    /// Estimate in bit/s per m^2.
    pub l_hat: f64,
}

/// Surrogate error against the continuous smoothing integral at `epsilon`
/// and `epsilon / 2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadratureCheck {
    pub epsilon_m: f64,
    pub error: f64,
    pub error_half: f64,
    /// `error / error_half`; close to 4 for a second-order error.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoryReport {
    pub lipschitz: Vec<LipschitzRow>,
    pub quadrature: Vec<QuadratureCheck>,
    /// Radius used for the contraction test (the configured one).
    pub contraction_epsilon_m: f64,
    pub contraction_l_hat: f64,
    pub contraction_ratio: f64,
    pub contraction_stable: bool,
}

impl TheoryReport {
    pub fn raw_l_hat(&self) -> Option<f64> {
        self.lipschitz.iter().find(|r| r.epsilon_m.is_none()).map(|r| r.l_hat)
    }

    /// Every smoothed estimate is below the raw one.
    pub fn smoothed_below_raw(&self) -> bool {
        let Some(raw) = self.raw_l_hat() else {
            return false;
        };
        self.smoothed().all(|(_, l)| l < raw)
    }

    /// Smoothed estimates strictly decrease with the radius.
    pub fn decreasing_in_epsilon(&self) -> bool {
        let mut rows: Vec<(f64, f64)> = self.smoothed().collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        rows.windows(2).all(|w| w[1].1 < w[0].1)
    }

    fn smoothed(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.lipschitz.iter().filter_map(|r| r.epsilon_m.map(|e| (e, r.l_hat)))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "gradient Lipschitz estimates (bit/s/m^2)");
        for r in &self.lipschitz {
            let label = r.epsilon_m.map_or("raw".to_string(), |e| format!("eps = {:.3} m", e));
            let _ = writeln!(s, "  {label:<16} {:>12.4e}", r.l_hat);
        }
        let _ = writeln!(s, "  smoothed below raw: {}", self.smoothed_below_raw());
        let _ = writeln!(s, "  decreasing in eps:  {}", self.decreasing_in_epsilon());
        let _ = writeln!(s, "stencil quadrature order (synthetic field)");
        for q in &self.quadrature {
            let _ = writeln!(
                s,
                "  eps = {:.3} m  err = {:.4e}  err(eps/2) = {:.4e}  ratio = {:.4}",
                q.epsilon_m, q.error, q.error_half, q.ratio
            );
        }
        let _ = writeln!(
            s,
            "contraction at eps = {:.3} m: L = {:.4e}, ratio = {:.4e}, stable = {}",
            self.contraction_epsilon_m, self.contraction_l_hat, self.contraction_ratio, self.contraction_stable
        );
        s
    }
}

/// Smooth synthetic SNR field: a positive sum of exponentials of linear forms.
/// Its ball average has a closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticField {
    /// `(amplitude, wave vector)` pairs; the field is `sum a exp(k . p)`.
    pub terms: Vec<(f64, Vec3)>,
}

impl SyntheticField {
    /// The field used by the theory report.
    pub fn standard() -> Self {
        Self {
            terms: vec![
                (40.0, Vec3::new(1.3, -0.7, 0.4)),
                (25.0, Vec3::new(-0.5, 2.1, 1.1)),
                (10.0, Vec3::new(0.2, 0.3, -3.0)),
            ],
        }
    }

    pub fn value(&self, p: &Vec3) -> f64 {
        self.terms.iter().map(|(a, k)| a * k.dot(p).exp()).sum()
    }

    /// Mean of the field over the uniform ball of radius `eps` around `p`.
    pub fn ball_mean(&self, p: &Vec3, eps: f64) -> f64 {
        self.terms
            .iter()
            .map(|(a, k)| a * k.dot(p).exp() * ball_mean_exp(k.norm() * eps))
            .sum()
    }

    /// Stencil mean of the field around `p`.
    pub fn stencil_mean(&self, p: &Vec3, eps: f64) -> f64 {
        stencil_offsets(eps).iter().map(|d| self.value(&(p + d))).sum::<f64>() / 7.0
    }
}

/// Mean of `exp(k . delta)` over the unit-radius uniform ball scaled so that
/// `x = |k| eps`: `3 (x cosh x - sinh x) / x^3`.
fn ball_mean_exp(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        // series 1 + x^2/10 + x^4/280 + x^6/15120; cancellation-free
        let x2 = x * x;
        1.0 + x2 / 10.0 + x2 * x2 / 280.0 + x2 * x2 * x2 / 15_120.0
    } else {
        3.0 * (x * x.cosh() - x.sinh()) / (x * x * x)
    }
}

/// `|ln(1 + ball mean) - ln(1 + stencil mean)|`: the surrogate error of a
/// unit-bandwidth capacity in nats.
pub fn quadrature_error(field: &SyntheticField, p: &Vec3, eps: f64) -> f64 {
    ((1.0 + field.ball_mean(p, eps)).ln() - (1.0 + field.stencil_mean(p, eps)).ln()).abs()
}

/// Evaluation point of the quadrature check.
pub const QUADRATURE_POINT: [f64; 3] = [0.3, -0.2, 0.1];

/// Surrogate error ratio `err(eps) / err(eps / 2)` on the synthetic field.
pub fn prop1_quadrature_ratio(eps: f64) -> QuadratureCheck {
    let field = SyntheticField::standard();
    let p = Vec3::from(QUADRATURE_POINT);
    let error = quadrature_error(&field, &p, eps);
    let error_half = quadrature_error(&field, &p, 0.5 * eps);
    QuadratureCheck {
        epsilon_m: eps,
        error,
        error_half,
        ratio: error / error_half,
    }
}

/// Lipschitz estimates, quadrature order and contraction test for `cfg`.
pub fn theory_report(cfg: &ScenarioConfig) -> Result<TheoryReport> {
    cfg.validate()?;
    let budget = cfg.link_budget()?;
    let h = &cfg.harness;
    let region = SampleRegion::nominal(h.lipschitz_range_m, cfg.scenario.altitude_m, cfg.seed);
    let mut lipschitz = Vec::with_capacity(h.lipschitz_epsilons_m.len() + 1);
    lipschitz.push(LipschitzRow {
        epsilon_m: None,
        l_hat: estimate_lipschitz(&budget, &CapacityField::Raw, &region, h.lipschitz_samples)?,
    });
    for &eps in &h.lipschitz_epsilons_m {
        let field = CapacityField::Smoothed(SmoothingConfig::new(eps)?);
        lipschitz.push(LipschitzRow {
            epsilon_m: Some(eps),
            l_hat: estimate_lipschitz(&budget, &field, &region, h.lipschitz_samples)?,
        });
    }
    let quadrature = h.quadrature_epsilons_m.iter().map(|&e| prop1_quadrature_ratio(e)).collect();
    let own = CapacityField::Smoothed(cfg.smoothing);
    let contraction_l_hat = estimate_lipschitz(&budget, &own, &region, h.lipschitz_samples)?;
    let (contraction_ratio, contraction_stable) = check_contraction(&cfg.weights, contraction_l_hat);
    Ok(TheoryReport {
        lipschitz,
        quadrature,
        contraction_epsilon_m: cfg.smoothing.epsilon,
        contraction_l_hat,
        contraction_ratio,
        contraction_stable,
    })
}
