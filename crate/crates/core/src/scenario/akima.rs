//! Akima spline interpolation through waypoints.
//!
//! Knot slopes use Akima's weighted average of neighbouring secant slopes,
//! with two secants extrapolated linearly past each end. Segments are cubic
//! Hermite, so the interpolant is C1 and passes through every knot.

use crate::{Error, Result, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waypoint {
    /// Time (s).
    pub time: f64,
    pub position: Vec3,
}

impl Waypoint {
    pub fn new(time: f64, position: Vec3) -> Self {
        Self { time, position }
    }
}

/// One-dimensional Akima spline.
#[derive(Clone, Debug, PartialEq)]
pub struct Akima1d {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

impl Akima1d {
    /// Knots must be strictly increasing in `x`.
    ///
    /// Two knots give a straight line; three or four use the same
    /// extrapolated end secants as the general case.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                what: "spline ordinates",
                expected: x.len(),
                got: y.len(),
            });
        }
        if x.is_empty() {
            return Err(Error::invalid("waypoints", "need at least one waypoint"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("waypoints", "times must be strictly increasing"));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("waypoints"));
        }
        let slopes = knot_slopes(&x, &y);
        Ok(Self { x, y, slopes })
    }

    pub fn knot_slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Value at `t`; outside the knot range the end values are held.
    pub fn eval(&self, t: f64) -> f64 {
        self.eval_with_derivative(t).0
    }

    /// Value and first derivative; the derivative is zero outside the range.
    pub fn eval_with_derivative(&self, t: f64) -> (f64, f64) {
        let n = self.x.len();
        if n == 1 || t <= self.x[0] {
            return (self.y[0], 0.0);
        }
        if t >= self.x[n - 1] {
            return (self.y[n - 1], 0.0);
        }
        // segment i with x[i] <= t < x[i + 1]
        let i = self.x.partition_point(|&v| v <= t) - 1;
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let value = (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1;
        let deriv = ((6.0 * s2 - 6.0 * s) * y0 + (3.0 * s2 - 4.0 * s + 1.0) * m0 + (-6.0 * s2 + 6.0 * s) * y1 + (3.0 * s2 - 2.0 * s) * m1) / h;
        (value, deriv)
    }
}

fn knot_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 1 {
        return vec![0.0];
    }
    let secants: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
    if n == 2 {
        return vec![secants[0]; 2];
    }
    // m[k + 2] is the secant of segment k; two extrapolated secants per side.
    let mut m = Vec::with_capacity(n + 3);
    let (a, b) = (secants[0], secants[1]);
    let before1 = 2.0 * a - b;
    m.push(2.0 * before1 - a);
    m.push(before1);
    m.extend_from_slice(&secants);
    let (c, d) = (secants[n - 2], secants[n - 3]);
    let after1 = 2.0 * c - d;
    m.push(after1);
    m.push(2.0 * after1 - c);

    (0..n)
        .map(|i| {
            let (mm2, mm1, m0, mp1) = (m[i], m[i + 1], m[i + 2], m[i + 3]);
            let w1 = (mp1 - m0).abs();
            let w2 = (mm1 - mm2).abs();
            if w1 + w2 == 0.0 {
                0.5 * (mm1 + m0)
            } else {
                (w1 * mm1 + w2 * m0) / (w1 + w2)
            }
        })
        .collect()
}

/// Per-axis Akima interpolation of a waypoint path.
#[derive(Clone, Debug, PartialEq)]
pub struct AkimaPath {
    axes: [Akima1d; 3],
}

impl AkimaPath {
    pub fn new(waypoints: &[Waypoint]) -> Result<Self> {
        let t: Vec<f64> = waypoints.iter().map(|w| w.time).collect();
        let axis = |k: usize| Akima1d::new(t.clone(), waypoints.iter().map(|w| w.position[k]).collect());
        Ok(Self {
            axes: [axis(0)?, axis(1)?, axis(2)?],
        })
    }

    /// Position at time `t`, clamped to the end waypoints outside the range.
    pub fn position(&self, t: f64) -> Vec3 {
        Vec3::new(self.axes[0].eval(t), self.axes[1].eval(t), self.axes[2].eval(t))
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        Vec3::new(
            self.axes[0].eval_with_derivative(t).1,
            self.axes[1].eval_with_derivative(t).1,
            self.axes[2].eval_with_derivative(t).1,
        )
    }
}
