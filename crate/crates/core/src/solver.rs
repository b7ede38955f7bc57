//! Box-constrained local optimal control solver.
//!
//! Each agent's finite-horizon problem has only box constraints on the
//! inputs, so it is solved with a projected quasi-Newton method: a dense BFGS
//! model restricted to the free variables, an Armijo search along the
//! projected path, and a steepest-descent fallback.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cost::{CostModel, HorizonPlan};
use crate::dynamics::{AgentState, ControlInput};
use crate::{Error, Result, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub horizon: usize,
    pub max_iters: usize,
    /// Projected-gradient tolerance, relative to `max(1, |J|)`.
    pub grad_tol: f64,
    /// Objective-decrease tolerance of one accepted step, relative to `max(1, |J|)`.
    pub f_tol: f64,
    pub step_tol: f64,
    pub armijo_c: f64,
    pub backtrack_ratio: f64,
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            horizon: 15,
            max_iters: 150,
            grad_tol: 1e-4,
            f_tol: 1e-6,
            step_tol: 1e-8,
            armijo_c: 1e-4,
            backtrack_ratio: 0.5,
            max_backtracks: 25,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("solver.horizon", "must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("solver.max_iters", "must be at least 1"));
        }
        for (name, v) in [
            ("solver.grad_tol", self.grad_tol),
            ("solver.f_tol", self.f_tol),
            ("solver.step_tol", self.step_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if !(self.armijo_c > 0.0 && self.armijo_c <= 0.5) {
            return Err(Error::invalid("solver.armijo_c", "must lie in (0, 0.5]"));
        }
        if !(self.backtrack_ratio > 0.0 && self.backtrack_ratio < 1.0) {
            return Err(Error::invalid("solver.backtrack_ratio", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    GradientTolerance,
    FunctionTolerance,
    SmallStep,
    IterationLimit,
    LineSearchFailed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub status: SolveStatus,
    /// Infinity norm of the projected gradient at the returned point.
    pub final_grad_norm: f64,
    pub initial_objective: f64,
    pub objective: f64,
    pub barrier_capped: bool,
    pub wall_time: Duration,
}

/// Outcome of [`minimize_in_box`].
#[derive(Clone, Debug, PartialEq)]
pub struct BoxMinimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub initial_f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

impl BoxMinimum {
    pub fn converged(&self) -> bool {
        matches!(
            self.status,
            SolveStatus::GradientTolerance | SolveStatus::FunctionTolerance | SolveStatus::SmallStep
        )
    }
}

/// Relative width of the band around `f(x)` treated as rounding noise.
const ROUNDOFF_BAND: f64 = 1e-12;

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, l), u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*l, *u);
    }
}

fn projected_gradient(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((xi, gi), (l, u))| {
            if (*xi <= *l && *gi > 0.0) || (*xi >= *u && *gi < 0.0) {
                0.0
            } else {
                *gi
            }
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quasi-Newton direction on the free set; `None` if the reduced model is not positive definite.
fn newton_direction(b: &DMatrix<f64>, g: &[f64], pg: &[f64]) -> Option<Vec<f64>> {
    let free: Vec<usize> = (0..g.len()).filter(|&i| pg[i] != 0.0).collect();
    if free.is_empty() {
        return None;
    }
    let bf = DMatrix::from_fn(free.len(), free.len(), |r, c| b[(free[r], free[c])]);
    let rhs = DVector::from_iterator(free.len(), free.iter().map(|&i| -g[i]));
    let sol = bf.cholesky()?.solve(&rhs);
    let mut d = vec![0.0; g.len()];
    for (k, &i) in free.iter().enumerate() {
        d[i] = sol[k];
    }
    Some(d)
}

/// Minimise a smooth function over a box with projected BFGS.
///
/// The returned point is never worse than the projected start. Evaluation
/// errors at trial points are treated as rejected steps.
pub fn minimize_in_box<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], cfg: &SolverConfig) -> Result<BoxMinimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::LengthMismatch {
            what: "bounds",
            expected: n,
            got: lower.len().min(upper.len()),
        });
    }
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("objective at initial point"));
    }
    let initial_f = fx;
    let mut b = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let mut status = SolveStatus::IterationLimit;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        let pg = projected_gradient(&x, &g, lower, upper);
        if inf_norm(&pg) <= cfg.grad_tol * fx.abs().max(1.0) {
            status = SolveStatus::GradientTolerance;
            break;
        }
        iterations += 1;

        let mut d = newton_direction(&b, &g, &pg).unwrap_or_else(|| pg.iter().map(|v| -v).collect());
        if dot(&g, &d) >= 0.0 {
            d = pg.iter().map(|v| -v).collect();
        }

        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..=cfg.max_backtracks {
            let mut xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            project(&mut xt, lower, upper);
            let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
            if inf_norm(&s) == 0.0 {
                break;
            }
            if let Ok((ft, gt)) = f(&xt) {
                if ft.is_finite() && gt.iter().all(|v| v.is_finite()) {
                    if ft <= fx + cfg.armijo_c * dot(&g, &s) {
                        accepted = Some((xt, ft, gt, s));
                        break;
                    }
                    // Within rounding of fx the sufficient-decrease test is
                    // blind; use its derivative form (approximate Wolfe) instead.
                    if ft <= fx + ROUNDOFF_BAND * fx.abs().max(1.0)
                        && dot(&gt, &s) <= (1.0 - 2.0 * cfg.armijo_c) * -dot(&g, &s)
                    {
                        accepted = Some((xt, ft, gt, s));
                        break;
                    }
                }
            }
            alpha *= cfg.backtrack_ratio;
        }

        let Some((xt, ft, gt, s)) = accepted else {
            if scaled || b != DMatrix::identity(n, n) {
                // curvature model failed; restart from steepest descent once
                b = DMatrix::identity(n, n);
                scaled = false;
                continue;
            }
            status = SolveStatus::LineSearchFailed;
            break;
        };

        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let (sn, yn) = (dot(&s, &s).sqrt(), dot(&y, &y).sqrt());
        if sy > 1e-10 * sn * yn {
            let sv = DVector::from_column_slice(&s);
            let yv = DVector::from_column_slice(&y);
            if !scaled {
                b = DMatrix::identity(n, n) * (dot(&y, &y) / sy);
                scaled = true;
            }
            let bs = &b * &sv;
            let sbs = sv.dot(&bs);
            if sbs > 0.0 {
                b += &yv * yv.transpose() / sy - &bs * bs.transpose() / sbs;
            }
        }

        let step = inf_norm(&s);
        let decrease = fx - ft;
        x = xt;
        fx = ft;
        g = gt;
        if step < cfg.step_tol {
            status = SolveStatus::SmallStep;
            break;
        }
        // A decrease tolerance below rounding cannot tell a stall from
        // progress, so it is ignored.
        if cfg.f_tol > ROUNDOFF_BAND && decrease <= cfg.f_tol * fx.abs().max(1.0) {
            status = SolveStatus::FunctionTolerance;
            break;
        }
    }

    let grad_norm = inf_norm(&projected_gradient(&x, &g, lower, upper));
    if status == SolveStatus::IterationLimit && grad_norm <= cfg.grad_tol * fx.abs().max(1.0) {
        status = SolveStatus::GradientTolerance;
    }
    Ok(BoxMinimum {
        x,
        f: fx,
        initial_f,
        grad_norm,
        iterations,
        status,
    })
}

/// Inputs to one agent's finite-horizon problem.
#[derive(Clone, Copy, Debug)]
pub struct LocalProblem<'a> {
    pub x0: AgentState,
    /// Reference positions for `x(1), ..., x(N)`.
    pub refs: &'a [Vec3],
    /// `neighbors[j][k]`: communication neighbour `j` at stage `k`, held fixed.
    pub neighbors: &'a [Vec<Vec3>],
    /// Further predicted tracks that enter only the safety barrier.
    pub safety_only: &'a [Vec<Vec3>],
    pub model: &'a CostModel,
}

impl LocalProblem<'_> {
    pub fn horizon(&self) -> usize {
        self.refs.len()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let p = &self.model.params;
        let hi = [p.a_max, p.a_max, p.a_max, p.omega_max];
        let upper: Vec<f64> = (0..self.horizon()).flat_map(|_| hi).collect();
        let lower = upper.iter().map(|v| -v).collect();
        (lower, upper)
    }
}

fn unflatten(v: &[f64]) -> Vec<ControlInput> {
    v.chunks(ControlInput::DIM).map(ControlInput::from_slice).collect()
}

/// Solve one agent's local problem, starting from `warm_start` when given.
pub fn solve_fhocp(
    problem: &LocalProblem,
    warm_start: Option<&[ControlInput]>,
    cfg: &SolverConfig,
    stamp: u64,
) -> Result<(HorizonPlan, SolveDiagnostics)> {
    let started = Instant::now();
    let n = problem.horizon();
    if n == 0 {
        return Err(Error::EmptyHorizon);
    }
    let x0: Vec<f64> = match warm_start {
        Some(w) if w.len() == n => w.iter().flat_map(|u| u.to_array()).collect(),
        Some(w) => {
            return Err(Error::LengthMismatch {
                what: "warm start",
                expected: n,
                got: w.len(),
            })
        }
        None => vec![0.0; n * ControlInput::DIM],
    };
    let (lower, upper) = problem.bounds();
    let mut capped_at_best = false;
    let objective = |v: &[f64]| {
        let eval = problem
            .model
            .horizon_cost_and_gradient_with_safety(&problem.x0, &unflatten(v), problem.refs, problem.neighbors, problem.safety_only)?;
        Ok((eval.cost, eval.gradient))
    };
    let min = minimize_in_box(objective, &x0, &lower, &upper, cfg)?;
    let inputs = unflatten(&min.x);
    let plan = HorizonPlan::from_inputs(&problem.x0, inputs, &problem.model.params, stamp)?;
    if problem.model.weights.w_safe > 0.0 {
        let eval = problem
            .model
            .horizon_cost_and_gradient_with_safety(&problem.x0, &plan.inputs, problem.refs, problem.neighbors, problem.safety_only)?;
        capped_at_best = eval.barrier_capped;
    }
    let diag = SolveDiagnostics {
        iterations: min.iterations,
        converged: min.converged(),
        status: min.status,
        final_grad_norm: min.grad_norm,
        initial_objective: min.initial_f,
        objective: min.f,
        barrier_capped: capped_at_best,
        wall_time: started.elapsed(),
    };
    Ok((plan, diag))
}

/// Shift a plan one step: drop the first input and repeat the last.
pub fn shift_warm_start(inputs: &[ControlInput]) -> Vec<ControlInput> {
    match inputs.split_first() {
        None => Vec::new(),
        Some((_, rest)) => {
            let mut out = rest.to_vec();
            out.push(*inputs.last().unwrap_or(&ControlInput::zero()));
            out
        }
    }
}
