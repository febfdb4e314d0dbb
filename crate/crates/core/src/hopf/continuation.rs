//! Pseudo-arclength continuation on the manifold of modified Hopf points.
//!
//! The parameters are split into active and frozen components; the manifold
//! restricted to the active ones has dimension `k - 1`. Each step predicts
//! along a unit tangent and corrects with Newton on the defining system plus
//! the arclength condition `t'(u - u_pred) = 0`. For `k > 2` the corrector
//! system is underdetermined and is solved in the minimum-norm sense.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::solve::canonical;
use super::{assemble_b_at, residual, HopfPoint, HopfSolution};
use crate::error::{Error, Result};
use crate::model::{bundle_derivatives, ModelSpec};
use crate::numkernel;
use crate::spectrum::{char_roots, leading_pair};
use crate::steady::solve_steady;

const CORRECTOR_ITERATIONS: usize = 15;
/// Step size may shrink to `h / 2^MAX_HALVINGS` before the run stalls.
const MAX_HALVINGS: usize = 6;
/// Tolerance of the iso-margin check on the leading pair.
pub const LEADING_DRIFT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ContinuationOptions {
    /// Initial direction in full parameter coordinates; projected onto the tangent space.
    pub direction: DVector<f64>,
    pub steps: usize,
    pub h: f64,
    /// Active parameter indices; `None` means all.
    pub active: Option<Vec<usize>>,
    /// Recompute the leading pair at each point and warn when it drifts from `sigma`.
    pub check_leading: bool,
    /// Collocation order for the leading-pair check.
    pub order: usize,
}

impl ContinuationOptions {
    pub fn new(direction: DVector<f64>, steps: usize, h: f64) -> Self {
        ContinuationOptions {
            direction,
            steps,
            h,
            active: None,
            check_leading: false,
            order: crate::spectrum::DEFAULT_ORDER,
        }
    }

    pub fn with_active(mut self, active: Vec<usize>) -> Self {
        self.active = Some(active);
        self
    }

    pub fn with_leading_check(mut self, on: bool) -> Self {
        self.check_leading = on;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuationRun {
    /// Starting point followed by every accepted point.
    pub points: Vec<HopfSolution>,
    /// Step size used for each accepted point.
    pub step_sizes: Vec<f64>,
    pub warnings: Vec<String>,
}

struct Frame {
    n: usize,
    cols: Vec<usize>,
    alpha_cols: Vec<usize>,
}

impl Frame {
    fn new(model: &ModelSpec, active: &[usize]) -> Self {
        let n = model.n();
        let mut cols: Vec<usize> = (0..=3 * n).collect();
        let alpha_cols: Vec<usize> = (0..active.len()).map(|k| 3 * n + 1 + k).collect();
        cols.extend(active.iter().map(|&k| 3 * n + 1 + k));
        Frame {
            n,
            cols,
            alpha_cols,
        }
    }

    fn reduce(&self, u: &DVector<f64>) -> DVector<f64> {
        u.select_rows(&self.cols)
    }

    fn expand(&self, template: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = template.clone();
        for (k, &c) in self.cols.iter().enumerate() {
            out[c] = v[k];
        }
        out
    }
}

/// Unit tangent closest to `hint` within the tangent space at `point`.
fn tangent(
    model: &ModelSpec,
    frame: &Frame,
    point: &HopfPoint,
    sigma: f64,
    hint: &DVector<f64>,
    expected_dim: usize,
) -> Result<DVector<f64>> {
    let jac = assemble_b_at(model, point, sigma)?
        .jacobian()
        .select_columns(&frame.cols);
    let ns = numkernel::nullspace(&jac, numkernel::DEFAULT_RTOL)?;
    if ns.dim() != expected_dim {
        return Err(Error::regularity(format!(
            "tangent space has dimension {}, expected {expected_dim}",
            ns.dim()
        )));
    }
    let t = &ns.basis * (ns.basis.transpose() * hint);
    let norm = t.norm();
    if norm <= 1e-10 * hint.norm() {
        return Err(Error::input(
            "continuation direction is normal to the manifold",
        ));
    }
    Ok(t / norm)
}

fn correct(
    model: &ModelSpec,
    frame: &Frame,
    template: &DVector<f64>,
    sigma: f64,
    predicted: &DVector<f64>,
    t: &DVector<f64>,
) -> Result<(HopfPoint, usize)> {
    let rows = 3 * frame.n + 3;
    let mut v = predicted.clone();
    for iteration in 0..=CORRECTOR_ITERATIONS {
        let point = HopfPoint::unpack(frame.n, &frame.expand(template, &v));
        let f = residual(model, &point, sigma)?;
        let arc = t.dot(&(&v - predicted));
        let tol = point.tolerance();
        if point.converged(&f) && arc.abs() <= tol {
            return Ok((point, iteration));
        }
        if iteration == CORRECTOR_ITERATIONS || !f.amax().is_finite() {
            break;
        }
        let jac = assemble_b_at(model, &point, sigma)?
            .jacobian()
            .select_columns(&frame.cols);
        let mut g = DMatrix::zeros(rows, frame.cols.len());
        g.rows_mut(0, rows - 1).copy_from(&jac);
        g.row_mut(rows - 1).copy_from(&t.transpose());
        let mut rhs = DVector::zeros(rows);
        rhs.rows_mut(0, rows - 1).copy_from(&(-f));
        rhs[rows - 1] = -arc;
        let delta = if g.is_square() {
            numkernel::solve(&g, &rhs)?
        } else {
            numkernel::lstsq(&g, &rhs, 1e-12)?
        };
        v += delta;
    }
    Err(Error::NonConvergence {
        what: "continuation corrector",
        iterations: CORRECTOR_ITERATIONS,
        residual: f64::NAN,
    })
}

fn leading_drift(model: &ModelSpec, sol: &HopfSolution, order: usize) -> Option<String> {
    let check = || -> Result<f64> {
        let steady = solve_steady(model, &sol.point.alpha, &sol.point.x_tilde)?;
        let bundle = bundle_derivatives(model, &steady.x_tilde, &steady.alpha)?;
        let spectrum = char_roots(&steady, &bundle, order)?;
        Ok(leading_pair(&spectrum.roots)?.lambda.re)
    };
    match check() {
        Ok(re) if (re - sol.sigma).abs() <= LEADING_DRIFT_TOL => None,
        Ok(re) => Some(format!(
            "leading pair real part {re:.9} differs from sigma = {}; the tracked pair is no longer leading",
            sol.sigma
        )),
        Err(e) => Some(format!("leading pair check failed: {e}")),
    }
}

/// Traces the manifold from `start`. The returned run begins with `start`.
pub fn continue_manifold(
    model: &ModelSpec,
    start: &HopfSolution,
    opts: &ContinuationOptions,
) -> Result<ContinuationRun> {
    let n_alpha = model.n_alpha();
    let active: Vec<usize> = opts
        .active
        .clone()
        .unwrap_or_else(|| (0..n_alpha).collect());
    if active.iter().any(|&k| k >= n_alpha) {
        return Err(Error::input("active parameter index out of range"));
    }
    let mut sorted = active.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != active.len() {
        return Err(Error::input("duplicate active parameter index"));
    }
    if active.len() < 2 {
        return Err(Error::input(
            "continuation needs at least two active parameters",
        ));
    }
    if opts.direction.len() != n_alpha {
        return Err(Error::input(format!(
            "direction must have length {n_alpha}"
        )));
    }
    if !(opts.h > 0.0 && opts.h.is_finite()) {
        return Err(Error::input("step size must be positive"));
    }

    let sigma = start.sigma;
    let frame = Frame::new(model, &active);
    let expected_dim = active.len() - 1;
    let mut run = ContinuationRun {
        points: vec![start.clone()],
        step_sizes: Vec::new(),
        warnings: Vec::new(),
    };
    if opts.steps == 0 {
        return Ok(run);
    }

    let template = start.point.pack();
    let mut v = frame.reduce(&template);
    let mut hint = DVector::zeros(frame.cols.len());
    for (k, &c) in frame.alpha_cols.iter().enumerate() {
        hint[c] = opts.direction[active[k]];
    }
    let mut t = tangent(model, &frame, &start.point, sigma, &hint, expected_dim)?;

    for step in 1..=opts.steps {
        let mut h = opts.h;
        let mut outcome = None;
        let mut last_error = None;
        for _ in 0..=MAX_HALVINGS {
            let predicted = &v + &t * h;
            match correct(model, &frame, &template, sigma, &predicted, &t) {
                Ok((point, iterations)) => {
                    let reduced = frame.reduce(&point.pack());
                    if (&reduced - &predicted).norm() <= h && point.omega > 0.0 {
                        outcome = Some((point, iterations));
                        break;
                    }
                    last_error = Some(format!(
                        "corrector left the step neighbourhood at h = {h:.3e}"
                    ));
                }
                Err(e) => last_error = Some(e.to_string()),
            }
            h *= 0.5;
        }
        let Some((point, iterations)) = outcome else {
            let reason = format!(
                "step {step}: no corrector convergence down to h = {:.3e} ({})",
                opts.h / f64::from(1u32 << MAX_HALVINGS),
                last_error.unwrap_or_default()
            );
            return Err(Error::Stalled {
                reason,
                partial: run.points,
            });
        };

        let point = canonical(point);
        let sol = HopfSolution {
            residual_norm: residual(model, &point, sigma)?.amax(),
            tau_values: model.delays(&point.x_tilde, &point.alpha)?,
            point,
            sigma,
            iterations,
        };
        let previous = t.clone();
        t = match tangent(model, &frame, &sol.point, sigma, &previous, expected_dim) {
            Ok(t) => t,
            Err(e) => {
                return Err(Error::Stalled {
                    reason: format!("step {step}: {e}"),
                    partial: run.points,
                });
            }
        };
        if opts.check_leading {
            if let Some(w) = leading_drift(model, &sol, opts.order) {
                log::warn!("step {step}: {w}");
                run.warnings.push(format!("step {step}: {w}"));
            }
        }
        v = frame.reduce(&sol.point.pack());
        run.points.push(sol);
        run.step_sizes.push(h);
    }
    Ok(run)
}
