//! Newton's method on the square defining system with one free parameter.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{assemble_b_at, residual, HopfPoint, HopfSolution};
use crate::error::{Error, Result};
use crate::model::{bundle_derivatives, ModelSpec};
use crate::numkernel;
use crate::spectrum::{char_roots, leading_pair, CharRoot};
use crate::steady::{solve_steady, SteadyPoint};

pub const MAX_ITERATIONS: usize = 50;
/// Inverse condition number below which a solution is reported as singular.
pub const REGULARITY_RCOND: f64 = 1e-13;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 30;

/// Starting data for [`solve_hopf`].
#[derive(Debug, Clone)]
pub enum HopfSeed {
    /// A steady state and a complex characteristic root there.
    Root { steady: SteadyPoint, root: CharRoot },
    /// An earlier solution (possibly at a different `sigma`).
    Solution(HopfSolution),
}

/// Turns a seed into a point of the defining system. From a root, the
/// eigenvector is rotated so that its real and imaginary parts are
/// orthogonal and then scaled to unit norm.
pub fn initial_point(seed: &HopfSeed) -> Result<HopfPoint> {
    match seed {
        HopfSeed::Solution(s) => Ok(s.point.clone()),
        HopfSeed::Root { steady, root } => {
            let mut v = root.eigvec.clone();
            let mut omega = root.lambda.im;
            if omega < 0.0 {
                omega = -omega;
                v = v.map(|c| c.conj());
            }
            if omega == 0.0 {
                return Err(Error::input(
                    "seed root is real; a complex root is required",
                ));
            }
            // sum v_j^2 = a'a - b'b + 2i a'b; rotating by exp(i theta) multiplies it by exp(2i theta)
            let sq: Complex64 = v.iter().map(|c| c * c).sum();
            let theta = if sq.norm() == 0.0 {
                0.0
            } else {
                -0.5 * sq.arg()
            };
            let rot = Complex64::from_polar(1.0, theta);
            let w = v.map(|c| c * rot);
            let a = w.map(|c| c.re);
            let b = w.map(|c| c.im);
            let norm = (a.norm_squared() + b.norm_squared()).sqrt();
            if norm == 0.0 {
                return Err(Error::input("seed eigenvector is zero"));
            }
            Ok(HopfPoint {
                x_tilde: steady.x_tilde.clone(),
                alpha: steady.alpha.clone(),
                omega,
                a: a / norm,
                b: b / norm,
            })
        }
    }
}

/// Column indices of the square system: `(x_tilde, a, b, omega)` plus one parameter.
fn square_columns(n: usize, free: usize) -> Vec<usize> {
    let mut cols: Vec<usize> = (0..=3 * n).collect();
    cols.push(3 * n + 1 + free);
    cols
}

fn square_jacobian(
    model: &ModelSpec,
    point: &HopfPoint,
    sigma: f64,
    cols: &[usize],
) -> Result<DMatrix<f64>> {
    let j = assemble_b_at(model, point, sigma)?.jacobian();
    Ok(j.select_columns(cols))
}

pub(crate) fn canonical(mut point: HopfPoint) -> HopfPoint {
    if point.omega < 0.0 {
        point.omega = -point.omega;
        point.b = -point.b;
    }
    point
}

/// Solves the defining system at margin `sigma`, releasing parameter
/// component `free` (default: the last one).
pub fn solve_hopf(
    model: &ModelSpec,
    sigma: f64,
    seed: &HopfSeed,
    free: Option<usize>,
) -> Result<HopfSolution> {
    let n = model.n();
    let free = free.unwrap_or(model.n_alpha() - 1);
    if free >= model.n_alpha() {
        return Err(Error::input(format!(
            "free parameter index {free} out of range (n_alpha = {})",
            model.n_alpha()
        )));
    }
    if !sigma.is_finite() {
        return Err(Error::input("sigma must be finite"));
    }
    let cols = square_columns(n, free);
    let mut point = initial_point(seed)?;
    let mut f = residual(model, &point, sigma)?;

    for iteration in 0..=MAX_ITERATIONS {
        let fnorm = f.amax();
        log::debug!(
            "hopf newton {iteration}: |F| = {fnorm:.3e}, omega = {:.12}",
            point.omega
        );
        if !fnorm.is_finite() {
            return Err(Error::numerical("defining-system residual is not finite"));
        }
        if point.converged(&f) {
            let point = canonical(point);
            let jac = square_jacobian(model, &point, sigma, &cols)?;
            let rcond = numkernel::inverse_condition(&jac)?;
            if rcond < REGULARITY_RCOND {
                return Err(Error::regularity(format!(
                    "not a regular solution (inverse condition {rcond:.3e})"
                )));
            }
            let tau_values = model.delays(&point.x_tilde, &point.alpha)?;
            let residual_norm = residual(model, &point, sigma)?.amax();
            return Ok(HopfSolution {
                point,
                sigma,
                residual_norm,
                tau_values,
                iterations: iteration,
            });
        }
        if iteration == MAX_ITERATIONS {
            break;
        }

        let jac = square_jacobian(model, &point, sigma, &cols)?;
        let delta = numkernel::solve(&jac, &(-&f)).map_err(|e| match e {
            Error::Regularity(_) => {
                Error::regularity("singular Newton matrix for the defining system")
            }
            e => e,
        })?;

        let u = point.pack();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let candidate = HopfPoint::unpack(n, &shifted(&u, &cols, &(&delta * t)));
            // a trial point outside the model domain counts as a rejected step
            if let Ok(ft) = residual(model, &candidate, sigma) {
                if ft.amax() <= (1.0 - ARMIJO_C * t) * fnorm {
                    point = candidate;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                what: "modified Hopf Newton (line search)",
                iterations: iteration + 1,
                residual: fnorm,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "modified Hopf Newton",
        iterations: MAX_ITERATIONS,
        residual: f.amax(),
    })
}

/// Steady state, spectrum and leading pair at `alpha`, then [`solve_hopf`].
pub fn find_hopf(
    model: &ModelSpec,
    alpha: &DVector<f64>,
    sigma: f64,
    free: Option<usize>,
    x_guess: Option<&DVector<f64>>,
    order: usize,
) -> Result<HopfSolution> {
    let guess = x_guess
        .cloned()
        .unwrap_or_else(|| DVector::zeros(model.n()));
    let steady = solve_steady(model, alpha, &guess)?;
    let bundle = bundle_derivatives(model, &steady.x_tilde, alpha)?;
    let spectrum = char_roots(&steady, &bundle, order)?;
    let root = leading_pair(&spectrum.roots)?;
    solve_hopf(model, sigma, &HopfSeed::Root { steady, root }, free)
}

/// Applies `delta` (indexed like `cols`) to a packed point.
fn shifted(u: &DVector<f64>, cols: &[usize], delta: &DVector<f64>) -> DVector<f64> {
    let mut out = u.clone();
    for (k, &c) in cols.iter().enumerate() {
        out[c] += delta[k];
    }
    out
}
