//! Steady states `f(x, x, ..., x, alpha) = 0` by damped Newton.
//!
//! At a steady configuration all delayed arguments equal the current state,
//! so the Jacobian of `x -> f(x, ..., x, alpha)` is `sum_i A_i`. The delays
//! only select which argument is read; their dependence on `x` does not
//! enter this map.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::numkernel;
use crate::serial::dvec;

pub const MAX_ITERATIONS: usize = 50;
pub const RESIDUAL_TOL: f64 = 1e-10;
const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1.0 / (1u64 << 30) as f64;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteadyPoint {
    #[serde(with = "dvec")]
    pub x_tilde: DVector<f64>,
    #[serde(with = "dvec")]
    pub alpha: DVector<f64>,
    /// `tau_0..tau_m` at `(x_tilde, alpha)`.
    pub tau_values: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Norms of the accepted Newton increments.
    pub increments: Vec<f64>,
}

fn tolerance(x: &DVector<f64>) -> f64 {
    RESIDUAL_TOL * (1.0 + x.amax())
}

pub fn solve_steady(
    model: &ModelSpec,
    alpha: &DVector<f64>,
    x_guess: &DVector<f64>,
) -> Result<SteadyPoint> {
    model.check_alpha(alpha)?;
    model.check_state(x_guess)?;

    let mut x = x_guess.clone();
    let mut f = model.steady_rhs(&x, alpha);
    let mut increments = Vec::new();
    for iteration in 0..=MAX_ITERATIONS {
        let fnorm = f.amax();
        log::debug!("steady newton {iteration}: |f| = {fnorm:.3e}");
        if !fnorm.is_finite() {
            return Err(Error::numerical("steady-state residual is not finite"));
        }
        if fnorm <= tolerance(&x) {
            let tau_values = model.delays(&x, alpha)?;
            return Ok(SteadyPoint {
                x_tilde: x,
                alpha: alpha.clone(),
                tau_values,
                residual_norm: fnorm,
                iterations: iteration,
                increments,
            });
        }
        if iteration == MAX_ITERATIONS {
            break;
        }

        let d = model.first_derivatives(&x, alpha)?;
        let jac = d.a.iter().skip(1).fold(d.a[0].clone(), |acc, a| acc + a);
        let delta = numkernel::solve(&jac, &(-&f)).map_err(|e| match e {
            Error::Regularity(_) => Error::regularity("singular steady-state Newton matrix"),
            e => e,
        })?;

        let mut t = 1.0;
        loop {
            let trial = &x + &delta * t;
            let ft = model.steady_rhs(&trial, alpha);
            if ft.amax() <= (1.0 - ARMIJO_C * t) * fnorm {
                x = trial;
                f = ft;
                increments.push(delta.norm() * t);
                break;
            }
            t *= 0.5;
            if t < MIN_STEP {
                return Err(Error::NonConvergence {
                    what: "steady-state Newton (line search)",
                    iterations: iteration + 1,
                    residual: fnorm,
                });
            }
        }
    }
    Err(Error::NonConvergence {
        what: "steady-state Newton",
        iterations: MAX_ITERATIONS,
        residual: f.amax(),
    })
}
