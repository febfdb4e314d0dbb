//! Modified Hopf points: steady states whose leading complex pair sits at
//! `lambda = sigma +- i omega` for a prescribed real part `sigma`.
//!
//! The defining system in the unknowns `(x_tilde, a, b, omega, alpha)`:
//!
//! ```text
//! f(x, ..., x, alpha)                                   = 0   (n rows)
//! sigma a - omega b - sum_i A_i (c_i a + s_i b)          = 0   (n rows)
//! omega a + sigma b - sum_i A_i (c_i b - s_i a)          = 0   (n rows)
//! a'a + b'b - 1                                         = 0
//! a'b                                                   = 0
//! ```
//!
//! with `c_i = exp(-sigma tau_i) cos(omega tau_i)` and
//! `s_i = exp(-sigma tau_i) sin(omega tau_i)`. Vectors of unknowns are always
//! packed in the order `(x_tilde, a, b, omega, alpha)`, which is also the
//! block-row order of [`BMatrix`].

mod bmatrix;
mod continuation;
mod solve;

pub use bmatrix::{assemble_b, assemble_b_at, BMatrix, BLOCK_COLS, BLOCK_ROWS};
pub use continuation::{continue_manifold, ContinuationOptions, ContinuationRun};
pub use solve::{find_hopf, initial_point, solve_hopf, HopfSeed, MAX_ITERATIONS};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::serial::dvec;

/// Residual tolerance before scaling by `1 + |x| + |a| + |b|`.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// A candidate point of the defining system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfPoint {
    #[serde(with = "dvec")]
    pub x_tilde: DVector<f64>,
    #[serde(with = "dvec")]
    pub alpha: DVector<f64>,
    pub omega: f64,
    #[serde(with = "dvec")]
    pub a: DVector<f64>,
    #[serde(with = "dvec")]
    pub b: DVector<f64>,
}

impl HopfPoint {
    pub fn n(&self) -> usize {
        self.x_tilde.len()
    }

    pub fn n_alpha(&self) -> usize {
        self.alpha.len()
    }

    /// `(x_tilde, a, b, omega, alpha)` as one vector of length `3n + 1 + n_alpha`.
    pub fn pack(&self) -> DVector<f64> {
        let n = self.n();
        let mut u = DVector::zeros(3 * n + 1 + self.n_alpha());
        u.rows_mut(0, n).copy_from(&self.x_tilde);
        u.rows_mut(n, n).copy_from(&self.a);
        u.rows_mut(2 * n, n).copy_from(&self.b);
        u[3 * n] = self.omega;
        u.rows_mut(3 * n + 1, self.n_alpha()).copy_from(&self.alpha);
        u
    }

    pub fn unpack(n: usize, u: &DVector<f64>) -> Self {
        let n_alpha = u.len() - 3 * n - 1;
        HopfPoint {
            x_tilde: u.rows(0, n).into_owned(),
            a: u.rows(n, n).into_owned(),
            b: u.rows(2 * n, n).into_owned(),
            omega: u[3 * n],
            alpha: u.rows(3 * n + 1, n_alpha).into_owned(),
        }
    }

    /// Scale used by the residual tolerance.
    pub fn scale(&self) -> f64 {
        1.0 + self.x_tilde.norm() + self.a.norm() + self.b.norm()
    }

    pub fn tolerance(&self) -> f64 {
        RESIDUAL_TOL * self.scale()
    }

    /// Whether `f = residual(self)` meets the scaled tolerance, with the
    /// norm and phase rows held to the unscaled one.
    pub fn converged(&self, f: &DVector<f64>) -> bool {
        let n = self.n();
        f.amax() <= self.tolerance()
            && f[3 * n].abs() <= RESIDUAL_TOL
            && f[3 * n + 1].abs() <= RESIDUAL_TOL
    }

    fn check(&self, model: &ModelSpec) -> Result<()> {
        model.check_state(&self.x_tilde)?;
        model.check_alpha(&self.alpha)?;
        if self.a.len() != model.n() || self.b.len() != model.n() {
            return Err(Error::input(format!(
                "eigenvector parts must have length {}",
                model.n()
            )));
        }
        if !self.omega.is_finite() {
            return Err(Error::input("omega is not finite"));
        }
        Ok(())
    }
}

/// A converged point of the defining system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfSolution {
    #[serde(flatten)]
    pub point: HopfPoint,
    pub sigma: f64,
    /// Infinity norm of the residual.
    pub residual_norm: f64,
    pub tau_values: Vec<f64>,
    pub iterations: usize,
}

impl HopfSolution {
    pub fn x_tilde(&self) -> &DVector<f64> {
        &self.point.x_tilde
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.point.alpha
    }

    pub fn omega(&self) -> f64 {
        self.point.omega
    }
}

/// `s_i = exp(-sigma tau_i) sin(omega tau_i)`, `c_i = exp(-sigma tau_i) cos(omega tau_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigWeights {
    pub s: Vec<f64>,
    pub c: Vec<f64>,
}

impl TrigWeights {
    pub fn new(tau: &[f64], sigma: f64, omega: f64) -> Self {
        let (s, c) = tau
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                if i == 0 {
                    (0.0, 1.0)
                } else {
                    let e = (-sigma * t).exp();
                    let (sn, cs) = (omega * t).sin_cos();
                    (e * sn, e * cs)
                }
            })
            .unzip();
        TrigWeights { s, c }
    }
}

/// Residual of the defining system from precomputed `A_i`, `tau_i` and `f`.
pub(crate) fn residual_from(
    f: &DVector<f64>,
    a_mats: &[DMatrix<f64>],
    tau: &[f64],
    point: &HopfPoint,
    sigma: f64,
) -> DVector<f64> {
    let n = point.n();
    let w = TrigWeights::new(tau, sigma, point.omega);
    let (a, b, omega) = (&point.a, &point.b, point.omega);

    let mut re = a * sigma - b * omega;
    let mut im = a * omega + b * sigma;
    for (i, ai) in a_mats.iter().enumerate() {
        re -= ai * (a * w.c[i] + b * w.s[i]);
        im -= ai * (b * w.c[i] - a * w.s[i]);
    }

    let mut out = DVector::zeros(3 * n + 2);
    out.rows_mut(0, n).copy_from(f);
    out.rows_mut(n, n).copy_from(&re);
    out.rows_mut(2 * n, n).copy_from(&im);
    out[3 * n] = a.dot(a) + b.dot(b) - 1.0;
    out[3 * n + 1] = a.dot(b);
    out
}

/// The stacked residual, length `3n + 2`.
pub fn residual(model: &ModelSpec, point: &HopfPoint, sigma: f64) -> Result<DVector<f64>> {
    point.check(model)?;
    let tau = model.delays(&point.x_tilde, &point.alpha)?;
    let first = model.first_derivatives(&point.x_tilde, &point.alpha)?;
    let f = model.steady_rhs(&point.x_tilde, &point.alpha);
    Ok(residual_from(&f, &first.a, &tau, point, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;
    use crate::model::json::ExprModel;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn hayes_point() -> HopfPoint {
        HopfPoint {
            x_tilde: dv(&[0.0]),
            alpha: dv(&[0.0, FRAC_PI_2, 1.0]),
            omega: FRAC_PI_2,
            a: dv(&[1.0]),
            b: dv(&[0.0]),
        }
    }

    #[test]
    fn hayes_point_is_a_root() {
        let r = residual(&builtin::hayes(), &hayes_point(), 0.0).unwrap();
        assert_eq!(r.len(), 5);
        assert!(r.amax() < 1e-15, "{r}");
    }

    #[test]
    fn zero_eigenvector_gives_minus_one_norm_row() {
        let mut p = hayes_point();
        p.a[0] = 0.0;
        p.alpha[1] = 0.3;
        let r = residual(&builtin::hayes(), &p, -0.7).unwrap();
        assert_eq!(r[3], -1.0);
    }

    #[test]
    fn ode_rows_reduce() {
        let text = r#"{"n": 2, "n_alpha": 1, "delays": [], "f": ["-a1*x1 + 2*x2", "-x1 - 3*x2"]}"#;
        let m = ModelSpec::new(ExprModel::from_json(text).unwrap());
        let a0 = DMatrix::from_row_slice(2, 2, &[-1.5, 2.0, -1.0, -3.0]);
        let p = HopfPoint {
            x_tilde: dv(&[0.0, 0.0]),
            alpha: dv(&[1.5]),
            omega: 0.7,
            a: dv(&[0.3, -0.2]),
            b: dv(&[0.1, 0.5]),
        };
        let sigma = 0.25;
        let r = residual(&m, &p, sigma).unwrap();
        let shifted = DMatrix::identity(2, 2) * sigma - &a0;
        let re = &shifted * &p.a - &p.b * p.omega;
        let im = &p.a * p.omega + &shifted * &p.b;
        assert!((r.rows(2, 2) - re).amax() < 1e-15);
        assert!((r.rows(4, 2) - im).amax() < 1e-15);
    }

    #[test]
    fn negative_delay_is_a_domain_error() {
        let mut p = hayes_point();
        p.alpha[2] = -0.5;
        assert!(matches!(
            residual(&builtin::hayes(), &p, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn pack_round_trip() {
        let p = hayes_point();
        let u = p.pack();
        assert_eq!(
            u.as_slice(),
            &[0.0, 1.0, 0.0, FRAC_PI_2, 0.0, FRAC_PI_2, 1.0]
        );
        assert_eq!(HopfPoint::unpack(1, &u), p);
    }

    proptest! {
        #[test]
        fn trig_weights_identity(
            tau in prop::collection::vec(0.0..5.0f64, 1..5),
            sigma in -1.0..1.0f64,
            omega in 0.0..10.0f64,
        ) {
            let mut tau = tau;
            tau[0] = 0.0;
            let w = TrigWeights::new(&tau, sigma, omega);
            prop_assert_eq!(w.s[0], 0.0);
            prop_assert_eq!(w.c[0], 1.0);
            for (i, t) in tau.iter().enumerate() {
                let lhs = w.s[i] * w.s[i] + w.c[i] * w.c[i];
                let rhs = (-2.0 * sigma * t).exp();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
            }
        }

        #[test]
        fn eigen_rows_match_complex_arithmetic(
            a_p in -2.0..2.0f64,
            b_p in -2.0..2.0f64,
            tau in 0.0..3.0f64,
            sigma in -0.5..0.5f64,
            omega in 0.1..4.0f64,
            a in -1.0..1.0f64,
            b in -1.0..1.0f64,
        ) {
            let p = HopfPoint {
                x_tilde: dv(&[0.0]),
                alpha: dv(&[a_p, b_p, tau]),
                omega,
                a: dv(&[a]),
                b: dv(&[b]),
            };
            let r = residual(&builtin::hayes(), &p, sigma).unwrap();
            let lambda = Complex64::new(sigma, omega);
            let v = Complex64::new(a, b);
            let expect = lambda * v + a_p * v + b_p * (-lambda * tau).exp() * v;
            prop_assert!((r[1] - expect.re).abs() <= 1e-12);
            prop_assert!((r[2] - expect.im).abs() <= 1e-12);
        }
    }
}
