//! Independent oracles for the analytic machinery.
//!
//! The Jacobian oracle differences [`residual`] only; the eigenvalue-gradient
//! oracle uses only the steady-state solver and the spectrum. Neither calls
//! the block assembly it checks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hopf::{assemble_b_at, residual, BMatrix, HopfPoint, HopfSolution, TrigWeights};
use crate::model::{bundle_derivatives, ModelSpec};
use crate::normalvec::{normal_vector, NormalVector};
use crate::numkernel;
use crate::spectrum::{char_roots, characteristic_det, leading_pair, DEFAULT_ORDER};
use crate::steady::solve_steady;

pub const JACOBIAN_STEP: f64 = 1e-6;
pub const JACOBIAN_TOL: f64 = 1e-5;
/// Entries of the reference Jacobian below this magnitude are compared
/// against it instead, so the absolute floor is `JACOBIAN_TOL * JACOBIAN_FLOOR = 1e-8`.
pub const JACOBIAN_FLOOR: f64 = 1e-3;
pub const ORTHOGONALITY_TOL: f64 = 1e-8;
pub const GRADIENT_STEP: f64 = 1e-5;
pub const GRADIENT_TOL: f64 = 1e-5;
/// A perturbed leading root farther than this from `sigma + i omega` counts as a switch.
const SWITCH_DISTANCE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    /// Passes when `measured <= tolerance`.
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            tolerance,
            pass: measured <= tolerance,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    pub worst_relative_error: f64,
    pub passed: bool,
}

impl VerificationReport {
    pub fn new(checks: Vec<Check>, worst_relative_error: f64) -> Self {
        let passed = checks.iter().all(|c| c.pass);
        VerificationReport {
            checks,
            worst_relative_error,
            passed,
        }
    }

    pub fn merge(reports: impl IntoIterator<Item = VerificationReport>) -> Self {
        let mut checks = Vec::new();
        let mut worst: f64 = 0.0;
        for r in reports {
            worst = worst.max(r.worst_relative_error);
            checks.extend(r.checks);
        }
        VerificationReport::new(checks, worst)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failing(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Central-difference Jacobian of [`residual`] w.r.t. `(x_tilde, a, b, omega, alpha)`.
pub fn fd_jacobian(model: &ModelSpec, point: &HopfPoint, sigma: f64) -> Result<DMatrix<f64>> {
    let n = point.n();
    let u = point.pack();
    let mut jac = DMatrix::zeros(3 * n + 2, u.len());
    for j in 0..u.len() {
        let h = JACOBIAN_STEP * (1.0 + u[j].abs());
        let mut up = u.clone();
        let mut um = u.clone();
        up[j] += h;
        um[j] -= h;
        let fp = residual(model, &HopfPoint::unpack(n, &up), sigma)?;
        let fm = residual(model, &HopfPoint::unpack(n, &um), sigma)?;
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    Ok(jac)
}

/// Largest `|B - F| / max(|F|, floor)` over a block.
fn block_error(analytic: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    analytic
        .iter()
        .zip(reference.iter())
        .map(|(&b, &f)| (b - f).abs() / f.abs().max(JACOBIAN_FLOOR))
        .fold(0.0, f64::max)
}

/// Compares `b` blockwise to the transposed finite-difference Jacobian.
pub fn fd_jacobian_check(
    model: &ModelSpec,
    sol: &HopfSolution,
    b: &BMatrix,
) -> Result<VerificationReport> {
    let fd = fd_jacobian(model, &sol.point, sol.sigma)?.transpose();
    let reference = BMatrix::from_assembled(fd, b.n(), b.n_alpha());
    let mut checks = Vec::with_capacity(25);
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let err = block_error(&b.block(i, j), &reference.block(i, j));
            worst = worst.max(err);
            checks.push(Check::at_most(BMatrix::block_name(i, j), err, JACOBIAN_TOL));
        }
    }
    Ok(VerificationReport::new(checks, worst))
}

/// Orthonormal basis of the tangent space of the solution set in `(x_tilde, a, b, omega, alpha)`.
pub fn tangent_basis(
    model: &ModelSpec,
    sol: &HopfSolution,
    analytic: bool,
) -> Result<DMatrix<f64>> {
    let jac = if analytic {
        assemble_b_at(model, &sol.point, sol.sigma)?.jacobian()
    } else {
        fd_jacobian(model, &sol.point, sol.sigma)?
    };
    let ns = numkernel::nullspace(&jac, numkernel::DEFAULT_RTOL)?;
    Ok(ns.basis)
}

/// Checks `|r . t_alpha| < 1e-8 |t|` for a basis of the tangent space.
pub fn tangent_orthogonality_check(
    model: &ModelSpec,
    sol: &HopfSolution,
    nv: &NormalVector,
) -> Result<VerificationReport> {
    tangent_orthogonality_check_with(model, sol, nv, false)
}

pub fn tangent_orthogonality_check_with(
    model: &ModelSpec,
    sol: &HopfSolution,
    nv: &NormalVector,
    analytic: bool,
) -> Result<VerificationReport> {
    let n_alpha = model.n_alpha();
    let expected = n_alpha - 1;
    if expected == 0 {
        let check = Check::at_most("tangent_orthogonality", 0.0, ORTHOGONALITY_TOL)
            .with_note("zero-dimensional manifold; nothing to check");
        return Ok(VerificationReport::new(vec![check], 0.0));
    }
    let basis = tangent_basis(model, sol, analytic)?;
    if basis.ncols() != expected {
        return Err(Error::regularity(format!(
            "tangent space has dimension {}, expected {expected}",
            basis.ncols()
        )));
    }
    let off = 3 * model.n() + 1;
    let worst = basis
        .column_iter()
        .map(|t| nv.r.dot(&t.rows(off, n_alpha)).abs() / t.norm())
        .fold(0.0, f64::max);
    let check = Check::at_most("tangent_orthogonality", worst, ORTHOGONALITY_TOL)
        .with_note(format!("tangent dimension {expected}"));
    Ok(VerificationReport::new(vec![check], worst))
}

/// Real part of the leading oscillatory root at `alpha`, plus its frequency.
fn leading_at(model: &ModelSpec, alpha: &DVector<f64>, guess: &DVector<f64>) -> Result<(f64, f64)> {
    let steady = solve_steady(model, alpha, guess)?;
    let bundle = bundle_derivatives(model, &steady.x_tilde, alpha)?;
    let spectrum = char_roots(&steady, &bundle, DEFAULT_ORDER)?;
    let lead = leading_pair(&spectrum.roots)?;
    Ok((lead.lambda.re, lead.lambda.im))
}

/// Finite-difference gradient of the leading real part over the parameters.
/// Returns `None` when the leading pair switches under some perturbation.
pub fn leading_real_part_gradient(
    model: &ModelSpec,
    sol: &HopfSolution,
) -> Result<Option<DVector<f64>>> {
    let alpha = &sol.point.alpha;
    let (omega, sigma) = (sol.point.omega, sol.sigma);
    let mut g = DVector::zeros(alpha.len());
    for k in 0..alpha.len() {
        let h = GRADIENT_STEP * (1.0 + alpha[k].abs());
        let mut values = [0.0; 2];
        for (slot, sign) in [1.0, -1.0].into_iter().enumerate() {
            let mut ak = alpha.clone();
            ak[k] += sign * h;
            let (re, im) = leading_at(model, &ak, &sol.point.x_tilde)?;
            if (re - sigma).abs() + (im - omega).abs() > SWITCH_DISTANCE {
                return Ok(None);
            }
            values[slot] = re;
        }
        g[k] = (values[0] - values[1]) / (2.0 * h);
    }
    Ok(Some(g))
}

/// Cosine between `r` and the gradient of the leading real part.
pub fn eig_gradient_check(
    model: &ModelSpec,
    sol: &HopfSolution,
    nv: &NormalVector,
) -> Result<VerificationReport> {
    let Some(g) = leading_real_part_gradient(model, sol)? else {
        let check = Check::at_most("eig_gradient", 0.0, GRADIENT_TOL)
            .with_note("inconclusive: the leading pair switches under perturbation");
        return Ok(VerificationReport::new(vec![check], 0.0));
    };
    let gnorm = g.norm();
    let cos = if gnorm > 0.0 {
        (nv.r.dot(&g).abs() / (nv.r.norm() * gnorm)).min(1.0)
    } else {
        0.0
    };
    let check = Check::at_most("eig_gradient", 1.0 - cos, GRADIENT_TOL)
        .with_note(format!("cosine {cos:.15}"));
    Ok(VerificationReport::new(vec![check], 1.0 - cos))
}

/// Algebraic invariants at a converged solution.
pub fn invariant_checks(
    model: &ModelSpec,
    sol: &HopfSolution,
    b: &BMatrix,
    nv: &NormalVector,
) -> Result<VerificationReport> {
    let p = &sol.point;
    let mut checks = Vec::new();

    let f = residual(model, p, sol.sigma)?;
    checks.push(Check::at_most("residual", f.amax(), p.tolerance()));
    checks.push(Check::at_most(
        "norm_condition",
        (p.a.norm_squared() + p.b.norm_squared() - 1.0).abs(),
        1e-10,
    ));
    checks.push(Check::at_most(
        "phase_condition",
        p.a.dot(&p.b).abs(),
        1e-10,
    ));
    checks.push(
        Check::at_most("omega_positive", if p.omega > 0.0 { 0.0 } else { 1.0 }, 0.0)
            .with_note(format!("omega = {}", p.omega)),
    );

    let w = TrigWeights::new(&sol.tau_values, sol.sigma, p.omega);
    let trig = sol
        .tau_values
        .iter()
        .enumerate()
        .map(|(i, &t)| (w.s[i] * w.s[i] + w.c[i] * w.c[i] - (-2.0 * sol.sigma * t).exp()).abs())
        .fold(0.0, f64::max);
    let exact0 = w.s[0] == 0.0 && w.c[0] == 1.0;
    checks.push(Check::at_most("trig_identity", trig, 1e-12));
    checks.push(Check::at_most(
        "trig_index_zero",
        if exact0 { 0.0 } else { 1.0 },
        0.0,
    ));

    let k = b.k();
    let kernel = (&k * &nv.kappa).amax() / (k.norm() * nv.kappa.norm());
    checks.push(Check::at_most("kernel_residual", kernel, 1e-8));
    checks.push(Check::at_most(
        "unit_normal",
        (nv.r.norm() - 1.0).abs(),
        1e-12,
    ));

    let bundle = bundle_derivatives(model, &p.x_tilde, &p.alpha)?;
    let lambda = num_complex::Complex64::new(sol.sigma, p.omega);
    let det = characteristic_det(&bundle.a, &sol.tau_values, lambda).norm();
    checks.push(Check::at_most("characteristic_determinant", det, 1e-8));

    Ok(VerificationReport::new(checks, 0.0))
}

/// Every check above at one solution.
pub fn full_report(model: &ModelSpec, sol: &HopfSolution) -> Result<VerificationReport> {
    let b = assemble_b_at(model, &sol.point, sol.sigma)?;
    let nv = normal_vector(&b)?;
    Ok(VerificationReport::merge([
        fd_jacobian_check(model, sol, &b)?,
        tangent_orthogonality_check(model, sol, &nv)?,
        eig_gradient_check(model, sol, &nv)?,
        invariant_checks(model, sol, &b, &nv)?,
    ]))
}
