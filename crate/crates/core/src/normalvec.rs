//! Normal vectors of the modified Hopf manifold in parameter space and the
//! closest manifold point to a nominal parameter.
//!
//! With `K` the rows of `B` belonging to `(x_tilde, a, b, omega)` and `B_alpha`
//! the parameter rows, a kernel vector `kappa` of `K` gives the normal
//! `r = B_alpha kappa`: for any tangent `t` of the solution set,
//! `kappa' J t = 0` reduces to `r' t_alpha = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hopf::{assemble_b_at, residual, BMatrix, HopfPoint, HopfSolution};
use crate::model::ModelSpec;
use crate::numkernel;
use crate::serial::dvec;

pub const SIGN_CONVENTION: &str =
    "largest-magnitude component of r is positive (ties: lowest index)";
/// Below this `||B_alpha kappa||` the normal is degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;
pub const CLOSEST_TOL: f64 = 1e-9;
pub const CLOSEST_MAX_ITERATIONS: usize = 80;
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalVector {
    /// Kernel vector of `K`, scaled so that `r = B_alpha kappa` on the active components.
    #[serde(with = "dvec")]
    pub kappa: DVector<f64>,
    /// Unit normal in full parameter coordinates; frozen components are zero.
    #[serde(with = "dvec")]
    pub r: DVector<f64>,
    pub kernel_dim: usize,
    pub active: Vec<usize>,
    pub sign_convention: String,
}

/// Index of the largest `|v_k|`, lowest index on ties.
fn dominant(v: &DVector<f64>) -> usize {
    let mut best = 0;
    for k in 1..v.len() {
        if v[k].abs() > v[best].abs() {
            best = k;
        }
    }
    best
}

/// Unit normal with all parameters active.
pub fn normal_vector(b: &BMatrix) -> Result<NormalVector> {
    let all: Vec<usize> = (0..b.n_alpha()).collect();
    normal_vector_on(b, &all)
}

/// Unit normal within the subspace of the `active` parameters.
pub fn normal_vector_on(b: &BMatrix, active: &[usize]) -> Result<NormalVector> {
    if active.is_empty() || active.iter().any(|&k| k >= b.n_alpha()) {
        return Err(Error::input("invalid active parameter set"));
    }
    let k = b.k();
    let ns = numkernel::nullspace(&k, numkernel::DEFAULT_RTOL)?;
    if ns.dim() != 1 {
        return Err(Error::regularity(format!(
            "not a regular solution (kernel of K has dimension {})",
            ns.dim()
        )));
    }
    let kappa = ns.basis.column(0).into_owned();
    let r_full = b.b_alpha() * &kappa;
    let mut r = DVector::zeros(b.n_alpha());
    for &j in active {
        r[j] = r_full[j];
    }
    let norm = r.norm();
    if norm < DEGENERATE_NORM {
        return Err(Error::numerical(format!(
            "degenerate normal (|B_alpha kappa| = {norm:.3e})"
        )));
    }
    let sign = if r[dominant(&r)] < 0.0 { -1.0 } else { 1.0 };
    let scale = sign / norm;
    Ok(NormalVector {
        kappa: kappa * scale,
        r: r * scale,
        kernel_dim: 1,
        active: active.to_vec(),
        sign_convention: SIGN_CONVENTION.to_string(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosestPoint {
    pub solution: HopfSolution,
    pub normal: NormalVector,
    /// Signed distance `l` with `alpha_nominal = alpha + l r`.
    pub distance: f64,
    pub iterations: usize,
}

struct Layout {
    n: usize,
    n_alpha: usize,
    active: Vec<usize>,
}

impl Layout {
    fn k(&self) -> usize {
        self.active.len()
    }

    /// Unknowns `(x, a, b, omega, alpha_S)` then `kappa`, `r_S`, `l`.
    fn size(&self) -> usize {
        self.hopf_size() + (3 * self.n + 2) + self.k() + 1
    }

    fn hopf_size(&self) -> usize {
        3 * self.n + 1 + self.k()
    }

    fn kappa_at(&self) -> usize {
        self.hopf_size()
    }

    fn r_at(&self) -> usize {
        self.kappa_at() + 3 * self.n + 2
    }

    fn l_at(&self) -> usize {
        self.r_at() + self.k()
    }

    fn point(&self, template: &HopfPoint, w: &DVector<f64>) -> HopfPoint {
        let n = self.n;
        let mut alpha = template.alpha.clone();
        for (k, &j) in self.active.iter().enumerate() {
            alpha[j] = w[3 * n + 1 + k];
        }
        HopfPoint {
            x_tilde: w.rows(0, n).into_owned(),
            a: w.rows(n, n).into_owned(),
            b: w.rows(2 * n, n).into_owned(),
            omega: w[3 * n],
            alpha,
        }
    }

    fn hopf_columns(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = (0..=3 * self.n).collect();
        cols.extend(self.active.iter().map(|&j| 3 * self.n + 1 + j));
        cols
    }
}

/// `[K kappa; (B_alpha kappa)_S]` at the point.
fn kernel_rows(
    model: &ModelSpec,
    lay: &Layout,
    point: &HopfPoint,
    sigma: f64,
    kappa: &DVector<f64>,
) -> Result<DVector<f64>> {
    let b = assemble_b_at(model, point, sigma)?;
    let full = &b.assembled * kappa;
    let m = 3 * lay.n + 1;
    let mut out = DVector::zeros(m + lay.k());
    out.rows_mut(0, m).copy_from(&full.rows(0, m));
    for (k, &j) in lay.active.iter().enumerate() {
        out[m + k] = full[m + j];
    }
    Ok(out)
}

fn system(
    model: &ModelSpec,
    lay: &Layout,
    template: &HopfPoint,
    sigma: f64,
    nominal: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    let point = lay.point(template, w);
    let kappa = w.rows(lay.kappa_at(), 3 * lay.n + 2).into_owned();
    let r = w.rows(lay.r_at(), lay.k()).into_owned();
    let l = w[lay.l_at()];
    let f = residual(model, &point, sigma)?;
    let kr = kernel_rows(model, lay, &point, sigma, &kappa)?;

    let mut out = DVector::zeros(lay.size());
    let mut at = 0;
    out.rows_mut(at, f.len()).copy_from(&f);
    at += f.len();
    let m = 3 * lay.n + 1;
    out.rows_mut(at, m).copy_from(&kr.rows(0, m));
    at += m;
    for k in 0..lay.k() {
        out[at + k] = kr[m + k] - r[k];
    }
    at += lay.k();
    out[at] = r.dot(&r) - 1.0;
    at += 1;
    for (k, &j) in lay.active.iter().enumerate() {
        out[at + k] = nominal[j] - point.alpha[j] - l * r[k];
    }
    Ok(out)
}

fn system_jacobian(
    model: &ModelSpec,
    lay: &Layout,
    template: &HopfPoint,
    sigma: f64,
    w: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let size = lay.size();
    let (n, k) = (lay.n, lay.k());
    let m = 3 * n + 1;
    let point = lay.point(template, w);
    let kappa = w.rows(lay.kappa_at(), 3 * n + 2).into_owned();
    let r = w.rows(lay.r_at(), k).into_owned();
    let l = w[lay.l_at()];
    let b = assemble_b_at(model, &point, sigma)?;
    let mut jac = DMatrix::zeros(size, size);

    // defining system
    let hj = b.jacobian().select_columns(&lay.hopf_columns());
    jac.view_mut((0, 0), (3 * n + 2, lay.hopf_size()))
        .copy_from(&hj);

    // kernel and projection rows: derivative in the point by central differences
    let row0 = 3 * n + 2;
    for c in 0..lay.hopf_size() {
        let h = FD_STEP * (1.0 + w[c].abs());
        let mut wp = w.clone();
        let mut wm = w.clone();
        wp[c] += h;
        wm[c] -= h;
        let kp = kernel_rows(model, lay, &lay.point(template, &wp), sigma, &kappa)?;
        let km = kernel_rows(model, lay, &lay.point(template, &wm), sigma, &kappa)?;
        jac.view_mut((row0, c), (m + k, 1))
            .copy_from(&((kp - km) / (2.0 * h)));
    }
    jac.view_mut((row0, lay.kappa_at()), (m, 3 * n + 2))
        .copy_from(&b.k());
    let b_alpha = b.b_alpha();
    for (q, &j) in lay.active.iter().enumerate() {
        jac.view_mut((row0 + m + q, lay.kappa_at()), (1, 3 * n + 2))
            .copy_from(&b_alpha.row(j));
        jac[(row0 + m + q, lay.r_at() + q)] = -1.0;
    }

    let norm_row = row0 + m + k;
    for q in 0..k {
        jac[(norm_row, lay.r_at() + q)] = 2.0 * r[q];
    }

    let conn = norm_row + 1;
    for q in 0..k {
        jac[(conn + q, 3 * n + 1 + q)] = -1.0;
        jac[(conn + q, lay.r_at() + q)] = -l;
        jac[(conn + q, lay.l_at())] = -r[q];
    }
    Ok(jac)
}

/// Newton on the defining system coupled with the normal-vector equations
/// and `alpha_nominal = alpha + l r`, starting from a manifold point `seed`.
pub fn closest_boundary_point(
    model: &ModelSpec,
    alpha_nominal: &DVector<f64>,
    seed: &HopfSolution,
    active: Option<&[usize]>,
) -> Result<ClosestPoint> {
    let n_alpha = model.n_alpha();
    model.check_alpha(alpha_nominal)?;
    let active: Vec<usize> = active
        .map(<[usize]>::to_vec)
        .unwrap_or_else(|| (0..n_alpha).collect());
    if active.is_empty() || active.iter().any(|&j| j >= n_alpha) {
        return Err(Error::input("invalid active parameter set"));
    }
    for j in 0..n_alpha {
        if !active.contains(&j) && alpha_nominal[j] != seed.point.alpha[j] {
            return Err(Error::input(format!(
                "nominal parameter {j} differs from the seed but is not active"
            )));
        }
    }
    let sigma = seed.sigma;
    let lay = Layout {
        n: model.n(),
        n_alpha,
        active: active.clone(),
    };
    debug_assert_eq!(lay.n_alpha, seed.point.n_alpha());
    let template = seed.point.clone();

    let b0 = assemble_b_at(model, &seed.point, sigma)?;
    let nv0 = normal_vector_on(&b0, &active)?;
    let mut w = DVector::zeros(lay.size());
    let u = seed.point.pack();
    for (k, &c) in lay.hopf_columns().iter().enumerate() {
        w[k] = u[c];
    }
    w.rows_mut(lay.kappa_at(), 3 * lay.n + 2)
        .copy_from(&nv0.kappa);
    let mut l0 = 0.0;
    for (q, &j) in active.iter().enumerate() {
        w[lay.r_at() + q] = nv0.r[j];
        l0 += nv0.r[j] * (alpha_nominal[j] - seed.point.alpha[j]);
    }
    w[lay.l_at()] = l0;

    let mut g = system(model, &lay, &template, sigma, alpha_nominal, &w)?;
    for iteration in 0..=CLOSEST_MAX_ITERATIONS {
        let gnorm = g.amax();
        log::debug!("closest-point newton {iteration}: |G| = {gnorm:.3e}");
        if !gnorm.is_finite() {
            return Err(Error::numerical("closest-point residual is not finite"));
        }
        let hopf_rows = g.rows(0, 3 * lay.n + 2).into_owned();
        if gnorm <= CLOSEST_TOL && lay.point(&template, &w).converged(&hopf_rows) {
            return finish(model, &lay, &template, sigma, &w, iteration);
        }
        if iteration == CLOSEST_MAX_ITERATIONS {
            break;
        }
        let jac = system_jacobian(model, &lay, &template, sigma, &w)?;
        let delta = numkernel::solve(&jac, &(-&g))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &w + &delta * t;
            if let Ok(gt) = system(model, &lay, &template, sigma, alpha_nominal, &trial) {
                if gt.amax() < (1.0 - 1e-4 * t) * gnorm {
                    w = trial;
                    g = gt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                what: "closest-point Newton (line search)",
                iterations: iteration + 1,
                residual: gnorm,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "closest-point Newton",
        iterations: CLOSEST_MAX_ITERATIONS,
        residual: g.amax(),
    })
}

fn finish(
    model: &ModelSpec,
    lay: &Layout,
    template: &HopfPoint,
    sigma: f64,
    w: &DVector<f64>,
    iterations: usize,
) -> Result<ClosestPoint> {
    let mut point = lay.point(template, w);
    if point.omega < 0.0 {
        point.omega = -point.omega;
        point.b = -point.b;
    }
    let b = assemble_b_at(model, &point, sigma)?;
    let normal = normal_vector_on(&b, &lay.active)?;
    let r_solved = w.rows(lay.r_at(), lay.k());
    let agree: f64 = lay
        .active
        .iter()
        .enumerate()
        .map(|(q, &j)| normal.r[j] * r_solved[q])
        .sum();
    let l = w[lay.l_at()];
    let distance = if agree < 0.0 { -l } else { l };
    let solution = HopfSolution {
        residual_norm: residual(model, &point, sigma)?.amax(),
        tau_values: model.delays(&point.x_tilde, &point.alpha)?,
        point,
        sigma,
        iterations,
    };
    Ok(ClosestPoint {
        solution,
        normal,
        distance,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;
    use std::f64::consts::FRAC_PI_2;

    fn hayes_solution() -> HopfSolution {
        let point = HopfPoint {
            x_tilde: DVector::zeros(1),
            alpha: DVector::from_column_slice(&[0.0, FRAC_PI_2, 1.0]),
            omega: FRAC_PI_2,
            a: DVector::from_element(1, 1.0),
            b: DVector::zeros(1),
        };
        HopfSolution {
            point,
            sigma: 0.0,
            residual_norm: 0.0,
            tau_values: vec![0.0, 1.0],
            iterations: 0,
        }
    }

    #[test]
    fn unit_normal_and_kernel() {
        let sol = hayes_solution();
        let b = assemble_b_at(&builtin::hayes(), &sol.point, 0.0).unwrap();
        let nv = normal_vector(&b).unwrap();
        assert!((nv.r.norm() - 1.0).abs() < 1e-12);
        let k = b.k();
        assert!((&k * &nv.kappa).amax() <= 1e-8 * k.norm() * nv.kappa.norm());
        assert!((b.b_alpha() * &nv.kappa - &nv.r).amax() < 1e-12);
        let top = dominant(&nv.r);
        assert!(nv.r[top] > 0.0);
    }

    #[test]
    fn hayes_normal_matches_level_set_gradient() {
        // sigma_lead(a_p, b_p, tau) near (0, pi/2, 1): implicit differentiation of
        // lambda + a_p + b_p exp(-lambda tau) = 0 at lambda = i pi/2
        let lambda = num_complex::Complex64::new(0.0, FRAC_PI_2);
        let (b_p, tau) = (FRAC_PI_2, 1.0);
        let e = (-lambda * tau).exp();
        let dchi = 1.0 - b_p * tau * e;
        let grads = [1.0 / dchi, e / dchi, -b_p * lambda * e / dchi].map(|z| -z.re);
        let g = DVector::from_column_slice(&grads);
        let sol = hayes_solution();
        let nv =
            normal_vector(&assemble_b_at(&builtin::hayes(), &sol.point, 0.0).unwrap()).unwrap();
        let cos = nv.r.dot(&g).abs() / g.norm();
        assert!(cos > 1.0 - 1e-12, "{cos}");
    }

    #[test]
    fn active_subset_zeroes_frozen_components() {
        let sol = hayes_solution();
        let b = assemble_b_at(&builtin::hayes(), &sol.point, 0.0).unwrap();
        let nv = normal_vector_on(&b, &[0, 1]).unwrap();
        assert_eq!(nv.r[2], 0.0);
        assert!((nv.r.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_distance_on_manifold() {
        let sol = hayes_solution();
        let cp = closest_boundary_point(&builtin::hayes(), &sol.point.alpha.clone(), &sol, None)
            .unwrap();
        assert!(cp.distance.abs() < 1e-9);
        assert!((&cp.solution.point.alpha - &sol.point.alpha).amax() < 1e-9);
    }

    #[test]
    fn frozen_component_must_match() {
        let sol = hayes_solution();
        let nominal = DVector::from_column_slice(&[0.0, 1.2, 1.1]);
        let err =
            closest_boundary_point(&builtin::hayes(), &nominal, &sol, Some(&[0, 1])).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }
}
