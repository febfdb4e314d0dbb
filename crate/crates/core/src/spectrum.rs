//! Characteristic roots `det(lambda I - sum_i A_i exp(-lambda tau_i)) = 0`
//! of a linearized DDE at a steady state.
//!
//! Roots are located globally with a Chebyshev collocation of the solution
//! operator's generator on `[-tau_max, 0]` and then polished by damped
//! Newton on the determinant. The Newton step uses Jacobi's formula,
//! `det'(lambda) / det(lambda) = tr(Delta(lambda)^{-1} Delta'(lambda))` with
//! `Delta'(lambda) = I + sum_i tau_i A_i exp(-lambda tau_i)`, so no
//! derivative is approximated.

use nalgebra::{Complex, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DerivativeBundle;
use crate::numkernel;
use crate::steady::SteadyPoint;

pub const DEFAULT_ORDER: usize = 20;
pub const MIN_ORDER: usize = 5;
/// Roots closer than this are merged.
pub const MERGE_DISTANCE: f64 = 1e-6;
/// Imaginary parts above this count as oscillatory in [`leading_pair`].
pub const OSCILLATORY_IM: f64 = 1e-8;
/// Real parts within this are considered tied in [`leading_pair`].
pub const TIE_RE: f64 = 1e-10;

const NEWTON_MAX: usize = 60;
const HALVINGS: usize = 40;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharRoot {
    /// `[re, im]`
    #[serde(with = "complex")]
    pub lambda: Complex64,
    #[serde(with = "complex_vec")]
    pub eigvec: DVector<Complex64>,
    /// `||Delta(lambda) v|| / ||v||`
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    /// Sorted by descending real part.
    pub roots: Vec<CharRoot>,
    /// Collocation eigenvalues whose refinement failed.
    pub dropped: Vec<String>,
}

/// `Delta(lambda) = lambda I - sum_i A_i exp(-lambda tau_i)`.
pub fn characteristic_matrix(
    a: &[DMatrix<f64>],
    tau: &[f64],
    lambda: Complex64,
) -> DMatrix<Complex64> {
    let n = a[0].nrows();
    let mut m = DMatrix::<Complex64>::identity(n, n) * lambda;
    for (ai, &t) in a.iter().zip(tau) {
        let w = (-lambda * t).exp();
        m -= ai.map(|v| Complex::new(v, 0.0)) * w;
    }
    m
}

fn characteristic_derivative(
    a: &[DMatrix<f64>],
    tau: &[f64],
    lambda: Complex64,
) -> DMatrix<Complex64> {
    let n = a[0].nrows();
    let mut m = DMatrix::<Complex64>::identity(n, n);
    for (ai, &t) in a.iter().zip(tau) {
        if t != 0.0 {
            let w = (-lambda * t).exp() * t;
            m += ai.map(|v| Complex::new(v, 0.0)) * w;
        }
    }
    m
}

pub fn characteristic_det(a: &[DMatrix<f64>], tau: &[f64], lambda: Complex64) -> Complex64 {
    characteristic_matrix(a, tau, lambda).lu().determinant()
}

/// Outcome of polishing one root.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub lambda: Complex64,
    /// `|det|` at the start and after every accepted step.
    pub det_history: Vec<f64>,
}

/// Damped Newton on the characteristic determinant.
pub fn refine_root(a: &[DMatrix<f64>], tau: &[f64], start: Complex64) -> Result<Refinement> {
    let mut lambda = start;
    let mut det = characteristic_det(a, tau, lambda).norm();
    let mut history = vec![det];
    for _ in 0..NEWTON_MAX {
        if det == 0.0 {
            return Ok(Refinement {
                lambda,
                det_history: history,
            });
        }
        let lu = characteristic_matrix(a, tau, lambda).lu();
        let dprime = characteristic_derivative(a, tau, lambda);
        let Some(x) = lu.solve(&dprime) else {
            return Ok(Refinement {
                lambda,
                det_history: history,
            });
        };
        let trace = x.trace();
        if trace.norm() == 0.0 || !trace.is_finite() {
            return Err(Error::numerical(
                "characteristic Newton: vanishing derivative",
            ));
        }
        let step = -trace.inv();
        let small = step.norm() <= 4.0 * f64::EPSILON * (1.0 + lambda.norm());

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..HALVINGS {
            let trial = lambda + step * t;
            let dt = characteristic_det(a, tau, trial).norm();
            if dt.is_finite() && dt < det {
                lambda = trial;
                det = dt;
                history.push(det);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if small || (!accepted && step.norm() <= 1e-10 * (1.0 + lambda.norm())) {
            return Ok(Refinement {
                lambda,
                det_history: history,
            });
        }
        if !accepted {
            return Err(Error::numerical(format!(
                "characteristic Newton stalled at {lambda} (|det| = {det:.3e})"
            )));
        }
        if lambda.norm() > 1e8 {
            return Err(Error::numerical("characteristic Newton diverged"));
        }
    }
    Err(Error::NonConvergence {
        what: "characteristic root refinement",
        iterations: NEWTON_MAX,
        residual: det,
    })
}

/// Unit-norm right null vector of `Delta(lambda)` and `||Delta v||`.
pub fn null_vector(
    a: &[DMatrix<f64>],
    tau: &[f64],
    lambda: Complex64,
) -> Result<(DVector<Complex64>, f64)> {
    let delta = characteristic_matrix(a, tau, lambda);
    let svd = delta
        .clone()
        .try_svd(false, true, 1e-15, 10_000)
        .ok_or_else(|| Error::numerical("complex SVD did not converge"))?;
    let v_t = svd.v_t.expect("requested V");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let v: DVector<Complex64> = v_t.row(k).adjoint();
    let v = &v / Complex::new(v.norm(), 0.0);
    let residual = (&delta * &v).norm();
    Ok((v, residual))
}

/// Chebyshev-Lobatto collocation of the generator, size `n (N + 1)`.
pub fn collocation_matrix(a: &[DMatrix<f64>], tau: &[f64], order: usize) -> DMatrix<f64> {
    let n = a[0].nrows();
    let big_n = order;
    let tau_max = tau.iter().copied().fold(0.0, f64::max);
    let nodes: Vec<f64> = (0..=big_n)
        .map(|j| (std::f64::consts::PI * j as f64 / big_n as f64).cos())
        .collect();
    let theta: Vec<f64> = nodes.iter().map(|x| 0.5 * tau_max * (x - 1.0)).collect();

    // Chebyshev differentiation matrix on [-1, 1], mapped to [-tau_max, 0].
    let c = |j: usize| {
        let s = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
        if j == 0 || j == big_n {
            2.0 * s
        } else {
            s
        }
    };
    let mut d = DMatrix::zeros(big_n + 1, big_n + 1);
    for i in 0..=big_n {
        for j in 0..=big_n {
            if i != j {
                d[(i, j)] = c(i) / c(j) / (nodes[i] - nodes[j]);
            }
        }
        let row_sum: f64 = (0..=big_n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -row_sum;
    }
    d *= 2.0 / tau_max;

    let weights: Vec<f64> = (0..=big_n)
        .map(|j| {
            let s = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
            if j == 0 || j == big_n {
                0.5 * s
            } else {
                s
            }
        })
        .collect();
    let lagrange = |t: f64| -> Vec<f64> {
        if let Some(k) = theta
            .iter()
            .position(|&th| (th - t).abs() <= 1e-14 * tau_max)
        {
            let mut e = vec![0.0; big_n + 1];
            e[k] = 1.0;
            return e;
        }
        let terms: Vec<f64> = (0..=big_n).map(|k| weights[k] / (t - theta[k])).collect();
        let total: f64 = terms.iter().sum();
        terms.into_iter().map(|v| v / total).collect()
    };

    let size = n * (big_n + 1);
    let mut l = DMatrix::zeros(size, size);
    for (ai, &t) in a.iter().zip(tau) {
        let ell = lagrange(-t);
        for (k, &w) in ell.iter().enumerate() {
            if w != 0.0 {
                let mut block = l.view_mut((0, k * n), (n, n));
                block += ai * w;
            }
        }
    }
    for j in 1..=big_n {
        for k in 0..=big_n {
            for r in 0..n {
                l[(j * n + r, k * n + r)] = d[(j, k)];
            }
        }
    }
    l
}

fn sort_roots(roots: &mut [CharRoot]) {
    roots.sort_by(|a, b| {
        b.lambda
            .re
            .total_cmp(&a.lambda.re)
            .then(b.lambda.im.total_cmp(&a.lambda.im))
    });
}

fn with_conjugates(upper: Vec<CharRoot>) -> Vec<CharRoot> {
    let mut out = Vec::with_capacity(2 * upper.len());
    for r in upper {
        if r.lambda.im > 0.0 {
            out.push(CharRoot {
                lambda: r.lambda.conj(),
                eigvec: r.eigvec.map(|c| c.conj()),
                residual: r.residual,
            });
        }
        out.push(r);
    }
    sort_roots(&mut out);
    out
}

/// Characteristic roots from the `A_i` and frozen delays.
pub fn char_roots_from(a: &[DMatrix<f64>], tau: &[f64], order: usize) -> Result<Spectrum> {
    if order < MIN_ORDER {
        return Err(Error::input(format!(
            "collocation order {order} < {MIN_ORDER}"
        )));
    }
    if a.is_empty() || a.len() != tau.len() {
        return Err(Error::input("need one delay per A_i"));
    }
    let tau_max = tau.iter().copied().fold(0.0, f64::max);
    let mut dropped = Vec::new();

    if tau_max == 0.0 {
        let total = a.iter().skip(1).fold(a[0].clone(), |acc, m| acc + m);
        let mut upper = Vec::new();
        for pair in numkernel::dense_eigs(&total)? {
            if pair.value.im < 0.0 {
                continue;
            }
            let mut lambda = pair.value;
            if lambda.im.abs() <= f64::EPSILON * (1.0 + lambda.norm()) {
                lambda.im = 0.0;
            }
            let (eigvec, residual) = null_vector(a, tau, lambda)?;
            upper.push(CharRoot {
                lambda,
                eigvec,
                residual,
            });
        }
        return Ok(Spectrum {
            roots: with_conjugates(merge(upper)),
            dropped,
        });
    }

    let window = -2.0 / tau_max;
    let l = collocation_matrix(a, tau, order);
    let mut upper: Vec<CharRoot> = Vec::new();
    for mu in numkernel::dense_eigenvalues(&l)? {
        if mu.im < 0.0 || mu.re <= window {
            continue;
        }
        match refine_root(a, tau, mu) {
            Ok(r) => {
                let mut lambda = r.lambda;
                if lambda.im < 0.0 {
                    lambda = lambda.conj();
                }
                if lambda.im.abs() <= 1e-14 * (1.0 + lambda.norm()) {
                    lambda.im = 0.0;
                }
                let (eigvec, residual) = null_vector(a, tau, lambda)?;
                upper.push(CharRoot {
                    lambda,
                    eigvec,
                    residual,
                });
            }
            Err(e) => {
                log::warn!("dropping collocation eigenvalue {mu}: {e}");
                dropped.push(format!("{mu}: {e}"));
            }
        }
    }
    Ok(Spectrum {
        roots: with_conjugates(merge(upper)),
        dropped,
    })
}

fn merge(mut roots: Vec<CharRoot>) -> Vec<CharRoot> {
    sort_roots(&mut roots);
    let mut out: Vec<CharRoot> = Vec::with_capacity(roots.len());
    for r in roots {
        if out
            .iter()
            .all(|q| (q.lambda - r.lambda).norm() > MERGE_DISTANCE)
        {
            out.push(r);
        }
    }
    out
}

/// Characteristic roots at a steady state.
pub fn char_roots(
    point: &SteadyPoint,
    bundle: &DerivativeBundle,
    order: usize,
) -> Result<Spectrum> {
    char_roots_from(&bundle.a, &point.tau_values, order)
}

/// The oscillatory root with largest real part; ties broken by the smaller
/// imaginary part.
pub fn leading_pair(roots: &[CharRoot]) -> Result<CharRoot> {
    if roots.is_empty() {
        return Err(Error::input("empty root list"));
    }
    let mut best: Option<&CharRoot> = None;
    for r in roots.iter().filter(|r| r.lambda.im > OSCILLATORY_IM) {
        best = match best {
            None => Some(r),
            Some(b) => {
                let dre = r.lambda.re - b.lambda.re;
                if dre > TIE_RE || (dre.abs() <= TIE_RE && r.lambda.im < b.lambda.im) {
                    Some(r)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.cloned()
        .ok_or_else(|| Error::domain("no oscillatory leading pair"))
}

mod complex {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(c: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [c.re, c.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

mod complex_vec {
    use nalgebra::DVector;
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Parts {
        re: Vec<f64>,
        im: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(v: &DVector<Complex64>, s: S) -> Result<S::Ok, S::Error> {
        Parts {
            re: v.iter().map(|c| c.re).collect(),
            im: v.iter().map(|c| c.im).collect(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<Complex64>, D::Error> {
        let p = Parts::deserialize(d)?;
        if p.re.len() != p.im.len() {
            return Err(serde::de::Error::custom("re/im length mismatch"));
        }
        Ok(DVector::from_iterator(
            p.re.len(),
            p.re.iter().zip(&p.im).map(|(&r, &i)| Complex64::new(r, i)),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, bundle_derivatives, json::ExprModel, ModelSpec};
    use crate::steady::solve_steady;
    use std::f64::consts::FRAC_PI_2;

    fn spectrum(model: &ModelSpec, alpha: &[f64], order: usize) -> Spectrum {
        let alpha = DVector::from_column_slice(alpha);
        let p = solve_steady(model, &alpha, &DVector::zeros(model.n())).unwrap();
        let b = bundle_derivatives(model, &p.x_tilde, &alpha).unwrap();
        char_roots(&p, &b, order).unwrap()
    }

    fn root(re: f64, im: f64) -> CharRoot {
        CharRoot {
            lambda: Complex64::new(re, im),
            eigvec: DVector::from_element(1, Complex64::new(1.0, 0.0)),
            residual: 0.0,
        }
    }

    #[test]
    fn hayes_hopf_roots() {
        let s = spectrum(&builtin::hayes(), &[0.0, FRAC_PI_2, 1.0], DEFAULT_ORDER);
        let target = Complex64::new(0.0, FRAC_PI_2);
        assert!(s.roots.iter().any(|r| (r.lambda - target).norm() < 1e-8));
        assert!(s
            .roots
            .iter()
            .any(|r| (r.lambda - target.conj()).norm() < 1e-8));
        let lead = leading_pair(&s.roots).unwrap();
        assert!(lead.lambda.re.abs() < 1e-12);
        assert!((lead.lambda.im - FRAC_PI_2).abs() < 1e-12);
        for r in &s.roots {
            assert!(r.residual <= 1e-8);
            assert!((r.eigvec.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hayes_without_delay_term() {
        let s = spectrum(&builtin::hayes(), &[1.0, 0.0, 1.0], DEFAULT_ORDER);
        assert_eq!(
            s.roots.len(),
            1,
            "{:?}",
            s.roots.iter().map(|r| r.lambda).collect::<Vec<_>>()
        );
        assert!((s.roots[0].lambda - Complex64::new(-1.0, 0.0)).norm() < 1e-14);
        assert!(leading_pair(&s.roots).is_err());
    }

    #[test]
    fn ode_case() {
        let text = r#"{"n": 2, "n_alpha": 1, "delays": [], "f": ["-a1*x1", "-3*x2"]}"#;
        let m = ModelSpec::new(ExprModel::from_json(text).unwrap());
        let s = spectrum(&m, &[1.0], DEFAULT_ORDER);
        let vals: Vec<Complex64> = s.roots.iter().map(|r| r.lambda).collect();
        assert_eq!(
            vals,
            vec![Complex64::new(-1.0, 0.0), Complex64::new(-3.0, 0.0)]
        );
    }

    #[test]
    fn leading_pair_rules() {
        let roots = vec![
            root(-0.1, 2.0),
            root(-0.1, -2.0),
            root(-0.5, 7.0),
            root(-0.5, -7.0),
        ];
        assert_eq!(
            leading_pair(&roots).unwrap().lambda,
            Complex64::new(-0.1, 2.0)
        );
        let roots = vec![root(0.3, 0.0), root(-0.2, 1.0), root(-0.2, -1.0)];
        assert_eq!(
            leading_pair(&roots).unwrap().lambda,
            Complex64::new(-0.2, 1.0)
        );
        let roots = vec![root(-0.2, 3.0), root(-0.2 + 1e-12, 1.0)];
        assert_eq!(leading_pair(&roots).unwrap().lambda.im, 1.0);
        assert!(matches!(
            leading_pair(&[root(1.0, 0.0)]),
            Err(Error::Domain(_))
        ));
        assert!(leading_pair(&[]).is_err());
    }

    #[test]
    fn refinement_is_monotone_and_accurate() {
        let a = vec![
            DMatrix::from_element(1, 1, 0.0),
            DMatrix::from_element(1, 1, -FRAC_PI_2),
        ];
        let tau = [0.0, 1.0];
        let r = refine_root(&a, &tau, Complex64::new(0.2, 1.3)).unwrap();
        assert!((r.lambda - Complex64::new(0.0, FRAC_PI_2)).norm() < 1e-13);
        for w in r.det_history.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn conjugates_are_roots() {
        for name in builtin::NAMES {
            let m = builtin::by_name(name).unwrap();
            let alpha = builtin::default_alpha(name).unwrap();
            let p = solve_steady(&m, &alpha, &DVector::zeros(m.n())).unwrap();
            let b = bundle_derivatives(&m, &p.x_tilde, &alpha).unwrap();
            let s = char_roots(&p, &b, DEFAULT_ORDER).unwrap();
            assert!(!s.roots.is_empty());
            for r in s.roots.iter().filter(|r| r.lambda.im > 0.0) {
                let d = characteristic_det(&b.a, &p.tau_values, r.lambda.conj());
                assert!(d.norm() < 1e-8, "{name}: {d}");
            }
        }
    }

    #[test]
    fn rejects_low_order() {
        let a = vec![DMatrix::from_element(1, 1, -1.0)];
        assert!(matches!(
            char_roots_from(&a, &[0.0], 4),
            Err(Error::Input(_))
        ));
    }
}
