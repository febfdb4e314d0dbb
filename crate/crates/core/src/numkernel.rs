//! Dense linear algebra used by the solvers: linear solves, minimum-norm
//! least squares, SVD-based nullspaces and dense eigenpairs.

use nalgebra::{Complex, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default relative rank cutoff (relative to the largest singular value).
pub const DEFAULT_RTOL: f64 = 1e-8;

const SVD_EPS: f64 = 1e-15;
const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct NullspaceResult {
    /// Orthonormal columns spanning the numerical nullspace.
    pub basis: DMatrix<f64>,
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
    /// Absolute cutoff `rtol * sigma_max`.
    pub rank_tolerance: f64,
}

impl NullspaceResult {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Right singular vectors and descending singular values, with `V` always `q x q`.
fn full_svd(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (p, q) = m.shape();
    let padded;
    let input = if p < q {
        let mut z = DMatrix::zeros(q, q);
        z.view_mut((0, 0), (p, q)).copy_from(m);
        padded = z;
        &padded
    } else {
        m
    };
    if input.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("SVD input contains non-finite entries"));
    }
    let svd = input
        .clone()
        .try_svd(false, true, SVD_EPS, MAX_SWEEPS)
        .ok_or_else(|| Error::numerical(format!("SVD of a {p}x{q} matrix did not converge")))?;
    let v_t = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let v = DMatrix::from_fn(q, q, |r, c| v_t[(order[c], r)]);
    Ok((sv, v))
}

/// Numerical nullspace of `m` from its right singular vectors.
pub fn nullspace(m: &DMatrix<f64>, rtol: f64) -> Result<NullspaceResult> {
    let (p, q) = m.shape();
    if p == 0 || q == 0 {
        return Err(Error::input("nullspace of an empty matrix"));
    }
    let (mut sv, v) = full_svd(m)?;
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let cutoff = rtol * sigma_max;
    let rank = sv.iter().filter(|&&s| s > cutoff).count();
    let basis = v.columns(rank, q - rank).into_owned();
    sv.truncate(p.min(q));
    Ok(NullspaceResult {
        basis,
        singular_values: sv,
        rank_tolerance: cutoff,
    })
}

/// Ratio of smallest to largest singular value of a square matrix.
pub fn inverse_condition(m: &DMatrix<f64>) -> Result<f64> {
    let (sv, _) = full_svd(m)?;
    let max = sv.first().copied().unwrap_or(0.0);
    let min = sv.last().copied().unwrap_or(0.0);
    Ok(if max == 0.0 { 0.0 } else { min / max })
}

/// Solves the square system `a x = b` by LU with partial pivoting.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(Error::input(format!(
            "solve: matrix {}x{} with right-hand side of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::regularity("singular linear system"))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::regularity("linear solve produced non-finite values"));
    }
    Ok(x)
}

/// Minimum-norm least-squares solution of `a x = b`; singular values at or
/// below `rtol * sigma_max` are treated as zero.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rtol: f64) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::input("lstsq: dimension mismatch"));
    }
    let svd = a
        .clone()
        .try_svd(true, true, SVD_EPS, MAX_SWEEPS)
        .ok_or_else(|| Error::numerical("SVD did not converge in lstsq"))?;
    let cutoff = rtol * svd.singular_values.max();
    svd.solve(b, cutoff.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::numerical(e.to_string()))
}

/// Eigenvalues only, same ordering as [`dense_eigs`].
pub fn dense_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::input("dense_eigenvalues needs a square matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(
            "dense_eigenvalues input contains non-finite entries",
        ));
    }
    let schur = m
        .clone()
        .try_schur(SVD_EPS, MAX_SWEEPS)
        .ok_or_else(|| Error::numerical("Schur iteration did not converge"))?;
    let mut values: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(values)
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: Complex64,
    /// Unit 2-norm right eigenvector.
    pub vector: DVector<Complex64>,
    /// `||M v - lambda v|| / ||v||`.
    pub residual: f64,
}

/// Eigenvalues (real Schur form) and right eigenvectors (inverse iteration)
/// of a real square matrix, sorted by descending real part; within a
/// conjugate pair the positive imaginary part comes first.
pub fn dense_eigs(m: &DMatrix<f64>) -> Result<Vec<EigenPair>> {
    let values = dense_eigenvalues(m)?;
    let n = m.nrows();

    let mc: DMatrix<Complex64> = m.map(|v| Complex::new(v, 0.0));
    let scale = m.norm().max(1.0);
    let mut out = Vec::with_capacity(n);
    for (k, &value) in values.iter().enumerate() {
        // conjugate partner already computed: reuse the conjugated vector
        if value.im < 0.0 {
            if let Some(prev) = out[..k]
                .iter()
                .rev()
                .find(|p: &&EigenPair| p.value == value.conj())
            {
                let vector = prev.vector.map(|c: Complex64| c.conj());
                out.push(EigenPair {
                    value,
                    vector,
                    residual: prev.residual,
                });
                continue;
            }
        }
        let vector = inverse_iteration(&mc, value, scale)?;
        let residual = (&mc * &vector - &vector * value).norm() / vector.norm();
        out.push(EigenPair {
            value,
            vector,
            residual,
        });
    }
    Ok(out)
}

fn inverse_iteration(
    m: &DMatrix<Complex64>,
    value: Complex64,
    scale: f64,
) -> Result<DVector<Complex64>> {
    let n = m.nrows();
    let mut shift = value;
    let mut lu = None;
    for attempt in 0..4 {
        let shifted = m - DMatrix::<Complex64>::identity(n, n) * shift;
        let candidate = shifted.lu();
        if candidate.is_invertible() {
            lu = Some(candidate);
            break;
        }
        shift = value + Complex::new(1.0, 1.0) * (scale * 1e-14 * 10f64.powi(attempt));
    }
    let lu = lu.ok_or_else(|| Error::numerical("inverse iteration: shifted matrix singular"))?;
    let mut v = DVector::from_fn(n, |j, _| Complex::new(1.0 + j as f64 / n as f64, 0.0));
    v /= Complex::new(v.norm(), 0.0);
    for _ in 0..3 {
        let w = lu
            .solve(&v)
            .ok_or_else(|| Error::numerical("inverse iteration solve failed"))?;
        let norm = w.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::numerical(
                "inverse iteration produced a degenerate vector",
            ));
        }
        v = w / Complex::new(norm, 0.0);
    }
    Ok(v)
}
