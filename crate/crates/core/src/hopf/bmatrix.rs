//! The transposed Jacobian `B` of the defining system.
//!
//! Block rows follow the unknowns `(x_tilde, a, b, omega, alpha)`, block
//! columns the equation groups (steady state, real eigen rows, imaginary
//! eigen rows, norm, phase). Every block is built from closed forms; no
//! differencing happens here.

use nalgebra::{DMatrix, DVector};

use super::{HopfPoint, TrigWeights};
use crate::error::Result;
use crate::model::{bundle_derivatives, DerivativeBundle, ModelSpec};

pub const BLOCK_ROWS: [&str; 5] = ["x", "a", "b", "omega", "alpha"];
pub const BLOCK_COLS: [&str; 5] = ["steady", "real", "imag", "norm", "phase"];

#[derive(Debug, Clone, PartialEq)]
pub struct BMatrix {
    /// `(3n + 1 + n_alpha) x (3n + 2)`.
    pub assembled: DMatrix<f64>,
    n: usize,
    n_alpha: usize,
}

impl BMatrix {
    pub fn from_assembled(assembled: DMatrix<f64>, n: usize, n_alpha: usize) -> Self {
        assert_eq!(assembled.shape(), (3 * n + 1 + n_alpha, 3 * n + 2));
        BMatrix {
            assembled,
            n,
            n_alpha,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_alpha(&self) -> usize {
        self.n_alpha
    }

    pub fn row_sizes(&self) -> [usize; 5] {
        let n = self.n;
        [n, n, n, 1, self.n_alpha]
    }

    pub fn col_sizes(&self) -> [usize; 5] {
        let n = self.n;
        [n, n, n, 1, 1]
    }

    fn offsets(sizes: [usize; 5]) -> [usize; 5] {
        let mut out = [0; 5];
        for k in 1..5 {
            out[k] = out[k - 1] + sizes[k - 1];
        }
        out
    }

    pub fn row_offsets(&self) -> [usize; 5] {
        Self::offsets(self.row_sizes())
    }

    pub fn col_offsets(&self) -> [usize; 5] {
        Self::offsets(self.col_sizes())
    }

    /// Block `(i, j)` with zero-based indices.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let (r, c) = (self.row_offsets()[i], self.col_offsets()[j]);
        self.assembled
            .view((r, c), (self.row_sizes()[i], self.col_sizes()[j]))
            .into_owned()
    }

    pub fn block_mut(&mut self, i: usize, j: usize) -> nalgebra::DMatrixViewMut<'_, f64> {
        let (r, c) = (self.row_offsets()[i], self.col_offsets()[j]);
        let shape = (self.row_sizes()[i], self.col_sizes()[j]);
        self.assembled.view_mut((r, c), shape)
    }

    /// `"B11"` .. `"B55"`, one-based.
    pub fn block_name(i: usize, j: usize) -> String {
        format!("B{}{}", i + 1, j + 1)
    }

    /// The first `3n + 1` rows (everything except the parameter rows).
    pub fn k(&self) -> DMatrix<f64> {
        self.assembled.rows(0, 3 * self.n + 1).into_owned()
    }

    /// The last `n_alpha` rows.
    pub fn b_alpha(&self) -> DMatrix<f64> {
        self.assembled
            .rows(3 * self.n + 1, self.n_alpha)
            .into_owned()
    }

    /// Jacobian of the residual w.r.t. `(x_tilde, a, b, omega, alpha)`.
    pub fn jacobian(&self) -> DMatrix<f64> {
        self.assembled.transpose()
    }
}

fn outer(u: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    u * v.transpose()
}

/// Assembles `B` from a derivative bundle taken at `(point.x_tilde, point.alpha)`.
pub fn assemble_b(bundle: &DerivativeBundle, point: &HopfPoint, sigma: f64) -> BMatrix {
    let n = bundle.n();
    let n_alpha = bundle.n_alpha();
    let (a, b, omega) = (&point.a, &point.b, point.omega);
    let w = TrigWeights::new(&bundle.tau, sigma, omega);
    let eye = DMatrix::<f64>::identity(n, n);

    let mut b12 = DMatrix::zeros(n, n);
    let mut b13 = DMatrix::zeros(n, n);
    let mut b52 = DMatrix::zeros(n_alpha, n);
    let mut b53 = DMatrix::zeros(n_alpha, n);
    let mut sum_c = DMatrix::zeros(n, n);
    let mut sum_s = DMatrix::zeros(n, n);
    let mut b42 = -b.transpose();
    let mut b43 = a.transpose();

    for (i, ai) in bundle.a.iter().enumerate() {
        let (s, c, tau) = (w.s[i], w.c[i], bundle.tau[i]);

        // d/dtau of the trig weights, pushed through A_i
        let p_re = ai * ((a * c + b * s) * sigma + (a * s - b * c) * omega);
        let p_im = ai * ((b * c - a * s) * sigma + (b * s + a * c) * omega);
        b12 += outer(&bundle.grad_x_tau[i], &p_re);
        b13 += outer(&bundle.grad_x_tau[i], &p_im);
        b52 += outer(&bundle.grad_alpha_tau[i], &p_re);
        b53 += outer(&bundle.grad_alpha_tau[i], &p_im);

        // derivatives of A_i itself
        let (hx_a, hx_b) = (bundle.hess_x(a, i), bundle.hess_x(b, i));
        b12 -= &hx_a * c + &hx_b * s;
        b13 -= &hx_b * c - &hx_a * s;
        let (ha_a, ha_b) = (bundle.hess_alpha(a, i), bundle.hess_alpha(b, i));
        b52 -= &ha_a * c + &ha_b * s;
        b53 -= &ha_b * c - &ha_a * s;

        let at = ai.transpose();
        sum_c += &at * c;
        sum_s += &at * s;
        b42 += (ai * (a * s - b * c)).transpose() * tau;
        b43 += (ai * (b * s + a * c)).transpose() * tau;
    }

    let mut out =
        BMatrix::from_assembled(DMatrix::zeros(3 * n + 1 + n_alpha, 3 * n + 2), n, n_alpha);
    out.block_mut(0, 0).copy_from(&bundle.grad_x_f());
    out.block_mut(0, 1).copy_from(&b12);
    out.block_mut(0, 2).copy_from(&b13);
    out.block_mut(1, 1).copy_from(&(&eye * sigma - &sum_c));
    out.block_mut(1, 2).copy_from(&(&eye * omega + &sum_s));
    out.block_mut(2, 1).copy_from(&(-&eye * omega - &sum_s));
    out.block_mut(2, 2).copy_from(&(&eye * sigma - &sum_c));
    out.block_mut(1, 3).copy_from(&(a * 2.0));
    out.block_mut(1, 4).copy_from(b);
    out.block_mut(2, 3).copy_from(&(b * 2.0));
    out.block_mut(2, 4).copy_from(a);
    out.block_mut(3, 1).copy_from(&b42);
    out.block_mut(3, 2).copy_from(&b43);
    out.block_mut(4, 0).copy_from(&bundle.grad_alpha_f());
    out.block_mut(4, 1).copy_from(&b52);
    out.block_mut(4, 2).copy_from(&b53);
    out
}

/// Computes the derivative bundle at the point and assembles `B`.
pub fn assemble_b_at(model: &ModelSpec, point: &HopfPoint, sigma: f64) -> Result<BMatrix> {
    let bundle = bundle_derivatives(model, &point.x_tilde, &point.alpha)?;
    Ok(assemble_b(&bundle, point, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;
    use std::f64::consts::FRAC_PI_2;

    fn hayes_b(sigma: f64) -> BMatrix {
        let p = HopfPoint {
            x_tilde: DVector::zeros(1),
            alpha: DVector::from_column_slice(&[0.0, FRAC_PI_2, 1.0]),
            omega: FRAC_PI_2,
            a: DVector::from_element(1, 1.0),
            b: DVector::zeros(1),
        };
        assemble_b_at(&builtin::hayes(), &p, sigma).unwrap()
    }

    #[test]
    fn shapes() {
        let b = hayes_b(0.0);
        assert_eq!(b.assembled.shape(), (7, 5));
        assert_eq!(b.k().shape(), (4, 5));
        assert_eq!(b.b_alpha().shape(), (3, 5));
        assert_eq!(b.block(4, 1).shape(), (3, 1));
        assert_eq!(BMatrix::block_name(1, 2), "B23");
    }

    #[test]
    fn hayes_eigen_blocks_vanish() {
        let b = hayes_b(0.0);
        assert!(b.block(1, 1)[(0, 0)].abs() < 1e-15);
        assert!(b.block(1, 2)[(0, 0)].abs() < 1e-15);
    }

    #[test]
    fn structural_zeros_and_constant_blocks() {
        let b = hayes_b(0.0);
        for (i, j) in [
            (0, 3),
            (0, 4),
            (3, 3),
            (3, 4),
            (4, 3),
            (4, 4),
            (1, 0),
            (2, 0),
            (3, 0),
        ] {
            assert!(
                b.block(i, j).iter().all(|&v| v == 0.0),
                "{}",
                BMatrix::block_name(i, j)
            );
        }
        assert_eq!(b.block(1, 3)[(0, 0)], 2.0);
        assert_eq!(b.block(1, 4)[(0, 0)], 0.0);
        assert_eq!(b.block(2, 3)[(0, 0)], 0.0);
        assert_eq!(b.block(2, 4)[(0, 0)], 1.0);
    }

    #[test]
    fn constant_delay_linear_model_has_no_state_coupling() {
        let b = hayes_b(-0.1);
        assert!(b.block(0, 1).iter().all(|&v| v == 0.0));
        assert!(b.block(0, 2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sd_source_state_coupling_is_delay_gradient_only() {
        let m = builtin::sd_source();
        let alpha = DVector::from_column_slice(&[1.0, 0.5, 1.0, 2.2, 0.2]);
        let x = DVector::from_element(1, 2.0 / 3.0);
        let bundle = bundle_derivatives(&m, &x, &alpha).unwrap();
        assert_eq!(bundle.grad_x_tau[1][0], 0.2);
        let p = HopfPoint {
            x_tilde: x,
            alpha,
            omega: 0.8,
            a: DVector::from_element(1, 0.6),
            b: DVector::from_element(1, 0.8),
        };
        let sigma = 0.0;
        let bm = assemble_b(&bundle, &p, sigma);
        let w = TrigWeights::new(&bundle.tau, sigma, p.omega);
        let a1 = bundle.a[1][(0, 0)];
        let expect = 0.2 * a1 * p.omega * (w.s[1] * 0.6 - w.c[1] * 0.8);
        assert!((bm.block(0, 1)[(0, 0)] - expect).abs() < 1e-15);
    }
}
