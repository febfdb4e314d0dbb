//! Built-in systems with analytic derivatives.
//!
//! | name        | n | alpha                        | delay                  |
//! |-------------|---|------------------------------|------------------------|
//! | `hayes`     | 1 | `(a_p, b_p, tau)`            | `tau`                  |
//! | `sd-source` | 1 | `(mu, a_p, b_p, tau_c, c)`   | `tau_c + c * x(t)`     |
//! | `quadratic` | 1 | `(alpha_1, alpha_2)`         | `1`                    |
//! | `osc2`      | 2 | `(k, d, g, tau)`             | `tau`                  |

use nalgebra::{DMatrix, DVector};

use super::{DdeSystem, Dims, FirstDerivatives, ModelSpec, SecondDerivatives};

pub const NAMES: [&str; 4] = ["hayes", "sd-source", "quadratic", "osc2"];

pub fn by_name(name: &str) -> Option<ModelSpec> {
    match name {
        "hayes" => Some(hayes()),
        "sd-source" => Some(sd_source()),
        "quadratic" => Some(quadratic()),
        "osc2" => Some(osc2()),
        _ => None,
    }
}

/// A nominal parameter vector per built-in, used by tests and examples.
pub fn default_alpha(name: &str) -> Option<DVector<f64>> {
    let v: &[f64] = match name {
        "hayes" => &[0.0, 1.5, 1.0],
        "sd-source" => &[1.0, 0.5, 1.0, 2.2, 0.2],
        "quadratic" => &[-1.0, -2.0],
        "osc2" => &[1.0, 0.5, 0.3, 1.0],
        _ => return None,
    };
    Some(DVector::from_column_slice(v))
}

pub fn hayes() -> ModelSpec {
    ModelSpec::new(Hayes)
}

pub fn sd_source() -> ModelSpec {
    ModelSpec::new(SdSource)
}

pub fn quadratic() -> ModelSpec {
    ModelSpec::new(Quadratic)
}

pub fn osc2() -> ModelSpec {
    ModelSpec::new(Osc2)
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn zeros(rows: usize, count: usize) -> Vec<DMatrix<f64>> {
    vec![DMatrix::zeros(rows, rows); count]
}

/// `x' = -a_p x(t) - b_p x(t - tau)`.
#[derive(Debug, Clone, Copy)]
pub struct Hayes;

impl DdeSystem for Hayes {
    fn name(&self) -> &str {
        "hayes"
    }

    fn dims(&self) -> Dims {
        Dims {
            n: 1,
            n_alpha: 3,
            m: 1,
        }
    }

    fn rhs(&self, args: &[DVector<f64>], alpha: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, -alpha[0] * args[0][0] - alpha[1] * args[1][0])
    }

    fn delay(&self, _i: usize, _x: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
        alpha[2]
    }

    fn analytic_first(&self, x: &DVector<f64>, alpha: &DVector<f64>) -> Option<FirstDerivatives> {
        Some(FirstDerivatives {
            a: vec![scalar(-alpha[0]), scalar(-alpha[1])],
            f_alpha: DMatrix::from_row_slice(1, 3, &[-x[0], -x[0], 0.0]),
            grad_x_tau: vec![DVector::zeros(1)],
            grad_alpha_tau: vec![DVector::from_column_slice(&[0.0, 0.0, 1.0])],
        })
    }

    fn analytic_second(
        &self,
        _x: &DVector<f64>,
        _alpha: &DVector<f64>,
    ) -> Option<SecondDerivatives> {
        let mut da_dalpha = vec![zeros(1, 3), zeros(1, 3)];
        da_dalpha[0][0] = scalar(-1.0);
        da_dalpha[1][1] = scalar(-1.0);
        Some(SecondDerivatives {
            da_dx: vec![zeros(1, 1), zeros(1, 1)],
            da_dalpha,
        })
    }

    fn param_names(&self) -> Vec<String> {
        vec!["a_p".into(), "b_p".into(), "tau".into()]
    }
}

/// `x' = mu - a_p x(t) - b_p x(t - tau)` with `tau = tau_c + c x(t)`.
#[derive(Debug, Clone, Copy)]
pub struct SdSource;

impl DdeSystem for SdSource {
    fn name(&self) -> &str {
        "sd-source"
    }

    fn dims(&self) -> Dims {
        Dims {
            n: 1,
            n_alpha: 5,
            m: 1,
        }
    }

    fn rhs(&self, args: &[DVector<f64>], alpha: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, alpha[0] - alpha[1] * args[0][0] - alpha[2] * args[1][0])
    }

    fn delay(&self, _i: usize, x: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
        alpha[3] + alpha[4] * x[0]
    }

    fn analytic_first(&self, x: &DVector<f64>, alpha: &DVector<f64>) -> Option<FirstDerivatives> {
        Some(FirstDerivatives {
            a: vec![scalar(-alpha[1]), scalar(-alpha[2])],
            f_alpha: DMatrix::from_row_slice(1, 5, &[1.0, -x[0], -x[0], 0.0, 0.0]),
            grad_x_tau: vec![DVector::from_element(1, alpha[4])],
            grad_alpha_tau: vec![DVector::from_column_slice(&[0.0, 0.0, 0.0, 1.0, x[0]])],
        })
    }

    fn analytic_second(
        &self,
        _x: &DVector<f64>,
        _alpha: &DVector<f64>,
    ) -> Option<SecondDerivatives> {
        let mut da_dalpha = vec![zeros(1, 5), zeros(1, 5)];
        da_dalpha[0][1] = scalar(-1.0);
        da_dalpha[1][2] = scalar(-1.0);
        Some(SecondDerivatives {
            da_dx: vec![zeros(1, 1), zeros(1, 1)],
            da_dalpha,
        })
    }

    fn param_names(&self) -> Vec<String> {
        vec![
            "mu".into(),
            "a_p".into(),
            "b_p".into(),
            "tau_c".into(),
            "c".into(),
        ]
    }
}

/// `x' = alpha_1 x(t) + alpha_2 x(t - 1) + x(t) x(t - 1)`.
#[derive(Debug, Clone, Copy)]
pub struct Quadratic;

impl DdeSystem for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dims(&self) -> Dims {
        Dims {
            n: 1,
            n_alpha: 2,
            m: 1,
        }
    }

    fn rhs(&self, args: &[DVector<f64>], alpha: &DVector<f64>) -> DVector<f64> {
        let (x0, x1) = (args[0][0], args[1][0]);
        DVector::from_element(1, alpha[0] * x0 + alpha[1] * x1 + x0 * x1)
    }

    fn delay(&self, _i: usize, _x: &DVector<f64>, _alpha: &DVector<f64>) -> f64 {
        1.0
    }

    fn analytic_first(&self, x: &DVector<f64>, alpha: &DVector<f64>) -> Option<FirstDerivatives> {
        Some(FirstDerivatives {
            a: vec![scalar(alpha[0] + x[0]), scalar(alpha[1] + x[0])],
            f_alpha: DMatrix::from_row_slice(1, 2, &[x[0], x[0]]),
            grad_x_tau: vec![DVector::zeros(1)],
            grad_alpha_tau: vec![DVector::zeros(2)],
        })
    }

    fn analytic_second(
        &self,
        _x: &DVector<f64>,
        _alpha: &DVector<f64>,
    ) -> Option<SecondDerivatives> {
        let mut da_dalpha = vec![zeros(1, 2), zeros(1, 2)];
        da_dalpha[0][0] = scalar(1.0);
        da_dalpha[1][1] = scalar(1.0);
        Some(SecondDerivatives {
            da_dx: vec![vec![scalar(1.0)], vec![scalar(1.0)]],
            da_dalpha,
        })
    }

    fn param_names(&self) -> Vec<String> {
        vec!["alpha_1".into(), "alpha_2".into()]
    }
}

/// Damped oscillator with delayed position feedback:
/// `x1' = x2`, `x2' = -k x1 - d x2 - g x1(t - tau)`.
#[derive(Debug, Clone, Copy)]
pub struct Osc2;

impl DdeSystem for Osc2 {
    fn name(&self) -> &str {
        "osc2"
    }

    fn dims(&self) -> Dims {
        Dims {
            n: 2,
            n_alpha: 4,
            m: 1,
        }
    }

    fn rhs(&self, args: &[DVector<f64>], alpha: &DVector<f64>) -> DVector<f64> {
        let (x, xd) = (&args[0], &args[1]);
        DVector::from_column_slice(&[x[1], -alpha[0] * x[0] - alpha[1] * x[1] - alpha[2] * xd[0]])
    }

    fn delay(&self, _i: usize, _x: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
        alpha[3]
    }

    fn analytic_first(&self, x: &DVector<f64>, alpha: &DVector<f64>) -> Option<FirstDerivatives> {
        Some(FirstDerivatives {
            a: vec![
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -alpha[0], -alpha[1]]),
                DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -alpha[2], 0.0]),
            ],
            f_alpha: DMatrix::from_row_slice(2, 4, &[0.0, 0.0, 0.0, 0.0, -x[0], -x[1], -x[0], 0.0]),
            grad_x_tau: vec![DVector::zeros(2)],
            grad_alpha_tau: vec![DVector::from_column_slice(&[0.0, 0.0, 0.0, 1.0])],
        })
    }

    fn analytic_second(
        &self,
        _x: &DVector<f64>,
        _alpha: &DVector<f64>,
    ) -> Option<SecondDerivatives> {
        let e = |r: usize, c: usize| {
            let mut m = DMatrix::zeros(2, 2);
            m[(r, c)] = -1.0;
            m
        };
        let mut da_dalpha = vec![zeros(2, 4), zeros(2, 4)];
        da_dalpha[0][0] = e(1, 0);
        da_dalpha[0][1] = e(1, 1);
        da_dalpha[1][2] = e(1, 0);
        Some(SecondDerivatives {
            da_dx: vec![zeros(2, 2), zeros(2, 2)],
            da_dalpha,
        })
    }

    fn state_names(&self) -> Vec<String> {
        vec!["position".into(), "velocity".into()]
    }

    fn param_names(&self) -> Vec<String> {
        vec!["k".into(), "d".into(), "g".into(), "tau".into()]
    }
}
