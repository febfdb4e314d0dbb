use hopfnv::model::builtin;
use hopfnv::model::{DdeSystem, Dims};
use hopfnv::nalgebra::{DMatrix, DVector};
use hopfnv::{bundle_derivatives, DerivativeBundle, Error, ModelSpec, Provider};
use proptest::prelude::*;

fn states() -> Vec<(&'static str, DVector<f64>)> {
    vec![
        ("hayes", DVector::from_element(1, 0.0)),
        ("sd-source", DVector::from_element(1, 0.5)),
        ("quadratic", DVector::from_element(1, 0.7)),
        ("osc2", DVector::from_column_slice(&[0.2, -0.4])),
    ]
}

fn both(name: &str, x: &DVector<f64>) -> (DerivativeBundle, DerivativeBundle) {
    let model = builtin::by_name(name).unwrap();
    let alpha = builtin::default_alpha(name).unwrap();
    let exact =
        bundle_derivatives(&model.clone().with_provider(Provider::Analytic), x, &alpha).unwrap();
    let fd =
        bundle_derivatives(&model.with_provider(Provider::FiniteDifference), x, &alpha).unwrap();
    (exact, fd)
}

fn gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / (1.0 + a.amax())
}

#[test]
fn first_derivatives_agree_with_differences() {
    for (name, x) in states() {
        let (exact, fd) = both(name, &x);
        assert_eq!(exact.tau, fd.tau);
        for (a, b) in exact.a.iter().zip(&fd.a) {
            assert!(gap(a, b) < 1e-7, "{name}: A");
        }
        assert!(gap(&exact.f_alpha, &fd.f_alpha) < 1e-7, "{name}: f_alpha");
        for i in 0..exact.tau.len() {
            assert!(
                (&exact.grad_x_tau[i] - &fd.grad_x_tau[i]).amax() < 1e-7,
                "{name}"
            );
            assert!(
                (&exact.grad_alpha_tau[i] - &fd.grad_alpha_tau[i]).amax() < 1e-7,
                "{name}"
            );
        }
    }
}

#[test]
fn second_derivatives_agree_with_differences() {
    for (name, x) in states() {
        let (exact, fd) = both(name, &x);
        for i in 0..exact.a.len() {
            for (a, b) in exact.second.da_dx[i].iter().zip(&fd.second.da_dx[i]) {
                assert!(gap(a, b) < 1e-5, "{name}: dA_{i}/dx");
            }
            for (a, b) in exact.second.da_dalpha[i]
                .iter()
                .zip(&fd.second.da_dalpha[i])
            {
                assert!(gap(a, b) < 1e-5, "{name}: dA_{i}/dalpha");
            }
        }
    }
}

/// Rhs-only logistic feedback; derivatives must come from differences.
#[derive(Debug)]
struct Bare;

impl DdeSystem for Bare {
    fn name(&self) -> &str {
        "bare"
    }

    fn dims(&self) -> Dims {
        Dims {
            n: 1,
            n_alpha: 2,
            m: 1,
        }
    }

    fn rhs(&self, args: &[DVector<f64>], alpha: &DVector<f64>) -> DVector<f64> {
        let (x, xd) = (args[0][0], args[1][0]);
        DVector::from_element(1, -x + alpha[0] * xd * (1.0 - xd))
    }

    fn delay(&self, _i: usize, _x: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
        alpha[1]
    }
}

#[test]
fn analytic_request_fails_without_analytic_derivatives() {
    let model = ModelSpec::new(Bare);
    let x = DVector::from_element(1, 0.25);
    let alpha = DVector::from_column_slice(&[1.5, 2.0]);
    let err = bundle_derivatives(&model.clone().with_provider(Provider::Analytic), &x, &alpha);
    assert!(matches!(err, Err(Error::Input(_))));
    let auto = bundle_derivatives(&model, &x, &alpha).unwrap();
    // d/dx_d of a x_d (1 - x_d) is a (1 - 2 x_d)
    assert!((auto.a[1][(0, 0)] - 1.5 * 0.5).abs() < 1e-8);
    assert!((auto.a[0][(0, 0)] + 1.0).abs() < 1e-8);
    assert!((auto.second.da_dx[1][0][(0, 0)] + 3.0).abs() < 1e-5);
}

proptest! {
    #[test]
    fn contractions_are_linear(
        v1 in prop::collection::vec(-2.0f64..2.0, 2),
        v2 in prop::collection::vec(-2.0f64..2.0, 2),
        c in -3.0f64..3.0,
    ) {
        let model = builtin::osc2();
        let x = DVector::from_column_slice(&[0.3, -0.1]);
        let b = bundle_derivatives(&model, &x, &builtin::default_alpha("osc2").unwrap()).unwrap();
        let (v1, v2) = (DVector::from_vec(v1), DVector::from_vec(v2));
        let v = &v1 + &v2 * c;
        for i in 0..b.a.len() {
            let lhs = b.hess_x(&v, i);
            let rhs = b.hess_x(&v1, i) + b.hess_x(&v2, i) * c;
            prop_assert!((lhs - rhs).amax() < 1e-12);
            let lhs = b.hess_alpha(&v, i);
            let rhs = b.hess_alpha(&v1, i) + b.hess_alpha(&v2, i) * c;
            prop_assert!((lhs - rhs).amax() < 1e-12);
        }
    }

    #[test]
    fn quadratic_contraction_matches_differences(x in -2.0f64..2.0, v in -2.0f64..2.0) {
        let model = builtin::quadratic();
        let alpha = builtin::default_alpha("quadratic").unwrap();
        let exact = bundle_derivatives(&model, &DVector::from_element(1, x), &alpha).unwrap();
        let fd = bundle_derivatives(
            &model.with_provider(Provider::FiniteDifference),
            &DVector::from_element(1, x),
            &alpha,
        ).unwrap();
        let v = DVector::from_element(1, v);
        for i in 0..exact.a.len() {
            prop_assert!((exact.hess_x(&v, i) - fd.hess_x(&v, i)).amax() < 1e-5 * (1.0 + x.abs()));
        }
    }
}
