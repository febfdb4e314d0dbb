//! Acceptance gate. Each test checks one criterion at its stated tolerance
//! and writes a single `[PASS]`/`[FAIL]` line to stderr (bypassing output
//! capture, so the lines show up in plain `cargo test` logs).

use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use hopfnv::model::builtin;
use hopfnv::nalgebra::DVector;
use hopfnv::spectrum::{char_roots, characteristic_det, leading_pair, Spectrum, DEFAULT_ORDER};
use hopfnv::verify::{
    eig_gradient_check, fd_jacobian_check, invariant_checks, tangent_orthogonality_check,
};
use hopfnv::{
    assemble_b_at, bundle_derivatives, closest_boundary_point, continue_manifold, find_hopf,
    normal_vector, normal_vector_on, solve_steady, BMatrix, ContinuationOptions, HopfSolution,
    ModelSpec, TrigWeights,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

fn report(criterion: u32, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "[{tag}] criterion {criterion}: {detail}");
}

/// `(model, starting alpha, free parameter)` for each built-in.
const SEEDS: [(&str, &[f64], usize); 4] = [
    ("hayes", &[0.0, 1.5, 1.0], 1),
    ("sd-source", &[1.0, 0.5, 1.0, 2.2, 0.2], 3),
    ("quadratic", &[-1.0, -2.0], 1),
    ("osc2", &[1.0, 0.5, 0.3, 1.0], 2),
];

const SIGMAS: [f64; 3] = [0.0, -0.1, 0.05];

fn hopf(name: &str, alpha: &[f64], free: usize, sigma: f64) -> (ModelSpec, HopfSolution) {
    let model = builtin::by_name(name).unwrap();
    let alpha = DVector::from_column_slice(alpha);
    let sol = find_hopf(&model, &alpha, sigma, Some(free), None, DEFAULT_ORDER)
        .unwrap_or_else(|e| panic!("{name} at sigma = {sigma}: {e}"));
    (model, sol)
}

fn spectrum_at(
    model: &ModelSpec,
    alpha: &DVector<f64>,
    order: usize,
) -> (Vec<f64>, hopfnv::DerivativeBundle, Spectrum) {
    let steady = solve_steady(model, alpha, &DVector::zeros(model.n())).unwrap();
    let bundle = bundle_derivatives(model, &steady.x_tilde, alpha).unwrap();
    let spectrum = char_roots(&steady, &bundle, order).unwrap();
    (steady.tau_values, bundle, spectrum)
}

#[test]
fn criterion_1_hayes_hopf_point() {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_hopfnv"))
        .args([
            "find-hopf",
            "--model",
            "hayes",
            "--alpha",
            "0,1.5,1",
            "--sigma",
            "0",
            "--free",
            "1",
        ])
        .output()
        .unwrap();
    let elapsed = start.elapsed();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let b_p = doc["alpha"][1].as_f64().unwrap();
    let omega = doc["omega"].as_f64().unwrap();
    let (eb, ew) = ((b_p - FRAC_PI_2).abs(), (omega - FRAC_PI_2).abs());
    let pass = eb < 1e-8 && ew < 1e-8 && elapsed < Duration::from_secs(1);
    report(
        1,
        pass,
        &format!("|b_p - pi/2| = {eb:.2e}, |omega - pi/2| = {ew:.2e}, runtime {elapsed:.2?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_2_jacobian_matches_finite_differences() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    // blocks that must be exercised with nonzero entries on the given model
    let mut exercised = Vec::new();
    for (name, alpha, free) in SEEDS {
        for sigma in SIGMAS {
            let (model, sol) = hopf(name, alpha, free, sigma);
            let b = assemble_b_at(&model, &sol.point, sigma).unwrap();
            let r = fd_jacobian_check(&model, &sol, &b).unwrap();
            worst = worst.max(r.worst_relative_error);
            failures.extend(r.failing().map(|c| format!("{name}/{sigma}/{}", c.name)));
            let nonzero = |i: usize, j: usize| b.block(i, j).amax() > 1e-6;
            match name {
                "sd-source" => exercised.push(nonzero(0, 1) && nonzero(0, 2) && nonzero(4, 1)),
                "quadratic" => exercised.push(nonzero(0, 1) && nonzero(0, 2)),
                _ => exercised.push(nonzero(4, 1) && nonzero(3, 1)),
            }
        }
    }
    let elapsed = start.elapsed();
    let covered = exercised.iter().all(|&e| e);
    let pass = failures.is_empty() && covered && elapsed < Duration::from_secs(10);
    report(
        2,
        pass,
        &format!(
            "worst blockwise relative error {worst:.2e} over 4 models x 3 margins, all 25 blocks each, runtime {elapsed:.2?}{}",
            if failures.is_empty() { String::new() } else { format!(", failing {failures:?}") }
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_tangent_orthogonality() {
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, alpha, free) in [SEEDS[0], SEEDS[1]] {
        let (model, sol) = hopf(name, alpha, free, 0.0);
        let nv = normal_vector(&assemble_b_at(&model, &sol.point, 0.0).unwrap()).unwrap();
        let r = tangent_orthogonality_check(&model, &sol, &nv).unwrap();
        let c = &r.checks[0];
        pass &= r.passed
            && c.note.as_deref() == Some(&format!("tangent dimension {}", model.n_alpha() - 1));
        lines.push(format!(
            "{name} max|r.t| = {:.2e} ({})",
            c.measured,
            c.note.clone().unwrap_or_default()
        ));
    }
    report(3, pass, &lines.join("; "));
    assert!(pass);
}

#[test]
fn criterion_4_level_set_gradient() {
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, alpha, free) in [SEEDS[0], SEEDS[1]] {
        let (model, sol) = hopf(name, alpha, free, 0.0);
        let nv = normal_vector(&assemble_b_at(&model, &sol.point, 0.0).unwrap()).unwrap();
        let r = eig_gradient_check(&model, &sol, &nv).unwrap();
        let c = &r.checks[0];
        let conclusive = !c.note.as_deref().unwrap_or("").starts_with("inconclusive");
        pass &= r.passed && conclusive;
        lines.push(format!("{name} 1 - cos = {:.2e}", c.measured));
    }
    report(4, pass, &lines.join("; "));
    assert!(pass);
}

/// `max_k |r_k . (alpha_{k+1} - alpha_k)|` along a Hayes run with `tau = 1` frozen.
fn secant_defect(start: &HopfSolution, steps: usize, h: f64) -> f64 {
    let model = builtin::hayes();
    let direction = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
    let opts = ContinuationOptions::new(direction, steps, h).with_active(vec![0, 1]);
    let run = continue_manifold(&model, start, &opts).unwrap();
    assert_eq!(run.points.len(), steps + 1);
    assert!(
        run.step_sizes.iter().all(|&s| s == h),
        "step size was reduced"
    );
    run.points
        .windows(2)
        .map(|w| {
            let b = assemble_b_at(&model, &w[0].point, w[0].sigma).unwrap();
            let r = normal_vector_on(&b, &[0, 1]).unwrap().r;
            r.dot(&(&w[1].point.alpha - &w[0].point.alpha)).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn criterion_5_secant_order() {
    let (_, start) = hopf("hayes", &[0.0, 1.5, 1.0], 1, 0.0);
    let h = 0.02;
    // both runs cover the same stretch of the curve: 20 steps of h, 40 of h / 2
    let coarse = secant_defect(&start, 20, h);
    let fine = secant_defect(&start, 40, h / 2.0);
    let ratio = coarse / fine;
    let pass = (3.0..=5.0).contains(&ratio);
    report(
        5,
        pass,
        &format!("max |r.(alpha_k+1 - alpha_k)|: {coarse:.3e} at h = {h}, {fine:.3e} at h/2, ratio {ratio:.3}"),
    );
    assert!(pass);
}

#[test]
fn criterion_6_closest_point() {
    let model = builtin::hayes();
    let (_, seed) = hopf("hayes", &[0.0, 1.5, 1.0], 1, 0.0);
    let nominal = DVector::from_column_slice(&[0.0, 1.2, 1.0]);
    let cp = closest_boundary_point(&model, &nominal, &seed, Some(&[0, 1])).unwrap();

    // brute force: densely continued boundary, both directions from the seed
    let h = 1e-3;
    let mut brute = f64::INFINITY;
    for sign in [1.0, -1.0] {
        let direction = DVector::from_column_slice(&[sign, 0.0, 0.0]);
        let opts = ContinuationOptions::new(direction, 700, h).with_active(vec![0, 1]);
        let run = continue_manifold(&model, &seed, &opts).unwrap();
        for p in &run.points {
            brute = brute.min((&p.point.alpha - &nominal).norm());
        }
    }
    let diff = (cp.distance.abs() - brute).abs();

    let on =
        closest_boundary_point(&model, &seed.point.alpha.clone(), &seed, Some(&[0, 1])).unwrap();
    let pass = diff < 1e-4 && on.distance.abs() < 1e-9;
    report(
        6,
        pass,
        &format!(
            "|l| = {:.9}, brute force {brute:.9}, difference {diff:.2e}; on-manifold |l| = {:.2e}",
            cp.distance.abs(),
            on.distance.abs()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_spectrum_convergence() {
    let mut worst_shift: f64 = 0.0;
    let mut worst_det: f64 = 0.0;
    let mut cases = 0;
    for (name, alpha, free) in SEEDS {
        let model = builtin::by_name(name).unwrap();
        // the nominal parameters and the sigma = 0 point of each model
        let (_, sol) = hopf(name, alpha, free, 0.0);
        for alpha in [DVector::from_column_slice(alpha), sol.point.alpha.clone()] {
            let (tau, bundle, s20) = spectrum_at(&model, &alpha, 20);
            let (_, _, s32) = spectrum_at(&model, &alpha, 32);
            let l20 = leading_pair(&s20.roots).unwrap().lambda;
            let l32 = leading_pair(&s32.roots).unwrap().lambda;
            worst_shift = worst_shift.max((l20 - l32).norm());
            for r in s20.roots.iter().chain(&s32.roots) {
                worst_det = worst_det.max(characteristic_det(&bundle.a, &tau, r.lambda).norm());
            }
            cases += 1;
        }
    }
    let pass = worst_shift < 1e-9 && worst_det < 1e-8;
    report(
        7,
        pass,
        &format!("{cases} spectra: max |leading(N=20) - leading(N=32)| = {worst_shift:.2e}, max |det| = {worst_det:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_8_invariant_properties() {
    let mut failures: Vec<String> = Vec::new();
    let config = Config {
        cases: 24,
        failure_persistence: None,
        ..Config::default()
    };

    // trig weights
    let mut runner = TestRunner::new(config.clone());
    let trig = runner.run(
        &(
            prop::collection::vec(0.0..5.0f64, 1..6),
            -1.0..1.0f64,
            0.0..10.0f64,
        ),
        |(mut tau, sigma, omega)| {
            tau[0] = 0.0;
            let w = TrigWeights::new(&tau, sigma, omega);
            prop_assert!(w.s[0] == 0.0 && w.c[0] == 1.0);
            for (i, t) in tau.iter().enumerate() {
                let e = (-2.0 * sigma * t).exp();
                prop_assert!((w.s[i].powi(2) + w.c[i].powi(2) - e).abs() <= 1e-12 * e.max(1.0));
            }
            Ok(())
        },
    );
    if let Err(e) = trig {
        failures.push(format!("trig weights: {e}"));
    }

    // converged solutions: norm, phase, kernel, unit normal
    let mut runner = TestRunner::new(config.clone());
    let solutions = runner.run(&(0..4usize, -0.1..0.05f64), |(k, sigma)| {
        let (name, alpha, free) = SEEDS[k];
        let (model, sol) = hopf(name, alpha, free, sigma);
        let b: BMatrix = assemble_b_at(&model, &sol.point, sigma).unwrap();
        let nv = normal_vector(&b).unwrap();
        let report = invariant_checks(&model, &sol, &b, &nv).unwrap();
        for name in [
            "norm_condition",
            "phase_condition",
            "kernel_residual",
            "unit_normal",
            "trig_identity",
        ] {
            let c = report.check(name).unwrap();
            prop_assert!(c.pass, "{} at sigma {}: {:?}", SEEDS[k].0, sigma, c);
        }
        Ok(())
    });
    if let Err(e) = solutions {
        failures.push(format!("solution invariants: {e}"));
    }

    // conjugate closure of computed spectra
    let mut runner = TestRunner::new(config);
    let conj = runner.run(
        &(0.0..1.0f64, 0.5..3.0f64, 0.2..2.0f64),
        |(a_p, b_p, tau)| {
            let model = builtin::hayes();
            let alpha = DVector::from_column_slice(&[a_p, b_p, tau]);
            let (tau_values, bundle, s) = spectrum_at(&model, &alpha, DEFAULT_ORDER);
            for r in &s.roots {
                let d = characteristic_det(&bundle.a, &tau_values, r.lambda.conj()).norm();
                prop_assert!(d < 1e-8, "det at conjugate of {} = {d:e}", r.lambda);
                if r.lambda.im > 0.0 {
                    let partner = s
                        .roots
                        .iter()
                        .any(|q| (q.lambda - r.lambda.conj()).norm() < 1e-12);
                    prop_assert!(partner, "missing conjugate of {}", r.lambda);
                }
            }
            Ok(())
        },
    );
    if let Err(e) = conj {
        failures.push(format!("conjugate closure: {e}"));
    }

    let pass = failures.is_empty();
    report(
        8,
        pass,
        &if pass {
            "trig identities, norm/phase conditions, kernel residual, unit normal and conjugate closure hold on 24 random cases each".to_string()
        } else {
            failures.join("; ")
        },
    );
    assert!(pass);
}
