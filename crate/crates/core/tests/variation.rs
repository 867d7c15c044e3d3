mod common;

use std::f64::consts::PI;

use common::*;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soliton_lab::geodesic::*;
use soliton_lab::phi::PhiSpec;
use soliton_lab::variation::*;

fn straight(k: usize) -> GeodesicSolution {
    let m = flat(2, 0.25);
    minimize_j(&m, &PhiSpec::zero(), &[0.0, 0.0], &[1.0, 0.0], 1.0, k, 1).unwrap()
}

fn cosh_solution(k: usize) -> GeodesicSolution {
    let m = hyperbolic(2);
    integrate_phi_geodesic(&m, &PhiSpec::HalfOnePlusNormSq, &[1.0, 0.0], &[0.0, 0.0], 1.0, 1.0 / k as f64).unwrap()
}

fn sine_normal(sol: &GeodesicSolution) -> VariationField {
    VariationField::from_fn(&sol.path, |s| vec![0.0, (PI * s).sin()])
}

#[test]
fn index_form_flat_closed_form() {
    let m = flat(2, 0.25);
    let sol = straight(256);
    let u = sine_normal(&sol);
    let q = index_form(&m, &PhiSpec::zero(), &sol, &u).unwrap();
    assert!((q - PI * PI / 2.0).abs() < 1e-6, "{q}");
    let fd = second_variation_fd(&m, &PhiSpec::zero(), &sol, &u, 1e-3).unwrap();
    assert!((fd - PI * PI / 2.0).abs() < 1e-6, "{fd}");
}

#[test]
fn index_form_hyperbolic_closed_form() {
    let m = hyperbolic(2);
    let phi = PhiSpec::HalfOnePlusNormSq;
    let sol = cosh_solution(256);
    let u = sine_normal(&sol);
    let expected = PI * PI / 2.0 + 0.5;
    let q = index_form(&m, &phi, &sol, &u).unwrap();
    assert!((q - expected).abs() < 1e-5, "{q}");
    let fd = second_variation_fd(&m, &phi, &sol, &u, 1e-3).unwrap();
    assert!((fd - expected).abs() < 1e-5, "{fd}");
}

#[test]
fn free_endpoint_field_is_rejected() {
    let m = flat(2, 0.25);
    let sol = straight(64);
    let u = VariationField::from_fn(&sol.path, |s| vec![0.0, s]);
    assert!(!u.vanishing);
    assert!(index_form(&m, &PhiSpec::zero(), &sol, &u).is_err());
}

#[test]
fn index_form_matches_fd_on_random_cigar_cases() {
    let m = cigar();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..6 {
        let c = [0.05, 0.25, 1.0][case % 3];
        let phi = PhiSpec::CTimesR(c);
        let y = [rng.gen_range(0.5..3.0), rng.gen_range(-2.0..2.0)];
        let s_bar = rng.gen_range(1.0..4.0);
        let direct = minimize_j(&m, &phi, &[0.0, 0.0], &y, s_bar, 256, 1).unwrap();
        let sol = refine_with_shooting(&m, &phi, &direct, 1e-11).unwrap();
        let amp: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let u = VariationField::from_fn(&sol.path, |s| {
            let t = s / s_bar;
            vec![
                amp[0] * (PI * t).sin() + amp[2] * (2.0 * PI * t).sin(),
                amp[1] * (PI * t).sin() * (1.0 + t),
            ]
        });
        let q = index_form(&m, &phi, &sol, &u).unwrap();
        let fd = second_variation_fd(&m, &phi, &sol, &u, 1e-3).unwrap();
        let tol = (1e-2 * q.abs()).max(1e-4);
        assert!((q - fd).abs() <= tol, "case {case}: {q} vs {fd}");
        assert!(q >= -1e-8, "case {case}: index form {q} negative on a minimizer");
    }
}

#[test]
fn parallel_normal_index_is_nonnegative() {
    let m = cigar();
    let phi = PhiSpec::CTimesR(0.25);
    let y = cigar_radial(8.0);
    let direct = minimize_j(&m, &phi, &[0.0, 0.0], &y, 8.0, 256, 1).unwrap();
    let sol = refine_with_shooting(&m, &phi, &direct, 1e-11).unwrap();
    let e0 = initial_unit_normal(&m, &sol).unwrap();
    let g0 = m.metric(sol.path.x());
    assert!(((e0.transpose() * &g0 * &e0)[(0, 0)] - 1.0).abs() < 1e-12);
    for zeta in [TestFunction::trapezoid(8.0).unwrap(), TestFunction::sine_bump(8.0).unwrap()] {
        let u = parallel_variation(&m, &sol, &e0, &zeta).unwrap();
        let q = index_form(&m, &phi, &sol, &u).unwrap();
        assert!(q >= -1e-8, "{} gives {q}", zeta.label());
    }
}

#[test]
fn parallel_frame_stays_orthonormal() {
    let m = cigar_product(1);
    let phi = PhiSpec::CTimesR(0.25);
    let y = [2.0, 1.0, 1.5];
    let d = riemann_distance(&m, &[0.0, 0.0, 0.0], &y).unwrap();
    let sol = minimize_j(&m, &phi, &[0.0, 0.0, 0.0], &y, d, 128, 1).unwrap();
    let frames = parallel_frame(&m, &sol).unwrap();
    for (k, f) in frames.iter().enumerate() {
        assert!(f.orthonormality_defect(&m.metric(&sol.path.samples[k])) < 1e-9);
    }
}

#[test]
fn flat_ledgers_are_exact() {
    let m = flat(2, 0.25);
    let phi = PhiSpec::Constant(0.25);
    let sol = minimize_j(&m, &phi, &[0.0, 0.0], &[4.0, 3.0], 5.0, 200, 1).unwrap();
    let zeta = TestFunction::trapezoid(5.0).unwrap();
    let t = trace_index_inequality(&m, &phi, &sol, &zeta).unwrap();
    // n∫ζ′² = 2·2 on the trapezoid, lhs = 0.
    assert!(t.lhs.abs() < 1e-12 && (t.rhs - 4.0).abs() < 1e-12 && t.holds);
    let w = weighted_index_inequality(&m, &phi, &sol, &zeta).unwrap();
    assert!((w.slack - t.slack).abs() < 1e-12);
    let r = ricci_l2_inequality(&m, &sol, &zeta, 0.25).unwrap();
    assert!(r.lhs.abs() < 1e-14 && r.holds);
    let g = grad_r_inequality(&m, &sol, &zeta, 0.25).unwrap();
    assert!(g.lhs.abs() < 1e-14 && g.holds);
}

#[test]
fn cigar_ledgers_hold_and_chain() {
    let m = cigar();
    let c = 0.25;
    let phi = PhiSpec::CTimesR(c);
    let y = cigar_radial(10.0);
    let direct = minimize_j(&m, &phi, &[0.0, 0.0], &y, 10.0, 512, 1).unwrap();
    let sol = refine_with_shooting(&m, &phi, &direct, 1e-10).unwrap();
    let zeta = TestFunction::trapezoid(10.0).unwrap();
    let t = trace_index_inequality(&m, &phi, &sol, &zeta).unwrap();
    let w = weighted_index_inequality(&m, &phi, &sol, &zeta).unwrap();
    let r = ricci_l2_inequality(&m, &sol, &zeta, c).unwrap();
    let g = grad_r_inequality(&m, &sol, &zeta, c).unwrap();
    for l in [&t, &w, &r, &g] {
        assert!(l.holds && l.slack > 0.0, "{} slack {}", l.name, l.slack);
    }
    assert!(w.aux_residual <= 1e-7, "weighted lhs vs 2c∫ζ²|Rc|²: {}", w.aux_residual);
    assert!(g.aux_residual <= 1e-7);
    assert!((t.slack - w.slack).abs() <= 2.0 * (t.quad_change + w.quad_change) + 1e-8);
    // trapezoid: ∫ζ′² = 2, ∫|ζζ′| = 1.
    let expected = 2.0 / c + (sol.c_estimate + 2.0 * c).sqrt() / c;
    assert!((r.rhs - expected).abs() < 1e-9, "{} vs {expected}", r.rhs);
    assert!(r.rhs < trapezoid_bound(2, c));
    assert!((trapezoid_bound(2, 0.25) - 12.898979485566356).abs() < 1e-12);
}

#[test]
fn bryant_ledgers_hold() {
    let m = bryant(3);
    let c = 0.25;
    let phi = PhiSpec::CTimesR(c);
    let y = [5.0, 0.0, 0.0];
    let d = riemann_distance(&m, &[0.0; 3], &y).unwrap();
    let direct = minimize_j(&m, &phi, &[0.0; 3], &y, d, 256, 1).unwrap();
    let sol = refine_with_shooting(&m, &phi, &direct, 1e-10).unwrap();
    let zeta = TestFunction::trapezoid(d).unwrap();
    let g = grad_r_inequality(&m, &sol, &zeta, c).unwrap();
    assert!(g.holds && g.aux_residual <= 1e-4, "{g:?}");
    assert!(ricci_l2_inequality(&m, &sol, &zeta, c).unwrap().holds);
}

#[test]
fn ramp_profile_is_rejected_by_ledgers() {
    let m = flat(2, 0.25);
    let sol = straight(64);
    let ramp = TestFunction::linear_ramp(1.0).unwrap();
    assert!(trace_index_inequality(&m, &PhiSpec::zero(), &sol, &ramp).is_err());
}

#[test]
fn perturbed_path_is_a_diagnostic_only() {
    let m = cigar();
    let phi = PhiSpec::CTimesR(0.25);
    let mut sol = minimize_j(&m, &phi, &[0.0, 0.0], &cigar_radial(6.0), 6.0, 128, 1).unwrap();
    let k = sol.k();
    for (i, p) in sol.path.samples.iter_mut().enumerate().take(k).skip(1) {
        p[1] += 0.5 * (PI * i as f64 / k as f64).sin();
    }
    let zeta = TestFunction::trapezoid(6.0).unwrap();
    // A ledger is still produced; its sign is not asserted.
    let l = trace_index_inequality(&m, &phi, &sol, &zeta).unwrap();
    assert!(l.lhs.is_finite() && l.rhs.is_finite());
}

#[test]
fn custom_profile_matches_sine_bump() {
    let s_bar = 4.0;
    let values: Vec<f64> = (0..=400).map(|k| (PI * k as f64 / 400.0).sin()).collect();
    let custom = TestFunction::custom(s_bar, values).unwrap();
    let bump = TestFunction::sine_bump(s_bar).unwrap();
    for s in [0.3, 1.7, 2.0, 3.9] {
        assert!((custom.value(s) - bump.value(s)).abs() < 1e-8);
    }
    let _ = DVector::<f64>::zeros(1);
}
