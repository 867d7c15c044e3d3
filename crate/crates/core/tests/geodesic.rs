mod common;

use common::*;
use soliton_lab::geodesic::*;
use soliton_lab::phi::PhiSpec;

#[test]
fn j_of_straight_segment() {
    let m = flat(2, 0.25);
    let path = DiscretePath::straight(&[0.0, 0.0], &[3.0, 4.0], 1.0, 8).unwrap();
    assert!((j_functional(&m, &PhiSpec::zero(), &path).unwrap() - 25.0).abs() < 1e-12);
    assert!((j_functional(&m, &PhiSpec::Constant(0.25), &path).unwrap() - 25.5).abs() < 1e-12);
}

#[test]
fn j_on_cigar_is_second_order() {
    let m = cigar();
    let phi = PhiSpec::CTimesR(0.25);
    let j = |k: usize| {
        let p = DiscretePath::straight(&[0.0, 0.0], &[1.0, 0.0], 1.0, k).unwrap();
        j_functional(&m, &phi, &p).unwrap()
    };
    let (a, b, c) = (j(500), j(1000), j(2000));
    let limit = (4.0 * c - b) / 3.0;
    assert!((b - c).abs() < 1e-4);
    let ratio = (a - limit).abs() / (b - limit).abs();
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn first_variation_vanishes_on_straight_line() {
    let m = flat(2, 0.25);
    let path = DiscretePath::straight(&[0.0, 0.0], &[1.0, 2.0], 1.0, 64).unwrap();
    let u = VariationField::from_fn(&path, |s| vec![(std::f64::consts::PI * s).sin(), s * (1.0 - s)]);
    assert!(u.vanishing);
    let fv = first_variation(&m, &PhiSpec::zero(), &path, &u).unwrap();
    assert!(fv.total.abs() < 1e-10, "{fv:?}");
}

#[test]
fn first_variation_vanishes_on_cosh_solution() {
    let m = hyperbolic(2);
    let path = DiscretePath::from_fn(1.0, 400, |s| vec![s.cosh(), 0.0]).unwrap();
    let u = VariationField::from_fn(&path, |s| vec![(std::f64::consts::PI * s).sin(), (2.0 * std::f64::consts::PI * s).sin()]);
    let fv = first_variation(&m, &PhiSpec::HalfOnePlusNormSq, &path, &u).unwrap();
    assert!(fv.total.abs() < 1e-5, "{fv:?}");
}

#[test]
fn first_variation_matches_finite_difference() {
    let m = cigar();
    let phi = PhiSpec::CTimesR(0.25);
    let path = DiscretePath::from_fn(2.0, 64, |s| vec![s, 0.3 * (s * 1.7).sin()]).unwrap();
    let u = VariationField::from_fn(&path, |s| vec![(s * 1.3).cos(), s * s - 0.5]);
    let fv = first_variation(&m, &phi, &path, &u).unwrap();
    let h = 1e-4;
    let shifted = |t: f64| {
        let samples = path
            .samples
            .iter()
            .zip(&u.vectors)
            .map(|(p, w)| p.iter().zip(w.iter()).map(|(a, b)| a + t * b).collect())
            .collect();
        j_functional(&m, &phi, &DiscretePath::new(samples, 2.0).unwrap()).unwrap()
    };
    let fd = (shifted(h) - shifted(-h)) / (4.0 * h);
    assert!((fv.total - fd).abs() < 1e-6, "{} vs {fd}", fv.total);
}

#[test]
fn ivp_flat_and_hyperbolic() {
    let m = flat(2, 0.25);
    let sol = integrate_phi_geodesic(&m, &PhiSpec::Constant(0.25), &[1.0, 1.0], &[2.0, -1.0], 2.0, 1e-2).unwrap();
    let end = sol.path.y();
    assert!((end[0] - 5.0).abs() < 1e-12 && (end[1] + 1.0).abs() < 1e-12);
    assert!((sol.c_estimate - (5.0 - 0.5)).abs() < 1e-12);

    let h = hyperbolic(2);
    let sol = integrate_phi_geodesic(&h, &PhiSpec::HalfOnePlusNormSq, &[1.0, 0.0], &[0.0, 0.0], 1.0, 1e-3).unwrap();
    assert!((sol.path.y()[0] - 1f64.cosh()).abs() < 1e-10);
    assert!((sol.c_estimate + 2.0).abs() < 1e-10 && sol.c_drift < 1e-8);
}

#[test]
fn ivp_conservation_on_cigar_is_fourth_order() {
    let m = cigar();
    let phi = PhiSpec::CTimesR(0.25);
    let a = integrate_phi_geodesic(&m, &phi, &[1.0, 0.0], &[0.0, 5.0], 20.0, 1e-3).unwrap();
    let b = integrate_phi_geodesic(&m, &phi, &[1.0, 0.0], &[0.0, 5.0], 20.0, 5e-4).unwrap();
    assert!(a.converged && b.converged);
    assert!(a.c_drift <= 1e-8);
    assert!(a.c_drift / b.c_drift >= 12.0, "{} {}", a.c_drift, b.c_drift);
}

#[test]
fn ivp_domain_exit_is_partial() {
    let m = bryant(3);
    let sol = integrate_phi_geodesic(&m, &PhiSpec::CTimesR(0.25), &[1.0, 0.0, 0.0], &[0.0, 10.0, 0.0], 20.0, 1e-2).unwrap();
    assert!(!sol.converged);
    assert!(sol.exit_s.is_some());
}

#[test]
fn shooting_examples() {
    let m = flat(2, 0.25);
    let sol = shoot_bvp(&m, &PhiSpec::zero(), &[0.0, 0.0], &[1.0, 0.0], 1.0, &[0.3, 0.4], 1e-12).unwrap();
    assert!(sol.converged);
    assert!((sol.velocities[0][0] - 1.0).abs() < 1e-9 && sol.velocities[0][1].abs() < 1e-9);

    let h = hyperbolic(2);
    let y = [1f64.cosh(), 0.0];
    let sol = shoot_bvp(&h, &PhiSpec::HalfOnePlusNormSq, &[1.0, 0.0], &y, 1.0, &[0.2, 0.1], 1e-12).unwrap();
    assert!(sol.converged);
    assert!(sol.velocities[0].iter().all(|v| v.abs() < 1e-8), "{:?}", sol.velocities[0]);
}

#[test]
fn minimizer_examples_on_flat_space() {
    let m = flat(2, 0.25);
    let sol = minimize_j(&m, &PhiSpec::zero(), &[0.0, 0.0], &[3.0, 4.0], 2.0, 32, 2).unwrap();
    assert!((sol.j_value - 12.5).abs() < 1e-10);
    let sol = minimize_j(&m, &PhiSpec::Constant(0.25), &[0.0, 0.0], &[3.0, 4.0], 2.0, 32, 2).unwrap();
    assert!((sol.j_value - 13.5).abs() < 1e-10);
    assert!(sol.residual <= 1e-8);
}

#[test]
fn solvers_agree_on_cigar() {
    let m = cigar();
    let phi = PhiSpec::CTimesR(0.25);
    let x = [0.0, 0.0];
    for y in [[2.0, 0.0], [1.0, 1.5]] {
        let d = riemann_distance(&m, &x, &y).unwrap();
        let direct = minimize_j(&m, &phi, &x, &y, d, 256, 2).unwrap();
        let shot = refine_with_shooting(&m, &phi, &direct, 1e-11).unwrap();
        assert!(direct.converged && shot.converged);
        let jr = extrapolated_j(&m, &phi, &direct).unwrap();
        assert!(rel(jr, shot.j_value) <= 1e-5, "{jr} vs {}", shot.j_value);
        assert!(shot.c_drift <= 1e-6);
    }
}

#[test]
fn minimizer_tracks_shooting_path() {
    let m = cigar();
    let phi = PhiSpec::CTimesR(0.25);
    let y = [3.0, 0.0];
    let d = riemann_distance(&m, &[0.0, 0.0], &y).unwrap();
    let direct = minimize_j(&m, &phi, &[0.0, 0.0], &y, d, 512, 1).unwrap();
    let shot = refine_with_shooting(&m, &phi, &direct, 1e-11).unwrap();
    let sup = direct
        .path
        .samples
        .iter()
        .zip(&shot.path.samples)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    assert!(sup <= 1e-3, "{sup}");
}

#[test]
fn conserved_quantity_examples() {
    let m = flat(2, 0.25);
    let sol = minimize_j(&m, &PhiSpec::zero(), &[0.0, 0.0], &[0.6, 0.8], 1.0, 32, 1).unwrap();
    let (c, drift) = conserved_quantity(&m, &PhiSpec::zero(), &sol);
    assert!((c - 1.0).abs() < 1e-10 && drift < 1e-10);
}

#[test]
fn c_window_on_cigar_minimizers() {
    let m = cigar();
    for c in [0.05, 0.25] {
        let phi = PhiSpec::CTimesR(c);
        let y = cigar_radial(6.0);
        let direct = minimize_j(&m, &phi, &[0.0, 0.0], &y, 6.0, 256, 1).unwrap();
        let sol = refine_with_shooting(&m, &phi, &direct, 1e-10).unwrap();
        assert!((0.5..1.0).contains(&sol.c_estimate), "c = {c}: C = {}", sol.c_estimate);
        let vmax = (0..=sol.k())
            .map(|k| {
                let v = sol.velocity(k);
                (v.transpose() * m.metric(&sol.path.samples[k]) * &v)[(0, 0)].sqrt()
            })
            .fold(0.0, f64::max);
        assert!(vmax <= (sol.c_estimate + 2.0 * c).sqrt() + 1e-6);
        assert!(vmax < (1.0 + 2.0 * c).sqrt());
        assert!(sol.j_value <= (1.0 + 2.0 * c) * 6.0 + 1e-6);
    }
}

#[test]
fn riemann_distance_examples() {
    let m = flat(3, 0.25);
    let d = riemann_distance(&m, &[0.0, 0.0, 0.0], &[1.0, 2.0, 2.0]).unwrap();
    assert!((d - 3.0).abs() < 1e-9);
    let c = cigar();
    let d = riemann_distance(&c, &[0.0, 0.0], &[10.0, 0.0]).unwrap();
    assert!((d - 2.0 * 10f64.asinh()).abs() < 1e-6, "{d}");
}

#[test]
fn gradient_flow_examples() {
    let r = gradient_flow_check(&cigar(), &[1.0, 0.0], 2.0, 1e-3).unwrap();
    assert!(r.residual <= 1e-6);
    let r = gradient_flow_check(&flat(2, 0.25), &[1.0, 0.0], 1.0, 1e-2).unwrap();
    assert_eq!(r.residual, 0.0);
    let r = gradient_flow_check(&bryant(3), &[1.0, 0.0, 0.0], 2.0, 1e-3).unwrap();
    assert!(r.residual <= 1e-4);
}

#[test]
fn solution_json_round_trip() {
    let m = cigar();
    let phi = PhiSpec::CTimesR(0.25);
    let sol = minimize_j(&m, &phi, &[0.0, 0.0], &[1.0, 0.5], 2.0, 32, 1).unwrap();
    let text = sol.to_json().unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["s_bar", "K", "samples", "velocities", "J", "C", "drift", "solver", "converged"] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    let back = GeodesicSolution::from_json(&text).unwrap();
    assert_eq!(back.path, sol.path);
    assert_eq!(back.j_value, sol.j_value);
}

#[test]
fn invalid_inputs_are_rejected() {
    let m = flat(2, 0.25);
    assert!(integrate_phi_geodesic(&m, &PhiSpec::zero(), &[0.0, 0.0], &[1.0, 0.0], 1.0, 0.0).is_err());
    assert!(shoot_bvp(&m, &PhiSpec::zero(), &[0.0, 0.0], &[1.0, 0.0], 1.0, &[f64::NAN, 0.0], 1e-8).is_err());
    assert!(minimize_j(&m, &PhiSpec::zero(), &[0.0, 0.0], &[1.0, 0.0], 1.0, 4, 1).is_err());
    assert!(DiscretePath::new(vec![vec![0.0, 0.0]], 1.0).is_err());
}
