mod common;

use std::f64::consts::PI;

use common::*;
use proptest::prelude::*;
use soliton_lab::decay::ray_target;
use soliton_lab::geodesic::*;
use soliton_lab::geometry::halton_grid;
use soliton_lab::phi::PhiSpec;
use soliton_lab::variation::{index_form, Side, TestFunction};

fn config() -> ProptestConfig {
    ProptestConfig { cases: 32, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn metric_is_symmetric_positive_definite(x in -6.0..6.0f64, y in -6.0..6.0f64, z in -6.0..6.0f64) {
        for (m, p) in [(cigar(), vec![x, y]), (cigar_product(1), vec![x, y, z]), (bryant(3), vec![x, y, z])] {
            let g = m.metric(&p);
            prop_assert!((&g - g.transpose()).amax() <= 1e-14 * g.amax());
            prop_assert!(g.clone().cholesky().is_some());
        }
    }

    #[test]
    fn j_is_reversal_invariant_and_nonnegative(
        a in -3.0..3.0f64, b in -3.0..3.0f64, w in -1.0..1.0f64, s_bar in 0.5..5.0f64, c in 0.01..1.0f64,
    ) {
        let m = cigar();
        let phi = PhiSpec::CTimesR(c);
        let path = DiscretePath::from_fn(s_bar, 40, |s| {
            let t = s / s_bar;
            vec![a * t, b * t + w * (PI * t).sin()]
        }).unwrap();
        let mut rev = path.samples.clone();
        rev.reverse();
        let j = j_functional(&m, &phi, &path).unwrap();
        let jr = j_functional(&m, &phi, &DiscretePath::new(rev, s_bar).unwrap()).unwrap();
        prop_assert!(j >= 0.0);
        prop_assert!((j - jr).abs() <= 1e-12 * j.abs().max(1.0));
    }

    #[test]
    fn flat_straight_line_energy(
        x in prop::array::uniform2(-5.0..5.0f64), y in prop::array::uniform2(-5.0..5.0f64),
        s_bar in 0.2..4.0f64, c in 0.0..2.0f64,
    ) {
        let m = flat(2, 0.25);
        let path = DiscretePath::straight(&x, &y, s_bar, 16).unwrap();
        let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
        let j = j_functional(&m, &PhiSpec::Constant(c), &path).unwrap();
        prop_assert!((j - (d2 / s_bar + 2.0 * c * s_bar)).abs() <= 1e-10 * (1.0 + j));
    }

    #[test]
    fn flat_ivp_conserves_exactly(v in prop::array::uniform2(-3.0..3.0f64), c in 0.0..1.0f64) {
        let m = flat(2, 0.25);
        let sol = integrate_phi_geodesic(&m, &PhiSpec::Constant(c), &[0.0, 0.0], &v, 1.0, 0.05).unwrap();
        let expected = v[0] * v[0] + v[1] * v[1] - 2.0 * c;
        prop_assert!((sol.c_estimate - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        prop_assert!(sol.c_drift <= 1e-12 * (1.0 + expected.abs()));
    }

    #[test]
    fn first_variation_is_the_derivative_of_j(
        a in 0.2..2.0f64, b in -1.0..1.0f64, w in -0.5..0.5f64, p in -1.0..1.0f64, q in -1.0..1.0f64,
    ) {
        let m = cigar();
        let phi = PhiSpec::CTimesR(0.25);
        let s_bar = 1.5;
        let path = DiscretePath::from_fn(s_bar, 32, |s| vec![a * s, b * s + w * (3.0 * s).sin()]).unwrap();
        let u = VariationField::from_fn(&path, |s| vec![p * (2.0 * s).cos(), q + s]);
        let fv = first_variation(&m, &phi, &path, &u).unwrap().total;
        let h = 1e-5;
        let j = |t: f64| {
            let samples = path.samples.iter().zip(&u.vectors)
                .map(|(x, v)| x.iter().zip(v.iter()).map(|(a, b)| a + t * b).collect())
                .collect();
            j_functional(&m, &phi, &DiscretePath::new(samples, s_bar).unwrap()).unwrap()
        };
        let fd = (j(h) - j(-h)) / (4.0 * h);
        prop_assert!((fv - fd).abs() <= 1e-6 * (1.0 + fv.abs()), "{} vs {}", fv, fd);
    }

    #[test]
    fn flat_index_form_of_sine_modes(amp in 0.1..2.0f64, k in 1usize..4) {
        let m = flat(2, 0.25);
        let sol = minimize_j(&m, &PhiSpec::zero(), &[0.0, 0.0], &[1.0, 0.0], 1.0, 256, 1).unwrap();
        let u = VariationField::from_fn(&sol.path, |s| vec![0.0, amp * (k as f64 * PI * s).sin()]);
        let q = index_form(&m, &PhiSpec::zero(), &sol, &u).unwrap();
        let exact = amp * amp * (k * k) as f64 * PI * PI / 2.0;
        prop_assert!((q - exact).abs() <= 1e-5 * exact, "{} vs {}", q, exact);
    }

    #[test]
    fn trapezoid_profile_shape(s_bar in 2.0..60.0f64, t in 0.0..1.0f64) {
        let z = TestFunction::trapezoid(s_bar).unwrap();
        let s = t * s_bar;
        let v = z.value(s);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(z.deriv(s, Side::Left).abs() <= 1.0 && z.deriv(s, Side::Right).abs() <= 1.0);
        prop_assert!(z.value(0.0) == 0.0 && z.value(s_bar) == 0.0);
        prop_assert!((v - s.min(1.0).min(s_bar - s)).abs() <= 1e-12);
    }

    #[test]
    fn cigar_ray_target_matches_closed_form(d in 0.1..30.0f64, angle in 0.0..(2.0 * PI)) {
        let m = cigar();
        let y = ray_target(&m, &[0.0, 0.0], &[angle.cos(), angle.sin()], d).unwrap();
        let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
        prop_assert!((r - (0.5 * d).sinh()).abs() <= 1e-9 * (0.5 * d).sinh());
    }
}

#[test]
fn halton_points_fill_the_box() {
    let pts = halton_grid(3, 400, 5.0);
    assert_eq!(pts.len(), 400);
    assert!(pts.iter().all(|p| p.len() == 3 && p.iter().all(|v| v.abs() <= 5.0)));
    assert_eq!(pts, halton_grid(3, 400, 5.0));
}
