mod common;

use common::*;
use soliton_lab::phi::PhiSpec;
use soliton_lab::rho::*;

#[test]
fn flat_closed_forms_hold() {
    for value in [0.0, 0.25] {
        let m = flat(2, 0.25);
        let phi = PhiSpec::Constant(value);
        let y = [1.0, 0.5];
        let s_bar = 2.0;
        let s = rho(&m, &phi, &[0.0, 0.0], &y, s_bar).unwrap();
        assert!(s.smooth_flag);
        assert!((s.rho - (1.25 / s_bar + 2.0 * value * s_bar)).abs() < 1e-10);
        assert!(grad_identity_check(&m, &s).unwrap() < 1e-8);
        assert!(hj_residual(&m, &phi, &s).unwrap().extrapolated < 1e-8);
        let lap = laplacian_comparison(&m, &phi, &s).unwrap();
        assert!((lap.rhs - 2.0 / s_bar).abs() < 1e-12);
        assert!(lap.slack.abs() < 1e-8 && lap.holds);
        let k = phi_kernel_check(&m, &phi, &s).unwrap();
        assert!(k.residual.abs() < 1e-8 && k.rhs == 0.0, "{k:?}");
        assert!(hj_cross_check(&m, &phi, &s).unwrap() < 1e-8);
    }
}

#[test]
fn cigar_sample_passes_all_checks() {
    let m = cigar();
    let phi = PhiSpec::CTimesR(0.25);
    let s = rho(&m, &phi, &[0.0, 0.0], &[1.0, 1.0], 2.0).unwrap();
    assert!(s.smooth_flag);
    assert!(s.stencil.all_converged && s.stencil.branch_defect < 0.1 * s.stencil_h);
    assert!(grad_identity_check(&m, &s).unwrap() <= 1e-3);
    let hj = hj_residual(&m, &phi, &s).unwrap();
    assert!(hj.order >= 1.0 || hj.order.is_nan(), "{hj:?}");
    assert!(hj.extrapolated < hj.at_h);
    assert!((hj_cross_check(&m, &phi, &s).unwrap() - hj.extrapolated).abs() < 1e-12);
    assert!(laplacian_comparison(&m, &phi, &s).unwrap().holds);
    assert!(phi_kernel_check(&m, &phi, &s).unwrap().holds());
}

#[test]
fn rho_is_symmetric_and_overshoots() {
    let m = cigar();
    let phi = PhiSpec::CTimesR(0.25);
    let a = [0.3, -0.4];
    let b = [1.2, 0.9];
    let ab = rho(&m, &phi, &a, &b, 1.5).unwrap();
    let ba = rho(&m, &phi, &b, &a, 1.5).unwrap();
    assert!((ab.rho - ba.rho).abs() < 1e-6, "{} {}", ab.rho, ba.rho);
    let d = soliton_lab::geodesic::riemann_distance(&m, &a, &b).unwrap();
    assert!(ab.rho >= d * d / 1.5 - 1e-6);
}

#[test]
fn preconditions_are_enforced() {
    let m = flat(2, 0.25);
    let phi = PhiSpec::Constant(0.25);
    let opts = RhoOptions { multistart: 2, ..RhoOptions::default() };
    assert!(rho_with(&m, &phi, &[0.0, 0.0], &[1.0, 0.0], 1.0, &opts).is_err());
    let mut s = rho(&m, &phi, &[0.0, 0.0], &[1.0, 0.0], 1.0).unwrap();
    s.smooth_flag = false;
    assert!(grad_identity_check(&m, &s).is_err());
    assert!(hj_residual(&m, &phi, &s).is_err());
    assert!(laplacian_comparison(&m, &phi, &s).is_err());
    assert!(phi_kernel_check(&m, &phi, &s).is_err());
}
