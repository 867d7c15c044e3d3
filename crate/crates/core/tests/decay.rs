mod common;

use common::*;
use soliton_lab::decay::*;
use soliton_lab::geodesic::riemann_distance;
use soliton_lab::LabError;

#[test]
fn ray_target_hits_the_requested_distance() {
    let m = cigar();
    let y = ray_target(&m, &[0.0, 0.0], &[1.0, 0.0], 10.0).unwrap();
    assert!((y[0] - 5f64.sinh()).abs() < 1e-9 * 5f64.sinh());
    let d = riemann_distance(&m, &[0.0, 0.0], &y).unwrap();
    assert!((d - 10.0).abs() < 1e-7, "{d}");
    assert!(ray_target(&m, &[0.0, 0.0], &[0.0, 0.0], 1.0).is_err());
}

#[test]
fn cigar_d10_record() {
    let m = cigar();
    let c = 0.25;
    let recs = decay_run(&m, c, &[0.0, 0.0], &[cigar_radial(10.0)]).unwrap();
    let r = &recs[0];
    assert!(r.converged);
    assert!(r.lhs < 12.899 && r.lhs < r.paper_bound);
    assert!(r.half_dist_ok && r.d_zy <= 5.0 + 1e-6);
    let mid = (1.0 / 2f64.sqrt()) / (1.0 + 2.5f64.sinh().powi(2));
    assert!(r.ric_at_z <= mid);
    let rz2: f64 = r.z.iter().map(|v| v * v).sum();
    assert!((r.ric_at_z - (1.0 / 2f64.sqrt()) / (1.0 + rz2)).abs() < 1e-5);
    assert!(r.solver_gap <= 1e-5, "{}", r.solver_gap);
    assert!((0.5..1.0).contains(&r.big_c));
}

#[test]
fn flat_model_and_short_distances_are_rejected() {
    let m = flat(2, 0.25);
    assert!(matches!(
        decay_run(&m, 0.25, &[0.0, 0.0], &[vec![5.0, 0.0]]),
        Err(LabError::Usage(_))
    ));
    let c = cigar();
    assert!(matches!(
        decay_run(&c, 0.25, &[0.0, 0.0], &[vec![1.0, 0.0]]),
        Err(LabError::Usage(_))
    ));
}

fn synthetic(d: f64, c: f64, big_c: f64, ric: f64) -> DecayRecord {
    DecayRecord {
        model: "synthetic".into(),
        x: vec![0.0, 0.0],
        y: vec![d, 0.0],
        d,
        c,
        big_c,
        j: d,
        lhs: 0.3,
        rhs: 10.0,
        paper_bound: 12.0,
        z: vec![d, 0.0],
        s_z: d,
        ric_at_z: ric,
        d_zy: 0.0,
        half_dist_ok: true,
        k_ratio: ric * (d + 1.0).sqrt(),
        solver_gap: 0.0,
        c_drift: 0.0,
        converged: true,
    }
}

#[test]
fn summary_needs_three_distances() {
    let recs = vec![synthetic(5.0, 0.25, 0.8, 0.1), synthetic(5.0, 0.25, 0.8, 0.1), synthetic(5.0, 0.25, 0.8, 0.1)];
    assert!(matches!(liminf_summary(&recs), Err(LabError::InsufficientData(_))));
}

#[test]
fn summary_of_a_decaying_sequence() {
    let recs: Vec<DecayRecord> = [20.0, 5.0, 10.0, 40.0]
        .iter()
        .map(|&d| synthetic(d, 0.25, 0.8, 0.2 / (d + 1.0)))
        .collect();
    let s = liminf_summary(&recs).unwrap();
    assert_eq!(s.valid, 4);
    assert!(s.envelope_decreasing && s.first_k_bound_holds && s.bound_holds);
    assert_eq!(s.envelope.first().unwrap().0, 5.0);
    assert!((s.first_k - 0.2 / 6f64.sqrt()).abs() < 1e-15);
}

#[test]
fn c_window_reports_injected_violation() {
    let mut recs = vec![synthetic(5.0, 0.25, 0.7, 0.1), synthetic(10.0, 1.0, 0.2, 0.1)];
    assert!(c_window_check(&recs).passes());
    recs.push(synthetic(20.0, 0.25, 1.2, 0.1));
    recs.push(synthetic(40.0, 0.05, 0.3, 0.1));
    let rep = c_window_check(&recs);
    assert_eq!(rep.checked, 4);
    assert_eq!(rep.violations.len(), 2, "{:?}", rep.violations);
    let mut bad = synthetic(7.0, 0.25, 1.5, 0.1);
    bad.converged = false;
    assert!(c_window_check(&[bad]).passes());
}

#[test]
fn k_ratio_is_stable_under_resolution_doubling() {
    let m = cigar();
    let targets = vec![cigar_radial(5.0)];
    let coarse = DecayOptions { k: 256, ..DecayOptions::default() };
    let fine = DecayOptions { k: 512, ..DecayOptions::default() };
    let a = decay_run_with(&m, 0.25, &[0.0, 0.0], &targets, &coarse).unwrap();
    let b = decay_run_with(&m, 0.25, &[0.0, 0.0], &targets, &fine).unwrap();
    assert!(rel(a[0].k_ratio, b[0].k_ratio) <= 0.02);
}
