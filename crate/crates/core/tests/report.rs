use std::fs;

use soliton_lab::report::*;
use soliton_lab::LabError;

fn field_of(err: LabError) -> String {
    match err {
        LabError::Config { field, .. } => field,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn config_errors_name_the_field() {
    let base = |extra: &str| format!(r#"{{"model": {{"kind": "cigar"}}{extra}}}"#);
    let e = RunConfig::from_json(&base(r#", "resolution": {"K": 1}"#)).unwrap_err();
    assert_eq!(field_of(e), "resolution.K");
    let e = RunConfig::from_json(&base(r#", "c_values": [0.25, -1]"#)).unwrap_err();
    assert_eq!(field_of(e), "c_values[1]");
    let e = RunConfig::from_json(&base(r#", "targets": {"distances": [5, 1.5]}"#)).unwrap_err();
    assert_eq!(field_of(e), "targets.distances[1]");
    let e = RunConfig::from_json(&base(r#", "resolution": {"steps": "fast"}"#)).unwrap_err();
    assert_eq!(field_of(e), "resolution.steps");
    let e = RunConfig::from_json(&base(r#", "experiments": ["bogus"]"#)).unwrap_err();
    assert_eq!(field_of(e), "experiments[0]");
    let e = RunConfig::from_json(&base(r#", "colour": 1"#)).unwrap_err();
    assert_eq!(field_of(e), "colour");
    let e = RunConfig::from_json(r#"{"model": {"kind": "bryant", "n": 2}}"#).unwrap_err();
    assert_eq!(field_of(e), "model");
    let cfg = RunConfig::from_json(&base("")).unwrap();
    assert_eq!(cfg.experiments.len(), 5);
    assert_eq!(cfg.resolution.k, 512);
}

#[test]
fn cigar_identities_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(serde_json::from_str(r#"{"kind": "cigar"}"#).unwrap());
    cfg.experiments = vec![Experiment::Identities];
    cfg.output_dir = dir.path().to_path_buf();
    let rep = run(&cfg).unwrap();
    assert!(rep.passed);
    assert!(rep.identity_max_residual.unwrap() <= 1e-7);
    assert!(rep.flow_max_residual.unwrap() <= 1e-6);
    let text = fs::read_to_string(dir.path().join("identities.csv")).unwrap();
    assert_eq!(text.lines().count(), 401);
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn flat_geodesic_regression_suite() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{"model": {{"kind": "euclidean", "n": 2, "phi": {{"type": "constant", "value": 0.25}}}},
            "experiments": ["geodesic"], "output_dir": {:?}}}"#,
        dir.path()
    );
    let rep = run(&RunConfig::from_json(&text).unwrap()).unwrap();
    let g = rep.experiment("geodesic").unwrap();
    assert!(rep.passed && g.passed >= 6 && g.failed == 0, "{g:?}");
}

#[test]
fn hyperbolic_geodesic_regression_suite() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{"model": {{"kind": "euclidean", "n": 2, "phi": {{"type": "half_one_plus_norm_sq"}}}},
            "experiments": ["geodesic", "ledgers"], "output_dir": {:?}}}"#,
        dir.path()
    );
    let rep = run(&RunConfig::from_json(&text).unwrap()).unwrap();
    assert!(rep.passed);
    assert_eq!(rep.experiment("ledgers").unwrap().status, "skipped");
}

#[test]
fn plot_series_need_inputs() {
    let dir = tempfile::tempdir().unwrap();
    match emit_plot_series(dir.path()) {
        Err(LabError::MissingFiles(files)) => {
            assert_eq!(files.len(), 2);
            assert!(files[0].ends_with("decay.csv") && files[1].ends_with("rho_hj.csv"));
        }
        other => panic!("expected missing files, got {other:?}"),
    }
}

#[test]
fn decay_run_writes_sorted_series() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{"model": {{"kind": "cigar"}}, "experiments": ["decay"],
            "resolution": {{"K": 128}}, "targets": {{"distances": [10, 5, 8]}}, "output_dir": {:?}}}"#,
        dir.path()
    );
    let rep = run(&RunConfig::from_json(&text).unwrap()).unwrap();
    assert!(rep.passed, "{:?}", rep.failure_inventory());
    assert_eq!(rep.fitted_k.len(), 1);
    let ric = fs::read_to_string(dir.path().join("decay_ric.dat")).unwrap();
    let ds: Vec<f64> = ric
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split(' ').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(ds.len(), 3);
    assert!(ds.windows(2).all(|w| w[0] < w[1]));
    assert!(dir.path().join("decay_kratio.dat").exists());
    let header = fs::read_to_string(dir.path().join("decay.csv")).unwrap();
    assert!(header.starts_with("model,c,d,C,J,lhs,paper_bound,ric_at_z,K_ratio,half_dist_ok,converged\n"));
}

#[test]
fn rho_run_writes_convergence_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{"model": {{"kind": "cigar"}}, "experiments": ["rho"],
            "rho_grid": {{"y_min": 1, "y_max": 1, "points": 1, "s_bars": [2]}}, "output_dir": {:?}}}"#,
        dir.path()
    );
    let rep = run(&RunConfig::from_json(&text).unwrap()).unwrap();
    assert!(rep.passed, "{:?}", rep.failure_inventory());
    assert_eq!(rep.rho_samples, 1);
    let hj = fs::read_to_string(dir.path().join("hj_convergence.dat")).unwrap();
    let rows: Vec<Vec<f64>> = hj
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split(' ').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert!((rows[1][0] - 0.5 * rows[0][0]).abs() < 1e-15);
    let csv = fs::read_to_string(dir.path().join("rho.csv")).unwrap();
    assert!(csv.starts_with("y1,y2,s_bar,rho,smooth,grad_res,hj_res,lap_lhs,lap_rhs,kernel_res\n"));
}

#[test]
fn identical_seeds_give_identical_csvs() {
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let text = format!(
                r#"{{"model": {{"kind": "cigar"}}, "c_values": [0.25, 1.0],
                    "resolution": {{"K": 64, "identity_points": 50, "rho_K": 32}},
                    "targets": {{"distances": [4, 6, 8]}},
                    "rho_grid": {{"y_min": 0.5, "y_max": 1.5, "points": 2, "s_bars": [1]}},
                    "output_dir": {:?}, "seed": 11}}"#,
                dir.path()
            );
            run(&RunConfig::from_json(&text).unwrap()).unwrap();
            dir
        })
        .collect();
    let mut names: Vec<_> = fs::read_dir(runs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n.to_string_lossy().ends_with(".csv"))
        .collect();
    names.sort();
    assert!(names.len() >= 10, "{names:?}");
    for n in names {
        let a = fs::read(runs[0].path().join(&n)).unwrap();
        let b = fs::read(runs[1].path().join(&n)).unwrap();
        assert_eq!(a, b, "{n:?} differs");
    }
}
