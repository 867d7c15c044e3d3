//! Batch orchestration: configuration, the experiment pipeline
//! `identities → geodesic → ledgers → decay → rho`, CSV/JSON reports and
//! plot series.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::info;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decay::{
    c_window_check, decay_record_from, liminf_summary, ray_target, solve_pair, DecayOptions, DecayRecord,
    DecaySummary, PairSolution,
};
use crate::error::{LabError, Result};
use crate::geodesic::{
    first_variation, integrate_phi_geodesic, minimize_j, riemann_distance, shoot_bvp, VariationField,
};
use crate::geometry::{check_soliton_identities, gradient_flow_tolerance, halton_grid, identity_tolerance};
use crate::models::{build_model, ManifoldModel, ModelSpec};
use crate::phi::PhiSpec;
use crate::rho::{grad_identity_check, hj_residual, laplacian_comparison, phi_kernel_check, rho_with, RhoOptions};
use crate::variation::{
    grad_r_inequality, index_form, initial_unit_normal, parallel_variation, ricci_l2_inequality,
    trace_index_inequality, trapezoid_bound, weighted_index_inequality, InequalityLedger, TestFunction,
};

/// Experiments in dependency order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Identities,
    Geodesic,
    Ledgers,
    Decay,
    Rho,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Identities,
        Experiment::Geodesic,
        Experiment::Ledgers,
        Experiment::Decay,
        Experiment::Rho,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Identities => "identities",
            Experiment::Geodesic => "geodesic",
            Experiment::Ledgers => "ledgers",
            Experiment::Decay => "decay",
            Experiment::Rho => "rho",
        }
    }
}

impl FromStr for Experiment {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| LabError::Config {
                field: "experiments".into(),
                message: format!("unknown experiment `{s}`; expected one of identities, geodesic, ledgers, decay, rho"),
            })
    }
}

/// Discretization parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Resolution {
    /// Path intervals for the geodesic, ledger and decay solves.
    #[serde(rename = "K")]
    pub k: usize,
    /// IVP step of the conservation and gradient-flow checks.
    pub steps: f64,
    /// Spatial stencil step of the ρ analysis; `None` selects `1e−2(1+|y|)`.
    pub stencil_h: Option<f64>,
    pub multistart: usize,
    pub identity_points: usize,
    /// Path intervals of the ρ solves.
    #[serde(rename = "rho_K")]
    pub rho_k: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self {
            k: 512,
            steps: 1e-3,
            stencil_h: None,
            multistart: 2,
            identity_points: 400,
            rho_k: 128,
        }
    }
}

/// Far-point schedule: targets at distance `d` from the origin along `direction`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Targets {
    pub distances: Vec<f64>,
    /// Chart direction; `None` selects `e₁`.
    pub direction: Option<Vec<f64>>,
}

impl Default for Targets {
    fn default() -> Self {
        Self {
            distances: vec![5.0, 10.0, 20.0, 40.0],
            direction: None,
        }
    }
}

/// ρ sample grid: `y = (a, b, 0, …)` with `a, b` on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RhoGrid {
    pub y_min: f64,
    pub y_max: f64,
    pub points: usize,
    pub s_bars: Vec<f64>,
}

impl Default for RhoGrid {
    fn default() -> Self {
        Self {
            y_min: 0.5,
            y_max: 3.0,
            points: 7,
            s_bars: vec![1.0, 2.0, 4.0],
        }
    }
}

/// One batch run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default = "default_c_values")]
    pub c_values: Vec<f64>,
    #[serde(default = "default_experiments")]
    pub experiments: Vec<Experiment>,
    #[serde(default)]
    pub resolution: Resolution,
    #[serde(default)]
    pub targets: Targets,
    #[serde(default)]
    pub rho_grid: RhoGrid,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_c_values() -> Vec<f64> {
    vec![0.25]
}

fn default_experiments() -> Vec<Experiment> {
    Experiment::ALL.to_vec()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("soliton-lab-out")
}

fn config_err(field: impl Into<String>, message: impl Into<String>) -> LabError {
    LabError::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Default configuration for a model.
    pub fn new(model: ModelSpec) -> Self {
        Self {
            model,
            c_values: default_c_values(),
            experiments: default_experiments(),
            resolution: Resolution::default(),
            targets: Targets::default(),
            rho_grid: RhoGrid::default(),
            output_dir: default_output_dir(),
            seed: 0,
        }
    }

    /// Parse and validate a JSON document. Errors carry the field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "<document>".to_string() } else { path };
            config_err(field, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Check every parameter against the preconditions of the modules it feeds.
    pub fn validate(&self) -> Result<()> {
        self.model
            .validate()
            .map_err(|e| config_err("model", e.to_string()))?;
        let n = self.model.dimension();
        if self.c_values.is_empty() {
            return Err(config_err("c_values", "at least one c is required"));
        }
        for (i, c) in self.c_values.iter().enumerate() {
            if !(*c > 0.0 && c.is_finite()) {
                return Err(config_err(format!("c_values[{i}]"), format!("c must be positive, got {c}")));
            }
        }
        if self.experiments.is_empty() {
            return Err(config_err("experiments", "no experiment selected"));
        }
        let r = &self.resolution;
        if r.k < 32 || r.k % 2 != 0 {
            return Err(config_err("resolution.K", format!("K must be even and >= 32, got {}", r.k)));
        }
        if !(r.steps > 0.0 && r.steps <= 0.1) {
            return Err(config_err("resolution.steps", format!("step must lie in (0, 0.1], got {}", r.steps)));
        }
        if let Some(h) = r.stencil_h {
            if !(h > 0.0 && h < 1.0) {
                return Err(config_err("resolution.stencil_h", format!("stencil step must lie in (0, 1), got {h}")));
            }
        }
        if r.multistart < 1 {
            return Err(config_err("resolution.multistart", "need at least one start"));
        }
        if r.identity_points < 1 {
            return Err(config_err("resolution.identity_points", "need at least one point"));
        }
        if r.rho_k < 16 {
            return Err(config_err("resolution.rho_K", format!("rho_K must be >= 16, got {}", r.rho_k)));
        }
        for (i, d) in self.targets.distances.iter().enumerate() {
            if !(*d > 2.0 && d.is_finite()) {
                return Err(config_err(
                    format!("targets.distances[{i}]"),
                    format!("distance must exceed 2, got {d}"),
                ));
            }
        }
        if let Some(dir) = &self.targets.direction {
            if dir.len() != n {
                return Err(config_err(
                    "targets.direction",
                    format!("direction has {} components, model dimension is {n}", dir.len()),
                ));
            }
            if !dir.iter().all(|v| v.is_finite()) || dir.iter().all(|v| *v == 0.0) {
                return Err(config_err("targets.direction", "direction must be finite and nonzero"));
            }
        }
        let g = &self.rho_grid;
        if !(g.y_min.is_finite() && g.y_max.is_finite() && g.y_min <= g.y_max) {
            return Err(config_err("rho_grid.y_min", "need finite y_min <= y_max"));
        }
        if g.points < 1 {
            return Err(config_err("rho_grid.points", "need at least one point per axis"));
        }
        if g.s_bars.is_empty() {
            return Err(config_err("rho_grid.s_bars", "need at least one s_bar"));
        }
        for (i, s) in g.s_bars.iter().enumerate() {
            if !(*s > 0.0 && s.is_finite()) {
                return Err(config_err(format!("rho_grid.s_bars[{i}]"), format!("s_bar must be positive, got {s}")));
            }
        }
        Ok(())
    }

    fn selected(&self, e: Experiment) -> bool {
        self.experiments.contains(&e)
    }
}

/// Outcome of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub name: String,
    /// `passed`, `failed` or `skipped`.
    pub status: String,
    pub passed: usize,
    pub failed: usize,
    /// Cases left out of the assertions (non-converged solves, non-smooth samples).
    pub excluded: usize,
    pub seconds: f64,
    pub notes: Vec<String>,
    /// One line per failed check.
    pub failures: Vec<String>,
}

impl ExperimentSummary {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            status: "passed".into(),
            passed: 0,
            failed: 0,
            excluded: 0,
            seconds: 0.0,
            notes: Vec::new(),
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
            self.failures.push(what());
        }
    }

    fn skip(&mut self, reason: String) {
        self.status = "skipped".into();
        self.notes.push(reason);
    }

    fn finish(&mut self, start: Instant) {
        self.seconds = start.elapsed().as_secs_f64();
        if self.failed > 0 {
            self.status = "failed".into();
        }
    }
}

/// Decay constant of one `c` batch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FittedK {
    pub c: f64,
    /// `max K_ratio` over the batch.
    pub k: f64,
    /// `K_ratio` at the smallest distance.
    pub first_k: f64,
    pub tail_max: f64,
    pub envelope_decreasing: bool,
}

/// Result of [`run`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub model: String,
    pub seed: u64,
    pub passed: bool,
    pub experiments: Vec<ExperimentSummary>,
    /// Smallest slack per ledger kind.
    pub worst_slacks: BTreeMap<String, f64>,
    pub identity_max_residual: Option<f64>,
    pub flow_max_residual: Option<f64>,
    pub fitted_k: Vec<FittedK>,
    pub rho_samples: usize,
    pub non_smooth_fraction: Option<f64>,
    pub total_seconds: f64,
    pub output_dir: PathBuf,
}

impl SuiteReport {
    pub fn experiment(&self, name: &str) -> Option<&ExperimentSummary> {
        self.experiments.iter().find(|e| e.name == name)
    }

    /// Every failed check, prefixed by its experiment.
    pub fn failure_inventory(&self) -> Vec<String> {
        self.experiments
            .iter()
            .flat_map(|e| e.failures.iter().map(move |f| format!("{}: {f}", e.name)))
            .collect()
    }
}

/// Shortest round-trip text of a float.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn header(fixed: &[&str]) -> Vec<String> {
    fixed.iter().map(|s| s.to_string()).collect()
}

fn coord_header(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn unit(n: usize, i: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = scale;
    v
}

fn update_min(map: &mut BTreeMap<String, f64>, key: &str, v: f64) {
    let e = map.entry(key.to_string()).or_insert(f64::INFINITY);
    *e = e.min(v);
}

/// Minimizers to the far targets, shared by the geodesic, ledger and decay stages.
struct PairCell {
    c: f64,
    d: f64,
    solved: std::result::Result<PairSolution, String>,
}

fn solve_pairs(model: &ManifoldModel, cfg: &RunConfig) -> Result<Vec<PairCell>> {
    let n = model.dim();
    let origin = vec![0.0; n];
    let dir = cfg.targets.direction.clone().unwrap_or_else(|| unit(n, 0, 1.0));
    let targets: Vec<(f64, Vec<f64>)> = cfg
        .targets
        .distances
        .iter()
        .map(|&d| {
            ray_target(model, &origin, &dir, d)
                .map(|y| (d, y))
                .map_err(|e| config_err("targets.distances", e.to_string()))
        })
        .collect::<Result<_>>()?;
    let opts = DecayOptions {
        k: cfg.resolution.k,
        multistart: cfg.resolution.multistart,
        seed: cfg.seed,
    };
    let cells: Vec<(f64, f64, Vec<f64>)> = cfg
        .c_values
        .iter()
        .flat_map(|&c| targets.iter().map(move |(d, y)| (c, *d, y.clone())))
        .collect();
    Ok(cells
        .par_iter()
        .map(|(c, d, y)| PairCell {
            c: *c,
            d: *d,
            solved: solve_pair(model, &PhiSpec::CTimesR(*c), &origin, y, &opts).map_err(|e| e.to_string()),
        })
        .collect())
}

/// Execute the selected experiments in dependency order, write every CSV,
/// `report.json`, `decay_summary.json` and the plot series into the output
/// directory. Invariant failures are reported, not raised.
pub fn run(cfg: &RunConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let total = Instant::now();
    let model = build_model(&cfg.model)?;
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out)?;
    let mut report = SuiteReport {
        model: model.name().to_string(),
        seed: cfg.seed,
        passed: true,
        experiments: Vec::new(),
        worst_slacks: BTreeMap::new(),
        identity_max_residual: None,
        flow_max_residual: None,
        fitted_k: Vec::new(),
        rho_samples: 0,
        non_smooth_fraction: None,
        total_seconds: 0.0,
        output_dir: out.clone(),
    };
    let mut pairs: Option<Vec<PairCell>> = None;
    for exp in Experiment::ALL {
        if !cfg.selected(exp) {
            continue;
        }
        info!("running {}", exp.name());
        let start = Instant::now();
        let mut summary = ExperimentSummary::new(exp.name());
        let needs_pairs = matches!(exp, Experiment::Geodesic | Experiment::Ledgers | Experiment::Decay);
        if needs_pairs && model.is_soliton() && pairs.is_none() {
            pairs = Some(solve_pairs(&model, cfg)?);
        }
        match exp {
            Experiment::Identities => identities_stage(&model, cfg, &out, &mut summary, &mut report)?,
            Experiment::Geodesic => geodesic_stage(&model, cfg, pairs.as_deref(), &out, &mut summary)?,
            Experiment::Ledgers => ledgers_stage(&model, pairs.as_deref(), &out, &mut summary, &mut report)?,
            Experiment::Decay => decay_stage(&model, pairs.as_deref(), &out, &mut summary, &mut report)?,
            Experiment::Rho => rho_stage(&model, cfg, &out, &mut summary, &mut report)?,
        }
        summary.finish(start);
        info!(
            "{}: {} passed, {} failed, {} excluded in {:.1} s",
            summary.name, summary.passed, summary.failed, summary.excluded, summary.seconds
        );
        report.experiments.push(summary);
    }
    report.passed = report.experiments.iter().all(|e| e.failed == 0);
    match emit_plot_series(&out) {
        Ok(_) | Err(LabError::MissingFiles(_)) => {}
        Err(e) => return Err(e),
    }
    report.total_seconds = total.elapsed().as_secs_f64();
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

fn identities_stage(
    model: &ManifoldModel,
    cfg: &RunConfig,
    out: &Path,
    summary: &mut ExperimentSummary,
    report: &mut SuiteReport,
) -> Result<()> {
    if !model.is_soliton() {
        summary.skip(format!("{} is not a steady soliton", model.name()));
        return Ok(());
    }
    let n = model.dim();
    let grid = halton_grid(n, cfg.resolution.identity_points, 5.0);
    let ids = check_soliton_identities(model, &grid)?;
    let tol = identity_tolerance(model);
    let mut rows = Vec::with_capacity(grid.len());
    for p in &ids.per_point {
        let worst = p.ricci_f.max(p.hamiltonian).max(p.weighted_laplacian).max(p.grad_r);
        summary.check(
            worst <= tol && p.scalar_consistency <= tol && p.r_positive && p.grad_f_le_one,
            || format!("identity residual {worst:e} at {:?} exceeds {tol:e}", p.coords),
        );
        let mut row: Vec<String> = p.coords.iter().map(|v| fmt(*v)).collect();
        row.extend([p.ricci_f, p.hamiltonian, p.weighted_laplacian, p.grad_r, p.scalar_consistency].map(fmt));
        rows.push(row);
    }
    let mut head = coord_header("x", n);
    head.extend(header(&["ricci_f", "hamiltonian", "weighted_laplacian", "grad_r", "scalar_consistency"]));
    write_csv(&out.join("identities.csv"), &head, &rows)?;
    report.identity_max_residual = Some(ids.max_residual());

    let flow_tol = gradient_flow_tolerance(model);
    let mut rows = Vec::new();
    let mut worst = 0.0_f64;
    for r in [0.5, 1.0, 2.0] {
        let x = unit(n, 0, r);
        let flow = crate::geodesic::gradient_flow_check(model, &x, 2.0, cfg.resolution.steps)?;
        worst = worst.max(flow.residual);
        summary.check(flow.residual <= flow_tol, || {
            format!("gradient-flow residual {:e} from {x:?} exceeds {flow_tol:e}", flow.residual)
        });
        let mut row: Vec<String> = x.iter().map(|v| fmt(*v)).collect();
        row.extend([fmt(2.0), fmt(cfg.resolution.steps), fmt(flow.residual), fmt_opt(flow.exit_s)]);
        rows.push(row);
    }
    let mut head = coord_header("x", n);
    head.extend(header(&["s_bar", "step", "residual", "exit_s"]));
    write_csv(&out.join("flow.csv"), &head, &rows)?;
    report.flow_max_residual = Some(worst);
    Ok(())
}

fn geodesic_stage(
    model: &ManifoldModel,
    cfg: &RunConfig,
    pairs: Option<&[PairCell]>,
    out: &Path,
    summary: &mut ExperimentSummary,
) -> Result<()> {
    let n = model.dim();
    let step = cfg.resolution.steps;
    let mut cons_rows = Vec::new();
    let mut rows = Vec::new();
    let Some(pairs) = pairs else {
        return flat_geodesic_stage(model, cfg, out, summary);
    };
    // Conservation: C drift at `step` and `step/2`.
    let closed = model.is_closed_form();
    let (speed, drift_tol) = if closed { (5.0, 1e-8) } else { (2.0, 1e-6) };
    for &c in &cfg.c_values {
        let phi = PhiSpec::CTimesR(c);
        let x0 = unit(n, 0, 1.0);
        let v0 = unit(n, 1, speed);
        let a = integrate_phi_geodesic(model, &phi, &x0, &v0, 20.0, step)?;
        let b = integrate_phi_geodesic(model, &phi, &x0, &v0, 20.0, 0.5 * step)?;
        let ratio = a.c_drift / b.c_drift;
        summary.check(a.converged && b.converged && a.c_drift <= drift_tol, || {
            format!("IVP c={c}: drift {:e} exceeds {drift_tol:e} or trajectory left the domain", a.c_drift)
        });
        if closed {
            summary.check(ratio >= 12.0, || format!("IVP c={c}: step halving reduced drift only {ratio:.2}x"));
        }
        cons_rows.push(vec![
            model.name().to_string(),
            fmt(c),
            fmt(20.0),
            fmt(step),
            fmt(a.c_estimate),
            fmt(a.c_drift),
            fmt(b.c_drift),
            fmt(ratio),
        ]);
    }
    for cell in pairs {
        let (c, d) = (cell.c, cell.d);
        let pair = match &cell.solved {
            Ok(p) => p,
            Err(e) => {
                summary.check(false, || format!("c={c} d={d}: solve failed: {e}"));
                continue;
            }
        };
        let sol = &pair.polished;
        let phi = PhiSpec::CTimesR(c);
        let max_speed = (0..=sol.k())
            .map(|k| {
                let g = model.metric(&sol.path.samples[k]);
                let v = sol.velocity(k);
                (v.transpose() * g * &v)[(0, 0)].sqrt()
            })
            .fold(0.0, f64::max);
        let gap = pair.solver_gap();
        let converged = pair.converged();
        rows.push(vec![
            model.name().to_string(),
            fmt(c),
            fmt(d),
            pair.direct.k().to_string(),
            fmt(pair.direct.j_value),
            fmt(pair.direct_j),
            fmt(sol.j_value),
            fmt(gap),
            fmt(sol.c_estimate),
            fmt(sol.c_drift),
            fmt(max_speed),
            converged.to_string(),
        ]);
        if !converged {
            summary.excluded += 1;
            summary.notes.push(format!("c={c} d={d}: minimizer did not converge; excluded"));
            continue;
        }
        let tag = format!("c={c} d={d}");
        if d <= 20.0 {
            summary.check(gap <= 1e-5, || format!("{tag}: solver gap {gap:e} exceeds 1e-5"));
        }
        let bound_c = (sol.c_estimate + 2.0 * c).max(0.0).sqrt() + 1e-6;
        summary.check(max_speed <= bound_c, || format!("{tag}: max |S| = {max_speed} exceeds sqrt(C+2c)"));
        summary.check(max_speed < (1.0 + 2.0 * c).sqrt(), || {
            format!("{tag}: max |S| = {max_speed} not below sqrt(1+2c)")
        });
        summary.check(sol.j_value <= (1.0 + 2.0 * c) * d + 1e-6, || {
            format!("{tag}: J = {} exceeds (1+2c)d", sol.j_value)
        });
        let path = &pair.direct.path;
        let mut worst = 0.0_f64;
        for j in 1..=10 {
            let axis = j % n;
            let s_bar = path.s_bar;
            let u = VariationField::from_fn(path, |s| unit(n, axis, (j as f64 * std::f64::consts::PI * s / s_bar).sin()));
            worst = worst.max(first_variation(model, &phi, path, &u)?.total.abs());
        }
        summary.check(worst <= 1e-6, || format!("{tag}: first variation {worst:e} exceeds 1e-6"));
    }
    write_csv(
        &out.join("conservation.csv"),
        &header(&["model", "c", "s_bar", "step", "C", "drift", "drift_half_step", "ratio"]),
        &cons_rows,
    )?;
    write_csv(
        &out.join("geodesic.csv"),
        &header(&[
            "model", "c", "d", "K", "J_direct", "J_extrapolated", "J_shoot", "solver_gap", "C", "drift", "max_speed",
            "converged",
        ]),
        &rows,
    )
}

/// Straight-line and hyperbolic regression cases on a Euclidean model.
fn flat_geodesic_stage(model: &ManifoldModel, cfg: &RunConfig, out: &Path, summary: &mut ExperimentSummary) -> Result<()> {
    let n = model.dim();
    let Some(phi) = model.model_phi() else {
        summary.skip(format!("{} has no geodesic regression suite", model.name()));
        return Ok(());
    };
    let origin = vec![0.0; n];
    let mut rows = Vec::new();
    let mut record = |case: &str, value: f64, expected: f64, tol: f64, summary: &mut ExperimentSummary| {
        let err = (value - expected).abs();
        summary.check(err <= tol, || format!("{case}: got {value}, expected {expected}"));
        rows.push(vec![model.name().to_string(), case.to_string(), fmt(value), fmt(expected), fmt(err)]);
    };
    match phi {
        PhiSpec::Constant(c0) => {
            let mut y = vec![0.0; n];
            y[0] = 3.0;
            y[1] = 4.0;
            let sol = minimize_j(model, &phi, &origin, &y, 1.0, cfg.resolution.k, 1)?;
            record("direct_J", sol.j_value, 25.0 + 2.0 * c0, 1e-8, summary);
            let sup = sol
                .path
                .samples
                .iter()
                .enumerate()
                .map(|(k, p)| p.iter().zip(&y).map(|(a, b)| (a - sol.path.s(k) * b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            record("direct_straightness", sup, 0.0, 1e-8, summary);
            let sh = shoot_bvp(model, &phi, &origin, &y, 1.0, &[0.0; 8][..n], 1e-12)?;
            let v_err = sh.velocities[0].iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            record("shooting_v0", v_err, 0.0, 1e-8, summary);
            let v0 = unit(n, 0, 1.0);
            let ivp = integrate_phi_geodesic(model, &phi, &origin, &v0, 2.0, cfg.resolution.steps)?;
            record("ivp_C", ivp.c_estimate, 1.0 - 2.0 * c0, 1e-12, summary);
            record("ivp_endpoint", ivp.path.y()[0], 2.0, 1e-12, summary);
            record("distance", riemann_distance(model, &origin, &y)?, 5.0, 1e-8, summary);
        }
        PhiSpec::HalfOnePlusNormSq => {
            let x0 = unit(n, 0, 1.0);
            let ivp = integrate_phi_geodesic(model, &phi, &x0, &vec![0.0; n], 1.0, cfg.resolution.steps)?;
            record("ivp_endpoint", ivp.path.y()[0], 1f64.cosh(), 1e-10, summary);
            record("ivp_C", ivp.c_estimate, -2.0, 1e-8, summary);
            let y = unit(n, 0, 1f64.cosh());
            let sh = shoot_bvp(model, &phi, &x0, &y, 1.0, &unit(n, 0, 0.3), 1e-12)?;
            let v_norm = sh.velocities[0].iter().map(|v| v.abs()).fold(0.0, f64::max);
            record("shooting_v0", v_norm, 0.0, 1e-8, summary);
        }
        _ => summary.skip("no regression case for this potential".into()),
    }
    write_csv(&out.join("geodesic.csv"), &header(&["model", "case", "value", "expected", "error"]), &rows)
}

const LEDGER_KINDS: [&str; 4] = ["trace_index", "weighted_index", "ricci_l2", "grad_r"];

fn ledger_row(l: &InequalityLedger) -> Vec<String> {
    vec![
        l.model.clone(),
        fmt_opt(l.c),
        l.n.to_string(),
        fmt(l.s_bar),
        fmt(l.big_c),
        l.zeta.clone(),
        fmt(l.lhs),
        fmt(l.rhs),
        fmt(l.slack),
        l.holds.to_string(),
    ]
}

fn ledgers_stage(
    model: &ManifoldModel,
    pairs: Option<&[PairCell]>,
    out: &Path,
    summary: &mut ExperimentSummary,
    report: &mut SuiteReport,
) -> Result<()> {
    let Some(pairs) = pairs else {
        summary.skip(format!("{} is not a steady soliton", model.name()));
        return Ok(());
    };
    let mut tables: Vec<Vec<Vec<String>>> = vec![Vec::new(); LEDGER_KINDS.len()];
    let mut index_rows = Vec::new();
    let evaluated: Vec<Option<Result<([InequalityLedger; 4], f64)>>> = pairs
        .par_iter()
        .map(|cell| {
            let pair = cell.solved.as_ref().ok().filter(|p| p.converged())?;
            Some(ledgers_for(model, cell.c, pair))
        })
        .collect();
    for (cell, ev) in pairs.iter().zip(evaluated) {
        let tag = format!("c={} d={}", cell.c, cell.d);
        let Some(ev) = ev else {
            summary.excluded += 1;
            summary.notes.push(format!("{tag}: no converged minimizer; excluded"));
            continue;
        };
        let (ledgers, index_value) = ev?;
        summary.check(index_value >= -1e-8, || format!("{tag}: index form {index_value:e} is negative"));
        index_rows.push(vec![model.name().to_string(), fmt(cell.c), fmt(cell.d), fmt(index_value)]);
        for (i, l) in ledgers.iter().enumerate() {
            summary.check(l.holds, || format!("{tag}: {} ledger fails with slack {:e}", l.name, l.slack));
            update_min(&mut report.worst_slacks, &l.name, l.slack);
            tables[i].push(ledger_row(l));
        }
        let bound = trapezoid_bound(model.dim(), cell.c);
        summary.check(ledgers[2].rhs < bound, || {
            format!("{tag}: ricci_l2 rhs {} not below (n+sqrt(1+2c))/c = {bound}", ledgers[2].rhs)
        });
        let chain = (ledgers[0].slack - ledgers[1].slack).abs();
        let chain_tol = 2.0 * (ledgers[0].quad_change + ledgers[1].quad_change) + 1e-8;
        summary.check(chain <= chain_tol, || {
            format!("{tag}: trace and weighted slacks differ by {chain:e} (tolerance {chain_tol:e})")
        });
    }
    let head = header(&["model", "c", "n", "s_bar", "C", "zeta", "lhs", "rhs", "slack", "holds"]);
    for (kind, rows) in LEDGER_KINDS.iter().zip(&tables) {
        write_csv(&out.join(format!("ledger_{kind}.csv")), &head, rows)?;
    }
    write_csv(&out.join("index_form.csv"), &header(&["model", "c", "d", "index_form"]), &index_rows)
}

/// The four ledgers with the trapezoid profile and the index form of
/// `ζ·(parallel unit normal)`.
fn ledgers_for(model: &ManifoldModel, c: f64, pair: &PairSolution) -> Result<([InequalityLedger; 4], f64)> {
    let phi = PhiSpec::CTimesR(c);
    let sol = &pair.polished;
    let zeta = TestFunction::trapezoid(pair.d)?;
    let ledgers = [
        trace_index_inequality(model, &phi, sol, &zeta)?,
        weighted_index_inequality(model, &phi, sol, &zeta)?,
        ricci_l2_inequality(model, sol, &zeta, c)?,
        grad_r_inequality(model, sol, &zeta, c)?,
    ];
    let e0: DVector<f64> = initial_unit_normal(model, sol)?;
    let u = parallel_variation(model, sol, &e0, &zeta)?;
    let value = index_form(model, &phi, sol, &u)?;
    Ok((ledgers, value))
}

fn decay_row(r: &DecayRecord) -> Vec<String> {
    vec![
        r.model.clone(),
        fmt(r.c),
        fmt(r.d),
        fmt(r.big_c),
        fmt(r.j),
        fmt(r.lhs),
        fmt(r.paper_bound),
        fmt(r.ric_at_z),
        fmt(r.k_ratio),
        r.half_dist_ok.to_string(),
        r.converged.to_string(),
    ]
}

fn decay_stage(
    model: &ManifoldModel,
    pairs: Option<&[PairCell]>,
    out: &Path,
    summary: &mut ExperimentSummary,
    report: &mut SuiteReport,
) -> Result<()> {
    let Some(pairs) = pairs else {
        summary.skip(format!("{} is not a steady soliton", model.name()));
        return Ok(());
    };
    let origin = vec![0.0; model.dim()];
    let built: Vec<Option<Result<DecayRecord>>> = pairs
        .par_iter()
        .map(|cell| {
            let pair = cell.solved.as_ref().ok()?;
            Some(decay_record_from(model, cell.c, &origin, pair))
        })
        .collect();
    let mut records = Vec::new();
    for (cell, rec) in pairs.iter().zip(built) {
        match rec {
            Some(r) => records.push(r?),
            None => {
                summary.excluded += 1;
                summary.notes.push(format!("c={} d={}: solve failed; excluded", cell.c, cell.d));
            }
        }
    }
    let is_cigar = model.name() == "cigar";
    for r in &records {
        let tag = format!("c={} d={}", r.c, r.d);
        if !r.converged {
            summary.excluded += 1;
            summary.notes.push(format!("{tag}: minimizer did not converge; excluded"));
            continue;
        }
        summary.check(r.lhs < r.paper_bound, || {
            format!("{tag}: lhs {} not below the bound {}", r.lhs, r.paper_bound)
        });
        summary.check(r.half_dist_ok, || format!("{tag}: d(z, y) = {} exceeds d/2", r.d_zy));
        if is_cigar {
            // |Rc| at distance d/2 from the tip on the radial minimizer.
            let mid = (1.0 / 2f64.sqrt()) / (1.0 + (0.25 * r.d).sinh().powi(2));
            summary.check(r.ric_at_z <= mid + 1e-6, || {
                format!("{tag}: |Rc|(z) = {} exceeds the midpoint value {mid}", r.ric_at_z)
            });
        }
    }
    let window = c_window_check(&records);
    for v in &window.violations {
        summary.check(false, || v.clone());
    }
    summary.passed += window.checked - window.violations.len().min(window.checked);
    let mut summaries: Vec<DecaySummary> = Vec::new();
    for &c in &unique(records.iter().map(|r| r.c)) {
        let batch: Vec<DecayRecord> = records.iter().filter(|r| r.c == c).cloned().collect();
        match liminf_summary(&batch) {
            Ok(s) => {
                summary.check(s.envelope_decreasing, || {
                    format!("c={c}: witness envelope {:?} is not strictly decreasing", s.envelope)
                });
                report.fitted_k.push(FittedK {
                    c,
                    k: s.fitted_k,
                    first_k: s.first_k,
                    tail_max: s.tail_max,
                    envelope_decreasing: s.envelope_decreasing,
                });
                summaries.push(s);
            }
            Err(e) => summary.notes.push(format!("c={c}: no summary: {e}")),
        }
    }
    let rows: Vec<Vec<String>> = records.iter().map(decay_row).collect();
    write_csv(
        &out.join("decay.csv"),
        &header(&[
            "model", "c", "d", "C", "J", "lhs", "paper_bound", "ric_at_z", "K_ratio", "half_dist_ok", "converged",
        ]),
        &rows,
    )?;
    #[derive(Serialize)]
    struct DecayJson<'a> {
        c_window: &'a crate::decay::CWindowReport,
        summaries: &'a [DecaySummary],
    }
    let doc = DecayJson {
        c_window: &window,
        summaries: &summaries,
    };
    fs::write(out.join("decay_summary.json"), serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

fn unique(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// Per-sample outcome of the ρ analysis.
struct RhoRow {
    y: Vec<f64>,
    s_bar: f64,
    rho: Option<f64>,
    smooth: bool,
    grad: Option<f64>,
    hj: Option<crate::rho::HjResidual>,
    lap: Option<InequalityLedger>,
    kernel: Option<crate::rho::KernelSample>,
    stencil_h: f64,
    overshoot: Option<f64>,
    error: Option<String>,
}

fn rho_cell(model: &ManifoldModel, phi: &PhiSpec, y: &[f64], s_bar: f64, opts: &RhoOptions) -> RhoRow {
    let origin = vec![0.0; y.len()];
    let mut row = RhoRow {
        y: y.to_vec(),
        s_bar,
        rho: None,
        smooth: false,
        grad: None,
        hj: None,
        lap: None,
        kernel: None,
        stencil_h: 0.0,
        overshoot: None,
        error: None,
    };
    let result = (|| -> Result<()> {
        let sample = rho_with(model, phi, &origin, y, s_bar, opts)?;
        row.rho = Some(sample.rho);
        row.stencil_h = sample.stencil_h;
        row.smooth = sample.smooth_flag;
        let d = riemann_distance(model, &origin, y)?;
        row.overshoot = Some(sample.rho - d * d / s_bar);
        if sample.smooth_flag {
            row.grad = Some(grad_identity_check(model, &sample)?);
            row.hj = Some(hj_residual(model, phi, &sample)?);
            row.lap = Some(laplacian_comparison(model, phi, &sample)?);
            row.kernel = Some(phi_kernel_check(model, phi, &sample)?);
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    row
}

fn rho_stage(
    model: &ManifoldModel,
    cfg: &RunConfig,
    out: &Path,
    summary: &mut ExperimentSummary,
    report: &mut SuiteReport,
) -> Result<()> {
    let n = model.dim();
    let phis: Vec<PhiSpec> = if model.is_soliton() {
        cfg.c_values.iter().map(|&c| PhiSpec::CTimesR(c)).collect()
    } else {
        match model.model_phi() {
            Some(p) => vec![p],
            None => {
                summary.skip(format!("{} has no potential", model.name()));
                return Ok(());
            }
        }
    };
    let g = &cfg.rho_grid;
    let axis: Vec<f64> = if g.points == 1 {
        vec![g.y_min]
    } else {
        (0..g.points)
            .map(|i| g.y_min + (g.y_max - g.y_min) * i as f64 / (g.points - 1) as f64)
            .collect()
    };
    let mut cells = Vec::new();
    for (pi, _) in phis.iter().enumerate() {
        for &a in &axis {
            for &b in &axis {
                for &s in &g.s_bars {
                    let mut y = vec![0.0; n];
                    y[0] = a;
                    y[1] = b;
                    cells.push((pi, y, s));
                }
            }
        }
    }
    let opts = RhoOptions {
        k: cfg.resolution.rho_k,
        multistart: 4,
        seed: cfg.seed,
        h: cfg.resolution.stencil_h,
        ..RhoOptions::default()
    };
    let rows: Vec<RhoRow> = cells
        .par_iter()
        .map(|(pi, y, s)| rho_cell(model, &phis[*pi], y, *s, &opts))
        .collect();
    let flat = !model.is_soliton();
    let (grad_tol, exact_tol) = if flat { (1e-8, Some(1e-8)) } else { (1e-3, None) };
    let mut smooth = 0;
    let mut csv_rows = Vec::new();
    let mut hj_rows = Vec::new();
    for ((pi, _, _), r) in cells.iter().zip(&rows) {
        let c_label = phis[*pi].label();
        let tag = format!("{c_label} y={:?} s_bar={}", r.y, r.s_bar);
        if let Some(e) = &r.error {
            summary.check(false, || format!("{tag}: {e}"));
        }
        if let Some(o) = r.overshoot {
            summary.check(o >= -1e-6, || format!("{tag}: rho below d^2/s_bar by {:e}", -o));
        }
        if r.smooth {
            smooth += 1;
        } else if r.error.is_none() {
            summary.excluded += 1;
        }
        if let Some(gr) = r.grad {
            summary.check(gr <= grad_tol, || format!("{tag}: gradient residual {gr:e} exceeds {grad_tol:e}"));
        }
        if let Some(hj) = &r.hj {
            let ok = match exact_tol {
                Some(t) => hj.extrapolated <= t,
                None => hj.order.is_nan() || hj.order >= 1.0,
            };
            summary.check(ok, || {
                format!("{tag}: HJ residual {:e} -> {:e} (order {:.2})", hj.at_h, hj.at_half, hj.order)
            });
            let mut row: Vec<String> = r.y.iter().map(|v| fmt(*v)).collect();
            row.extend([fmt(r.s_bar), fmt(r.stencil_h), fmt(hj.at_h), fmt(hj.at_half), fmt(hj.extrapolated), fmt(hj.order)]);
            hj_rows.push(row);
        }
        if let Some(l) = &r.lap {
            let ok = l.holds && exact_tol.map_or(true, |t| l.slack.abs() <= t);
            summary.check(ok, || format!("{tag}: Laplacian slack {:e} (tolerance {:e})", l.slack, l.aux_residual));
            update_min(&mut report.worst_slacks, &l.name, l.slack);
        }
        if let Some(k) = &r.kernel {
            let ok = k.holds() && exact_tol.map_or(true, |t| k.residual.abs() <= t);
            summary.check(ok, || format!("{tag}: kernel residual {:e} (tolerance {:e})", k.residual, k.tolerance));
        }
        let mut row: Vec<String> = r.y.iter().map(|v| fmt(*v)).collect();
        row.extend([
            fmt(r.s_bar),
            fmt_opt(r.rho),
            r.smooth.to_string(),
            fmt_opt(r.grad),
            fmt_opt(r.hj.map(|h| h.extrapolated)),
            fmt_opt(r.lap.as_ref().map(|l| l.lhs)),
            fmt_opt(r.lap.as_ref().map(|l| l.rhs)),
            fmt_opt(r.kernel.map(|k| k.residual)),
        ]);
        csv_rows.push(row);
    }
    report.rho_samples = rows.len();
    let fraction = (rows.len() - smooth) as f64 / rows.len() as f64;
    report.non_smooth_fraction = Some(fraction);
    summary.notes.push(format!("{smooth} of {} samples smooth-flagged", rows.len()));
    let mut head = coord_header("y", n);
    head.extend(header(&["s_bar", "rho", "smooth", "grad_res", "hj_res", "lap_lhs", "lap_rhs", "kernel_res"]));
    write_csv(&out.join("rho.csv"), &head, &csv_rows)?;
    let mut head = coord_header("y", n);
    head.extend(header(&["s_bar", "h", "hj_at_h", "hj_at_half", "hj_extrapolated", "order"]));
    write_csv(&out.join("rho_hj.csv"), &head, &hj_rows)
}

/// Two-column series for external plotting: `decay_ric.dat` (d, |Rc|(z)),
/// `decay_kratio.dat` (d, K_ratio), one block per `c` sorted by `d`, and
/// `hj_convergence.dat` (h, HJ residual) with one block per sample.
/// Fails when neither `decay.csv` nor `rho_hj.csv` is present.
pub fn emit_plot_series(dir: &Path) -> Result<Vec<PathBuf>> {
    let decay = dir.join("decay.csv");
    let hj = dir.join("rho_hj.csv");
    if !decay.exists() && !hj.exists() {
        return Err(LabError::MissingFiles(vec![
            decay.display().to_string(),
            hj.display().to_string(),
        ]));
    }
    let mut written = Vec::new();
    if decay.exists() {
        let mut rdr = csv::Reader::from_path(&decay)?;
        let head = rdr.headers()?.clone();
        let col = |name: &str| {
            head.iter()
                .position(|h| h == name)
                .ok_or_else(|| LabError::Data(format!("decay.csv lacks column `{name}`")))
        };
        let (ic, id, iric, ik, iconv) = (col("c")?, col("d")?, col("ric_at_z")?, col("K_ratio")?, col("converged")?);
        let parse = |s: &str| s.parse::<f64>().map_err(|e| LabError::Data(format!("decay.csv: `{s}`: {e}")));
        let mut by_c: Vec<(f64, Vec<(f64, f64, f64)>)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if &rec[iconv] != "true" {
                continue;
            }
            let c = parse(&rec[ic])?;
            let entry = (parse(&rec[id])?, parse(&rec[iric])?, parse(&rec[ik])?);
            match by_c.iter_mut().find(|(k, _)| *k == c) {
                Some((_, v)) => v.push(entry),
                None => by_c.push((c, vec![entry])),
            }
        }
        let mut ric = String::new();
        let mut kr = String::new();
        for (c, rows) in &mut by_c {
            rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            ric.push_str(&format!("# c = {}\n", fmt(*c)));
            kr.push_str(&format!("# c = {}\n", fmt(*c)));
            for (d, r, k) in rows.iter() {
                ric.push_str(&format!("{} {}\n", fmt(*d), fmt(*r)));
                kr.push_str(&format!("{} {}\n", fmt(*d), fmt(*k)));
            }
            ric.push('\n');
            kr.push('\n');
        }
        for (name, text) in [("decay_ric.dat", ric), ("decay_kratio.dat", kr)] {
            let p = dir.join(name);
            fs::write(&p, text)?;
            written.push(p);
        }
    }
    if hj.exists() {
        let mut rdr = csv::Reader::from_path(&hj)?;
        let head = rdr.headers()?.clone();
        let col = |name: &str| {
            head.iter()
                .position(|h| h == name)
                .ok_or_else(|| LabError::Data(format!("rho_hj.csv lacks column `{name}`")))
        };
        let (ih, ia, ib) = (col("h")?, col("hj_at_h")?, col("hj_at_half")?);
        let mut text = String::new();
        for rec in rdr.records() {
            let rec = rec?;
            let h: f64 = rec[ih].parse().map_err(|e| LabError::Data(format!("rho_hj.csv: {e}")))?;
            text.push_str(&format!("{} {}\n{} {}\n\n", fmt(h), &rec[ia], fmt(0.5 * h), &rec[ib]));
        }
        let p = dir.join("hj_convergence.dat");
        fs::write(&p, text)?;
        written.push(p);
    }
    Ok(written)
}
