//! Curvature witnesses along minimal cR-geodesics to far points.
//!
//! For a minimizer from `x` to `y` with `s̄ = d(x, y)` the trapezoid profile
//! bounds `∫ζ²|Rc|²` by `(n + √(1+2c))/c`, so some point `z` on the last
//! stretch of the path has `|Rc|(z) ≲ const/√(d+1)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::geodesic::{
    extrapolated_j, minimize_j_with, refine_with_shooting, riemann_distance, GeodesicSolution, MinimizeOptions,
};
use crate::geometry::ricci_norm;
use crate::models::ManifoldModel;
use crate::ode::{dopri45, AdaptiveOptions};
use crate::phi::PhiSpec;
use crate::variation::{ricci_l2_inequality, trapezoid_bound, TestFunction};

/// One far-point experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRecord {
    pub model: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub d: f64,
    pub c: f64,
    #[serde(rename = "C")]
    pub big_c: f64,
    #[serde(rename = "J")]
    pub j: f64,
    /// `∫ζ²|Rc|²` with the trapezoid profile.
    pub lhs: f64,
    /// Right side of the `|Rc|²` inequality for this run.
    pub rhs: f64,
    pub paper_bound: f64,
    pub z: Vec<f64>,
    /// Parameter of the witness on the minimizer.
    pub s_z: f64,
    pub ric_at_z: f64,
    /// `d(z, y)` from an independent distance computation.
    pub d_zy: f64,
    pub half_dist_ok: bool,
    #[serde(rename = "K_ratio")]
    pub k_ratio: f64,
    /// Relative gap between the extrapolated direct and the shooting values
    /// of `J`.
    pub solver_gap: f64,
    pub c_drift: f64,
    pub converged: bool,
}

/// Resolution of a decay run.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayOptions {
    pub k: usize,
    pub multistart: usize,
    pub seed: u64,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self {
            k: 512,
            multistart: 2,
            seed: 0,
        }
    }
}

/// Point at Riemannian distance `d` from `origin` along the chart ray in
/// direction `dir`, by integrating the arclength of the ray. On the
/// rotationally symmetric models with `origin = 0` the ray is a minimizing
/// geodesic, so `d` is the distance.
pub fn ray_target(model: &ManifoldModel, origin: &[f64], dir: &[f64], d: f64) -> Result<Vec<f64>> {
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) || dir.len() != model.dim() || !(d >= 0.0) {
        return Err(LabError::Usage("ray target needs a nonzero direction and d >= 0".into()));
    }
    let e: Vec<f64> = dir.iter().map(|v| v / norm).collect();
    let at = |t: f64| -> Vec<f64> { origin.iter().zip(&e).map(|(o, v)| o + t * v).collect() };
    let speed = |t: f64| -> f64 {
        let g = model.metric(&at(t));
        let mut s = 0.0;
        for i in 0..e.len() {
            for j in 0..e.len() {
                s += g[(i, j)] * e[i] * e[j];
            }
        }
        s.sqrt()
    };
    // Chart parameter t as a function of arclength: dt/dℓ = 1/|e|_g.
    let mut rhs = |_l: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let p = at(y[0]);
        model.check(&p)?;
        dy[0] = 1.0 / speed(y[0]);
        Ok(())
    };
    let opts = AdaptiveOptions {
        rtol: 1e-13,
        atol: 1e-15,
        h_init: 1e-3,
        h_max: 0.05,
        h_min: 1e-14,
        max_steps: 1_000_000,
    };
    let out = dopri45(&mut rhs, 0.0, &[0.0], d, opts, |_, _| Ok(()))
        .map_err(|_| LabError::Usage(format!("distance {d} is beyond the chart domain")))?;
    let t = out.last().map_or(0.0, |(_, y)| y[0]);
    Ok(at(t))
}

/// Decay records for each target with default resolution.
pub fn decay_run(model: &ManifoldModel, c: f64, x: &[f64], targets: &[Vec<f64>]) -> Result<Vec<DecayRecord>> {
    decay_run_with(model, c, x, targets, &DecayOptions::default())
}

/// Decay records for each target; targets are processed concurrently and
/// returned in input order.
pub fn decay_run_with(
    model: &ManifoldModel,
    c: f64,
    x: &[f64],
    targets: &[Vec<f64>],
    opts: &DecayOptions,
) -> Result<Vec<DecayRecord>> {
    if !model.is_soliton() {
        return Err(LabError::Usage(format!(
            "{} is not a steady soliton with positive scalar curvature",
            model.name()
        )));
    }
    let phi = PhiSpec::CTimesR(c);
    phi.validate()?;
    model.check(x)?;
    targets
        .par_iter()
        .map(|y| decay_record(model, c, &phi, x, y, opts))
        .collect()
}

/// Direct minimizer to a target at `s̄ = d(x, y)` and its shooting polish.
#[derive(Clone, Debug)]
pub struct PairSolution {
    pub y: Vec<f64>,
    pub d: f64,
    pub direct: GeodesicSolution,
    /// Richardson-extrapolated `J` of the direct solve.
    pub direct_j: f64,
    pub polished: GeodesicSolution,
}

impl PairSolution {
    /// Both solves converged and the polished energy is conserved to `1e−6`.
    pub fn converged(&self) -> bool {
        self.direct.converged
            && self.polished.converged
            && self.polished.c_drift <= 1e-6 * self.polished.c_estimate.abs().max(1.0)
    }

    /// Relative gap between the extrapolated direct and the shooting `J`.
    pub fn solver_gap(&self) -> f64 {
        (self.direct_j - self.polished.j_value).abs() / self.polished.j_value.abs().max(1e-300)
    }
}

/// Solve for the minimizer from `x` to `y` with `s̄ = d(x, y)`.
pub fn solve_pair(
    model: &ManifoldModel,
    phi: &PhiSpec,
    x: &[f64],
    y: &[f64],
    opts: &DecayOptions,
) -> Result<PairSolution> {
    model.check(y)?;
    let d = riemann_distance(model, x, y)?;
    if d <= 2.0 {
        return Err(LabError::Usage(format!(
            "target at distance {d} <= 2; the trapezoid profile needs s_bar > 2"
        )));
    }
    let mopts = MinimizeOptions {
        k: opts.k,
        multistart: opts.multistart,
        seed: opts.seed,
        ..MinimizeOptions::default()
    };
    let direct = minimize_j_with(model, phi, x, y, d, &mopts)?;
    let polished = refine_with_shooting(model, phi, &direct, 1e-10)?;
    let direct_j = extrapolated_j(model, phi, &direct)?;
    Ok(PairSolution {
        y: y.to_vec(),
        d,
        direct,
        direct_j,
        polished,
    })
}

fn decay_record(
    model: &ManifoldModel,
    c: f64,
    phi: &PhiSpec,
    x: &[f64],
    y: &[f64],
    opts: &DecayOptions,
) -> Result<DecayRecord> {
    let pair = solve_pair(model, phi, x, y, opts)?;
    decay_record_from(model, c, x, &pair)
}

/// Assemble a record from a solved pair; `φ = cR`.
pub fn decay_record_from(model: &ManifoldModel, c: f64, x: &[f64], pair: &PairSolution) -> Result<DecayRecord> {
    let (d, y, sol) = (pair.d, &pair.y, &pair.polished);
    let zeta = TestFunction::trapezoid(d)?;
    let ledger = ricci_l2_inequality(model, sol, &zeta, c)?;
    // |S|² = C + 2cR < 1 + 2c, so d(γ(s), y) ≤ √(1+2c)(s̄ − s).
    let s_min = d - d / (2.0 * (1.0 + 2.0 * c).sqrt());
    let mut best: Option<(usize, f64)> = None;
    for k in 0..=sol.k() {
        if sol.path.s(k) + 1e-12 * d < s_min {
            continue;
        }
        let ric = ricci_norm(model, &sol.path.samples[k])?;
        if best.map_or(true, |(_, b)| ric < b) {
            best = Some((k, ric));
        }
    }
    let (kz, ric) = best.ok_or_else(|| LabError::Data("empty witness segment".into()))?;
    let z = sol.path.samples[kz].clone();
    let d_zy = riemann_distance(model, &z, y)?;
    Ok(DecayRecord {
        model: model.name().to_string(),
        x: x.to_vec(),
        y: y.to_vec(),
        d,
        c,
        big_c: sol.c_estimate,
        j: sol.j_value,
        lhs: ledger.lhs,
        rhs: ledger.rhs,
        paper_bound: trapezoid_bound(model.dim(), c),
        z,
        s_z: sol.path.s(kz),
        ric_at_z: ric,
        d_zy,
        half_dist_ok: d_zy <= 0.5 * d + 1e-6,
        k_ratio: ric * (d + 1.0).sqrt(),
        solver_gap: pair.solver_gap(),
        c_drift: sol.c_drift,
        converged: pair.converged(),
    })
}

/// Aggregate of a batch of records.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecaySummary {
    pub model: String,
    pub valid: usize,
    pub excluded: usize,
    /// `max K_ratio` over the valid records.
    pub fitted_k: f64,
    /// `K_ratio` of the record with the smallest `d`.
    pub first_k: f64,
    /// `max ric_at_z` over the larger half of the distances.
    pub tail_max: f64,
    /// `(d, min_{d′ ≤ d} ric_at_z)` sorted by `d`: the smallest witness
    /// found up to distance `d`.
    pub envelope: Vec<(f64, f64)>,
    /// Envelope strictly decreasing in `d`, i.e. every farther target
    /// produced a smaller witness.
    pub envelope_decreasing: bool,
    /// Every valid record satisfies `ric_at_z ≤ first_k/√(d+1)`.
    pub first_k_bound_holds: bool,
    /// Every valid record has `lhs < paper_bound`.
    pub bound_holds: bool,
    pub half_dist_holds: bool,
}

/// Sort valid records by `d` and summarize the decay.
pub fn liminf_summary(records: &[DecayRecord]) -> Result<DecaySummary> {
    let mut valid: Vec<&DecayRecord> = records.iter().filter(|r| r.converged).collect();
    valid.sort_by(|a, b| {
        a.d.total_cmp(&b.d).then_with(|| {
            a.y.iter()
                .zip(&b.y)
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut ds: Vec<f64> = valid.iter().map(|r| r.d).collect();
    ds.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1.0));
    if ds.len() < 3 {
        return Err(LabError::InsufficientData(format!(
            "need at least 3 distinct distances among valid records, got {}",
            ds.len()
        )));
    }
    let fitted_k = valid.iter().map(|r| r.k_ratio).fold(0.0, f64::max);
    let first_k = valid[0].k_ratio;
    let half = valid.len() / 2;
    let tail_max = valid[half..].iter().map(|r| r.ric_at_z).fold(0.0, f64::max);
    let mut envelope: Vec<(f64, f64)> = Vec::with_capacity(valid.len());
    let mut running = f64::INFINITY;
    for r in &valid {
        running = running.min(r.ric_at_z);
        envelope.push((r.d, running));
    }
    let envelope_decreasing = envelope.windows(2).all(|w| w[1].1 < w[0].1);
    let first_k_bound_holds = valid
        .iter()
        .all(|r| r.ric_at_z <= first_k / (r.d + 1.0).sqrt() * (1.0 + 1e-12));
    Ok(DecaySummary {
        model: valid[0].model.clone(),
        valid: valid.len(),
        excluded: records.len() - valid.len(),
        fitted_k,
        first_k,
        tail_max,
        envelope,
        envelope_decreasing,
        first_k_bound_holds,
        bound_holds: valid.iter().all(|r| r.lhs < r.paper_bound),
        half_dist_holds: valid.iter().all(|r| r.half_dist_ok),
    })
}

/// Outcome of the `C` window check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CWindowReport {
    pub checked: usize,
    pub violations: Vec<String>,
}

impl CWindowReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check `C < 1` on every valid record and `C ≥ 1/2` when `c ≤ 1/4`.
pub fn c_window_check(records: &[DecayRecord]) -> CWindowReport {
    let mut violations = Vec::new();
    let mut checked = 0;
    for r in records.iter().filter(|r| r.converged) {
        checked += 1;
        if !(r.big_c < 1.0 - 1e-8) {
            violations.push(format!(
                "{} c={} d={}: C = {} is not below 1",
                r.model, r.c, r.d, r.big_c
            ));
        }
        if r.c <= 0.25 && !(r.big_c >= 0.5 - 1e-6) {
            violations.push(format!(
                "{} c={} d={}: C = {} is below 1/2 although c <= 1/4",
                r.model, r.c, r.d, r.big_c
            ));
        }
    }
    CWindowReport { checked, violations }
}
