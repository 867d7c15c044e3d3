//! Initial-value integration of `γ″ + Γ(γ′,γ′) = ∇φ`, shooting for the
//! two-point problem, and the gradient-flow check.

use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, Result};
use crate::geometry::{christoffel, inverse_metric};
use crate::models::ManifoldModel;
use crate::ode::rk4_step;
use crate::phi::PhiSpec;
use crate::tensor::g_dot;

use super::minimize::conserved_from_samples;
use super::{DiscretePath, GeodesicSolution, Solver};

/// Right-hand side on the state `(x, v, J)`.
fn geodesic_rhs(model: &ManifoldModel, phi: &PhiSpec, y: &[f64], dy: &mut [f64]) -> Result<()> {
    let n = model.dim();
    let (x, v) = (&y[..n], &y[n..2 * n]);
    model.check(x)?;
    let (g, dg) = model.metric_d1(x);
    let g_inv = inverse_metric(&g, x)?;
    let gamma = christoffel(&g_inv, &dg);
    let (phi_v, dphi) = phi.grad(model, x);
    let acc = g_inv * dphi - gamma.contract_last(v, v);
    let vv = DVector::from_column_slice(v);
    dy[..n].copy_from_slice(v);
    dy[n..2 * n].copy_from_slice(acc.as_slice());
    dy[2 * n] = g_dot(&g, &vv, &vv) + 2.0 * phi_v;
    Ok(())
}

struct Trajectory {
    samples: Vec<Vec<f64>>,
    velocities: Vec<Vec<f64>>,
    j: f64,
    exit_s: Option<f64>,
}

/// RK4 with `k` stored intervals of `sub` steps each. A domain exit ends the
/// trajectory early.
fn integrate(
    model: &ManifoldModel,
    phi: &PhiSpec,
    x: &[f64],
    v0: &[f64],
    s_bar: f64,
    k: usize,
    sub: usize,
    store: bool,
) -> Result<Trajectory> {
    let n = model.dim();
    let h = s_bar / (k * sub) as f64;
    let mut y: Vec<f64> = x.iter().chain(v0).copied().chain([0.0]).collect();
    let mut rhs = |_s: f64, y: &[f64], dy: &mut [f64]| geodesic_rhs(model, phi, y, dy);
    let mut traj = Trajectory {
        samples: vec![x.to_vec()],
        velocities: vec![v0.to_vec()],
        j: 0.0,
        exit_s: None,
    };
    for i in 0..k {
        for j in 0..sub {
            let s = h * (i * sub + j) as f64;
            match rk4_step(&mut rhs, s, &y, h) {
                Ok(next) if next.iter().all(|v| v.is_finite()) => y = next,
                Ok(_) | Err(LabError::Domain { .. }) | Err(LabError::Geometry { .. }) => {
                    traj.exit_s = Some(s);
                    traj.j = y[2 * n];
                    return Ok(traj);
                }
                Err(e) => return Err(e),
            }
        }
        if store || i + 1 == k {
            traj.samples.push(y[..n].to_vec());
            traj.velocities.push(y[n..2 * n].to_vec());
        }
    }
    if !model.contains(&y[..n]) {
        traj.exit_s = Some(s_bar);
    }
    traj.j = y[2 * n];
    Ok(traj)
}

fn assemble(
    model: &ManifoldModel,
    phi: &PhiSpec,
    traj: Trajectory,
    s_len: f64,
    solver: Solver,
    converged: bool,
    residual: f64,
) -> Result<GeodesicSolution> {
    let k = traj.samples.len() - 1;
    if k < 2 {
        return Err(LabError::Domain {
            model: model.name().to_string(),
            coords: traj.samples.last().cloned().unwrap_or_default(),
        });
    }
    let full = traj.exit_s.is_none();
    let path = DiscretePath::new(traj.samples, s_len)?;
    let (c, drift) = conserved_from_samples(model, phi, &path.samples, &traj.velocities);
    Ok(GeodesicSolution {
        path,
        velocities: traj.velocities,
        j_value: traj.j,
        c_estimate: c,
        c_drift: drift,
        solver,
        converged: converged && full,
        residual,
        exit_s: traj.exit_s,
    })
}

/// Fourth-order integration from `x` with initial velocity `v0` over
/// `[0, s_bar]` at (approximately) the given step; every step is stored.
pub fn integrate_phi_geodesic(
    model: &ManifoldModel,
    phi: &PhiSpec,
    x: &[f64],
    v0: &[f64],
    s_bar: f64,
    step: f64,
) -> Result<GeodesicSolution> {
    phi.require_nonnegative()?;
    model.check(x)?;
    if v0.len() != model.dim() || !(step > 0.0) || !(s_bar > 0.0) {
        return Err(LabError::Usage(format!(
            "invalid integration inputs: |v0| = {}, step = {step}, s_bar = {s_bar}",
            v0.len()
        )));
    }
    let k = ((s_bar / step).round() as usize).max(2);
    let traj = integrate(model, phi, x, v0, s_bar, k, 1, true)?;
    // an early exit keeps only the completed sample intervals
    let s_len = s_bar * (traj.samples.len() - 1) as f64 / k as f64;
    assemble(model, phi, traj, s_len, Solver::Ivp, true, 0.0)
}

/// Settings for [`shoot_bvp_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShootOptions {
    /// Endpoint tolerance in the metric at `y`.
    pub tol: f64,
    /// Number of stored sample intervals K.
    pub samples: usize,
    /// Largest RK4 step.
    pub max_step: f64,
    pub max_iter: usize,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            samples: 256,
            max_step: 2.5e-3,
            max_iter: 60,
        }
    }
}

/// Newton iteration on the endpoint map with default options and `tol`.
pub fn shoot_bvp(
    model: &ManifoldModel,
    phi: &PhiSpec,
    x: &[f64],
    y: &[f64],
    s_bar: f64,
    guess: &[f64],
    tol: f64,
) -> Result<GeodesicSolution> {
    let opts = ShootOptions {
        tol,
        ..ShootOptions::default()
    };
    shoot_bvp_with(model, phi, x, y, s_bar, guess, opts)
}

/// Damped Newton iteration (central-difference Jacobian) on the endpoint map.
/// A solution with `converged = false` is returned when the iteration stalls.
pub fn shoot_bvp_with(
    model: &ManifoldModel,
    phi: &PhiSpec,
    x: &[f64],
    y: &[f64],
    s_bar: f64,
    guess: &[f64],
    opts: ShootOptions,
) -> Result<GeodesicSolution> {
    phi.require_nonnegative()?;
    model.check(x)?;
    model.check(y)?;
    let n = model.dim();
    if guess.len() != n || guess.iter().any(|v| !v.is_finite()) {
        return Err(LabError::Usage(format!("invalid shooting guess {guess:?}")));
    }
    if !(opts.tol > 0.0) || !(s_bar > 0.0) || opts.samples < 2 {
        return Err(LabError::Usage("invalid shooting options".into()));
    }
    let k = opts.samples;
    let sub = ((s_bar / k as f64) / opts.max_step).ceil().max(1.0) as usize;
    let g_y = model.metric(y);
    let miss = |v: &[f64]| -> Option<DVector<f64>> {
        let t = integrate(model, phi, x, v, s_bar, k, sub, false).ok()?;
        if t.exit_s.is_some() {
            return None;
        }
        let end = t.samples.last()?;
        Some(DVector::from_iterator(n, end.iter().zip(y).map(|(a, b)| a - b)))
    };
    let norm = |f: &DVector<f64>| g_dot(&g_y, f, f).sqrt();
    let mut v = guess.to_vec();
    let mut f = miss(&v);
    let mut res = f.as_ref().map_or(f64::INFINITY, norm);
    let mut iter = 0;
    while res > opts.tol && iter < opts.max_iter {
        iter += 1;
        let Some(f0) = f.clone() else { break };
        let scale = v.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
        let eps = 1e-6 * scale;
        let mut jac = DMatrix::zeros(n, n);
        let mut ok = true;
        for j in 0..n {
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[j] += eps;
            vm[j] -= eps;
            match (miss(&vp), miss(&vm)) {
                (Some(a), Some(b)) => jac.set_column(j, &((a - b) / (2.0 * eps))),
                _ => ok = false,
            }
        }
        if !ok {
            break;
        }
        let Some(step) = jac.clone().lu().solve(&(-&f0)) else {
            break;
        };
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial: Vec<f64> = v.iter().zip(step.iter()).map(|(a, d)| a + lambda * d).collect();
            if let Some(ft) = miss(&trial) {
                let rt = norm(&ft);
                if rt < res {
                    v = trial;
                    f = Some(ft);
                    res = rt;
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let traj = integrate(model, phi, x, &v, s_bar, k, sub, true)?;
    if traj.exit_s.is_some() {
        return Err(LabError::NonConvergence(format!(
            "shooting trajectory left the chart domain (residual {res:e})"
        )));
    }
    assemble(model, phi, traj, s_bar, Solver::Shooting, res <= opts.tol, res)
}

/// Result of [`gradient_flow_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct FlowReport {
    /// max over samples of `|∇_S S − ∇(−R/2)|_g`.
    pub residual: f64,
    pub samples: usize,
    /// Parameter at which the flow left the chart domain, if it did.
    pub exit_s: Option<f64>,
}

/// Integrate `γ′ = ∇f` from `x` and test the `(−R/2)`-geodesic equation
/// along the computed curve, with `∇_S S` from fourth-order differences of
/// the velocity samples.
pub fn gradient_flow_check(
    model: &ManifoldModel,
    x: &[f64],
    s_bar: f64,
    step: f64,
) -> Result<FlowReport> {
    model.check(x)?;
    if !(step > 0.0) || !(s_bar > 0.0) {
        return Err(LabError::Usage("step and s_bar must be positive".into()));
    }
    let n = model.dim();
    let field = |p: &[f64]| -> Result<DVector<f64>> {
        model.check(p)?;
        let g_inv = inverse_metric(&model.metric(p), p)?;
        Ok(g_inv * model.f_jet(p).grad)
    };
    let mut rhs = |_s: f64, y: &[f64], dy: &mut [f64]| {
        dy.copy_from_slice(field(y)?.as_slice());
        Ok(())
    };
    let k = ((s_bar / step).round() as usize).max(5);
    let h = s_bar / k as f64;
    let mut pts = vec![x.to_vec()];
    let mut exit_s = None;
    for i in 0..k {
        match rk4_step(&mut rhs, i as f64 * h, pts.last().unwrap(), h) {
            Ok(next) if model.contains(&next) => pts.push(next),
            _ => {
                exit_s = Some(i as f64 * h);
                break;
            }
        }
    }
    let vel: Vec<DVector<f64>> = pts.iter().map(|p| field(p)).collect::<Result<_>>()?;
    let signed = PhiSpec::SignedR(-0.5);
    let mut worst = 0.0_f64;
    let m = pts.len();
    for i in 2..m.saturating_sub(2) {
        let acc = (&vel[i - 2] - &vel[i - 1] * 8.0 + &vel[i + 1] * 8.0 - &vel[i + 2]) / (12.0 * h);
        let p = &pts[i];
        let (g, dg) = model.metric_d1(p);
        let g_inv = inverse_metric(&g, p)?;
        let gamma = christoffel(&g_inv, &dg);
        let cov = acc + gamma.contract_last(vel[i].as_slice(), vel[i].as_slice());
        let (_, dphi) = signed.grad(model, p);
        let diff = cov - g_inv * dphi;
        worst = worst.max(g_dot(&g, &diff, &diff).sqrt());
    }
    let _ = n;
    Ok(FlowReport {
        residual: worst,
        samples: m,
        exit_s,
    })
}
