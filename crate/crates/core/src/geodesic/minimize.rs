//! Direct minimization of the discrete functional, the conserved quantity
//! and Riemannian distance.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::models::ManifoldModel;
use crate::phi::PhiSpec;
use crate::tensor::g_dot;

use super::functional::{gradient_unchecked, hessian_unchecked, j_unchecked};
use super::ivp::{shoot_bvp_with, ShootOptions};
use super::{DiscretePath, GeodesicSolution, Solver};

/// `C = median_k (|S_k|² − 2φ(γ_k))` and the largest deviation from it.
pub(crate) fn conserved_from_samples(
    model: &ManifoldModel,
    phi: &PhiSpec,
    samples: &[Vec<f64>],
    velocities: &[Vec<f64>],
) -> (f64, f64) {
    let vals: Vec<f64> = samples
        .iter()
        .zip(velocities)
        .map(|(p, v)| {
            let g = model.metric(p);
            let v = DVector::from_column_slice(v);
            g_dot(&g, &v, &v) - 2.0 * phi.value(model, p)
        })
        .collect();
    let mut sorted = vals.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let m = sorted.len() / 2;
    let c = if sorted.len() % 2 == 0 {
        0.5 * (sorted[m - 1] + sorted[m])
    } else {
        sorted[m]
    };
    let drift = vals.iter().fold(0.0_f64, |d, v| d.max((v - c).abs()));
    (c, drift)
}

/// `(C, drift)` of a solution.
pub fn conserved_quantity(model: &ManifoldModel, phi: &PhiSpec, sol: &GeodesicSolution) -> (f64, f64) {
    conserved_from_samples(model, phi, &sol.path.samples, &sol.velocities)
}

/// Settings for [`minimize_j_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct MinimizeOptions {
    /// Number of sample intervals K (at least 16).
    pub k: usize,
    /// Number of starts (at least 1).
    pub multistart: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Termination threshold on the Euclidean norm of the interior gradient.
    pub grad_tol: f64,
    /// Optional extra start, resampled to K intervals.
    pub initial: Option<DiscretePath>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            k: 128,
            multistart: 1,
            seed: 0,
            max_iter: 200,
            grad_tol: 1e-8,
            initial: None,
        }
    }
}

/// Minimize the discrete functional over paths from `x` to `y` on
/// `[0, s_bar]` with `k` intervals.
pub fn minimize_j(
    model: &ManifoldModel,
    phi: &PhiSpec,
    x: &[f64],
    y: &[f64],
    s_bar: f64,
    k: usize,
    multistart: usize,
) -> Result<GeodesicSolution> {
    let opts = MinimizeOptions {
        k,
        multistart,
        ..MinimizeOptions::default()
    };
    minimize_j_with(model, phi, x, y, s_bar, &opts)
}

/// [`minimize_j`] with explicit options.
pub fn minimize_j_with(
    model: &ManifoldModel,
    phi: &PhiSpec,
    x: &[f64],
    y: &[f64],
    s_bar: f64,
    opts: &MinimizeOptions,
) -> Result<GeodesicSolution> {
    phi.require_nonnegative()?;
    model.check(x)?;
    model.check(y)?;
    if opts.k < 16 || opts.multistart < 1 {
        return Err(LabError::Usage(format!(
            "minimize_j needs K >= 16 and multistart >= 1 (got K = {}, multistart = {})",
            opts.k, opts.multistart
        )));
    }
    if !(s_bar > 0.0 && s_bar.is_finite()) {
        return Err(LabError::Usage(format!("s_bar must be positive, got {s_bar}")));
    }
    if x == y {
        return Ok(constant_path(model, phi, x, s_bar, opts.k));
    }
    let base = arclength_segment(model, x, y, s_bar, opts.k)?;
    let mut starts = vec![base.clone()];
    if let Some(init) = &opts.initial {
        starts.push(resample(init, opts.k, x, y)?);
    }
    for i in 1..opts.multistart {
        starts.push(perturb(model, &base, opts.seed, i as u64));
    }
    let runs: Vec<Option<(Vec<Vec<f64>>, f64, f64)>> = starts
        .par_iter()
        .map(|p| newton(model, phi, p.samples.clone(), p.ds(), opts))
        .collect();
    let mut best: Option<(usize, Vec<Vec<f64>>, f64, f64)> = None;
    for (idx, run) in runs.into_iter().enumerate() {
        let Some((samples, j, gnorm)) = run else { continue };
        let better = match &best {
            None => true,
            Some((_, _, jb, _)) => j < jb - 1e-10,
        };
        if better {
            best = Some((idx, samples, j, gnorm));
        }
    }
    let Some((idx, samples, j, gnorm)) = best else {
        return Err(LabError::NonConvergence(format!(
            "all {} starts of the direct minimizer failed",
            starts.len()
        )));
    };
    log::debug!("minimize_j: start {idx} selected, J = {j}, |grad| = {gnorm:e}");
    let path = DiscretePath::new(samples, s_bar)?;
    let velocities = path.velocities();
    let (c, drift) = conserved_from_samples(model, phi, &path.samples, &velocities);
    Ok(GeodesicSolution {
        path,
        velocities,
        j_value: j,
        c_estimate: c,
        c_drift: drift,
        solver: Solver::Direct,
        converged: true,
        residual: gnorm,
        exit_s: None,
    })
}

fn constant_path(model: &ManifoldModel, phi: &PhiSpec, x: &[f64], s_bar: f64, k: usize) -> GeodesicSolution {
    let p = phi.value(model, x);
    GeodesicSolution {
        path: DiscretePath {
            samples: vec![x.to_vec(); k + 1],
            s_bar,
        },
        velocities: vec![vec![0.0; x.len()]; k + 1],
        j_value: 2.0 * p * s_bar,
        c_estimate: -2.0 * p,
        c_drift: 0.0,
        solver: Solver::Direct,
        converged: true,
        residual: 0.0,
        exit_s: None,
    }
}

/// The chart segment from `x` to `y`, sampled uniformly in g-arclength.
fn arclength_segment(model: &ManifoldModel, x: &[f64], y: &[f64], s_bar: f64, k: usize) -> Result<DiscretePath> {
    let d = DVector::from_iterator(x.len(), x.iter().zip(y).map(|(a, b)| b - a));
    let at = |t: f64| -> Vec<f64> { x.iter().zip(y).map(|(a, b)| a + t * (b - a)).collect() };
    let speed = |t: f64| {
        let g = model.metric(&at(t));
        g_dot(&g, &d, &d).sqrt()
    };
    // adaptive trapezoid table of the cumulative length
    let mut nodes = vec![(0.0, speed(0.0))];
    let mut stack = vec![(1.0, speed(1.0))];
    while let Some(&(tb, sb)) = stack.last() {
        let (ta, sa) = *nodes.last().unwrap();
        let mid = 0.5 * (ta + tb);
        let sm = speed(mid);
        let lin = 0.5 * (sa + sb);
        let fine = (sm - lin).abs() <= 1e-4 * sm.max(lin) || tb - ta < 1e-14;
        if fine && tb - ta <= 1.0 / 64.0 {
            nodes.push(stack.pop().unwrap());
        } else {
            stack.push((mid, sm));
        }
    }
    let mut cum = vec![0.0];
    for w in nodes.windows(2) {
        let l = cum.last().unwrap() + 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
        cum.push(l);
    }
    let total = *cum.last().unwrap();
    let mut samples = Vec::with_capacity(k + 1);
    let mut j = 0;
    for i in 0..=k {
        let target = total * i as f64 / k as f64;
        while j + 2 < cum.len() && cum[j + 1] < target {
            j += 1;
        }
        let (l0, l1) = (cum[j], cum[j + 1]);
        let frac = if l1 > l0 { ((target - l0) / (l1 - l0)).clamp(0.0, 1.0) } else { 0.0 };
        let t = nodes[j].0 + frac * (nodes[j + 1].0 - nodes[j].0);
        samples.push(at(t));
    }
    samples[0] = x.to_vec();
    samples[k] = y.to_vec();
    DiscretePath::new(samples, s_bar)
}

/// Linear resampling of a path onto K intervals with fixed endpoints.
fn resample(path: &DiscretePath, k: usize, x: &[f64], y: &[f64]) -> Result<DiscretePath> {
    let src = path.k();
    let mut samples: Vec<Vec<f64>> = (0..=k)
        .map(|i| {
            let t = i as f64 * src as f64 / k as f64;
            let j = (t.floor() as usize).min(src - 1);
            let f = t - j as f64;
            path.samples[j]
                .iter()
                .zip(&path.samples[j + 1])
                .map(|(a, b)| a + f * (b - a))
                .collect()
        })
        .collect();
    samples[0] = x.to_vec();
    samples[k] = y.to_vec();
    DiscretePath::new(samples, path.s_bar)
}

/// Smooth random interior displacement of a start path.
fn perturb(model: &ManifoldModel, base: &DiscretePath, seed: u64, index: u64) -> DiscretePath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index);
    let n = base.dim();
    let k = base.k();
    let coeffs: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let length: f64 = (0..k)
        .map(|i| {
            let d = DVector::from_iterator(n, base.samples[i + 1].iter().zip(&base.samples[i]).map(|(a, b)| a - b));
            g_dot(&model.metric(&base.samples[i]), &d, &d).sqrt()
        })
        .sum();
    let amp = 0.05 * length.min(20.0);
    let mut samples = base.samples.clone();
    for (i, p) in samples.iter_mut().enumerate().take(k).skip(1) {
        let s = i as f64 / k as f64;
        let g = model.metric(p);
        for c in 0..n {
            let mut w = 0.0;
            for (m, row) in coeffs.iter().enumerate() {
                let mf = (m + 1) as f64;
                w += row[c] * (mf * std::f64::consts::PI * s).sin() / mf;
            }
            p[c] += amp * w / g[(c, c)].sqrt();
        }
    }
    DiscretePath {
        samples,
        s_bar: base.s_bar,
    }
}

fn interior_norm(grad: &[DVector<f64>]) -> f64 {
    grad[1..grad.len() - 1]
        .iter()
        .map(|g| g.norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// Solve `(H + μ D) p = r` for a symmetric block-tridiagonal `H` by block
/// Cholesky after symmetric diagonal scaling `D`.
fn solve_blocks(
    diag: &[DMatrix<f64>],
    off: &[DMatrix<f64>],
    rhs: &[DVector<f64>],
    mu: f64,
) -> Option<Vec<DVector<f64>>> {
    let m = diag.len();
    let scale: Vec<DVector<f64>> = diag
        .iter()
        .map(|a| a.diagonal().map(|v| 1.0 / v.abs().max(1e-300).sqrt()))
        .collect();
    let scaled = |a: &DMatrix<f64>, l: &DVector<f64>, r: &DVector<f64>| {
        DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| l[i] * a[(i, j)] * r[j])
    };
    let mut chol = Vec::with_capacity(m);
    let mut b_hat = Vec::with_capacity(off.len());
    for k in 0..off.len() {
        b_hat.push(scaled(&off[k], &scale[k], &scale[k + 1]));
    }
    for k in 0..m {
        let n = diag[k].nrows();
        let mut a = scaled(&diag[k], &scale[k], &scale[k]) + DMatrix::identity(n, n) * mu;
        if k > 0 {
            let prev: &nalgebra::Cholesky<f64, nalgebra::Dyn> = &chol[k - 1];
            let b: &DMatrix<f64> = &b_hat[k - 1];
            a -= b.transpose() * prev.solve(b);
        }
        chol.push(a.cholesky()?);
    }
    let mut w: Vec<DVector<f64>> = Vec::with_capacity(m);
    for k in 0..m {
        let mut v = rhs[k].component_mul(&scale[k]);
        if k > 0 {
            v -= b_hat[k - 1].transpose() * chol[k - 1].solve(&w[k - 1]);
        }
        w.push(v);
    }
    let mut p = vec![DVector::zeros(0); m];
    for k in (0..m).rev() {
        let mut v = w[k].clone();
        if k + 1 < m {
            v -= &b_hat[k] * &p[k + 1];
        }
        p[k] = chol[k].solve(&v);
    }
    Some(p.into_iter().zip(&scale).map(|(v, s)| v.component_mul(s)).collect())
}

/// Damped Newton iteration with Armijo backtracking and Levenberg
/// regularization. Returns `(samples, J, |grad|)` on convergence.
fn newton(
    model: &ManifoldModel,
    phi: &PhiSpec,
    mut samples: Vec<Vec<f64>>,
    ds: f64,
    opts: &MinimizeOptions,
) -> Option<(Vec<Vec<f64>>, f64, f64)> {
    let eval = |s: &[Vec<f64>]| -> f64 {
        if s.iter().all(|p| model.contains(p)) {
            j_unchecked(model, phi, s, ds)
        } else {
            f64::INFINITY
        }
    };
    let kk = samples.len() - 1;
    let mut j = eval(&samples);
    if !j.is_finite() {
        return None;
    }
    let mut grad = gradient_unchecked(model, phi, &samples, ds);
    let mut gnorm = interior_norm(&grad);
    let mut mu = 0.0_f64;
    for _ in 0..opts.max_iter {
        if gnorm <= opts.grad_tol {
            return Some((samples, j, gnorm));
        }
        let hess = hessian_unchecked(model, phi, &samples, ds);
        let rhs: Vec<DVector<f64>> = grad[1..kk].iter().map(|g| -g).collect();
        let mut accepted = false;
        while mu <= 1e12 {
            let Some(p) = solve_blocks(&hess.diag, &hess.off, &rhs, mu) else {
                mu = (mu * 10.0).max(1e-8);
                continue;
            };
            let slope: f64 = p.iter().zip(&rhs).map(|(a, b)| -a.dot(b)).sum();
            if !(slope < 0.0) {
                mu = (mu * 10.0).max(1e-8);
                continue;
            }
            let mut alpha = 1.0;
            for _ in 0..40 {
                let mut trial = samples.clone();
                for (i, d) in p.iter().enumerate() {
                    for (c, v) in trial[i + 1].iter_mut().enumerate() {
                        *v += alpha * d[c];
                    }
                }
                let jt = eval(&trial);
                let armijo = jt <= j + 1e-4 * alpha * slope;
                // near the optimum J stalls at roundoff; accept on gradient decrease
                let flat = jt.is_finite() && jt <= j + 1e-13 * j.abs().max(1.0);
                if armijo || flat {
                    let gt = gradient_unchecked(model, phi, &trial, ds);
                    let gn = interior_norm(&gt);
                    if armijo || gn < gnorm {
                        samples = trial;
                        j = jt;
                        grad = gt;
                        gnorm = gn;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if accepted {
                mu *= 0.1;
                if mu < 1e-10 {
                    mu = 0.0;
                }
                break;
            }
            mu = (mu * 10.0).max(1e-8);
        }
        if !accepted {
            break;
        }
    }
    (gnorm <= opts.grad_tol).then_some((samples, j, gnorm))
}

/// Richardson extrapolation `(4J_K − J_{K/2})/3` of the discrete minimum,
/// with the half-resolution problem seeded by the even samples of `sol`.
/// Removes the `O(Δs²)` bias of the discrete functional.
pub fn extrapolated_j(model: &ManifoldModel, phi: &PhiSpec, sol: &GeodesicSolution) -> Result<f64> {
    let k = sol.k();
    if k % 2 != 0 || k < 32 {
        return Err(LabError::Usage(format!("extrapolation needs an even K >= 32, got {k}")));
    }
    let coarse = DiscretePath::new(sol.path.samples.iter().step_by(2).cloned().collect(), sol.s_bar())?;
    let opts = MinimizeOptions {
        k: k / 2,
        multistart: 1,
        initial: Some(coarse),
        ..MinimizeOptions::default()
    };
    let half = minimize_j_with(model, phi, sol.path.x(), sol.path.y(), sol.s_bar(), &opts)?;
    Ok((4.0 * sol.j_value - half.j_value) / 3.0)
}

/// Polish a solution by shooting from its initial velocity on the same
/// sample grid.
pub fn refine_with_shooting(
    model: &ManifoldModel,
    phi: &PhiSpec,
    sol: &GeodesicSolution,
    tol: f64,
) -> Result<GeodesicSolution> {
    let speed_scale = sol.c_estimate.abs().max(1.0).sqrt();
    let opts = ShootOptions {
        tol,
        samples: sol.k(),
        max_step: 2.5e-3 / speed_scale,
        max_iter: 60,
    };
    shoot_bvp_with(
        model,
        phi,
        sol.path.x(),
        sol.path.y(),
        sol.s_bar(),
        &sol.velocities[0],
        opts,
    )
}

/// Riemannian distance via the direct minimizer with φ ≡ 0 on `[0, 1]`,
/// polished by shooting; the distance is the (constant) speed.
pub fn riemann_distance(model: &ManifoldModel, x: &[f64], y: &[f64]) -> Result<f64> {
    model.check(x)?;
    model.check(y)?;
    if x == y {
        return Ok(0.0);
    }
    let phi = PhiSpec::zero();
    let direct = minimize_j(model, &phi, x, y, 1.0, 64, 1)?;
    let length = direct.j_value.sqrt();
    let opts = ShootOptions {
        tol: 1e-11 * length.max(1.0),
        samples: 64,
        max_step: 2.5e-3 / length.max(1.0),
        max_iter: 60,
    };
    let sol = shoot_bvp_with(model, &phi, x, y, 1.0, &direct.velocities[0], opts)?;
    if !sol.converged {
        return Err(LabError::NonConvergence(format!(
            "distance shooting stalled with residual {:e}",
            sol.residual
        )));
    }
    if sol.c_drift > 1e-6 * sol.c_estimate.max(1.0) {
        return Err(LabError::NonConvergence(format!(
            "distance geodesic is not unit speed up to scale (drift {:e})",
            sol.c_drift
        )));
    }
    Ok(sol.c_estimate.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, EuclideanPhi, ModelSpec};

    fn flat(value: f64) -> ManifoldModel {
        build_model(&ModelSpec::Euclidean {
            n: 2,
            phi: EuclideanPhi::Constant { value },
        })
        .unwrap()
    }

    #[test]
    fn flat_minimizer_is_straight() {
        let m = flat(0.25);
        let sol = minimize_j(&m, &PhiSpec::Constant(0.25), &[0.0, 0.0], &[3.0, 4.0], 2.0, 32, 3).unwrap();
        assert!((sol.j_value - (12.5 + 1.0)).abs() < 1e-10);
        for (k, p) in sol.path.samples.iter().enumerate() {
            let t = k as f64 / 32.0;
            assert!((p[0] - 3.0 * t).abs() < 1e-9 && (p[1] - 4.0 * t).abs() < 1e-9);
        }
    }

    #[test]
    fn coincident_endpoints_give_constant_path() {
        let m = flat(0.5);
        let sol = minimize_j(&m, &PhiSpec::Constant(0.5), &[1.0, 1.0], &[1.0, 1.0], 3.0, 16, 1).unwrap();
        assert_eq!(sol.j_value, 3.0);
        assert_eq!(sol.c_estimate, -1.0);
    }

    #[test]
    fn small_k_is_rejected() {
        let m = flat(0.5);
        assert!(minimize_j(&m, &PhiSpec::zero(), &[0.0, 0.0], &[1.0, 0.0], 1.0, 8, 1).is_err());
    }

    #[test]
    fn cigar_radial_distance() {
        let m = build_model(&ModelSpec::Cigar).unwrap();
        let d = riemann_distance(&m, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((d - 2.0 * 1f64.asinh()).abs() < 1e-7, "{d}");
    }

    #[test]
    fn block_solver_matches_dense() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]);
        let diag = vec![a.clone(), a.clone() * 2.0, a.clone()];
        let off = vec![b.clone(), b.clone()];
        let rhs = vec![DVector::from_vec(vec![1.0, 2.0]); 3];
        let p = solve_blocks(&diag, &off, &rhs, 0.0).unwrap();
        let mut dense = DMatrix::zeros(6, 6);
        for k in 0..3 {
            dense.view_mut((2 * k, 2 * k), (2, 2)).copy_from(&diag[k]);
        }
        for k in 0..2 {
            dense.view_mut((2 * k, 2 * k + 2), (2, 2)).copy_from(&off[k]);
            dense.view_mut((2 * k + 2, 2 * k), (2, 2)).copy_from(&off[k].transpose());
        }
        let r = DVector::from_vec(vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let x = dense.lu().solve(&r).unwrap();
        for k in 0..3 {
            for c in 0..2 {
                assert!((p[k][c] - x[2 * k + c]).abs() < 1e-12);
            }
        }
    }
}
