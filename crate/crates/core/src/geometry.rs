//! Pointwise differential geometry from metric jets: Christoffel symbols,
//! curvature, covariant Hessians, weighted Laplacians, orthonormal frames and
//! parallel transport along sampled paths.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::geodesic::DiscretePath;
use crate::models::{JetProvider, ManifoldModel};
use crate::phi::PhiSpec;
use crate::tensor::{g_dot, ScalarJet, Tensor3, Tensor4};

/// Point in the (single, global) chart of a model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChartPoint {
    pub coords: Vec<f64>,
    pub chart_id: usize,
}

impl ChartPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 || coords.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Usage(format!(
                "chart point needs n >= 2 finite coordinates, got {coords:?}"
            )));
        }
        Ok(Self {
            coords,
            chart_id: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Metric with first and second coordinate partials at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricJet {
    pub g: DMatrix<f64>,
    pub dg: Tensor3,
    pub d2g: Tensor4,
}

/// Inverse metric, failing if `g` is not positive definite.
pub fn inverse_metric(g: &DMatrix<f64>, x: &[f64]) -> Result<DMatrix<f64>> {
    g.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| LabError::Geometry { coords: x.to_vec() })
}

/// `Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij)`.
pub fn christoffel(g_inv: &DMatrix<f64>, dg: &Tensor3) -> Tensor3 {
    let n = g_inv.nrows();
    // lowered symbols Γ_{l,ij}
    let mut low = Tensor3::zeros(n);
    for l in 0..n {
        for i in 0..n {
            for j in i..n {
                let v = 0.5 * (dg[(i, j, l)] + dg[(j, i, l)] - dg[(l, i, j)]);
                low[(l, i, j)] = v;
                low[(l, j, i)] = v;
            }
        }
    }
    let mut gamma = Tensor3::zeros(n);
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += g_inv[(k, l)] * low[(l, i, j)];
                }
                gamma[(k, i, j)] = s;
                gamma[(k, j, i)] = s;
            }
        }
    }
    gamma
}

/// Metric and Christoffel symbols at `x`.
pub fn connection_at(model: &ManifoldModel, x: &[f64]) -> Result<(DMatrix<f64>, Tensor3)> {
    model.check(x)?;
    let (g, dg) = model.metric_d1(x);
    let g_inv = inverse_metric(&g, x)?;
    Ok((g, christoffel(&g_inv, &dg)))
}

/// `∇∇u_ij = ∂_ij u − Γ^k_ij ∂_k u`.
pub fn covariant_hessian(jet: &ScalarJet, gamma: &Tensor3) -> DMatrix<f64> {
    let n = jet.grad.len();
    DMatrix::from_fn(n, n, |i, j| {
        let mut s = jet.hess[(i, j)];
        for k in 0..n {
            s -= gamma[(k, i, j)] * jet.grad[k];
        }
        s
    })
}

/// Full curvature and potential data at one point.
#[derive(Clone, Debug)]
pub struct CurvaturePack {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub christoffel: Tensor3,
    pub riemann: Tensor4,
    pub ricci: DMatrix<f64>,
    /// Trace of `ricci`.
    pub scalar: f64,
    /// Scalar curvature supplied by the model.
    pub scalar_model: f64,
    pub grad_f: DVector<f64>,
    pub hess_f: DMatrix<f64>,
    pub ricci_f: DMatrix<f64>,
    pub grad_phi: DVector<f64>,
    pub hess_phi: DMatrix<f64>,
    pub lap_phi: f64,
    pub f_lap_phi: f64,
    pub grad_r: DVector<f64>,
    pub ricci_norm2: f64,
}

/// Curvature of `model` and derivatives of `f` and `phi` at `x`.
pub fn curvature_pack(model: &ManifoldModel, phi: &PhiSpec, x: &[f64]) -> Result<CurvaturePack> {
    model.check(x)?;
    let n = model.dim();
    let jet = model.metric_jet(x);
    let g = jet.g;
    let g_inv = inverse_metric(&g, x)?;
    let gamma = christoffel(&g_inv, &jet.dg);
    // ∂_m Γ^k_ij = g^{kl}(½(∂_m∂_i g_jl + ∂_m∂_j g_il − ∂_m∂_l g_ij) − ∂_m g_la Γ^a_ij)
    let mut dgamma = Tensor4::zeros(n); // (m, k, i, j)
    let mut tmp = vec![0.0; n];
    for m in 0..n {
        for i in 0..n {
            for j in i..n {
                for (l, t) in tmp.iter_mut().enumerate() {
                    let mut v = 0.5
                        * (jet.d2g[(m, i, j, l)] + jet.d2g[(m, j, i, l)] - jet.d2g[(m, l, i, j)]);
                    for a in 0..n {
                        v -= jet.dg[(m, l, a)] * gamma[(a, i, j)];
                    }
                    *t = v;
                }
                for k in 0..n {
                    let s: f64 = (0..n).map(|l| g_inv[(k, l)] * tmp[l]).sum();
                    dgamma[(m, k, i, j)] = s;
                    dgamma[(m, k, j, i)] = s;
                }
            }
        }
    }
    // R^l_ijk = ∂_iΓ^l_jk − ∂_jΓ^l_ik + Γ^l_im Γ^m_jk − Γ^l_jm Γ^m_ik
    let mut rup = Tensor4::zeros(n); // (l, i, j, k)
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut v = dgamma[(i, l, j, k)] - dgamma[(j, l, i, k)];
                    for m in 0..n {
                        v += gamma[(l, i, m)] * gamma[(m, j, k)] - gamma[(l, j, m)] * gamma[(m, i, k)];
                    }
                    rup[(l, i, j, k)] = v;
                }
            }
        }
    }
    let mut riemann = Tensor4::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    riemann[(i, j, k, l)] = (0..n).map(|m| rup[(m, i, j, k)] * g[(m, l)]).sum();
                }
            }
        }
    }
    let ricci = DMatrix::from_fn(n, n, |j, k| (0..n).map(|i| rup[(i, i, j, k)]).sum::<f64>());
    let ricci = (&ricci + ricci.transpose()) * 0.5;
    let scalar = (&g_inv * &ricci).trace();
    let ricci_norm2 = {
        let m = &g_inv * &ricci;
        (&m * &m).trace()
    };
    let f_jet = model.f_jet(x);
    let hess_f = covariant_hessian(&f_jet, &gamma);
    let grad_f = &g_inv * &f_jet.grad;
    let phi_jet = phi.jet(model, x);
    let hess_phi = covariant_hessian(&phi_jet, &gamma);
    let grad_phi = &g_inv * &phi_jet.grad;
    let lap_phi = (&g_inv * &hess_phi).trace();
    let f_lap_phi = lap_phi - f_jet.grad.dot(&grad_phi);
    let (scalar_model, dr) = model.r_grad(x);
    Ok(CurvaturePack {
        ricci_f: &ricci + &hess_f,
        grad_r: &g_inv * dr,
        g,
        g_inv,
        christoffel: gamma,
        riemann,
        ricci,
        scalar,
        scalar_model,
        grad_f,
        hess_f,
        grad_phi,
        hess_phi,
        lap_phi,
        f_lap_phi,
        ricci_norm2,
    })
}

impl CurvaturePack {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    /// `⟨Rm(S,U)U,S⟩`.
    pub fn sectional_numerator(&self, s: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let a = s[i] * u[j];
                if a == 0.0 {
                    continue;
                }
                for k in 0..n {
                    for l in 0..n {
                        acc += self.riemann[(i, j, k, l)] * a * u[k] * s[l];
                    }
                }
            }
        }
        acc
    }

    pub fn norm(&self, v: &DVector<f64>) -> f64 {
        g_dot(&self.g, v, v).sqrt()
    }

    /// Largest violation of the algebraic symmetries of `Rm`, relative to
    /// `max(1, max|Rm|)`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.dim();
        let rm = &self.riemann;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = rm[(i, j, k, l)];
                        worst = worst
                            .max((v + rm[(j, i, k, l)]).abs())
                            .max((v + rm[(i, j, l, k)]).abs())
                            .max((v - rm[(k, l, i, j)]).abs())
                            .max((v + rm[(j, k, i, l)] + rm[(k, i, j, l)]).abs());
                    }
                }
            }
        }
        worst / rm.max_abs().max(1.0)
    }

    /// |Rc − (R/2) g| (meaningful in dimension 2 only).
    pub fn two_dimensional_defect(&self) -> f64 {
        let d = &self.ricci - &self.g * (0.5 * self.scalar);
        d.amax()
    }
}

/// Symmetry tolerance for curvature packs of a model.
pub fn curvature_tolerance(model: &ManifoldModel) -> f64 {
    match model.jet_provider() {
        JetProvider::Analytic => 1e-8,
        JetProvider::FiniteDifference => 1e-5,
    }
}

/// g-orthonormal vectors at one point.
#[derive(Clone, Debug)]
pub struct Frame {
    pub basis: Vec<DVector<f64>>,
}

impl Frame {
    /// Gram–Schmidt of the chart basis.
    pub fn from_chart(g: &DMatrix<f64>) -> Self {
        let n = g.nrows();
        let vecs: Vec<DVector<f64>> = (0..n)
            .map(|i| {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                e
            })
            .collect();
        Self::gram_schmidt(g, &vecs)
    }

    /// Modified Gram–Schmidt in the g-inner product; dependent vectors are
    /// dropped.
    pub fn gram_schmidt(g: &DMatrix<f64>, vecs: &[DVector<f64>]) -> Self {
        let mut basis: Vec<DVector<f64>> = Vec::new();
        for v in vecs {
            let mut w = v.clone();
            for _ in 0..2 {
                for b in &basis {
                    w -= b * g_dot(g, b, &w);
                }
            }
            let nrm = g_dot(g, &w, &w).sqrt();
            if nrm > 1e-12 * (1.0 + g_dot(g, v, v).sqrt()) {
                basis.push(w / nrm);
            }
        }
        Self { basis }
    }

    /// Largest entry of `|Gram − I|`.
    pub fn orthonormality_defect(&self, g: &DMatrix<f64>) -> f64 {
        gram_defect(g, &self.basis)
    }
}

/// Largest entry of `|⟨v_a, v_b⟩_g − δ_ab|`.
pub fn gram_defect(g: &DMatrix<f64>, vecs: &[DVector<f64>]) -> f64 {
    let mut worst = 0.0_f64;
    for (a, u) in vecs.iter().enumerate() {
        for (b, v) in vecs.iter().enumerate() {
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((g_dot(g, u, v) - target).abs());
        }
    }
    worst
}

/// Cubic Hermite point and velocity at fraction `t` of a segment from `a`
/// (velocity `va`) to `b` (velocity `vb`) of parameter length `h`.
pub fn hermite(a: &[f64], va: &[f64], b: &[f64], vb: &[f64], h: f64, t: f64) -> (Vec<f64>, Vec<f64>) {
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let d00 = 6.0 * t2 - 6.0 * t;
    let d10 = 3.0 * t2 - 4.0 * t + 1.0;
    let d11 = 3.0 * t2 - 2.0 * t;
    let n = a.len();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    for i in 0..n {
        p[i] = h00 * a[i] + h10 * h * va[i] + h01 * b[i] + h11 * h * vb[i];
        v[i] = (d00 * a[i] - d00 * b[i]) / h + d10 * va[i] + d11 * vb[i];
    }
    (p, v)
}

/// One RK4 step of `dV/ds = −Γ(γ′, V)` along the Hermite segment from `a`
/// to `b`; `h` may be negative to transport backwards.
pub fn transport_segment(
    model: &ManifoldModel,
    a: &[f64],
    va: &[f64],
    b: &[f64],
    vb: &[f64],
    h: f64,
    vecs: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let rate = |t: f64, vs: &[DVector<f64>]| -> Result<Vec<DVector<f64>>> {
        let (p, v) = hermite(a, va, b, vb, h, t);
        let (_, gamma) = connection_at(model, &p)?;
        Ok(vs.iter().map(|w| -gamma.contract_last(&v, w.as_slice())).collect())
    };
    let axpy = |base: &[DVector<f64>], k: &[DVector<f64>], c: f64| -> Vec<DVector<f64>> {
        base.iter().zip(k).map(|(u, d)| u + d * c).collect()
    };
    let k1 = rate(0.0, vecs)?;
    let k2 = rate(0.5, &axpy(vecs, &k1, 0.5 * h))?;
    let k3 = rate(0.5, &axpy(vecs, &k2, 0.5 * h))?;
    let k4 = rate(1.0, &axpy(vecs, &k3, h))?;
    let out: Vec<DVector<f64>> = (0..vecs.len())
        .map(|i| &vecs[i] + (&k1[i] + &k2[i] * 2.0 + &k3[i] * 2.0 + &k4[i]) * (h / 6.0))
        .collect();
    if out.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
        return Err(LabError::Integration("non-finite transported vector".into()));
    }
    Ok(out)
}

/// Transport `v0` along a path with given velocities, one RK4 step per
/// sample interval. Returns the transported vectors at every sample.
pub fn parallel_transport_with_velocities(
    model: &ManifoldModel,
    samples: &[Vec<f64>],
    velocities: &[Vec<f64>],
    ds: f64,
    v0: &[DVector<f64>],
) -> Result<Vec<Vec<DVector<f64>>>> {
    let mut out = Vec::with_capacity(samples.len());
    out.push(v0.to_vec());
    for k in 0..samples.len() - 1 {
        let next = transport_segment(
            model,
            &samples[k],
            &velocities[k],
            &samples[k + 1],
            &velocities[k + 1],
            ds,
            &out[k],
        )?;
        out.push(next);
    }
    Ok(out)
}

/// Parallel transport along a sampled path (velocities by fourth-order
/// differences).
pub fn parallel_transport(
    model: &ManifoldModel,
    path: &DiscretePath,
    v0: &[DVector<f64>],
) -> Result<Vec<Vec<DVector<f64>>>> {
    let vel = path.velocities();
    parallel_transport_with_velocities(model, &path.samples, &vel, path.ds(), v0)
}

/// Soliton identity residuals at one point.
#[derive(Clone, Debug, Serialize)]
pub struct PointResiduals {
    pub coords: Vec<f64>,
    /// |Rc + ∇∇f|_g
    pub ricci_f: f64,
    /// |R + |∇f|² − 1|
    pub hamiltonian: f64,
    /// |−Δ_f R − 2|Rc|²|
    pub weighted_laplacian: f64,
    /// ||∇R| − 2|Rc(∇f)||
    pub grad_r: f64,
    /// |R_trace − R_model|
    pub scalar_consistency: f64,
    pub r_positive: bool,
    pub grad_f_le_one: bool,
}

/// Maxima over a grid of [`PointResiduals`].
#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub model: String,
    pub points: usize,
    pub max_ricci_f: f64,
    pub max_hamiltonian: f64,
    pub max_weighted_laplacian: f64,
    pub max_grad_r: f64,
    pub max_scalar_consistency: f64,
    pub max_two_dimensional: Option<f64>,
    pub max_symmetry_defect: f64,
    pub r_nonpositive: usize,
    pub grad_f_exceeds_one: usize,
    #[serde(skip)]
    pub per_point: Vec<PointResiduals>,
}

impl IdentityReport {
    /// Largest of the four identity residuals.
    pub fn max_residual(&self) -> f64 {
        self.max_ricci_f
            .max(self.max_hamiltonian)
            .max(self.max_weighted_laplacian)
            .max(self.max_grad_r)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual() <= tol
            && self.max_scalar_consistency <= tol
            && self.r_nonpositive == 0
            && self.grad_f_exceeds_one == 0
    }
}

/// Identity tolerance tier of a model.
pub fn identity_tolerance(model: &ManifoldModel) -> f64 {
    if model.is_closed_form() {
        1e-7
    } else if model.bryant().is_some() {
        1e-4
    } else {
        1e-5
    }
}

/// `|Rc|_g` at `x`. On the cigar and cigar×ℝᵏ the Ricci tensor is `(R/2)g`
/// on the cigar factor, so `|Rc| = R/√2` with the closed-form `R`; the chart
/// formula loses relative precision there once `|x| ≳ 10⁵`. Other models use
/// [`curvature_pack`].
pub fn ricci_norm(model: &ManifoldModel, x: &[f64]) -> Result<f64> {
    if model.is_cigar_family() {
        model.check(x)?;
        return Ok(model.r_value(x) / std::f64::consts::SQRT_2);
    }
    let pack = curvature_pack(model, &PhiSpec::zero(), x)?;
    Ok(pack.ricci_norm2.max(0.0).sqrt())
}

/// Tolerance of the gradient-flow check on a model.
pub fn gradient_flow_tolerance(model: &ManifoldModel) -> f64 {
    if model.is_closed_form() {
        1e-6
    } else {
        1e-4
    }
}

fn g_norm_cov(g_inv: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    g_dot(g_inv, w, w).max(0.0).sqrt()
}

/// Residuals at a single point.
pub fn point_residuals(model: &ManifoldModel, x: &[f64]) -> Result<PointResiduals> {
    let pack = curvature_pack(model, &PhiSpec::zero(), x)?;
    let g_inv = &pack.g_inv;
    let rf = g_inv * &pack.ricci_f;
    let ricci_f = (&rf * &rf).trace().abs().sqrt();
    let f_jet = model.f_jet(x);
    let grad_f2 = f_jet.grad.dot(&pack.grad_f);
    let r = pack.scalar_model;
    let r_jet = model.r_jet(x);
    let hess_r = covariant_hessian(&r_jet, &pack.christoffel);
    let lap_r = (g_inv * &hess_r).trace();
    let f_lap_r = lap_r - f_jet.grad.dot(&pack.grad_r);
    let grad_r_norm = g_norm_cov(g_inv, &r_jet.grad);
    let rc_gradf = &pack.ricci * &pack.grad_f;
    let rc_gradf_norm = g_norm_cov(g_inv, &rc_gradf);
    Ok(PointResiduals {
        coords: x.to_vec(),
        ricci_f,
        hamiltonian: (r + grad_f2 - 1.0).abs(),
        weighted_laplacian: (-f_lap_r - 2.0 * pack.ricci_norm2).abs(),
        grad_r: (grad_r_norm - 2.0 * rc_gradf_norm).abs(),
        scalar_consistency: (pack.scalar - r).abs(),
        r_positive: r > 0.0,
        grad_f_le_one: grad_f2 <= 1.0 + 1e-12,
    })
}

/// Identity residuals on a grid without requiring a soliton model.
pub fn identity_residuals(model: &ManifoldModel, grid: &[Vec<f64>]) -> Result<IdentityReport> {
    if grid.is_empty() {
        return Err(LabError::Usage("identity grid is empty".into()));
    }
    let mut report = IdentityReport {
        model: model.name().to_string(),
        points: grid.len(),
        max_ricci_f: 0.0,
        max_hamiltonian: 0.0,
        max_weighted_laplacian: 0.0,
        max_grad_r: 0.0,
        max_scalar_consistency: 0.0,
        max_two_dimensional: (model.dim() == 2).then_some(0.0),
        max_symmetry_defect: 0.0,
        r_nonpositive: 0,
        grad_f_exceeds_one: 0,
        per_point: Vec::with_capacity(grid.len()),
    };
    for x in grid {
        let p = point_residuals(model, x)?;
        let pack = curvature_pack(model, &PhiSpec::zero(), x)?;
        report.max_symmetry_defect = report.max_symmetry_defect.max(pack.symmetry_defect());
        if let Some(m) = report.max_two_dimensional.as_mut() {
            *m = m.max(pack.two_dimensional_defect());
        }
        report.max_ricci_f = report.max_ricci_f.max(p.ricci_f);
        report.max_hamiltonian = report.max_hamiltonian.max(p.hamiltonian);
        report.max_weighted_laplacian = report.max_weighted_laplacian.max(p.weighted_laplacian);
        report.max_grad_r = report.max_grad_r.max(p.grad_r);
        report.max_scalar_consistency = report.max_scalar_consistency.max(p.scalar_consistency);
        report.r_nonpositive += usize::from(!p.r_positive);
        report.grad_f_exceeds_one += usize::from(!p.grad_f_le_one);
        report.per_point.push(p);
    }
    Ok(report)
}

/// Identity residuals on a grid; the model must be a steady soliton.
pub fn check_soliton_identities(model: &ManifoldModel, grid: &[Vec<f64>]) -> Result<IdentityReport> {
    if !model.is_soliton() {
        return Err(LabError::Usage(format!(
            "model `{}` is not a steady soliton",
            model.name()
        )));
    }
    identity_residuals(model, grid)
}

/// Deterministic low-discrepancy grid of `count` points in `[−half, half]^n`.
pub fn halton_grid(n: usize, count: usize, half: f64) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    let radical_inverse = |mut i: u64, b: u64| {
        let (mut f, mut r) = (1.0, 0.0);
        while i > 0 {
            f /= b as f64;
            r += f * (i % b) as f64;
            i /= b;
        }
        r
    };
    (1..=count as u64)
        .map(|i| {
            (0..n)
                .map(|d| half * (2.0 * radical_inverse(i, PRIMES[d]) - 1.0))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, EuclideanPhi, ModelSpec};

    fn cigar() -> ManifoldModel {
        build_model(&ModelSpec::Cigar).unwrap()
    }

    #[test]
    fn flat_space_has_no_curvature() {
        let m = build_model(&ModelSpec::Euclidean {
            n: 2,
            phi: EuclideanPhi::Constant { value: 0.25 },
        })
        .unwrap();
        let p = curvature_pack(&m, &PhiSpec::Constant(0.25), &[0.3, -2.0]).unwrap();
        assert_eq!(p.riemann.max_abs(), 0.0);
        assert_eq!(p.scalar, 0.0);
    }

    #[test]
    fn cigar_origin_values() {
        let p = curvature_pack(&cigar(), &PhiSpec::zero(), &[0.0, 0.0]).unwrap();
        assert!((p.scalar - 1.0).abs() < 1e-12);
        assert!((p.ricci_norm2 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cigar_unit_radius_values() {
        let m = cigar();
        let p = curvature_pack(&m, &PhiSpec::zero(), &[1.0, 0.0]).unwrap();
        assert!((p.scalar - 0.5).abs() < 1e-12);
        let gf2 = m.f_jet(&[1.0, 0.0]).grad.dot(&p.grad_f);
        assert!((gf2 - 0.5).abs() < 1e-12);
        assert!((p.ricci_norm2 - 0.125).abs() < 1e-12);
        assert!(p.two_dimensional_defect() < 1e-12);
        assert!(p.symmetry_defect() < 1e-12);
    }

    #[test]
    fn christoffel_symbols_of_polar_like_metric() {
        // g = diag(1, x²) at x = 2: Γ^0_11 = −x, Γ^1_01 = 1/x.
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let mut dg = Tensor3::zeros(2);
        dg[(0, 1, 1)] = 4.0;
        let gamma = christoffel(&g.clone().try_inverse().unwrap(), &dg);
        assert!((gamma[(0, 1, 1)] + 2.0).abs() < 1e-15);
        assert!((gamma[(1, 0, 1)] - 0.5).abs() < 1e-15);
        assert!((gamma[(1, 1, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_soliton_models_are_refused() {
        let m = build_model(&ModelSpec::Euclidean {
            n: 2,
            phi: EuclideanPhi::HalfOnePlusNormSq,
        })
        .unwrap();
        let grid = halton_grid(2, 5, 1.0);
        assert!(matches!(
            check_soliton_identities(&m, &grid),
            Err(LabError::Usage(_))
        ));
        let r = identity_residuals(&m, &grid).unwrap();
        assert_eq!(r.max_hamiltonian, 1.0);
        assert_eq!(r.r_nonpositive, 5);
    }

    #[test]
    fn gram_schmidt_is_orthonormal() {
        let g = cigar().metric(&[0.7, 1.1]);
        let f = Frame::from_chart(&g);
        assert_eq!(f.basis.len(), 2);
        assert!(f.orthonormality_defect(&g) < 1e-14);
    }

    #[test]
    fn halton_grid_stays_in_box() {
        let grid = halton_grid(3, 400, 5.0);
        assert_eq!(grid.len(), 400);
        assert!(grid.iter().flatten().all(|v| v.abs() <= 5.0));
    }
}
