//! The discrete functional
//!
//! ```text
//! J = Σ_k [ δ_kᵀ g(m_k) δ_k / Δs + (φ(γ_k) + φ(γ_{k+1})) Δs ],
//! δ_k = γ_{k+1} − γ_k,  m_k = (γ_k + γ_{k+1})/2,
//! ```
//!
//! with its exact gradient and block-tridiagonal Hessian.

use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, Result};
use crate::models::ManifoldModel;
use crate::phi::PhiSpec;

use super::{DiscretePath, VariationField};

fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(u, v)| 0.5 * (u + v)).collect()
}

fn chord(a: &[f64], b: &[f64]) -> DVector<f64> {
    DVector::from_iterator(a.len(), a.iter().zip(b).map(|(u, v)| v - u))
}

fn check_path(model: &ManifoldModel, path: &DiscretePath) -> Result<()> {
    if path.dim() != model.dim() {
        return Err(LabError::Usage(format!(
            "path dimension {} does not match model dimension {}",
            path.dim(),
            model.dim()
        )));
    }
    for p in &path.samples {
        model.check(p)?;
    }
    Ok(())
}

/// Discrete `J` of a sampled path.
pub fn j_functional(model: &ManifoldModel, phi: &PhiSpec, path: &DiscretePath) -> Result<f64> {
    check_path(model, path)?;
    Ok(j_unchecked(model, phi, &path.samples, path.ds()))
}

pub(crate) fn j_unchecked(model: &ManifoldModel, phi: &PhiSpec, samples: &[Vec<f64>], ds: f64) -> f64 {
    let mut kinetic = 0.0;
    let mut potential = 0.0;
    let phis: Vec<f64> = samples.iter().map(|p| phi.value(model, p)).collect();
    for k in 0..samples.len() - 1 {
        let d = chord(&samples[k], &samples[k + 1]);
        let g = model.metric(&midpoint(&samples[k], &samples[k + 1]));
        kinetic += d.dot(&(&g * &d));
        potential += phis[k] + phis[k + 1];
    }
    kinetic / ds + potential * ds
}

/// Gradient of the discrete `J` with respect to every sample (endpoints
/// included).
pub fn j_gradient(model: &ManifoldModel, phi: &PhiSpec, path: &DiscretePath) -> Result<Vec<DVector<f64>>> {
    check_path(model, path)?;
    Ok(gradient_unchecked(model, phi, &path.samples, path.ds()))
}

pub(crate) fn gradient_unchecked(
    model: &ManifoldModel,
    phi: &PhiSpec,
    samples: &[Vec<f64>],
    ds: f64,
) -> Vec<DVector<f64>> {
    let n = samples[0].len();
    let kk = samples.len() - 1;
    let mut grad = vec![DVector::zeros(n); kk + 1];
    for k in 0..kk {
        let d = chord(&samples[k], &samples[k + 1]);
        let (g, dg) = model.metric_d1(&midpoint(&samples[k], &samples[k + 1]));
        let gd = &g * &d;
        let q = dg.contract_last(d.as_slice(), d.as_slice());
        grad[k] += (&gd * -2.0 + &q * 0.5) / ds;
        grad[k + 1] += (&gd * 2.0 + &q * 0.5) / ds;
    }
    for (k, gk) in grad.iter_mut().enumerate() {
        let w = if k == 0 || k == kk { 1.0 } else { 2.0 };
        let (_, dphi) = phi.grad(model, &samples[k]);
        *gk += dphi * (w * ds);
    }
    grad
}

/// Block-tridiagonal Hessian with respect to the interior samples:
/// `diag[k]` couples `γ_{k+1}` with itself and `off[k]` couples `γ_{k+1}`
/// with `γ_{k+2}`.
pub(crate) struct BlockHessian {
    pub diag: Vec<DMatrix<f64>>,
    pub off: Vec<DMatrix<f64>>,
}

pub(crate) fn hessian_unchecked(
    model: &ManifoldModel,
    phi: &PhiSpec,
    samples: &[Vec<f64>],
    ds: f64,
) -> BlockHessian {
    let n = samples[0].len();
    let kk = samples.len() - 1;
    let m = kk - 1;
    let mut diag = vec![DMatrix::zeros(n, n); m];
    let mut off = vec![DMatrix::zeros(n, n); m.saturating_sub(1)];
    for k in 0..kk {
        let d = chord(&samples[k], &samples[k + 1]);
        let jet = model.metric_jet(&midpoint(&samples[k], &samples[k + 1]));
        let g = &jet.g;
        // c[(i, j)] = (∂_j g · δ)_i
        let c = DMatrix::from_fn(n, n, |i, j| (0..n).map(|l| jet.dg[(j, i, l)] * d[l]).sum::<f64>());
        let mm = DMatrix::from_fn(n, n, |i, j| {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += d[a] * jet.d2g[(i, j, a, b)] * d[b];
                }
            }
            s
        });
        let ct = c.transpose();
        let h_aa = (g * 2.0 - &c - &ct + &mm * 0.25) / ds;
        let h_bb = (g * 2.0 + &c + &ct + &mm * 0.25) / ds;
        let h_ab = (g * -2.0 - &c + &ct + &mm * 0.25) / ds;
        // sample k is interior index k-1, sample k+1 is interior index k
        if k >= 1 {
            diag[k - 1] += h_aa;
        }
        if k + 1 <= m {
            diag[k] += h_bb;
        }
        if k >= 1 && k + 1 <= m {
            off[k - 1] += h_ab;
        }
    }
    for (i, block) in diag.iter_mut().enumerate() {
        let jet = phi.jet(model, &samples[i + 1]);
        *block += jet.hess * (2.0 * ds);
    }
    BlockHessian { diag, off }
}

/// Decomposition of the first variation `½ dJ(γ_u)/du` at `u = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstVariation {
    /// Discrete `∫⟨U, −∇_S S + ∇φ⟩ ds` (interior samples).
    pub interior: f64,
    /// Discrete `⟨U, S⟩|₀^{s̄}` (end samples).
    pub boundary: f64,
    pub total: f64,
}

/// Exact directional derivative `½ DJ·U` of the discrete functional.
pub fn first_variation(
    model: &ManifoldModel,
    phi: &PhiSpec,
    path: &DiscretePath,
    u: &VariationField,
) -> Result<FirstVariation> {
    if u.len() != path.samples.len() {
        return Err(LabError::Usage(format!(
            "variation field has {} vectors, path has {} samples",
            u.len(),
            path.samples.len()
        )));
    }
    let grad = j_gradient(model, phi, path)?;
    let kk = path.k();
    let mut interior = 0.0;
    for k in 1..kk {
        interior += 0.5 * grad[k].dot(&u.vectors[k]);
    }
    let boundary = 0.5 * (grad[0].dot(&u.vectors[0]) + grad[kk].dot(&u.vectors[kk]));
    Ok(FirstVariation {
        interior,
        boundary,
        total: interior + boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, EuclideanPhi, ModelSpec};

    fn flat(phi: EuclideanPhi) -> ManifoldModel {
        build_model(&ModelSpec::Euclidean { n: 2, phi }).unwrap()
    }

    #[test]
    fn straight_line_energy() {
        let m = flat(EuclideanPhi::Constant { value: 0.25 });
        let p = DiscretePath::straight(&[0.0, 0.0], &[3.0, 4.0], 1.0, 10).unwrap();
        assert!((j_functional(&m, &PhiSpec::zero(), &p).unwrap() - 25.0).abs() < 1e-12);
        assert!((j_functional(&m, &PhiSpec::Constant(0.25), &p).unwrap() - 25.5).abs() < 1e-12);
    }

    #[test]
    fn hessian_matches_gradient_differences_on_cigar() {
        let m = build_model(&ModelSpec::Cigar).unwrap();
        let phi = PhiSpec::CTimesR(0.25);
        let path = DiscretePath::from_fn(1.5, 6, |s| vec![s, 0.3 * (2.0 * s).sin()]).unwrap();
        let ds = path.ds();
        let h = hessian_unchecked(&m, &phi, &path.samples, ds);
        let eps = 1e-6;
        for k in 1..path.k() {
            for i in 0..2 {
                let mut p = path.samples.clone();
                let mut q = path.samples.clone();
                p[k][i] += eps;
                q[k][i] -= eps;
                let gp = gradient_unchecked(&m, &phi, &p, ds);
                let gq = gradient_unchecked(&m, &phi, &q, ds);
                let col: Vec<DVector<f64>> = gp.iter().zip(&gq).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
                for j in 0..2 {
                    assert!((col[k][j] - h.diag[k - 1][(j, i)]).abs() < 1e-5);
                    if k + 1 < path.k() {
                        assert!((col[k + 1][j] - h.off[k - 1][(i, j)]).abs() < 1e-5);
                    }
                }
            }
        }
    }
}
