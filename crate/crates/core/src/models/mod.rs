//! Concrete manifolds: Euclidean spaces with synthetic potentials, the
//! normalized cigar soliton, cigar×ℝᵏ, and a numerically shot Bryant soliton.
//!
//! Every model lives in one global chart `x ∈ ℝⁿ`. The first `radial_dim`
//! coordinates carry a rotationally symmetric factor with metric
//!
//! ```text
//! g_ij = α(q) δ_ij + β(q) x_i x_j,   q = |x|²,
//! ```
//!
//! and the remaining coordinates are flat. The cigar is the conformal case
//! `α = 4/(1+q)`, `β = 0`; the Bryant soliton is the warped product
//! `dr² + w(r)² g_sphere` written in Cartesian form, where
//! `α = w²/r²` and `β = (1 − α)/r²`.

mod bryant;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use bryant::{bryant_solve, BryantModel, BryantProfile, OriginSeries};

use crate::error::{LabError, Result};
use crate::geometry::MetricJet;
use crate::phi::PhiSpec;
use crate::tensor::{ScalarJet, Tensor3, Tensor4};

/// Positive potential attached to a Euclidean test model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EuclideanPhi {
    /// φ ≡ c₀.
    Constant { value: f64 },
    /// φ = ½(1 + |x|²).
    HalfOnePlusNormSq,
}

/// Which manifold to build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Euclidean {
        n: usize,
        phi: EuclideanPhi,
    },
    Cigar,
    CigarProduct {
        k: usize,
    },
    Bryant {
        n: usize,
        #[serde(default = "default_shoot_param")]
        shoot_param: f64,
        /// Radial extent of the normalized profile.
        #[serde(default = "default_bryant_extent")]
        extent: f64,
    },
}

fn default_shoot_param() -> f64 {
    bryant::DEFAULT_SHOOT_PARAM
}

fn default_bryant_extent() -> f64 {
    60.0
}

impl ModelSpec {
    pub fn dimension(&self) -> usize {
        match self {
            ModelSpec::Euclidean { n, .. } | ModelSpec::Bryant { n, .. } => *n,
            ModelSpec::Cigar => 2,
            ModelSpec::CigarProduct { k } => 2 + k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dimension();
        if !(2..=6).contains(&n) {
            return Err(LabError::Spec(format!(
                "dimension {n} outside the supported range 2..=6"
            )));
        }
        match self {
            ModelSpec::Euclidean { phi, .. } => match phi {
                EuclideanPhi::Constant { value } if !(*value > 0.0 && value.is_finite()) => {
                    Err(LabError::Spec(format!(
                        "constant potential must be positive, got {value}"
                    )))
                }
                _ => Ok(()),
            },
            ModelSpec::CigarProduct { k } if *k < 1 => {
                Err(LabError::Spec("cigar product needs k >= 1".into()))
            }
            ModelSpec::Bryant {
                n,
                shoot_param,
                extent,
            } => {
                if *n < 3 {
                    return Err(LabError::Spec(format!("bryant needs n >= 3, got {n}")));
                }
                if !shoot_param.is_finite() || !(*extent > 1.0 && extent.is_finite()) {
                    return Err(LabError::Spec(format!(
                        "bryant parameters invalid: shoot_param = {shoot_param}, extent = {extent}"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// How metric and scalar jets are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JetProvider {
    /// Closed-form (or series/ODE-exact) derivatives.
    Analytic,
    /// Central finite differences of point values.
    FiniteDifference,
}

/// Rotationally symmetric data at `q = |x_radial|²`: each array is
/// `[F, dF/dq, d²F/dq²]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialFields {
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
    pub f: [f64; 3],
    pub scalar: [f64; 3],
}

#[derive(Clone, Debug)]
enum Geometry {
    Euclidean { phi: EuclideanPhi },
    Cigar,
    Bryant(Arc<BryantModel>),
}

/// A coordinate-chart geometry provider: metric jets, potential `f` and
/// scalar curvature `R`.
#[derive(Clone, Debug)]
pub struct ManifoldModel {
    name: String,
    dim: usize,
    radial_dim: usize,
    geometry: Geometry,
    jets: JetProvider,
    soliton: bool,
}

/// Build a model from its specification.
pub fn build_model(spec: &ModelSpec) -> Result<ManifoldModel> {
    spec.validate()?;
    let dim = spec.dimension();
    let model = match spec {
        ModelSpec::Euclidean { phi, .. } => ManifoldModel {
            name: format!("euclidean{dim}"),
            dim,
            radial_dim: 0,
            geometry: Geometry::Euclidean { phi: *phi },
            jets: JetProvider::Analytic,
            soliton: false,
        },
        ModelSpec::Cigar => ManifoldModel {
            name: "cigar".into(),
            dim,
            radial_dim: 2,
            geometry: Geometry::Cigar,
            jets: JetProvider::Analytic,
            soliton: true,
        },
        ModelSpec::CigarProduct { k } => ManifoldModel {
            name: format!("cigar_x_R{k}"),
            dim,
            radial_dim: 2,
            geometry: Geometry::Cigar,
            jets: JetProvider::Analytic,
            soliton: true,
        },
        ModelSpec::Bryant {
            n,
            shoot_param,
            extent,
        } => {
            let bryant = BryantModel::build(*n, *shoot_param, *extent)?;
            ManifoldModel::from_bryant(Arc::new(bryant))
        }
    };
    Ok(model)
}

impl ManifoldModel {
    pub fn from_bryant(bryant: Arc<BryantModel>) -> Self {
        let n = bryant.dimension();
        ManifoldModel {
            name: format!("bryant{n}"),
            dim: n,
            radial_dim: n,
            geometry: Geometry::Bryant(bryant),
            jets: JetProvider::Analytic,
            soliton: true,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_soliton(&self) -> bool {
        self.soliton
    }

    pub fn jet_provider(&self) -> JetProvider {
        self.jets
    }

    /// Whether the closed-form tolerance tier applies to this model.
    pub fn is_closed_form(&self) -> bool {
        self.jets == JetProvider::Analytic && !matches!(self.geometry, Geometry::Bryant(_))
    }

    /// The cigar or a cigar×ℝᵏ.
    pub fn is_cigar_family(&self) -> bool {
        matches!(self.geometry, Geometry::Cigar)
    }

    pub fn bryant(&self) -> Option<&BryantModel> {
        match &self.geometry {
            Geometry::Bryant(b) => Some(b),
            _ => None,
        }
    }

    /// The same geometry with every jet produced by central finite differences.
    pub fn with_finite_difference_jets(&self) -> Self {
        let mut m = self.clone();
        m.jets = JetProvider::FiniteDifference;
        m.name = format!("{}_fd", self.name);
        m
    }

    /// Potential supplied by the model itself (Euclidean test spaces only).
    pub fn model_phi(&self) -> Option<PhiSpec> {
        match self.geometry {
            Geometry::Euclidean {
                phi: EuclideanPhi::Constant { value },
            } => Some(PhiSpec::Constant(value)),
            Geometry::Euclidean {
                phi: EuclideanPhi::HalfOnePlusNormSq,
            } => Some(PhiSpec::HalfOnePlusNormSq),
            _ => None,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match &self.geometry {
            Geometry::Bryant(b) => radial_q(x, self.radial_dim).sqrt() <= b.extent(),
            _ => true,
        }
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(LabError::Domain {
                model: self.name.clone(),
                coords: x.to_vec(),
            })
        }
    }

    /// Radial coordinate of the symmetric factor (0 for flat models).
    pub fn radius(&self, x: &[f64]) -> f64 {
        radial_q(x, self.radial_dim).sqrt()
    }

    fn radial_fields(&self, q: f64) -> RadialFields {
        match &self.geometry {
            Geometry::Euclidean { .. } => RadialFields {
                alpha: [1.0, 0.0, 0.0],
                beta: [0.0; 3],
                f: [0.0; 3],
                scalar: [0.0; 3],
            },
            Geometry::Cigar => {
                let a = 1.0 + q;
                RadialFields {
                    alpha: [4.0 / a, -4.0 / (a * a), 8.0 / (a * a * a)],
                    beta: [0.0; 3],
                    f: [-a.ln(), -1.0 / a, 1.0 / (a * a)],
                    scalar: [1.0 / a, -1.0 / (a * a), 2.0 / (a * a * a)],
                }
            }
            Geometry::Bryant(b) => b.radial_fields(q),
        }
    }

    /// Metric components at `x`.
    pub fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        let m = self.radial_dim;
        let mut g = DMatrix::identity(n, n);
        if m == 0 {
            return g;
        }
        let rf = self.radial_fields(radial_q(x, m));
        let (a, b) = (rf.alpha[0], rf.beta[0]);
        for i in 0..m {
            for j in 0..m {
                g[(i, j)] = b * x[i] * x[j] + if i == j { a } else { 0.0 };
            }
        }
        g
    }

    /// Metric and its first partials.
    pub fn metric_d1(&self, x: &[f64]) -> (DMatrix<f64>, Tensor3) {
        match self.jets {
            JetProvider::Analytic => {
                let (g, dg, _) = self.assemble(x, false);
                (g, dg)
            }
            JetProvider::FiniteDifference => {
                let jet = self.fd_metric_jet(x, false);
                (jet.g, jet.dg)
            }
        }
    }

    /// Metric with first and second partials.
    pub fn metric_jet(&self, x: &[f64]) -> MetricJet {
        match self.jets {
            JetProvider::Analytic => {
                let (g, dg, d2g) = self.assemble(x, true);
                MetricJet {
                    g,
                    dg,
                    d2g: d2g.expect("second partials requested"),
                }
            }
            JetProvider::FiniteDifference => self.fd_metric_jet(x, true),
        }
    }

    fn assemble(&self, x: &[f64], second: bool) -> (DMatrix<f64>, Tensor3, Option<Tensor4>) {
        let n = self.dim;
        let m = self.radial_dim;
        let mut g = DMatrix::identity(n, n);
        let mut dg = Tensor3::zeros(n);
        let mut d2g = second.then(|| Tensor4::zeros(n));
        if m == 0 {
            return (g, dg, d2g);
        }
        let rf = self.radial_fields(radial_q(x, m));
        let [a, aq, aqq] = rf.alpha;
        let [b, bq, bqq] = rf.beta;
        let d = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
        for i in 0..m {
            for j in 0..m {
                g[(i, j)] = a * d(i, j) + b * x[i] * x[j];
                for k in 0..m {
                    dg[(k, i, j)] = 2.0 * aq * x[k] * d(i, j)
                        + 2.0 * bq * x[k] * x[i] * x[j]
                        + b * (d(i, k) * x[j] + x[i] * d(j, k));
                }
            }
        }
        if let Some(d2g) = d2g.as_mut() {
            for k in 0..m {
                for l in 0..m {
                    for i in 0..m {
                        for j in 0..m {
                            d2g[(k, l, i, j)] = (4.0 * aqq * x[k] * x[l] + 2.0 * aq * d(k, l))
                                * d(i, j)
                                + (4.0 * bqq * x[k] * x[l] + 2.0 * bq * d(k, l)) * x[i] * x[j]
                                + 2.0 * bq * x[k] * (d(i, l) * x[j] + x[i] * d(j, l))
                                + 2.0 * bq * x[l] * (d(i, k) * x[j] + x[i] * d(j, k))
                                + b * (d(i, k) * d(j, l) + d(i, l) * d(j, k));
                        }
                    }
                }
            }
        }
        (g, dg, d2g)
    }

    /// Finite-difference step used by the FD jet provider.
    pub fn fd_step(x: &[f64]) -> f64 {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        (1e-6 * (1.0 + norm)).max(1e-4)
    }

    fn fd_metric_jet(&self, x: &[f64], second: bool) -> MetricJet {
        let n = self.dim;
        let h = Self::fd_step(x);
        let g0 = self.metric(x);
        let mut dg = Tensor3::zeros(n);
        let mut d2g = Tensor4::zeros(n);
        let shifted = |dirs: &[(usize, f64)]| {
            let mut y = x.to_vec();
            for &(k, s) in dirs {
                y[k] += s;
            }
            self.metric(&y)
        };
        for k in 0..n {
            let gp = shifted(&[(k, h)]);
            let gm = shifted(&[(k, -h)]);
            for i in 0..n {
                for j in 0..n {
                    dg[(k, i, j)] = (gp[(i, j)] - gm[(i, j)]) / (2.0 * h);
                    if second {
                        d2g[(k, k, i, j)] = (gp[(i, j)] - 2.0 * g0[(i, j)] + gm[(i, j)]) / (h * h);
                    }
                }
            }
            if second {
                for l in (k + 1)..n {
                    let gpp = shifted(&[(k, h), (l, h)]);
                    let gpm = shifted(&[(k, h), (l, -h)]);
                    let gmp = shifted(&[(k, -h), (l, h)]);
                    let gmm = shifted(&[(k, -h), (l, -h)]);
                    for i in 0..n {
                        for j in 0..n {
                            let v = (gpp[(i, j)] - gpm[(i, j)] - gmp[(i, j)] + gmm[(i, j)])
                                / (4.0 * h * h);
                            d2g[(k, l, i, j)] = v;
                            d2g[(l, k, i, j)] = v;
                        }
                    }
                }
            }
        }
        MetricJet { g: g0, dg, d2g }
    }

    fn scalar_value(&self, x: &[f64], which: Which) -> f64 {
        if self.radial_dim == 0 {
            return 0.0;
        }
        let rf = self.radial_fields(radial_q(x, self.radial_dim));
        match which {
            Which::F => rf.f[0],
            Which::R => rf.scalar[0],
        }
    }

    fn scalar_jet(&self, x: &[f64], which: Which) -> ScalarJet {
        let n = self.dim;
        let m = self.radial_dim;
        if m == 0 {
            return ScalarJet::constant(n, 0.0);
        }
        if self.jets == JetProvider::FiniteDifference {
            return fd_scalar_jet(x, |y| self.scalar_value(y, which));
        }
        let rf = self.radial_fields(radial_q(x, m));
        let [v, fq, fqq] = match which {
            Which::F => rf.f,
            Which::R => rf.scalar,
        };
        let radial = ScalarJet::from_q_function(&x[..m], v, fq, fqq);
        if m == n {
            return radial;
        }
        let mut jet = ScalarJet::constant(n, v);
        jet.grad.rows_mut(0, m).copy_from(&radial.grad);
        jet.hess.view_mut((0, 0), (m, m)).copy_from(&radial.hess);
        jet
    }

    /// Potential `f` with coordinate gradient and Hessian.
    pub fn f_jet(&self, x: &[f64]) -> ScalarJet {
        self.scalar_jet(x, Which::F)
    }

    pub fn f_value(&self, x: &[f64]) -> f64 {
        self.scalar_value(x, Which::F)
    }

    /// Closed-form scalar curvature `R` with coordinate gradient and Hessian.
    pub fn r_jet(&self, x: &[f64]) -> ScalarJet {
        self.scalar_jet(x, Which::R)
    }

    pub fn r_value(&self, x: &[f64]) -> f64 {
        self.scalar_value(x, Which::R)
    }

    /// `R` and its coordinate gradient only.
    pub fn r_grad(&self, x: &[f64]) -> (f64, DVector<f64>) {
        let n = self.dim;
        let m = self.radial_dim;
        if m == 0 {
            return (0.0, DVector::zeros(n));
        }
        if self.jets == JetProvider::FiniteDifference {
            let jet = self.r_jet(x);
            return (jet.value, jet.grad);
        }
        let rf = self.radial_fields(radial_q(x, m));
        let mut grad = DVector::zeros(n);
        for k in 0..m {
            grad[k] = 2.0 * rf.scalar[1] * x[k];
        }
        (rf.scalar[0], grad)
    }
}

#[derive(Clone, Copy)]
enum Which {
    F,
    R,
}

fn radial_q(x: &[f64], m: usize) -> f64 {
    x[..m].iter().map(|v| v * v).sum()
}

/// Central finite-difference jet of a scalar function.
pub fn fd_scalar_jet<F: Fn(&[f64]) -> f64>(x: &[f64], f: F) -> ScalarJet {
    let n = x.len();
    let h = ManifoldModel::fd_step(x);
    let at = |dirs: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(k, s) in dirs {
            y[k] += s;
        }
        f(&y)
    };
    let v0 = f(x);
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    for k in 0..n {
        let p = at(&[(k, h)]);
        let m = at(&[(k, -h)]);
        grad[k] = (p - m) / (2.0 * h);
        hess[(k, k)] = (p - 2.0 * v0 + m) / (h * h);
        for l in (k + 1)..n {
            let v = (at(&[(k, h), (l, h)]) - at(&[(k, h), (l, -h)]) - at(&[(k, -h), (l, h)])
                + at(&[(k, -h), (l, -h)]))
                / (4.0 * h * h);
            hess[(k, l)] = v;
            hess[(l, k)] = v;
        }
    }
    ScalarJet {
        value: v0,
        grad,
        hess,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cigar() -> ManifoldModel {
        build_model(&ModelSpec::Cigar).unwrap()
    }

    #[test]
    fn cigar_closed_forms_at_unit_radius() {
        let m = cigar();
        let x = [1.0, 0.0];
        let g = m.metric(&x);
        assert!((g[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((m.r_value(&x) - 0.5).abs() < 1e-15);
        assert!((m.f_value(&x) + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn euclidean_constant_potential_is_model_phi() {
        let m = build_model(&ModelSpec::Euclidean {
            n: 2,
            phi: EuclideanPhi::Constant { value: 0.25 },
        })
        .unwrap();
        assert!(!m.is_soliton());
        assert_eq!(m.model_phi(), Some(PhiSpec::Constant(0.25)));
        assert_eq!(m.f_value(&[3.0, 4.0]), 0.0);
        assert_eq!(m.metric(&[3.0, 4.0]), DMatrix::identity(2, 2));
    }

    #[test]
    fn product_model_has_flat_extra_block() {
        let m = build_model(&ModelSpec::CigarProduct { k: 1 }).unwrap();
        assert_eq!(m.dim(), 3);
        let g = m.metric(&[1.0, 0.0, 7.0]);
        assert_eq!(g[(2, 2)], 1.0);
        assert_eq!(g[(0, 2)], 0.0);
        assert!((m.r_value(&[1.0, 0.0, 7.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unsupported_dimensions_are_rejected() {
        let err = build_model(&ModelSpec::Euclidean {
            n: 7,
            phi: EuclideanPhi::HalfOnePlusNormSq,
        })
        .unwrap_err();
        assert!(matches!(err, LabError::Spec(_)));
        assert!(build_model(&ModelSpec::CigarProduct { k: 5 }).is_err());
        assert!(build_model(&ModelSpec::Euclidean {
            n: 2,
            phi: EuclideanPhi::Constant { value: 0.0 }
        })
        .is_err());
    }

    #[test]
    fn analytic_and_fd_metric_partials_agree_on_cigar() {
        let m = cigar();
        let fd = m.with_finite_difference_jets();
        for x in [[0.3, -1.2], [2.0, 0.5], [0.0, 0.0]] {
            let a = m.metric_jet(&x);
            let b = fd.metric_jet(&x);
            for (u, v) in a.dg.as_slice().iter().zip(b.dg.as_slice()) {
                assert!((u - v).abs() < 1e-7);
            }
            for (u, v) in a.d2g.as_slice().iter().zip(b.d2g.as_slice()) {
                assert!((u - v).abs() < 1e-6);
            }
        }
    }
}
