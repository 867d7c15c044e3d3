//! Paths, the weighted energy `J(γ) = ∫(|γ′|² + 2φ) ds` and its critical
//! points (φ-geodesics, `∇_S S = ∇φ`).

mod functional;
mod ivp;
mod minimize;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub use functional::{first_variation, j_functional, j_gradient, FirstVariation};
pub use ivp::{
    gradient_flow_check, integrate_phi_geodesic, shoot_bvp, shoot_bvp_with, FlowReport,
    ShootOptions,
};
pub use minimize::{
    conserved_quantity, extrapolated_j, minimize_j, minimize_j_with, refine_with_shooting, riemann_distance,
    MinimizeOptions,
};

/// Path sampled at `s_k = k·s̄/K`, `k = 0..=K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    pub samples: Vec<Vec<f64>>,
    pub s_bar: f64,
}

impl DiscretePath {
    pub fn new(samples: Vec<Vec<f64>>, s_bar: f64) -> Result<Self> {
        if samples.len() < 3 {
            return Err(LabError::Usage(format!(
                "a path needs K >= 2 intervals, got {}",
                samples.len().saturating_sub(1)
            )));
        }
        if !(s_bar > 0.0 && s_bar.is_finite()) {
            return Err(LabError::Usage(format!("s_bar must be positive, got {s_bar}")));
        }
        let n = samples[0].len();
        if samples
            .iter()
            .any(|p| p.len() != n || p.iter().any(|v| !v.is_finite()))
        {
            return Err(LabError::Usage("path samples must be finite and of equal dimension".into()));
        }
        Ok(Self { samples, s_bar })
    }

    /// Uniform samples of the chart segment from `x` to `y`.
    pub fn straight(x: &[f64], y: &[f64], s_bar: f64, k: usize) -> Result<Self> {
        let samples = (0..=k)
            .map(|i| {
                let t = i as f64 / k as f64;
                x.iter().zip(y).map(|(a, b)| a + t * (b - a)).collect()
            })
            .collect();
        Self::new(samples, s_bar)
    }

    /// Samples `γ(s_k)` of a parametrized curve.
    pub fn from_fn(s_bar: f64, k: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let samples = (0..=k).map(|i| f(s_bar * i as f64 / k as f64)).collect();
        Self::new(samples, s_bar)
    }

    /// Number of intervals K.
    pub fn k(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn ds(&self) -> f64 {
        self.s_bar / self.k() as f64
    }

    pub fn s(&self, k: usize) -> f64 {
        self.s_bar * k as f64 / self.k() as f64
    }

    pub fn x(&self) -> &[f64] {
        &self.samples[0]
    }

    pub fn y(&self) -> &[f64] {
        &self.samples[self.k()]
    }

    /// Chart velocities by fourth-order differences (one-sided at the ends).
    pub fn velocities(&self) -> Vec<Vec<f64>> {
        let k_max = self.k();
        let n = self.dim();
        let h = self.ds();
        let p = &self.samples;
        let comb = |terms: &[(usize, f64)], scale: f64| -> Vec<f64> {
            (0..n)
                .map(|i| terms.iter().map(|&(k, c)| c * p[k][i]).sum::<f64>() * scale)
                .collect()
        };
        if k_max < 4 {
            return (0..=k_max)
                .map(|k| {
                    if k == 0 {
                        comb(&[(0, -3.0), (1, 4.0), (2, -1.0)], 0.5 / h)
                    } else if k == k_max {
                        comb(&[(k, 3.0), (k - 1, -4.0), (k - 2, 1.0)], 0.5 / h)
                    } else {
                        comb(&[(k + 1, 1.0), (k - 1, -1.0)], 0.5 / h)
                    }
                })
                .collect();
        }
        let s = 1.0 / (12.0 * h);
        (0..=k_max)
            .map(|k| match k {
                0 => comb(&[(0, -25.0), (1, 48.0), (2, -36.0), (3, 16.0), (4, -3.0)], s),
                1 => comb(&[(0, -3.0), (1, -10.0), (2, 18.0), (3, -6.0), (4, 1.0)], s),
                _ if k == k_max - 1 => comb(
                    &[(k_max, 3.0), (k_max - 1, 10.0), (k_max - 2, -18.0), (k_max - 3, 6.0), (k_max - 4, -1.0)],
                    s,
                ),
                _ if k == k_max => comb(
                    &[(k_max, 25.0), (k_max - 1, -48.0), (k_max - 2, 36.0), (k_max - 3, -16.0), (k_max - 4, 3.0)],
                    s,
                ),
                _ => comb(&[(k - 2, 1.0), (k - 1, -8.0), (k + 1, 8.0), (k + 2, -1.0)], s),
            })
            .collect()
    }
}

/// Which solver produced a solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Ivp,
    Shooting,
    Direct,
}

/// A sampled path with velocities and diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicSolution {
    pub path: DiscretePath,
    pub velocities: Vec<Vec<f64>>,
    pub j_value: f64,
    pub c_estimate: f64,
    pub c_drift: f64,
    pub solver: Solver,
    pub converged: bool,
    /// Solver residual: endpoint miss (shooting), gradient norm (direct) or
    /// 0 (IVP).
    pub residual: f64,
    /// Parameter at which an IVP left the chart domain.
    pub exit_s: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct SolutionJson {
    s_bar: f64,
    #[serde(rename = "K")]
    k: usize,
    samples: Vec<Vec<f64>>,
    velocities: Vec<Vec<f64>>,
    #[serde(rename = "J")]
    j: f64,
    #[serde(rename = "C")]
    c: f64,
    drift: f64,
    solver: Solver,
    converged: bool,
}

impl GeodesicSolution {
    pub fn k(&self) -> usize {
        self.path.k()
    }

    pub fn s_bar(&self) -> f64 {
        self.path.s_bar
    }

    pub fn velocity(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.velocities[k])
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = SolutionJson {
            s_bar: self.path.s_bar,
            k: self.path.k(),
            samples: self.path.samples.clone(),
            velocities: self.velocities.clone(),
            j: self.j_value,
            c: self.c_estimate,
            drift: self.c_drift,
            solver: self.solver,
            converged: self.converged,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SolutionJson = serde_json::from_str(text)?;
        if doc.samples.len() != doc.k + 1 || doc.velocities.len() != doc.k + 1 {
            return Err(LabError::Data("sample count does not match K".into()));
        }
        Ok(Self {
            path: DiscretePath::new(doc.samples, doc.s_bar)?,
            velocities: doc.velocities,
            j_value: doc.j,
            c_estimate: doc.c,
            c_drift: doc.drift,
            solver: doc.solver,
            converged: doc.converged,
            residual: 0.0,
            exit_s: None,
        })
    }
}

/// Vectors `U_k` along a path.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationField {
    pub vectors: Vec<DVector<f64>>,
    pub vanishing: bool,
}

impl VariationField {
    /// A field flagged vanishing when both end vectors are zero up to
    /// roundoff (`1e-12` relative); such ends are snapped to exact zeros.
    pub fn new(mut vectors: Vec<DVector<f64>>) -> Self {
        let scale = vectors.iter().map(|v| v.amax()).fold(0.0_f64, f64::max);
        let tiny = |v: &DVector<f64>| v.amax() <= 1e-12 * scale;
        let vanishing = match (vectors.first(), vectors.last()) {
            (Some(a), Some(b)) => tiny(a) && tiny(b),
            _ => true,
        };
        if vanishing && !vectors.is_empty() {
            let last = vectors.len() - 1;
            vectors[0].fill(0.0);
            vectors[last].fill(0.0);
        }
        Self { vectors, vanishing }
    }

    /// `U(s_k) = f(s_k)` on the grid of `path`.
    pub fn from_fn(path: &DiscretePath, f: impl Fn(f64) -> Vec<f64>) -> Self {
        Self::new(
            (0..=path.k())
                .map(|k| DVector::from_vec(f(path.s(k))))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}
